//! Provider adapters behind the gateway: three commercial chat APIs, a
//! scripted provider for deterministic cassette authoring, and a
//! deny-everything provider used to prove replay hermeticity.
//!
//! Credentials come exclusively from environment variables
//! (`OPENAI_API_KEY`, `ANTHROPIC_API_KEY`, `GEMINI_API_KEY`), never from
//! flags or config files.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, ContentPart, LlmError, Role, TokenUsage};
use crate::tokens::token_count;

pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

/// Deterministic provider that pops pre-authored responses in order.
/// Records made against it are bit-stable, which is how the shipped
/// cassette bundles are produced.
pub struct ScriptedProvider {
    responses: Mutex<VecDeque<String>>,
}

impl ScriptedProvider {
    pub fn new(responses: Vec<String>) -> Self {
        ScriptedProvider {
            responses: Mutex::new(responses.into()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().expect("script lock").len()
    }
}

impl Provider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut responses = self.responses.lock().expect("script lock");
        let text = responses
            .pop_front()
            .ok_or_else(|| LlmError::Provider("script exhausted".to_string()))?;
        let prompt_tokens: usize = request
            .messages
            .iter()
            .map(|m| token_count(&m.joined_text()))
            .sum();
        Ok(ChatResponse {
            usage: TokenUsage {
                prompt_tokens: prompt_tokens as u32,
                completion_tokens: token_count(&text) as u32,
            },
            latency_ms: 0,
            truncated: false,
            text,
        })
    }
}

/// Fails on any call. Wrapping a REPLAY backend around it asserts that a
/// replayed run opens no network connection at all.
pub struct DenyAllProvider;

impl Provider for DenyAllProvider {
    fn name(&self) -> &str {
        "deny-all"
    }

    fn complete(&self, _request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        Err(LlmError::NetworkDenied(
            "this backend forbids network activity".to_string(),
        ))
    }
}

fn http_client(timeout_secs: u64) -> Result<reqwest::blocking::Client, LlmError> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(timeout_secs))
        .build()
        .map_err(|e| LlmError::Provider(e.to_string()))
}

fn env_key(var: &str) -> Result<String, LlmError> {
    std::env::var(var).map_err(|_| LlmError::Provider(format!("missing credentials: set {var}")))
}

fn post_json(
    builder: reqwest::blocking::RequestBuilder,
    timeout_secs: u64,
) -> Result<(Value, u64), LlmError> {
    let started = Instant::now();
    let response = builder.send().map_err(|e| {
        if e.is_timeout() {
            LlmError::Timeout(timeout_secs)
        } else {
            LlmError::Provider(e.to_string())
        }
    })?;
    let status = response.status().as_u16();
    let body = response
        .text()
        .map_err(|e| LlmError::Provider(e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(LlmError::Http { status, body });
    }
    let value: Value =
        serde_json::from_str(&body).map_err(|e| LlmError::Provider(format!("bad json: {e}")))?;
    Ok((value, started.elapsed().as_millis() as u64))
}

/// OpenAI chat-completions adapter.
pub struct OpenAiProvider {
    api_key: String,
    base_url: String,
    timeout_secs: u64,
}

impl OpenAiProvider {
    pub fn from_env(timeout_secs: u64) -> Result<Self, LlmError> {
        Ok(OpenAiProvider {
            api_key: env_key("OPENAI_API_KEY")?,
            base_url: "https://api.openai.com/v1".to_string(),
            timeout_secs,
        })
    }

    pub fn request_body(request: &ChatRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|message| {
                let content: Vec<Value> = message
                    .parts
                    .iter()
                    .map(|part| match part {
                        ContentPart::Text { text } => json!({ "type": "text", "text": text }),
                        ContentPart::Image { media_type, data } => json!({
                            "type": "image_url",
                            "image_url": {
                                "url": format!("data:{media_type};base64,{}", BASE64.encode(data))
                            }
                        }),
                    })
                    .collect();
                json!({ "role": message.role.label(), "content": content })
            })
            .collect();
        json!({
            "model": request.model_id,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": messages,
        })
    }

    pub fn parse_response(value: &Value, latency_ms: u64) -> Result<ChatResponse, LlmError> {
        let choice = &value["choices"][0];
        let text = choice["message"]["content"]
            .as_str()
            .unwrap_or_default()
            .to_string();
        let truncated = choice["finish_reason"].as_str() == Some("length");
        if text.is_empty() && !truncated {
            return Err(LlmError::Provider("empty completion".to_string()));
        }
        Ok(ChatResponse {
            text,
            usage: TokenUsage {
                prompt_tokens: value["usage"]["prompt_tokens"].as_u64().unwrap_or(0) as u32,
                completion_tokens: value["usage"]["completion_tokens"].as_u64().unwrap_or(0) as u32,
            },
            latency_ms,
            truncated,
        })
    }
}

impl Provider for OpenAiProvider {
    fn name(&self) -> &str {
        "openai"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let client = http_client(self.timeout_secs)?;
        let (value, latency_ms) = post_json(
            client
                .post(format!("{}/chat/completions", self.base_url))
                .bearer_auth(&self.api_key)
                .json(&Self::request_body(request)),
            self.timeout_secs,
        )?;
        Self::parse_response(&value, latency_ms)
    }
}

/// Anthropic messages adapter.
pub struct AnthropicProvider {
    api_key: String,
    base_url: String,
    timeout_secs: u64,
}

impl AnthropicProvider {
    pub fn from_env(timeout_secs: u64) -> Result<Self, LlmError> {
        Ok(AnthropicProvider {
            api_key: env_key("ANTHROPIC_API_KEY")?,
            base_url: "https://api.anthropic.com".to_string(),
            timeout_secs,
        })
    }

    pub fn request_body(request: &ChatRequest) -> Value {
        let mut system = String::new();
        let mut messages: Vec<Value> = Vec::new();
        for message in &request.messages {
            if message.role == Role::System {
                system.push_str(&message.joined_text());
                continue;
            }
            let content: Vec<Value> = message
                .parts
                .iter()
                .map(|part| match part {
                    ContentPart::Text { text } => json!({ "type": "text", "text": text }),
                    ContentPart::Image { media_type, data } => json!({
                        "type": "image",
                        "source": {
                            "type": "base64",
                            "media_type": media_type,
                            "data": BASE64.encode(data),
                        }
                    }),
                })
                .collect();
            messages.push(json!({ "role": message.role.label(), "content": content }));
        }
        let mut body = json!({
            "model": request.model_id,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "messages": messages,
        });
        if !system.is_empty() {
            body["system"] = json!(system.trim_end());
        }
        body
    }

    pub fn parse_response(value: &Value, latency_ms: u64) -> Result<ChatResponse, LlmError> {
        let mut text = String::new();
        for block in value["content"].as_array().into_iter().flatten() {
            if block["type"].as_str() == Some("text") {
                text.push_str(block["text"].as_str().unwrap_or_default());
            }
        }
        let truncated = value["stop_reason"].as_str() == Some("max_tokens");
        if text.is_empty() && !truncated {
            return Err(LlmError::Provider("empty completion".to_string()));
        }
        Ok(ChatResponse {
            text,
            usage: TokenUsage {
                prompt_tokens: value["usage"]["input_tokens"].as_u64().unwrap_or(0) as u32,
                completion_tokens: value["usage"]["output_tokens"].as_u64().unwrap_or(0) as u32,
            },
            latency_ms,
            truncated,
        })
    }
}

impl Provider for AnthropicProvider {
    fn name(&self) -> &str {
        "anthropic"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let client = http_client(self.timeout_secs)?;
        let (value, latency_ms) = post_json(
            client
                .post(format!("{}/v1/messages", self.base_url))
                .header("x-api-key", &self.api_key)
                .header("anthropic-version", "2023-06-01")
                .json(&Self::request_body(request)),
            self.timeout_secs,
        )?;
        Self::parse_response(&value, latency_ms)
    }
}

/// Google Gemini generateContent adapter.
pub struct GeminiProvider {
    api_key: String,
    base_url: String,
    timeout_secs: u64,
}

impl GeminiProvider {
    pub fn from_env(timeout_secs: u64) -> Result<Self, LlmError> {
        Ok(GeminiProvider {
            api_key: env_key("GEMINI_API_KEY")?,
            base_url: "https://generativelanguage.googleapis.com/v1beta".to_string(),
            timeout_secs,
        })
    }

    pub fn request_body(request: &ChatRequest) -> Value {
        let mut system = String::new();
        let mut contents: Vec<Value> = Vec::new();
        for message in &request.messages {
            if message.role == Role::System {
                system.push_str(&message.joined_text());
                continue;
            }
            let parts: Vec<Value> = message
                .parts
                .iter()
                .map(|part| match part {
                    ContentPart::Text { text } => json!({ "text": text }),
                    ContentPart::Image { media_type, data } => json!({
                        "inline_data": { "mime_type": media_type, "data": BASE64.encode(data) }
                    }),
                })
                .collect();
            let role = match message.role {
                Role::Assistant => "model",
                _ => "user",
            };
            contents.push(json!({ "role": role, "parts": parts }));
        }
        let mut body = json!({
            "contents": contents,
            "generationConfig": {
                "temperature": request.temperature,
                "maxOutputTokens": request.max_tokens,
            }
        });
        if !system.is_empty() {
            body["systemInstruction"] = json!({ "parts": [{ "text": system.trim_end() }] });
        }
        body
    }

    pub fn parse_response(value: &Value, latency_ms: u64) -> Result<ChatResponse, LlmError> {
        let candidate = &value["candidates"][0];
        let mut text = String::new();
        for part in candidate["content"]["parts"]
            .as_array()
            .into_iter()
            .flatten()
        {
            text.push_str(part["text"].as_str().unwrap_or_default());
        }
        let truncated = candidate["finishReason"].as_str() == Some("MAX_TOKENS");
        if text.is_empty() && !truncated {
            return Err(LlmError::Provider("empty completion".to_string()));
        }
        Ok(ChatResponse {
            text,
            usage: TokenUsage {
                prompt_tokens: value["usageMetadata"]["promptTokenCount"]
                    .as_u64()
                    .unwrap_or(0) as u32,
                completion_tokens: value["usageMetadata"]["candidatesTokenCount"]
                    .as_u64()
                    .unwrap_or(0) as u32,
            },
            latency_ms,
            truncated,
        })
    }
}

impl Provider for GeminiProvider {
    fn name(&self) -> &str {
        "gemini"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let client = http_client(self.timeout_secs)?;
        let url = format!(
            "{}/models/{}:generateContent?key={}",
            self.base_url, request.model_id, self.api_key
        );
        let (value, latency_ms) = post_json(
            client.post(url).json(&Self::request_body(request)),
            self.timeout_secs,
        )?;
        Self::parse_response(&value, latency_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ChatMessage;

    fn multimodal_request() -> ChatRequest {
        let mut message = ChatMessage::user("describe this");
        message.parts.push(ContentPart::Image {
            media_type: "image/png".to_string(),
            data: vec![9, 9, 9],
        });
        ChatRequest::new("model-x", vec![ChatMessage::system("be brief"), message])
    }

    #[test]
    fn scripted_provider_pops_in_order_and_counts_tokens() {
        let provider = ScriptedProvider::new(vec!["one two".into(), "three".into()]);
        let request = ChatRequest::new("m", vec![ChatMessage::user("a b c")]);
        let first = provider.complete(&request).unwrap();
        assert_eq!(first.text, "one two");
        assert_eq!(first.usage.completion_tokens, 2);
        assert_eq!(first.usage.prompt_tokens, 3);
        assert_eq!(provider.complete(&request).unwrap().text, "three");
        assert!(provider.complete(&request).is_err());
    }

    #[test]
    fn deny_all_always_fails() {
        let request = ChatRequest::new("m", vec![ChatMessage::user("x")]);
        assert!(matches!(
            DenyAllProvider.complete(&request).unwrap_err(),
            LlmError::NetworkDenied(_)
        ));
    }

    #[test]
    fn openai_body_shape() {
        let body = OpenAiProvider::request_body(&multimodal_request());
        assert_eq!(body["model"], "model-x");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"][1]["type"], "image_url");
        let url = body["messages"][1]["content"][1]["image_url"]["url"]
            .as_str()
            .unwrap();
        assert!(url.starts_with("data:image/png;base64,"));
    }

    #[test]
    fn anthropic_body_lifts_system_and_encodes_images() {
        let body = AnthropicProvider::request_body(&multimodal_request());
        assert_eq!(body["system"], "be brief");
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
        assert_eq!(body["messages"][0]["content"][1]["type"], "image");
        assert_eq!(
            body["messages"][0]["content"][1]["source"]["media_type"],
            "image/png"
        );
    }

    #[test]
    fn gemini_body_uses_contents_and_system_instruction() {
        let body = GeminiProvider::request_body(&multimodal_request());
        assert_eq!(body["systemInstruction"]["parts"][0]["text"], "be brief");
        assert_eq!(body["contents"][0]["role"], "user");
        assert!(body["contents"][0]["parts"][1]["inline_data"]["data"]
            .as_str()
            .is_some());
        assert_eq!(body["generationConfig"]["maxOutputTokens"], 2048);
    }

    #[test]
    fn openai_response_parse_reads_text_usage_and_truncation() {
        let value = json!({
            "choices": [{
                "message": { "content": "ELEMENT: C" },
                "finish_reason": "stop"
            }],
            "usage": { "prompt_tokens": 120, "completion_tokens": 4 }
        });
        let response = OpenAiProvider::parse_response(&value, 7).unwrap();
        assert_eq!(response.text, "ELEMENT: C");
        assert_eq!(response.usage.prompt_tokens, 120);
        assert_eq!(response.usage.completion_tokens, 4);
        assert_eq!(response.latency_ms, 7);
        assert!(!response.truncated);

        let truncated = json!({
            "choices": [{ "message": { "content": "" }, "finish_reason": "length" }],
            "usage": { "prompt_tokens": 9, "completion_tokens": 0 }
        });
        let response = OpenAiProvider::parse_response(&truncated, 0).unwrap();
        assert!(response.truncated);
        assert!(response.text.is_empty());

        let empty = json!({ "choices": [{ "message": { "content": "" } }] });
        assert!(OpenAiProvider::parse_response(&empty, 0).is_err());
    }

    #[test]
    fn anthropic_response_parse_joins_text_blocks() {
        let value = json!({
            "content": [
                { "type": "text", "text": "DECISION: " },
                { "type": "text", "text": "ACCEPT" }
            ],
            "stop_reason": "end_turn",
            "usage": { "input_tokens": 50, "output_tokens": 2 }
        });
        let response = AnthropicProvider::parse_response(&value, 3).unwrap();
        assert_eq!(response.text, "DECISION: ACCEPT");
        assert_eq!(response.usage.prompt_tokens, 50);
        assert!(!response.truncated);

        let truncated = json!({
            "content": [],
            "stop_reason": "max_tokens",
            "usage": { "input_tokens": 1, "output_tokens": 0 }
        });
        assert!(
            AnthropicProvider::parse_response(&truncated, 0)
                .unwrap()
                .truncated
        );
    }

    #[test]
    fn gemini_response_parse_joins_candidate_parts() {
        let value = json!({
            "candidates": [{
                "content": { "parts": [{ "text": "1. ok | " }, { "text": "VERIFIED | seen" }] },
                "finishReason": "STOP"
            }],
            "usageMetadata": { "promptTokenCount": 33, "candidatesTokenCount": 6 }
        });
        let response = GeminiProvider::parse_response(&value, 1).unwrap();
        assert_eq!(response.text, "1. ok | VERIFIED | seen");
        assert_eq!(response.usage.completion_tokens, 6);

        let empty = json!({ "candidates": [{ "content": { "parts": [] } }] });
        assert!(GeminiProvider::parse_response(&empty, 0).is_err());
    }
}
