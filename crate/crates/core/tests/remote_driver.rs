//! Wire-protocol checks for the remote browser driver against a canned
//! in-process HTTP stub. Compiled only with the `remote-driver` feature;
//! the default test suite never talks to a browser.
#![cfg(feature = "remote-driver")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use ata_core::browser::{
    BrowserCommand, CommandStatus, CommandTarget, Driver, Environment, RealDriverConfig,
};

/// One recorded request: method and path.
type Seen = Arc<std::sync::Mutex<Vec<(String, String)>>>;

/// A single-threaded WebDriver stub serving canned JSON per route.
fn spawn_stub(seen: Seen, hits: Arc<AtomicUsize>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let address = format!("http://{}", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            hits.fetch_add(1, Ordering::SeqCst);
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            if reader.read_line(&mut request_line).is_err() {
                continue;
            }
            let mut parts = request_line.split_whitespace();
            let method = parts.next().unwrap_or("").to_string();
            let path = parts.next().unwrap_or("").to_string();
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).is_err() || line.trim().is_empty() {
                    break;
                }
                if let Some(rest) = line.to_lowercase().strip_prefix("content-length:") {
                    content_length = rest.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0u8; content_length];
            let _ = reader.read_exact(&mut body);
            seen.lock().unwrap().push((method.clone(), path.clone()));

            let value = route(&method, &path);
            let payload = format!("{{\"value\":{value}}}");
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    address
}

fn route(method: &str, path: &str) -> String {
    // A minimal session with two elements: a link and an input.
    const E1: &str = "element-6066-11e4-a52e-4f735466cecf";
    match (method, path) {
        ("POST", "/session") => r#"{"sessionId":"s1","capabilities":{}}"#.to_string(),
        ("POST", "/session/s1/url") => "null".to_string(),
        ("GET", "/session/s1/url") => r#""https://app.example/""#.to_string(),
        ("GET", "/session/s1/title") => r#""Stub App""#.to_string(),
        ("POST", "/session/s1/elements") => {
            format!(r#"[{{"{E1}":"el-1"}},{{"{E1}":"el-2"}}]"#)
        }
        ("GET", "/session/s1/element/el-1/name") => r#""a""#.to_string(),
        ("GET", "/session/s1/element/el-2/name") => r#""input""#.to_string(),
        ("GET", "/session/s1/element/el-1/text") => r#""Login""#.to_string(),
        ("GET", "/session/s1/element/el-2/text") => r#""""#.to_string(),
        ("GET", "/session/s1/element/el-1/attribute/type")
        | ("GET", "/session/s1/element/el-2/attribute/type") => "null".to_string(),
        ("GET", "/session/s1/element/el-1/rect") => {
            r#"{"x":10.0,"y":20.0,"width":80.0,"height":24.0}"#.to_string()
        }
        ("GET", "/session/s1/element/el-2/rect") => {
            r#"{"x":10.0,"y":60.0,"width":160.0,"height":24.0}"#.to_string()
        }
        ("GET", "/session/s1/screenshot") => {
            // 1x1 transparent PNG.
            r#""iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mNkYPhfDwAChwGA60e6kgAAAABJRU5ErkJggg==""#
                .to_string()
        }
        ("POST", "/session/s1/element/el-1/click")
        | ("POST", "/session/s1/element/el-2/clear")
        | ("POST", "/session/s1/element/el-2/value")
        | ("POST", "/session/s1/actions")
        | ("POST", "/session/s1/execute/sync") => "null".to_string(),
        ("DELETE", "/session/s1") => "null".to_string(),
        _ => r#"{"error":"unknown route"}"#.to_string(),
    }
}

#[test]
fn remote_driver_speaks_the_wire_protocol() {
    let seen: Seen = Arc::new(std::sync::Mutex::new(Vec::new()));
    let hits = Arc::new(AtomicUsize::new(0));
    let endpoint = spawn_stub(seen.clone(), hits);

    let environment = Environment::Real(RealDriverConfig {
        webdriver_url: endpoint,
        base_url: "https://app.example/".to_string(),
        reset_hook_url: None,
        navigation_timeout_ms: 5000,
    });
    let mut driver = environment.reset("any").unwrap();

    let observation = driver.observe().unwrap();
    assert_eq!(observation.title, "Stub App");
    assert_eq!(observation.elements.len(), 2);
    assert_eq!(observation.elements[0].text, "Login");
    assert_eq!(observation.elements[0].bbox.x, 10);
    assert!(observation.dom_snapshot.contains("[1] <a>Login</a>"));
    assert!(matches!(
        observation.screenshot,
        ata_core::browser::ScreenshotArtifact::Image(_)
    ));

    let click = driver
        .execute(&BrowserCommand::click(CommandTarget::Mark(1)))
        .unwrap();
    assert_eq!(click.status, CommandStatus::Ok);
    let typed = driver
        .execute(&BrowserCommand::type_text(CommandTarget::Mark(2), "sofa"))
        .unwrap();
    assert_eq!(typed.status, CommandStatus::Ok);
    let missing = driver
        .execute(&BrowserCommand::click(CommandTarget::Mark(9)))
        .unwrap();
    assert_eq!(missing.status, CommandStatus::TargetNotFound);
    driver.close();

    let log = seen.lock().unwrap();
    assert!(log.iter().any(|(m, p)| m == "POST" && p == "/session"));
    assert!(log
        .iter()
        .any(|(m, p)| m == "POST" && p == "/session/s1/element/el-1/click"));
    assert!(log
        .iter()
        .any(|(m, p)| m == "POST" && p == "/session/s1/element/el-2/value"));
    assert!(log.iter().any(|(m, p)| m == "DELETE" && p == "/session/s1"));
}
