//! Whitespace token counting used for prompt budgets.
//!
//! Every budget in this crate (simplified-DOM truncation, memory digest
//! rendering) is expressed in whitespace-separated tokens. This is a
//! deliberately crude stand-in for a model tokenizer: it is fast, has no
//! model dependency, and is stable across platforms, which the
//! deterministic replay tests rely on.

/// Number of whitespace-separated tokens in `text`.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Truncate `text` to at most `budget` whitespace tokens, preserving line
/// structure. Lines are kept whole; the first line that would overflow the
/// budget is dropped together with everything after it, and a marker line
/// is appended so readers can tell truncation happened.
pub fn truncate_to_tokens(text: &str, budget: usize) -> String {
    if token_count(text) <= budget {
        return text.to_string();
    }
    let mut kept = Vec::new();
    let mut used = 0;
    for line in text.lines() {
        let cost = token_count(line);
        if used + cost > budget {
            break;
        }
        used += cost;
        kept.push(line);
    }
    kept.push("[truncated]");
    kept.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_whitespace_tokens() {
        assert_eq!(token_count(""), 0);
        assert_eq!(token_count("  one\ttwo \n three  "), 3);
    }

    #[test]
    fn truncation_keeps_whole_lines_and_marks() {
        let text = "a b c\nd e f\ng h i";
        let out = truncate_to_tokens(text, 7);
        assert_eq!(out, "a b c\nd e f\n[truncated]");
        assert!(token_count(&out) <= 8);
    }

    #[test]
    fn truncation_is_identity_under_budget() {
        let text = "a b c\nd e";
        assert_eq!(truncate_to_tokens(text, 5), text);
    }
}
