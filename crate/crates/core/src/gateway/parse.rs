//! Response parsing per gateway role.
//!
//! Each parser returns `None` when the text does not follow the format the
//! role's system prompt asks for; the gateway then retries once with a
//! format reminder.

use serde::{Deserialize, Serialize};

/// Upper bound on planned sub-instructions.
pub const MAX_PLAN_STEPS: usize = 5;

const CONTROL_MARKERS: [&str; 6] = ["<|", "|>", "[INST]", "[/INST]", "</s>", "<s>"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub accept: bool,
    pub critique: String,
}

/// One plain sentence: non-empty, single line, no list markers, no control
/// tokens, at most `max_chars` characters.
pub fn parse_sentence(raw: &str, max_chars: usize) -> Option<String> {
    let text = strip_quotes(raw.trim());
    if text.is_empty() || text.chars().count() > max_chars {
        return None;
    }
    if text.lines().filter(|l| !l.trim().is_empty()).count() != 1 {
        return None;
    }
    if CONTROL_MARKERS.iter().any(|m| text.contains(m)) || text.chars().any(char::is_control) {
        return None;
    }
    if list_item(text).is_some() || text.starts_with("- ") || text.starts_with("* ") {
        return None;
    }
    Some(text.to_string())
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('\u{201C}', '\u{201D}')] {
        if s.len() >= 2 && s.starts_with(open) && s.ends_with(close) {
            return s[open.len_utf8()..s.len() - close.len_utf8()].trim();
        }
    }
    s
}

/// `"3. do x"` / `"3) do x"` → `(3, "do x")`.
fn list_item(line: &str) -> Option<(usize, &str)> {
    let line = line.trim_start();
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let n = line[..digits].parse().ok()?;
    let rest = line[digits..].strip_prefix(['.', ')'])?;
    let body = rest.trim();
    (!body.is_empty() && rest.starts_with(char::is_whitespace)).then_some((n, body))
}

/// Numbered list, in the order given, truncated to [`MAX_PLAN_STEPS`].
pub fn parse_plan(raw: &str) -> Option<Vec<String>> {
    let steps: Vec<String> = raw
        .lines()
        .filter_map(list_item)
        .map(|(_, body)| body.trim_matches('*').trim().to_string())
        .filter(|s| !s.is_empty())
        .take(MAX_PLAN_STEPS)
        .collect();
    (!steps.is_empty()).then_some(steps)
}

/// Accept/reject plus the explanation that follows the verdict.
pub fn parse_verdict(raw: &str) -> Option<Verdict> {
    let text = raw.trim();
    let lower = text.to_lowercase();
    let lead: String = lower
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .collect();
    let critique = || {
        // the sentence after the verdict, if any
        let after = text
            .split_once(['.', '!', '\n'])
            .map(|(_, rest)| rest.trim())
            .unwrap_or("");
        if after.is_empty() {
            text.to_string()
        } else {
            after.to_string()
        }
    };
    let negative = lead == "no"
        || ["not completed", "not been completed", "incomplete", "not complete"]
            .iter()
            .any(|p| lower.contains(p));
    if negative {
        return Some(Verdict {
            accept: false,
            critique: critique(),
        });
    }
    if lead == "yes" || lower.contains("completed") || lead == "correct" {
        return Some(Verdict {
            accept: true,
            critique: critique(),
        });
    }
    None
}

/// A single rewritten instruction line.
pub fn parse_rewrite(raw: &str) -> Option<String> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = line
        .strip_prefix("Rewritten instruction:")
        .or_else(|| line.strip_prefix("Instruction:"))
        .unwrap_or(line);
    let line = list_item(line).map(|(_, b)| b).unwrap_or(line);
    let line = strip_quotes(line);
    (!line.is_empty() && !CONTROL_MARKERS.iter().any(|m| line.contains(m))).then(|| line.to_string())
}
