use serde::Serialize;

use super::LlmError;

const SOLUTION: &str = "**Solution:";
const REFLECTION: &str = "**Reflection:";
const PLAN: &str = "**Research Plan:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParsedResponse {
    pub reflection: Option<String>,
    pub research_plan: Option<String>,
    /// Proposed names, deduplicated in order of first appearance.
    pub solution: Vec<String>,
    /// More names than requested were given; the surplus was dropped.
    pub truncated: bool,
    /// Fewer names than requested were given.
    pub short: bool,
}

/// Text between `start` and the next section marker (or `limit`).
fn section(text: &str, start: &str, limit: usize) -> Option<String> {
    let begin = text[..limit].find(start)? + start.len();
    let rest = &text[begin..limit];
    let end = [REFLECTION, PLAN, SOLUTION]
        .iter()
        .filter_map(|m| rest.find(m))
        .min()
        .unwrap_or(rest.len());
    let body = rest[..end].trim();
    // Drop the echoed header remainder, e.g. "Thoughts on ... next steps.**".
    let body = match body.split_once("**") {
        Some((head, tail)) if !head.contains('\n') => tail.trim(),
        _ => body,
    };
    Some(body.to_string())
}

/// Extracts the names listed as `## <name>` lines after the last
/// `**Solution:` marker, keeping at most `expected`.
pub fn parse_solution(text: &str, expected: usize) -> Result<ParsedResponse, LlmError> {
    let marker = text
        .rfind(SOLUTION)
        .ok_or_else(|| LlmError::Parse("no **Solution: marker".into()))?;
    let mut names: Vec<String> = Vec::new();
    for line in text[marker + SOLUTION.len()..].lines() {
        let Some(rest) = line.trim().strip_prefix("##") else {
            continue;
        };
        let name = rest.trim().trim_matches('*').trim();
        if name.is_empty() || name.starts_with('<') {
            continue;
        }
        if !names.iter().any(|n| n == name) {
            names.push(name.to_string());
        }
    }
    if names.is_empty() {
        return Err(LlmError::Parse("solution lists no names".into()));
    }
    let truncated = names.len() > expected;
    names.truncate(expected);
    Ok(ParsedResponse {
        reflection: section(text, REFLECTION, marker),
        research_plan: section(text, PLAN, marker),
        short: names.len() < expected,
        solution: names,
        truncated,
    })
}
