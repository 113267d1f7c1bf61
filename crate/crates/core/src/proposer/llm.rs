//! Chat-completion client for the language-model proposer and its offline mock.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};

pub const FEATURE_PROMPT: &str =
    "What waveform features are most likely to be present in electrocardiograms with these symptoms?";
pub const LIST_PROMPT: &str = "Organize these waveform features into a Python list, \
with each item representing a distinct waveform feature.";

pub const ENDPOINT_ENV: &str = "FGCLEP_LLM_ENDPOINT";
pub const KEY_ENV: &str = "FGCLEP_LLM_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

/// Anything that answers a chat transcript with the next assistant turn.
pub trait ChatBackend: Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String>;
}

/// The items of the first bracketed list in `reply`.
pub fn parse_feature_list(reply: &str) -> Result<Vec<String>> {
    let fail = || Error::Parse {
        raw: reply.to_string(),
    };
    let start = reply.find('[').ok_or_else(fail)?;
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    let mut end = None;
    for (i, ch) in reply[start..].char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == q {
                quote = None;
            }
            continue;
        }
        match ch {
            '"' | '\'' => quote = Some(ch),
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    end = Some(start + i);
                    break;
                }
            }
            _ => {}
        }
    }
    let span = &reply[start + 1..end.ok_or_else(fail)?];

    let mut items: Vec<String> = Vec::new();
    let mut chars = span.chars();
    while let Some(ch) = chars.next() {
        if ch != '"' && ch != '\'' {
            continue;
        }
        let mut item = String::new();
        let mut escaped = false;
        for c in chars.by_ref() {
            if escaped {
                item.push(c);
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == ch {
                break;
            } else {
                item.push(c);
            }
        }
        let item = item.trim().to_lowercase();
        if !item.is_empty() && !items.contains(&item) {
            items.push(item);
        }
    }
    if items.is_empty() {
        return Err(fail());
    }
    Ok(items)
}

/// The two fixed turns: features for the report, then the same as a list.
pub fn propose_llm(report: &str, backend: &dyn ChatBackend) -> Result<Vec<String>> {
    let mut messages = vec![ChatMessage::new("user", format!("{report}\n\n{FEATURE_PROMPT}"))];
    let first = backend.complete(&messages)?;
    messages.push(ChatMessage::new("assistant", first));
    messages.push(ChatMessage::new("user", LIST_PROMPT));
    let second = backend.complete(&messages)?;
    parse_feature_list(&second)
}

/// OpenAI-style `/chat/completions` over HTTP.
pub struct HttpChat {
    agent: ureq::Agent,
    url: String,
    model: String,
    key: Option<String>,
    retries: u32,
    backoff: Duration,
}

impl HttpChat {
    pub fn new(endpoint: &str, model: &str, key: Option<String>, timeout: Duration, retries: u32, backoff: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        Self {
            agent,
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            model: model.to_string(),
            key,
            retries,
            backoff,
        }
    }

    fn attempt(&self, messages: &[ChatMessage]) -> std::result::Result<String, (bool, String)> {
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": 0,
        });
        let mut req = self.agent.post(&self.url);
        if let Some(k) = &self.key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| {
            let retry = match &e {
                ureq::Error::StatusCode(code) => *code == 429 || *code >= 500,
                _ => true,
            };
            (retry, e.to_string())
        })?;
        let v: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| (false, format!("malformed response body: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| (false, format!("response has no choices[0].message.content: {v}")))
    }
}

impl ChatBackend for HttpChat {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let mut wait = self.backoff;
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(wait);
                wait *= 2;
            }
            match self.attempt(messages) {
                Ok(s) => return Ok(s),
                Err((true, msg)) => last = msg,
                Err((false, msg)) => return Err(Error::Transport(msg)),
            }
        }
        Err(Error::Transport(format!(
            "{} after {} attempts: {last}",
            self.url,
            self.retries + 1
        )))
    }
}

/// Offline mock: a JSON object mapping report text to the two replies.
/// The key `"*"` answers any report without its own entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureChat {
    pub replies: BTreeMap<String, [String; 2]>,
}

impl FixtureChat {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            replies: serde_json::from_str(&text)?,
        })
    }
}

impl ChatBackend for FixtureChat {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let first = messages.first().map(|m| m.content.as_str()).unwrap_or("");
        let report = first.strip_suffix(FEATURE_PROMPT).unwrap_or(first).trim_end();
        let turn = messages.iter().filter(|m| m.role == "user").count().min(2) - 1;
        self.replies
            .get(report)
            .or_else(|| self.replies.get("*"))
            .map(|r| r[turn].clone())
            .ok_or_else(|| Error::Transport(format!("fixture has no reply for {report:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_mixed_quotes_from_prose() {
        let got = parse_feature_list(r#"Sure! ["Prolonged PR interval", 'wide QRS']"#).unwrap();
        assert_eq!(got, ["prolonged pr interval", "wide qrs"]);
    }

    #[test]
    fn deduplicates_in_order() {
        assert_eq!(parse_feature_list(r#"["a", "a", "b"]"#).unwrap(), ["a", "b"]);
    }

    #[test]
    fn empty_or_missing_list_is_an_error() {
        for raw in ["[]", "no list here", "[\"open", "[1, 2]"] {
            match parse_feature_list(raw) {
                Err(Error::Parse { raw: r }) => assert_eq!(r, raw),
                other => panic!("{raw}: {other:?}"),
            }
        }
    }

    #[test]
    fn only_the_first_list_counts() {
        let got = parse_feature_list("x = ['st elevation'] and later ['q wave']").unwrap();
        assert_eq!(got, ["st elevation"]);
    }

    #[test]
    fn brackets_and_quotes_inside_items() {
        let got = parse_feature_list(r#"["t wave [inverted]", "patient's rr", 'say \'hi\'']"#).unwrap();
        assert_eq!(got, ["t wave [inverted]", "patient's rr", "say 'hi'"]);
    }

    #[test]
    fn fixture_answers_both_turns() {
        let mut f = FixtureChat::default();
        f.replies.insert(
            "ECG shows normal ecg.".into(),
            ["prose".into(), r#"["Tall R wave"]"#.into()],
        );
        assert_eq!(propose_llm("ECG shows normal ecg.", &f).unwrap(), ["tall r wave"]);
        assert!(matches!(propose_llm("other", &f), Err(Error::Transport(_))));
    }
}
