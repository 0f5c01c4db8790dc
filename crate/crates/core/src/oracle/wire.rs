use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Extraction, Judgment, OracleError, OracleQuery, PredicateBackend, QueryTarget};
use crate::speclang::AtomKind;

/// The `system` and `task` parts of one model request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub system: String,
    pub task: String,
}

const EVIDENCE_LINE: &str =
    "If Yes, also state the number of the earliest turn that supports the answer.";
const CONFIDENCE_LINE: &str = "State your confidence 0-100.";

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Renders the request templates for `target`.
pub fn prompt_for(target: &QueryTarget) -> Prompt {
    let (system, task) = match target {
        QueryTarget::Atom(atom) => {
            let q = &atom.query;
            match atom.kind {
                AtomKind::Scene => (
                    "Identify whether the emergency scenario requires a Fire, Police, or Medical responder based on the following conversation transcript.".to_string(),
                    format!(
                        "Based on the conversation, determine the required responders. Does it require {}? Return only Yes or No.",
                        capitalize(q)
                    ),
                ),
                AtomKind::Type => (
                    "Classify the emergency type in the following conversation transcript.".to_string(),
                    format!("Identify if the call belongs to this {q}? Return only Yes or No."),
                ),
                AtomKind::Critical => (
                    "Identify whether the emergency involves a critical life-threatening situation.".to_string(),
                    format!("Determine if {q} is present.\n\nReturn only Yes and No."),
                ),
                AtomKind::Detect => (
                    "Verify whether the call-taker performed a required action.".to_string(),
                    format!(
                        "Determine whether the call-taker performed the following action:\n\"{q}\"\n\nReturn \"Yes\" if performed, otherwise return \"No.\""
                    ),
                ),
                AtomKind::Scan => (
                    "Verify whether a specific precondition is met in the following conversation transcript.".to_string(),
                    format!(
                        "Determine whether the following precondition is satisfied:\n\"{q}\"\n\nReturn \"Yes\" if the precondition is met at any point in the conversation, otherwise return \"No.\""
                    ),
                ),
            }
        }
        QueryTarget::Answer(a) => (
            "Extract specific details from the call transcript.".to_string(),
            format!(
                "Extract the following information:\n\"{}\"\n\nReturn the exact response. If unavailable, return \"N/A.\"",
                a.question
            ),
        ),
    };
    let task = match target {
        QueryTarget::Atom(_) => format!("{task}\n{EVIDENCE_LINE}\n{CONFIDENCE_LINE}"),
        QueryTarget::Answer(_) => format!("{task}\n{CONFIDENCE_LINE}"),
    };
    Prompt { system, task }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl WireConfig {
    /// Reads `ORACLE_ENDPOINT` (required) and `ORACLE_API_KEY`.
    pub fn from_env() -> Result<Self, OracleError> {
        let endpoint = std::env::var("ORACLE_ENDPOINT")
            .ok()
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| OracleError::Unavailable("ORACLE_ENDPOINT is not set".into()))?;
        Ok(Self {
            endpoint,
            api_key: std::env::var("ORACLE_API_KEY").ok().filter(|s| !s.is_empty()),
            timeout: Duration::from_secs(60),
        })
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    system: &'a str,
    task: &'a str,
    transcript: &'a str,
}

#[derive(Deserialize)]
struct WireReply {
    answer: String,
    confidence: f64,
    #[serde(default)]
    evidence: Option<serde_json::Value>,
}

/// Model-backed oracle speaking a single JSON POST per query.
pub struct WireBackend {
    config: WireConfig,
    agent: ureq::Agent,
}

impl std::fmt::Debug for WireBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WireBackend")
            .field("endpoint", &self.config.endpoint)
            .finish()
    }
}

impl WireBackend {
    pub fn new(config: WireConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn call(&self, query: &OracleQuery) -> Result<(String, f64, Option<serde_json::Value>), OracleError> {
        let prompt = prompt_for(&query.target);
        let body = WireRequest {
            system: &prompt.system,
            task: &prompt.task,
            transcript: &query.window_text,
        };
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| OracleError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 500 {
            return Err(OracleError::Unavailable(format!("endpoint returned HTTP {status}")));
        }
        if status >= 300 {
            return Err(OracleError::Protocol(format!("endpoint returned HTTP {status}")));
        }
        let reply: WireReply = resp
            .body_mut()
            .read_json()
            .map_err(|e| OracleError::Protocol(format!("unparseable reply: {e}")))?;
        Ok((reply.answer, normalize_confidence(reply.confidence)?, reply.evidence))
    }
}

/// Accepts confidences on either a 0-1 or a 0-100 scale.
fn normalize_confidence(c: f64) -> Result<f64, OracleError> {
    if !c.is_finite() || !(0.0..=100.0).contains(&c) {
        return Err(OracleError::Protocol(format!("confidence {c} out of range")));
    }
    Ok(if c > 1.0 { c / 100.0 } else { c })
}

fn strip_quotes(s: &str) -> &str {
    s.trim().trim_matches(|c| c == '"' || c == '\'' || c == '“' || c == '”').trim()
}

/// Reads a Yes/No answer plus its first stated turn number.
fn parse_verdict(answer: &str) -> Result<(bool, Option<usize>), OracleError> {
    let a = strip_quotes(answer);
    let lower = a.to_ascii_lowercase();
    let verdict = if lower.starts_with("yes") {
        true
    } else if lower.starts_with("no") {
        false
    } else {
        return Err(OracleError::Protocol(format!("expected Yes or No, got `{a}`")));
    };
    let turn = a[3.min(a.len())..]
        .split(|c: char| !c.is_ascii_digit())
        .find(|s| !s.is_empty())
        .and_then(|s| s.parse().ok());
    Ok((verdict, turn))
}

fn evidence_field(v: &serde_json::Value) -> Vec<usize> {
    match v {
        serde_json::Value::Number(n) => n.as_u64().map(|n| vec![n as usize]).unwrap_or_default(),
        serde_json::Value::Array(items) => items
            .iter()
            .filter_map(|i| i.as_u64().map(|n| n as usize))
            .collect(),
        _ => Vec::new(),
    }
}

impl PredicateBackend for WireBackend {
    fn id(&self) -> &str {
        "wire"
    }

    fn judge(&self, query: &OracleQuery) -> Result<Judgment, OracleError> {
        let (answer, confidence, evidence) = self.call(query)?;
        let (verdict, stated) = parse_verdict(&answer)?;
        let mut turns: Vec<usize> = evidence.as_ref().map(evidence_field).unwrap_or_default();
        if turns.is_empty() {
            turns.extend(stated);
        }
        turns.retain(|t| query.window.contains(*t));
        if verdict && turns.is_empty() {
            turns.push(query.window.lo);
        }
        if !verdict {
            turns.clear();
        }
        Ok(Judgment {
            verdict,
            confidence,
            evidence: turns,
        })
    }

    fn extract(&self, query: &OracleQuery) -> Result<Extraction, OracleError> {
        let (answer, confidence, _) = self.call(query)?;
        let a = strip_quotes(&answer);
        let a = a.trim_end_matches('.');
        let answer = if a.eq_ignore_ascii_case("n/a") || a.is_empty() {
            String::new()
        } else {
            a.to_string()
        };
        Ok(Extraction { answer, confidence })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Channel;
    use crate::speclang::{AnswerRef, PredicateAtom};

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("Yes").unwrap(), (true, None));
        assert_eq!(parse_verdict("\"Yes\", turn 7").unwrap(), (true, Some(7)));
        assert_eq!(parse_verdict("No.").unwrap(), (false, None));
        assert!(parse_verdict("Maybe").is_err());
    }

    #[test]
    fn confidence_scales() {
        assert_eq!(normalize_confidence(0.65).unwrap(), 0.65);
        assert_eq!(normalize_confidence(70.0).unwrap(), 0.70);
        assert!(normalize_confidence(-1.0).is_err());
        assert!(normalize_confidence(f64::NAN).is_err());
    }

    #[test]
    fn templates_substitute_arguments() {
        let p = prompt_for(&QueryTarget::Atom(PredicateAtom::new(
            AtomKind::Scene,
            Channel::Both,
            "fire",
        )));
        assert!(p.task.contains("Does it require Fire?"));
        assert!(p.task.ends_with(CONFIDENCE_LINE));
        let p = prompt_for(&QueryTarget::Atom(PredicateAtom::new(
            AtomKind::Detect,
            Channel::CallTakerOnly,
            "ask address",
        )));
        assert!(p.task.contains("\"ask address\""));
        let p = prompt_for(&QueryTarget::Answer(AnswerRef::new(Channel::CallerOnly, "what's the address?")));
        assert!(p.system.starts_with("Extract specific details"));
        assert!(!p.task.contains(EVIDENCE_LINE));
    }
}
