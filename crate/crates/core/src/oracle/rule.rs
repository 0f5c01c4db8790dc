use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use super::{Extraction, Judgment, OracleError, OracleQuery, PredicateBackend};
use crate::signal::parse_rendered_line;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexiconError {
    #[error("lexicon line {line}: {message}")]
    Syntax { line: usize, message: String },
}

/// Trigger phrases per predicate label, both lowercased.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    /// Parses `label: phrase | phrase` lines; `#` starts a comment line.
    pub fn parse(source: &str) -> Result<Self, LexiconError> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (n, raw) in source.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| LexiconError::Syntax {
                line: n + 1,
                message: message.to_string(),
            };
            let (label, phrases) = line.split_once(':').ok_or_else(|| err("expected `label: phrases`"))?;
            let label = normalize_label(label);
            if label.is_empty() {
                return Err(err("empty label"));
            }
            let phrases: Vec<String> = phrases
                .split('|')
                .map(|p| p.trim().to_lowercase())
                .filter(|p| !p.is_empty())
                .collect();
            if phrases.is_empty() {
                return Err(err("no phrases"));
            }
            if entries.insert(label.clone(), phrases).is_some() {
                return Err(err(&format!("label `{label}` defined twice")));
            }
        }
        Ok(Self { entries })
    }

    pub fn phrases(&self, label: &str) -> Option<&[String]> {
        self.entries.get(&normalize_label(label)).map(Vec::as_slice)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn normalize_label(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Deterministic keyword backend: a predicate holds on every rendered line
/// containing one of its label's phrases. Unknown labels answer No with zero
/// confidence.
#[derive(Debug, Clone)]
pub struct RuleBackend {
    lexicon: Lexicon,
}

impl RuleBackend {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }
}

impl PredicateBackend for RuleBackend {
    fn id(&self) -> &str {
        "rule"
    }

    fn judge(&self, query: &OracleQuery) -> Result<Judgment, OracleError> {
        let Some(phrases) = self.lexicon.phrases(query.target.text()) else {
            return Ok(Judgment {
                verdict: false,
                confidence: 0.0,
                evidence: Vec::new(),
            });
        };
        let evidence: Vec<usize> = query
            .window_text
            .lines()
            .enumerate()
            .filter_map(|(pos, line)| {
                let parsed = parse_rendered_line(line);
                let text = parsed.text.to_lowercase();
                phrases
                    .iter()
                    .any(|p| text.contains(p.as_str()))
                    .then(|| parsed.index.unwrap_or(query.window.lo + pos))
            })
            .collect();
        Ok(Judgment {
            verdict: !evidence.is_empty(),
            confidence: 1.0,
            evidence,
        })
    }

    fn extract(&self, query: &OracleQuery) -> Result<Extraction, OracleError> {
        Ok(match extract_answer(&query.window_text, query.target.text()) {
            Some(answer) => Extraction {
                answer,
                confidence: 1.0,
            },
            None => Extraction {
                answer: String::new(),
                confidence: 0.0,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Address,
    Phone,
    Name,
}

fn field_of(question: &str) -> Option<Field> {
    let q = question.to_lowercase();
    if q.contains("address") || q.contains("where") || q.contains("location") {
        Some(Field::Address)
    } else if q.contains("phone") || q.contains("number") {
        Some(Field::Phone)
    } else if q.contains("name") {
        Some(Field::Name)
    } else {
        None
    }
}

fn pattern(field: Field) -> &'static Regex {
    static ADDRESS: OnceLock<Regex> = OnceLock::new();
    static PHONE: OnceLock<Regex> = OnceLock::new();
    static NAME: OnceLock<Regex> = OnceLock::new();
    match field {
        Field::Address => ADDRESS.get_or_init(|| {
            Regex::new(
                r"(?i)\b\d{1,6}(?:\s+[a-z0-9'-]+){1,4}?\s+(?:street|st|avenue|ave|road|rd|boulevard|blvd|lane|ln|drive|dr|court|ct|way|place|pl|parkway|pkwy|terrace|circle)\b\.?(?:,?\s+(?:apartment|apt|unit|suite)\.?\s*#?[a-z0-9-]*[0-9][a-z0-9-]*)?",
            )
            .expect("address pattern")
        }),
        Field::Phone => PHONE.get_or_init(|| {
            Regex::new(r"(?:\(\d{3}\)\s?|\b\d{3}[-.\s])?\b\d{3}[-.\s]\d{4}\b").expect("phone pattern")
        }),
        Field::Name => NAME.get_or_init(|| {
            Regex::new(
                r"(?i:my name is|your name is|your name:|name is|name:)\s+([A-Z][A-Za-z'-]+(?:\s+[A-Z][A-Za-z'-]+){0,3})",
            )
            .expect("name pattern")
        }),
    }
}

/// Extracts the first span answering `question` from rendered channel text.
/// `None` means no answer was found or the question is not understood.
pub fn extract_answer(channel_text: &str, question: &str) -> Option<String> {
    let field = field_of(question)?;
    let re = pattern(field);
    channel_text.lines().find_map(|line| {
        let text = parse_rendered_line(line).text;
        let caps = re.captures(text)?;
        let m = caps.get(1).or_else(|| caps.get(0))?;
        Some(m.as_str().trim().to_string())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{Channel, Window};
    use crate::speclang::{AtomKind, PredicateAtom};

    fn backend() -> RuleBackend {
        RuleBackend::new(Lexicon::parse("ask address: what is the address | where are you\n").unwrap())
    }

    fn query(text: &str, window: Window) -> OracleQuery {
        OracleQuery::atom(
            PredicateAtom::new(AtomKind::Detect, Channel::CallTakerOnly, "ask address"),
            text.into(),
            window,
            "c",
        )
    }

    #[test]
    fn keyword_fires_with_evidence() {
        let j = backend()
            .judge(&query("[1] A: 911, what is the address of your emergency?", Window::new(1, 1)))
            .unwrap();
        assert!(j.verdict);
        assert_eq!(j.evidence, vec![1]);
    }

    #[test]
    fn no_hit_is_false() {
        let j = backend()
            .judge(&query("[2] B: help, he's not breathing", Window::new(2, 2)))
            .unwrap();
        assert!(!j.verdict);
        assert!(j.evidence.is_empty());
        assert_eq!(j.confidence, 1.0);
    }

    #[test]
    fn unprefixed_lines_use_window_start() {
        let j = backend()
            .judge(&query("hello\nWhere are you now?", Window::new(5, 6)))
            .unwrap();
        assert_eq!(j.evidence, vec![6]);
    }

    #[test]
    fn unknown_label_has_zero_confidence() {
        let mut q = query("[1] A: anything", Window::new(1, 1));
        q.target = super::super::QueryTarget::Atom(PredicateAtom::new(
            AtomKind::Detect,
            Channel::CallTakerOnly,
            "unlisted",
        ));
        let j = backend().judge(&q).unwrap();
        assert!(!j.verdict);
        assert_eq!(j.confidence, 0.0);
    }

    #[test]
    fn address_extraction() {
        assert_eq!(
            extract_answer("B: it's 123 Main Street apartment 4B", "what's the address?").as_deref(),
            Some("123 Main Street apartment 4B")
        );
        assert_eq!(
            extract_answer("[3] B: I live at 123 Main Street, Apt 4B.", "what's the address?").as_deref(),
            Some("123 Main Street, Apt 4B")
        );
        assert_eq!(extract_answer("B: help me please", "what's the address?"), None);
    }

    #[test]
    fn name_and_phone_extraction() {
        assert_eq!(
            extract_answer("[4] B: My name is Maria Lopez.", "what's the caller's name?").as_deref(),
            Some("Maria Lopez")
        );
        assert_eq!(
            extract_answer("[6] B: My number is 555-201-7788.", "what's the phone number?").as_deref(),
            Some("555-201-7788")
        );
    }

    #[test]
    fn lexicon_errors() {
        assert!(Lexicon::parse("no colon here").is_err());
        assert!(Lexicon::parse("x: a\nx: b").is_err());
        assert!(Lexicon::parse("x: | ").is_err());
        let lx = Lexicon::parse("# comment\n\n  Ask   Address : A | b ").unwrap();
        assert_eq!(lx.phrases("ask address").unwrap(), ["a", "b"]);
    }
}
