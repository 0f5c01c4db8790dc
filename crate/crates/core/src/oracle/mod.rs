//! Predicate oracles: the backend contract, a rule backend, a wire backend,
//! the address verifier and a response cache, behind one front door.

mod address;
mod cache;
mod rule;
mod wire;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use address::{AddressVerdict, AddressVerifier, Gazetteer, GazetteerEntry, GazetteerError};
pub use cache::{CacheError, CacheKey, CachedValue, ResponseCache};
pub use rule::{extract_answer, Lexicon, LexiconError, RuleBackend};
pub use wire::{prompt_for, Prompt, WireBackend, WireConfig};

use crate::signal::{Channel, Window};
use crate::speclang::{AnswerRef, AtomKind, PredicateAtom};

/// Confidence below which a response is flagged for human review.
pub const DEFAULT_THRESHOLD: f64 = 0.70;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("oracle unavailable: {0}")]
    Unavailable(String),
    #[error("oracle protocol error: {0}")]
    Protocol(String),
}

/// What is being asked: a Yes/No predicate or an extraction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryTarget {
    Atom(PredicateAtom),
    Answer(AnswerRef),
}

impl QueryTarget {
    pub fn channel(&self) -> Channel {
        match self {
            QueryTarget::Atom(a) => a.channel,
            QueryTarget::Answer(a) => a.channel,
        }
    }

    pub fn kind_tag(&self) -> &'static str {
        match self {
            QueryTarget::Atom(a) => a.kind.keyword(),
            QueryTarget::Answer(_) => "ANSWER",
        }
    }

    pub fn text(&self) -> &str {
        match self {
            QueryTarget::Atom(a) => &a.query,
            QueryTarget::Answer(a) => &a.question,
        }
    }
}

impl fmt::Display for QueryTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryTarget::Atom(a) => write!(f, "{a}"),
            QueryTarget::Answer(a) => write!(f, "{a}"),
        }
    }
}

/// One oracle request. `window_text` is the rendering of the channel
/// projection of the transcript restricted to `window`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleQuery {
    pub target: QueryTarget,
    pub window_text: String,
    pub window: Window,
    pub call_id: String,
}

impl OracleQuery {
    pub fn atom(atom: PredicateAtom, window_text: String, window: Window, call_id: &str) -> Self {
        Self {
            target: QueryTarget::Atom(atom),
            window_text,
            window,
            call_id: call_id.to_string(),
        }
    }

    pub fn answer(answer: AnswerRef, window_text: String, window: Window, call_id: &str) -> Self {
        Self {
            target: QueryTarget::Answer(answer),
            window_text,
            window,
            call_id: call_id.to_string(),
        }
    }

    pub fn atom_kind(&self) -> Option<AtomKind> {
        match &self.target {
            QueryTarget::Atom(a) => Some(a.kind),
            QueryTarget::Answer(_) => None,
        }
    }
}

/// Raw Yes/No judgment produced by a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub verdict: bool,
    pub confidence: f64,
    pub evidence: Vec<usize>,
}

/// Raw extraction produced by a backend; empty when nothing was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub answer: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResponse {
    pub verdict: bool,
    pub confidence: f64,
    /// Sorted turn indices where the predicate holds.
    pub evidence: Vec<usize>,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub answer: String,
    pub confidence: f64,
    pub low_confidence: bool,
}

/// A response plus whether producing it invoked the backend.
#[derive(Debug, Clone, PartialEq)]
pub struct Served<T> {
    pub value: T,
    pub backend_call: bool,
}

/// A predicate-evaluation backend. Implementations must be callable from
/// several threads at once.
pub trait PredicateBackend: Send + Sync {
    /// Stable identifier; part of every cache key.
    fn id(&self) -> &str;
    fn judge(&self, query: &OracleQuery) -> Result<Judgment, OracleError>;
    fn extract(&self, query: &OracleQuery) -> Result<Extraction, OracleError>;
}

/// Front door used by the monitor and pipeline: backend, cache, confidence
/// threshold and address verifier.
pub struct Oracle {
    backend: Arc<dyn PredicateBackend>,
    cache: Option<Arc<ResponseCache>>,
    verifier: Arc<dyn AddressVerifier>,
    threshold: f64,
    backend_calls: AtomicUsize,
    cache_faults: AtomicUsize,
}

impl fmt::Debug for Oracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Oracle")
            .field("backend", &self.backend.id())
            .field("cached", &self.cache.is_some())
            .field("threshold", &self.threshold)
            .finish()
    }
}

impl Oracle {
    pub fn new(backend: Arc<dyn PredicateBackend>, verifier: Arc<dyn AddressVerifier>) -> Self {
        Self {
            backend,
            cache: None,
            verifier,
            threshold: DEFAULT_THRESHOLD,
            backend_calls: AtomicUsize::new(0),
            cache_faults: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn cache(&self) -> Option<&Arc<ResponseCache>> {
        self.cache.as_ref()
    }

    /// Backend invocations since construction.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    /// Corrupt cache entries or failed cache writes seen since construction.
    pub fn cache_faults(&self) -> usize {
        self.cache_faults.load(Ordering::Relaxed)
    }

    fn is_low(&self, confidence: f64) -> bool {
        confidence < self.threshold
    }

    /// Evaluates a Yes/No predicate. Empty window text is false with full
    /// confidence and never reaches the backend.
    pub fn evaluate(&self, query: &OracleQuery) -> Result<Served<OracleResponse>, OracleError> {
        if query.window_text.trim().is_empty() {
            return Ok(Served {
                value: OracleResponse {
                    verdict: false,
                    confidence: 1.0,
                    evidence: Vec::new(),
                    low_confidence: false,
                },
                backend_call: false,
            });
        }
        let (value, backend_call) = self.memo(query, |b, q| b.judge(q).map(CachedValue::Judgment))?;
        let CachedValue::Judgment(mut j) = value else {
            return Err(OracleError::Protocol("cache holds an extraction for a judgment key".into()));
        };
        j.evidence.sort_unstable();
        j.evidence.dedup();
        Ok(Served {
            value: OracleResponse {
                low_confidence: self.is_low(j.confidence),
                verdict: j.verdict,
                confidence: j.confidence,
                evidence: j.evidence,
            },
            backend_call,
        })
    }

    /// Extracts an answer; empty window text yields "".
    pub fn answer(&self, query: &OracleQuery) -> Result<Served<AnswerResponse>, OracleError> {
        if query.window_text.trim().is_empty() {
            return Ok(Served {
                value: AnswerResponse {
                    answer: String::new(),
                    confidence: 1.0,
                    low_confidence: false,
                },
                backend_call: false,
            });
        }
        let (value, backend_call) =
            self.memo(query, |b, q| b.extract(q).map(CachedValue::Extraction))?;
        let CachedValue::Extraction(x) = value else {
            return Err(OracleError::Protocol("cache holds a judgment for an extraction key".into()));
        };
        Ok(Served {
            value: AnswerResponse {
                low_confidence: self.is_low(x.confidence),
                answer: x.answer,
                confidence: x.confidence,
            },
            backend_call,
        })
    }

    pub fn verify_address(&self, addresses: &[String]) -> Result<AddressVerdict, OracleError> {
        self.verifier.verify(addresses)
    }

    fn memo(
        &self,
        query: &OracleQuery,
        call: impl Fn(&dyn PredicateBackend, &OracleQuery) -> Result<CachedValue, OracleError>,
    ) -> Result<(CachedValue, bool), OracleError> {
        let Some(cache) = &self.cache else {
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            return Ok((call(self.backend.as_ref(), query)?, true));
        };
        let key = CacheKey::for_query(self.backend.id(), query);
        match cache.get(&key) {
            Ok(Some(v)) => return Ok((v, false)),
            Ok(None) => {}
            Err(_) => {
                self.cache_faults.fetch_add(1, Ordering::Relaxed);
            }
        }
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let value = call(self.backend.as_ref(), query)?;
        if cache.put(&key, &value).is_err() {
            self.cache_faults.fetch_add(1, Ordering::Relaxed);
        }
        Ok((value, true))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Fixed {
        confidence: f64,
        calls: Mutex<usize>,
    }

    impl PredicateBackend for Fixed {
        fn id(&self) -> &str {
            "fixed"
        }
        fn judge(&self, q: &OracleQuery) -> Result<Judgment, OracleError> {
            *self.calls.lock().unwrap() += 1;
            Ok(Judgment {
                verdict: true,
                confidence: self.confidence,
                evidence: vec![q.window.hi, q.window.lo],
            })
        }
        fn extract(&self, _: &OracleQuery) -> Result<Extraction, OracleError> {
            Ok(Extraction {
                answer: "x".into(),
                confidence: self.confidence,
            })
        }
    }

    fn oracle(confidence: f64) -> (Arc<Fixed>, Oracle) {
        let b = Arc::new(Fixed {
            confidence,
            calls: Mutex::new(0),
        });
        let o = Oracle::new(b.clone(), Arc::new(Gazetteer::default()));
        (b, o)
    }

    fn q(text: &str, window: Window) -> OracleQuery {
        OracleQuery::atom(
            PredicateAtom::new(AtomKind::Detect, Channel::CallTakerOnly, "ask address"),
            text.into(),
            window,
            "c1",
        )
    }

    #[test]
    fn threshold_boundary() {
        let (_, o) = oracle(0.70);
        assert!(!o.evaluate(&q("[1] A: hi", Window::new(1, 1))).unwrap().value.low_confidence);
        let (_, o) = oracle(0.699);
        assert!(o.evaluate(&q("[1] A: hi", Window::new(1, 1))).unwrap().value.low_confidence);
    }

    #[test]
    fn empty_text_skips_backend() {
        let (b, o) = oracle(1.0);
        let r = o.evaluate(&q("  ", Window::new(1, 3))).unwrap();
        assert!(!r.value.verdict);
        assert_eq!(r.value.confidence, 1.0);
        assert!(!r.backend_call);
        assert_eq!(*b.calls.lock().unwrap(), 0);
    }

    #[test]
    fn evidence_is_sorted() {
        let (_, o) = oracle(1.0);
        let r = o.evaluate(&q("[2] A: x", Window::new(2, 5))).unwrap();
        assert_eq!(r.value.evidence, vec![2, 5]);
    }

    #[test]
    fn cache_memoizes_and_separates_windows() {
        let (b, o) = oracle(1.0);
        let o = o.with_cache(Arc::new(ResponseCache::in_memory()));
        assert!(o.evaluate(&q("[1] A: x", Window::new(1, 1))).unwrap().backend_call);
        assert!(!o.evaluate(&q("[1] A: x", Window::new(1, 1))).unwrap().backend_call);
        assert!(o.evaluate(&q("[1] A: x", Window::new(1, 2))).unwrap().backend_call);
        assert_eq!(*b.calls.lock().unwrap(), 2);
        assert_eq!(o.backend_calls(), 2);
    }
}
