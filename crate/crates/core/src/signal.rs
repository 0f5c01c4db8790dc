//! Transcript model: the conversational signal, its speaker channels and
//! turn windows.
//!
//! Turn indices are 1-based and play the role of discrete time. Projections
//! and slices keep the original indices so that evidence reported against a
//! derived view always points back into the full call.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SignalError {
    #[error("malformed transcript: {0}")]
    MalformedTranscript(String),
    #[error("transcript has no turns")]
    EmptyTranscript,
    #[error("window [{lo}, {hi}] is outside turns 1..={horizon}")]
    WindowOutOfRange { lo: usize, hi: usize, horizon: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    CallTaker,
    Caller,
}

impl Speaker {
    /// Single-letter tag used in plain dialogue files and rendered windows.
    pub fn tag(self) -> &'static str {
        match self {
            Speaker::CallTaker => "A",
            Speaker::Caller => "B",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    #[serde(rename = "t")]
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_offset: Option<f64>,
}

impl Turn {
    pub fn new(index: usize, speaker: Speaker, text: impl Into<String>) -> Self {
        Self {
            index,
            speaker,
            text: text.into(),
            time_offset: None,
        }
    }
}

/// Which side of the conversation an atom observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Both,
    CallTakerOnly,
    CallerOnly,
}

impl Channel {
    pub fn admits(self, speaker: Speaker) -> bool {
        match self {
            Channel::Both => true,
            Channel::CallTakerOnly => speaker == Speaker::CallTaker,
            Channel::CallerOnly => speaker == Speaker::Caller,
        }
    }

    /// DSL spelling: `A`, `B` or `AB`.
    pub fn tag(self) -> &'static str {
        match self {
            Channel::Both => "AB",
            Channel::CallTakerOnly => "A",
            Channel::CallerOnly => "B",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "AB" => Some(Channel::Both),
            "A" => Some(Channel::CallTakerOnly),
            "B" => Some(Channel::CallerOnly),
            _ => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Closed range of turn indices, `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Window {
    pub lo: usize,
    pub hi: usize,
}

impl Window {
    pub fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, index: usize) -> bool {
        self.lo <= index && index <= self.hi
    }

    /// Number of turn indices covered; never zero.
    pub fn span(&self) -> usize {
        self.hi + 1 - self.lo
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranscriptFormat {
    JsonTurns,
    PlainDialogue,
}

/// One call. A transcript produced by [`load_transcript`] or
/// [`Transcript::new`] holds turns `1..=T`; projections and slices of it keep
/// the original indices and the original horizon `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    call_id: String,
    horizon: usize,
    turns: Vec<Turn>,
}

#[derive(Serialize, Deserialize)]
struct TranscriptDoc {
    call_id: String,
    turns: Vec<Turn>,
}

impl Transcript {
    /// Builds a validated transcript. Indices must run `1..=T` without gaps.
    pub fn new(call_id: impl Into<String>, turns: Vec<Turn>) -> Result<Self, SignalError> {
        if turns.is_empty() {
            return Err(SignalError::EmptyTranscript);
        }
        let mut last_offset: Option<f64> = None;
        for (pos, turn) in turns.iter().enumerate() {
            if turn.index != pos + 1 {
                return Err(SignalError::MalformedTranscript(format!(
                    "expected turn {} but found turn {}",
                    pos + 1,
                    turn.index
                )));
            }
            if turn.text.trim().is_empty() {
                return Err(SignalError::MalformedTranscript(format!(
                    "turn {} has an empty utterance",
                    turn.index
                )));
            }
            if let Some(offset) = turn.time_offset {
                if offset.is_nan() || offset < 0.0 {
                    return Err(SignalError::MalformedTranscript(format!(
                        "turn {} has a negative time offset",
                        turn.index
                    )));
                }
                if let Some(prev) = last_offset {
                    if offset < prev {
                        return Err(SignalError::MalformedTranscript(format!(
                            "turn {} time offset decreases",
                            turn.index
                        )));
                    }
                }
                last_offset = Some(offset);
            }
        }
        Ok(Self {
            call_id: call_id.into(),
            horizon: turns.len(),
            turns,
        })
    }

    /// Convenience constructor from `(speaker, text)` pairs numbered in order.
    pub fn from_utterances<I, S>(call_id: impl Into<String>, utterances: I) -> Result<Self, SignalError>
    where
        I: IntoIterator<Item = (Speaker, S)>,
        S: Into<String>,
    {
        let turns = utterances
            .into_iter()
            .enumerate()
            .map(|(pos, (speaker, text))| Turn::new(pos + 1, speaker, text))
            .collect();
        Self::new(call_id, turns)
    }

    pub fn call_id(&self) -> &str {
        &self.call_id
    }

    /// `T`: the number of turns in the originating call.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn full_window(&self) -> Window {
        Window::new(1, self.horizon)
    }

    pub fn project(&self, channel: Channel) -> Transcript {
        Transcript {
            call_id: self.call_id.clone(),
            horizon: self.horizon,
            turns: self
                .turns
                .iter()
                .filter(|t| channel.admits(t.speaker))
                .cloned()
                .collect(),
        }
    }

    pub fn slice(&self, window: Window) -> Result<Transcript, SignalError> {
        self.check_window(window)?;
        Ok(Transcript {
            call_id: self.call_id.clone(),
            horizon: self.horizon,
            turns: self.range(window).to_vec(),
        })
    }

    /// Borrowed view of `slice(project(self, channel), window)`.
    pub fn excerpt(&self, channel: Channel, window: Window) -> Result<Excerpt<'_>, SignalError> {
        self.check_window(window)?;
        Ok(Excerpt {
            turns: self
                .range(window)
                .iter()
                .filter(|t| channel.admits(t.speaker))
                .collect(),
        })
    }

    fn check_window(&self, window: Window) -> Result<(), SignalError> {
        if window.lo < 1 || window.lo > window.hi || window.hi > self.horizon {
            return Err(SignalError::WindowOutOfRange {
                lo: window.lo,
                hi: window.hi,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    fn range(&self, window: Window) -> &[Turn] {
        let start = self.turns.partition_point(|t| t.index < window.lo);
        let end = self.turns.partition_point(|t| t.index <= window.hi);
        &self.turns[start..end]
    }

    pub fn render(&self) -> String {
        render_turns(self.turns.iter())
    }

    pub fn to_json(&self) -> String {
        let doc = TranscriptDoc {
            call_id: self.call_id.clone(),
            turns: self.turns.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("transcript serializes")
    }

    pub fn to_plain(&self) -> String {
        let mut out = String::new();
        for turn in &self.turns {
            out.push_str(turn.speaker.tag());
            out.push_str(": ");
            out.push_str(&turn.text);
            out.push('\n');
        }
        out
    }
}

/// Turns of one channel inside one window, borrowed from a transcript.
#[derive(Debug, Clone)]
pub struct Excerpt<'a> {
    turns: Vec<&'a Turn>,
}

impl<'a> Excerpt<'a> {
    pub fn turns(&self) -> &[&'a Turn] {
        &self.turns
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn render(&self) -> String {
        render_turns(self.turns.iter().copied())
    }
}

fn render_turns<'a>(turns: impl Iterator<Item = &'a Turn>) -> String {
    let mut out = String::new();
    for (n, turn) in turns.enumerate() {
        if n > 0 {
            out.push('\n');
        }
        out.push_str(&format!("[{}] {}: {}", turn.index, turn.speaker.tag(), turn.text));
    }
    out
}

/// A line of rendered window text split back into its parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedLine<'a> {
    pub index: Option<usize>,
    pub speaker: Option<Speaker>,
    pub text: &'a str,
}

/// Parses one line of rendered text: `[3] A: text`, `A: text` or bare text.
pub fn parse_rendered_line(line: &str) -> RenderedLine<'_> {
    let mut rest = line.trim();
    let mut index = None;
    if let Some(stripped) = rest.strip_prefix('[') {
        if let Some(close) = stripped.find(']') {
            if let Ok(n) = stripped[..close].trim().parse::<usize>() {
                index = Some(n);
                rest = stripped[close + 1..].trim_start();
            }
        }
    }
    let mut speaker = None;
    if let Some(t) = rest.strip_prefix("A:") {
        speaker = Some(Speaker::CallTaker);
        rest = t.trim_start();
    } else if let Some(t) = rest.strip_prefix("B:") {
        speaker = Some(Speaker::Caller);
        rest = t.trim_start();
    }
    RenderedLine {
        index,
        speaker,
        text: rest,
    }
}

pub fn load_transcript(source: &[u8], format: TranscriptFormat) -> Result<Transcript, SignalError> {
    let text = std::str::from_utf8(source)
        .map_err(|e| SignalError::MalformedTranscript(format!("invalid UTF-8: {e}")))?;
    match format {
        TranscriptFormat::JsonTurns => load_json(text),
        TranscriptFormat::PlainDialogue => load_plain(text),
    }
}

fn load_json(text: &str) -> Result<Transcript, SignalError> {
    if text.trim().is_empty() {
        return Err(SignalError::EmptyTranscript);
    }
    let doc: TranscriptDoc = serde_json::from_str(text)
        .map_err(|e| SignalError::MalformedTranscript(e.to_string()))?;
    Transcript::new(doc.call_id, doc.turns)
}

fn load_plain(text: &str) -> Result<Transcript, SignalError> {
    let mut turns = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (speaker, body) = if let Some(body) = line.strip_prefix("A:") {
            (Speaker::CallTaker, body)
        } else if let Some(body) = line.strip_prefix("B:") {
            (Speaker::Caller, body)
        } else {
            return Err(SignalError::MalformedTranscript(format!(
                "line {} has no speaker prefix",
                line_no + 1
            )));
        };
        turns.push(Turn::new(turns.len() + 1, speaker, body.trim()));
    }
    if turns.is_empty() {
        return Err(SignalError::EmptyTranscript);
    }
    let digest = Sha256::digest(text.as_bytes());
    let call_id = format!("plain-{}", &hex::encode(digest)[..12]);
    Transcript::new(call_id, turns)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alternating(n: usize) -> Transcript {
        Transcript::from_utterances(
            "c1",
            (0..n).map(|i| {
                let sp = if i % 2 == 0 { Speaker::CallTaker } else { Speaker::Caller };
                (sp, format!("utterance {}", i + 1))
            }),
        )
        .unwrap()
    }

    #[test]
    fn plain_dialogue_maps_speakers() {
        let t = load_transcript(
            b"A: 911, what is the address?\nB: 123 Main Street\n",
            TranscriptFormat::PlainDialogue,
        )
        .unwrap();
        assert_eq!(t.horizon(), 2);
        let speakers: Vec<_> = t.turns().iter().map(|t| t.speaker).collect();
        assert_eq!(speakers, vec![Speaker::CallTaker, Speaker::Caller]);
        assert_eq!(t.turns()[1].text, "123 Main Street");
    }

    #[test]
    fn json_index_gap_is_malformed() {
        let src = br#"{"call_id":"x","turns":[
            {"t":1,"speaker":"call_taker","text":"a"},
            {"t":2,"speaker":"caller","text":"b"},
            {"t":4,"speaker":"caller","text":"c"}]}"#;
        assert!(matches!(
            load_transcript(src, TranscriptFormat::JsonTurns),
            Err(SignalError::MalformedTranscript(_))
        ));
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(
            load_transcript(b"", TranscriptFormat::PlainDialogue),
            Err(SignalError::EmptyTranscript)
        );
        assert_eq!(
            load_transcript(b"", TranscriptFormat::JsonTurns),
            Err(SignalError::EmptyTranscript)
        );
        assert_eq!(
            load_transcript(br#"{"call_id":"x","turns":[]}"#, TranscriptFormat::JsonTurns),
            Err(SignalError::EmptyTranscript)
        );
    }

    #[test]
    fn whitespace_utterance_and_missing_prefix_rejected() {
        assert!(matches!(
            load_transcript(b"A: hello\nB:    \n", TranscriptFormat::PlainDialogue),
            Err(SignalError::MalformedTranscript(_))
        ));
        assert!(matches!(
            load_transcript(b"A: hello\nhow are you\n", TranscriptFormat::PlainDialogue),
            Err(SignalError::MalformedTranscript(_))
        ));
    }

    #[test]
    fn decreasing_time_offset_rejected() {
        let src = br#"{"call_id":"x","turns":[
            {"t":1,"speaker":"call_taker","text":"a","time_offset":3.0},
            {"t":2,"speaker":"caller","text":"b","time_offset":1.0}]}"#;
        assert!(load_transcript(src, TranscriptFormat::JsonTurns).is_err());
    }

    #[test]
    fn projection_keeps_indices() {
        let t = alternating(4);
        let a = t.project(Channel::CallTakerOnly);
        let idx: Vec<_> = a.turns().iter().map(|t| t.index).collect();
        assert_eq!(idx, vec![1, 3]);
        assert_eq!(t.project(Channel::Both), t);
    }

    #[test]
    fn caller_silent_projection_is_empty() {
        let t = Transcript::from_utterances("s", [(Speaker::CallTaker, "hello?")]).unwrap();
        assert!(t.project(Channel::CallerOnly).is_empty());
    }

    #[test]
    fn slicing() {
        let t = alternating(10);
        assert_eq!(t.slice(Window::new(1, 10)).unwrap(), t);
        assert_eq!(t.slice(Window::new(3, 5)).unwrap().len(), 3);
        assert!(matches!(
            t.slice(Window::new(9, 12)),
            Err(SignalError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn rendered_lines_parse_back() {
        let t = alternating(3);
        let text = t.excerpt(Channel::Both, Window::new(2, 3)).unwrap().render();
        let lines: Vec<_> = text.lines().map(parse_rendered_line).collect();
        assert_eq!(lines[0].index, Some(2));
        assert_eq!(lines[0].speaker, Some(Speaker::Caller));
        assert_eq!(lines[1].text, "utterance 3");
        let bare = parse_rendered_line("help, he's not breathing");
        assert_eq!(bare.index, None);
        assert_eq!(bare.speaker, None);
    }
}
