//! Random formulas and transcripts for property checks.

use debrief_core::oracle::Lexicon;
use debrief_core::signal::{Channel, Speaker, Transcript};
use debrief_core::speclang::{AnswerRef, AtomKind, Bound, Formula, Interval, Offset, PredicateAtom, TauBindings};
use proptest::prelude::*;

pub const LEXICON: &str = "p: alpha\nq: beta\nr: gamma | delta\n";

pub fn lexicon() -> Lexicon {
    Lexicon::parse(LEXICON).unwrap()
}

const UTTERANCES: &[&str] = &[
    "alpha",
    "beta here",
    "gamma and alpha",
    "nothing at all",
    "Delta!",
    "I'm at 123 Main Street.",
    "it is 9 Elm Ct",
    "we are at 777 Nowhere Road",
    "850 Pine Avenue, beta",
    "hello",
];

pub fn arb_channel() -> impl Strategy<Value = Channel> {
    prop_oneof![Just(Channel::Both), Just(Channel::CallTakerOnly), Just(Channel::CallerOnly)]
}

fn arb_offset() -> impl Strategy<Value = Offset> {
    prop_oneof![
        3 => (0u32..8).prop_map(Offset::Turns),
        1 => prop_oneof![Just("tau1"), Just("tau2")].prop_map(|s| Offset::Tau(s.to_string())),
    ]
}

pub fn arb_interval() -> impl Strategy<Value = Interval> {
    let bound = prop_oneof![arb_offset().prop_map(Bound::FromStart), arb_offset().prop_map(Bound::FromEnd)];
    (bound.clone(), bound).prop_map(|(lo, hi)| Interval::new(lo, hi))
}

fn arb_leaf() -> impl Strategy<Value = Formula> {
    let atom = (
        prop_oneof![Just(AtomKind::Detect), Just(AtomKind::Scan)],
        arb_channel(),
        prop_oneof![Just("p"), Just("q"), Just("r"), Just("unknown")],
    )
        .prop_map(|(k, c, q)| Formula::Atom(PredicateAtom::new(k, c, q)));
    let answer = arb_channel().prop_map(|c| AnswerRef::new(c, "what's the address?"));
    let addr = prop::collection::vec(answer, 1..=2).prop_map(Formula::AddrValid);
    prop_oneof![6 => atom, 1 => addr]
}

/// Formulas over the test lexicon, at most `depth` deep.
pub fn arb_formula(depth: u32) -> impl Strategy<Value = Formula> {
    arb_leaf().prop_recursive(depth.saturating_sub(1), 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            (arb_interval(), inner.clone()).prop_map(|(i, f)| Formula::eventually(i, f)),
            (arb_interval(), inner).prop_map(|(i, f)| Formula::always(i, f)),
        ]
    })
}

pub fn arb_transcript(max_turns: usize) -> impl Strategy<Value = Transcript> {
    prop::collection::vec((any::<bool>(), 0..UTTERANCES.len()), 1..=max_turns).prop_map(|turns| {
        Transcript::from_utterances(
            "prop",
            turns
                .into_iter()
                .map(|(a, i)| (if a { Speaker::CallTaker } else { Speaker::Caller }, UTTERANCES[i])),
        )
        .unwrap()
    })
}

pub fn arb_taus() -> impl Strategy<Value = TauBindings> {
    (0u32..10, 0u32..10).prop_map(|(a, b)| TauBindings::from([("tau1".to_string(), a), ("tau2".to_string(), b)]))
}

/// Formulas for printer/parser round trips: free-form query text, all
/// atom kinds, any valid τ name.
pub fn arb_any_formula(depth: u32) -> impl Strategy<Value = Formula> {
    let kind = prop_oneof![
        Just(AtomKind::Scene),
        Just(AtomKind::Type),
        Just(AtomKind::Critical),
        Just(AtomKind::Scan),
        Just(AtomKind::Detect)
    ];
    let text = "[ -~]{1,24}";
    let atom = (kind, arb_channel(), text).prop_map(|(k, c, q)| Formula::Atom(PredicateAtom::new(k, c, q)));
    let answer = (arb_channel(), text).prop_map(|(c, q)| AnswerRef::new(c, q));
    let addr = prop::collection::vec(answer, 1..=2).prop_map(Formula::AddrValid);
    let offset = prop_oneof![
        (0u32..1000).prop_map(Offset::Turns),
        "[a-z_][a-z0-9_]{0,6}"
            .prop_filter("tau name", |s| debrief_core::speclang::is_valid_tau_name(s))
            .prop_map(Offset::Tau),
    ];
    let bound = prop_oneof![offset.clone().prop_map(Bound::FromStart), offset.prop_map(Bound::FromEnd)];
    let interval = (bound.clone(), bound).prop_map(|(lo, hi)| Interval::new(lo, hi));
    prop_oneof![4 => atom, 1 => addr].prop_recursive(depth.saturating_sub(1), 32, 2, move |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            (interval.clone(), inner.clone()).prop_map(|(i, f)| Formula::eventually(i, f)),
            (interval.clone(), inner).prop_map(|(i, f)| Formula::always(i, f)),
        ]
    })
}
