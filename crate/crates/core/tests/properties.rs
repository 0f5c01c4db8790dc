mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use debrief_core::emulation::{evaluate, generate, remask, CheckLabel, FormOutcomes};
use debrief_core::monitor::eval;
use debrief_core::oracle::{Oracle, OracleQuery, PredicateBackend, ResponseCache, RuleBackend};
use debrief_core::pipeline::{debrief, finalize_form, ContextResult, DebriefConfig, Outcome, QAFormResult};
use debrief_core::sample;
use debrief_core::signal::{load_transcript, Channel, Speaker, Transcript, TranscriptFormat, Turn, Window};
use debrief_core::speclang::{
    apply_refinements, parse_formula, AtomKind, Bound, CheckKind, Form, Formula, Interval, Offset, PredicateAtom,
    Responder,
};
use proptest::prelude::*;
use proptest::sample::{select, subsequence};
use proptest::strategy::ValueTree;

use support::gen;

fn arb_turn_text() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9,.?!' ]{0,30}[A-Za-z0-9.?!]"
}

fn arb_full_transcript() -> impl Strategy<Value = Transcript> {
    prop::collection::vec((any::<bool>(), arb_turn_text(), prop::option::of(0u32..30)), 1..40).prop_map(|turns| {
        let mut clock = 0.0;
        let turns = turns
            .into_iter()
            .enumerate()
            .map(|(i, (a, text, dt))| {
                let mut turn = Turn::new(i + 1, if a { Speaker::CallTaker } else { Speaker::Caller }, text);
                turn.time_offset = dt.map(|d| {
                    clock += d as f64 / 2.0;
                    clock
                });
                turn
            })
            .collect();
        Transcript::new("round-trip", turns).unwrap()
    })
}

fn test_oracle() -> Oracle {
    Oracle::new(Arc::new(RuleBackend::new(gen::lexicon())), Arc::new(sample::gazetteer()))
}

fn outcomes(report: &QAFormResult) -> BTreeMap<String, Outcome> {
    report.checks.iter().map(|c| (c.id.clone(), c.outcome)).collect()
}

fn assert_outcome_domain(report: &QAFormResult) {
    for c in &report.checks {
        let allowed: &[Outcome] = match c.kind {
            CheckKind::Conditional => &[Outcome::Yes, Outcome::No, Outcome::Na],
            _ => &[Outcome::Yes, Outcome::No, Outcome::Refused],
        };
        assert!(allowed.contains(&c.outcome), "{} has {}", c.id, c.outcome);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn transcript_json_round_trip(t in arb_full_transcript()) {
        let back = load_transcript(t.to_json().as_bytes(), TranscriptFormat::JsonTurns).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn transcript_plain_round_trip_keeps_turns(t in arb_full_transcript()) {
        let back = load_transcript(t.to_plain().as_bytes(), TranscriptFormat::PlainDialogue).unwrap();
        prop_assert_eq!(back.len(), t.len());
        for (a, b) in back.turns().iter().zip(t.turns()) {
            prop_assert_eq!((a.index, a.speaker, &a.text), (b.index, b.speaker, &b.text));
        }
    }

    #[test]
    fn slicing_is_idempotent(t in arb_full_transcript(), a in 1usize..40, b in 1usize..40) {
        prop_assert_eq!(t.slice(t.full_window()).unwrap(), t.clone());
        let (lo, hi) = (a.min(b).min(t.horizon()), a.max(b).min(t.horizon()));
        let w = Window::new(lo, hi);
        let once = t.slice(w).unwrap();
        prop_assert_eq!(once.slice(w).unwrap(), once);
    }

    #[test]
    fn projections_partition_the_call(t in arb_full_transcript()) {
        let ct = t.project(Channel::CallTakerOnly);
        let cr = t.project(Channel::CallerOnly);
        prop_assert_eq!(ct.len() + cr.len(), t.horizon());
        for p in [&ct, &cr] {
            prop_assert!(p.turns().windows(2).all(|w| w[0].index < w[1].index));
            for turn in p.turns() {
                prop_assert_eq!(&t.turns()[turn.index - 1], turn);
            }
        }
    }

    #[test]
    fn printer_parser_round_trip(f in gen::arb_any_formula(6)) {
        prop_assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn refinement_keeps_check_ids(
        responders in subsequence(vec![Responder::Fire, Responder::Police, Responder::Medical], 1..=3),
        types in subsequence(sample::library().call_types.values().flatten().cloned().collect::<Vec<_>>(), 0..6),
        criticals in subsequence(sample::library().criticals.clone(), 0..6),
        rule_subset in subsequence((0..sample::library().refinement_rules.len()).collect::<Vec<_>>(), 0..=6),
    ) {
        let library = sample::library();
        let context = ContextResult {
            responders: responders.into_iter().collect(),
            call_types: types.iter().cloned().collect(),
            criticals: criticals.iter().cloned().collect(),
        };
        let form = finalize_form(&context, &library).unwrap();
        for id in ["address", "caller_name", "caller_phone"] {
            prop_assert!(form.check(id).is_some(), "{} missing", id);
        }
        let ids: Vec<String> = form.check_ids().into_iter().map(String::from).collect();
        let rules: Vec<_> = rule_subset
            .iter()
            .map(|&i| library.refinement_rules[i].clone())
            .filter(|r| form.check(&r.target_check).is_some())
            .collect();
        let refined = apply_refinements(&form, &context.call_types, &context.criticals, &rules).unwrap();
        let after: Vec<String> = refined.check_ids().into_iter().map(String::from).collect();
        prop_assert_eq!(after, ids);
        let all_types: BTreeSet<String> = library.call_types.values().flatten().cloned().collect();
        let all_criticals: BTreeSet<String> = library.criticals.iter().cloned().collect();
        let maxed = apply_refinements(&form, &all_types, &all_criticals, &rules).unwrap();
        prop_assert_eq!(maxed.checks.len(), form.checks.len());
    }

    #[test]
    fn address_verification_is_symmetric(
        x in prop_oneof![select(ADDRESS_POOL.to_vec()).prop_map(String::from), "[0-9]{1,3} [A-Z][a-z]{2,6} (St|Street|Ave|Road)"],
        y in select(ADDRESS_POOL.to_vec()),
    ) {
        let o = test_oracle();
        let xy = o.verify_address(&[x.to_string(), y.to_string()]).unwrap();
        let yx = o.verify_address(&[y.to_string(), x.to_string()]).unwrap();
        prop_assert_eq!(xy.value, yx.value);
    }

    #[test]
    fn de_morgan_and_implication(a in gen::arb_formula(4), b in gen::arb_formula(4), t in gen::arb_transcript(20), taus in gen::arb_taus()) {
        let o = test_oracle();
        let v = |f: &Formula| eval(f, &t, &taus, &o).unwrap().value;
        prop_assert_eq!(
            v(&Formula::not(Formula::and(a.clone(), b.clone()))),
            v(&Formula::or(Formula::not(a.clone()), Formula::not(b.clone())))
        );
        prop_assert_eq!(
            v(&Formula::implies(a.clone(), b.clone())),
            v(&Formula::or(Formula::not(a), b))
        );
    }

    #[test]
    fn detection_windows_are_monotone(
        t in gen::arb_transcript(30),
        label in select(vec!["p", "q", "r"]),
        channel in gen::arb_channel(),
        u in 0u32..30,
        grow in 0u32..10,
    ) {
        let o = test_oracle();
        let atom = Formula::atom(AtomKind::Detect, channel, label);
        let within = |k: u32| Formula::eventually(Interval::new(Bound::FromStart(Offset::Turns(0)), Bound::FromStart(Offset::Turns(k))), atom.clone());
        let taus = Default::default();
        if eval(&within(u), &t, &taus, &o).unwrap().value {
            prop_assert!(eval(&within(u + grow), &t, &taus, &o).unwrap().value);
        }
    }

    #[test]
    fn swapping_truth_and_prediction_keeps_f1(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
        let label = |i: usize| CheckLabel { kind: CheckKind::Conditional, outcome: Outcome::ALL[i] };
        let mut preds = BTreeMap::new();
        let mut truths = BTreeMap::new();
        for (n, (p, t)) in pairs.iter().enumerate() {
            preds.insert(format!("c{n}"), FormOutcomes::from([("x".to_string(), label(*p))]));
            truths.insert(format!("c{n}"), FormOutcomes::from([("x".to_string(), label(*t))]));
        }
        let forward = evaluate(&preds, &truths, 3).unwrap();
        let backward = evaluate(&truths, &preds, 3).unwrap();
        for (class, s) in &forward.all.per_class {
            prop_assert!((s.f1 - backward.all.per_class[class].f1).abs() < 1e-12);
        }
        let perfect = evaluate(&truths, &truths, 3).unwrap();
        prop_assert!(perfect.all.per_class.values().all(|s| s.f1 == 1.0));
    }
}

const ADDRESS_POOL: &[&str] = &[
    "",
    "123 Main Street",
    "123 Main St",
    "125 Main Street",
    "850 Pine Avenue",
    "850 Pine Ave unit 4",
    "47 Oak Lane",
    "9 Elm Ct",
    "4 Willow Place",
    "777 Nowhere Road",
];

#[test]
fn rule_backend_is_a_pure_function_of_the_query() {
    let backend = RuleBackend::new(gen::lexicon());
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = (gen::arb_transcript(12), select(vec!["p", "q", "r", "unknown"]), gen::arb_channel());
    for _ in 0..10_000 {
        let (t, label, channel) = strategy.new_tree(&mut runner).unwrap().current();
        let text = t.excerpt(channel, t.full_window()).unwrap().render();
        let query = OracleQuery::atom(PredicateAtom::new(AtomKind::Detect, channel, label), text, t.full_window(), "pure");
        assert_eq!(backend.judge(&query).unwrap(), backend.judge(&query).unwrap());
    }
}

#[test]
fn single_mask_perturbations_never_turn_no_into_yes() {
    let library = sample::library();
    let scenarios = sample::scenarios();
    let oracle = sample::rule_oracle();
    let config = DebriefConfig::default();
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = (0..scenarios.len(), select(vec![50u32, 75, 100]), any::<u64>(), any::<prop::sample::Index>());
    let mut flips_to_no = 0;
    let mut tried = 0;
    while tried < 1000 {
        let (si, alpha, seed, pick) = strategy.new_tree(&mut runner).unwrap().current();
        let scenario = &scenarios[si];
        let call = generate(scenario, alpha, seed).unwrap();
        let kept: Vec<&String> = call.actions.iter().filter(|a| !call.masked.contains(*a)).collect();
        if kept.is_empty() {
            continue;
        }
        let mut masked = call.masked.clone();
        masked.insert(pick.get(&kept).to_string());
        let perturbed = remask(&call, scenario, masked).unwrap();
        let before = debrief(&call.transcript, &library, &oracle, &config).unwrap();
        let after = debrief(&perturbed.transcript, &library, &oracle, &config).unwrap();
        assert_outcome_domain(&before);
        assert_outcome_domain(&after);
        let (b, a) = (outcomes(&before), outcomes(&after));
        assert_eq!(b.keys().collect::<Vec<_>>(), a.keys().collect::<Vec<_>>());
        for (id, was) in &b {
            let now = a[id];
            assert!(!(*was == Outcome::No && now == Outcome::Yes), "{}: {id} went No -> Yes", perturbed.call_id);
            if *was != now {
                flips_to_no += 1;
            }
        }
        tried += 1;
    }
    assert!(flips_to_no > 0, "no perturbation changed any outcome");
}

#[test]
fn cache_is_transparent() {
    let library = sample::library();
    let config = DebriefConfig::default();
    let cached = sample::rule_oracle().with_cache(Arc::new(ResponseCache::in_memory()));
    let plain = sample::rule_oracle();
    for scenario in sample::scenarios() {
        for seed in 0..5u64 {
            let call = generate(&scenario, 75, seed).unwrap();
            let mut a = debrief(&call.transcript, &library, &plain, &config).unwrap();
            let mut b = debrief(&call.transcript, &library, &cached, &config).unwrap();
            // Repeat so the second pass is served entirely from the cache.
            let mut c = debrief(&call.transcript, &library, &cached, &config).unwrap();
            for r in [&mut a, &mut b, &mut c] {
                r.stats.elapsed_ms = 0;
                r.stats.oracle_calls = 0;
            }
            assert_eq!(a.to_json(), b.to_json());
            assert_eq!(a.to_json(), c.to_json());
        }
    }
}

#[test]
fn repeated_debriefs_are_byte_identical() {
    let library = sample::library();
    let oracle = sample::rule_oracle();
    for scenario in sample::scenarios() {
        let call = generate(&scenario, 50, 9).unwrap();
        let run = || {
            let mut r = debrief(&call.transcript, &library, &oracle, &DebriefConfig::default()).unwrap();
            r.stats.elapsed_ms = 0;
            r.to_json()
        };
        assert_eq!(run(), run());
    }
}

#[test]
fn every_form_carries_the_identity_checks() {
    let library = sample::library();
    for t in &library.form_templates {
        let form = Form::from_check_ids(&t.check_ids, &library).unwrap();
        for id in ["address", "caller_name", "caller_phone"] {
            assert!(form.check(id).is_some(), "{:?} lacks {id}", t.responders);
        }
    }
}
