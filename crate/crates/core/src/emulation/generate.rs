use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{EmulationError, FormOutcomes, IdentityField, Scenario};
use crate::pipeline::{aggregate_address, aggregate_conditional, aggregate_identity, finalize_form, ContextResult, Status};
use crate::signal::{Speaker, Transcript};
use crate::speclang::{CheckKind, RequirementLibrary, Role};

/// Spoken address and a nearby landmark. Every address resolves in the
/// shipped gazetteer.
const ADDRESSES: &[(&str, &str)] = &[
    ("47 Oak Lane apartment 2C", "the pharmacy"),
    ("123 Main Street", "the post office"),
    ("850 Pine Avenue unit 5", "the high school"),
    ("16 Harbor Road", "the marina"),
    ("2200 Lincoln Boulevard suite 310", "the gas station"),
    ("9 Elm Court", "the park"),
    ("310 Cedar Drive apartment 12", "the library"),
    ("501 River Parkway", "the bridge"),
    ("74 Maple Way", "the church"),
    ("4 Willow Place", "the bakery"),
];

const NAMES: &[&str] = &[
    "Maria Lopez",
    "James Carter",
    "Aisha Khan",
    "Daniel Kim",
    "Elena Petrova",
    "Marcus Reed",
    "Priya Shah",
    "Tom Nguyen",
];

const FILLERS: [(&str, &str); 3] = [
    ("Stay on the line with me.", "Okay."),
    ("Help is on the way.", "Thank you."),
    ("Is there anything else I should know?", "No, that's everything."),
];

pub fn persona_addresses() -> impl Iterator<Item = &'static str> {
    ADDRESSES.iter().map(|(a, _)| *a)
}

/// Mask key of a role-bound action, e.g. `address.r3`.
pub fn role_action(kind: CheckKind, role: u8) -> String {
    let k = match kind {
        CheckKind::Address => "address",
        CheckKind::CallerName => "caller_name",
        CheckKind::CallerPhone => "caller_phone",
        CheckKind::Conditional => "conditional",
    };
    format!("{k}.r{role}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Persona {
    pub address: String,
    pub landmark: String,
    pub name: String,
    pub phone: String,
}

/// One scripted exchange; `action` is its mask key when maskable.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Exchange {
    action: Option<String>,
    call_taker: String,
    caller: String,
}

impl Exchange {
    fn fixed(a: impl Into<String>, b: impl Into<String>) -> Self {
        Self { action: None, call_taker: a.into(), caller: b.into() }
    }

    fn action(key: impl Into<String>, a: impl Into<String>, b: impl Into<String>) -> Self {
        Self { action: Some(key.into()), call_taker: a.into(), caller: b.into() }
    }
}

/// A scripted call at proficiency `alpha` with its mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedCall {
    pub call_id: String,
    pub scenario: String,
    pub alpha: u32,
    pub seed: u64,
    pub persona: Persona,
    pub refused: BTreeSet<IdentityField>,
    /// Every maskable action of the script, in script order.
    pub actions: Vec<String>,
    pub masked: BTreeSet<String>,
    pub transcript: Transcript,
}

impl MaskedCall {
    pub fn retained(&self, action: &str) -> bool {
        self.actions.iter().any(|a| a == action) && !self.masked.contains(action)
    }
}

fn script(scenario: &Scenario, p: &Persona, refused: &BTreeSet<IdentityField>) -> Vec<Exchange> {
    let addr_refused = refused.contains(&IdentityField::Address);
    let name_refused = refused.contains(&IdentityField::Name);
    let phone_refused = refused.contains(&IdentityField::Phone);
    let mut s = vec![
        Exchange::fixed("911, what is your emergency?", scenario.opening.as_str()),
        Exchange::action(
            role_action(CheckKind::Address, 1),
            "What is the address of your emergency?",
            "Just a second.",
        ),
        if addr_refused {
            Exchange::fixed("Go ahead.", "I'm not telling you where I am.")
        } else {
            Exchange::fixed("Go ahead.", format!("I'm at {}.", p.address))
        },
    ];
    if !addr_refused {
        s.push(Exchange::action(
            role_action(CheckKind::Address, 3),
            format!("Let me double check the address, {}, near {}?", p.address, p.landmark),
            "Yes, that's right.",
        ));
    }
    for step in &scenario.steps {
        s.push(Exchange::action(&step.requirement, &step.call_taker, &step.caller));
    }
    s.push(Exchange::action(
        role_action(CheckKind::CallerName, 1),
        "Can I get your first and last name?",
        if name_refused { "I'd rather not give my name.".to_string() } else { format!("My name is {}.", p.name) },
    ));
    if !name_refused {
        s.push(Exchange::action(
            role_action(CheckKind::CallerName, 3),
            format!("Let me repeat your name: {}.", p.name),
            "Correct.",
        ));
    }
    s.push(Exchange::action(
        role_action(CheckKind::CallerPhone, 1),
        "What is a good callback number?",
        if phone_refused { "I don't want to give my number.".to_string() } else { format!("My number is {}.", p.phone) },
    ));
    if !phone_refused {
        s.push(Exchange::action(
            role_action(CheckKind::CallerPhone, 3),
            format!("Let me read back your number: {}.", p.phone),
            "Yes.",
        ));
    }
    s.extend(FILLERS.iter().map(|(a, b)| Exchange::fixed(*a, *b)));
    s.push(Exchange::action(
        role_action(CheckKind::Address, 4),
        if addr_refused {
            "Before we disconnect, let me double check the address. Can you tell me where you are now?".to_string()
        } else {
            format!("Before we disconnect, let me double check the address: {}.", p.address)
        },
        "Yes.",
    ));
    s
}

/// Number of actions kept at proficiency `alpha` out of `n`.
pub fn retained_count(alpha: u32, n: usize) -> usize {
    ((alpha as f64 / 100.0) * n as f64).round() as usize
}

/// Builds the call for `(scenario, alpha, seed)`. Masked actions drop their
/// whole exchange; the same inputs always give the same call.
pub fn generate(scenario: &Scenario, alpha: u32, seed: u64) -> Result<MaskedCall, EmulationError> {
    if alpha == 0 || alpha > 100 {
        return Err(EmulationError::Alpha(alpha));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (address, landmark) = ADDRESSES[rng.gen_range(0..ADDRESSES.len())];
    let name = NAMES[rng.gen_range(0..NAMES.len())];
    let phone = format!("555-{:03}-{:04}", rng.gen_range(200..1000), rng.gen_range(0..10000));
    let persona = Persona {
        address: address.into(),
        landmark: landmark.into(),
        name: name.into(),
        phone,
    };
    let mut refused = BTreeSet::new();
    for field in IdentityField::ALL {
        let draw: f64 = rng.gen();
        if scenario.refusable.contains(&field) && draw < scenario.refusal_rate {
            refused.insert(field);
        }
    }

    let exchanges = script(scenario, &persona, &refused);
    let actions: Vec<String> = exchanges.iter().filter_map(|e| e.action.clone()).collect();
    let mut order = actions.clone();
    order.shuffle(&mut rng);
    let masked: BTreeSet<String> = order.split_off(retained_count(alpha, actions.len())).into_iter().collect();

    let call_id = format!("{}-a{}-{:016x}", scenario.name, alpha, seed);
    let transcript = render(&call_id, &exchanges, &masked)?;
    Ok(MaskedCall {
        call_id,
        scenario: scenario.name.clone(),
        alpha,
        seed,
        persona,
        refused,
        actions,
        masked,
        transcript,
    })
}

fn render(call_id: &str, exchanges: &[Exchange], masked: &BTreeSet<String>) -> Result<Transcript, EmulationError> {
    let utterances = exchanges
        .iter()
        .filter(|e| e.action.as_ref().is_none_or(|a| !masked.contains(a)))
        .flat_map(|e| [(Speaker::CallTaker, e.call_taker.clone()), (Speaker::Caller, e.caller.clone())]);
    Ok(Transcript::from_utterances(call_id, utterances)?)
}

/// The same call with a different mask; persona and refusals are kept.
/// Keys that are not actions of the script are ignored.
pub fn remask(call: &MaskedCall, scenario: &Scenario, masked: BTreeSet<String>) -> Result<MaskedCall, EmulationError> {
    if call.scenario != scenario.name {
        return Err(EmulationError::UnknownScenario(scenario.name.clone()));
    }
    let exchanges = script(scenario, &call.persona, &call.refused);
    let masked: BTreeSet<String> = masked.into_iter().filter(|a| call.actions.contains(a)).collect();
    let transcript = render(&call.call_id, &exchanges, &masked)?;
    Ok(MaskedCall { masked, transcript, ..call.clone() })
}

/// The outcome every check of the scenario's form should receive, computed
/// from the mask alone.
pub fn derive_ground_truth(
    call: &MaskedCall,
    scenario: &Scenario,
    library: &RequirementLibrary,
) -> Result<FormOutcomes, EmulationError> {
    let context = ContextResult {
        responders: scenario.responders.clone(),
        call_types: scenario.call_types.clone(),
        criticals: scenario.criticals.clone(),
    };
    let form = finalize_form(&context, library).map_err(|e| EmulationError::Library(e.to_string()))?;
    let mut out = BTreeMap::new();
    for check in &form.checks {
        for role in 1..=check.kind.role_arity() as u8 {
            if !check.roles.contains_key(&Role(role)) {
                return Err(EmulationError::Library(format!("check `{}` lacks role r{role}", check.id)));
            }
        }
        let kept = |role: u8| call.retained(&role_action(check.kind, role));
        let outcome = match check.kind {
            CheckKind::Address => {
                let refused = call.refused.contains(&IdentityField::Address);
                aggregate_address([kept(1), !refused, refused || kept(3), kept(4)])
            }
            CheckKind::CallerName | CheckKind::CallerPhone => {
                let field = if check.kind == CheckKind::CallerName { IdentityField::Name } else { IdentityField::Phone };
                let provided = kept(1) && !call.refused.contains(&field);
                aggregate_identity([kept(1), provided, !provided || kept(3)])
            }
            CheckKind::Conditional => {
                let statuses: Vec<Status> = check
                    .requirements
                    .iter()
                    .map(|r| {
                        let applicable = r.applicability.as_ref().is_none_or(|a| a.admits(&context.call_types, &context.criticals));
                        let gated = r.preconditions.iter().all(|p| scenario.facts.contains(&p.query));
                        if !(applicable && gated) {
                            Status::Skipped
                        } else if call.retained(&r.id) {
                            Status::Holds
                        } else {
                            Status::Fails
                        }
                    })
                    .collect();
                aggregate_conditional(&statuses)
            }
        };
        out.insert(check.id.clone(), super::CheckLabel { kind: check.kind, outcome });
    }
    Ok(out)
}
