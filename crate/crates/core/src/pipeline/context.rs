use std::collections::BTreeSet;

use serde::Serialize;

use super::{PipelineError, Tally};
use crate::monitor::eval;
use crate::oracle::Oracle;
use crate::signal::{Channel, Transcript};
use crate::speclang::{
    apply_refinements, AtomKind, Form, Formula, RefinementRule, RequirementLibrary, Responder,
    TauBindings,
};

/// What the call is about: responders, call types and critical flags.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ContextResult {
    pub responders: BTreeSet<Responder>,
    #[serde(rename = "types")]
    pub call_types: BTreeSet<String>,
    pub criticals: BTreeSet<String>,
}

fn ask(
    kind: AtomKind,
    label: &str,
    transcript: &Transcript,
    oracle: &Oracle,
    tally: &mut Tally,
) -> Result<bool, PipelineError> {
    let f = Formula::atom(kind, Channel::Both, label);
    let v = eval(&f, transcript, &TauBindings::new(), oracle)?;
    tally.absorb(&v, None, None);
    Ok(v.value)
}

/// Responders whose scene query holds; empty is an error.
pub fn detect_responders(
    transcript: &Transcript,
    oracle: &Oracle,
    tally: &mut Tally,
) -> Result<BTreeSet<Responder>, PipelineError> {
    let mut out = BTreeSet::new();
    for r in Responder::ALL {
        if ask(AtomKind::Scene, r.label(), transcript, oracle, tally)? {
            out.insert(r);
        }
    }
    if out.is_empty() {
        return Err(PipelineError::EmptyContext);
    }
    Ok(out)
}

/// Call types owned by the detected responders whose type query holds.
pub fn classify_types(
    transcript: &Transcript,
    responders: &BTreeSet<Responder>,
    library: &RequirementLibrary,
    oracle: &Oracle,
    tally: &mut Tally,
) -> Result<BTreeSet<String>, PipelineError> {
    let mut out = BTreeSet::new();
    for &r in responders {
        for t in library.call_types_for(r) {
            if ask(AtomKind::Type, t, transcript, oracle, tally)? {
                out.insert(t.clone());
            }
        }
    }
    Ok(out)
}

/// Every critical label whose query holds; all six are asked.
pub fn flag_criticals(
    transcript: &Transcript,
    library: &RequirementLibrary,
    oracle: &Oracle,
    tally: &mut Tally,
) -> Result<BTreeSet<String>, PipelineError> {
    let mut out = BTreeSet::new();
    for c in &library.criticals {
        if ask(AtomKind::Critical, c, transcript, oracle, tally)? {
            out.insert(c.clone());
        }
    }
    Ok(out)
}

/// Builds the form for the detected context: the template keyed by the
/// responder set, or else the union of single-responder templates in the
/// order fire, police, medical; then applies every triggered refinement
/// whose target check is on the form.
pub fn finalize_form(context: &ContextResult, library: &RequirementLibrary) -> Result<Form, PipelineError> {
    let ids: Vec<String> = match library.template_for(&context.responders) {
        Some(t) => t.check_ids.clone(),
        None => {
            let mut ids = Vec::new();
            for &r in &context.responders {
                let t = library.template_for(&BTreeSet::from([r])).ok_or_else(|| {
                    PipelineError::Library(format!(
                        "no form template covers responders {:?} and `{r}` has no template of its own",
                        context.responders
                    ))
                })?;
                for id in &t.check_ids {
                    if !ids.contains(id) {
                        ids.push(id.clone());
                    }
                }
            }
            ids
        }
    };
    let form = Form::from_check_ids(&ids, library).map_err(|e| PipelineError::Library(e.to_string()))?;
    let rules: Vec<RefinementRule> = library
        .refinement_rules
        .iter()
        .filter(|r| form.check(&r.target_check).is_some())
        .cloned()
        .collect();
    apply_refinements(&form, &context.call_types, &context.criticals, &rules)
        .map_err(|e| PipelineError::Library(e.to_string()))
}
