//! Requirement specification language: formulas, intervals, the requirement
//! library and form refinement.

mod ast;
mod library;
mod parser;
mod refine;

use std::collections::BTreeMap;

use thiserror::Error;

pub use ast::{AnswerRef, AtomKind, Bound, Formula, Interval, Offset, PredicateAtom};
pub use library::{
    parse_library, Applicability, Check, CheckKind, Edit, FormTemplate, LibraryError,
    RefinementRule, Requirement, RequirementLibrary, Responder, Role, Trigger,
};
pub use parser::{is_valid_tau_name, parse_atom, parse_formula, ParseError};
pub use refine::{apply_refinements, Form, FormCheck, RefinementError};

use crate::signal::Window;

/// τ parameter values in turns.
pub type TauBindings = BTreeMap<String, u32>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("τ parameter `{0}` has no value")]
pub struct UnboundTau(pub String);

/// Result of materializing an interval against a concrete window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolved {
    Window(Window),
    /// Bounds crossed after clamping; `Eventually` is false and `Always`
    /// vacuously true over it.
    Empty,
}

fn offset_value(offset: &Offset, taus: &TauBindings) -> Result<usize, UnboundTau> {
    match offset {
        Offset::Turns(n) => Ok(*n as usize),
        Offset::Tau(name) => taus
            .get(name)
            .map(|v| *v as usize)
            .ok_or_else(|| UnboundTau(name.clone())),
    }
}

/// Resolves `interval` relative to `context`: start offsets count forward from
/// `context.lo`, end offsets count back from `context.hi`, both clamped into
/// the context.
pub fn resolve_within(
    interval: &Interval,
    context: Window,
    taus: &TauBindings,
) -> Result<Resolved, UnboundTau> {
    let point = |b: &Bound| -> Result<usize, UnboundTau> {
        Ok(match b {
            Bound::FromStart(o) => (context.lo + offset_value(o, taus)?).min(context.hi),
            Bound::FromEnd(o) => context.hi.saturating_sub(offset_value(o, taus)?).max(context.lo),
        })
    };
    let lo = point(&interval.lo)?;
    let hi = point(&interval.hi)?;
    Ok(if lo > hi {
        Resolved::Empty
    } else {
        Resolved::Window(Window::new(lo, hi))
    })
}

/// Resolves `interval` against a whole call of `horizon` turns.
pub fn resolve_interval(
    interval: &Interval,
    horizon: usize,
    taus: &TauBindings,
) -> Result<Resolved, UnboundTau> {
    resolve_within(interval, Window::new(1, horizon.max(1)), taus)
}
