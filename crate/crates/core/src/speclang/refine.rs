use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::library::{Check, CheckKind, Edit, RefinementRule, Requirement, RequirementLibrary, Role};
use super::TauBindings;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefinementError {
    #[error("refinement targets check `{0}`, which is not on this form")]
    CheckAbsent(String),
    #[error("check `{0}` is not defined in the library")]
    UnknownCheck(String),
    #[error("requirement `{0}` is not defined in the library")]
    UnknownRequirement(String),
}

/// A check instantiated on a concrete form, carrying its own requirement copies.
#[derive(Debug, Clone, PartialEq)]
pub struct FormCheck {
    pub id: String,
    pub name: String,
    pub kind: CheckKind,
    pub requirements: Vec<Requirement>,
    pub roles: BTreeMap<Role, String>,
}

impl FormCheck {
    pub fn instantiate(check: &Check, library: &RequirementLibrary) -> Result<Self, RefinementError> {
        let requirements = check
            .requirement_ids
            .iter()
            .map(|id| {
                library
                    .requirement(id)
                    .cloned()
                    .ok_or_else(|| RefinementError::UnknownRequirement(id.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            id: check.id.clone(),
            name: check.name.clone(),
            kind: check.kind,
            requirements,
            roles: check.roles.clone(),
        })
    }

    pub fn requirement(&self, id: &str) -> Option<&Requirement> {
        self.requirements.iter().find(|r| r.id == id)
    }

    /// Requirement bound to `role`, if any.
    pub fn role(&self, role: Role) -> Option<&Requirement> {
        self.roles.get(&role).and_then(|id| self.requirement(id))
    }

    fn apply(&mut self, edit: &Edit) {
        match edit {
            Edit::Replace { from, to } => {
                let Some(pos) = self.requirements.iter().position(|r| &r.id == from) else {
                    return;
                };
                if to.id != *from && self.requirement(&to.id).is_some() {
                    self.requirements.remove(pos);
                } else {
                    self.requirements[pos] = to.clone();
                }
                for bound in self.roles.values_mut() {
                    if bound == from {
                        *bound = to.id.clone();
                    }
                }
            }
            Edit::Add(req) => {
                if self.requirement(&req.id).is_none() {
                    self.requirements.push(req.clone());
                }
            }
            Edit::SetTau {
                requirement,
                tau,
                value,
            } => {
                if let Some(r) = self.requirements.iter_mut().find(|r| &r.id == requirement) {
                    r.tau_overrides.insert(tau.clone(), *value);
                }
            }
        }
    }
}

/// An instantiated quality-assurance form: ordered checks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Form {
    pub checks: Vec<FormCheck>,
}

impl Form {
    pub fn from_check_ids<'a>(
        ids: impl IntoIterator<Item = &'a String>,
        library: &RequirementLibrary,
    ) -> Result<Self, RefinementError> {
        let mut seen = BTreeSet::new();
        let mut checks = Vec::new();
        for id in ids {
            if !seen.insert(id.clone()) {
                continue;
            }
            let check = library
                .check(id)
                .ok_or_else(|| RefinementError::UnknownCheck(id.clone()))?;
            checks.push(FormCheck::instantiate(check, library)?);
        }
        Ok(Self { checks })
    }

    pub fn check(&self, id: &str) -> Option<&FormCheck> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn check_ids(&self) -> Vec<&str> {
        self.checks.iter().map(|c| c.id.as_str()).collect()
    }

    /// Effective τ bindings of a requirement: `base` overlaid with its overrides.
    pub fn taus_for(base: &TauBindings, requirement: &Requirement) -> TauBindings {
        let mut out = base.clone();
        out.extend(requirement.tau_overrides.iter().map(|(k, v)| (k.clone(), *v)));
        out
    }
}

/// Applies every rule triggered by `types` or `criticals`, in the order given.
/// The set and order of checks never change.
pub fn apply_refinements(
    form: &Form,
    types: &BTreeSet<String>,
    criticals: &BTreeSet<String>,
    rules: &[RefinementRule],
) -> Result<Form, RefinementError> {
    let mut out = form.clone();
    for rule in rules.iter().filter(|r| r.trigger.fires(types, criticals)) {
        let check = out
            .checks
            .iter_mut()
            .find(|c| c.id == rule.target_check)
            .ok_or_else(|| RefinementError::CheckAbsent(rule.target_check.clone()))?;
        for edit in &rule.edits {
            check.apply(edit);
        }
    }
    Ok(out)
}
