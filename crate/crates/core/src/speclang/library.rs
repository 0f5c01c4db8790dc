use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{AtomKind, Formula, PredicateAtom};
use super::parser::{is_valid_tau_name, parse_atom, parse_formula};
use super::TauBindings;
use crate::signal::Channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Responder {
    Fire,
    Police,
    Medical,
}

impl Responder {
    pub const ALL: [Responder; 3] = [Responder::Fire, Responder::Police, Responder::Medical];

    pub fn label(self) -> &'static str {
        match self {
            Responder::Fire => "fire",
            Responder::Police => "police",
            Responder::Medical => "medical",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.label() == s)
    }
}

impl fmt::Display for Responder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Address,
    CallerName,
    CallerPhone,
    Conditional,
}

impl CheckKind {
    /// Number of roles the aggregation rule for this kind consumes.
    pub fn role_arity(self) -> usize {
        match self {
            CheckKind::Address => 4,
            CheckKind::CallerName | CheckKind::CallerPhone => 3,
            CheckKind::Conditional => 0,
        }
    }

    pub fn is_unconditional(self) -> bool {
        self != CheckKind::Conditional
    }
}

/// Position of a requirement inside an unconditional check (`r1`..`r4`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Role(pub u8);

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl Role {
    pub fn parse(s: &str) -> Option<Role> {
        let n: u8 = s.strip_prefix('r')?.parse().ok()?;
        (n >= 1).then_some(Role(n))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Applicability {
    #[serde(default)]
    pub call_types: BTreeSet<String>,
    #[serde(default)]
    pub criticals: BTreeSet<String>,
}

impl Applicability {
    pub fn admits(&self, types: &BTreeSet<String>, criticals: &BTreeSet<String>) -> bool {
        self.call_types.iter().any(|t| types.contains(t))
            || self.criticals.iter().any(|c| criticals.contains(c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Requirement {
    pub id: String,
    pub description: String,
    /// SCAN atoms; an empty list means unconditionally applicable.
    pub preconditions: Vec<PredicateAtom>,
    pub formula: Formula,
    pub tau_overrides: TauBindings,
    pub applicability: Option<Applicability>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: String,
    pub name: String,
    pub kind: CheckKind,
    pub requirement_ids: Vec<String>,
    pub roles: BTreeMap<Role, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormTemplate {
    pub responders: BTreeSet<Responder>,
    pub check_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    CallType(String),
    Critical(String),
}

impl Trigger {
    pub fn fires(&self, types: &BTreeSet<String>, criticals: &BTreeSet<String>) -> bool {
        match self {
            Trigger::CallType(t) => types.contains(t),
            Trigger::Critical(c) => criticals.contains(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Edit {
    Replace { from: String, to: Requirement },
    Add(Requirement),
    SetTau {
        requirement: String,
        tau: String,
        value: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementRule {
    pub trigger: Trigger,
    pub target_check: String,
    pub edits: Vec<Edit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequirementLibrary {
    requirements: BTreeMap<String, Requirement>,
    requirement_order: Vec<String>,
    checks: BTreeMap<String, Check>,
    check_order: Vec<String>,
    pub form_templates: Vec<FormTemplate>,
    pub refinement_rules: Vec<RefinementRule>,
    pub call_types: BTreeMap<Responder, Vec<String>>,
    pub criticals: Vec<String>,
    pub tau_defaults: TauBindings,
}

impl RequirementLibrary {
    pub fn requirement(&self, id: &str) -> Option<&Requirement> {
        self.requirements.get(id)
    }

    pub fn requirements(&self) -> impl Iterator<Item = &Requirement> {
        self.requirement_order.iter().map(|id| &self.requirements[id])
    }

    pub fn check(&self, id: &str) -> Option<&Check> {
        self.checks.get(id)
    }

    pub fn checks(&self) -> impl Iterator<Item = &Check> {
        self.check_order.iter().map(|id| &self.checks[id])
    }

    pub fn responders(&self) -> [Responder; 3] {
        Responder::ALL
    }

    /// Call types owned by `responder`, in library order.
    pub fn call_types_for(&self, responder: Responder) -> &[String] {
        self.call_types
            .get(&responder)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn template_for(&self, responders: &BTreeSet<Responder>) -> Option<&FormTemplate> {
        self.form_templates
            .iter()
            .find(|t| &t.responders == responders)
    }

    pub fn to_document(&self) -> serde_json::Value {
        let doc = LibraryDoc {
            labels: LabelsDoc {
                responders: Responder::ALL.iter().map(|r| r.label().to_string()).collect(),
                call_types: self
                    .call_types
                    .iter()
                    .map(|(r, v)| (r.label().to_string(), v.clone()))
                    .collect(),
                criticals: self.criticals.clone(),
            },
            tau_defaults: self.tau_defaults.clone(),
            requirements: self.requirements().map(requirement_doc).collect(),
            checks: self
                .checks()
                .map(|c| CheckDoc {
                    id: c.id.clone(),
                    name: c.name.clone(),
                    kind: c.kind,
                    requirements: c.requirement_ids.clone(),
                    roles: c.roles.iter().map(|(r, id)| (r.to_string(), id.clone())).collect(),
                })
                .collect(),
            form_templates: self
                .form_templates
                .iter()
                .map(|t| TemplateDoc {
                    responders: t.responders.iter().map(|r| r.label().to_string()).collect(),
                    checks: t.check_ids.clone(),
                })
                .collect(),
            refinement_rules: self
                .refinement_rules
                .iter()
                .map(|r| RuleDoc {
                    trigger: r.trigger.clone(),
                    target_check: r.target_check.clone(),
                    edits: r
                        .edits
                        .iter()
                        .map(|e| match e {
                            Edit::Replace { from, to } => EditDoc::Replace {
                                from: from.clone(),
                                to: to.id.clone(),
                            },
                            Edit::Add(req) => EditDoc::Add(req.id.clone()),
                            Edit::SetTau {
                                requirement,
                                tau,
                                value,
                            } => EditDoc::SetTau {
                                requirement: requirement.clone(),
                                tau: tau.clone(),
                                value: *value,
                            },
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_value(doc).expect("library serializes")
    }
}

fn requirement_doc(r: &Requirement) -> RequirementDoc {
    RequirementDoc {
        id: r.id.clone(),
        description: r.description.clone(),
        preconditions: r.preconditions.iter().map(|p| p.to_string()).collect(),
        formula: r.formula.to_string(),
        tau_overrides: r.tau_overrides.clone(),
        applicability: r.applicability.clone(),
    }
}

/// Every problem found while loading a library.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct LibraryError {
    pub violations: Vec<String>,
}

impl fmt::Display for LibraryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "library has {} violation(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

impl LibraryError {
    pub fn single(msg: impl Into<String>) -> Self {
        Self {
            violations: vec![msg.into()],
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryDoc {
    labels: LabelsDoc,
    #[serde(default)]
    tau_defaults: TauBindings,
    requirements: Vec<RequirementDoc>,
    checks: Vec<CheckDoc>,
    form_templates: Vec<TemplateDoc>,
    #[serde(default)]
    refinement_rules: Vec<RuleDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelsDoc {
    responders: Vec<String>,
    call_types: BTreeMap<String, Vec<String>>,
    criticals: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequirementDoc {
    id: String,
    description: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    preconditions: Vec<String>,
    formula: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    tau_overrides: TauBindings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    applicability: Option<Applicability>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckDoc {
    id: String,
    name: String,
    kind: CheckKind,
    requirements: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    roles: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateDoc {
    responders: Vec<String>,
    checks: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    trigger: Trigger,
    target_check: String,
    edits: Vec<EditDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum EditDoc {
    Replace {
        from: String,
        to: String,
    },
    Add(String),
    SetTau {
        requirement: String,
        tau: String,
        value: u32,
    },
}

/// Parses and cross-validates a library document (JSON).
pub fn parse_library(source: &str) -> Result<RequirementLibrary, LibraryError> {
    let doc: LibraryDoc = serde_json::from_str(source)
        .map_err(|e| LibraryError::single(format!("library document: {e}")))?;
    build(doc)
}

fn build(doc: LibraryDoc) -> Result<RequirementLibrary, LibraryError> {
    let mut v: Vec<String> = Vec::new();

    // labels
    let mut seen_responders = BTreeSet::new();
    for label in &doc.labels.responders {
        match Responder::from_label(label) {
            Some(r) => {
                if !seen_responders.insert(r) {
                    v.push(format!("responder label `{label}` listed twice"));
                }
            }
            None => v.push(format!("unknown responder label `{label}`")),
        }
    }
    if seen_responders.len() != 3 {
        v.push("labels.responders must list exactly fire, police and medical".into());
    }
    let mut call_types: BTreeMap<Responder, Vec<String>> = BTreeMap::new();
    let mut type_owner: BTreeMap<String, Responder> = BTreeMap::new();
    for (owner, types) in &doc.labels.call_types {
        let Some(r) = Responder::from_label(owner) else {
            v.push(format!("call types listed under unknown responder `{owner}`"));
            continue;
        };
        for t in types {
            if t.trim().is_empty() {
                v.push(format!("empty call type label under `{owner}`"));
            }
            if let Some(prev) = type_owner.insert(t.clone(), r) {
                v.push(format!("call type `{t}` owned by both {prev} and {r}"));
            }
        }
        call_types.insert(r, types.clone());
    }
    let criticals = doc.labels.criticals.clone();
    let distinct: BTreeSet<_> = criticals.iter().collect();
    if criticals.len() != 6 || distinct.len() != 6 {
        v.push(format!(
            "labels.criticals must hold exactly 6 distinct labels, found {}",
            distinct.len()
        ));
    }
    for name in doc.tau_defaults.keys() {
        if !is_valid_tau_name(name) {
            v.push(format!("invalid τ name `{name}` in tau_defaults"));
        }
    }
    let critical_set: BTreeSet<String> = criticals.iter().cloned().collect();

    // requirements
    let mut requirements = BTreeMap::new();
    let mut requirement_order = Vec::new();
    for rd in &doc.requirements {
        if requirements.contains_key(&rd.id) {
            v.push(format!("duplicate requirement id `{}`", rd.id));
            continue;
        }
        match build_requirement(rd, &doc.tau_defaults, &type_owner, &critical_set) {
            Ok(r) => {
                requirement_order.push(r.id.clone());
                requirements.insert(r.id.clone(), r);
            }
            Err(errs) => v.extend(errs),
        }
    }
    let known_requirement = |id: &str| doc.requirements.iter().any(|r| r.id == id);

    // checks
    let mut checks = BTreeMap::new();
    let mut check_order = Vec::new();
    for cd in &doc.checks {
        if checks.contains_key(&cd.id) {
            v.push(format!("duplicate check id `{}`", cd.id));
            continue;
        }
        for rid in &cd.requirements {
            if !known_requirement(rid) {
                v.push(format!("check `{}` references undefined requirement `{rid}`", cd.id));
            }
        }
        let arity = cd.kind.role_arity();
        let mut roles = BTreeMap::new();
        for (key, rid) in &cd.roles {
            match Role::parse(key) {
                Some(role) if (role.0 as usize) <= arity => {
                    if !cd.requirements.contains(rid) {
                        v.push(format!(
                            "check `{}` binds role {key} to `{rid}`, which is not among its requirements",
                            cd.id
                        ));
                    }
                    if let Some(r) = requirements.get(rid) {
                        if !r.preconditions.is_empty() || r.applicability.is_some() {
                            v.push(format!(
                                "requirement `{rid}` bound to role {key} of `{}` must be unconditional",
                                cd.id
                            ));
                        }
                    }
                    roles.insert(role, rid.clone());
                }
                _ => v.push(format!(
                    "check `{}` ({:?}) has invalid role `{key}`",
                    cd.id, cd.kind
                )),
            }
        }
        if cd.kind.is_unconditional() {
            if cd.roles.len() != arity {
                v.push(format!(
                    "check `{}` ({:?}) must bind exactly {arity} roles, binds {}",
                    cd.id,
                    cd.kind,
                    cd.roles.len()
                ));
            }
        } else if cd.requirements.is_empty() {
            v.push(format!("conditional check `{}` has no requirements", cd.id));
        }
        check_order.push(cd.id.clone());
        checks.insert(
            cd.id.clone(),
            Check {
                id: cd.id.clone(),
                name: cd.name.clone(),
                kind: cd.kind,
                requirement_ids: cd.requirements.clone(),
                roles,
            },
        );
    }

    // templates
    let mut form_templates = Vec::new();
    let mut template_keys = BTreeSet::new();
    for (n, td) in doc.form_templates.iter().enumerate() {
        let mut responders = BTreeSet::new();
        for label in &td.responders {
            match Responder::from_label(label) {
                Some(r) => {
                    responders.insert(r);
                }
                None => v.push(format!("form template #{n} names unknown responder `{label}`")),
            }
        }
        if responders.is_empty() {
            v.push(format!("form template #{n} has an empty responder key"));
        }
        if !template_keys.insert(responders.clone()) {
            v.push(format!("form template #{n} duplicates responder key {responders:?}"));
        }
        let mut kinds = BTreeSet::new();
        for cid in &td.checks {
            match checks.get(cid) {
                Some(c) => {
                    kinds.insert(c.kind);
                }
                None => v.push(format!("form template #{n} references undefined check `{cid}`")),
            }
        }
        for kind in [CheckKind::Address, CheckKind::CallerName, CheckKind::CallerPhone] {
            if !kinds.contains(&kind) {
                v.push(format!("form template #{n} lacks the unconditional {kind:?} check"));
            }
        }
        form_templates.push(FormTemplate {
            responders,
            check_ids: td.checks.clone(),
        });
    }

    // refinement rules
    let mut refinement_rules = Vec::new();
    for (n, rd) in doc.refinement_rules.iter().enumerate() {
        match &rd.trigger {
            Trigger::CallType(t) if !type_owner.contains_key(t) => {
                v.push(format!("refinement rule #{n} triggers on unknown call type `{t}`"))
            }
            Trigger::Critical(c) if !critical_set.contains(c) => {
                v.push(format!("refinement rule #{n} triggers on unknown critical `{c}`"))
            }
            _ => {}
        }
        let target = checks.get(&rd.target_check);
        if target.is_none() {
            v.push(format!(
                "refinement rule #{n} targets undefined check `{}`",
                rd.target_check
            ));
        }
        let mut edits = Vec::new();
        for ed in &rd.edits {
            match ed {
                EditDoc::Replace { from, to } => {
                    if !known_requirement(from) {
                        v.push(format!("refinement rule #{n} replaces undefined requirement `{from}`"));
                    }
                    match requirements.get(to) {
                        Some(req) => {
                            let bound_to_role = target
                                .map(|c| c.roles.values().any(|id| id == from))
                                .unwrap_or(false);
                            if bound_to_role
                                && (!req.preconditions.is_empty() || req.applicability.is_some())
                            {
                                v.push(format!(
                                    "refinement rule #{n} puts conditional requirement `{to}` into a role"
                                ));
                            }
                            edits.push(Edit::Replace {
                                from: from.clone(),
                                to: req.clone(),
                            });
                        }
                        None => v.push(format!(
                            "refinement rule #{n} replaces with undefined requirement `{to}`"
                        )),
                    }
                }
                EditDoc::Add(id) => {
                    if let Some(c) = target {
                        if c.kind != CheckKind::Conditional {
                            v.push(format!(
                                "refinement rule #{n} adds a requirement to unconditional check `{}`",
                                c.id
                            ));
                        }
                    }
                    match requirements.get(id) {
                        Some(req) => edits.push(Edit::Add(req.clone())),
                        None => v.push(format!("refinement rule #{n} adds undefined requirement `{id}`")),
                    }
                }
                EditDoc::SetTau {
                    requirement,
                    tau,
                    value,
                } => {
                    if !known_requirement(requirement) {
                        v.push(format!(
                            "refinement rule #{n} sets τ on undefined requirement `{requirement}`"
                        ));
                    }
                    if !is_valid_tau_name(tau) {
                        v.push(format!("refinement rule #{n} sets invalid τ name `{tau}`"));
                    }
                    edits.push(Edit::SetTau {
                        requirement: requirement.clone(),
                        tau: tau.clone(),
                        value: *value,
                    });
                }
            }
        }
        refinement_rules.push(RefinementRule {
            trigger: rd.trigger.clone(),
            target_check: rd.target_check.clone(),
            edits,
        });
    }

    if !v.is_empty() {
        return Err(LibraryError { violations: v });
    }
    Ok(RequirementLibrary {
        requirements,
        requirement_order,
        checks,
        check_order,
        form_templates,
        refinement_rules,
        call_types,
        criticals,
        tau_defaults: doc.tau_defaults,
    })
}

fn build_requirement(
    rd: &RequirementDoc,
    tau_defaults: &TauBindings,
    type_owner: &BTreeMap<String, Responder>,
    criticals: &BTreeSet<String>,
) -> Result<Requirement, Vec<String>> {
    let mut v = Vec::new();
    let id = &rd.id;
    if id.trim().is_empty() {
        v.push("requirement with empty id".to_string());
    }
    let formula = match parse_formula(&rd.formula) {
        Ok(f) => Some(f),
        Err(e) => {
            v.push(format!("requirement `{id}` formula: {e}"));
            None
        }
    };
    let mut preconditions = Vec::new();
    for text in &rd.preconditions {
        match parse_atom(text) {
            Ok(atom) if atom.kind == AtomKind::Scan => preconditions.push(atom),
            Ok(atom) => v.push(format!(
                "requirement `{id}` precondition must be a SCAN atom, found {}",
                atom.kind.keyword()
            )),
            Err(e) => v.push(format!("requirement `{id}` precondition: {e}")),
        }
    }
    for name in rd.tau_overrides.keys() {
        if !is_valid_tau_name(name) {
            v.push(format!("requirement `{id}` overrides invalid τ name `{name}`"));
        }
    }
    if let Some(f) = &formula {
        for tau in f.tau_names() {
            if !rd.tau_overrides.contains_key(&tau) && !tau_defaults.contains_key(&tau) {
                v.push(format!("requirement `{id}` uses τ `{tau}` with no value"));
            }
        }
        check_atoms(id, f, &mut v);
    }
    for atom in &preconditions {
        if atom.query.trim().is_empty() {
            v.push(format!("requirement `{id}` has an empty precondition query"));
        }
    }
    if let Some(app) = &rd.applicability {
        for t in &app.call_types {
            if !type_owner.contains_key(t) {
                v.push(format!("requirement `{id}` applicability names unknown call type `{t}`"));
            }
        }
        for c in &app.criticals {
            if !criticals.contains(c) {
                v.push(format!("requirement `{id}` applicability names unknown critical `{c}`"));
            }
        }
    }
    match (v.is_empty(), formula) {
        (true, Some(formula)) => Ok(Requirement {
            id: id.clone(),
            description: rd.description.clone(),
            preconditions,
            formula,
            tau_overrides: rd.tau_overrides.clone(),
            applicability: rd.applicability.clone(),
        }),
        _ => Err(v),
    }
}

fn check_atoms(id: &str, f: &Formula, v: &mut Vec<String>) {
    for atom in f.atoms() {
        if atom.query.trim().is_empty() {
            v.push(format!("requirement `{id}` has an atom with an empty query"));
        }
        if matches!(atom.kind, AtomKind::Scene | AtomKind::Type | AtomKind::Critical)
            && atom.channel != Channel::Both
        {
            v.push(format!(
                "requirement `{id}`: {} atoms must observe channel AB",
                atom.kind.keyword()
            ));
        }
    }
    let mut stack = vec![f];
    while let Some(node) = stack.pop() {
        match node {
            Formula::AddrValid(refs) => {
                if refs.iter().any(|r| r.question.trim().is_empty()) {
                    v.push(format!("requirement `{id}` has an ANSWER with an empty question"));
                }
            }
            Formula::Atom(_) => {}
            Formula::Not(x) | Formula::Eventually(_, x) | Formula::Always(_, x) => stack.push(x),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                stack.push(a);
                stack.push(b);
            }
        }
    }
}
