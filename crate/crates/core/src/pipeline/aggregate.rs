use std::fmt;

use serde::Serialize;

use super::{RequirementVerdict, Status};
use crate::speclang::{CheckKind, FormCheck, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, serde::Deserialize)]
pub enum Outcome {
    Yes,
    No,
    Refused,
    #[serde(rename = "NA")]
    Na,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [Outcome::Yes, Outcome::No, Outcome::Refused, Outcome::Na];

    pub fn label(self) -> &'static str {
        match self {
            Outcome::Yes => "Yes",
            Outcome::No => "No",
            Outcome::Refused => "Refused",
            Outcome::Na => "NA",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A role-bound check lacks a monitored verdict for one of its roles.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("check `{check}` has no monitored verdict for role {role}")]
pub struct RoleMissing {
    pub check: String,
    pub role: Role,
}

/// Address outcome from role values r1..r4. No wins over Refused.
pub fn aggregate_address(r: [bool; 4]) -> Outcome {
    let [r1, r2, r3, r4] = r;
    if !r1 || !r3 || !r4 {
        Outcome::No
    } else if !r2 {
        Outcome::Refused
    } else {
        Outcome::Yes
    }
}

/// Caller name or phone outcome from role values r1..r3. No wins over Refused.
pub fn aggregate_identity(r: [bool; 3]) -> Outcome {
    let [r1, r2, r3] = r;
    if !r1 || !r3 {
        Outcome::No
    } else if !r2 {
        Outcome::Refused
    } else {
        Outcome::Yes
    }
}

/// Conditional outcome: NA when nothing was monitored.
pub fn aggregate_conditional(statuses: &[Status]) -> Outcome {
    let monitored: Vec<Status> = statuses.iter().copied().filter(|s| *s != Status::Skipped).collect();
    if monitored.is_empty() {
        Outcome::Na
    } else if monitored.contains(&Status::Fails) {
        Outcome::No
    } else {
        Outcome::Yes
    }
}

fn role_values<const N: usize>(check: &FormCheck, verdicts: &[RequirementVerdict]) -> Result<[bool; N], RoleMissing> {
    let mut out = [false; N];
    for (i, slot) in out.iter_mut().enumerate() {
        let role = Role(i as u8 + 1);
        let missing = || RoleMissing {
            check: check.id.clone(),
            role,
        };
        let id = check.roles.get(&role).ok_or_else(missing)?;
        let v = verdicts.iter().find(|v| &v.requirement == id).ok_or_else(missing)?;
        *slot = match v.status {
            Status::Holds => true,
            Status::Fails => false,
            Status::Skipped => return Err(missing()),
        };
    }
    Ok(out)
}

/// Dispatches on the check kind.
pub fn aggregate_check(check: &FormCheck, verdicts: &[RequirementVerdict]) -> Result<Outcome, RoleMissing> {
    Ok(match check.kind {
        CheckKind::Address => aggregate_address(role_values::<4>(check, verdicts)?),
        CheckKind::CallerName | CheckKind::CallerPhone => aggregate_identity(role_values::<3>(check, verdicts)?),
        CheckKind::Conditional => {
            let statuses: Vec<Status> = verdicts.iter().map(|v| v.status).collect();
            aggregate_conditional(&statuses)
        }
    })
}

fn listing<'a>(verdicts: impl Iterator<Item = &'a RequirementVerdict>) -> String {
    verdicts
        .map(|v| v.description.trim().trim_end_matches('.').to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Template sentence explaining an outcome.
pub fn generate_feedback(outcome: Outcome, verdicts: &[RequirementVerdict]) -> String {
    let head = format!(
        "Your overall evaluation at this check is {}",
        outcome.label().to_uppercase()
    );
    let caller_role = |v: &&RequirementVerdict| v.role == Some(Role(2));
    match outcome {
        Outcome::No => {
            let missed = listing(
                verdicts
                    .iter()
                    .filter(|v| v.status == Status::Fails && !caller_role(v)),
            );
            format!("{head}, because you missed: {missed}.")
        }
        Outcome::Yes => {
            let done = listing(verdicts.iter().filter(|v| v.status == Status::Holds));
            format!("{head}, because you completed: {done}.")
        }
        Outcome::Refused => {
            let refused = listing(verdicts.iter().filter(|v| v.status == Status::Fails && caller_role(v)));
            format!("{head}, because the caller did not provide: {refused}.")
        }
        Outcome::Na => format!("{head}, because it is not applicable: no precondition held."),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn address_table() {
        assert_eq!(aggregate_address([true, true, true, true]), Outcome::Yes);
        assert_eq!(aggregate_address([true, true, false, true]), Outcome::No);
        assert_eq!(aggregate_address([true, false, true, true]), Outcome::Refused);
        assert_eq!(aggregate_address([false, false, true, true]), Outcome::No);
    }

    #[test]
    fn identity_table() {
        assert_eq!(aggregate_identity([true, true, true]), Outcome::Yes);
        assert_eq!(aggregate_identity([true, true, false]), Outcome::No);
        assert_eq!(aggregate_identity([true, false, true]), Outcome::Refused);
    }

    #[test]
    fn conditional_cases() {
        use Status::*;
        assert_eq!(aggregate_conditional(&[Skipped, Skipped]), Outcome::Na);
        assert_eq!(aggregate_conditional(&[]), Outcome::Na);
        assert_eq!(aggregate_conditional(&[Holds, Fails, Holds]), Outcome::No);
        assert_eq!(aggregate_conditional(&[Holds, Skipped, Holds]), Outcome::Yes);
    }

    fn verdict(id: &str, desc: &str, role: Option<u8>, status: Status) -> RequirementVerdict {
        RequirementVerdict {
            requirement: id.into(),
            description: desc.into(),
            role: role.map(Role),
            status,
            evidence: Vec::new(),
            low_confidence: false,
            oracle_calls: 0,
        }
    }

    #[test]
    fn feedback_templates() {
        let vs = vec![
            verdict("a1", "call-taker asked for address early.", Some(1), Status::Holds),
            verdict("a2", "caller provided a valid address", Some(2), Status::Fails),
            verdict("a3", "call-taker verified the obtained address with nearby geo-info", Some(3), Status::Fails),
        ];
        assert_eq!(
            generate_feedback(Outcome::No, &vs),
            "Your overall evaluation at this check is NO, because you missed: call-taker verified the obtained address with nearby geo-info."
        );
        assert_eq!(
            generate_feedback(Outcome::Refused, &vs),
            "Your overall evaluation at this check is REFUSED, because the caller did not provide: caller provided a valid address."
        );
        assert!(generate_feedback(Outcome::Yes, &vs).ends_with("completed: call-taker asked for address early."));
        assert!(generate_feedback(Outcome::Na, &[]).contains("not applicable: no precondition held"));
    }
}
