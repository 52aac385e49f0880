//! Reference monitor for the three MLS constraints:
//!
//! ```text
//! mlsconstrain file {getattr read ioctl lock execute execute_no_trans} (l1 dom l2);
//! mlsconstrain file {append write} (l1 domby l2);
//! mlsconstrain process {transition} (l1 dom l2);
//! ```
//!
//! `l1` is the subject (process) level and `l2` the object level.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::SecurityLevel;
use crate::levelgen::LevelAssignment;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MlsError {
    #[error("operation `{op}` is not defined for class `{class}`")]
    ClassMismatch { class: AccessClass, op: Operation },
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("unknown access class `{0}`")]
    UnknownClass(String),
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessClass {
    File,
    Process,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileOperation {
    Getattr,
    Read,
    Ioctl,
    Lock,
    Execute,
    ExecuteNoTrans,
    Append,
    Write,
}

impl FileOperation {
    pub const ALL: [FileOperation; 8] = [
        Self::Getattr,
        Self::Read,
        Self::Ioctl,
        Self::Lock,
        Self::Execute,
        Self::ExecuteNoTrans,
        Self::Append,
        Self::Write,
    ];

    pub fn is_write(self) -> bool {
        matches!(self, Self::Append | Self::Write)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Getattr => "getattr",
            Self::Read => "read",
            Self::Ioctl => "ioctl",
            Self::Lock => "lock",
            Self::Execute => "execute",
            Self::ExecuteNoTrans => "execute_no_trans",
            Self::Append => "append",
            Self::Write => "write",
        }
    }
}

/// A file operation or a process domain transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    File(FileOperation),
    Transition,
}

impl Operation {
    /// Every operation the monitor knows, file operations first.
    pub fn all() -> impl Iterator<Item = Operation> {
        FileOperation::ALL
            .into_iter()
            .map(Operation::File)
            .chain(std::iter::once(Operation::Transition))
    }

    /// The class the operation belongs to.
    pub fn class(self) -> AccessClass {
        match self {
            Operation::File(_) => AccessClass::File,
            Operation::Transition => AccessClass::Process,
        }
    }
}

impl fmt::Display for AccessClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessClass::File => "file",
            AccessClass::Process => "process",
        })
    }
}

impl FromStr for AccessClass {
    type Err = MlsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "file" => Ok(Self::File),
            "process" => Ok(Self::Process),
            other => Err(MlsError::UnknownClass(other.to_string())),
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::File(op) => f.write_str(op.as_str()),
            Operation::Transition => f.write_str("transition"),
        }
    }
}

impl FromStr for Operation {
    type Err = MlsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "transition" {
            return Ok(Operation::Transition);
        }
        // "iocctl" is a known misspelling of ioctl in some policy write-ups.
        let s = if s == "iocctl" { "ioctl" } else { s };
        FileOperation::ALL
            .into_iter()
            .find(|op| op.as_str() == s)
            .map(Operation::File)
            .ok_or_else(|| MlsError::UnknownOperation(s.to_string()))
    }
}

/// Which constraint decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Constraint {
    /// No read/execute up: `l1 dom l2`.
    ReadExecute,
    /// No write down: `l1 domby l2`.
    Write,
    /// No transition into a higher domain: `l1 dom l2`.
    Transition,
}

impl Constraint {
    pub fn numeral(self) -> &'static str {
        match self {
            Constraint::ReadExecute => "I",
            Constraint::Write => "II",
            Constraint::Transition => "III",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Allow,
    Deny,
}

impl Verdict {
    pub fn from_bool(allowed: bool) -> Self {
        if allowed {
            Verdict::Allow
        } else {
            Verdict::Deny
        }
    }

    pub fn is_allow(self) -> bool {
        self == Verdict::Allow
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Allow => "Allow",
            Verdict::Deny => "Deny",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlsDecision {
    pub verdict: Verdict,
    pub rule_fired: Constraint,
}

pub fn check_access(
    subject: &SecurityLevel,
    object: &SecurityLevel,
    class: AccessClass,
    op: Operation,
) -> Result<MlsDecision, MlsError> {
    if op.class() != class {
        return Err(MlsError::ClassMismatch { class, op });
    }
    let (allowed, rule_fired) = match op {
        Operation::File(f) if f.is_write() => (subject.dominated_by(object), Constraint::Write),
        Operation::File(_) => (subject.dominates(object), Constraint::ReadExecute),
        Operation::Transition => (subject.dominates(object), Constraint::Transition),
    };
    Ok(MlsDecision {
        verdict: Verdict::from_bool(allowed),
        rule_fired,
    })
}

/// Checks a process running as `subject_user` against an object owned by
/// (or a domain belonging to) `object_owner`.
pub fn check_user_access(
    assignment: &LevelAssignment,
    subject_user: &str,
    object_owner: &str,
    class: AccessClass,
    op: Operation,
) -> Result<MlsDecision, MlsError> {
    let lookup = |u: &str| {
        assignment
            .level(u)
            .ok_or_else(|| MlsError::UnknownUser(u.to_string()))
    };
    check_access(lookup(subject_user)?, lookup(object_owner)?, class, op)
}
