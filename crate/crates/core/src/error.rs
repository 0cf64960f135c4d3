use thiserror::Error;

use crate::confusion::{Group, MetricKind};

pub type Result<T> = std::result::Result<T, AuditError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    /// Argument outside the mathematical domain of a numeric primitive.
    #[error("domain error: {0}")]
    Domain(String),

    /// A ratio metric whose denominator is zero.
    #[error("{metric} is undefined{}: {denominator} is zero", group_suffix(.group))]
    UndefinedMetric {
        metric: MetricKind,
        denominator: &'static str,
        group: Option<Group>,
    },

    /// Violated precondition (dimension mismatch, empty grid, bad config value).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate group: {0}")]
    DegenerateGroup(String),

    #[error("infeasible design: tau ({tau}) must exceed u_tol ({u_tol})")]
    InfeasibleDesign { tau: f64, u_tol: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("unreliable estimate: {undefined} of {replicates} replicates had an undefined metric")]
    UnreliableEstimate { undefined: usize, replicates: usize },

    #[error("degenerate scenario: all {0} replicates were undefined")]
    DegenerateScenario(usize),
}

fn group_suffix(group: &Option<Group>) -> String {
    match group {
        Some(g) => format!(" in {g}"),
        None => String::new(),
    }
}

impl AuditError {
    /// Attach the group to an undefined-metric error; other variants pass through.
    pub fn in_group(self, g: Group) -> Self {
        match self {
            AuditError::UndefinedMetric {
                metric,
                denominator,
                ..
            } => AuditError::UndefinedMetric {
                metric,
                denominator,
                group: Some(g),
            },
            other => other,
        }
    }
}
