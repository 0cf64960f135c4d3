//! The audit test: `H0: U <= u_tol` against `H1: U > u_tol`.

use serde::{Deserialize, Serialize};

use crate::confusion::{metric_value, rates_from_counts, ConfusionCounts, Group, MetricKind};
use crate::design::critical_value;
use crate::error::{AuditError, Result};
use crate::statsmath::{normal_cdf, Probability};
use crate::variance::unfairness_variance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub u_hat: f64,
    pub sigma_hat: f64,
    pub statistic: f64,
    /// Upper-tail p-value `1 - Phi(statistic)`.
    pub p_value: Probability,
    pub critical_value: f64,
    pub reject: bool,
    pub alpha: Probability,
    pub u_tol: f64,
    /// Group 1 metric estimate.
    pub m_hat_g1: f64,
    pub m_hat_g2: f64,
}

fn group_metric(kind: MetricKind, c: &ConfusionCounts, g: Group) -> Result<f64> {
    rates_from_counts(c)
        .and_then(|r| metric_value(kind, &r))
        .map_err(|e| match e {
            AuditError::Contract(msg) => AuditError::DegenerateData(format!("{g}: {msg}")),
            other => other.in_group(g),
        })
}

/// `M_1 - M_2` estimated from counts.
pub fn estimate_unfairness(kind: MetricKind, c1: &ConfusionCounts, c2: &ConfusionCounts) -> Result<f64> {
    Ok(group_metric(kind, c1, Group::Privileged)? - group_metric(kind, c2, Group::Disadvantaged)?)
}

/// Run the test with the plug-in standard error. Rejects when the statistic
/// exceeds `z_{1-alpha/2}`, i.e. when the p-value is below `alpha / 2`.
pub fn run_test(
    kind: MetricKind,
    c1: &ConfusionCounts,
    c2: &ConfusionCounts,
    u_tol: f64,
    alpha: Probability,
) -> Result<TestOutcome> {
    if !u_tol.is_finite() {
        return Err(AuditError::Contract(format!("u_tol must be finite, got {u_tol}")));
    }
    let z_crit = critical_value(alpha)?;
    let m1 = group_metric(kind, c1, Group::Privileged)?;
    let m2 = group_metric(kind, c2, Group::Disadvantaged)?;
    let r1 = rates_from_counts(c1)?;
    let r2 = rates_from_counts(c2)?;
    let var = unfairness_variance(kind, &r1, &r2, c1.total(), c2.total())?;
    let sigma_hat = var.sigma_u();
    if sigma_hat.is_nan() || sigma_hat <= 0.0 {
        return Err(AuditError::DegenerateData(format!(
            "estimated standard error of {kind} unfairness is zero; the test statistic is undefined"
        )));
    }
    let u_hat = m1 - m2;
    let statistic = (u_hat - u_tol) / sigma_hat;
    let p_value = normal_cdf(-statistic)?;
    Ok(TestOutcome {
        u_hat,
        sigma_hat,
        statistic,
        p_value,
        critical_value: z_crit,
        reject: statistic > z_crit,
        alpha,
        u_tol,
        m_hat_g1: m1,
        m_hat_g2: m2,
    })
}
