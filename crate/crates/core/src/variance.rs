//! Asymptotic variances of group metrics and of the unfairness estimate.
//!
//! Two routes compute the per-sample variance `sigma^2_{M,g}` of a metric
//! estimate:
//!
//! * [`group_variance`]: closed forms, one per metric.
//! * [`metric_joint_covariance`] + [`delta_variance`]: the metric is written
//!   as a smooth function of indicator means over the four confusion cells,
//!   the covariance of those means is taken from the multinomial
//!   (`Cov(1_A, 1_B) = P(A and B) - P(A) P(B)`), and the delta method
//!   gives `grad' Sigma grad`.
//!
//! The routes share no arithmetic beyond the cell fractions, so agreement
//! between them is a real check on the closed forms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::confusion::{metric_value, Group, GroupRates, MetricKind};
use crate::error::{AuditError, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-9;
const NEGATIVE_QUADRATIC_TOL: f64 = 1e-12;

/// Symmetric positive semidefinite covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(DMatrix<f64>);

impl CovarianceMatrix {
    /// Build from row-major entries.
    pub fn from_rows(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim || dim == 0 {
            return Err(AuditError::Contract(format!(
                "covariance of dimension {dim} needs {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        let m = DMatrix::from_row_slice(dim, dim, entries);
        for i in 0..dim {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(AuditError::Contract(format!(
                        "covariance is not symmetric at ({i}, {j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        let min_eig = m.clone().symmetric_eigenvalues().min();
        if min_eig < -PSD_TOL {
            return Err(AuditError::Contract(format!(
                "covariance is not positive semidefinite (smallest eigenvalue {min_eig})"
            )));
        }
        Ok(Self(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(DVector<f64>);

impl GradientVector {
    pub fn new(entries: &[f64]) -> Self {
        Self(DVector::from_column_slice(entries))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Variance of the unfairness estimate for a concrete pair of sample sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnfairnessVariance {
    pub sigma2_g1: f64,
    pub sigma2_g2: f64,
    pub n1: u64,
    pub n2: u64,
    #[serde(rename = "sigma2_u")]
    pub sigma2_u: f64,
}

impl UnfairnessVariance {
    pub fn sigma_u(&self) -> f64 {
        self.sigma2_u.sqrt()
    }
}

/// Per-sample asymptotic variance of the estimate of `kind` in one group.
pub fn group_variance(kind: MetricKind, r: &GroupRates) -> Result<f64> {
    let m = metric_value(kind, r)?;
    // Complement pairs share the Bernoulli factor of the base rate so their
    // variances agree bit for bit.
    let base = match kind {
        MetricKind::Tpr | MetricKind::Fnr => r.tpr(),
        MetricKind::Tnr | MetricKind::Fpr => r.tnr(),
        _ => m,
    };
    let bernoulli = base * (1.0 - base);
    let v = match kind {
        MetricKind::Dp | MetricKind::Acc => bernoulli,
        MetricKind::Tpr | MetricKind::Fnr => bernoulli / r.prevalence(),
        MetricKind::Tnr | MetricKind::Fpr => bernoulli / (1.0 - r.prevalence()),
        MetricKind::Ppv => bernoulli / r.positive_pred_rate(),
        MetricKind::Npv => bernoulli / (1.0 - r.positive_pred_rate()),
    };
    Ok(v.max(0.0))
}

/// `grad' cov grad`, clamped at zero when rounding leaves it slightly negative.
pub fn delta_variance(grad: &GradientVector, cov: &CovarianceMatrix) -> Result<f64> {
    if grad.dim() != cov.dim() {
        return Err(AuditError::Contract(format!(
            "gradient has dimension {} but covariance has dimension {}",
            grad.dim(),
            cov.dim()
        )));
    }
    let q = grad.0.dot(&(&cov.0 * &grad.0));
    if q < -NEGATIVE_QUADRATIC_TOL {
        return Err(AuditError::Contract(format!(
            "quadratic form is negative ({q}); covariance is not PSD"
        )));
    }
    Ok(q.max(0.0))
}

// Cell masks over [tp, fp, fn, tn].
const TP: u8 = 0b0001;
const FP: u8 = 0b0010;
const FN: u8 = 0b0100;
const TN: u8 = 0b1000;

/// A metric as a function of indicator means.
enum Form {
    /// Mean of a single indicator.
    Linear(u8),
    /// `mean(num) / mean(den)`, optionally as its complement `1 - ratio`.
    Ratio { num: u8, den: u8, complement: bool },
}

fn form(kind: MetricKind) -> (Form, &'static str) {
    match kind {
        MetricKind::Dp => (Form::Linear(TP | FP), ""),
        MetricKind::Acc => (Form::Linear(TP | TN), ""),
        MetricKind::Tpr => (Form::Ratio { num: TP, den: TP | FN, complement: false }, "prevalence"),
        MetricKind::Fnr => (Form::Ratio { num: TP, den: TP | FN, complement: true }, "prevalence"),
        MetricKind::Tnr => (Form::Ratio { num: TN, den: FP | TN, complement: false }, "1 - prevalence"),
        MetricKind::Fpr => (Form::Ratio { num: TN, den: FP | TN, complement: true }, "1 - prevalence"),
        MetricKind::Ppv => (Form::Ratio { num: TP, den: TP | FP, complement: false }, "positive prediction rate"),
        MetricKind::Npv => (Form::Ratio { num: TN, den: FN | TN, complement: false }, "1 - positive prediction rate"),
    }
}

fn event_prob(cells: &[f64; 4], mask: u8) -> f64 {
    cells
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, p)| p)
        .sum()
}

fn multinomial_cov(cells: &[f64; 4], a: u8, b: u8) -> f64 {
    event_prob(cells, a & b) - event_prob(cells, a) * event_prob(cells, b)
}

/// Gradient of `kind` with respect to its indicator means, and the
/// per-sample covariance of those means under one multinomial draw.
pub fn metric_joint_covariance(
    kind: MetricKind,
    r: &GroupRates,
) -> Result<(GradientVector, CovarianceMatrix)> {
    let cells = r.cell_fractions();
    match form(kind) {
        (Form::Linear(mask), _) => {
            let v = multinomial_cov(&cells, mask, mask);
            Ok((GradientVector::new(&[1.0]), CovarianceMatrix::from_rows(1, &[v])?))
        }
        (Form::Ratio { num, den, complement }, den_name) => {
            let mean_num = event_prob(&cells, num);
            let mean_den = event_prob(&cells, den);
            if mean_den <= 0.0 {
                return Err(AuditError::UndefinedMetric {
                    metric: kind,
                    denominator: den_name,
                    group: None,
                });
            }
            let sign = if complement { -1.0 } else { 1.0 };
            let grad = [sign / mean_den, -sign * mean_num / (mean_den * mean_den)];
            let c_nn = multinomial_cov(&cells, num, num);
            let c_nd = multinomial_cov(&cells, num, den);
            let c_dd = multinomial_cov(&cells, den, den);
            Ok((
                GradientVector::new(&grad),
                CovarianceMatrix::from_rows(2, &[c_nn, c_nd, c_nd, c_dd])?,
            ))
        }
    }
}

/// Group variances combined into `sigma^2_U = s1/n1 + s2/n2`.
pub fn unfairness_variance(
    kind: MetricKind,
    r1: &GroupRates,
    r2: &GroupRates,
    n1: u64,
    n2: u64,
) -> Result<UnfairnessVariance> {
    if n1 == 0 || n2 == 0 {
        return Err(AuditError::Contract(format!(
            "group sample sizes must be at least 1 (n1={n1}, n2={n2})"
        )));
    }
    let sigma2_g1 = group_variance(kind, r1).map_err(|e| e.in_group(Group::Privileged))?;
    let sigma2_g2 = group_variance(kind, r2).map_err(|e| e.in_group(Group::Disadvantaged))?;
    Ok(UnfairnessVariance {
        sigma2_g1,
        sigma2_g2,
        n1,
        n2,
        sigma2_u: sigma2_g1 / n1 as f64 + sigma2_g2 / n2 as f64,
    })
}
