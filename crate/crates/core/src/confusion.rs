//! Group confusion matrices and the performance metrics derived from them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// Which of the two audited groups a quantity belongs to.
///
/// Group 1 is the privileged group; unfairness is `M_1 - M_2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Privileged,
    Disadvantaged,
}

impl Group {
    pub fn index(self) -> u64 {
        match self {
            Group::Privileged => 1,
            Group::Disadvantaged => 2,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Privileged => f.write_str("group 1 (privileged)"),
            Group::Disadvantaged => f.write_str("group 2 (disadvantaged)"),
        }
    }
}

/// The four cells of a binary confusion matrix for one group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn predicted_positives(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn predicted_negatives(&self) -> u64 {
        self.fn_ + self.tn
    }

    /// Tally one observation.
    pub fn record(&mut self, y_true: bool, y_pred: bool) {
        match (y_true, y_pred) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn scaled(&self, k: u64) -> Self {
        Self::new(self.tp * k, self.fp * k, self.fn_ * k, self.tn * k)
    }
}

/// Performance metric whose between-group difference defines unfairness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Demographic parity: positive prediction rate.
    Dp,
    Tpr,
    Fnr,
    Tnr,
    Fpr,
    Ppv,
    Npv,
    Acc,
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::Dp,
        MetricKind::Tpr,
        MetricKind::Fnr,
        MetricKind::Tnr,
        MetricKind::Fpr,
        MetricKind::Ppv,
        MetricKind::Npv,
        MetricKind::Acc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Dp => "dp",
            MetricKind::Tpr => "tpr",
            MetricKind::Fnr => "fnr",
            MetricKind::Tnr => "tnr",
            MetricKind::Fpr => "fpr",
            MetricKind::Ppv => "ppv",
            MetricKind::Npv => "npv",
            MetricKind::Acc => "acc",
        }
    }

    /// Whether estimating this metric needs ground-truth labels.
    pub fn needs_true_labels(self) -> bool {
        !matches!(self, MetricKind::Dp)
    }

    fn undefined(self, denominator: &'static str) -> AuditError {
        AuditError::UndefinedMetric {
            metric: self,
            denominator,
            group: None,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str().to_ascii_uppercase())
    }
}

impl FromStr for MetricKind {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        MetricKind::ALL
            .into_iter()
            .find(|m| m.as_str() == lower)
            .ok_or_else(|| {
                AuditError::Contract(format!(
                    "unknown metric {s:?}; expected one of dp, tpr, fnr, tnr, fpr, ppv, npv, acc"
                ))
            })
    }
}

/// Population rates of one group.
///
/// `(prevalence, tpr, tnr)` is the free parameterisation; the positive
/// prediction rate and the cell fractions follow from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    prevalence: f64,
    positive_pred_rate: f64,
    tpr: f64,
    tnr: f64,
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(AuditError::Contract(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl GroupRates {
    pub fn new(prevalence: f64, tpr: f64, tnr: f64) -> Result<Self> {
        check_unit("prevalence", prevalence)?;
        check_unit("tpr", tpr)?;
        check_unit("tnr", tnr)?;
        let positive_pred_rate = prevalence * tpr + (1.0 - prevalence) * (1.0 - tnr);
        Ok(Self {
            prevalence,
            positive_pred_rate: positive_pred_rate.clamp(0.0, 1.0),
            tpr,
            tnr,
        })
    }

    /// Rates for a group known only through its positive prediction rate.
    ///
    /// Represented as a perfect classifier with prevalence equal to the
    /// rate, so DP quantities are exact; the other metrics carry no
    /// information and should not be requested.
    pub fn from_positive_pred_rate(positive_pred_rate: f64) -> Result<Self> {
        Self::new(positive_pred_rate, 1.0, 1.0)
    }

    pub fn prevalence(&self) -> f64 {
        self.prevalence
    }

    pub fn positive_pred_rate(&self) -> f64 {
        self.positive_pred_rate
    }

    pub fn tpr(&self) -> f64 {
        self.tpr
    }

    pub fn tnr(&self) -> f64 {
        self.tnr
    }

    /// Cell probabilities `[tp, fp, fn, tn]`.
    pub fn cell_fractions(&self) -> [f64; 4] {
        let p = self.prevalence;
        [
            p * self.tpr,
            (1.0 - p) * (1.0 - self.tnr),
            p * (1.0 - self.tpr),
            (1.0 - p) * self.tnr,
        ]
    }
}

/// Estimate group rates from observed counts.
///
/// A ratio whose denominator is empty (no true positives+false negatives,
/// or no negatives) is stored as NaN and reported as an undefined metric
/// when a metric that consumes it is requested.
pub fn rates_from_counts(c: &ConfusionCounts) -> Result<GroupRates> {
    let n = c.total();
    if n == 0 {
        return Err(AuditError::Contract(
            "confusion counts are empty; at least one observation is required".into(),
        ));
    }
    let n = n as f64;
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            f64::NAN
        } else {
            num as f64 / den as f64
        }
    };
    Ok(GroupRates {
        prevalence: c.positives() as f64 / n,
        positive_pred_rate: c.predicted_positives() as f64 / n,
        tpr: ratio(c.tp, c.positives()),
        tnr: ratio(c.tn, c.negatives()),
    })
}

fn require_positive(kind: MetricKind, value: f64, name: &'static str) -> Result<f64> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(kind.undefined(name))
    }
}

fn require_defined(kind: MetricKind, value: f64, name: &'static str) -> Result<f64> {
    if value.is_nan() {
        Err(kind.undefined(name))
    } else {
        Ok(value)
    }
}

/// Value of `kind` for a group with rates `r`.
pub fn metric_value(kind: MetricKind, r: &GroupRates) -> Result<f64> {
    let p = r.prevalence;
    let pp = r.positive_pred_rate;
    let value = match kind {
        MetricKind::Dp => pp,
        MetricKind::Tpr | MetricKind::Fnr => {
            require_positive(kind, p, "prevalence")?;
            let tpr = require_defined(kind, r.tpr, "prevalence")?;
            if kind == MetricKind::Tpr {
                tpr
            } else {
                1.0 - tpr
            }
        }
        MetricKind::Tnr | MetricKind::Fpr => {
            require_positive(kind, 1.0 - p, "1 - prevalence")?;
            let tnr = require_defined(kind, r.tnr, "1 - prevalence")?;
            if kind == MetricKind::Tnr {
                tnr
            } else {
                1.0 - tnr
            }
        }
        MetricKind::Ppv => {
            require_positive(kind, pp, "positive prediction rate")?;
            let tp = if r.tpr.is_nan() { 0.0 } else { p * r.tpr };
            tp / pp
        }
        MetricKind::Npv => {
            require_positive(kind, 1.0 - pp, "1 - positive prediction rate")?;
            let tn = if r.tnr.is_nan() { 0.0 } else { (1.0 - p) * r.tnr };
            tn / (1.0 - pp)
        }
        MetricKind::Acc => {
            let tp = if r.tpr.is_nan() { 0.0 } else { p * r.tpr };
            let tn = if r.tnr.is_nan() { 0.0 } else { (1.0 - p) * r.tnr };
            tp + tn
        }
    };
    Ok(value.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn symmetric_counts() {
        let r = rates_from_counts(&ConfusionCounts::new(1, 1, 1, 1)).unwrap();
        assert_eq!(r.prevalence(), 0.5);
        assert_eq!(r.positive_pred_rate(), 0.5);
        assert_eq!(r.tpr(), 0.5);
        assert_eq!(r.tnr(), 0.5);
    }

    #[test]
    fn all_negative_predictor() {
        let r = rates_from_counts(&ConfusionCounts::new(0, 0, 5, 5)).unwrap();
        assert_eq!(r.tpr(), 0.0);
        assert_eq!(r.positive_pred_rate(), 0.0);
        assert_eq!(r.prevalence(), 0.5);
        assert_eq!(r.tnr(), 1.0);
    }

    #[test]
    fn worked_example_positive_rate() {
        let r = rates_from_counts(&ConfusionCounts::new(3478, 0, 6522, 0)).unwrap();
        assert!(close(r.positive_pred_rate(), 0.3478, 1e-15));
    }

    #[test]
    fn empty_counts_rejected() {
        assert!(rates_from_counts(&ConfusionCounts::default()).is_err());
    }

    #[test]
    fn undefined_ratios_are_flagged() {
        // no true positives in the sample
        let r = rates_from_counts(&ConfusionCounts::new(0, 3, 0, 7)).unwrap();
        let err = metric_value(MetricKind::Tpr, &r).unwrap_err();
        assert!(matches!(
            err,
            AuditError::UndefinedMetric {
                metric: MetricKind::Tpr,
                ..
            }
        ));
        assert!(metric_value(MetricKind::Fnr, &r).is_err());
        // DP, TNR and ACC are still fine
        assert_eq!(metric_value(MetricKind::Dp, &r).unwrap(), 0.3);
        assert_eq!(metric_value(MetricKind::Tnr, &r).unwrap(), 0.7);
        assert_eq!(metric_value(MetricKind::Acc, &r).unwrap(), 0.7);

        let none_predicted = rates_from_counts(&ConfusionCounts::new(0, 0, 4, 6)).unwrap();
        assert!(metric_value(MetricKind::Ppv, &none_predicted).is_err());
        let all_predicted = rates_from_counts(&ConfusionCounts::new(4, 6, 0, 0)).unwrap();
        assert!(metric_value(MetricKind::Npv, &all_predicted).is_err());
        assert!(metric_value(MetricKind::Tnr, &GroupRates::new(1.0, 0.5, 0.5).unwrap()).is_err());
    }

    #[test]
    fn tpr_and_fnr() {
        let r = GroupRates::new(0.3, 0.79, 0.9).unwrap();
        assert!(close(metric_value(MetricKind::Tpr, &r).unwrap(), 0.79, 1e-15));
        assert!(close(metric_value(MetricKind::Fnr, &r).unwrap(), 0.21, 1e-15));
    }

    #[test]
    fn ppv_by_hand() {
        let r = GroupRates::new(0.5, 0.8, 0.6).unwrap();
        assert!(close(r.positive_pred_rate(), 0.6, 1e-15));
        assert!(close(metric_value(MetricKind::Ppv, &r).unwrap(), 0.4 / 0.6, 1e-15));
    }

    #[test]
    fn ppv_by_enumeration() {
        // 10 individuals: 5 positive, 4 of them predicted positive; 5
        // negative, 3 correctly predicted negative.
        let people: Vec<(bool, bool)> = (0..10)
            .map(|i| {
                let y = i < 5;
                let yhat = if y { i < 4 } else { i >= 8 };
                (y, yhat)
            })
            .collect();
        let mut c = ConfusionCounts::default();
        for &(y, yhat) in &people {
            c.record(y, yhat);
        }
        let predicted: Vec<_> = people.iter().filter(|p| p.1).collect();
        let ppv = predicted.iter().filter(|p| p.0).count() as f64 / predicted.len() as f64;
        let r = rates_from_counts(&c).unwrap();
        assert!(close(metric_value(MetricKind::Ppv, &r).unwrap(), ppv, 1e-12));
        assert!(close(ppv, 4.0 / 6.0, 1e-12));
    }

    #[test]
    fn parse_metric_names() {
        assert_eq!("TPR".parse::<MetricKind>().unwrap(), MetricKind::Tpr);
        assert_eq!(" dp ".parse::<MetricKind>().unwrap(), MetricKind::Dp);
        assert!("auc".parse::<MetricKind>().is_err());
        assert_eq!(MetricKind::Npv.to_string(), "NPV");
    }

    #[test]
    fn rates_outside_unit_interval_rejected() {
        assert!(GroupRates::new(1.2, 0.5, 0.5).is_err());
        assert!(GroupRates::new(0.5, f64::NAN, 0.5).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn counts() -> impl Strategy<Value = ConfusionCounts> {
            (0u64..200, 0u64..200, 0u64..200, 0u64..200)
                .prop_map(|(a, b, c, d)| ConfusionCounts::new(a, b, c, d))
                .prop_filter("non-empty", |c| c.total() > 0)
        }

        proptest! {
            #[test]
            fn complements_exact(p in 0.01f64..0.99, tpr in 0.0f64..=1.0, tnr in 0.0f64..=1.0) {
                let r = GroupRates::new(p, tpr, tnr).unwrap();
                prop_assert_eq!(metric_value(MetricKind::Fnr, &r).unwrap(), 1.0 - metric_value(MetricKind::Tpr, &r).unwrap());
                prop_assert_eq!(metric_value(MetricKind::Fpr, &r).unwrap(), 1.0 - metric_value(MetricKind::Tnr, &r).unwrap());
            }

            #[test]
            fn positive_rate_consistency(p in 0.0f64..=1.0, tpr in 0.0f64..=1.0, tnr in 0.0f64..=1.0) {
                let r = GroupRates::new(p, tpr, tnr).unwrap();
                let want = p * tpr + (1.0 - p) * (1.0 - tnr);
                prop_assert!((r.positive_pred_rate() - want).abs() < 1e-9);
                let cells = r.cell_fractions();
                prop_assert!((cells.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }

            #[test]
            fn counts_consistency(c in counts()) {
                let r = rates_from_counts(&c).unwrap();
                let n = c.total() as f64;
                let direct = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
                let checks = [
                    (MetricKind::Dp, Some(c.predicted_positives() as f64 / n)),
                    (MetricKind::Tpr, direct(c.tp, c.positives())),
                    (MetricKind::Tnr, direct(c.tn, c.negatives())),
                    (MetricKind::Ppv, direct(c.tp, c.predicted_positives())),
                    (MetricKind::Npv, direct(c.tn, c.predicted_negatives())),
                    (MetricKind::Acc, Some((c.tp + c.tn) as f64 / n)),
                ];
                for (kind, want) in checks {
                    match (metric_value(kind, &r), want) {
                        (Ok(got), Some(want)) => prop_assert!((got - want).abs() < 1e-12, "{kind}: {got} vs {want}"),
                        (Err(_), None) => {}
                        (got, want) => prop_assert!(false, "{kind}: {got:?} vs {want:?}"),
                    }
                }
            }
        }
    }
}
