//! TOML audit configuration.
//!
//! ```toml
//! metric = "dp"          # dp, tpr, fnr, tnr, fpr, ppv, npv, acc
//! alpha = 0.05
//! beta = 0.2
//! u_tol = 0.0
//! tau = 0.093
//! # allocation = 0.5     # fraction for group 1; omit for Neyman allocation
//!
//! [group1]               # privileged group
//! positive_pred_rate = 0.3478   # DP only; otherwise prevalence, tpr, tnr
//!
//! [group2]
//! prevalence = 0.3
//! tpr = 0.68
//! tnr = 0.85
//!
//! # Instead of [group1]/[group2], estimate rates from a pilot dataset:
//! # [pilot]
//! # path = "pilot.csv"           # relative to this file
//! # privileged_group = "a"
//! # comparison_group = "b"       # needed only with more than two groups
//!
//! [simulation]           # read by `simulate` and `generate`
//! replicates = 10000
//! seed = 42
//! # n1 = 440             # omit both to use the designed sample sizes
//! # n2 = 420
//! ```

use std::path::{Path, PathBuf};

use fairsize_core::{rates_from_counts, GroupRates, MetricKind};
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::ingest::read_counts_from_path;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub metric: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub u_tol: Option<f64>,
    pub tau: Option<f64>,
    pub allocation: Option<f64>,
    pub group1: Option<GroupSection>,
    pub group2: Option<GroupSection>,
    pub pilot: Option<PilotSection>,
    pub simulation: Option<SimulationSection>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GroupSection {
    pub prevalence: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub positive_pred_rate: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotSection {
    pub path: PathBuf,
    pub privileged_group: String,
    pub comparison_group: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub n1: Option<u64>,
    pub n2: Option<u64>,
}

/// Where the group rates came from.
#[derive(Debug, Clone)]
pub enum RatesSource {
    Direct,
    Pilot {
        path: PathBuf,
        privileged: String,
        comparison: String,
        n1: u64,
        n2: u64,
        warnings: Vec<String>,
    },
}

impl AuditConfig {
    pub fn load(path: &Path) -> CliResult<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn metric(&self) -> CliResult<MetricKind> {
        self.metric
            .parse()
            .map_err(|e: fairsize_core::AuditError| CliError::Config(format!("key `metric`: {e}")))
    }

    /// Group rates from either the group sections or the pilot dataset.
    pub fn rates(&self, metric: MetricKind, base: &Path) -> CliResult<(GroupRates, GroupRates, RatesSource)> {
        match (&self.group1, &self.group2, &self.pilot) {
            (Some(g1), Some(g2), None) => Ok((
                g1.rates(metric, "group1")?,
                g2.rates(metric, "group2")?,
                RatesSource::Direct,
            )),
            (None, None, Some(p)) => {
                let path = if p.path.is_absolute() {
                    p.path.clone()
                } else {
                    base.join(&p.path)
                };
                let data = read_counts_from_path(&path, metric.needs_true_labels())?;
                let pair = data.pair(&p.privileged_group, p.comparison_group.as_deref())?;
                let to_rates = |c| -> CliResult<GroupRates> {
                    let r = rates_from_counts(&c)?;
                    if data.has_true_labels {
                        GroupRates::new(r.prevalence(), r.tpr(), r.tnr()).map_err(|_| {
                            CliError::Data(format!(
                                "pilot data cannot estimate every rate for {metric}: {c:?}"
                            ))
                        })
                    } else {
                        Ok(GroupRates::from_positive_pred_rate(r.positive_pred_rate())?)
                    }
                };
                Ok((
                    to_rates(pair.c1)?,
                    to_rates(pair.c2)?,
                    RatesSource::Pilot {
                        path,
                        privileged: pair.privileged,
                        comparison: pair.comparison,
                        n1: pair.c1.total(),
                        n2: pair.c2.total(),
                        warnings: pair.warnings,
                    },
                ))
            }
            (_, _, Some(_)) => Err(CliError::Config(
                "give either [group1]/[group2] or [pilot], not both".into(),
            )),
            _ => Err(CliError::Config(
                "group rates missing: add [group1] and [group2] sections or a [pilot] section".into(),
            )),
        }
    }
}

impl GroupSection {
    pub fn rates(&self, metric: MetricKind, section: &str) -> CliResult<GroupRates> {
        let built = match (self.prevalence, self.tpr, self.tnr, self.positive_pred_rate) {
            (Some(p), Some(tpr), Some(tnr), None) => GroupRates::new(p, tpr, tnr),
            (None, None, None, Some(pp)) => {
                if metric != MetricKind::Dp {
                    return Err(CliError::Config(format!(
                        "[{section}]: positive_pred_rate alone only defines DP; {metric} needs prevalence, tpr and tnr"
                    )));
                }
                GroupRates::from_positive_pred_rate(pp)
            }
            _ => {
                return Err(CliError::Config(format!(
                    "[{section}]: give either prevalence, tpr and tnr, or positive_pred_rate alone"
                )))
            }
        };
        built.map_err(|e| CliError::Config(format!("[{section}]: {e}")))
    }
}
