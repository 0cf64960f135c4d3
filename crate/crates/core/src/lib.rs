//! Planning and running statistically powered fairness audits of binary
//! classifiers.
//!
//! Unfairness is the difference `U = M_1 - M_2` of a confusion-matrix
//! metric between a privileged group 1 and a disadvantaged group 2. The
//! crate covers
//!
//! * [`design`]: required sample size and Neyman allocation for a test of
//!   `U <= u_tol` against `U > u_tol`,
//! * [`hypotest`]: the test itself on collected counts,
//! * [`variance`]: asymptotic group variances (closed form and delta method),
//! * [`simulate`]: a Monte Carlo oracle for all of the above.

pub mod confusion;
pub mod design;
pub mod error;
pub mod hypotest;
pub mod simulate;
pub mod statsmath;
pub mod variance;

pub use confusion::{metric_value, rates_from_counts, ConfusionCounts, Group, GroupRates, MetricKind};
pub use design::{achieved_power, optimal_allocation, power_curve, sample_size, AuditDesignInput, AuditDesignOutput};
pub use error::{AuditError, Result};
pub use hypotest::{estimate_unfairness, run_test, TestOutcome};
pub use simulate::{draw_group_sample, empirical_variance_check, run_replicates, PopulationSpec, SimConfig, SimResult};
pub use statsmath::{normal_cdf, normal_quantile, Probability};
pub use variance::{delta_variance, group_variance, metric_joint_covariance, unfairness_variance, UnfairnessVariance};
