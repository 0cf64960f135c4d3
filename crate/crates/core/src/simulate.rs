//! Monte Carlo checks of the variance formulas, test size and power.
//!
//! # Sampling model
//!
//! Each group is a population described by `(prevalence, tpr, tnr)`. A
//! sample of `n` individuals draws `Y ~ Bernoulli(prevalence)` and then
//! `Yhat ~ Bernoulli(tpr)` if `Y = 1` or `Yhat ~ Bernoulli(1 - tnr)` if
//! `Y = 0`, independently per individual. Only the cell tallies matter, so
//! they are drawn directly:
//!
//! ```text
//! positives ~ Binomial(n, prevalence)
//! tp        ~ Binomial(positives, tpr)
//! fp        ~ Binomial(n - positives, 1 - tnr)
//! ```
//!
//! which has exactly the distribution of the per-individual tally.
//!
//! # Seeds
//!
//! Every (replicate, group) pair gets its own ChaCha8 stream, seeded with
//!
//! ```text
//! s = splitmix64(splitmix64(splitmix64(master_seed) ^ replicate) ^ group)
//! ```
//!
//! where `group` is 1 or 2 and `splitmix64` is the SplitMix64 output
//! function (add `0x9E3779B97F4A7C15`, then the xor-shift-multiply
//! finaliser). The 64-bit `s` is expanded to a ChaCha key with
//! `SeedableRng::seed_from_u64`. Replicates are evaluated in parallel into
//! pre-assigned slots and reduced in index order, so results do not depend
//! on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confusion::{metric_value, rates_from_counts, ConfusionCounts, Group, GroupRates, MetricKind};
use crate::design::critical_value;
use crate::error::{AuditError, Result};
use crate::hypotest::run_test;
use crate::statsmath::Probability;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub rates_g1: GroupRates,
    pub rates_g2: GroupRates,
}

impl PopulationSpec {
    /// True `M_1 - M_2` in the population.
    pub fn true_unfairness(&self, kind: MetricKind) -> Result<f64> {
        let m1 = metric_value(kind, &self.rates_g1).map_err(|e| e.in_group(Group::Privileged))?;
        let m2 = metric_value(kind, &self.rates_g2).map_err(|e| e.in_group(Group::Disadvantaged))?;
        Ok(m1 - m2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub population: PopulationSpec,
    pub metric: MetricKind,
    pub n1: u64,
    pub n2: u64,
    pub replicates: usize,
    pub master_seed: u64,
    pub alpha: Probability,
    pub u_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub rejection_rate: Probability,
    pub rejections: usize,
    pub mean_u_hat: f64,
    /// `n1` times the sample variance of the group 1 estimate; NaN when
    /// fewer than two replicates were usable.
    pub empirical_var_g1: f64,
    pub empirical_var_g2: f64,
    pub undefined_replicates: usize,
    pub replicates_used: usize,
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream for one group in one replicate.
pub fn derive_seed(master_seed: u64, replicate: u64, group: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ replicate) ^ group)
}

fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p)
        .expect("p checked to lie in (0, 1)")
        .sample(rng)
}

/// Draw the confusion counts of `n` independent individuals.
pub fn draw_group_sample(r: &GroupRates, n: u64, seed: u64) -> ConfusionCounts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives = binomial(&mut rng, n, r.prevalence());
    let negatives = n - positives;
    let tp = binomial(&mut rng, positives, r.tpr());
    let fp = binomial(&mut rng, negatives, 1.0 - r.tnr());
    ConfusionCounts::new(tp, fp, positives - tp, negatives - fp)
}

enum Replicate {
    Undefined,
    Done { reject: bool, u_hat: f64, m1: f64, m2: f64 },
}

fn validate(cfg: &SimConfig) -> Result<()> {
    if cfg.replicates == 0 {
        return Err(AuditError::Contract("replicates must be at least 1".into()));
    }
    if cfg.n1 == 0 || cfg.n2 == 0 {
        return Err(AuditError::Contract(format!(
            "group sample sizes must be at least 1 (n1={}, n2={})",
            cfg.n1, cfg.n2
        )));
    }
    if !cfg.u_tol.is_finite() {
        return Err(AuditError::Contract(format!("u_tol must be finite, got {}", cfg.u_tol)));
    }
    critical_value(cfg.alpha)?;
    Ok(())
}

fn replicate(cfg: &SimConfig, i: u64) -> Result<Replicate> {
    let c1 = draw_group_sample(&cfg.population.rates_g1, cfg.n1, derive_seed(cfg.master_seed, i, 1));
    let c2 = draw_group_sample(&cfg.population.rates_g2, cfg.n2, derive_seed(cfg.master_seed, i, 2));
    match run_test(cfg.metric, &c1, &c2, cfg.u_tol, cfg.alpha) {
        Ok(out) => Ok(Replicate::Done {
            reject: out.reject,
            u_hat: out.u_hat,
            m1: out.m_hat_g1,
            m2: out.m_hat_g2,
        }),
        Err(AuditError::UndefinedMetric { .. } | AuditError::DegenerateData(_)) => Ok(Replicate::Undefined),
        Err(e) => Err(e),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; NaN for fewer than two values.
fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Simulate `cfg.replicates` audits and run the test on each.
pub fn run_replicates(cfg: &SimConfig) -> Result<SimResult> {
    validate(cfg)?;
    let outcomes: Vec<Replicate> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|i| replicate(cfg, i))
        .collect::<Result<_>>()?;

    let mut rejections = 0usize;
    let mut u_hats = Vec::with_capacity(outcomes.len());
    let mut m1s = Vec::with_capacity(outcomes.len());
    let mut m2s = Vec::with_capacity(outcomes.len());
    for o in &outcomes {
        if let Replicate::Done { reject, u_hat, m1, m2 } = *o {
            rejections += usize::from(reject);
            u_hats.push(u_hat);
            m1s.push(m1);
            m2s.push(m2);
        }
    }
    let used = u_hats.len();
    if used == 0 {
        return Err(AuditError::DegenerateScenario(cfg.replicates));
    }
    Ok(SimResult {
        rejection_rate: Probability::new(rejections as f64 / used as f64)?,
        rejections,
        mean_u_hat: mean(&u_hats),
        empirical_var_g1: cfg.n1 as f64 * sample_variance(&m1s),
        empirical_var_g2: cfg.n2 as f64 * sample_variance(&m2s),
        undefined_replicates: cfg.replicates - used,
        replicates_used: used,
    })
}

/// `n` times the sample variance of the metric estimate over replicates,
/// to compare against [`crate::variance::group_variance`].
pub fn empirical_variance_check(
    kind: MetricKind,
    r: &GroupRates,
    n: u64,
    replicates: usize,
    master_seed: u64,
) -> Result<f64> {
    if n == 0 || replicates < 2 {
        return Err(AuditError::Contract(format!(
            "need n >= 1 and at least 2 replicates (n={n}, replicates={replicates})"
        )));
    }
    let estimates: Vec<Option<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| {
            let c = draw_group_sample(r, n, derive_seed(master_seed, i, 1));
            rates_from_counts(&c).and_then(|rc| metric_value(kind, &rc)).ok()
        })
        .collect();
    let used: Vec<f64> = estimates.into_iter().flatten().collect();
    let undefined = replicates - used.len();
    if 2 * undefined > replicates || used.len() < 2 {
        return Err(AuditError::UnreliableEstimate {
            undefined,
            replicates,
        });
    }
    Ok(n as f64 * sample_variance(&used))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(p: f64, tpr: f64, tnr: f64) -> GroupRates {
        GroupRates::new(p, tpr, tnr).unwrap()
    }

    #[test]
    fn degenerate_bernoullis() {
        let c = draw_group_sample(&rates(1.0, 1.0, 0.3), 57, 9);
        assert_eq!(c, ConfusionCounts::new(57, 0, 0, 0));
        let c = draw_group_sample(&rates(0.0, 0.4, 1.0), 57, 9);
        assert_eq!(c, ConfusionCounts::new(0, 0, 0, 57));
    }

    #[test]
    fn law_of_large_numbers() {
        let c = draw_group_sample(&rates(0.5, 0.79, 0.9), 1_000_000, 2024);
        let tpr = c.tp as f64 / c.positives() as f64;
        let band = 3.0 * (0.79f64 * 0.21 / 500_000.0).sqrt();
        assert!((tpr - 0.79).abs() < band, "{tpr}");
        assert_eq!(c.total(), 1_000_000);
    }

    #[test]
    fn draws_are_deterministic() {
        let r = rates(0.3, 0.7, 0.6);
        assert_eq!(draw_group_sample(&r, 1000, 5), draw_group_sample(&r, 1000, 5));
        assert_ne!(draw_group_sample(&r, 1000, 5), draw_group_sample(&r, 1000, 6));
    }

    #[test]
    fn seeds_differ_across_streams() {
        let a = derive_seed(1, 0, 1);
        assert_ne!(a, derive_seed(1, 0, 2));
        assert_ne!(a, derive_seed(1, 1, 1));
        assert_ne!(a, derive_seed(2, 0, 1));
    }

    fn config(replicates: usize) -> SimConfig {
        SimConfig {
            population: PopulationSpec {
                rates_g1: rates(0.4, 0.8, 0.7),
                rates_g2: rates(0.4, 0.7, 0.7),
            },
            metric: MetricKind::Tpr,
            n1: 300,
            n2: 300,
            replicates,
            master_seed: 11,
            alpha: Probability::new(0.05).unwrap(),
            u_tol: 0.0,
        }
    }

    #[test]
    fn single_replicate() {
        let res = run_replicates(&config(1)).unwrap();
        assert!(res.rejection_rate.value() == 0.0 || res.rejection_rate.value() == 1.0);
        assert_eq!(res.replicates_used + res.undefined_replicates, 1);
        assert!(res.empirical_var_g1.is_nan());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let cfg = config(500);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_replicates(&cfg).unwrap());
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_replicates(&cfg).unwrap());
        assert_eq!(one.rejections, many.rejections);
        assert_eq!(one.mean_u_hat.to_bits(), many.mean_u_hat.to_bits());
        assert_eq!(one.empirical_var_g1.to_bits(), many.empirical_var_g1.to_bits());
        assert_eq!(one, many);
    }

    #[test]
    fn undefined_replicates_counted() {
        // Prevalence so small that most group-2 samples of 20 hold no positives.
        let mut cfg = config(400);
        cfg.n2 = 20;
        cfg.population.rates_g2 = rates(0.02, 0.5, 0.7);
        let res = run_replicates(&cfg).unwrap();
        assert!(res.undefined_replicates > 0);
        assert_eq!(res.undefined_replicates + res.replicates_used, 400);
        assert!(
            (res.rejection_rate.value() - res.rejections as f64 / res.replicates_used as f64).abs()
                < 1e-15
        );
    }

    #[test]
    fn all_undefined_is_an_error() {
        let mut cfg = config(50);
        cfg.population.rates_g2 = rates(0.0, 0.5, 0.7);
        assert!(matches!(
            run_replicates(&cfg),
            Err(AuditError::DegenerateScenario(50))
        ));
    }

    #[test]
    fn zero_replicates_rejected() {
        assert!(matches!(run_replicates(&config(0)), Err(AuditError::Contract(_))));
    }

    #[test]
    fn empirical_variance_degenerate_dp() {
        for pp in [0.0, 1.0] {
            let r = GroupRates::from_positive_pred_rate(pp).unwrap();
            assert_eq!(empirical_variance_check(MetricKind::Dp, &r, 1000, 100, 3).unwrap(), 0.0);
        }
    }

    #[test]
    fn empirical_variance_unreliable() {
        let r = rates(0.01, 0.5, 0.5);
        assert!(matches!(
            empirical_variance_check(MetricKind::Tpr, &r, 10, 200, 3),
            Err(AuditError::UnreliableEstimate { .. })
        ));
    }

    #[test]
    fn empirical_variance_tpr_close() {
        let r = rates(0.5, 0.5, 0.5);
        let v = empirical_variance_check(MetricKind::Tpr, &r, 10_000, 4000, 8).unwrap();
        assert!((v - 0.5).abs() / 0.5 < 0.08, "{v}");
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn counts_conserved(p in 0.0f64..=1.0, tpr in 0.0f64..=1.0, tnr in 0.0f64..=1.0, n in 1u64..100_000, seed: u64) {
                let r = GroupRates::new(p, tpr, tnr).unwrap();
                prop_assert_eq!(draw_group_sample(&r, n, seed).total(), n);
            }
        }
    }
}
