use std::path::Path;

use fairsize_core::design::split;
use fairsize_core::simulate::derive_seed;
use fairsize_core::{
    achieved_power, draw_group_sample, power_curve, run_replicates, run_test, sample_size,
    AuditDesignInput, AuditDesignOutput, ConfusionCounts, GroupRates, MetricKind, PopulationSpec,
    Probability, SimConfig,
};
use serde_json::Value;

use crate::config::{AuditConfig, RatesSource};
use crate::error::{CliError, CliResult};
use crate::ingest::{read_counts_from_path, write_dataset};
use crate::report::{num, Fields, ReportDocument};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_REPLICATES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 0;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub metric: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub u_tol: Option<f64>,
    pub tau: Option<f64>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
}

fn probability(name: &str, v: f64) -> CliResult<Probability> {
    Probability::open(v).map_err(|_| {
        CliError::Config(format!("{name} must lie strictly inside (0, 1), got {v}"))
    })
}

fn finite(name: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be finite, got {v}")))
    }
}

/// Config values merged with overrides and validated.
struct Resolved {
    metric: MetricKind,
    alpha: Probability,
    beta: Option<Probability>,
    u_tol: f64,
    tau: Option<f64>,
    allocation: Option<f64>,
    rates_g1: GroupRates,
    rates_g2: GroupRates,
    source: RatesSource,
}

impl Resolved {
    fn load(config: &Path, o: &Overrides) -> CliResult<(Self, AuditConfig)> {
        let (mut cfg, base) = AuditConfig::load(config)?;
        if let Some(m) = &o.metric {
            cfg.metric = m.clone();
        }
        let metric = cfg.metric()?;
        let alpha = probability("alpha", o.alpha.or(cfg.alpha).unwrap_or(DEFAULT_ALPHA))?;
        let beta = o.beta.or(cfg.beta).map(|b| probability("beta", b)).transpose()?;
        let u_tol = finite("u_tol", o.u_tol.or(cfg.u_tol).unwrap_or(0.0))?;
        let tau = o.tau.or(cfg.tau).map(|t| finite("tau", t)).transpose()?;
        if let Some(a) = cfg.allocation {
            if !(a > 0.0 && a < 1.0) {
                return Err(CliError::Config(format!(
                    "allocation must lie strictly inside (0, 1), got {a}"
                )));
            }
        }
        let (rates_g1, rates_g2, source) = cfg.rates(metric, &base)?;
        Ok((
            Self {
                metric,
                alpha,
                beta,
                u_tol,
                tau,
                allocation: cfg.allocation,
                rates_g1,
                rates_g2,
                source,
            },
            cfg,
        ))
    }

    fn require_beta(&self) -> CliResult<Probability> {
        self.beta
            .ok_or_else(|| CliError::Config("beta is required (config key `beta` or --beta)".into()))
    }

    fn require_tau(&self) -> CliResult<f64> {
        self.tau
            .ok_or_else(|| CliError::Config("tau is required (config key `tau` or --tau)".into()))
    }

    fn design_input(&self) -> CliResult<AuditDesignInput> {
        Ok(AuditDesignInput {
            metric: self.metric,
            alpha: self.alpha,
            beta: self.require_beta()?,
            u_tol: self.u_tol,
            tau: self.require_tau()?,
            rates_g1: self.rates_g1,
            rates_g2: self.rates_g2,
            allocation: self.allocation,
        })
    }

    fn population(&self) -> PopulationSpec {
        PopulationSpec {
            rates_g1: self.rates_g1,
            rates_g2: self.rates_g2,
        }
    }

    fn echo(&self) -> Fields {
        let mut f = Fields::new()
            .s("metric", self.metric.as_str())
            .f("alpha", self.alpha.value())
            .opt_f("beta", self.beta.map(Probability::value))
            .f("u_tol", self.u_tol)
            .opt_f("tau", self.tau)
            .v(
                "allocation",
                self.allocation.map(num).unwrap_or_else(|| Value::from("neyman")),
            )
            .v("group1", rates_echo(self.metric, &self.rates_g1))
            .v("group2", rates_echo(self.metric, &self.rates_g2));
        f = match &self.source {
            RatesSource::Direct => f.s("rates_source", "config"),
            RatesSource::Pilot {
                path,
                privileged,
                comparison,
                n1,
                n2,
                ..
            } => f.v(
                "rates_source",
                Fields::new()
                    .s("pilot", path.display().to_string())
                    .s("privileged_group", privileged)
                    .s("comparison_group", comparison)
                    .u("n1", *n1)
                    .u("n2", *n2)
                    .build(),
            ),
        };
        f
    }

    fn warnings(&self) -> Vec<String> {
        match &self.source {
            RatesSource::Pilot { warnings, .. } => warnings.clone(),
            RatesSource::Direct => Vec::new(),
        }
    }
}

fn rates_echo(metric: MetricKind, r: &GroupRates) -> Value {
    let f = Fields::new().f("positive_pred_rate", r.positive_pred_rate());
    if metric == MetricKind::Dp && r.tpr() == 1.0 && r.tnr() == 1.0 {
        // DP-only rates; the remaining fields carry no information.
        return f.build();
    }
    f.f("prevalence", r.prevalence())
        .f("tpr", r.tpr())
        .f("tnr", r.tnr())
        .build()
}

fn design_outputs(out: &AuditDesignOutput, power: f64) -> Value {
    Fields::new()
        .f("n_real", out.n_real)
        .u("n_total", out.n_total)
        .u("n1", out.n1)
        .u("n2", out.n2)
        .f("p1", out.p1)
        .f("sigma_g1", out.sigma_g1)
        .f("sigma_g2", out.sigma_g2)
        .f("sigma2_g1", out.sigma_g1 * out.sigma_g1)
        .f("sigma2_g2", out.sigma_g2 * out.sigma_g2)
        .f("z_alpha", out.z_alpha)
        .f("z_beta", out.z_beta)
        .f("achieved_power", power)
        .build()
}

fn design(r: &Resolved) -> CliResult<(AuditDesignInput, AuditDesignOutput, f64)> {
    let input = r.design_input()?;
    let out = sample_size(&input)?;
    let power = achieved_power(
        input.metric,
        input.alpha,
        input.u_tol,
        input.tau,
        &input.rates_g1,
        &input.rates_g2,
        out.n1,
        out.n2,
    )?;
    Ok((input, out, power.value()))
}

pub fn cmd_design(config: &Path, o: &Overrides) -> CliResult<ReportDocument> {
    let (r, _) = Resolved::load(config, o)?;
    let (_, out, power) = design(&r)?;
    Ok(ReportDocument {
        command: "design".into(),
        inputs: r.echo().build(),
        outputs: design_outputs(&out, power),
        warnings: r.warnings(),
    })
}

fn counts_echo(c: &ConfusionCounts) -> Value {
    Fields::new()
        .u("tp", c.tp)
        .u("fp", c.fp)
        .u("fn", c.fn_)
        .u("tn", c.tn)
        .u("n", c.total())
        .build()
}

pub struct TestArgs<'a> {
    pub data: &'a Path,
    pub metric: &'a str,
    pub u_tol: f64,
    pub alpha: f64,
    pub privileged_group: &'a str,
    pub comparison_group: Option<&'a str>,
}

pub fn cmd_test(args: &TestArgs<'_>) -> CliResult<ReportDocument> {
    let metric: MetricKind = args
        .metric
        .parse()
        .map_err(|e: fairsize_core::AuditError| CliError::Config(e.to_string()))?;
    let alpha = probability("alpha", args.alpha)?;
    let u_tol = finite("u_tol", args.u_tol)?;
    let data = read_counts_from_path(args.data, metric.needs_true_labels())?;
    let pair = data.pair(args.privileged_group, args.comparison_group)?;
    let out = run_test(metric, &pair.c1, &pair.c2, u_tol, alpha)?;

    let inputs = Fields::new()
        .s("data", args.data.display().to_string())
        .s("metric", metric.as_str())
        .f("alpha", alpha.value())
        .f("u_tol", u_tol)
        .s("privileged_group", &pair.privileged)
        .s("comparison_group", &pair.comparison)
        .build();
    let outputs = Fields::new()
        .v("counts_g1", counts_echo(&pair.c1))
        .v("counts_g2", counts_echo(&pair.c2))
        .f("m_hat_g1", out.m_hat_g1)
        .f("m_hat_g2", out.m_hat_g2)
        .f("u_hat", out.u_hat)
        .f("sigma_hat", out.sigma_hat)
        .f("statistic", out.statistic)
        .f("critical_value", out.critical_value)
        .f("p_value", out.p_value.value())
        .b("reject", out.reject)
        .s(
            "decision",
            if out.reject {
                "reject H0: unfairness exceeds u_tol"
            } else {
                "fail to reject H0"
            },
        )
        .build();
    Ok(ReportDocument {
        command: "test".into(),
        inputs,
        outputs,
        warnings: pair.warnings,
    })
}

/// Simulation settings plus where n1/n2 came from.
fn sim_config(r: &Resolved, cfg: &AuditConfig, o: &Overrides) -> CliResult<(SimConfig, Fields)> {
    let sim = cfg.simulation.unwrap_or_default();
    let replicates = o.replicates.or(sim.replicates).unwrap_or(DEFAULT_REPLICATES);
    if replicates == 0 {
        return Err(CliError::Config("replicates must be at least 1".into()));
    }
    let seed = o.seed.or(sim.seed).unwrap_or(DEFAULT_SEED);
    let (n1, n2, n_source) = match (sim.n1, sim.n2) {
        (Some(n1), Some(n2)) => {
            if n1 == 0 || n2 == 0 {
                return Err(CliError::Config("simulation n1 and n2 must be at least 1".into()));
            }
            (n1, n2, "config")
        }
        (None, None) => {
            let (_, out, _) = design(r)?;
            (out.n1, out.n2, "design")
        }
        _ => {
            return Err(CliError::Config(
                "[simulation]: give both n1 and n2, or neither to use the design".into(),
            ))
        }
    };
    let config = SimConfig {
        population: r.population(),
        metric: r.metric,
        n1,
        n2,
        replicates,
        master_seed: seed,
        alpha: r.alpha,
        u_tol: r.u_tol,
    };
    let echo = r
        .echo()
        .u("n1", n1)
        .u("n2", n2)
        .s("n_source", n_source)
        .u("replicates", replicates as u64)
        .u("seed", seed);
    Ok((config, echo))
}

pub fn cmd_simulate(config: &Path, o: &Overrides) -> CliResult<ReportDocument> {
    let (r, cfg) = Resolved::load(config, o)?;
    let (sim, echo) = sim_config(&r, &cfg, o)?;
    let truth = sim.population.true_unfairness(sim.metric)?;
    let res = run_replicates(&sim)?;
    let predicted = achieved_power(
        sim.metric,
        sim.alpha,
        sim.u_tol,
        truth,
        &sim.population.rates_g1,
        &sim.population.rates_g2,
        sim.n1,
        sim.n2,
    )
    .ok()
    .map(Probability::value);

    let mut warnings = r.warnings();
    if res.undefined_replicates > 0 {
        warnings.push(format!(
            "{} of {} replicates had an undefined metric or zero standard error and were excluded",
            res.undefined_replicates, sim.replicates
        ));
    }
    let outputs = Fields::new()
        .f("true_unfairness", truth)
        .opt_f("predicted_rejection_rate", predicted)
        .f("rejection_rate", res.rejection_rate.value())
        .u("rejections", res.rejections as u64)
        .f("mean_u_hat", res.mean_u_hat)
        .f("empirical_var_g1", res.empirical_var_g1)
        .f("empirical_var_g2", res.empirical_var_g2)
        .u("undefined_replicates", res.undefined_replicates as u64)
        .u("replicates_used", res.replicates_used as u64)
        .build();
    Ok(ReportDocument {
        command: "simulate".into(),
        inputs: echo.build(),
        outputs,
        warnings,
    })
}

/// Draw one synthetic audit dataset and write it as CSV.
pub fn cmd_generate(config: &Path, o: &Overrides, out: &Path) -> CliResult<ReportDocument> {
    let (r, cfg) = Resolved::load(config, o)?;
    let (sim, echo) = sim_config(&r, &cfg, o)?;
    let c1 = draw_group_sample(&sim.population.rates_g1, sim.n1, derive_seed(sim.master_seed, 0, 1));
    let c2 = draw_group_sample(&sim.population.rates_g2, sim.n2, derive_seed(sim.master_seed, 0, 2));
    let file = std::fs::File::create(out).map_err(|e| CliError::io(out.display().to_string(), e))?;
    write_dataset(std::io::BufWriter::new(file), &[("g1", c1), ("g2", c2)])
        .map_err(|e| CliError::Data(format!("writing {}: {e}", out.display())))?;
    Ok(ReportDocument {
        command: "generate".into(),
        inputs: echo.s("out", out.display().to_string()).build(),
        outputs: Fields::new()
            .v("counts_g1", counts_echo(&c1))
            .v("counts_g2", counts_echo(&c2))
            .s("labels", "g1 (privileged), g2")
            .build(),
        warnings: r.warnings(),
    })
}

pub struct CurveArgs<'a> {
    pub config: &'a Path,
    pub n_min: u64,
    pub n_max: u64,
    pub steps: usize,
    pub out: &'a Path,
}

/// Evenly spaced totals from `n_min` to `n_max`, duplicates removed.
pub fn curve_grid(n_min: u64, n_max: u64, steps: usize) -> Vec<u64> {
    let span = (n_max - n_min) as f64;
    let mut grid: Vec<u64> = (0..steps)
        .map(|i| n_min + (span * i as f64 / (steps - 1) as f64).round() as u64)
        .collect();
    grid.dedup();
    grid
}

pub fn cmd_curve(args: &CurveArgs<'_>, o: &Overrides) -> CliResult<ReportDocument> {
    if args.n_min >= args.n_max {
        return Err(CliError::Config(format!(
            "n-min ({}) must be smaller than n-max ({})",
            args.n_min, args.n_max
        )));
    }
    if args.steps < 2 {
        return Err(CliError::Config(format!("steps must be at least 2, got {}", args.steps)));
    }
    if args.n_min < 2 {
        return Err(CliError::Config("n-min must be at least 2".into()));
    }
    let (r, _) = Resolved::load(args.config, o)?;
    let tau = r.require_tau()?;
    let allocation = match r.allocation {
        Some(a) => a,
        None => match r.beta {
            Some(_) => design(&r)?.1.p1,
            None => {
                let s1 = fairsize_core::group_variance(r.metric, &r.rates_g1)?.sqrt();
                let s2 = fairsize_core::group_variance(r.metric, &r.rates_g2)?.sqrt();
                fairsize_core::optimal_allocation(s1, s2)?
            }
        },
    };
    let grid = curve_grid(args.n_min, args.n_max, args.steps);
    let mut warnings = r.warnings();
    if grid.len() < args.steps {
        warnings.push(format!(
            "{} requested steps collapse to {} distinct sample sizes",
            args.steps,
            grid.len()
        ));
    }
    let curve = power_curve(r.metric, r.alpha, r.u_tol, tau, &r.rates_g1, &r.rates_g2, &grid, allocation)?;

    let mut csv = String::from("n,power\n");
    for (n, p) in &curve {
        csv.push_str(&format!("{n},{}\n", num(p.value())));
    }
    std::fs::write(args.out, csv).map_err(|e| CliError::io(args.out.display().to_string(), e))?;

    let target = r.beta.map(|b| 1.0 - b.value());
    let first_reaching = target.and_then(|t| curve.iter().find(|(_, p)| p.value() >= t).map(|(n, _)| *n));
    let (n1_last, n2_last) = split(*grid.last().unwrap(), *grid.last().unwrap() as f64, allocation);
    let outputs = Fields::new()
        .s("out", args.out.display().to_string())
        .u("rows", curve.len() as u64)
        .f("allocation", allocation)
        .f("power_at_n_min", curve[0].1.value())
        .f("power_at_n_max", curve.last().unwrap().1.value())
        .u("n1_at_n_max", n1_last)
        .u("n2_at_n_max", n2_last)
        .opt_f("target_power", target)
        .v(
            "first_n_reaching_target",
            first_reaching.map(Value::from).unwrap_or(Value::Null),
        )
        .build();
    Ok(ReportDocument {
        command: "curve".into(),
        inputs: r
            .echo()
            .u("n_min", args.n_min)
            .u("n_max", args.n_max)
            .u("steps", args.steps as u64)
            .build(),
        outputs,
        warnings,
    })
}
