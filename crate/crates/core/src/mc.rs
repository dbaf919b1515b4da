//! Replicated simulate-then-estimate runs compared against asymptotic targets.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    clock_bias_target, clock_variance_target, comparison_case, decomposed_variance_target,
    decomposition_regime, intensity_variance_target, product_second_derivative, smoothed_mean,
    c1_ratio, tick_variance_target, ComparisonCase, ComparisonOutcome, Regime, Smoothness,
};
use crate::curve::CurveSpec;
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorConfig, EstimatorTag};
use crate::rng::replication_seed;
use crate::series::TickSeries;
use crate::sim::{simulate, NoiseModel, SimConfig};

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessPair {
    pub sigma2: Smoothness,
    pub lambda: Smoothness,
}

/// A pass/fail band attached to a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// Empirical over theoretical variance of the rate-scaled error in `[lo, hi]`.
    VarianceRatio { estimator: EstimatorTag, lo: f64, hi: f64 },
    /// Mean within `k` standard errors of `target` (the report's centre if omitted).
    MeanWithinSe {
        estimator: EstimatorTag,
        k: f64,
        #[serde(default)]
        target: Option<f64>,
    },
    /// Mean within relative tolerance `tol` of `target`.
    MeanRelative { estimator: EstimatorTag, target: f64, tol: f64 },
    /// Share of replications where the decomposed estimator beats the
    /// classical clock-time estimator is at least `min`.
    WinFraction { min: f64 },
    /// `MSE(decomposed) / MSE(clock)` is below `max`.
    MseRatio { max: f64 },
}

impl Check {
    /// The estimator whose report this check reads; `None` for head-to-head checks.
    pub fn estimator(&self) -> Option<EstimatorTag> {
        match self {
            Check::VarianceRatio { estimator, .. }
            | Check::MeanWithinSe { estimator, .. }
            | Check::MeanRelative { estimator, .. } => Some(*estimator),
            Check::WinFraction { .. } | Check::MseRatio { .. } => None,
        }
    }

    pub fn evaluate(&self, reports: &[MCReport], comparison: Option<&ComparisonReport>) -> CheckResult {
        let report = || {
            let tag = self.estimator().expect("per-estimator check");
            reports.iter().find(|r| r.estimator == tag)
        };
        let (passed, observed, description) = match *self {
            Check::VarianceRatio { lo, hi, .. } => {
                let ratio = report().and_then(|r| r.ratio).unwrap_or(f64::NAN);
                (
                    ratio >= lo && ratio <= hi,
                    ratio,
                    format!("variance ratio in [{lo}, {hi}]"),
                )
            }
            Check::MeanWithinSe { k, target, .. } => {
                let (z, t) = report().map_or((f64::NAN, f64::NAN), |r| {
                    let t = target.unwrap_or(r.centre);
                    ((r.mean - t) / r.standard_error, t)
                });
                (z.abs() <= k, z, format!("mean within {k} SE of {t}"))
            }
            Check::MeanRelative { target, tol, .. } => {
                let rel = report().map_or(f64::NAN, |r| (r.mean - target) / target);
                (rel.abs() <= tol, rel, format!("mean within {tol} relative of {target}"))
            }
            Check::WinFraction { min } => {
                let w = comparison.map_or(f64::NAN, |c| c.win_fraction);
                (w >= min, w, format!("decomposed win fraction >= {min}"))
            }
            Check::MseRatio { max } => {
                let r = comparison.map_or(f64::NAN, |c| c.mse_ratio);
                (r < max, r, format!("decomposed/clock MSE ratio < {max}"))
            }
        };
        CheckResult {
            estimator: self.estimator().unwrap_or(EstimatorTag::Decomposed),
            description,
            observed,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub estimator: EstimatorTag,
    pub description: String,
    pub observed: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub sigma2: CurveSpec,
    pub lambda: CurveSpec,
    #[serde(default)]
    pub noise: NoiseModel,
    pub horizon: f64,
    #[serde(default = "default_true")]
    pub rescaled: bool,
    #[serde(default)]
    pub x0: f64,
    /// Block size ratio; the estimator block size must equal `⌊δ√T⌋`.
    pub delta: f64,
    pub estimator: EstimatorConfig,
    pub u0: f64,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub smoothness: Option<SmoothnessPair>,
    #[serde(default)]
    pub checks: Vec<Check>,
}

fn default_true() -> bool {
    true
}

/// Block size `⌊δ√T⌋`, at least 2.
pub fn block_size_for(delta: f64, horizon: f64) -> usize {
    ((delta * horizon.sqrt()).floor() as usize).max(2)
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scenario `{}`: {m}", self.name)));
        self.sigma2.validate()?;
        self.lambda.validate()?;
        self.noise.validate()?;
        self.estimator.validate()?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.replications < 2 {
            return bad(format!("needs at least 2 replications, got {}", self.replications));
        }
        let edge = self.estimator.intensity_bandwidth.max(self.estimator.clock_bandwidth);
        if !(self.u0 > edge && self.u0 < 1.0 - edge) {
            return bad(format!("u0={} is not inside ({edge}, {})", self.u0, 1.0 - edge));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        let h = self.estimator.block_size() as f64;
        let target = self.delta * self.horizon.sqrt();
        if (h - target).abs() >= 1.0 {
            return bad(format!("block size {h} does not match delta*sqrt(T) = {target}"));
        }
        if let Some(s) = &self.smoothness {
            s.sigma2.validate()?;
            s.lambda.validate()?;
        }
        Ok(())
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            seed,
            horizon: Some(self.horizon),
            rescaled: self.rescaled,
            x0: self.x0,
            sigma2: self.sigma2.clone(),
            intensity: Some(self.lambda.clone()),
            noise: self.noise.clone(),
            arrivals_file: None,
        }
    }

    /// Rescaled-estimator output per model unit: `T` when increments are
    /// not rescaled.
    fn model_factor(&self) -> f64 {
        if self.rescaled {
            1.0
        } else {
            self.horizon
        }
    }

    /// Estimator output per model unit.
    fn unit(&self) -> f64 {
        self.model_factor() * self.estimator.scale.factor(self.horizon)
    }

    pub fn regime(&self) -> Regime {
        self.smoothness
            .map_or(Regime::TickDominated, |s| decomposition_regime(s.sigma2, s.lambda))
    }

    pub fn comparison_case(&self) -> Option<ComparisonCase> {
        self.smoothness.map(|s| comparison_case(s.sigma2, s.lambda))
    }

    /// Theoretical mean, rate and variance target for one estimator.
    pub fn target(&self, which: EstimatorTag) -> Result<Target> {
        let cfg = &self.estimator;
        let t = self.horizon;
        let s2 = self.sigma2.eval(self.u0);
        let lam = self.lambda.eval(self.u0);
        let omega2 = self.noise.omega * self.noise.omega;
        // Unrescaled paths are rescaled paths times √T, so relative to the
        // increments the noise variance is ω²/T.
        let (s2_model, omega2_model) = if self.rescaled {
            (s2, omega2)
        } else {
            (s2, omega2 / t)
        };
        let delta = self.delta;
        let tick_rate = (cfg.tick_window as f64 / t.sqrt()).sqrt();
        let intensity_rate = (cfg.intensity_bandwidth * t).sqrt();
        let unit = self.unit();
        let model_factor = self.model_factor();
        let smooth = self.smoothness.is_some_and(|s| s.sigma2.m == 2 && s.lambda.m == 2);
        Ok(match which {
            EstimatorTag::Intensity => Target {
                truth: lam,
                centre: smoothed_mean(&self.lambda, self.u0, cfg.intensity_bandwidth, cfg.intensity_kernel),
                unit: 1.0,
                rate: intensity_rate,
                variance: Some(intensity_variance_target(lam, cfg.intensity_kernel)),
            },
            EstimatorTag::ClockPavg => {
                let bias = clock_bias_target(
                    product_second_derivative(&self.sigma2, &self.lambda, self.u0),
                    cfg.clock_bandwidth,
                    cfg.clock_kernel,
                    smooth,
                );
                Target {
                    truth: s2 * lam,
                    centre: s2 * lam + bias,
                    unit,
                    rate: (cfg.clock_bandwidth * t.sqrt()).sqrt(),
                    variance: Some(
                        clock_variance_target(s2_model, lam, omega2_model, delta, cfg.clock_kernel, &cfg.weight)?
                            .total,
                    ),
                }
            }
            EstimatorTag::TickPavg => Target {
                truth: s2,
                centre: s2,
                unit,
                rate: tick_rate,
                variance: Some(
                    tick_variance_target(s2_model, omega2_model, delta, cfg.tick_kernel, &cfg.weight)?.total,
                ),
            },
            EstimatorTag::Decomposed => {
                let regime = self.regime();
                let rate = match regime {
                    Regime::TickDominated => tick_rate,
                    _ => intensity_rate,
                };
                Target {
                    truth: s2 * lam,
                    centre: s2 * lam,
                    unit,
                    rate,
                    variance: Some(decomposed_variance_target(
                        regime,
                        s2_model,
                        lam,
                        omega2_model,
                        delta,
                        cfg.tick_kernel,
                        cfg.intensity_kernel,
                        &cfg.weight,
                        c1_ratio(cfg.intensity_bandwidth, t, cfg.tick_window),
                    )?),
                }
            }
            EstimatorTag::RealizedVol => Target {
                truth: s2 * lam,
                centre: s2 * lam + 2.0 * t * omega2 * lam / model_factor,
                unit,
                rate: 1.0,
                variance: None,
            },
            EstimatorTag::NoiseVar => Target {
                truth: omega2,
                centre: omega2 + s2 * model_factor / (2.0 * t),
                unit: 1.0,
                rate: 1.0,
                variance: None,
            },
        })
    }
}

/// Where an estimator should land and how its error is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    /// Value of the estimated curve at `u₀`, in model units.
    pub truth: f64,
    /// Value the error is measured from, in model units.
    pub centre: f64,
    /// Estimator output per model unit.
    pub unit: f64,
    /// Rate multiplying the error in the central limit theorem.
    pub rate: f64,
    /// Asymptotic variance of the rate-scaled error, if one is known.
    pub variance: Option<f64>,
}

/// Scenario registry file: a list of `[[scenario]]` tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registry {
    #[serde(default)]
    pub scenario: Vec<Scenario>,
}

impl Registry {
    pub fn from_toml(text: &str) -> Result<Self> {
        let reg: Registry = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut seen = BTreeMap::new();
        for s in &reg.scenario {
            if seen.insert(s.name.as_str(), ()).is_some() {
                return Err(Error::Config(format!("duplicate scenario `{}`", s.name)));
            }
        }
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn names(&self) -> Vec<&str> {
        self.scenario.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Scenario> {
        self.scenario.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub index: usize,
    pub reason: String,
}

/// Runs `f` on `R` independently seeded simulations, in parallel, returning
/// outcomes in replication order.
pub fn replicate<T, F>(s: &Scenario, f: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(&TickSeries) -> Result<T> + Sync,
{
    s.validate()?;
    Ok((0..s.replications)
        .into_par_iter()
        .map(|i| {
            let cfg = s.sim_config(replication_seed(s.master_seed, i as u64));
            simulate(&cfg).and_then(|series| f(&series))
        })
        .collect())
}

/// Splits outcomes into values and failures, aborting above the failure cap.
pub fn collect_outcomes<T>(name: &str, outcomes: Vec<Result<T>>) -> Result<(Vec<Option<T>>, Vec<ReplicationFailure>)> {
    let total = outcomes.len();
    let mut values = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for (index, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => values.push(Some(v)),
            Err(e) => {
                values.push(None);
                failures.push(ReplicationFailure {
                    index,
                    reason: e.to_string(),
                });
            }
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::ScenarioAborted {
            name: name.to_owned(),
            failed: failures.len(),
            total,
            first_reason: failures[0].reason.clone(),
        });
    }
    Ok((values, failures))
}

/// Sample moments of a slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl Moments {
    pub fn of(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for v in x {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let (m2n, m3n, m4n) = (m2 / n, m3 / n, m4 / n);
        Moments {
            n: x.len(),
            mean,
            variance: m2 / (n - 1.0),
            skewness: m3n / m2n.powf(1.5),
            excess_kurtosis: m4n / (m2n * m2n) - 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub seconds_per_replication: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub scenario: String,
    pub estimator: EstimatorTag,
    pub replications: usize,
    /// Raw estimates by replication index; `None` for failures.
    pub estimates: Vec<Option<f64>>,
    pub failures: Vec<ReplicationFailure>,
    pub truth: f64,
    /// Expected value the errors are measured from, in estimator units.
    pub centre: f64,
    pub mean: f64,
    pub standard_error: f64,
    pub bias: f64,
    pub rate: f64,
    /// Empirical variance of `rate·(estimate − centre)` in model units.
    pub scaled_error_variance: f64,
    pub target_variance: Option<f64>,
    pub ratio: Option<f64>,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub regime: Option<Regime>,
    /// Wall-clock figures; everything else is a pure function of the scenario.
    pub timing: Timing,
}

impl MCReport {
    fn build(
        s: &Scenario,
        which: EstimatorTag,
        estimates: Vec<Option<f64>>,
        failures: Vec<ReplicationFailure>,
        wall: f64,
    ) -> Result<Self> {
        let target = s.target(which)?;
        let ok: Vec<f64> = estimates.iter().flatten().copied().collect();
        let m = Moments::of(&ok);
        let centre = target.centre * target.unit;
        let scaled: Vec<f64> = ok
            .iter()
            .map(|v| target.rate * (v - centre) / target.unit)
            .collect();
        let sm = Moments::of(&scaled);
        let ratio = target.variance.map(|v| sm.variance / v);
        Ok(MCReport {
            scenario: s.name.clone(),
            estimator: which,
            replications: s.replications,
            estimates,
            failures,
            truth: target.truth * target.unit,
            centre,
            mean: m.mean,
            standard_error: (m.variance / m.n as f64).sqrt(),
            bias: m.mean - centre,
            rate: target.rate,
            scaled_error_variance: sm.variance,
            target_variance: target.variance,
            ratio,
            skewness: sm.skewness,
            excess_kurtosis: sm.excess_kurtosis,
            regime: (which == EstimatorTag::Decomposed).then(|| s.regime()),
            timing: Timing {
                wall_seconds: wall,
                seconds_per_replication: wall / s.replications as f64,
            },
        })
    }

    /// Same statistics, ignoring wall-clock timing.
    pub fn same_results(&self, other: &MCReport) -> bool {
        let mut a = self.clone();
        a.timing = other.timing;
        a == *other
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{:<24} {:<13} n={:<5} mean={:<12.6e} se={:<10.3e} var={:<10.4} target={:<10} ratio={}",
            self.scenario,
            self.estimator.name(),
            self.estimates.iter().flatten().count(),
            self.mean,
            self.standard_error,
            self.scaled_error_variance,
            self.target_variance.map_or("-".into(), |v| format!("{v:.4}")),
            self.ratio.map_or("-".into(), |r| format!("{r:.4}")),
        )
    }
}

/// Runs every replication of `s` and summarizes one estimator at `s.u0`.
pub fn run_scenario(s: &Scenario, which: EstimatorTag) -> Result<MCReport> {
    let start = Instant::now();
    let outcomes = replicate(s, |series| estimate(series, s.u0, &s.estimator, which))?;
    let (estimates, failures) = collect_outcomes(&s.name, outcomes)?;
    MCReport::build(s, which, estimates, failures, start.elapsed().as_secs_f64())
}

/// Runs several estimators on the same simulated paths.
pub fn run_scenario_multi(s: &Scenario, which: &[EstimatorTag]) -> Result<Vec<MCReport>> {
    let start = Instant::now();
    let outcomes = replicate(s, |series| {
        which
            .iter()
            .map(|&w| estimate(series, s.u0, &s.estimator, w))
            .collect::<Result<Vec<f64>>>()
    })?;
    let (values, failures) = collect_outcomes(&s.name, outcomes)?;
    let wall = start.elapsed().as_secs_f64();
    which
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            let est = values.iter().map(|v| v.as_ref().map(|v| v[j])).collect();
            MCReport::build(s, w, est, failures.clone(), wall)
        })
        .collect()
}

/// Head-to-head of the classical and decomposed clock-time estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub truth: f64,
    pub clock_sq_errors: Vec<Option<f64>>,
    pub decomposed_sq_errors: Vec<Option<f64>>,
    pub failures: Vec<ReplicationFailure>,
    pub mse_clock: f64,
    pub mse_decomposed: f64,
    /// `MSE(decomposed) / MSE(clock)`.
    pub mse_ratio: f64,
    /// Share of replications where the decomposed estimator is closer.
    pub win_fraction: f64,
    /// Empirical variance of decomposed over classical estimates.
    pub variance_ratio: f64,
    pub case: Option<ComparisonCase>,
    pub outcome: Option<ComparisonOutcome>,
}

pub fn compare_estimators(s: &Scenario) -> Result<ComparisonReport> {
    let truth = s.target(EstimatorTag::ClockPavg)?.truth * s.unit();
    let outcomes = replicate(s, |series| {
        let c = estimate(series, s.u0, &s.estimator, EstimatorTag::ClockPavg)?;
        let d = estimate(series, s.u0, &s.estimator, EstimatorTag::Decomposed)?;
        Ok((c, d))
    })?;
    let (values, failures) = collect_outcomes(&s.name, outcomes)?;
    let pairs: Vec<(f64, f64)> = values.iter().flatten().copied().collect();
    let n = pairs.len() as f64;
    let sq = |v: f64| (v - truth) * (v - truth);
    let mse_clock = pairs.iter().map(|p| sq(p.0)).sum::<f64>() / n;
    let mse_decomposed = pairs.iter().map(|p| sq(p.1)).sum::<f64>() / n;
    let wins = pairs.iter().filter(|p| sq(p.1) < sq(p.0)).count() as f64;
    let vc = Moments::of(&pairs.iter().map(|p| p.0).collect::<Vec<_>>()).variance;
    let vd = Moments::of(&pairs.iter().map(|p| p.1).collect::<Vec<_>>()).variance;
    let case = s.comparison_case();
    Ok(ComparisonReport {
        scenario: s.name.clone(),
        truth,
        clock_sq_errors: values.iter().map(|v| v.map(|p| sq(p.0))).collect(),
        decomposed_sq_errors: values.iter().map(|v| v.map(|p| sq(p.1))).collect(),
        failures,
        mse_clock,
        mse_decomposed,
        mse_ratio: mse_decomposed / mse_clock,
        win_fraction: wins / n,
        variance_ratio: vd / vc,
        case,
        outcome: case.map(ComparisonCase::outcome),
    })
}

/// Everything a scenario's checks were evaluated against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutcome {
    pub reports: Vec<MCReport>,
    pub comparison: Option<ComparisonReport>,
    pub checks: Vec<CheckResult>,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Runs what a scenario's checks refer to and evaluates them.
pub fn validate_scenario(s: &Scenario) -> Result<ScenarioOutcome> {
    let mut tags: Vec<EstimatorTag> = Vec::new();
    for tag in s.checks.iter().filter_map(Check::estimator) {
        if !tags.contains(&tag) {
            tags.push(tag);
        }
    }
    let reports = if tags.is_empty() {
        s.validate()?;
        Vec::new()
    } else {
        run_scenario_multi(s, &tags)?
    };
    let comparison = if s.checks.iter().any(|c| c.estimator().is_none()) {
        Some(compare_estimators(s)?)
    } else {
        None
    };
    let checks = s
        .checks
        .iter()
        .map(|c| c.evaluate(&reports, comparison.as_ref()))
        .collect();
    Ok(ScenarioOutcome {
        reports,
        comparison,
        checks,
    })
}
