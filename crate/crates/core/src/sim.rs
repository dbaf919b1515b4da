//! Synthetic data from the time-changed price model.
//!
//! Arrivals come from a nonhomogeneous Poisson process with intensity
//! `λ(t/T)`, the efficient log-price moves by `σ(t_i/T)·U_i` per transaction
//! (scaled by `T^{-1/2}` in the rescaled convention), and the observed price
//! carries additive noise, optionally followed by rounding to cents.

use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::curve::CurveSpec;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::series::TickSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Standard deviation of the additive noise.
    #[serde(default)]
    pub omega: f64,
    /// Fourth-moment ratio, `Var[ε²] = θ·ω⁴`. The simulator draws Gaussian
    /// noise, for which θ = 2; the field is carried as scenario metadata.
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Apply `Y = log(⌊100·(exp(X)+ε)⌋/100)`, with `ε` added in price space.
    #[serde(default)]
    pub rounding: bool,
}

fn default_theta() -> f64 {
    2.0
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            omega: 0.0,
            theta: 2.0,
            rounding: false,
        }
    }
}

impl NoiseModel {
    pub fn additive(omega: f64) -> Self {
        NoiseModel {
            omega,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(Error::Config(format!("noise omega must be >= 0, got {}", self.omega)));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::Config(format!("noise theta must be > 0, got {}", self.theta)));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.omega == 0.0 && !self.rounding
    }
}

/// Rounds `exp(x) + eps` down to whole cents and returns the log of the result,
/// or `None` when fewer than one cent remains.
pub fn round_to_cents(x: f64, eps: f64) -> Option<f64> {
    let cents = (100.0 * (x.exp() + eps)).floor();
    (cents >= 1.0).then(|| (cents / 100.0).ln())
}

/// Arrival times in `(0, T]` by Lewis–Shedler thinning against the constant
/// rate `sup λ`.
pub fn sample_nhpp(intensity: &CurveSpec, horizon: f64, seed: u64) -> Result<Vec<f64>> {
    intensity.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    let rate_max = intensity.upper_bound();
    if !(rate_max.is_finite() && rate_max > 0.0) {
        return Err(Error::InvalidCurve(format!("intensity bound {rate_max} is not usable")));
    }

    let mut rng = stream_rng(seed, Stream::Arrivals);
    let mut times = Vec::with_capacity((rate_max * horizon * 1.1) as usize + 16);
    let mut t = 0.0;
    loop {
        let gap: f64 = Exp1.sample(&mut rng);
        t += gap / rate_max;
        if t > horizon {
            break;
        }
        let rate = intensity.eval(t / horizon);
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidCurve(format!("intensity {rate} at u={}", t / horizon)));
        }
        let accept: f64 = rng.random();
        if accept * rate_max < rate && times.last().is_none_or(|&last| t > last) {
            times.push(t);
        }
    }
    Ok(times)
}

/// Efficient log-prices at the given arrival times.
pub fn sample_tick_path(
    sigma2: &CurveSpec,
    times: &[f64],
    horizon: f64,
    rescaled: bool,
    x0: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    sigma2.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSeries("arrival times must be strictly increasing".into()));
    }
    let scale = if rescaled { horizon.sqrt().recip() } else { 1.0 };
    let mut rng = stream_rng(seed, Stream::Increments);
    let mut x = x0;
    let path = times
        .iter()
        .map(|&t| {
            let z: f64 = StandardNormal.sample(&mut rng);
            x += sigma2.eval(t / horizon).sqrt() * scale * z;
            x
        })
        .collect();
    Ok(path)
}

/// Observed log-prices from latent ones.
pub fn apply_noise(latent: &[f64], model: &NoiseModel, seed: u64) -> Result<Vec<f64>> {
    model.validate()?;
    if let Some(i) = latent.iter().position(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("latent log-price at index {i} is not finite")));
    }
    if model.is_identity() {
        return Ok(latent.to_vec());
    }
    let mut rng = stream_rng(seed, Stream::Noise);
    latent
        .iter()
        .enumerate()
        .map(|(index, &x)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let eps = model.omega * z;
            if model.rounding {
                round_to_cents(x, eps).ok_or(Error::RoundingDomain {
                    index,
                    price: x.exp() + eps,
                })
            } else {
                Ok(x + eps)
            }
        })
        .collect()
}

/// Simulation settings, as read from a TOML config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// Clock-time span `T` in seconds. May be omitted when arrivals come from a file.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Scale increments by `T^{-1/2}`.
    #[serde(default = "default_rescaled")]
    pub rescaled: bool,
    #[serde(default)]
    pub x0: f64,
    pub sigma2: CurveSpec,
    /// Required unless `arrivals_file` is set.
    #[serde(default)]
    pub intensity: Option<CurveSpec>,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Series CSV whose times replace the Poisson arrivals.
    #[serde(default)]
    pub arrivals_file: Option<PathBuf>,
}

fn default_rescaled() -> bool {
    true
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.sigma2.validate()?;
        self.noise.validate()?;
        if let Some(l) = &self.intensity {
            l.validate()?;
        }
        if self.arrivals_file.is_none() && self.intensity.is_none() {
            return Err(Error::Config("`intensity` is required without `arrivals_file`".into()));
        }
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Config(format!("horizon must be positive, got {h}")));
            }
        }
        if !self.x0.is_finite() {
            return Err(Error::Config("x0 must be finite".into()));
        }
        Ok(())
    }
}

/// Simulates a full series with Poisson arrivals.
pub fn simulate(cfg: &SimConfig) -> Result<TickSeries> {
    cfg.validate()?;
    let intensity = cfg
        .intensity
        .as_ref()
        .ok_or_else(|| Error::Config("`intensity` is required for Poisson arrivals".into()))?;
    let horizon = cfg
        .horizon
        .ok_or_else(|| Error::Config("`horizon` is required for Poisson arrivals".into()))?;
    let times = sample_nhpp(intensity, horizon, cfg.seed)?;
    simulate_prices(cfg, times, horizon)
}

/// Simulates prices on externally supplied arrival times.
pub fn simulate_with_arrivals(cfg: &SimConfig, times: Vec<f64>, horizon: f64) -> Result<TickSeries> {
    cfg.validate()?;
    if let Some(h) = cfg.horizon {
        if h != horizon {
            return Err(Error::Config(format!(
                "config horizon {h} differs from the arrivals horizon {horizon}"
            )));
        }
    }
    simulate_prices(cfg, times, horizon)
}

fn simulate_prices(cfg: &SimConfig, times: Vec<f64>, horizon: f64) -> Result<TickSeries> {
    let latent = sample_tick_path(&cfg.sigma2, &times, horizon, cfg.rescaled, cfg.x0, cfg.seed)?;
    let observed = apply_noise(&latent, &cfg.noise, cfg.seed)?;
    TickSeries::new(horizon, times, observed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_intensity_is_invalid() {
        let c = CurveSpec::Constant { value: 0.0 };
        assert!(matches!(sample_nhpp(&c, 100.0, 1), Err(Error::InvalidCurve(_))));
    }

    #[test]
    fn arrivals_are_strictly_increasing_within_horizon() {
        let c = CurveSpec::cosine_log(0.0, 10.0).unwrap();
        let t = sample_nhpp(&c, 500.0, 3).unwrap();
        assert!(!t.is_empty());
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert!(t[0] > 0.0 && *t.last().unwrap() <= 500.0);
    }

    #[test]
    fn empty_times_give_empty_path() {
        let s = CurveSpec::constant(2.0).unwrap();
        assert!(sample_tick_path(&s, &[], 10.0, true, 0.0, 1).unwrap().is_empty());
    }

    #[test]
    fn path_starts_from_x0() {
        let s = CurveSpec::constant(1e-12).unwrap();
        let p = sample_tick_path(&s, &[1.0], 10.0, false, 3.0, 1).unwrap();
        assert!((p[0] - 3.0).abs() < 1e-4);
    }

    #[test]
    fn identity_noise() {
        let x = vec![0.1, -0.2, 0.3];
        assert_eq!(apply_noise(&x, &NoiseModel::default(), 9).unwrap(), x);
    }

    #[test]
    fn cent_rounding_examples() {
        assert_eq!(round_to_cents(0.0, 0.0), Some(0.0));
        assert_eq!(round_to_cents(0.0, 0.0049), Some(0.0));
        assert_eq!(round_to_cents(0.0, 0.0149), Some(1.01f64.ln()));
        assert_eq!(round_to_cents((0.005f64).ln(), 0.0), None);
    }

    #[test]
    fn rounding_below_one_cent_reports_index() {
        let model = NoiseModel {
            omega: 0.0,
            theta: 2.0,
            rounding: true,
        };
        let latent = [0.0, (0.004f64).ln()];
        match apply_noise(&latent, &model, 1) {
            Err(Error::RoundingDomain { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn noise_toggle_does_not_move_arrivals() {
        let base = SimConfig {
            seed: 5,
            horizon: Some(200.0),
            rescaled: true,
            x0: 0.0,
            sigma2: CurveSpec::constant(1.0).unwrap(),
            intensity: Some(CurveSpec::constant(1.0).unwrap()),
            noise: NoiseModel::default(),
            arrivals_file: None,
        };
        let noisy = SimConfig {
            noise: NoiseModel::additive(0.01),
            ..base.clone()
        };
        let a = simulate(&base).unwrap();
        let b = simulate(&noisy).unwrap();
        assert_eq!(a.times(), b.times());
        assert_ne!(a.log_prices(), b.log_prices());
    }

    #[test]
    fn config_requires_intensity_or_file() {
        let text = "seed = 1\nhorizon = 10.0\n[sigma2]\nkind = \"constant\"\nvalue = 1.0\n";
        let cfg = SimConfig::from_toml(text).unwrap();
        assert!(cfg.validate().is_err());
    }
}
