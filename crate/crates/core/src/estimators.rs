//! Pointwise spot estimators on a [`TickSeries`].
//!
//! All volatility estimators are implemented in the rescaled form, where a
//! clock-time volatility estimate targets `σ²(u)·λ(u)` and a tick-time estimate
//! targets `σ²(u)`. [`VolScale::ClockSeconds`] divides volatility outputs by
//! `T`, which turns them into per-second and per-transaction variances for
//! data that follow the unrescaled model (real prices, in particular).
//!
//! Bandwidths are half-widths in rescaled time: a clock bandwidth `b` covers
//! `(u₀T − bT, u₀T + bT)`, i.e. `M = bT` seconds per side.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{pre_averaged_at, KernelSpec, PreAvgWeight};
use crate::series::TickSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorTag {
    Intensity,
    ClockPavg,
    TickPavg,
    Decomposed,
    NoiseVar,
    RealizedVol,
}

impl EstimatorTag {
    pub const ALL: [EstimatorTag; 6] = [
        EstimatorTag::Intensity,
        EstimatorTag::ClockPavg,
        EstimatorTag::TickPavg,
        EstimatorTag::Decomposed,
        EstimatorTag::NoiseVar,
        EstimatorTag::RealizedVol,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorTag::Intensity => "intensity",
            EstimatorTag::ClockPavg => "clock_pavg",
            EstimatorTag::TickPavg => "tick_pavg",
            EstimatorTag::Decomposed => "decomposed",
            EstimatorTag::NoiseVar => "noise_var",
            EstimatorTag::RealizedVol => "realized_vol",
        }
    }

    /// Whether the output is a variance that [`VolScale`] applies to.
    pub fn is_volatility(self) -> bool {
        !matches!(self, EstimatorTag::Intensity | EstimatorTag::NoiseVar)
    }
}

impl std::str::FromStr for EstimatorTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorTag::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

impl std::fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Output scale of the volatility estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolScale {
    /// Rescaled-model units.
    #[default]
    Rescaled,
    /// Per clock second / per transaction: the rescaled value divided by `T`.
    ClockSeconds,
}

impl VolScale {
    pub fn factor(self, horizon: f64) -> f64 {
        match self {
            VolScale::Rescaled => 1.0,
            VolScale::ClockSeconds => horizon.recip(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Intensity bandwidth as a fraction of `[0, 1]`.
    pub intensity_bandwidth: f64,
    /// Clock-time volatility bandwidth as a fraction of `[0, 1]`.
    pub clock_bandwidth: f64,
    /// Pre-averaged terms per side of the evaluation tick.
    pub tick_window: usize,
    pub weight: PreAvgWeight,
    #[serde(default)]
    pub intensity_kernel: KernelSpec,
    #[serde(default)]
    pub clock_kernel: KernelSpec,
    #[serde(default)]
    pub tick_kernel: KernelSpec,
    #[serde(default)]
    pub grid: Vec<f64>,
    #[serde(default)]
    pub scale: VolScale,
}

impl EstimatorConfig {
    /// Epanechnikov kernels, parabolic weight, empty grid, rescaled output.
    pub fn new(
        intensity_bandwidth: f64,
        clock_bandwidth: f64,
        tick_window: usize,
        block_size: usize,
    ) -> Result<Self> {
        let cfg = EstimatorConfig {
            intensity_bandwidth,
            clock_bandwidth,
            tick_window,
            weight: PreAvgWeight::parabolic(block_size)?,
            intensity_kernel: KernelSpec::Epanechnikov,
            clock_kernel: KernelSpec::Epanechnikov,
            tick_kernel: KernelSpec::Epanechnikov,
            grid: Vec::new(),
            scale: VolScale::Rescaled,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The data-analysis defaults: both bandwidths cover `window_seconds` per
    /// side, the tick window covers the same range at the average trading
    /// rate, `H = 15`, per-second output scale.
    pub fn data_defaults(series: &TickSeries, window_seconds: f64) -> Result<Self> {
        let frac = window_seconds / series.horizon();
        let n = tick_window_for(window_seconds, series.len(), series.horizon());
        let mut cfg = EstimatorConfig::new(frac, frac, n.max(15), 15)?;
        cfg.scale = VolScale::ClockSeconds;
        Ok(cfg)
    }

    pub fn block_size(&self) -> usize {
        self.weight.block_size()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in [
            ("intensity_bandwidth", self.intensity_bandwidth),
            ("clock_bandwidth", self.clock_bandwidth),
        ] {
            if !(b > 0.0 && b <= 0.5) {
                return Err(Error::Config(format!("{name} must lie in (0, 1/2], got {b}")));
            }
        }
        let h = self.block_size();
        if self.tick_window < h {
            return Err(Error::Config(format!(
                "tick_window {} must be at least the block size {h}",
                self.tick_window
            )));
        }
        if let Some(u) = self.grid.iter().find(|u| !u.is_finite()) {
            return Err(Error::Config(format!("grid point {u} is not finite")));
        }
        Ok(())
    }

    /// Evenly spaced points strictly inside `(max(𝔟, b), 1 − max(𝔟, b))`.
    pub fn interior_grid(&self, points: usize) -> Vec<f64> {
        let lo = self.intensity_bandwidth.max(self.clock_bandwidth);
        let hi = 1.0 - lo;
        (1..=points)
            .map(|j| lo + (hi - lo) * j as f64 / (points + 1) as f64)
            .collect()
    }
}

/// Tick window covering `window_seconds` at the average rate `n_trades / T`.
pub fn tick_window_for(window_seconds: f64, n_trades: usize, horizon: f64) -> usize {
    (window_seconds * n_trades as f64 / horizon).floor() as usize
}

/// The two summands of a pre-averaging estimator before subtraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PavgTerms {
    /// Kernel-weighted sum of squared pre-averaged increments.
    pub first: f64,
    /// Noise bias correction from squared raw increments.
    pub correction: f64,
}

impl PavgTerms {
    pub fn value(&self) -> f64 {
        self.first - self.correction
    }

    fn scaled(self, factor: f64) -> Self {
        PavgTerms {
            first: self.first * factor,
            correction: self.correction * factor,
        }
    }
}

fn check_interior(u0: f64, bandwidth: f64) -> Result<()> {
    if u0 > bandwidth && u0 < 1.0 - bandwidth {
        Ok(())
    } else {
        Err(Error::Boundary {
            u0,
            lo: bandwidth,
            hi: 1.0 - bandwidth,
        })
    }
}

/// Indices and kernel weights of ticks inside `(u0·T − bT, u0·T + bT)`.
fn kernel_window<'a>(
    series: &'a TickSeries,
    u0: f64,
    bandwidth: f64,
    kernel: KernelSpec,
) -> impl Iterator<Item = (usize, f64)> + 'a {
    let horizon = series.horizon();
    let centre = u0 * horizon;
    let width = bandwidth * horizon;
    let times = series.times();
    series
        .open_window(centre - width, centre + width)
        .map(move |i| (i, kernel.eval((times[i] - centre) / width)))
}

/// Kernel estimate of the trading intensity at `u0`, in trades per second.
pub fn estimate_intensity(series: &TickSeries, u0: f64, cfg: &EstimatorConfig) -> Result<f64> {
    let b = cfg.intensity_bandwidth;
    check_interior(u0, b)?;
    let sum: f64 = kernel_window(series, u0, b, cfg.intensity_kernel)
        .map(|(_, k)| k)
        .sum();
    Ok(sum / (b * series.horizon()))
}

fn raw_clock_terms(series: &TickSeries, u0: f64, cfg: &EstimatorConfig) -> Result<PavgTerms> {
    let b = cfg.clock_bandwidth;
    check_interior(u0, b)?;
    let y = series.log_prices();
    let h = cfg.block_size();
    let c = cfg.weight.constants();
    let mut squares = 0.0;
    let mut raw = 0.0;
    for (i, k) in kernel_window(series, u0, b, cfg.clock_kernel) {
        // Blocks running past the end of the series are dropped.
        if i + h - 1 < y.len() {
            let d = pre_averaged_at(y, i, &cfg.weight);
            squares += k * d * d;
        }
        // The first tick has no predecessor.
        if i >= 1 {
            let d = y[i] - y[i - 1];
            raw += k * d * d;
        }
    }
    let hf = h as f64;
    Ok(PavgTerms {
        first: squares / (b * hf * c.g2),
        correction: raw * c.sum_h2 / (2.0 * b * hf * c.g2),
    })
}

/// Both summands of the classical pre-averaging clock-time estimator.
pub fn clock_vol_terms(series: &TickSeries, u0: f64, cfg: &EstimatorConfig) -> Result<PavgTerms> {
    Ok(raw_clock_terms(series, u0, cfg)?.scaled(cfg.scale.factor(series.horizon())))
}

/// Classical pre-averaging estimate of clock-time volatility at `u0`.
/// Bias correction can push it below zero; the value is returned as is.
pub fn estimate_clock_vol_pavg(series: &TickSeries, u0: f64, cfg: &EstimatorConfig) -> Result<f64> {
    Ok(clock_vol_terms(series, u0, cfg)?.value())
}

/// Index of the first tick at or after `u0·T`.
pub fn evaluation_index(series: &TickSeries, u0: f64) -> usize {
    series.first_at_or_after(u0 * series.horizon())
}

fn raw_tick_terms(series: &TickSeries, u0: f64, cfg: &EstimatorConfig) -> Result<PavgTerms> {
    let n = cfg.tick_window;
    let h = cfg.block_size();
    let len = series.len();
    let i0 = evaluation_index(series, u0);
    // Raw increments reach back to i0 − N − 1, pre-averaging windows forward
    // to i0 + N + H − 1.
    if i0 < n + 1 {
        return Err(Error::InsufficientTicks {
            side: "left",
            deficit: n + 1 - i0,
        });
    }
    let last = i0 + n + h - 1;
    if last >= len {
        return Err(Error::InsufficientTicks {
            side: "right",
            deficit: last + 1 - len,
        });
    }
    let y = series.log_prices();
    let c = cfg.weight.constants();
    let nf = n as f64;
    let mut squares = 0.0;
    let mut raw = 0.0;
    for i in (i0 - n)..=(i0 + n) {
        let k = cfg.tick_kernel.eval((i as f64 - i0 as f64) / nf);
        let d = pre_averaged_at(y, i, &cfg.weight);
        squares += k * d * d;
        let r = y[i] - y[i - 1];
        raw += k * r * r;
    }
    let horizon = series.horizon();
    let hf = h as f64;
    Ok(PavgTerms {
        first: horizon * squares / (nf * hf * c.g2),
        correction: horizon * c.sum_h2 * raw / (2.0 * nf * hf * c.g2),
    })
}

/// Both summands of the pre-averaging tick-time estimator.
pub fn tick_vol_terms(series: &TickSeries, u0: f64, cfg: &EstimatorConfig) -> Result<PavgTerms> {
    Ok(raw_tick_terms(series, u0, cfg)?.scaled(cfg.scale.factor(series.horizon())))
}

/// Pre-averaging estimate of tick-time volatility at `u0`. The window is
/// counted in ticks, so arrival times matter only through the evaluation index.
pub fn estimate_tick_vol_pavg(series: &TickSeries, u0: f64, cfg: &EstimatorConfig) -> Result<f64> {
    Ok(tick_vol_terms(series, u0, cfg)?.value())
}

/// Clock-time volatility as tick-time volatility times trading intensity.
pub fn estimate_decomposed_clock_vol(
    series: &TickSeries,
    u0: f64,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    let tick = estimate_tick_vol_pavg(series, u0, cfg)?;
    let intensity = estimate_intensity(series, u0, cfg)?;
    Ok(tick * intensity)
}

fn raw_realized_vol(series: &TickSeries, u0: f64, cfg: &EstimatorConfig) -> Result<f64> {
    let b = cfg.clock_bandwidth;
    check_interior(u0, b)?;
    let y = series.log_prices();
    let sum: f64 = kernel_window(series, u0, b, cfg.clock_kernel)
        .filter(|&(i, _)| i >= 1)
        .map(|(i, k)| {
            let d = y[i] - y[i - 1];
            k * d * d
        })
        .sum();
    Ok(sum / b)
}

/// Kernel-filtered realized volatility, without any noise correction.
pub fn estimate_realized_vol(series: &TickSeries, u0: f64, cfg: &EstimatorConfig) -> Result<f64> {
    Ok(raw_realized_vol(series, u0, cfg)? * cfg.scale.factor(series.horizon()))
}

/// Noise variance `ω²` from filtered realized volatility over `2T·λ̂`.
pub fn estimate_noise_variance(series: &TickSeries, u0: f64, cfg: &EstimatorConfig) -> Result<f64> {
    let rv = raw_realized_vol(series, u0, cfg)?;
    let intensity = estimate_intensity(series, u0, cfg)?;
    if intensity <= 0.0 {
        return Err(Error::DegenerateIntensity { u0 });
    }
    Ok(rv / (2.0 * series.horizon() * intensity))
}

pub fn estimate(series: &TickSeries, u0: f64, cfg: &EstimatorConfig, which: EstimatorTag) -> Result<f64> {
    match which {
        EstimatorTag::Intensity => estimate_intensity(series, u0, cfg),
        EstimatorTag::ClockPavg => estimate_clock_vol_pavg(series, u0, cfg),
        EstimatorTag::TickPavg => estimate_tick_vol_pavg(series, u0, cfg),
        EstimatorTag::Decomposed => estimate_decomposed_clock_vol(series, u0, cfg),
        EstimatorTag::NoiseVar => estimate_noise_variance(series, u0, cfg),
        EstimatorTag::RealizedVol => estimate_realized_vol(series, u0, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub u: f64,
    pub value: Option<f64>,
    pub reason_code: Option<String>,
}

/// An estimator evaluated over a grid; points that fail their preconditions
/// carry a reason code instead of a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEstimate {
    pub estimator: EstimatorTag,
    pub config: EstimatorConfig,
    pub points: Vec<CurvePoint>,
}

impl CurveEstimate {
    pub fn values(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.points.iter().map(|p| p.value)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn estimate_on_grid(series: &TickSeries, cfg: &EstimatorConfig, which: EstimatorTag) -> CurveEstimate {
    let points = cfg
        .grid
        .par_iter()
        .map(|&u| match estimate(series, u, cfg, which) {
            Ok(v) if v.is_finite() => CurvePoint {
                u,
                value: Some(v),
                reason_code: None,
            },
            Ok(_) => CurvePoint {
                u,
                value: None,
                reason_code: Some("non_finite".into()),
            },
            Err(e) => CurvePoint {
                u,
                value: None,
                reason_code: Some(e.reason_code().into()),
            },
        })
        .collect();
    CurveEstimate {
        estimator: which,
        config: cfg.clone(),
        points,
    }
}
