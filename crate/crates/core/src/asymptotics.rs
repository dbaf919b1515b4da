//! Closed-form asymptotic variances, bias terms and regime labels for the
//! spot estimators. Pure functions; the Monte Carlo harness uses them as oracles.

use serde::{Deserialize, Serialize};

use crate::curve::CurveSpec;
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, PreAvgWeight};

/// The three terms of `δ·A + B/δ + C/δ³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl VarianceComponents {
    pub fn total(&self, delta: f64) -> f64 {
        delta * self.a + self.b / delta + self.c / delta.powi(3)
    }

    /// Derivative of [`total`](Self::total) in `δ`.
    pub fn derivative(&self, delta: f64) -> f64 {
        self.a - self.b / (delta * delta) - 3.0 * self.c / delta.powi(4)
    }

    fn scaled(self, f: f64) -> Self {
        VarianceComponents {
            a: self.a * f,
            b: self.b * f,
            c: self.c * f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceTarget {
    pub components: VarianceComponents,
    pub delta: f64,
    pub total: f64,
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {x}")))
    }
}

fn check_nonnegative(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be nonnegative, got {x}")))
    }
}

/// Variance of the tick-time pre-averaging estimator at rate `√(N/√T)`.
pub fn tick_variance_target(
    sigma2: f64,
    omega2: f64,
    delta: f64,
    kernel: KernelSpec,
    weight: &PreAvgWeight,
) -> Result<VarianceTarget> {
    check_nonnegative("sigma2", sigma2)?;
    check_nonnegative("omega2", omega2)?;
    check_positive("delta", delta)?;
    let k2 = kernel.squared_integral();
    let r = weight.derivative_ratio();
    let components = VarianceComponents {
        a: 2.0 * sigma2 * sigma2 * k2,
        b: 4.0 * omega2 * sigma2 * r * k2,
        c: 2.0 * omega2 * omega2 * r * r * k2,
    };
    Ok(VarianceTarget {
        components,
        delta,
        total: components.total(delta),
    })
}

/// Variance of the classical clock-time pre-averaging estimator at rate `√(b√T)`.
pub fn clock_variance_target(
    sigma2: f64,
    lambda: f64,
    omega2: f64,
    delta: f64,
    kernel: KernelSpec,
    weight: &PreAvgWeight,
) -> Result<VarianceTarget> {
    check_nonnegative("lambda", lambda)?;
    let tick = tick_variance_target(sigma2, omega2, delta, kernel, weight)?;
    let components = tick.components.scaled(lambda);
    Ok(VarianceTarget {
        components,
        delta,
        total: components.total(delta),
    })
}

/// Variance of the intensity estimator at rate `√(𝔟T)`.
pub fn intensity_variance_target(lambda: f64, kernel: KernelSpec) -> f64 {
    lambda * kernel.squared_integral()
}

/// Leading bias of the clock-time estimator; zero unless both curves are
/// twice differentiable.
pub fn clock_bias_target(product_second_derivative: f64, b: f64, kernel: KernelSpec, smooth: bool) -> f64 {
    if smooth {
        0.5 * product_second_derivative * b * b * kernel.second_moment()
    } else {
        0.0
    }
}

/// Second derivative of `σ²·λ` at `u`.
pub fn product_second_derivative(sigma2: &CurveSpec, lambda: &CurveSpec, u: f64) -> f64 {
    let (s, l) = (sigma2.eval(u), lambda.eval(u));
    let h = 1e-4;
    let ds = (sigma2.eval(u + h) - sigma2.eval(u - h)) / (2.0 * h);
    let dl = (lambda.eval(u + h) - lambda.eval(u - h)) / (2.0 * h);
    sigma2.second_derivative(u) * l + 2.0 * ds * dl + s * lambda.second_derivative(u)
}

/// Hölder smoothness of a curve: `m` derivatives, the last `γ`-Hölder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothness {
    pub m: u8,
    pub gamma: f64,
}

impl Smoothness {
    pub fn new(m: u8, gamma: f64) -> Result<Self> {
        let s = Smoothness { m, gamma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m > 2 || !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Domain(format!(
                "smoothness needs m in 0..=2 and 0 < gamma < 1, got m={} gamma={}",
                self.m, self.gamma
            )));
        }
        Ok(())
    }
}

/// Which limit governs the decomposed estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Tick-time error dominates; rate `√(N/√T)`, variance `V²`.
    TickDominated,
    /// Intensity error dominates; rate `√(𝔟T)`, variance `W²` without the `c₁` term.
    IntensityDominated,
    /// Both contribute at the same rate; `W²` with the `c₁` term.
    Balanced,
}

/// Threshold on `γ′` separating the regimes when `λ` is rough (`m′ = 0`).
fn gamma_prime_threshold(sigma2: Smoothness, lambda: Smoothness) -> Option<f64> {
    if lambda.m != 0 {
        return None;
    }
    let g = sigma2.gamma;
    Some(match sigma2.m {
        0 => g / (2.0 * g + 2.0),
        1 => {
            let gs = g.min(lambda.gamma);
            (gs + 2.0) / (2.0 * gs + 8.0)
        }
        _ => (65f64.sqrt() - 7.0) / 4.0,
    })
}

/// Regime of the decomposed estimator from the smoothness of `σ²` and `λ`.
pub fn decomposition_regime(sigma2: Smoothness, lambda: Smoothness) -> Regime {
    match gamma_prime_threshold(sigma2, lambda) {
        None => Regime::TickDominated,
        Some(t) if lambda.gamma > t => Regime::TickDominated,
        Some(t) if lambda.gamma == t => Regime::Balanced,
        Some(_) => Regime::IntensityDominated,
    }
}

/// `𝔟T / (N/√T)`.
pub fn c1_ratio(intensity_bandwidth: f64, horizon: f64, tick_window: usize) -> f64 {
    intensity_bandwidth * horizon / (tick_window as f64 / horizon.sqrt())
}

/// Variance of the decomposed estimator in the given regime, at that
/// regime's rate.
#[allow(clippy::too_many_arguments)]
pub fn decomposed_variance_target(
    regime: Regime,
    sigma2: f64,
    lambda: f64,
    omega2: f64,
    delta: f64,
    tick_kernel: KernelSpec,
    intensity_kernel: KernelSpec,
    weight: &PreAvgWeight,
    c1: f64,
) -> Result<f64> {
    let tick = tick_variance_target(sigma2, omega2, delta, tick_kernel, weight)?.total;
    let v2 = lambda * lambda * tick;
    let w_intensity = sigma2 * sigma2 * lambda * intensity_kernel.squared_integral();
    Ok(match regime {
        Regime::TickDominated => v2,
        Regime::IntensityDominated => w_intensity,
        Regime::Balanced => w_intensity + c1 * v2,
    })
}

/// Rows of the rate comparison between the decomposed and classical
/// clock-time estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonCase {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
    C9,
    C10,
    C11,
    C12,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonOutcome {
    /// The decomposed estimator converges faster.
    Faster,
    /// Same rate; the decomposed variance is smaller when `λ < 1`.
    Same,
    /// No ranking known; reported but not compared.
    Uncompared,
}

impl ComparisonCase {
    pub fn outcome(self) -> ComparisonOutcome {
        use ComparisonCase::*;
        match self {
            C1 | C2 | C3 | C4 | C5 => ComparisonOutcome::Faster,
            C6 | C7 | C8 => ComparisonOutcome::Same,
            C9 | C10 | C11 | C12 => ComparisonOutcome::Uncompared,
        }
    }
}

pub fn comparison_case(sigma2: Smoothness, lambda: Smoothness) -> ComparisonCase {
    use ComparisonCase::*;
    let (g, gp) = (sigma2.gamma, lambda.gamma);
    match (sigma2.m.min(2), lambda.m.min(2)) {
        (0, 0) if g > gp => C1,
        (0, 0) => C6,
        (1, 0) => C2,
        (1, 1) if 2.0 * gp < g => C3,
        (1, 1) => C9,
        (2, 0) => C4,
        (2, 1) if gp < 0.5 => C5,
        (2, 1) => C11,
        (0, 1) => C7,
        (0, _) => C8,
        (1, _) => C10,
        _ => C12,
    }
}

/// Minimizer of `δ·A + B/δ + C/δ³` over `δ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum OptimalDelta {
    Stationary(f64),
    /// `B = C = 0`: the objective decreases to 0 as `δ → 0`.
    Degenerate,
}

impl OptimalDelta {
    pub fn value(self) -> Option<f64> {
        match self {
            OptimalDelta::Stationary(d) => Some(d),
            OptimalDelta::Degenerate => None,
        }
    }
}

/// Safeguarded Newton-bisection on the derivative `A − B/δ² − 3C/δ⁴`.
pub fn optimal_delta(c: &VarianceComponents) -> Result<OptimalDelta> {
    check_positive("A", c.a)?;
    check_nonnegative("B", c.b)?;
    check_nonnegative("C", c.c)?;
    if c.b == 0.0 && c.c == 0.0 {
        return Ok(OptimalDelta::Degenerate);
    }
    // The derivative is increasing in δ; bracket its sign change.
    let mut lo = 1.0;
    while c.derivative(lo) > 0.0 {
        lo *= 0.5;
    }
    let mut hi = 1.0;
    while c.derivative(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = c.derivative(x);
        if f == 0.0 {
            return Ok(OptimalDelta::Stationary(x));
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let fp = 2.0 * c.b / x.powi(3) + 12.0 * c.c / x.powi(5);
        let newton = x - f / fp;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 1e-14 * x || hi - lo <= 1e-15 * hi {
            return Ok(OptimalDelta::Stationary(next));
        }
        x = next;
    }
    Ok(OptimalDelta::Stationary(x))
}

/// Kernel-smoothed curve `∫K(x)·f(u₀ + bx)dx`, the expectation of a kernel
/// estimate of `f` at `u₀` with bandwidth `b`.
pub fn smoothed_mean(curve: &CurveSpec, u0: f64, bandwidth: f64, kernel: KernelSpec) -> f64 {
    let n = 4000;
    let h = 2.0 / n as f64;
    let f = |x: f64| kernel.eval(x) * curve.eval(u0 + bandwidth * x);
    // Kernels vanish at ±1 except the uniform one; use the midpoint rule so
    // its jump is handled without special cases.
    (0..n).map(|j| f(-1.0 + (j as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Every target at one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticTargets {
    pub intensity_var: f64,
    pub clock: VarianceTarget,
    pub tick: VarianceTarget,
    pub clock_bias: f64,
    pub regime: Regime,
    pub decomposed_var: f64,
    pub c1: f64,
}

/// Inputs shared by [`AsymptoticTargets::compute`].
#[derive(Debug, Clone)]
pub struct TargetInputs<'a> {
    pub sigma2: &'a CurveSpec,
    pub lambda: &'a CurveSpec,
    pub omega2: f64,
    pub u0: f64,
    pub delta: f64,
    pub horizon: f64,
    pub intensity_bandwidth: f64,
    pub clock_bandwidth: f64,
    pub tick_window: usize,
    pub intensity_kernel: KernelSpec,
    pub clock_kernel: KernelSpec,
    pub tick_kernel: KernelSpec,
    pub weight: &'a PreAvgWeight,
    pub sigma2_smoothness: Smoothness,
    pub lambda_smoothness: Smoothness,
}

impl AsymptoticTargets {
    pub fn compute(p: &TargetInputs<'_>) -> Result<Self> {
        let s = p.sigma2.eval(p.u0);
        let l = p.lambda.eval(p.u0);
        let smooth = p.sigma2_smoothness.m == 2 && p.lambda_smoothness.m == 2;
        let regime = decomposition_regime(p.sigma2_smoothness, p.lambda_smoothness);
        let c1 = c1_ratio(p.intensity_bandwidth, p.horizon, p.tick_window);
        Ok(AsymptoticTargets {
            intensity_var: intensity_variance_target(l, p.intensity_kernel),
            clock: clock_variance_target(s, l, p.omega2, p.delta, p.clock_kernel, p.weight)?,
            tick: tick_variance_target(s, p.omega2, p.delta, p.tick_kernel, p.weight)?,
            clock_bias: clock_bias_target(
                product_second_derivative(p.sigma2, p.lambda, p.u0),
                p.clock_bandwidth,
                p.clock_kernel,
                smooth,
            ),
            regime,
            decomposed_var: decomposed_variance_target(
                regime,
                s,
                l,
                p.omega2,
                p.delta,
                p.tick_kernel,
                p.intensity_kernel,
                p.weight,
                c1,
            )?,
            c1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w() -> PreAvgWeight {
        PreAvgWeight::parabolic(1000).unwrap()
    }

    #[test]
    fn clock_components_match_hand_values() {
        let t = clock_variance_target(1.0, 1.0, 0.0, 1.0, KernelSpec::Epanechnikov, &w()).unwrap();
        assert!((t.components.a - 1.2).abs() < 1e-12);
        assert!((t.total - 1.2).abs() < 1e-12);
        let t = clock_variance_target(1.0, 1.0, 1.0, 1.0, KernelSpec::Epanechnikov, &w()).unwrap();
        assert!((t.components.b - 24.0).abs() < 1e-9);
        assert!((t.components.c - 120.0).abs() < 1e-8);
    }

    #[test]
    fn nonpositive_delta_is_a_domain_error() {
        assert!(tick_variance_target(1.0, 0.0, 0.0, KernelSpec::Epanechnikov, &w()).is_err());
        assert!(tick_variance_target(1.0, 0.0, -1.0, KernelSpec::Epanechnikov, &w()).is_err());
    }

    #[test]
    fn intensity_targets() {
        assert!((intensity_variance_target(1.0, KernelSpec::Epanechnikov) - 0.6).abs() < 1e-15);
        assert_eq!(intensity_variance_target(0.0, KernelSpec::Epanechnikov), 0.0);
        assert!((intensity_variance_target(2.0, KernelSpec::Uniform) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bias_examples() {
        let k = KernelSpec::Epanechnikov;
        assert_eq!(clock_bias_target(0.0, 0.1, k, true), 0.0);
        assert!((clock_bias_target(1.0, 0.1, k, true) - 0.001).abs() < 1e-15);
        assert_eq!(clock_bias_target(1.0, 0.1, k, false), 0.0);
        let r = clock_bias_target(1.0, 0.2, k, true) / clock_bias_target(1.0, 0.1, k, true);
        assert!((r - 4.0).abs() < 1e-12);
    }

    #[test]
    fn optimal_delta_examples() {
        let d = |a, b, c| optimal_delta(&VarianceComponents { a, b, c }).unwrap();
        assert_eq!(d(1.0, 0.0, 0.0), OptimalDelta::Degenerate);
        assert!((d(1.0, 1.0, 0.0).value().unwrap() - 1.0).abs() < 1e-10);
        assert!((d(1.0, 0.0, 3.0).value().unwrap() - 9f64.powf(0.25)).abs() < 1e-10);
        assert!(optimal_delta(&VarianceComponents { a: 0.0, b: 1.0, c: 1.0 }).is_err());
    }

    #[test]
    fn regimes_follow_thresholds() {
        let s = |m, g| Smoothness::new(m, g).unwrap();
        assert_eq!(decomposition_regime(s(0, 0.5), s(1, 0.1)), Regime::TickDominated);
        // m = m' = 0: threshold γ/(2γ+2) = 0.5/3.
        assert_eq!(decomposition_regime(s(0, 0.5), s(0, 0.2)), Regime::TickDominated);
        assert_eq!(decomposition_regime(s(0, 0.5), s(0, 0.1)), Regime::IntensityDominated);
        assert_eq!(decomposition_regime(s(0, 0.5), s(0, 0.25)), Regime::TickDominated);
        let t = (65f64.sqrt() - 7.0) / 4.0;
        assert_eq!(decomposition_regime(s(2, 0.5), s(0, t)), Regime::Balanced);
        assert_eq!(decomposition_regime(s(2, 0.5), s(0, t - 0.01)), Regime::IntensityDominated);
    }

    #[test]
    fn comparison_cases_cover_the_grid() {
        let s = |m, g| Smoothness::new(m, g).unwrap();
        assert_eq!(comparison_case(s(0, 0.6), s(0, 0.3)), ComparisonCase::C1);
        assert_eq!(comparison_case(s(0, 0.3), s(0, 0.3)), ComparisonCase::C6);
        assert_eq!(comparison_case(s(1, 0.7), s(1, 0.3)), ComparisonCase::C3);
        assert_eq!(comparison_case(s(1, 0.6), s(1, 0.3)), ComparisonCase::C9);
        assert_eq!(comparison_case(s(2, 0.5), s(1, 0.4)), ComparisonCase::C5);
        assert_eq!(comparison_case(s(2, 0.5), s(1, 0.5)), ComparisonCase::C11);
        assert_eq!(comparison_case(s(0, 0.5), s(2, 0.5)), ComparisonCase::C8);
        assert_eq!(comparison_case(s(2, 0.5), s(2, 0.5)).outcome(), ComparisonOutcome::Uncompared);
        assert_eq!(comparison_case(s(1, 0.5), s(0, 0.5)).outcome(), ComparisonOutcome::Faster);
        assert_eq!(comparison_case(s(0, 0.5), s(1, 0.5)).outcome(), ComparisonOutcome::Same);
    }

    #[test]
    fn smoothed_mean_of_constant_is_exact() {
        let c = CurveSpec::constant(1.3).unwrap();
        for k in [KernelSpec::Epanechnikov, KernelSpec::Triangular, KernelSpec::Uniform] {
            assert!((smoothed_mean(&c, 0.5, 0.04, k) - 1.3).abs() < 1e-6);
        }
    }
}
