//! Smoothing kernels and the pre-averaging weight function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TickSeries;

/// Compactly supported, symmetric kernels with unit mass on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    #[default]
    Epanechnikov,
    Triangular,
    Uniform,
}

impl KernelSpec {
    pub fn eval(self, x: f64) -> f64 {
        let a = x.abs();
        if a >= 1.0 {
            return 0.0;
        }
        match self {
            KernelSpec::Epanechnikov => 0.75 * (1.0 - x * x),
            KernelSpec::Triangular => 1.0 - a,
            KernelSpec::Uniform => 0.5,
        }
    }

    /// `∫K²`.
    pub fn squared_integral(self) -> f64 {
        match self {
            KernelSpec::Epanechnikov => 0.6,
            KernelSpec::Triangular => 2.0 / 3.0,
            KernelSpec::Uniform => 0.5,
        }
    }

    /// `∫x²K(x)dx`.
    pub fn second_moment(self) -> f64 {
        match self {
            KernelSpec::Epanechnikov => 0.2,
            KernelSpec::Triangular => 1.0 / 6.0,
            KernelSpec::Uniform => 1.0 / 3.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelSpec::Epanechnikov => "epanechnikov",
            KernelSpec::Triangular => "triangular",
            KernelSpec::Uniform => "uniform",
        }
    }
}

pub fn eval_kernel(spec: KernelSpec, x: f64) -> f64 {
    spec.eval(x)
}

/// Shape of the pre-averaging weight `g` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum WeightShape {
    /// `g(x) = x(1 − x)`.
    #[default]
    Parabolic,
    /// Values on a uniform grid over `[0, 1]`, linearly interpolated.
    Table { values: Vec<f64> },
}

impl WeightShape {
    pub fn eval(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        match self {
            WeightShape::Parabolic => x * (1.0 - x),
            WeightShape::Table { values } => {
                let n = values.len() - 1;
                let pos = x * n as f64;
                let i = (pos.floor() as usize).min(n - 1);
                let frac = pos - i as f64;
                values[i] + frac * (values[i + 1] - values[i])
            }
        }
    }

    /// `(∫g², ∫(g′)²)`. Exact for both shapes: the table is piecewise linear,
    /// so each segment integrates in closed form.
    fn limits(&self) -> (f64, f64) {
        match self {
            WeightShape::Parabolic => (1.0 / 30.0, 1.0 / 3.0),
            WeightShape::Table { values } => {
                let dx = 1.0 / (values.len() - 1) as f64;
                values.windows(2).fold((0.0, 0.0), |(g2, gp2), w| {
                    let (a, b) = (w[0], w[1]);
                    let slope = (b - a) / dx;
                    (g2 + dx * (a * a + a * b + b * b) / 3.0, gp2 + slope * slope * dx)
                })
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let WeightShape::Table { values } = self {
            if values.len() < 2 {
                return Err(Error::InvalidWeight("table needs at least 2 grid points".into()));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidWeight("table values must be finite".into()));
            }
        }
        let (g0, g1) = (self.eval(0.0), self.eval(1.0));
        if g0.abs() > 1e-12 || g1.abs() > 1e-12 {
            return Err(Error::InvalidWeight(format!(
                "g must vanish at both ends, got g(0)={g0}, g(1)={g1}"
            )));
        }
        Ok(())
    }
}

/// Constants derived from `g` at block size `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConstants {
    /// `∫g²`.
    pub g2: f64,
    /// `∫(g′)²`.
    pub g2_prime: f64,
    /// `Σ_{l=1}^{H−1} g²(l/H) / H`.
    pub g2_discrete: f64,
    /// `Σ_{l=1}^{H−1} h²(l/H)`.
    pub sum_h2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ShapeName {
    #[default]
    Parabolic,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightSpec {
    block_size: usize,
    #[serde(default)]
    shape: ShapeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
}

/// Pre-averaging weight `g` at a fixed block size `H`, with the per-lag
/// weights and derived constants cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightSpec", into = "WeightSpec")]
pub struct PreAvgWeight {
    shape: WeightShape,
    block_size: usize,
    /// `g(l/H)` for `l = 1..H−1`.
    g: Vec<f64>,
    /// `h(l/H) = g((l+1)/H) − g(l/H)` for `l = 0..H−1`.
    h: Vec<f64>,
    constants: WeightConstants,
}

impl TryFrom<WeightSpec> for PreAvgWeight {
    type Error = Error;

    fn try_from(spec: WeightSpec) -> Result<Self> {
        let shape = match (spec.shape, spec.values) {
            (ShapeName::Parabolic, None) => WeightShape::Parabolic,
            (ShapeName::Table, Some(values)) => WeightShape::Table { values },
            (ShapeName::Parabolic, Some(_)) => {
                return Err(Error::InvalidWeight("`values` is only valid with shape = \"table\"".into()))
            }
            (ShapeName::Table, None) => {
                return Err(Error::InvalidWeight("shape = \"table\" needs `values`".into()))
            }
        };
        PreAvgWeight::new(shape, spec.block_size)
    }
}

impl From<PreAvgWeight> for WeightSpec {
    fn from(w: PreAvgWeight) -> Self {
        let (shape, values) = match w.shape {
            WeightShape::Parabolic => (ShapeName::Parabolic, None),
            WeightShape::Table { values } => (ShapeName::Table, Some(values)),
        };
        WeightSpec {
            block_size: w.block_size,
            shape,
            values,
        }
    }
}

impl PreAvgWeight {
    pub fn new(shape: WeightShape, block_size: usize) -> Result<Self> {
        if block_size < 2 {
            return Err(Error::InvalidWeight(format!("block size must be >= 2, got {block_size}")));
        }
        shape.validate()?;
        let hf = block_size as f64;
        let g: Vec<f64> = (1..block_size).map(|l| shape.eval(l as f64 / hf)).collect();
        let h: Vec<f64> = (0..block_size)
            .map(|l| shape.eval((l + 1) as f64 / hf) - shape.eval(l as f64 / hf))
            .collect();
        let (g2, g2_prime) = shape.limits();
        let constants = WeightConstants {
            g2,
            g2_prime,
            g2_discrete: g.iter().map(|x| x * x).sum::<f64>() / hf,
            sum_h2: h[1..].iter().map(|x| x * x).sum(),
        };
        Ok(PreAvgWeight {
            shape,
            block_size,
            g,
            h,
            constants,
        })
    }

    /// The default `g(x) = x(1 − x)`.
    pub fn parabolic(block_size: usize) -> Result<Self> {
        Self::new(WeightShape::Parabolic, block_size)
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn shape(&self) -> &WeightShape {
        &self.shape
    }

    pub fn constants(&self) -> WeightConstants {
        self.constants
    }

    /// `g(l/H)` for `l = 1..H−1`.
    pub fn g_weights(&self) -> &[f64] {
        &self.g
    }

    /// `h(l/H)` for `l = 0..H−1`.
    pub fn h_weights(&self) -> &[f64] {
        &self.h
    }

    /// `g′₂ / g₂`.
    pub fn derivative_ratio(&self) -> f64 {
        self.constants.g2_prime / self.constants.g2
    }
}

pub fn weight_constants(weight: &PreAvgWeight) -> WeightConstants {
    weight.constants()
}

/// `Σ_{l=1}^{H−1} g(l/H)(Y_{i+l} − Y_{i+l−1})` over a raw log-price slice.
/// The caller guarantees `i + H − 1 < y.len()`.
#[inline]
pub(crate) fn pre_averaged_at(y: &[f64], i: usize, weight: &PreAvgWeight) -> f64 {
    weight
        .g
        .iter()
        .enumerate()
        .map(|(k, g)| g * (y[i + k + 1] - y[i + k]))
        .sum()
}

/// Pre-averaged increment starting at tick `i`.
pub fn pre_averaged_increment(series: &TickSeries, i: usize, weight: &PreAvgWeight) -> Result<f64> {
    let needed = i + weight.block_size - 1;
    if needed >= series.len() {
        return Err(Error::WindowOutOfRange {
            start: i,
            needed,
            len: series.len(),
        });
    }
    Ok(pre_averaged_at(series.log_prices(), i, weight))
}

/// The same quantity in level form, `−Σ_{l=0}^{H−1} h(l/H) Y_{i+l}`.
pub fn pre_averaged_increment_levels(
    series: &TickSeries,
    i: usize,
    weight: &PreAvgWeight,
) -> Result<f64> {
    let needed = i + weight.block_size - 1;
    if needed >= series.len() {
        return Err(Error::WindowOutOfRange {
            start: i,
            needed,
            len: series.len(),
        });
    }
    let y = &series.log_prices()[i..=needed];
    Ok(-weight.h.iter().zip(y).map(|(h, y)| h * y).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let dx = (b - a) / n as f64;
        let inner: f64 = (1..n)
            .map(|i| {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                w * f(a + i as f64 * dx)
            })
            .sum();
        (f(a) + f(b) + inner) * dx / 3.0
    }

    const KINDS: [KernelSpec; 3] = [
        KernelSpec::Epanechnikov,
        KernelSpec::Triangular,
        KernelSpec::Uniform,
    ];

    #[test]
    fn epanechnikov_values() {
        assert_eq!(eval_kernel(KernelSpec::Epanechnikov, 0.0), 0.75);
        assert_eq!(eval_kernel(KernelSpec::Epanechnikov, 1.0), 0.0);
        assert_eq!(eval_kernel(KernelSpec::Epanechnikov, -1.0), 0.0);
        assert_eq!(eval_kernel(KernelSpec::Epanechnikov, 0.5), 0.5625);
        assert_eq!(eval_kernel(KernelSpec::Uniform, 1.0), 0.0);
    }

    #[test]
    fn kernels_are_symmetric_with_unit_mass() {
        for k in KINDS {
            for i in 0..200 {
                let x = -1.5 + 3.0 * i as f64 / 199.0;
                assert_eq!(k.eval(x), k.eval(-x));
            }
            // Midpoint rule never samples the support edge, where the uniform
            // kernel jumps.
            let n = 40_000;
            let dx = 2.0 / n as f64;
            let mass: f64 = (0..n).map(|i| k.eval(-1.0 + (i as f64 + 0.5) * dx) * dx).sum();
            assert!((mass - 1.0).abs() < 1e-9, "{k:?} mass {mass}");
        }
    }

    #[test]
    fn kernel_constants_match_quadrature() {
        for k in [KernelSpec::Epanechnikov, KernelSpec::Triangular] {
            let k2 = 2.0 * simpson(|x| k.eval(x).powi(2), 0.0, 1.0, 20_000);
            let m2 = 2.0 * simpson(|x| x * x * k.eval(x), 0.0, 1.0, 20_000);
            assert!((k2 - k.squared_integral()).abs() < 1e-9, "{k:?} {k2}");
            assert!((m2 - k.second_moment()).abs() < 1e-9, "{k:?} {m2}");
        }
        // Uniform: constant 1/2 on (-1, 1).
        assert_eq!(KernelSpec::Uniform.squared_integral(), 0.5);
        assert!((KernelSpec::Uniform.second_moment() - 0.5 * 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn parabolic_limits_match_quadrature() {
        let w = PreAvgWeight::parabolic(15).unwrap();
        let g2 = simpson(|x| (x * (1.0 - x)).powi(2), 0.0, 1.0, 1000);
        let gp2 = simpson(|x| (1.0 - 2.0 * x).powi(2), 0.0, 1.0, 1000);
        let c = w.constants();
        assert!((c.g2 - g2).abs() < 1e-12);
        assert!((c.g2_prime - gp2).abs() < 1e-12);
        assert!((w.derivative_ratio() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn block_size_two_by_hand() {
        let w = PreAvgWeight::parabolic(2).unwrap();
        assert_eq!(w.h_weights(), &[0.25, -0.25]);
        assert_eq!(w.constants().sum_h2, 0.0625);
        assert_eq!(w.g_weights(), &[0.25]);
    }

    #[test]
    fn discrete_sums_converge() {
        for h in [2usize, 5, 15, 50, 200] {
            let w = PreAvgWeight::parabolic(h).unwrap();
            let c = w.constants();
            let hf = h as f64;
            assert!((hf * c.sum_h2 - c.g2_prime).abs() <= 5.0 / hf, "H={h}");
            assert!((c.g2_discrete - c.g2).abs() <= 5.0 / hf, "H={h}");
        }
        let c = PreAvgWeight::parabolic(15).unwrap().constants();
        assert!((15.0 * c.sum_h2 - 1.0 / 3.0).abs() <= (1.0 / 3.0) * (5.0 / 15.0));
    }

    #[test]
    fn table_weight_matches_parabolic_limits() {
        let n = 400;
        let values: Vec<f64> = (0..=n).map(|i| {
            let x = i as f64 / n as f64;
            x * (1.0 - x)
        }).collect();
        let w = PreAvgWeight::new(WeightShape::Table { values }, 15).unwrap();
        let c = w.constants();
        assert!((c.g2 - 1.0 / 30.0).abs() < 1e-6);
        assert!((c.g2_prime - 1.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn weight_must_vanish_at_ends() {
        let bad = WeightShape::Table { values: vec![0.0, 0.5, 1e-9] };
        assert!(matches!(PreAvgWeight::new(bad, 4), Err(Error::InvalidWeight(_))));
        assert!(matches!(PreAvgWeight::parabolic(1), Err(Error::InvalidWeight(_))));
    }

    #[test]
    fn weight_deserializes_from_toml() {
        let w: PreAvgWeight = toml::from_str("block_size = 15\nshape = \"parabolic\"").unwrap();
        assert_eq!(w.block_size(), 15);
        let w: PreAvgWeight = toml::from_str("block_size = 3").unwrap();
        assert_eq!(w.shape(), &WeightShape::Parabolic);
        assert!(toml::from_str::<PreAvgWeight>("block_size = 1").is_err());
    }

    fn series(y: Vec<f64>) -> TickSeries {
        let t = (1..=y.len()).map(|i| i as f64).collect();
        TickSeries::new(y.len() as f64, t, y).unwrap()
    }

    #[test]
    fn pre_averaged_increment_examples() {
        let w2 = PreAvgWeight::parabolic(2).unwrap();
        let s = series(vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(pre_averaged_increment(&s, 0, &w2).unwrap(), 0.25);
        assert_eq!(pre_averaged_increment_levels(&s, 0, &w2).unwrap(), 0.25);

        let flat = series(vec![3.5; 30]);
        let w = PreAvgWeight::parabolic(15).unwrap();
        assert_eq!(pre_averaged_increment(&flat, 4, &w).unwrap(), 0.0);
    }

    #[test]
    fn window_past_end_is_an_error() {
        let w = PreAvgWeight::parabolic(5).unwrap();
        let s = series(vec![0.0; 6]);
        assert!(pre_averaged_increment(&s, 1, &w).is_ok());
        assert!(matches!(
            pre_averaged_increment(&s, 2, &w),
            Err(Error::WindowOutOfRange { needed: 6, len: 6, .. })
        ));
    }

    #[test]
    fn linear_series_gives_weight_sum() {
        for h in [2usize, 5, 15] {
            let w = PreAvgWeight::parabolic(h).unwrap();
            let a = 0.37;
            let s = series((0..40).map(|i| a * i as f64).collect());
            let expected = a * w.g_weights().iter().sum::<f64>();
            let got = pre_averaged_increment(&s, 7, &w).unwrap();
            assert!((got - expected).abs() <= 1e-12 * expected.abs(), "H={h}");
        }
    }
}
