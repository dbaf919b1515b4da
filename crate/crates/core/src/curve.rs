//! Deterministic parameter curves on rescaled time `u ∈ [0, 1]`.
//!
//! A [`CurveSpec`] houses either the tick-time volatility `σ²(u)` or the
//! trading intensity `λ(u)`. Both must stay finite and bounded away from zero.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveSpec {
    /// `c` everywhere.
    Constant { value: f64 },
    /// `exp(a + cos(k·π·u))`.
    CosineLog { a: f64, k: f64 },
    /// Values on a uniform grid over `[0, 1]`, linearly interpolated.
    Table { values: Vec<f64> },
}

impl CurveSpec {
    pub fn constant(value: f64) -> Result<Self> {
        let c = CurveSpec::Constant { value };
        c.validate()?;
        Ok(c)
    }

    pub fn cosine_log(a: f64, k: f64) -> Result<Self> {
        let c = CurveSpec::CosineLog { a, k };
        c.validate()?;
        Ok(c)
    }

    pub fn table(values: Vec<f64>) -> Result<Self> {
        let c = CurveSpec::Table { values };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CurveSpec::Constant { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return Err(Error::InvalidCurve(format!(
                        "constant value must be finite and positive, got {value}"
                    )));
                }
            }
            CurveSpec::CosineLog { a, k } => {
                if !a.is_finite() || !k.is_finite() {
                    return Err(Error::InvalidCurve(format!(
                        "cosine_log parameters must be finite, got a={a}, k={k}"
                    )));
                }
                let lo = (a - 1.0).exp();
                let hi = (a + 1.0).exp();
                if lo <= 0.0 || !hi.is_finite() {
                    return Err(Error::InvalidCurve(format!(
                        "cosine_log with a={a} leaves the positive finite range"
                    )));
                }
            }
            CurveSpec::Table { values } => {
                if values.len() < 2 {
                    return Err(Error::InvalidCurve(format!(
                        "table needs at least 2 grid points, got {}",
                        values.len()
                    )));
                }
                if let Some((i, v)) = values
                    .iter()
                    .enumerate()
                    .find(|(_, v)| !(v.is_finite() && **v > 0.0))
                {
                    return Err(Error::InvalidCurve(format!(
                        "table value {v} at grid index {i} is not finite and positive"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Value at `u`. Arguments outside `[0, 1]` are clamped for tables; the
    /// closed-form kinds are evaluated as written.
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            CurveSpec::Constant { value } => *value,
            CurveSpec::CosineLog { a, k } => (a + (k * PI * u).cos()).exp(),
            CurveSpec::Table { values } => {
                let n = values.len() - 1;
                let x = u.clamp(0.0, 1.0) * n as f64;
                let i = (x.floor() as usize).min(n - 1);
                let frac = x - i as f64;
                values[i] + frac * (values[i + 1] - values[i])
            }
        }
    }

    /// An upper bound on `sup_u f(u)`, used as the thinning rate.
    pub fn upper_bound(&self) -> f64 {
        match self {
            CurveSpec::Constant { value } => *value,
            CurveSpec::CosineLog { a, .. } => (a + 1.0).exp(),
            CurveSpec::Table { values } => values.iter().copied().fold(f64::MIN, f64::max) * 1.001,
        }
    }

    /// Second derivative in `u`. Exact for the closed-form kinds; tables use a
    /// central difference with step equal to the grid spacing, so the value is
    /// only approximate there.
    pub fn second_derivative(&self, u: f64) -> f64 {
        match self {
            CurveSpec::Constant { .. } => 0.0,
            CurveSpec::CosineLog { k, .. } => {
                let w = k * PI;
                let s = (w * u).sin();
                w * w * self.eval(u) * (s * s - (w * u).cos())
            }
            CurveSpec::Table { values } => {
                let step = 1.0 / (values.len() - 1) as f64;
                let lo = (u - step).max(0.0);
                let hi = (u + step).min(1.0);
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                (self.eval(hi) - 2.0 * self.eval(mid) + self.eval(lo)) / (half * half)
            }
        }
    }

    /// Whether the curve is twice continuously differentiable, i.e. whether the
    /// second-order bias term applies to it.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, CurveSpec::Table { .. })
    }
}
