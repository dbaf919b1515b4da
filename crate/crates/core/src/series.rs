use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transaction times in clock seconds with the observed log-price at each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSeries {
    horizon: f64,
    times: Vec<f64>,
    log_prices: Vec<f64>,
    cleaned: bool,
}

impl TickSeries {
    /// Builds a series, checking that times are strictly increasing inside
    /// `[0, horizon]` and that every value is finite.
    pub fn new(horizon: f64, times: Vec<f64>, log_prices: Vec<f64>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidSeries(format!("horizon must be positive, got {horizon}")));
        }
        if times.len() != log_prices.len() {
            return Err(Error::InvalidSeries(format!(
                "{} times but {} log-prices",
                times.len(),
                log_prices.len()
            )));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, (&t, &y)) in times.iter().zip(&log_prices).enumerate() {
            if !t.is_finite() || !y.is_finite() {
                return Err(Error::InvalidSeries(format!("non-finite value at index {i}")));
            }
            if t < 0.0 {
                return Err(Error::InvalidSeries(format!("time {t} at index {i} is negative")));
            }
            if t <= prev {
                return Err(Error::InvalidSeries(format!(
                    "time {t} at index {i} is not strictly after {prev}"
                )));
            }
            if t > horizon {
                return Err(Error::InvalidSeries(format!(
                    "time {t} at index {i} exceeds horizon {horizon}"
                )));
            }
            prev = t;
        }
        Ok(TickSeries {
            horizon,
            times,
            log_prices,
            cleaned: false,
        })
    }

    pub fn with_cleaned(mut self, cleaned: bool) -> Self {
        self.cleaned = cleaned;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn log_prices(&self) -> &[f64] {
        &self.log_prices
    }

    pub fn is_cleaned(&self) -> bool {
        self.cleaned
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// First index with `t_i >= t`, or `len()` if none.
    pub fn first_at_or_after(&self, t: f64) -> usize {
        self.times.partition_point(|&ti| ti < t)
    }

    /// Index range of ticks with `lo < t_i < hi`.
    pub fn open_window(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self.times.partition_point(|&ti| ti <= lo);
        let end = self.times.partition_point(|&ti| ti < hi);
        start..end.max(start)
    }

    /// Same arrival times, different prices.
    pub fn with_log_prices(&self, log_prices: Vec<f64>) -> Result<Self> {
        Ok(TickSeries::new(self.horizon, self.times.clone(), log_prices)?.with_cleaned(self.cleaned))
    }

    pub fn into_parts(self) -> (f64, Vec<f64>, Vec<f64>) {
        (self.horizon, self.times, self.log_prices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unordered_and_out_of_horizon() {
        assert!(TickSeries::new(10.0, vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(TickSeries::new(10.0, vec![-1.0], vec![0.0]).is_err());
        assert!(TickSeries::new(10.0, vec![0.0], vec![0.0]).is_ok());
        assert!(TickSeries::new(10.0, vec![11.0], vec![0.0]).is_err());
        assert!(TickSeries::new(0.0, vec![], vec![]).is_err());
        assert!(TickSeries::new(10.0, vec![1.0], vec![]).is_err());
        assert!(TickSeries::new(10.0, vec![10.0], vec![f64::NAN]).is_err());
        assert!(TickSeries::new(10.0, vec![], vec![]).unwrap().is_empty());
    }

    #[test]
    fn windows_use_open_bounds() {
        let s = TickSeries::new(10.0, vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]).unwrap();
        assert_eq!(s.open_window(1.0, 4.0), 1..3);
        assert_eq!(s.open_window(0.5, 9.0), 0..4);
        assert_eq!(s.open_window(5.0, 9.0), 4..4);
        assert_eq!(s.first_at_or_after(2.0), 1);
        assert_eq!(s.first_at_or_after(2.5), 2);
        assert_eq!(s.first_at_or_after(11.0), 4);
    }
}
