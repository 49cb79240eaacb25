//! Observed price series, demeaned series and the DAR parameter triple.
//!
//! Time is indexed `t = 1..=T` in the mathematical sense and `0..T` in
//! storage; rescaled time is `c = t / T`.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default trailing window (in observations) for local means and rolling fits.
pub const DEFAULT_WINDOW: usize = 50;

/// A dated, strictly ordered sequence of closing prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
    volume: Option<Vec<f64>>,
    labels: BTreeMap<NaiveDate, String>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        if values.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite price at index {i}"
            )));
        }
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(format!(
                "dates not strictly increasing at index {} ({} then {})",
                i + 1,
                dates[i],
                dates[i + 1]
            )));
        }
        Ok(Self {
            dates,
            values,
            volume: None,
            labels: BTreeMap::new(),
        })
    }

    /// Builds a series on consecutive calendar days starting at `start`.
    pub fn daily(start: NaiveDate, values: Vec<f64>) -> Result<Self> {
        let dates = start.iter_days().take(values.len()).collect();
        Self::new(dates, values)
    }

    pub fn with_volume(mut self, volume: Vec<f64>) -> Result<Self> {
        if volume.len() != self.values.len() {
            return Err(Error::InvalidInput("volume length mismatch".into()));
        }
        self.volume = Some(volume);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: BTreeMap<NaiveDate, String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn volume(&self) -> Option<&[f64]> {
        self.volume.as_deref()
    }

    pub fn labels(&self) -> &BTreeMap<NaiveDate, String> {
        &self.labels
    }

    pub fn label_at(&self, date: &NaiveDate) -> Option<&str> {
        self.labels.get(date).map(String::as_str)
    }
}

/// What was subtracted from the raw prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanUsed {
    Global {
        mean: f64,
    },
    Local {
        window: usize,
        means: Vec<f64>,
    },
    /// Series that were generated directly around zero (simulation output).
    None,
}

/// Deviations `x_t` of a series from its global or local mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemeanedSeries {
    values: Vec<f64>,
    mean_used: MeanUsed,
}

impl DemeanedSeries {
    /// Wraps values that are already centred (e.g. simulated paths).
    pub fn from_centered(values: Vec<f64>) -> Self {
        Self {
            values,
            mean_used: MeanUsed::None,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean_used(&self) -> &MeanUsed {
        &self.mean_used
    }

    /// Adds the subtracted mean back, recovering the level series.
    pub fn restore(&self) -> Vec<f64> {
        match &self.mean_used {
            MeanUsed::Global { mean } => self.values.iter().map(|x| x + mean).collect(),
            MeanUsed::Local { means, .. } => {
                self.values.iter().zip(means).map(|(x, m)| x + m).collect()
            }
            MeanUsed::None => self.values.clone(),
        }
    }

    /// Multiplies every deviation by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            values: self.values.iter().map(|x| x * k).collect(),
            mean_used: MeanUsed::None,
        }
    }
}

impl AsRef<[f64]> for DemeanedSeries {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// `x_t = y_t - ȳ`.
pub fn demean_global(series: &PriceSeries) -> Result<DemeanedSeries> {
    demean_global_values(series.values())
}

pub fn demean_global_values(values: &[f64]) -> Result<DemeanedSeries> {
    if values.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: values.len(),
        });
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(DemeanedSeries {
        values: values.iter().map(|y| y - mean).collect(),
        mean_used: MeanUsed::Global { mean },
    })
}

/// `x_t = y_t - m(t)` with `m(t)` the trailing mean over
/// `max(1, t - window + 1)..=t`. The first `window - 1` means use the shorter
/// available prefix.
pub fn demean_local(series: &PriceSeries, window: usize) -> Result<DemeanedSeries> {
    demean_local_values(series.values(), window)
}

pub fn demean_local_values(values: &[f64], window: usize) -> Result<DemeanedSeries> {
    if window < 2 || window > values.len() {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: format!("must lie in [2, {}], got {window}", values.len()),
        });
    }
    let means = trailing_means(values, window);
    Ok(DemeanedSeries {
        values: values.iter().zip(&means).map(|(y, m)| y - m).collect(),
        mean_used: MeanUsed::Local { window, means },
    })
}

/// Trailing means, each computed directly from its window so that the value
/// at `t` is independent of accumulated rounding from earlier windows.
pub(crate) fn trailing_means(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let w = &values[lo..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// Parameter triple `(phi, omega, alpha)` of the conditional mean
/// `phi * x_{t-1}` and conditional variance `omega + alpha * x_{t-1}^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DarParams {
    pub phi: f64,
    pub omega: f64,
    pub alpha: f64,
}

impl DarParams {
    pub fn new(phi: f64, omega: f64, alpha: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(Error::InvalidParameter {
                name: "phi",
                reason: "not finite".into(),
            });
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameter {
                name: "omega",
                reason: format!("must be finite and > 0, got {omega}"),
            });
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("must be finite and >= 0, got {alpha}"),
            });
        }
        Ok(Self { phi, omega, alpha })
    }

    /// Conditional variance given the previous observation.
    #[inline]
    pub fn cond_var(&self, prev: f64) -> f64 {
        self.omega + self.alpha * prev * prev
    }

    /// Second-order stability measure `phi^2 + alpha`.
    pub fn xi(&self) -> f64 {
        self.phi * self.phi + self.alpha
    }
}

/// Rescaled time `c = t / T` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimePoint(f64);

impl TimePoint {
    pub fn new(c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidParameter {
                name: "c",
                reason: format!("rescaled time must lie in [0, 1], got {c}"),
            });
        }
        Ok(Self(c))
    }

    /// The rescaled time of observation `t` (1-based) in a sample of `n`.
    pub fn of_index(t: usize, n: usize) -> Self {
        Self(t as f64 / n as f64)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// A uniform grid of `m >= 2` points covering `[0, 1]`.
    pub fn uniform_grid(m: usize) -> Vec<TimePoint> {
        assert!(m >= 2, "grid needs at least two points");
        (0..m).map(|i| Self(i as f64 / (m - 1) as f64)).collect()
    }

    /// One grid point per observation: `1/T, 2/T, ..., 1`.
    pub fn observation_grid(n: usize) -> Vec<TimePoint> {
        (1..=n).map(|t| Self::of_index(t, n)).collect()
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population (denominator `n`) variance.
pub(crate) fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}
