//! One-step-ahead forecasts from rolling window fits.

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_dar, FitOptions};
use crate::series::{mean, DarParams, PriceSeries, DEFAULT_WINDOW};
use crate::stats::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    /// Uncertainty of the autoregressive coefficient only. Collapses to a
    /// point when `x_t = 0` and ignores the innovation.
    #[default]
    ParameterOnly,
    /// `y_hat ± z sqrt(omega + alpha x_t^2)`.
    InnovationInclusive,
}

impl std::str::FromStr for IntervalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parameter" | "parameter_only" => Ok(Self::ParameterOnly),
            "innovation" | "innovation_inclusive" => Ok(Self::InnovationInclusive),
            other => Err(Error::InvalidInput(format!(
                "unknown interval kind `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastOptions {
    pub window: usize,
    pub level: f64,
    pub interval: IntervalKind,
    /// Centre every window on this level (a peg, say) instead of its own
    /// mean.
    pub fixed_mean: Option<f64>,
    pub fit: FitOptions,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            level: 0.95,
            interval: IntervalKind::default(),
            fixed_mean: None,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    /// Target date. The forecast past the last observation is dated one
    /// calendar day after it.
    pub date: NaiveDate,
    /// Index of the last observation used.
    pub origin: usize,
    pub y_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub actual: Option<f64>,
    pub local_mean: f64,
    /// `None` when the window was constant and no fit was needed.
    pub window_fit: Option<DarParams>,
    pub sigma_hat: Option<f64>,
    pub x_t: f64,
}

impl ForecastRecord {
    pub fn error(&self) -> Option<f64> {
        self.actual.map(|a| a - self.y_hat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedForecast {
    pub date: NaiveDate,
    pub origin: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRun {
    pub options: ForecastOptions,
    pub records: Vec<ForecastRecord>,
    pub skipped: Vec<SkippedForecast>,
}

/// Half-width `z sqrt(x_t^2 / (n sigma_hat))`.
pub fn prediction_interval(
    y_hat: f64,
    sigma_hat: f64,
    x_t: f64,
    n: usize,
    level: f64,
) -> Result<(f64, f64)> {
    if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sigma_hat",
            reason: format!("must be > 0, got {sigma_hat}"),
        });
    }
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "must be >= 2".into(),
        });
    }
    let half = z_value(level)? * (x_t * x_t / (n as f64 * sigma_hat)).sqrt();
    Ok((y_hat - half, y_hat + half))
}

fn z_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter {
            name: "level",
            reason: format!("{level} not in (0, 1)"),
        });
    }
    Ok(normal_quantile(0.5 + level / 2.0))
}

fn target_date(series: &PriceSeries, origin: usize) -> NaiveDate {
    match series.dates().get(origin + 1) {
        Some(d) => *d,
        None => series.dates()[origin] + Days::new(1),
    }
}

fn forecast_at(
    series: &PriceSeries,
    origin: usize,
    opts: &ForecastOptions,
) -> Result<ForecastRecord> {
    let y = series.values();
    let w = &y[origin + 1 - opts.window..=origin];
    let m = opts.fixed_mean.unwrap_or_else(|| mean(w));
    let x: Vec<f64> = w.iter().map(|v| v - m).collect();
    let x_t = x[x.len() - 1];
    let mut rec = ForecastRecord {
        date: target_date(series, origin),
        origin,
        y_hat: m,
        lower: m,
        upper: m,
        actual: y.get(origin + 1).copied(),
        local_mean: m,
        window_fit: None,
        sigma_hat: None,
        x_t,
    };
    if x.iter().all(|v| *v == 0.0) {
        return Ok(rec);
    }
    let fit = fit_dar(&x, &opts.fit)?;
    let p = fit.params;
    rec.y_hat = m + p.phi * x_t;
    rec.window_fit = Some(p);
    rec.sigma_hat = Some(fit.cov.sigma_hat);
    (rec.lower, rec.upper) = match opts.interval {
        IntervalKind::ParameterOnly => {
            prediction_interval(rec.y_hat, fit.cov.sigma_hat, x_t, opts.window, opts.level)?
        }
        IntervalKind::InnovationInclusive => {
            let half = z_value(opts.level)? * p.cond_var(x_t).sqrt();
            (rec.y_hat - half, rec.y_hat + half)
        }
    };
    Ok(rec)
}

/// Forecasts `y_{t+1}` for every `t` with a full trailing window, including
/// one step past the end of the sample. Each window is centred on its own
/// mean unless a fixed level is given, so only data up to `t` enters the
/// forecast.
pub fn one_step_forecast(series: &PriceSeries, opts: &ForecastOptions) -> Result<ForecastRun> {
    if opts.window < 3 || opts.window + 1 > series.len() {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: format!(
                "need 3 <= window <= length - 1 = {}",
                series.len().saturating_sub(1)
            ),
        });
    }
    z_value(opts.level)?;
    if opts.fixed_mean.is_some_and(|m| !m.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "fixed_mean",
            reason: "must be finite".into(),
        });
    }
    let outcomes: Vec<(usize, Result<ForecastRecord>)> = (opts.window - 1..series.len())
        .into_par_iter()
        .map(|t| (t, forecast_at(series, t, opts)))
        .collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (origin, out) in outcomes {
        match out {
            Ok(r) => records.push(r),
            Err(e) if e.is_input_error() => return Err(e),
            Err(e) => skipped.push(SkippedForecast {
                date: target_date(series, origin),
                origin,
                reason: e.to_string(),
            }),
        }
    }
    if !skipped.is_empty() {
        log::warn!(
            "{} forecast dates skipped after failed window fits",
            skipped.len()
        );
    }
    Ok(ForecastRun {
        options: *opts,
        records,
        skipped,
    })
}

/// Mean squared prediction error over records with a realized value.
pub fn mspe(records: &[ForecastRecord]) -> Result<f64> {
    let errs: Vec<f64> = records.iter().filter_map(ForecastRecord::error).collect();
    if errs.is_empty() {
        return Err(Error::InvalidInput(
            "no forecast has a realized value".into(),
        ));
    }
    Ok(errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{draw_noise, NoiseDistribution};

    fn start() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
    }

    #[test]
    fn constant_series_forecasts_itself() {
        let s = PriceSeries::daily(start(), vec![1.0; 80]).unwrap();
        let run = one_step_forecast(&s, &ForecastOptions::default()).unwrap();
        assert_eq!(run.records.len(), 31);
        assert!(run
            .records
            .iter()
            .all(|r| r.y_hat == 1.0 && r.lower == 1.0 && r.upper == 1.0));
        assert_eq!(run.records.last().unwrap().actual, None);
        assert_eq!(run.records.last().unwrap().date, start() + Days::new(80));
        assert_eq!(mspe(&run.records).unwrap(), 0.0);
    }

    #[test]
    fn reduces_to_local_mean_without_dependence() {
        let z = draw_noise(NoiseDistribution::GaussianStandard, 200, 71).unwrap();
        let s = PriceSeries::daily(start(), z.iter().map(|v| 1.0 + 0.01 * v).collect()).unwrap();
        let run = one_step_forecast(&s, &ForecastOptions::default()).unwrap();
        for r in &run.records {
            let p = r.window_fit.unwrap();
            assert!((r.y_hat - (r.local_mean + p.phi * r.x_t)).abs() < 1e-15);
        }
    }

    #[test]
    fn interval_formula() {
        let (lo, hi) = prediction_interval(2.0, 4.0, 0.0, 50, 0.95).unwrap();
        assert_eq!((lo, hi), (2.0, 2.0));
        let (lo, hi) = prediction_interval(0.0, 4.0, 1.0, 50, 0.95).unwrap();
        assert!((hi - 1.959963984540054 / 200f64.sqrt()).abs() < 1e-12);
        assert_eq!(lo, -hi);
        let (_, hi2) = prediction_interval(0.0, 4.0, 2.0, 50, 0.95).unwrap();
        assert_eq!(hi2, 2.0 * hi);
        assert!(prediction_interval(0.0, 0.0, 1.0, 50, 0.95).is_err());
        assert!(prediction_interval(0.0, 1.0, 1.0, 1, 0.95).is_err());
    }

    #[test]
    fn forecast_ignores_the_target_value() {
        let z = draw_noise(NoiseDistribution::GaussianStandard, 120, 72).unwrap();
        let a = PriceSeries::daily(start(), z.clone()).unwrap();
        let mut bumped = z.clone();
        bumped[100] += 50.0;
        let b = PriceSeries::daily(start(), bumped).unwrap();
        let ra = one_step_forecast(&a, &ForecastOptions::default()).unwrap();
        let rb = one_step_forecast(&b, &ForecastOptions::default()).unwrap();
        let fa = ra.records.iter().find(|r| r.origin == 99).unwrap();
        let fb = rb.records.iter().find(|r| r.origin == 99).unwrap();
        assert_eq!(fa.y_hat, fb.y_hat);
        assert_ne!(fa.actual, fb.actual);
    }

    #[test]
    fn mspe_cases() {
        let rec = |y_hat, actual| ForecastRecord {
            date: start(),
            origin: 0,
            y_hat,
            lower: y_hat,
            upper: y_hat,
            actual,
            local_mean: 0.0,
            window_fit: None,
            sigma_hat: None,
            x_t: 0.0,
        };
        assert_eq!(
            mspe(&[rec(1.0, Some(3.0)), rec(1.0, Some(3.0)), rec(1.0, None)]).unwrap(),
            4.0
        );
        assert!(mspe(&[rec(1.0, None)]).is_err());
    }

    #[test]
    fn rejects_oversized_window() {
        let s = PriceSeries::daily(start(), vec![1.0; 50]).unwrap();
        assert!(one_step_forecast(&s, &ForecastOptions::default()).is_err());
    }
}
