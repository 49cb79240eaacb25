//! Rolling moments, sample autocorrelations and the AR(1) baseline.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::diagnostics::autocorrelations;
use crate::error::{Error, Result};
use crate::series::{mean, variance, PriceSeries};
use crate::stats::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMode {
    /// `m ± z sigma / sqrt(n)`.
    #[default]
    Standard,
    /// `m ± z sqrt(sigma / n)`, the form printed in the source figures. Kept
    /// for replication only; it is not a valid interval for the mean.
    Verbatim,
}

impl std::str::FromStr for CiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "verbatim" => Ok(Self::Verbatim),
            other => Err(Error::InvalidInput(format!(
                "unknown interval mode `{other}`"
            ))),
        }
    }
}

/// Trailing-window moments. Entry `i` describes the window ending at
/// `dates[i]`; the first `window - 1` observations have no entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingStats {
    pub window: usize,
    pub level: f64,
    pub ci_mode: CiMode,
    pub dates: Vec<NaiveDate>,
    pub local_mean: Vec<f64>,
    pub local_var: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
}

pub fn rolling_mean_var(
    series: &PriceSeries,
    window: usize,
    level: f64,
    ci_mode: CiMode,
) -> Result<RollingStats> {
    rolling_mean_var_values(series.values(), series.dates(), window, level, ci_mode)
}

fn rolling_mean_var_values(
    y: &[f64],
    dates: &[NaiveDate],
    window: usize,
    level: f64,
    ci_mode: CiMode,
) -> Result<RollingStats> {
    if window < 2 || window > y.len() {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: format!("must lie in [2, {}], got {window}", y.len()),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter {
            name: "level",
            reason: format!("{level} not in (0, 1)"),
        });
    }
    let z = normal_quantile(0.5 + level / 2.0);
    let n = window as f64;
    let mut out = RollingStats {
        window,
        level,
        ci_mode,
        dates: dates[window - 1..].to_vec(),
        local_mean: Vec::new(),
        local_var: Vec::new(),
        ci_lower: Vec::new(),
        ci_upper: Vec::new(),
    };
    for end in window - 1..y.len() {
        let w = &y[end + 1 - window..=end];
        let (m, v) = (mean(w), variance(w));
        let half = match ci_mode {
            CiMode::Standard => z * v.sqrt() / n.sqrt(),
            CiMode::Verbatim => z * (v.sqrt() / n).sqrt(),
        };
        out.local_mean.push(m);
        out.local_var.push(v);
        out.ci_lower.push(m - half);
        out.ci_upper.push(m + half);
    }
    Ok(out)
}

/// Sample autocorrelations for lags `0..=max_lag`.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() < 2 || max_lag + 1 >= series.len() {
        return Err(Error::InvalidParameter {
            name: "max_lag",
            reason: format!("must be < length - 1 = {}", series.len().saturating_sub(1)),
        });
    }
    let mut out = vec![1.0];
    out.extend(autocorrelations(series, max_lag)?);
    Ok(out)
}

/// Autocorrelations within each calendar year. Years too short for
/// `max_lag`, or constant within the year, are left out with a warning.
pub fn acf_by_year(series: &PriceSeries, max_lag: usize) -> BTreeMap<i32, Vec<f64>> {
    let mut groups: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for (d, v) in series.dates().iter().zip(series.values()) {
        groups.entry(d.year()).or_default().push(*v);
    }
    groups
        .into_iter()
        .filter_map(|(year, vals)| match acf(&vals, max_lag) {
            Ok(a) => Some((year, a)),
            Err(e) => {
                log::warn!("no autocorrelation for {year}: {e}");
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoMode {
    /// Each residual in the volatility window uses the coefficient fitted on
    /// the window ending at that residual's date.
    #[default]
    PerTau,
    /// Every residual uses the coefficient of the window ending at `t`.
    Fixed,
}

impl std::str::FromStr for RhoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_tau" => Ok(Self::PerTau),
            "fixed" => Ok(Self::Fixed),
            other => Err(Error::InvalidInput(format!("unknown rho mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingAr1 {
    pub window: usize,
    pub mode: RhoMode,
    /// Entry `t` belongs to the window ending at observation `t`. `None`
    /// marks windows that are too early or degenerate.
    pub rho: Vec<Option<f64>>,
    pub sigma_e: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ar1Fit {
    pub rho: f64,
    pub sigma2: f64,
    pub rolling: Option<RollingAr1>,
}

/// Least-squares AR(1) through the origin.
pub fn fit_ar1(x: &[f64]) -> Result<Ar1Fit> {
    if x.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: x.len(),
        });
    }
    let rho = ols_rho(x)
        .ok_or_else(|| Error::Degenerate("sum of squared lagged values is zero".into()))?;
    let sigma2 = x
        .windows(2)
        .map(|w| (w[1] - rho * w[0]).powi(2))
        .sum::<f64>()
        / (x.len() - 1) as f64;
    if !(sigma2 > 0.0) {
        log::warn!("AR(1) fit leaves no residual variance");
    }
    Ok(Ar1Fit {
        rho,
        sigma2,
        rolling: None,
    })
}

fn ols_rho(x: &[f64]) -> Option<f64> {
    let den: f64 = x[..x.len() - 1].iter().map(|v| v * v).sum();
    if den > 0.0 {
        Some(x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / den)
    } else {
        None
    }
}

/// Global fit plus per-window coefficients and residual scales.
/// `rho[t]` uses the `window` values ending at `t`; `sigma_e[t]` averages the
/// `window` squared residuals ending at `t`.
pub fn rolling_ar1(x: &[f64], window: usize, mode: RhoMode) -> Result<Ar1Fit> {
    if window < 3 || window > x.len() {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: format!("must lie in [3, {}], got {window}", x.len()),
        });
    }
    let mut global = fit_ar1(x)?;
    let n = x.len();
    let mut rho = vec![None; n];
    for end in window - 1..n {
        rho[end] = ols_rho(&x[end + 1 - window..=end]);
    }
    let mut sigma_e = vec![None; n];
    for end in window..n {
        let mut acc = 0.0;
        let mut ok = true;
        for tau in end + 1 - window..=end {
            let r = match mode {
                RhoMode::PerTau => rho[tau],
                RhoMode::Fixed => rho[end],
            };
            match r {
                Some(r) => acc += (x[tau] - r * x[tau - 1]).powi(2),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            sigma_e[end] = Some((acc / window as f64).sqrt());
        }
    }
    let degenerate = rho[window - 1..].iter().filter(|r| r.is_none()).count();
    if degenerate > 0 {
        log::warn!("{degenerate} rolling AR(1) windows were constant zero and skipped");
    }
    global.rolling = Some(RollingAr1 {
        window,
        mode,
        rho,
        sigma_e,
    });
    Ok(global)
}
