//! Residual diagnostics: Ljung–Box whiteness checks and the
//! Chandler–Polonik test for a constant variance function.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_dar, residuals, FitOptions, LocalFit};
use crate::stats::chi2_sf;

/// Outcome of a hypothesis test. `reject` is `p_value < level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub level: f64,
    pub reject: bool,
    /// Auxiliary values: lags, gamma, argmax alpha and so on.
    pub nuisance: BTreeMap<String, f64>,
}

impl TestResult {
    pub fn new(name: &str, statistic: f64, p_value: f64, level: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            name: name.to_string(),
            statistic,
            p_value,
            level,
            reject: p_value < level,
            nuisance: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.nuisance.insert(key.to_string(), value);
        self
    }
}

/// Sample autocorrelations `r_1..=r_lags` normalized by the lag-0
/// autocovariance.
pub(crate) fn autocorrelations(series: &[f64], lags: usize) -> Result<Vec<f64>> {
    let n = series.len();
    let m = series.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = series.iter().map(|v| v - m).collect();
    let c0: f64 = d.iter().map(|v| v * v).sum();
    if !(c0 > 0.0) {
        return Err(Error::Degenerate(
            "constant series has undefined autocorrelation".into(),
        ));
    }
    Ok((1..=lags)
        .map(|k| {
            d[k..]
                .iter()
                .zip(&d[..n - k])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / c0
        })
        .collect())
}

/// `Q = n (n + 2) Σ_{k=1}^{lags} r_k^2 / (n - k)`, chi-square with `lags`
/// degrees of freedom under the white-noise null.
pub fn ljung_box(series: &[f64], lags: usize, level: f64) -> Result<TestResult> {
    let n = series.len();
    if lags == 0 {
        return Err(Error::InvalidParameter {
            name: "lags",
            reason: "must be >= 1".into(),
        });
    }
    if n <= lags + 1 {
        return Err(Error::TooShort {
            needed: lags + 2,
            got: n,
        });
    }
    let r = autocorrelations(series, lags)?;
    let nf = n as f64;
    let q = nf
        * (nf + 2.0)
        * r.iter()
            .enumerate()
            .map(|(i, rk)| rk * rk / (nf - (i + 1) as f64))
            .sum::<f64>();
    Ok(TestResult::new("ljung_box", q, chi2_sf(q, lags), level).with("lags", lags as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowWhiteness {
    /// 0-based index of the last observation in the window.
    pub end: usize,
    pub p_eta: f64,
    pub p_eta_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitenessSummary {
    pub window: usize,
    pub lags: usize,
    pub level: f64,
    pub fraction_reject_eta: f64,
    pub fraction_reject_eta_sq: f64,
    pub windows: Vec<WindowWhiteness>,
    /// Windows whose fit or test failed.
    pub skipped: usize,
}

/// Fits a DAR(1) on every trailing window of `window` observations and runs
/// Ljung–Box on the standardized residuals and on their squares.
pub fn rolling_whiteness(
    x: &[f64],
    window: usize,
    lags: usize,
    level: f64,
    opts: &FitOptions,
) -> Result<WhitenessSummary> {
    if window < lags + 5 {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: format!("must be >= lags + 5 = {}", lags + 5),
        });
    }
    if window > x.len() {
        return Err(Error::TooShort {
            needed: window,
            got: x.len(),
        });
    }
    let results: Vec<Option<WindowWhiteness>> = (window - 1..x.len())
        .into_par_iter()
        .map(|end| {
            let w = &x[end + 1 - window..=end];
            let fit = fit_dar(w, opts).ok()?;
            let eta = residuals(w, &fit.params).values;
            let sq: Vec<f64> = eta.iter().map(|e| e * e).collect();
            Some(WindowWhiteness {
                end,
                p_eta: ljung_box(&eta, lags, level).ok()?.p_value,
                p_eta_sq: ljung_box(&sq, lags, level).ok()?.p_value,
            })
        })
        .collect();
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let windows: Vec<WindowWhiteness> = results.into_iter().flatten().collect();
    if windows.is_empty() {
        return Err(Error::NoConvergence("no window could be fitted".into()));
    }
    let frac = |f: fn(&WindowWhiteness) -> f64| {
        windows.iter().filter(|w| f(w) < level).count() as f64 / windows.len() as f64
    };
    Ok(WhitenessSummary {
        window,
        lags,
        level,
        fraction_reject_eta: frac(|w| w.p_eta),
        fraction_reject_eta_sq: frac(|w| w.p_eta_sq),
        windows,
        skipped,
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("{gamma} not in (0, 1)"),
        });
    }
    Ok(())
}

/// Smallest observed value `q` such that the share of entries strictly
/// greater than `q` is at most `gamma`.
pub fn upper_quantile_sq_residuals(resid_sq: &[f64], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if resid_sq.is_empty() {
        return Err(Error::InvalidInput("no squared residuals".into()));
    }
    let mut v = resid_sq.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let limit = gamma * n as f64;
    let mut i = 0;
    while i < n {
        // entries strictly greater than v[i]
        let last_equal = i + v[i..].partition_point(|x| *x == v[i]);
        let above = n - last_equal;
        if above as f64 <= limit + 1e-9 {
            return Ok(v[i]);
        }
        i = last_equal;
    }
    Ok(v[n - 1])
}

/// `G(alpha) = (1/T) #{t <= floor(alpha T) : e_t^2 >= q}`.
pub fn g_process(resid_sq: &[f64], q_sq: f64, alpha: f64) -> f64 {
    let n = resid_sq.len();
    let k = prefix_len(alpha, n);
    resid_sq[..k].iter().filter(|e| **e >= q_sq).count() as f64 / n as f64
}

fn prefix_len(alpha: f64, n: usize) -> usize {
    // alpha = k/n must map back to k despite rounding
    ((alpha * n as f64 + 1e-9).floor() as usize).min(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpOptions {
    pub gamma: f64,
    /// Spacing of the reported alpha grid; the supremum is always exact.
    pub grid_step: f64,
    /// Fraction of the sample `[a, b]` used for the quantile.
    pub quantile_range: (f64, f64),
    pub level: f64,
}

impl Default for CpOptions {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            grid_step: 0.001,
            quantile_range: (0.0, 1.0),
            level: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpResult {
    pub statistic: f64,
    pub gamma: f64,
    pub quantile_sq: f64,
    /// `(alpha, sqrt(T / (gamma (1 - gamma))) |G(alpha) - alpha gamma|)` on
    /// the alpha grid and at every jump point `k/T` of `G`. At a jump point
    /// the value is the larger of the left limit and the attained value, so
    /// the maximum over the profile is the supremum over `[0, 1]`.
    pub profile: Vec<(f64, f64)>,
    pub argmax_alpha: f64,
    pub p_value: f64,
    pub n: usize,
}

impl CpResult {
    pub fn to_test(&self, level: f64) -> TestResult {
        TestResult::new("chandler_polonik", self.statistic, self.p_value, level)
            .with("gamma", self.gamma)
            .with("argmax_alpha", self.argmax_alpha)
            .with("quantile_sq", self.quantile_sq)
    }

    /// Profile value at the grid point nearest `alpha`.
    pub fn value_at(&self, alpha: f64) -> Option<f64> {
        self.profile
            .iter()
            .min_by(|a, b| (a.0 - alpha).abs().total_cmp(&(b.0 - alpha).abs()))
            .map(|p| p.1)
    }
}

/// CP statistic for a sequence of squared residuals in time order.
pub fn cp_from_squares(resid_sq: &[f64], opts: &CpOptions) -> Result<CpResult> {
    check_gamma(opts.gamma)?;
    if !(opts.grid_step > 0.0 && opts.grid_step <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "grid_step",
            reason: "must lie in (0, 1]".into(),
        });
    }
    let n = resid_sq.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    if resid_sq.iter().all(|e| *e == resid_sq[0]) {
        return Err(Error::Degenerate("all residuals are equal".into()));
    }
    let (a, b) = opts.quantile_range;
    if !(0.0 <= a && a < b && b <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "quantile_range",
            reason: format!("({a}, {b})"),
        });
    }
    let lo = ((a * n as f64).ceil() as usize).max(1) - 1;
    let hi = ((b * n as f64 + 1e-9).floor() as usize).min(n);
    let q = upper_quantile_sq_residuals(&resid_sq[lo..hi.max(lo + 1)], opts.gamma)?;

    let gamma = opts.gamma;
    let nf = n as f64;
    let scale = (nf / (gamma * (1.0 - gamma))).sqrt();
    let mut counts = Vec::with_capacity(n + 1);
    counts.push(0usize);
    for e in resid_sq {
        counts.push(counts.last().unwrap() + usize::from(*e >= q));
    }
    let value = |count: usize, alpha: f64| scale * (count as f64 / nf - alpha * gamma).abs();

    let mut profile: Vec<(f64, f64)> = Vec::new();
    let steps = (1.0 / opts.grid_step).round() as usize;
    for i in 0..=steps {
        let alpha = (i as f64 * opts.grid_step).min(1.0);
        profile.push((alpha, value(counts[prefix_len(alpha, n)], alpha)));
    }
    for k in 1..=n {
        let alpha = k as f64 / nf;
        let v = value(counts[k], alpha).max(value(counts[k - 1], alpha));
        profile.push((alpha, v));
    }
    profile.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    // keep the larger value when a grid point coincides with a jump point
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(profile.len());
    for p in profile {
        match merged.last_mut() {
            Some(last) if last.0 == p.0 => last.1 = last.1.max(p.1),
            _ => merged.push(p),
        }
    }
    let (argmax_alpha, statistic) = merged.iter().copied().fold(
        (0.0, f64::NEG_INFINITY),
        |acc, p| if p.1 > acc.1 { p } else { acc },
    );
    Ok(CpResult {
        statistic,
        gamma,
        quantile_sq: q,
        profile: merged,
        argmax_alpha,
        p_value: brownian_bridge_pvalue(statistic),
        n,
    })
}

/// Unstandardized residuals `x_t - phi(t/T) x_{t-1}` for `t = 2..=T`.
pub fn cp_residuals(x: &[f64], fit: &LocalFit) -> Result<Vec<f64>> {
    let n = x.len();
    (1..n)
        .map(|i| {
            let p = fit
                .params_at((i + 1) as f64 / n as f64)
                .ok_or_else(|| Error::Degenerate("local fit has no estimated points".into()))?;
            Ok(x[i] - p.phi * x[i - 1])
        })
        .collect()
}

/// Chandler–Polonik test of `sigma(t/T) = sigma_0` using the local
/// autoregressive coefficient from `fit`.
pub fn cp_statistic(x: &[f64], fit: &LocalFit, opts: &CpOptions) -> Result<CpResult> {
    let sq: Vec<f64> = cp_residuals(x, fit)?.iter().map(|e| e * e).collect();
    cp_from_squares(&sq, opts)
}

/// `P(sup_{0<=t<=1} |B(t)| >= x)` for a Brownian bridge `B`.
///
/// Uses `2 Σ (-1)^{k+1} exp(-2 k^2 x^2)` for `x >= 1`, truncated once terms
/// drop below 1e-12, and the theta-function form
/// `1 - sqrt(2 pi)/x Σ exp(-(2k-1)^2 pi^2 / (8 x^2))` for small `x`, where the
/// alternating series converges slowly.
pub fn brownian_bridge_pvalue(stat: f64) -> f64 {
    if !(stat > 0.0) {
        return 1.0;
    }
    let p = if stat >= 1.0 {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * stat * stat).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-12 {
                break;
            }
        }
        2.0 * sum
    } else {
        let pi2 = std::f64::consts::PI.powi(2);
        let mut sum = 0.0;
        for k in 1..=100 {
            let m = (2 * k - 1) as f64;
            let term = (-m * m * pi2 / (8.0 * stat * stat)).exp();
            sum += term;
            if term < 1e-16 {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / stat * sum
    };
    p.clamp(0.0, 1.0)
}
