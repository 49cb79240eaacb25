//! Stability measures: the Lyapunov exponent `E ln|phi + eta sqrt(alpha)|`
//! and the second-order measure `xi = phi^2 + alpha`.
//!
//! A negative Lyapunov exponent is the strict stationarity condition;
//! `xi < 1` is the finite-variance condition and is the more conservative
//! of the two.
//!
//! For uniform `U[-1, 1]` noise the exponent has a closed form obtained from
//! the antiderivative `u ln u - u` of `ln u`. With `s = sqrt(alpha)` and
//! `a = |phi|`:
//!
//! ```text
//! a > s:  (g(a + s) - g(a - s)) / (2s)
//! a <= s: (g(a + s) + g(s - a)) / (2s),    g(u) = u (ln u - 1), g(0) = 0
//! ```
//!
//! The `a <= s` branch differs from a variant that subtracts `g(s - a)`; that
//! variant does not match direct quadrature (at `phi = 0` it would give 0
//! instead of `ln s - 1`) and is not implemented.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::TestResult;
use crate::error::{Error, Result};
use crate::estimation::local::Interval;
use crate::estimation::{
    fit_dar, residuals, AsymptoticCov, FitOptions, FitResult, LocalFit, Residuals,
};
use crate::kernels::{weights_at, Bandwidth, KernelSpec};
use crate::model::{simulate_dar, split_seed, NoiseDistribution, DEFAULT_BURN_IN};
use crate::quadrature::integrate;
use crate::series::{DarParams, TimePoint};
use crate::stats::{normal_quantile, normal_sf, quantile_sorted, sorted};

/// Absolute tolerance of [`lyapunov_quadrature`].
pub const QUADRATURE_TOL: f64 = 1e-8;

// The gaussian density below exp(-72) contributes nothing measurable.
const GAUSSIAN_CUTOFF: f64 = 12.0;

fn degenerate_origin() -> Error {
    Error::InvalidParameter {
        name: "phi, alpha",
        reason: "(0, 0) gives ln 0 almost surely".into(),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("{alpha} is not >= 0"),
        });
    }
    Ok(())
}

/// Closed-form Lyapunov exponent for `eta ~ U[-1, 1]`.
pub fn lyapunov_uniform(phi: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return if phi == 0.0 {
            Err(degenerate_origin())
        } else {
            Ok(phi.abs().ln())
        };
    }
    let g = |u: f64| if u == 0.0 { 0.0 } else { u * (u.ln() - 1.0) };
    let s = alpha.sqrt();
    let a = phi.abs();
    let bracket = if a > s {
        g(a + s) - g(a - s)
    } else {
        g(a + s) + g(s - a)
    };
    Ok(bracket / (2.0 * s))
}

/// `∫ ln|phi + eta sqrt(alpha)| psi(eta) d eta` by adaptive quadrature.
///
/// The integrand has a logarithmic singularity at `eta* = -phi / sqrt(alpha)`;
/// the support is split there and each side is integrated after the
/// substitution `eta = eta* ± L u^2`, which turns the singularity into a
/// continuous integrand.
pub fn lyapunov_quadrature(phi: f64, alpha: f64, dist: NoiseDistribution) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return if phi == 0.0 {
            Err(degenerate_origin())
        } else {
            Ok(phi.abs().ln())
        };
    }
    let s = alpha.sqrt();
    let (lo, hi) = match dist {
        NoiseDistribution::GaussianStandard => (-GAUSSIAN_CUTOFF, GAUSSIAN_CUTOFF),
        _ => dist.support(),
    };
    let f = |eta: f64| {
        let v = (phi + eta * s).abs();
        if v == 0.0 {
            0.0
        } else {
            v.ln() * dist.density(eta)
        }
    };
    let star = -phi / s;
    if star <= lo || star >= hi {
        return integrate(f, lo, hi, QUADRATURE_TOL);
    }
    let right = hi - star;
    let left = star - lo;
    let r = integrate(
        |u| f(star + right * u * u) * 2.0 * right * u,
        0.0,
        1.0,
        0.5 * QUADRATURE_TOL,
    )?;
    let l = integrate(
        |u| f(star - left * u * u) * 2.0 * left * u,
        0.0,
        1.0,
        0.5 * QUADRATURE_TOL,
    )?;
    Ok(l + r)
}

fn plugin_term(params: &DarParams, eta: f64) -> Option<f64> {
    let v = (params.phi + eta * params.alpha.sqrt()).abs();
    (v > 0.0).then(|| v.ln())
}

/// `(1/n) Σ ln|phi + eta_t sqrt(alpha)|` over the residuals. Terms with a
/// zero argument are dropped (and counted in a warning).
pub fn lyapunov_plugin(params: &DarParams, resid: &Residuals) -> Result<f64> {
    if params.alpha == 0.0 {
        return if params.phi == 0.0 {
            Err(degenerate_origin())
        } else {
            Ok(params.phi.abs().ln())
        };
    }
    if resid.is_empty() {
        return Err(Error::InvalidInput("no residuals".into()));
    }
    let (mut sum, mut used) = (0.0, 0usize);
    for eta in &resid.values {
        if let Some(t) = plugin_term(params, *eta) {
            sum += t;
            used += 1;
        }
    }
    if used < resid.len() {
        log::warn!(
            "{} plug-in terms had a zero argument and were skipped",
            resid.len() - used
        );
    }
    if used == 0 {
        return Err(Error::Degenerate("every plug-in term is ln 0".into()));
    }
    Ok(sum / used as f64)
}

/// Kernel-weighted local plug-in exponent at `c`, normalized by the realized
/// weight sum. Residual `j` belongs to observation `resid.offset + j` and uses
/// the fitted parameters at that observation's rescaled time.
pub fn lyapunov_local(
    fit: &LocalFit,
    resid: &Residuals,
    c: TimePoint,
    kernel: KernelSpec,
    b: Bandwidth,
) -> Result<f64> {
    let n = fit.n_obs;
    let w = weights_at(kernel, b, c, n)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (j, eta) in resid.values.iter().enumerate() {
        let i = resid.offset + j;
        let wi = w.weights.get(i).copied().unwrap_or(0.0);
        if wi == 0.0 {
            continue;
        }
        let params = fit
            .params_at((i + 1) as f64 / n as f64)
            .ok_or_else(|| Error::Degenerate("local fit has no estimated points".into()))?;
        if let Some(t) = plugin_term(&params, *eta) {
            num += wi * t;
            den += wi;
        }
    }
    if den == 0.0 {
        return Err(Error::EmptyWindow { c: c.value() });
    }
    Ok(num / den)
}

/// `xi_hat` with the asymptotic variance of `sqrt(T) (xi_hat - xi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiEstimate {
    pub xi: f64,
    pub variance: f64,
    /// `sqrt(variance / n)`.
    pub se: f64,
}

/// Delta method on the block-diagonal limit law: with `A = (2 phi, 1)`,
/// `V = 4 phi^2 / sigma + (kappa omega^-1)_{alpha alpha}`.
pub fn xi_measure(params: &DarParams, cov: &AsymptoticCov, n: f64) -> Result<XiEstimate> {
    let avar_phi = cov
        .avar_phi()
        .ok_or_else(|| Error::Singular("sigma_hat is zero".into()))?;
    let avar_alpha = cov
        .avar_alpha()
        .ok_or_else(|| Error::Singular("omega_hat is singular".into()))?;
    let variance = 4.0 * params.phi * params.phi * avar_phi + avar_alpha;
    if !(variance > 0.0) {
        return Err(Error::Singular(format!("xi variance is {variance}")));
    }
    Ok(XiEstimate {
        xi: params.xi(),
        variance,
        se: (variance / n).sqrt(),
    })
}

/// One-sided Wald test of `xi < xi0` against `xi >= xi0`.
pub fn xi_wald_test(xi: f64, variance: f64, n: usize, xi0: f64, level: f64) -> Result<TestResult> {
    if !(variance > 0.0) {
        return Err(Error::InvalidParameter {
            name: "variance",
            reason: "must be > 0".into(),
        });
    }
    let stat = (n as f64).sqrt() * (xi - xi0) / variance.sqrt();
    let p = normal_sf(stat);
    Ok(TestResult::new("xi_wald", stat, p, level)
        .with("xi", xi)
        .with("xi0", xi0)
        .with("variance", variance)
        .with("n", n as f64))
}

/// Pointwise interval for `xi(c)` from the localized covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalXi {
    pub c: TimePoint,
    pub xi: f64,
    pub interval: Option<Interval>,
}

pub fn local_xi(fit: &LocalFit, level: f64) -> Result<Vec<LocalXi>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter {
            name: "level",
            reason: format!("{level} not in (0, 1)"),
        });
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    Ok(fit
        .estimated()
        .map(|(point, params)| {
            let interval = point
                .cov
                .and_then(|cov| xi_measure(&params, &cov, cov.n_eff).ok())
                .map(|e| Interval::around(e.xi, z * e.se));
            LocalXi {
                c: point.c,
                xi: params.xi(),
                interval,
            }
        })
        .collect())
}

/// Summary of the sampling distribution of the plug-in exponent, obtained
/// by simulating from the fitted model and re-estimating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovBootstrap {
    pub samples: Vec<f64>,
    pub failures: usize,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    /// Share of samples below zero.
    pub frac_negative: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn bootstrap_lyapunov(
    params: DarParams,
    n: usize,
    dist: NoiseDistribution,
    reps: usize,
    seed: u64,
    level: f64,
    opts: &FitOptions,
) -> Result<LyapunovBootstrap> {
    if reps == 0 {
        return Err(Error::InvalidParameter {
            name: "reps",
            reason: "must be >= 1".into(),
        });
    }
    let draws: Vec<Option<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let x =
                simulate_dar(params, n, dist, split_seed(seed, r as u64), DEFAULT_BURN_IN).ok()?;
            let fit = fit_dar(x.values(), opts).ok()?;
            lyapunov_plugin(&fit.params, &residuals(x.values(), &fit.params)).ok()
        })
        .collect();
    let failures = draws.iter().filter(|d| d.is_none()).count();
    let samples: Vec<f64> = draws.into_iter().flatten().collect();
    if samples.is_empty() {
        return Err(Error::NoConvergence(
            "every bootstrap replication failed".into(),
        ));
    }
    let s = sorted(&samples);
    let tail = 0.5 * (1.0 - level);
    Ok(LyapunovBootstrap {
        median: quantile_sorted(&s, 0.5),
        lower: quantile_sorted(&s, tail),
        upper: quantile_sorted(&s, 1.0 - tail),
        frac_negative: s.iter().filter(|v| **v < 0.0).count() as f64 / s.len() as f64,
        level,
        failures,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLyapunov {
    pub c: TimePoint,
    pub lambda: Option<f64>,
}

/// Everything the stability measures say about one fitted series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Closed form, when the noise is declared `U[-1, 1]`.
    pub lambda_analytic: Option<f64>,
    /// Quadrature under a declared noise density.
    pub lambda_quadrature: Option<f64>,
    pub lambda_plugin: f64,
    pub xi: f64,
    pub xi_variance: Option<f64>,
    pub xi_se: Option<f64>,
    pub local_lambda: Option<Vec<LocalLyapunov>>,
    pub local_xi: Option<Vec<LocalXi>>,
}

impl StabilityReport {
    pub fn from_fit(
        x: &[f64],
        fit: &FitResult,
        known_noise: Option<NoiseDistribution>,
    ) -> Result<Self> {
        let p = fit.params;
        let resid = residuals(x, &p);
        let xi = xi_measure(&p, &fit.cov, fit.n_used as f64).ok();
        Ok(Self {
            lambda_analytic: match known_noise {
                Some(NoiseDistribution::UniformPm1) => Some(lyapunov_uniform(p.phi, p.alpha)?),
                _ => None,
            },
            lambda_quadrature: known_noise
                .map(|d| lyapunov_quadrature(p.phi, p.alpha, d))
                .transpose()?,
            lambda_plugin: lyapunov_plugin(&p, &resid)?,
            xi: p.xi(),
            xi_variance: xi.map(|e| e.variance),
            xi_se: xi.map(|e| e.se),
            local_lambda: None,
            local_xi: None,
        })
    }

    /// Adds local exponents and local `xi` intervals on the fit's grid.
    pub fn with_local(mut self, x: &[f64], fit: &LocalFit, level: f64) -> Result<Self> {
        let resid = crate::estimation::local_residuals(x, fit)?;
        self.local_lambda = Some(
            fit.points
                .iter()
                .map(|p| LocalLyapunov {
                    c: p.c,
                    lambda: p.params.and_then(|_| {
                        lyapunov_local(fit, &resid, p.c, fit.kernel, fit.bandwidth).ok()
                    }),
                })
                .collect(),
        );
        self.local_xi = Some(local_xi(fit, level)?);
        Ok(self)
    }
}
