//! Quasi-maximum-likelihood estimation of DAR(1) models.
//!
//! The gaussian QML objective is maximized over `(phi, ln omega, ln alpha)`
//! with a multi-start Nelder–Mead search, which keeps `omega > 0` and
//! `alpha > 0` by construction. Kernel-localized fits reuse the same
//! machinery with per-observation weights (see [`local`]).

pub mod local;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{Minimum, NelderMead};
use crate::series::DarParams;

pub use local::{
    fit_tvdar, local_confidence_bands, local_residuals, Interval, LocalBand, LocalFit,
    LocalFitOptions, LocalPoint,
};

/// `|phi|` is searched in `[-PHI_BOUND, PHI_BOUND]`.
pub const PHI_BOUND: f64 = 2.0;
const LN_ALPHA_MIN: f64 = -30.0;
const LN_ALPHA_MAX: f64 = 4.0;

/// Optimizer settings shared by global and local fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Simplex diameter (in transformed coordinates) at which a run stops.
    pub tol: f64,
    /// Number of starting points: one moment-based start plus perturbations.
    pub starts: usize,
    /// Seed for the start perturbations.
    pub seed: u64,
    /// Minimum number of observations (global) or nonzero weights (local).
    pub min_obs: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 5_000,
            tol: 1e-8,
            starts: 5,
            seed: 0x5eed,
            min_obs: 10,
        }
    }
}

/// Plug-in estimates of the asymptotic covariance of the QML estimator.
///
/// `sqrt(n) (theta_hat - theta)` is asymptotically normal with block
/// diagonal covariance `diag(1/sigma, kappa * omega^-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticCov {
    pub sigma_hat: f64,
    pub omega_hat: [[f64; 2]; 2],
    /// Kurtosis of the standardized residuals less one.
    pub kappa_hat: f64,
    /// Effective sample size dividing the asymptotic variances.
    pub n_eff: f64,
    pub se_phi: Option<f64>,
    pub se_omega: Option<f64>,
    pub se_alpha: Option<f64>,
    /// `kappa * omega^-1`, absent when `omega_hat` is singular.
    pub var_block: Option<[[f64; 2]; 2]>,
    pub singular: bool,
}

impl AsymptoticCov {
    /// Asymptotic variance of `sqrt(n) phi_hat`, i.e. `1 / sigma`.
    pub fn avar_phi(&self) -> Option<f64> {
        (self.sigma_hat > 0.0).then(|| 1.0 / self.sigma_hat)
    }

    /// Asymptotic variance of `sqrt(n) alpha_hat`.
    pub fn avar_alpha(&self) -> Option<f64> {
        self.var_block.map(|m| m[1][1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: DarParams,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub cov: AsymptoticCov,
    pub n_used: usize,
}

/// Standardized residuals `(x_t - phi x_{t-1}) / sqrt(omega + alpha x_{t-1}^2)`
/// for `t = 2..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub values: Vec<f64>,
    /// 0-based index of the observation the first residual belongs to.
    pub offset: usize,
}

impl Residuals {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Conditioning pairs `(x_{t-1}, x_t)` with their likelihood weights.
/// Zero-weight pairs are never stored.
#[derive(Debug, Clone, Default)]
pub(crate) struct Pairs {
    pub prev: Vec<f64>,
    pub cur: Vec<f64>,
    pub weight: Vec<f64>,
}

impl Pairs {
    pub fn unweighted(x: &[f64]) -> Self {
        let n = x.len().saturating_sub(1);
        Self {
            prev: x[..n].to_vec(),
            cur: x[1..].to_vec(),
            weight: vec![1.0; n],
        }
    }

    /// `weights[i]` weights the term for observation `i` (0-based), which
    /// conditions on `x[i - 1]`; `weights[0]` is ignored.
    pub fn weighted(x: &[f64], weights: &[f64]) -> Self {
        let mut p = Self::default();
        for i in 1..x.len() {
            if weights[i] > 0.0 {
                p.prev.push(x[i - 1]);
                p.cur.push(x[i]);
                p.weight.push(weights[i]);
            }
        }
        p
    }

    pub fn len(&self) -> usize {
        self.cur.len()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight.iter().sum()
    }

    fn iter(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.prev
            .iter()
            .zip(&self.cur)
            .zip(&self.weight)
            .map(|((p, c), w)| (*p, *c, *w))
    }

    /// Weighted QML log-likelihood.
    pub fn loglik(&self, params: &DarParams) -> f64 {
        let mut s = 0.0;
        for (p, c, w) in self.iter() {
            let h = params.cond_var(p);
            let e = c - params.phi * p;
            s += w * (h.ln() + e * e / h);
        }
        -0.5 * s
    }

    fn is_degenerate(&self) -> bool {
        let first = match self.cur.first() {
            Some(v) => *v,
            None => return true,
        };
        self.prev.iter().chain(&self.cur).all(|v| *v == first)
    }

    /// Weighted mean of `(x^2 / h, [1, x^2; x^2, x^4] / h^2, eta^4)`.
    fn moments(&self, params: &DarParams) -> (f64, [[f64; 2]; 2], f64) {
        let wsum = self.weight_sum();
        let (mut sig, mut o00, mut o01, mut o11, mut k4) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (p, c, w) in self.iter() {
            let h = params.cond_var(p);
            let p2 = p * p;
            sig += w * p2 / h;
            let h2 = h * h;
            o00 += w / h2;
            o01 += w * p2 / h2;
            o11 += w * p2 * p2 / h2;
            let eta = (c - params.phi * p) / h.sqrt();
            k4 += w * eta.powi(4);
        }
        (
            sig / wsum,
            [[o00 / wsum, o01 / wsum], [o01 / wsum, o11 / wsum]],
            k4 / wsum - 1.0,
        )
    }

    pub fn covariance(&self, params: &DarParams, n_eff: f64) -> AsymptoticCov {
        let (sigma_hat, omega_hat, kappa_hat) = self.moments(params);
        let det = omega_hat[0][0] * omega_hat[1][1] - omega_hat[0][1] * omega_hat[1][0];
        let scale = omega_hat[0][0] * omega_hat[1][1];
        let omega_singular = !(det > 1e-12 * scale) || !det.is_finite();
        let var_block = (!omega_singular).then(|| {
            let k = kappa_hat / det;
            [
                [k * omega_hat[1][1], -k * omega_hat[0][1]],
                [-k * omega_hat[1][0], k * omega_hat[0][0]],
            ]
        });
        let sigma_ok = sigma_hat > 0.0 && sigma_hat.is_finite();
        let se = |v: f64| (v > 0.0).then(|| (v / n_eff).sqrt());
        AsymptoticCov {
            sigma_hat,
            omega_hat,
            kappa_hat,
            n_eff,
            se_phi: if sigma_ok { se(1.0 / sigma_hat) } else { None },
            se_omega: var_block.and_then(|m| se(m[0][0])),
            se_alpha: var_block.and_then(|m| se(m[1][1])),
            var_block,
            singular: omega_singular || !sigma_ok,
        }
    }

    /// Moment-based starting values: OLS for phi, then a regression of
    /// squared OLS residuals on `x_{t-1}^2` for `(omega, alpha)`.
    fn moment_start(&self) -> [f64; 3] {
        let wsum = self.weight_sum();
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (p, c, w) in self.iter() {
            sxy += w * p * c;
            sxx += w * p * p;
        }
        let phi = if sxx > 0.0 {
            (sxy / sxx).clamp(-1.5, 1.5)
        } else {
            0.0
        };
        let (mut mx, mut my) = (0.0, 0.0);
        for (p, c, w) in self.iter() {
            let e = c - phi * p;
            mx += w * p * p;
            my += w * e * e;
        }
        mx /= wsum;
        my /= wsum;
        let (mut cxy, mut cxx) = (0.0, 0.0);
        for (p, c, w) in self.iter() {
            let e = c - phi * p;
            let d = p * p - mx;
            cxy += w * d * (e * e - my);
            cxx += w * d * d;
        }
        let slope = if cxx > 0.0 { cxy / cxx } else { 0.0 };
        let alpha = slope.clamp(0.05, 2.0);
        let mut omega = my - alpha * mx;
        if !(omega > 0.05 * my) {
            omega = 0.05 * my;
        }
        if !(omega > 0.0) {
            omega = f64::MIN_POSITIVE.sqrt();
        }
        [phi, omega.ln(), alpha.ln()]
    }

    fn data_scale(&self) -> f64 {
        let wsum = self.weight_sum();
        let m2 = self.iter().map(|(_, c, w)| w * c * c).sum::<f64>() / wsum;
        if m2 > 0.0 {
            m2
        } else {
            1.0
        }
    }
}

fn to_params(z: &[f64]) -> DarParams {
    DarParams {
        phi: z[0],
        omega: z[1].exp(),
        alpha: z[2].exp(),
    }
}

/// The fitting engine shared by global and local estimation.
pub(crate) struct Fitter<'a> {
    pairs: &'a Pairs,
    opts: &'a FitOptions,
    lower: [f64; 3],
    upper: [f64; 3],
}

pub(crate) struct RawFit {
    pub params: DarParams,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

const STEP: [f64; 3] = [0.1, 0.5, 0.5];

impl<'a> Fitter<'a> {
    pub fn new(pairs: &'a Pairs, opts: &'a FitOptions) -> Result<Self> {
        if pairs.len() + 1 < opts.min_obs {
            return Err(Error::TooShort {
                needed: opts.min_obs,
                got: pairs.len() + 1,
            });
        }
        if pairs.is_degenerate() {
            return Err(Error::Degenerate(
                "all observations are equal; the fit is singular".into(),
            ));
        }
        let ln_scale = pairs.data_scale().ln();
        Ok(Self {
            pairs,
            opts,
            lower: [-PHI_BOUND, ln_scale - 40.0, LN_ALPHA_MIN],
            upper: [PHI_BOUND, ln_scale + 15.0, LN_ALPHA_MAX],
        })
    }

    fn objective(&self, z: &[f64]) -> f64 {
        -self.pairs.loglik(&to_params(z))
    }

    fn run(&self, start: &[f64]) -> Minimum {
        let nm = NelderMead {
            max_iter: self.opts.max_iter,
            tol: self.opts.tol,
            ..Default::default()
        };
        let m = nm.minimize_with_restart(
            |z| self.objective(z),
            start,
            &STEP,
            &self.lower,
            &self.upper,
        );
        debug_assert!(m.value <= self.objective(start) || !self.objective(start).is_finite());
        m
    }

    /// Deterministic multi-start search.
    pub fn fit_cold(&self) -> Result<RawFit> {
        let base = self.pairs.moment_start();
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        let mut starts = vec![base];
        for _ in 1..self.opts.starts.max(1) {
            starts.push([
                base[0] + rng.gen_range(-0.3..0.3),
                base[1] + rng.gen_range(-1.0..1.0),
                base[2] + rng.gen_range(-1.5..1.5),
            ]);
        }
        let runs: Vec<Minimum> = starts.iter().map(|s| self.run(s)).collect();
        self.pick(runs)
    }

    /// Single run from the given parameters.
    pub fn fit_from(&self, start: &DarParams) -> Result<RawFit> {
        let z = [
            start.phi,
            start.omega.ln(),
            start.alpha.max(LN_ALPHA_MIN.exp()).ln(),
        ];
        self.pick(vec![self.run(&z)])
    }

    fn pick(&self, runs: Vec<Minimum>) -> Result<RawFit> {
        let iterations = runs.iter().map(|m| m.iterations).sum();
        let any_converged = runs.iter().any(|m| m.converged);
        let best = runs
            .into_iter()
            .filter(|m| m.converged || !any_converged)
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .expect("at least one start");
        if !any_converged {
            return Err(Error::NoConvergence(format!(
                "no start converged within {} iterations",
                self.opts.max_iter
            )));
        }
        if !best.value.is_finite() {
            return Err(Error::NoConvergence(
                "objective is not finite at the optimum".into(),
            ));
        }
        Ok(RawFit {
            params: to_params(&best.x),
            loglik: -best.value,
            converged: best.converged,
            iterations,
        })
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!(
            "non-finite observation at index {i}"
        ))),
        None => Ok(()),
    }
}

/// Gaussian QML log-likelihood
/// `-1/2 Σ_{t=2}^T [ln h_t + (x_t - phi x_{t-1})^2 / h_t]`.
pub fn qml_loglik(x: &[f64], params: &DarParams) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    check_finite(x)?;
    Ok(Pairs::unweighted(x).loglik(params))
}

pub fn fit_dar(x: &[f64], opts: &FitOptions) -> Result<FitResult> {
    check_finite(x)?;
    let pairs = Pairs::unweighted(x);
    let fitter = Fitter::new(&pairs, opts)?;
    let raw = fitter.fit_cold()?;
    Ok(FitResult {
        params: raw.params,
        loglik: raw.loglik,
        converged: raw.converged,
        iterations: raw.iterations,
        cov: pairs.covariance(&raw.params, x.len() as f64),
        n_used: x.len(),
    })
}

pub fn residuals(x: &[f64], params: &DarParams) -> Residuals {
    let values = x
        .windows(2)
        .map(|w| (w[1] - params.phi * w[0]) / params.cond_var(w[0]).sqrt())
        .collect();
    Residuals { values, offset: 1 }
}

/// Plug-in `Σ̂`, `Ω̂` and `κ̂` averaged over the `T - 1` conditioning pairs;
/// standard errors use `T`.
pub fn asymptotic_cov(x: &[f64], params: &DarParams) -> Result<AsymptoticCov> {
    if x.len() < 10 {
        return Err(Error::TooShort {
            needed: 10,
            got: x.len(),
        });
    }
    check_finite(x)?;
    Ok(Pairs::unweighted(x).covariance(params, x.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_dar, NoiseDistribution};
    use crate::series::{mean, variance};

    fn p(phi: f64, omega: f64, alpha: f64) -> DarParams {
        DarParams::new(phi, omega, alpha).unwrap()
    }

    #[test]
    fn loglik_hand_values() {
        assert_eq!(qml_loglik(&[0.0, 0.0], &p(0.3, 1.0, 1.0)).unwrap(), 0.0);
        assert_eq!(qml_loglik(&[1.0, 1.0], &p(1.0, 1.0, 0.0)).unwrap(), 0.0);
        let v = qml_loglik(&[1.0, 2.0], &p(0.0, 1.0, 1.0)).unwrap();
        // -1/2 ln 2 - 1/2 * 4/2
        assert!((v - (-0.5 * 2f64.ln() - 1.0)).abs() < 1e-15);
        assert!((v + 1.34657).abs() < 1e-5);
        assert!(qml_loglik(&[1.0, f64::NAN], &p(0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn identity_residuals() {
        let x = [0.3, -1.0, 2.0, 0.5];
        let r = residuals(&x, &p(0.0, 1.0, 0.0));
        assert_eq!(r.values, &x[1..]);
        assert_eq!(r.offset, 1);
    }

    #[test]
    fn deterministic_path_has_zero_residuals() {
        let params = p(0.8, 0.5, 0.2);
        let mut x = vec![1.0];
        for _ in 0..20 {
            x.push(params.phi * x.last().unwrap());
        }
        assert!(residuals(&x, &params).values.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn residuals_recover_noise() {
        let params = p(0.7, 0.01, 0.5);
        let x = simulate_dar(
            params,
            100_000,
            NoiseDistribution::GaussianStandard,
            21,
            500,
        )
        .unwrap();
        let r = residuals(x.values(), &params);
        let v = variance(&r.values);
        assert!((0.95..=1.05).contains(&v), "{v}");
        assert!(mean(&r.values).abs() <= 3.0 / (r.len() as f64).sqrt());
    }

    #[test]
    fn kurtosis_estimates() {
        let params = p(0.5, 1.0, 0.3);
        let g = simulate_dar(
            params,
            100_000,
            NoiseDistribution::GaussianStandard,
            22,
            500,
        )
        .unwrap();
        let k = asymptotic_cov(g.values(), &params).unwrap().kappa_hat;
        assert!((k - 2.0).abs() < 0.15, "{k}");
        let u = simulate_dar(
            params,
            100_000,
            NoiseDistribution::UniformStandardized,
            23,
            500,
        )
        .unwrap();
        let k = asymptotic_cov(u.values(), &params).unwrap().kappa_hat;
        assert!((k - 0.8).abs() < 0.1, "{k}");
    }

    #[test]
    fn zero_series_is_singular() {
        let cov = asymptotic_cov(&[0.0; 20], &p(0.5, 1.0, 0.3)).unwrap();
        assert_eq!(cov.sigma_hat, 0.0);
        assert!(cov.singular);
        assert!(cov.se_phi.is_none());
    }

    #[test]
    fn recovers_parameters() {
        let truth = p(0.7, 0.01, 0.5);
        let x = simulate_dar(truth, 5000, NoiseDistribution::GaussianStandard, 31, 500).unwrap();
        let fit = fit_dar(x.values(), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        let c = fit.cov;
        assert!((fit.params.phi - truth.phi).abs() < 3.0 * c.se_phi.unwrap());
        assert!((fit.params.omega - truth.omega).abs() < 3.0 * c.se_omega.unwrap());
        assert!((fit.params.alpha - truth.alpha).abs() < 3.0 * c.se_alpha.unwrap());

        // coarse grid search never beats the optimizer
        let mut best = f64::NEG_INFINITY;
        for i in 0..=20 {
            for j in 0..=20 {
                for k in 0..=20 {
                    let q = p(
                        0.5 + 0.02 * i as f64,
                        0.005 + 0.0005 * j as f64,
                        0.3 + 0.02 * k as f64,
                    );
                    best = best.max(qml_loglik(x.values(), &q).unwrap());
                }
            }
        }
        assert!(fit.loglik >= best - 1e-9);
    }

    #[test]
    fn arch_has_no_autoregression() {
        let x = simulate_dar(
            p(0.0, 1.0, 0.5),
            5000,
            NoiseDistribution::GaussianStandard,
            32,
            500,
        )
        .unwrap();
        let fit = fit_dar(x.values(), &FitOptions::default()).unwrap();
        assert!(fit.params.phi.abs() < 3.0 * fit.cov.se_phi.unwrap());
    }

    #[test]
    fn optimum_dominates_starts() {
        let x = simulate_dar(
            p(0.4, 0.2, 0.3),
            300,
            NoiseDistribution::GaussianStandard,
            33,
            500,
        )
        .unwrap();
        let opts = FitOptions::default();
        let pairs = Pairs::unweighted(x.values());
        let start = pairs.moment_start();
        let fit = fit_dar(x.values(), &opts).unwrap();
        assert!(fit.loglik >= pairs.loglik(&to_params(&start)));
    }

    #[test]
    fn scale_equivariance() {
        let x = simulate_dar(
            p(0.6, 1.0, 0.4),
            2000,
            NoiseDistribution::GaussianStandard,
            34,
            500,
        )
        .unwrap();
        let opts = FitOptions::default();
        let a = fit_dar(x.values(), &opts).unwrap().params;
        let k = 7.5;
        let b = fit_dar(x.scaled(k).values(), &opts).unwrap().params;
        assert!((a.phi - b.phi).abs() <= 1e-5 * a.phi.abs());
        assert!((a.alpha - b.alpha).abs() <= 1e-5 * a.alpha.abs());
        assert!((a.omega * k * k - b.omega).abs() <= 1e-5 * b.omega);
    }

    #[test]
    fn degenerate_and_short_inputs() {
        let opts = FitOptions::default();
        assert!(matches!(
            fit_dar(&[0.3; 50], &opts),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            fit_dar(&[0.1, 0.2, 0.3], &opts),
            Err(Error::TooShort { .. })
        ));
    }
}
