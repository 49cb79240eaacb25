//! Kernel-localized QML for time-varying parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AsymptoticCov, FitOptions, Fitter, Pairs, RawFit, Residuals};
use crate::error::{Error, Result};
use crate::kernels::{kernel_l2_norm, weights_at, Bandwidth, KernelSpec};
use crate::series::{DarParams, TimePoint};
use crate::stats::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalFitOptions {
    pub fit: FitOptions,
    /// Start each grid point from the previous optimum, falling back to a
    /// cold multi-start if that run fails.
    pub warm_start: bool,
    /// Evaluate grid points concurrently. Implies cold starts.
    pub parallel: bool,
}

impl Default for LocalFitOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            warm_start: true,
            parallel: false,
        }
    }
}

impl LocalFitOptions {
    pub fn cold() -> Self {
        Self {
            warm_start: false,
            ..Self::default()
        }
    }
}

/// Estimate at one grid point. `params` is `None` when the point could not
/// be estimated (too few effective observations, degenerate window or
/// optimizer failure); `note` says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPoint {
    pub c: TimePoint,
    pub params: Option<DarParams>,
    pub cov: Option<AsymptoticCov>,
    /// Weighted log-likelihood divided by the realized weight sum.
    pub loglik: Option<f64>,
    pub converged: bool,
    pub weight_sum: f64,
    pub nonzero: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    pub points: Vec<LocalPoint>,
    pub kernel: KernelSpec,
    pub bandwidth: Bandwidth,
    /// Length of the series the fit was computed on.
    pub n_obs: usize,
}

impl LocalFit {
    pub fn grid(&self) -> Vec<TimePoint> {
        self.points.iter().map(|p| p.c).collect()
    }

    pub fn estimated(&self) -> impl Iterator<Item = (&LocalPoint, DarParams)> {
        self.points.iter().filter_map(|p| p.params.map(|q| (p, q)))
    }

    /// Parameters at rescaled time `c`, linearly interpolated between the
    /// neighbouring estimated grid points and held constant beyond the
    /// first and last ones. Exact at grid points.
    pub fn params_at(&self, c: f64) -> Option<DarParams> {
        let est: Vec<(f64, DarParams)> = self.estimated().map(|(p, q)| (p.c.value(), q)).collect();
        let (first, last) = (est.first()?, est.last()?);
        if c <= first.0 {
            return Some(first.1);
        }
        if c >= last.0 {
            return Some(last.1);
        }
        let k = est.partition_point(|(ci, _)| *ci <= c);
        let (c0, p0) = est[k - 1];
        if c0 == c {
            return Some(p0);
        }
        let (c1, p1) = est[k];
        let s = (c - c0) / (c1 - c0);
        let lerp = |a: f64, b: f64| a + s * (b - a);
        Some(DarParams {
            phi: lerp(p0.phi, p1.phi),
            omega: lerp(p0.omega, p1.omega),
            alpha: lerp(p0.alpha, p1.alpha),
        })
    }
}

fn fit_point(
    x: &[f64],
    c: TimePoint,
    kernel: KernelSpec,
    b: Bandwidth,
    opts: &LocalFitOptions,
    warm: Option<DarParams>,
) -> LocalPoint {
    let n = x.len();
    let mut point = LocalPoint {
        c,
        params: None,
        cov: None,
        loglik: None,
        converged: false,
        weight_sum: 0.0,
        nonzero: 0,
        note: None,
    };
    let w = match weights_at(kernel, b, c, n) {
        Ok(w) => w,
        Err(e) => {
            point.note = Some(e.to_string());
            return point;
        }
    };
    let pairs = Pairs::weighted(x, &w.weights);
    point.weight_sum = pairs.weight_sum();
    point.nonzero = pairs.len();

    let result = Fitter::new(&pairs, &opts.fit).and_then(|fitter| {
        let warm_fit = warm.and_then(|start| fitter.fit_from(&start).ok());
        match warm_fit {
            Some(raw) => Ok(raw),
            None => fitter.fit_cold(),
        }
    });
    match result {
        Ok(RawFit {
            params,
            loglik,
            converged,
            ..
        }) => {
            let n_eff = n as f64 * b.value() / kernel_l2_norm(kernel);
            point.params = Some(params);
            point.cov = Some(pairs.covariance(&params, n_eff));
            point.loglik = Some(loglik / point.weight_sum);
            point.converged = converged;
        }
        Err(e) => point.note = Some(e.to_string()),
    }
    point
}

/// Maximizes `Σ_t K((t/T - c)/b) l_t(theta)` at every grid point.
///
/// Points with fewer than `opts.fit.min_obs` nonzero weights, or where the
/// optimizer fails, are reported as unestimated rather than failing the
/// whole fit.
pub fn fit_tvdar(
    x: &[f64],
    grid: &[TimePoint],
    kernel: KernelSpec,
    b: Bandwidth,
    opts: &LocalFitOptions,
) -> Result<LocalFit> {
    if x.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite observation at index {i}"
        )));
    }
    if grid.windows(2).any(|g| g[0] >= g[1]) {
        return Err(Error::InvalidInput(
            "grid must be strictly increasing".into(),
        ));
    }
    b.check_admissible(x.len());

    let points = if opts.parallel {
        grid.par_iter()
            .map(|c| fit_point(x, *c, kernel, b, opts, None))
            .collect()
    } else {
        let mut prev: Option<DarParams> = None;
        let mut points = Vec::with_capacity(grid.len());
        for c in grid {
            let warm = if opts.warm_start { prev } else { None };
            let point = fit_point(x, *c, kernel, b, opts, warm);
            if point.params.is_some() {
                prev = point.params;
            }
            points.push(point);
        }
        points
    };
    Ok(LocalFit {
        points,
        kernel,
        bandwidth: b,
        n_obs: x.len(),
    })
}

/// Standardized residuals using the local parameters at each observation's
/// rescaled time `t/T`.
pub fn local_residuals(x: &[f64], fit: &LocalFit) -> Result<Residuals> {
    let n = x.len();
    let mut values = Vec::with_capacity(n.saturating_sub(1));
    for i in 1..n {
        let c = (i + 1) as f64 / n as f64;
        let p = fit
            .params_at(c)
            .ok_or_else(|| Error::Degenerate("local fit has no estimated points".into()))?;
        values.push((x[i] - p.phi * x[i - 1]) / p.cond_var(x[i - 1]).sqrt());
    }
    Ok(Residuals { values, offset: 1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn around(centre: f64, half_width: f64) -> Self {
        Self {
            lower: centre - half_width,
            upper: centre + half_width,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Pointwise normal bands at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalBand {
    pub c: TimePoint,
    pub estimate: DarParams,
    pub phi: Option<Interval>,
    pub omega: Option<Interval>,
    pub alpha: Option<Interval>,
}

/// `estimate ± z_{(1+level)/2} sqrt(∫K² V(c) / (T b))` with `V(c)` the
/// localized block-diagonal asymptotic variance.
pub fn local_confidence_bands(fit: &LocalFit, level: f64) -> Result<Vec<LocalBand>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter {
            name: "level",
            reason: format!("{level} not in (0, 1)"),
        });
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    Ok(fit
        .points
        .iter()
        .filter_map(|p| {
            let (params, cov) = (p.params?, p.cov?);
            let band = |est: f64, se: Option<f64>| se.map(|s| Interval::around(est, z * s));
            Some(LocalBand {
                c: p.c,
                estimate: params,
                phi: band(params.phi, cov.se_phi),
                omega: band(params.omega, cov.se_omega),
                alpha: band(params.alpha, cov.se_alpha),
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::fit_dar;
    use crate::model::{simulate_dar, simulate_tvdar, NoiseDistribution, ParamFn, ParamPath};

    #[test]
    fn rolling_identity() {
        let x = simulate_dar(
            DarParams::new(0.6, 0.02, 0.3).unwrap(),
            400,
            NoiseDistribution::GaussianStandard,
            41,
            500,
        )
        .unwrap();
        let x = x.values();
        let n = x.len();
        let b = Bandwidth::from_window(50, n).unwrap();
        let grid: Vec<TimePoint> = (60..=n)
            .step_by(17)
            .map(|t| TimePoint::of_index(t, n))
            .collect();
        let opts = LocalFitOptions::cold();
        let local = fit_tvdar(x, &grid, KernelSpec::RECTANGULAR, b, &opts).unwrap();
        for (point, t) in local.points.iter().zip((60..=n).step_by(17)) {
            // the 50 likelihood terms ending at t condition on x_{t-50}
            let window = &x[t - 51..t];
            let g = fit_dar(window, &opts.fit).unwrap();
            let l = point.params.unwrap();
            assert_eq!(point.nonzero, 50);
            assert!((g.params.phi - l.phi).abs() < 1e-6, "t = {t}");
            assert!((g.params.omega - l.omega).abs() < 1e-6 * g.params.omega.max(1.0));
            assert!((g.params.alpha - l.alpha).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_parameters_are_recovered() {
        let truth = DarParams::new(0.5, 0.01, 0.3).unwrap();
        let x = simulate_dar(truth, 5000, NoiseDistribution::GaussianStandard, 42, 500).unwrap();
        let grid: Vec<TimePoint> = (1..=19)
            .map(|i| TimePoint::new(i as f64 / 20.0).unwrap())
            .collect();
        let fit = fit_tvdar(
            x.values(),
            &grid,
            KernelSpec::EPANECHNIKOV,
            Bandwidth::new(0.05).unwrap(),
            &LocalFitOptions::default(),
        )
        .unwrap();
        let max_dev = fit
            .estimated()
            .map(|(_, q)| (q.phi - truth.phi).abs())
            .fold(0.0, f64::max);
        let max_se = fit
            .points
            .iter()
            .filter_map(|p| p.cov?.se_phi)
            .fold(0.0, f64::max);
        assert!(max_dev <= 4.0 * max_se, "{max_dev} vs {max_se}");
    }

    #[test]
    fn trend_in_phi_is_recovered() {
        let path = ParamPath {
            phi: ParamFn::Linear { from: 0.2, to: 0.8 },
            omega: ParamFn::constant(0.01),
            alpha: ParamFn::constant(0.3),
        };
        let x =
            simulate_tvdar(&path, 10_000, NoiseDistribution::GaussianStandard, 43, 500).unwrap();
        let grid: Vec<TimePoint> = (1..=19)
            .map(|i| TimePoint::new(i as f64 / 20.0).unwrap())
            .collect();
        let fit = fit_tvdar(
            x.values(),
            &grid,
            KernelSpec::EPANECHNIKOV,
            Bandwidth::new(0.1).unwrap(),
            &LocalFitOptions::default(),
        )
        .unwrap();
        let pts: Vec<(f64, f64)> = fit.estimated().map(|(p, q)| (p.c.value(), q.phi)).collect();
        let slope = crate::stats::ols_slope(&pts);
        assert!(slope > 0.0 && (slope - 0.6).abs() <= 0.18, "slope {slope}");
    }

    #[test]
    fn parallel_and_warm_agree() {
        let x = simulate_dar(
            DarParams::new(0.5, 1.0, 0.2).unwrap(),
            2000,
            NoiseDistribution::GaussianStandard,
            44,
            500,
        )
        .unwrap();
        let grid = TimePoint::uniform_grid(11);
        let b = Bandwidth::new(0.15).unwrap();
        let warm = fit_tvdar(
            x.values(),
            &grid,
            KernelSpec::EPANECHNIKOV,
            b,
            &LocalFitOptions::default(),
        )
        .unwrap();
        let par = fit_tvdar(
            x.values(),
            &grid,
            KernelSpec::EPANECHNIKOV,
            b,
            &LocalFitOptions {
                parallel: true,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in warm.points.iter().zip(&par.points) {
            let (a, b) = (a.params.unwrap(), b.params.unwrap());
            assert!((a.phi - b.phi).abs() < 1e-5);
            assert!((a.alpha - b.alpha).abs() < 1e-4);
        }
    }

    #[test]
    fn sparse_points_are_unestimated() {
        let x = simulate_dar(
            DarParams::new(0.5, 1.0, 0.2).unwrap(),
            200,
            NoiseDistribution::GaussianStandard,
            45,
            100,
        )
        .unwrap();
        // c = 0 with a trailing kernel sees nothing; c = 0.02 sees 4 points
        let grid = [
            TimePoint::new(0.0).unwrap(),
            TimePoint::new(0.02).unwrap(),
            TimePoint::new(0.5).unwrap(),
        ];
        let fit = fit_tvdar(
            x.values(),
            &grid,
            KernelSpec::RECTANGULAR,
            Bandwidth::new(0.25).unwrap(),
            &LocalFitOptions::default(),
        )
        .unwrap();
        assert!(fit.points[0].params.is_none());
        assert!(fit.points[1].params.is_none());
        assert!(fit.points[2].params.is_some());
    }

    #[test]
    fn band_scaling() {
        let x = simulate_dar(
            DarParams::new(0.5, 1.0, 0.2).unwrap(),
            2000,
            NoiseDistribution::GaussianStandard,
            46,
            500,
        )
        .unwrap();
        let fit = fit_tvdar(
            x.values(),
            &[TimePoint::new(0.5).unwrap()],
            KernelSpec::EPANECHNIKOV,
            Bandwidth::new(0.2).unwrap(),
            &LocalFitOptions::default(),
        )
        .unwrap();
        let wide = local_confidence_bands(&fit, 0.95).unwrap()[0].phi.unwrap();
        let cov = fit.points[0].cov.unwrap();
        let z = 1.959963984540054;
        assert!((wide.width() / 2.0 - z * cov.se_phi.unwrap()).abs() < 1e-12);

        // Halving b with the same local variance widens the band by sqrt(2).
        let mut half = fit.clone();
        half.bandwidth = Bandwidth::new(0.1).unwrap();
        let mut c = cov;
        c.n_eff /= 2.0;
        c.se_phi = Some((1.0 / c.sigma_hat / c.n_eff).sqrt());
        half.points[0].cov = Some(c);
        let narrow = local_confidence_bands(&half, 0.95).unwrap()[0].phi.unwrap();
        assert!((narrow.width() / wide.width() - 2f64.sqrt()).abs() < 1e-12);
        assert!(local_confidence_bands(&fit, 1.0).is_err());
    }

    #[test]
    fn params_at_interpolates() {
        let mk = |c: f64, phi: f64| LocalPoint {
            c: TimePoint::new(c).unwrap(),
            params: Some(DarParams::new(phi, 1.0, 0.1).unwrap()),
            cov: None,
            loglik: None,
            converged: true,
            weight_sum: 1.0,
            nonzero: 1,
            note: None,
        };
        let fit = LocalFit {
            points: vec![mk(0.2, 0.0), mk(0.6, 0.4)],
            kernel: KernelSpec::EPANECHNIKOV,
            bandwidth: Bandwidth::new(0.1).unwrap(),
            n_obs: 10,
        };
        assert_eq!(fit.params_at(0.1).unwrap().phi, 0.0);
        assert!((fit.params_at(0.4).unwrap().phi - 0.2).abs() < 1e-15);
        assert_eq!(fit.params_at(0.6).unwrap().phi, 0.4);
        assert_eq!(fit.params_at(0.9).unwrap().phi, 0.4);
    }
}
