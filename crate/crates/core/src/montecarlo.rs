//! Repeated simulate-and-fit experiments, kernel density estimates of the
//! resulting sampling distributions, and Lyapunov exponent surfaces.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_dar, residuals, FitOptions};
use crate::model::{simulate_dar, split_seed, NoiseDistribution, DEFAULT_BURN_IN};
use crate::series::DarParams;
use crate::stability::{lyapunov_plugin, lyapunov_quadrature, lyapunov_uniform};
use crate::stats::{quantile_sorted, sorted};

/// Share of failed replications above which a run is flagged.
pub const MAX_FAILURE_RATE: f64 = 0.01;

const KDE_GRID: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Phi,
    Omega,
    Alpha,
    Lambda2,
    Xi,
}

impl Target {
    pub const ALL: [Target; 5] = [
        Target::Phi,
        Target::Omega,
        Target::Alpha,
        Target::Lambda2,
        Target::Xi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::Phi => "phi",
            Target::Omega => "omega",
            Target::Alpha => "alpha",
            Target::Lambda2 => "lambda2",
            Target::Xi => "xi",
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Target::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown target `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub theta0: DarParams,
    pub t_values: Vec<usize>,
    pub reps: usize,
    pub noise: NoiseDistribution,
    pub seed: u64,
    pub targets: Vec<Target>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub fit: FitOptions,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

impl ExperimentConfig {
    pub fn new(theta0: DarParams, t_values: Vec<usize>, reps: usize) -> Self {
        Self {
            theta0,
            t_values,
            reps,
            noise: NoiseDistribution::GaussianStandard,
            seed: 20_240_101,
            targets: Target::ALL.to_vec(),
            burn_in: DEFAULT_BURN_IN,
            fit: FitOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter {
                name: "reps",
                reason: "must be >= 1".into(),
            });
        }
        if self.t_values.is_empty() {
            return Err(Error::InvalidParameter {
                name: "t_values",
                reason: "must not be empty".into(),
            });
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidParameter {
                name: "targets",
                reason: "must not be empty".into(),
            });
        }
        if let Some(t) = self.t_values.iter().find(|t| **t < self.fit.min_obs) {
            return Err(Error::InvalidParameter {
                name: "t_values",
                reason: format!(
                    "{t} is below the minimum of {} observations",
                    self.fit.min_obs
                ),
            });
        }
        DarParams::new(self.theta0.phi, self.theta0.omega, self.theta0.alpha).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    /// Underlying sample in ascending order.
    pub samples: Vec<f64>,
}

impl DensityEstimate {
    /// Grid point with the highest estimated density.
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, d) in self.density.iter().enumerate() {
            if *d > self.density[best] {
                best = i;
            }
        }
        self.grid[best]
    }

    pub fn median(&self) -> f64 {
        quantile_sorted(&self.samples, 0.5)
    }

    pub fn iqr(&self) -> f64 {
        quantile_sorted(&self.samples, 0.75) - quantile_sorted(&self.samples, 0.25)
    }

    /// Trapezoid rule over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(g, d)| 0.5 * (g[1] - g[0]) * (d[0] + d[1]))
            .sum()
    }
}

/// `0.9 min(sd, IQR / 1.34) n^{-1/5}`, falling back to whichever spread is
/// positive.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let s = sorted(samples);
    let n = s.len() as f64;
    let m = s.iter().sum::<f64>() / n;
    let sd = (s.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = (quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25)) / 1.34;
    let spread = if iqr > 0.0 { sd.min(iqr) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian kernel density estimate on an even grid spanning the samples
/// plus three bandwidths either side.
pub fn kde(samples: &[f64], bandwidth: Option<f64>) -> Result<DensityEstimate> {
    let s = sorted(samples);
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("samples must be finite".into()));
    }
    if s.len() < 2 || s[0] == s[s.len() - 1] {
        return Err(Error::Degenerate(
            "kernel density needs at least two distinct samples".into(),
        ));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => {
            return Err(Error::InvalidParameter {
                name: "bandwidth",
                reason: format!("{h} is not positive"),
            })
        }
        None => silverman_bandwidth(&s),
    };
    let lo = s[0] - 3.0 * h;
    let hi = s[s.len() - 1] + 3.0 * h;
    let step = (hi - lo) / (KDE_GRID - 1) as f64;
    let grid: Vec<f64> = (0..KDE_GRID).map(|i| lo + i as f64 * step).collect();
    let norm = 1.0 / (s.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .par_iter()
        .map(|g| {
            // only samples within 8 bandwidths contribute measurably
            let from = s.partition_point(|v| *v < g - 8.0 * h);
            let to = s.partition_point(|v| *v <= g + 8.0 * h);
            norm * s[from..to]
                .iter()
                .map(|v| (-0.5 * ((g - v) / h).powi(2)).exp())
                .sum::<f64>()
        })
        .collect();
    Ok(DensityEstimate {
        grid,
        density,
        bandwidth: h,
        samples: s,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub t: usize,
    /// Per-target estimates in replication order; failed replications are
    /// absent.
    pub samples: BTreeMap<Target, Vec<f64>>,
    pub densities: BTreeMap<Target, DensityEstimate>,
    pub failures: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub by_t: Vec<SampleSet>,
}

impl ExperimentResult {
    pub fn density(&self, t: usize, target: Target) -> Option<&DensityEstimate> {
        self.by_t.iter().find(|s| s.t == t)?.densities.get(&target)
    }
}

/// Seed of replication `rep` at sample size `t`.
pub fn replication_seed(master: u64, t: usize, rep: usize) -> u64 {
    split_seed(split_seed(master, t as u64), rep as u64)
}

fn replicate(cfg: &ExperimentConfig, t: usize, rep: usize) -> Result<BTreeMap<Target, f64>> {
    let x = simulate_dar(
        cfg.theta0,
        t,
        cfg.noise,
        replication_seed(cfg.seed, t, rep),
        cfg.burn_in,
    )?;
    let fit = fit_dar(x.values(), &cfg.fit)?;
    let p = fit.params;
    let mut out = BTreeMap::new();
    for target in &cfg.targets {
        let v = match target {
            Target::Phi => p.phi,
            Target::Omega => p.omega,
            Target::Alpha => p.alpha,
            Target::Xi => p.xi(),
            Target::Lambda2 => lyapunov_plugin(&p, &residuals(x.values(), &p))?,
        };
        out.insert(*target, v);
    }
    Ok(out)
}

/// Simulates, fits and summarizes `reps` replications for every sample size.
pub fn run_estimator_density_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut by_t = Vec::with_capacity(cfg.t_values.len());
    for &t in &cfg.t_values {
        let reps: Vec<Option<BTreeMap<Target, f64>>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| replicate(cfg, t, r).ok())
            .collect();
        let failures = reps.iter().filter(|r| r.is_none()).count();
        let flagged = failures as f64 > MAX_FAILURE_RATE * cfg.reps as f64;
        if flagged {
            log::warn!("T = {t}: {failures} of {} replications failed", cfg.reps);
        }
        let mut samples: BTreeMap<Target, Vec<f64>> = BTreeMap::new();
        for r in reps.iter().flatten() {
            for (k, v) in r {
                samples.entry(*k).or_default().push(*v);
            }
        }
        let mut densities = BTreeMap::new();
        for (k, v) in &samples {
            match kde(v, None) {
                Ok(d) => {
                    densities.insert(*k, d);
                }
                Err(e) => log::warn!("T = {t}: no density for {}: {e}", k.name()),
            }
        }
        by_t.push(SampleSet {
            t,
            samples,
            densities,
            failures,
            flagged,
        });
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        by_t,
    })
}

/// Lyapunov exponents on a `phi` by `alpha` grid. `values[i][j]` belongs to
/// `(phi[i], alpha[j])`; `None` marks the undefined origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSurface {
    pub noise: NoiseDistribution,
    pub phi: Vec<f64>,
    pub alpha: Vec<f64>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl LyapunovSurface {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }
}

/// `{-1, -0.8, ..., 1}` and `{0, 0.1, ..., 1}`.
pub fn default_surface_grids() -> (Vec<f64>, Vec<f64>) {
    (
        (-5..=5).map(|i| 0.2 * i as f64).collect(),
        (0..=10).map(|j| 0.1 * j as f64).collect(),
    )
}

pub fn lyapunov_surface(
    phi_grid: &[f64],
    alpha_grid: &[f64],
    dist: NoiseDistribution,
) -> Result<LyapunovSurface> {
    if phi_grid.is_empty() || alpha_grid.is_empty() {
        return Err(Error::InvalidInput(
            "surface grids must not be empty".into(),
        ));
    }
    if let Some(a) = alpha_grid.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("{a} is negative or not finite"),
        });
    }
    let values = phi_grid
        .par_iter()
        .map(|&phi| {
            alpha_grid
                .iter()
                .map(|&alpha| {
                    if phi == 0.0 && alpha == 0.0 {
                        return Ok(None);
                    }
                    let v = match dist {
                        NoiseDistribution::UniformPm1 => lyapunov_uniform(phi, alpha)?,
                        _ => lyapunov_quadrature(phi, alpha, dist)?,
                    };
                    Ok(Some(v))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LyapunovSurface {
        noise: dist,
        phi: phi_grid.to_vec(),
        alpha: alpha_grid.to_vec(),
        values,
    })
}
