//! Simulation of constant and time-varying DAR(1) paths.
//!
//! Both recursions start from `x = 0` and discard a burn-in segment, which
//! stands in for a draw from the stationary law.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{DarParams, DemeanedSeries};

pub const DEFAULT_BURN_IN: usize = 500;

/// Paths whose magnitude exceeds this are reported as explosions.
pub const EXPLOSION_LIMIT: f64 = 1e150;

/// Innovation distributions. All are symmetric about zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// N(0, 1).
    #[serde(alias = "gaussian", alias = "normal")]
    GaussianStandard,
    /// U[-1, 1]; variance 1/3, so not unit variance.
    UniformPm1,
    /// U[-√3, √3]; unit variance.
    #[serde(alias = "uniform")]
    UniformStandardized,
}

impl NoiseDistribution {
    pub fn variance(self) -> f64 {
        match self {
            Self::GaussianStandard | Self::UniformStandardized => 1.0,
            Self::UniformPm1 => 1.0 / 3.0,
        }
    }

    /// Support as a closed interval; the gaussian is unbounded.
    pub fn support(self) -> (f64, f64) {
        match self {
            Self::GaussianStandard => (f64::NEG_INFINITY, f64::INFINITY),
            Self::UniformPm1 => (-1.0, 1.0),
            Self::UniformStandardized => (-3f64.sqrt(), 3f64.sqrt()),
        }
    }

    pub fn density(self, eta: f64) -> f64 {
        match self {
            Self::GaussianStandard => {
                (-0.5 * eta * eta).exp() / (2.0 * std::f64::consts::PI).sqrt()
            }
            Self::UniformPm1 | Self::UniformStandardized => {
                let (lo, hi) = self.support();
                if (lo..=hi).contains(&eta) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for NoiseDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "gaussian_standard" | "normal" => Ok(Self::GaussianStandard),
            "uniform_pm1" => Ok(Self::UniformPm1),
            "uniform" | "uniform_standardized" => Ok(Self::UniformStandardized),
            other => Err(Error::InvalidInput(format!(
                "unknown noise distribution '{other}'"
            ))),
        }
    }
}

/// Derives the seed of stream `index` from a master seed (splitmix64 of the
/// counter offset), so replications can run in any order.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn draw_noise(dist: NoiseDistribution, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "must be >= 1".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match dist {
        NoiseDistribution::GaussianStandard => {
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
        NoiseDistribution::UniformPm1 | NoiseDistribution::UniformStandardized => {
            let (lo, hi) = dist.support();
            let u = Uniform::new_inclusive(lo, hi);
            (0..n).map(|_| u.sample(&mut rng)).collect()
        }
    })
}

/// Runs `x_t = phi x_{t-1} + eta_t sqrt(omega + alpha x_{t-1}^2)` from `x = 0`.
///
/// `noise[..burn_in]` drives the burn-in with `burn_params`; the remaining
/// draws produce the returned path, using `params_at(i)` for output index `i`.
fn run_recursion(
    noise: &[f64],
    burn_in: usize,
    burn_params: DarParams,
    params_at: impl Fn(usize) -> DarParams,
) -> Result<Vec<f64>> {
    let step = |prev: f64, p: &DarParams, eta: f64| p.phi * prev + eta * p.cond_var(prev).sqrt();
    let mut x = 0.0;
    for (i, eta) in noise[..burn_in].iter().enumerate() {
        x = step(x, &burn_params, *eta);
        if !(x.abs() <= EXPLOSION_LIMIT) {
            return Err(Error::Explosion { index: i, value: x });
        }
    }
    let mut out = Vec::with_capacity(noise.len() - burn_in);
    for (i, eta) in noise[burn_in..].iter().enumerate() {
        x = step(x, &params_at(i), *eta);
        if !(x.abs() <= EXPLOSION_LIMIT) {
            return Err(Error::Explosion {
                index: burn_in + i,
                value: x,
            });
        }
        out.push(x);
    }
    Ok(out)
}

/// Simulates a path driven by a caller-supplied noise sequence; the first
/// `burn_in` entries are consumed by the burn-in.
pub fn simulate_dar_with_noise(
    params: DarParams,
    noise: &[f64],
    burn_in: usize,
) -> Result<Vec<f64>> {
    if noise.len() < burn_in + 2 {
        return Err(Error::TooShort {
            needed: burn_in + 2,
            got: noise.len(),
        });
    }
    run_recursion(noise, burn_in, params, |_| params)
}

pub fn simulate_dar(
    params: DarParams,
    len: usize,
    dist: NoiseDistribution,
    seed: u64,
    burn_in: usize,
) -> Result<DemeanedSeries> {
    if len < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: len,
        });
    }
    if let Ok(lambda) = crate::stability::lyapunov_quadrature(params.phi, params.alpha, dist) {
        if lambda >= 0.0 {
            log::warn!(
                "simulating outside the strict stationarity region (lyapunov = {lambda:.4})"
            );
        }
    }
    let noise = draw_noise(dist, burn_in + len, seed)?;
    simulate_dar_with_noise(params, &noise, burn_in).map(DemeanedSeries::from_centered)
}

/// A deterministic function of rescaled time.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamFn {
    Constant {
        value: f64,
    },
    /// Linear interpolation between `from` at c = 0 and `to` at c = 1.
    Linear {
        from: f64,
        to: f64,
    },
    /// `before` for c < `at`, `after` otherwise.
    Step {
        before: f64,
        after: f64,
        at: f64,
    },
    /// Piecewise-linear through `(c, value)` knots sorted by c; constant
    /// beyond the end knots.
    Table {
        knots: Vec<(f64, f64)>,
    },
    #[serde(skip)]
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for ParamFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { value } => write!(f, "Constant({value})"),
            Self::Linear { from, to } => write!(f, "Linear({from} -> {to})"),
            Self::Step { before, after, at } => write!(f, "Step({before} | {at} | {after})"),
            Self::Table { knots } => write!(f, "Table({} knots)", knots.len()),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl ParamFn {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(f))
    }

    pub fn eval(&self, c: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Linear { from, to } => from + (to - from) * c,
            Self::Step { before, after, at } => {
                if c < *at {
                    *before
                } else {
                    *after
                }
            }
            Self::Table { knots } => interpolate_knots(knots, c),
            Self::Custom(f) => f(c),
        }
    }
}

fn interpolate_knots(knots: &[(f64, f64)], c: f64) -> f64 {
    match knots {
        [] => f64::NAN,
        [(_, v)] => *v,
        _ => {
            if c <= knots[0].0 {
                return knots[0].1;
            }
            for w in knots.windows(2) {
                let ((c0, v0), (c1, v1)) = (w[0], w[1]);
                if c <= c1 {
                    let s = if c1 > c0 { (c - c0) / (c1 - c0) } else { 1.0 };
                    return v0 + s * (v1 - v0);
                }
            }
            knots[knots.len() - 1].1
        }
    }
}

/// Parameter functions `phi(c), omega(c), alpha(c)` on `[0, 1]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamPath {
    pub phi: ParamFn,
    pub omega: ParamFn,
    pub alpha: ParamFn,
}

impl ParamPath {
    pub fn constant(params: DarParams) -> Self {
        Self {
            phi: ParamFn::constant(params.phi),
            omega: ParamFn::constant(params.omega),
            alpha: ParamFn::constant(params.alpha),
        }
    }

    pub fn at(&self, c: f64) -> Result<DarParams> {
        DarParams::new(self.phi.eval(c), self.omega.eval(c), self.alpha.eval(c)).map_err(|e| {
            Error::InvalidParameter {
                name: "path",
                reason: format!("at c = {c}: {e}"),
            }
        })
    }
}

/// Simulates the triangular array `x_{t,T}` with parameters evaluated at
/// `t/T`; the burn-in runs with parameters frozen at `c = 1/T`.
pub fn simulate_tvdar(
    path: &ParamPath,
    len: usize,
    dist: NoiseDistribution,
    seed: u64,
    burn_in: usize,
) -> Result<DemeanedSeries> {
    if len < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: len,
        });
    }
    let n = len as f64;
    let params: Vec<DarParams> = (1..=len)
        .map(|t| path.at(t as f64 / n))
        .collect::<Result<_>>()?;
    let noise = draw_noise(dist, burn_in + len, seed)?;
    run_recursion(&noise, burn_in, params[0], |i| params[i]).map(DemeanedSeries::from_centered)
}
