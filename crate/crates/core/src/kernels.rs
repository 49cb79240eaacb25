//! Localizing kernels and bandwidths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimePoint;

/// Above this value of `T * b^3` the bias term of local estimators is no
/// longer negligible and a warning is logged.
pub const ADMISSIBILITY_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Indicator of `(-1, 0]`: a trailing window.
    #[serde(alias = "rectangular")]
    RectangularAsymmetric,
    /// `1.5 (1 - (2u)^2)` on `[-1/2, 1/2]`.
    Epanechnikov,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangular" | "rectangular_asymmetric" => Ok(Self::RectangularAsymmetric),
            "epanechnikov" => Ok(Self::Epanechnikov),
            other => Err(Error::InvalidInput(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KernelSpec {
    pub kind: KernelKind,
}

impl KernelSpec {
    pub const RECTANGULAR: KernelSpec = KernelSpec {
        kind: KernelKind::RectangularAsymmetric,
    };
    pub const EPANECHNIKOV: KernelSpec = KernelSpec {
        kind: KernelKind::Epanechnikov,
    };

    pub fn support(&self) -> (f64, f64) {
        match self.kind {
            KernelKind::RectangularAsymmetric => (-1.0, 0.0),
            KernelKind::Epanechnikov => (-0.5, 0.5),
        }
    }

    #[inline]
    pub fn weight(&self, u: f64) -> f64 {
        kernel_weight(*self, u)
    }
}

/// Kernel value at `u`; zero outside the support.
///
/// The rectangular kernel is taken as the indicator of `(-1, 0]` so that a
/// bandwidth of `n / T` selects exactly `n` observations.
#[inline]
pub fn kernel_weight(spec: KernelSpec, u: f64) -> f64 {
    match spec.kind {
        KernelKind::RectangularAsymmetric => {
            if u > -1.0 && u <= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        KernelKind::Epanechnikov => {
            if (-0.5..=0.5).contains(&u) {
                1.5 * (1.0 - 4.0 * u * u)
            } else {
                0.0
            }
        }
    }
}

/// `∫ K(u)^2 du` over the support.
pub fn kernel_l2_norm(spec: KernelSpec) -> f64 {
    match spec.kind {
        KernelKind::RectangularAsymmetric => 1.0,
        // 2.25 * ∫ (1 - 4u^2)^2 du over [-1/2, 1/2] = 2.25 * 8/15
        KernelKind::Epanechnikov => 1.2,
    }
}

/// Bandwidth as a fraction of the sample, `0 < b <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(b: f64) -> Result<Self> {
        if !(b > 0.0 && b <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "bandwidth",
                reason: format!("must lie in (0, 1], got {b}"),
            });
        }
        Ok(Self(b))
    }

    /// The bandwidth equivalent to a window of `n` observations out of `len`.
    pub fn from_window(n: usize, len: usize) -> Result<Self> {
        Self::new(n as f64 / len as f64)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn equivalent_window(self, len: usize) -> usize {
        (self.0 * len as f64).round() as usize
    }

    /// Checks `T b^3` against [`ADMISSIBILITY_LIMIT`], logging a warning when
    /// it is exceeded. Returns whether the bandwidth is admissible.
    pub fn check_admissible(self, len: usize) -> bool {
        let v = len as f64 * self.0.powi(3);
        if v > ADMISSIBILITY_LIMIT {
            log::warn!(
                "bandwidth {} gives T*b^3 = {v:.4} > {ADMISSIBILITY_LIMIT}",
                self.0
            );
            false
        } else {
            true
        }
    }
}

/// Kernel weights `w_t = K((t/T - c)/b)` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    pub weights: Vec<f64>,
    pub sum: f64,
    pub nonzero: usize,
}

impl KernelWeights {
    /// 0-based indices with positive weight.
    pub fn support_indices(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

// Values within this relative distance of an integer are treated as lying on
// the observation lattice, so that c = t0/T and b = n/T reproduce exact
// integer windows.
const LATTICE_EPS: f64 = 1e-9;

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= LATTICE_EPS * r.abs().max(1.0) {
        r
    } else {
        v
    }
}

pub fn weights_at(
    spec: KernelSpec,
    b: Bandwidth,
    c: TimePoint,
    len: usize,
) -> Result<KernelWeights> {
    if len < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: len,
        });
    }
    let n = len as f64;
    // (t/T - c)/b == (t - cT)/(bT); working in index units keeps the
    // rectangular window exact.
    let centre = snap(c.value() * n);
    let width = snap(b.value() * n);
    let weights: Vec<f64> = (1..=len)
        .map(|t| kernel_weight(spec, (t as f64 - centre) / width))
        .collect();
    let sum: f64 = weights.iter().sum();
    let nonzero = weights.iter().filter(|w| **w > 0.0).count();
    if nonzero == 0 {
        return Err(Error::EmptyWindow { c: c.value() });
    }
    Ok(KernelWeights {
        weights,
        sum,
        nonzero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Composite Simpson on a fine grid; independent of the closed forms above.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn point_values() {
        assert_eq!(kernel_weight(KernelSpec::EPANECHNIKOV, 0.0), 1.5);
        assert_eq!(kernel_weight(KernelSpec::EPANECHNIKOV, 0.5), 0.0);
        assert_eq!(kernel_weight(KernelSpec::EPANECHNIKOV, -0.6), 0.0);
        assert_eq!(kernel_weight(KernelSpec::RECTANGULAR, -0.3), 1.0);
        assert_eq!(kernel_weight(KernelSpec::RECTANGULAR, 0.1), 0.0);
    }

    #[test]
    fn moments_by_quadrature() {
        let e = |u: f64| kernel_weight(KernelSpec::EPANECHNIKOV, u);
        // Simpson is exact for polynomials of degree <= 3 on the support.
        assert!((simpson(e, -0.5, 0.5, 2000) - 1.0).abs() < 1e-12);
        let e2 = simpson(|u| e(u).powi(2), -0.5, 0.5, 20000);
        assert!((e2 - 1.2).abs() < 1e-12, "{e2}");
        assert!((kernel_l2_norm(KernelSpec::EPANECHNIKOV) - e2).abs() < 1e-12);
        let r = simpson(|_| 1.0, -1.0, 0.0, 10);
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(kernel_l2_norm(KernelSpec::RECTANGULAR), 1.0);
    }

    #[test]
    fn nonnegative_and_zero_outside_support() {
        for spec in [KernelSpec::EPANECHNIKOV, KernelSpec::RECTANGULAR] {
            let (lo, hi) = spec.support();
            for i in 0..10_000 {
                let u = -2.0 + 4.0 * i as f64 / 9_999.0;
                let w = kernel_weight(spec, u);
                assert!(w >= 0.0);
                if u < lo || u > hi {
                    assert_eq!(w, 0.0);
                }
            }
        }
    }

    #[test]
    fn rectangular_is_a_trailing_window() {
        let len = 1000;
        let b = Bandwidth::from_window(50, len).unwrap();
        for t0 in 50..=len {
            let w = weights_at(
                KernelSpec::RECTANGULAR,
                b,
                TimePoint::of_index(t0, len),
                len,
            )
            .unwrap();
            let expected: Vec<usize> = (t0 - 50..t0).collect();
            assert_eq!(w.support_indices(), expected, "t0 = {t0}");
        }
    }

    #[test]
    fn epanechnikov_support_scales_with_bandwidth() {
        let len = 1000;
        let w = weights_at(
            KernelSpec::EPANECHNIKOV,
            Bandwidth::new(0.1).unwrap(),
            TimePoint::new(0.5).unwrap(),
            len,
        )
        .unwrap();
        for (i, wi) in w.weights.iter().enumerate() {
            let c = (i + 1) as f64 / len as f64;
            // boundary points carry weight exactly zero
            if c > 0.45 + 1e-12 && c < 0.55 - 1e-12 {
                assert!(*wi > 0.0, "t = {}", i + 1);
            } else {
                assert_eq!(*wi, 0.0, "t = {}", i + 1);
            }
        }
    }

    #[test]
    fn left_boundary_uses_half_the_kernel() {
        let len = 1000;
        let b = Bandwidth::new(0.1).unwrap();
        let w = weights_at(
            KernelSpec::EPANECHNIKOV,
            b,
            TimePoint::new(0.0).unwrap(),
            len,
        )
        .unwrap();
        // t/T in (0, 0.05): 49 indices
        assert_eq!(w.nonzero, 49);
        assert!((w.nonzero as f64 - b.value() * len as f64 / 2.0).abs() <= 1.0);
    }

    #[test]
    fn interior_sum_is_riemann_sum() {
        let len = 2000;
        let b = Bandwidth::new(0.07).unwrap();
        for c in [0.2, 0.5, 0.77] {
            let w =
                weights_at(KernelSpec::EPANECHNIKOV, b, TimePoint::new(c).unwrap(), len).unwrap();
            let target = b.value() * len as f64;
            assert!(
                (w.sum - target).abs() <= 1.5,
                "c = {c}: {} vs {target}",
                w.sum
            );
        }
    }

    #[test]
    fn empty_window_is_an_error() {
        // A tiny bandwidth at c = 0 sees no observation.
        let r = weights_at(
            KernelSpec::RECTANGULAR,
            Bandwidth::new(0.001).unwrap(),
            TimePoint::new(0.0).unwrap(),
            100,
        );
        assert!(matches!(r, Err(Error::EmptyWindow { .. })));
    }

    #[test]
    fn admissibility() {
        assert!(Bandwidth::new(50.0 / 1361.0)
            .unwrap()
            .check_admissible(1361));
        assert!(!Bandwidth::new(0.2).unwrap().check_admissible(1000));
        assert!(Bandwidth::new(0.0).is_err());
        assert!(Bandwidth::new(1.5).is_err());
    }
}
