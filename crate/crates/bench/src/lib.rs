//! Inputs shared by the benchmarks.

use tvdar::{simulate_dar, DarParams, NoiseDistribution};

/// A reproducible DAR(1) path with `phi = 0.5, omega = 0.01, alpha = 0.2`.
pub fn sample_path(len: usize) -> Vec<f64> {
    let params = DarParams::new(0.5, 0.01, 0.2).expect("valid parameters");
    simulate_dar(params, len, NoiseDistribution::GaussianStandard, 17, 500)
        .expect("stationary parameters")
        .into_values()
}
