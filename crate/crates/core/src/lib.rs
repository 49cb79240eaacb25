//! Time-varying double autoregressive models: simulation, quasi-maximum
//! likelihood estimation, stability measures, diagnostics and forecasting.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod descriptive;
pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod forecast;
pub mod io;
pub mod kernels;
pub mod model;
pub mod montecarlo;
pub mod optim;
pub mod quadrature;
pub mod series;
pub mod stability;
pub mod stats;

pub use diagnostics::{CpOptions, CpResult, TestResult};
pub use error::{Error, Result};
pub use estimation::{fit_dar, fit_tvdar, FitOptions, FitResult, LocalFit, LocalFitOptions};
pub use forecast::{ForecastOptions, ForecastRecord, IntervalKind};
pub use io::{Metadata, Report};
pub use kernels::{Bandwidth, KernelKind, KernelSpec};
pub use model::{simulate_dar, simulate_tvdar, NoiseDistribution, ParamFn, ParamPath};
pub use series::{DarParams, DemeanedSeries, MeanUsed, PriceSeries, TimePoint};
pub use stability::StabilityReport;
