use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use tvdar::descriptive::{acf, acf_by_year, rolling_ar1, rolling_mean_var};
use tvdar::diagnostics::{cp_statistic, ljung_box, rolling_whiteness};
use tvdar::estimation::{local_confidence_bands, residuals};
use tvdar::forecast::{mspe, one_step_forecast};
use tvdar::io::{
    emit_report, parse_csv, parse_csv_reader, parse_events, write_series, write_series_csv,
    Descriptive, SimulationSummary, VolatilityPath,
};
use tvdar::model::{simulate_tvdar, DEFAULT_BURN_IN};
use tvdar::montecarlo::{
    default_surface_grids, lyapunov_surface, run_estimator_density_experiment, ExperimentConfig,
    Target,
};
use tvdar::series::{demean_global, demean_local, DEFAULT_WINDOW};
use tvdar::stability::{xi_measure, xi_wald_test};
use tvdar::{
    fit_dar, fit_tvdar, Bandwidth, CpOptions, DarParams, ForecastOptions, KernelKind, KernelSpec,
    LocalFit, LocalFitOptions, Metadata, NoiseDistribution, ParamPath, PriceSeries, Report,
    StabilityReport, TimePoint,
};

use crate::config::{check_range, Demean, RunConfig};
use crate::error::CliError;

type Res<T> = Result<T, CliError>;

pub struct Outcome {
    pub report: Report,
    /// One-line summaries for the terminal.
    pub lines: Vec<String>,
}

fn load_series(cfg: &RunConfig) -> Res<PriceSeries> {
    let path = cfg
        .input
        .as_deref()
        .ok_or_else(|| CliError::Input("--input is required".into()))?;
    if path == Path::new("-") {
        let mut buf = Vec::new();
        std::io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| CliError::Input(format!("stdin: {e}")))?;
        Ok(parse_csv_reader(buf.as_slice())?)
    } else {
        Ok(parse_csv(path)?)
    }
}

/// Centres the price as configured; the window defaults to 50.
fn prepare(cfg: &mut RunConfig, series: &PriceSeries) -> Res<Vec<f64>> {
    let window = *cfg.window.get_or_insert(DEFAULT_WINDOW);
    Ok(match *cfg.demean.get_or_insert(Demean::Local) {
        Demean::Global => demean_global(series)?.into_values(),
        Demean::Local => demean_local(series, window.min(series.len()))?.into_values(),
        Demean::None => series.values().to_vec(),
    })
}

fn level(cfg: &mut RunConfig) -> Res<f64> {
    check_range("level", *cfg.level.get_or_insert(0.95), 0.0, 1.0)
}

fn significance(cfg: &mut RunConfig) -> Res<f64> {
    check_range(
        "significance",
        *cfg.significance.get_or_insert(0.05),
        0.0,
        1.0,
    )
}

fn local_fit(cfg: &mut RunConfig, x: &[f64]) -> Res<LocalFit> {
    let fit = cfg.fit_options();
    let kind = *cfg.kernel.get_or_insert(KernelKind::Epanechnikov);
    let n = x.len();
    let b = *cfg
        .bandwidth
        .get_or_insert(Bandwidth::from_window(DEFAULT_WINDOW.min(n), n)?.value());
    let b = Bandwidth::new(b)?;
    let points = *cfg.grid_points.get_or_insert(101);
    if points < 2 {
        return Err(CliError::Input("grid_points must be at least 2".into()));
    }
    let cold = *cfg.cold.get_or_insert(false);
    let opts = LocalFitOptions {
        fit,
        warm_start: !cold,
        parallel: false,
    };
    Ok(fit_tvdar(
        x,
        &TimePoint::uniform_grid(points),
        KernelSpec { kind },
        b,
        &opts,
    )?)
}

fn volatility(x: &[f64], fit: &LocalFit, dates: &[NaiveDate]) -> VolatilityPath {
    let n = x.len();
    let mut index = Vec::new();
    let mut sigma = Vec::new();
    for t in 1..n {
        if let Some(p) = fit.params_at((t + 1) as f64 / n as f64) {
            index.push(t);
            sigma.push(p.cond_var(x[t - 1]).sqrt());
        }
    }
    let dates = Some(index.iter().map(|i| dates[*i]).collect());
    VolatilityPath {
        index,
        dates,
        sigma,
    }
}

fn fmt_params(p: &DarParams) -> String {
    format!(
        "phi = {:.6}, omega = {:.6e}, alpha = {:.6}",
        p.phi, p.omega, p.alpha
    )
}

fn new_report(command: &str, cfg: &RunConfig) -> Res<Report> {
    let echo = serde_json::to_value(cfg).map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok(Report::new(Metadata::new(command, echo)))
}

pub fn simulate(mut cfg: RunConfig) -> Res<(Outcome, RunConfig)> {
    let len = *cfg.len.get_or_insert(1361);
    let seed = *cfg.seed.get_or_insert(1);
    let noise = *cfg.noise.get_or_insert(NoiseDistribution::GaussianStandard);
    let burn_in = *cfg.burn_in.get_or_insert(DEFAULT_BURN_IN);
    let offset = *cfg.offset.get_or_insert(1.0);
    let path = match &cfg.path {
        Some(p) => {
            if cfg.phi.is_some() || cfg.omega.is_some() || cfg.alpha.is_some() {
                log::warn!("`path` is set; constant phi/omega/alpha are ignored");
            }
            p.clone()
        }
        None => {
            let p = DarParams::new(
                *cfg.phi.get_or_insert(0.5),
                *cfg.omega.get_or_insert(1e-5),
                *cfg.alpha.get_or_insert(0.2),
            )?;
            ParamPath::constant(p)
        }
    };
    let start = cfg
        .start_date
        .get_or_insert_with(|| "2019-01-01".into())
        .clone();
    let start = NaiveDate::parse_from_str(&start, "%Y-%m-%d")
        .map_err(|e| CliError::Input(format!("start_date `{start}`: {e}")))?;
    let out = cfg.out_dir();
    let series_out = cfg
        .series_out
        .get_or_insert_with(|| out.join("series.csv"))
        .clone();

    let x = simulate_tvdar(&path, len, noise, seed, burn_in)?;
    let series = PriceSeries::daily(start, x.values().iter().map(|v| v + offset).collect())?;
    let mut lines = Vec::new();
    if series_out == Path::new("-") {
        write_series(std::io::stdout().lock(), &series)?;
    } else {
        if let Some(parent) = series_out.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Input(format!("{}: {e}", parent.display())))?;
        }
        write_series_csv(&series_out, &series)?;
        lines.push(format!(
            "simulated {len} observations into {}",
            series_out.display()
        ));
    }
    let mut report = new_report("simulate", &cfg)?;
    report.simulation = Some(SimulationSummary {
        path: series_out.display().to_string(),
        len,
        seed,
    });
    Ok((Outcome { report, lines }, cfg))
}

pub fn fit(mut cfg: RunConfig) -> Res<(Outcome, RunConfig)> {
    let series = load_series(&cfg)?;
    let x = prepare(&mut cfg, &series)?;
    let opts = cfg.fit_options();
    let f = fit_dar(&x, &opts)?;
    let mut lines = vec![fmt_params(&f.params)];
    if let (Some(a), Some(b), Some(c)) = (f.cov.se_phi, f.cov.se_omega, f.cov.se_alpha) {
        lines.push(format!("standard errors: {a:.6}, {b:.6e}, {c:.6}"));
    }
    lines.push(format!(
        "log-likelihood {:.6} over {} terms",
        f.loglik, f.n_used
    ));
    cfg.out_dir();
    let mut report = new_report("fit", &cfg)?;
    report.fit = Some(f);
    Ok((Outcome { report, lines }, cfg))
}

pub fn fit_local(mut cfg: RunConfig) -> Res<(Outcome, RunConfig)> {
    let series = load_series(&cfg)?;
    let x = prepare(&mut cfg, &series)?;
    let lf = local_fit(&mut cfg, &x)?;
    let level = level(&mut cfg)?;
    let bands = local_confidence_bands(&lf, level)?;
    let estimated = lf.estimated().count();
    let lines = vec![format!(
        "estimated {estimated} of {} grid points ({:?} kernel, bandwidth {})",
        lf.points.len(),
        lf.kernel.kind,
        lf.bandwidth.value()
    )];
    if estimated == 0 {
        return Err(CliError::Numerical(
            "no grid point could be estimated".into(),
        ));
    }
    cfg.out_dir();
    let mut report = new_report("fit-local", &cfg)?;
    report.volatility = Some(volatility(&x, &lf, series.dates()));
    report.bands = Some(bands);
    report.local_fit = Some(lf);
    Ok((Outcome { report, lines }, cfg))
}

pub fn stability(mut cfg: RunConfig) -> Res<(Outcome, RunConfig)> {
    let series = load_series(&cfg)?;
    let x = prepare(&mut cfg, &series)?;
    let opts = cfg.fit_options();
    let f = fit_dar(&x, &opts)?;
    let known = cfg.known_noise;
    let mut st = StabilityReport::from_fit(&x, &f, known)?;
    let mut lines = vec![
        fmt_params(&f.params),
        format!("lyapunov exponent (plug-in) {:.6}", st.lambda_plugin),
        format!("xi {:.6}", st.xi),
    ];
    if let Some(l) = st.lambda_quadrature {
        lines.push(format!("lyapunov exponent under declared noise {l:.6}"));
    }
    if *cfg.local.get_or_insert(true) {
        let lf = local_fit(&mut cfg, &x)?;
        let level = level(&mut cfg)?;
        st = st.with_local(&x, &lf, level)?;
    }
    cfg.out_dir();
    let mut report = new_report("stability", &cfg)?;
    report.fit = Some(f);
    report.stability = Some(st);
    Ok((Outcome { report, lines }, cfg))
}

pub fn forecast(mut cfg: RunConfig) -> Res<(Outcome, RunConfig)> {
    let series = load_series(&cfg)?;
    let opts = ForecastOptions {
        window: *cfg.window.get_or_insert(DEFAULT_WINDOW),
        level: level(&mut cfg)?,
        interval: *cfg.interval.get_or_insert_with(Default::default),
        fixed_mean: cfg.fixed_mean,
        fit: cfg.fit_options(),
    };
    let run = one_step_forecast(&series, &opts)?;
    let m = mspe(&run.records).ok();
    let mut lines = vec![format!(
        "{} forecasts, {} skipped",
        run.records.len(),
        run.skipped.len()
    )];
    if let Some(m) = m {
        lines.push(format!("mean squared prediction error {m:.6e}"));
    }
    if let Some(last) = run.records.last() {
        lines.push(format!(
            "{}: {:.6} [{:.6}, {:.6}]",
            last.date, last.y_hat, last.lower, last.upper
        ));
    }
    cfg.out_dir();
    let mut report = new_report("forecast", &cfg)?;
    report.forecasts = Some(run);
    report.mspe = m;
    Ok((Outcome { report, lines }, cfg))
}

pub fn whiteness(mut cfg: RunConfig) -> Res<(Outcome, RunConfig)> {
    let series = load_series(&cfg)?;
    let x = prepare(&mut cfg, &series)?;
    let opts = cfg.fit_options();
    let lags = *cfg.lags.get_or_insert(10);
    let sig = significance(&mut cfg)?;
    let window = cfg.window.unwrap_or(DEFAULT_WINDOW);
    let f = fit_dar(&x, &opts)?;
    let eta = residuals(&x, &f.params).values;
    let sq: Vec<f64> = eta.iter().map(|e| e * e).collect();
    let mut t_eta = ljung_box(&eta, lags, sig)?;
    t_eta.name = "ljung_box_eta".into();
    let mut t_sq = ljung_box(&sq, lags, sig)?;
    t_sq.name = "ljung_box_eta_sq".into();
    let rolling = rolling_whiteness(&x, window, lags, sig, &opts)?;
    let lines = vec![
        format!(
            "full sample: p = {:.4} (residuals), {:.4} (squared)",
            t_eta.p_value, t_sq.p_value
        ),
        format!(
            "rolling windows of {window}: {:.1}% and {:.1}% rejected",
            100.0 * rolling.fraction_reject_eta,
            100.0 * rolling.fraction_reject_eta_sq
        ),
    ];
    cfg.out_dir();
    let mut report = new_report("test whiteness", &cfg)?;
    report.fit = Some(f);
    report.tests = vec![t_eta, t_sq];
    report.whiteness = Some(rolling);
    Ok((Outcome { report, lines }, cfg))
}

pub fn homoscedasticity(mut cfg: RunConfig) -> Res<(Outcome, RunConfig)> {
    let series = load_series(&cfg)?;
    let x = prepare(&mut cfg, &series)?;
    let gammas = cfg.gamma.get_or_insert_with(|| vec![0.9]).clone();
    if gammas.is_empty() {
        return Err(CliError::Input("gamma list is empty".into()));
    }
    let grid_step = *cfg.grid_step.get_or_insert(0.001);
    let sig = significance(&mut cfg)?;
    let lf = local_fit(&mut cfg, &x)?;
    let mut tests = Vec::new();
    let mut first = None;
    let mut lines = Vec::new();
    for g in gammas {
        let opts = CpOptions {
            gamma: g,
            grid_step,
            level: sig,
            ..CpOptions::default()
        };
        let r = cp_statistic(&x, &lf, &opts)?;
        lines.push(format!(
            "gamma {g}: statistic {:.4} at alpha {:.4}, p = {:.4}",
            r.statistic, r.argmax_alpha, r.p_value
        ));
        tests.push(r.to_test(sig));
        first.get_or_insert(r);
    }
    cfg.out_dir();
    let mut report = new_report("test homoscedasticity", &cfg)?;
    report.tests = tests;
    report.cp = first;
    Ok((Outcome { report, lines }, cfg))
}

pub fn xi(mut cfg: RunConfig) -> Res<(Outcome, RunConfig)> {
    let series = load_series(&cfg)?;
    let x = prepare(&mut cfg, &series)?;
    let opts = cfg.fit_options();
    let xi0 = *cfg.xi0.get_or_insert(1.0);
    let sig = significance(&mut cfg)?;
    let f = fit_dar(&x, &opts)?;
    let e = xi_measure(&f.params, &f.cov, f.n_used as f64)?;
    let t = xi_wald_test(f.params.xi(), e.variance, f.n_used, xi0, sig)?;
    let lines = vec![format!(
        "xi = {:.6} (se {:.6}); statistic {:.4}, p = {:.4} against xi0 = {xi0}",
        e.xi, e.se, t.statistic, t.p_value
    )];
    cfg.out_dir();
    let mut report = new_report("test xi", &cfg)?;
    report.fit = Some(f);
    report.tests = vec![t];
    Ok((Outcome { report, lines }, cfg))
}

pub fn describe(mut cfg: RunConfig) -> Res<(Outcome, RunConfig)> {
    let series = load_series(&cfg)?;
    let x = prepare(&mut cfg, &series)?;
    let window = cfg.window.unwrap_or(DEFAULT_WINDOW);
    let level = level(&mut cfg)?;
    let ci_mode = *cfg.ci_mode.get_or_insert_with(Default::default);
    let max_lag = *cfg.max_lag.get_or_insert(20);
    let rho_mode = *cfg.rho_mode.get_or_insert_with(Default::default);
    let rolling = rolling_mean_var(&series, window, level, ci_mode)?;
    let a = acf(series.values(), max_lag)?;
    let by_year = acf_by_year(&series, max_lag);
    let ar1 = rolling_ar1(&x, window, rho_mode)?;
    let lines = vec![
        format!("AR(1): rho = {:.4}, sigma2 = {:.6e}", ar1.rho, ar1.sigma2),
        format!(
            "lag-1 autocorrelation {:.4}",
            a.get(1).copied().unwrap_or(f64::NAN)
        ),
    ];
    cfg.out_dir();
    let mut report = new_report("describe", &cfg)?;
    report.descriptive = Some(Descriptive {
        rolling,
        acf: a,
        acf_by_year: by_year,
        ar1,
    });
    Ok((Outcome { report, lines }, cfg))
}

pub fn montecarlo(mut cfg: RunConfig) -> Res<(Outcome, RunConfig)> {
    let theta0 = DarParams::new(
        *cfg.phi.get_or_insert(0.7),
        *cfg.omega.get_or_insert(0.01),
        *cfg.alpha.get_or_insert(0.5),
    )?;
    let mut exp = ExperimentConfig::new(
        theta0,
        cfg.t_values.get_or_insert_with(|| vec![50, 100]).clone(),
        *cfg.reps.get_or_insert(4000),
    );
    exp.seed = *cfg.seed.get_or_insert(exp.seed);
    exp.noise = *cfg.noise.get_or_insert(exp.noise);
    exp.burn_in = *cfg.burn_in.get_or_insert(exp.burn_in);
    exp.targets = cfg
        .targets
        .get_or_insert_with(|| Target::ALL.to_vec())
        .clone();
    exp.fit = cfg.fit_options();
    let result = run_estimator_density_experiment(&exp)?;
    let mut lines = Vec::new();
    for set in &result.by_t {
        let modes: Vec<String> = set
            .densities
            .iter()
            .map(|(k, d)| format!("{} {:.4}", k.name(), d.mode()))
            .collect();
        lines.push(format!(
            "T = {}: modes {} ({} failed)",
            set.t,
            modes.join(", "),
            set.failures
        ));
        if set.flagged {
            lines.push(format!(
                "T = {}: failure rate above 1%, results flagged",
                set.t
            ));
        }
    }
    let surface = if *cfg.surface.get_or_insert(false) {
        let noise = *cfg
            .surface_noise
            .get_or_insert(NoiseDistribution::UniformPm1);
        let (phi, alpha) = default_surface_grids();
        Some(lyapunov_surface(&phi, &alpha, noise)?)
    } else {
        None
    };
    cfg.out_dir();
    let mut report = new_report("montecarlo", &cfg)?;
    report.montecarlo = Some(result);
    report.surface = surface;
    Ok((Outcome { report, lines }, cfg))
}

/// Writes the report and plot tables, returning the number of files.
pub fn write(outcome: &Outcome, cfg: &RunConfig) -> Res<usize> {
    let events: BTreeMap<NaiveDate, String> = match &cfg.events {
        Some(p) => parse_events(p)?,
        None => BTreeMap::new(),
    };
    let dir = cfg.out.clone().unwrap_or_else(|| "tvdar-out".into());
    Ok(emit_report(&outcome.report, &dir, &events)?.len())
}
