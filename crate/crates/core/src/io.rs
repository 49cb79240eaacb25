//! CSV ingestion, the structured run report and flat plot-data tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::descriptive::{Ar1Fit, RollingStats};
use crate::diagnostics::{CpResult, TestResult, WhitenessSummary};
use crate::error::{Error, Result};
use crate::estimation::{FitResult, LocalBand, LocalFit};
use crate::forecast::ForecastRun;
use crate::montecarlo::{ExperimentResult, LyapunovSurface};
use crate::series::PriceSeries;
use crate::stability::StabilityReport;

pub const REPORT_FILE: &str = "report.json";

fn parse_date(s: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
        line,
        reason: format!("bad date `{s}`: {e}"),
    })
}

fn parse_number(s: &str, column: &str, line: usize) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line,
        reason: format!("non-numeric {column} `{s}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            reason: format!("{column} is not finite"),
        });
    }
    Ok(v)
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
}

/// Reads `date,close[,volume]` with a header row. Line numbers in errors are
/// 1-based and count the header.
pub fn parse_csv_reader<R: Read>(reader: R) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse {
            line: 1,
            reason: "empty file".into(),
        });
    }
    let date_col = column(&headers, "date").ok_or(Error::Parse {
        line: 1,
        reason: "missing `date` column".into(),
    })?;
    let close_col = column(&headers, "close").ok_or(Error::Parse {
        line: 1,
        reason: "missing `close` column".into(),
    })?;
    let volume_col = column(&headers, "volume");

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut values = Vec::new();
    let mut volume = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            reason: e.to_string(),
        })?;
        let field = |c: usize, name: &str| {
            rec.get(c).ok_or_else(|| Error::Parse {
                line,
                reason: format!("missing {name} field"),
            })
        };
        let date = parse_date(field(date_col, "date")?, line)?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                let what = if date == *prev {
                    "duplicate"
                } else {
                    "out-of-order"
                };
                return Err(Error::Parse {
                    line,
                    reason: format!("{what} date {date}"),
                });
            }
        }
        dates.push(date);
        values.push(parse_number(field(close_col, "close")?, "close", line)?);
        if let Some(c) = volume_col {
            volume.push(parse_number(field(c, "volume")?, "volume", line)?);
        }
    }
    if dates.is_empty() {
        return Err(Error::Parse {
            line: 2,
            reason: "no data rows".into(),
        });
    }
    let s = PriceSeries::new(dates, values)?;
    if volume_col.is_some() {
        s.with_volume(volume)
    } else {
        Ok(s)
    }
}

pub fn parse_csv(path: &Path) -> Result<PriceSeries> {
    let f = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_csv_reader(f)
}

/// Reads `date,label` annotations.
pub fn parse_events_reader<R: Read>(reader: R) -> Result<BTreeMap<NaiveDate, String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let date_col = column(&headers, "date").ok_or(Error::Parse {
        line: 1,
        reason: "missing `date` column".into(),
    })?;
    let label_col = column(&headers, "label").ok_or(Error::Parse {
        line: 1,
        reason: "missing `label` column".into(),
    })?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            reason: e.to_string(),
        })?;
        let date = parse_date(rec.get(date_col).unwrap_or(""), line)?;
        let label = rec.get(label_col).unwrap_or("").to_string();
        out.entry(date)
            .and_modify(|l: &mut String| {
                l.push_str("; ");
                l.push_str(&label);
            })
            .or_insert(label);
    }
    Ok(out)
}

pub fn parse_events(path: &Path) -> Result<BTreeMap<NaiveDate, String>> {
    let f = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_events_reader(f)
}

/// Writes `date,close` in the format `parse_csv` reads.
pub fn write_series<W: std::io::Write>(writer: W, series: &PriceSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["date", "close"]).map_err(io)?;
    for (d, v) in series.dates().iter().zip(series.values()) {
        w.write_record([d.to_string(), fmt_f64(*v)]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series_csv(path: &Path, series: &PriceSeries) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_series(std::io::BufWriter::new(f), series)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub command: String,
    /// Effective configuration, sufficient to rerun the command.
    pub config: serde_json::Value,
    /// RFC 3339 creation time; the only field that differs between reruns.
    pub created: String,
}

impl Metadata {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            created: chrono::Utc::now().to_rfc3339(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilityPath {
    /// 0-based observation index of each value.
    pub index: Vec<usize>,
    pub dates: Option<Vec<NaiveDate>>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub rolling: RollingStats,
    pub acf: Vec<f64>,
    pub acf_by_year: BTreeMap<i32, Vec<f64>>,
    pub ar1: Ar1Fit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub path: String,
    pub len: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: Metadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_fit: Option<LocalFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<Vec<LocalBand>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volatility: Option<VolatilityPath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tests: Vec<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp: Option<CpResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub whiteness: Option<WhitenessSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecasts: Option<ForecastRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mspe: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptive: Option<Descriptive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub montecarlo: Option<ExperimentResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<LyapunovSurface>,
}

impl Report {
    pub fn new(metadata: Metadata) -> Self {
        Self {
            metadata,
            simulation: None,
            fit: None,
            local_fit: None,
            bands: None,
            volatility: None,
            stability: None,
            tests: Vec::new(),
            cp: None,
            whiteness: None,
            forecasts: None,
            mspe: None,
            descriptive: None,
            montecarlo: None,
            surface: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse {
            line: e.line(),
            reason: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s =
            fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

/// Shortest decimal form that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// A headered table of already formatted cells. Missing values are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl PlotTable {
    fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    /// Appends an `event` column filled from the `date` column.
    fn with_events(mut self, events: &BTreeMap<NaiveDate, String>) -> Self {
        let Some(dc) = self.header.iter().position(|h| h == "date") else {
            return self;
        };
        self.header.push("event".into());
        for row in &mut self.rows {
            let label = row[dc]
                .parse::<NaiveDate>()
                .ok()
                .and_then(|d| events.get(&d))
                .cloned();
            row.push(label.unwrap_or_default());
        }
        self
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(self.file_name());
        let mut w = csv::Writer::from_path(&path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush()?;
        Ok(path)
    }
}

/// One table per figure-like view of the report.
pub fn plot_tables(report: &Report, events: &BTreeMap<NaiveDate, String>) -> Vec<PlotTable> {
    let mut out = Vec::new();
    if let Some(d) = &report.descriptive {
        let r = &d.rolling;
        let mut t = PlotTable::new(
            "local_moments",
            &["date", "mean", "variance", "ci_lower", "ci_upper"],
        );
        for i in 0..r.dates.len() {
            t.rows.push(vec![
                r.dates[i].to_string(),
                fmt_f64(r.local_mean[i]),
                fmt_f64(r.local_var[i]),
                fmt_f64(r.ci_lower[i]),
                fmt_f64(r.ci_upper[i]),
            ]);
        }
        out.push(t);
        let mut t = PlotTable::new("acf", &["lag", "acf"]);
        for (k, v) in d.acf.iter().enumerate() {
            t.rows.push(vec![k.to_string(), fmt_f64(*v)]);
        }
        out.push(t);
        let mut t = PlotTable::new("acf_by_year", &["year", "lag", "acf"]);
        for (y, a) in &d.acf_by_year {
            for (k, v) in a.iter().enumerate() {
                t.rows.push(vec![y.to_string(), k.to_string(), fmt_f64(*v)]);
            }
        }
        out.push(t);
        if let Some(r) = &d.ar1.rolling {
            let mut t = PlotTable::new("rolling_ar1", &["index", "rho", "sigma_e"]);
            for i in 0..r.rho.len() {
                t.rows
                    .push(vec![i.to_string(), opt(r.rho[i]), opt(r.sigma_e[i])]);
            }
            out.push(t);
        }
    }
    if let Some(bands) = &report.bands {
        let mut phi = PlotTable::new("phi_hat", &["c", "phi_hat", "lower", "upper"]);
        let mut all = PlotTable::new(
            "local_params",
            &[
                "c",
                "phi",
                "phi_lower",
                "phi_upper",
                "omega",
                "omega_lower",
                "omega_upper",
                "alpha",
                "alpha_lower",
                "alpha_upper",
            ],
        );
        for b in bands {
            let c = fmt_f64(b.c.value());
            let lo = |i: Option<crate::estimation::Interval>| opt(i.map(|i| i.lower));
            let hi = |i: Option<crate::estimation::Interval>| opt(i.map(|i| i.upper));
            phi.rows.push(vec![
                c.clone(),
                fmt_f64(b.estimate.phi),
                lo(b.phi),
                hi(b.phi),
            ]);
            all.rows.push(vec![
                c,
                fmt_f64(b.estimate.phi),
                lo(b.phi),
                hi(b.phi),
                fmt_f64(b.estimate.omega),
                lo(b.omega),
                hi(b.omega),
                fmt_f64(b.estimate.alpha),
                lo(b.alpha),
                hi(b.alpha),
            ]);
        }
        out.push(phi);
        out.push(all);
    }
    if let Some(v) = &report.volatility {
        let mut t = match &v.dates {
            Some(_) => PlotTable::new("volatility", &["index", "date", "sigma"]),
            None => PlotTable::new("volatility", &["index", "sigma"]),
        };
        for i in 0..v.sigma.len() {
            let mut row = vec![v.index[i].to_string()];
            if let Some(d) = &v.dates {
                row.push(d[i].to_string());
            }
            row.push(fmt_f64(v.sigma[i]));
            t.rows.push(row);
        }
        out.push(t);
    }
    if let Some(s) = &report.stability {
        if let Some(l) = &s.local_lambda {
            let mut t = PlotTable::new("local_lyapunov", &["c", "lambda2"]);
            for p in l {
                t.rows.push(vec![fmt_f64(p.c.value()), opt(p.lambda)]);
            }
            out.push(t);
        }
        if let Some(l) = &s.local_xi {
            let mut t = PlotTable::new("local_xi", &["c", "xi", "lower", "upper"]);
            for p in l {
                t.rows.push(vec![
                    fmt_f64(p.c.value()),
                    fmt_f64(p.xi),
                    opt(p.interval.map(|i| i.lower)),
                    opt(p.interval.map(|i| i.upper)),
                ]);
            }
            out.push(t);
        }
    }
    if let Some(f) = &report.forecasts {
        let mut t = PlotTable::new("forecast", &["date", "y_hat", "lower", "upper", "actual"]);
        for r in &f.records {
            t.rows.push(vec![
                r.date.to_string(),
                fmt_f64(r.y_hat),
                fmt_f64(r.lower),
                fmt_f64(r.upper),
                opt(r.actual),
            ]);
        }
        out.push(t);
    }
    if let Some(cp) = &report.cp {
        let mut t = PlotTable::new("cp_profile", &["alpha", "value"]);
        for (a, v) in &cp.profile {
            t.rows.push(vec![fmt_f64(*a), fmt_f64(*v)]);
        }
        out.push(t);
    }
    if let Some(mc) = &report.montecarlo {
        let mut t = PlotTable::new("mc_density", &["t", "target", "x", "density"]);
        for set in &mc.by_t {
            for (k, d) in &set.densities {
                for (x, y) in d.grid.iter().zip(&d.density) {
                    t.rows.push(vec![
                        set.t.to_string(),
                        k.name().to_string(),
                        fmt_f64(*x),
                        fmt_f64(*y),
                    ]);
                }
            }
        }
        out.push(t);
    }
    if let Some(s) = &report.surface {
        let mut t = PlotTable::new("lyapunov_surface", &["phi", "alpha", "lambda"]);
        for (i, p) in s.phi.iter().enumerate() {
            for (j, a) in s.alpha.iter().enumerate() {
                t.rows
                    .push(vec![fmt_f64(*p), fmt_f64(*a), opt(s.values[i][j])]);
            }
        }
        out.push(t);
    }
    out.into_iter().map(|t| t.with_events(events)).collect()
}

/// Writes `report.json` and every plot table into `dir`, creating it if
/// needed. Returns the written paths.
pub fn emit_report(
    report: &Report,
    dir: &Path,
    events: &BTreeMap<NaiveDate, String>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(REPORT_FILE);
    fs::write(&path, report.to_json()?)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut written = vec![path];
    for t in plot_tables(report, events) {
        written.push(t.write(dir)?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_rows() {
        let s =
            parse_csv_reader("date,close\n2020-01-01,1.0\n2020-01-02,0.999\n".as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.values(), &[1.0, 0.999]);
        assert!(s.volume().is_none());
        let s =
            parse_csv_reader("Date,Close,Volume\n2020-01-01,1.0,5\n2020-01-03,1.5,6\n".as_bytes())
                .unwrap();
        assert_eq!(s.volume(), Some(&[5.0, 6.0][..]));
    }

    fn err_line(input: &str) -> usize {
        match parse_csv_reader(input.as_bytes()) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_line() {
        assert_eq!(err_line("date,close\n2020-01-02,1\n2020-01-01,1\n"), 3);
        assert_eq!(err_line("date,close\n2020-01-01,1\n2020-01-01,1\n"), 3);
        assert_eq!(err_line("date,close\n2020-01-01,1\n2020-01-02,abc\n"), 3);
        assert_eq!(err_line("date,close\n2020-13-01,1\n"), 2);
        assert_eq!(err_line("date,price\n2020-01-01,1\n"), 1);
        assert_eq!(err_line("date,close\n"), 2);
        assert_eq!(err_line(""), 1);
    }

    #[test]
    fn events_merge_duplicates() {
        let e = parse_events_reader("date,label\n2020-01-01,a\n2020-01-01,b\n".as_bytes()).unwrap();
        assert_eq!(e.values().next().unwrap(), "a; b");
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.30000000000000004] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn empty_report_round_trip() {
        let r = Report::new(Metadata::new("fit", serde_json::json!({"seed": 1})));
        let back = Report::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&r, dir.path(), &BTreeMap::new()).unwrap();
        assert_eq!(files.len(), 1);
        assert_eq!(Report::read(&files[0]).unwrap(), r);
    }
}
