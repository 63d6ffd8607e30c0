//! Study execution and output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ntsim_core::hst_link::run_hst_study;
use ntsim_core::positioning::run_positioning;
use ntsim_core::qos::{hst_trace, prediction_error, prediction_records, ThroughputTrace};
use ntsim_core::scheduler::density_sweep;

use crate::config::{RunConfig, StudyParams};
use crate::error::CliError;
use crate::svg::{LinePlot, Series};

pub const POSITIONING_HEADER: [&str; 9] = [
    "t",
    "truth_x",
    "truth_y",
    "est_x",
    "est_y",
    "err_m",
    "method",
    "nb_fused_bs",
    "snr_db",
];
pub const HST_HEADER: [&str; 5] = ["scheme", "train_x_m", "throughput_mbps", "snr_eff_db", "harq_attempts"];
pub const SCHEDULER_HEADER: [&str; 5] = [
    "density_mbps_km2",
    "drop_fraction",
    "mean_user_tput_mbps",
    "coverage_fraction",
    "median_file_time_s",
];
pub const QOS_HEADER: [&str; 4] = ["horizon_s", "method", "e_prime_bps", "cdf_p"];
pub const TRACE_HEADER: [&str; 2] = ["epoch_s", "delivered_bits"];

/// A CSV file held in memory as text cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let csv_err = |e: csv::Error| CliError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CliError::io(path, std::io::Error::other(e.to_string())),
            _ => csv_err(e),
        })?;
        let header = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(csv_err)?;
        Ok(Self { header, rows })
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    /// Data rows, for CSV outputs.
    pub rows: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub study: String,
    pub seed: u64,
    pub config_sha256: String,
    pub outputs: Vec<OutputFile>,
    pub wall_time_s: f64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Simulates the configured study and returns its tables, keyed by file name.
pub fn tables(cfg: &RunConfig) -> Result<Vec<(String, Table)>, CliError> {
    let seed = cfg.seed;
    let mut out = Vec::new();
    match &cfg.params {
        StudyParams::Positioning(p) => {
            let mut t = Table::new(&POSITIONING_HEADER);
            for snr in p.snr_db.to_vec() {
                for nb in p.nb_fused_bs.to_vec() {
                    let run = run_positioning(&p.model, snr, nb, seed)?;
                    for r in run.rows {
                        t.push(vec![
                            num(r.t),
                            num(r.truth_x),
                            num(r.truth_y),
                            num(r.est_x),
                            num(r.est_y),
                            num(r.err_m),
                            r.method.as_str().into(),
                            r.nb_fused_bs.to_string(),
                            num(r.snr_db),
                        ]);
                    }
                }
            }
            out.push(("positioning.csv".into(), t));
        }
        StudyParams::Hst(h) => {
            let mut t = Table::new(&HST_HEADER);
            for run in run_hst_study(&h.model, &h.scheme.to_vec(), seed)? {
                for c in run.curve {
                    t.push(vec![
                        run.scheme.as_str().into(),
                        num(c.x_center),
                        num(c.throughput_bps / 1e6),
                        num(c.mean_snr_eff_db),
                        num(c.mean_harq_attempts),
                    ]);
                }
            }
            out.push(("hst.csv".into(), t));
        }
        StudyParams::Scheduler(s) => {
            let mut t = Table::new(&SCHEDULER_HEADER);
            let points = density_sweep(
                &s.model,
                &s.densities_mbps_km2,
                &s.drop_fractions,
                cfg.replications,
                seed,
            )?;
            for p in points {
                t.push(vec![
                    num(p.density_mbps_km2),
                    num(p.drop_fraction),
                    num(p.mean_user_tput_mbps),
                    num(p.coverage_fraction),
                    num(p.median_file_time_s),
                ]);
            }
            out.push(("scheduler.csv".into(), t));
        }
        StudyParams::Qos(q) => {
            let trace = match &q.trace_file {
                Some(path) => read_trace(path, seed)?,
                None => hst_trace(&q.model, seed)?,
            };
            let mut t = Table::new(&QOS_HEADER);
            for m in &q.predictors {
                for &h in &q.horizons_s {
                    let records = prediction_records(&trace, h, m)?;
                    let cdf = ntsim_core::stats::ErrorCdf::from_samples(records.iter().map(prediction_error))?;
                    for (e, p) in cdf.values.iter().zip(&cdf.probabilities) {
                        t.push(vec![num(h), m.name(), num(*e), num(*p)]);
                    }
                }
            }
            out.push(("qos.csv".into(), t));
            out.push(("trace.csv".into(), trace_table(&trace)));
        }
    }
    Ok(out)
}

pub fn trace_table(trace: &ThroughputTrace) -> Table {
    let mut t = Table::new(&TRACE_HEADER);
    for (i, b) in trace.delivered_bits.iter().enumerate() {
        t.push(vec![num(i as f64 * trace.epoch_s), b.to_string()]);
    }
    t
}

/// Reads a `epoch_s, delivered_bits` CSV; `epoch_s` is each epoch's start time.
pub fn read_trace(path: &Path, seed: u64) -> Result<ThroughputTrace, CliError> {
    let table = Table::read(path)?;
    let bad = |message: String| CliError::Csv {
        path: path.to_path_buf(),
        message,
    };
    if table.header != TRACE_HEADER {
        return Err(bad(format!("expected header {}", TRACE_HEADER.join(","))));
    }
    let mut starts = Vec::with_capacity(table.rows.len());
    let mut bits = Vec::with_capacity(table.rows.len());
    for (i, r) in table.rows.iter().enumerate() {
        let t: f64 = r[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("row {}: bad epoch_s", i + 2)))?;
        let b: u64 = r[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("row {}: bad delivered_bits", i + 2)))?;
        starts.push(t);
        bits.push(b);
    }
    if starts.len() < 2 {
        return Err(bad("trace needs at least two epochs".into()));
    }
    let epoch = starts[1] - starts[0];
    if starts
        .iter()
        .enumerate()
        .any(|(i, &t)| (t - (starts[0] + i as f64 * epoch)).abs() > 1e-6 * epoch)
    {
        return Err(bad("epochs are not uniform".into()));
    }
    let name = path
        .file_name()
        .map_or("trace".into(), |n| n.to_string_lossy().into_owned());
    Ok(ThroughputTrace::new(epoch, bits, name, seed)?)
}

/// Chooses the chart for a table by its header.
pub fn plot_table(table: &Table) -> Option<LinePlot> {
    let f = |row: &Vec<String>, c: usize| row[c].parse::<f64>().unwrap_or(f64::NAN);
    let group = |key: &dyn Fn(&Vec<String>) -> String, x: usize, y: usize| {
        let mut series: Vec<Series> = Vec::new();
        for r in &table.rows {
            let name = key(r);
            let point = (f(r, x), f(r, y));
            match series.iter_mut().find(|s| s.name == name) {
                Some(s) => s.points.push(point),
                None => series.push(Series {
                    name,
                    points: vec![point],
                }),
            }
        }
        series
    };
    let h = &table.header;
    if *h == POSITIONING_HEADER {
        let c = |n| table.column(n).unwrap();
        let mut series = group(
            &|r| format!("{} N={} {} dB", r[c("method")], r[c("nb_fused_bs")], r[c("snr_db")]),
            c("err_m"),
            c("err_m"),
        );
        for s in &mut series {
            let mut e: Vec<f64> = s.points.iter().map(|p| p.0).collect();
            e.sort_by(f64::total_cmp);
            s.points = ecdf_points(&e);
        }
        return Some(LinePlot {
            title: "Horizontal positioning error".into(),
            x_label: "error (m)".into(),
            y_label: "CDF".into(),
            log_x: true,
            series,
        });
    }
    if *h == HST_HEADER {
        return Some(LinePlot {
            title: "Downlink throughput along the track".into(),
            x_label: "train position (m)".into(),
            y_label: "throughput (Mbit/s)".into(),
            log_x: false,
            series: group(&|r| r[0].clone(), 1, 2),
        });
    }
    if *h == SCHEDULER_HEADER {
        return Some(LinePlot {
            title: "Mean user throughput vs traffic density".into(),
            x_label: "traffic density (Mbit/s/km²)".into(),
            y_label: "mean user throughput (Mbit/s)".into(),
            log_x: false,
            series: group(&|r| format!("drop {}", r[1]), 0, 2),
        });
    }
    if *h == QOS_HEADER {
        let mut series = group(&|r| format!("{} Δt={} s", r[1], r[0]), 2, 3);
        for s in &mut series {
            s.points = thin(&s.points, 400);
        }
        return Some(LinePlot {
            title: "Throughput prediction error".into(),
            x_label: "e′ (bit/s)".into(),
            y_label: "CDF".into(),
            log_x: true,
            series,
        });
    }
    if *h == TRACE_HEADER {
        return Some(LinePlot {
            title: "Delivered bits per epoch".into(),
            x_label: "time (s)".into(),
            y_label: "bits".into(),
            log_x: false,
            series: vec![Series {
                name: "trace".into(),
                points: thin(&table.rows.iter().map(|r| (f(r, 0), f(r, 1))).collect::<Vec<_>>(), 2000),
            }],
        });
    }
    None
}

fn ecdf_points(sorted: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    let pts: Vec<(f64, f64)> = sorted
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, (i + 1) as f64 / n))
        .collect();
    thin(&pts, 400)
}

/// At most `max` evenly spaced points, always keeping the last.
fn thin(points: &[(f64, f64)], max: usize) -> Vec<(f64, f64)> {
    if points.len() <= max {
        return points.to_vec();
    }
    let step = points.len().div_ceil(max);
    let mut out: Vec<_> = points.iter().step_by(step).copied().collect();
    if let Some(&last) = points.last() {
        if out.last() != Some(&last) {
            out.push(last);
        }
    }
    out
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], rows: Option<usize>) -> Result<OutputFile, CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(OutputFile {
        path: name.into(),
        sha256: sha256_hex(bytes),
        rows,
    })
}

fn svg_name(csv_name: &str) -> String {
    Path::new(csv_name).with_extension("svg").to_string_lossy().into_owned()
}

/// Runs the study, writes CSVs, plots, the resolved config and `manifest.json`.
pub fn run(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let resolved = cfg.to_toml()?;
    let tables = tables(cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut outputs = vec![write_file(dir, "resolved_config.toml", resolved.as_bytes(), None)?];
    for (name, table) in &tables {
        let bytes = table.to_csv().map_err(|e| CliError::Csv {
            path: dir.join(name),
            message: e.to_string(),
        })?;
        outputs.push(write_file(dir, name, &bytes, Some(table.rows.len()))?);
        if let Some(plot) = plot_table(table) {
            outputs.push(write_file(dir, &svg_name(name), plot.render().as_bytes(), None)?);
        }
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        study: cfg.study.as_str().into(),
        seed: cfg.seed,
        config_sha256: sha256_hex(resolved.as_bytes()),
        outputs,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = dir.join("manifest.json");
    fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

/// Renders the chart for an existing CSV next to it; returns the SVG path.
pub fn plot_csv(path: &Path) -> Result<PathBuf, CliError> {
    let table = Table::read(path)?;
    let plot = plot_table(&table).ok_or_else(|| CliError::Csv {
        path: path.to_path_buf(),
        message: format!("unrecognized header {}", table.header.join(",")),
    })?;
    let out = path.with_extension("svg");
    fs::write(&out, plot.render()).map_err(|e| CliError::io(&out, e))?;
    Ok(out)
}
