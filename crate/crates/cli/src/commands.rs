use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use covcal::conformal_core::{corrected_alpha, coverage_lower_bound, g_bound};
use covcal::experiments::{
    bound_gap, run_ablation, run_main, run_real, ConfigError, ExperimentConfig, ExperimentError, Method, RealConfig,
    Report,
};
use covcal::ingest::{load_cells_csv, load_lfc_csv, IngestError};
use covcal::output::{series_by_method, write_gap_csv, write_records_csv, write_summary_csv, LineChart};
use log::info;
use serde::Serialize;

use crate::manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration or unreadable/malformed input data.
    Input,
    Runtime,
}

impl ErrorKind {
    pub fn code(self) -> u8 {
        match self {
            ErrorKind::Input => 2,
            ErrorKind::Runtime => 1,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub error: anyhow::Error,
}

type CliResult<T> = Result<T, CliError>;

fn input(e: impl Into<anyhow::Error>) -> CliError {
    CliError { kind: ErrorKind::Input, error: e.into() }
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError { kind: ErrorKind::Runtime, error: e.into() }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) | ExperimentError::Ingest(_) | ExperimentError::Invalid(_) => input(e),
            _ => runtime(e),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        input(e)
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        input(e)
    }
}

pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seeds: Option<String>,
    pub threads: Option<usize>,
    pub alpha: Option<f64>,
}

/// Parses `a..b` (inclusive) or `a,b,c`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range start in '{s}'"))?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| format!("bad seed range end in '{s}'"))?;
        if b < a {
            return Err(format!("empty seed range '{s}'"));
        }
        return Ok((a..=b).collect());
    }
    let seeds: Vec<u64> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad seed '{t}'")))
        .collect::<Result<_, _>>()?;
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}

fn init_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(input(anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(runtime)?;
    }
    Ok(())
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display())).map_err(runtime)
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(BufWriter<File>) -> anyhow::Result<()>) -> CliResult<String> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display())).map_err(runtime)?;
    f(BufWriter::new(file)).with_context(|| format!("writing {}", path.display())).map_err(runtime)?;
    Ok(name.to_string())
}

fn write_report(dir: &Path, report: &Report) -> CliResult<Vec<String>> {
    Ok(vec![
        write_file(dir, "records.csv", |w| Ok(write_records_csv(w, &report.records)?))?,
        write_file(dir, "summary.csv", |w| Ok(write_summary_csv(w, &report.rows)?))?,
    ])
}

fn load_experiment(opts: &RunOptions) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&opts.config)?;
    if let Some(s) = &opts.seeds {
        cfg.seeds = parse_seeds(s).map_err(|e| input(anyhow!(e)))?;
    }
    if let Some(a) = opts.alpha {
        cfg.alpha = a;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_opt(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.digits$}"))
}

fn print_summary(report: &Report) {
    println!(
        "{:<10} {:>8} {:>8} {:>9} {:>9} {:>8} {:>8} {:>9}",
        "method", "delta", "records", "coverage", "width", "n_cal", "delta_hat", "feasible"
    );
    for r in &report.rows {
        println!(
            "{:<10} {:>8} {:>8} {:>9.4} {:>9} {:>8.1} {:>8} {:>9.3}",
            r.method.name(),
            fmt_opt(r.delta_inject, 2),
            r.n_records,
            r.coverage,
            fmt_opt(r.mean_width, 3),
            r.mean_n_cal,
            fmt_opt(r.mean_delta_hat, 4),
            r.feasible_frac
        );
    }
    if report.skipped > 0 {
        println!("skipped {} evaluations", report.skipped);
    }
}

fn manifest<C: Serialize>(
    command: &str,
    opts: &RunOptions,
    cfg: &C,
    seeds: &[u64],
    data: Option<&Path>,
    outputs: Vec<String>,
    start: Instant,
) -> CliResult<RunManifest> {
    Ok(RunManifest {
        command: command.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_path: opts.config.display().to_string(),
        config: serde_json::to_value(cfg).map_err(runtime)?,
        data_path: data.map(|p| p.display().to_string()),
        seeds: seeds.to_vec(),
        threads: opts.threads,
        outputs,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

pub fn simulate(opts: &RunOptions) -> CliResult<()> {
    let start = Instant::now();
    let cfg = load_experiment(opts)?;
    init_threads(opts.threads)?;
    prepare_out(&opts.out)?;
    info!("simulate: p={} |A|={} seeds={:?}", cfg.p, cfg.n_interventions, cfg.seeds);
    let report = run_main(&cfg)?;
    let outputs = write_report(&opts.out, &report)?;
    print_summary(&report);
    manifest("simulate", opts, &cfg, &cfg.seeds, None, outputs, start)?.write_atomic(&opts.out).map_err(runtime)
}

pub fn ablate(opts: &RunOptions, deltas: Option<Vec<f64>>) -> CliResult<()> {
    let start = Instant::now();
    let mut cfg = load_experiment(opts)?;
    if let Some(d) = deltas {
        cfg.delta_inject = d;
        cfg.validate()?;
    }
    if cfg.delta_inject.is_empty() {
        return Err(input(anyhow!("ablation needs at least one delta (config delta_inject or --deltas)")));
    }
    init_threads(opts.threads)?;
    prepare_out(&opts.out)?;
    let report = run_ablation(&cfg)?;
    let gaps = bound_gap(&report, cfg.alpha);
    let mut outputs = write_report(&opts.out, &report)?;
    outputs.push(write_file(&opts.out, "bound_gap.csv", |w| Ok(write_gap_csv(w, &gaps)?))?);

    let coverage = LineChart {
        title: "Coverage under injected contamination".into(),
        x_label: "injected contamination".into(),
        y_label: "empirical coverage".into(),
        series: series_by_method(report.rows.iter().map(|r| (r.method, r.delta_inject.unwrap_or(0.0), r.coverage))),
        reference: Some((1.0 - cfg.alpha, format!("target {:.2}", 1.0 - cfg.alpha))),
    };
    let gap = LineChart {
        title: "Coverage minus lower bound".into(),
        x_label: "injected contamination".into(),
        y_label: "coverage - bound".into(),
        series: series_by_method(gaps.iter().map(|g| (g.method, g.delta_inject.unwrap_or(0.0), g.gap))),
        reference: Some((0.0, "zero gap".into())),
    };
    for (name, chart) in [("coverage_vs_delta.svg", &coverage), ("bound_gap.svg", &gap)] {
        let svg = chart.to_svg();
        outputs.push(write_file(&opts.out, name, |mut w| {
            std::io::Write::write_all(&mut w, svg.as_bytes())?;
            std::io::Write::flush(&mut w)?;
            Ok(())
        })?);
    }
    print_summary(&report);
    println!();
    println!("{:<10} {:>8} {:>9} {:>9} {:>9}", "method", "delta", "coverage", "bound", "gap");
    for g in &gaps {
        println!(
            "{:<10} {:>8} {:>9.4} {:>9.4} {:>9.4}",
            g.method.name(),
            fmt_opt(g.delta_inject, 2),
            g.coverage,
            g.bound,
            g.gap
        );
    }
    manifest("ablate", opts, &cfg, &cfg.seeds, None, outputs, start)?.write_atomic(&opts.out).map_err(runtime)
}

enum DataFormat {
    Lfc,
    Cells,
}

fn detect_format(path: &Path) -> CliResult<DataFormat> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display())).map_err(input)?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).with_context(|| format!("reading {}", path.display())).map_err(input)?;
    let col = first.split(',').next().unwrap_or("").trim().trim_start_matches('\u{feff}');
    match col {
        "gene" => Ok(DataFormat::Lfc),
        "cell_id" => Ok(DataFormat::Cells),
        other => Err(input(anyhow!(
            "{}: unrecognised layout (first column '{other}', expected 'gene' or 'cell_id')",
            path.display()
        ))),
    }
}

pub fn real(data: &Path, opts: &RunOptions, bootstrap: Option<usize>) -> CliResult<()> {
    let start = Instant::now();
    let mut cfg = RealConfig::load(&opts.config)?;
    if let Some(s) = &opts.seeds {
        cfg.seeds = parse_seeds(s).map_err(|e| input(anyhow!(e)))?;
    }
    if let Some(a) = opts.alpha {
        cfg.alpha = a;
    }
    if let Some(b) = bootstrap {
        cfg.bootstrap = b;
    }
    cfg.validate()?;
    init_threads(opts.threads)?;
    let m = match detect_format(data)? {
        DataFormat::Lfc => load_lfc_csv(data)?,
        DataFormat::Cells => load_cells_csv(data, &cfg.control_label, cfg.min_cells, cfg.min_expr_frac)?,
    };
    info!("loaded {} perturbations x {} genes", m.n_perturbations(), m.n_genes());
    prepare_out(&opts.out)?;
    let report = run_real(&m, &cfg)?;
    let outputs = write_report(&opts.out, &report)?;
    print_summary(&report);
    if report.rows.iter().any(|r| r.method == Method::Corrected) {
        println!("(corrected coverage is over feasible evaluations)");
    }
    manifest("real", opts, &cfg, &cfg.seeds, Some(data), outputs, start)?.write_atomic(&opts.out).map_err(runtime)
}

pub fn bound(alpha: f64, n: usize, deltas: &[f64]) -> CliResult<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(input(anyhow!("alpha must lie in (0, 1), got {alpha}")));
    }
    if n == 0 {
        return Err(input(anyhow!("n must be at least 1")));
    }
    if let Some(d) = deltas.iter().find(|d| !(0.0..1.0).contains(*d)) {
        return Err(input(anyhow!("delta must lie in [0, 1), got {d}")));
    }
    println!("alpha = {alpha}, n = {n}");
    println!("{:>8} {:>10} {:>12} {:>10} {:>9}", "delta", "g", "1-alpha-g", "alpha'", "feasible");
    for &d in deltas {
        let c = corrected_alpha(alpha, d, n);
        println!(
            "{:>8} {:>10.5} {:>12.5} {:>10.5} {:>9}",
            d,
            g_bound(d, n),
            coverage_lower_bound(alpha, d, n),
            c.alpha_prime,
            if c.feasible_hint { "yes" } else { "no" }
        );
    }
    Ok(())
}
