//! `flowsolve` — config-driven solver benchmarks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 partial failure (some
//! sweep cells failed but the run completed).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flowsolve::cli::{
    csv_document, run_convergence, run_sweep, ExperimentConfig, RunOptions, CSV_HEADER,
};
use flowsolve::plot::{emit_svg_plot, PlotAxes, PlotSeries};
use flowsolve::Error;

#[derive(Parser)]
#[command(name = "flowsolve", version, about = "Fixed-schedule ODE solver benchmarks for flow-model sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the (solver x NFE budget) sweep and write sweep.csv.
    Sweep {
        /// JSON experiment description.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's out_dir; default ".").
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config NFE list, comma separated.
        #[arg(long, value_delimiter = ',')]
        nfe: Option<Vec<usize>>,
        /// Fill elapsed_ms with wall-clock times. Leaves output
        /// non-reproducible; off by default.
        #[arg(long)]
        timing: bool,
    },
    /// Fit empirical convergence orders and write convergence.csv/.svg.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        nfe: Option<Vec<usize>>,
        #[arg(long)]
        timing: bool,
    },
    /// Render an error-vs-NFE plot from a sweep or convergence CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Metric column to plot (default: first metric in the file).
        #[arg(long)]
        metric: Option<String>,
        /// Use a linear y axis instead of the default log scale.
        #[arg(long)]
        linear_y: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("FLOWSOLVE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // Global pool; build errors only if already initialized.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) | Error::Format { .. } | Error::DimensionMismatch { .. } => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    nfe: Option<Vec<usize>>,
    out: Option<PathBuf>,
) -> Result<(ExperimentConfig, PathBuf), Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("config {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(nfe) = nfe {
        cfg.nfe = nfe;
    }
    cfg.validate()?;
    let out_dir = out
        .or_else(|| cfg.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, out_dir))
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Sweep {
            config,
            out,
            seed,
            nfe,
            timing,
        } => {
            let (cfg, out_dir) = load_config(&config, seed, nfe, out)?;
            let opts = RunOptions {
                timing,
                progress: true,
            };
            let outcome = run_sweep(&cfg, &opts)?;
            std::fs::create_dir_all(&out_dir)?;
            let path = out_dir.join("sweep.csv");
            std::fs::write(&path, csv_document(&outcome.rows))?;
            eprintln!("wrote {}", path.display());
            if outcome.failed_cells > 0 {
                eprintln!("{} cell(s) failed", outcome.failed_cells);
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Converge {
            config,
            out,
            seed,
            nfe,
            timing,
        } => {
            let (cfg, out_dir) = load_config(&config, seed, nfe, out)?;
            let opts = RunOptions {
                timing,
                progress: true,
            };
            let outcome = run_convergence(&cfg, &opts)?;
            std::fs::create_dir_all(&out_dir)?;
            let csv_path = out_dir.join("convergence.csv");
            std::fs::write(&csv_path, csv_document(&outcome.rows))?;
            let series: Vec<PlotSeries> = outcome
                .fits
                .iter()
                .map(|(spec, fit)| PlotSeries {
                    name: format!("{} (slope {:.2})", spec.label(), fit.slope),
                    points: fit
                        .step_counts
                        .iter()
                        .zip(&fit.errors)
                        .filter(|(_, &e)| e > 0.0)
                        .map(|(&n, &e)| (n as f64, e))
                        .collect(),
                })
                .collect();
            let svg_path = out_dir.join("convergence.svg");
            emit_svg_plot(
                &series,
                &PlotAxes {
                    x_label: "schedule intervals".into(),
                    y_label: "endpoint error (L2)".into(),
                    log_x: true,
                    log_y: true,
                    title: "empirical convergence".into(),
                },
                &svg_path,
            )?;
            eprintln!("wrote {} and {}", csv_path.display(), svg_path.display());
            for (spec, fit) in &outcome.fits {
                println!(
                    "{}: slope {:.3} (r^2 {:.4})",
                    spec.label(),
                    fit.slope,
                    fit.r_squared
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot {
            csv,
            out,
            metric,
            linear_y,
        } => {
            let text = std::fs::read_to_string(&csv)
                .map_err(|e| Error::InvalidArgument(format!("csv {}: {e}", csv.display())))?;
            let series = series_from_csv(&text, metric.as_deref(), !linear_y)?;
            emit_svg_plot(
                &series.1,
                &PlotAxes {
                    x_label: "NFE".into(),
                    y_label: series.0.clone(),
                    log_x: false,
                    log_y: !linear_y,
                    title: String::new(),
                },
                &out,
            )?;
            eprintln!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Groups CSV rows of one metric into per-solver series over NFE.
fn series_from_csv(
    text: &str,
    metric: Option<&str>,
    log_y: bool,
) -> Result<(String, Vec<PlotSeries>), Error> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("csv: empty file".into()))?;
    if header != CSV_HEADER {
        return Err(Error::InvalidArgument(format!(
            "csv: unexpected header '{header}'"
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 9 {
            return Err(Error::InvalidArgument(format!(
                "csv: row {} has {} fields, expected 9",
                i + 2,
                parts.len()
            )));
        }
        let nfe: usize = parts[4]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("csv: bad nfe on row {}", i + 2)))?;
        let value: f64 = parts[7]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("csv: bad value on row {}", i + 2)))?;
        let label = match (parts[0], parts[1], parts[2]) {
            ("flow", order, "true") => format!("flow-s{order}-corr"),
            ("flow", order, _) => format!("flow-s{order}"),
            (solver, _, _) => solver.to_string(),
        };
        rows.push((label, parts[6].to_string(), nfe, value));
    }
    let chosen = match metric {
        Some(m) => m.to_string(),
        None => rows
            .iter()
            .map(|r| r.1.clone())
            .next()
            .ok_or_else(|| Error::InvalidArgument("csv: no data rows".into()))?,
    };
    let mut series: Vec<PlotSeries> = Vec::new();
    for (label, m, nfe, value) in rows {
        if m != chosen || nfe == 0 {
            continue;
        }
        if !value.is_finite() || (log_y && value <= 0.0) {
            eprintln!("warning: dropping {label} nfe={nfe} value={value} from the plot");
            continue;
        }
        let point = (nfe as f64, value);
        match series.iter_mut().find(|s| s.name == label) {
            Some(s) => s.points.push(point),
            None => series.push(PlotSeries {
                name: label,
                points: vec![point],
            }),
        }
    }
    if series.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "csv: no plottable rows for metric '{chosen}'"
        )));
    }
    for s in series.iter_mut() {
        s.points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    }
    Ok((chosen, series))
}
