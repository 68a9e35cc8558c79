//! Command-line interface: `cstar`, `gap-scan`, `simulate`, `decay`,
//! `figure3`. Exit codes: 0 success, 1 usage/config error, 2 numerical
//! failure. The optional environment variable `CHSTAB_OUT` prefixes all
//! relative output paths.

use crate::config::ExperimentConfig;
use crate::csvio;
use crate::error::LabError;
use crate::experiment::run_experiment;
use crate::presets;
use crate::svg;
use chstab_core::spectral::Discretization;
use chstab_core::{compute_cstar, compute_cstar_discrete, decay_fit_samples, gap};
use clap::{Parser, Subcommand};
use std::fs;
use std::path::PathBuf;

pub const OUTPUT_ROOT_ENV: &str = "CHSTAB_OUT";

#[derive(Parser)]
#[command(
    name = "chstab",
    version,
    about = "Numerical laboratory for feedback stabilisation of the Cahn-Hilliard equation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Print the stabilisation constant C*(R, nu), continuous and
    /// discrete-proof variants
    Cstar {
        #[arg(long)]
        nu: f64,
        #[arg(long = "R")]
        r_bound: f64,
    },
    /// Scan the smallest eigenvalue alpha_min(M, lambda) of the certificate
    /// form and emit a CSV table (optionally an SVG contour plot)
    GapScan {
        #[arg(long)]
        nu: f64,
        #[arg(long = "R")]
        r_bound: f64,
        /// Actuator counts per axis, comma separated
        #[arg(long = "M", value_delimiter = ',', required = true)]
        actuators: Vec<usize>,
        /// Gains, comma separated
        #[arg(long = "lambda", value_delimiter = ',')]
        lambdas: Vec<f64>,
        /// Log-spaced gains LO,HI,COUNT (alternative to --lambda)
        #[arg(long = "lambda-log", value_name = "LO,HI,COUNT")]
        lambda_log: Option<String>,
        #[arg(long, default_value_t = 2)]
        dimension: usize,
        /// Retained modes per axis
        #[arg(long, default_value_t = 16)]
        modes: usize,
        /// Collocation points per axis (default 2*modes)
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value = "gap_scan.csv")]
        out: PathBuf,
        /// Also render iso-level polylines (the level C* is always included
        /// and highlighted)
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Extra iso levels for the SVG
        #[arg(long, value_delimiter = ',')]
        levels: Vec<f64>,
    },
    /// Run one experiment from a config file
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit the decay rate of log ||z||^2 from a time-series CSV
    Decay {
        #[arg(long)]
        input: PathBuf,
        /// Fit window "ta,tb" (default: the full series)
        #[arg(long)]
        window: Option<String>,
        /// Render the series and fit to an SVG line plot
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Overlay a reference slope (e.g. the certificate rate gamma-tilde)
        #[arg(long = "gamma-ref")]
        gamma_ref: Option<f64>,
    },
    /// Run the five-run (M, lambda) preset matrix and print the verdicts
    Figure3 {
        #[arg(long, default_value = "out/figure3")]
        out: PathBuf,
    },
}

/// Prefix relative paths with $CHSTAB_OUT when set.
pub fn resolve_output(path: PathBuf) -> PathBuf {
    if path.is_absolute() {
        return path;
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path,
    }
}

pub fn run(cli: Cli) -> Result<(), LabError> {
    match cli.command {
        Command::Cstar { nu, r_bound } => {
            let continuous = compute_cstar(r_bound, nu)?;
            let discrete = compute_cstar_discrete(r_bound, nu)?;
            println!("c_star_continuous = {continuous}");
            println!("c_star_discrete = {discrete}");
            Ok(())
        }
        Command::GapScan {
            nu,
            r_bound,
            actuators,
            lambdas,
            lambda_log,
            dimension,
            modes,
            grid,
            out,
            svg: svg_path,
            levels,
        } => {
            let lambdas = resolve_lambdas(lambdas, lambda_log)?;
            if actuators.is_empty() || lambdas.is_empty() {
                return Err(LabError::Usage(
                    "gap-scan needs nonempty --M and --lambda (or --lambda-log)".into(),
                ));
            }
            let grid = grid.unwrap_or(2 * modes);
            let disc = Discretization::new(dimension, modes, grid)?;
            let rows = gap::scan(&disc, nu, r_bound, &actuators, &lambdas)?;
            let out = resolve_output(out);
            csvio::write_scan(&out, &rows)?;
            println!("wrote {} scan rows to {}", rows.len(), out.display());
            if let Some(svg_path) = svg_path {
                let svg_path = resolve_output(svg_path);
                let text = render_scan_svg(&actuators, &lambdas, &rows, &levels, nu, r_bound)?;
                fs::write(&svg_path, text).map_err(|source| LabError::io(&svg_path, source))?;
                println!("wrote contour plot to {}", svg_path.display());
            }
            Ok(())
        }
        Command::Simulate { config } => {
            let text =
                fs::read_to_string(&config).map_err(|source| LabError::io(&config, source))?;
            let mut parsed = ExperimentConfig::parse(&text)?;
            parsed.output_dir = resolve_output(parsed.output_dir);
            let outcome = run_experiment(&parsed, None)?;
            println!("run directory: {}", outcome.output_dir.display());
            println!("{}", outcome.summary_line());
            Ok(())
        }
        Command::Decay {
            input,
            window,
            svg: svg_path,
            gamma_ref,
        } => {
            let rows = csvio::read_timeseries(&input)?;
            let samples: Vec<(f64, f64)> = rows.iter().map(|r| (r.time, r.z_norm_sq)).collect();
            let window = match window {
                Some(text) => parse_window(&text)?,
                None => full_window(&samples),
            };
            let fit = decay_fit_samples(&samples, window)?;
            println!(
                "gamma_hat = {}  r_squared = {}  samples = {}",
                fit.gamma_hat, fit.r_squared, fit.samples
            );
            if let Some(svg_path) = svg_path {
                let svg_path = resolve_output(svg_path);
                let text = render_decay_svg(&samples, window, fit.gamma_hat, gamma_ref);
                fs::write(&svg_path, text).map_err(|source| LabError::io(&svg_path, source))?;
                println!("wrote decay plot to {}", svg_path.display());
            }
            Ok(())
        }
        Command::Figure3 { out } => {
            let out = resolve_output(out);
            fs::create_dir_all(&out).map_err(|source| LabError::io(&out, source))?;
            let outcome = presets::run_figure3(&out)?;
            print!("{}", presets::verdict_table(&outcome.rows));
            println!("artifacts under {}", out.display());
            Ok(())
        }
    }
}

fn resolve_lambdas(explicit: Vec<f64>, lambda_log: Option<String>) -> Result<Vec<f64>, LabError> {
    match lambda_log {
        None => Ok(explicit),
        Some(spec) => {
            if !explicit.is_empty() {
                return Err(LabError::Usage(
                    "pass either --lambda or --lambda-log, not both".into(),
                ));
            }
            let parts: Vec<&str> = spec.split(',').collect();
            if parts.len() != 3 {
                return Err(LabError::Usage(format!(
                    "--lambda-log expects LO,HI,COUNT, got `{spec}`"
                )));
            }
            let lo: f64 = parts[0]
                .trim()
                .parse()
                .map_err(|_| LabError::Usage(format!("bad --lambda-log LO `{}`", parts[0])))?;
            let hi: f64 = parts[1]
                .trim()
                .parse()
                .map_err(|_| LabError::Usage(format!("bad --lambda-log HI `{}`", parts[1])))?;
            let count: usize = parts[2]
                .trim()
                .parse()
                .map_err(|_| LabError::Usage(format!("bad --lambda-log COUNT `{}`", parts[2])))?;
            if lo <= 0.0 || lo.is_nan() || hi <= lo || count < 2 {
                return Err(LabError::Usage(
                    "--lambda-log needs 0 < LO < HI and COUNT >= 2".into(),
                ));
            }
            Ok((0..count)
                .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
                .collect())
        }
    }
}

fn parse_window(text: &str) -> Result<(f64, f64), LabError> {
    let (a, b) = text
        .split_once(',')
        .ok_or_else(|| LabError::Usage(format!("--window expects `ta,tb`, got `{text}`")))?;
    let ta: f64 = a
        .trim()
        .parse()
        .map_err(|_| LabError::Usage(format!("bad window start `{a}`")))?;
    let tb: f64 = b
        .trim()
        .parse()
        .map_err(|_| LabError::Usage(format!("bad window end `{b}`")))?;
    if tb <= ta || tb.is_nan() || ta.is_nan() {
        return Err(LabError::Usage("window end must exceed start".into()));
    }
    Ok((ta, tb))
}

fn full_window(samples: &[(f64, f64)]) -> (f64, f64) {
    let lo = samples.first().map(|s| s.0).unwrap_or(0.0);
    let hi = samples.last().map(|s| s.0).unwrap_or(1.0);
    (lo, hi)
}

fn render_scan_svg(
    actuators: &[usize],
    lambdas: &[f64],
    rows: &[gap::ScanRow],
    extra_levels: &[f64],
    nu: f64,
    r_bound: f64,
) -> Result<String, LabError> {
    let log_lambda = lambdas.iter().all(|&l| l > 0.0);
    let xs: Vec<f64> = actuators.iter().map(|&m| m as f64).collect();
    let ys: Vec<f64> = lambdas
        .iter()
        .map(|&l| if log_lambda { l.log10() } else { l })
        .collect();
    let mut values = vec![vec![0.0; ys.len()]; xs.len()];
    for (idx, row) in rows.iter().enumerate() {
        let i = idx / lambdas.len();
        let j = idx % lambdas.len();
        values[i][j] = row.alpha_min;
    }
    let c_star = compute_cstar(r_bound, nu)?;
    let mut levels = vec![svg::ContourLevel {
        value: c_star,
        label: format!("C* = {c_star:.1}"),
        highlight: true,
    }];
    for &l in extra_levels {
        levels.push(svg::ContourLevel {
            value: l,
            label: format!("alpha_min = {l}"),
            highlight: false,
        });
    }
    Ok(svg::contour_plot(
        "smallest eigenvalue alpha_min(M, lambda)",
        "M (actuators per axis)",
        if log_lambda {
            "log10(lambda)"
        } else {
            "lambda"
        },
        &xs,
        &ys,
        &values,
        &levels,
    ))
}

fn render_decay_svg(
    samples: &[(f64, f64)],
    window: (f64, f64),
    gamma_hat: f64,
    gamma_ref: Option<f64>,
) -> String {
    let log_points: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, z)| *z > 0.0)
        .map(|(t, z)| (*t, z.ln()))
        .collect();
    let mut series = vec![svg::Series {
        label: "log ||z||^2".into(),
        points: log_points.clone(),
        dashed: false,
    }];
    // fitted slope anchored at the window start
    if let Some(&(t0, y0)) = log_points.iter().find(|(t, _)| *t >= window.0 - 1e-12) {
        let t1 = window.1;
        series.push(svg::Series {
            label: format!("fit: slope = {:.3}", -gamma_hat),
            points: vec![(t0, y0), (t1, y0 - gamma_hat * (t1 - t0))],
            dashed: true,
        });
        if let Some(rate) = gamma_ref {
            series.push(svg::Series {
                label: format!("reference rate {rate:.3}"),
                points: vec![(t0, y0), (t1, y0 - rate * (t1 - t0))],
                dashed: true,
            });
        }
    }
    svg::line_plot("tracking error decay", "t", "log ||z||^2", &series)
}
