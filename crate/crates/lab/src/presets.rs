//! Experiment presets: the five-run feedback matrix over (M, λ) with the
//! tanh interface initial state steered toward the zero reference, plus its
//! verdict table.

use crate::config::{ExperimentConfig, InitialCondition, ReferenceSpec};
use crate::csvio::format_float;
use crate::error::LabError;
use crate::experiment::{run_experiment, RunOutcome};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// (actuators per axis, gain) rows of the preset, in emission order.
pub const FIGURE3_RUNS: [(usize, f64); 5] = [(0, 0.0), (3, 100.0), (4, 5.0), (4, 25.0), (4, 100.0)];

/// Snapshot times of the preset.
pub const FIGURE3_SNAPSHOTS: [f64; 5] = [0.0, 0.005, 0.05, 0.1, 1.0];

/// Decay-fit window for the verdict table: inside the exponential phase for
/// stabilised runs, before the tracking error reaches the solver floor.
pub const FIGURE3_FIT_WINDOW: (f64, f64) = (0.05, 0.25);

/// ‖z(t_end)‖ ≤ this fraction of ‖z(0)‖ counts as stabilised.
pub const STABILISED_THRESHOLD: f64 = 1e-3;
/// ‖z(t_end)‖ ≥ this fraction of ‖z(0)‖ counts as stagnated.
pub const STAGNATED_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stabilised,
    Stagnated,
    Inconclusive,
}

impl Verdict {
    pub fn from_ratio(ratio: f64) -> Self {
        if ratio <= STABILISED_THRESHOLD {
            Verdict::Stabilised
        } else if ratio >= STAGNATED_THRESHOLD {
            Verdict::Stagnated
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Stabilised => "stabilised",
            Verdict::Stagnated => "stagnated",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

pub struct Figure3Row {
    pub actuators_per_axis: usize,
    pub lambda: f64,
    pub initial_z_norm: f64,
    pub final_z_norm: f64,
    pub ratio: f64,
    pub gamma_hat: f64,
    pub certificate_gamma: f64,
    pub energy_violations: usize,
    pub verdict: Verdict,
}

pub struct Figure3Outcome {
    pub rows: Vec<Figure3Row>,
    pub runs: Vec<RunOutcome>,
}

/// Config for one preset run, desk scale (d = 2, N = 32, ν = 0.01, τ = 1e−3),
/// with the measured bound of the zero reference (R = 0) entering C*.
pub fn figure3_config(actuators_per_axis: usize, lambda: f64, out_root: &Path) -> ExperimentConfig {
    let mut config = ExperimentConfig::desk_default();
    config.feedback.actuators_per_axis = actuators_per_axis;
    config.feedback.lambda = lambda;
    config.r_bound = 0.0;
    config.initial = InitialCondition::TanhProfile;
    config.reference = ReferenceSpec::Zero;
    config.snapshot_times = FIGURE3_SNAPSHOTS.to_vec();
    config.output_dir = out_root.join(format!("m{actuators_per_axis}_lambda{lambda}"));
    config
}

pub fn run_figure3(out_root: &Path) -> Result<Figure3Outcome, LabError> {
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for (m, lambda) in FIGURE3_RUNS {
        let config = figure3_config(m, lambda, out_root);
        let outcome = run_experiment(&config, Some(FIGURE3_FIT_WINDOW))?;
        let ratio = if outcome.initial_z_norm > 0.0 {
            outcome.final_z_norm / outcome.initial_z_norm
        } else {
            0.0
        };
        rows.push(Figure3Row {
            actuators_per_axis: m,
            lambda,
            initial_z_norm: outcome.initial_z_norm,
            final_z_norm: outcome.final_z_norm,
            ratio,
            gamma_hat: outcome.gamma_hat,
            certificate_gamma: outcome.certificate.gamma,
            energy_violations: outcome.record.energy_violations,
            verdict: Verdict::from_ratio(ratio),
        });
        runs.push(outcome);
    }
    let verdicts = verdicts_csv(&rows);
    fs::write(out_root.join("verdicts.csv"), verdicts)
        .map_err(|source| LabError::io(out_root, source))?;
    Ok(Figure3Outcome { rows, runs })
}

pub fn verdicts_csv(rows: &[Figure3Row]) -> String {
    let mut out =
        String::from("M,lambda,z0,z_final,ratio,gamma_hat,cert_gamma,violations,verdict\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.actuators_per_axis,
            format_float(r.lambda),
            format_float(r.initial_z_norm),
            format_float(r.final_z_norm),
            format_float(r.ratio),
            format_float(r.gamma_hat),
            format_float(r.certificate_gamma),
            r.energy_violations,
            r.verdict.label(),
        )
        .unwrap();
    }
    out
}

pub fn verdict_table(rows: &[Figure3Row]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:>3} {:>8} {:>13} {:>13} {:>11} {:>10} {:>11} {:>12}",
        "M", "lambda", "||z(0)||", "||z(1)||", "ratio", "gamma_hat", "cert_gamma", "verdict"
    )
    .unwrap();
    for r in rows {
        writeln!(
            out,
            "{:>3} {:>8} {:>13.6e} {:>13.6e} {:>11.4e} {:>10.3} {:>11.3} {:>12}",
            r.actuators_per_axis,
            r.lambda,
            r.initial_z_norm,
            r.final_z_norm,
            r.ratio,
            r.gamma_hat,
            r.certificate_gamma,
            r.verdict.label(),
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_thresholds() {
        assert_eq!(Verdict::from_ratio(5e-4), Verdict::Stabilised);
        assert_eq!(Verdict::from_ratio(0.5), Verdict::Stagnated);
        assert_eq!(Verdict::from_ratio(0.01), Verdict::Inconclusive);
    }

    #[test]
    fn preset_configs_land_snapshots_on_steps() {
        for (m, lambda) in FIGURE3_RUNS {
            let config = figure3_config(m, lambda, Path::new("out"));
            config.validate().unwrap();
        }
    }
}
