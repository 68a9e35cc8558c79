//! Experiment configuration: a flat key-value text format with section
//! headers, chosen over positional flags so sweeps stay reproducible. Parsing
//! reports line numbers; serialization is deterministic (fixed section and
//! key order, shortest round-trip float formatting), and every run archives
//! its normalized config next to the outputs.

use std::fmt::Write as _;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing required key `{key}` in section [{section}]")]
    Missing {
        section: &'static str,
        key: &'static str,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackKindConfig {
    Pointwise,
    CellAverage,
    Weighted,
    Nonlocal,
}

impl FeedbackKindConfig {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Pointwise => "pointwise",
            Self::CellAverage => "cell_average",
            Self::Weighted => "weighted",
            Self::Nonlocal => "nonlocal",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "pointwise" => Some(Self::Pointwise),
            "cell_average" => Some(Self::CellAverage),
            "weighted" => Some(Self::Weighted),
            "nonlocal" => Some(Self::Nonlocal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackConfig {
    pub kind: FeedbackKindConfig,
    pub actuators_per_axis: usize,
    pub lambda: f64,
    pub omega_fraction: f64,
    /// Weight matrix source for the weighted/nonlocal kinds.
    pub beta_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    TanhProfile,
    RandomPerturbation { seed: u64, amplitude: f64 },
    FromFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSpec {
    Zero,
    Constant(f64),
    FromFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub modes_per_axis: usize,
    pub grid_per_axis: usize,
    pub nu: f64,
    pub r_bound: f64,
    pub tau: f64,
    pub t_end: f64,
    pub feedback: FeedbackConfig,
    pub initial: InitialCondition,
    pub reference: ReferenceSpec,
    pub output_dir: PathBuf,
    pub snapshot_times: Vec<f64>,
}

impl ExperimentConfig {
    /// Desk-scale defaults: d = 2, N = 32 modes per axis, Q = 64.
    pub fn desk_default() -> Self {
        Self {
            dimension: 2,
            modes_per_axis: 32,
            grid_per_axis: 64,
            nu: 0.01,
            r_bound: 0.0,
            tau: 1e-3,
            t_end: 1.0,
            feedback: FeedbackConfig {
                kind: FeedbackKindConfig::Pointwise,
                actuators_per_axis: 4,
                lambda: 100.0,
                omega_fraction: 1.0,
                beta_file: None,
            },
            initial: InitialCondition::TanhProfile,
            reference: ReferenceSpec::Zero,
            output_dir: PathBuf::from("out/run"),
            snapshot_times: vec![0.0, 0.005, 0.05, 0.1, 1.0],
        }
    }

    /// Deterministic normalized text form; `parse` round-trips it exactly.
    pub fn to_normalized_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "[model]").unwrap();
        writeln!(out, "dimension = {}", self.dimension).unwrap();
        writeln!(out, "modes = {}", self.modes_per_axis).unwrap();
        writeln!(out, "grid = {}", self.grid_per_axis).unwrap();
        writeln!(out, "nu = {}", self.nu).unwrap();
        writeln!(out, "r_bound = {}", self.r_bound).unwrap();
        writeln!(out, "tau = {}", self.tau).unwrap();
        writeln!(out, "t_end = {}", self.t_end).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "[feedback]").unwrap();
        writeln!(out, "kind = {}", self.feedback.kind.label()).unwrap();
        writeln!(out, "actuators = {}", self.feedback.actuators_per_axis).unwrap();
        writeln!(out, "lambda = {}", self.feedback.lambda).unwrap();
        writeln!(out, "omega_fraction = {}", self.feedback.omega_fraction).unwrap();
        writeln!(
            out,
            "beta_file = {}",
            self.feedback
                .beta_file
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        )
        .unwrap();
        writeln!(out).unwrap();
        writeln!(out, "[initial]").unwrap();
        match &self.initial {
            InitialCondition::TanhProfile => {
                writeln!(out, "kind = tanh_profile").unwrap();
                writeln!(out, "seed = 0").unwrap();
                writeln!(out, "amplitude = 0").unwrap();
                writeln!(out, "file = ").unwrap();
            }
            InitialCondition::RandomPerturbation { seed, amplitude } => {
                writeln!(out, "kind = random_perturbation").unwrap();
                writeln!(out, "seed = {seed}").unwrap();
                writeln!(out, "amplitude = {amplitude}").unwrap();
                writeln!(out, "file = ").unwrap();
            }
            InitialCondition::FromFile(path) => {
                writeln!(out, "kind = from_file").unwrap();
                writeln!(out, "seed = 0").unwrap();
                writeln!(out, "amplitude = 0").unwrap();
                writeln!(out, "file = {}", path.display()).unwrap();
            }
        }
        writeln!(out).unwrap();
        writeln!(out, "[reference]").unwrap();
        match &self.reference {
            ReferenceSpec::Zero => {
                writeln!(out, "kind = zero").unwrap();
                writeln!(out, "value = 0").unwrap();
                writeln!(out, "file = ").unwrap();
            }
            ReferenceSpec::Constant(a) => {
                writeln!(out, "kind = constant").unwrap();
                writeln!(out, "value = {a}").unwrap();
                writeln!(out, "file = ").unwrap();
            }
            ReferenceSpec::FromFile(path) => {
                writeln!(out, "kind = from_file").unwrap();
                writeln!(out, "value = 0").unwrap();
                writeln!(out, "file = {}", path.display()).unwrap();
            }
        }
        writeln!(out).unwrap();
        writeln!(out, "[output]").unwrap();
        writeln!(out, "directory = {}", self.output_dir.display()).unwrap();
        let snaps: Vec<String> = self.snapshot_times.iter().map(|t| t.to_string()).collect();
        writeln!(out, "snapshots = {}", snaps.join(", ")).unwrap();
        out
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        let mut section = String::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Line {
                    line: line_no,
                    message: "unterminated section header".into(),
                })?;
                section = name.trim().to_string();
                if !matches!(
                    section.as_str(),
                    "model" | "feedback" | "initial" | "reference" | "output"
                ) {
                    return Err(ConfigError::Line {
                        line: line_no,
                        message: format!("unknown section [{section}]"),
                    });
                }
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Line {
                line: line_no,
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            raw.set(&section, key, value, line_no)?;
        }
        raw.build()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(ConfigError::Invalid(format!(
                "dimension must be 1 or 2, got {}",
                self.dimension
            )));
        }
        if self.nu <= 0.0 || self.nu.is_nan() {
            return Err(ConfigError::Invalid(format!(
                "nu must be positive, got {}",
                self.nu
            )));
        }
        if self.tau <= 0.0 || self.tau.is_nan() || self.t_end <= 0.0 || self.t_end.is_nan() {
            return Err(ConfigError::Invalid(
                "tau and t_end must be positive".into(),
            ));
        }
        if self.r_bound < 0.0 {
            return Err(ConfigError::Invalid(format!(
                "r_bound must be nonnegative, got {}",
                self.r_bound
            )));
        }
        let steps = (self.t_end / self.tau).round();
        for &t in &self.snapshot_times {
            let n = (t / self.tau).round();
            if (n * self.tau - t).abs() > 1e-9 * self.t_end.max(1.0) {
                return Err(ConfigError::Invalid(format!(
                    "snapshot time {t} does not land on a step of tau = {}",
                    self.tau
                )));
            }
            if n > steps {
                return Err(ConfigError::Invalid(format!(
                    "snapshot time {t} lies beyond t_end = {}",
                    self.t_end
                )));
            }
        }
        match self.feedback.kind {
            FeedbackKindConfig::Weighted | FeedbackKindConfig::Nonlocal
                if self.feedback.beta_file.is_none() && self.feedback.actuators_per_axis > 0 =>
            {
                Err(ConfigError::Invalid(
                    "weighted/nonlocal feedback requires beta_file".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Default)]
struct RawConfig {
    entries: Vec<(String, String, String, usize)>,
}

impl RawConfig {
    fn set(
        &mut self,
        section: &str,
        key: &str,
        value: &str,
        line: usize,
    ) -> Result<(), ConfigError> {
        if section.is_empty() {
            return Err(ConfigError::Line {
                line,
                message: format!("key `{key}` appears before any section header"),
            });
        }
        let known: &[&str] = match section {
            "model" => &[
                "dimension",
                "modes",
                "grid",
                "nu",
                "r_bound",
                "tau",
                "t_end",
            ],
            "feedback" => &["kind", "actuators", "lambda", "omega_fraction", "beta_file"],
            "initial" => &["kind", "seed", "amplitude", "file"],
            "reference" => &["kind", "value", "file"],
            "output" => &["directory", "snapshots"],
            _ => &[],
        };
        if !known.contains(&key) {
            return Err(ConfigError::Line {
                line,
                message: format!("unknown key `{key}` in section [{section}]"),
            });
        }
        if self
            .entries
            .iter()
            .any(|(s, k, _, _)| s == section && k == key)
        {
            return Err(ConfigError::Line {
                line,
                message: format!("duplicate key `{key}` in section [{section}]"),
            });
        }
        self.entries
            .push((section.into(), key.into(), value.into(), line));
        Ok(())
    }

    fn get(&self, section: &'static str, key: &'static str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|(s, k, _, _)| s == section && k == key)
            .map(|(_, _, v, l)| (v.as_str(), *l))
    }

    fn require(
        &self,
        section: &'static str,
        key: &'static str,
    ) -> Result<(&str, usize), ConfigError> {
        self.get(section, key)
            .ok_or(ConfigError::Missing { section, key })
    }

    fn parse_num<T: std::str::FromStr>(
        value: &str,
        line: usize,
        what: &str,
    ) -> Result<T, ConfigError> {
        value.parse().map_err(|_| ConfigError::Line {
            line,
            message: format!("cannot parse `{value}` as {what}"),
        })
    }

    fn build(&self) -> Result<ExperimentConfig, ConfigError> {
        let (v, l) = self.require("model", "dimension")?;
        let dimension: usize = Self::parse_num(v, l, "an integer")?;
        let (v, l) = self.require("model", "modes")?;
        let modes_per_axis: usize = Self::parse_num(v, l, "an integer")?;
        let (v, l) = self.require("model", "grid")?;
        let grid_per_axis: usize = Self::parse_num(v, l, "an integer")?;
        let (v, l) = self.require("model", "nu")?;
        let nu: f64 = Self::parse_num(v, l, "a number")?;
        let r_bound = match self.get("model", "r_bound") {
            Some((v, l)) => Self::parse_num(v, l, "a number")?,
            None => 0.0,
        };
        let (v, l) = self.require("model", "tau")?;
        let tau: f64 = Self::parse_num(v, l, "a number")?;
        let (v, l) = self.require("model", "t_end")?;
        let t_end: f64 = Self::parse_num(v, l, "a number")?;

        let (v, l) = self.require("feedback", "kind")?;
        let kind = FeedbackKindConfig::parse(v).ok_or_else(|| ConfigError::Line {
            line: l,
            message: format!("unknown feedback kind `{v}`"),
        })?;
        let (v, l) = self.require("feedback", "actuators")?;
        let actuators_per_axis: usize = Self::parse_num(v, l, "an integer")?;
        let (v, l) = self.require("feedback", "lambda")?;
        let lambda: f64 = Self::parse_num(v, l, "a number")?;
        let omega_fraction = match self.get("feedback", "omega_fraction") {
            Some((v, l)) => Self::parse_num(v, l, "a number")?,
            None => 1.0,
        };
        let beta_file = match self.get("feedback", "beta_file") {
            Some((v, _)) if !v.is_empty() => Some(PathBuf::from(v)),
            _ => None,
        };

        let (v, l) = self.require("initial", "kind")?;
        let initial = match v {
            "tanh_profile" => InitialCondition::TanhProfile,
            "random_perturbation" => {
                let (s, sl) = self.require("initial", "seed")?;
                let seed: u64 = Self::parse_num(s, sl, "an integer")?;
                let (a, al) = self.require("initial", "amplitude")?;
                let amplitude: f64 = Self::parse_num(a, al, "a number")?;
                InitialCondition::RandomPerturbation { seed, amplitude }
            }
            "from_file" => {
                let (f, fl) = self.require("initial", "file")?;
                if f.is_empty() {
                    return Err(ConfigError::Line {
                        line: fl,
                        message: "initial kind `from_file` needs a file path".into(),
                    });
                }
                InitialCondition::FromFile(PathBuf::from(f))
            }
            other => {
                return Err(ConfigError::Line {
                    line: l,
                    message: format!("unknown initial condition `{other}`"),
                })
            }
        };

        let (v, l) = self.require("reference", "kind")?;
        let reference = match v {
            "zero" => ReferenceSpec::Zero,
            "constant" => {
                let (a, al) = self.require("reference", "value")?;
                ReferenceSpec::Constant(Self::parse_num(a, al, "a number")?)
            }
            "from_file" => {
                let (f, fl) = self.require("reference", "file")?;
                if f.is_empty() {
                    return Err(ConfigError::Line {
                        line: fl,
                        message: "reference kind `from_file` needs a file path".into(),
                    });
                }
                ReferenceSpec::FromFile(PathBuf::from(f))
            }
            other => {
                return Err(ConfigError::Line {
                    line: l,
                    message: format!("unknown reference `{other}`"),
                })
            }
        };

        let (v, _) = self.require("output", "directory")?;
        let output_dir = PathBuf::from(v);
        let (v, l) = self.require("output", "snapshots")?;
        let mut snapshot_times = Vec::new();
        if !v.trim().is_empty() {
            for piece in v.split(',') {
                snapshot_times.push(Self::parse_num(piece.trim(), l, "a number")?);
            }
        }

        let config = ExperimentConfig {
            dimension,
            modes_per_axis,
            grid_per_axis,
            nu,
            r_bound,
            tau,
            t_end,
            feedback: FeedbackConfig {
                kind,
                actuators_per_axis,
                lambda,
                omega_fraction,
                beta_file,
            },
            initial,
            reference,
            output_dir,
            snapshot_times,
        };
        config.validate()?;
        Ok(config)
    }
}
