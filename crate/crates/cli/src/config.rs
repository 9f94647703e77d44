//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use optswitch::majorant::Coupling;
use optswitch::model::{
    validate_problem, BoundaryKind, Cost, Family, Interval, Regime, RegimeSpec, Reward, SwitchingProblem,
    ValidatedProblem,
};
use optswitch::solver::SolverOptions;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub discount: f64,
    pub closed: FamilyConfig,
    pub open: FamilyConfig,
    pub reward_closed: RewardConfig,
    pub reward_open: RewardConfig,
    /// Cost of switching closed → open.
    pub cost_open: f64,
    /// Cost of switching open → closed.
    pub cost_close: f64,
    pub interval: IntervalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Gbm { drift: f64, vol: f64 },
    Ou { reversion_speed: f64, level: f64, vol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardConfig {
    Zero,
    Affine { slope: f64, intercept: f64 },
    Power { coef: f64, exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalConfig {
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub lower_kind: KindConfig,
    #[serde(default)]
    pub upper_kind: KindConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindConfig {
    #[default]
    Natural,
    Absorbing,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodConfig {
    #[default]
    FixedPoint,
    Simultaneous,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingConfig {
    #[default]
    SlopeOnly,
    FullLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_beta1: Option<f64>,
    pub method: MethodConfig,
    pub coupling: CouplingConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            initial_beta1: None,
            method: MethodConfig::default(),
            coupling: CouplingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartConfig {
    #[default]
    Both,
    Closed,
    Open,
}

impl StartConfig {
    pub fn regimes(self) -> &'static [Regime] {
        match self {
            StartConfig::Both => &Regime::BOTH,
            StartConfig::Closed => &[Regime::Closed],
            StartConfig::Open => &[Regime::Open],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Nodes of the value-iteration grid.
    pub grid: usize,
    pub vi_tol: f64,
    pub vi_max_iter: usize,
    /// Largest accepted relative gap between grid and solver values.
    pub gap_tol: f64,
    pub paths: usize,
    pub dt: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub seed: u64,
    /// Largest accepted |z| of a Monte Carlo estimate.
    pub z_max: f64,
    pub probes: Vec<f64>,
    /// Starting regimes simulated at each probe.
    pub start: StartConfig,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid: 2000,
            vi_tol: 1e-10,
            vi_max_iter: 100_000,
            gap_tol: 1e-2,
            paths: 100_000,
            dt: 1e-3,
            horizon: None,
            seed: 0,
            z_max: 3.0,
            probes: Vec::new(),
            start: StartConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingConfig {
    Log,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Number of curve samples.
    pub points: usize,
    /// Curve range; defaults to a neighbourhood of the thresholds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<SpacingConfig>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            points: 401,
            lower: None,
            upper: None,
            spacing: None,
        }
    }
}

fn config_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_error(path, e.to_string()))?;
        Self::parse(&text, path)
    }

    /// Parses and checks a config; `path` only labels errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_error(path, e.to_string().trim_end()))?;
        cfg.check().map_err(|m| config_error(path, m))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// Range checks that the schema cannot express.
    pub fn check(&self) -> Result<(), String> {
        let s = &self.solver;
        if !(s.tol > 0.0) {
            return Err(format!("solver.tol must be positive, got {}", s.tol));
        }
        if s.max_iter == 0 {
            return Err("solver.max_iter must be positive".into());
        }
        let o = &self.oracle;
        if o.grid < 3 {
            return Err(format!("oracle.grid must be at least 3, got {}", o.grid));
        }
        if o.paths == 0 {
            return Err("oracle.paths must be positive".into());
        }
        if !(o.dt > 0.0 && o.dt.is_finite()) {
            return Err(format!("oracle.dt must be positive, got {}", o.dt));
        }
        if !(o.vi_tol > 0.0) || o.vi_max_iter == 0 {
            return Err("oracle.vi_tol and oracle.vi_max_iter must be positive".into());
        }
        if let Some(h) = o.horizon {
            if !(h > o.dt && h.is_finite()) {
                return Err(format!("oracle.horizon must exceed oracle.dt, got {h}"));
            }
        }
        let iv = &self.problem.interval;
        if let Some(&x) = o.probes.iter().find(|&&x| !(x > iv.lower && x < iv.upper)) {
            return Err(format!("oracle.probes entry {x} lies outside ({}, {})", iv.lower, iv.upper));
        }
        let out = &self.output;
        if out.points < 2 {
            return Err(format!("output.points must be at least 2, got {}", out.points));
        }
        if let (Some(lo), Some(hi)) = (out.lower, out.upper) {
            if !(lo < hi) {
                return Err(format!("output.lower ({lo}) must be below output.upper ({hi})"));
            }
        }
        Ok(())
    }

    pub fn switching_problem(&self) -> SwitchingProblem {
        let p = &self.problem;
        let kind = |k: KindConfig| match k {
            KindConfig::Natural => BoundaryKind::Natural,
            KindConfig::Absorbing => BoundaryKind::Absorbing,
        };
        SwitchingProblem {
            closed: RegimeSpec::new(Regime::Closed, p.closed.family()),
            open: RegimeSpec::new(Regime::Open, p.open.family()),
            reward_closed: p.reward_closed.reward(),
            reward_open: p.reward_open.reward(),
            cost_open: Cost::Constant(p.cost_open),
            cost_close: Cost::Constant(p.cost_close),
            discount: p.discount,
            interval: Interval {
                lower: p.interval.lower,
                upper: p.interval.upper,
                lower_kind: kind(p.interval.lower_kind),
                upper_kind: kind(p.interval.upper_kind),
            },
            window: p.window.map(|[a, b]| (a, b)),
        }
    }

    pub fn validated_problem(&self, path: &Path) -> Result<ValidatedProblem, CliError> {
        validate_problem(self.switching_problem()).map_err(|e| config_error(path, format!("problem: {e}")))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            initial_beta1: self.solver.initial_beta1,
            coupling: match self.solver.coupling {
                CouplingConfig::SlopeOnly => Coupling::SlopeOnly,
                CouplingConfig::FullLine => Coupling::FullLine,
            },
            ..SolverOptions::default()
        }
    }
}

impl FamilyConfig {
    pub fn family(self) -> Family {
        match self {
            FamilyConfig::Gbm { drift, vol } => Family::GeometricBM { drift, vol },
            FamilyConfig::Ou {
                reversion_speed,
                level,
                vol,
            } => Family::OrnsteinUhlenbeck {
                reversion_speed,
                level,
                vol,
            },
        }
    }
}

impl RewardConfig {
    pub fn reward(self) -> Reward {
        match self {
            RewardConfig::Zero => Reward::Zero,
            RewardConfig::Affine { slope, intercept } => Reward::Affine { slope, intercept },
            RewardConfig::Power { coef, exponent } => Reward::Power { coef, exponent },
        }
    }
}
