//! The four subcommands and the files they write.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use optswitch::majorant::{classify_boundary_limits, BoundaryLimits, LimitAudit, Line, Parts};
use optswitch::model::{Regime, ThresholdPolicy, ValidatedProblem};
use optswitch::oracle::{simulate_policy, value_iteration, GridScheme, SimulationConfig};
use optswitch::solver::{solve, solve_simultaneous, Solution, SolveError};
use serde::Serialize;

use crate::config::{MethodConfig, RunConfig, SpacingConfig};
use crate::error::CliError;

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Oracle grid nodes for `verify`, curve samples otherwise.
    pub grid: Option<usize>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub probes: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Verify,
    Simulate,
    Curves,
}

/// A loaded config with its validated problem.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub path: PathBuf,
    pub problem: ValidatedProblem,
}

impl Run {
    pub fn load(path: &Path, command: Command, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = RunConfig::load(path)?;
        let o = overrides;
        if let Some(dir) = &o.out {
            config.output.dir = dir.clone();
        }
        if let Some(seed) = o.seed {
            config.oracle.seed = seed;
        }
        if let Some(n) = o.grid {
            match command {
                Command::Verify => config.oracle.grid = n,
                _ => config.output.points = n,
            }
        }
        if let Some(paths) = o.paths {
            config.oracle.paths = paths;
        }
        if let Some(dt) = o.dt {
            config.oracle.dt = dt;
        }
        if let Some(probes) = &o.probes {
            config.oracle.probes = probes.clone();
        }
        config.check().map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })?;
        let problem = config.validated_problem(path)?;
        Ok(Self {
            config,
            path: path.to_path_buf(),
            problem,
        })
    }

    fn config_error(&self, message: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            message: message.into(),
        }
    }

    pub fn solve(&self) -> Result<Solved, CliError> {
        let opts = self.config.solver_options();
        let result = match self.config.solver.method {
            MethodConfig::FixedPoint => solve(&self.problem, &opts),
            MethodConfig::Simultaneous => solve_simultaneous(&self.problem, &opts),
        };
        match result {
            Ok(solution) => Ok(Solved {
                limits: solution.limits.clone(),
                kind: SolvedKind::Switching(Box::new(solution)),
            }),
            Err(SolveError::NoSwitchEverywhere) => {
                let parts = Parts::new(&self.problem).map_err(SolveError::from)?;
                let limits = classify_boundary_limits(&parts).map_err(SolveError::from)?;
                Ok(Solved {
                    limits,
                    kind: SolvedKind::NeverSwitch(Box::new(parts)),
                })
            }
            Err(e) => Err(e.into()),
        }
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        let dir = self.config.output.dir.as_path();
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(dir)
    }

    /// Curve sample states: the configured range, or a neighbourhood of the
    /// thresholds (of the search window when nothing switches).
    pub fn curve_states(&self, solved: &Solved) -> Result<Vec<f64>, CliError> {
        let out = &self.config.output;
        let iv = &self.problem.interval;
        let (wlo, whi) = self.problem.window();
        let (a, b) = match &solved.kind {
            SolvedKind::Switching(s) if s.switches == [true, true] => (s.a_star, s.b_star),
            _ if wlo > 0.0 => {
                let mid = (wlo * whi).sqrt();
                (mid / 4.0, mid * 4.0)
            }
            _ => {
                let (mid, quarter) = (0.5 * (wlo + whi), 0.25 * (whi - wlo));
                (mid - 0.5 * quarter, mid + 0.5 * quarter)
            }
        };
        let geometric_default = iv.lower >= 0.0 && a > 0.0;
        let spacing = out.spacing.unwrap_or(if geometric_default {
            SpacingConfig::Log
        } else {
            SpacingConfig::Uniform
        });
        let span = b - a;
        let (lo, hi) = match spacing {
            SpacingConfig::Log if geometric_default => (a / 4.0, b * 4.0),
            _ => (a - span, b + span),
        };
        let lo = out.lower.unwrap_or(lo.max(iv.lower + 1e-3 * span));
        let hi = out.upper.unwrap_or(hi.min(iv.upper - 1e-3 * span));
        if !(lo > iv.lower && hi < iv.upper && lo < hi) {
            return Err(self.config_error(format!(
                "curve range ({lo}, {hi}) must lie inside ({}, {})",
                iv.lower, iv.upper
            )));
        }
        let n = out.points;
        let t = |i: usize| i as f64 / (n - 1) as f64;
        Ok(match spacing {
            SpacingConfig::Log => {
                if lo <= 0.0 {
                    return Err(self.config_error("output.spacing = \"log\" needs a positive curve range"));
                }
                (0..n).map(|i| lo * (hi / lo).powf(t(i))).collect()
            }
            SpacingConfig::Uniform => (0..n).map(|i| lo + (hi - lo) * t(i)).collect(),
        })
    }

    /// Writes values.csv and transformed.csv; returns their paths.
    pub fn write_curves(&self, solved: &Solved) -> Result<Vec<PathBuf>, CliError> {
        let xs = self.curve_states(solved)?;
        let dir = self.out_dir()?;
        let mut values = String::from("x,v0,v1,g0,g1\n");
        for &x in &xs {
            let row = [
                x,
                solved.value(Regime::Closed, x)?,
                solved.value(Regime::Open, x)?,
                solved.no_switch(Regime::Closed, x)?,
                solved.no_switch(Regime::Open, x)?,
            ];
            push_row(&mut values, &row, None);
        }
        let mut transformed = String::from("y,R,W,regime\n");
        for r in Regime::BOTH {
            let lines = solved.lines()?;
            let t = solved
                .parts()
                .obstacle(r, lines[r.other().index()], solved.coupling())
                .transform()
                .map_err(SolveError::from)?;
            let line = lines[r.index()];
            for &x in &xs {
                let jt = t.jet_at_state(x).map_err(SolveError::from)?;
                let w = line.anchor.value + line.slope * (jt.y - line.anchor.y);
                push_row(&mut transformed, &[jt.y, jt.r, w], Some(r.index()));
            }
        }
        let files = [("values.csv", values), ("transformed.csv", transformed)];
        files
            .into_iter()
            .map(|(name, text)| write_file(&dir.join(name), &text))
            .collect()
    }

    pub fn write_summary(&self, solved: &Solved) -> Result<PathBuf, CliError> {
        let dir = self.out_dir()?;
        write_json(&dir.join("summary.json"), &solved.summary())
    }

    pub fn verify(&self, solved: &Solved) -> Result<VerifyReport, CliError> {
        let o = &self.config.oracle;
        if o.probes.is_empty() {
            return Err(self.config_error("verify needs at least one probe state (oracle.probes or --probes)"));
        }
        let scheme = GridScheme::new(&self.problem, o.grid).map_err(CliError::other)?;
        let rep = value_iteration(&scheme, o.vi_max_iter, o.vi_tol).map_err(CliError::other)?;
        let mut exact = Vec::new();
        for &x in &o.probes {
            for r in Regime::BOTH {
                exact.push((r, x, solved.value(r, x)?));
            }
        }
        let scale = exact.iter().map(|e| e.2.abs()).fold(0.0, f64::max);
        let gaps: Vec<GapRow> = exact
            .iter()
            .map(|&(r, x, v)| {
                let grid = rep.value_at(&scheme, r, x);
                GapRow {
                    regime: r.name(),
                    x,
                    grid,
                    exact: v,
                    relative: (grid - v).abs() / v.abs().max(1e-3 * scale).max(f64::MIN_POSITIVE),
                }
            })
            .collect();
        let worst = gaps.iter().map(|g| g.relative).fold(0.0, f64::max);
        let grid = GridReport {
            nodes: scheme.len(),
            iterations: rep.iterations,
            converged: rep.converged,
            monotone: rep.monotone,
            tol: o.gap_tol,
            worst,
            pass: rep.converged && worst <= o.gap_tol,
            gaps,
        };
        let monte_carlo = self.simulate_probes(solved)?;
        let mc_pass = monte_carlo.iter().all(|m| m.z.abs() <= o.z_max);
        Ok(VerifyReport {
            pass: grid.pass && mc_pass,
            z_max: o.z_max,
            grid,
            monte_carlo,
        })
    }

    pub fn simulate_probes(&self, solved: &Solved) -> Result<Vec<McRow>, CliError> {
        let o = &self.config.oracle;
        if o.probes.is_empty() {
            return Err(self.config_error("no probe states (oracle.probes or --probes)"));
        }
        let policy = solved.policy(&self.problem)?;
        let config = SimulationConfig {
            paths: o.paths,
            dt: o.dt,
            horizon: o.horizon,
            seed: o.seed,
        };
        let mut rows = Vec::new();
        for &x in &o.probes {
            for &start in o.start.regimes() {
                let est = simulate_policy(&self.problem, policy, x, start, &config).map_err(CliError::other)?;
                let exact = solved.value(start, x)?;
                let diff = est.mean - exact;
                let z = if est.std_error > 0.0 {
                    diff / est.std_error
                } else if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY.copysign(diff)
                };
                rows.push(McRow {
                    start: start.name(),
                    x,
                    mean: est.mean,
                    std_error: est.std_error,
                    exact,
                    z,
                    paths: est.paths,
                    dt: est.dt,
                    horizon: est.horizon,
                    seed: est.seed,
                    mean_switches: est.mean_switches,
                    absorbed_fraction: est.absorbed_fraction,
                });
            }
        }
        Ok(rows)
    }

    pub fn write_report<T: Serialize>(&self, name: &str, report: &T) -> Result<PathBuf, CliError> {
        let dir = self.out_dir()?;
        write_json(&dir.join(name), report)
    }
}

#[derive(Debug, Clone)]
pub enum SolvedKind {
    Switching(Box<Solution>),
    /// Neither regime ever switches; values are the no-switch values.
    NeverSwitch(Box<Parts>),
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub kind: SolvedKind,
    pub limits: BoundaryLimits,
}

impl Solved {
    pub fn solution(&self) -> Option<&Solution> {
        match &self.kind {
            SolvedKind::Switching(s) => Some(s),
            SolvedKind::NeverSwitch(_) => None,
        }
    }

    pub fn parts(&self) -> &Parts {
        match &self.kind {
            SolvedKind::Switching(s) => s.parts(),
            SolvedKind::NeverSwitch(p) => p,
        }
    }

    fn coupling(&self) -> optswitch::majorant::Coupling {
        self.solution().map(|s| s.coupling).unwrap_or_default()
    }

    /// Majorant lines [W₀, W₁]; flat anchor lines when nothing switches.
    pub fn lines(&self) -> Result<[Line; 2], CliError> {
        Ok(match &self.kind {
            SolvedKind::Switching(s) => [s.w0_line, s.w1_line],
            SolvedKind::NeverSwitch(p) => {
                let flat = |r: Regime| -> Result<Line, CliError> {
                    Ok(Line {
                        regime: r,
                        slope: 0.0,
                        anchor: p.anchor(r).map_err(SolveError::from)?,
                    })
                };
                [flat(Regime::Closed)?, flat(Regime::Open)?]
            }
        })
    }

    pub fn value(&self, r: Regime, x: f64) -> Result<f64, CliError> {
        match &self.kind {
            SolvedKind::Switching(s) => Ok(s.evaluate_value(r, x)?),
            SolvedKind::NeverSwitch(_) => self.no_switch(r, x),
        }
    }

    pub fn no_switch(&self, r: Regime, x: f64) -> Result<f64, CliError> {
        match &self.kind {
            SolvedKind::Switching(s) => Ok(s.no_switch_value(r, x)?),
            SolvedKind::NeverSwitch(p) => p.no_switch(r).value(x).map_err(CliError::other),
        }
    }

    /// The optimal policy; a regime that never switches gets a threshold at
    /// its endpoint of the interval, which no path reaches.
    pub fn policy(&self, problem: &ValidatedProblem) -> Result<ThresholdPolicy, CliError> {
        let iv = &problem.interval;
        let never_a = if iv.lower.is_finite() {
            iv.lower + (iv.lower.abs() * 1e-15).max(f64::MIN_POSITIVE)
        } else {
            f64::MIN
        };
        let never_b = if iv.upper.is_finite() {
            iv.upper - (iv.upper.abs() * 1e-15).max(f64::MIN_POSITIVE)
        } else {
            f64::MAX
        };
        let (a, b) = match self.solution() {
            Some(s) => (
                if s.switches[1] { s.a_star } else { never_a },
                if s.switches[0] { s.b_star } else { never_b },
            ),
            None => (never_a, never_b),
        };
        ThresholdPolicy::new(a, b, iv).map_err(CliError::other)
    }

    pub fn summary(&self) -> Summary {
        let limits = LimitsSummary {
            l_c: self.limits.l_c.to_string(),
            l_d: self.limits.l_d.to_string(),
            audit_c: self.limits.audit_c.as_ref().map(AuditRows::from),
            audit_d: self.limits.audit_d.as_ref().map(AuditRows::from),
        };
        match self.solution() {
            Some(s) => Summary {
                switching: true,
                a_star: s.switches[1].then_some(s.a_star),
                b_star: s.switches[0].then_some(s.b_star),
                beta0_star: s.beta0_star,
                beta1_star: s.beta1_star,
                switches: Switches {
                    closed: s.switches[0],
                    open: s.switches[1],
                },
                method: s.method.to_string(),
                coupling: s.coupling.to_string(),
                limits,
                residual: s.residual,
                iterations: s.iterations,
            },
            None => Summary {
                switching: false,
                a_star: None,
                b_star: None,
                beta0_star: 0.0,
                beta1_star: 0.0,
                switches: Switches {
                    closed: false,
                    open: false,
                },
                method: "none".into(),
                coupling: self.coupling().to_string(),
                limits,
                residual: 0.0,
                iterations: 0,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    /// Whether any regime has a switching region.
    pub switching: bool,
    pub a_star: Option<f64>,
    pub b_star: Option<f64>,
    pub beta0_star: f64,
    pub beta1_star: f64,
    pub switches: Switches,
    pub method: String,
    pub coupling: String,
    pub limits: LimitsSummary,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Switches {
    pub closed: bool,
    pub open: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitsSummary {
    pub l_c: String,
    pub l_d: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_c: Option<AuditRows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_d: Option<AuditRows>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditRows {
    pub states: Vec<f64>,
    pub reward_ratio: Vec<f64>,
    pub fundamental_ratio: Vec<f64>,
}

impl From<&LimitAudit> for AuditRows {
    fn from(a: &LimitAudit) -> Self {
        Self {
            states: a.states.clone(),
            reward_ratio: a.ratios[0].clone(),
            fundamental_ratio: a.ratios[1].clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub regime: &'static str,
    pub x: f64,
    pub grid: f64,
    pub exact: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub nodes: usize,
    pub iterations: usize,
    pub converged: bool,
    pub monotone: bool,
    pub tol: f64,
    pub worst: f64,
    pub pass: bool,
    pub gaps: Vec<GapRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct McRow {
    pub start: &'static str,
    pub x: f64,
    pub mean: f64,
    pub std_error: f64,
    pub exact: f64,
    pub z: f64,
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub mean_switches: f64,
    pub absorbed_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub z_max: f64,
    pub grid: GridReport,
    pub monte_carlo: Vec<McRow>,
}

fn push_row(out: &mut String, values: &[f64], regime: Option<usize>) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v:.16e}");
    }
    if let Some(r) = regime {
        let _ = write!(out, ",{r}");
    }
    out.push('\n');
}

fn write_file(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(path.to_path_buf())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::other)?;
    text.push('\n');
    write_file(path, &text)
}

/// Renders the boundary-limit sequences for a user to audit.
pub fn describe_limits(limits: &BoundaryLimits) -> String {
    let mut s = format!("l_c = {}, l_d = {}", limits.l_c, limits.l_d);
    for (name, audit) in [("l_c", &limits.audit_c), ("l_d", &limits.audit_d)] {
        if let Some(a) = audit {
            let _ = write!(s, "\n{name} sequence (state: reward ratio, fundamental ratio): {a}");
        }
    }
    s
}
