//! Grid value iteration for the alternating optimal stopping problems.
//!
//! Each regime's diffusion is approximated by a birth-death Markov chain on
//! a grid that is uniform in z (z = ln x for multiplicative dynamics, z = x
//! otherwise). The running reward is replaced by the discrete reward that
//! makes the no-switch value g an exact fixed point of the chain, so the
//! iteration starts from the discrete counterparts of g₁ and g₀. Each outer
//! step solves two discrete obstacle problems by policy iteration.

use thiserror::Error;

use crate::majorant::{MajorantError, Parts};
use crate::model::{BoundaryKind, Family, Regime, ValidatedProblem};
use crate::noswitch::NoSwitchError;
use crate::solver::Solution;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("transition weights are invalid at x = {x} ({reason})")]
    SchemeUnstable { x: f64, reason: String },
    #[error("grid needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error(transparent)]
    Majorant(#[from] MajorantError),
    #[error(transparent)]
    NoSwitch(#[from] NoSwitchError),
    #[error("policy iteration did not settle for the {0} regime")]
    PolicyIteration(Regime),
}

/// How grid nodes are spaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Logarithmic,
    Uniform,
}

/// One-step transition of one regime's chain at an interior node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub up: f64,
    pub down: f64,
    /// 1/(1 + αΔt).
    pub discount: f64,
    /// Discrete running reward times Δt, already discounted.
    pub reward: f64,
}

/// Nodes and transition weights for both regimes.
#[derive(Debug, Clone)]
pub struct GridScheme {
    pub spacing: Spacing,
    pub nodes: Vec<f64>,
    /// Interior transitions per regime, indexed by node (ends unused).
    pub steps: [Vec<Step>; 2],
    /// No-switch values per regime at the nodes.
    pub g: [Vec<f64>; 2],
    /// Switching costs H(·, r) into regime r at the nodes.
    pub cost_into: [Vec<f64>; 2],
    /// Whether each end node is absorbing (value zero) rather than truncated.
    pub absorbing: [bool; 2],
}

impl GridScheme {
    /// Builds a grid of `count` nodes over the problem window.
    pub fn new(problem: &ValidatedProblem, count: usize) -> Result<Self, OracleError> {
        if count < 3 {
            return Err(OracleError::TooFewNodes(count));
        }
        let parts = Parts::new(problem)?;
        Self::from_parts(&parts, count)
    }

    pub fn from_parts(parts: &Parts, count: usize) -> Result<Self, OracleError> {
        if count < 3 {
            return Err(OracleError::TooFewNodes(count));
        }
        let problem = parts.problem();
        let (lo, hi) = problem.window();
        let multiplicative = [&problem.closed.family, &problem.open.family]
            .iter()
            .all(|f| matches!(f, Family::GeometricBM { .. }));
        let spacing = if multiplicative && lo > 0.0 {
            Spacing::Logarithmic
        } else {
            Spacing::Uniform
        };
        let (z0, z1) = match spacing {
            Spacing::Logarithmic => (lo.ln(), hi.ln()),
            Spacing::Uniform => (lo, hi),
        };
        let h = (z1 - z0) / (count - 1) as f64;
        let to_x = |z: f64| match spacing {
            Spacing::Logarithmic => z.exp(),
            Spacing::Uniform => z,
        };
        let nodes: Vec<f64> = (0..count).map(|i| to_x(z0 + h * i as f64)).collect();
        let iv = &problem.interval;
        let absorbing = [
            iv.lower_kind == BoundaryKind::Absorbing && lo <= iv.lower,
            iv.upper_kind == BoundaryKind::Absorbing && hi >= iv.upper,
        ];
        let alpha = problem.discount;

        let mut g = [vec![0.0; count], vec![0.0; count]];
        let mut steps = [Vec::with_capacity(count), Vec::with_capacity(count)];
        for r in Regime::BOTH {
            let gv = parts.no_switch(r);
            for (i, &x) in nodes.iter().enumerate() {
                let end = (i == 0 && absorbing[0]) || (i == count - 1 && absorbing[1]);
                g[r.index()][i] = if end { 0.0 } else { gv.value(x)? };
            }
            let fam = &problem.regime(r).family;
            for (i, &x) in nodes.iter().enumerate() {
                if i == 0 || i == count - 1 {
                    steps[r.index()].push(Step {
                        up: 0.0,
                        down: 0.0,
                        discount: 1.0,
                        reward: 0.0,
                    });
                    continue;
                }
                let (m, s) = (fam.drift(x), fam.vol(x));
                let (b, v) = match spacing {
                    Spacing::Logarithmic => (m / x - 0.5 * s * s / (x * x), s / x),
                    Spacing::Uniform => (m, s),
                };
                let s2 = v * v;
                let (up, down, dt) = if h * b.abs() <= s2 {
                    let dt = h * h / s2;
                    (0.5 * (1.0 + h * b / s2), 0.5 * (1.0 - h * b / s2), dt)
                } else {
                    let q = s2 + h * b.abs();
                    (
                        (0.5 * s2 + h * b.max(0.0)) / q,
                        (0.5 * s2 + h * (-b).max(0.0)) / q,
                        h * h / q,
                    )
                };
                if !(up >= 0.0 && down >= 0.0 && dt.is_finite() && dt > 0.0) {
                    return Err(OracleError::SchemeUnstable {
                        x,
                        reason: format!("up = {up}, down = {down}, dt = {dt}"),
                    });
                }
                let disc = 1.0 / (1.0 + alpha * dt);
                let gi = &g[r.index()];
                // reward making g a fixed point: g = disc·(fΔt + up g₊ + down g₋)
                let reward = gi[i] - disc * (up * gi[i + 1] + down * gi[i - 1]);
                steps[r.index()].push(Step {
                    up,
                    down,
                    discount: disc,
                    reward,
                });
            }
        }
        let cost_into = [
            nodes.iter().map(|&x| problem.cost_close.eval(x)).collect(),
            nodes.iter().map(|&x| problem.cost_open.eval(x)).collect(),
        ];
        Ok(GridScheme {
            spacing,
            nodes,
            steps,
            g,
            cost_into,
            absorbing,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Piecewise-linear interpolation in the grid coordinate.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let n = self.nodes.len();
        let z = |x: f64| match self.spacing {
            Spacing::Logarithmic => x.ln(),
            Spacing::Uniform => x,
        };
        let i = self.nodes.partition_point(|&v| v <= x).clamp(1, n - 1);
        let (za, zb) = (z(self.nodes[i - 1]), z(self.nodes[i]));
        let t = ((z(x) - za) / (zb - za)).clamp(0.0, 1.0);
        values[i - 1] + t * (values[i] - values[i - 1])
    }

    fn is_absorbing(&self, i: usize) -> bool {
        (i == 0 && self.absorbing[0]) || (i + 1 == self.nodes.len() && self.absorbing[1])
    }

    /// Solves V = max(obstacle, continuation) for regime `r` by policy
    /// iteration, warm-started from `stop`.
    fn obstacle_problem(&self, r: Regime, obstacle: &[f64], stop: &mut [bool]) -> Result<Vec<f64>, OracleError> {
        let n = self.nodes.len();
        let st = &self.steps[r.index()];
        let g = &self.g[r.index()];
        let mut v = vec![0.0; n];
        for _ in 0..n + 2 {
            // tridiagonal system: a_i v_{i-1} + b_i v_i + c_i v_{i+1} = d_i
            let mut a = vec![0.0; n];
            let mut b = vec![1.0; n];
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 0..n {
                if self.is_absorbing(i) {
                    d[i] = 0.0;
                } else if i == 0 || i == n - 1 {
                    d[i] = g[i].max(obstacle[i]);
                } else if stop[i] {
                    d[i] = obstacle[i];
                } else {
                    a[i] = -st[i].discount * st[i].down;
                    c[i] = -st[i].discount * st[i].up;
                    d[i] = st[i].reward;
                }
            }
            thomas(&a, &mut b, &c, &mut d);
            v.copy_from_slice(&d);
            let mut changed = false;
            for i in 1..n - 1 {
                if self.is_absorbing(i) {
                    continue;
                }
                let cont = st[i].reward + st[i].discount * (st[i].up * v[i + 1] + st[i].down * v[i - 1]);
                let want = obstacle[i] > cont;
                if want != stop[i] {
                    // only switch on a strict improvement to avoid cycling on ties
                    if want || cont > obstacle[i] {
                        stop[i] = want;
                        changed = true;
                    }
                }
            }
            if !changed {
                return Ok(v);
            }
        }
        Err(OracleError::PolicyIteration(r))
    }
}

fn thomas(a: &[f64], b: &mut [f64], c: &[f64], d: &mut [f64]) {
    let n = d.len();
    for i in 1..n {
        let m = a[i] / b[i - 1];
        b[i] -= m * c[i - 1];
        d[i] -= m * d[i - 1];
    }
    d[n - 1] /= b[n - 1];
    for i in (0..n - 1).rev() {
        d[i] = (d[i] - c[i] * d[i + 1]) / b[i];
    }
}

/// Outcome of value iteration.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub iterations: usize,
    pub converged: bool,
    /// Open-regime iterate w_n at the nodes.
    pub w: Vec<f64>,
    /// Closed-regime iterate y_n at the nodes.
    pub y: Vec<f64>,
    /// Sup-norm increments per outer step.
    pub increments: Vec<f64>,
    /// Whether every step was nondecreasing nodewise (to 1e-12 relative).
    pub monotone: bool,
    /// Most negative nodewise increment seen.
    pub worst_decrease: f64,
}

impl IterationReport {
    pub fn values(&self, r: Regime) -> &[f64] {
        match r {
            Regime::Closed => &self.y,
            Regime::Open => &self.w,
        }
    }

    pub fn value_at(&self, scheme: &GridScheme, r: Regime, x: f64) -> f64 {
        scheme.interpolate(self.values(r), x)
    }

    /// Relative gaps |grid − solution|/|solution| at the probes, per regime.
    pub fn compare(
        &self,
        scheme: &GridScheme,
        solution: &Solution,
        probes: &[f64],
    ) -> Result<Vec<ProbeGap>, crate::solver::SolveError> {
        let mut out = Vec::new();
        for &x in probes {
            for r in Regime::BOTH {
                let exact = solution.evaluate_value(r, x)?;
                let grid = self.value_at(scheme, r, x);
                out.push(ProbeGap {
                    regime: r,
                    x,
                    grid,
                    exact,
                    relative: (grid - exact).abs() / exact.abs().max(1e-300),
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeGap {
    pub regime: Regime,
    pub x: f64,
    pub grid: f64,
    pub exact: f64,
    pub relative: f64,
}

/// Jacobi iteration w_n = S₁(y_{n−1} − H(·,0)), y_n = S₀(w_{n−1} − H(·,1)),
/// starting from w₀ = g₁ and y₀ = g₀, until the sup increment drops below `tol`.
pub fn value_iteration(scheme: &GridScheme, n_max: usize, tol: f64) -> Result<IterationReport, OracleError> {
    let n = scheme.len();
    let mut w = scheme.g[1].clone();
    let mut y = scheme.g[0].clone();
    let mut stop = [vec![false; n], vec![false; n]];
    let mut increments = Vec::new();
    let mut monotone = true;
    let mut worst = 0.0f64;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=n_max {
        iterations = it;
        let ob1: Vec<f64> = (0..n).map(|i| y[i] - scheme.cost_into[0][i]).collect();
        let ob0: Vec<f64> = (0..n).map(|i| w[i] - scheme.cost_into[1][i]).collect();
        let (s0, s1) = stop.split_at_mut(1);
        let w_new = scheme.obstacle_problem(Regime::Open, &ob1, &mut s1[0])?;
        let y_new = scheme.obstacle_problem(Regime::Closed, &ob0, &mut s0[0])?;
        let mut inc = 0.0f64;
        for (new, old) in [(&w_new, &w), (&y_new, &y)] {
            for i in 0..n {
                let d = new[i] - old[i];
                inc = inc.max(d.abs());
                if d < -1e-12 * old[i].abs().max(1.0) {
                    monotone = false;
                }
                worst = worst.min(d);
            }
        }
        w = w_new;
        y = y_new;
        increments.push(inc);
        if inc < tol {
            converged = true;
            break;
        }
    }
    Ok(IterationReport {
        iterations,
        converged,
        w,
        y,
        increments,
        monotone,
        worst_decrease: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_problem, Cost, Interval, RegimeSpec, Reward, SwitchingProblem};
    use crate::solver::{solve, SolverOptions};

    fn example1() -> ValidatedProblem {
        validate_problem(SwitchingProblem {
            closed: RegimeSpec::new(Regime::Closed, Family::GeometricBM { drift: 0.01, vol: 0.25 }),
            open: RegimeSpec::new(Regime::Open, Family::GeometricBM { drift: 0.0, vol: 0.25 }),
            reward_closed: Reward::Zero,
            reward_open: Reward::Affine {
                slope: 1.0,
                intercept: -0.4,
            },
            cost_open: Cost::Constant(2.0),
            cost_close: Cost::Constant(2.0),
            discount: 0.05,
            interval: Interval::positive_half_line(),
            window: None,
        })
        .unwrap()
    }

    #[test]
    fn weights_are_probabilities_and_start_is_g() {
        let p = example1();
        let s = GridScheme::new(&p, 400).unwrap();
        for r in Regime::BOTH {
            for st in &s.steps[r.index()][1..399] {
                assert!(st.up >= 0.0 && st.down >= 0.0);
                assert!((st.up + st.down - 1.0).abs() < 1e-14);
                assert!(st.discount < 1.0);
            }
        }
        let rep = value_iteration(&s, 0, 1e-9).unwrap();
        assert_eq!(rep.w, s.g[1]);
        assert_eq!(rep.y, s.g[0]);
    }

    #[test]
    fn example_one_matches_solver() {
        let p = example1();
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        let s = GridScheme::new(&p, 2000).unwrap();
        let rep = value_iteration(&s, 10_000, 1e-10).unwrap();
        assert!(rep.converged && rep.monotone);
        for g in rep.compare(&s, &sol, &[0.1, 0.3, 0.6, 1.0, 2.0]).unwrap() {
            assert!(g.relative <= 0.01, "{g:?}");
        }
    }

    #[test]
    fn thomas_solves_tridiagonal() {
        let a = [0.0, -1.0, -1.0];
        let mut b = [2.0, 2.0, 2.0];
        let c = [-1.0, -1.0, 0.0];
        let mut d = [1.0, 0.0, 1.0];
        thomas(&a, &mut b, &c, &mut d);
        for v in d {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }
}
