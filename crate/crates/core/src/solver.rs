//! Coupled threshold solver and value-function assembly.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::majorant::{
    classify_boundary_limits, tangency, Anchor, BoundaryLimit, BoundaryLimits, Coupling, Line, MajorantError,
    NoSwitchSignal, Parts, Tangency, TangencyOutcome,
};
use crate::model::{Regime, ValidatedProblem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Majorant(#[from] MajorantError),
    #[error("the value function is infinite (l_c = {}, l_d = {})", .limits.l_c, .limits.l_d)]
    InfiniteValue { limits: Box<BoundaryLimits> },
    #[error("a strictly positive finite boundary limit (l_c = {}, l_d = {}) is not supported", .limits.l_c, .limits.l_d)]
    UnsupportedLimit { limits: Box<BoundaryLimits> },
    #[error("switching is never optimal in either regime: the values are the no-switch values")]
    NoSwitchEverywhere,
    #[error("no convergence after {iterations} iterations (last β₁ change {last_change:e})")]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        trace: Vec<IterationRecord>,
    },
    #[error("thresholds are out of order: a* = {a} ≥ b* = {b}")]
    OrderingViolation { a: f64, b: f64 },
    #[error("state {x} lies outside ({lower}, {upper})")]
    OutOfDomain { x: f64, lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative tolerance on successive β₁ iterates.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting slope β₁′; a scale-matched guess when absent.
    pub initial_beta1: Option<f64>,
    /// Starting thresholds for the simultaneous method.
    pub initial_thresholds: Option<(f64, f64)>,
    pub coupling: Coupling,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            initial_beta1: None,
            initial_thresholds: None,
            coupling: Coupling::default(),
        }
    }
}

/// One sweep of the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub beta1_in: f64,
    pub b: f64,
    pub beta0: f64,
    pub a: f64,
    pub beta1_out: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    FixedPoint,
    Simultaneous,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::FixedPoint => "fixed-point",
            Method::Simultaneous => "simultaneous",
        })
    }
}

/// Thresholds, majorant lines and value functions of a solved problem.
#[derive(Debug, Clone)]
pub struct Solution {
    parts: Arc<Parts>,
    pub coupling: Coupling,
    pub method: Method,
    pub a_star: f64,
    pub b_star: f64,
    pub beta0_star: f64,
    pub beta1_star: f64,
    pub w0_line: Line,
    pub w1_line: Line,
    /// Whether each regime has a switching region.
    pub switches: [bool; 2],
    pub limits: BoundaryLimits,
    pub iterations: usize,
    /// Largest tangency residual over both regimes, relative to the chord rise.
    pub residual: f64,
    pub trace: Vec<IterationRecord>,
}

struct Prepared {
    parts: Arc<Parts>,
    limits: BoundaryLimits,
    anchors: [Anchor; 2],
}

fn prepare(problem: &ValidatedProblem) -> Result<Prepared, SolveError> {
    let parts = Arc::new(Parts::new(problem)?);
    let limits = classify_boundary_limits(&parts)?;
    if limits.any_infinite() {
        return Err(SolveError::InfiniteValue {
            limits: Box::new(limits),
        });
    }
    if matches!(limits.l_c, BoundaryLimit::FinitePositive(_)) || matches!(limits.l_d, BoundaryLimit::FinitePositive(_))
    {
        return Err(SolveError::UnsupportedLimit {
            limits: Box::new(limits),
        });
    }
    let anchors = [parts.anchor(Regime::Closed)?, parts.anchor(Regime::Open)?];
    Ok(Prepared { parts, limits, anchors })
}

/// Result of one regime's tangency problem: a line plus its threshold, or
/// the anchor line when the regime never switches.
#[derive(Debug, Clone, Copy)]
struct Side {
    line: Line,
    threshold: f64,
    switches: bool,
    residual: f64,
}

fn side(parts: &Parts, regime: Regime, other: Line, coupling: Coupling) -> Result<Side, SolveError> {
    let t = parts.obstacle(regime, other, coupling).transform()?;
    let iv = &parts.problem().interval;
    let (lo, hi) = (iv.lower, iv.upper);
    Ok(match tangency(&t)? {
        TangencyOutcome::Touch(Tangency {
            slope, x, y, anchor, residual, ..
        }) => Side {
            line: Line { regime, slope, anchor },
            threshold: x,
            switches: true,
            residual: residual.abs() / (slope * (y - anchor.y)).abs(),
        },
        TangencyOutcome::NoSwitch(NoSwitchSignal { .. }) => Side {
            line: Line {
                regime,
                slope: 0.0,
                anchor: t.anchor(),
            },
            threshold: if regime == Regime::Closed { hi } else { lo },
            switches: false,
            residual: 0.0,
        },
    })
}

fn initial_beta1(parts: &Parts) -> Result<f64, SolveError> {
    let (lo, hi) = parts.scan_range();
    let mid = if parts.geometric_scan() { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
    let h = parts.problem().cost_close.eval(mid);
    let phi = parts.fundamentals(Regime::Open).phi(mid).map_err(MajorantError::from)?;
    Ok(-h / phi)
}

fn line(regime: Regime, slope: f64, anchor: Anchor) -> Line {
    Line { regime, slope, anchor }
}

/// Alternates the two tangency problems until β₁ is stationary.
pub fn solve(problem: &ValidatedProblem, options: &SolverOptions) -> Result<Solution, SolveError> {
    let prep = prepare(problem)?;
    let parts = &prep.parts;
    let coupling = options.coupling;
    let mut beta1 = match options.initial_beta1 {
        Some(b) => b,
        None => initial_beta1(parts)?,
    };
    let mut trace = Vec::new();
    let mut last_change = f64::INFINITY;
    for it in 1..=options.max_iter {
        let s0 = side(parts, Regime::Closed, line(Regime::Open, beta1, prep.anchors[1]), coupling)?;
        let s1 = side(parts, Regime::Open, s0.line, coupling)?;
        let proposed = s1.line.slope;
        trace.push(IterationRecord {
            beta1_in: beta1,
            b: s0.threshold,
            beta0: s0.line.slope,
            a: s1.threshold,
            beta1_out: proposed,
        });
        let change = proposed - beta1;
        if change.abs() <= options.tol * proposed.abs() || change == 0.0 {
            let s0 = side(parts, Regime::Closed, s1.line, coupling)?;
            return finish(&prep, coupling, Method::FixedPoint, s0, s1, it, trace);
        }
        if !s1.switches {
            // the anchor line is exact; no damping needed
            last_change = change.abs();
            beta1 = 0.0;
            continue;
        }
        let mut step = change;
        let overshoot = (proposed.signum() != beta1.signum() && beta1 != 0.0)
            || proposed.abs() > 10.0 * beta1.abs().max(f64::MIN_POSITIVE);
        if overshoot && it > 1 {
            step *= 0.5;
        }
        beta1 += step;
        last_change = change.abs();
    }
    Err(SolveError::NonConvergence {
        iterations: options.max_iter,
        last_change,
        trace,
    })
}

fn finish(
    prep: &Prepared,
    coupling: Coupling,
    method: Method,
    s0: Side,
    s1: Side,
    iterations: usize,
    trace: Vec<IterationRecord>,
) -> Result<Solution, SolveError> {
    if !s0.switches && !s1.switches {
        return Err(SolveError::NoSwitchEverywhere);
    }
    let (a, b) = (s1.threshold, s0.threshold);
    if a >= b {
        return Err(SolveError::OrderingViolation { a, b });
    }
    Ok(Solution {
        parts: prep.parts.clone(),
        coupling,
        method,
        a_star: a,
        b_star: b,
        beta0_star: s0.line.slope,
        beta1_star: s1.line.slope,
        w0_line: s0.line,
        w1_line: s1.line,
        switches: [s0.switches, s1.switches],
        limits: prep.limits.clone(),
        iterations,
        residual: s0.residual.max(s1.residual),
        trace,
    })
}

/// Solves the pair of tangency equations in (a, b) jointly by damped
/// Newton, with the slopes eliminated through the chord formulas.
pub fn solve_simultaneous(problem: &ValidatedProblem, options: &SolverOptions) -> Result<Solution, SolveError> {
    let prep = prepare(problem)?;
    let parts = &prep.parts;
    let coupling = options.coupling;
    let (mut a, mut b) = match options.initial_thresholds {
        Some((a, b)) => (a, b),
        None => {
            let b1 = match options.initial_beta1 {
                Some(v) => v,
                None => initial_beta1(parts)?,
            };
            let s0 = side(parts, Regime::Closed, line(Regime::Open, b1, prep.anchors[1]), coupling)?;
            let s1 = side(parts, Regime::Open, s0.line, coupling)?;
            if !s0.switches || !s1.switches {
                // degenerate regimes have no tangency equation to solve jointly
                return solve(problem, options);
            }
            (s1.threshold, s0.threshold)
        }
    };
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    let sys = System { parts, prep: &prep, coupling };
    let mut res = sys.residuals(a, b)?;
    let mut trace = Vec::new();
    for it in 1..=options.max_iter {
        let (ha, hb) = (1e-7 * a.abs().max(1e-6), 1e-7 * b.abs().max(1e-6));
        let ra = sys.residuals(a + ha, b)?;
        let rb = sys.residuals(a, b + hb)?;
        let j = [
            [(ra.t0 - res.t0) / ha, (rb.t0 - res.t0) / hb],
            [(ra.t1 - res.t1) / ha, (rb.t1 - res.t1) / hb],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let da = -(j[1][1] * res.t0 - j[0][1] * res.t1) / det;
        let db = -(-j[1][0] * res.t0 + j[0][0] * res.t1) / det;
        let norm = res.t0.abs().max(res.t1.abs());
        let mut lambda = 1.0;
        let mut accepted = None;
        while lambda > 1e-6 {
            let (na, nb) = (a + lambda * da, b + lambda * db);
            let iv = &parts.problem().interval;
            if iv.lower < na && na < iv.upper && iv.lower < nb && nb < iv.upper {
                if let Ok(r) = sys.residuals(na, nb) {
                    if r.t0.abs().max(r.t1.abs()) < norm || norm < 1e-13 {
                        accepted = Some((na, nb, r));
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        let Some((na, nb, r)) = accepted else {
            break;
        };
        trace.push(IterationRecord {
            beta1_in: res.beta1,
            b: nb,
            beta0: r.beta0,
            a: na,
            beta1_out: r.beta1,
        });
        let step = (na - a).abs() / a.abs().max(1e-12) + (nb - b).abs() / b.abs().max(1e-12);
        a = na;
        b = nb;
        res = r;
        if step <= 1e-14 || res.t0.abs().max(res.t1.abs()) <= 1e-13 {
            if a >= b {
                return Err(SolveError::OrderingViolation { a, b });
            }
            return sys.solution(a, b, res, it, trace);
        }
    }
    let norm = res.t0.abs().max(res.t1.abs());
    if norm <= 1e-9 && a < b {
        let n = trace.len();
        return sys.solution(a, b, res, n, trace);
    }
    Err(SolveError::NonConvergence {
        iterations: options.max_iter,
        last_change: norm,
        trace,
    })
}

#[derive(Debug, Clone, Copy)]
struct Residuals {
    t0: f64,
    t1: f64,
    beta0: f64,
    beta1: f64,
}

struct System<'a> {
    parts: &'a Parts,
    prep: &'a Prepared,
    coupling: Coupling,
}

impl System<'_> {
    /// Tangency residuals, relative to the chord rise, with slopes chosen so both chords pass through the
    /// obstacles at b (regime 0) and a (regime 1). Each obstacle is affine in
    /// the opposing slope, so the two chord conditions form a 2×2 linear system.
    fn residuals(&self, a: f64, b: f64) -> Result<Residuals, SolveError> {
        let nb = self.parts.node(b)?;
        let na = self.parts.node(a)?;
        let chord = |node: &crate::majorant::Node, regime: Regime, other_slope: f64| {
            let other = line(regime.other(), other_slope, self.prep.anchors[regime.other().index()]);
            let t = self.parts.obstacle(regime, other, self.coupling).transform()?;
            let j = t.jet_at(node);
            let rise = j.r - t.anchor().value;
            Ok::<_, MajorantError>((rise / (j.y - t.anchor().y), t.tangency_residual(&j) / rise.abs()))
        };
        // β₀ = P₀ + Q₀ β₁ and β₁ = P₁ + Q₁ β₀
        let (p0, _) = chord(&nb, Regime::Closed, 0.0)?;
        let (q0, _) = chord(&nb, Regime::Closed, 1.0)?;
        let q0 = q0 - p0;
        let (p1, _) = chord(&na, Regime::Open, 0.0)?;
        let (q1, _) = chord(&na, Regime::Open, 1.0)?;
        let q1 = q1 - p1;
        let beta1 = (p1 + q1 * p0) / (1.0 - q1 * q0);
        let beta0 = p0 + q0 * beta1;
        let (_, t0) = chord(&nb, Regime::Closed, beta1)?;
        let (_, t1) = chord(&na, Regime::Open, beta0)?;
        Ok(Residuals { t0, t1, beta0, beta1 })
    }

    fn solution(
        &self,
        a: f64,
        b: f64,
        r: Residuals,
        iterations: usize,
        trace: Vec<IterationRecord>,
    ) -> Result<Solution, SolveError> {
        let [an0, an1] = self.prep.anchors;
        let s0 = Side {
            line: line(Regime::Closed, r.beta0, an0),
            threshold: b,
            switches: true,
            residual: r.t0.abs(),
        };
        let s1 = Side {
            line: line(Regime::Open, r.beta1, an1),
            threshold: a,
            switches: true,
            residual: r.t1.abs(),
        };
        finish(self.prep, self.coupling, Method::Simultaneous, s0, s1, iterations, trace)
    }
}

impl Solution {
    pub fn parts(&self) -> &Parts {
        &self.parts
    }

    pub fn problem(&self) -> &ValidatedProblem {
        self.parts.problem()
    }

    fn check(&self, x: f64) -> Result<(), SolveError> {
        let iv = &self.problem().interval;
        if x > iv.lower && x < iv.upper {
            Ok(())
        } else {
            Err(SolveError::OutOfDomain {
                x,
                lower: iv.lower,
                upper: iv.upper,
            })
        }
    }

    fn line_of(&self, r: Regime) -> &Line {
        match r {
            Regime::Closed => &self.w0_line,
            Regime::Open => &self.w1_line,
        }
    }

    /// Continuation value D·W(T) + g of regime `r`.
    pub fn continuation_value(&self, r: Regime, x: f64) -> Result<f64, SolveError> {
        self.check(x)?;
        let node = self.parts.node(x)?;
        let l = node.line_jet(self.line_of(r), Coupling::FullLine).v;
        Ok(l + node.g[r.index()].v)
    }

    /// Switching value: the obstacle plus g, i.e. the opposing continuation
    /// value less the switching cost.
    pub fn switching_value(&self, r: Regime, x: f64) -> Result<f64, SolveError> {
        self.check(x)?;
        let ob = self.parts.obstacle(r, *self.line_of(r.other()), self.coupling);
        let node = self.parts.node(x)?;
        Ok(ob.jet_at(&node).v + node.g[r.index()].v)
    }

    /// Whether `x` lies in the switching region of regime `r`; thresholds
    /// themselves belong to the continuation region.
    pub fn in_switching_region(&self, r: Regime, x: f64) -> bool {
        match r {
            Regime::Closed => self.switches[0] && x > self.b_star,
            Regime::Open => self.switches[1] && x < self.a_star,
        }
    }

    pub fn evaluate_value(&self, r: Regime, x: f64) -> Result<f64, SolveError> {
        if self.in_switching_region(r, x) {
            self.switching_value(r, x)
        } else {
            self.continuation_value(r, x)
        }
    }

    pub fn v0(&self, x: f64) -> Result<f64, SolveError> {
        self.evaluate_value(Regime::Closed, x)
    }

    pub fn v1(&self, x: f64) -> Result<f64, SolveError> {
        self.evaluate_value(Regime::Open, x)
    }

    pub fn no_switch_value(&self, r: Regime, x: f64) -> Result<f64, SolveError> {
        self.check(x)?;
        Ok(self.parts.no_switch(r).value(x).map_err(MajorantError::from)?)
    }

    /// Switching threshold of regime `r` (b* for closed, a* for open).
    pub fn threshold(&self, r: Regime) -> f64 {
        match r {
            Regime::Closed => self.b_star,
            Regime::Open => self.a_star,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_problem, Cost, Family, Interval, RegimeSpec, Reward, SwitchingProblem};
    use approx::assert_relative_eq;

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

    fn example2() -> ValidatedProblem {
        let ou = |level| Family::OrnsteinUhlenbeck {
            reversion_speed: 0.05,
            level,
            vol: 0.35,
        };
        validate_problem(SwitchingProblem {
            closed: RegimeSpec::new(Regime::Closed, ou(5.0)),
            open: RegimeSpec::new(Regime::Open, ou(1.0)),
            reward_closed: Reward::Zero,
            reward_open: Reward::Affine {
                slope: 1.0,
                intercept: -0.4,
            },
            cost_open: Cost::Constant(0.2),
            cost_close: Cost::Constant(0.2),
            discount: 0.105,
            interval: Interval::positive_half_line().with_lower_absorbing(),
            window: None,
        })
        .unwrap()
    }

    #[test]
    fn example_one_thresholds() {
        let s = solve(&example1(), &SolverOptions::default()).unwrap();
        assert_relative_eq!(s.a_star, 0.18300, max_relative = 1e-3);
        assert_relative_eq!(s.b_star, 1.15042, max_relative = 1e-3);
        assert_relative_eq!(s.beta0_star, 10.8125, max_relative = 1e-3);
        assert_relative_eq!(s.beta1_star, -0.695324, max_relative = 1e-3);
        assert!(s.residual <= 1e-9);
    }

    #[test]
    fn example_one_methods_agree_and_values_join() {
        let p = example1();
        let s = solve(&p, &SolverOptions::default()).unwrap();
        let t = solve_simultaneous(&p, &SolverOptions::default()).unwrap();
        for (u, v) in [(s.a_star, t.a_star), (s.b_star, t.b_star), (s.beta0_star, t.beta0_star), (s.beta1_star, t.beta1_star)] {
            assert_relative_eq!(u, v, max_relative = 1e-8);
        }
        for (r, x) in [(Regime::Closed, s.b_star), (Regime::Open, s.a_star)] {
            let h = 1e-9 * x;
            let (l, m) = (s.evaluate_value(r, x - h).unwrap(), s.evaluate_value(r, x + h).unwrap());
            assert_relative_eq!(l, m, max_relative = 1e-8);
        }
        // closed-form branch beyond b*
        let nu_minus = -0.860147;
        let x = 3.0f64;
        let expect = -s.beta1_star * x.powf(nu_minus) + x / 0.05 - 0.4 / 0.05 - 2.0;
        assert_relative_eq!(s.v0(x).unwrap(), expect, max_relative = 1e-5);
    }

    #[test]
    fn example_two_thresholds_with_default_coupling() {
        let p = example2();
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_relative_eq!(s.a_star, 0.781797, max_relative = 1e-2);
        assert_relative_eq!(s.b_star, 1.66182, max_relative = 1e-2);
        assert_relative_eq!(s.beta0_star, 144.313, max_relative = 1e-2);
        assert_relative_eq!(s.beta1_star, -2.16941, max_relative = 1e-2);
        let t = solve_simultaneous(&p, &SolverOptions::default()).unwrap();
        assert_relative_eq!(s.a_star, t.a_star, max_relative = 1e-6);
        assert_relative_eq!(s.beta0_star, t.beta0_star, max_relative = 1e-6);
    }

    #[test]
    fn example_two_full_line_coupling() {
        let opts = SolverOptions {
            coupling: Coupling::FullLine,
            ..SolverOptions::default()
        };
        let s = solve(&example2(), &opts).unwrap();
        assert_relative_eq!(s.a_star, 0.8727, max_relative = 1e-3);
        assert_relative_eq!(s.b_star, 1.7187, max_relative = 1e-3);
        // full coupling makes both switching identities exact
        let x = 0.5 * s.a_star;
        let gap = s.v1(x).unwrap() - s.v0(x).unwrap();
        assert_relative_eq!(gap, -0.2, max_relative = 1e-9);
    }

    #[test]
    fn prohibitive_costs_never_switch() {
        let mut raw = example1().into_problem();
        raw.cost_open = Cost::Constant(1e6);
        raw.cost_close = Cost::Constant(1e6);
        let p = validate_problem(raw).unwrap();
        assert_eq!(solve(&p, &SolverOptions::default()).unwrap_err(), SolveError::NoSwitchEverywhere);
    }

    #[test]
    fn out_of_domain_evaluation() {
        let s = solve(&example1(), &SolverOptions::default()).unwrap();
        assert!(matches!(s.v0(-1.0), Err(SolveError::OutOfDomain { .. })));
    }
}
