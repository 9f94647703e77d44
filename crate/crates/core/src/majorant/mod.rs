//! Obstacles in transformed coordinates and their smallest linear majorants.
//!
//! Regime 0 (closed) works in y = F₀(x) = ψ₀/φ₀ with denominator φ₀ and the
//! majorant anchored at the lower endpoint; regime 1 (open) works in
//! y = G₁(x) = −φ₁/ψ₁ with denominator ψ₁ and the anchor at the upper
//! endpoint. A line `W(y) = v_a + β (y − y_a)` maps back to the state space
//! as `β N(x) + (v_a − β y_a) D(x)` with `N = T·D`.

mod limits;

pub use limits::{classify_boundary_limits, BoundaryLimit, BoundaryLimits, LimitAudit};

use std::fmt;

use thiserror::Error;

use crate::fundamentals::{build_fundamentals, FunJet, Fundamentals, FundamentalsError, PairJet};
use crate::model::{BoundaryKind, Cost, Regime, ValidatedProblem};
use crate::noswitch::{no_switch_value, NoSwitchError, NoSwitchValue, ValueJet};
use crate::roots::{safeguarded_newton, RootOptions};

/// Number of scan points used to bracket tangencies.
pub const SCAN_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MajorantError {
    #[error(transparent)]
    Fundamentals(#[from] FundamentalsError),
    #[error(transparent)]
    NoSwitch(#[from] NoSwitchError),
    #[error("{regime} regime: the obstacle touches its majorant at several separated states {states:?}")]
    MultipleTangencies { regime: Regime, states: Vec<f64> },
    #[error("{regime} regime: could not bracket the tangency ({reason})")]
    BracketFailure { regime: Regime, reason: String },
    #[error("boundary limit at the {endpoint} endpoint is inconclusive; ratios along the approach: {audit}")]
    InconclusiveLimit { endpoint: &'static str, audit: LimitAudit },
}

/// How the opposing regime's line enters an obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coupling {
    /// Only the slope term β·N of the opposing line enters the obstacle.
    /// Identical to [`Coupling::FullLine`] when both anchors sit at the origin.
    #[default]
    SlopeOnly,
    /// The complete opposing continuation value, including the anchor
    /// offset at an absorbing endpoint.
    FullLine,
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coupling::SlopeOnly => "slope-only",
            Coupling::FullLine => "full-line",
        })
    }
}

/// A point in a regime's transformed plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub y: f64,
    pub value: f64,
}

/// W(y) = anchor.value + slope·(y − anchor.y) in the coordinates of `regime`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub regime: Regime,
    pub slope: f64,
    pub anchor: Anchor,
}

impl Line {
    /// Coefficient of the denominator D in the state-space form.
    pub fn offset(&self) -> f64 {
        self.anchor.value - self.slope * self.anchor.y
    }
}

/// Every quantity the obstacles need at one state.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub x: f64,
    pub jets: [PairJet; 2],
    pub g: [ValueJet; 2],
    pub cost: [ValueJet; 2],
}

fn fun_value_jet(j: &FunJet, sign: f64) -> ValueJet {
    let v = sign * j.value();
    ValueJet {
        v,
        d1: v * j.s,
        d2: v * (j.ds + j.s * j.s),
    }
}

impl Node {
    /// (T, T', T'') of the regime's transform.
    pub fn transform(&self, r: Regime) -> (f64, f64, f64) {
        match r {
            Regime::Closed => self.jets[0].f_derivs(),
            Regime::Open => self.jets[1].g_derivs(),
        }
    }

    /// The denominator D: φ₀ for regime 0, ψ₁ for regime 1.
    pub fn denominator(&self, r: Regime) -> FunJet {
        match r {
            Regime::Closed => self.jets[0].phi,
            Regime::Open => self.jets[1].psi,
        }
    }

    fn numerator_jet(&self, r: Regime) -> ValueJet {
        match r {
            Regime::Closed => fun_value_jet(&self.jets[0].psi, 1.0),
            Regime::Open => fun_value_jet(&self.jets[1].phi, -1.0),
        }
    }

    /// State-space form of `line`: β N + offset·D, with derivatives.
    pub fn line_jet(&self, line: &Line, coupling: Coupling) -> ValueJet {
        let n = self.numerator_jet(line.regime);
        let mut out = ValueJet {
            v: line.slope * n.v,
            d1: line.slope * n.d1,
            d2: line.slope * n.d2,
        };
        let off = line.offset();
        if coupling == Coupling::FullLine && off != 0.0 {
            let d = fun_value_jet(&self.denominator(line.regime), 1.0);
            out.v += off * d.v;
            out.d1 += off * d.d1;
            out.d2 += off * d.d2;
        }
        out
    }

    /// K_r = g_o − g_r − H(·, o), o the opposite regime.
    pub fn k_part(&self, r: Regime) -> ValueJet {
        let (i, o) = (r.index(), r.other().index());
        ValueJet {
            v: self.g[o].v - self.g[i].v - self.cost[o].v,
            d1: self.g[o].d1 - self.g[i].d1 - self.cost[o].d1,
            d2: self.g[o].d2 - self.g[i].d2 - self.cost[o].d2,
        }
    }
}

fn cost_jet(cost: &Cost, x: f64) -> ValueJet {
    match cost {
        Cost::Constant(c) => ValueJet { v: *c, d1: 0.0, d2: 0.0 },
        Cost::Custom(_) => {
            let h = 1e-4 * x.abs().max(1e-4);
            let f = |t: f64| cost.eval(t);
            let (m2, m1, c0, p1, p2) = (f(x - 2.0 * h), f(x - h), f(x), f(x + h), f(x + 2.0 * h));
            ValueJet {
                v: c0,
                d1: (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h),
                d2: (-m2 + 16.0 * m1 - 30.0 * c0 + 16.0 * p1 - p2) / (12.0 * h * h),
            }
        }
    }
}

/// Fundamentals and no-switch values of both regimes, with a cached scan.
#[derive(Debug, Clone)]
pub struct Parts {
    problem: ValidatedProblem,
    fundamentals: [Fundamentals; 2],
    g: [NoSwitchValue; 2],
    scan: Vec<Node>,
}

impl Parts {
    pub fn new(problem: &ValidatedProblem) -> Result<Self, MajorantError> {
        let f0 = build_fundamentals(problem, Regime::Closed)?;
        let f1 = build_fundamentals(problem, Regime::Open)?;
        let g0 = no_switch_value(problem, Regime::Closed, &f0)?;
        let g1 = no_switch_value(problem, Regime::Open, &f1)?;
        let mut parts = Parts {
            problem: problem.clone(),
            fundamentals: [f0, f1],
            g: [g0, g1],
            scan: Vec::new(),
        };
        let xs = parts.scan_states();
        parts.scan = xs.into_iter().map(|x| parts.node(x)).collect::<Result<_, _>>()?;
        Ok(parts)
    }

    pub fn problem(&self) -> &ValidatedProblem {
        &self.problem
    }

    pub fn fundamentals(&self, r: Regime) -> &Fundamentals {
        &self.fundamentals[r.index()]
    }

    pub fn no_switch(&self, r: Regime) -> &NoSwitchValue {
        &self.g[r.index()]
    }

    /// Scan range: the window intersected with both regimes' domains.
    pub fn scan_range(&self) -> (f64, f64) {
        let (mut lo, mut hi) = self.problem.window();
        for f in &self.fundamentals {
            let (a, b) = f.domain();
            lo = lo.max(a);
            hi = hi.min(b);
        }
        (lo, hi)
    }

    /// Whether scan points are spaced geometrically.
    pub fn geometric_scan(&self) -> bool {
        let (lo, hi) = self.scan_range();
        lo > 0.0 && hi / lo >= 100.0
    }

    fn scan_states(&self) -> Vec<f64> {
        let (lo, hi) = self.scan_range();
        let geometric = self.geometric_scan();
        (0..SCAN_POINTS)
            .map(|i| {
                let t = (i as f64 + 0.5) / SCAN_POINTS as f64;
                if geometric {
                    (lo.ln() + t * (hi / lo).ln()).exp()
                } else {
                    lo + t * (hi - lo)
                }
            })
            .collect()
    }

    /// Cached scan nodes in increasing state order.
    pub fn scan(&self) -> &[Node] {
        &self.scan
    }

    pub fn node(&self, x: f64) -> Result<Node, MajorantError> {
        let p = &self.problem;
        Ok(Node {
            x,
            jets: [self.fundamentals[0].jet(x)?, self.fundamentals[1].jet(x)?],
            g: [self.g[0].jet(x)?, self.g[1].jet(x)?],
            cost: [cost_jet(&p.cost_close, x), cost_jet(&p.cost_open, x)],
        })
    }

    /// Anchor of the regime's majorant at its own endpoint: the transformed
    /// origin at a natural endpoint, or (T(e), −g(e)/D(e)) at an absorbing one
    /// where the value is zero.
    pub fn anchor(&self, r: Regime) -> Result<Anchor, MajorantError> {
        let iv = &self.problem.interval;
        let f = &self.fundamentals[r.index()];
        let g = &self.g[r.index()];
        Ok(match r {
            Regime::Closed => match iv.lower_kind {
                BoundaryKind::Natural => Anchor { y: 0.0, value: 0.0 },
                BoundaryKind::Absorbing => {
                    let c = iv.lower;
                    Anchor {
                        y: f.f_at_lower()?,
                        value: -g.value(c)? / f.phi(c)?,
                    }
                }
            },
            Regime::Open => match iv.upper_kind {
                BoundaryKind::Natural => Anchor { y: 0.0, value: 0.0 },
                BoundaryKind::Absorbing => {
                    let d = iv.upper;
                    Anchor {
                        y: f.g_at_upper()?,
                        value: -g.value(d)? / f.psi(d)?,
                    }
                }
            },
        })
    }

    /// Obstacle of `regime` given the opposing regime's line.
    pub fn obstacle(&self, regime: Regime, other: Line, coupling: Coupling) -> Obstacle<'_> {
        debug_assert_eq!(other.regime, regime.other());
        Obstacle {
            parts: self,
            regime,
            other,
            coupling,
        }
    }
}

/// Gain from switching out of `regime` measured against its no-switch value:
/// r = K + (opposing continuation value − its g).
#[derive(Debug, Clone, Copy)]
pub struct Obstacle<'a> {
    parts: &'a Parts,
    regime: Regime,
    other: Line,
    coupling: Coupling,
}

impl<'a> Obstacle<'a> {
    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn beta_other(&self) -> f64 {
        self.other.slope
    }

    pub fn other_line(&self) -> Line {
        self.other
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn parts(&self) -> &'a Parts {
        self.parts
    }

    pub fn jet_at(&self, node: &Node) -> ValueJet {
        let k = node.k_part(self.regime);
        let l = node.line_jet(&self.other, self.coupling);
        ValueJet {
            v: k.v + l.v,
            d1: k.d1 + l.d1,
            d2: k.d2 + l.d2,
        }
    }

    pub fn value(&self, x: f64) -> Result<f64, MajorantError> {
        Ok(self.jet_at(&self.parts.node(x)?).v)
    }

    pub fn k_part(&self, x: f64) -> Result<f64, MajorantError> {
        Ok(self.parts.node(x)?.k_part(self.regime).v)
    }

    /// The obstacle seen in the regime's transformed plane.
    pub fn transform(self) -> Result<TransformedObstacle<'a>, MajorantError> {
        let anchor = self.parts.anchor(self.regime)?;
        Ok(TransformedObstacle { obstacle: self, anchor })
    }
}

/// Sign of (𝒜 − α) applied to a function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Negative,
    Flat,
    Positive,
}

/// Sign of (𝒜_r − α) r(x) by finite differences; `Flat` within 1e-9 of the
/// obstacle's scale.
pub fn concavity_sign(obstacle: &Obstacle<'_>, x: f64) -> Result<Sign, MajorantError> {
    let f = obstacle.parts.fundamentals(obstacle.regime);
    Ok(generator_sign(f, |y| obstacle.value(y).unwrap_or(f64::NAN), x))
}

/// Sign of (𝒜 − α)u(x) for the regime of `f`.
pub fn generator_sign<U: Fn(f64) -> f64>(f: &Fundamentals, u: U, x: f64) -> Sign {
    let h = 1e-3 * x.abs().max(1e-8);
    let scale = 1.0 + u(x).abs();
    let v = f.generator_residual(u, x, h);
    if !v.is_finite() || v.abs() <= 1e-9 * scale {
        Sign::Flat
    } else if v > 0.0 {
        Sign::Positive
    } else {
        Sign::Negative
    }
}

/// Transformed quantities at a state: y = T(x), R(y) and its first two
/// y-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedJet {
    pub x: f64,
    pub y: f64,
    pub dy_dx: f64,
    pub r: f64,
    pub dr: f64,
    pub d2r: f64,
}

/// R = (r/D)∘T⁻¹ with the anchor of its majorant.
#[derive(Debug, Clone, Copy)]
pub struct TransformedObstacle<'a> {
    obstacle: Obstacle<'a>,
    anchor: Anchor,
}

impl<'a> TransformedObstacle<'a> {
    pub fn obstacle(&self) -> &Obstacle<'a> {
        &self.obstacle
    }

    pub fn anchor(&self) -> Anchor {
        self.anchor
    }

    pub fn regime(&self) -> Regime {
        self.obstacle.regime
    }

    /// Transformed coordinates of the scan range: (anchor side, far side).
    pub fn domain(&self) -> Result<(f64, f64), MajorantError> {
        let (lo, hi) = self.obstacle.parts.scan_range();
        let f = self.obstacle.parts.fundamentals(self.regime());
        Ok(match self.regime() {
            Regime::Closed => (self.anchor.y, f.transform_f(hi)?),
            Regime::Open => (self.anchor.y, f.transform_g(lo)?),
        })
    }

    pub fn jet_at(&self, node: &Node) -> TransformedJet {
        let r = self.regime();
        let o = self.obstacle.jet_at(node);
        let d = node.denominator(r);
        let inv = (-d.ln).exp();
        let (s, ds) = (d.s, d.ds);
        let q = o.v * inv;
        let q1 = (o.d1 - o.v * s) * inv;
        let q2 = (o.d2 - 2.0 * o.d1 * s - o.v * ds + o.v * s * s) * inv;
        let (t, t1, t2) = node.transform(r);
        TransformedJet {
            x: node.x,
            y: t,
            dy_dx: t1,
            r: q,
            dr: q1 / t1,
            d2r: (q2 * t1 - q1 * t2) / (t1 * t1 * t1),
        }
    }

    pub fn jet_at_state(&self, x: f64) -> Result<TransformedJet, MajorantError> {
        Ok(self.jet_at(&self.obstacle.parts.node(x)?))
    }

    /// R at transformed coordinate y.
    pub fn eval(&self, y: f64) -> Result<f64, MajorantError> {
        let f = self.obstacle.parts.fundamentals(self.regime());
        let x = match self.regime() {
            Regime::Closed => f.inverse_f(y)?,
            Regime::Open => f.inverse_g(y)?,
        };
        Ok(self.jet_at_state(x)?.r)
    }

    /// Slope of the chord from the anchor to (y, R(y)), signed so that the
    /// regime's majorant slope is the supremum: (R − v_a)/|y − y_a|.
    pub fn score(&self, j: &TransformedJet) -> f64 {
        (j.r - self.anchor.value) / (j.y - self.anchor.y).abs()
    }

    /// T(y) = R'(y)(y − y_a) − (R(y) − v_a).
    pub fn tangency_residual(&self, j: &TransformedJet) -> f64 {
        j.dr * (j.y - self.anchor.y) - (j.r - self.anchor.value)
    }
}

/// Why a regime never switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoSwitchReason {
    /// The anchor line already dominates the obstacle.
    NonPositive,
    /// The chord slope only decreases away from the anchor.
    NoInteriorMaximum,
    /// The chord slope is largest at the far end of the window.
    FarBoundary,
}

/// The obstacle is never worth hitting: the majorant is the anchor line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoSwitchSignal {
    pub regime: Regime,
    pub reason: NoSwitchReason,
    pub best_score: f64,
}

/// Touching point of the smallest linear majorant through the anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangency {
    pub regime: Regime,
    pub slope: f64,
    pub y: f64,
    pub x: f64,
    pub anchor: Anchor,
    /// Tangency equation residual at the root.
    pub residual: f64,
    /// Local minimum of the chord slope beyond which the tangency was sought.
    pub search_start: f64,
}

impl Tangency {
    pub fn line(&self) -> Line {
        Line {
            regime: self.regime,
            slope: self.slope,
            anchor: self.anchor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TangencyOutcome {
    Touch(Tangency),
    NoSwitch(NoSwitchSignal),
}

/// Smallest linear majorant through the anchor, found by scanning the chord
/// slope beyond its first local minimum and refining the maximiser with
/// safeguarded Newton on the tangency equation.
pub fn tangency(t: &TransformedObstacle<'_>) -> Result<TangencyOutcome, MajorantError> {
    let regime = t.regime();
    let scan = t.obstacle.parts.scan();
    let mut order: Vec<usize> = (0..scan.len()).collect();
    if regime == Regime::Open {
        order.reverse();
    }
    let jets: Vec<TransformedJet> = order.iter().map(|&i| t.jet_at(&scan[i])).collect();
    let scores: Vec<f64> = jets.iter().map(|j| t.score(j)).collect();
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MajorantError::BracketFailure {
            regime,
            reason: "non-finite obstacle on the scan".into(),
        });
    }
    let n = scores.len();
    let Some(start) = (0..n - 1).find(|&k| scores[k + 1] > scores[k]) else {
        return Ok(TangencyOutcome::NoSwitch(NoSwitchSignal {
            regime,
            reason: NoSwitchReason::NoInteriorMaximum,
            best_score: scores[0],
        }));
    };
    let j = (start..n).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
    let best = scores[j];
    if best <= 0.0 {
        return Ok(TangencyOutcome::NoSwitch(NoSwitchSignal {
            regime,
            reason: NoSwitchReason::NonPositive,
            best_score: best,
        }));
    }
    if j == n - 1 {
        return Ok(TangencyOutcome::NoSwitch(NoSwitchSignal {
            regime,
            reason: NoSwitchReason::FarBoundary,
            best_score: best,
        }));
    }

    let parts = t.obstacle.parts;
    let fdf = |x: f64| match parts.node(x) {
        Ok(node) => {
            let jt = t.jet_at(&node);
            let res = t.tangency_residual(&jt);
            (res, jt.d2r * jt.dy_dx * (jt.y - t.anchor.y))
        }
        Err(_) => (f64::NAN, f64::NAN),
    };
    // along the scan, sign(T) is the sign of the score's slope, so local
    // maxima sit where T turns from positive to non-positive
    let tans: Vec<f64> = jets.iter().map(|jt| t.tangency_residual(jt)).collect();
    let mut maxima = Vec::new();
    for k in start..n - 1 {
        if !(tans[k] > 0.0 && tans[k + 1] <= 0.0) {
            continue;
        }
        // the tangency residual scales with R, which may be tiny
        let scale = (jets[k].r - t.anchor.value).abs();
        let opts = RootOptions {
            f_tol: 1e-15 * scale,
            ..RootOptions::default()
        };
        let root = safeguarded_newton(fdf, jets[k].x, jets[k + 1].x, &opts).map_err(|e| {
            MajorantError::BracketFailure {
                regime,
                reason: e.to_string(),
            }
        })?;
        let jt = t.jet_at_state(root.x)?;
        maxima.push((k, root, jt, t.score(&jt)));
    }
    if maxima.is_empty() {
        // the bump is narrower than the scan spacing: resample around it
        let lo = jets[j - 1].x;
        let hi = jets[(j + 1).min(n - 1)].x;
        const SUB: usize = 256;
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..=SUB {
            let x = lo + (hi - lo) * i as f64 / SUB as f64;
            let Ok(node) = parts.node(x) else { continue };
            let tan = t.tangency_residual(&t.jet_at(&node));
            if let Some((px, pt)) = prev {
                if pt > 0.0 && tan <= 0.0 {
                    let root = safeguarded_newton(fdf, px, x, &RootOptions {
                        f_tol: 1e-15 * (jets[j].r - t.anchor.value).abs(),
                        ..RootOptions::default()
                    })
                    .map_err(|e| MajorantError::BracketFailure {
                        regime,
                        reason: e.to_string(),
                    })?;
                    let jt = t.jet_at_state(root.x)?;
                    maxima.push((j, root, jt, t.score(&jt)));
                }
            }
            prev = Some((x, tan));
        }
    }
    let Some(&(k, root, jt, score)) = maxima.iter().max_by(|a, b| a.3.total_cmp(&b.3)) else {
        return Err(MajorantError::BracketFailure {
            regime,
            reason: format!("no sign change of the tangency residual near state {}", jets[j].x),
        });
    };
    let slope = (jt.r - t.anchor.value) / (jt.y - t.anchor.y);

    let tol = 1e-9 * score.abs();
    let mut touching: Vec<f64> = maxima
        .iter()
        .filter(|m| m.0 != k && score - m.3 <= tol)
        .map(|m| m.1.x)
        .collect();
    touching.extend(
        (start..n)
            .filter(|&i| i + 1 < k || i > k + 2)
            .filter(|&i| score - scores[i] <= tol)
            .map(|i| jets[i].x),
    );
    if !touching.is_empty() {
        let mut states = touching;
        states.push(root.x);
        return Err(MajorantError::MultipleTangencies { regime, states });
    }

    Ok(TangencyOutcome::Touch(Tangency {
        regime,
        slope,
        y: jt.y,
        x: root.x,
        anchor: t.anchor,
        residual: root.fx,
        search_start: jets[start].x,
    }))
}
