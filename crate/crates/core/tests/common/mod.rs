#![allow(dead_code)]

use optswitch::majorant::{tangency, Coupling, TangencyOutcome};
use optswitch::model::{
    validate_problem, Cost, Family, Interval, Regime, RegimeSpec, Reward, SwitchingProblem, ValidatedProblem,
};
use optswitch::oracle::{value_iteration, GridScheme};
use optswitch::solver::{solve, Solution, SolverOptions};
use rand::Rng;

pub type Check = Result<(), String>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// States spread around the thresholds, strictly inside the interval.
pub fn probe_states(sol: &Solution, n: usize) -> Vec<f64> {
    let iv = &sol.problem().interval;
    let (a, b) = (sol.a_star, sol.b_star);
    let mut xs = Vec::with_capacity(n);
    if iv.lower >= 0.0 && a > 0.0 && b.is_finite() {
        let (lo, hi) = ((a / 10.0).max(iv.lower), b * 10.0);
        for i in 0..n {
            xs.push(lo * (hi / lo).powf((i as f64 + 0.5) / n as f64));
        }
    } else {
        let w = (b - a).max(0.5);
        let (lo, hi) = ((a - 3.0 * w).max(iv.lower + 1e-3 * w), b + 3.0 * w);
        for i in 0..n {
            xs.push(lo + (hi - lo) * (i as f64 + 0.5) / n as f64);
        }
    }
    xs.retain(|&x| x > iv.lower && x < iv.upper);
    xs
}

fn line_of(sol: &Solution, r: Regime) -> optswitch::majorant::Line {
    match r {
        Regime::Closed => sol.w0_line,
        Regime::Open => sol.w1_line,
    }
}

fn in_continuation(sol: &Solution, r: Regime, x: f64) -> bool {
    !sol.in_switching_region(r, x)
}

/// (𝒜 − α)v + f = 0 on continuation regions, from analytic jets.
pub fn generator_kill(sol: &Solution, xs: &[f64]) -> Result<f64, String> {
    let p = sol.problem();
    let mut worst: f64 = 0.0;
    for r in Regime::BOTH {
        let fam = &p.regime(r).family;
        for &x in xs {
            if !in_continuation(sol, r, x) || rel(x, sol.threshold(r)) < 1e-6 {
                continue;
            }
            let node = sol.parts().node(x).map_err(|e| e.to_string())?;
            let l = node.line_jet(&line_of(sol, r), Coupling::FullLine);
            let g = node.g[r.index()];
            let (v, d1, d2) = (l.v + g.v, l.d1 + g.d1, l.d2 + g.d2);
            let (m, s) = (fam.drift(x), fam.vol(x));
            let res = 0.5 * s * s * d2 + m * d1 - p.discount * v + p.reward(r).eval(x);
            let scaled = res.abs() / (1.0 + v.abs());
            worst = worst.max(scaled);
            ensure(scaled <= 1e-6, || format!("generator residual {res:e} for {r} at x={x}"))?;
        }
    }
    Ok(worst)
}

/// Majorant dominance on the searched part of each switching regime and
/// tangency smooth fit, both in transformed space and for v itself.
pub fn majorant_and_smooth_fit(sol: &Solution) -> Check {
    let parts = sol.parts();
    for r in Regime::BOTH {
        if !sol.switches[r.index()] {
            continue;
        }
        let t = parts
            .obstacle(r, line_of(sol, r.other()), sol.coupling)
            .transform()
            .map_err(|e| e.to_string())?;
        let TangencyOutcome::Touch(tan) = tangency(&t).map_err(|e| e.to_string())? else {
            return Err(format!("{r}: no tangency at the solved lines"));
        };
        let beta = line_of(sol, r).slope;
        ensure(rel(tan.slope, beta) <= 1e-7, || {
            format!("{r}: tangency slope {} vs solved {beta}", tan.slope)
        })?;
        let (lo, hi) = parts.scan_range();
        let (from, to) = match r {
            Regime::Closed => (tan.search_start, hi),
            Regime::Open => (lo, tan.search_start),
        };
        for i in 0..300 {
            let u = (i as f64 + 0.5) / 300.0;
            let x = if parts.geometric_scan() {
                from * (to / from).powf(u)
            } else {
                from + (to - from) * u
            };
            let j = t.jet_at_state(x).map_err(|e| e.to_string())?;
            let w = tan.anchor.value + tan.slope * (j.y - tan.anchor.y);
            ensure(w >= j.r - 1e-9 * (1.0 + j.r.abs()), || {
                format!("{r}: line {w} below obstacle {} at x={x}", j.r)
            })?;
        }
        let j = t.jet_at_state(tan.x).map_err(|e| e.to_string())?;
        ensure(rel(j.dr, tan.slope) <= 1e-8, || {
            format!("{r}: R'={} vs slope {} at the tangency", j.dr, tan.slope)
        })?;
        // value and slope of v from both sides of the threshold
        let x = sol.threshold(r);
        let node = parts.node(x).map_err(|e| e.to_string())?;
        let g = node.g[r.index()];
        let cont = node.line_jet(&line_of(sol, r), Coupling::FullLine);
        let sw = t.obstacle().jet_at(&node);
        let (v_c, v_s) = (cont.v + g.v, sw.v + g.v);
        let (d_c, d_s) = (cont.d1 + g.d1, sw.d1 + g.d1);
        ensure((v_c - v_s).abs() <= 1e-8 * v_c.abs().max(1.0), || {
            format!("{r}: v jumps from {v_s} to {v_c} at the threshold {x}")
        })?;
        ensure((d_c - d_s).abs() <= 1e-6 * d_c.abs().max(1.0), || {
            format!("{r}: v' jumps from {d_s} to {d_c} at the threshold {x}")
        })?;
    }
    Ok(())
}

pub fn ordering_and_signs(sol: &Solution) -> Check {
    if sol.switches == [true, true] {
        ensure(sol.a_star < sol.b_star, || format!("a*={} ≥ b*={}", sol.a_star, sol.b_star))?;
    }
    ensure(!sol.switches[0] || sol.beta0_star > 0.0, || format!("β₀*={} ≤ 0", sol.beta0_star))?;
    ensure(!sol.switches[1] || sol.beta1_star < 0.0, || format!("β₁*={} ≥ 0", sol.beta1_star))
}

pub fn dominates_no_switch(sol: &Solution, xs: &[f64]) -> Check {
    for r in Regime::BOTH {
        for &x in xs {
            let v = sol.evaluate_value(r, x).map_err(|e| e.to_string())?;
            let g = sol.no_switch_value(r, x).map_err(|e| e.to_string())?;
            ensure(v >= g - 1e-9 * (1.0 + g.abs()), || format!("v{}({x})={v} < g={g}", r.index()))?;
        }
    }
    Ok(())
}

/// v_r ≥ v_other − H_r, with equality exactly on the switching region.
pub fn switching_dominance(sol: &Solution, xs: &[f64]) -> Result<f64, String> {
    let p = sol.problem();
    let mut worst_eq: f64 = 0.0;
    for r in Regime::BOTH {
        let o = r.other();
        for &x in xs {
            let v = sol.evaluate_value(r, x).map_err(|e| e.to_string())?;
            let jump = sol.evaluate_value(o, x).map_err(|e| e.to_string())? - p.cost_into(o).eval(x);
            let scale = 1.0 + v.abs();
            if sol.in_switching_region(r, x) {
                let gap = (v - jump).abs() / scale;
                worst_eq = worst_eq.max(gap);
                ensure(gap <= 1e-9, || {
                    format!("{r} at x={x}: v={v} differs from v_other − H={jump} on the switching region")
                })?;
            } else {
                ensure(v >= jump - 1e-9 * scale, || format!("{r} at x={x}: v={v} < v_other − H={jump}"))?;
                if rel(x, sol.threshold(r)) > 1e-2 {
                    ensure(v > jump, || format!("{r} at x={x}: immediate switch ties in the continuation region"))?;
                }
            }
        }
    }
    Ok(worst_eq)
}

/// (v − g)/D as a function of the regime's transform equals the solved line.
pub fn transformed_affinity(sol: &Solution, xs: &[f64]) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for r in Regime::BOTH {
        let f = sol.parts().fundamentals(r);
        let line = line_of(sol, r);
        let off = line.offset();
        for &x in xs {
            if !in_continuation(sol, r, x) {
                continue;
            }
            let v = sol.evaluate_value(r, x).map_err(|e| e.to_string())?;
            let g = sol.no_switch_value(r, x).map_err(|e| e.to_string())?;
            let (d, y) = match r {
                Regime::Closed => (f.phi(x), f.transform_f(x)),
                Regime::Open => (f.psi(x), f.transform_g(x)),
            };
            let (d, y) = (d.map_err(|e| e.to_string())?, y.map_err(|e| e.to_string())?);
            let w = (v - g) / d;
            let expect = off + line.slope * y;
            let gap = (w - expect).abs() / w.abs().max(expect.abs()).max(1.0);
            worst = worst.max(gap);
            ensure(gap <= 1e-9, || format!("{r} at x={x}: (v−g)/D={w} off the line value {expect}"))?;
        }
    }
    Ok(worst)
}

/// Scaling rewards and costs by κ scales values and slopes by κ and leaves
/// thresholds unchanged.
pub fn joint_scaling(sol: &Solution, options: &SolverOptions, kappa: f64, xs: &[f64]) -> Check {
    let scaled = validate_problem(sol.problem().problem().scaled(kappa)).map_err(|e| e.to_string())?;
    let s = solve(&scaled, options).map_err(|e| e.to_string())?;
    for (lhs, rhs, what) in [
        (s.a_star, sol.a_star, "a*"),
        (s.b_star, sol.b_star, "b*"),
        (s.beta0_star, kappa * sol.beta0_star, "β₀*"),
        (s.beta1_star, kappa * sol.beta1_star, "β₁*"),
    ] {
        if lhs.is_finite() && rhs != 0.0 {
            ensure(rel(lhs, rhs) <= 1e-8, || format!("κ={kappa}: {what} {lhs} vs {rhs}"))?;
        }
    }
    for r in Regime::BOTH {
        for &x in xs.iter().step_by(7) {
            let (v, vk) = (sol.evaluate_value(r, x).unwrap(), s.evaluate_value(r, x).unwrap());
            ensure((vk - kappa * v).abs() <= 1e-8 * (1.0 + (kappa * v).abs()), || {
                format!("κ={kappa}: v{}({x}) {vk} vs κv {}", r.index(), kappa * v)
            })?;
        }
    }
    Ok(())
}

pub fn value_iteration_monotone(problem: &ValidatedProblem, nodes: usize) -> Check {
    let scheme = GridScheme::new(problem, nodes).map_err(|e| e.to_string())?;
    let rep = value_iteration(&scheme, 100_000, 1e-10).map_err(|e| e.to_string())?;
    ensure(rep.converged, || format!("value iteration did not converge in {} steps", rep.iterations))?;
    ensure(rep.monotone, || format!("iterates decrease by {:e}", rep.worst_decrease))
}

/// Every invariant except joint scaling and value-iteration monotonicity.
pub fn structural_invariants(sol: &Solution) -> Check {
    let xs = probe_states(sol, 60);
    generator_kill(sol, &xs)?;
    majorant_and_smooth_fit(sol)?;
    ordering_and_signs(sol)?;
    dominates_no_switch(sol, &xs)?;
    switching_dominance(sol, &xs)?;
    transformed_affinity(sol, &xs)?;
    Ok(())
}

pub fn all_invariants(sol: &Solution, options: &SolverOptions) -> Check {
    structural_invariants(sol)?;
    let xs = probe_states(sol, 60);
    for kappa in [0.5, 3.0] {
        joint_scaling(sol, options, kappa, &xs)?;
    }
    value_iteration_monotone(sol.problem(), 400)
}

fn affine_open(k: f64) -> Reward {
    Reward::Affine {
        slope: 1.0,
        intercept: -k,
    }
}

/// Random GBM problem whose open regime drifts lower and earns x − K; both
/// regimes share the volatility.
pub fn gbm_draw<R: Rng>(rng: &mut R) -> SwitchingProblem {
    let rho = rng.random_range(0.03..0.08);
    let mu0 = rng.random_range(-0.02..rho - 0.02);
    let mu1 = mu0 - rng.random_range(0.01..0.04);
    let vol = rng.random_range(0.15..0.4);
    SwitchingProblem {
        closed: RegimeSpec::new(Regime::Closed, Family::GeometricBM { drift: mu0, vol }),
        open: RegimeSpec::new(Regime::Open, Family::GeometricBM { drift: mu1, vol }),
        reward_closed: Reward::Zero,
        reward_open: affine_open(rng.random_range(0.2..1.0)),
        cost_open: Cost::Constant(rng.random_range(0.3..3.0)),
        cost_close: Cost::Constant(rng.random_range(0.3..3.0)),
        discount: rho,
        interval: Interval::positive_half_line(),
        window: None,
    }
}

/// Random mean-reverting problem on the real line whose open level is lower.
pub fn ou_draw<R: Rng>(rng: &mut R) -> SwitchingProblem {
    let speed = rng.random_range(0.05..0.5);
    let vol = rng.random_range(0.2..0.6);
    let m0 = rng.random_range(2.0..5.0);
    let m1 = m0 - rng.random_range(1.0..3.0);
    let ou = |level| Family::OrnsteinUhlenbeck {
        reversion_speed: speed,
        level,
        vol,
    };
    SwitchingProblem {
        closed: RegimeSpec::new(Regime::Closed, ou(m0)),
        open: RegimeSpec::new(Regime::Open, ou(m1)),
        reward_closed: Reward::Zero,
        reward_open: affine_open(rng.random_range(0.2..1.0)),
        cost_open: Cost::Constant(rng.random_range(0.1..1.0)),
        cost_close: Cost::Constant(rng.random_range(0.1..1.0)),
        discount: rng.random_range(0.05..0.15),
        interval: Interval::natural(f64::NEG_INFINITY, f64::INFINITY),
        window: None,
    }
}
