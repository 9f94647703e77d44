//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on failure.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use optswitch::majorant::Coupling;
use optswitch::model::{
    validate_problem, Cost, Family, Interval, Regime, RegimeSpec, Reward, SwitchingProblem, ThresholdPolicy,
    ValidatedProblem,
};
use optswitch::oracle::{simulate_policy, value_iteration, GridScheme, SimulationConfig};
use optswitch::presets::{resource_extraction, rented_capacity, ExtractionParams, RentalParams};
use optswitch::solver::{solve, solve_simultaneous, Solution, SolveError, SolverOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, title: &str, elapsed: Duration, o: &Outcome) {
    println!(
        "criterion {n}: {} {title} ({:.2}s) {}",
        if o.pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        o.detail
    );
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn example1() -> ValidatedProblem {
    resource_extraction(ExtractionParams::default()).unwrap()
}

fn example2() -> ValidatedProblem {
    rented_capacity(RentalParams::default()).unwrap()
}

fn golden(problem: &ValidatedProblem, expect: [f64; 4], tol: f64, budget: Duration) -> Outcome {
    let t = Instant::now();
    let s = match solve(problem, &SolverOptions::default()) {
        Ok(s) => s,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: format!("solver error: {e}"),
            }
        }
    };
    let elapsed = t.elapsed();
    let got = [s.a_star, s.b_star, s.beta0_star, s.beta1_star];
    let worst = got.iter().zip(expect).map(|(g, e)| rel(*g, e)).fold(0.0, f64::max);
    Outcome {
        pass: worst <= tol && elapsed < budget,
        detail: format!(
            "a*={:.6} b*={:.6} β₀*={:.6} β₁*={:.6}; worst relative error {worst:.2e} (tol {tol:e}); solve {:.3}s",
            got[0],
            got[1],
            got[2],
            got[3],
            elapsed.as_secs_f64()
        ),
    }
}

fn consistency() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, p, tol) in [("example 1", example1(), 1e-8), ("example 2", example2(), 1e-6)] {
        let o = SolverOptions::default();
        match (solve(&p, &o), solve_simultaneous(&p, &o)) {
            (Ok(a), Ok(b)) => {
                let worst = [
                    (a.a_star, b.a_star),
                    (a.b_star, b.b_star),
                    (a.beta0_star, b.beta0_star),
                    (a.beta1_star, b.beta1_star),
                ]
                .iter()
                .map(|(x, y)| rel(*y, *x))
                .fold(0.0, f64::max);
                pass &= worst <= tol;
                detail.push(format!("{name}: {worst:.2e} (tol {tol:e})"));
            }
            (a, b) => {
                pass = false;
                detail.push(format!("{name}: {:?} / {:?}", a.err(), b.err()));
            }
        }
    }
    Outcome {
        pass,
        detail: detail.join("; "),
    }
}

fn oracle_agreement(name: &str, problem: &ValidatedProblem, vi_probes: &[f64], mc_probes: &[f64]) -> Outcome {
    let mut lines = Vec::new();
    let sol = match solve(problem, &SolverOptions::default()) {
        Ok(s) => s,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: format!("{name}: solver error {e}"),
            }
        }
    };
    let mut pass = true;
    let vi = GridScheme::new(problem, 2000)
        .map_err(|e| e.to_string())
        .and_then(|s| value_iteration(&s, 100_000, 1e-10).map(|r| (s, r)).map_err(|e| e.to_string()));
    match vi {
        Ok((scheme, rep)) => {
            pass &= rep.converged;
            let gaps = rep.compare(&scheme, &sol, vi_probes).unwrap();
            let worst = gaps.iter().map(|g| g.relative).fold(0.0, f64::max);
            pass &= worst <= 1e-2;
            lines.push(format!(
                "{name} VI: {} iterations, worst relative gap {worst:.2e} (tol 1e-2)",
                rep.iterations
            ));
            for g in gaps.iter().filter(|g| g.relative > 1e-2) {
                lines.push(format!(
                    "  v{}({}) grid {:.6} solver {:.6}",
                    g.regime.index(),
                    g.x,
                    g.grid,
                    g.exact
                ));
            }
        }
        Err(e) => {
            pass = false;
            lines.push(format!("{name} VI error: {e}"));
        }
    }
    let policy = ThresholdPolicy::new(sol.a_star, sol.b_star, &problem.interval).unwrap();
    let config = SimulationConfig::default();
    for &x in mc_probes {
        let est = simulate_policy(problem, policy, x, Regime::Closed, &config).unwrap();
        let exact = sol.v0(x).unwrap();
        let z = (est.mean - exact) / est.std_error;
        pass &= z.abs() <= 3.0;
        lines.push(format!(
            "{name} MC v0({x}): {:.5} ± {:.5} vs {:.5}, z = {z:+.2}",
            est.mean, est.std_error, exact
        ));
    }
    Outcome {
        pass,
        detail: lines.join("\n    "),
    }
}

fn invariants() -> Outcome {
    let options = SolverOptions::default();
    let mut lines = Vec::new();
    let mut pass = true;
    let mut record = |name: String, r: Result<(), String>| {
        pass &= r.is_ok();
        lines.push(match r {
            Ok(()) => format!("{name}: ok"),
            Err(e) => format!("{name}: {e}"),
        });
    };
    let check = |s: &Solution| common::all_invariants(s, &options);
    for (name, p) in [("example 1", example1()), ("example 2", example2())] {
        let r = solve(&p, &options).map_err(|e| format!("solver error {e}")).and_then(|s| check(&s));
        record(name.to_string(), r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut rejected = Vec::new();
    for family in ["gbm", "ou"] {
        let mut accepted = 0;
        let mut attempts = 0;
        while accepted < 5 && attempts < 100 {
            attempts += 1;
            let raw = if family == "gbm" {
                common::gbm_draw(&mut rng)
            } else {
                common::ou_draw(&mut rng)
            };
            let Ok(p) = validate_problem(raw) else {
                rejected.push(format!("{family}: invalid"));
                continue;
            };
            match solve(&p, &options) {
                Ok(s) if s.switches == [true, true] => {
                    accepted += 1;
                    record(format!("{family} draw {accepted}"), check(&s));
                }
                Ok(_) => rejected.push(format!("{family}: one-sided switching")),
                Err(e) => rejected.push(format!("{family}: {}", e.to_string().chars().take(80).collect::<String>())),
            }
        }
        if accepted < 5 {
            record(family.to_string(), Err(format!("only {accepted} usable draws")));
        }
    }
    for r in &rejected {
        lines.push(format!("rejected draw, {r}"));
    }
    let full = SolverOptions {
        coupling: Coupling::FullLine,
        ..SolverOptions::default()
    };
    let note = solve(&example2(), &full)
        .map_err(|e| e.to_string())
        .and_then(|s| common::all_invariants(&s, &full));
    lines.push(format!(
        "note: example 2 with the full-line coupling: {}",
        note.err().unwrap_or_else(|| "ok".into())
    ));
    Outcome {
        pass,
        detail: lines.join("\n    "),
    }
}

fn engineered_infinite() -> ValidatedProblem {
    validate_problem(SwitchingProblem {
        closed: RegimeSpec::new(Regime::Closed, Family::GeometricBM { drift: -0.05, vol: 0.2 }),
        open: RegimeSpec::new(Regime::Open, Family::GeometricBM { drift: 0.04, vol: 0.2 }),
        reward_closed: Reward::Power {
            coef: 1.0,
            exponent: 2.5,
        },
        reward_open: Reward::Zero,
        cost_open: Cost::Constant(1.0),
        cost_close: Cost::Constant(1.0),
        discount: 0.05,
        interval: Interval::positive_half_line(),
        window: None,
    })
    .unwrap()
}

fn degenerate() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    let p = resource_extraction(ExtractionParams {
        l: 1e6,
        c: 1e6,
        ..ExtractionParams::default()
    })
    .unwrap();
    match solve(&p, &SolverOptions::default()) {
        Err(SolveError::NoSwitchEverywhere) => lines.push("1e6 costs: NoSwitchEverywhere".into()),
        other => {
            pass = false;
            lines.push(format!("1e6 costs: expected NoSwitchEverywhere, got {:?}", other.map(|s| s.a_star)));
        }
    }
    let scheme = GridScheme::new(&p, 2000).unwrap();
    let rep = value_iteration(&scheme, 100_000, 1e-10).unwrap();
    let mut worst: f64 = 0.0;
    for r in Regime::BOTH {
        for (v, g) in rep.values(r).iter().zip(&scheme.g[r.index()]) {
            worst = worst.max((v - g).abs());
        }
    }
    pass &= worst <= 1e-6;
    lines.push(format!("grid oracle max |v − g| = {worst:.2e} (tol 1e-6)"));
    match solve(&engineered_infinite(), &SolverOptions::default()) {
        Err(SolveError::InfiniteValue { limits }) => {
            lines.push(format!("x^2.5 reward: InfiniteValue (l_c {}, l_d {})", limits.l_c, limits.l_d))
        }
        other => {
            pass = false;
            lines.push(format!("x^2.5 reward: expected InfiniteValue, got {:?}", other.err()));
        }
    }
    Outcome {
        pass,
        detail: lines.join("; "),
    }
}

fn full_line_note() -> String {
    let o = SolverOptions {
        coupling: Coupling::FullLine,
        ..SolverOptions::default()
    };
    let p = example2();
    let Ok(s) = solve(&p, &o) else {
        return String::new();
    };
    let scheme = GridScheme::new(&p, 2000).unwrap();
    let rep = value_iteration(&scheme, 100_000, 1e-10).unwrap();
    let gaps = rep.compare(&scheme, &s, &[0.5, 1.0, 1.5, 2.0, 3.0]).unwrap();
    let worst = gaps.iter().map(|g| g.relative).fold(0.0, f64::max);
    format!(
        "note: example 2 with the full-line coupling gives a*={:.6} b*={:.6} β₀*={:.4} β₁*={:.6}, VI gap {worst:.2e}",
        s.a_star, s.b_star, s.beta0_star, s.beta1_star
    )
}

fn main() -> ExitCode {
    let mut all = true;
    let mut run = |n: usize, title: &str, f: &dyn Fn() -> Outcome, budget: Option<Duration>| {
        let t = Instant::now();
        let mut o = f();
        let elapsed = t.elapsed();
        if let Some(b) = budget {
            if elapsed >= b {
                o.pass = false;
                o.detail.push_str(&format!(" [over the {:.0}s budget]", b.as_secs_f64()));
            }
        }
        report(n, title, elapsed, &o);
        all &= o.pass;
    };
    run(
        1,
        "example 1 golden values",
        &|| golden(&example1(), [0.18300, 1.15042, 10.8125, -0.695324], 1e-3, Duration::from_secs(1)),
        None,
    );
    run(
        2,
        "example 2 golden values",
        &|| golden(&example2(), [0.781797, 1.66182, 144.313, -2.16941], 1e-2, Duration::from_secs(10)),
        None,
    );
    run(3, "fixed-point and simultaneous solvers agree", &consistency, None);
    run(
        4,
        "value iteration and Monte Carlo agree with the solver",
        &|| {
            let a = oracle_agreement("example 1", &example1(), &[0.1, 0.3, 0.6, 1.0, 2.0], &[0.5, 1.0, 2.0]);
            let b = oracle_agreement("example 2", &example2(), &[0.5, 1.0, 1.5, 2.0, 3.0], &[0.5, 1.2, 2.0]);
            let mut detail = format!("\n    {}\n    {}", a.detail, b.detail);
            if !b.pass {
                detail.push_str(&format!("\n    {}", full_line_note()));
            }
            Outcome {
                pass: a.pass && b.pass,
                detail,
            }
        },
        Some(Duration::from_secs(120)),
    );
    run(5, "invariant suite", &|| {
        let mut o = invariants();
        o.detail = format!("\n    {}", o.detail);
        o
    }, None);
    run(6, "degenerate inputs", &degenerate, None);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
