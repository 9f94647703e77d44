//! Monte Carlo evaluation of threshold policies.
//!
//! Built-in families are sampled with exact transitions over coarse steps of
//! `dt·2^k`. A step is accepted whole when its endpoints lie on the
//! continuation side and the Brownian-bridge probability of touching a
//! threshold or an absorbing endpoint in between is negligible; otherwise
//! the step is bisected by exact bridge sampling down to `dt`, where the
//! policy is applied. This reproduces a policy monitored on the `dt` grid
//! while sampling only where a switch is plausible. Running rewards over an
//! accepted step use the bridge mean of f(X_s) with Gauss–Legendre nodes
//! (trapezoid on steps of a few dt).
//! Custom families fall back to Euler steps of size `dt`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::grid::OracleError;
use crate::model::{BoundaryKind, Family, Regime, Reward, ThresholdPolicy, ValidatedProblem};

/// Largest coarse step, in multiples of dt, as a power of two.
const MAX_LEVEL: u32 = 12;
/// Bridge-crossing probability below which a step is accepted unsplit.
const CROSSING_EPS: f64 = 1e-7;
/// Paths are truncated once the discount factor falls below this.
const DISCOUNT_FLOOR: f64 = 1e-10;
const BATCH: usize = 1000;
/// Steps of at most this many dt use the trapezoid rule for the reward.
const SHORT_STEP: u64 = 8;

// 8-point Gauss–Legendre on [-1, 1]
const GL_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

#[derive(Debug, Clone, Copy)]
pub struct SimulationConfig {
    pub paths: usize,
    pub dt: f64,
    /// Time horizon; defaults to the time at which the discount factor
    /// reaches 1e-10.
    pub horizon: Option<f64>,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            dt: 1e-3,
            horizon: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub mean_switches: f64,
    pub max_switches: u64,
    /// Fraction of paths stopped at an absorbing endpoint.
    pub absorbed_fraction: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    sum: f64,
    sum_sq: f64,
    n: usize,
    switches: u64,
    max_switches: u64,
    absorbed: usize,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.n += o.n;
        self.switches += o.switches;
        self.max_switches = self.max_switches.max(o.max_switches);
        self.absorbed += o.absorbed;
        self
    }
}

/// Exact-transition family description.
#[derive(Debug, Clone, Copy, Default)]
struct Weights {
    a: f64,
    b: f64,
    var: f64,
}

/// Bridge coefficients for a step of dt·2^k.
#[derive(Debug, Clone, Copy)]
struct Level {
    h: f64,
    mid: Weights,
    nodes: [Weights; 8],
    node_disc: [f64; 8],
    end_disc: f64,
}

impl Level {
    fn new(dy: &Dynamics, h: f64, alpha: f64) -> Self {
        let mut nodes = [Weights::default(); 8];
        let mut node_disc = [0.0; 8];
        for (i, xi) in GL_X.iter().enumerate() {
            let u = 0.5 * h * (xi + 1.0);
            nodes[i] = dy.weights(h, u);
            node_disc[i] = GL_W[i] * (-alpha * u).exp();
        }
        Self {
            h,
            mid: dy.weights(h, 0.5 * h),
            nodes,
            node_disc,
            end_disc: (-alpha * h).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Dynamics {
    Gbm { drift: f64, vol: f64 },
    Ou { speed: f64, level: f64, vol: f64 },
}

impl Dynamics {
    fn of(f: &Family) -> Option<Self> {
        match f {
            Family::GeometricBM { drift, vol } => Some(Dynamics::Gbm { drift: *drift, vol: *vol }),
            Family::OrnsteinUhlenbeck {
                reversion_speed,
                level,
                vol,
            } => Some(Dynamics::Ou {
                speed: *reversion_speed,
                level: *level,
                vol: *vol,
            }),
            Family::Custom { .. } => None,
        }
    }

    /// Coordinate in which the bridge is (close to) Brownian.
    fn z(&self, x: f64) -> f64 {
        match self {
            Dynamics::Gbm { .. } => x.ln(),
            Dynamics::Ou { .. } => x,
        }
    }

    fn z_vol(&self) -> f64 {
        match self {
            Dynamics::Gbm { vol, .. } | Dynamics::Ou { vol, .. } => *vol,
        }
    }

    fn transition(&self, x: f64, h: f64, n: f64) -> f64 {
        match *self {
            Dynamics::Gbm { drift, vol } => x * ((drift - 0.5 * vol * vol) * h + vol * h.sqrt() * n).exp(),
            Dynamics::Ou { speed, level, vol } => {
                let e = (-speed * h).exp();
                level + (x - level) * e + vol * ((1.0 - e * e) / (2.0 * speed)).sqrt() * n
            }
        }
    }

    /// Point the bridge mean is taken relative to, in z.
    fn center(&self) -> f64 {
        match *self {
            Dynamics::Gbm { .. } => 0.0,
            Dynamics::Ou { level, .. } => level,
        }
    }

    /// Bridge weights at offset u within a step of length h.
    fn weights(&self, h: f64, u: f64) -> Weights {
        match *self {
            Dynamics::Gbm { vol, .. } => Weights {
                a: (h - u) / h,
                b: u / h,
                var: vol * vol * u * (h - u) / h,
            },
            Dynamics::Ou { speed, vol, .. } => {
                let s = (speed * h).sinh();
                let (su, sr) = ((speed * u).sinh(), (speed * (h - u)).sinh());
                Weights {
                    a: sr / s,
                    b: su / s,
                    var: vol * vol * su * sr / (speed * s),
                }
            }
        }
    }

    /// Mean and variance of the bridge state (in z for GBM, x for OU).
    fn moments(&self, w: &Weights, z0: f64, z1: f64) -> (f64, f64) {
        let c = self.center();
        (c + (z0 - c) * w.a + (z1 - c) * w.b, w.var)
    }

    #[cfg(test)]
    fn bridge(&self, x0: f64, x1: f64, h: f64, u: f64) -> (f64, f64) {
        self.moments(&self.weights(h, u), self.z(x0), self.z(x1))
    }

    fn state(&self, z: f64) -> f64 {
        match self {
            Dynamics::Gbm { .. } => z.exp(),
            Dynamics::Ou { .. } => z,
        }
    }

    /// E[f(X_s)] for a bridge marginal with the given mean/variance.
    fn expected_reward(&self, reward: &Reward, mean: f64, var: f64) -> f64 {
        match (self, reward) {
            (_, Reward::Zero) => 0.0,
            (Dynamics::Gbm { .. }, Reward::Affine { slope, intercept }) => slope * (mean + 0.5 * var).exp() + intercept,
            (Dynamics::Gbm { .. }, Reward::Power { coef, exponent: p }) => coef * (p * mean + 0.5 * p * p * var).exp(),
            (Dynamics::Ou { .. }, Reward::Affine { slope, intercept }) => slope * mean + intercept,
            (Dynamics::Gbm { .. }, r) => second_order(|z: f64| r.eval(z.exp()), mean, var),
            (Dynamics::Ou { .. }, r) => second_order(|x: f64| r.eval(x), mean, var),
        }
    }
}

/// E f(Z) ≈ f(m) + ½ f''(m) v for Z with mean m and variance v.
fn second_order<F: Fn(f64) -> f64>(f: F, m: f64, v: f64) -> f64 {
    if v <= 0.0 {
        return f(m);
    }
    let h = 1e-3 * m.abs().max(1e-3);
    let d2 = (f(m + h) - 2.0 * f(m) + f(m - h)) / (h * h);
    f(m) + 0.5 * d2 * v
}

/// P(a Brownian bridge from z0 to z1 over time h with volatility s touches
/// the level `barrier`).
fn crossing(z0: f64, z1: f64, barrier: f64, s: f64, h: f64) -> f64 {
    let (d0, d1) = (barrier - z0, barrier - z1);
    if d0 * d1 <= 0.0 {
        return 1.0;
    }
    (-2.0 * d0 * d1 / (s * s * h)).exp()
}

struct Sim<'a> {
    problem: &'a ValidatedProblem,
    policy: ThresholdPolicy,
    dt: f64,
    alpha: f64,
    horizon_steps: u64,
    dynamics: [Option<Dynamics>; 2],
    levels: [Vec<Level>; 2],
    /// Absorbing endpoints.
    lower: Option<f64>,
    upper: Option<f64>,
}

enum Flow {
    Continue,
    Switch { k: u64, x: f64 },
    Absorbed,
}

struct PathState {
    value: f64,
    switches: u64,
}

impl Sim<'_> {
    fn disc(&self, k: u64) -> f64 {
        (-self.alpha * k as f64 * self.dt).exp()
    }

    fn switching_side(&self, r: Regime, x: f64) -> bool {
        self.policy.target(r, x) != r
    }

    fn barrier(&self, r: Regime) -> f64 {
        match r {
            Regime::Closed => self.policy.b,
            Regime::Open => self.policy.a,
        }
    }

    fn beyond_endpoint(&self, x: f64) -> bool {
        self.lower.is_some_and(|c| x <= c) || self.upper.is_some_and(|d| x >= d)
    }

    fn level(&self, r: Regime, k0: u64, k1: u64) -> &Level {
        &self.levels[r.index()][(k1 - k0).trailing_zeros() as usize]
    }

    /// ∫ e^{−αs} E[f(X_s) | endpoints] ds over the step.
    fn step_reward(&self, dy: &Dynamics, r: Regime, k0: u64, k1: u64, x0: f64, x1: f64) -> f64 {
        let reward = self.problem.reward(r);
        if matches!(reward, Reward::Zero) {
            return 0.0;
        }
        let lv = self.level(r, k0, k1);
        let (z0, z1) = (dy.z(x0), dy.z(x1));
        let d0 = self.disc(k0);
        if k1 - k0 <= SHORT_STEP {
            let f0 = dy.expected_reward(reward, z0, 0.0);
            let f1 = dy.expected_reward(reward, z1, 0.0);
            return 0.5 * lv.h * d0 * (f0 + lv.end_disc * f1);
        }
        let mut acc = 0.0;
        for (w, dw) in lv.nodes.iter().zip(lv.node_disc) {
            let (m, v) = dy.moments(w, z0, z1);
            acc += dw * dy.expected_reward(reward, m, v);
        }
        0.5 * lv.h * d0 * acc
    }

    fn interval<R: Rng>(
        &self,
        dy: &Dynamics,
        r: Regime,
        (k0, x0): (u64, f64),
        (k1, x1): (u64, f64),
        st: &mut PathState,
        rng: &mut R,
    ) -> Flow {
        let leaf = k1 - k0 == 1;
        let h = (k1 - k0) as f64 * self.dt;
        let s = dy.z_vol();
        let (z0, z1) = (dy.z(x0), dy.z(x1));
        let p_switch = crossing(z0, z1, dy.z(self.barrier(r)), s, h);
        let beyond = self.beyond_endpoint(x1);
        let p_abs = if beyond {
            1.0
        } else {
            let lo = self.lower.map_or(0.0, |c| match dy {
                Dynamics::Gbm { .. } => 0.0,
                Dynamics::Ou { .. } => crossing(z0, z1, c, s, h),
            });
            let hi = self.upper.map_or(0.0, |d| crossing(z0, z1, dy.z(d), s, h));
            lo.max(hi)
        };
        if !leaf && (p_switch > CROSSING_EPS || p_abs > CROSSING_EPS || self.switching_side(r, x1)) {
            let km = k0 + (k1 - k0) / 2;
            let (m, v) = dy.moments(&self.level(r, k0, k1).mid, z0, z1);
            let xm = dy.state(m + v.sqrt() * rng.sample::<f64, _>(StandardNormal));
            if self.beyond_endpoint(xm) {
                // the path left the state space in the first half
                let rew = self.step_reward(dy, r, k0, km, x0, x0);
                st.value += rew;
                return Flow::Absorbed;
            }
            match self.interval(dy, r, (k0, x0), (km, xm), st, rng) {
                Flow::Continue => {}
                other => return other,
            }
            return self.interval(dy, r, (km, xm), (k1, x1), st, rng);
        }
        if beyond {
            st.value += 0.5 * self.step_reward(dy, r, k0, k1, x0, x0);
            return Flow::Absorbed;
        }
        if leaf && p_abs > 0.0 && rng.random::<f64>() < p_abs {
            st.value += 0.5 * self.step_reward(dy, r, k0, k1, x0, x1);
            return Flow::Absorbed;
        }
        st.value += self.step_reward(dy, r, k0, k1, x0, x1);
        if leaf && self.switching_side(r, x1) {
            return Flow::Switch { k: k1, x: x1 };
        }
        Flow::Continue
    }

    fn switch_now(&self, r: Regime, k: u64, x: f64, st: &mut PathState) -> Regime {
        let to = r.other();
        st.value -= self.disc(k) * self.problem.cost_into(to).eval(x);
        st.switches += 1;
        to
    }

    fn path<R: Rng>(&self, x0: f64, start: Regime, rng: &mut R) -> (PathState, bool) {
        let mut st = PathState { value: 0.0, switches: 0 };
        let (mut k, mut x, mut r) = (0u64, x0, start);
        if self.switching_side(r, x) {
            r = self.switch_now(r, k, x, &mut st);
        }
        while k < self.horizon_steps {
            match self.dynamics[r.index()] {
                Some(dy) => {
                    let span = (1u64 << MAX_LEVEL).min(self.horizon_steps - k);
                    let span = if span.is_power_of_two() { span } else { span.next_power_of_two() / 2 };
                    let x1 = dy.transition(x, span as f64 * self.dt, rng.sample(StandardNormal));
                    match self.interval(&dy, r, (k, x), (k + span, x1), &mut st, rng) {
                        Flow::Continue => {
                            k += span;
                            x = x1;
                        }
                        Flow::Switch { k: ks, x: xs } => {
                            k = ks;
                            x = xs;
                            r = self.switch_now(r, k, x, &mut st);
                        }
                        Flow::Absorbed => return (st, true),
                    }
                }
                None => {
                    let fam = &self.problem.regime(r).family;
                    let d = self.disc(k);
                    st.value += d * self.problem.reward(r).eval(x) * self.dt;
                    let n: f64 = rng.sample(StandardNormal);
                    x += fam.drift(x) * self.dt + fam.vol(x) * self.dt.sqrt() * n;
                    k += 1;
                    if self.beyond_endpoint(x) {
                        return (st, true);
                    }
                    if self.switching_side(r, x) {
                        r = self.switch_now(r, k, x, &mut st);
                    }
                }
            }
        }
        (st, false)
    }
}

/// Estimates the expected discounted reward of `policy` from (x0, start).
pub fn simulate_policy(
    problem: &ValidatedProblem,
    policy: ThresholdPolicy,
    x0: f64,
    start: Regime,
    config: &SimulationConfig,
) -> Result<SimulationEstimate, OracleError> {
    let alpha = problem.discount;
    let horizon = config.horizon.unwrap_or(-DISCOUNT_FLOOR.ln() / alpha);
    if !(config.dt > 0.0) || !horizon.is_finite() {
        return Err(OracleError::SchemeUnstable {
            x: x0,
            reason: format!("dt = {}, horizon = {horizon}", config.dt),
        });
    }
    let iv = &problem.interval;
    let dynamics = [Dynamics::of(&problem.closed.family), Dynamics::of(&problem.open.family)];
    let levels = dynamics.map(|d| {
        d.map_or_else(Vec::new, |d| {
            (0..=MAX_LEVEL)
                .map(|k| Level::new(&d, config.dt * (1u64 << k) as f64, alpha))
                .collect()
        })
    });
    let sim = Sim {
        problem,
        policy,
        dt: config.dt,
        alpha,
        horizon_steps: (horizon / config.dt).ceil() as u64,
        dynamics,
        levels,
        lower: (iv.lower_kind == BoundaryKind::Absorbing).then_some(iv.lower),
        upper: (iv.upper_kind == BoundaryKind::Absorbing).then_some(iv.upper),
    };
    let batches = config.paths.div_ceil(BATCH);
    let tallies: Vec<Tally> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(b as u64);
            let n = BATCH.min(config.paths - b * BATCH);
            let mut t = Tally::default();
            for _ in 0..n {
                let (st, absorbed) = sim.path(x0, start, &mut rng);
                t.sum += st.value;
                t.sum_sq += st.value * st.value;
                t.n += 1;
                t.switches += st.switches;
                t.max_switches = t.max_switches.max(st.switches);
                t.absorbed += absorbed as usize;
            }
            t
        })
        .collect();
    let total = tallies.into_iter().fold(Tally::default(), Tally::merge);
    let n = total.n as f64;
    let (mean, std_error) = if total.n == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let mean = total.sum / n;
        let var = if total.n > 1 {
            ((total.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            f64::NAN
        };
        (mean, (var / n).sqrt())
    };
    Ok(SimulationEstimate {
        mean,
        std_error,
        paths: total.n,
        dt: config.dt,
        horizon,
        seed: config.seed,
        mean_switches: total.switches as f64 / n,
        max_switches: total.max_switches,
        absorbed_fraction: total.absorbed as f64 / n,
    })
}
