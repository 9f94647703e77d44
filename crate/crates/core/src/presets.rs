//! Ready-made problems.

use crate::model::{
    validate_problem, Cost, Family, Interval, ModelError, Regime, RegimeSpec, Reward, SwitchingProblem, ValidatedProblem,
};

/// Geometric Brownian price with a production stream that lowers the drift
/// by `lambda` while open; running reward x − k when open, 0 when closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub rho: f64,
    pub k: f64,
    /// Cost of opening.
    pub l: f64,
    /// Cost of closing.
    pub c: f64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta: 0.25,
            lambda: 0.01,
            rho: 0.05,
            k: 0.4,
            l: 2.0,
            c: 2.0,
        }
    }
}

pub fn resource_extraction(p: ExtractionParams) -> Result<ValidatedProblem, ModelError> {
    validate_problem(SwitchingProblem {
        closed: RegimeSpec::new(
            Regime::Closed,
            Family::GeometricBM {
                drift: p.alpha,
                vol: p.beta,
            },
        ),
        open: RegimeSpec::new(
            Regime::Open,
            Family::GeometricBM {
                drift: p.alpha - p.lambda,
                vol: p.beta,
            },
        ),
        reward_closed: Reward::Zero,
        reward_open: Reward::Affine {
            slope: 1.0,
            intercept: -p.k,
        },
        cost_open: Cost::Constant(p.l),
        cost_close: Cost::Constant(p.c),
        discount: p.rho,
        interval: Interval::positive_half_line(),
        window: None,
    })
}

/// Mean-reverting state with level `m`, shifted down by `lambda` while open
/// (rent folded into the drift), absorbed at zero; reward x − k when open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RentalParams {
    pub m: f64,
    /// Discount rate.
    pub alpha: f64,
    pub sigma: f64,
    /// Mean-reversion speed.
    pub delta: f64,
    pub lambda: f64,
    pub k: f64,
    pub l: f64,
    pub c: f64,
}

impl Default for RentalParams {
    fn default() -> Self {
        Self {
            m: 5.0,
            alpha: 0.105,
            sigma: 0.35,
            delta: 0.05,
            lambda: 4.0,
            k: 0.4,
            l: 0.2,
            c: 0.2,
        }
    }
}

pub fn rented_capacity(p: RentalParams) -> Result<ValidatedProblem, ModelError> {
    let ou = |level| Family::OrnsteinUhlenbeck {
        reversion_speed: p.delta,
        level,
        vol: p.sigma,
    };
    validate_problem(SwitchingProblem {
        closed: RegimeSpec::new(Regime::Closed, ou(p.m)),
        open: RegimeSpec::new(Regime::Open, ou(p.m - p.lambda)),
        reward_closed: Reward::Zero,
        reward_open: Reward::Affine {
            slope: 1.0,
            intercept: -p.k,
        },
        cost_open: Cost::Constant(p.l),
        cost_close: Cost::Constant(p.c),
        discount: p.alpha,
        interval: Interval::positive_half_line().with_lower_absorbing(),
        window: None,
    })
}
