//! Expected discounted reward when never switching out of a regime.

use thiserror::Error;

use crate::fundamentals::{Fundamentals, FundamentalsError};
use crate::model::{Family, Regime, Reward, ValidatedProblem};
use crate::quadrature::{exp_sinh, tanh_sinh, QuadOptions, QuadResult, QuadratureError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoSwitchError {
    #[error("the resolvent integral for the {regime} regime diverges at x = {x} ({reason})")]
    ResolventDivergence { regime: Regime, x: f64, reason: String },
    #[error(transparent)]
    Fundamentals(#[from] FundamentalsError),
}

/// Value, first and second derivative at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueJet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Recognised closed forms of g.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoSwitchForm {
    /// g = slope·x + intercept
    Affine { slope: f64, intercept: f64 },
    /// g = coef·x^exponent
    Power { coef: f64, exponent: f64 },
}

#[derive(Debug, Clone)]
pub struct NoSwitchValue {
    regime: Regime,
    closed_form: Option<NoSwitchForm>,
    reward: Reward,
    family: Family,
    discount: f64,
    fundamentals: Fundamentals,
}

fn closed_form(family: &Family, reward: &Reward, alpha: f64, regime: Regime) -> Result<Option<NoSwitchForm>, NoSwitchError> {
    let form = match (family, reward) {
        (_, Reward::Zero) => NoSwitchForm::Affine {
            slope: 0.0,
            intercept: 0.0,
        },
        (Family::GeometricBM { drift, .. }, Reward::Affine { slope, intercept }) => NoSwitchForm::Affine {
            slope: slope / (alpha - drift),
            intercept: intercept / alpha,
        },
        (
            Family::OrnsteinUhlenbeck {
                reversion_speed, level, ..
            },
            Reward::Affine { slope, intercept },
        ) => {
            // g = k(x − L)/(κ + α) + (kL + c)/α
            let s = slope / (reversion_speed + alpha);
            NoSwitchForm::Affine {
                slope: s,
                intercept: -s * level + (slope * level + intercept) / alpha,
            }
        }
        (Family::GeometricBM { drift, vol }, Reward::Power { coef, exponent }) => {
            let p = *exponent;
            let denom = alpha - drift * p - 0.5 * vol * vol * p * (p - 1.0);
            if denom <= 0.0 {
                return Err(NoSwitchError::ResolventDivergence {
                    regime,
                    x: f64::NAN,
                    reason: format!("growth rate of x^{p} reaches the discount rate"),
                });
            }
            NoSwitchForm::Power {
                coef: coef / denom,
                exponent: p,
            }
        }
        _ => return Ok(None),
    };
    Ok(Some(form))
}

/// Builds g for `regime`, given that regime's fundamentals.
pub fn no_switch_value(
    problem: &ValidatedProblem,
    regime: Regime,
    fundamentals: &Fundamentals,
) -> Result<NoSwitchValue, NoSwitchError> {
    let family = problem.regime(regime).family.clone();
    let reward = problem.reward(regime).clone();
    let closed_form = closed_form(&family, &reward, problem.discount, regime)?;
    Ok(NoSwitchValue {
        regime,
        closed_form,
        reward,
        family,
        discount: problem.discount,
        fundamentals: fundamentals.clone(),
    })
}

impl NoSwitchValue {
    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn closed_form(&self) -> Option<NoSwitchForm> {
        self.closed_form
    }

    pub fn value(&self, x: f64) -> Result<f64, NoSwitchError> {
        match self.closed_form {
            Some(form) => Ok(eval_form(form, x).0),
            None => self.green(x).map(|(v, _)| v),
        }
    }

    /// g, g' and g'' (the latter from the ODE (𝒜 − α)g + f = 0).
    pub fn jet(&self, x: f64) -> Result<ValueJet, NoSwitchError> {
        match self.closed_form {
            Some(form) => {
                let (v, d1, d2) = eval_form(form, x);
                Ok(ValueJet { v, d1, d2 })
            }
            None => {
                let (v, d1) = self.green(x)?;
                let (m, s) = (self.family.drift(x), self.family.vol(x));
                let d2 = 2.0 * (self.discount * v - m * d1 - self.reward.eval(x)) / (s * s);
                Ok(ValueJet { v, d1, d2 })
            }
        }
    }

    /// Green-function representation
    /// g(x) = φ(x)∫_lo^x 2fψ/(σ²W) dy + ψ(x)∫_x^hi 2fφ/(σ²W) dy, W = ψ'φ − ψφ'.
    /// Returns (g, g').
    fn green(&self, x: f64) -> Result<(f64, f64), NoSwitchError> {
        let fx = self.fundamentals.jet(x)?;
        let (lo, hi) = self.fundamentals.domain();
        let diverge = |reason: String| NoSwitchError::ResolventDivergence {
            regime: self.regime,
            x,
            reason,
        };
        let opts = QuadOptions {
            rel_tol: 1e-11,
            abs_tol: 1e-300,
            max_level: 12,
        };
        // integrand with the x-dependent factor folded in through log ratios
        let kernel = |y: f64, left: bool| -> f64 {
            let Ok(j) = self.fundamentals.jet(y) else {
                return f64::NAN;
            };
            let s = self.family.vol(y);
            let ratio = if left {
                (fx.phi.ln - j.phi.ln).exp()
            } else {
                (fx.psi.ln - j.psi.ln).exp()
            };
            // ordered to avoid underflow of σ² near zero
            2.0 * self.reward.eval(y) * ratio / s / (s * (j.psi.s - j.phi.s))
        };
        let wrap = |r: Result<QuadResult, QuadratureError>| -> Result<f64, NoSwitchError> {
            match r {
                Ok(q) if q.value.is_finite() => Ok(q.value),
                Ok(q) => Err(diverge(format!("non-finite integral {}", q.value))),
                Err(e) => Err(diverge(e.to_string())),
            }
        };
        let left = if lo.is_finite() {
            wrap(tanh_sinh(|y| kernel(y, true), lo, x, &opts))?
        } else {
            wrap(exp_sinh(|t| kernel(-t, true), -x, &opts))?
        };
        let right = if hi.is_finite() {
            wrap(tanh_sinh(|y| kernel(y, false), x, hi, &opts))?
        } else {
            wrap(exp_sinh(|y| kernel(y, false), x, &opts))?
        };
        Ok((left + right, fx.phi.s * left + fx.psi.s * right))
    }
}

fn eval_form(form: NoSwitchForm, x: f64) -> (f64, f64, f64) {
    match form {
        NoSwitchForm::Affine { slope, intercept } => (slope * x + intercept, slope, 0.0),
        NoSwitchForm::Power { coef, exponent: p } => {
            let v = coef * x.powf(p);
            (v, p * v / x, p * (p - 1.0) * v / (x * x))
        }
    }
}
