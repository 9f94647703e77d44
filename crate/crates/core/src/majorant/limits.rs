//! Classification of the boundary limits that decide finiteness of the value.

use std::fmt;

use super::{MajorantError, Parts};
use crate::model::{BoundaryKind, Regime};

const POINTS: usize = 40;
const TAIL: usize = 5;
const ZERO_BELOW: f64 = 1e-8;
const INFINITE_ABOVE: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryLimit {
    Zero,
    FinitePositive(f64),
    Infinite,
    /// Absorbing endpoint; the limit is not needed.
    Absorbing,
}

impl fmt::Display for BoundaryLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryLimit::Zero => f.write_str("zero"),
            BoundaryLimit::FinitePositive(v) => write!(f, "finite_positive({v:e})"),
            BoundaryLimit::Infinite => f.write_str("infinite"),
            BoundaryLimit::Absorbing => f.write_str("absorbing"),
        }
    }
}

/// Ratio sequences evaluated while approaching an endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitAudit {
    pub states: Vec<f64>,
    /// K⁺/D and the fundamental-solution ratio at each state.
    pub ratios: [Vec<f64>; 2],
}

impl fmt::Display for LimitAudit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, x) in self.states.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "x={x:e}: ({:e}, {:e})", self.ratios[0][i], self.ratios[1][i])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLimits {
    pub l_c: BoundaryLimit,
    pub l_d: BoundaryLimit,
    pub audit_c: Option<LimitAudit>,
    pub audit_d: Option<LimitAudit>,
}

impl BoundaryLimits {
    pub fn any_infinite(&self) -> bool {
        self.l_c == BoundaryLimit::Infinite || self.l_d == BoundaryLimit::Infinite
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Class {
    Zero,
    Infinite,
    Finite(f64),
    Inconclusive,
}

fn classify(seq: &[f64]) -> Class {
    let n = seq.len();
    if n < TAIL {
        return Class::Inconclusive;
    }
    let tail = &seq[n - TAIL..];
    let last = seq[n - 1];
    if last.is_nan() {
        return Class::Inconclusive;
    }
    if last > INFINITE_ABOVE {
        return Class::Infinite;
    }
    if tail.iter().all(|&v| v < ZERO_BELOW) {
        return Class::Zero;
    }
    let stable = tail.iter().all(|&v| ((v - last) / last).abs() <= 1e-3);
    let monotone = seq.windows(2).all(|w| w[1] <= w[0]) || seq.windows(2).all(|w| w[1] >= w[0]);
    if stable || monotone {
        return Class::Finite(last);
    }
    Class::Inconclusive
}

fn approach(parts: &Parts, upper: bool) -> Vec<f64> {
    let (lo, hi) = parts.fundamentals(Regime::Closed).domain();
    let (wlo, whi) = parts.problem().window();
    let mid = 0.5 * (wlo + whi);
    let half = 0.5 * (whi - wlo);
    let e = if upper { hi } else { lo };
    let mut xs = Vec::with_capacity(POINTS);
    for k in 0..POINTS {
        let x = if e.is_infinite() {
            if lo >= 0.0 && parts.geometric_scan() {
                10f64.powf(2.5 * (k + 1) as f64)
            } else {
                let step = 0.1 * half * 1.15f64.powi(k as i32);
                if upper {
                    mid + step
                } else {
                    mid - step
                }
            }
        } else {
            e + (mid - e) * 10f64.powf(-2.5 * (k + 1) as f64)
        };
        if x == e || !x.is_finite() {
            break;
        }
        xs.push(x);
    }
    xs
}

fn audit(parts: &Parts, upper: bool) -> Result<LimitAudit, MajorantError> {
    let states = approach(parts, upper);
    let mut ratios = [Vec::new(), Vec::new()];
    for &x in &states {
        let node = parts.node(x)?;
        // at d: K₁⁺/ψ₁ and ψ₀/ψ₁; at c: K₀⁺/φ₀ and φ₁/φ₀
        let (k, den, other) = if upper {
            (node.k_part(Regime::Open).v, node.jets[1].psi.ln, node.jets[0].psi.ln)
        } else {
            (node.k_part(Regime::Closed).v, node.jets[0].phi.ln, node.jets[1].phi.ln)
        };
        let first = if k.is_nan() {
            f64::NAN
        } else if k <= 0.0 {
            0.0
        } else {
            (k.ln() - den).exp()
        };
        ratios[0].push(first);
        ratios[1].push((other - den).exp());
    }
    Ok(LimitAudit { states, ratios })
}

fn endpoint(parts: &Parts, upper: bool) -> Result<(BoundaryLimit, Option<LimitAudit>), MajorantError> {
    let iv = &parts.problem().interval;
    let kind = if upper { iv.upper_kind } else { iv.lower_kind };
    if kind == BoundaryKind::Absorbing {
        return Ok((BoundaryLimit::Absorbing, None));
    }
    let a = audit(parts, upper)?;
    let c = [classify(&a.ratios[0]), classify(&a.ratios[1])];
    let limit = if c.contains(&Class::Infinite) {
        BoundaryLimit::Infinite
    } else if c.contains(&Class::Inconclusive) {
        return Err(MajorantError::InconclusiveLimit {
            endpoint: if upper { "upper" } else { "lower" },
            audit: a,
        });
    } else if c == [Class::Zero, Class::Zero] {
        BoundaryLimit::Zero
    } else {
        let v = c
            .iter()
            .map(|k| match k {
                Class::Finite(v) => *v,
                _ => 0.0,
            })
            .fold(0.0, f64::max);
        BoundaryLimit::FinitePositive(v)
    };
    Ok((limit, Some(a)))
}

/// Classifies l_c and l_d through the ratio tests K⁺/D and the ratio of
/// fundamental solutions along a sequence approaching each natural endpoint.
pub fn classify_boundary_limits(parts: &Parts) -> Result<BoundaryLimits, MajorantError> {
    let (l_c, audit_c) = endpoint(parts, false)?;
    let (l_d, audit_d) = endpoint(parts, true)?;
    Ok(BoundaryLimits {
        l_c,
        l_d,
        audit_c,
        audit_d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_problem, Cost, Family, Interval, RegimeSpec, Reward, SwitchingProblem};

    #[test]
    fn example_one_limits_vanish() {
        let parts = Parts::new(&super::super::tests::example1()).unwrap();
        let l = classify_boundary_limits(&parts).unwrap();
        assert_eq!((l.l_c, l.l_d), (BoundaryLimit::Zero, BoundaryLimit::Zero));
        assert_eq!(l.audit_d.unwrap().states.len(), 40);
    }

    #[test]
    fn fast_growing_reward_gives_infinite_upper_limit() {
        let p = validate_problem(SwitchingProblem {
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
        .unwrap();
        let l = classify_boundary_limits(&Parts::new(&p).unwrap()).unwrap();
        assert_eq!(l.l_d, BoundaryLimit::Infinite);
        assert!(l.any_infinite());
    }

    #[test]
    fn classification_rules() {
        let decay: Vec<f64> = (0..40).map(|k| 10f64.powi(-k)).collect();
        assert!(classify(&decay) == Class::Zero);
        let grow: Vec<f64> = (0..40).map(|k| 10f64.powi(k)).collect();
        assert!(classify(&grow) == Class::Infinite);
        let flat = vec![0.5; 40];
        assert!(classify(&flat) == Class::Finite(0.5));
        let slow: Vec<f64> = (0..40).map(|k| 0.9f64.powi(k)).collect();
        assert!(classify(&slow) == Class::Finite(0.9f64.powi(39)));
        let wobble: Vec<f64> = (0..40).map(|k| if k % 2 == 0 { 1.0 } else { 2.0 }).collect();
        assert!(classify(&wobble) == Class::Inconclusive);
    }
}
