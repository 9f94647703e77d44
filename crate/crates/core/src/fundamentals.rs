//! Increasing and decreasing fundamental solutions ψ, φ of (𝒜 − α)u = 0
//! for one regime, and the coordinate changes F = ψ/φ and G = −φ/ψ.
//!
//! Every evaluation goes through logarithms: a [`FunJet`] carries ln u, the
//! log-derivative u'/u and its derivative, which is all the majorant and
//! value computations need without overflowing far from the centre.

use std::f64::consts::LN_2;
use std::sync::Arc;

use thiserror::Error;

use crate::model::{BoundaryKind, Family, Regime, ValidatedProblem};
use crate::ode::{dormand_prince, OdeError, OdeOptions, Trajectory};
use crate::roots::{safeguarded_newton, RootOptions};
use crate::specialfn::{ln_hermite, SpecialFnError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FundamentalsError {
    #[error("state {x} lies outside the domain ({lower}, {upper})")]
    OutOfDomain { x: f64, lower: f64, upper: f64 },
    #[error("transformed coordinate {y} is outside the range of the transform")]
    OutOfRange { y: f64 },
    #[error(transparent)]
    SpecialFunction(#[from] SpecialFnError),
    #[error("could not construct fundamental solutions for the {regime} regime: {reason}")]
    UnsupportedRegime { regime: Regime, reason: String },
}

/// ln u, s = u'/u and s' at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunJet {
    pub ln: f64,
    pub s: f64,
    pub ds: f64,
}

impl FunJet {
    pub fn value(&self) -> f64 {
        self.ln.exp()
    }

    pub fn d1(&self) -> f64 {
        self.value() * self.s
    }

    pub fn d2(&self) -> f64 {
        self.value() * (self.ds + self.s * self.s)
    }
}

/// ψ and φ jets at the same state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairJet {
    pub x: f64,
    pub psi: FunJet,
    pub phi: FunJet,
}

impl PairJet {
    pub fn ln_f(&self) -> f64 {
        self.psi.ln - self.phi.ln
    }

    /// F = ψ/φ.
    pub fn f(&self) -> f64 {
        self.ln_f().exp()
    }

    /// G = −φ/ψ.
    pub fn g(&self) -> f64 {
        -(-self.ln_f()).exp()
    }

    /// (F, F', F'').
    pub fn f_derivs(&self) -> (f64, f64, f64) {
        let f = self.f();
        let w = self.psi.s - self.phi.s;
        let dw = self.psi.ds - self.phi.ds;
        let f1 = f * w;
        (f, f1, f1 * w + f * dw)
    }

    /// (G, G', G'').
    pub fn g_derivs(&self) -> (f64, f64, f64) {
        let g = self.g();
        let w = self.phi.s - self.psi.s;
        let dw = self.phi.ds - self.psi.ds;
        let g1 = g * w;
        (g, g1, g1 * w + g * dw)
    }
}

/// Closed-form description of a built-in regime's fundamentals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm {
    /// ψ = x^{nu_plus}, φ = x^{nu_minus}, nu_± = (−μ + σ²/2 ± delta)/σ².
    GbmExponents { nu_plus: f64, nu_minus: f64, delta: f64 },
    /// ψ = e^{δp²/2} D_ν(−p√(2δ)), φ = e^{δp²/2} D_ν(p√(2δ)), p = (x − center)/scale.
    OuCylinder { nu: f64, center: f64, scale: f64 },
}

#[derive(Debug, Clone)]
enum Kind {
    Power {
        plus: f64,
        minus: f64,
        delta: f64,
    },
    Cylinder {
        nu: f64,
        center: f64,
        scale: f64,
        sqrt_speed: f64,
    },
    Numeric(Arc<NumericPair>),
}

/// Dense ODE solutions of the Riccati equation for s = u'/u.
#[derive(Debug)]
struct NumericPair {
    psi: Trajectory<2>,
    phi: Trajectory<2>,
}

/// Fundamental solutions of one regime.
#[derive(Debug, Clone)]
pub struct Fundamentals {
    regime: Regime,
    family: Family,
    discount: f64,
    lower: f64,
    upper: f64,
    lower_kind: BoundaryKind,
    upper_kind: BoundaryKind,
    kind: Kind,
}

/// Positive root of (σ²/2)s² + μs − α = 0 (sign +) or the negative one.
fn wkb_root(mu: f64, sigma: f64, alpha: f64, sign: f64) -> f64 {
    let s2 = sigma * sigma;
    (-mu + sign * (mu * mu + 2.0 * alpha * s2).sqrt()) / s2
}

/// Builds ψ and φ for `regime`.
pub fn build_fundamentals(problem: &ValidatedProblem, regime: Regime) -> Result<Fundamentals, FundamentalsError> {
    let spec = problem.regime(regime);
    let alpha = problem.discount;
    let iv = problem.interval;
    let (mut lower, mut upper) = (iv.lower, iv.upper);
    let kind = match &spec.family {
        Family::GeometricBM { drift, vol } => {
            let s2 = vol * vol;
            let delta = ((drift - 0.5 * s2).powi(2) + 2.0 * alpha * s2).sqrt();
            Kind::Power {
                plus: (-drift + 0.5 * s2 + delta) / s2,
                minus: (-drift + 0.5 * s2 - delta) / s2,
                delta,
            }
        }
        Family::OrnsteinUhlenbeck {
            reversion_speed,
            level,
            vol,
        } => Kind::Cylinder {
            nu: -alpha / reversion_speed,
            center: *level,
            scale: *vol,
            sqrt_speed: reversion_speed.sqrt(),
        },
        Family::Custom { drift, vol } => {
            let (lo, hi) = problem.window();
            lower = lo;
            upper = hi;
            let width = hi - lo;
            let opts = OdeOptions {
                max_step: width / 20000.0,
                ..OdeOptions::default()
            };
            let rhs = |x: f64, y: &[f64; 2]| {
                let (m, s) = (drift.eval(x), vol.eval(x));
                [y[1], 2.0 * (alpha - m * y[1]) / (s * s) - y[1] * y[1]]
            };
            let fail = |e: OdeError| FundamentalsError::UnsupportedRegime {
                regime,
                reason: e.to_string(),
            };
            let s_lo = wkb_root(drift.eval(lo), vol.eval(lo), alpha, 1.0);
            let s_hi = wkb_root(drift.eval(hi), vol.eval(hi), alpha, -1.0);
            let mut psi = dormand_prince(rhs, lo, [0.0, s_lo], hi, &opts).map_err(fail)?;
            let mut phi = dormand_prince(rhs, hi, [0.0, s_hi], lo, &opts).map_err(fail)?;
            let mid = 0.5 * (lo + hi);
            for tr in [&mut psi, &mut phi] {
                let shift = tr.eval(mid).0[0];
                for y in tr.y.iter_mut() {
                    y[0] -= shift;
                }
            }
            let ok = psi.y.iter().all(|y| y[1] > 0.0) && phi.y.iter().all(|y| y[1] < 0.0);
            if !ok {
                return Err(FundamentalsError::UnsupportedRegime {
                    regime,
                    reason: "integrated solutions lost monotonicity".into(),
                });
            }
            Kind::Numeric(Arc::new(NumericPair { psi, phi }))
        }
    };
    Ok(Fundamentals {
        regime,
        family: spec.family.clone(),
        discount: alpha,
        lower,
        upper,
        lower_kind: iv.lower_kind,
        upper_kind: iv.upper_kind,
        kind,
    })
}

impl Fundamentals {
    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Domain on which ψ and φ are defined.
    pub fn domain(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn closed_form(&self) -> Option<ClosedForm> {
        match &self.kind {
            Kind::Power { plus, minus, delta } => Some(ClosedForm::GbmExponents {
                nu_plus: *plus,
                nu_minus: *minus,
                delta: *delta,
            }),
            Kind::Cylinder { nu, center, scale, .. } => Some(ClosedForm::OuCylinder {
                nu: *nu,
                center: *center,
                scale: *scale,
            }),
            Kind::Numeric(_) => None,
        }
    }

    /// s' from the ODE: u''/u − s² with u'' = 2(αu − μu')/σ².
    fn riccati(&self, x: f64, s: f64) -> f64 {
        let (m, v) = (self.family.drift(x), self.family.vol(x));
        2.0 * (self.discount - m * s) / (v * v) - s * s
    }

    fn check_domain(&self, x: f64) -> Result<(), FundamentalsError> {
        let lower_ok = x > self.lower || (x == self.lower && self.lower.is_finite() && self.endpoint_ok());
        let upper_ok = x < self.upper || (x == self.upper && self.upper.is_finite() && self.endpoint_ok());
        if lower_ok && upper_ok {
            Ok(())
        } else {
            Err(FundamentalsError::OutOfDomain {
                x,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    fn endpoint_ok(&self) -> bool {
        // closed forms extend past finite endpoints; power functions do not reach 0
        match &self.kind {
            Kind::Power { .. } => self.lower > 0.0,
            _ => true,
        }
    }

    fn power_jet(x: f64, e: f64) -> FunJet {
        FunJet {
            ln: e * x.ln(),
            s: e / x,
            ds: -e / (x * x),
        }
    }

    fn cylinder_jet(&self, x: f64, nu: f64, center: f64, scale: f64, sqrt_speed: f64, sign: f64) -> Result<FunJet, FundamentalsError> {
        // u(x) = 2^{-ν/2} H_ν(z), z = sign·√δ·(x − center)/σ
        let z = sign * sqrt_speed * (x - center) / scale;
        let ln_h = ln_hermite(nu, z)?;
        let ln_h1 = ln_hermite(nu - 1.0, z)?;
        let s = sign * sqrt_speed / scale * 2.0 * nu * (ln_h1 - ln_h).exp();
        Ok(FunJet {
            ln: -0.5 * nu * LN_2 + ln_h,
            s,
            ds: self.riccati(x, s),
        })
    }

    fn numeric_jet(&self, tr: &Trajectory<2>, x: f64) -> FunJet {
        let (y, _) = tr.eval(x);
        FunJet {
            ln: y[0],
            s: y[1],
            ds: self.riccati(x, y[1]),
        }
    }

    pub fn psi_jet(&self, x: f64) -> Result<FunJet, FundamentalsError> {
        self.check_domain(x)?;
        match &self.kind {
            Kind::Power { plus, .. } => Ok(Self::power_jet(x, *plus)),
            Kind::Cylinder {
                nu,
                center,
                scale,
                sqrt_speed,
            } => self.cylinder_jet(x, *nu, *center, *scale, *sqrt_speed, -1.0),
            Kind::Numeric(p) => Ok(self.numeric_jet(&p.psi, x)),
        }
    }

    pub fn phi_jet(&self, x: f64) -> Result<FunJet, FundamentalsError> {
        self.check_domain(x)?;
        match &self.kind {
            Kind::Power { minus, .. } => Ok(Self::power_jet(x, *minus)),
            Kind::Cylinder {
                nu,
                center,
                scale,
                sqrt_speed,
            } => self.cylinder_jet(x, *nu, *center, *scale, *sqrt_speed, 1.0),
            Kind::Numeric(p) => Ok(self.numeric_jet(&p.phi, x)),
        }
    }

    pub fn jet(&self, x: f64) -> Result<PairJet, FundamentalsError> {
        Ok(PairJet {
            x,
            psi: self.psi_jet(x)?,
            phi: self.phi_jet(x)?,
        })
    }

    pub fn psi(&self, x: f64) -> Result<f64, FundamentalsError> {
        self.psi_jet(x).map(|j| j.value())
    }

    pub fn phi(&self, x: f64) -> Result<f64, FundamentalsError> {
        self.phi_jet(x).map(|j| j.value())
    }

    pub fn psi_derivative(&self, x: f64) -> Result<f64, FundamentalsError> {
        self.psi_jet(x).map(|j| j.d1())
    }

    pub fn phi_derivative(&self, x: f64) -> Result<f64, FundamentalsError> {
        self.phi_jet(x).map(|j| j.d1())
    }

    pub fn ln_f(&self, x: f64) -> Result<f64, FundamentalsError> {
        match &self.kind {
            Kind::Power { plus, minus, .. } => {
                self.check_domain(x)?;
                Ok((plus - minus) * x.ln())
            }
            _ => Ok(self.psi_jet(x)?.ln - self.phi_jet(x)?.ln),
        }
    }

    /// F = ψ/φ.
    pub fn transform_f(&self, x: f64) -> Result<f64, FundamentalsError> {
        self.ln_f(x).map(f64::exp)
    }

    /// G = −φ/ψ.
    pub fn transform_g(&self, x: f64) -> Result<f64, FundamentalsError> {
        self.ln_f(x).map(|l| -(-l).exp())
    }

    /// F at the lower end of the state space: the exact limit 0 at a
    /// natural endpoint, the function value at an absorbing one.
    pub fn f_at_lower(&self) -> Result<f64, FundamentalsError> {
        match self.lower_kind {
            BoundaryKind::Natural => Ok(0.0),
            BoundaryKind::Absorbing => self.transform_f(self.lower),
        }
    }

    /// G at the upper end of the state space, analogous to [`Self::f_at_lower`].
    pub fn g_at_upper(&self) -> Result<f64, FundamentalsError> {
        match self.upper_kind {
            BoundaryKind::Natural => Ok(0.0),
            BoundaryKind::Absorbing => self.transform_g(self.upper),
        }
    }

    /// Solves ln F(x) = `ln_y` for x.
    fn inverse_ln_f(&self, ln_y: f64) -> Result<f64, FundamentalsError> {
        if !ln_y.is_finite() {
            return Err(FundamentalsError::OutOfRange { y: ln_y.exp() });
        }
        if let Kind::Power { plus, minus, .. } = &self.kind {
            let x = (ln_y / (plus - minus)).exp();
            return if x > self.lower && x < self.upper {
                Ok(x)
            } else {
                Err(FundamentalsError::OutOfRange { y: ln_y.exp() })
            };
        }
        let h = |x: f64| self.ln_f(x).map(|l| l - ln_y);
        let (lo_lim, hi_lim) = (self.lower, self.upper);
        let (mut lo, mut hi) = match &self.kind {
            Kind::Cylinder { center, scale, .. } => (center - scale, center + scale),
            _ => {
                let w = hi_lim - lo_lim;
                (lo_lim + 0.25 * w, hi_lim - 0.25 * w)
            }
        };
        lo = lo.max(lo_lim);
        hi = hi.min(hi_lim);
        let mut width = (hi - lo).max(1e-3);
        let mut guard = 0;
        while h(lo)? > 0.0 {
            if lo <= lo_lim {
                return Err(FundamentalsError::OutOfRange { y: ln_y.exp() });
            }
            hi = lo;
            lo = (lo - width).max(lo_lim);
            width *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(FundamentalsError::OutOfRange { y: ln_y.exp() });
            }
        }
        while h(hi)? < 0.0 {
            if hi >= hi_lim {
                return Err(FundamentalsError::OutOfRange { y: ln_y.exp() });
            }
            lo = hi;
            hi = (hi + width).min(hi_lim);
            width *= 2.0;
            guard += 1;
            if guard > 400 {
                return Err(FundamentalsError::OutOfRange { y: ln_y.exp() });
            }
        }
        let fdf = |x: f64| match self.jet(x) {
            Ok(j) => (j.ln_f() - ln_y, j.psi.s - j.phi.s),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let opts = RootOptions {
            f_tol: 1e-14,
            ..RootOptions::default()
        };
        safeguarded_newton(fdf, lo, hi, &opts)
            .map(|r| r.x)
            .map_err(|_| FundamentalsError::OutOfRange { y: ln_y.exp() })
    }

    /// F⁻¹(y) for y > 0.
    pub fn inverse_f(&self, y: f64) -> Result<f64, FundamentalsError> {
        if !(y > 0.0) {
            return Err(FundamentalsError::OutOfRange { y });
        }
        self.inverse_ln_f(y.ln())
    }

    /// G⁻¹(y) for y < 0.
    pub fn inverse_g(&self, y: f64) -> Result<f64, FundamentalsError> {
        if !(y < 0.0) {
            return Err(FundamentalsError::OutOfRange { y });
        }
        self.inverse_ln_f(-(-y).ln())
    }

    /// Finite-difference (𝒜 − α)u at x with fourth-order stencils of step h.
    pub fn generator_residual<U>(&self, u: U, x: f64, h: f64) -> f64
    where
        U: Fn(f64) -> f64,
    {
        let (m, v) = (self.family.drift(x), self.family.vol(x));
        let (u2m, u1m, u0, u1p, u2p) = (u(x - 2.0 * h), u(x - h), u(x), u(x + h), u(x + 2.0 * h));
        let d1 = (u2m - 8.0 * u1m + 8.0 * u1p - u2p) / (12.0 * h);
        let d2 = (-u2m + 16.0 * u1m - 30.0 * u0 + 16.0 * u1p - u2p) / (12.0 * h * h);
        0.5 * v * v * d2 + m * d1 - self.discount * u0
    }
}
