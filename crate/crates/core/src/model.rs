//! Problem definition for two-regime optimal switching of a scalar diffusion.
//!
//! Regime 0 is "closed", regime 1 is "open". Each regime carries its own
//! diffusion coefficients and running reward; switching into a regime pays a
//! state-dependent cost.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// A shareable scalar function of the state.
#[derive(Clone)]
pub struct ScalarFn(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl ScalarFn {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.0)(x)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarFn(..)")
    }
}

impl PartialEq for ScalarFn {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    Closed = 0,
    Open = 1,
}

impl Regime {
    pub const BOTH: [Regime; 2] = [Regime::Closed, Regime::Open];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> Regime {
        match self {
            Regime::Closed => Regime::Open,
            Regime::Open => Regime::Closed,
        }
    }

    pub fn from_index(i: usize) -> Option<Regime> {
        match i {
            0 => Some(Regime::Closed),
            1 => Some(Regime::Open),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Closed => "closed",
            Regime::Open => "open",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Diffusion coefficients of one regime.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// dX = drift·X dt + vol·X dW
    GeometricBM { drift: f64, vol: f64 },
    /// dX = reversion_speed·(level − X) dt + vol dW
    OrnsteinUhlenbeck { reversion_speed: f64, level: f64, vol: f64 },
    /// dX = drift(X) dt + vol(X) dW
    Custom { drift: ScalarFn, vol: ScalarFn },
}

impl Family {
    pub fn drift(&self, x: f64) -> f64 {
        match self {
            Family::GeometricBM { drift, .. } => drift * x,
            Family::OrnsteinUhlenbeck { reversion_speed, level, .. } => reversion_speed * (level - x),
            Family::Custom { drift, .. } => drift.eval(x),
        }
    }

    pub fn vol(&self, x: f64) -> f64 {
        match self {
            Family::GeometricBM { vol, .. } => vol * x,
            Family::OrnsteinUhlenbeck { vol, .. } => *vol,
            Family::Custom { vol, .. } => vol.eval(x),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::GeometricBM { .. } => "gbm",
            Family::OrnsteinUhlenbeck { .. } => "ou",
            Family::Custom { .. } => "custom",
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, Family::Custom { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSpec {
    pub family: Family,
    pub label: Regime,
}

impl RegimeSpec {
    pub fn new(label: Regime, family: Family) -> Self {
        Self { family, label }
    }
}

/// Running reward earned per unit time while in a regime.
#[derive(Debug, Clone, PartialEq)]
pub enum Reward {
    Zero,
    /// slope·x + intercept
    Affine { slope: f64, intercept: f64 },
    /// coef·x^exponent
    Power { coef: f64, exponent: f64 },
    Custom(ScalarFn),
}

impl Reward {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Reward::Zero => 0.0,
            Reward::Affine { slope, intercept } => slope * x + intercept,
            Reward::Power { coef, exponent } => coef * x.powf(*exponent),
            Reward::Custom(f) => f.eval(x),
        }
    }

    /// Multiplies the reward by `k`.
    pub fn scaled(&self, k: f64) -> Reward {
        match self {
            Reward::Zero => Reward::Zero,
            Reward::Affine { slope, intercept } => Reward::Affine {
                slope: k * slope,
                intercept: k * intercept,
            },
            Reward::Power { coef, exponent } => Reward::Power {
                coef: k * coef,
                exponent: *exponent,
            },
            Reward::Custom(f) => {
                let f = f.clone();
                Reward::Custom(ScalarFn::new(move |x| k * f.eval(x)))
            }
        }
    }
}

/// Switching cost as a function of the pre-switch state.
#[derive(Debug, Clone, PartialEq)]
pub enum Cost {
    Constant(f64),
    Custom(ScalarFn),
}

impl Cost {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Cost::Constant(c) => *c,
            Cost::Custom(f) => f.eval(x),
        }
    }

    pub fn scaled(&self, k: f64) -> Cost {
        match self {
            Cost::Constant(c) => Cost::Constant(k * c),
            Cost::Custom(f) => {
                let f = f.clone();
                Cost::Custom(ScalarFn::new(move |x| k * f.eval(x)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Not attainable in finite time.
    Natural,
    /// The process stops there and earns nothing afterwards.
    Absorbing,
}

/// State space (lower, upper); endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub lower_kind: BoundaryKind,
    pub upper_kind: BoundaryKind,
}

impl Interval {
    pub fn natural(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            lower_kind: BoundaryKind::Natural,
            upper_kind: BoundaryKind::Natural,
        }
    }

    pub fn positive_half_line() -> Self {
        Self::natural(0.0, f64::INFINITY)
    }

    pub fn with_lower_absorbing(mut self) -> Self {
        self.lower_kind = BoundaryKind::Absorbing;
        self
    }

    pub fn with_upper_absorbing(mut self) -> Self {
        self.upper_kind = BoundaryKind::Absorbing;
        self
    }

    /// Open-interval membership.
    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }
}

/// A two-regime switching problem as supplied by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingProblem {
    pub closed: RegimeSpec,
    pub open: RegimeSpec,
    pub reward_closed: Reward,
    pub reward_open: Reward,
    /// Cost of switching closed → open, H(x, 1).
    pub cost_open: Cost,
    /// Cost of switching open → closed, H(x, 0).
    pub cost_close: Cost,
    pub discount: f64,
    pub interval: Interval,
    /// Finite search range for thresholds and oracle grids. When absent a
    /// family-dependent default is used.
    pub window: Option<(f64, f64)>,
}

impl SwitchingProblem {
    pub fn regime(&self, r: Regime) -> &RegimeSpec {
        match r {
            Regime::Closed => &self.closed,
            Regime::Open => &self.open,
        }
    }

    pub fn reward(&self, r: Regime) -> &Reward {
        match r {
            Regime::Closed => &self.reward_closed,
            Regime::Open => &self.reward_open,
        }
    }

    /// Cost paid when switching *into* regime `r`.
    pub fn cost_into(&self, r: Regime) -> &Cost {
        match r {
            Regime::Closed => &self.cost_close,
            Regime::Open => &self.cost_open,
        }
    }

    /// The same problem with rewards and both costs multiplied by `k`.
    pub fn scaled(&self, k: f64) -> SwitchingProblem {
        SwitchingProblem {
            reward_closed: self.reward_closed.scaled(k),
            reward_open: self.reward_open.scaled(k),
            cost_open: self.cost_open.scaled(k),
            cost_close: self.cost_close.scaled(k),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{field}: volatility must be positive, got {value} at x = {x}")]
    NonPositiveVol { field: String, x: f64, value: f64 },
    #[error("{field}: switching cost must be positive, got {value} at x = {x}")]
    NonPositiveCost { field: String, x: f64, value: f64 },
    #[error("interval: lower endpoint {lower} must be below upper endpoint {upper}")]
    BadInterval { lower: f64, upper: f64 },
    #[error("{field}: discount {discount} must exceed the drift rate {drift}")]
    DiscountTooSmall { field: String, discount: f64, drift: f64 },
    #[error("discount: must be positive and finite, got {discount}")]
    NonPositiveDiscount { discount: f64 },
    #[error("{field}: parameter must be finite, got {value}")]
    NonFinite { field: String, value: f64 },
    #[error("{field}: reversion speed must be positive, got {value}")]
    NonPositiveReversion { field: String, value: f64 },
    #[error("{field}: {reason}")]
    BoundaryMismatch { field: String, reason: String },
    #[error("{field}: label {found} does not match its slot")]
    LabelMismatch { field: String, found: Regime },
    #[error("{field}: reward grows too fast for the discount rate ({reason})")]
    RewardGrowth { field: String, reason: String },
    #[error("window: [{lower}, {upper}] must be a non-empty range inside the state interval")]
    BadWindow { lower: f64, upper: f64 },
    #[error("window: required for custom regimes on an unbounded interval")]
    MissingWindow,
}

/// A problem whose standing assumptions have been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedProblem {
    problem: SwitchingProblem,
    window: (f64, f64),
    closed_form: [bool; 2],
}

impl ValidatedProblem {
    pub fn problem(&self) -> &SwitchingProblem {
        &self.problem
    }

    pub fn into_problem(self) -> SwitchingProblem {
        self.problem
    }

    /// Finite search range, clamped to the state interval.
    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    /// Whether regime `r` has closed-form fundamental solutions.
    pub fn has_closed_form(&self, r: Regime) -> bool {
        self.closed_form[r.index()]
    }
}

impl std::ops::Deref for ValidatedProblem {
    type Target = SwitchingProblem;
    fn deref(&self) -> &SwitchingProblem {
        &self.problem
    }
}

impl From<ValidatedProblem> for SwitchingProblem {
    fn from(v: ValidatedProblem) -> Self {
        v.problem
    }
}

// Half-width of the default OU window in stationary standard deviations.
const OU_WINDOW_SDS: f64 = 10.0;
const GBM_WINDOW: (f64, f64) = (1e-4, 1e4);
const SAMPLE_POINTS: usize = 64;

fn finite(field: &str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFinite {
            field: field.to_string(),
            value,
        })
    }
}

fn sample_points(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..SAMPLE_POINTS).map(move |i| lo + (hi - lo) * (i as f64 + 0.5) / SAMPLE_POINTS as f64)
}

fn check_regime(
    spec: &RegimeSpec,
    slot: Regime,
    discount: f64,
    interval: &Interval,
) -> Result<Option<(f64, f64)>, ModelError> {
    let name = slot.name();
    if spec.label != slot {
        return Err(ModelError::LabelMismatch {
            field: name.to_string(),
            found: spec.label,
        });
    }
    let natural_at = |kind: BoundaryKind, x: f64| kind == BoundaryKind::Natural && x.is_finite();
    match &spec.family {
        Family::GeometricBM { drift, vol } => {
            finite(&format!("{name}.drift"), *drift)?;
            finite(&format!("{name}.vol"), *vol)?;
            if *vol <= 0.0 {
                return Err(ModelError::NonPositiveVol {
                    field: format!("{name}.vol"),
                    x: 1.0,
                    value: *vol,
                });
            }
            if discount <= *drift {
                return Err(ModelError::DiscountTooSmall {
                    field: format!("{name}.drift"),
                    discount,
                    drift: *drift,
                });
            }
            if interval.lower < 0.0 {
                return Err(ModelError::BoundaryMismatch {
                    field: "interval.lower".into(),
                    reason: "geometric Brownian motion lives on the positive half-line".into(),
                });
            }
            if interval.lower > 0.0 && interval.lower_kind == BoundaryKind::Natural {
                return Err(ModelError::BoundaryMismatch {
                    field: "interval.lower".into(),
                    reason: "a positive finite endpoint is reachable and must be absorbing".into(),
                });
            }
            if interval.lower == 0.0 && interval.lower_kind == BoundaryKind::Absorbing {
                return Err(ModelError::BoundaryMismatch {
                    field: "interval.lower".into(),
                    reason: "0 is natural for geometric Brownian motion".into(),
                });
            }
            if natural_at(interval.upper_kind, interval.upper) {
                return Err(ModelError::BoundaryMismatch {
                    field: "interval.upper".into(),
                    reason: "a finite endpoint is reachable and must be absorbing".into(),
                });
            }
            Ok(Some(GBM_WINDOW))
        }
        Family::OrnsteinUhlenbeck {
            reversion_speed,
            level,
            vol,
        } => {
            finite(&format!("{name}.reversion_speed"), *reversion_speed)?;
            finite(&format!("{name}.level"), *level)?;
            finite(&format!("{name}.vol"), *vol)?;
            if *reversion_speed <= 0.0 {
                return Err(ModelError::NonPositiveReversion {
                    field: format!("{name}.reversion_speed"),
                    value: *reversion_speed,
                });
            }
            if *vol <= 0.0 {
                return Err(ModelError::NonPositiveVol {
                    field: format!("{name}.vol"),
                    x: *level,
                    value: *vol,
                });
            }
            for (kind, x, field) in [
                (interval.lower_kind, interval.lower, "interval.lower"),
                (interval.upper_kind, interval.upper, "interval.upper"),
            ] {
                if natural_at(kind, x) {
                    return Err(ModelError::BoundaryMismatch {
                        field: field.into(),
                        reason: "a finite endpoint is reachable and must be absorbing".into(),
                    });
                }
            }
            let sd = vol / (2.0 * reversion_speed).sqrt();
            Ok(Some((level - OU_WINDOW_SDS * sd, level + OU_WINDOW_SDS * sd)))
        }
        // sampled on the window once it is known
        Family::Custom { .. } => Ok(None),
    }
}

fn check_reward(reward: &Reward, family: &Family, discount: f64, field: &str) -> Result<(), ModelError> {
    match reward {
        Reward::Zero | Reward::Custom(_) => Ok(()),
        Reward::Affine { slope, intercept } => {
            finite(&format!("{field}.slope"), *slope)?;
            finite(&format!("{field}.intercept"), *intercept)
        }
        Reward::Power { coef, exponent } => {
            finite(&format!("{field}.coef"), *coef)?;
            finite(&format!("{field}.exponent"), *exponent)?;
            if let Family::GeometricBM { drift, vol } = family {
                let p = *exponent;
                let denom = discount - drift * p - 0.5 * vol * vol * p * (p - 1.0);
                if denom <= 0.0 {
                    return Err(ModelError::RewardGrowth {
                        field: field.to_string(),
                        reason: format!("discount − generator growth rate of x^{p} is {denom}"),
                    });
                }
            }
            Ok(())
        }
    }
}

fn check_cost(cost: &Cost, field: &str, window: (f64, f64)) -> Result<(), ModelError> {
    match cost {
        Cost::Constant(c) => {
            finite(field, *c)?;
            if *c <= 0.0 {
                return Err(ModelError::NonPositiveCost {
                    field: field.to_string(),
                    x: f64::NAN,
                    value: *c,
                });
            }
        }
        Cost::Custom(f) => {
            for x in sample_points(window.0, window.1) {
                let v = f.eval(x);
                if !(v > 0.0) || !v.is_finite() {
                    return Err(ModelError::NonPositiveCost {
                        field: field.to_string(),
                        x,
                        value: v,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Checks the standing assumptions and fixes the search window.
///
/// Accepts either a raw problem or an already validated one; validating a
/// validated problem returns an equal value.
pub fn validate_problem(problem: impl Into<SwitchingProblem>) -> Result<ValidatedProblem, ModelError> {
    let problem: SwitchingProblem = problem.into();
    let iv = problem.interval;
    if iv.lower.is_nan() || iv.upper.is_nan() || iv.lower >= iv.upper {
        return Err(ModelError::BadInterval {
            lower: iv.lower,
            upper: iv.upper,
        });
    }
    if !(problem.discount > 0.0 && problem.discount.is_finite()) {
        return Err(ModelError::NonPositiveDiscount {
            discount: problem.discount,
        });
    }
    let mut defaults = Vec::new();
    for r in Regime::BOTH {
        if let Some(w) = check_regime(problem.regime(r), r, problem.discount, &iv)? {
            defaults.push(w);
        }
    }
    let window = match problem.window {
        Some((lo, hi)) => {
            if !(lo.is_finite() && hi.is_finite() && lo < hi && lo >= iv.lower && hi <= iv.upper) {
                return Err(ModelError::BadWindow { lower: lo, upper: hi });
            }
            (lo, hi)
        }
        None => {
            let custom = Regime::BOTH.iter().any(|&r| !problem.regime(r).family.is_builtin());
            if custom {
                if !(iv.lower.is_finite() && iv.upper.is_finite()) {
                    return Err(ModelError::MissingWindow);
                }
                (iv.lower, iv.upper)
            } else {
                let lo = defaults.iter().map(|w| w.0).fold(f64::INFINITY, f64::min);
                let hi = defaults.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max);
                let (lo, hi) = (lo.max(iv.lower), hi.min(iv.upper));
                if !(lo < hi) {
                    return Err(ModelError::BadWindow { lower: lo, upper: hi });
                }
                (lo, hi)
            }
        }
    };
    for r in Regime::BOTH {
        if let Family::Custom { vol, drift } = &problem.regime(r).family {
            for x in sample_points(window.0, window.1) {
                let s = vol.eval(x);
                if !(s > 0.0) {
                    return Err(ModelError::NonPositiveVol {
                        field: format!("{}.vol", r.name()),
                        x,
                        value: s,
                    });
                }
                finite(&format!("{}.drift", r.name()), drift.eval(x))?;
            }
        }
    }
    for r in Regime::BOTH {
        let field = format!("reward.{}", r.name());
        check_reward(problem.reward(r), &problem.regime(r).family, problem.discount, &field)?;
    }
    check_cost(&problem.cost_open, "costs.open", window)?;
    check_cost(&problem.cost_close, "costs.close", window)?;

    let closed_form = [problem.closed.family.is_builtin(), problem.open.family.is_builtin()];
    Ok(ValidatedProblem {
        problem,
        window,
        closed_form,
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("threshold policy requires lower < a < b < upper, got a = {a}, b = {b} on ({lower}, {upper})")]
    Ordering { a: f64, b: f64, lower: f64, upper: f64 },
}

/// Switch open → closed at or below `a`, closed → open at or above `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPolicy {
    pub a: f64,
    pub b: f64,
}

impl ThresholdPolicy {
    pub fn new(a: f64, b: f64, interval: &Interval) -> Result<Self, PolicyError> {
        if interval.lower < a && a < b && b < interval.upper {
            Ok(Self { a, b })
        } else {
            Err(PolicyError::Ordering {
                a,
                b,
                lower: interval.lower,
                upper: interval.upper,
            })
        }
    }

    /// The regime the policy wants to be in at state `x`, given the current one.
    pub fn target(&self, current: Regime, x: f64) -> Regime {
        match current {
            Regime::Open if x <= self.a => Regime::Closed,
            Regime::Closed if x >= self.b => Regime::Open,
            r => r,
        }
    }
}
