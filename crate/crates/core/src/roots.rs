//! Bracketed root finding: safeguarded Newton with bisection fallback.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RootError {
    #[error("no sign change on [{lo:e}, {hi:e}]: f(lo) = {f_lo:e}, f(hi) = {f_hi:e}")]
    NotBracketed { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("root finder exhausted {iterations} iterations, last bracket width {width:e}")]
    MaxIterations { iterations: usize, width: f64 },
    #[error("function returned a non-finite value at x = {x:e}")]
    NonFinite { x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Absolute tolerance on |f(x)|.
    pub f_tol: f64,
    /// Relative tolerance on the bracket width.
    pub x_rel_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            f_tol: 1e-12,
            x_rel_tol: 4.0 * f64::EPSILON,
            max_iter: 200,
        }
    }
}

/// Finds a root of `f` in `[lo, hi]` given `fdf(x) = (f(x), f'(x))`.
///
/// Newton steps that leave the current bracket, or fail to halve |f|
/// relative to two steps ago, are replaced by bisection.
pub fn safeguarded_newton<F>(fdf: F, lo: f64, hi: f64, opts: &RootOptions) -> Result<Root, RootError>
where
    F: Fn(f64) -> (f64, f64),
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let (fa, _) = fdf(a);
    let (fb, _) = fdf(b);
    if !fa.is_finite() {
        return Err(RootError::NonFinite { x: a });
    }
    if !fb.is_finite() {
        return Err(RootError::NonFinite { x: b });
    }
    if fa == 0.0 {
        return Ok(Root { x: a, fx: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: 0.0, iterations: 0 });
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NotBracketed { lo: a, hi: b, f_lo: fa, f_hi: fb });
    }
    let neg_at_a = fa < 0.0;

    let mut x = 0.5 * (a + b);
    let mut prev_abs = f64::INFINITY;
    let mut prev_prev_abs = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let (fx, dfx) = fdf(x);
        if !fx.is_finite() {
            return Err(RootError::NonFinite { x });
        }
        if fx.abs() <= opts.f_tol {
            return Ok(Root { x, fx, iterations: it });
        }
        if (fx < 0.0) == neg_at_a {
            a = x;
        } else {
            b = x;
        }
        if (b - a).abs() <= opts.x_rel_tol * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(Root { x, fx, iterations: it });
        }
        let newton = x - fx / dfx;
        let stalled = fx.abs() > 0.5 * prev_prev_abs;
        x = if dfx.is_finite() && dfx != 0.0 && newton > a && newton < b && !stalled {
            newton
        } else {
            0.5 * (a + b)
        };
        prev_prev_abs = prev_abs;
        prev_abs = fx.abs();
    }
    Err(RootError::MaxIterations {
        iterations: opts.max_iter,
        width: (b - a).abs(),
    })
}

/// Plain bisection; used where no derivative is available.
pub fn bisect<F>(f: F, lo: f64, hi: f64, opts: &RootOptions) -> Result<Root, RootError>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(Root { x: a, fx: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: 0.0, iterations: 0 });
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(RootError::NotBracketed { lo, hi, f_lo: fa, f_hi: fb });
    }
    for it in 1..=opts.max_iter {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if !fm.is_finite() {
            return Err(RootError::NonFinite { x: m });
        }
        if fm == 0.0 || (b - a).abs() <= opts.x_rel_tol * m.abs().max(f64::MIN_POSITIVE) {
            return Ok(Root { x: m, fx: fm, iterations: it });
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Err(RootError::MaxIterations {
        iterations: opts.max_iter,
        width: (b - a).abs(),
    })
}
