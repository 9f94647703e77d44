//! Adaptive Dormand–Prince 5(4) integration for small ODE systems, with
//! cubic Hermite dense output between accepted steps.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t:e}")]
    StepUnderflow { t: f64 },
    #[error("right-hand side not finite at t = {t:e}")]
    NonFinite { t: f64 },
    #[error("exceeded {steps} steps before reaching the end point")]
    TooManySteps { steps: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on |h|; zero means unbounded.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            max_step: 0.0,
            max_steps: 200_000,
        }
    }
}

/// Accepted nodes of an integration, ordered by increasing `t`.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub dy: Vec<[f64; N]>,
}

impl<const N: usize> Trajectory<N> {
    pub fn span(&self) -> (f64, f64) {
        (self.t[0], *self.t.last().unwrap())
    }

    /// Cubic Hermite interpolation of the state and its derivative at `t`.
    /// `t` is clamped to the span.
    pub fn eval(&self, t: f64) -> ([f64; N], [f64; N]) {
        let n = self.t.len();
        if n == 1 {
            return (self.y[0], self.dy[0]);
        }
        let t = t.clamp(self.t[0], self.t[n - 1]);
        let i = match self.t.partition_point(|&s| s <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let h = t1 - t0;
        let u = (t - t0) / h;
        let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
        let h10 = u * (1.0 - u) * (1.0 - u);
        let h01 = u * u * (3.0 - 2.0 * u);
        let h11 = u * u * (u - 1.0);
        let d00 = 6.0 * u * (u - 1.0) / h;
        let d10 = (1.0 - u) * (1.0 - 3.0 * u);
        let d01 = -d00;
        let d11 = u * (3.0 * u - 2.0);
        let mut y = [0.0; N];
        let mut dy = [0.0; N];
        for k in 0..N {
            let (a, b, da, db) = (self.y[i][k], self.y[i + 1][k], self.dy[i][k], self.dy[i + 1][k]);
            y[k] = h00 * a + h10 * h * da + h01 * b + h11 * h * db;
            dy[k] = d00 * a + d10 * da + d01 * b + d11 * db;
        }
        (y, dy)
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights are the last row of A; these are the error weights (b5 - b4)
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
pub fn dormand_prince<const N: usize, F>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    opts: &OdeOptions,
) -> Result<Trajectory<N>, OdeError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let max_step = if opts.max_step > 0.0 { opts.max_step } else { span };
    let mut t = t0;
    let mut y = y0;
    let mut k0 = f(t, &y);
    check(&k0, t)?;
    let mut ts = vec![t];
    let mut ys = vec![y];
    let mut dys = vec![k0];
    let mut h = (span / 100.0).min(max_step);
    let mut steps = 0usize;

    while (t1 - t) * dir > 0.0 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(OdeError::TooManySteps { steps: opts.max_steps });
        }
        h = h.min((t1 - t).abs()).min(max_step);
        if h < 1e-14 * span.max(t.abs()) {
            return Err(OdeError::StepUnderflow { t });
        }
        let mut k = [[0.0; N]; 7];
        k[0] = k0;
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..N {
                        ys[i] += dir * h * a * kj[i];
                    }
                }
            }
            k[s] = f(t + dir * h * C[s], &ys);
        }
        let mut y_new = y;
        for i in 0..N {
            let mut acc = 0.0;
            for s in 0..6 {
                acc += A[6][s] * k[s][i];
            }
            y_new[i] += dir * h * acc;
        }
        let mut err = 0.0f64;
        for i in 0..N {
            let mut e = 0.0;
            for s in 0..7 {
                e += E[s] * k[s][i];
            }
            let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err = err.max((h * e).abs() / scale);
        }
        let finite = y_new.iter().all(|v| v.is_finite()) && k[6].iter().all(|v| v.is_finite());
        if finite && err <= 1.0 {
            t += dir * h;
            y = y_new;
            k0 = k[6];
            ts.push(t);
            ys.push(y);
            dys.push(k0);
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).min(5.0) };
            h *= grow;
        } else {
            let shrink = if finite { (0.9 * err.powf(-0.2)).max(0.1) } else { 0.1 };
            h *= shrink;
        }
    }
    if dir < 0.0 {
        ts.reverse();
        ys.reverse();
        dys.reverse();
    }
    Ok(Trajectory { t: ts, y: ys, dy: dys })
}

fn check<const N: usize>(v: &[f64; N], t: f64) -> Result<(), OdeError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(OdeError::NonFinite { t })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_forward_and_dense_output() {
        let opts = OdeOptions {
            max_step: 0.02,
            ..OdeOptions::default()
        };
        let tr = dormand_prince(|_, y| [y[1], -y[0]], 0.0, [0.0, 1.0], 10.0, &opts).unwrap();
        let (y, dy) = tr.eval(10.0);
        assert!((y[0] - 10f64.sin()).abs() < 1e-9);
        assert!((dy[0] - 10f64.cos()).abs() < 1e-9);
        let (y, _) = tr.eval(3.3);
        assert!((y[0] - 3.3f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn backward_integration_is_stored_in_increasing_order() {
        let tr = dormand_prince(|_, y| [y[0]], 1.0, [1.0], 0.0, &OdeOptions::default()).unwrap();
        assert_eq!(tr.span(), (0.0, 1.0));
        assert!(tr.t.windows(2).all(|w| w[0] < w[1]));
        let (y, _) = tr.eval(0.0);
        assert!((y[0] - (-1f64).exp()).abs() < 1e-11);
    }
}
