//! Gamma, Hermite and parabolic cylinder functions for negative degree.
//!
//! The Hermite function of degree `ν < 0` is evaluated from its integral
//! representation
//!
//! ```text
//! H_ν(z) = 1/Γ(-ν) ∫_0^∞ exp(-t² - 2tz) t^{-ν-1} dt
//! ```
//!
//! with double-exponential quadrature around the integrand's peak. All
//! evaluations go through a log-domain routine so that the Ornstein-Uhlenbeck
//! fundamental solutions can be formed far from the mean level without
//! overflow.

use std::f64::consts::{LN_2, PI, SQRT_2};

use thiserror::Error;

use crate::quadrature::{exp_sinh, tanh_sinh, QuadOptions, QuadResult, QuadratureError};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SpecialFnError {
    #[error("Hermite degree must be strictly negative, got {nu}")]
    DegreeOutOfRange { nu: f64 },
    #[error("Hermite quadrature did not converge at (nu = {nu}, z = {z}); achieved error estimate {error:e}")]
    QuadratureNonConvergence { nu: f64, z: f64, error: f64 },
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(x: f64) -> f64 {
    // x is the shifted argument (Γ(x + 1) form)
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    a
}

/// Γ(x) by the Lanczos approximation, with reflection for `x < 1/2`.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * lanczos_sum(x)
    }
}

/// ln|Γ(x)|.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        (PI / (PI * x).sin().abs()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + lanczos_sum(x).ln()
    }
}

// Gaussian envelope bound: the log-integrand has curvature <= -2, so mass
// more than this far from the peak is below e^{-144} relative.
const PEAK_HALF_WIDTH: f64 = 12.0;

fn quad_opts() -> QuadOptions {
    QuadOptions {
        rel_tol: 1e-13,
        abs_tol: 0.0,
        max_level: 12,
    }
}

// Accepted relative error once refinement is exhausted; the requested
// tolerance sits at the roundoff floor for sharply peaked integrands.
const QUAD_FLOOR: f64 = 1e-10;

fn settle(r: Result<QuadResult, QuadratureError>) -> Result<QuadResult, QuadratureError> {
    match r {
        Err(QuadratureError::NonConvergence { estimate, error }) if error <= QUAD_FLOOR * estimate.abs() => {
            Ok(QuadResult {
                value: estimate,
                error,
                evals: 0,
                level: 0,
            })
        }
        r => r,
    }
}

fn check_degree(nu: f64) -> Result<(), SpecialFnError> {
    if nu < 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(SpecialFnError::DegreeOutOfRange { nu })
    }
}

/// ln H_ν(z) for `ν < 0`. The Hermite function is strictly positive there.
pub fn ln_hermite(nu: f64, z: f64) -> Result<f64, SpecialFnError> {
    check_degree(nu)?;
    if nu > -1.0 {
        return ln_hermite_weak_singularity(nu, z);
    }
    let a = -nu - 1.0;
    let log_integrand = |t: f64| -t * t - 2.0 * t * z + a * t.ln();

    // Interior maximum of the log-integrand, if any: 2t² + 2zt - a = 0.
    let disc = z * z + 2.0 * a;
    let peak = if disc >= 0.0 {
        let t = 0.5 * (-z + disc.sqrt());
        (t > 0.0).then_some(t)
    } else {
        None
    };

    let wrap = |e: QuadratureError| match e {
        QuadratureError::NonConvergence { error, .. } => SpecialFnError::QuadratureNonConvergence { nu, z, error },
        QuadratureError::NonFinite { .. } => SpecialFnError::QuadratureNonConvergence { nu, z, error: f64::NAN },
    };
    let opts = quad_opts();

    let (shift, integral) = match peak {
        Some(tp) => {
            let shift = log_integrand(tp);
            let f = |t: f64| (log_integrand(t) - shift).exp();
            let left = settle(tanh_sinh(f, (tp - PEAK_HALF_WIDTH).max(0.0), tp, &opts)).map_err(wrap)?;
            let right = settle(exp_sinh(f, tp, &opts)).map_err(wrap)?;
            (shift, left.value + right.value)
        }
        None => {
            // Integrand decreases monotonically from t = 0.
            let s = 1.0 / (1.0 + z.abs());
            let shift = log_integrand(s);
            let f = |t: f64| (log_integrand(t) - shift).exp();
            let left = settle(tanh_sinh(f, 0.0, s, &opts)).map_err(wrap)?;
            let right = settle(exp_sinh(f, s, &opts)).map_err(wrap)?;
            (shift, left.value + right.value)
        }
    };
    Ok(shift + integral.ln() - ln_gamma(-nu))
}

/// ln H_ν(z) for `-1 < ν < 0`, where t^{-ν-1} is singular at the origin.
/// With b = -ν and t = u^{1/b} the integral becomes
/// `1/Γ(1 + b) ∫_0^∞ exp(-t(u)² - 2z t(u)) du`, whose integrand is bounded.
fn ln_hermite_weak_singularity(nu: f64, z: f64) -> Result<f64, SpecialFnError> {
    let b = -nu;
    let wrap = |e: QuadratureError| match e {
        QuadratureError::NonConvergence { error, .. } => SpecialFnError::QuadratureNonConvergence { nu, z, error },
        QuadratureError::NonFinite { .. } => SpecialFnError::QuadratureNonConvergence { nu, z, error: f64::NAN },
    };
    let opts = quad_opts();
    // peak of -t² - 2zt in t, or a split point inside the initial plateau
    let (t_split, shift, t_lo) = if z < 0.0 {
        (-z, z * z, (-z - PEAK_HALF_WIDTH).max(0.0))
    } else {
        (1.0 / (1.0 + z), 0.0, 0.0)
    };
    let f = |u: f64| {
        let t = u.powf(1.0 / b);
        // factored so that t = ∞ gives -∞ rather than NaN
        (-t * (t + 2.0 * z) - shift).exp()
    };
    let (lo, mid) = (t_lo.powf(b), t_split.powf(b));
    let left = settle(tanh_sinh(f, lo, mid, &opts)).map_err(wrap)?;
    let right = settle(exp_sinh(f, mid, &opts)).map_err(wrap)?;
    Ok(shift + (left.value + right.value).ln() - ln_gamma(1.0 + b))
}

/// Hermite function H_ν(z) for `ν < 0`.
pub fn hermite(nu: f64, z: f64) -> Result<f64, SpecialFnError> {
    ln_hermite(nu, z).map(f64::exp)
}

/// H'_ν(z) = 2ν H_{ν-1}(z).
pub fn hermite_derivative(nu: f64, z: f64) -> Result<f64, SpecialFnError> {
    check_degree(nu)?;
    Ok(2.0 * nu * hermite(nu - 1.0, z)?)
}

/// H'_ν(z) / H_ν(z), evaluated without forming either factor.
pub fn hermite_log_derivative(nu: f64, z: f64) -> Result<f64, SpecialFnError> {
    check_degree(nu)?;
    Ok(2.0 * nu * (ln_hermite(nu - 1.0, z)? - ln_hermite(nu, z)?).exp())
}

/// ln D_ν(z) via D_ν(z) = 2^{-ν/2} e^{-z²/4} H_ν(z/√2).
pub fn ln_parabolic_cylinder(nu: f64, z: f64) -> Result<f64, SpecialFnError> {
    Ok(-0.5 * nu * LN_2 - 0.25 * z * z + ln_hermite(nu, z / SQRT_2)?)
}

/// Parabolic cylinder function D_ν(z) for `ν < 0`.
pub fn parabolic_cylinder(nu: f64, z: f64) -> Result<f64, SpecialFnError> {
    ln_parabolic_cylinder(nu, z).map(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use statrs::function::erf::erfc;
    use statrs::function::gamma::gamma as statrs_gamma;

    #[test]
    fn gamma_matches_factorials_and_half_integers() {
        assert_relative_eq!(gamma(5.0), 24.0, max_relative = 1e-14);
        assert_relative_eq!(gamma(0.5), PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma(-0.5), -2.0 * PI.sqrt(), max_relative = 1e-13);
        for &x in &[0.1, 1.7, 3.1, 7.25, 12.5] {
            assert_relative_eq!(gamma(x), statrs_gamma(x), max_relative = 1e-13);
            assert_relative_eq!(ln_gamma(x), statrs_gamma(x).ln(), max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn hermite_minus_one_is_scaled_erfc() {
        // H_{-1}(z) = e^{z²} (√π/2) erfc(z)
        for &z in &[-3.0f64, -1.0, 0.0, 0.5, 2.0, 5.0] {
            let expected = (z * z).exp() * PI.sqrt() / 2.0 * erfc(z);
            // statrs erfc is good to about 1e-10 relative
            assert_relative_eq!(hermite(-1.0, z).unwrap(), expected, max_relative = 1e-9);
        }
        let frozen = [
            (-3.0, 14_362.183_676_001_719),
            (-1.0, 4.439_093_016_628_066),
            (0.0, 0.886_226_925_452_758),
            (0.5, 0.545_641_360_765_047),
            (2.0, 0.226_338_524_990_587_3),
            (5.0, 0.098_109_430_731_538_79),
        ];
        for (z, expected) in frozen {
            assert_relative_eq!(hermite(-1.0, z).unwrap(), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn hermite_central_value() {
        // H_ν(0) = 2^ν √π / Γ((1 - ν)/2)
        for &nu in &[-2.1, -0.3, -4.7] {
            let expected = 2f64.powf(nu) * PI.sqrt() / statrs_gamma((1.0 - nu) / 2.0);
            assert_relative_eq!(hermite(nu, 0.0).unwrap(), expected, max_relative = 1e-11);
        }
    }

    #[test]
    fn hermite_decreases_in_argument() {
        assert!(hermite(-1.0, 10.0).unwrap() < hermite(-1.0, 0.0).unwrap());
    }

    #[test]
    fn reference_values_from_arbitrary_precision() {
        // (ν, z, D_ν(z), H_ν(z/√2)) from a 30-digit evaluation.
        let cases = [
            (-2.1, 0.0, 0.963_065_886_057_925_7, 0.465_130_163_245_773_2),
            (-2.1, 1.5, 0.117_901_212_645_301_8, 0.099_937_256_420_612_57),
            (-2.1, -3.0, 76.597_186_492_829_19, 350.989_323_851_371_2),
            (-0.5, 2.0, 0.243_018_893_963_601_9, 0.555_490_994_881_882_4),
            (-5.3, -7.0, 67_921_876.746_162_26, 2_261_453_135_316.209_6),
            (-1.0, 1.0, 0.510_643_741_079_660_7, 0.463_635_450_729_624_9),
            (-9.5, 4.0, 4.513_563_436_761_750_4e-9, 9.158_091_934_474_432e-9),
            (-0.3, -12.0, 637_071_492_951_008.99, 2.475_340_920_347_731_2e30),
        ];
        for (nu, z, d, h) in cases {
            assert_relative_eq!(parabolic_cylinder(nu, z).unwrap(), d, max_relative = 1e-10);
            assert_relative_eq!(hermite(nu, z / SQRT_2).unwrap(), h, max_relative = 1e-10);
        }
        let logs = [
            (-2.1, -20.0, 403.822_301_489_749_1),
            (-2.1, 20.0, -7.750_697_446_652_679),
            (-10.0, -20.0, 414.776_712_197_810_6),
            (-0.2, 15.0, -0.680_505_143_656_091),
        ];
        for (nu, z, lh) in logs {
            assert_relative_eq!(ln_hermite(nu, z).unwrap(), lh, max_relative = 1e-12);
        }
        // degrees in (-1, 0), where the integrand is singular at the origin
        let weak = [
            (-0.028_748_562_266_896_652, -4.0, 11.725_382_453_158_837),
            (-0.028_748_562_266_896_652, 0.0, 0.007_795_406_801_286_691),
            (-0.028_748_562_266_896_652, 3.0, -0.052_272_553_736_098_70),
            (-0.01, -1.0, 0.042_348_375_912_023_28),
            (-0.01, 10.0, -0.029_982_385_208_987_905),
            (-0.3, 0.5, -0.142_812_601_165_748_8),
            (-0.9, -1.0, 1.439_987_933_014_047_5),
            (-0.999, 0.0, -0.120_377_903_953_997_02),
            (-0.999, 10.0, -2.997_668_148_084_497_6),
        ];
        for (nu, z, lh) in weak {
            let got = ln_hermite(nu, z).unwrap();
            assert!((got - lh).abs() <= 1e-11 * lh.abs().max(1.0), "ν={nu} z={z}: {got} vs {lh}");
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-5;
        for &(nu, z) in &[(-1.0, 0.0), (-2.1, 1.0), (-0.4, -2.0), (-3.3, 0.7)] {
            let fd = (hermite(nu, z + h).unwrap() - hermite(nu, z - h).unwrap()) / (2.0 * h);
            let d = hermite_derivative(nu, z).unwrap();
            assert_relative_eq!(d, fd, max_relative = 1e-6);
            assert!(d < 0.0);
            assert_relative_eq!(hermite_log_derivative(nu, z).unwrap(), d / hermite(nu, z).unwrap(), max_relative = 1e-12);
        }
        assert_relative_eq!(
            hermite_derivative(-1.0, 0.0).unwrap(),
            -2.0 * hermite(-2.0, 0.0).unwrap(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn cylinder_central_value() {
        let nu = -2.1;
        let expected = 2f64.powf(nu / 2.0) * PI.sqrt() / statrs_gamma((1.0 - nu) / 2.0);
        assert_relative_eq!(parabolic_cylinder(nu, 0.0).unwrap(), expected, max_relative = 1e-10);
    }

    #[test]
    fn cylinder_decays_to_zero() {
        let d5 = parabolic_cylinder(-2.1, 5.0).unwrap();
        let d10 = parabolic_cylinder(-2.1, 10.0).unwrap();
        let d20 = parabolic_cylinder(-2.1, 20.0).unwrap();
        assert!(d5 > d10 && d10 > d20 && d20 > 0.0);
        assert!(d20 < 1e-20);
    }

    #[test]
    fn cylinder_against_direct_integral() {
        // D_ν(z) = e^{-z²/4}/Γ(-ν) ∫_0^∞ t^{-ν-1} e^{-t²/2 - zt} dt, with
        // composite Simpson on [0, 40] for ν = -1 (smooth integrand).
        let (nu, z) = (-1.0, 1.0);
        let n = 200_000;
        let hstep = 40.0 / n as f64;
        let g = |t: f64| t.powf(-nu - 1.0) * (-t * t / 2.0 - z * t).exp();
        let mut s = g(0.0) + g(40.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * g(i as f64 * hstep);
        }
        let direct = (-z * z / 4.0).exp() / statrs_gamma(-nu) * s * hstep / 3.0;
        let composed = (-0.25f64).exp() * 2f64.sqrt() * hermite(-1.0, 1.0 / SQRT_2).unwrap();
        assert_relative_eq!(parabolic_cylinder(nu, z).unwrap(), composed, max_relative = 1e-13);
        assert_relative_eq!(composed, direct, max_relative = 1e-10);
    }

    #[test]
    fn rejects_nonnegative_degree() {
        assert!(matches!(hermite(0.0, 1.0), Err(SpecialFnError::DegreeOutOfRange { .. })));
        assert!(matches!(parabolic_cylinder(0.5, 1.0), Err(SpecialFnError::DegreeOutOfRange { .. })));
        assert!(matches!(hermite_derivative(f64::NAN, 1.0), Err(SpecialFnError::DegreeOutOfRange { .. })));
    }

    proptest! {
        #[test]
        fn hermite_three_term_recurrence(nu in -6.0f64..-1.1, z in -3.0f64..6.0) {
            // H_{ν+1}(z) = 2z H_ν(z) − 2ν H_{ν−1}(z)
            let (up, mid, down) = (hermite(nu + 1.0, z).unwrap(), hermite(nu, z).unwrap(), hermite(nu - 1.0, z).unwrap());
            let rhs = 2.0 * z * mid - 2.0 * nu * down;
            let scale = (2.0 * z * mid).abs() + (2.0 * nu * down).abs();
            prop_assert!((up - rhs).abs() <= 1e-9 * scale, "{up} vs {rhs}");
        }

        #[test]
        fn hermite_positive_for_negative_degree(nu in -8.0f64..-0.01, z in -5.0f64..20.0) {
            let h = hermite(nu, z).unwrap();
            prop_assert!(h > 0.0 && h.is_finite());
        }

        #[test]
        fn log_derivative_matches_difference_quotient(nu in -5.0f64..-0.1, z in -2.0f64..5.0) {
            let h = 1e-5;
            let fd = (ln_hermite(nu, z + h).unwrap() - ln_hermite(nu, z - h).unwrap()) / (2.0 * h);
            let exact = hermite_log_derivative(nu, z).unwrap();
            prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{fd} vs {exact}");
        }

        #[test]
        fn gamma_recurrence(x in 0.05f64..30.0) {
            let (a, b) = (gamma(x + 1.0), x * gamma(x));
            prop_assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }
}
