//! Special functions used by the model kernels and the Laplace solver.
//!
//! The Lanczos gamma comes from `statrs`. The error function and the modified
//! Bessel function of the first kind are implemented here: the former needs
//! tighter accuracy than `statrs` delivers, the latter fractional orders in
//! exponentially scaled form for the CEV kernel.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Largest order accepted by [`bessel_i`].
pub const MAX_BESSEL_ORDER: f64 = 10.0;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Error function, accurate to a few ulps.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    let a = x.abs();
    let v = if a <= ERF_SWITCH {
        erf_series(a)
    } else {
        1.0 - erfc_fraction(a)
    };
    v.copysign(x)
}

/// Complementary error function `1 - erf(x)`, without cancellation in the
/// upper tail.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x <= ERF_SWITCH {
        1.0 - erf_series(x)
    } else {
        erfc_fraction(x)
    }
}

const ERF_SWITCH: f64 = 2.5;

// erf(x) = 2/sqrt(pi) exp(-x^2) sum_n 2^n x^(2n+1) / (1*3*...*(2n+1)),
// every term positive.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term > 1e-17 * sum {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
    }
    2.0 / PI.sqrt() * (-x2).exp() * sum
}

// erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))),
// evaluated with the modified Lentz algorithm.
fn erfc_fraction(x: f64) -> f64 {
    if x > 27.3 {
        return 0.0;
    }
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..500 {
        let a = 0.5 * n as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

/// Standard normal cumulative distribution function.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `N(a) - N(b)` evaluated on whichever tail avoids cancellation.
pub fn norm_cdf_diff(a: f64, b: f64) -> f64 {
    if a.min(b) > 0.0 {
        norm_cdf(-b) - norm_cdf(-a)
    } else {
        norm_cdf(a) - norm_cdf(b)
    }
}

fn check_bessel_args(order: f64, z: f64) -> Result<()> {
    // orders in (-1, 0) keep every series term positive
    if !(order > -1.0 && order <= MAX_BESSEL_ORDER) {
        return Err(Error::Domain(format!(
            "Bessel order {order} outside (-1, {MAX_BESSEL_ORDER}]"
        )));
    }
    if z.is_nan() || z < 0.0 {
        return Err(Error::Domain(format!(
            "Bessel argument must be >= 0, got {z}"
        )));
    }
    if z.is_infinite() {
        return Err(Error::Overflow("Bessel argument is infinite".into()));
    }
    Ok(())
}

/// Exponentially scaled modified Bessel function `exp(-z) I_order(z)`.
///
/// The ascending series has only positive terms and is used up to
/// `z = 30 + order^2`; beyond that the large-argument expansion converges
/// to below double precision before its terms start to grow.
pub fn bessel_i_scaled(order: f64, z: f64) -> Result<f64> {
    check_bessel_args(order, z)?;
    if z == 0.0 {
        return match order {
            0.0 => Ok(1.0),
            o if o > 0.0 => Ok(0.0),
            _ => Err(Error::Overflow(format!("I_{order}(0) is infinite"))),
        };
    }
    if z < 30.0 + order * order {
        Ok(scaled_series(order, z))
    } else {
        Ok(scaled_asymptotic(order, z))
    }
}

/// Modified Bessel function of the first kind `I_order(z)`.
pub fn bessel_i(order: f64, z: f64) -> Result<f64> {
    let scaled = bessel_i_scaled(order, z)?;
    if scaled == 0.0 {
        return Ok(0.0);
    }
    let log_value = scaled.ln() + z;
    if log_value > f64::MAX.ln() {
        return Err(Error::Overflow(format!(
            "I_{order}({z}) exceeds double range; use bessel_i_scaled"
        )));
    }
    Ok(scaled * z.exp())
}

fn scaled_series(order: f64, z: f64) -> f64 {
    let half = 0.5 * z;
    let quarter_sq = half * half;
    let mut term = (order * half.ln() - z - ln_gamma(order + 1.0)).exp();
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= quarter_sq / (k * (k + order));
        sum += term;
        // terms rise until k ~ z/2 and then fall geometrically
        if term < 1e-17 * sum && k > half {
            break;
        }
        if k > 10_000.0 {
            break;
        }
    }
    sum
}

fn scaled_asymptotic(order: f64, z: f64) -> f64 {
    let mu = 4.0 * order * order;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        term *= -(mu - odd * odd) / (k as f64 * 8.0 * z);
        if term.abs() >= prev {
            break;
        }
        sum += term;
        prev = term.abs();
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * PI * z).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Maclaurin series of erf, summed until the terms vanish.
    fn erf_taylor(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut power = x;
        let mut fact = 1.0;
        for n in 0..200 {
            let term = power / (fact * (2 * n + 1) as f64);
            sum += if n % 2 == 0 { term } else { -term };
            power *= x * x;
            fact *= (n + 1) as f64;
            if term.abs() < 1e-20 {
                break;
            }
        }
        2.0 / PI.sqrt() * sum
    }

    #[test]
    fn erf_reference_values() {
        assert_eq!(erf(0.0), 0.0);
        assert_eq!(erf(0.7), -erf(-0.7));
        let reference = erf_taylor(1.0);
        assert!((reference - 0.842_700_792_949_715).abs() < 1e-13);
        assert!(
            (erf(1.0) - reference).abs() < 1e-12,
            "{} {}",
            erf(1.0),
            reference
        );
        for &x in &[0.1, 0.5, 1.5, 2.0, 3.0] {
            assert!((erf(x) - erf_taylor(x)).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn erfc_tail_against_asymptotic_series() {
        // erfc(x) ~ exp(-x^2)/(x sqrt(pi)) (1 - 1/(2x^2) + 3/(4x^4) - 15/(8x^6) + 105/(16x^8))
        for &x in &[6.0f64, 8.0, 12.0] {
            let r = 1.0 / (2.0 * x * x);
            let series = 1.0 - r + 3.0 * r * r - 15.0 * r.powi(3) + 105.0 * r.powi(4);
            let expected = (-x * x).exp() / (x * PI.sqrt()) * series;
            assert_relative_eq!(erfc(x), expected, max_relative = 1e-7);
        }
        assert_relative_eq!(erfc(-1.0), 1.0 + erf(1.0), max_relative = 1e-15);
        assert!((erf(ERF_SWITCH - 1e-12) - erf(ERF_SWITCH + 1e-12)).abs() < 1e-14);
    }

    #[test]
    fn gamma_reference_values() {
        assert_relative_eq!(gamma(0.5), PI.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(gamma(5.0), 24.0, max_relative = 1e-13);
        assert_relative_eq!(gamma(1.5), 0.5 * PI.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(
            ln_gamma(101.0),
            (1..=100).map(|k| (k as f64).ln()).sum::<f64>(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn norm_cdf_values() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_cdf(1.959_963_985) - 0.975).abs() < 1e-9);
        let tail = norm_cdf(-8.0);
        assert!(tail > 0.0 && tail < 1e-14);
        // Mills-ratio bound: N(-x) < pdf(x)/x
        assert!(tail < norm_pdf(8.0) / 8.0);
    }

    #[test]
    fn norm_cdf_diff_matches_plain_difference() {
        assert_relative_eq!(
            norm_cdf_diff(1.0, -1.0),
            norm_cdf(1.0) - norm_cdf(-1.0),
            epsilon = 1e-15
        );
        // both arguments deep in the upper tail
        let d = norm_cdf_diff(9.0, 8.5);
        let expected = norm_cdf(-8.5) - norm_cdf(-9.0);
        assert_relative_eq!(d, expected, max_relative = 1e-12);
        assert!(d > 0.0);
    }

    #[test]
    fn bessel_small_cases() {
        assert_eq!(bessel_i(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_i(1.0, 0.0).unwrap(), 0.0);
        let z: f64 = 1e-4;
        assert_relative_eq!(bessel_i(1.0, z).unwrap(), z / 2.0, max_relative = 1e-8);
    }

    #[test]
    fn bessel_half_integer_closed_form() {
        let expected = (2.0 / (PI * 2.0)).sqrt() * 2.0_f64.sinh();
        assert_relative_eq!(bessel_i(0.5, 2.0).unwrap(), expected, max_relative = 1e-12);
        // I_{1/2}(z) = sqrt(2/(pi z)) sinh z across both evaluation branches
        for &z in &[0.3, 5.0, 29.0, 31.0, 80.0, 300.0, 690.0] {
            let expected_scaled = (2.0 / (PI * z)).sqrt() * 0.5 * (1.0 - (-2.0 * z).exp());
            assert_relative_eq!(
                bessel_i_scaled(0.5, z).unwrap(),
                expected_scaled,
                max_relative = 1e-10
            );
        }
        // I_{3/2}(z) = sqrt(2/(pi z)) (cosh z - sinh z / z)
        for &z in &[0.7, 12.0, 40.0, 120.0, 500.0] {
            let scaled = (2.0 / (PI * z)).sqrt()
                * 0.5
                * ((1.0 + (-2.0 * z).exp()) - (1.0 - (-2.0 * z).exp()) / z);
            assert_relative_eq!(
                bessel_i_scaled(1.5, z).unwrap(),
                scaled,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn bessel_branches_agree_at_switch() {
        for &order in &[0.0, 0.75, 1.0, 2.5, 5.0, 10.0] {
            let z: f64 = 30.0 + order * order;
            let below = scaled_series(order, z);
            let above = scaled_asymptotic(order, z);
            assert_relative_eq!(below, above, max_relative = 1e-12);
        }
    }

    #[test]
    fn bessel_errors() {
        assert!(matches!(bessel_i(1.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_i(11.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_i(0.0, 800.0), Err(Error::Overflow(_))));
        assert!(bessel_i_scaled(0.0, 800.0).unwrap().is_finite());
    }

    #[test]
    fn erf_is_odd_on_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-6.0..6.0);
            assert_eq!(erf(-x), -erf(x));
        }
    }

    #[test]
    fn norm_cdf_derivative_is_density() {
        let step = 1e-5;
        for i in -40..=40 {
            let x = i as f64 * 0.15;
            let fd = (norm_cdf(x + step) - norm_cdf(x - step)) / (2.0 * step);
            assert!((fd - norm_pdf(x)).abs() < 1e-6, "x = {x}");
        }
    }

    proptest! {
        #[test]
        fn bessel_recurrence(order in 1.0f64..5.0, z in 0.1f64..50.0) {
            // I_{v-1} - I_{v+1} = (2v/z) I_v, all scaled by exp(-z)
            let below = bessel_i_scaled(order - 1.0, z).unwrap();
            let above = bessel_i_scaled(order + 1.0, z).unwrap();
            let mid = bessel_i_scaled(order, z).unwrap();
            let lhs = below - above;
            let rhs = 2.0 * order / z * mid;
            prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs());
        }

        #[test]
        fn erf_bounded_and_monotone(a in -6.0f64..6.0, b in -6.0f64..6.0) {
            prop_assert!(erf(a).abs() <= 1.0);
            if a < b {
                prop_assert!(erf(a) <= erf(b));
            }
        }
    }
}
