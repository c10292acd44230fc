use ltbarrier::specialfn::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn bessel_recurrence(nu in 0.5f64..5.0, z in 0.1f64..50.0) {
        let lhs = bessel_i(nu - 1.0, z).unwrap() - bessel_i(nu + 1.0, z).unwrap();
        let rhs = 2.0 * nu / z * bessel_i(nu, z).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs(), "nu {} z {}: {} vs {}", nu, z, lhs, rhs);
    }

    #[test]
    fn erf_is_odd_and_bounded(x in -6.0f64..6.0) {
        prop_assert_eq!(erf(-x), -erf(x));
        prop_assert!(erf(x).abs() <= 1.0);
    }

    #[test]
    fn norm_cdf_is_symmetric(x in -9.0f64..9.0) {
        prop_assert!((norm_cdf(x) + norm_cdf(-x) - 1.0).abs() < 1e-15);
    }
}

#[test]
fn reference_values() {
    assert_eq!(erf(0.0), 0.0);
    assert!((erf(1.0) - 0.842700792949715).abs() < 1e-12);
    assert_eq!(norm_cdf(0.0), 0.5);
    assert!((norm_cdf(1.959963985) - 0.975).abs() < 1e-9);
    assert!(norm_cdf(-8.0) < 1e-14 && norm_cdf(-8.0) > 0.0);
    assert_eq!(bessel_i(0.0, 0.0).unwrap(), 1.0);
    let expect = (2.0 / (std::f64::consts::PI * 2.0)).sqrt() * 2.0f64.sinh();
    assert!((bessel_i(0.5, 2.0).unwrap() - expect).abs() < 1e-10 * expect);
    let z = 1e-3;
    assert!((bessel_i(1.0, z).unwrap() - z / 2.0).abs() < z * z * z);
}

#[test]
fn scaled_bessel_reaches_large_arguments() {
    assert!(bessel_i(1.0, 800.0).is_err());
    assert!(bessel_i(1.0, -1.0).is_err());
    let s = bessel_i_scaled(1.0, 800.0).unwrap();
    let asym = 1.0 / (2.0 * std::f64::consts::PI * 800.0).sqrt() * (1.0 - 3.0 / (8.0 * 800.0));
    assert!((s - asym).abs() < 1e-5 * asym);
}
