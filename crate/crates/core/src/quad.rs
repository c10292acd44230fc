//! Globally adaptive 21-point Gauss–Kronrod quadrature.
//!
//! Follows the QUADPACK `qag` strategy: keep a list of subintervals and
//! bisect the one with the largest error estimate until the summed estimate
//! meets the tolerance. Caller-supplied breakpoints seed the initial
//! partition so kinks and peaks never fall inside a panel.

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_22,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];

// Gauss weights for the odd-indexed Kronrod abscissae.
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

#[derive(Debug, Clone, Copy)]
pub struct Integrator {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum number of bisections applied to any initial panel.
    pub max_depth: u32,
    pub max_intervals: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-300,
            max_depth: 20,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: u32,
}

const GL3: [(f64, f64); 3] = [
    (0.0, 0.888_888_888_888_889),
    (-0.774_596_669_241_483_4, 0.555_555_555_555_555_6),
    (0.774_596_669_241_483_4, 0.555_555_555_555_555_6),
];

/// Three-point Gauss-Legendre rule on `[a, b]` for a vector integrand.
pub fn gauss_legendre_3<const K: usize, F: Fn(f64) -> [f64; K]>(f: &F, a: f64, b: f64) -> [f64; K] {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = [0.0; K];
    for &(x, w) in &GL3 {
        let v = f(center + half * x);
        for k in 0..K {
            acc[k] += half * w * v[k];
        }
    }
    acc
}

/// The 21-point Kronrod value for a vector integrand, without an error
/// estimate.
pub fn kronrod_21<const K: usize, F: Fn(f64) -> [f64; K]>(f: &F, a: f64, b: f64) -> [f64; K] {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = f(center).map(|v| WGK[10] * v);
    for j in 0..10 {
        let dx = half * XGK[j];
        let (lo, hi) = (f(center - dx), f(center + dx));
        for k in 0..K {
            acc[k] += WGK[j] * (lo[k] + hi[k]);
        }
    }
    acc.map(|v| v * half)
}

/// One 21-point Kronrod rule on `[a, b]`, returning the estimate and the
/// QUADPACK error heuristic.
pub fn gauss_kronrod_21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut res_k = WGK[10] * f_center;
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (f_center - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut error = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Estimate { value, error }
}

impl Integrator {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    /// Integrate `f` over `[a, b]`, splitting first at every breakpoint that
    /// lies strictly inside the interval.
    pub fn integrate<F: Fn(f64) -> f64>(
        &self,
        f: F,
        a: f64,
        b: f64,
        breakpoints: &[f64],
    ) -> Result<Estimate> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::QuadratureFailure(format!(
                "non-finite limits [{a}, {b}]"
            )));
        }
        if a == b {
            return Ok(Estimate {
                value: 0.0,
                error: 0.0,
            });
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut cuts: Vec<f64> = breakpoints
            .iter()
            .copied()
            .filter(|p| p.is_finite() && *p > lo && *p < hi)
            .collect();
        cuts.push(lo);
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut panels: Vec<Panel> = cuts
            .windows(2)
            .map(|w| {
                let e = gauss_kronrod_21(&f, w[0], w[1]);
                Panel {
                    a: w[0],
                    b: w[1],
                    value: e.value,
                    error: e.error,
                    depth: 0,
                }
            })
            .collect();

        loop {
            let total: f64 = panels.iter().map(|p| p.value).sum();
            let total_err: f64 = panels.iter().map(|p| p.error).sum();
            if !total.is_finite() {
                return Err(Error::QuadratureFailure("integrand is not finite".into()));
            }
            let tol = self.abs_tol.max(self.rel_tol * total.abs());
            if total_err <= tol {
                return Ok(Estimate {
                    value: sign * total,
                    error: total_err,
                });
            }
            let worst = panels
                .iter()
                .enumerate()
                .filter(|(_, p)| p.depth < self.max_depth)
                .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
                .map(|(i, _)| i);
            let Some(idx) = worst else {
                return Err(Error::QuadratureFailure(format!(
                    "error {total_err:e} above tolerance {tol:e} after {} levels",
                    self.max_depth
                )));
            };
            if panels.len() >= self.max_intervals {
                return Err(Error::QuadratureFailure(format!(
                    "error {total_err:e} above tolerance {tol:e} with {} panels",
                    panels.len()
                )));
            }
            let p = panels.swap_remove(idx);
            let mid = 0.5 * (p.a + p.b);
            for (a, b) in [(p.a, mid), (mid, p.b)] {
                let e = gauss_kronrod_21(&f, a, b);
                panels.push(Panel {
                    a,
                    b,
                    value: e.value,
                    error: e.error,
                    depth: p.depth + 1,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_rule_exact_for_high_degree_polynomials() {
        // K21 is exact through degree 31
        for deg in [0, 1, 5, 12, 20, 31] {
            let f = |x: f64| x.powi(deg);
            let e = gauss_kronrod_21(&f, 0.0, 1.0);
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((e.value - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn gauss_weights_sum_to_two() {
        let sum_g: f64 = 2.0 * WG.iter().sum::<f64>();
        assert!((sum_g - 2.0).abs() < 1e-14);
        let sum_k: f64 = 2.0 * WGK[..10].iter().sum::<f64>() + WGK[10];
        assert!((sum_k - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_kink_and_peak() {
        let integ = Integrator::default();
        let e = integ
            .integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3])
            .unwrap();
        assert!((e.value - (0.045 + 0.245)).abs() < 1e-12);
        let e = integ
            .integrate(|x: f64| (-(x / 1e-3).powi(2)).exp(), -1.0, 1.0, &[])
            .unwrap();
        let exact = 1e-3 * std::f64::consts::PI.sqrt();
        assert!((e.value - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let integ = Integrator::default();
        let e = integ.integrate(|x: f64| x.exp(), 1.0, 0.0, &[]).unwrap();
        assert!((e.value + (1f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn failure_is_reported() {
        let integ = Integrator {
            max_depth: 2,
            ..Integrator::default()
        };
        let r = integ.integrate(|x: f64| 1.0 / x.sqrt().max(1e-300), 0.0, 1.0, &[]);
        assert!(matches!(r, Err(Error::QuadratureFailure(_))));
    }
}
