//! Constant-barrier GBM solver built on the convolution structure of the
//! kernel.
//!
//! With constant barriers the kernel matrix depends on `y - x` only, so the
//! barrier equations read `Psi = Q * f`. If `h` solves `Q * h = I` (the
//! resolvent), then
//!
//! ```text
//! f = h Psi(0) + h * Psi'.
//! ```
//!
//! For one barrier `h` is known in closed form. For two barriers the four
//! entries of `h` are recovered from `L(h)(s) = L(Q)(s)^-1 / s` by numerical
//! inversion on a cotangent (Talbot-type) contour.
//!
//! All functions that appear here have at worst a `1/sqrt(t)` singularity at
//! zero. They are carried as regular factors `U(t) = sqrt(t) u(t)` sampled on
//! a uniform grid, and convolved by product integration against
//! `1 / sqrt(x (y - x))`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::contract::{BarrierContract, Side};
use crate::error::{Error, Result};
use crate::european::EuropeanValuator;
use crate::model::{Diffusion, Dynamics};
use crate::quad::Integrator;
use crate::specialfn::erf;
use crate::volterra::{DeltaProfile, SideDelta, TimeGrid};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Scalar GBM kernel `q(t) = exp(-alpha t) / sqrt(pi t)` with
/// `alpha = (mu - sigma^2 / 2)^2 / (2 sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvolutionKernel {
    pub alpha: f64,
}

impl ConvolutionKernel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::Domain(format!(
                "alpha must be nonnegative, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn from_model(model: &Diffusion) -> Result<Self> {
        let (mu, sigma) = gbm_params(model)?;
        let nu = mu - 0.5 * sigma * sigma;
        Self::new(nu * nu / (2.0 * sigma * sigma))
    }

    pub fn q(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t <= 0.0 {
            return Err(Error::Domain(format!("kernel needs t > 0, got {t}")));
        }
        Ok((-self.alpha * t).exp() / (SQRT_PI * t.sqrt()))
    }

    /// `L(q)(s) = 1 / sqrt(s + alpha)`.
    pub fn transform(&self, s: f64) -> f64 {
        1.0 / (s + self.alpha).sqrt()
    }

    /// Closed-form resolvent, see [`auxiliary_h`].
    pub fn resolvent(&self, t: f64) -> Result<f64> {
        auxiliary_h(self.alpha, t)
    }
}

/// Solution of `int_0^y h(x) q(y - x) dx = 1`:
/// `h(t) = exp(-alpha t) / sqrt(pi t) + sqrt(alpha) erf(sqrt(alpha t))`.
pub fn auxiliary_h(alpha: f64, t: f64) -> Result<f64> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::Domain(format!("resolvent needs t > 0, got {t}")));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Domain(format!(
            "alpha must be nonnegative, got {alpha}"
        )));
    }
    Ok((-alpha * t).exp() / (SQRT_PI * t.sqrt()) + alpha.sqrt() * erf((alpha * t).sqrt()))
}

/// `sqrt(t) h(t)`, finite at zero.
fn auxiliary_factor(alpha: f64, t: f64) -> f64 {
    (-alpha * t).exp() / SQRT_PI + (alpha * t).sqrt() * erf((alpha * t).sqrt())
}

fn gbm_params(model: &Diffusion) -> Result<(f64, f64)> {
    match model.dynamics() {
        Dynamics::Gbm { sigma } => Ok((model.drift(), sigma)),
        Dynamics::Cev { .. } => Err(Error::UnsupportedConfiguration(
            "the Laplace solver needs GBM dynamics".into(),
        )),
    }
}

/// Product-integration weights of `int_0^y F(x) / sqrt(x (y - x)) dx` for
/// `y = i h` and `F` linear between the nodes `x_j = j h`: `(left, right)`
/// per panel `j`.
fn arcsine_weights(i: usize, h: f64) -> Vec<(f64, f64)> {
    let y = i as f64 * h;
    // theta(x) = asin(sqrt(x / y)) and sqrt(x (y - x)), from x and y - x
    // separately so that both ends stay accurate
    let theta = |j: usize| (j as f64).sqrt().atan2(((i - j) as f64).sqrt());
    let root = |j: usize| h * ((j * (i - j)) as f64).sqrt();
    (0..i)
        .map(|j| {
            let (a, b) = (j as f64 * h, (j + 1) as f64 * h);
            let dth = theta(j + 1) - theta(j);
            let i0 = 2.0 * dth;
            let i1 = y * dth - (root(j + 1) - root(j));
            ((b * i0 - i1) / h, (i1 - a * i0) / h)
        })
        .collect()
}

/// Convolution of two functions given by their regular factors
/// `U(x) = sqrt(x) u(x)`, `V(x) = sqrt(x) v(x)` on the nodes `x_j = j h`
/// (entry 0 holds the limit at zero). Returns `(u * v)(x_i)` for every node;
/// entry 0 is the limit `pi U(0) V(0)`, which is nonzero when both functions
/// are singular.
pub fn convolve(u: &[f64], v: &[f64], h: f64) -> Result<Vec<f64>> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::InvalidInput(format!(
            "convolution operands have {} and {} samples",
            u.len(),
            v.len()
        )));
    }
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "step must be positive, got {h}"
        )));
    }
    Ok((0..u.len())
        .into_par_iter()
        .map(|i| {
            if i == 0 {
                return std::f64::consts::PI * u[0] * v[0];
            }
            arcsine_weights(i, h)
                .iter()
                .enumerate()
                .map(|(j, &(wl, wr))| wl * u[j] * v[i - j] + wr * u[j + 1] * v[i - j - 1])
                .sum()
        })
        .collect())
}

/// Convolution of `u` (given by its regular factor `U(x) = sqrt(x) u(x)`)
/// with a bounded `v` sampled at the nodes: `(u * v)(x_i)` by product
/// integration against `1 / sqrt(x)`.
pub fn convolve_bounded(u: &[f64], v: &[f64], h: f64) -> Result<Vec<f64>> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::InvalidInput(format!(
            "convolution operands have {} and {} samples",
            u.len(),
            v.len()
        )));
    }
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "step must be positive, got {h}"
        )));
    }
    // moments of x^(-1/2) against the hat functions of panel j
    let weights: Vec<(f64, f64)> = (0..u.len().saturating_sub(1))
        .map(|j| {
            let (a, b) = (j as f64, (j + 1) as f64);
            let i0 = 2.0 * (b.sqrt() - a.sqrt());
            let i1 = (2.0 / 3.0) * (b.powf(1.5) - a.powf(1.5));
            (h.sqrt() * (b * i0 - i1), h.sqrt() * (i1 - a * i0))
        })
        .collect();
    Ok((0..u.len())
        .into_par_iter()
        .map(|i| {
            (0..i)
                .map(|j| {
                    let (wl, wr) = weights[j];
                    wl * u[j] * v[i - j] + wr * u[j + 1] * v[i - j - 1]
                })
                .sum()
        })
        .collect())
}

/// Kernel matrix `Q_ij(t) = 1/2 s_j q_t(B_i, B_j)` of a constant-barrier GBM
/// contract, barriers ordered as [`BarrierContract::sides`].
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    model: Diffusion,
    sigma: f64,
    nu: f64,
    alpha: f64,
    levels: Vec<f64>,
    signs: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(model: &Diffusion, contract: &BarrierContract) -> Result<Self> {
        let (mu, sigma) = gbm_params(model)?;
        let nu = mu - 0.5 * sigma * sigma;
        let sides = contract.sides();
        if sides.is_empty() {
            return Err(Error::MissingBarrier);
        }
        let mut levels = Vec::new();
        let mut signs = Vec::new();
        for side in sides {
            let b = contract.barrier(side).expect("side present");
            if !b.is_constant() {
                return Err(Error::UnsupportedConfiguration(
                    "the Laplace solver needs constant barriers".into(),
                ));
            }
            levels.push(b.value(0.0));
            signs.push(match side {
                Side::Upper => -1.0,
                Side::Lower => 1.0,
            });
        }
        Ok(Self {
            model: *model,
            sigma,
            nu,
            alpha: nu * nu / (2.0 * sigma * sigma),
            levels,
            signs,
        })
    }

    pub fn size(&self) -> usize {
        self.levels.len()
    }

    pub fn entry(&self, i: usize, j: usize, t: f64) -> Result<f64> {
        Ok(0.5 * self.signs[j] * self.model.kernel_q(t, self.levels[i], self.levels[j])?)
    }

    /// `sqrt(t) Q_ij(t)`, with its limit at zero.
    fn factor(&self, i: usize, j: usize, t: f64) -> Result<f64> {
        if t > 0.0 {
            Ok(t.sqrt() * self.entry(i, j, t)?)
        } else if i == j {
            Ok(0.5 * self.signs[i] * self.model.kernel_diag(self.levels[i])?)
        } else {
            Ok(0.0)
        }
    }

    /// `L(Q_ij)(s)` in closed form, valid for complex `s` off the cut
    /// `(-inf, -alpha]`.
    pub fn transform(&self, i: usize, j: usize, s: Complex64) -> Complex64 {
        let (bi, bj) = (self.levels[i], self.levels[j]);
        let l = (bj / bi).ln();
        let root = (s + self.alpha).sqrt();
        let pre = 0.5 * self.signs[j] * bj * self.sigma / std::f64::consts::SQRT_2
            * (l * self.nu / (self.sigma * self.sigma)).exp();
        pre * (-(l.abs() * std::f64::consts::SQRT_2 / self.sigma) * root).exp() / root
    }

    /// `L(Q_ij)(s)` for real `s > 0` by adaptive quadrature in `u = sqrt(t)`.
    pub fn laplace_transform_kernel(&self, i: usize, j: usize, s: f64) -> Result<f64> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Domain(format!(
                "transform argument must be positive, got {s}"
            )));
        }
        // exp(-(s + alpha) u^2) is negligible beyond u_max
        let u_max = (45.0 / (s + self.alpha)).sqrt();
        let failed = std::cell::Cell::new(None);
        let est = Integrator::with_rel_tol(1e-11).integrate(
            |u: f64| {
                let t = u * u;
                let f = self.factor(i, j, t).unwrap_or_else(|e| {
                    failed.set(Some(e));
                    0.0
                });
                2.0 * (-s * t).exp() * f
            },
            0.0,
            u_max,
            &[],
        )?;
        if let Some(e) = failed.take() {
            return Err(e);
        }
        Ok(est.value)
    }

    /// `L(h)(s) = L(Q)(s)^-1 / s`, row major.
    fn resolvent_transform(&self, s: Complex64) -> Result<Vec<Complex64>> {
        let m = self.size();
        let q: Vec<Complex64> = (0..m * m)
            .map(|k| self.transform(k / m, k % m, s))
            .collect();
        if m == 1 {
            return Ok(vec![1.0 / (q[0] * s)]);
        }
        let (a, b, c, d) = (q[0], q[1], q[2], q[3]);
        let det = a * d - b * c;
        if det.norm() <= 1e-13 * ((a * d).norm() + (b * c).norm()) {
            return Err(Error::DeterminantVanishing { s: format!("{s}") });
        }
        let k = 1.0 / (det * s);
        Ok(vec![d * k, -b * k, -c * k, a * k])
    }
}

// Contour z(theta) = N / t (-SIG + MU theta cot(A theta) + i NU theta),
// |theta| < pi, with parameters optimised for the convergence rate.
const SIG: f64 = 0.6122;
const MU: f64 = 0.5017;
const A: f64 = 0.6407;
const NU: f64 = 0.2645;

/// Inverse Laplace transform of an `m x m` matrix function at `t > 0`, with
/// `nodes` (even) midpoint nodes on the contour.
fn invert<F>(f: &F, m: usize, t: f64, nodes: usize) -> Result<Vec<f64>>
where
    F: Fn(Complex64) -> Result<Vec<Complex64>>,
{
    let nf = nodes as f64;
    let mut acc = vec![0.0; m * m];
    for k in 0..nodes / 2 {
        let th = (2 * k + 1) as f64 * std::f64::consts::PI / nf;
        let (sn, cs) = (A * th).sin_cos();
        let cot = cs / sn;
        let z = Complex64::new(nf / t * (-SIG + MU * th * cot), nf / t * NU * th);
        let dz = Complex64::new(nf / t * MU * (cot - A * th / (sn * sn)), nf / t * NU);
        let w = (z * t).exp() * dz;
        for (a, v) in acc.iter_mut().zip(f(z)?) {
            *a += (w * v).im;
        }
    }
    Ok(acc.into_iter().map(|v| 2.0 * v / nf).collect())
}

/// Resolvent `h` of a constant-barrier kernel matrix on a uniform grid,
/// stored as regular factors `sqrt(x) h_ij(x)` at `x_k = k h`.
#[derive(Debug, Clone)]
pub struct ResolventTable {
    grid: TimeGrid,
    size: usize,
    factors: Vec<Vec<f64>>,
}

impl ResolventTable {
    /// Closed form for one barrier: `h = auxiliary_h / c` where
    /// `Q(t) = c exp(-alpha t) / sqrt(pi t)`.
    pub fn single(kernel: &KernelMatrix, grid: &TimeGrid) -> Result<Self> {
        if kernel.size() != 1 {
            return Err(Error::InvalidInput(
                "expected a single-barrier kernel".into(),
            ));
        }
        let c = kernel.factor(0, 0, 0.0)? * SQRT_PI;
        let col = grid
            .nodes()
            .iter()
            .map(|&x| auxiliary_factor(kernel.alpha, x) / c)
            .collect();
        Ok(Self {
            grid: grid.clone(),
            size: 1,
            factors: vec![col],
        })
    }

    /// Numerical inversion for two barriers, 32 against 64 contour nodes.
    pub fn double(kernel: &KernelMatrix, grid: &TimeGrid) -> Result<Self> {
        if kernel.size() != 2 {
            return Err(Error::InvalidInput(
                "expected a double-barrier kernel".into(),
            ));
        }
        let f = |s: Complex64| kernel.resolvent_transform(s);
        let samples: Vec<Vec<f64>> = grid.nodes()[1..]
            .par_iter()
            .map(|&x| {
                let coarse = invert(&f, 2, x, 32)?;
                let fine = invert(&f, 2, x, 64)?;
                let scale = fine[0].abs().max(fine[3].abs());
                let diff = coarse
                    .iter()
                    .zip(&fine)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if diff > 1e-6 * scale {
                    return Err(Error::InversionUnstable {
                        t: x,
                        diff: diff / scale,
                    });
                }
                Ok(fine.into_iter().map(|v| x.sqrt() * v).collect())
            })
            .collect::<Result<_>>()?;
        let mut factors: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(grid.n() + 1)).collect();
        for (k, f) in factors.iter_mut().enumerate() {
            let (i, j) = (k / 2, k % 2);
            f.push(if i == j {
                1.0 / (std::f64::consts::PI * kernel.factor(i, i, 0.0)?)
            } else {
                0.0
            });
            f.extend(samples.iter().map(|s| s[k]));
        }
        Ok(Self {
            grid: grid.clone(),
            size: 2,
            factors,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `h_ij(x_k)` for `k >= 1`.
    pub fn h(&self, i: usize, j: usize, k: usize) -> f64 {
        self.factors[i * self.size + j][k] / self.grid.nodes()[k].sqrt()
    }

    /// `sqrt(x) h_ij(x)` at every node.
    pub fn factor(&self, i: usize, j: usize) -> &[f64] {
        &self.factors[i * self.size + j]
    }

    /// `max |(Q * h)_ij(x_k) - delta_ij|` over the grid.
    pub fn identity_error(&self, kernel: &KernelMatrix) -> Result<f64> {
        let m = self.size;
        let nodes = self.grid.nodes();
        let q: Vec<Vec<f64>> = (0..m * m)
            .map(|k| {
                nodes
                    .iter()
                    .map(|&t| kernel.factor(k / m, k % m, t))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let mut sum = vec![0.0; nodes.len()];
                for l in 0..m {
                    let c = convolve(&q[i * m + l], self.factor(l, j), self.grid.h())?;
                    sum.iter_mut().zip(c).for_each(|(s, v)| *s += v);
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = sum.iter().fold(worst, |w, v| w.max((v - target).abs()));
            }
        }
        Ok(worst)
    }
}

/// Near zero `Psi'(y) = g0 / sqrt(y) + g1 + g2 sqrt(y) + O(y)`. Returns
/// `g0`, `g2` and the bounded, Lipschitz remainder
/// `Psi' - g0 / sqrt(y) - g2 sqrt(y)` at the nodes. The coefficients come
/// from a cubic fit of `sqrt(y) Psi'(y)` in `sqrt(y)` at four tiny `y`.
fn psi_slope(
    european: &EuropeanValuator,
    level: f64,
    grid: &TimeGrid,
) -> Result<(f64, f64, Vec<f64>)> {
    let eps = 1e-5 * grid.maturity();
    let mut mat = Vec::with_capacity(4);
    let mut vals = Vec::with_capacity(4);
    for k in 1..=4 {
        let kf = k as f64;
        let y = eps * kf * kf;
        mat.push(vec![1.0, kf, kf * kf, kf.powi(3)]);
        vals.push(y.sqrt() * european.dvalue_dtau(y, level)?);
    }
    let fit = solve_small(mat, vals)?;
    let (g0, g1, g2) = (fit[0], fit[1] / eps.sqrt(), fit[2] / eps);
    let mut rest = vec![g1];
    let tail: Vec<f64> = grid.nodes()[1..]
        .par_iter()
        .map(|&y| Ok(european.dvalue_dtau(y, level)? - g0 / y.sqrt() - g2 * y.sqrt()))
        .collect::<Result<_>>()?;
    rest.extend(tail);
    Ok((g0, g2, rest))
}

/// Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty");
        if a[piv][col] == 0.0 {
            return Err(Error::SingularDiagonal {
                row: col,
                value: 0.0,
            });
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= factor * a[col][c];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

fn check(model: &Diffusion, contract: &BarrierContract, grid: &TimeGrid) -> Result<()> {
    contract.validate()?;
    gbm_params(model)?;
    let (a, b) = (model.drift(), contract.drift());
    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
        return Err(Error::InvalidInput(format!(
            "model drift {a} differs from contract rate minus dividend {b}"
        )));
    }
    if (grid.maturity() - contract.maturity).abs() > 1e-12 * contract.maturity {
        return Err(Error::ProfileMismatch(format!(
            "grid ends at {} but the contract matures at {}",
            grid.maturity(),
            contract.maturity
        )));
    }
    Ok(())
}

/// `f = h Psi(0) + h * Psi'` for every barrier.
fn assemble_profile(
    model: &Diffusion,
    contract: &BarrierContract,
    table: &ResolventTable,
    kernel: &KernelMatrix,
) -> Result<DeltaProfile> {
    let grid = table.grid();
    let n = grid.n();
    let m = table.size();
    let sides = contract.sides();
    let t_end = contract.maturity;
    let european = EuropeanValuator::new(*model, contract.clone());
    let mut psi0 = Vec::with_capacity(m);
    let mut slope = Vec::with_capacity(m);
    for &b in &kernel.levels {
        psi0.push(european.value(t_end, b)?);
        slope.push(psi_slope(&european, b, grid)?);
    }
    let ones = vec![1.0; n + 1];
    // regular factor of sqrt(y)
    let linear: Vec<f64> = grid.nodes().to_vec();
    let nodes = grid.nodes();
    let mut upper = None;
    let mut lower = None;
    for (i, &side) in sides.iter().enumerate() {
        let singular = table.factor(i, i)[0];
        let mut regular = vec![0.0; n + 1];
        for j in 0..m {
            let hij = table.factor(i, j);
            let (g0, g2, rest) = &slope[j];
            let inv_root = convolve(hij, &ones, grid.h())?;
            let root = convolve(hij, &linear, grid.h())?;
            let bounded = convolve_bounded(hij, rest, grid.h())?;
            for k in 0..=n {
                regular[k] += g0 * inv_root[k] + g2 * root[k] + bounded[k];
                if k > 0 && psi0[j] != 0.0 {
                    let reg = if i == j { hij[k] - singular } else { hij[k] };
                    regular[k] += psi0[j] * reg / nodes[k].sqrt();
                }
            }
        }
        // x_k = T - t_{n-k}: reverse into time order
        regular.reverse();
        let sd = SideDelta {
            regular,
            expiry_coeff: singular * psi0[i],
        };
        match side {
            Side::Upper => upper = Some(sd),
            Side::Lower => lower = Some(sd),
        }
    }
    DeltaProfile::from_parts(grid.clone(), upper, lower)
}

/// Single constant barrier, closed-form resolvent.
pub fn solve_constant_single(
    model: &Diffusion,
    contract: &BarrierContract,
    grid: &TimeGrid,
) -> Result<DeltaProfile> {
    check(model, contract, grid)?;
    if contract.is_double() {
        return Err(Error::UnsupportedConfiguration(
            "single-barrier solver given two barriers".into(),
        ));
    }
    let kernel = KernelMatrix::new(model, contract)?;
    let table = ResolventTable::single(&kernel, grid)?;
    assemble_profile(model, contract, &table, &kernel)
}

/// Two constant barriers, resolvent by numerical inversion.
pub fn solve_constant_double(
    model: &Diffusion,
    contract: &BarrierContract,
    grid: &TimeGrid,
) -> Result<DeltaProfile> {
    check(model, contract, grid)?;
    if !contract.is_double() {
        return Err(Error::MissingBarrier);
    }
    let kernel = KernelMatrix::new(model, contract)?;
    let table = ResolventTable::double(&kernel, grid)?;
    assemble_profile(model, contract, &table, &kernel)
}

/// Dispatch on the number of barriers.
pub fn solve_constant(
    model: &Diffusion,
    contract: &BarrierContract,
    grid: &TimeGrid,
) -> Result<DeltaProfile> {
    if contract.is_double() {
        solve_constant_double(model, contract, grid)
    } else {
        solve_constant_single(model, contract, grid)
    }
}
