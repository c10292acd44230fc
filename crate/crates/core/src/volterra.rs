//! Product-integration solver for the first-kind Volterra system satisfied by
//! the deltas at the barriers.
//!
//! With `y = T - t`, `x = T - u` and `f(x) = Delta(T - x)` every equation
//! becomes a generalised Abel equation
//!
//! ```text
//! Psi_a(y) = sum_b int_0^y K_ab(y, x) f_b(x) dx,
//! K_ab(y, x) = s_b q_{y-x}(b_a(T-y), b_b(T-x)) / 2,   s_upper = -1, s_lower = +1,
//! ```
//!
//! where `Psi_a(y)` is the European value on barrier `a`. Same-barrier
//! kernels behave like `k(y, x) / sqrt(y - x)` and are integrated with
//! product-trapezoid weights (exact moments of `1/sqrt(y-x)` against the
//! piecewise-linear interpolant); cross-barrier kernels are bounded and
//! vanish at zero lag, so plain trapezoid weights keep the system lower
//! triangular.
//!
//! The first step couples `f(0)` and `f(h)`; an extra collocation row at
//! `y = h/2` closes it. When the payoff does not vanish at a barrier the
//! solution carries an `x^(-1/2)` singularity at expiry whose coefficient is
//! fixed by `Psi(0)`; it is split off analytically and the regular part is
//! solved for.

pub mod smoothing;

use rayon::prelude::*;

use crate::contract::{BarrierContract, Side};
use crate::error::{Error, Result};
use crate::european::EuropeanValuator;
use crate::model::Diffusion;
use crate::quad::Integrator;

pub use smoothing::{smooth_payoff, SmoothApprox};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    maturity: f64,
    nodes: Vec<f64>,
}

impl TimeGrid {
    /// `n` uniform steps on `[0, maturity]`.
    pub fn uniform(maturity: f64, n: usize) -> Result<Self> {
        if !(maturity.is_finite() && maturity > 0.0) {
            return Err(Error::NonpositiveMaturity(maturity));
        }
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 steps, got {n}"
            )));
        }
        let h = maturity / n as f64;
        let mut nodes: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        nodes[n] = maturity;
        Ok(Self { maturity, nodes })
    }

    pub fn n(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn h(&self) -> f64 {
        self.maturity / self.n() as f64
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

/// Deltas along the barriers.
///
/// Per side the delta is `regular(t) + expiry_coeff / sqrt(T - t)`; the
/// second term is nonzero only when the payoff does not vanish on that
/// barrier at expiry. Node values reported by [`DeltaProfile::delta_plus`]
/// and friends include it, with the node at `t = T` replaced by its average
/// over the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaProfile {
    grid: TimeGrid,
    upper: Option<SideDelta>,
    lower: Option<SideDelta>,
    pub near_expiry_unreliable: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideDelta {
    /// Regular part at the grid nodes, in time order.
    pub regular: Vec<f64>,
    pub expiry_coeff: f64,
}

impl SideDelta {
    fn plain(regular: Vec<f64>) -> Self {
        Self {
            regular,
            expiry_coeff: 0.0,
        }
    }

    fn node(&self, i: usize, grid: &TimeGrid) -> f64 {
        let n = grid.n();
        if i == n {
            return self.regular[n] + 2.0 * self.expiry_coeff / grid.h().sqrt();
        }
        self.regular[i] + self.expiry_coeff / (grid.maturity() - grid.nodes()[i]).sqrt()
    }

    fn nodes(&self, grid: &TimeGrid) -> Vec<f64> {
        (0..=grid.n()).map(|i| self.node(i, grid)).collect()
    }
}

impl DeltaProfile {
    /// Profile from plain node values (time order).
    pub fn from_nodes(
        grid: TimeGrid,
        delta_plus: Option<Vec<f64>>,
        delta_minus: Option<Vec<f64>>,
    ) -> Result<Self> {
        Self::from_parts(
            grid,
            delta_plus.map(SideDelta::plain),
            delta_minus.map(SideDelta::plain),
        )
    }

    pub fn from_parts(
        grid: TimeGrid,
        upper: Option<SideDelta>,
        lower: Option<SideDelta>,
    ) -> Result<Self> {
        for s in upper.iter().chain(lower.iter()) {
            if s.regular.len() != grid.n() + 1 {
                return Err(Error::ProfileMismatch(format!(
                    "{} node values for a grid with {} nodes",
                    s.regular.len(),
                    grid.n() + 1
                )));
            }
        }
        let mut p = Self {
            grid,
            upper,
            lower,
            near_expiry_unreliable: false,
            warnings: Vec::new(),
        };
        p.near_expiry_unreliable = p.sides_present().iter().any(|&s| p.blows_up(s));
        Ok(p)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn side(&self, side: Side) -> Option<&SideDelta> {
        match side {
            Side::Upper => self.upper.as_ref(),
            Side::Lower => self.lower.as_ref(),
        }
    }

    pub fn sides_present(&self) -> Vec<Side> {
        [Side::Upper, Side::Lower]
            .into_iter()
            .filter(|&s| self.side(s).is_some())
            .collect()
    }

    /// Node values of `Delta_+` in time order.
    pub fn delta_plus(&self) -> Option<Vec<f64>> {
        self.values(Side::Upper)
    }

    /// Node values of `Delta_-` in time order.
    pub fn delta_minus(&self) -> Option<Vec<f64>> {
        self.values(Side::Lower)
    }

    pub fn values(&self, side: Side) -> Option<Vec<f64>> {
        self.side(side).map(|s| s.nodes(&self.grid))
    }

    /// Linear interpolation of the node values at time `t`.
    pub fn at(&self, side: Side, t: f64) -> Option<f64> {
        let s = self.side(side)?;
        let n = self.grid.n();
        let pos = (t / self.grid.h()).clamp(0.0, n as f64);
        let i = (pos.floor() as usize).min(n - 1);
        let w = pos - i as f64;
        if w == 0.0 {
            return Some(s.node(i, &self.grid));
        }
        if w == 1.0 {
            return Some(s.node(i + 1, &self.grid));
        }
        Some((1.0 - w) * s.node(i, &self.grid) + w * s.node(i + 1, &self.grid))
    }

    /// Last three nodes growing by more than 50% each towards expiry.
    fn blows_up(&self, side: Side) -> bool {
        let Some(v) = self.values(side) else {
            return false;
        };
        let n = v.len() - 1;
        let (a, b, c) = (v[n].abs(), v[n - 1].abs(), v[n - 2].abs());
        a > 1.5 * b && b > 1.5 * c
    }
}

/// Discretised system: one row per (collocation point, barrier), unknowns
/// interleaved as `(f_upper(x_0), f_lower(x_0), f_upper(x_1), ...)`.
///
/// Row block 0 pins the starting values `f(0)`, row block `i >= 1` is the
/// equation at `y = i h`. Rows of block `i` reference unknown blocks `0..=i`,
/// so the matrix is block lower triangular with diagonal blocks.
#[derive(Debug, Clone)]
pub struct KernelSystem {
    grid: TimeGrid,
    sides: Vec<Side>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    psi: Vec<f64>,
    expiry_coeff: Vec<f64>,
}

impl KernelSystem {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn sides(&self) -> &[Side] {
        &self.sides
    }

    /// Number of equations (excluding the startup row): `n` or `2n`.
    pub fn dimension(&self) -> usize {
        self.grid.n() * self.sides.len()
    }

    /// Weight of unknown `(block j, side b)` in the equation at
    /// `(block i, side a)`; zero outside the stored pattern.
    pub fn weight(&self, i: usize, a: usize, j: usize, b: usize) -> f64 {
        let m = self.sides.len();
        self.rows[i * m + a].get(j * m + b).copied().unwrap_or(0.0)
    }

    /// `Psi_a` at the collocation points `y = i h`.
    pub fn psi(&self, a: usize) -> Vec<f64> {
        let m = self.sides.len();
        self.psi.iter().skip(a).step_by(m).copied().collect()
    }

    /// Right-hand side actually solved: starting value, then `Psi` with the
    /// expiry singularity removed.
    pub fn rhs(&self, a: usize) -> Vec<f64> {
        let m = self.sides.len();
        self.rhs.iter().skip(a).step_by(m).copied().collect()
    }

    /// `W f` for interleaved unknowns, one entry per stored row.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().zip(f).map(|(w, v)| w * v).sum())
            .collect()
    }
}

fn sign(side: Side) -> f64 {
    match side {
        Side::Upper => -1.0,
        Side::Lower => 1.0,
    }
}

fn check_consistency(model: &Diffusion, contract: &BarrierContract) -> Result<()> {
    let (a, b) = (model.drift(), contract.drift());
    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
        return Err(Error::InvalidInput(format!(
            "model drift {a} differs from contract rate minus dividend {b}"
        )));
    }
    Ok(())
}

struct Kernels<'a> {
    model: &'a Diffusion,
    contract: &'a BarrierContract,
    sides: &'a [Side],
}

impl Kernels<'_> {
    fn level(&self, side: Side, t: f64) -> f64 {
        self.contract.barrier(side).expect("side present").value(t)
    }

    /// `K_ab(y, x)` for `x < y`.
    fn full(&self, a: usize, b: usize, y: f64, x: f64) -> Result<f64> {
        let t_end = self.contract.maturity;
        let (sa, sb) = (self.sides[a], self.sides[b]);
        let q = self
            .model
            .kernel_q(y - x, self.level(sa, t_end - y), self.level(sb, t_end - x))
            .map_err(|e| Error::AssemblyFailure(e.to_string()))?;
        Ok(0.5 * sign(sb) * q)
    }

    /// Regular factor `k(y, x) = sqrt(y - x) K_aa(y, x)`, with its limit on
    /// the diagonal.
    fn abel(&self, a: usize, y: f64, x: f64) -> Result<f64> {
        if x >= y {
            return self.diag(a, y);
        }
        Ok((y - x).sqrt() * self.full(a, a, y, x)?)
    }

    fn diag(&self, a: usize, y: f64) -> Result<f64> {
        let side = self.sides[a];
        let b = self.level(side, self.contract.maturity - y);
        let d = self
            .model
            .kernel_diag(b)
            .map_err(|e| Error::AssemblyFailure(e.to_string()))?;
        Ok(0.5 * sign(side) * d)
    }

    /// `int_0^y K_ab(y, x) x^(-1/2) dx`, the image of the expiry
    /// singularity.
    fn singular_image(&self, a: usize, b: usize, y: f64) -> Result<f64> {
        let integ = Integrator::with_rel_tol(1e-11);
        let failed = std::cell::Cell::new(None);
        let guard = |r: Result<f64>| {
            r.unwrap_or_else(|e| {
                failed.set(Some(e));
                0.0
            })
        };
        let est = if a == b {
            // x = y sin^2(theta) turns dx / sqrt(x (y - x)) into 2 d(theta)
            integ.integrate(
                |th: f64| 2.0 * guard(self.abel(a, y, y * th.sin().powi(2))),
                0.0,
                std::f64::consts::FRAC_PI_2,
                &[],
            )
        } else {
            integ.integrate(
                |v: f64| 2.0 * guard(self.full(a, b, y, v * v)),
                0.0,
                y.sqrt(),
                &[],
            )
        };
        if let Some(e) = failed.take() {
            return Err(e);
        }
        est.map(|e| e.value)
            .map_err(|e| Error::AssemblyFailure(e.to_string()))
    }
}

/// Exact moments of `1/sqrt(y - x)` on `[lo, lo + h]` against the two
/// linear hat functions, with `d = y - lo`: `(left, right)` weights.
fn abel_weights(d: f64, h: f64) -> (f64, f64) {
    let a = d.sqrt();
    let c = (d - h).max(0.0).sqrt();
    let diff = h / (a + c);
    let i0 = 2.0 * diff;
    let i1 = (2.0 / 3.0) * diff * diff * (2.0 * a + c);
    let right = i1 / h;
    (i0 - right, right)
}

/// Assemble the system for every barrier present in the contract.
pub fn assemble(
    model: &Diffusion,
    contract: &BarrierContract,
    grid: &TimeGrid,
) -> Result<KernelSystem> {
    contract.validate()?;
    check_consistency(model, contract)?;
    if (grid.maturity() - contract.maturity).abs() > 1e-12 * contract.maturity {
        return Err(Error::ProfileMismatch(format!(
            "grid ends at {} but the contract matures at {}",
            grid.maturity(),
            contract.maturity
        )));
    }
    let sides = contract.sides();
    let m = sides.len();
    let n = grid.n();
    let h = grid.h();
    let t_end = contract.maturity;
    let kern = Kernels {
        model,
        contract,
        sides: &sides,
    };

    for a in 0..m {
        for y in [0.0, t_end] {
            let d = kern.diag(a, y)?;
            if d.abs() < 1e-14 {
                return Err(Error::SingularDiagonal { row: a, value: d });
            }
        }
    }

    // right-hand side: Psi at y = 0, h, 2h, ..., nh
    let european = EuropeanValuator::new(*model, contract.clone());
    let ys: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let mut psi = vec![0.0; ys.len() * m];
    for (a, &side) in sides.iter().enumerate() {
        let barrier = contract.barrier(side).expect("side present");
        let vals: Vec<f64> = ys
            .par_iter()
            .map(|&y| {
                let t = t_end - y;
                european.value(t, barrier.value(t))
            })
            .collect::<Result<_>>()?;
        for (r, v) in vals.into_iter().enumerate() {
            psi[r * m + a] = v;
        }
    }

    // expiry singularity coefficients from Psi(0) = int k(0,0) c / sqrt(x(y-x))
    let mut expiry_coeff = vec![0.0; m];
    for (a, &side) in sides.iter().enumerate() {
        let psi0 = european.value(
            t_end,
            contract.barrier(side).expect("side present").value(t_end),
        )?;
        if psi0 != 0.0 {
            expiry_coeff[a] = psi0 / (std::f64::consts::PI * kern.diag(a, 0.0)?);
        }
    }

    // Starting values. With the singularity removed the data behave like
    // r_1 sqrt(y) + r_2 y + ... as y -> 0, and the leading term fixes
    // f_a(0) = r_1 / (2 k_aa(0, 0)). r_1 comes from a fit at four tiny y.
    let eps = 1e-6 * t_end;
    let mut initial = vec![0.0; m];
    for (a, &side) in sides.iter().enumerate() {
        let barrier = contract.barrier(side).expect("side present");
        let mut mat = Vec::with_capacity(4);
        let mut vals = Vec::with_capacity(4);
        for k in 1..=4 {
            let kf = k as f64;
            let y = eps * kf * kf;
            let t = t_end - y;
            let mut r = european.value(t, barrier.value(t))?;
            for (b, &c) in expiry_coeff.iter().enumerate() {
                if c != 0.0 {
                    r -= c * kern.singular_image(a, b, y)?;
                }
            }
            mat.push(vec![kf, kf * kf, kf.powi(3), kf.powi(4)]);
            vals.push(r);
        }
        let fit = solve_dense(mat, vals)?;
        initial[a] = fit[0] / (2.0 * eps.sqrt() * kern.diag(a, 0.0)?);
    }

    let rows_per_block: Vec<Result<Vec<Vec<f64>>>> = (0..=n)
        .into_par_iter()
        .map(|i| {
            let mut block = Vec::with_capacity(m);
            for a in 0..m {
                let mut row = vec![0.0; m * (i + 1)];
                if i == 0 {
                    row[a] = 1.0;
                } else {
                    let y = i as f64 * h;
                    for p in 0..i {
                        let lo = p as f64 * h;
                        let (wl, wr) = abel_weights((i - p) as f64 * h, h);
                        row[p * m + a] += wl * kern.abel(a, y, lo)?;
                        row[(p + 1) * m + a] += wr * kern.abel(a, y, lo + h)?;
                    }
                    for b in (0..m).filter(|&b| b != a) {
                        for j in 0..i {
                            let c = if j == 0 { 0.5 } else { 1.0 };
                            row[j * m + b] += c * h * kern.full(a, b, y, j as f64 * h)?;
                        }
                    }
                }
                block.push(row);
            }
            Ok(block)
        })
        .collect();
    let mut rows = Vec::with_capacity((n + 1) * m);
    for block in rows_per_block {
        rows.extend(block?);
    }

    let mut rhs = psi.clone();
    rhs[..m].copy_from_slice(&initial);
    if expiry_coeff.iter().any(|&c| c != 0.0) {
        let corrections: Vec<Result<Vec<f64>>> = ys[1..]
            .par_iter()
            .map(|&y| {
                (0..m)
                    .map(|a| {
                        let mut s = 0.0;
                        for (b, &c) in expiry_coeff.iter().enumerate() {
                            if c != 0.0 {
                                s += c * kern.singular_image(a, b, y)?;
                            }
                        }
                        Ok(s)
                    })
                    .collect()
            })
            .collect();
        for (r, corr) in corrections.into_iter().enumerate() {
            for (a, s) in corr?.into_iter().enumerate() {
                rhs[(r + 1) * m + a] -= s;
            }
        }
    }

    Ok(KernelSystem {
        grid: grid.clone(),
        sides,
        rows,
        rhs,
        psi,
        expiry_coeff,
    })
}

/// Single-barrier equation for `side`; any other barrier is dropped.
pub fn assemble_single(
    model: &Diffusion,
    contract: &BarrierContract,
    grid: &TimeGrid,
    side: Side,
) -> Result<KernelSystem> {
    if contract.barrier(side).is_none() {
        return Err(Error::MissingBarrier);
    }
    let mut single = contract.clone();
    match side {
        Side::Lower => single.upper = None,
        Side::Upper => single.lower = None,
    }
    assemble(model, &single, grid)
}

pub fn assemble_double(
    model: &Diffusion,
    contract: &BarrierContract,
    grid: &TimeGrid,
) -> Result<KernelSystem> {
    if !contract.is_double() {
        return Err(Error::MissingBarrier);
    }
    assemble(model, contract, grid)
}

/// Dense Gaussian elimination with partial pivoting, for small systems.
#[allow(clippy::needless_range_loop)]
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty");
        let scale = a.iter().map(|r| r[col].abs()).fold(0.0, f64::max);
        if a[piv][col].abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::SingularDiagonal {
                row: col,
                value: a[piv][col],
            });
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            if factor != 0.0 {
                for c in col..n {
                    a[r][c] -= factor * a[col][c];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

/// Forward substitution. Returns the profile with sign diagnostics and the
/// near-expiry flag filled in.
pub fn solve(sys: &KernelSystem) -> Result<DeltaProfile> {
    let m = sys.sides.len();
    let n = sys.grid.n();
    let mut f = vec![0.0; (n + 1) * m];

    for i in 0..=n {
        for a in 0..m {
            let r = i * m + a;
            let row = &sys.rows[r];
            let d = row[r];
            if d.abs() < 1e-14 {
                return Err(Error::SingularDiagonal { row: r, value: d });
            }
            let s: f64 = row[..i * m]
                .iter()
                .zip(&f[..i * m])
                .map(|(w, v)| w * v)
                .sum();
            f[r] = (sys.rhs[r] - s) / d;
        }
    }

    let mut upper = None;
    let mut lower = None;
    for (a, &side) in sys.sides.iter().enumerate() {
        // x_j = T - t_{n-j}: reverse into time order
        let regular: Vec<f64> = (0..=n).rev().map(|j| f[j * m + a]).collect();
        let sd = SideDelta {
            regular,
            expiry_coeff: sys.expiry_coeff[a],
        };
        match side {
            Side::Upper => upper = Some(sd),
            Side::Lower => lower = Some(sd),
        }
    }
    let mut profile = DeltaProfile::from_parts(sys.grid.clone(), upper, lower)?;
    let scale = sys.psi.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-6 * scale;
    for side in profile.sides_present() {
        let vals = profile.values(side).expect("present");
        let bad = vals
            .iter()
            .filter(|&&v| match side {
                Side::Upper => v > tol,
                Side::Lower => v < -tol,
            })
            .count();
        if bad > 0 {
            profile.warnings.push(format!(
                "{bad} {} barrier deltas have the wrong sign (tolerance {tol:e})",
                side.name()
            ));
        }
    }
    if profile.near_expiry_unreliable {
        profile
            .warnings
            .push("deltas grow rapidly towards expiry; last nodes are unreliable".into());
    }
    Ok(profile)
}

pub fn solve_single(sys: &KernelSystem) -> Result<DeltaProfile> {
    if sys.sides.len() != 1 {
        return Err(Error::InvalidInput(
            "expected a single-barrier system".into(),
        ));
    }
    solve(sys)
}

pub fn solve_double(sys: &KernelSystem) -> Result<DeltaProfile> {
    if sys.sides.len() != 2 {
        return Err(Error::InvalidInput(
            "expected a double-barrier system".into(),
        ));
    }
    solve(sys)
}

/// Assemble and solve on a uniform `n`-step grid.
pub fn solve_contract(
    model: &Diffusion,
    contract: &BarrierContract,
    n: usize,
) -> Result<DeltaProfile> {
    let grid = TimeGrid::uniform(contract.maturity, n)?;
    solve(&assemble(model, contract, &grid)?)
}

/// Max-norm residual of the continuous system: the profile is interpolated
/// onto a grid with half the step and plugged into that grid's
/// discretisation, which is compared with the European values there.
pub fn residual(
    model: &Diffusion,
    contract: &BarrierContract,
    profile: &DeltaProfile,
) -> Result<f64> {
    let grid = profile.grid();
    let fine = TimeGrid::uniform(grid.maturity(), 2 * grid.n())?;
    let sys = assemble(model, contract, &fine)?;
    let m = sys.sides.len();
    let n2 = fine.n();
    let mut f = vec![0.0; (n2 + 1) * m];
    for (a, &side) in sys.sides.iter().enumerate() {
        let sd = profile.side(side).ok_or_else(|| {
            Error::ProfileMismatch(format!("profile has no {} barrier", side.name()))
        })?;
        if (sd.expiry_coeff - sys.expiry_coeff[a]).abs() > 1e-9 * sd.expiry_coeff.abs().max(1.0) {
            return Err(Error::ProfileMismatch(
                "expiry singularity differs from the contract's".into(),
            ));
        }
        for j in 0..=n2 {
            // fine node x_j = j h / 2, coarse regular part in x order
            let t = grid.maturity() - j as f64 * fine.h();
            let pos = t / grid.h();
            let i = (pos.floor() as usize).min(grid.n() - 1);
            let w = pos - i as f64;
            f[j * m + a] = (1.0 - w) * sd.regular[i] + w * sd.regular[i + 1];
        }
    }
    let applied = sys.apply(&f);
    Ok(applied
        .iter()
        .zip(&sys.rhs)
        .skip(m)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
