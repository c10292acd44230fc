//! Prices, premium decompositions and spot ladders from a solved delta
//! profile:
//!
//! ```text
//! Z(0, S0) = phi(0, S0) - 1/2 int_0^T Delta_-(t) q_t(S0, b_-(t)) dt
//!                       + 1/2 int_0^T Delta_+(t) q_t(S0, b_+(t)) dt,
//! V(0, S0) = exp(-rT) Z(0, S0).
//! ```

use rayon::prelude::*;
use serde::Serialize;

use crate::contract::{Barrier, BarrierContract, Side};
use crate::error::{Error, Result};
use crate::european::EuropeanValuator;
use crate::model::Diffusion;
use crate::quad::{gauss_legendre_3, kronrod_21, Integrator};
use crate::volterra::DeltaProfile;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceResult {
    pub spot: f64,
    /// Corridor-truncated European value `phi(0, S0)`.
    pub european: f64,
    /// `-1/2 int Delta_- q dt`, nonpositive.
    pub premium_lower: f64,
    /// `+1/2 int Delta_+ q dt`, nonpositive.
    pub premium_upper: f64,
    /// Undiscounted price `european + premium_lower + premium_upper`.
    pub price: f64,
    pub discount_factor: f64,
    pub discounted_price: f64,
    pub near_expiry_unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ladder {
    pub spots: Vec<f64>,
    /// Undiscounted prices, as [`PriceResult::price`].
    pub prices: Vec<f64>,
    pub deltas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub discount_factor: f64,
    pub near_expiry_unreliable: bool,
}

/// Reusable pricer for one contract and one solved profile.
pub struct Pricer<'a> {
    model: &'a Diffusion,
    contract: &'a BarrierContract,
    profile: &'a DeltaProfile,
    european: EuropeanValuator,
}

/// Panels next to `t = 0` integrated exactly in [`Pricer::premium_integrals`].
const EXACT_PANELS: usize = 8;
/// Multiple of the weight's peak time integrated by Gauss-Legendre panels.
const PEAK_SPAN: f64 = 6.0;
/// Peaks wider than this many steps are left to the trapezoid rule.
const PEAK_RESOLVED: f64 = 64.0;

#[derive(Clone, Copy)]
enum Weight {
    Kernel,
    KernelDx,
}

impl<'a> Pricer<'a> {
    pub fn new(
        model: &'a Diffusion,
        contract: &'a BarrierContract,
        profile: &'a DeltaProfile,
    ) -> Result<Self> {
        contract.validate()?;
        let (a, b) = (model.drift(), contract.drift());
        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
            return Err(Error::InvalidInput(format!(
                "model drift {a} differs from contract rate minus dividend {b}"
            )));
        }
        let grid = profile.grid();
        if (grid.maturity() - contract.maturity).abs() > 1e-12 * contract.maturity {
            return Err(Error::ProfileMismatch(format!(
                "profile ends at {} but the contract matures at {}",
                grid.maturity(),
                contract.maturity
            )));
        }
        for side in [Side::Upper, Side::Lower] {
            if contract.barrier(side).is_some() != profile.side(side).is_some() {
                return Err(Error::ProfileMismatch(format!(
                    "{} barrier present in only one of contract and profile",
                    side.name()
                )));
            }
        }
        Ok(Self {
            model,
            contract,
            profile,
            european: EuropeanValuator::new(*model, contract.clone()),
        })
    }

    fn check_spot(&self, s0: f64) -> Result<()> {
        let (lo, hi) = self.contract.corridor(0.0);
        if s0.is_finite() && s0 > lo && s0 < hi {
            Ok(())
        } else {
            Err(Error::SpotOutsideCorridor {
                spot: s0,
                lower: lo,
                upper: hi,
            })
        }
    }

    fn weight(&self, w: Weight, t: f64, s0: f64, b: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        match w {
            Weight::Kernel => self.model.kernel_q(t, s0, b),
            Weight::KernelDx => self.model.dkernel_dx(t, s0, b),
        }
    }

    /// Panels covering a few multiples of the time at which the weight
    /// peaks, `(log(S0 / b) / sigma)^2 / 3`, when that peak is too narrow for
    /// the trapezoid rule; zero otherwise.
    fn peak_panels(&self, barrier: &Barrier, s0: f64, h: f64) -> Result<usize> {
        let b = barrier.value(0.0);
        let sigma = self.model.local_vol(b)?;
        let t_peak = (s0 / b).ln().powi(2) / (3.0 * sigma * sigma);
        if t_peak > PEAK_RESOLVED * h {
            return Ok(0);
        }
        Ok((PEAK_SPAN * t_peak / h).ceil() as usize)
    }

    /// `int_0^T Delta(t) w(t) dt` for one side, for the kernel weight and,
    /// when `with_dx`, its spot derivative. Trapezoid rule on the solve grid
    /// for the regular part, substitution `T - t = v^2` for the expiry
    /// singularity. Near the start, and around a narrow weight peak for spots
    /// close to the barrier, the linear interpolant of Delta is integrated
    /// against the weight by quadrature instead.
    fn premium_integrals(&self, side: Side, s0: f64, with_dx: bool) -> Result<[f64; 2]> {
        let Some(sd) = self.profile.side(side) else {
            return Ok([0.0; 2]);
        };
        let barrier = *self.contract.barrier(side).expect("checked in new");
        let grid = self.profile.grid();
        let (n, h) = (grid.n(), grid.h());
        let t = grid.nodes();
        let d = &sd.regular;
        let failed = std::cell::Cell::new(None);
        let fail = |e: Error| {
            failed.set(Some(e));
            0.0
        };
        let single =
            |w: Weight, u: f64| self.weight(w, u, s0, barrier.value(u)).unwrap_or_else(fail);
        let pair = |u: f64| -> [f64; 2] {
            if u <= 0.0 {
                return [0.0; 2];
            }
            let b = barrier.value(u);
            if with_dx {
                self.model
                    .kernel_q_and_dx(u, s0, b)
                    .map_or_else(|e| [fail(e); 2], |(q, dq)| [q, dq])
            } else {
                [self.model.kernel_q(u, s0, b).unwrap_or_else(fail), 0.0]
            }
        };
        let weights: &[Weight] = if with_dx {
            &[Weight::Kernel, Weight::KernelDx]
        } else {
            &[Weight::Kernel]
        };
        let head = n.min(EXACT_PANELS);
        let peak_end = n.min(head.max(self.peak_panels(&barrier, s0, h)?));
        let mut total = [0.0; 2];
        for j in 0..peak_end {
            let (a, b) = (d[j], d[j + 1]);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let lin = |u: f64| a + (b - a) * (u - t[j]) / h;
            let scaled = |u: f64| pair(u).map(|w| lin(u) * w);
            if j == 0 {
                for (k, &w) in weights.iter().enumerate() {
                    total[k] += Integrator::with_rel_tol(1e-10)
                        .integrate(
                            |v: f64| 2.0 * v * lin(v * v) * single(w, v * v),
                            0.0,
                            h.sqrt(),
                            &[],
                        )?
                        .value;
                }
            } else if j < head {
                accumulate(&mut total, kronrod_21(&scaled, t[j], t[j + 1]));
            } else {
                accumulate(&mut total, gauss_legendre_3(&scaled, t[j], t[j + 1]));
            }
        }
        let mut trap = [0.0; 2];
        if peak_end < n {
            for i in peak_end..=n {
                let c = if i == peak_end || i == n { 0.5 } else { 1.0 };
                if d[i] != 0.0 {
                    let w = pair(t[i]);
                    trap[0] += c * d[i] * w[0];
                    trap[1] += c * d[i] * w[1];
                }
            }
        }
        accumulate(&mut total, trap.map(|v| v * h));
        if sd.expiry_coeff != 0.0 {
            let t_end = grid.maturity();
            for (k, &w) in weights.iter().enumerate() {
                let est = Integrator::with_rel_tol(1e-10).integrate(
                    |v: f64| single(w, t_end - v * v) * 2.0,
                    0.0,
                    t_end.sqrt(),
                    &[],
                )?;
                total[k] += sd.expiry_coeff * est.value;
            }
        }
        if let Some(e) = failed.take() {
            return Err(e);
        }
        Ok(total)
    }

    /// Undiscounted price and delta at `s0` from one pass over the weights.
    fn price_and_delta(&self, s0: f64) -> Result<(PriceResult, f64)> {
        self.check_spot(s0)?;
        let european = self.european.value(0.0, s0)?;
        let lo = self.premium_integrals(Side::Lower, s0, true)?;
        let up = self.premium_integrals(Side::Upper, s0, true)?;
        let delta = self.european.delta(0.0, s0)? - 0.5 * lo[1] + 0.5 * up[1];
        Ok((
            self.assemble(s0, european, -0.5 * lo[0], 0.5 * up[0]),
            delta,
        ))
    }

    fn assemble(
        &self,
        s0: f64,
        european: f64,
        premium_lower: f64,
        premium_upper: f64,
    ) -> PriceResult {
        let price = european + premium_lower + premium_upper;
        let discount_factor = self.contract.discount_factor();
        PriceResult {
            spot: s0,
            european,
            premium_lower,
            premium_upper,
            price,
            discount_factor,
            discounted_price: discount_factor * price,
            near_expiry_unreliable: self.profile.near_expiry_unreliable,
        }
    }

    pub fn price(&self, s0: f64) -> Result<PriceResult> {
        self.check_spot(s0)?;
        let european = self.european.value(0.0, s0)?;
        let lo = self.premium_integrals(Side::Lower, s0, false)?[0];
        let up = self.premium_integrals(Side::Upper, s0, false)?[0];
        Ok(self.assemble(s0, european, -0.5 * lo, 0.5 * up))
    }

    /// `dZ/dS0` from the differentiated representation.
    pub fn delta(&self, s0: f64) -> Result<f64> {
        Ok(self.price_and_delta(s0)?.1)
    }

    /// Prices and deltas at every spot; gammas by central differences of
    /// the deltas along the ladder (three-point formula for uneven spacing,
    /// one-sided at the ends). With fewer than three spots the deltas are
    /// differenced at `S0 (1 +- 1e-3)` instead.
    pub fn ladder(&self, spots: &[f64]) -> Result<Ladder> {
        if spots.is_empty() {
            return Err(Error::InvalidInput("ladder needs at least one spot".into()));
        }
        for &s in spots {
            self.check_spot(s)?;
        }
        let rows: Vec<(f64, f64)> = spots
            .par_iter()
            .map(|&s| self.price_and_delta(s).map(|(p, d)| (p.price, d)))
            .collect::<Result<_>>()?;
        let prices: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let deltas: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let gammas = if spots.len() >= 3 {
            derivative_uneven(spots, &deltas)
        } else {
            spots
                .iter()
                .map(|&s| {
                    let ds = 1e-3 * s;
                    Ok((self.delta(s + ds)? - self.delta(s - ds)?) / (2.0 * ds))
                })
                .collect::<Result<_>>()?
        };
        Ok(Ladder {
            spots: spots.to_vec(),
            prices,
            deltas,
            gammas,
            discount_factor: self.contract.discount_factor(),
            near_expiry_unreliable: self.profile.near_expiry_unreliable,
        })
    }
}

fn accumulate(total: &mut [f64; 2], v: [f64; 2]) {
    total[0] += v[0];
    total[1] += v[1];
}

/// Second-order derivative estimate of samples on an uneven grid.
fn derivative_uneven(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let three = |i0: usize, i1: usize, i2: usize, at: f64| {
        // derivative of the quadratic through three points, evaluated at `at`
        let (x0, x1, x2) = (x[i0], x[i1], x[i2]);
        y[i0] * (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2))
            + y[i1] * (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + y[i2] * (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };
    (0..n)
        .map(|i| {
            if i == 0 {
                three(0, 1, 2, x[0])
            } else if i == n - 1 {
                three(n - 3, n - 2, n - 1, x[n - 1])
            } else {
                three(i - 1, i, i + 1, x[i])
            }
        })
        .collect()
}

pub fn price(
    model: &Diffusion,
    contract: &BarrierContract,
    s0: f64,
    profile: &DeltaProfile,
) -> Result<PriceResult> {
    Pricer::new(model, contract, profile)?.price(s0)
}

pub fn ladder(
    model: &Diffusion,
    contract: &BarrierContract,
    spots: &[f64],
    profile: &DeltaProfile,
) -> Result<Ladder> {
    Pricer::new(model, contract, profile)?.ladder(spots)
}

/// `(Delta_+(t), Delta_-(t))` by linear interpolation of the profile nodes.
pub fn delta_at_barrier(profile: &DeltaProfile, t: f64) -> (Option<f64>, Option<f64>) {
    (profile.at(Side::Upper, t), profile.at(Side::Lower, t))
}
