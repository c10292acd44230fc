//! Independent references: image-series closed forms for GBM with constant
//! barriers, Brownian-bridge Monte Carlo, and a Monte Carlo estimate of the
//! expected local time along a barrier curve.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contract::{Barrier, BarrierContract, Payoff};
use crate::error::{Error, Result};
use crate::model::{Diffusion, Dynamics};
use crate::quad::Integrator;
use crate::specialfn::norm_cdf_diff;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub bridge_correction: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            steps: 100,
            seed: 42,
            bridge_correction: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Closed-form value with the magnitude of the last image term included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub last_term: f64,
    pub terms: usize,
}

struct GbmParams {
    sigma: f64,
    nu: f64,
    tau: f64,
}

impl GbmParams {
    fn new(model: &Diffusion, contract: &BarrierContract) -> Result<Self> {
        let Some(sigma) = model.gbm_sigma() else {
            return Err(Error::UnsupportedConfiguration(
                "closed forms need GBM".into(),
            ));
        };
        if !contract.has_only_constant_barriers() {
            return Err(Error::UnsupportedConfiguration(
                "closed forms need constant barriers".into(),
            ));
        }
        Ok(Self {
            sigma,
            nu: model.drift() - 0.5 * sigma * sigma,
            tau: contract.maturity,
        })
    }

    /// `int_{c1}^{c2} e^{j u} p(u) du` for the density contribution
    /// `sign * e^{kappa (u - x0) - nu^2 tau / (2 sigma^2)} g(u - m)`,
    /// `g` the centred normal density with variance `sigma^2 tau`.
    fn piece(&self, j: f64, m: f64, x0: f64, c1: f64, c2: f64) -> f64 {
        if c1 >= c2 {
            return 0.0;
        }
        let v = self.sigma * self.sigma * self.tau;
        let sv = v.sqrt();
        let kappa = self.nu / (self.sigma * self.sigma);
        let k = j + kappa;
        let prob = norm_cdf_diff((c2 - m - k * v) / sv, (c1 - m - k * v) / sv);
        if prob == 0.0 {
            return 0.0;
        }
        let log_scale = k * m + 0.5 * k * k * v
            - kappa * x0
            - self.nu * self.nu * self.tau / (2.0 * self.sigma * self.sigma);
        prob * log_scale.exp()
    }

    /// Payoff expectation against one image `g(u - m)` over the log corridor
    /// `(a, b)`.
    fn image(&self, payoff: &Payoff, m: f64, x0: f64, a: f64, b: f64) -> Result<f64> {
        Ok(match *payoff {
            Payoff::Call { strike } => {
                let lo = a.max(strike.ln());
                self.piece(1.0, m, x0, lo, b) - strike * self.piece(0.0, m, x0, lo, b)
            }
            Payoff::Put { strike } => {
                let hi = b.min(strike.ln());
                strike * self.piece(0.0, m, x0, a, hi) - self.piece(1.0, m, x0, a, hi)
            }
            Payoff::DoubleNoTouch => self.piece(0.0, m, x0, a, b),
            _ => {
                return Err(Error::UnsupportedConfiguration(
                    "closed forms cover call, put and double-no-touch payoffs".into(),
                ))
            }
        })
    }
}

fn check_inside(contract: &BarrierContract, s0: f64) -> Result<bool> {
    contract.validate()?;
    let (lo, hi) = contract.corridor(0.0);
    if !(s0.is_finite() && s0 > 0.0) {
        return Err(Error::Domain(format!("spot must be positive, got {s0}")));
    }
    Ok(s0 > lo && s0 < hi)
}

/// Reflection-principle price (discounted) of a single constant-barrier
/// knock-out under GBM, for any drift.
pub fn closed_form_gbm_single(
    model: &Diffusion,
    contract: &BarrierContract,
    s0: f64,
) -> Result<f64> {
    let p = GbmParams::new(model, contract)?;
    if contract.is_double() {
        return Err(Error::UnsupportedConfiguration(
            "use the double-barrier series".into(),
        ));
    }
    if !check_inside(contract, s0)? {
        return Ok(0.0);
    }
    let x0 = s0.ln();
    let value = match (contract.lower, contract.upper) {
        (Some(l), None) => {
            let a = l.value(0.0).ln();
            p.image(&contract.payoff, x0, x0, a, f64::INFINITY)?
                - p.image(&contract.payoff, 2.0 * a - x0, x0, a, f64::INFINITY)?
        }
        (None, Some(u)) => {
            let b = u.value(0.0).ln();
            p.image(&contract.payoff, x0, x0, f64::NEG_INFINITY, b)?
                - p.image(&contract.payoff, 2.0 * b - x0, x0, f64::NEG_INFINITY, b)?
        }
        _ => return Err(Error::MissingBarrier),
    };
    Ok(contract.discount_factor() * value)
}

/// Image-series price (discounted) of a constant double-barrier knock-out
/// under GBM. Pairs of images are added until the last pair is below
/// `1e-12` or `max_terms` pairs have been used.
pub fn closed_form_gbm_double(
    model: &Diffusion,
    contract: &BarrierContract,
    s0: f64,
    max_terms: usize,
) -> Result<SeriesValue> {
    let p = GbmParams::new(model, contract)?;
    let (Some(l), Some(u)) = (contract.lower, contract.upper) else {
        return Err(Error::UnsupportedConfiguration(
            "double-barrier series needs both barriers".into(),
        ));
    };
    if !check_inside(contract, s0)? {
        return Ok(SeriesValue {
            value: 0.0,
            last_term: 0.0,
            terms: 0,
        });
    }
    let (a, b) = (l.value(0.0).ln(), u.value(0.0).ln());
    let w = b - a;
    let x0 = s0.ln();
    let term = |n: f64| -> Result<f64> {
        let shift = 2.0 * n * w;
        Ok(p.image(&contract.payoff, x0 + shift, x0, a, b)?
            - p.image(&contract.payoff, 2.0 * a - x0 + shift, x0, a, b)?)
    };
    let mut total = term(0.0)?;
    let mut last = total.abs();
    let mut used = 0;
    for n in 1..=max_terms {
        let t = term(n as f64)? + term(-(n as f64))?;
        total += t;
        last = t.abs();
        used = n;
        if last < 1e-12 {
            break;
        }
    }
    Ok(SeriesValue {
        value: contract.discount_factor() * total,
        last_term: last,
        terms: used,
    })
}

/// Per-step state shared by the simulation loops.
struct Stepper {
    model: Diffusion,
    dt: f64,
    sqrt_dt: f64,
}

impl Stepper {
    /// Advance `s` by one step given a standard normal draw; zero is
    /// absorbing.
    #[inline]
    fn step(&self, s: f64, z: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self.model.dynamics() {
            Dynamics::Gbm { sigma } => {
                s * ((self.model.drift() - 0.5 * sigma * sigma) * self.dt
                    + sigma * self.sqrt_dt * z)
                    .exp()
            }
            Dynamics::Cev { sigma0, rho } => {
                let vol = if rho == 0.5 {
                    sigma0 * s.sqrt()
                } else {
                    sigma0 * s.powf(rho)
                };
                let next = s + self.model.drift() * s * self.dt + vol * self.sqrt_dt * z;
                next.max(0.0)
            }
        }
    }

    #[inline]
    fn log_vol(&self, s: f64) -> f64 {
        match self.model.dynamics() {
            Dynamics::Gbm { sigma } => sigma,
            Dynamics::Cev { sigma0, rho } => sigma0 * s.powf(rho - 1.0),
        }
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Deterministic parallel reduction of `(sum, sum of squares)` over
/// fixed-size path chunks.
fn simulate<F>(paths: usize, seed: u64, per_path: F) -> McEstimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = paths.div_ceil(CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let count = CHUNK.min(paths - c * CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let v = per_path(&mut rng);
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = partial
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let n = paths as f64;
    let mean = s / n;
    let var = if paths > 1 {
        ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    McEstimate {
        mean,
        std_error: (var / n).sqrt(),
    }
}

fn check_cfg(cfg: &McConfig) -> Result<()> {
    if cfg.paths == 0 || cfg.steps == 0 {
        return Err(Error::InvalidInput(
            "Monte Carlo needs at least one path and one step".into(),
        ));
    }
    Ok(())
}

/// Discounted knock-out price by simulation. With `bridge_correction` each
/// step survives with the Brownian-bridge probability of not crossing the
/// (log-linearised) barrier, with the local volatility frozen at the step
/// start.
pub fn mc_price(
    model: &Diffusion,
    contract: &BarrierContract,
    s0: f64,
    cfg: &McConfig,
) -> Result<McEstimate> {
    check_cfg(cfg)?;
    if !check_inside(contract, s0)? {
        return Err(Error::SpotOutsideCorridor {
            spot: s0,
            lower: contract.corridor(0.0).0,
            upper: contract.corridor(0.0).1,
        });
    }
    if contract.payoff.is_zero() {
        return Ok(McEstimate {
            mean: 0.0,
            std_error: 0.0,
        });
    }
    let dt = contract.maturity / cfg.steps as f64;
    let stepper = Stepper {
        model: *model,
        dt,
        sqrt_dt: dt.sqrt(),
    };
    let log_level = |b: &Option<Barrier>| -> Vec<f64> {
        match b {
            Some(b) => (0..=cfg.steps)
                .map(|i| b.value(i as f64 * dt).ln())
                .collect(),
            None => Vec::new(),
        }
    };
    let lower = log_level(&contract.lower);
    let upper = log_level(&contract.upper);
    let disc = contract.discount_factor();
    let payoff = &contract.payoff;
    let steps = cfg.steps;
    let bridge = cfg.bridge_correction;

    let est = simulate(cfg.paths, cfg.seed, |rng| {
        let mut s = s0;
        let mut ls = s0.ln();
        let mut weight = 1.0;
        for i in 0..steps {
            let z: f64 = StandardNormal.sample(rng);
            let next = stepper.step(s, z);
            if next <= 0.0 {
                // absorbed at zero: only a missing lower barrier lets it pay
                if !lower.is_empty() {
                    return 0.0;
                }
                s = 0.0;
                break;
            }
            let lnext = next.ln();
            if (!lower.is_empty() && lnext <= lower[i + 1])
                || (!upper.is_empty() && lnext >= upper[i + 1])
            {
                return 0.0;
            }
            if bridge {
                let vol = stepper.log_vol(s);
                let scale = 2.0 / (vol * vol * dt);
                if !lower.is_empty() {
                    let e = scale * (ls - lower[i]) * (lnext - lower[i + 1]);
                    if e < 50.0 {
                        weight *= 1.0 - (-e).exp();
                    }
                }
                if !upper.is_empty() {
                    let e = scale * (upper[i] - ls) * (upper[i + 1] - lnext);
                    if e < 50.0 {
                        weight *= 1.0 - (-e).exp();
                    }
                }
            }
            s = next;
            ls = lnext;
        }
        disc * weight * payoff.eval(s)
    });
    Ok(est)
}

/// `int_0^T q_u(S0, b(u)) du`, the expected local time along `barrier`.
pub fn expected_local_time(
    model: &Diffusion,
    barrier: &Barrier,
    s0: f64,
    maturity: f64,
) -> Result<f64> {
    let failed = std::cell::Cell::new(None);
    let est = Integrator::with_rel_tol(1e-10).integrate(
        |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            model.kernel_q(u, s0, barrier.value(u)).unwrap_or_else(|e| {
                failed.set(Some(e));
                0.0
            })
        },
        0.0,
        maturity,
        &[],
    )?;
    if let Some(e) = failed.take() {
        return Err(e);
    }
    Ok(est.value)
}

/// Occupation-time estimate of `E[L_T^b(S)]`:
/// `(1/eps) sum_i 1{b(t_i) <= S_i < b(t_i) + eps} S_i^2 sigma(S_i)^2 dt`.
pub fn mc_local_time(
    model: &Diffusion,
    barrier: &Barrier,
    s0: f64,
    maturity: f64,
    epsilon: f64,
    cfg: &McConfig,
) -> Result<McEstimate> {
    check_cfg(cfg)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "band width must be positive, got {epsilon}"
        )));
    }
    if !(maturity > 0.0 && maturity.is_finite()) {
        return Err(Error::NonpositiveMaturity(maturity));
    }
    let dt = maturity / cfg.steps as f64;
    let stepper = Stepper {
        model: *model,
        dt,
        sqrt_dt: dt.sqrt(),
    };
    let steps = cfg.steps;
    let band: Vec<(f64, f64)> = (1..=steps)
        .map(|i| {
            let b = barrier.value(i as f64 * dt);
            (b, b + epsilon)
        })
        .collect();
    let scale = dt / epsilon;
    Ok(simulate(cfg.paths, cfg.seed, |rng| {
        let mut s = s0;
        let mut acc = 0.0;
        for &(lo, hi) in &band {
            let z: f64 = StandardNormal.sample(rng);
            s = stepper.step(s, z);
            if s >= lo && s < hi {
                let d = s * stepper.log_vol(s);
                acc += d * d;
            }
        }
        acc * scale
    }))
}
