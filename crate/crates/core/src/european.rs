//! Corridor-truncated European value
//! `phi(t, x) = E_{t,x}[phi(S_T) 1{b_-(T) < S_T < b_+(T)}]`.
//!
//! No discounting is applied here: the process already carries the drift
//! `r - delta` and the `exp(-rT)` factor is applied once by the pricer.

use crate::contract::{BarrierContract, Payoff, Side};
use crate::error::{Error, Result};
use crate::model::{log_spread, Diffusion, Dynamics};
use crate::quad::Integrator;
use crate::specialfn::{norm_cdf, norm_cdf_diff, norm_pdf};
use crate::volterra::TimeGrid;

/// Time to expiry below which the payoff limit is returned directly.
pub const NEAR_EXPIRY: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EuropeanMethod {
    ClosedFormGbm,
    Quadrature,
}

#[derive(Debug, Clone)]
pub struct EuropeanValuator {
    model: Diffusion,
    contract: BarrierContract,
    method: EuropeanMethod,
    integrator: Integrator,
}

/// Which functional of the value to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Moment {
    Value,
    Dx,
    Dtau,
}

fn closed_form_applies(model: &Diffusion, payoff: &Payoff) -> bool {
    model.is_gbm()
        && matches!(
            payoff,
            Payoff::Call { .. } | Payoff::Put { .. } | Payoff::DoubleNoTouch
        )
}

impl EuropeanValuator {
    /// Closed form when available, quadrature otherwise.
    pub fn new(model: Diffusion, contract: BarrierContract) -> Self {
        let method = if closed_form_applies(&model, &contract.payoff) {
            EuropeanMethod::ClosedFormGbm
        } else {
            EuropeanMethod::Quadrature
        };
        Self {
            model,
            contract,
            method,
            integrator: Integrator::default(),
        }
    }

    pub fn with_method(mut self, method: EuropeanMethod) -> Result<Self> {
        if method == EuropeanMethod::ClosedFormGbm
            && !closed_form_applies(&self.model, &self.contract.payoff)
        {
            return Err(Error::UnsupportedConfiguration(
                "closed-form European value needs GBM and a call, put or double-no-touch payoff"
                    .into(),
            ));
        }
        self.method = method;
        Ok(self)
    }

    pub fn method(&self) -> EuropeanMethod {
        self.method
    }

    pub fn model(&self) -> &Diffusion {
        &self.model
    }

    pub fn contract(&self) -> &BarrierContract {
        &self.contract
    }

    /// `phi(t, x)` for `t` in `[0, T]`.
    pub fn value(&self, t: f64, x: f64) -> Result<f64> {
        self.value_tau(self.contract.maturity - t, x)
    }

    /// Value as a function of time to expiry `tau`.
    pub fn value_tau(&self, tau: f64, x: f64) -> Result<f64> {
        self.check_spot(x)?;
        if tau < NEAR_EXPIRY {
            return Ok(self.expiry_limit(x));
        }
        match self.method {
            EuropeanMethod::ClosedFormGbm => Ok(self.closed_form(tau, x, Moment::Value)),
            EuropeanMethod::Quadrature => self.quadrature(tau, x, Moment::Value),
        }
    }

    /// Spatial derivative `d phi(t, x) / dx`.
    pub fn delta(&self, t: f64, x: f64) -> Result<f64> {
        let tau = self.contract.maturity - t;
        self.check_spot(x)?;
        if tau < NEAR_EXPIRY {
            return Err(Error::Domain(format!(
                "delta requested {tau:e} before expiry"
            )));
        }
        match self.method {
            EuropeanMethod::ClosedFormGbm => Ok(self.closed_form(tau, x, Moment::Dx)),
            EuropeanMethod::Quadrature => self.quadrature(tau, x, Moment::Dx),
        }
    }

    /// Derivative in time to expiry, `d phi / d tau` at fixed `x`.
    ///
    /// Analytic for GBM (closed form, or the backward generator applied
    /// under the integral); five-point differences in `tau` for CEV.
    pub fn dvalue_dtau(&self, tau: f64, x: f64) -> Result<f64> {
        self.check_spot(x)?;
        if tau < NEAR_EXPIRY {
            return Err(Error::Domain(format!(
                "time derivative requested {tau:e} before expiry"
            )));
        }
        match (self.method, self.model.dynamics()) {
            (EuropeanMethod::ClosedFormGbm, _) => Ok(self.closed_form(tau, x, Moment::Dtau)),
            (EuropeanMethod::Quadrature, Dynamics::Gbm { .. }) => {
                self.quadrature(tau, x, Moment::Dtau)
            }
            (EuropeanMethod::Quadrature, Dynamics::Cev { .. }) => {
                let d = (0.25 * tau).min(1e-3 * self.contract.maturity);
                let f = |k: f64| self.value_tau(tau + k * d, x);
                Ok((f(-2.0)? - 8.0 * f(-1.0)? + 8.0 * f(1.0)? - f(2.0)?) / (12.0 * d))
            }
        }
    }

    /// `phi(t_i, b(t_i))` along one barrier curve.
    pub fn psi_profile(&self, grid: &TimeGrid, side: Side) -> Result<Vec<f64>> {
        let barrier = *self.contract.barrier(side).ok_or(Error::MissingBarrier)?;
        if (grid.maturity() - self.contract.maturity).abs() > 1e-12 * self.contract.maturity {
            return Err(Error::ProfileMismatch(format!(
                "grid ends at {} but the contract matures at {}",
                grid.maturity(),
                self.contract.maturity
            )));
        }
        grid.nodes()
            .iter()
            .map(|&t| self.value(t, barrier.value(t)))
            .collect()
    }

    fn check_spot(&self, x: f64) -> Result<()> {
        if x.is_finite() && x > 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("spot must be positive, got {x}")))
        }
    }

    /// Limit as `tau -> 0`: the payoff inside the corridor, half of it on a
    /// corridor end (the diffusion lands on either side with equal odds).
    fn expiry_limit(&self, x: f64) -> f64 {
        let (lo, hi) = self.contract.corridor(self.contract.maturity);
        let on_edge = |b: f64| (x - b).abs() <= 1e-12 * b;
        if (self.contract.lower.is_some() && on_edge(lo))
            || (self.contract.upper.is_some() && on_edge(hi))
        {
            0.5 * self.contract.payoff.eval(x)
        } else if x > lo && x < hi {
            self.contract.payoff.eval(x)
        } else {
            0.0
        }
    }

    fn closed_form(&self, tau: f64, x: f64, moment: Moment) -> f64 {
        let sigma = self.model.gbm_sigma().expect("closed form requires GBM");
        let mu = self.model.drift();
        let (c_lo, c_hi) = self.contract.corridor(self.contract.maturity);
        // V = a [A(lo) - A(hi)] + k [D(lo) - D(hi)], D(c) = P(S_T > c),
        // A(c) = E[S_T; S_T > c]
        let (lo, hi, a, k) = match self.contract.payoff {
            Payoff::Call { strike } => (c_lo.max(strike), c_hi, 1.0, -strike),
            Payoff::Put { strike } => (c_lo, c_hi.min(strike), -1.0, strike),
            Payoff::DoubleNoTouch => (c_lo, c_hi, 0.0, 1.0),
            _ => unreachable!("closed form restricted to call, put and double-no-touch"),
        };
        if lo >= hi {
            return 0.0;
        }
        let sq = sigma * tau.sqrt();
        let growth = (mu * tau).exp();
        let d2 = |c: f64| ((x / c).ln() + (mu - 0.5 * sigma * sigma) * tau) / sq;
        let d2_lo = if lo > 0.0 { d2(lo) } else { f64::INFINITY };
        let d2_hi = if hi.is_finite() {
            d2(hi)
        } else {
            f64::NEG_INFINITY
        };
        let (d1_lo, d1_hi) = (d2_lo + sq, d2_hi + sq);
        let pdf = |d: f64| if d.is_finite() { norm_pdf(d) } else { 0.0 };
        match moment {
            Moment::Value => {
                let dd = norm_cdf_diff(d2_lo, d2_hi);
                let da = x * growth * norm_cdf_diff(d1_lo, d1_hi);
                a * da + k * dd
            }
            Moment::Dx => {
                let dd = (pdf(d2_lo) - pdf(d2_hi)) / (x * sq);
                let da = growth * (norm_cdf_diff(d1_lo, d1_hi) + (pdf(d1_lo) - pdf(d1_hi)) / sq);
                a * da + k * dd
            }
            Moment::Dtau => {
                let dtau_d = |c: f64, shift: f64| {
                    -(x / c).ln() / (2.0 * sigma * tau * tau.sqrt())
                        + (mu + shift) / (2.0 * sigma * tau.sqrt())
                };
                let s2 = 0.5 * sigma * sigma;
                let term = |c: f64, d: f64, shift: f64| {
                    if c > 0.0 && c.is_finite() {
                        norm_pdf(d) * dtau_d(c, shift)
                    } else {
                        0.0
                    }
                };
                let dd = term(lo, d2_lo, -s2) - term(hi, d2_hi, -s2);
                let da = mu * x * growth * norm_cdf_diff(d1_lo, d1_hi)
                    + x * growth * (term(lo, d1_lo, s2) - term(hi, d1_hi, s2));
                a * da + k * dd
            }
        }
    }

    fn quadrature(&self, tau: f64, x: f64, moment: Moment) -> Result<f64> {
        let payoff = &self.contract.payoff;
        if payoff.is_zero() {
            return Ok(0.0);
        }
        let (c_lo, c_hi) = self.contract.corridor(self.contract.maturity);
        let mu = self.model.drift();
        let spread = log_spread(&self.model, tau, x);
        let centre = (x.ln() + mu * tau).exp();
        let reach = 12.0 * spread + mu.abs() * tau;
        let (mut lo, mut hi) = (c_lo, c_hi);
        if self.model.is_gbm() {
            lo = lo.max(x * (-reach).exp());
        }
        hi = hi.min(x * reach.exp());
        if lo >= hi {
            return Ok(0.0);
        }
        let mut pts = payoff.breakpoints();
        for k in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            pts.push(centre * (k * spread).exp());
            pts.push(centre * (-k * spread).exp());
        }
        if !self.model.is_gbm() {
            for k in [12.0, 16.0, 24.0] {
                pts.push(centre * (-k * spread).exp());
            }
        }

        let model = &self.model;
        let integrand = |y: f64| -> f64 {
            let v = payoff.eval(y);
            if v == 0.0 {
                return 0.0;
            }
            match (moment, model.dynamics()) {
                (Moment::Value, Dynamics::Gbm { sigma }) => {
                    v * gbm_log_density(mu, sigma, tau, x, y) / y
                }
                (Moment::Dx, Dynamics::Gbm { sigma }) => {
                    let vv = sigma * sigma * tau;
                    let w = (y / x).ln() - (mu - 0.5 * sigma * sigma) * tau;
                    v * gbm_log_density(mu, sigma, tau, x, y) / y * w / (vv * x)
                }
                (Moment::Dtau, Dynamics::Gbm { sigma }) => {
                    // backward equation: phi_tau = mu x phi_x + sigma^2 x^2 phi_xx / 2
                    let vv = sigma * sigma * tau;
                    let r = ((y / x).ln() - (mu - 0.5 * sigma * sigma) * tau) / vv;
                    let gen = mu * r + 0.5 * sigma * sigma * (r * r - 1.0 / vv - r);
                    v * gbm_log_density(mu, sigma, tau, x, y) / y * gen
                }
                (Moment::Value, Dynamics::Cev { .. }) => {
                    v * model.density(tau, x, y).unwrap_or(0.0)
                }
                (Moment::Dx, Dynamics::Cev { .. }) => {
                    let s = y * model.local_vol_unchecked(y);
                    v * model.dkernel_dx(tau, x, y).unwrap_or(0.0) / (s * s)
                }
                (Moment::Dtau, Dynamics::Cev { .. }) => {
                    unreachable!("CEV time derivative uses differences")
                }
            }
        };
        let integ = Integrator {
            abs_tol: 1e-13 * payoff_scale(payoff, x),
            ..self.integrator
        };
        let mut total = integ.integrate(integrand, lo, hi, &pts)?.value;

        // CEV mass absorbed at zero pays phi(0) when there is no lower barrier
        if self.contract.lower.is_none() && !self.model.is_gbm() {
            let at_zero = payoff.eval(0.0);
            if at_zero != 0.0 {
                total += match moment {
                    Moment::Value => at_zero * (1.0 - self.model.survival_probability(tau, x)?),
                    Moment::Dx => {
                        let h = 1e-4 * x;
                        let up = self.model.survival_probability(tau, x + h)?;
                        let down = self.model.survival_probability(tau, x - h)?;
                        -at_zero * (up - down) / (2.0 * h)
                    }
                    Moment::Dtau => unreachable!(),
                };
            }
        }
        Ok(total)
    }
}

fn payoff_scale(payoff: &Payoff, x: f64) -> f64 {
    match payoff {
        Payoff::Call { .. } | Payoff::Put { .. } => x.max(1.0),
        _ => 1.0,
    }
}

/// Density of `log S_T` evaluated at `log y`.
#[inline]
fn gbm_log_density(mu: f64, sigma: f64, tau: f64, x: f64, y: f64) -> f64 {
    let sq = sigma * tau.sqrt();
    let w = ((y / x).ln() - (mu - 0.5 * sigma * sigma) * tau) / sq;
    norm_pdf(w) / sq
}

/// Black-Scholes style forward value of a call with no barrier, used by tests
/// and oracles: `E[(S_T - K)^+]` without discounting.
pub fn gbm_call_forward(mu: f64, sigma: f64, tau: f64, x: f64, strike: f64) -> f64 {
    if strike <= 0.0 {
        return x * (mu * tau).exp() - strike;
    }
    let sq = sigma * tau.sqrt();
    let d2 = ((x / strike).ln() + (mu - 0.5 * sigma * sigma) * tau) / sq;
    x * (mu * tau).exp() * norm_cdf(d2 + sq) - strike * norm_cdf(d2)
}

/// Put counterpart of [`gbm_call_forward`].
pub fn gbm_put_forward(mu: f64, sigma: f64, tau: f64, x: f64, strike: f64) -> f64 {
    if strike <= 0.0 {
        return 0.0;
    }
    let sq = sigma * tau.sqrt();
    let d2 = ((x / strike).ln() + (mu - 0.5 * sigma * sigma) * tau) / sq;
    strike * norm_cdf(-d2) - x * (mu * tau).exp() * norm_cdf(-d2 - sq)
}
