//! Risk-neutral diffusions `dS = mu S dt + S sigma(S) dW` and the kernel
//! `q_t(x, y) = p(t; x, y) * y^2 sigma(y)^2` that weights every integral
//! operator in the engine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specialfn::bessel_i_scaled;

const SQRT_2PI: f64 = 2.506_628_274_631_000_2;

/// Local-volatility family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Dynamics {
    /// Geometric Brownian motion, constant `sigma`.
    Gbm { sigma: f64 },
    /// Constant elasticity of variance, `sigma(x) = sigma0 * x^(rho - 1)`,
    /// absorbed at zero.
    Cev { sigma0: f64, rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diffusion {
    drift: f64,
    dynamics: Dynamics,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

impl Diffusion {
    pub fn gbm(drift: f64, sigma: f64) -> Result<Self> {
        if !drift.is_finite() {
            return Err(Error::Domain(format!("drift must be finite, got {drift}")));
        }
        positive("sigma", sigma)?;
        Ok(Self {
            drift,
            dynamics: Dynamics::Gbm { sigma },
        })
    }

    /// CEV with `rho` strictly inside `(0, 1)`; `rho = 1` is GBM and must be
    /// built with [`Diffusion::gbm`].
    pub fn cev(drift: f64, sigma0: f64, rho: f64) -> Result<Self> {
        if !drift.is_finite() {
            return Err(Error::Domain(format!("drift must be finite, got {drift}")));
        }
        positive("sigma0", sigma0)?;
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Domain(format!(
                "CEV rho must lie in (0, 1), got {rho}"
            )));
        }
        Ok(Self {
            drift,
            dynamics: Dynamics::Cev { sigma0, rho },
        })
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn dynamics(&self) -> Dynamics {
        self.dynamics
    }

    pub fn is_gbm(&self) -> bool {
        matches!(self.dynamics, Dynamics::Gbm { .. })
    }

    /// Constant volatility if the model is GBM.
    pub fn gbm_sigma(&self) -> Option<f64> {
        match self.dynamics {
            Dynamics::Gbm { sigma } => Some(sigma),
            Dynamics::Cev { .. } => None,
        }
    }

    /// Same dynamics with a different drift.
    pub fn with_drift(&self, drift: f64) -> Self {
        Self {
            drift,
            dynamics: self.dynamics,
        }
    }

    pub fn local_vol(&self, x: f64) -> Result<f64> {
        positive("price", x)?;
        Ok(self.local_vol_unchecked(x))
    }

    #[inline]
    pub(crate) fn local_vol_unchecked(&self, x: f64) -> f64 {
        match self.dynamics {
            Dynamics::Gbm { sigma } => sigma,
            Dynamics::Cev { sigma0, rho } => sigma0 * x.powf(rho - 1.0),
        }
    }

    /// Diffusion coefficient `x sigma(x)`.
    pub fn diffusion_coefficient(&self, x: f64) -> Result<f64> {
        Ok(x * self.local_vol(x)?)
    }

    /// `q_t(x, y)`: transition density times `y^2 sigma(y)^2`.
    pub fn kernel_q(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        positive("time", t)?;
        positive("price", x)?;
        positive("price", y)?;
        Ok(match self.dynamics {
            Dynamics::Gbm { sigma } => gbm_kernel(self.drift, sigma, t, x, y),
            Dynamics::Cev { sigma0, rho } => {
                cev_log_kernel(self.drift, sigma0, rho, t, x, y)?.exp()
            }
        })
    }

    /// Transition density `p(t; x, y)`. For CEV it integrates to less than
    /// one because of absorption at zero.
    pub fn density(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        let q = self.kernel_q(t, x, y)?;
        let s = y * self.local_vol_unchecked(y);
        Ok(q / (s * s))
    }

    /// `lim_{s -> 0} sqrt(s) q_s(b, b) = b sigma(b) / sqrt(2 pi)`.
    pub fn kernel_diag(&self, b: f64) -> Result<f64> {
        Ok(self.diffusion_coefficient(b)? / SQRT_2PI)
    }

    /// `d q_t(x, y) / dx`: analytic for GBM, central difference for CEV.
    pub fn dkernel_dx(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        match self.dynamics {
            Dynamics::Gbm { .. } => Ok(self.kernel_q_and_dx(t, x, y)?.1),
            Dynamics::Cev { .. } => {
                positive("price", x)?;
                let step = 1e-4 * x;
                let up = self.kernel_q(t, x + step, y)?;
                let down = self.kernel_q(t, x - step, y)?;
                Ok((up - down) / (2.0 * step))
            }
        }
    }

    /// `(q_t(x, y), d q_t(x, y) / dx)` sharing the kernel evaluation.
    pub fn kernel_q_and_dx(&self, t: f64, x: f64, y: f64) -> Result<(f64, f64)> {
        match self.dynamics {
            Dynamics::Gbm { sigma } => {
                let q = self.kernel_q(t, x, y)?;
                let nu = self.drift - 0.5 * sigma * sigma;
                Ok((q, q * ((y / x).ln() - nu * t) / (sigma * sigma * t * x)))
            }
            Dynamics::Cev { .. } => Ok((self.kernel_q(t, x, y)?, self.dkernel_dx(t, x, y)?)),
        }
    }

    /// Probability that a CEV path started at `x` has not been absorbed at
    /// zero by time `t` (one for GBM).
    pub fn survival_probability(&self, t: f64, x: f64) -> Result<f64> {
        positive("time", t)?;
        positive("price", x)?;
        match self.dynamics {
            Dynamics::Gbm { .. } => Ok(1.0),
            Dynamics::Cev { sigma0, rho } => {
                let c = 1.0 - rho;
                let k = cev_k(self.drift, sigma0, rho, t);
                let big_x = k * x.powf(2.0 * c) * (2.0 * self.drift * c * t).exp();
                Ok(statrs::function::gamma::gamma_lr(0.5 / c, big_x))
            }
        }
    }
}

#[inline]
fn gbm_kernel(drift: f64, sigma: f64, t: f64, x: f64, y: f64) -> f64 {
    let nu = drift - 0.5 * sigma * sigma;
    let z = (y / x).ln() - nu * t;
    y * sigma / (SQRT_2PI * t.sqrt()) * (-z * z / (2.0 * sigma * sigma * t)).exp()
}

/// CEV scale parameter `k`, replaced by its `mu -> 0` limit at zero drift.
fn cev_k(drift: f64, sigma0: f64, rho: f64, t: f64) -> f64 {
    let c = 1.0 - rho;
    if drift == 0.0 {
        1.0 / (2.0 * sigma0 * sigma0 * c * c * t)
    } else {
        drift / (sigma0 * sigma0 * c * (2.0 * drift * c * t).exp_m1())
    }
}

/// `log q_t(x, y)` for CEV, assembled in log space so that the
/// `exp(-X - Y) I_v(2 sqrt(XY))` product never overflows.
fn cev_log_kernel(drift: f64, sigma0: f64, rho: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    let c = 1.0 - rho;
    let order = 0.5 / c;
    let k = cev_k(drift, sigma0, rho, t);
    let big_x = k * x.powf(2.0 * c) * (2.0 * drift * c * t).exp();
    let big_y = k * y.powf(2.0 * c);
    let z = 2.0 * (big_x * big_y).sqrt();
    let scaled = bessel_i_scaled(order, z)?;
    if scaled == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let gap = big_x.sqrt() - big_y.sqrt();
    Ok((2.0 * sigma0 * sigma0 * c).ln()
        + 2.0 * rho * y.ln()
        + order * k.ln()
        + (big_x.ln() + (1.0 - 4.0 * rho) * big_y.ln()) / (4.0 * c)
        - gap * gap
        + scaled.ln())
}

/// Normal approximation to the log-price spread `sigma(x) sqrt(t)` used for
/// placing quadrature breakpoints.
pub(crate) fn log_spread(model: &Diffusion, t: f64, x: f64) -> f64 {
    model.local_vol_unchecked(x) * t.sqrt()
}
