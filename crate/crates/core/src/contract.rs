//! Barrier and payoff definitions, and the regularity classification that
//! decides whether the deltas at the barriers are continuous and bounded
//! (smooth regime) or merely integrable (L1 regime).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volterra::smoothing::SmoothApprox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Lower => "lower",
            Side::Upper => "upper",
        }
    }
}

/// A barrier curve `b(t) > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Barrier {
    Constant {
        level: f64,
    },
    /// `b(t) = level0 * exp(growth * t)`.
    Exponential {
        level0: f64,
        growth: f64,
    },
}

impl Barrier {
    pub fn constant(level: f64) -> Self {
        Barrier::Constant { level }
    }

    pub fn exponential(level0: f64, growth: f64) -> Self {
        Barrier::Exponential { level0, growth }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Barrier::Constant { level } => level,
            Barrier::Exponential { level0, growth } => level0 * (growth * t).exp(),
        }
    }

    #[inline]
    pub fn slope(&self, t: f64) -> f64 {
        match *self {
            Barrier::Constant { .. } => 0.0,
            Barrier::Exponential { level0, growth } => growth * level0 * (growth * t).exp(),
        }
    }

    pub fn curvature(&self, t: f64) -> f64 {
        match *self {
            Barrier::Constant { .. } => 0.0,
            Barrier::Exponential { level0, growth } => {
                growth * growth * level0 * (growth * t).exp()
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            Barrier::Constant { .. } => true,
            Barrier::Exponential { growth, .. } => growth == 0.0,
        }
    }

    /// `(log b(0), d log b / dt)`: both variants are linear in log space.
    fn log_line(&self) -> (f64, f64) {
        match *self {
            Barrier::Constant { level } => (level.ln(), 0.0),
            Barrier::Exponential { level0, growth } => (level0.ln(), growth),
        }
    }
}

/// Terminal payoff `phi(S_T) >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payoff {
    Call {
        strike: f64,
    },
    Put {
        strike: f64,
    },
    /// Pays one if the corridor survives to expiry.
    DoubleNoTouch,
    /// `scale (x - left)^2 (right - x)^2` on `[left, right]`, zero outside,
    /// with `scale` chosen so the peak equals `height`.
    SmoothBump {
        left: f64,
        right: f64,
        height: f64,
    },
    /// C2 approximant of another payoff, see
    /// [`crate::volterra::smooth_payoff`].
    Smoothed(Box<SmoothApprox>),
}

impl Payoff {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Payoff::Call { strike } => (x - strike).max(0.0),
            Payoff::Put { strike } => (strike - x).max(0.0),
            Payoff::DoubleNoTouch => 1.0,
            Payoff::SmoothBump {
                left,
                right,
                height,
            } => {
                if x <= *left || x >= *right {
                    0.0
                } else {
                    let half = 0.5 * (right - left);
                    let a = (x - left) * (right - x);
                    height * a * a / (half * half * half * half)
                }
            }
            Payoff::Smoothed(approx) => approx.eval(x),
        }
    }

    /// Points where the payoff fails to be C2 (kinks, jumps of the second
    /// derivative).
    pub fn singular_points(&self) -> Vec<f64> {
        match self {
            Payoff::Call { strike } | Payoff::Put { strike } => vec![*strike],
            Payoff::DoubleNoTouch | Payoff::Smoothed(_) => vec![],
            Payoff::SmoothBump { left, right, .. } => vec![*left, *right],
        }
    }

    /// Points where the payoff changes character quickly; quadrature
    /// should split there.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Payoff::Smoothed(approx) => approx.breakpoints(),
            _ => self.singular_points(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Payoff::SmoothBump {
                height,
                left,
                right,
            } => *height == 0.0 || left >= right,
            Payoff::Smoothed(approx) => approx.is_zero(),
            _ => false,
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        match self {
            Payoff::Call { strike } | Payoff::Put { strike } => {
                if !(strike.is_finite() && *strike >= 0.0) {
                    return bad(format!("strike must be finite and >= 0, got {strike}"));
                }
            }
            Payoff::SmoothBump {
                left,
                right,
                height,
            } => {
                if !(left.is_finite() && right.is_finite() && *left >= 0.0 && left < right) {
                    return bad(format!(
                        "bump needs 0 <= left < right, got [{left}, {right}]"
                    ));
                }
                if !(height.is_finite() && *height >= 0.0) {
                    return bad(format!("bump height must be >= 0, got {height}"));
                }
            }
            Payoff::DoubleNoTouch | Payoff::Smoothed(_) => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Payoff C2 on the open terminal corridor and zero at every barrier:
    /// deltas at the barriers are continuous and bounded.
    Smooth,
    /// Anything else; deltas may blow up near expiry but stay integrable.
    L1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub regime: Regime,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierContract {
    pub lower: Option<Barrier>,
    pub upper: Option<Barrier>,
    pub payoff: Payoff,
    pub maturity: f64,
    pub rate: f64,
    pub dividend: f64,
}

impl BarrierContract {
    pub fn new(
        lower: Option<Barrier>,
        upper: Option<Barrier>,
        payoff: Payoff,
        maturity: f64,
        rate: f64,
        dividend: f64,
    ) -> Self {
        Self {
            lower,
            upper,
            payoff,
            maturity,
            rate,
            dividend,
        }
    }

    pub fn down_and_out(barrier: Barrier, payoff: Payoff, maturity: f64) -> Self {
        Self::new(Some(barrier), None, payoff, maturity, 0.0, 0.0)
    }

    pub fn up_and_out(barrier: Barrier, payoff: Payoff, maturity: f64) -> Self {
        Self::new(None, Some(barrier), payoff, maturity, 0.0, 0.0)
    }

    pub fn double(lower: Barrier, upper: Barrier, payoff: Payoff, maturity: f64) -> Self {
        Self::new(Some(lower), Some(upper), payoff, maturity, 0.0, 0.0)
    }

    pub fn with_rates(mut self, rate: f64, dividend: f64) -> Self {
        self.rate = rate;
        self.dividend = dividend;
        self
    }

    /// Risk-neutral drift `r - delta`.
    pub fn drift(&self) -> f64 {
        self.rate - self.dividend
    }

    pub fn discount_factor(&self) -> f64 {
        (-self.rate * self.maturity).exp()
    }

    pub fn barrier(&self, side: Side) -> Option<&Barrier> {
        match side {
            Side::Lower => self.lower.as_ref(),
            Side::Upper => self.upper.as_ref(),
        }
    }

    /// Barriers present, upper first (the ordering of the interleaved
    /// double-barrier unknowns).
    pub fn sides(&self) -> Vec<Side> {
        let mut out = Vec::with_capacity(2);
        if self.upper.is_some() {
            out.push(Side::Upper);
        }
        if self.lower.is_some() {
            out.push(Side::Lower);
        }
        out
    }

    pub fn is_double(&self) -> bool {
        self.lower.is_some() && self.upper.is_some()
    }

    /// Open corridor `(b_-(t), b_+(t))`, with missing barriers at 0 and +inf.
    pub fn corridor(&self, t: f64) -> (f64, f64) {
        (
            self.lower.map_or(0.0, |b| b.value(t)),
            self.upper.map_or(f64::INFINITY, |b| b.value(t)),
        )
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        let (lo, hi) = self.corridor(t);
        x > lo && x < hi
    }

    pub fn has_only_constant_barriers(&self) -> bool {
        self.lower.is_none_or(|b| b.is_constant()) && self.upper.is_none_or(|b| b.is_constant())
    }

    /// Structural checks and regime classification.
    pub fn validate(&self) -> Result<Validation> {
        validate(self)
    }
}

fn rel_eq(a: f64, b: f64) -> bool {
    a.is_finite() && b.is_finite() && (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

pub fn validate(contract: &BarrierContract) -> Result<Validation> {
    let t_end = contract.maturity;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::NonpositiveMaturity(t_end));
    }
    if !contract.rate.is_finite() || !contract.dividend.is_finite() {
        return Err(Error::InvalidInput("rates must be finite".into()));
    }
    if contract.lower.is_none() && contract.upper.is_none() {
        return Err(Error::MissingBarrier);
    }
    for b in [contract.lower, contract.upper].into_iter().flatten() {
        for t in [0.0, t_end] {
            let level = b.value(t);
            if !(level.is_finite() && level > 0.0) {
                return Err(Error::NonpositiveBarrier { t, level });
            }
        }
        if let Barrier::Exponential { growth, .. } = b {
            if !growth.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "barrier growth must be finite, got {growth}"
                )));
            }
        }
    }
    if let (Some(lo), Some(hi)) = (contract.lower, contract.upper) {
        // log(upper) - log(lower) is affine in t, so the endpoints decide
        let (l0, lg) = lo.log_line();
        let (u0, ug) = hi.log_line();
        for t in [0.0, t_end] {
            if (u0 + ug * t) - (l0 + lg * t) <= 0.0 {
                return Err(Error::BarrierCrossing {
                    t,
                    lower: lo.value(t),
                    upper: hi.value(t),
                });
            }
        }
    }
    contract.payoff.check()?;

    let (lo, hi) = contract.corridor(t_end);
    let mut warnings = Vec::new();
    for p in contract.payoff.singular_points() {
        if p > lo && p < hi && !rel_eq(p, lo) && !rel_eq(p, hi) {
            warnings.push(format!(
                "payoff is not C2 at {p} inside the terminal corridor"
            ));
        }
    }
    for (side, level) in [(Side::Lower, lo), (Side::Upper, hi)] {
        if contract.barrier(side).is_some() {
            let v = contract.payoff.eval(level);
            if v.abs() > 1e-12 * level.max(1.0) {
                warnings.push(format!(
                    "payoff is {v} at the {} barrier's terminal level {level}, not zero",
                    side.name()
                ));
            }
        }
    }
    if let Payoff::Smoothed(approx) = &contract.payoff {
        if !approx.vanishes_at(lo, hi) {
            warnings.push("smoothed payoff was built for a different corridor".into());
        }
    }
    let regime = if warnings.is_empty() {
        Regime::Smooth
    } else {
        Regime::L1
    };
    Ok(Validation { regime, warnings })
}
