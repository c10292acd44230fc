//! Monotone C2 approximants of payoffs that are discontinuous, kinked or
//! nonzero at the barriers.
//!
//! The level-`m` approximant is `w_m(x) * P(g_m(x) - a_m)` where `g_m`
//! rounds off kinks from below, `P` is a C2 positive part of width `1/m`,
//! `a_m` a small downward shift and `w_m` a C2 cutoff that vanishes at the
//! corridor ends. Every ingredient increases with `m`, so the approximants
//! increase pointwise towards the payoff.

use serde::{Deserialize, Serialize};

use crate::contract::Payoff;

/// C2 ramp: 0 for u <= 0, u - 1/2 for u >= 1, second derivative
/// 30 u^2 (1 - u)^2 in between.
fn ramp(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        u - 0.5
    } else {
        let u4 = u * u * u * u;
        u4 * (2.5 - 3.0 * u + u * u)
    }
}

/// Quintic smoothstep, C2 with value 0 below 0 and 1 above 1.
fn step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothApprox {
    base: Payoff,
    lower: f64,
    upper: f64,
    level: u32,
}

impl SmoothApprox {
    pub fn base(&self) -> &Payoff {
        &self.base
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    fn m(&self) -> f64 {
        self.level as f64
    }

    fn kink_width(&self) -> f64 {
        0.5 / self.m()
    }

    fn shift(&self) -> f64 {
        match self.base {
            Payoff::Call { .. } | Payoff::Put { .. } => 0.25 / self.m(),
            _ => 0.5 / self.m(),
        }
    }

    /// Widths of the lower and upper cutoff layers (0 when absent).
    fn cutoffs(&self) -> (f64, f64) {
        if let Payoff::SmoothBump { left, right, .. } = self.base {
            // already vanishes with two derivatives inside the corridor
            if left >= self.lower && right <= self.upper {
                return (0.0, 0.0);
            }
        }
        let m = self.m();
        match (self.lower > 0.0, self.upper.is_finite()) {
            (true, true) => {
                let d = (self.upper - self.lower) / (4.0 * m);
                (d, d)
            }
            (true, false) => (self.lower / (4.0 * m), 0.0),
            (false, true) => (0.0, self.upper / (4.0 * m)),
            (false, false) => (0.0, 0.0),
        }
    }

    fn rounded(&self, x: f64) -> f64 {
        let eps = self.kink_width();
        match self.base {
            Payoff::Call { strike } => eps * ramp((x - strike) / eps),
            Payoff::Put { strike } => eps * ramp((strike - x) / eps),
            _ => self.base.eval(x),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.lower || x >= self.upper {
            return 0.0;
        }
        let eta = 1.0 / self.m();
        let core = eta * ramp((self.rounded(x) - self.shift()) / eta);
        if core == 0.0 {
            return 0.0;
        }
        let (dl, du) = self.cutoffs();
        let mut w = 1.0;
        if dl > 0.0 {
            w *= step((x - self.lower) / dl);
        }
        if du > 0.0 {
            w *= step((self.upper - x) / du);
        }
        w * core
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = self.base.singular_points();
        let eps = self.kink_width();
        match self.base {
            Payoff::Call { strike } => pts.push(strike + eps),
            Payoff::Put { strike } => pts.push(strike - eps),
            _ => {}
        }
        let (dl, du) = self.cutoffs();
        if dl > 0.0 {
            pts.push(self.lower + dl);
        }
        if du > 0.0 {
            pts.push(self.upper - du);
        }
        pts
    }

    pub fn is_zero(&self) -> bool {
        self.base.is_zero()
    }

    /// True when the approximant was built for the corridor `(lo, hi)`.
    pub fn vanishes_at(&self, lo: f64, hi: f64) -> bool {
        let close = |a: f64, b: f64| a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        close(self.lower, lo) && close(self.upper, hi)
    }
}

/// Level-`m` C2 approximant of `payoff` on the terminal corridor
/// `(lower, upper)` (use 0 and infinity for missing barriers).
///
/// The result lies below the payoff, vanishes at both corridor ends,
/// increases with `m` and is within `1/m` of the payoff away from shrinking
/// neighbourhoods of kinks, jumps and the corridor ends.
pub fn smooth_payoff(payoff: &Payoff, corridor: (f64, f64), m: u32) -> Payoff {
    let base = match payoff {
        Payoff::Smoothed(inner) => inner.base.clone(),
        p => p.clone(),
    };
    Payoff::Smoothed(Box::new(SmoothApprox {
        base,
        lower: corridor.0,
        upper: corridor.1,
        level: m.max(1),
    }))
}
