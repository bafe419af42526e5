//! Convex loss families whose minimizers define the treatment-effect parameters.

use serde::{Deserialize, Serialize};

/// Loss family. `tau` is the asymmetry level in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LossFamily {
    /// `v^2`: mean effects.
    Squared,
    /// `v (tau - I(v <= 0))`: quantile effects.
    Check { tau: f64 },
    /// `v^2 |tau - I(v <= 0)|`: expectile effects.
    AsymmetricSquared { tau: f64 },
}

/// A loss family with a positive multiplicative scale (1 for the literal losses).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    #[serde(flatten)]
    pub family: LossFamily,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

#[inline]
fn below(v: f64) -> f64 {
    // I(v <= 0), with the indicator taking value 1 at zero.
    if v <= 0.0 {
        1.0
    } else {
        0.0
    }
}

impl LossSpec {
    pub fn squared() -> Self {
        Self::new(LossFamily::Squared)
    }

    pub fn check(tau: f64) -> Self {
        Self::new(LossFamily::Check { tau })
    }

    pub fn asymmetric_squared(tau: f64) -> Self {
        Self::new(LossFamily::AsymmetricSquared { tau })
    }

    pub fn new(family: LossFamily) -> Self {
        Self { family, scale: 1.0 }
    }

    /// Same family multiplied by `c > 0`.
    pub fn scaled(self, c: f64) -> Self {
        Self {
            family: self.family,
            scale: self.scale * c,
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match self.family {
            LossFamily::Squared => None,
            LossFamily::Check { tau } | LossFamily::AsymmetricSquared { tau } => Some(tau),
        }
    }

    pub fn is_valid(&self) -> bool {
        let tau_ok = self.tau().map_or(true, |t| t > 0.0 && t < 1.0);
        tau_ok && self.scale > 0.0 && self.scale.is_finite()
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        let raw = match self.family {
            LossFamily::Squared => v * v,
            LossFamily::Check { tau } => v * (tau - below(v)),
            LossFamily::AsymmetricSquared { tau } => v * v * (tau - below(v)).abs(),
        };
        self.scale * raw
    }

    /// Derivative in `v`; at `v = 0` the nonsmooth families use `I(0 <= 0) = 1`.
    #[inline]
    pub fn grad(&self, v: f64) -> f64 {
        let raw = match self.family {
            LossFamily::Squared => 2.0 * v,
            LossFamily::Check { tau } => tau - below(v),
            LossFamily::AsymmetricSquared { tau } => 2.0 * v * (tau - below(v)).abs(),
        };
        self.scale * raw
    }
}

pub fn loss_eval(loss: &LossSpec, v: f64) -> f64 {
    loss.eval(v)
}

pub fn loss_grad(loss: &LossSpec, v: f64) -> f64 {
    loss.grad(v)
}
