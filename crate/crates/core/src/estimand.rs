use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossSpec;

/// Population the effect is defined on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    Population,
    /// Potential-outcome functionals conditional on `D = d'`.
    TreatedSubgroup(usize),
}

/// What to estimate: the loss-defined functional of each potential outcome, where, and
/// an optional contrast `a` over the `J + 1` components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandSpec {
    pub kind: EffectKind,
    pub loss: LossSpec,
    #[serde(default)]
    pub contrast: Option<Vec<f64>>,
}

impl EstimandSpec {
    pub fn population(loss: LossSpec) -> Self {
        Self {
            kind: EffectKind::Population,
            loss,
            contrast: None,
        }
    }

    pub fn treated(loss: LossSpec, d_prime: usize) -> Self {
        Self {
            kind: EffectKind::TreatedSubgroup(d_prime),
            loss,
            contrast: None,
        }
    }

    pub fn with_contrast(mut self, a: Vec<f64>) -> Self {
        self.contrast = Some(a);
        self
    }

    /// `(-1, 1)` for two arms: the usual treated-minus-control difference.
    pub fn with_difference(self, levels: usize) -> Self {
        let mut a = vec![0.0; levels];
        if levels >= 2 {
            a[0] = -1.0;
            a[levels - 1] = 1.0;
        }
        self.with_contrast(a)
    }

    pub fn check(&self, levels: usize) -> Result<()> {
        if !self.loss.is_valid() {
            return Err(Error::InvalidConfig(format!("invalid loss {:?}", self.loss)));
        }
        if let EffectKind::TreatedSubgroup(d) = self.kind {
            if d >= levels {
                return Err(Error::InvalidConfig(format!(
                    "treated level {d} outside 0..{levels}"
                )));
            }
        }
        if let Some(a) = &self.contrast {
            if a.len() != levels {
                return Err(Error::DimensionMismatch {
                    expected: levels,
                    actual: a.len(),
                });
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("contrast has non-finite entries".into()));
            }
        }
        Ok(())
    }
}
