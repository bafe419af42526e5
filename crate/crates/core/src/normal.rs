//! Standard normal helpers.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn pdf(x: f64) -> f64 {
    std_normal().pdf(x)
}

pub fn cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Upper `alpha / 2` critical value `z_{alpha/2}`.
pub fn two_sided_critical(alpha: f64) -> f64 {
    quantile(1.0 - alpha / 2.0)
}

/// Two-sided normal p-value `2 (1 - Phi(|z|))`, computed through the upper tail.
pub fn two_sided_p_value(z: f64) -> f64 {
    2.0 * std_normal().sf(z.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_value_matches_tables() {
        assert!((two_sided_critical(0.05) - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((two_sided_critical(0.10) - 1.644_853_626_951_472_2).abs() < 1e-9);
        assert!(two_sided_critical(1.0).abs() < 1e-12);
    }

    #[test]
    fn p_value_roundtrip() {
        for &z in &[0.0, 0.5, 1.842, 3.0] {
            let p = two_sided_p_value(z);
            assert!((p - 2.0 * (1.0 - cdf(z))).abs() < 1e-12);
        }
        assert!((pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }
}
