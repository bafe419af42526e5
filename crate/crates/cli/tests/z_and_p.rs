use proptest::prelude::*;
use teffect_cli::estimate::z_and_p;

/// `2 (1 - Phi(|z|))` as `1 - 2 * integral_0^|z| phi`, composite Simpson.
fn simpson_p(z: f64) -> f64 {
    let a = z.abs();
    let m = 4000;
    let h = a / m as f64;
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = phi(0.0) + phi(a);
    for k in 1..m {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * phi(k as f64 * h);
    }
    1.0 - 2.0 * acc * h / 3.0
}

proptest! {
    #[test]
    fn p_value_is_two_sided_normal_tail(est in -5f64..5.0, se in 0.05f64..3.0) {
        let (z, p) = z_and_p(est, se);
        prop_assert_eq!(z, est / se);
        prop_assert!((p - simpson_p(z)).abs() <= 1e-9, "z {} p {} vs {}", z, p, simpson_p(z));
        prop_assert_eq!(p, z_and_p(-est, se).1);
    }
}
