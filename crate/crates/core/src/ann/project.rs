/// Euclidean projection of `weights` onto `{w : |w|_1 <= bound}`.
///
/// Sort-based soft-thresholding: find the threshold `theta` such that
/// `sum_i max(|w_i| - theta, 0) = bound`, then shrink every coordinate by it.
pub fn project_l1(weights: &[f64], bound: f64) -> Vec<f64> {
    let mut out = weights.to_vec();
    project_l1_in_place(&mut out, bound);
    out
}

pub fn project_l1_in_place(weights: &mut [f64], bound: f64) {
    assert!(bound > 0.0, "l1 bound must be positive");
    let norm: f64 = weights.iter().map(|w| w.abs()).sum();
    if norm <= bound {
        return;
    }
    let mut mags: Vec<f64> = weights.iter().map(|w| w.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).expect("finite weights"));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cumulative += m;
        let candidate = (cumulative - bound) / (k + 1) as f64;
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    for w in weights.iter_mut() {
        let shrunk = (w.abs() - theta).max(0.0);
        *w = shrunk.copysign(*w);
    }
    // Rounding can leave the sum a hair above the radius.
    let after: f64 = weights.iter().map(|w| w.abs()).sum();
    if after > bound {
        let c = bound / after;
        weights.iter_mut().for_each(|w| *w *= c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l1(v: &[f64]) -> f64 {
        v.iter().map(|x| x.abs()).sum()
    }

    #[test]
    fn feasible_input_unchanged() {
        assert_eq!(project_l1(&[0.2, -0.1], 1.0), vec![0.2, -0.1]);
    }

    #[test]
    fn single_coordinate() {
        assert_eq!(project_l1(&[3.0, 0.0], 1.0), vec![1.0, 0.0]);
    }

    #[test]
    fn matches_brute_force_grid() {
        // Oracle: scan the l1 sphere in the plane and keep the nearest point.
        let target = [2.0, 1.0];
        let steps = 400_000;
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for k in 0..steps {
            let t = 4.0 * k as f64 / steps as f64;
            let (a, b) = match t as u32 {
                0 => (1.0 - t, t),
                1 => (-(t - 1.0), 1.0 - (t - 1.0)),
                2 => (-(1.0 - (t - 2.0)), -(t - 2.0)),
                _ => (t - 3.0, -(1.0 - (t - 3.0))),
            };
            let d = (a - target[0]).powi(2) + (b - target[1]).powi(2);
            if d < best.0 {
                best = (d, [a, b]);
            }
        }
        assert!((best.1[0] - 1.0).abs() < 1e-4 && best.1[1].abs() < 1e-4);
        let p = project_l1(&target, 1.0);
        assert!((p[0] - best.1[0]).abs() < 1e-4 && (p[1] - best.1[1]).abs() < 1e-4);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn output_is_feasible_and_optimal_direction(
            v in proptest::collection::vec(-10f64..10.0, 1..12),
            bound in 0.01f64..5.0,
        ) {
            let p = project_l1(&v, bound);
            prop_assert!(l1(&p) <= bound + 1e-12);
            // Signs preserved, magnitudes never grow.
            for (a, b) in v.iter().zip(&p) {
                prop_assert!(b.abs() <= a.abs() + 1e-15);
                prop_assert!(*b == 0.0 || a.signum() == b.signum());
            }
            // Variational inequality: <v - p, q - p> <= 0 for feasible q (vertices of the ball).
            for i in 0..v.len() {
                for s in [-1.0, 1.0] {
                    let mut q = vec![0.0; v.len()];
                    q[i] = s * bound;
                    let ip: f64 = v.iter().zip(&p).zip(&q).map(|((a, b), c)| (a - b) * (c - b)).sum();
                    prop_assert!(ip <= 1e-9 * (1.0 + l1(&v)));
                }
            }
        }
    }
}
