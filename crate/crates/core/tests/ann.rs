mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use teffect_core::ann::{
    cv_select, project_l1, train_propensity, train_regression, Batch, CvGrid, Link, NetworkConfig, Objective,
};
use teffect_core::sim::generate_dgp;
use teffect_core::Sample;

fn cross_entropy(p: &[f64], d: &[usize]) -> f64 {
    p.iter()
        .zip(d)
        .map(|(q, &t)| if t == 1 { -q.ln() } else { -(1.0 - q).ln() })
        .sum::<f64>()
        / p.len() as f64
}

#[test]
fn small_nets_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs = [0.3, -1.2, 0.8, 1.1, 0.2, -0.4, -0.9, 0.5];
    let sq = common::random_network(&mut rng, 2, vec![4], Link::Identity);
    let ts = [0.5, -1.0, 2.0, 0.1];
    let err = common::gradient_error(&sq, Batch { inputs: &xs, targets: &ts }, Objective::SquaredError);
    assert!(err <= 1e-5, "2-4-1 squared error: {err:e}");

    let xs3 = [0.3, -1.2, 0.8, 1.1, 0.2, -0.4];
    let bern = common::random_network(&mut rng, 3, vec![3], Link::Logit);
    let ts = [1.0, 0.0];
    let err = common::gradient_error(&bern, Batch { inputs: &xs3, targets: &ts }, Objective::Bernoulli);
    assert!(err <= 1e-5, "3-3-1 bernoulli: {err:e}");
}

#[test]
fn propensity_beats_constant_rate_out_of_sample() {
    let train = generate_dgp(2000, 5, 71).unwrap();
    let test = generate_dgp(20_000, 5, 72).unwrap();
    let cfg = NetworkConfig {
        widths: vec![32],
        learning_rate: 0.01,
        batch_size: 64,
        epochs: 300,
        ..NetworkConfig::default()
    };
    let net = train_propensity(&train.sample, 1, &cfg).unwrap();
    let fitted = net.predict_rows(test.sample.covariates());
    let rate = train.sample.arm_count(1) as f64 / 2000.0;
    let t = test.sample.treatments();
    let ce_net = cross_entropy(&fitted, t);
    let ce_const = cross_entropy(&vec![rate; t.len()], t);
    assert!(ce_net <= ce_const, "network {ce_net} vs constant {ce_const}");
}

#[test]
fn propensity_at_origin_is_near_one_half() {
    let cfg = NetworkConfig {
        widths: vec![16],
        learning_rate: 0.01,
        batch_size: 64,
        epochs: 100,
        ..NetworkConfig::default()
    };
    let mut total = 0.0;
    let seeds = 20;
    for seed in 0..seeds {
        let draw = generate_dgp(5000, 5, 500 + seed).unwrap();
        let net = train_propensity(&draw.sample, 1, &NetworkConfig { seed, ..cfg.clone() }).unwrap();
        total += net.forward(&[0.0; 5]).unwrap();
    }
    let mean = total / seeds as f64;
    assert!(mean > 0.35 && mean < 0.65, "{mean}");
}

#[test]
fn regression_recovers_the_first_covariate() {
    let train = generate_dgp(2000, 5, 81).unwrap();
    let test = generate_dgp(5000, 5, 82).unwrap();
    let first = |s: &Sample| (0..s.n()).map(|i| s.x(i)[0]).collect::<Vec<f64>>();
    let cfg = NetworkConfig {
        widths: vec![8],
        learning_rate: 0.05,
        epochs: 100,
        ..NetworkConfig::default()
    };
    let net = train_regression(&train.sample, 1, &first(&train.sample), &cfg).unwrap();
    let target = first(&test.sample);
    let pred = net.predict_rows(test.sample.covariates());
    let mse = pred.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / target.len() as f64;
    let var = target.iter().map(|t| t * t).sum::<f64>() / target.len() as f64;
    assert!(mse <= 0.05 * var, "mse {mse} var {var}");
}

fn cv_sample() -> Sample {
    generate_dgp(600, 5, 91).unwrap().sample
}

#[test]
fn single_candidate_grid_returns_it() {
    let cfg = NetworkConfig {
        widths: vec![4],
        epochs: 20,
        ..NetworkConfig::default()
    };
    let out = cv_select(&cv_sample(), 1, &CvGrid::single(&cfg), Objective::Bernoulli).unwrap();
    assert_eq!(out.best, cfg);
}

#[test]
fn divergent_candidate_is_not_selected() {
    let grid = CvGrid {
        widths: vec![vec![4]],
        learning_rates: vec![1e3, 0.05],
        batch_sizes: vec![32],
        epochs: vec![20],
        ..CvGrid::default()
    };
    let out = cv_select(&cv_sample(), 1, &grid, Objective::SquaredError).unwrap();
    assert_eq!(out.best.learning_rate, 0.05);
}

#[test]
fn selected_width_has_the_smaller_cv_loss_and_larger_grids_never_do_worse() {
    let s = cv_sample();
    let base = CvGrid {
        widths: vec![vec![4]],
        learning_rates: vec![0.05],
        batch_sizes: vec![64],
        epochs: vec![30],
        ..CvGrid::default()
    };
    let wide = CvGrid {
        widths: vec![vec![4], vec![64]],
        ..base.clone()
    };
    let small = cv_select(&s, 1, &base, Objective::Bernoulli).unwrap();
    let both = cv_select(&s, 1, &wide, Objective::Bernoulli).unwrap();
    let losses: Vec<f64> = both.table.iter().map(|r| r.cv_loss.unwrap()).collect();
    assert_eq!(both.best_loss, losses.iter().cloned().fold(f64::INFINITY, f64::min));
    assert!(both.best_loss <= small.best_loss);
}

proptest! {
    #[test]
    fn projection_lands_in_the_ball(
        v in proptest::collection::vec(-10f64..10.0, 1..20),
        bound in 0.01f64..5.0,
    ) {
        let out = project_l1(&v, bound);
        let norm: f64 = out.iter().map(|x| x.abs()).sum();
        prop_assert!(norm <= bound + 1e-12);
        if v.iter().map(|x| x.abs()).sum::<f64>() <= bound {
            prop_assert_eq!(out, v);
        }
    }

    #[test]
    fn logit_outputs_stay_inside_the_unit_interval(
        seed in any::<u64>(),
        scale in 1f64..1e4,
        x in proptest::collection::vec(-1e3f64..1e3, 3),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = common::random_network(&mut rng, 3, vec![5], Link::Logit);
        for l in &mut net.layers {
            l.weights.iter_mut().for_each(|w| *w *= scale);
        }
        let p = net.forward(&x).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
    }
}
