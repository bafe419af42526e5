use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use teffect_core::ann::{train_propensity, NetworkConfig};
use teffect_core::sim::dgp::true_regression;
use teffect_core::sim::glm::fit_logistic;
use teffect_core::sim::runner::run_replication;
use teffect_core::sim::{
    generate_design, generate_dgp, run_replications, true_effect, Design, EstimatorKind, FixedConfigs, SimConfig,
    SimEstimand,
};

#[test]
fn covariate_moments_at_one_million_rows() {
    let draw = generate_dgp(1_000_000, 5, 1).unwrap();
    let s = &draw.sample;
    for k in 0..5 {
        let col: Vec<f64> = (0..s.n()).map(|i| s.x(i)[k]).collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(m.abs() <= 0.003, "mean of X{}: {m}", k + 1);
        assert!((v - 1.0 / 3.0).abs() <= 0.003, "variance of X{}: {v}", k + 1);
    }
}

#[test]
fn ate_truth_agrees_with_direct_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = 1_000_000;
    let total: f64 = (0..m)
        .map(|_| {
            let x: [f64; 5] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            true_regression(1, &x) - true_regression(0, &x)
        })
        .sum();
    assert_eq!(true_effect(SimEstimand::Ate).value, 2.0);
    assert!((total / m as f64 - 2.0).abs() <= 0.005);
}

#[test]
fn treated_truth_agrees_with_simulated_potential_outcomes() {
    let truth = true_effect(SimEstimand::Att);
    assert!(truth.mc_se <= 0.005, "{truth:?}");
    let draw = generate_dgp(1_000_000, 5, 3).unwrap();
    let t = draw.sample.treatments();
    let diffs: Vec<f64> = (0..t.len())
        .filter(|&i| t[i] == 1)
        .map(|i| draw.potential_outcomes[i][1] - draw.potential_outcomes[i][0])
        .collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt();
    let se = sd / (diffs.len() as f64).sqrt();
    let tol = 4.0 * (se * se + truth.mc_se * truth.mc_se).sqrt();
    assert!((mean - truth.value).abs() <= tol, "{mean} vs {}", truth.value);
}

fn sample_quantile(mut v: Vec<f64>, tau: f64) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[((tau * v.len() as f64).ceil() as usize).saturating_sub(1)]
}

#[test]
fn median_effect_truth_agrees_with_simulated_potential_outcomes() {
    let truth = true_effect(SimEstimand::Qte { tau: 0.5 });
    assert!(truth.mc_se <= 0.002, "{truth:?}");
    let draw = generate_dgp(1_000_000, 5, 4).unwrap();
    let q = |d: usize| sample_quantile(draw.potential_outcomes.iter().map(|y| y[d]).collect(), 0.5);
    let direct = q(1) - q(0);
    // sample median error at this size is about 0.0025 per arm
    assert!((direct - truth.value).abs() <= 0.012, "{direct} vs {}", truth.value);
}

fn cross_entropy(p: &[f64], d: &[usize]) -> f64 {
    p.iter()
        .zip(d)
        .map(|(q, &t)| if t == 1 { -q.ln() } else { -(1.0 - q).ln() })
        .sum::<f64>()
        / p.len() as f64
}

#[test]
fn logistic_beats_network_on_a_linear_logit_design() {
    let train = generate_design(Design::LinearLogit, 300, 5, 5).unwrap();
    let test = generate_design(Design::LinearLogit, 20_000, 5, 6).unwrap();
    let s = &train.sample;
    let glm = fit_logistic(s.covariates(), &s.indicator(1), s.p()).unwrap();
    let net = train_propensity(
        s,
        1,
        &NetworkConfig {
            widths: vec![32],
            learning_rate: 0.05,
            epochs: 300,
            ..NetworkConfig::default()
        },
    )
    .unwrap();
    let t = test.sample.treatments();
    let ce_glm = cross_entropy(&glm.predict_rows(test.sample.covariates()), t);
    let ce_net = cross_entropy(&net.predict_rows(test.sample.covariates()), t);
    assert!(ce_glm <= ce_net, "glm {ce_glm} vs network {ce_net}");
}

fn tiny_config(replications: usize) -> SimConfig {
    let quick = NetworkConfig {
        widths: vec![4],
        epochs: 15,
        ..NetworkConfig::default()
    };
    SimConfig {
        replications,
        fixed_configs: Some(FixedConfigs {
            propensity: quick.clone(),
            influence: quick.clone(),
            outcome: quick,
        }),
        truth_draws: 20_000,
        ..SimConfig::desk(
            250,
            6,
            vec![SimEstimand::Att, SimEstimand::Qtt { tau: 0.5 }],
            vec![EstimatorKind::AnnIpw, EstimatorKind::AnnOr, EstimatorKind::GlmOr, EstimatorKind::Oracle],
        )
    }
}

#[test]
fn replications_do_not_depend_on_order() {
    let config = tiny_config(4);
    let report = run_replications(&config).unwrap();
    let selected = report.selected.clone();
    for r in (0..4).rev() {
        assert_eq!(run_replication(&config, selected.as_ref(), r), report.replications[r]);
    }
}

#[test]
fn metrics_stay_in_range() {
    let report = run_replications(&tiny_config(3)).unwrap();
    assert_eq!(report.cells.len(), 6);
    for c in &report.cells {
        let rate = c.rate.unwrap();
        assert!((0.0..=1.0).contains(&rate));
        assert!(c.bias.unwrap() >= 0.0);
        assert!(c.emp_sd.unwrap() >= 0.0);
    }
    assert!(report.runtime_secs > 0.0);
}
