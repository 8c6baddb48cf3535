//! Small end-to-end flows through the library: simulate -> fit -> infer ->
//! evaluate, at sizes that keep the suite quick.

use dpltm::error_family::ErrorModel;
use dpltm::inference::{estimate_directions, information_bound, wald_report, DirectionConfig};
use dpltm::metrics::{c_index, percentile_times, relative_error_g};
use dpltm::model::ModelFile;
use dpltm::simulate::{generate, generate_replicate, GCase, SimDesign};
use dpltm::train::{fit, split, TrainConfig};

fn quick_fit_config(seed: u64) -> TrainConfig<f64> {
    let mut config = TrainConfig::new(seed);
    config.epochs = 600;
    config.patience = 120;
    config.interior_knots = 6;
    config
}

#[test]
fn simulate_fit_infer_evaluate() {
    let design = SimDesign::new(500, 0.0, GCase::Deep, 0.4, 99);
    let (data, _) = generate(&design).unwrap();
    let parts = split(&data, &[0.8, 0.2], 7).unwrap();

    let result = fit(
        &parts[0],
        &parts[1],
        ErrorModel::proportional_hazards(),
        &quick_fit_config(3),
    )
    .unwrap();
    // The linear effects point the right way and are in a sane range.
    assert!(result.params.beta[0] > 0.3 && result.params.beta[0] < 1.7);
    assert!(result.params.beta[1] < -0.3 && result.params.beta[1] > -1.7);

    let directions =
        estimate_directions(&result.params, &parts[0], &DirectionConfig::new(5)).unwrap();
    let info = information_bound(&result.params, &parts[0], &directions).unwrap();
    let report = wald_report(&result.params.beta, &info, parts[0].len());
    for c in &report.coefficients {
        assert!(c.std_error > 0.0 && c.std_error < 1.0);
        assert!((0.0..=1.0).contains(&c.p_value));
        assert!(c.ci_low < c.estimate && c.estimate < c.ci_high);
    }

    // Held-out evaluation: discrimination should comfortably beat chance and
    // the nonparametric estimate should beat the zero predictor.
    let test_design = SimDesign { n: 150, ..design };
    let (test, truth) = generate_replicate(&test_design, 1).unwrap();
    let scores: Vec<f64> = test
        .records()
        .map(|r| result.params.risk_score(&r).unwrap())
        .collect();
    let c = c_index(&scores, test.times(), test.status()).unwrap();
    assert!(c > 0.65, "held-out c-index {c}");

    let g_hat: Vec<f64> = test
        .records()
        .map(|r| result.params.g_centered(&r.x.to_owned()).unwrap())
        .collect();
    let re = relative_error_g(&g_hat, &truth.g0).unwrap();
    assert!(re < 1.0, "held-out relative error {re}");

    let (t25, t50, t75) = percentile_times(test.times(), test.status()).unwrap();
    assert!(t25 <= t50 && t50 <= t75);
    for t0 in [t25, t50, t75] {
        let p_hat: Vec<f64> = test
            .records()
            .map(|r| result.params.predict_event_prob(&r, t0).unwrap())
            .collect();
        let value = dpltm::metrics::ici(&p_hat, test.times(), test.status(), t0).unwrap();
        assert!(value.is_finite() && value >= 0.0);
    }
}

#[test]
fn model_file_reproduces_validation_loss() {
    let design = SimDesign::new(300, 1.0, GCase::Additive, 0.6, 17);
    let (data, _) = generate(&design).unwrap();
    let parts = split(&data, &[0.8, 0.2], 11).unwrap();
    let mut config = quick_fit_config(13);
    config.epochs = 300;
    let result = fit(
        &parts[0],
        &parts[1],
        ErrorModel::proportional_odds(),
        &config,
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    ModelFile::new(result.params.clone(), serde_json::Value::Null)
        .save(&path)
        .unwrap();
    let loaded = ModelFile::<f64>::load(&path).unwrap();
    let reloaded_ll = loaded.params.loglik(&parts[1]).unwrap();
    assert_eq!(
        reloaded_ll,
        -result.val_curve[result.best_epoch] * parts[1].len() as f64
    );
}
