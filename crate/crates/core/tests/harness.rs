use proptest::prelude::*;

use slowinst::grid::Grid1D;
use slowinst::harness::{
    build_perturbation, control_experiment, epsilon_sweep, fit_rate, instability_experiment,
    predict, ControlKind, ExperimentConfig, V0Spec,
};
use slowinst::{Model, ModelParams};

/// A short, coarse run: cheap enough for the regular test suite.
fn small(epsilon: f64) -> ExperimentConfig {
    ExperimentConfig {
        params: ModelParams {
            epsilon,
            ..ModelParams::default()
        },
        n_points: 1 << 12,
        n_amplitude: 128,
        stride: 5,
        t_end: Some(0.05),
        ..ExperimentConfig::default()
    }
}

#[test]
fn initial_deviation_is_the_scaled_perturbation() {
    let cfg = small(1e-2);
    let out = instability_experiment(&cfg).unwrap();
    let model = Model::new(cfg.params).unwrap();
    let fine = Grid1D::for_carrier(cfg.length, cfg.n_points, model.k(), 1e-2).unwrap();
    let pred = predict(&cfg).unwrap();
    let pert = build_perturbation(&model, &fine, &pred, &cfg.psi).unwrap();
    let want = 1e-2f64.powf(cfg.k_exp) * pert.field.l2_norm(&fine);
    let got = out.series[0].deviation;
    assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
    assert_eq!(out.series[0].t, 0.0);
    assert!(out.series.last().unwrap().t > 0.049);
}

#[test]
fn zero_perturbation_gives_zero_deviation() {
    let cfg = small(1e-2);
    let (rep, out) = control_experiment(&cfg, ControlKind::ZeroPerturbation, 0.0, None).unwrap();
    assert!(rep.passed);
    assert!(out.series.iter().all(|r| r.deviation == 0.0));
}

#[test]
fn zero_background_needs_explicit_end_and_does_not_grow() {
    let mut cfg = small(1e-2);
    cfg.v0 = V0Spec {
        height: 0.0,
        ..V0Spec::default()
    };
    cfg.t_end = None;
    assert!(predict(&cfg).is_err());

    cfg.t_end = Some(0.2);
    let out = instability_experiment(&cfg).unwrap();
    assert_eq!(out.prediction.gamma1_index, 0.0);
    let d0 = out.series[0].deviation;
    let worst = out
        .series
        .iter()
        .map(|r| (r.deviation - d0).abs() / d0)
        .fold(0.0, f64::max);
    // linear free propagation conserves the norm; the ε^K self-interaction is negligible
    assert!(worst < 1e-6, "relative drift {worst:e}");
}

#[test]
fn sweep_normalizes_order_and_reports_trend_only_for_several_members() {
    let cfg = small(1e-2);
    let one = epsilon_sweep(&cfg, &[1e-2], |_| {}).unwrap();
    assert_eq!(one.rows.len(), 1);
    assert_eq!(one.trend_ok, None);

    let mut seen = Vec::new();
    let two = epsilon_sweep(&cfg, &[5e-3, 1e-2, 5e-3], |o| seen.push(o.report.epsilon)).unwrap();
    assert_eq!(seen, vec![1e-2, 5e-3]);
    assert_eq!(two.rows[0].epsilon, 1e-2);
    assert_eq!(two.rows[1].epsilon, 5e-3);
    assert!(two.trend_ok.is_some());
    assert!(two.to_csv().lines().count() == 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // d = A exp(g t²/(2√ε)) is a straight line in the fit variable.
    #[test]
    fn fit_recovers_synthetic_rate(g in -0.5f64..2.0, lna in -12.0f64..2.0, eps in 1e-4f64..0.1) {
        let ts: Vec<f64> = (0..=200).map(|i| 2.0 * i as f64 / 200.0).collect();
        let ds: Vec<f64> = ts
            .iter()
            .map(|t| (lna + g * t * t / (2.0 * eps.sqrt())).exp())
            .collect();
        let (slope, intercept, r2, n) = fit_rate(&ts, &ds, eps, [0.6, 1.8]).unwrap();
        prop_assert!((slope - g).abs() < 1e-8 * (1.0 + g.abs() / eps.sqrt()));
        prop_assert!((intercept - lna).abs() < 1e-6);
        prop_assert!(n > 100);
        prop_assert!(g.abs() < 1e-6 || r2 > 1.0 - 1e-9);
    }
}
