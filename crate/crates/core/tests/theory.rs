use cats_core::theory::{
    channel_design_sweep, checks_table, empirical_risk, mahalanobis_excess, mc_validate_thm1, mc_validate_thm2, report_table,
    synthetic_classes, SweepConfig,
};
use nalgebra::DVector;

#[test]
fn expected_loss_excess_is_the_mahalanobis_distance() {
    let specs = synthetic_classes(1, 3, 200, 1.0, 0.0, 21).unwrap();
    let spec = &specs[0];
    let theta = &spec.theta_star + DVector::from_vec(vec![0.1, -0.2, 0.05]);
    let risk = empirical_risk(&theta, spec, 2000, 5).unwrap();
    let exact = mahalanobis_excess(&theta, &spec.theta_star, &spec.psi(), spec.rows());
    assert!((risk.excess - exact).abs() <= 3.0 * risk.se, "{} vs {exact} (se {})", risk.excess, risk.se);
}

#[test]
fn per_class_estimators_are_unbiased() {
    let specs = synthetic_classes(2, 3, 600, 1.0, 1.0, 22).unwrap();
    let report = mc_validate_thm1(&specs, 2000, 9).unwrap();
    assert!(report.estimator_means_on_target());
    for (target, spec) in report.group_targets.iter().zip(&specs) {
        assert!((DVector::from_vec(target.clone()) - &spec.theta_star).amax() < 1e-12);
    }
    assert!(report.checks().iter().all(|c| c.passed), "{}", checks_table(&report.checks()));
}

#[test]
fn pooled_estimator_targets_the_weighted_average() {
    let specs = synthetic_classes(2, 3, 600, 1.0, 1.0, 23).unwrap();
    let report = mc_validate_thm2(&specs, 2000, 10).unwrap();
    assert!(report.estimator_means_on_target());
    assert_eq!(report.group_targets[0], cats_core::theory::theta_bar(&specs).unwrap().iter().copied().collect::<Vec<_>>());
    assert!(report.checks().iter().all(|c| c.passed), "{}", checks_table(&report.checks()));
}

#[test]
fn sweep_orders_variance_by_estimator_count() {
    let config = SweepConfig { features: 4, classes: 2, lookback: 3, instances: 2400, sigma: 1.0, heterogeneity: 1.0, trials: 2000, seed: 31 };
    let report = channel_design_sweep(&config).unwrap();
    let checks = report.checks();
    assert!(checks.iter().all(|c| c.passed), "{}", checks_table(&checks));
    assert!(checks.iter().any(|c| c.name.starts_with("variance: per-class")));
    let table = report_table(report.reports());
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn sweep_without_heterogeneity_favours_one_channel() {
    let config = SweepConfig { features: 3, classes: 3, lookback: 2, instances: 900, sigma: 1.0, heterogeneity: 0.0, trials: 1000, seed: 32 };
    let report = channel_design_sweep(&config).unwrap();
    assert!(report.one_channel.closed_form_bias < 1e-20);
    let checks = report.checks();
    assert!(checks.iter().filter(|c| c.name.starts_with("excess: one-channel")).count() == 2);
    assert!(checks.iter().all(|c| c.passed), "{}", checks_table(&checks));
}

#[test]
fn per_feature_grouping_matches_per_class_formula_with_k_equal_d() {
    let config = SweepConfig { features: 3, classes: 1, lookback: 4, instances: 1200, sigma: 0.7, heterogeneity: 0.0, trials: 2, seed: 33 };
    let report = channel_design_sweep(&config).unwrap();
    let expected = 3.0 * 4.0 * 0.49 / 1200.0;
    assert!((report.channel_independent.closed_form_variance - expected).abs() < 1e-15);
}

#[test]
fn reports_are_reproducible() {
    let specs = synthetic_classes(3, 2, 300, 0.5, 0.5, 24).unwrap();
    assert_eq!(mc_validate_thm2(&specs, 50, 3).unwrap(), mc_validate_thm2(&specs, 50, 3).unwrap());
}
