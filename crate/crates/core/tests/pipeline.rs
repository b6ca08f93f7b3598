//! Pipeline-level checks that cut across simulate, fit, transform, and
//! detect: GoF separations on the rate scenario and the fitted-model OoD
//! pipeline on the trigger/response (latency) scenario.

use tpp_core::detect::{run_gof, run_ood};
use tpp_core::fit::{fit_hawkes, FitConfig};
use tpp_core::model::AnyModel;
use tpp_core::rng::RngHandle;
use tpp_core::simulate::{
    make_scenario_pair, sample_dataset, sample_scenario_id, ScenarioKind, ScenarioSpec,
};
use tpp_core::stats::StatisticKind;
use tpp_core::types::Dataset;

#[test]
fn gof_rate_separation_by_statistic() {
    let kind = ScenarioKind::Rate;
    let model = kind.id_model().unwrap();
    let spec = ScenarioSpec::new(kind, 1.0).unwrap();
    let d_model = sample_dataset(&model, 1000, 100.0, RngHandle::new(900, 0));
    let (d_id, d_ood) =
        make_scenario_pair(&spec, 1000, 1000, RngHandle::new(900, 1_000_000)).unwrap();

    let three_s = run_gof(StatisticKind::ThreeS, &model, &d_model, &d_id, &d_ood)
        .unwrap()
        .auc;
    assert!(three_s > 0.9, "3s auc = {three_s}");

    let ks = run_gof(StatisticKind::KsArrival, &model, &d_model, &d_id, &d_ood)
        .unwrap()
        .auc;
    assert!(ks < 0.6, "ks-arrival auc = {ks}");
}

#[test]
fn latency_ood_pipeline_calibrates_and_orders() {
    // Train once on in-distribution trigger/response data, then reuse the
    // fitted model across deltas.
    let spec0 = ScenarioSpec::new(ScenarioKind::Latency, 0.0).unwrap();
    let base = RngHandle::new(910, 0);
    let train_seqs: Vec<_> = (0..500u64)
        .map(|i| sample_scenario_id(&spec0, base.offset(i)))
        .collect();
    let d_train = Dataset::new(train_seqs, 2).unwrap();
    let fit = fit_hawkes(
        &d_train,
        &FitConfig {
            max_iterations: 3000,
            ..FitConfig::default()
        },
    )
    .unwrap();
    let model: AnyModel = fit.model.into();

    let auc_at = |delta: f64, stream: u64| {
        let spec = ScenarioSpec::new(ScenarioKind::Latency, delta).unwrap();
        let (d_id, d_ood) =
            make_scenario_pair(&spec, 1000, 1000, RngHandle::new(910, stream)).unwrap();
        run_ood(StatisticKind::ThreeS, &model, &d_train, &d_id, &d_ood)
            .unwrap()
            .auc
    };

    let auc_null = auc_at(0.0, 1_000_000);
    assert!(
        (0.47..=0.53).contains(&auc_null),
        "latency delta=0 auc = {auc_null}"
    );

    let auc_low = auc_at(0.25, 4_000_000);
    let auc_high = auc_at(1.0, 7_000_000);
    assert!(
        auc_high > auc_low,
        "detectability should grow with delta: {auc_low} at 0.25 vs {auc_high} at 1.0"
    );
    // The monotone exponential kernel is a coarse surrogate for the
    // lag-Gaussian response structure, so absolute detection stays modest.
    assert!(auc_high > 0.52, "latency delta=1 auc = {auc_high}");
}
