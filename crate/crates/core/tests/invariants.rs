//! Cross-module invariants: statistic properties, compensator consistency,
//! simulator output validity, and serialization identity.

use proptest::prelude::*;
use rand::Rng;

use tpp_core::detect::{build_reference, roc_auc, ReferenceSource};
use tpp_core::model::{
    AnyModel, ConstantPoisson, ExpHawkes, GammaRenewal, SelfCorrecting, SineInhomogeneousPoisson,
    TppModel,
};
use tpp_core::rng::RngHandle;
use tpp_core::simulate::{
    make_scenario_pair, sample_dataset, sample_spp, ScenarioKind, ScenarioSpec,
};
use tpp_core::stats::{stat_3s, stat_ks_arrival, StatisticKind};
use tpp_core::transform::time_rescale;
use tpp_core::types::{Dataset, EventSequence, TransformedSequence};

fn strictly_increasing(gaps: &[f64]) -> (Vec<f64>, f64) {
    let mut points = Vec::with_capacity(gaps.len());
    let mut t = 0.0;
    for &g in gaps {
        t += g;
        points.push(t);
    }
    let v_max = t + 1.0;
    (points, v_max)
}

proptest! {
    #[test]
    fn three_s_bounds(gaps in prop::collection::vec(1e-3f64..10.0, 0..50)) {
        let (points, v_max) = strictly_increasing(&gaps);
        let n = points.len();
        let z = TransformedSequence::new(points, v_max).unwrap();
        let psi = stat_3s(&z);
        prop_assert!(psi <= v_max + 1e-9);
        prop_assert!(psi >= v_max / (n as f64 + 1.0) - 1e-9);
    }

    #[test]
    fn three_s_minimum_iff_equal_spacings(n in 1usize..40, w in 0.1f64..5.0) {
        let points: Vec<f64> = (1..=n).map(|i| i as f64 * w).collect();
        let v_max = (n + 1) as f64 * w;
        let z = TransformedSequence::new(points, v_max).unwrap();
        let psi = stat_3s(&z);
        prop_assert!((psi - v_max / (n as f64 + 1.0)).abs() < 1e-9);
    }

    #[test]
    fn three_s_scales_linearly(
        gaps in prop::collection::vec(1e-3f64..10.0, 0..40),
        c in 1e-2f64..100.0,
    ) {
        let (points, v_max) = strictly_increasing(&gaps);
        let z = TransformedSequence::new(points.clone(), v_max).unwrap();
        let scaled = TransformedSequence::new(
            points.iter().map(|p| p * c).collect(),
            v_max * c,
        )
        .unwrap();
        let ratio = stat_3s(&scaled) / stat_3s(&z);
        prop_assert!((ratio - c).abs() < 1e-6 * c);
    }

    #[test]
    fn compensators_nondecreasing(
        seed in 0u64..1000,
        t1 in 0.0f64..10.0,
        dt in 0.0f64..10.0,
    ) {
        let models = test_models();
        let seq = sample_spp(20.0, RngHandle::new(seed, 0));
        let t2 = (t1 + dt).min(20.0);
        for model in &models {
            let a = model.compensator_at(0, t1.min(20.0), &seq).unwrap();
            let b = model.compensator_at(0, t2, &seq).unwrap();
            prop_assert!(b >= a - 1e-12, "compensator decreased: {a} -> {b}");
        }
    }
}

fn test_models() -> Vec<AnyModel> {
    vec![
        ConstantPoisson::new(vec![0.8]).unwrap().into(),
        SineInhomogeneousPoisson::new(0.7, 0.9).unwrap().into(),
        SineInhomogeneousPoisson::new(2.0, 0.4).unwrap().into(),
        GammaRenewal::new(1.7, 0.8).unwrap().into(),
        ExpHawkes::new(vec![0.6], vec![vec![0.5]], 1.2)
            .unwrap()
            .into(),
        SelfCorrecting::new(0.9, 0.6).unwrap().into(),
    ]
}

/// Composite Simpson over each inter-event segment (the intensity is smooth
/// between events). Integrates in the substituted variable u = a + s², which
/// grades points toward the segment start where renewal hazards have a
/// power-law onset.
fn quadrature_compensator(model: &AnyModel, seq: &EventSequence, t: f64) -> f64 {
    let mut knots: Vec<f64> = vec![0.0];
    knots.extend(seq.arrival_times().iter().copied().filter(|&u| u < t));
    knots.push(t);
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        // ∫_a^b f(u) du = ∫_0^√(b−a) f(a + s²) 2s ds
        let s_max = (b - a).sqrt();
        let n = 4000;
        let h = s_max / n as f64;
        let integrand = |s: f64| {
            let u = (a + s * s).min(b);
            2.0 * s * model.intensity_at(0, u, seq).unwrap()
        };
        let mut acc = integrand(0.0) + integrand(s_max);
        for i in 1..n {
            let weight = if i % 2 == 0 { 2.0 } else { 4.0 };
            acc += weight * integrand(i as f64 * h);
        }
        total += acc * h / 3.0;
    }
    total
}

#[test]
fn compensator_matches_intensity_quadrature() {
    // Gamma shapes stay >= 1 here: below 1 the hazard has an integrable
    // singularity at each event, which fixed-order Simpson cannot resolve.
    let mut rng = RngHandle::new(77, 0).rng();
    for trial in 0..100 {
        let models: Vec<AnyModel> = vec![
            ConstantPoisson::new(vec![0.2 + rng.random::<f64>()])
                .unwrap()
                .into(),
            SineInhomogeneousPoisson::new(2.5 * rng.random::<f64>(), 0.2 + rng.random::<f64>())
                .unwrap()
                .into(),
            GammaRenewal::new(1.0 + 2.0 * rng.random::<f64>(), 0.4 + rng.random::<f64>())
                .unwrap()
                .into(),
            ExpHawkes::new(
                vec![0.3 + rng.random::<f64>()],
                vec![vec![0.6 * rng.random::<f64>()]],
                0.8 + rng.random::<f64>(),
            )
            .unwrap()
            .into(),
            SelfCorrecting::new(0.2 + rng.random::<f64>(), rng.random::<f64>())
                .unwrap()
                .into(),
        ];
        let seq = sample_spp(8.0, RngHandle::new(78, trial));
        let t = 8.0 * rng.random::<f64>();
        for model in &models {
            let analytic = model.compensator_at(0, t, &seq).unwrap();
            let quad = quadrature_compensator(model, &seq, t);
            let rel = (analytic - quad).abs() / quad.abs().max(1e-9);
            assert!(
                rel < 1e-6,
                "trial {trial}: analytic {analytic} vs quadrature {quad} (rel {rel})"
            );
        }
    }
}

#[test]
fn simulator_fuzz_outputs_validate() {
    // 10^4 simulator calls across every scenario, ID and OoD sides; the
    // samplers construct through the validating constructors, so any
    // invariant violation panics here.
    let mut calls = 0u64;
    let mut i = 0u64;
    'outer: loop {
        for kind in ScenarioKind::ALL {
            let delta = match kind {
                ScenarioKind::Renewal | ScenarioKind::RenewalB => 0.95 * ((i % 20) as f64 / 19.0),
                _ => (i % 21) as f64 / 20.0,
            };
            let spec = ScenarioSpec::with_t_max(kind, delta, 20.0).unwrap();
            let (id, ood) = make_scenario_pair(&spec, 1, 1, RngHandle::new(i, 0)).unwrap();
            id.sequences()[0].validate().unwrap();
            ood.sequences()[0].validate().unwrap();
            calls += 2;
            if calls >= 10_000 {
                break 'outer;
            }
        }
        i += 1;
    }
}

#[test]
fn jsonl_round_trip_on_simulated_datasets() {
    let dir = tempfile::tempdir().unwrap();
    for (i, kind) in [
        ScenarioKind::Rate,
        ScenarioKind::ServerStop,
        ScenarioKind::Latency,
        ScenarioKind::Renewal,
    ]
    .into_iter()
    .enumerate()
    {
        let spec = ScenarioSpec::with_t_max(kind, 0.6, 30.0).unwrap();
        let (id, ood) = make_scenario_pair(&spec, 25, 25, RngHandle::new(i as u64, 5)).unwrap();
        for (tag, data) in [("id", id), ("ood", ood)] {
            let path = dir.path().join(format!("{i}_{tag}.jsonl"));
            tpp_core::jsonl::save_jsonl(&data, &path).unwrap();
            let back = tpp_core::jsonl::load_jsonl(&path).unwrap();
            assert_eq!(data, back, "round trip failed for {kind} {tag}");
        }
    }
}

#[test]
fn rescaled_event_density_is_unit_rate() {
    // Hawkes at the delta = 0.5 parameterization, rescaled by itself:
    // E[count] / v_max must approach 1.
    let model: AnyModel = ExpHawkes::new(vec![0.5], vec![vec![0.5]], 1.0)
        .unwrap()
        .into();
    let data = sample_dataset(&model, 10_000, 100.0, RngHandle::new(80, 0));
    let mut count = 0.0;
    let mut mass = 0.0;
    for seq in data.iter() {
        let z = time_rescale(&model, seq).unwrap();
        count += z.len() as f64;
        mass += z.v_max();
    }
    let ratio = count / mass;
    assert!((ratio - 1.0).abs() < 0.01, "rescaled density {ratio}");
}

/// Two-sample KS distance.
fn two_sample_ks(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut sup = 0.0f64;
    for &x in a.iter().chain(b.iter()) {
        let fa = a.partition_point(|&v| v <= x) as f64 / a.len() as f64;
        let fb = b.partition_point(|&v| v <= x) as f64 / b.len() as f64;
        sup = sup.max((fa - fb).abs());
    }
    sup
}

#[test]
fn misfit_model_separates_training_and_model_references() {
    // Fit a constant Poisson to Hawkes data: the 3S reference built on the
    // training data differs from the one built on model samples (two-sample
    // KS rejection at alpha = 0.01).
    let truth: AnyModel = ExpHawkes::new(vec![0.5], vec![vec![0.5]], 1.0)
        .unwrap()
        .into();
    let d_train = sample_dataset(&truth, 1000, 100.0, RngHandle::new(81, 0));
    let fitted: AnyModel = tpp_core::fit::fit_poisson(&d_train).unwrap().into();
    let d_model = sample_dataset(&fitted, 1000, 100.0, RngHandle::new(81, 1_000_000));

    let on_train = build_reference(
        StatisticKind::ThreeS,
        &fitted,
        &d_train,
        ReferenceSource::TrainingData,
    )
    .unwrap();
    let on_model = build_reference(
        StatisticKind::ThreeS,
        &fitted,
        &d_model,
        ReferenceSource::ModelSamples,
    )
    .unwrap();

    let mut a = on_train.values().to_vec();
    let mut b = on_model.values().to_vec();
    let d = two_sample_ks(&mut a, &mut b);
    // critical value at alpha = 0.01 for n = m = 1000
    let critical = 1.628 * ((a.len() + b.len()) as f64 / (a.len() * b.len()) as f64).sqrt();
    assert!(d > critical, "KS distance {d} below critical {critical}");
}

#[test]
fn three_s_sensitive_to_count_where_ks_is_not() {
    // SPP samples conditioned near N = 90 vs N = 110 at V = 100: KS arrival
    // cannot tell them apart, the 3S statistic can.
    let mut group_low: Vec<TransformedSequence> = Vec::new();
    let mut group_high: Vec<TransformedSequence> = Vec::new();
    let mut stream = 0u64;
    while group_low.len() < 400 || group_high.len() < 400 {
        let seq = sample_spp(100.0, RngHandle::new(82, stream));
        stream += 1;
        let n = seq.len();
        let z = TransformedSequence::new(seq.arrival_times().to_vec(), 100.0).unwrap();
        if (85..=95).contains(&n) && group_low.len() < 400 {
            group_low.push(z);
        } else if (105..=115).contains(&n) && group_high.len() < 400 {
            group_high.push(z);
        }
    }
    let ks_low: Vec<f64> = group_low.iter().map(stat_ks_arrival).collect();
    let ks_high: Vec<f64> = group_high.iter().map(stat_ks_arrival).collect();
    let psi_low: Vec<f64> = group_low.iter().map(stat_3s).collect();
    let psi_high: Vec<f64> = group_high.iter().map(stat_3s).collect();

    let auc_ks = roc_auc(&ks_low, &ks_high).unwrap();
    let auc_psi = roc_auc(&psi_low, &psi_high).unwrap();
    assert!(
        (0.45..=0.55).contains(&auc_ks),
        "KS arrival should be count-invariant, AUC = {auc_ks}"
    );
    let auc_psi_directional = auc_psi.max(1.0 - auc_psi);
    assert!(
        auc_psi_directional > 0.6,
        "3S should separate the counts, AUC = {auc_psi}"
    );
}

#[test]
fn scenario_outputs_validate_and_keep_time_bounds() {
    for kind in ScenarioKind::ALL {
        let spec = ScenarioSpec::with_t_max(kind, 0.5, 25.0).unwrap();
        let (id, ood) = make_scenario_pair(&spec, 10, 10, RngHandle::new(83, 0)).unwrap();
        for seq in id.iter().chain(ood.iter()) {
            assert_eq!(seq.t_max(), 25.0);
            seq.validate().unwrap();
        }
    }
}

#[test]
fn dataset_generation_is_order_independent() {
    // per-sequence streams make parallel generation reproducible
    let model: AnyModel = ConstantPoisson::standard().into();
    let a = sample_dataset(&model, 64, 50.0, RngHandle::new(84, 0));
    let b = sample_dataset(&model, 64, 50.0, RngHandle::new(84, 0));
    assert_eq!(a, b);
    let single: Vec<EventSequence> = (0..64)
        .map(|i| tpp_core::simulate::sample_model(&model, 50.0, RngHandle::new(84, i)))
        .collect();
    assert_eq!(a, Dataset::new(single, 1).unwrap());
}
