use gtg_core::data::ScenarioKind;
use gtg_core::estimators::{
    gtg_eval, gtg_oti, gtg_ti, gtg_tib, mr_eval, original_shapley_eval, tmc_shapley_eval, tmr_eval, EstimatorSpec,
    GtgConfig, TmcConfig, TmrConfig,
};
use gtg_core::experiment::{ExperimentConfig, Simulation};
use gtg_core::Error;

fn small_sim(kind: ScenarioKind, n: usize, rounds: usize, seed: u64) -> Simulation {
    let mut cfg = ExperimentConfig::for_scenario(kind, n, seed);
    cfg.rounds = rounds;
    cfg.scenario.per_class_pool = 40;
    Simulation::run(&cfg).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn gtg_without_truncation_or_sampling_error_is_mr() {
    let sim = small_sim(ScenarioKind::NoisyLabels, 4, 3, 5);
    let mr = mr_eval(&sim.log, &sim.test).unwrap();
    let gtg = gtg_eval(&sim.log, &sim.test, &GtgConfig::exact(4)).unwrap();
    assert!(max_diff(&gtg.total.values, &mr.total.values) < 1e-9);
    for (a, b) in gtg.per_round.iter().zip(&mr.per_round) {
        assert!(max_diff(&a.values, &b.values) < 1e-9);
    }
}

#[test]
fn mr_counts_every_coalition_every_round() {
    let sim = small_sim(ScenarioKind::SameDistSameSize, 5, 3, 2);
    let mr = mr_eval(&sim.log, &sim.test).unwrap();
    assert_eq!(mr.eval_count, 3 * 32);
    // empty and full coalitions are read from the log, the rest reconstructed
    assert_eq!(mr.reconstructions, 3 * 30);
    assert_eq!(mr.per_round.len(), 3);
    for (t, g) in mr.round_gains.iter().enumerate() {
        let sum: f64 = mr.per_round[t].values.iter().sum();
        assert!((sum - g.unwrap()).abs() < 1e-9);
    }
}

#[test]
fn tmr_with_unit_decay_is_mr() {
    let sim = small_sim(ScenarioKind::SameDistSameSize, 4, 3, 3);
    let mr = mr_eval(&sim.log, &sim.test).unwrap();
    let cfg = TmrConfig {
        lambda: 1.0,
        round_threshold: 0.0,
    };
    let tmr = tmr_eval(&sim.log, &sim.test, &cfg).unwrap();
    assert!(max_diff(&tmr.total.values, &mr.total.values) < 1e-12);
}

#[test]
fn tmc_enumeration_matches_original() {
    let sim = small_sim(ScenarioKind::SameDistDiffSize, 4, 2, 4);
    let original = original_shapley_eval(sim.retraining()).unwrap();
    let tmc = tmc_shapley_eval(sim.retraining(), &TmcConfig::exact(4)).unwrap();
    assert!(max_diff(&tmc.total.values, &original.total.values) < 1e-9);
    assert_eq!(original.eval_count, 16);
}

#[test]
fn ablations_are_consistent() {
    let sim = small_sim(ScenarioKind::NoisyLabels, 6, 4, 8);
    let cfg = GtgConfig {
        seed: Some(3),
        ..GtgConfig::default()
    };
    let ti = gtg_ti(&sim.log, &sim.test, &cfg).unwrap();
    let tib = gtg_tib(&sim.log, &sim.test, &cfg).unwrap();
    let oti = gtg_oti(&sim.log, &sim.test, &cfg).unwrap();
    assert!(oti.eval_count <= ti.eval_count);
    assert_eq!(oti.per_round.len(), 1);
    assert!(tib.eval_count <= ti.eval_count);
    for r in [&ti, &tib, &oti] {
        assert!(r.total.values.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn estimators_are_deterministic_given_a_seed() {
    let sim = small_sim(ScenarioKind::SameDistSameSize, 6, 3, 6);
    let cfg = GtgConfig {
        seed: Some(42),
        ..GtgConfig::default()
    };
    let a = gtg_eval(&sim.log, &sim.test, &cfg).unwrap();
    let b = gtg_eval(&sim.log, &sim.test, &cfg).unwrap();
    assert_eq!(a.total, b.total);
    assert_eq!(a.eval_count, b.eval_count);
}

#[test]
fn registry_and_capacity() {
    for name in EstimatorSpec::NAMES {
        assert_eq!(EstimatorSpec::by_name(name).unwrap().name(), name);
    }
    let err = EstimatorSpec::by_name("banzhaf").unwrap_err().to_string();
    assert!(EstimatorSpec::NAMES.iter().all(|n| err.contains(n)), "{err}");
    assert!(matches!(EstimatorSpec::Original.validate(11), Err(Error::Capacity { .. })));
    assert!(EstimatorSpec::Mr.validate(11).is_ok());

    let sim = small_sim(ScenarioKind::SameDistSameSize, 4, 1, 1);
    assert!(EstimatorSpec::Original.run(&sim.log, &sim.test, None).is_err());
}
