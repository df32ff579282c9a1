//! Browser bindings for the demo page in `www/`.
//!
//! Each export returns a JSON string; the plain functions behind them are
//! ordinary Rust so they can be tested natively.

use gtg_core::data::ScenarioKind;
use gtg_core::estimators::{gtg_eval, mr_eval, GtgConfig};
use gtg_core::experiment::{ExperimentConfig, Simulation};
use gtg_core::game::{exact_shapley, permutation_marginals, CoalitionGame, Permutation, TableUtility};
use gtg_core::metrics::{cosine_distance, euclidean_distance};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest federation the page offers; MR enumerates 2^n coalitions per round.
pub const MAX_DEMO_PLAYERS: usize = 10;
pub const MAX_DEMO_ROUNDS: usize = 20;

#[derive(Serialize)]
struct PermutationRow {
    order: Vec<usize>,
    marginals: Vec<f64>,
}

#[derive(Serialize)]
struct ThreePlayerGame {
    shapley: Vec<f64>,
    permutations: Vec<PermutationRow>,
}

/// Shapley values and every joining order's marginals for a three-player game.
///
/// `values` lists V for the coalitions {}, {A}, {B}, {A,B}, {C}, {A,C},
/// {B,C}, {A,B,C}, i.e. indexed by bitmask.
pub fn three_player_json(values: &[f64]) -> Result<String, String> {
    if values.len() != 8 {
        return Err(format!("expected 8 coalition values, got {}", values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("coalition values must be finite numbers".into());
    }
    let mut game = CoalitionGame::new(TableUtility::new(3, values.to_vec()).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let shapley = exact_shapley(&mut game).map_err(|e| e.to_string())?.values;
    let permutations = (0..6)
        .map(|rank| {
            let order = Permutation::unrank(3, rank);
            let marginals = permutation_marginals(&mut game, &order).map_err(|e| e.to_string())?;
            Ok(PermutationRow {
                order: order.into_inner(),
                marginals,
            })
        })
        .collect::<Result<_, String>>()?;
    serde_json::to_string(&ThreePlayerGame { shapley, permutations }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct RoundView {
    gtg: Vec<f64>,
    mr: Vec<f64>,
    gain: f64,
    gtg_trace: Vec<f64>,
    gtg_samples: usize,
}

#[derive(Serialize)]
struct FederationView {
    scenario_id: String,
    initial_accuracy: f64,
    final_accuracy: f64,
    gtg_total: Vec<f64>,
    mr_total: Vec<f64>,
    gtg_evals: u64,
    mr_evals: u64,
    euclidean: f64,
    cosine: f64,
    rounds: Vec<RoundView>,
    /// Exact mean marginal per joining position, averaged over rounds.
    position_means: Vec<f64>,
}

fn parse_kind(kind: &str) -> Result<ScenarioKind, String> {
    ScenarioKind::ALL
        .into_iter()
        .find(|k| k.name() == kind)
        .ok_or_else(|| format!("unknown scenario `{kind}`"))
}

/// Runs a small federation and evaluates it with GTG-Shapley and the exact
/// per-round baseline.
pub fn federation_json(kind: &str, n: usize, rounds: usize, seed: u64, eps_within: f64) -> Result<String, String> {
    if !(2..=MAX_DEMO_PLAYERS).contains(&n) {
        return Err(format!("participants must be between 2 and {MAX_DEMO_PLAYERS}"));
    }
    if !(1..=MAX_DEMO_ROUNDS).contains(&rounds) {
        return Err(format!("rounds must be between 1 and {MAX_DEMO_ROUNDS}"));
    }
    let mut cfg = ExperimentConfig::for_scenario(parse_kind(kind)?, n, seed);
    cfg.rounds = rounds;
    let sim = Simulation::run(&cfg).map_err(|e| e.to_string())?;
    let gtg_cfg = GtgConfig {
        eps_within,
        seed: Some(seed),
        ..GtgConfig::default()
    };
    let gtg = gtg_eval(&sim.log, &sim.test, &gtg_cfg).map_err(|e| e.to_string())?;
    let mr = mr_eval(&sim.log, &sim.test).map_err(|e| e.to_string())?;

    let mut position_means = vec![0.0; n];
    for p in &mr.position_means {
        for (acc, v) in position_means.iter_mut().zip(p) {
            *acc += v / rounds as f64;
        }
    }
    let view = FederationView {
        scenario_id: cfg.scenario_id(),
        initial_accuracy: sim.initial_accuracy,
        final_accuracy: sim.final_accuracy,
        euclidean: euclidean_distance(&mr.total.values, &gtg.total.values).map_err(|e| e.to_string())?,
        cosine: cosine_distance(&mr.total.values, &gtg.total.values).unwrap_or(f64::NAN),
        gtg_evals: gtg.eval_count,
        mr_evals: mr.eval_count,
        rounds: (0..rounds)
            .map(|t| RoundView {
                gtg: gtg.per_round[t].values.clone(),
                mr: mr.per_round[t].values.clone(),
                gain: mr.round_gains[t].unwrap_or(0.0),
                gtg_trace: gtg.traces[t].clone(),
                gtg_samples: gtg.per_round[t].sample_count,
            })
            .collect(),
        gtg_total: gtg.total.values,
        mr_total: mr.total.values,
        position_means,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// Scenario kinds the page can select, as a JSON array of names.
pub fn scenario_names_json() -> String {
    let names: Vec<&str> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
    serde_json::to_string(&names).expect("plain strings serialize")
}

#[wasm_bindgen]
pub fn three_player_game(values: Vec<f64>) -> Result<String, JsError> {
    three_player_json(&values).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn run_federation(kind: &str, n: usize, rounds: usize, seed: u32, eps_within: f64) -> Result<String, JsError> {
    federation_json(kind, n, rounds, seed as u64, eps_within).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn scenario_names() -> String {
    scenario_names_json()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn worked_example() {
        let v: Value = serde_json::from_str(&three_player_json(&[0.0, 50.0, 50.0, 60.0, 10.0, 90.0, 90.0, 100.0]).unwrap()).unwrap();
        let phi: Vec<f64> = v["shapley"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!((phi[0] - 35.0).abs() < 1e-9 && (phi[1] - 35.0).abs() < 1e-9 && (phi[2] - 30.0).abs() < 1e-9);
        assert_eq!(v["permutations"].as_array().unwrap().len(), 6);
        assert!(three_player_json(&[1.0; 7]).is_err());
        assert!(three_player_json(&[f64::NAN; 8]).is_err());
    }

    #[test]
    fn federation_view_shapes() {
        let v: Value = serde_json::from_str(&federation_json("diff_dist_same_size", 10, 3, 1, 0.001).unwrap()).unwrap();
        assert_eq!(v["rounds"].as_array().unwrap().len(), 3);
        assert_eq!(v["gtg_total"].as_array().unwrap().len(), 10);
        assert_eq!(v["position_means"].as_array().unwrap().len(), 10);
        assert_eq!(v["mr_evals"], 3 * 1024);
        assert!(v["gtg_evals"].as_u64().unwrap() < 3 * 1024);
        assert!(federation_json("nope", 4, 3, 1, 0.001).is_err());
        assert!(federation_json("same_dist_same_size", 11, 3, 1, 0.001).is_err());
        assert!(federation_json("noisy_labels", 5, 3, 1, 0.001).is_err());
    }

    #[test]
    fn names() {
        let names: Vec<String> = serde_json::from_str(&scenario_names_json()).unwrap();
        assert_eq!(names.len(), 5);
    }
}
