//! One reproducible experiment: synthetic data, a scenario partition, a
//! federation run and the estimators to apply to it.
//!
//! Every random component draws its seed from the master seed by label
//! (`seed::derive`), so changing the estimator list never changes the data
//! or the gradient log.

use serde::{Deserialize, Serialize};

use crate::data::{generate_source, partition, ScenarioKind, ScenarioParams, ScenarioSpec, SyntheticSource};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorSpec, RetrainingSource};
use crate::fl::{run_federation, GradientLog, LogSidecar, Participant, FORMAT_VERSION};
use crate::model::{evaluate, LabeledDataset, ModelArchitecture, TrainConfig};
use crate::seed;

pub const CONFIG_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub class_count: usize,
    pub input_dim: usize,
    pub spread: f32,
    pub test_per_class: usize,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            class_count: 10,
            input_dim: 40,
            spread: 0.7,
            test_per_class: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub n: usize,
    pub per_class_pool: usize,
    pub params: ScenarioParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::SameDistSameSize,
            n: 10,
            per_class_pool: 100,
            params: ScenarioParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Zero selects softmax regression.
    pub hidden_dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            local_epochs: 1,
            batch_size: 16,
            learning_rate: 0.02,
        }
    }
}

/// Ground truth that `compare` measures estimators against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Exact Shapley values over retrained coalition models.
    #[default]
    Original,
    /// Exact per-round values over reconstructed models.
    Mr,
}

impl Reference {
    pub fn estimator(self) -> EstimatorSpec {
        match self {
            Reference::Original => EstimatorSpec::Original,
            Reference::Mr => EstimatorSpec::Mr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    /// Master seed; every component seed is derived from it.
    pub seed: u64,
    pub rounds: usize,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub reference: Reference,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<std::path::PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema: CONFIG_SCHEMA,
            seed: 1,
            rounds: 10,
            source: SourceConfig::default(),
            scenario: ScenarioConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            estimators: Vec::new(),
            reference: Reference::Original,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Default configuration for one scenario kind with `n` participants.
    pub fn for_scenario(kind: ScenarioKind, n: usize, seed: u64) -> Self {
        Self {
            seed,
            scenario: ScenarioConfig {
                kind,
                n,
                ..ScenarioConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn architecture(&self) -> ModelArchitecture {
        ModelArchitecture {
            hidden_dim: self.model.hidden_dim,
            ..ModelArchitecture::softmax(self.source.input_dim, self.source.class_count)
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            local_epochs: self.train.local_epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            seed: seed::derive(self.seed, "train"),
        }
    }

    pub fn scenario_spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            kind: self.scenario.kind,
            n: self.scenario.n,
            per_class_pool: self.scenario.per_class_pool,
            class_count: self.source.class_count,
            seed: seed::derive(self.seed, "partition"),
            params: self.scenario.params.clone(),
        }
    }

    pub fn init_seed(&self) -> u64 {
        seed::derive(self.seed, "init")
    }

    /// `<kind>-n<n>-s<seed>`, used for file names and report rows.
    pub fn scenario_id(&self) -> String {
        format!("{}-n{}-s{}", self.scenario.kind.name(), self.scenario.n, self.seed)
    }

    /// Estimators with unset sampler seeds derived from the master seed.
    pub fn seeded_estimators(&self) -> Vec<EstimatorSpec> {
        self.estimators
            .iter()
            .map(|e| {
                let mut e = e.clone();
                e.seed_with(seed::derive(self.seed, &format!("estimator/{}", e.name())));
                e
            })
            .collect()
    }

    /// Checks everything that can be checked without generating data.
    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::InvalidConfig(format!(
                "config schema {} is not supported (expected {CONFIG_SCHEMA})",
                self.schema
            )));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be >= 1".into()));
        }
        if self.source.test_per_class == 0 {
            return Err(Error::InvalidConfig("source.test_per_class must be >= 1".into()));
        }
        self.architecture().validate()?;
        self.train_config().validate()?;
        self.scenario_spec().validate()?;
        if self.scenario.n > crate::game::MAX_PLAYERS {
            return Err(Error::Capacity {
                what: "federation",
                max: crate::game::MAX_PLAYERS,
                got: self.scenario.n,
            });
        }
        for e in &self.estimators {
            e.validate(self.scenario.n)?;
        }
        Ok(())
    }

    /// Everything `validate` checks plus the comparison's own requirements:
    /// at least one estimator and a reference the federation size allows.
    pub fn validate_for_compare(&self) -> Result<()> {
        self.validate()?;
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("compare needs at least one estimator".into()));
        }
        self.reference.estimator().validate(self.scenario.n)
    }

    pub fn retraining<'a>(&self, participants: &'a [Participant], test: &'a LabeledDataset) -> RetrainingSource<'a> {
        RetrainingSource {
            participants,
            architecture: self.architecture(),
            train: self.train_config(),
            rounds: self.rounds,
            init_seed: self.init_seed(),
            test,
        }
    }

    /// Test set and participants, regenerated deterministically from the seeds.
    pub fn materialize(&self) -> Result<(Vec<Participant>, LabeledDataset)> {
        self.validate()?;
        let source = SyntheticSource::new(
            self.source.class_count,
            self.source.input_dim,
            self.source.spread,
            seed::derive(self.seed, "source"),
        )?;
        let (pool, test) = generate_source(&source, self.scenario.per_class_pool, self.source.test_per_class)?;
        let parts = partition(&pool, &self.scenario_spec())?;
        let participant_root = seed::derive(self.seed, "participant");
        let participants = parts
            .into_iter()
            .enumerate()
            .map(|(i, d)| Participant::new(i, d, seed::child(participant_root, i as u64)))
            .collect();
        Ok((participants, test))
    }
}

/// Everything a federation run produces.
pub struct Simulation {
    pub config: ExperimentConfig,
    pub participants: Vec<Participant>,
    pub test: LabeledDataset,
    pub log: GradientLog,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
}

impl Simulation {
    pub fn run(config: &ExperimentConfig) -> Result<Self> {
        let (participants, test) = config.materialize()?;
        let arch = config.architecture();
        let log = run_federation(&participants, &arch, &config.train_config(), config.rounds, config.init_seed())?;
        let initial_accuracy = evaluate(&arch, log.initial_model().expect("rounds >= 1"), &test)?;
        let final_accuracy = evaluate(&arch, log.final_model().expect("rounds >= 1"), &test)?;
        Ok(Self {
            config: config.clone(),
            participants,
            test,
            log,
            initial_accuracy,
            final_accuracy,
        })
    }

    pub fn retraining(&self) -> RetrainingSource<'_> {
        self.config.retraining(&self.participants, &self.test)
    }

    pub fn sidecar(&self) -> Result<LogSidecar> {
        Ok(LogSidecar {
            format_version: FORMAT_VERSION,
            scenario_id: self.config.scenario_id(),
            master_seed: self.config.seed,
            init_seed: self.config.init_seed(),
            config: serde_json::to_value(&self.config)?,
            initial_accuracy: self.initial_accuracy,
            final_accuracy: self.final_accuracy,
        })
    }
}
