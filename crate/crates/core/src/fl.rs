//! FedAvg simulation and gradient-based sub-model reconstruction.
//!
//! A federation run records, for every round, the base model, each
//! participant's update and the aggregated model. That [`GradientLog`] is all
//! the gradient-based estimators need: any coalition's round model can be
//! rebuilt from it without retraining.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Coalition;
use crate::model::{
    gradient_update, train_local, Activation, LabeledDataset, ModelArchitecture, ParameterVector,
    TrainConfig,
};
use crate::seed;

#[derive(Clone, Debug)]
pub struct Participant {
    /// Zero-based index; participants are numbered contiguously.
    pub id: usize,
    pub dataset: LabeledDataset,
    /// |D_i|, the row count of `dataset`.
    pub weight: u64,
    /// Root of this participant's per-round training seeds.
    pub seed: u64,
}

impl Participant {
    pub fn new(id: usize, dataset: LabeledDataset, seed: u64) -> Self {
        let weight = dataset.len() as u64;
        Self {
            id,
            dataset,
            weight,
            seed,
        }
    }
}

/// One FedAvg round: M^(t), every Δ_i^(t+1) and M^(t+1).
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub base_model: ParameterVector,
    /// Indexed by participant id.
    pub updates: Vec<ParameterVector>,
    pub aggregated: ParameterVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientLog {
    pub architecture: ModelArchitecture,
    /// |D_i| per participant id.
    pub weights: Vec<u64>,
    pub rounds: Vec<RoundRecord>,
}

impl GradientLog {
    pub fn participants(&self) -> usize {
        self.weights.len()
    }

    pub fn total_rounds(&self) -> usize {
        self.rounds.len()
    }

    pub fn initial_model(&self) -> Option<&ParameterVector> {
        self.rounds.first().map(|r| &r.base_model)
    }

    pub fn final_model(&self) -> Option<&ParameterVector> {
        self.rounds.last().map(|r| &r.aggregated)
    }

    /// Checks shapes, round numbering, the chain property and that every
    /// stored aggregate equals the full-coalition reconstruction.
    pub fn validate(&self) -> Result<()> {
        let n = self.participants();
        let p = self.architecture.param_count();
        for (t, r) in self.rounds.iter().enumerate() {
            if r.round != t {
                return Err(Error::Format(format!("round {t} is labelled {}", r.round)));
            }
            if r.updates.len() != n {
                return Err(Error::Format(format!(
                    "round {t} has {} updates for {n} participants",
                    r.updates.len()
                )));
            }
            for v in std::iter::once(&r.base_model)
                .chain(&r.updates)
                .chain(std::iter::once(&r.aggregated))
            {
                if v.len() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        got: v.len(),
                    });
                }
            }
            if t > 0 && !self.rounds[t - 1].aggregated.bit_eq(&r.base_model) {
                return Err(Error::Format(format!(
                    "round {t} base model differs from round {} aggregate",
                    t - 1
                )));
            }
            let rebuilt = reconstruct_submodel(r, Coalition::full(n), &self.weights)?;
            if !rebuilt.bit_eq(&r.aggregated) {
                return Err(Error::Format(format!(
                    "round {t} aggregate does not match its updates"
                )));
            }
        }
        Ok(())
    }
}

fn aggregate<'a>(
    base: &ParameterVector,
    updates: impl Iterator<Item = (u64, &'a ParameterVector)> + Clone,
) -> Result<ParameterVector> {
    let mut total: u64 = 0;
    let mut any = false;
    for (w, u) in updates.clone() {
        any = true;
        if u.len() != base.len() {
            return Err(Error::DimensionMismatch {
                expected: base.len(),
                got: u.len(),
            });
        }
        total += w;
    }
    if !any {
        return Err(Error::EmptyCoalition);
    }
    if total == 0 {
        return Err(Error::ZeroWeight);
    }
    let mut acc = vec![0.0f64; base.len()];
    for (w, u) in updates {
        let share = w as f64 / total as f64;
        for (a, &d) in acc.iter_mut().zip(u.as_slice()) {
            *a += share * d as f64;
        }
    }
    Ok(ParameterVector::new(
        base.as_slice()
            .iter()
            .zip(acc)
            .map(|(&b, a)| (b as f64 + a) as f32)
            .collect(),
    ))
}

/// FedAvg: `base + Σ_i (|D_i| / Σ_j |D_j|) Δ_i` over the ids present in
/// `updates`, summed in ascending id order with `f64` accumulators.
pub fn fedavg_aggregate(
    base: &ParameterVector,
    updates: &BTreeMap<usize, ParameterVector>,
    weights: &BTreeMap<usize, u64>,
) -> Result<ParameterVector> {
    let mut items = Vec::with_capacity(updates.len());
    for (id, u) in updates {
        let w = *weights
            .get(id)
            .ok_or_else(|| Error::InvalidConfig(format!("no weight for participant {id}")))?;
        items.push((w, u));
    }
    aggregate(base, items.iter().copied())
}

/// The round model coalition `coalition` would have produced: FedAvg over
/// its members only, with weights renormalized over the coalition.
pub fn reconstruct_submodel(
    round: &RoundRecord,
    coalition: Coalition,
    weights: &[u64],
) -> Result<ParameterVector> {
    if coalition.is_empty() {
        return Err(Error::EmptyCoalition);
    }
    if let Some(bad) = coalition.members().find(|&i| i >= round.updates.len()) {
        return Err(Error::InvalidConfig(format!(
            "participant {bad} not recorded in round {}",
            round.round
        )));
    }
    if weights.len() != round.updates.len() {
        return Err(Error::DimensionMismatch {
            expected: round.updates.len(),
            got: weights.len(),
        });
    }
    aggregate(
        &round.base_model,
        coalition.members().map(|i| (weights[i], &round.updates[i])),
    )
}

/// Full-participation FedAvg for `rounds` rounds from a seeded initial model.
///
/// Participant `i` trains in round `t` with `cfg` and the seed
/// `child(participant.seed, t)`.
pub fn run_federation(
    participants: &[Participant],
    arch: &ModelArchitecture,
    cfg: &TrainConfig,
    rounds: usize,
    init_seed: u64,
) -> Result<GradientLog> {
    arch.validate()?;
    cfg.validate()?;
    if participants.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "a federation needs at least 2 participants, got {}",
            participants.len()
        )));
    }
    if participants.len() > crate::game::MAX_PLAYERS {
        return Err(Error::Capacity {
            what: "run_federation",
            max: crate::game::MAX_PLAYERS,
            got: participants.len(),
        });
    }
    if rounds == 0 {
        return Err(Error::InvalidConfig("rounds must be >= 1".into()));
    }
    for (i, p) in participants.iter().enumerate() {
        if p.id != i {
            return Err(Error::InvalidConfig(format!(
                "participant ids must be contiguous from 0; position {i} holds id {}",
                p.id
            )));
        }
        if p.weight != p.dataset.len() as u64 {
            return Err(Error::InvalidConfig(format!(
                "participant {i} weight {} differs from its {} rows",
                p.weight,
                p.dataset.len()
            )));
        }
    }

    let weights: Vec<u64> = participants.iter().map(|p| p.weight).collect();
    let mut model = arch.init(init_seed);
    let mut records = Vec::with_capacity(rounds);
    for t in 0..rounds {
        let mut updates = Vec::with_capacity(participants.len());
        for p in participants {
            let local_cfg = TrainConfig {
                seed: seed::child(p.seed, t as u64),
                ..*cfg
            };
            let local = train_local(arch, &model, &p.dataset, &local_cfg).map_err(|e| {
                Error::Training {
                    round: t,
                    participant: p.id,
                    source: Box::new(e),
                }
            })?;
            updates.push(gradient_update(&local, &model)?);
        }
        let mut record = RoundRecord {
            round: t,
            base_model: model,
            updates,
            aggregated: ParameterVector::new(Vec::new()),
        };
        record.aggregated =
            reconstruct_submodel(&record, Coalition::full(participants.len()), &weights)?;
        model = record.aggregated.clone();
        records.push(record);
    }

    Ok(GradientLog {
        architecture: *arch,
        weights,
        rounds: records,
    })
}

const MAGIC: &[u8; 4] = b"GTGL";
/// Version of the binary log layout written by [`encode_log`].
pub const FORMAT_VERSION: u16 = 1;

/// Serializes a log:
///
/// ```text
/// "GTGL" | version u16 | input_dim u32 | hidden_dim u32 | class_count u32 | n u32 | T u32
/// | weights u64[n]
/// | per round: base f32[P] | n × update f32[P] (ascending id) | aggregated f32[P]
/// | CRC32 of every preceding byte
/// ```
///
/// All integers and floats are little-endian.
pub fn encode_log(log: &GradientLog) -> Result<Vec<u8>> {
    let arch = &log.architecture;
    let n = log.participants();
    let p = arch.param_count();
    let mut out = Vec::with_capacity(26 + 8 * n + log.total_rounds() * (n + 2) * p * 4 + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [arch.input_dim, arch.hidden_dim, arch.class_count, n, log.total_rounds()] {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for w in &log.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    let mut put = |v: &ParameterVector| -> Result<()> {
        if v.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: v.len(),
            });
        }
        for x in v.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(())
    };
    for r in &log.rounds {
        if r.updates.len() != n {
            return Err(Error::Format(format!(
                "round {} has {} updates for {n} participants",
                r.round,
                r.updates.len()
            )));
        }
        put(&r.base_model)?;
        for u in &r.updates {
            put(u)?;
        }
        put(&r.aggregated)?;
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of log".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn params(&mut self, p: usize) -> Result<ParameterVector> {
        let raw = self.take(p * 4)?;
        Ok(ParameterVector::new(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ))
    }
}

/// Parses a log written by [`encode_log`]. Nothing is returned unless the
/// version, length and checksum all check out.
pub fn decode_log(bytes: &[u8]) -> Result<GradientLog> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, not a GTGL gradient log".into()));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let architecture = ModelArchitecture {
        input_dim: r.u32()?,
        hidden_dim: r.u32()?,
        class_count: r.u32()?,
        activation: Activation::Tanh,
    };
    let n = r.u32()?;
    let t = r.u32()?;
    let p = architecture.param_count();
    let expected = (n as u128) * 8 + (t as u128) * (n as u128 + 2) * (p as u128) * 4 + 26 + 4;
    if bytes.len() as u128 != expected {
        return Err(Error::Format(format!(
            "log length {} does not match header (expected {expected})",
            bytes.len()
        )));
    }
    let body = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let weights = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let mut rounds = Vec::with_capacity(t);
    for round in 0..t {
        let base_model = r.params(p)?;
        let updates = (0..n).map(|_| r.params(p)).collect::<Result<Vec<_>>>()?;
        let aggregated = r.params(p)?;
        rounds.push(RoundRecord {
            round,
            base_model,
            updates,
            aggregated,
        });
    }
    Ok(GradientLog {
        architecture,
        weights,
        rounds,
    })
}

pub fn save_log(log: &GradientLog, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_log(log)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    Ok(())
}

pub fn load_log(path: impl AsRef<Path>) -> Result<GradientLog> {
    decode_log(&fs::read(path)?)
}

/// Companion metadata written next to a log file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogSidecar {
    pub format_version: u16,
    pub scenario_id: String,
    pub master_seed: u64,
    pub init_seed: u64,
    /// The full experiment configuration, as JSON.
    pub config: serde_json::Value,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
}

/// `run.gtgl` → `run.gtgl.json`
pub fn sidecar_path(log_path: &Path) -> std::path::PathBuf {
    let mut s = log_path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
