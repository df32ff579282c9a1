//! Contribution estimators over a federation's gradient log.
//!
//! GTG-Shapley and its ablations, the per-round exact baselines MR and TMR,
//! and the retraining baselines (exact "original" Shapley and TMC-Shapley).
//! Every estimator reports the number of utility evaluations it consumed;
//! cached coalition lookups are free.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fl::{reconstruct_submodel, GradientLog, Participant, RoundRecord};
use crate::game::{
    exact_shapley, factorial, permutation_mc, Coalition, CoalitionGame, ContributionVector,
    ConvergenceParams, ConvergenceWindow, EnumerationSampler, Permutation, PermutationSampler,
    UniformSampler, Utility, WithinTruncation, MAX_EXACT_PLAYERS,
};
use crate::model::{evaluate, train_local, LabeledDataset, ModelArchitecture, ParameterVector, TrainConfig};
use crate::seed;
use crate::timing::Stopwatch;

/// Largest federation the retraining baselines accept.
pub const MAX_RETRAIN_PLAYERS: usize = 10;

/// Permutation source for the Monte-Carlo estimators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Round-robin prefix of length `guided_prefix`, random suffix.
    #[default]
    Guided,
    Uniform,
    /// Every permutation in lexicographic order; exact once n! samples are taken.
    Enumerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GtgConfig {
    /// Rounds whose utility gain is at most this are skipped; 0 disables the guard.
    pub eps_between: f64,
    /// Positions are evaluated while the gap to the round's full utility is at least this.
    pub eps_within: f64,
    pub guided_prefix: usize,
    pub max_perms_per_round: usize,
    pub convergence: ConvergenceParams,
    pub sampling: Sampling,
    /// Sampler seed. The CLI fills an unset seed from the experiment's master seed.
    pub seed: Option<u64>,
}

impl Default for GtgConfig {
    fn default() -> Self {
        Self {
            eps_between: 0.001,
            eps_within: 0.001,
            guided_prefix: 1,
            max_perms_per_round: 500,
            convergence: ConvergenceParams::default(),
            sampling: Sampling::Guided,
            seed: None,
        }
    }
}

impl GtgConfig {
    /// No truncation and all n! permutations per round: reproduces the exact per-round values.
    pub fn exact(n: usize) -> Self {
        let all = factorial(n) as usize;
        Self {
            eps_between: 0.0,
            eps_within: 0.0,
            max_perms_per_round: all,
            convergence: ConvergenceParams {
                min_samples: all,
                ..ConvergenceParams::default()
            },
            sampling: Sampling::Enumerate,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, v) in [("eps_between", self.eps_between), ("eps_within", self.eps_within)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.sampling == Sampling::Guided && !(1..n).contains(&self.guided_prefix) {
            return Err(Error::InvalidConfig(format!(
                "guided_prefix must lie in 1..{n}, got {}",
                self.guided_prefix
            )));
        }
        if self.sampling == Sampling::Enumerate && n > MAX_EXACT_PLAYERS {
            return Err(Error::Capacity {
                what: "permutation enumeration",
                max: MAX_EXACT_PLAYERS,
                got: n,
            });
        }
        self.convergence.validate()?;
        if self.max_perms_per_round < self.convergence.min_samples {
            return Err(Error::InvalidConfig(format!(
                "max_perms_per_round ({}) is below convergence.min_samples ({})",
                self.max_perms_per_round, self.convergence.min_samples
            )));
        }
        Ok(())
    }

    fn sampler(&self, round_seed: u64) -> Box<dyn PermutationSampler> {
        match self.sampling {
            Sampling::Guided => Box::new(GuidedSampler::new(self.guided_prefix, round_seed)),
            Sampling::Uniform => Box::new(UniformSampler::new(round_seed)),
            Sampling::Enumerate => Box::new(EnumerationSampler),
        }
    }
}

/// P(a, b) = a! / (a - b)!, saturating.
fn partial_permutations(a: usize, b: usize) -> u128 {
    (0..b).fold(1u128, |acc, i| acc.saturating_mul((a - i) as u128))
}

/// The `k`-th (1-based) guided permutation of `0..n`.
///
/// The first `m` positions walk through all m-permutations of `0..n` in
/// lexicographic order, one per iteration; with `m = 1` position 0 holds
/// participant `(k - 1) mod n`. The remaining participants follow in
/// uniformly random order.
pub fn guided_permutation<R: Rng + ?Sized>(k: usize, n: usize, m: usize, rng: &mut R) -> Permutation {
    assert!(m >= 1 && m < n, "guided prefix {m} outside 1..{n}");
    let mut pool: Vec<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    let mut rank = (k.max(1) - 1) as u128 % partial_permutations(n, m);
    for i in 0..m {
        let block = partial_permutations(n - i - 1, m - i - 1);
        let idx = (rank / block) as usize;
        rank %= block;
        order.push(pool.remove(idx));
    }
    pool.shuffle(rng);
    order.extend(pool);
    Permutation::new(order).expect("prefix and suffix partition 0..n")
}

pub struct GuidedSampler {
    prefix: usize,
    rng: ChaCha8Rng,
}

impl GuidedSampler {
    pub fn new(prefix: usize, seed: u64) -> Self {
        Self {
            prefix,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl PermutationSampler for GuidedSampler {
    fn sample(&mut self, iteration: usize, n: usize) -> Permutation {
        guided_permutation(iteration, n, self.prefix, &mut self.rng)
    }
}

/// Utility of a coalition in one round: test accuracy of the model the
/// coalition's updates reconstruct. The empty coalition maps to the round's
/// base model and the full coalition to the stored aggregate.
pub struct RoundGame<'a> {
    arch: &'a ModelArchitecture,
    record: &'a RoundRecord,
    weights: &'a [u64],
    test: &'a LabeledDataset,
    reconstructions: u64,
}

impl<'a> RoundGame<'a> {
    pub fn new(
        arch: &'a ModelArchitecture,
        record: &'a RoundRecord,
        weights: &'a [u64],
        test: &'a LabeledDataset,
    ) -> Self {
        Self {
            arch,
            record,
            weights,
            test,
            reconstructions: 0,
        }
    }

    pub fn from_log(log: &'a GradientLog, round: usize, test: &'a LabeledDataset) -> Self {
        Self::new(&log.architecture, &log.rounds[round], &log.weights, test)
    }

    /// Sub-models built so far (base and aggregate lookups excluded).
    pub fn reconstructions(&self) -> u64 {
        self.reconstructions
    }
}

impl Utility for RoundGame<'_> {
    fn players(&self) -> usize {
        self.record.updates.len()
    }

    fn utility(&mut self, coalition: Coalition) -> Result<f64> {
        let n = self.players();
        if coalition.is_empty() {
            evaluate(self.arch, &self.record.base_model, self.test)
        } else if coalition == Coalition::full(n) {
            evaluate(self.arch, &self.record.aggregated, self.test)
        } else {
            let model = reconstruct_submodel(self.record, coalition, self.weights)?;
            self.reconstructions += 1;
            evaluate(self.arch, &model, self.test)
        }
    }
}

/// Result of one per-round estimation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub estimate: ContributionVector,
    /// v_N - v_0.
    pub gain: f64,
    /// Skipped by the between-round guard.
    pub truncated: bool,
    pub converged: bool,
    pub trace: Vec<f64>,
    /// Mean marginal contribution per permutation position.
    pub position_means: Vec<f64>,
}

/// One round of GTG-Shapley on `game` (players are the round's participants).
pub fn gtg_round<U: Utility>(game: &mut CoalitionGame<U>, cfg: &GtgConfig, round_seed: u64) -> Result<RoundOutcome> {
    let n = game.players();
    cfg.validate(n)?;
    let v0 = game.value(Coalition::EMPTY)?;
    let vn = game.value(Coalition::full(n))?;
    let gain = vn - v0;
    if cfg.eps_between > 0.0 && gain.abs() <= cfg.eps_between {
        return Ok(RoundOutcome {
            estimate: ContributionVector::zeros(n),
            gain,
            truncated: true,
            converged: true,
            trace: Vec::new(),
            position_means: vec![0.0; n],
        });
    }
    let mut window = ConvergenceWindow::new(cfg.convergence)?;
    let mut sampler = cfg.sampler(round_seed);
    let truncation = WithinTruncation {
        full_utility: vn,
        epsilon: cfg.eps_within,
        exempt_positions: 0,
    };
    let mc = permutation_mc(game, sampler.as_mut(), &mut window, cfg.max_perms_per_round, Some(truncation))?;
    Ok(RoundOutcome {
        estimate: mc.estimate,
        gain,
        truncated: false,
        converged: mc.converged,
        trace: mc.trace,
        position_means: mc.positions.means(),
    })
}

/// Output of every estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimator: String,
    pub per_round: Vec<ContributionVector>,
    /// Coordinate-wise sum of `per_round`.
    pub total: ContributionVector,
    pub eval_count: u64,
    pub reconstructions: u64,
    pub wall_time_s: f64,
    pub converged_rounds: Vec<bool>,
    /// v_N - v_0 per round; `None` where the round was never evaluated.
    pub round_gains: Vec<Option<f64>>,
    pub traces: Vec<Vec<f64>>,
    pub position_means: Vec<Vec<f64>>,
}

impl EstimatorReport {
    fn new(name: &str, n: usize) -> Self {
        Self {
            estimator: name.to_string(),
            per_round: Vec::new(),
            total: ContributionVector::zeros(n),
            eval_count: 0,
            reconstructions: 0,
            wall_time_s: 0.0,
            converged_rounds: Vec::new(),
            round_gains: Vec::new(),
            traces: Vec::new(),
            position_means: Vec::new(),
        }
    }

    fn push_round(&mut self, outcome: RoundOutcome, round: Option<usize>) {
        for (t, v) in self.total.values.iter_mut().zip(&outcome.estimate.values) {
            *t += v;
        }
        self.total.sample_count += outcome.estimate.sample_count;
        let mut estimate = outcome.estimate;
        estimate.round = round;
        self.per_round.push(estimate);
        self.converged_rounds.push(outcome.converged);
        self.round_gains.push(Some(outcome.gain));
        self.traces.push(outcome.trace);
        self.position_means.push(outcome.position_means);
    }

    pub fn players(&self) -> usize {
        self.total.len()
    }
}

fn check_log(log: &GradientLog) -> Result<usize> {
    if log.rounds.is_empty() {
        return Err(Error::InvalidConfig("gradient log has no rounds".into()));
    }
    Ok(log.participants())
}

fn round_seed(cfg: &GtgConfig, round: usize) -> u64 {
    seed::child(seed::derive(cfg.seed.unwrap_or(0), "gtg-round"), round as u64)
}

fn gtg_over_rounds(name: &str, log: &GradientLog, test: &LabeledDataset, cfg: &GtgConfig) -> Result<EstimatorReport> {
    let n = check_log(log)?;
    cfg.validate(n)?;
    let clock = Stopwatch::start();
    let mut report = EstimatorReport::new(name, n);
    for t in 0..log.rounds.len() {
        let mut game = CoalitionGame::new(RoundGame::from_log(log, t, test))?;
        let outcome = gtg_round(&mut game, cfg, round_seed(cfg, t))?;
        report.eval_count += game.eval_count();
        report.reconstructions += game.oracle().reconstructions();
        report.push_round(outcome, Some(t));
    }
    report.wall_time_s = clock.elapsed_secs();
    Ok(report)
}

/// GTG-Shapley over every round of `log`; the total is the sum of per-round values.
pub fn gtg_eval(log: &GradientLog, test: &LabeledDataset, cfg: &GtgConfig) -> Result<EstimatorReport> {
    gtg_over_rounds("gtg", log, test, cfg)
}

/// Within-round truncation only: no between-round guard, uniform sampling.
pub fn gtg_ti(log: &GradientLog, test: &LabeledDataset, cfg: &GtgConfig) -> Result<EstimatorReport> {
    let cfg = GtgConfig {
        eps_between: 0.0,
        sampling: Sampling::Uniform,
        ..cfg.clone()
    };
    gtg_over_rounds("gtg_ti", log, test, &cfg)
}

/// Both truncations, uniform sampling.
pub fn gtg_tib(log: &GradientLog, test: &LabeledDataset, cfg: &GtgConfig) -> Result<EstimatorReport> {
    let cfg = GtgConfig {
        sampling: Sampling::Uniform,
        ..cfg.clone()
    };
    gtg_over_rounds("gtg_tib", log, test, &cfg)
}

/// The log collapsed to one round from the initial model: each participant's
/// update is the sum of its per-round updates, accumulated in `f64`.
pub fn accumulated_round(log: &GradientLog) -> Result<RoundRecord> {
    let n = check_log(log)?;
    let base = log.rounds[0].base_model.clone();
    let p = base.len();
    let updates = (0..n)
        .map(|i| {
            let mut acc = vec![0.0f64; p];
            for record in &log.rounds {
                for (a, &d) in acc.iter_mut().zip(record.updates[i].as_slice()) {
                    *a += d as f64;
                }
            }
            ParameterVector::new(acc.into_iter().map(|x| x as f32).collect())
        })
        .collect();
    let mut record = RoundRecord {
        round: 0,
        base_model: base,
        updates,
        aggregated: ParameterVector::new(Vec::new()),
    };
    record.aggregated = reconstruct_submodel(&record, Coalition::full(n), &log.weights)?;
    Ok(record)
}

/// One game over updates accumulated across all rounds, within-round truncation only.
pub fn gtg_oti(log: &GradientLog, test: &LabeledDataset, cfg: &GtgConfig) -> Result<EstimatorReport> {
    let n = check_log(log)?;
    let cfg = GtgConfig {
        eps_between: 0.0,
        sampling: Sampling::Uniform,
        ..cfg.clone()
    };
    cfg.validate(n)?;
    let clock = Stopwatch::start();
    let record = accumulated_round(log)?;
    let mut game = CoalitionGame::new(RoundGame::new(&log.architecture, &record, &log.weights, test))?;
    let outcome = gtg_round(&mut game, &cfg, round_seed(&cfg, 0))?;
    let mut report = EstimatorReport::new("gtg_oti", n);
    report.eval_count = game.eval_count();
    report.reconstructions = game.oracle().reconstructions();
    report.push_round(outcome, None);
    report.wall_time_s = clock.elapsed_secs();
    Ok(report)
}

/// Expected marginal contribution at each permutation position under
/// uniformly random orderings: the mean utility of size-`j` coalitions minus
/// that of size-`(j - 1)` coalitions.
fn exact_position_means<U: Utility>(game: &mut CoalitionGame<U>) -> Result<Vec<f64>> {
    let n = game.players();
    let mut sums = vec![0.0f64; n + 1];
    let mut counts = vec![0usize; n + 1];
    for bits in 0..1u32 << n {
        let c = Coalition::from_bits(bits);
        sums[c.len()] += game.value(c)?;
        counts[c.len()] += 1;
    }
    let mean: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    Ok((1..=n).map(|j| mean[j] - mean[j - 1]).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TmrConfig {
    /// Round `t` (0-based) is weighted by `lambda^t`.
    pub lambda: f64,
    /// Rounds whose weight falls below this are skipped.
    pub round_threshold: f64,
}

impl Default for TmrConfig {
    fn default() -> Self {
        Self {
            lambda: 0.9,
            round_threshold: 0.01,
        }
    }
}

impl TmrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidConfig(format!("lambda must lie in (0, 1], got {}", self.lambda)));
        }
        if !(self.round_threshold >= 0.0 && self.round_threshold.is_finite()) {
            return Err(Error::InvalidConfig("round_threshold must be finite and >= 0".into()));
        }
        Ok(())
    }
}

fn exact_over_rounds(name: &'static str, log: &GradientLog, test: &LabeledDataset, cfg: &TmrConfig) -> Result<EstimatorReport> {
    let n = check_log(log)?;
    cfg.validate()?;
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::Capacity {
            what: name,
            max: MAX_EXACT_PLAYERS,
            got: n,
        });
    }
    let clock = Stopwatch::start();
    let mut report = EstimatorReport::new(name, n);
    for t in 0..log.rounds.len() {
        let weight = cfg.lambda.powi(t as i32);
        if weight < cfg.round_threshold {
            let mut skipped = ContributionVector::zeros(n);
            skipped.round = Some(t);
            report.per_round.push(skipped);
            report.converged_rounds.push(true);
            report.round_gains.push(None);
            report.traces.push(Vec::new());
            report.position_means.push(vec![0.0; n]);
            continue;
        }
        let mut game = CoalitionGame::new(RoundGame::from_log(log, t, test))?;
        let mut phi = exact_shapley(&mut game)?;
        phi.values.iter_mut().for_each(|v| *v *= weight);
        let gain = game.value(Coalition::full(n))? - game.value(Coalition::EMPTY)?;
        let positions = exact_position_means(&mut game)?;
        report.eval_count += game.eval_count();
        report.reconstructions += game.oracle().reconstructions();
        report.push_round(
            RoundOutcome {
                estimate: phi,
                gain,
                truncated: false,
                converged: true,
                trace: Vec::new(),
                position_means: positions,
            },
            Some(t),
        );
    }
    report.wall_time_s = clock.elapsed_secs();
    Ok(report)
}

/// Exact per-round Shapley values by full subset enumeration, summed over rounds.
pub fn mr_eval(log: &GradientLog, test: &LabeledDataset) -> Result<EstimatorReport> {
    exact_over_rounds(
        "mr",
        log,
        test,
        &TmrConfig {
            lambda: 1.0,
            round_threshold: 0.0,
        },
    )
}

/// MR with round `t` weighted by `lambda^t`; low-weight rounds are skipped.
pub fn tmr_eval(log: &GradientLog, test: &LabeledDataset, cfg: &TmrConfig) -> Result<EstimatorReport> {
    exact_over_rounds("tmr", log, test, cfg)
}

/// What the retraining baselines need to train a coalition from scratch.
#[derive(Clone, Copy)]
pub struct RetrainingSource<'a> {
    pub participants: &'a [Participant],
    pub architecture: ModelArchitecture,
    pub train: TrainConfig,
    pub rounds: usize,
    pub init_seed: u64,
    pub test: &'a LabeledDataset,
}

/// V(S) = test accuracy of a model trained centrally on the members' pooled
/// data from the federation's initial model, for `rounds × local_epochs`
/// epochs. Every coalition shares one shuffling seed.
pub struct RetrainUtility<'a> {
    source: RetrainingSource<'a>,
    initial: ParameterVector,
    trainings: u64,
}

impl<'a> RetrainUtility<'a> {
    pub fn new(source: RetrainingSource<'a>) -> Result<Self> {
        source.architecture.validate()?;
        source.train.validate()?;
        if source.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be >= 1".into()));
        }
        Ok(Self {
            initial: source.architecture.init(source.init_seed),
            source,
            trainings: 0,
        })
    }

    pub fn trainings(&self) -> u64 {
        self.trainings
    }
}

impl Utility for RetrainUtility<'_> {
    fn players(&self) -> usize {
        self.source.participants.len()
    }

    fn utility(&mut self, coalition: Coalition) -> Result<f64> {
        let src = &self.source;
        if coalition.is_empty() {
            return evaluate(&src.architecture, &self.initial, src.test);
        }
        let data = LabeledDataset::concat(
            format!("coalition-{:x}", coalition.bits()),
            coalition.members().map(|i| &src.participants[i].dataset),
        )?;
        let cfg = TrainConfig {
            local_epochs: src.rounds * src.train.local_epochs,
            seed: seed::derive(src.init_seed, "retrain"),
            ..src.train
        };
        let model = train_local(&src.architecture, &self.initial, &data, &cfg)?;
        self.trainings += 1;
        evaluate(&src.architecture, &model, src.test)
    }
}

fn retrain_game<'a>(source: RetrainingSource<'a>, what: &'static str) -> Result<CoalitionGame<RetrainUtility<'a>>> {
    let n = source.participants.len();
    if n > MAX_RETRAIN_PLAYERS {
        return Err(Error::Capacity {
            what,
            max: MAX_RETRAIN_PLAYERS,
            got: n,
        });
    }
    CoalitionGame::new(RetrainUtility::new(source)?)
}

/// Exact Shapley values over retrained coalition models: the ground truth
/// the other estimators are compared against.
pub fn original_shapley_eval(source: RetrainingSource<'_>) -> Result<EstimatorReport> {
    let n = source.participants.len();
    let clock = Stopwatch::start();
    let mut game = retrain_game(source, "original shapley")?;
    let phi = exact_shapley(&mut game)?;
    let gain = game.value(Coalition::full(n))? - game.value(Coalition::EMPTY)?;
    let positions = exact_position_means(&mut game)?;
    let mut report = EstimatorReport::new("original", n);
    report.eval_count = game.eval_count();
    report.push_round(
        RoundOutcome {
            estimate: phi,
            gain,
            truncated: false,
            converged: true,
            trace: Vec::new(),
            position_means: positions,
        },
        None,
    );
    report.wall_time_s = clock.elapsed_secs();
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TmcConfig {
    /// Positions after the first are evaluated while the gap to V(N) is at least this.
    pub eps_within: f64,
    pub max_perms: usize,
    pub convergence: ConvergenceParams,
    pub sampling: Sampling,
    pub seed: Option<u64>,
}

impl Default for TmcConfig {
    fn default() -> Self {
        Self {
            eps_within: 0.001,
            max_perms: 500,
            convergence: ConvergenceParams::default(),
            sampling: Sampling::Uniform,
            seed: None,
        }
    }
}

impl TmcConfig {
    pub fn exact(n: usize) -> Self {
        let all = factorial(n) as usize;
        Self {
            eps_within: 0.0,
            max_perms: all,
            convergence: ConvergenceParams {
                min_samples: all,
                ..ConvergenceParams::default()
            },
            sampling: Sampling::Enumerate,
            seed: None,
        }
    }

    fn as_gtg(&self) -> GtgConfig {
        GtgConfig {
            eps_between: 0.0,
            eps_within: self.eps_within,
            guided_prefix: 1,
            max_perms_per_round: self.max_perms,
            convergence: self.convergence,
            sampling: self.sampling,
            seed: self.seed,
        }
    }
}

/// Truncated Monte-Carlo Shapley over retrained coalition models.
pub fn tmc_shapley_eval(source: RetrainingSource<'_>, cfg: &TmcConfig) -> Result<EstimatorReport> {
    let n = source.participants.len();
    let gtg = cfg.as_gtg();
    gtg.validate(n)?;
    let clock = Stopwatch::start();
    let mut game = retrain_game(source, "tmc shapley")?;
    let v0 = game.value(Coalition::EMPTY)?;
    let vn = game.value(Coalition::full(n))?;
    let mut window = ConvergenceWindow::new(cfg.convergence)?;
    let mut sampler = gtg.sampler(seed::derive(cfg.seed.unwrap_or(0), "tmc"));
    let truncation = WithinTruncation {
        full_utility: vn,
        epsilon: cfg.eps_within,
        exempt_positions: 1,
    };
    let mc = permutation_mc(&mut game, sampler.as_mut(), &mut window, cfg.max_perms, Some(truncation))?;
    let mut report = EstimatorReport::new("tmc", n);
    report.eval_count = game.eval_count();
    report.push_round(
        RoundOutcome {
            estimate: mc.estimate,
            gain: vn - v0,
            truncated: false,
            converged: mc.converged,
            trace: mc.trace,
            position_means: mc.positions.means(),
        },
        None,
    );
    report.wall_time_s = clock.elapsed_secs();
    Ok(report)
}

/// A named estimator with its parameters, as written in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Gtg(GtgConfig),
    GtgTi(GtgConfig),
    GtgTib(GtgConfig),
    GtgOti(GtgConfig),
    Mr,
    Tmr(TmrConfig),
    Tmc(TmcConfig),
    Original,
}

impl EstimatorSpec {
    pub const NAMES: [&'static str; 8] = ["gtg", "gtg_ti", "gtg_tib", "gtg_oti", "mr", "tmr", "tmc", "original"];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorSpec::Gtg(_) => "gtg",
            EstimatorSpec::GtgTi(_) => "gtg_ti",
            EstimatorSpec::GtgTib(_) => "gtg_tib",
            EstimatorSpec::GtgOti(_) => "gtg_oti",
            EstimatorSpec::Mr => "mr",
            EstimatorSpec::Tmr(_) => "tmr",
            EstimatorSpec::Tmc(_) => "tmc",
            EstimatorSpec::Original => "original",
        }
    }

    /// The estimator with default parameters.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "gtg" => EstimatorSpec::Gtg(GtgConfig::default()),
            "gtg_ti" => EstimatorSpec::GtgTi(GtgConfig::default()),
            "gtg_tib" => EstimatorSpec::GtgTib(GtgConfig::default()),
            "gtg_oti" => EstimatorSpec::GtgOti(GtgConfig::default()),
            "mr" => EstimatorSpec::Mr,
            "tmr" => EstimatorSpec::Tmr(TmrConfig::default()),
            "tmc" => EstimatorSpec::Tmc(TmcConfig::default()),
            "original" => EstimatorSpec::Original,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown estimator `{other}`; registered: {}",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    /// Needs the participants' data rather than only the gradient log.
    pub fn needs_retraining(&self) -> bool {
        matches!(self, EstimatorSpec::Tmc(_) | EstimatorSpec::Original)
    }

    /// Fills unset sampler seeds with `seed`.
    pub fn seed_with(&mut self, seed: u64) {
        match self {
            EstimatorSpec::Gtg(c) | EstimatorSpec::GtgTi(c) | EstimatorSpec::GtgTib(c) | EstimatorSpec::GtgOti(c) => {
                c.seed.get_or_insert(seed);
            }
            EstimatorSpec::Tmc(c) => {
                c.seed.get_or_insert(seed);
            }
            _ => {}
        }
    }

    /// Checks parameters against a federation of `n` participants without running anything.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            EstimatorSpec::Gtg(c) | EstimatorSpec::GtgTi(c) | EstimatorSpec::GtgTib(c) | EstimatorSpec::GtgOti(c) => {
                c.validate(n)
            }
            EstimatorSpec::Mr | EstimatorSpec::Tmr(_) if n > MAX_EXACT_PLAYERS => Err(Error::Capacity {
                what: self.name(),
                max: MAX_EXACT_PLAYERS,
                got: n,
            }),
            EstimatorSpec::Tmr(c) => c.validate(),
            EstimatorSpec::Mr => Ok(()),
            EstimatorSpec::Tmc(_) | EstimatorSpec::Original if n > MAX_RETRAIN_PLAYERS => Err(Error::Capacity {
                what: self.name(),
                max: MAX_RETRAIN_PLAYERS,
                got: n,
            }),
            EstimatorSpec::Tmc(c) => c.as_gtg().validate(n),
            EstimatorSpec::Original => Ok(()),
        }
    }

    /// Runs the estimator. Retraining baselines require `retraining`.
    pub fn run(
        &self,
        log: &GradientLog,
        test: &LabeledDataset,
        retraining: Option<RetrainingSource<'_>>,
    ) -> Result<EstimatorReport> {
        let need = || {
            retraining.ok_or_else(|| {
                Error::InvalidConfig(format!("{} needs the participants' datasets", self.name()))
            })
        };
        match self {
            EstimatorSpec::Gtg(c) => gtg_eval(log, test, c),
            EstimatorSpec::GtgTi(c) => gtg_ti(log, test, c),
            EstimatorSpec::GtgTib(c) => gtg_tib(log, test, c),
            EstimatorSpec::GtgOti(c) => gtg_oti(log, test, c),
            EstimatorSpec::Mr => mr_eval(log, test),
            EstimatorSpec::Tmr(c) => tmr_eval(log, test, c),
            EstimatorSpec::Tmc(c) => tmc_shapley_eval(need()?, c),
            EstimatorSpec::Original => original_shapley_eval(need()?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{exact_shapley_by_permutations, TableUtility};
    use crate::model::ModelArchitecture;

    fn table1() -> CoalitionGame<TableUtility> {
        CoalitionGame::new(TableUtility::new(3, vec![0.0, 50.0, 50.0, 60.0, 10.0, 90.0, 90.0, 100.0]).unwrap()).unwrap()
    }

    #[test]
    fn guided_first_positions_cycle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let firsts: Vec<usize> = (1..=10).map(|k| guided_permutation(k, 10, 1, &mut rng).as_slice()[0]).collect();
        assert_eq!(firsts, (0..10).collect::<Vec<_>>());
        let mut counts = [0usize; 7];
        for k in 1..=70 {
            counts[guided_permutation(k, 7, 1, &mut rng).as_slice()[0]] += 1;
        }
        assert_eq!(counts, [10; 7]);
    }

    #[test]
    fn guided_prefix_walks_partial_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let prefixes: Vec<Vec<usize>> = (1..=7)
            .map(|k| guided_permutation(k, 3, 2, &mut rng).as_slice()[..2].to_vec())
            .collect();
        assert_eq!(
            prefixes,
            vec![vec![0, 1], vec![0, 2], vec![1, 0], vec![1, 2], vec![2, 0], vec![2, 1], vec![0, 1]]
        );
    }

    #[test]
    fn between_round_guard_skips_flat_round() {
        let mut game = CoalitionGame::new(TableUtility::new(3, vec![0.5; 8]).unwrap()).unwrap();
        let out = gtg_round(&mut game, &GtgConfig::default(), 1).unwrap();
        assert!(out.truncated);
        assert!(out.estimate.is_zero());
        assert_eq!(out.estimate.sample_count, 0);
        assert_eq!(game.eval_count(), 2);
    }

    #[test]
    fn exact_limit_on_table1() {
        let mut game = table1();
        let out = gtg_round(&mut game, &GtgConfig::exact(3), 0).unwrap();
        let want = exact_shapley_by_permutations(&mut table1()).unwrap();
        for (a, b) in out.estimate.values.iter().zip(&want.values) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(out.estimate.sample_count, 6);
    }

    #[test]
    fn guided_default_converges_near_truth_on_table1() {
        let mut game = table1();
        let cfg = GtgConfig {
            eps_within: 0.0,
            max_perms_per_round: 5000,
            ..GtgConfig::default()
        };
        let out = gtg_round(&mut game, &cfg, 9).unwrap();
        assert!(out.converged);
        for (a, b) in out.estimate.values.iter().zip([35.0, 35.0, 30.0]) {
            assert!((a - b).abs() < 5.0, "{:?}", out.estimate.values);
        }
    }

    #[test]
    fn config_validation() {
        let cfg = GtgConfig {
            guided_prefix: 3,
            ..GtgConfig::default()
        };
        assert!(cfg.validate(3).is_err());
        assert!(GtgConfig::default().validate(3).is_ok());
        let cfg = GtgConfig {
            eps_within: -1.0,
            ..GtgConfig::default()
        };
        assert!(cfg.validate(3).is_err());
        assert!(TmrConfig { lambda: 0.0, round_threshold: 0.0 }.validate().is_err());
        assert!(matches!(
            EstimatorSpec::by_name("shapley"),
            Err(Error::InvalidConfig(m)) if m.contains("gtg_oti")
        ));
        assert!(EstimatorSpec::Original.validate(11).is_err());
    }

    #[test]
    fn spec_serde_round_trip() {
        let specs = vec![
            EstimatorSpec::Gtg(GtgConfig::default()),
            EstimatorSpec::Mr,
            EstimatorSpec::Tmr(TmrConfig::default()),
        ];
        let json = serde_json::to_string(&specs).unwrap();
        assert!(json.contains(r#""name":"gtg""#));
        let back: Vec<EstimatorSpec> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, specs);
        assert!(serde_json::from_str::<EstimatorSpec>(r#"{"name":"gtg","eps_within":0.5}"#).is_ok());
    }

    fn tiny_log(rounds: usize) -> (GradientLog, LabeledDataset) {
        let arch = ModelArchitecture::softmax(1, 2);
        let test = LabeledDataset::new("t", 1, vec![-1.0, 1.0, 2.0, -2.0], vec![0, 1, 1, 0]).unwrap();
        let mut records = Vec::new();
        let mut base = ParameterVector::new(vec![0.0; 4]);
        let weights = vec![1u64, 2, 3];
        for t in 0..rounds {
            let s = 1.0 / (t + 1) as f32;
            let updates = vec![
                ParameterVector::new(vec![-s, s, 0.0, 0.0]),
                ParameterVector::new(vec![s, -s, 0.1, 0.0]),
                ParameterVector::new(vec![-0.5 * s, 0.5 * s, 0.0, 0.2]),
            ];
            let mut record = RoundRecord {
                round: t,
                base_model: base.clone(),
                updates,
                aggregated: ParameterVector::new(Vec::new()),
            };
            record.aggregated = reconstruct_submodel(&record, Coalition::full(3), &weights).unwrap();
            base = record.aggregated.clone();
            records.push(record);
        }
        (
            GradientLog {
                architecture: arch,
                weights,
                rounds: records,
            },
            test,
        )
    }

    #[test]
    fn mr_counts_and_tmr_skip() {
        let (log, test) = tiny_log(3);
        let mr = mr_eval(&log, &test).unwrap();
        assert_eq!(mr.eval_count, 3 * 8);
        assert_eq!(mr.reconstructions, 3 * 6);
        let sum: Vec<f64> = (0..3).map(|i| mr.per_round.iter().map(|r| r.values[i]).sum()).collect();
        assert_eq!(sum, mr.total.values);

        let tmr = tmr_eval(&log, &test, &TmrConfig { lambda: 0.5, round_threshold: 0.3 }).unwrap();
        assert_eq!(tmr.eval_count, 2 * 8);
        assert!(tmr.per_round[2].is_zero());
        for i in 0..3 {
            let want = mr.per_round[0].values[i] + 0.5 * mr.per_round[1].values[i];
            assert!((tmr.total.values[i] - want).abs() < 1e-12);
        }
        let same = tmr_eval(&log, &test, &TmrConfig { lambda: 1.0, round_threshold: 0.0 }).unwrap();
        assert_eq!(same.total, mr.total);
    }

    #[test]
    fn oti_on_single_round_matches_ti() {
        let (log, test) = tiny_log(1);
        let cfg = GtgConfig {
            seed: Some(4),
            ..GtgConfig::default()
        };
        let ti = gtg_ti(&log, &test, &cfg).unwrap();
        let oti = gtg_oti(&log, &test, &cfg).unwrap();
        assert_eq!(ti.total.values, oti.total.values);
        assert_eq!(ti.eval_count, oti.eval_count);
        let tib = gtg_tib(&log, &test, &GtgConfig { eps_between: 0.0, ..cfg.clone() }).unwrap();
        assert_eq!(tib.total.values, ti.total.values);
    }

    #[test]
    fn accumulated_round_sums_updates() {
        let (log, _) = tiny_log(3);
        let acc = accumulated_round(&log).unwrap();
        let want = -(1.0f64 + 0.5 + 1.0 / 3.0);
        assert!((acc.updates[0].as_slice()[0] as f64 - want).abs() < 1e-6);
        assert!(acc.base_model.bit_eq(&log.rounds[0].base_model));
    }
}
