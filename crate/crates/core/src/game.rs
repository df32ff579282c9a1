//! Coalition games, exact Shapley values and Monte-Carlo permutation estimation.
//!
//! Players are indexed `0..n` and coalitions are bitmasks, so a game has at
//! most [`MAX_PLAYERS`] players. Every utility lookup goes through
//! [`CoalitionGame`], which caches values per coalition and counts the
//! oracle invocations that actually happened.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard limit imposed by the bitmask representation.
pub const MAX_PLAYERS: usize = 32;
/// Largest game [`exact_shapley`] accepts (2^n subsets).
pub const MAX_EXACT_PLAYERS: usize = 20;
/// Largest game [`exact_shapley_by_permutations`] accepts (n! orderings).
pub const MAX_ENUMERATION_PLAYERS: usize = 8;

/// A subset of players encoded as a bitmask (bit `i` set iff player `i` is a member).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Coalition(u32);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn from_bits(bits: u32) -> Self {
        Coalition(bits)
    }

    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_PLAYERS);
        if n == MAX_PLAYERS {
            Coalition(u32::MAX)
        } else {
            Coalition((1u32 << n) - 1)
        }
    }

    pub fn singleton(player: usize) -> Self {
        Coalition(1 << player)
    }

    pub fn from_members<I: IntoIterator<Item = usize>>(members: I) -> Self {
        members.into_iter().fold(Self::EMPTY, |c, i| c.with(i))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, player: usize) -> bool {
        self.0 & (1 << player) != 0
    }

    #[must_use]
    pub fn with(self, player: usize) -> Self {
        Coalition(self.0 | (1 << player))
    }

    #[must_use]
    pub fn without(self, player: usize) -> Self {
        Coalition(self.0 & !(1 << player))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Members in ascending order.
    pub fn members(self) -> impl Iterator<Item = usize> + Clone {
        let bits = self.0;
        (0..MAX_PLAYERS).filter(move |i| bits & (1 << i) != 0)
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}

/// A utility function V(S) over coalitions of a fixed player set.
pub trait Utility {
    fn players(&self) -> usize;
    fn utility(&mut self, coalition: Coalition) -> Result<f64>;
}

impl<U: Utility + ?Sized> Utility for &mut U {
    fn players(&self) -> usize {
        (**self).players()
    }

    fn utility(&mut self, coalition: Coalition) -> Result<f64> {
        (**self).utility(coalition)
    }
}

/// Utility given as an explicit table indexed by coalition bitmask.
#[derive(Clone, Debug)]
pub struct TableUtility {
    n: usize,
    values: Vec<f64>,
}

impl TableUtility {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || n > MAX_EXACT_PLAYERS {
            return Err(Error::Capacity {
                what: "table utility",
                max: MAX_EXACT_PLAYERS,
                got: n,
            });
        }
        if values.len() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                got: values.len(),
            });
        }
        Ok(Self { n, values })
    }

    /// Builds the table by calling `f` once per coalition.
    pub fn from_fn(n: usize, mut f: impl FnMut(Coalition) -> f64) -> Result<Self> {
        if n == 0 || n > MAX_EXACT_PLAYERS {
            return Err(Error::Capacity {
                what: "table utility",
                max: MAX_EXACT_PLAYERS,
                got: n,
            });
        }
        let values = (0..1u32 << n).map(|b| f(Coalition(b))).collect();
        Ok(Self { n, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Utility for TableUtility {
    fn players(&self) -> usize {
        self.n
    }

    fn utility(&mut self, coalition: Coalition) -> Result<f64> {
        self.values
            .get(coalition.bits() as usize)
            .copied()
            .ok_or_else(|| Error::Oracle(format!("coalition {coalition:?} outside the table")))
    }
}

/// Utility backed by a closure.
pub struct FnUtility<F> {
    n: usize,
    f: F,
}

impl<F> FnUtility<F>
where
    F: FnMut(Coalition) -> Result<f64>,
{
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F> Utility for FnUtility<F>
where
    F: FnMut(Coalition) -> Result<f64>,
{
    fn players(&self) -> usize {
        self.n
    }

    fn utility(&mut self, coalition: Coalition) -> Result<f64> {
        (self.f)(coalition)
    }
}

/// A utility oracle plus an optional per-coalition cache and an exact evaluation counter.
pub struct CoalitionGame<U> {
    oracle: U,
    cache: Option<HashMap<Coalition, f64>>,
    evals: u64,
}

impl<U: Utility> CoalitionGame<U> {
    /// A game with subset caching enabled.
    pub fn new(oracle: U) -> Result<Self> {
        Self::build(oracle, true)
    }

    /// A game that calls the oracle on every lookup.
    pub fn uncached(oracle: U) -> Result<Self> {
        Self::build(oracle, false)
    }

    fn build(oracle: U, cached: bool) -> Result<Self> {
        let n = oracle.players();
        if n == 0 || n > MAX_PLAYERS {
            return Err(Error::Capacity {
                what: "coalition game",
                max: MAX_PLAYERS,
                got: n,
            });
        }
        Ok(Self {
            oracle,
            cache: cached.then(HashMap::new),
            evals: 0,
        })
    }

    pub fn players(&self) -> usize {
        self.oracle.players()
    }

    /// V(S). Cache hits do not count as evaluations.
    pub fn value(&mut self, coalition: Coalition) -> Result<f64> {
        if let Some(v) = self.cache.as_ref().and_then(|c| c.get(&coalition)) {
            return Ok(*v);
        }
        let v = self.oracle.utility(coalition)?;
        self.evals += 1;
        if let Some(cache) = self.cache.as_mut() {
            cache.insert(coalition, v);
        }
        Ok(v)
    }

    /// Number of oracle invocations so far.
    pub fn eval_count(&self) -> u64 {
        self.evals
    }

    pub fn oracle(&self) -> &U {
        &self.oracle
    }

    pub fn into_oracle(self) -> U {
        self.oracle
    }
}

/// Per-participant contribution estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContributionVector {
    pub values: Vec<f64>,
    /// Round the estimate belongs to, when it is a per-round value.
    pub round: Option<usize>,
    /// Number of permutations averaged; zero for exact computations.
    pub sample_count: usize,
}

impl ContributionVector {
    pub fn zeros(n: usize) -> Self {
        Self::from_values(vec![0.0; n])
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            values,
            round: None,
            sample_count: 0,
        }
    }

    #[must_use]
    pub fn with_round(mut self, round: usize) -> Self {
        self.round = Some(round);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// An ordering of the players `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &p in &order {
            if p >= n || seen[p] {
                return Err(Error::InvalidConfig(format!(
                    "{order:?} is not a permutation of 0..{n}"
                )));
            }
            seen[p] = true;
        }
        Ok(Self(order))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// The `rank`-th permutation of `0..n` in lexicographic order.
    pub fn unrank(n: usize, rank: u64) -> Self {
        let mut pool: Vec<usize> = (0..n).collect();
        let mut order = Vec::with_capacity(n);
        let mut rank = rank % factorial(n);
        for remaining in (1..=n).rev() {
            let block = factorial(remaining - 1);
            let idx = (rank / block) as usize;
            rank %= block;
            order.push(pool.remove(idx));
        }
        Self(order)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

pub(crate) fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

fn check_capacity(n: usize, max: usize, what: &'static str) -> Result<()> {
    if n > max {
        Err(Error::Capacity { what, max, got: n })
    } else {
        Ok(())
    }
}

/// Exact Shapley values by subset enumeration.
///
/// Each coalition is looked up exactly once, in ascending bitmask order.
/// Marginals are bucketed by coalition size and each bucket is summed in
/// sorted order, so interchangeable players receive bit-identical values.
pub fn exact_shapley<U: Utility>(game: &mut CoalitionGame<U>) -> Result<ContributionVector> {
    let n = game.players();
    check_capacity(n, MAX_EXACT_PLAYERS, "exact_shapley")?;

    let subsets = 1usize << n;
    let mut table = Vec::with_capacity(subsets);
    for bits in 0..subsets as u32 {
        table.push(game.value(Coalition(bits))?);
    }
    Ok(ContributionVector::from_values(shapley_from_table(n, &table)))
}

pub(crate) fn shapley_from_table(n: usize, table: &[f64]) -> Vec<f64> {
    let weights: Vec<f64> = (0..n)
        .map(|s| 1.0 / (n as f64 * binomial(n - 1, s)))
        .collect();
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); n];
    (0..n)
        .map(|player| {
            let bit = 1u32 << player;
            for b in &mut buckets {
                b.clear();
            }
            for bits in 0..table.len() as u32 {
                if bits & bit == 0 {
                    let marginal = table[(bits | bit) as usize] - table[bits as usize];
                    buckets[bits.count_ones() as usize].push(marginal);
                }
            }
            buckets
                .iter_mut()
                .zip(&weights)
                .map(|(bucket, w)| {
                    bucket.sort_by(f64::total_cmp);
                    bucket.iter().sum::<f64>() * w
                })
                .sum()
        })
        .collect()
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// Marginal contribution of every player along one joining order.
///
/// `result[p]` is V(players before p, plus p) − V(players before p).
pub fn permutation_marginals<U: Utility>(
    game: &mut CoalitionGame<U>,
    order: &Permutation,
) -> Result<Vec<f64>> {
    let n = game.players();
    if order.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: order.len(),
        });
    }
    let mut marginals = vec![0.0; n];
    let mut coalition = Coalition::EMPTY;
    let mut prev = game.value(coalition)?;
    for &p in order.as_slice() {
        coalition = coalition.with(p);
        let v = game.value(coalition)?;
        marginals[p] = v - prev;
        prev = v;
    }
    Ok(marginals)
}

/// Exact Shapley values as the average marginal over all n! joining orders.
///
/// Independent of [`exact_shapley`]; used as its oracle.
pub fn exact_shapley_by_permutations<U: Utility>(
    game: &mut CoalitionGame<U>,
) -> Result<ContributionVector> {
    let n = game.players();
    check_capacity(n, MAX_ENUMERATION_PLAYERS, "exact_shapley_by_permutations")?;
    let total = factorial(n);
    let mut sums = vec![0.0; n];
    for rank in 0..total {
        let marginals = permutation_marginals(game, &Permutation::unrank(n, rank))?;
        for (s, m) in sums.iter_mut().zip(marginals) {
            *s += m;
        }
    }
    Ok(ContributionVector::from_values(
        sums.into_iter().map(|s| s / total as f64).collect(),
    ))
}

/// Source of joining orders for Monte-Carlo estimation.
pub trait PermutationSampler {
    /// Permutation for the `iteration`-th sample (1-based).
    fn sample(&mut self, iteration: usize, n: usize) -> Permutation;
}

/// Uniformly random permutations from a seeded generator.
pub struct UniformSampler {
    rng: ChaCha8Rng,
}

impl UniformSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl PermutationSampler for UniformSampler {
    fn sample(&mut self, _iteration: usize, n: usize) -> Permutation {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        Permutation(order)
    }
}

/// Cycles through all n! permutations in lexicographic order.
#[derive(Default)]
pub struct EnumerationSampler;

impl PermutationSampler for EnumerationSampler {
    fn sample(&mut self, iteration: usize, n: usize) -> Permutation {
        Permutation::unrank(n, iteration.saturating_sub(1) as u64)
    }
}

/// Sliding window of recent estimates for the relative-change stopping rule.
#[derive(Clone, Debug)]
pub struct ConvergenceWindow {
    history: VecDeque<Vec<f64>>,
    capacity: usize,
    threshold: f64,
    min_samples: usize,
}

/// Serializable parameters of a [`ConvergenceWindow`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceParams {
    pub window: usize,
    pub threshold: f64,
    pub min_samples: usize,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        Self {
            window: ConvergenceWindow::DEFAULT_WINDOW,
            threshold: ConvergenceWindow::DEFAULT_THRESHOLD,
            min_samples: ConvergenceWindow::DEFAULT_WINDOW + 1,
        }
    }
}

impl ConvergenceParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidConfig("convergence window must be >= 1".into()));
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(Error::InvalidConfig(
                "convergence threshold must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Denominator floor for near-zero estimates in the relative-change criterion.
pub const RELATIVE_CHANGE_FLOOR: f64 = 1e-12;

impl ConvergenceWindow {
    pub const DEFAULT_WINDOW: usize = 10;
    pub const DEFAULT_THRESHOLD: f64 = 0.05;

    pub fn new(params: ConvergenceParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            history: VecDeque::with_capacity(params.window),
            capacity: params.window,
            threshold: params.threshold,
            min_samples: params.min_samples,
        })
    }

    pub fn params(&self) -> ConvergenceParams {
        ConvergenceParams {
            window: self.capacity,
            threshold: self.threshold,
            min_samples: self.min_samples,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.history.len() == self.capacity
    }

    pub fn clear(&mut self) {
        self.history.clear();
    }

    /// Appends an estimate, evicting the oldest once the window is full.
    pub fn push(&mut self, values: Vec<f64>) {
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back(values);
    }

    /// Mean relative change of `current` against every stored estimate, or
    /// `None` until the window is full.
    pub fn criterion(&self, current: &[f64]) -> Option<f64> {
        if !self.is_full() || current.is_empty() {
            return None;
        }
        let mut total = 0.0;
        for past in &self.history {
            for (now, then) in current.iter().zip(past) {
                total += (now - then).abs() / now.abs().max(RELATIVE_CHANGE_FLOOR);
            }
        }
        Some(total / (current.len() * self.capacity) as f64)
    }
}

/// True iff the window holds a full history, `current` has at least
/// `min_samples` samples and the mean relative change is below the threshold.
pub fn check_convergence(window: &ConvergenceWindow, current: &ContributionVector) -> bool {
    current.sample_count >= window.min_samples
        && window
            .criterion(&current.values)
            .is_some_and(|c| c < window.threshold)
}

/// Within-permutation truncation: position `j` is evaluated only while
/// `|full_utility - v_{j-1}| >= epsilon`. The first `exempt_positions`
/// positions are always evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WithinTruncation {
    pub full_utility: f64,
    pub epsilon: f64,
    pub exempt_positions: usize,
}

/// Mean marginal contribution observed at each permutation position.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PositionProfile {
    pub sums: Vec<f64>,
    pub samples: usize,
}

impl PositionProfile {
    pub fn means(&self) -> Vec<f64> {
        if self.samples == 0 {
            return vec![0.0; self.sums.len()];
        }
        self.sums.iter().map(|s| s / self.samples as f64).collect()
    }
}

/// Outcome of a Monte-Carlo estimation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McOutcome {
    pub estimate: ContributionVector,
    pub converged: bool,
    /// Convergence criterion after every iteration where it was defined.
    pub trace: Vec<f64>,
    pub positions: PositionProfile,
}

/// Monte-Carlo Shapley estimation over sampled permutations, without truncation.
pub fn mc_shapley<U: Utility>(
    game: &mut CoalitionGame<U>,
    sampler: &mut dyn PermutationSampler,
    window: &mut ConvergenceWindow,
    max_iters: usize,
) -> Result<McOutcome> {
    permutation_mc(game, sampler, window, max_iters, None)
}

/// Monte-Carlo permutation estimation with optional within-permutation truncation.
///
/// Runs until [`check_convergence`] holds or `max_iters` permutations have
/// been consumed. Truncated positions repeat the previous utility, so they
/// contribute a zero marginal to that sample.
pub fn permutation_mc<U: Utility>(
    game: &mut CoalitionGame<U>,
    sampler: &mut dyn PermutationSampler,
    window: &mut ConvergenceWindow,
    max_iters: usize,
    truncation: Option<WithinTruncation>,
) -> Result<McOutcome> {
    let n = game.players();
    if max_iters < window.min_samples() {
        return Err(Error::InvalidConfig(format!(
            "max_iters ({max_iters}) is below min_samples ({})",
            window.min_samples()
        )));
    }
    window.clear();
    let v_empty = game.value(Coalition::EMPTY)?;
    let mut phi = ContributionVector::zeros(n);
    let mut positions = PositionProfile {
        sums: vec![0.0; n],
        samples: 0,
    };
    let mut trace = Vec::new();
    let mut converged = false;

    for k in 1..=max_iters {
        let order = sampler.sample(k, n);
        debug_assert_eq!(order.len(), n);
        let keep = (k - 1) as f64 / k as f64;
        let step = 1.0 / k as f64;
        let mut coalition = Coalition::EMPTY;
        let mut prev = v_empty;
        for (j, &p) in order.as_slice().iter().enumerate() {
            coalition = coalition.with(p);
            let evaluate = truncation.is_none_or(|t| {
                j < t.exempt_positions || (t.full_utility - prev).abs() >= t.epsilon
            });
            let v = if evaluate { game.value(coalition)? } else { prev };
            let marginal = v - prev;
            phi.values[p] = keep * phi.values[p] + step * marginal;
            positions.sums[j] += marginal;
            prev = v;
        }
        positions.samples = k;
        phi.sample_count = k;

        if let Some(c) = window.criterion(&phi.values) {
            trace.push(c);
        }
        if check_convergence(window, &phi) {
            converged = true;
            break;
        }
        window.push(phi.values.clone());
    }

    Ok(McOutcome {
        estimate: phi,
        converged,
        trace,
        positions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> TableUtility {
        // A = player 0, B = 1, C = 2
        TableUtility::new(3, vec![0.0, 50.0, 50.0, 60.0, 10.0, 90.0, 90.0, 100.0]).unwrap()
    }

    #[test]
    fn coalition_bit_ops() {
        let c = Coalition::from_members([0, 3]);
        assert!(c.contains(3) && !c.contains(1));
        assert_eq!(c.len(), 2);
        assert_eq!(c.with(1).members().collect::<Vec<_>>(), vec![0, 1, 3]);
        assert_eq!(c.without(0), Coalition::singleton(3));
        assert_eq!(Coalition::full(3).bits(), 0b111);
        assert_eq!(Coalition::full(32).len(), 32);
    }

    #[test]
    fn table1_exact() {
        let mut game = CoalitionGame::new(table1()).unwrap();
        let phi = exact_shapley(&mut game).unwrap();
        for (got, want) in phi.values.iter().zip([35.0, 35.0, 30.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert_eq!(game.eval_count(), 8);
    }

    #[test]
    fn exact_rejects_oversized_games() {
        let oracle = FnUtility::new(21, |_| Ok(0.0));
        let mut game = CoalitionGame::new(oracle).unwrap();
        assert!(matches!(
            exact_shapley(&mut game),
            Err(Error::Capacity { max: 20, got: 21, .. })
        ));
        let oracle = FnUtility::new(9, |_| Ok(0.0));
        let mut game = CoalitionGame::new(oracle).unwrap();
        assert!(matches!(
            exact_shapley_by_permutations(&mut game),
            Err(Error::Capacity { max: 8, .. })
        ));
    }

    #[test]
    fn oracle_failure_propagates() {
        let oracle = FnUtility::new(3, |c: Coalition| {
            if c.len() == 2 {
                Err(Error::Oracle("boom".into()))
            } else {
                Ok(1.0)
            }
        });
        let mut game = CoalitionGame::new(oracle).unwrap();
        assert!(matches!(exact_shapley(&mut game), Err(Error::Oracle(_))));
    }

    #[test]
    fn constant_game_is_zero() {
        let mut game = CoalitionGame::new(TableUtility::from_fn(5, |_| 3.25).unwrap()).unwrap();
        assert!(exact_shapley(&mut game).unwrap().is_zero());
    }

    #[test]
    fn single_player_and_additive() {
        let mut game = CoalitionGame::new(TableUtility::new(1, vec![0.0, 7.0]).unwrap()).unwrap();
        assert_eq!(exact_shapley_by_permutations(&mut game).unwrap().values, vec![7.0]);

        let w = [1.0, 2.0, 3.0];
        let additive = TableUtility::from_fn(3, |c| c.members().map(|i| w[i]).sum()).unwrap();
        let mut game = CoalitionGame::new(additive).unwrap();
        let phi = exact_shapley_by_permutations(&mut game).unwrap();
        for (got, want) in phi.values.iter().zip(w) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn cache_counts_only_misses() {
        let mut game = CoalitionGame::new(table1()).unwrap();
        game.value(Coalition::singleton(0)).unwrap();
        game.value(Coalition::singleton(0)).unwrap();
        assert_eq!(game.eval_count(), 1);

        let mut uncached = CoalitionGame::uncached(table1()).unwrap();
        uncached.value(Coalition::singleton(0)).unwrap();
        uncached.value(Coalition::singleton(0)).unwrap();
        assert_eq!(uncached.eval_count(), 2);
    }

    #[test]
    fn unrank_is_lexicographic() {
        let all: Vec<Vec<usize>> = (0..6).map(|r| Permutation::unrank(3, r).into_inner()).collect();
        assert_eq!(
            all,
            vec![
                vec![0, 1, 2],
                vec![0, 2, 1],
                vec![1, 0, 2],
                vec![1, 2, 0],
                vec![2, 0, 1],
                vec![2, 1, 0]
            ]
        );
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::new(vec![2, 0, 1]).is_ok());
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3]).is_err());
    }

    fn window() -> ConvergenceWindow {
        ConvergenceWindow::new(ConvergenceParams::default()).unwrap()
    }

    fn cv(values: Vec<f64>, k: usize) -> ContributionVector {
        ContributionVector {
            values,
            round: None,
            sample_count: k,
        }
    }

    #[test]
    fn convergence_needs_full_history() {
        let w = window();
        assert!(!check_convergence(&w, &cv(vec![1.0, 1.0], 50)));
        let mut w = window();
        for _ in 0..9 {
            w.push(vec![1.0, 1.0]);
        }
        assert!(!check_convergence(&w, &cv(vec![1.0, 1.0], 50)));
        w.push(vec![1.0, 1.0]);
        assert!(check_convergence(&w, &cv(vec![1.0, 1.0], 50)));
        assert_eq!(w.criterion(&[1.0, 1.0]), Some(0.0));
    }

    #[test]
    fn convergence_threshold_boundary() {
        // Every term is |1 - 1.04| / 1 = 0.04 (or 0.06); the mean equals that value.
        for (past, expect) in [(1.04, true), (1.06, false)] {
            let mut w = window();
            for _ in 0..10 {
                w.push(vec![past, past]);
            }
            let c = w.criterion(&[1.0, 1.0]).unwrap();
            assert!((c - (past - 1.0)).abs() < 1e-12);
            assert_eq!(check_convergence(&w, &cv(vec![1.0, 1.0], 11)), expect);
        }
    }

    #[test]
    fn near_zero_estimates_use_floor() {
        let mut w = window();
        for _ in 0..10 {
            w.push(vec![1e-9, 1.0]);
        }
        // |0 - 1e-9| / 1e-12 = 1000 dominates the mean
        let c = w.criterion(&[0.0, 1.0]).unwrap();
        assert!((c - 500.0).abs() < 1e-6, "{c}");
    }

    #[test]
    fn min_samples_gate() {
        let mut w = ConvergenceWindow::new(ConvergenceParams {
            min_samples: 30,
            ..Default::default()
        })
        .unwrap();
        for _ in 0..10 {
            w.push(vec![1.0]);
        }
        assert!(!check_convergence(&w, &cv(vec![1.0], 29)));
        assert!(check_convergence(&w, &cv(vec![1.0], 30)));
    }

    #[test]
    fn invalid_window_params() {
        assert!(ConvergenceWindow::new(ConvergenceParams {
            threshold: 0.0,
            ..Default::default()
        })
        .is_err());
        assert!(ConvergenceWindow::new(ConvergenceParams {
            window: 0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn mc_with_enumeration_is_exact() {
        let mut game = CoalitionGame::new(table1()).unwrap();
        let mut w = ConvergenceWindow::new(ConvergenceParams {
            min_samples: 6,
            ..Default::default()
        })
        .unwrap();
        let out = mc_shapley(&mut game, &mut EnumerationSampler, &mut w, 6).unwrap();
        assert_eq!(out.estimate.sample_count, 6);
        for (got, want) in out.estimate.values.iter().zip([35.0, 35.0, 30.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert!(!out.converged);
    }

    #[test]
    fn mc_constant_game_converges_to_zero() {
        let mut game = CoalitionGame::new(TableUtility::from_fn(4, |_| 1.0).unwrap()).unwrap();
        let mut w = window();
        let out = mc_shapley(&mut game, &mut UniformSampler::new(3), &mut w, 100).unwrap();
        assert!(out.converged);
        assert_eq!(out.estimate.sample_count, 11);
        assert!(out.estimate.is_zero());
    }

    #[test]
    fn mc_rejects_max_iters_below_min_samples() {
        let mut game = CoalitionGame::new(table1()).unwrap();
        let mut w = window();
        assert!(mc_shapley(&mut game, &mut UniformSampler::new(0), &mut w, 5).is_err());
    }

    #[test]
    fn truncation_with_huge_epsilon_only_credits_leader() {
        let mut game = CoalitionGame::new(table1()).unwrap();
        let mut w = ConvergenceWindow::new(ConvergenceParams {
            min_samples: 6,
            ..Default::default()
        })
        .unwrap();
        let t = WithinTruncation {
            full_utility: 100.0,
            epsilon: 1e9,
            exempt_positions: 0,
        };
        let out = permutation_mc(&mut game, &mut EnumerationSampler, &mut w, 6, Some(t)).unwrap();
        assert!(out.estimate.is_zero());
        assert_eq!(game.eval_count(), 1);

        let mut game = CoalitionGame::new(table1()).unwrap();
        let t = WithinTruncation {
            exempt_positions: 1,
            ..t
        };
        let out = permutation_mc(&mut game, &mut EnumerationSampler, &mut w, 6, Some(t)).unwrap();
        // each player leads twice in six orders: phi = 2 * V(i) / 6
        let want = [50.0 / 3.0, 50.0 / 3.0, 10.0 / 3.0];
        for (got, want) in out.estimate.values.iter().zip(want) {
            assert!((got - want).abs() < 1e-9);
        }
        assert_eq!(game.eval_count(), 4);
    }
}
