//! Synthetic data source, participant partitions and an IDX (MNIST) reader.
//!
//! The five scenario kinds pair participants up: pair `p` (0-based) holds
//! participants `2p` and `2p + 1`, which share a skewed class pair, a size
//! ratio or a noise rate.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LabeledDataset;
use crate::seed;

/// Gaussian class clusters around seeded class means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub class_count: usize,
    pub input_dim: usize,
    /// One center per class, each of length `input_dim`.
    pub class_means: Vec<Vec<f32>>,
    /// Within-class standard deviation.
    pub spread: f32,
    pub seed: u64,
}

impl SyntheticSource {
    /// Class means drawn uniformly from [-1, 1]^input_dim.
    pub fn new(class_count: usize, input_dim: usize, spread: f32, seed: u64) -> Result<Self> {
        if class_count < 2 || input_dim == 0 {
            return Err(Error::InvalidConfig(
                "synthetic source needs >= 2 classes and >= 1 feature".into(),
            ));
        }
        if !(spread >= 0.0 && spread.is_finite()) {
            return Err(Error::InvalidConfig("spread must be finite and >= 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, "class-means"));
        let class_means: Vec<Vec<f32>> = (0..class_count)
            .map(|_| (0..input_dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .collect();
        for i in 0..class_count {
            for j in 0..i {
                if class_means[i] == class_means[j] {
                    return Err(Error::InvalidConfig(format!(
                        "class means {j} and {i} coincide; pick another seed"
                    )));
                }
            }
        }
        Ok(Self {
            class_count,
            input_dim,
            class_means,
            spread,
            seed,
        })
    }
}

/// Balanced train pool and test set, class-major row order.
pub fn generate_source(
    cfg: &SyntheticSource,
    train_per_class: usize,
    test_per_class: usize,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if train_per_class == 0 || test_per_class == 0 {
        return Err(Error::InvalidConfig("per-class counts must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, "samples"));
    let d = cfg.input_dim;
    let mut draw = |count: usize| {
        let mut features = Vec::with_capacity(count * cfg.class_count * d);
        let mut labels = Vec::with_capacity(count * cfg.class_count);
        for (c, mean) in cfg.class_means.iter().enumerate() {
            for _ in 0..count {
                for &m in mean {
                    let z: f32 = StandardNormal.sample(&mut rng);
                    features.push(m + cfg.spread * z);
                }
                labels.push(c);
            }
        }
        (features, labels)
    };
    // train rows are drawn first, so the test set never shares a draw with them
    let (train_f, train_l) = draw(train_per_class);
    let (test_f, test_l) = draw(test_per_class);
    Ok((
        LabeledDataset::new("synthetic-train", d, train_f, train_l)?,
        LabeledDataset::new("synthetic-test", d, test_f, test_l)?,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    SameDistSameSize,
    DiffDistSameSize,
    SameDistDiffSize,
    NoisyLabels,
    NoisyFeatures,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::SameDistSameSize,
        ScenarioKind::DiffDistSameSize,
        ScenarioKind::SameDistDiffSize,
        ScenarioKind::NoisyLabels,
        ScenarioKind::NoisyFeatures,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::SameDistSameSize => "same_dist_same_size",
            ScenarioKind::DiffDistSameSize => "diff_dist_same_size",
            ScenarioKind::SameDistDiffSize => "same_dist_diff_size",
            ScenarioKind::NoisyLabels => "noisy_labels",
            ScenarioKind::NoisyFeatures => "noisy_features",
        }
    }

    fn paired(self) -> bool {
        self != ScenarioKind::SameDistSameSize
    }
}

/// Kind-specific knobs; `None` selects the per-pair default schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    /// Fraction of a skewed participant's rows taken from its two designated classes.
    pub skew: f64,
    /// Fraction of the pool given to each participant.
    pub size_ratios: Option<Vec<f64>>,
    /// Label-flip fraction or feature-noise scale per participant.
    pub noise_rates: Option<Vec<f64>>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            skew: 0.8,
            size_ratios: None,
            noise_rates: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    /// Training rows available per class.
    pub per_class_pool: usize,
    #[serde(default = "default_class_count")]
    pub class_count: usize,
    pub seed: u64,
    #[serde(default)]
    pub params: ScenarioParams,
}

fn default_class_count() -> usize {
    10
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, n: usize, per_class_pool: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            per_class_pool,
            class_count: 10,
            seed,
            params: ScenarioParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig("a scenario needs >= 2 participants".into()));
        }
        if self.kind.paired() && !self.n.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "{} configures participants in pairs; n = {} is odd",
                self.kind.name(),
                self.n
            )));
        }
        if self.class_count < 2 {
            return Err(Error::InvalidConfig("class_count must be >= 2".into()));
        }
        if self.per_class_pool == 0 {
            return Err(Error::InvalidConfig("per_class_pool must be >= 1".into()));
        }
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} {v} outside [0, 1]")))
            }
        };
        unit("skew", self.params.skew)?;
        for (name, list) in [
            ("size ratio", &self.params.size_ratios),
            ("noise rate", &self.params.noise_rates),
        ] {
            if let Some(list) = list {
                if list.len() != self.n {
                    return Err(Error::InvalidConfig(format!(
                        "{} {name}s given for {} participants",
                        list.len(),
                        self.n
                    )));
                }
                for &v in list {
                    unit(name, v)?;
                }
            }
        }
        Ok(())
    }

    /// Size ratios; default pairs get weights 0.10, 0.15, 0.20, ...
    /// normalized to sum to one.
    pub fn size_ratios(&self) -> Vec<f64> {
        self.params.size_ratios.clone().unwrap_or_else(|| {
            let w: Vec<f64> = (0..self.n).map(|i| 0.10 + 0.05 * (i / 2) as f64).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|x| x / total).collect()
        })
    }

    /// Noise rates; default pairs get 0, 0.05, 0.10, ...
    pub fn noise_rates(&self) -> Vec<f64> {
        self.params
            .noise_rates
            .clone()
            .unwrap_or_else(|| (0..self.n).map(|i| 0.05 * (i / 2) as f64).collect())
    }

    /// Classes a skewed participant concentrates on.
    pub fn designated_classes(&self, participant: usize) -> [usize; 2] {
        let p = participant / 2;
        [(2 * p) % self.class_count, (2 * p + 1) % self.class_count]
    }
}

/// Per-class row indices of `pool`, each list shuffled.
fn class_queues(pool: &LabeledDataset, class_count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let mut queues = vec![Vec::new(); class_count];
    for (i, &l) in pool.labels().iter().enumerate() {
        if l >= class_count {
            return Err(Error::InvalidConfig(format!(
                "pool label {l} out of range for {class_count} classes"
            )));
        }
        queues[l].push(i);
    }
    for q in &mut queues {
        q.shuffle(rng);
    }
    Ok(queues)
}

/// Participant-by-class row counts for each scenario kind.
fn allocation(spec: &ScenarioSpec, supply: &[usize]) -> Result<Vec<Vec<usize>>> {
    let n = spec.n;
    let c = spec.class_count;
    let min_supply = supply.iter().copied().min().unwrap_or(0);
    let total: usize = supply.iter().sum();
    match spec.kind {
        ScenarioKind::SameDistSameSize | ScenarioKind::NoisyLabels | ScenarioKind::NoisyFeatures => {
            let per_class = min_supply / n;
            if per_class == 0 {
                return Err(Error::InsufficientPool(format!(
                    "{min_supply} rows in the smallest class cannot cover {n} participants"
                )));
            }
            Ok(vec![vec![per_class; c]; n])
        }
        ScenarioKind::DiffDistSameSize => diff_dist_allocation(spec, supply, min_supply * c / n),
        ScenarioKind::SameDistDiffSize => {
            let ratios = spec.size_ratios();
            let ratio_sum: f64 = ratios.iter().sum();
            if ratio_sum > 1.0 + 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "size ratios sum to {ratio_sum} > 1"
                )));
            }
            let mut sizes: Vec<usize> = ratios
                .iter()
                .map(|r| (r * total as f64 + 1e-9).floor() as usize)
                .collect();
            let target = ((ratio_sum * total as f64 + 1e-9).floor() as usize).min(total);
            let mut leftover = target.saturating_sub(sizes.iter().sum());
            for s in sizes.iter_mut() {
                if leftover == 0 {
                    break;
                }
                *s += 1;
                leftover -= 1;
            }
            // class extras rotate across participants so class demand stays level
            let mut cursor = 0;
            let mut counts = Vec::with_capacity(n);
            for s in sizes {
                let mut row = vec![s / c; c];
                for _ in 0..s % c {
                    row[cursor] += 1;
                    cursor = (cursor + 1) % c;
                }
                counts.push(row);
            }
            Ok(counts)
        }
    }
}

fn diff_dist_allocation(spec: &ScenarioSpec, supply: &[usize], size: usize) -> Result<Vec<Vec<usize>>> {
    let n = spec.n;
    let c = spec.class_count;
    if c < 3 {
        return Err(Error::InvalidConfig(
            "label skew needs at least 3 classes".into(),
        ));
    }
    let designated = ((size as f64 * spec.params.skew / 2.0).round() as usize).min(size / 2);
    let rest = size - 2 * designated;
    let others = c - 2;

    // supply left once every participant's designated rows are reserved
    let mut available: Vec<i64> = supply.iter().map(|&s| s as i64).collect();
    for i in 0..n {
        for k in spec.designated_classes(i) {
            available[k] -= designated as i64;
        }
    }

    let mut counts = Vec::with_capacity(n);
    for i in 0..n {
        let mine = spec.designated_classes(i);
        let mut row = vec![rest / others; c];
        for k in 0..c {
            if mine.contains(&k) {
                row[k] = designated;
            } else {
                available[k] -= (rest / others) as i64;
            }
        }
        counts.push(row);
    }
    if let Some(k) = (0..c).find(|&k| available[k] < 0) {
        return Err(Error::InsufficientPool(format!(
            "class {k} is short by {} rows for the label-skew partition",
            -available[k]
        )));
    }
    // each participant takes one extra row from `rest % others` distinct
    // non-designated classes without exceeding any class's leftover supply
    let want = rest % others;
    let capacity: Vec<usize> = available.iter().map(|&a| a as usize).collect();
    let allowed = |i: usize, k: usize| !spec.designated_classes(i).contains(&k);
    let extras = assign_extras(n, c, want, &capacity, allowed).ok_or_else(|| {
        Error::InsufficientPool("leftover class supply cannot balance the label-skew partition".into())
    })?;
    for (row, picks) in counts.iter_mut().zip(extras) {
        for k in picks {
            row[k] += 1;
        }
    }
    Ok(counts)
}

/// Bipartite b-matching by augmenting paths: participant `i` needs `want`
/// distinct classes, class `k` serves at most `capacity[k]` participants.
fn assign_extras(
    n: usize,
    c: usize,
    want: usize,
    capacity: &[usize],
    allowed: impl Fn(usize, usize) -> bool,
) -> Option<Vec<Vec<usize>>> {
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); c];
    let mut picks: Vec<Vec<usize>> = vec![Vec::new(); n];

    fn augment(
        i: usize,
        c: usize,
        capacity: &[usize],
        allowed: &dyn Fn(usize, usize) -> bool,
        holders: &mut [Vec<usize>],
        picks: &mut [Vec<usize>],
        seen: &mut [bool],
    ) -> bool {
        for k in 0..c {
            if seen[k] || !allowed(i, k) || picks[i].contains(&k) {
                continue;
            }
            seen[k] = true;
            if holders[k].len() < capacity[k] {
                holders[k].push(i);
                picks[i].push(k);
                return true;
            }
            for h in 0..holders[k].len() {
                let j = holders[k][h];
                if augment(j, c, capacity, allowed, holders, picks, seen) {
                    // j moved to another class; hand its slot in k to i
                    picks[j].retain(|&x| x != k);
                    holders[k][h] = i;
                    picks[i].push(k);
                    return true;
                }
            }
        }
        false
    }

    for _ in 0..want {
        for i in 0..n {
            let mut seen = vec![false; c];
            if !augment(i, c, capacity, &allowed, &mut holders, &mut picks, &mut seen) {
                return None;
            }
        }
    }
    for p in &mut picks {
        p.sort_unstable();
    }
    Some(picks)
}

/// Pool row indices assigned to each participant, before any noise is applied.
pub fn partition_indices(pool: &LabeledDataset, spec: &ScenarioSpec) -> Result<Vec<Vec<usize>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, "partition"));
    let mut queues = class_queues(pool, spec.class_count, &mut rng)?;
    let supply: Vec<usize> = queues.iter().map(Vec::len).collect();
    let counts = allocation(spec, &supply)?;

    let mut cursors = vec![0usize; spec.class_count];
    let mut out = Vec::with_capacity(spec.n);
    for row in counts {
        let mut idx = Vec::with_capacity(row.iter().sum());
        for (k, &want) in row.iter().enumerate() {
            let end = cursors[k] + want;
            if end > queues[k].len() {
                return Err(Error::InsufficientPool(format!(
                    "class {k} has {} rows, {} requested",
                    queues[k].len(),
                    end
                )));
            }
            idx.extend_from_slice(&queues[k][cursors[k]..end]);
            cursors[k] = end;
        }
        out.push(idx);
    }
    queues.clear();
    Ok(out)
}

/// Splits `pool` into one dataset per participant according to `spec`.
pub fn partition(pool: &LabeledDataset, spec: &ScenarioSpec) -> Result<Vec<LabeledDataset>> {
    let assignment = partition_indices(pool, spec)?;
    let mut parts: Vec<LabeledDataset> = assignment
        .iter()
        .enumerate()
        .map(|(i, idx)| pool.select(format!("{}-p{i}", spec.kind.name()), idx))
        .collect();

    match spec.kind {
        ScenarioKind::NoisyLabels => {
            for (i, (part, rate)) in parts.iter_mut().zip(spec.noise_rates()).enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(seed::child(seed::derive(spec.seed, "label-noise"), i as u64));
                flip_labels(part, rate, spec.class_count, &mut rng);
            }
        }
        ScenarioKind::NoisyFeatures => {
            let std = feature_std(pool);
            for (i, (part, rate)) in parts.iter_mut().zip(spec.noise_rates()).enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(seed::child(seed::derive(spec.seed, "feature-noise"), i as u64));
                add_feature_noise(part, rate, &std, &mut rng);
            }
        }
        _ => {}
    }
    Ok(parts)
}

/// Number of labels flipped for a participant of `size` rows at `rate`.
pub fn flip_count(size: usize, rate: f64) -> usize {
    (rate * size as f64).round() as usize
}

fn flip_labels(part: &mut LabeledDataset, rate: f64, class_count: usize, rng: &mut ChaCha8Rng) {
    let count = flip_count(part.len(), rate);
    if count == 0 {
        return;
    }
    let mut rows: Vec<usize> = (0..part.len()).collect();
    rows.shuffle(rng);
    let labels = part.labels_mut();
    for &r in &rows[..count] {
        let shift = rng.random_range(1..class_count);
        labels[r] = (labels[r] + shift) % class_count;
    }
}

/// Population standard deviation of every feature column.
pub fn feature_std(data: &LabeledDataset) -> Vec<f64> {
    let d = data.input_dim();
    let rows = data.len().max(1) as f64;
    let mut mean = vec![0.0f64; d];
    for i in 0..data.len() {
        for (m, &x) in mean.iter_mut().zip(data.row(i)) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows);
    let mut var = vec![0.0f64; d];
    for i in 0..data.len() {
        for ((v, &x), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
            *v += (x as f64 - m).powi(2);
        }
    }
    var.into_iter().map(|v| (v / rows).sqrt()).collect()
}

fn add_feature_noise(part: &mut LabeledDataset, rate: f64, std: &[f64], rng: &mut ChaCha8Rng) {
    if rate == 0.0 {
        return;
    }
    let d = part.input_dim();
    for (j, x) in part.features_mut().iter_mut().enumerate() {
        let sigma = rate * std[j % d];
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).expect("finite sigma").sample(rng);
            *x = (*x as f64 + noise) as f32;
        }
    }
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

/// Reads an IDX image file and its label file; pixels are scaled to [0, 1].
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let images = fs::read(images_path.as_ref())?;
    let labels = fs::read(labels_path.as_ref())?;
    parse_idx(&images, &labels, &images_path.as_ref().display().to_string())
}

pub fn parse_idx(images: &[u8], labels: &[u8], id: &str) -> Result<LabeledDataset> {
    let magic = be_u32(images, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("images: bad magic {magic:#010x}")));
    }
    let magic = be_u32(labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("labels: bad magic {magic:#010x}")));
    }
    let count = be_u32(images, 4, "images")? as usize;
    let rows = be_u32(images, 8, "images")? as usize;
    let cols = be_u32(images, 12, "images")? as usize;
    let label_count = be_u32(labels, 4, "labels")? as usize;
    if count != label_count {
        return Err(Error::Format(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let pixels = rows * cols;
    let body = &images[16..];
    if body.len() != count * pixels {
        return Err(Error::Format(format!(
            "images: expected {} pixel bytes, found {}",
            count * pixels,
            body.len()
        )));
    }
    let label_body = &labels[8..];
    if label_body.len() != count {
        return Err(Error::Format(format!(
            "labels: expected {count} bytes, found {}",
            label_body.len()
        )));
    }
    LabeledDataset::new(
        id,
        pixels,
        body.iter().map(|&p| p as f32 / 255.0).collect(),
        label_body.iter().map(|&l| l as usize).collect(),
    )
}

/// Writes an IDX image/label pair (`pixels` is row-major, `rows × cols` per image).
pub fn write_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    pixels: &[u8],
    labels: &[u8],
) -> Result<()> {
    if pixels.len() != labels.len() * rows * cols {
        return Err(Error::DimensionMismatch {
            expected: labels.len() * rows * cols,
            got: pixels.len(),
        });
    }
    let mut img = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, labels.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lab = Vec::with_capacity(8 + labels.len());
    for v in [IDX_LABELS_MAGIC, labels.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(labels);
    fs::write(images_path, img)?;
    fs::write(labels_path, lab)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(per_class: usize, seed: u64) -> (LabeledDataset, LabeledDataset) {
        let src = SyntheticSource::new(10, 4, 0.5, seed).unwrap();
        generate_source(&src, per_class, 10).unwrap()
    }

    #[test]
    fn source_shapes_and_determinism() {
        let (train, test) = pool(100, 1);
        assert_eq!(train.len(), 1000);
        assert_eq!(test.len(), 100);
        assert_eq!(test.class_histogram(10), vec![10; 10]);
        let (train2, test2) = pool(100, 1);
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        assert_ne!(pool(100, 2).0, train);
    }

    #[test]
    fn same_size_partition() {
        let (train, _) = pool(100, 3);
        let spec = ScenarioSpec::new(ScenarioKind::SameDistSameSize, 10, 100, 7);
        let parts = partition(&train, &spec).unwrap();
        assert_eq!(parts.len(), 10);
        for p in &parts {
            assert_eq!(p.len(), 100);
            assert_eq!(p.class_histogram(10), vec![10; 10]);
        }
    }

    #[test]
    fn label_skew_histogram() {
        let (train, _) = pool(100, 3);
        let spec = ScenarioSpec::new(ScenarioKind::DiffDistSameSize, 10, 100, 7);
        let parts = partition(&train, &spec).unwrap();
        let h = parts[0].class_histogram(10);
        assert_eq!(parts[0].len(), 100);
        assert!(h[0].abs_diff(40) <= 1 && h[1].abs_diff(40) <= 1, "{h:?}");
    }

    #[test]
    fn noiseless_pair_keeps_labels() {
        let (train, _) = pool(100, 3);
        let spec = ScenarioSpec::new(ScenarioKind::NoisyLabels, 10, 100, 7);
        let idx = partition_indices(&train, &spec).unwrap();
        let parts = partition(&train, &spec).unwrap();
        for i in 0..2 {
            let original: Vec<usize> = idx[i].iter().map(|&r| train.labels()[r]).collect();
            assert_eq!(parts[i].labels(), &original[..]);
        }
    }

    #[test]
    fn odd_pairs_and_bad_ratios_rejected() {
        let (train, _) = pool(20, 3);
        let spec = ScenarioSpec::new(ScenarioKind::NoisyFeatures, 5, 20, 7);
        assert!(matches!(partition(&train, &spec), Err(Error::InvalidConfig(_))));
        let mut spec = ScenarioSpec::new(ScenarioKind::SameDistDiffSize, 2, 20, 7);
        spec.params.size_ratios = Some(vec![0.6, 0.6]);
        assert!(matches!(partition(&train, &spec), Err(Error::InvalidConfig(_))));
        let spec = ScenarioSpec::new(ScenarioKind::SameDistSameSize, 30, 20, 7);
        assert!(matches!(partition(&train, &spec), Err(Error::InsufficientPool(_))));
    }

    #[test]
    fn idx_parse_errors() {
        let mut img = Vec::new();
        for v in [IDX_IMAGES_MAGIC, 2, 1, 2] {
            img.extend_from_slice(&v.to_be_bytes());
        }
        img.extend_from_slice(&[0, 255, 51, 102]);
        let mut lab = Vec::new();
        for v in [IDX_LABELS_MAGIC, 2] {
            lab.extend_from_slice(&v.to_be_bytes());
        }
        lab.extend_from_slice(&[3, 7]);
        let ds = parse_idx(&img, &lab, "fixture").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.row(0), &[0.0, 1.0]);
        assert_eq!(ds.row(1), &[0.2, 0.4]);
        assert_eq!(ds.labels(), &[3, 7]);

        let mut short_labels = lab.clone();
        short_labels[7] = 3;
        assert!(parse_idx(&img, &short_labels, "x").is_err());
        assert!(parse_idx(&img[..img.len() - 1], &lab, "x").is_err());
        assert!(parse_idx(&lab, &lab, "x").is_err());
        assert!(parse_idx(&img[..6], &lab, "x").is_err());
    }
}
