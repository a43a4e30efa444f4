//! Uniform regressor interface with two built-in learners: a distance-based
//! k-nearest-neighbors model and a randomized tree ensemble.
//!
//! Features are standardized with training-set statistics (constant columns
//! pass through unscaled). Non-uniform sample weights are honored by weighted
//! resampling back to the original row count, so both families share one
//! weighting mechanism and retrain cost stays proportional to the window size.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::KpiFrame;
use crate::error::{Error, Result};
use crate::seeding;

const MODEL_BLOB_VERSION: u32 = 1;

/// How the tree ensemble picks a split at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Take the first valid candidate (feature, uniform threshold) pair.
    RandomThreshold,
    /// Draw one uniform threshold per candidate feature and keep the split
    /// with the lowest weighted child variance.
    BestOfRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelFamily {
    Knn {
        k: usize,
    },
    TreeEnsemble {
        n_trees: usize,
        max_depth: usize,
        min_leaf: usize,
        feature_subsample: f64,
        split_rule: SplitRule,
    },
}

/// Family, hyperparameters, and the seed that fixes every random choice made
/// during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    #[serde(flatten)]
    pub family: ModelFamily,
    pub seed: u64,
}

impl RegressorSpec {
    pub fn knn(k: usize, seed: u64) -> RegressorSpec {
        RegressorSpec {
            family: ModelFamily::Knn { k },
            seed,
        }
    }

    /// Default distance-based learner: k = 5.
    pub fn default_knn(seed: u64) -> RegressorSpec {
        RegressorSpec::knn(5, seed)
    }

    /// Default ensemble: 100 trees, depth 12, min leaf 2, all features,
    /// best-of-random splits.
    pub fn default_tree(seed: u64) -> RegressorSpec {
        RegressorSpec {
            family: ModelFamily::TreeEnsemble {
                n_trees: 100,
                max_depth: 12,
                min_leaf: 2,
                feature_subsample: 1.0,
                split_rule: SplitRule::BestOfRandom,
            },
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> RegressorSpec {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            ModelFamily::Knn { k } => {
                if k < 1 {
                    return Err(Error::InvalidSpec("knn k must be >= 1".into()));
                }
            }
            ModelFamily::TreeEnsemble {
                n_trees,
                max_depth,
                min_leaf,
                feature_subsample,
                ..
            } => {
                if n_trees < 1 || max_depth < 1 || min_leaf < 1 {
                    return Err(Error::InvalidSpec(
                        "n_trees, max_depth, min_leaf must be >= 1".into(),
                    ));
                }
                if !(feature_subsample > 0.0 && feature_subsample <= 1.0) {
                    return Err(Error::InvalidSpec(
                        "feature_subsample must lie in (0, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn family_label(&self) -> String {
        match self.family {
            ModelFamily::Knn { k } => format!("knn(k={k})"),
            ModelFamily::TreeEnsemble {
                n_trees,
                max_depth,
                min_leaf,
                ..
            } => format!("tree({n_trees},{max_depth},{min_leaf})"),
        }
    }
}

/// Nonnegative per-row training weights; at least one must be positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeightVector(Vec<f64>);

impl SampleWeightVector {
    pub fn new(weights: Vec<f64>) -> Result<SampleWeightVector> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(Error::InvalidWeights("all weights are zero".into()));
        }
        Ok(SampleWeightVector(weights))
    }

    pub fn uniform(n: usize) -> SampleWeightVector {
        SampleWeightVector(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    fn is_uniform(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatureScaler {
    mean: f64,
    sd: f64,
    constant: bool,
}

impl FeatureScaler {
    fn fit(values: &[f64]) -> FeatureScaler {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd > 0.0 {
            FeatureScaler {
                mean,
                sd,
                constant: false,
            }
        } else {
            FeatureScaler {
                mean: 0.0,
                sd: 1.0,
                constant: true,
            }
        }
    }

    fn apply(&self, v: f64) -> f64 {
        if self.constant {
            v
        } else {
            (v - self.mean) / self.sd
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { value } => *value,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] < *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum FittedState {
    Knn {
        points: Vec<Vec<f64>>,
        targets: Vec<f64>,
    },
    Forest {
        trees: Vec<TreeNode>,
    },
}

/// A fitted regressor. Immutable after training; concurrent prediction is
/// safe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    schema_version: u32,
    pub spec: RegressorSpec,
    feature_names: Vec<String>,
    scalers: Vec<FeatureScaler>,
    state: FittedState,
}

/// Fit a regressor on a supervised frame. Deterministic given
/// (spec, data, weights). Omitted or uniform weights train on the rows as-is;
/// non-uniform weights resample the rows (with replacement, seeded) back to
/// the original count before fitting.
pub fn train(
    spec: &RegressorSpec,
    data: &KpiFrame,
    weights: Option<&SampleWeightVector>,
) -> Result<TrainedModel> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if let Some(w) = weights {
        if w.len() != data.len() {
            return Err(Error::WeightLength {
                got: w.len(),
                expected: data.len(),
            });
        }
    }

    let n = data.len();
    let row_order: Vec<usize> = match weights {
        Some(w) if !w.is_uniform() => {
            let mut rng = seeding::rng(spec.seed, "weight-resample");
            weighted_sample_with_replacement(w.as_slice(), n, &mut rng)
        }
        _ => (0..n).collect(),
    };

    let feature_names: Vec<String> = data.feature_names().to_vec();
    let n_features = feature_names.len();
    let targets_all = data.targets()?;

    // standardization statistics over the (possibly resampled) training rows
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); n_features];
    let mut targets: Vec<f64> = Vec::with_capacity(n);
    for &i in &row_order {
        let row = &data.rows()[i];
        for (j, v) in row.features.iter().enumerate() {
            columns[j].push(*v);
        }
        targets.push(targets_all[i]);
    }
    let scalers: Vec<FeatureScaler> = columns.iter().map(|c| FeatureScaler::fit(c)).collect();
    let points: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n_features)
                .map(|j| scalers[j].apply(columns[j][i]))
                .collect()
        })
        .collect();

    let state = match spec.family {
        ModelFamily::Knn { k } => {
            if k > n {
                return Err(Error::KnnTooFewRows { k, n });
            }
            FittedState::Knn { points, targets }
        }
        ModelFamily::TreeEnsemble {
            n_trees,
            max_depth,
            min_leaf,
            feature_subsample,
            split_rule,
        } => {
            let trees = (0..n_trees)
                .map(|t| {
                    let mut rng = seeding::rng_idx(spec.seed, "tree", t as u64);
                    let idx: Vec<usize> = (0..n).collect();
                    build_tree(
                        &points,
                        &targets,
                        &idx,
                        0,
                        max_depth,
                        min_leaf,
                        feature_subsample,
                        split_rule,
                        &mut rng,
                    )
                })
                .collect();
            FittedState::Forest { trees }
        }
    };

    Ok(TrainedModel {
        schema_version: MODEL_BLOB_VERSION,
        spec: *spec,
        feature_names,
        scalers,
        state,
    })
}

fn weighted_sample_with_replacement(
    weights: &[f64],
    n_draws: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut total = 0.0;
    for w in weights {
        total += w;
        cumulative.push(total);
    }
    (0..n_draws)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..total);
            cumulative.partition_point(|c| *c <= u).min(weights.len() - 1)
        })
        .collect()
}

fn mean_of(targets: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| targets[i]).sum::<f64>() / idx.len() as f64
}

fn sse_of(targets: &[f64], idx: &[usize]) -> f64 {
    let m = mean_of(targets, idx);
    idx.iter().map(|&i| (targets[i] - m) * (targets[i] - m)).sum()
}

#[allow(clippy::too_many_arguments)]
fn build_tree(
    points: &[Vec<f64>],
    targets: &[f64],
    idx: &[usize],
    depth: usize,
    max_depth: usize,
    min_leaf: usize,
    feature_subsample: f64,
    split_rule: SplitRule,
    rng: &mut impl Rng,
) -> TreeNode {
    let leaf = |targets: &[f64], idx: &[usize]| TreeNode::Leaf {
        value: mean_of(targets, idx),
    };
    if depth >= max_depth || idx.len() < 2 * min_leaf {
        return leaf(targets, idx);
    }
    let first_t = targets[idx[0]];
    if idx.iter().all(|&i| targets[i] == first_t) {
        return leaf(targets, idx);
    }

    // candidate features: non-constant within this node
    let n_features = points[0].len();
    let mut candidates: Vec<(usize, f64, f64)> = Vec::new(); // (feature, min, max)
    #[allow(clippy::needless_range_loop)]
    for f in 0..n_features {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in idx {
            let v = points[i][f];
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        if hi > lo {
            candidates.push((f, lo, hi));
        }
    }
    if candidates.is_empty() {
        return leaf(targets, idx);
    }
    // random subset of size ceil(subsample * total features)
    let k = ((feature_subsample * n_features as f64).ceil() as usize)
        .clamp(1, candidates.len());
    // partial Fisher-Yates for the first k positions
    for i in 0..k.min(candidates.len() - 1) {
        let j = rng.gen_range(i..candidates.len());
        candidates.swap(i, j);
    }
    candidates.truncate(k);

    // (feature, threshold, score, left, right)
    type Candidate = (usize, f64, f64, Vec<usize>, Vec<usize>);
    let mut best: Option<Candidate> = None;
    for &(f, lo, hi) in &candidates {
        let threshold = rng.gen_range(lo..hi);
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for &i in idx {
            if points[i][f] < threshold {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        if left.len() < min_leaf || right.len() < min_leaf {
            continue;
        }
        match split_rule {
            SplitRule::RandomThreshold => {
                best = Some((f, threshold, 0.0, left, right));
                break;
            }
            SplitRule::BestOfRandom => {
                let score = sse_of(targets, &left) + sse_of(targets, &right);
                if best.as_ref().is_none_or(|b| score < b.2) {
                    best = Some((f, threshold, score, left, right));
                }
            }
        }
    }
    match best {
        None => leaf(targets, idx),
        Some((feature, threshold, _, left, right)) => TreeNode::Split {
            feature,
            threshold,
            left: Box::new(build_tree(
                points,
                targets,
                &left,
                depth + 1,
                max_depth,
                min_leaf,
                feature_subsample,
                split_rule,
                rng,
            )),
            right: Box::new(build_tree(
                points,
                targets,
                &right,
                depth + 1,
                max_depth,
                min_leaf,
                feature_subsample,
                split_rule,
                rng,
            )),
        },
    }
}

impl TrainedModel {
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// One finite prediction per row, in row order. The frame must carry
    /// every feature the model was trained on (by name; extra columns and
    /// different ordering are fine).
    pub fn predict(&self, rows: &KpiFrame) -> Result<Vec<f64>> {
        let mapping: Vec<Option<usize>> = self
            .feature_names
            .iter()
            .map(|n| rows.feature_index(n))
            .collect();
        let missing: Vec<String> = self
            .feature_names
            .iter()
            .zip(&mapping)
            .filter(|(_, m)| m.is_none())
            .map(|(n, _)| n.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::SchemaMismatch(missing));
        }
        let mapping: Vec<usize> = mapping.into_iter().map(Option::unwrap).collect();

        let mut out = Vec::with_capacity(rows.len());
        let mut x = vec![0.0; self.feature_names.len()];
        for row in rows.rows() {
            for (j, &src) in mapping.iter().enumerate() {
                x[j] = self.scalers[j].apply(row.features[src]);
            }
            out.push(self.predict_point(&x));
        }
        Ok(out)
    }

    fn predict_point(&self, x: &[f64]) -> f64 {
        match &self.state {
            FittedState::Knn { points, targets } => {
                let k = match self.spec.family {
                    ModelFamily::Knn { k } => k,
                    _ => unreachable!("knn state with non-knn spec"),
                };
                // indices of the k smallest distances, ties resolved by index
                let mut dist: Vec<(f64, usize)> = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let d = p
                            .iter()
                            .zip(x)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>();
                        (d, i)
                    })
                    .collect();
                dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                dist[..k].iter().map(|&(_, i)| targets[i]).sum::<f64>() / k as f64
            }
            FittedState::Forest { trees } => {
                trees.iter().map(|t| t.predict(x)).sum::<f64>() / trees.len() as f64
            }
        }
    }

    /// Serialize to a versioned, self-describing json blob. Floats survive
    /// the round trip exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let file = std::fs::File::open(path)?;
        let model: TrainedModel = serde_json::from_reader(std::io::BufReader::new(file))?;
        if model.schema_version != MODEL_BLOB_VERSION {
            return Err(Error::BlobVersion(model.schema_version));
        }
        Ok(model)
    }
}
