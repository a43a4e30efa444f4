//! Local error explanation: permutation feature importance, correlation
//! grouping with representative features, and per-quantile-bin error
//! decompositions (profiles over one split, signed per-sample grids over
//! date x bin).

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Day, KpiFrame};
use crate::error::{Error, Result};
use crate::models::TrainedModel;
use crate::seeding;

/// Features ranked by the NRMSE increase their permutation causes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    /// Sorted by rank ascending (rank 1 = most important).
    pub entries: Vec<FeatureImportance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub importance: f64,
    pub rank: usize,
}

impl ImportanceTable {
    pub fn importance_of(&self, feature: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.feature == feature)
            .map(|e| e.importance)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["feature", "importance", "rank"])?;
        for e in &self.entries {
            w.write_record([e.feature.clone(), e.importance.to_string(), e.rank.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mutually correlated features represented by their highest-importance
/// member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub representative: String,
    pub members: Vec<String>,
    pub representative_importance: f64,
}

/// Quantile-binned error decomposition of one model along one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaProfile {
    pub feature: String,
    /// Strictly increasing after duplicate-quantile collapse; the effective
    /// bin count is `bin_edges.len() - 1` and may be below the requested one.
    pub bin_edges: Vec<f64>,
    /// Range-normalized RMSE per bin; empty bins are `None`.
    pub bin_errors: Vec<Option<f64>>,
    pub n_per_bin: Vec<usize>,
    /// Global target range over the evaluated split.
    pub normalization_range: f64,
}

impl LeaProfile {
    pub fn n_bins(&self) -> usize {
        self.bin_edges.len() - 1
    }

    /// Bin index for a feature value; out-of-range values clamp to the first
    /// or last bin so membership depends only on the value.
    pub fn bin_of(&self, value: f64) -> usize {
        bin_of(&self.bin_edges, value)
    }

    /// Sum of defined bin errors.
    pub fn total_error_mass(&self) -> f64 {
        self.bin_errors.iter().flatten().sum()
    }
}

/// Signed per-sample normalized error over (date, quantile bin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeagramGrid {
    pub feature: String,
    pub dates: Vec<Day>,
    pub bin_edges: Vec<f64>,
    pub n_bins: usize,
    /// Defined cells only: a cell exists iff a sample maps there that day.
    pub cells: BTreeMap<(Day, usize), f64>,
    pub normalization_range: f64,
}

fn bin_of(edges: &[f64], value: f64) -> usize {
    let n_bins = edges.len() - 1;
    let idx = edges.partition_point(|e| *e <= value);
    idx.saturating_sub(1).min(n_bins - 1)
}

/// Quantile edges (linear interpolation) with exact duplicates collapsed.
fn quantile_edges(values: &[f64], n_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let mut edges: Vec<f64> = (0..=n_bins)
        .map(|i| {
            let q = i as f64 / n_bins as f64;
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            if lo == hi {
                sorted[lo]
            } else {
                let frac = pos - lo as f64;
                sorted[lo] * (1.0 - frac) + sorted[hi] * frac
            }
        })
        .collect();
    edges.dedup();
    edges
}

fn pooled_nrmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    crate::metrics::nrmse_on_date(truth, pred)
}

/// Permutation importance: mean over `repeats` of the pooled-NRMSE increase
/// when one feature column is shuffled within the evaluation set. Ranks are
/// descending by importance with ties broken by feature name.
pub fn permutation_importance(
    model: &TrainedModel,
    eval: &KpiFrame,
    repeats: usize,
    seed: u64,
) -> Result<ImportanceTable> {
    if eval.is_empty() {
        return Err(Error::NoEvaluableDates);
    }
    if repeats < 1 {
        return Err(Error::InvalidSpec("repeats must be >= 1".into()));
    }
    let truth = eval.targets()?;
    let baseline = pooled_nrmse(&truth, &model.predict(eval)?)?;

    let mut entries = Vec::with_capacity(eval.feature_names().len());
    for (f_idx, feature) in eval.feature_names().iter().enumerate() {
        let mut deltas = Vec::with_capacity(repeats);
        for rep in 0..repeats {
            let mut rng = seeding::rng_idx(
                seed,
                &format!("permute-{feature}"),
                rep as u64,
            );
            let mut column: Vec<f64> =
                eval.rows().iter().map(|r| r.features[f_idx]).collect();
            // Fisher-Yates
            for i in (1..column.len()).rev() {
                let j = rng.gen_range(0..=i);
                column.swap(i, j);
            }
            let rows = eval
                .rows()
                .iter()
                .zip(&column)
                .map(|(r, &v)| {
                    let mut row = r.clone();
                    row.features[f_idx] = v;
                    row
                })
                .collect();
            let shuffled = KpiFrame::from_rows(
                eval.feature_names().to_vec(),
                eval.target_name().to_string(),
                eval.horizon_days(),
                rows,
            );
            let nrmse = pooled_nrmse(&truth, &model.predict(&shuffled)?)?;
            deltas.push(nrmse - baseline);
        }
        let importance = deltas.iter().sum::<f64>() / repeats as f64;
        entries.push(FeatureImportance {
            feature: feature.clone(),
            importance,
            rank: 0,
        });
    }
    entries.sort_by(|a, b| {
        b.importance
            .total_cmp(&a.importance)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(ImportanceTable { entries })
}

/// Average ranks with ties sharing their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> f64 {
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Group features by rank correlation: walk features by descending
/// importance; each still-ungrouped feature with positive importance seeds a
/// group of every ungrouped feature within `tau` absolute rank correlation.
/// Grouping stops at features without positive importance.
pub fn group_features(
    imp: &ImportanceTable,
    data: &KpiFrame,
    tau: f64,
) -> Result<Vec<FeatureGroup>> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::BadTau(tau));
    }
    let columns: BTreeMap<&str, Vec<f64>> = imp
        .entries
        .iter()
        .map(|e| Ok((e.feature.as_str(), data.feature_column(&e.feature)?)))
        .collect::<Result<_>>()?;

    let mut grouped: Vec<&str> = Vec::new();
    let mut groups = Vec::new();
    for seed_entry in &imp.entries {
        if grouped.iter().any(|g| *g == seed_entry.feature) {
            continue;
        }
        if seed_entry.importance <= 0.0 {
            break;
        }
        let seed_col = &columns[seed_entry.feature.as_str()];
        let mut members = vec![seed_entry.feature.clone()];
        grouped.push(&seed_entry.feature);
        for other in &imp.entries {
            if grouped.iter().any(|g| *g == other.feature) {
                continue;
            }
            let rho = rank_correlation(seed_col, &columns[other.feature.as_str()]);
            if rho.abs() >= tau {
                members.push(other.feature.clone());
                grouped.push(&other.feature);
            }
        }
        groups.push(FeatureGroup {
            representative: seed_entry.feature.clone(),
            members,
            representative_importance: seed_entry.importance,
        });
    }
    Ok(groups)
}

/// Quantile-binned error profile of the model along one feature over an
/// evaluation split. Edges come from the split itself unless precomputed
/// edges are supplied (so compared splits can share an axis); per-bin error
/// is the members' RMSE divided by the split's global target range.
pub fn lea_profile(
    model: &TrainedModel,
    eval: &KpiFrame,
    feature: &str,
    n_bins: usize,
    edges: Option<&[f64]>,
) -> Result<LeaProfile> {
    if n_bins < 2 {
        return Err(Error::BadBinCount(n_bins));
    }
    if eval.is_empty() {
        return Err(Error::NoEvaluableDates);
    }
    let values = eval.feature_column(feature)?;
    let bin_edges: Vec<f64> = match edges {
        Some(e) => e.to_vec(),
        None => quantile_edges(&values, n_bins),
    };
    if bin_edges.len() < 2 {
        return Err(Error::ConstantFeature(feature.to_string()));
    }
    let truth = eval.targets()?;
    let preds = model.predict(eval)?;
    let (min_t, max_t) = truth
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = max_t - min_t;
    if range <= 0.0 {
        return Err(Error::DegenerateRange);
    }

    let n_effective = bin_edges.len() - 1;
    let mut sq_sum = vec![0.0; n_effective];
    let mut n_per_bin = vec![0usize; n_effective];
    for ((v, t), p) in values.iter().zip(&truth).zip(&preds) {
        let b = bin_of(&bin_edges, *v);
        let e = t - p;
        sq_sum[b] += e * e;
        n_per_bin[b] += 1;
    }
    let bin_errors = sq_sum
        .iter()
        .zip(&n_per_bin)
        .map(|(&s, &n)| {
            if n == 0 {
                None
            } else {
                Some((s / n as f64).sqrt() / range)
            }
        })
        .collect();
    Ok(LeaProfile {
        feature: feature.to_string(),
        bin_edges,
        bin_errors,
        n_per_bin,
        normalization_range: range,
    })
}

/// Profiles of several splits along one feature, all sharing quantile edges
/// computed over the union of the splits.
pub fn lea_profiles_shared_edges(
    model: &TrainedModel,
    splits: &[(String, &KpiFrame)],
    feature: &str,
    n_bins: usize,
) -> Result<Vec<(String, LeaProfile)>> {
    if splits.is_empty() {
        return Err(Error::NoEvaluableDates);
    }
    let mut union_values = Vec::new();
    for (_, frame) in splits {
        union_values.extend(frame.feature_column(feature)?);
    }
    let edges = quantile_edges(&union_values, n_bins);
    if edges.len() < 2 {
        return Err(Error::ConstantFeature(feature.to_string()));
    }
    splits
        .iter()
        .map(|(label, frame)| {
            Ok((
                label.clone(),
                lea_profile(model, frame, feature, n_bins, Some(&edges))?,
            ))
        })
        .collect()
}

/// Signed normalized-error grid over (date, bin) with enough bins that a
/// cell holds a single sample: the bin count is the smallest power of two at
/// or above the largest daily sample count. Cells that do receive several
/// samples (duplicate feature values) average their normalized errors.
pub fn leagram(model: &TrainedModel, eval: &KpiFrame, feature: &str) -> Result<LeagramGrid> {
    if eval.is_empty() {
        return Err(Error::NoEvaluableDates);
    }
    let by_date = eval.rows_by_target_date();
    let max_daily = by_date.values().map(Vec::len).max().unwrap_or(0);
    let n_bins = max_daily.next_power_of_two().max(2);

    let values = eval.feature_column(feature)?;
    let edges = quantile_edges(&values, n_bins);
    if edges.len() < 2 {
        return Err(Error::ConstantFeature(feature.to_string()));
    }
    let truth = eval.targets()?;
    let preds = model.predict(eval)?;
    let (min_t, max_t) = truth
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = max_t - min_t;
    if range <= 0.0 {
        return Err(Error::DegenerateRange);
    }

    let mut sums: BTreeMap<(Day, usize), (f64, usize)> = BTreeMap::new();
    for (date, idxs) in &by_date {
        for &i in idxs {
            let b = bin_of(&edges, values[i]);
            let ne = crate::metrics::normalized_error(truth[i], preds[i], range)?;
            let cell = sums.entry((*date, b)).or_insert((0.0, 0));
            cell.0 += ne;
            cell.1 += 1;
        }
    }
    let cells = sums
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect();
    Ok(LeagramGrid {
        feature: feature.to_string(),
        dates: by_date.keys().copied().collect(),
        bin_edges: edges,
        n_bins,
        cells,
        normalization_range: range,
    })
}

/// LEAplot csv rows: `bin_low,bin_high,split,nrmse,n`. Empty bins write an
/// empty nrmse field.
pub fn write_leaplot_csv(label: &str, profile: &LeaProfile, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_low", "bin_high", "split", "nrmse", "n"])?;
    for i in 0..profile.n_bins() {
        w.write_record([
            profile.bin_edges[i].to_string(),
            profile.bin_edges[i + 1].to_string(),
            label.to_string(),
            profile.bin_errors[i].map(|e| e.to_string()).unwrap_or_default(),
            profile.n_per_bin[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// LEAgram csv rows: `date,bin_low,bin_high,ne`, defined cells only.
pub fn write_leagram_csv(grid: &LeagramGrid, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "bin_low", "bin_high", "ne"])?;
    for ((date, bin), ne) in &grid.cells {
        let hi = (bin + 1).min(grid.bin_edges.len() - 1);
        w.write_record([
            date.to_string(),
            grid.bin_edges[*bin].to_string(),
            grid.bin_edges[hi].to_string(),
            ne.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn groups_to_json(groups: &[FeatureGroup]) -> Result<String> {
    Ok(serde_json::to_string_pretty(groups)?)
}
