//! Converts a binned error profile over the latest drifting samples into
//! forgetting and over-sampling decisions, reconstructs the training set, and
//! retrains; supports iterating over several feature groups.
//!
//! Branching on target dispersion: above the threshold the profile's errors
//! are sharpened into cubic over-sampling weights and old rows are forgotten
//! by seeded sampling proportional to their bin's error; below it,
//! over-sampling weights stay linear and forgetting removes exactly the rows
//! in bins whose error exceeds the configured percentile of bin errors.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{union_by_id, KpiFrame, RowId};
use crate::error::{Error, Result};
use crate::explainer::{lea_profile, FeatureGroup, LeaProfile};
use crate::metrics::{dispersion, DispersionStat};
use crate::models::{train, RegressorSpec, TrainedModel};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MitigationConfig {
    /// Coefficient-of-variation threshold selecting the branch.
    pub cov_threshold: f64,
    /// Low-dispersion branch forgets rows in bins above this percentile of
    /// defined bin errors.
    pub forget_percentile: f64,
    /// Over-sampling weight exponent in the high-dispersion branch.
    pub weight_power_high: u32,
    /// Over-sampling weight exponent in the low-dispersion branch.
    pub weight_power_low: u32,
    /// Feature groups to iterate over.
    pub n_groups: usize,
    /// Keep the training-set cardinality constant across rounds.
    pub keep_size: bool,
    /// Bin count for mitigation profiles.
    pub n_bins: usize,
    /// High-dispersion removal budget as a fraction of the training set.
    pub removal_budget_frac: f64,
    /// Rank-correlation threshold used when grouping features at a drift
    /// event.
    pub tau: f64,
    /// Permutation-importance repeats at a drift event.
    pub importance_repeats: usize,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        MitigationConfig {
            cov_threshold: 1.0,
            forget_percentile: 0.95,
            weight_power_high: 3,
            weight_power_low: 1,
            n_groups: 1,
            keep_size: true,
            n_bins: 10,
            removal_budget_frac: 0.25,
            tau: 0.7,
            importance_repeats: 5,
        }
    }
}

impl MitigationConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidMitigationConfig(m.into()));
        if !(self.forget_percentile > 0.0 && self.forget_percentile < 1.0) {
            return fail("forget_percentile must lie in (0, 1)");
        }
        if self.n_groups < 1 {
            return fail("n_groups must be >= 1");
        }
        if self.n_bins < 2 {
            return fail("n_bins must be >= 2");
        }
        if !(self.removal_budget_frac > 0.0 && self.removal_budget_frac <= 1.0) {
            return fail("removal_budget_frac must lie in (0, 1]");
        }
        if self.weight_power_high < 1 || self.weight_power_low < 1 {
            return fail("weight powers must be >= 1");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail("tau must lie in (0, 1]");
        }
        if self.importance_repeats < 1 {
            return fail("importance_repeats must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionBranch {
    HighDispersion,
    LowDispersion,
}

/// A row reference that pins both position and identity, so applying a plan
/// to the wrong frame is detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRow {
    pub index: usize,
    pub id: RowId,
}

/// One round of forgetting and over-sampling decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationPlan {
    pub branch: DispersionBranch,
    /// Representative feature the profile was computed on; absent for
    /// padding rounds beyond the available groups.
    pub feature: Option<String>,
    /// Normalized over-sampling distribution over profile bins.
    pub bin_weights: Vec<f64>,
    /// Normalized forgetting weights over profile bins (high branch only;
    /// kept in the audit so the removal policy can be compared offline).
    pub forget_bin_weights: Vec<f64>,
    /// Rows removed from the training set this round.
    pub forgotten: Vec<PlanRow>,
    /// Rows drawn (with replacement) from the candidate pool this round.
    pub draws: Vec<PlanRow>,
    pub removed_per_bin: Vec<usize>,
    pub draw_hist_per_bin: Vec<usize>,
    pub measured_cov: f64,
}

impl MitigationPlan {
    /// No rows move: either nothing exceeded the forgetting rule or the
    /// profile carried no error signal.
    pub fn is_empty(&self) -> bool {
        self.forgotten.is_empty() && self.draws.is_empty()
    }
}

fn branch_of(disp: &DispersionStat, cfg: &MitigationConfig) -> DispersionBranch {
    if disp.cov > cfg.cov_threshold {
        DispersionBranch::HighDispersion
    } else {
        DispersionBranch::LowDispersion
    }
}

/// Linear-interpolation percentile of an unsorted sample.
fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        let frac = pos - lo as f64;
        v[lo] * (1.0 - frac) + v[hi] * frac
    }
}

fn normalized_powers(profile: &LeaProfile, power: u32) -> Vec<f64> {
    let raw: Vec<f64> = profile
        .bin_errors
        .iter()
        .map(|e| e.map_or(0.0, |v| v.powi(power as i32)))
        .collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|w| w / total).collect()
    } else {
        raw
    }
}

/// The removal budget a single-group mitigation would use for this profile.
///
/// Low-dispersion branch: every row in a strictly-exceeding bin goes, and
/// the budget is floored at the configured removal fraction (met from the
/// worst occupied bins) so mitigation still refreshes the hot region when
/// drift pushed the latest feature range mostly outside the old one. A
/// profile with no strictly-exceeding bin (uniform errors) moves nothing.
fn single_group_budget(
    prev_bins: &[usize],
    profile: &LeaProfile,
    branch: DispersionBranch,
    cfg: &MitigationConfig,
) -> usize {
    let frac_budget = (cfg.removal_budget_frac * prev_bins.len() as f64).floor() as usize;
    match branch {
        DispersionBranch::HighDispersion => frac_budget,
        DispersionBranch::LowDispersion => {
            if exceeding_bins(profile, cfg.forget_percentile).is_empty() {
                0
            } else {
                eligible_rows(prev_bins, profile, cfg.forget_percentile)
                    .len()
                    .max(frac_budget)
            }
        }
    }
}

/// Bins whose error strictly exceeds the forgetting percentile of defined
/// bin errors.
fn exceeding_bins(profile: &LeaProfile, q: f64) -> Vec<usize> {
    let defined: Vec<f64> = profile.bin_errors.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Vec::new();
    }
    let threshold = percentile(&defined, q);
    (0..profile.n_bins())
        .filter(|&b| profile.bin_errors[b].is_some_and(|e| e > threshold))
        .collect()
}

/// Rows of the training set falling in strictly-exceeding bins.
fn eligible_rows(prev_bins: &[usize], profile: &LeaProfile, q: f64) -> Vec<usize> {
    let bins = exceeding_bins(profile, q);
    prev_bins
        .iter()
        .enumerate()
        .filter(|(_, b)| bins.contains(b))
        .map(|(i, _)| i)
        .collect()
}

fn weighted_pick(cumulative: &[f64], total: f64, rng: &mut ChaCha12Rng) -> usize {
    let u: f64 = rng.gen_range(0.0..total);
    cumulative
        .partition_point(|c| *c <= u)
        .min(cumulative.len() - 1)
}

/// Seeded sampling without replacement proportional to per-row weights,
/// never emptying a bin entirely.
fn weighted_removal(
    prev_bins: &[usize],
    row_weights: &[f64],
    budget: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<usize> {
    let n_bins = prev_bins.iter().max().map_or(0, |m| m + 1);
    let mut remaining = vec![0usize; n_bins];
    for &b in prev_bins {
        remaining[b] += 1;
    }
    let mut candidates: Vec<(usize, f64)> = row_weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(i, w)| (i, *w))
        .collect();
    let mut removed = Vec::new();
    while removed.len() < budget && !candidates.is_empty() {
        let mut cumulative = Vec::with_capacity(candidates.len());
        let mut total = 0.0;
        for (_, w) in &candidates {
            total += w;
            cumulative.push(total);
        }
        let k = weighted_pick(&cumulative, total, rng);
        let (idx, _) = candidates.remove(k);
        let bin = prev_bins[idx];
        if remaining[bin] > 1 {
            remaining[bin] -= 1;
            removed.push(idx);
        }
    }
    removed.sort_unstable();
    removed
}

/// Low-dispersion removal: the strictly-exceeding rows first (seeded order),
/// then rows from the highest-error defined bins until the budget is met.
/// The top-up keeps round volumes equal when a fixed budget is split across
/// feature groups.
fn percentile_removal(
    prev_bins: &[usize],
    profile: &LeaProfile,
    cfg: &MitigationConfig,
    budget: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<usize> {
    let mut eligible = eligible_rows(prev_bins, profile, cfg.forget_percentile);
    shuffle(&mut eligible, rng);
    let mut removed: Vec<usize> = eligible.iter().copied().take(budget).collect();
    if removed.len() < budget {
        let mut rest: Vec<usize> = (0..prev_bins.len())
            .filter(|i| !removed.contains(i))
            .filter(|&i| profile.bin_errors[prev_bins[i]].is_some())
            .collect();
        shuffle(&mut rest, rng);
        rest.sort_by(|&a, &b| {
            let ea = profile.bin_errors[prev_bins[a]].unwrap_or(0.0);
            let eb = profile.bin_errors[prev_bins[b]].unwrap_or(0.0);
            eb.total_cmp(&ea)
        });
        for i in rest {
            if removed.len() >= budget {
                break;
            }
            removed.push(i);
        }
    }
    removed.sort_unstable();
    removed
}

fn shuffle(v: &mut [usize], rng: &mut ChaCha12Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

/// Build one round's plan against an explicit removal budget. `latest_ids`
/// marks the drifting window inside the pool: draws prefer those rows within
/// a chosen bin and fall back to history rows when the bin holds none.
#[allow(clippy::too_many_arguments)]
fn plan_round(
    current: &KpiFrame,
    pool: &KpiFrame,
    latest_ids: &std::collections::HashSet<RowId>,
    profile: &LeaProfile,
    branch: DispersionBranch,
    cov: f64,
    cfg: &MitigationConfig,
    budget: usize,
    seed: u64,
) -> Result<MitigationPlan> {
    let feature_values = current.feature_column(&profile.feature)?;
    let prev_bins: Vec<usize> = feature_values.iter().map(|v| profile.bin_of(*v)).collect();
    let n_bins = profile.n_bins();

    let power = match branch {
        DispersionBranch::HighDispersion => cfg.weight_power_high,
        DispersionBranch::LowDispersion => cfg.weight_power_low,
    };
    let bin_weights = normalized_powers(profile, power);
    let forget_bin_weights = normalized_powers(profile, 1);

    let empty_plan = |feature: &str| MitigationPlan {
        branch,
        feature: Some(feature.to_string()),
        bin_weights: bin_weights.clone(),
        forget_bin_weights: forget_bin_weights.clone(),
        forgotten: Vec::new(),
        draws: Vec::new(),
        removed_per_bin: vec![0; n_bins],
        draw_hist_per_bin: vec![0; n_bins],
        measured_cov: cov,
    };

    // nothing to target
    if profile.total_error_mass() == 0.0 || budget == 0 {
        return Ok(empty_plan(&profile.feature));
    }

    let mut forget_rng = ChaCha12Rng::from_seed_u64(seeding::stream(seed, "forget"));
    let removed_idx = match branch {
        DispersionBranch::HighDispersion => {
            let row_weights: Vec<f64> = prev_bins
                .iter()
                .map(|&b| forget_bin_weights[b])
                .collect();
            weighted_removal(&prev_bins, &row_weights, budget, &mut forget_rng)
        }
        DispersionBranch::LowDispersion => {
            percentile_removal(&prev_bins, profile, cfg, budget, &mut forget_rng)
        }
    };
    if removed_idx.is_empty() {
        return Ok(empty_plan(&profile.feature));
    }

    // over-sampling: replace each removal with a draw from the pool, bin
    // chosen by the sampling distribution, uniform within the bin; the
    // latest drifting instances stand in for a bin whenever they reach it
    let pool_values = pool.feature_column(&profile.feature)?;
    let mut pool_by_bin: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (i, v) in pool_values.iter().enumerate() {
        if latest_ids.contains(&pool.rows()[i].id) {
            pool_by_bin[profile.bin_of(*v)].push(i);
        }
    }
    let latest_empty: Vec<bool> = pool_by_bin.iter().map(Vec::is_empty).collect();
    for (i, v) in pool_values.iter().enumerate() {
        let b = profile.bin_of(*v);
        if latest_empty[b] && !latest_ids.contains(&pool.rows()[i].id) {
            pool_by_bin[b].push(i);
        }
    }
    let usable: Vec<usize> = (0..n_bins)
        .filter(|&b| bin_weights[b] > 0.0 && !pool_by_bin[b].is_empty())
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut cumulative = Vec::with_capacity(usable.len());
    let mut total = 0.0;
    for &b in &usable {
        total += bin_weights[b];
        cumulative.push(total);
    }
    let mut draw_rng = ChaCha12Rng::from_seed_u64(seeding::stream(seed, "draw"));
    let mut draws = Vec::with_capacity(removed_idx.len());
    let mut draw_hist = vec![0usize; n_bins];
    for _ in 0..removed_idx.len() {
        let b = usable[weighted_pick(&cumulative, total, &mut draw_rng)];
        let member = pool_by_bin[b][draw_rng.gen_range(0..pool_by_bin[b].len())];
        draw_hist[b] += 1;
        draws.push(PlanRow {
            index: member,
            id: pool.rows()[member].id,
        });
    }

    let mut removed_per_bin = vec![0usize; n_bins];
    for &i in &removed_idx {
        removed_per_bin[prev_bins[i]] += 1;
    }
    Ok(MitigationPlan {
        branch,
        feature: Some(profile.feature.clone()),
        bin_weights,
        forget_bin_weights,
        forgotten: removed_idx
            .iter()
            .map(|&i| PlanRow {
                index: i,
                id: current.rows()[i].id,
            })
            .collect(),
        draws,
        removed_per_bin,
        draw_hist_per_bin: draw_hist,
        measured_cov: cov,
    })
}

trait SeedU64 {
    fn from_seed_u64(seed: u64) -> Self;
}

impl SeedU64 for ChaCha12Rng {
    fn from_seed_u64(seed: u64) -> Self {
        use rand_chacha::rand_core::SeedableRng;
        ChaCha12Rng::seed_from_u64(seed)
    }
}

/// Single-group plan: forgetting and over-sampling decisions for one profile
/// over the latest window, with the candidate pool being the training set
/// united with the latest samples.
pub fn build_plan(
    prev_train: &KpiFrame,
    latest: &KpiFrame,
    profile: &LeaProfile,
    disp: &DispersionStat,
    cfg: &MitigationConfig,
    seed: u64,
) -> Result<MitigationPlan> {
    cfg.validate()?;
    if prev_train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let branch = branch_of(disp, cfg);
    let feature_values = prev_train.feature_column(&profile.feature)?;
    let prev_bins: Vec<usize> = feature_values.iter().map(|v| profile.bin_of(*v)).collect();
    let budget = single_group_budget(&prev_bins, profile, branch, cfg);
    let pool = union_by_id(prev_train, latest);
    let latest_ids = latest.rows().iter().map(|r| r.id).collect();
    plan_round(
        prev_train,
        &pool,
        &latest_ids,
        profile,
        branch,
        disp.cov,
        cfg,
        budget,
        seed,
    )
}

/// Remove the forgotten rows and append the drawn rows (duplicates allowed:
/// that is the over-sampling). Row identities are validated against both
/// frames before anything moves.
pub fn apply_plan(prev_train: &KpiFrame, pool: &KpiFrame, plan: &MitigationPlan) -> Result<KpiFrame> {
    let check = |frame: &KpiFrame, r: &PlanRow| -> Result<()> {
        let row = frame
            .rows()
            .get(r.index)
            .ok_or(Error::PlanIndexOutOfRange(r.index))?;
        if row.id != r.id {
            return Err(Error::PlanIdMismatch {
                index: r.index,
                expected: r.id,
                found: row.id,
            });
        }
        Ok(())
    };
    for r in &plan.forgotten {
        check(prev_train, r)?;
    }
    for r in &plan.draws {
        check(pool, r)?;
    }
    let forgotten: std::collections::HashSet<usize> =
        plan.forgotten.iter().map(|r| r.index).collect();
    let mut rows: Vec<_> = prev_train
        .rows()
        .iter()
        .enumerate()
        .filter(|(i, _)| !forgotten.contains(i))
        .map(|(_, r)| r.clone())
        .collect();
    rows.extend(plan.draws.iter().map(|r| pool.rows()[r.index].clone()));
    Ok(KpiFrame::from_rows(
        prev_train.feature_names().to_vec(),
        prev_train.target_name().to_string(),
        prev_train.horizon_days(),
        rows,
    ))
}

/// Result of a full mitigation event.
#[derive(Debug, Clone)]
pub struct MitigationOutcome {
    pub train_set: KpiFrame,
    pub model: TrainedModel,
    pub audits: Vec<MitigationPlan>,
}

/// Iterate forgetting and over-sampling over the top `cfg.n_groups` feature
/// groups: each round recomputes the profile of that group's representative
/// feature over the latest window (against the drifted in-production model)
/// and rebuilds the training set; one retrain happens after the last round.
/// The total moved volume equals the single-group budget, split evenly across
/// the rounds that have a group; padding rounds beyond the available groups
/// are recorded as empty plans.
pub fn mitigate_multigroup(
    model: &TrainedModel,
    prev_train: &KpiFrame,
    latest: &KpiFrame,
    groups: &[FeatureGroup],
    model_spec: &RegressorSpec,
    cfg: &MitigationConfig,
    seed: u64,
) -> Result<MitigationOutcome> {
    cfg.validate()?;
    if prev_train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if groups.is_empty() {
        return Err(Error::NoPositiveGroups);
    }
    let disp = dispersion(&latest.targets()?)?;
    let branch = branch_of(&disp, cfg);

    // total volume fixed by the single-group rule on the first group's profile
    let first_profile = lea_profile(
        model,
        latest,
        &groups[0].representative,
        cfg.n_bins,
        None,
    )?;
    let prev_bins: Vec<usize> = prev_train
        .feature_column(&groups[0].representative)?
        .iter()
        .map(|v| first_profile.bin_of(*v))
        .collect();
    let total_budget = single_group_budget(&prev_bins, &first_profile, branch, cfg);

    let effective = cfg.n_groups.min(groups.len());
    let budgets: Vec<usize> = (0..effective)
        .map(|g| total_budget / effective + usize::from(g < total_budget % effective))
        .collect();

    let mut current = prev_train.clone();
    let mut audits = Vec::with_capacity(cfg.n_groups);
    for g in 0..cfg.n_groups {
        if g >= effective {
            audits.push(MitigationPlan {
                branch,
                feature: None,
                bin_weights: Vec::new(),
                forget_bin_weights: Vec::new(),
                forgotten: Vec::new(),
                draws: Vec::new(),
                removed_per_bin: Vec::new(),
                draw_hist_per_bin: Vec::new(),
                measured_cov: disp.cov,
            });
            continue;
        }
        let profile = if g == 0 {
            first_profile.clone()
        } else {
            lea_profile(model, latest, &groups[g].representative, cfg.n_bins, None)?
        };
        let pool = union_by_id(&current, latest);
        let latest_ids = latest.rows().iter().map(|r| r.id).collect();
        let plan = plan_round(
            &current,
            &pool,
            &latest_ids,
            &profile,
            branch,
            disp.cov,
            cfg,
            budgets[g],
            seeding::stream_idx(seed, "round", g as u64),
        )?;
        current = apply_plan(&current, &pool, &plan)?;
        audits.push(plan);
    }
    let final_model = train(model_spec, &current, None)?;
    Ok(MitigationOutcome {
        train_set: current,
        model: final_model,
        audits,
    })
}

pub fn audits_to_json(audits: &[MitigationPlan]) -> Result<String> {
    Ok(serde_json::to_string_pretty(audits)?)
}
