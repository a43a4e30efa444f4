//! Timeline experiments comparing mitigation schemes (static, periodic-N,
//! triggered, leaf-k) over one dataset: chronological simulation with no
//! lookahead, retrain accounting, and comparison tables.
//!
//! Horizon handling: a retrain decided after evaluating date `d` uses
//! supervised rows whose target dates lie in `(d - window, d]`, i.e. feature
//! dates shifted back by the horizon. Every target a model trains on is
//! observed strictly before the first date that model serves; the retrain log
//! records both sides so the causality audit can verify it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{add_temporal_features, has_temporal_features, Day, KpiFrame};
use crate::detector::{DriftEvent, Kswin, KswinConfig};
use crate::error::{Error, Result};
use crate::explainer::{group_features, permutation_importance};
use crate::metrics::{delta_mean_nrmse, nrmse_on_date, ErrorEntry, ErrorSeries};
use crate::mitigator::{mitigate_multigroup, MitigationConfig, MitigationPlan};
use crate::models::{train, RegressorSpec, TrainedModel};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeKind {
    /// Never retrain.
    Static,
    /// Replace the model every `period_days` evaluated calendar days.
    Periodic { period_days: u32 },
    /// Retrain on the latest window whenever the detector fires.
    Triggered,
    /// Detect, explain, and retrain on a restructured training set.
    Leaf { n_groups: usize },
}

impl SchemeKind {
    /// Parse a scheme token: `static`, `periodic:30`, `triggered`, `leaf:1`.
    pub fn parse(token: &str) -> Result<SchemeKind> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        match token.split_once(':') {
            None => match token {
                "static" => Ok(SchemeKind::Static),
                "triggered" => Ok(SchemeKind::Triggered),
                other => bad(format!(
                    "unknown scheme {other:?}; expected static, periodic:N, triggered, leaf:K"
                )),
            },
            Some(("periodic", n)) => {
                let period_days: u32 = n
                    .parse()
                    .ok()
                    .filter(|p| *p >= 1)
                    .ok_or_else(|| Error::InvalidScenario(format!("bad period {n:?}")))?;
                Ok(SchemeKind::Periodic { period_days })
            }
            Some(("leaf", n)) => {
                let n_groups: usize = n
                    .parse()
                    .ok()
                    .filter(|g| *g >= 1)
                    .ok_or_else(|| Error::InvalidScenario(format!("bad group count {n:?}")))?;
                Ok(SchemeKind::Leaf { n_groups })
            }
            Some((other, _)) => bad(format!("unknown scheme {other:?}")),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SchemeKind::Static => "static".into(),
            SchemeKind::Periodic { period_days } => format!("periodic-{period_days}"),
            SchemeKind::Triggered => "triggered".into(),
            SchemeKind::Leaf { n_groups } => format!("leaf-{n_groups}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    pub kind: SchemeKind,
    pub train_window_days: u32,
    pub horizon_days: u32,
    /// Refractory period after a detector-driven retrain; 0 imposes none.
    #[serde(default)]
    pub min_event_gap_days: u32,
}

impl Scheme {
    pub fn new(kind: SchemeKind, horizon_days: u32) -> Scheme {
        Scheme {
            kind,
            train_window_days: 14,
            horizon_days,
            min_event_gap_days: 0,
        }
    }
}

/// One model fit: when it was decided, the newest target it saw, and the
/// first date it served.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrainRecord {
    pub trained_at: Day,
    pub max_target_date: Day,
    pub first_served: Option<Day>,
    pub n_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationEventAudit {
    pub at: Day,
    pub rounds: Vec<MitigationPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: Scheme,
    pub label: String,
    /// Identity of the shared static baseline; reports can only be compared
    /// when these match.
    pub baseline_key: String,
    pub trace: ErrorSeries,
    pub mean_nrmse: f64,
    pub static_mean_nrmse: f64,
    pub delta_vs_static: f64,
    pub n_retrains: usize,
    pub drift_events: Vec<DriftEvent>,
    pub audits: Vec<MitigationEventAudit>,
    pub retrain_log: Vec<RetrainRecord>,
}

impl SchemeReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<SchemeReport> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// Shared preamble of a scheme run: the supervised universe, the initial
/// (static) training window, and the evaluation span.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub supervised: KpiFrame,
    pub init_train: KpiFrame,
    pub eval: KpiFrame,
    pub first_feature_date: Day,
}

/// Re-target, derive temporal features, pair across the horizon, and split
/// off the initial training window.
pub fn prepare(data: &KpiFrame, target: &str, scheme: &Scheme) -> Result<PreparedRun> {
    let data = data.with_target(target)?;
    let data = if has_temporal_features(&data) {
        data
    } else {
        add_temporal_features(&data)?
    };
    let sup = crate::dataset::make_supervised(&data, scheme.horizon_days)?;

    let w = i64::from(scheme.train_window_days);
    let h = i64::from(scheme.horizon_days);
    let first = data.min_feature_date().expect("nonempty frame");
    let last_target = sup.max_target_date().expect("nonempty supervised frame");
    let init_target_end = first.offset(h + w - 1);
    if init_target_end >= last_target {
        return Err(Error::InsufficientSpan(format!(
            "span must exceed train_window ({w}) + horizon ({h}); last target {last_target}, initial window ends {init_target_end}"
        )));
    }
    let init_train = sup.filter_target_dates(first.offset(h), init_target_end);
    if init_train.is_empty() {
        return Err(Error::InsufficientSpan(
            "initial train window selects no rows".into(),
        ));
    }
    let eval = sup.filter_target_dates(init_target_end.offset(1), last_target);
    if eval.is_empty() {
        return Err(Error::InsufficientSpan("no evaluation dates".into()));
    }
    Ok(PreparedRun {
        supervised: sup,
        init_train,
        eval,
        first_feature_date: first,
    })
}

/// The never-retrained baseline model every scheme run shares.
pub fn initial_model(
    prepared: &PreparedRun,
    model_spec: &RegressorSpec,
    master_seed: u64,
) -> Result<TrainedModel> {
    let init_spec = model_spec.with_seed(seeding::stream(master_seed, "init-train"));
    train(&init_spec, &prepared.init_train, None)
}

/// Run one scheme chronologically over a raw dataset. The static baseline
/// (initial model, never replaced) is simulated inside every run from a
/// scheme-independent seed stream, so reports sharing (data, model, seed) are
/// comparable like for like.
pub fn run_scheme(
    data: &KpiFrame,
    target: &str,
    scheme: &Scheme,
    model_spec: &RegressorSpec,
    detector_cfg: &KswinConfig,
    mitigation_cfg: &MitigationConfig,
    master_seed: u64,
) -> Result<SchemeReport> {
    let prepared = prepare(data, target, scheme)?;
    let static_model = initial_model(&prepared, model_spec, master_seed)?;
    let PreparedRun {
        supervised: sup,
        init_train,
        eval,
        first_feature_date: first,
    } = prepared;
    let w = i64::from(scheme.train_window_days);
    let h = i64::from(scheme.horizon_days);
    let last_target = sup.max_target_date().expect("nonempty supervised frame");
    let init_target_end = first.offset(h + w - 1);
    let eval_truth = eval.targets()?;
    let by_date = eval.rows_by_target_date();
    let eval_start = *by_date.keys().next().expect("nonempty eval");

    // shared static baseline trace
    let static_preds = static_model.predict(&eval)?;
    let mut static_entries = Vec::new();
    for (date, idxs) in &by_date {
        if idxs.len() < 2 {
            continue;
        }
        let t: Vec<f64> = idxs.iter().map(|&i| eval_truth[i]).collect();
        let p: Vec<f64> = idxs.iter().map(|&i| static_preds[i]).collect();
        if let Ok(nrmse) = nrmse_on_date(&t, &p) {
            static_entries.push(ErrorEntry {
                date: *date,
                nrmse,
                n_samples: idxs.len(),
            });
        }
    }
    let static_trace = ErrorSeries::new(static_entries);

    let label = scheme.kind.label();
    let mut detector = match scheme.kind {
        SchemeKind::Triggered | SchemeKind::Leaf { .. } => Some(Kswin::new(KswinConfig {
            seed: seeding::stream(master_seed, &format!("{label}/detector")),
            ..*detector_cfg
        })?),
        _ => None,
    };

    let mut active_model = static_model;
    let mut current_train = init_train;
    let mut retrain_log = vec![RetrainRecord {
        trained_at: init_target_end,
        max_target_date: current_train.max_target_date().expect("nonempty"),
        first_served: None,
        n_rows: current_train.len(),
    }];
    let mut drift_events = Vec::new();
    let mut audits = Vec::new();
    let mut entries = Vec::new();
    let mut skipped_degenerate = 0usize;
    let mut skipped_small = 0usize;
    let mut retrain_count = 0u64;
    let mut last_event_retrain: Option<Day> = None;

    for (&date, idxs) in &by_date {
        // evaluate today with the active model
        let day_frame = eval.filter_target_dates(date, date);
        let nrmse_today = if idxs.len() < 2 {
            skipped_small += 1;
            None
        } else {
            let preds = active_model.predict(&day_frame)?;
            let t: Vec<f64> = idxs.iter().map(|&i| eval_truth[i]).collect();
            match nrmse_on_date(&t, &preds) {
                Ok(v) => Some(v),
                Err(Error::DegenerateRange) => {
                    skipped_degenerate += 1;
                    None
                }
                Err(e) => return Err(e),
            }
        };
        if let Some(nrmse) = nrmse_today {
            entries.push(ErrorEntry {
                date,
                nrmse,
                n_samples: idxs.len(),
            });
        }
        if let Some(rec) = retrain_log.last_mut() {
            if rec.first_served.is_none() {
                rec.first_served = Some(date);
            }
        }

        // scheme-specific model replacement, serving from the next date on
        match scheme.kind {
            SchemeKind::Static => {}
            SchemeKind::Periodic { period_days } => {
                let offset = date.0 - eval_start.0 + 1;
                if offset % i64::from(period_days) == 0 {
                    let window = sup.filter_target_dates(date.offset(1 - w), date);
                    if !window.is_empty() {
                        retrain_count += 1;
                        let spec = model_spec.with_seed(seeding::stream_idx(
                            master_seed,
                            &format!("{label}/retrain"),
                            retrain_count,
                        ));
                        active_model = train(&spec, &window, None)?;
                        retrain_log.push(RetrainRecord {
                            trained_at: date,
                            max_target_date: window.max_target_date().expect("nonempty"),
                            first_served: None,
                            n_rows: window.len(),
                        });
                        current_train = window;
                    }
                }
            }
            SchemeKind::Triggered | SchemeKind::Leaf { .. } => {
                let Some(nrmse) = nrmse_today else { continue };
                let detector = detector.as_mut().expect("detector configured");
                let Some(event) = detector.feed(date, nrmse)? else {
                    continue;
                };
                drift_events.push(event);
                let gap_ok = last_event_retrain
                    .is_none_or(|d| date.0 - d.0 >= i64::from(scheme.min_event_gap_days));
                if !gap_ok {
                    continue;
                }
                let latest = sup.filter_target_dates(date.offset(1 - w), date);
                if latest.is_empty() {
                    continue;
                }
                retrain_count += 1;
                let spec = model_spec.with_seed(seeding::stream_idx(
                    master_seed,
                    &format!("{label}/retrain"),
                    retrain_count,
                ));
                match scheme.kind {
                    SchemeKind::Triggered => {
                        active_model = train(&spec, &latest, None)?;
                        current_train = latest;
                    }
                    SchemeKind::Leaf { n_groups } => {
                        let imp = permutation_importance(
                            &active_model,
                            &latest,
                            mitigation_cfg.importance_repeats,
                            seeding::stream_idx(
                                master_seed,
                                &format!("{label}/importance"),
                                retrain_count,
                            ),
                        )?;
                        let groups = group_features(&imp, &latest, mitigation_cfg.tau)?;
                        if groups.is_empty() {
                            log::warn!(
                                "{label}: drift at {date} but no positive-importance group; skipping mitigation"
                            );
                            retrain_count -= 1;
                            continue;
                        }
                        let cfg = MitigationConfig {
                            n_groups,
                            ..*mitigation_cfg
                        };
                        let outcome = mitigate_multigroup(
                            &active_model,
                            &current_train,
                            &latest,
                            &groups,
                            &spec,
                            &cfg,
                            seeding::stream_idx(
                                master_seed,
                                &format!("{label}/mitigate"),
                                retrain_count,
                            ),
                        )?;
                        audits.push(MitigationEventAudit {
                            at: date,
                            rounds: outcome.audits,
                        });
                        active_model = outcome.model;
                        current_train = outcome.train_set;
                    }
                    _ => unreachable!(),
                }
                retrain_log.push(RetrainRecord {
                    trained_at: date,
                    max_target_date: current_train.max_target_date().expect("nonempty"),
                    first_served: None,
                    n_rows: current_train.len(),
                });
                last_event_retrain = Some(date);
            }
        }
    }

    let trace = ErrorSeries {
        entries,
        skipped_degenerate,
        skipped_small,
    };
    let mean_nrmse = trace.mean().ok_or(Error::NoEvaluableDates)?;
    let static_mean_nrmse = static_trace.mean().ok_or(Error::NoEvaluableDates)?;
    // a perfect baseline can only be tied, never divided by
    let delta_vs_static = if static_mean_nrmse == 0.0 && mean_nrmse == 0.0 {
        0.0
    } else {
        delta_mean_nrmse(&trace, &static_trace)?
    };

    let baseline_key = format!(
        "target={target};window={};horizon={};model={};seed={master_seed};sup_rows={};span={}..{}",
        scheme.train_window_days,
        scheme.horizon_days,
        model_spec.family_label(),
        sup.len(),
        first,
        last_target,
    );
    Ok(SchemeReport {
        scheme: *scheme,
        label,
        baseline_key,
        trace,
        mean_nrmse,
        static_mean_nrmse,
        delta_vs_static,
        n_retrains: retrain_log.len() - 1,
        drift_events,
        audits,
        retrain_log,
    })
}

/// Every model must have trained only on targets observed strictly before
/// the first date it served.
pub fn causality_audit(report: &SchemeReport) -> Result<()> {
    for rec in &report.retrain_log {
        if let Some(first) = rec.first_served {
            if rec.max_target_date >= first {
                return Err(Error::CausalityViolation {
                    trained_at: rec.trained_at.to_string(),
                    max_target_date: rec.max_target_date.to_string(),
                    first_served: first.to_string(),
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scheme: String,
    pub delta_nrmse: f64,
    pub n_retrains: usize,
    pub best_delta: bool,
    pub best_retrains: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// Tabulate reports that share a static baseline; the best entry per column
/// is flagged.
pub fn compare(reports: &[SchemeReport]) -> Result<ComparisonTable> {
    let first_key = match reports.first() {
        Some(r) => &r.baseline_key,
        None => return Ok(ComparisonTable { rows: Vec::new() }),
    };
    for r in reports {
        if &r.baseline_key != first_key {
            return Err(Error::BaselineMismatch {
                a: first_key.clone(),
                b: r.baseline_key.clone(),
            });
        }
    }
    let best_delta = reports
        .iter()
        .map(|r| r.delta_vs_static)
        .fold(f64::INFINITY, f64::min);
    let best_retrains = reports.iter().map(|r| r.n_retrains).min().unwrap_or(0);
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            scheme: r.label.clone(),
            delta_nrmse: r.delta_vs_static,
            n_retrains: r.n_retrains,
            best_delta: r.delta_vs_static == best_delta,
            best_retrains: r.n_retrains == best_retrains,
        })
        .collect();
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["scheme", "delta_nrmse_pct", "n_retrains", "best_delta", "best_retrains"])?;
        for r in &self.rows {
            w.write_record([
                r.scheme.clone(),
                r.delta_nrmse.to_string(),
                r.n_retrains.to_string(),
                r.best_delta.to_string(),
                r.best_retrains.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    /// Plain-text table with 6 significant digits.
    pub fn render_text(&self) -> String {
        let mut out = String::from("scheme        dNRMSE%      retrains\n");
        for r in &self.rows {
            let delta = crate::viz::sig6(r.delta_nrmse);
            let mark = |b: bool| if b { "*" } else { " " };
            out.push_str(&format!(
                "{:<12} {:>10}{} {:>8}{}\n",
                r.scheme,
                delta,
                mark(r.best_delta),
                r.n_retrains,
                mark(r.best_retrains),
            ));
        }
        out
    }
}
