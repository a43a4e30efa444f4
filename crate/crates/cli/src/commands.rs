//! Subcommand implementations. Usage and configuration problems exit 2
//! before any computation; runtime failures exit 1. Exit 0 means every
//! requested artifact was written.

use std::path::{Path, PathBuf};

use anyhow::Context;

use leaf_core::dataset::{self, CsvSchema, Day, KpiFrame};
use leaf_core::explainer::{
    group_features, lea_profiles_shared_edges, leagram, permutation_importance, write_leagram_csv,
    write_leaplot_csv,
};
use leaf_core::harness::{
    self, causality_audit, compare, run_scheme, Scheme, SchemeKind, SchemeReport,
};
use leaf_core::mitigator::{audits_to_json, mitigate_multigroup, MitigationConfig};
use leaf_core::models::{RegressorSpec, TrainedModel};
use leaf_core::synth::{generate, preset, ScenarioSpec, PRESET_NAMES};
use leaf_core::viz;

use crate::config::{sha256_hex, PartialRunConfig, RunConfig, MANIFEST_VERSION};

#[derive(Debug)]
pub enum CliError {
    /// Invalid arguments or configuration; exit status 2.
    Usage(String),
    /// Failure during computation or output; exit status 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Runtime(err)
    }
}

type CliResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn ensure_dir(out: &Path) -> CliResult {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    Ok(())
}

fn parse_date(s: &str) -> Result<Day, CliError> {
    Day::parse_iso(s).ok_or_else(|| usage(format!("bad date {s:?}; expected yyyy-mm-dd")))
}

fn parse_range(s: &str) -> Result<(Day, Day), CliError> {
    let (from, to) = s
        .split_once("..")
        .ok_or_else(|| usage(format!("bad range {s:?}; expected FROM..TO")))?;
    let (from, to) = (parse_date(from)?, parse_date(to)?);
    if from > to {
        return Err(usage(format!("empty range {s:?}")));
    }
    Ok((from, to))
}

// ---------------------------------------------------------------- synth ---

pub fn synth(
    preset_name: Option<String>,
    spec_path: Option<PathBuf>,
    seed: Option<u64>,
    out: &Path,
) -> CliResult {
    let mut spec: ScenarioSpec = match (preset_name, spec_path) {
        (Some(name), None) => preset(&name).map_err(|e| usage(e.to_string()))?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading scenario spec {}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("bad scenario spec: {e}")))?
        }
        _ => {
            return Err(usage(format!(
                "exactly one of --preset or --spec is required; presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let (frame, truth) = generate(&spec).map_err(|e| CliError::Runtime(e.into()))?;

    ensure_dir(out)?;
    let data_path = out.join("dataset.csv");
    dataset::write_csv(&frame, &data_path).context("writing dataset csv")?;
    leaf_core::synth::write_ground_truth_json(&truth, &out.join("ground_truth.json"))
        .context("writing ground truth")?;
    println!(
        "wrote {} ({} rows) and ground_truth.json ({} drift days)",
        data_path.display(),
        frame.len(),
        truth.drift_days.len()
    );
    Ok(())
}

// ------------------------------------------------------------------ run ---

pub struct RunArgs {
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    pub schemes: Option<String>,
    pub horizon: Option<u32>,
    pub window: Option<u32>,
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

fn resolve_config(args: RunArgs) -> Result<RunConfig, CliError> {
    if let Some(path) = args.manifest {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| usage(format!("reading manifest {}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| usage(format!("bad manifest: {e}")))?;
        if cfg.schema_version != MANIFEST_VERSION {
            return Err(usage(format!(
                "unsupported manifest version {}",
                cfg.schema_version
            )));
        }
        return Ok(cfg);
    }

    let file: PartialRunConfig = match args.config {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| usage(format!("reading config {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("bad config: {e}")))?
        }
        None => PartialRunConfig::default(),
    };

    let data = args
        .data
        .or(file.data)
        .ok_or_else(|| usage("--data is required"))?;
    if !data.exists() {
        return Err(usage(format!("dataset {} does not exist", data.display())));
    }
    let target = args
        .target
        .or(file.target)
        .ok_or_else(|| usage("--target is required"))?;
    let schemes: Vec<String> = match args.schemes {
        Some(s) => s.split(',').map(|t| t.trim().to_string()).collect(),
        None => file
            .schemes
            .ok_or_else(|| usage("--schemes is required"))?,
    };
    for token in &schemes {
        SchemeKind::parse(token).map_err(|e| usage(e.to_string()))?;
    }
    let seed = args.seed.or(file.seed).unwrap_or(7);
    let model = match args.model.as_deref() {
        Some("tree") => RegressorSpec::default_tree(0),
        Some("knn") => RegressorSpec::default_knn(0),
        Some(other) => return Err(usage(format!("unknown model {other:?}; use tree or knn"))),
        None => file.model.unwrap_or_else(|| RegressorSpec::default_tree(0)),
    };
    model.validate().map_err(|e| usage(e.to_string()))?;
    let detector = file.detector.unwrap_or_default();
    detector.validate().map_err(|e| usage(e.to_string()))?;
    let mitigation = file.mitigation.unwrap_or_default();
    mitigation.validate().map_err(|e| usage(e.to_string()))?;

    let data_sha256 = sha256_hex(&data)
        .map_err(|e| usage(format!("hashing dataset {}: {e}", data.display())))?;
    Ok(RunConfig {
        schema_version: MANIFEST_VERSION,
        data,
        data_sha256,
        target,
        schemes,
        horizon_days: args.horizon.or(file.horizon_days).unwrap_or(30),
        train_window_days: args.window.or(file.train_window_days).unwrap_or(14),
        min_event_gap_days: file.min_event_gap_days.unwrap_or(0),
        model,
        detector,
        mitigation,
        seed,
    })
}

pub fn run(args: RunArgs, out: &Path) -> CliResult {
    let cfg = resolve_config(args)?;
    let sha = sha256_hex(&cfg.data)
        .map_err(|e| usage(format!("hashing dataset {}: {e}", cfg.data.display())))?;
    if sha != cfg.data_sha256 {
        return Err(usage(format!(
            "dataset {} does not match the manifest hash",
            cfg.data.display()
        )));
    }
    let frame = dataset::load_csv(&cfg.data, &CsvSchema::with_target(&cfg.target))
        .map_err(|e| usage(format!("loading dataset: {e}")))?;

    ensure_dir(out)?;
    let manifest_json = serde_json::to_string_pretty(&cfg).context("serializing manifest")?;
    std::fs::write(out.join("manifest.json"), manifest_json + "\n")
        .context("writing manifest")?;

    // shared static model artifact for the explain/mitigate workflow
    let any_scheme = Scheme {
        kind: SchemeKind::Static,
        train_window_days: cfg.train_window_days,
        horizon_days: cfg.horizon_days,
        min_event_gap_days: cfg.min_event_gap_days,
    };
    let prepared = harness::prepare(&frame, &cfg.target, &any_scheme)
        .map_err(|e| CliError::Runtime(e.into()))?;
    let static_model = harness::initial_model(&prepared, &cfg.model, cfg.seed)
        .map_err(|e| CliError::Runtime(e.into()))?;
    static_model
        .save(&out.join("static_model.json"))
        .context("writing static model")?;

    let mut reports: Vec<SchemeReport> = Vec::new();
    let mut failures: Vec<(String, String)> = Vec::new();
    for token in &cfg.schemes {
        let kind = SchemeKind::parse(token).expect("validated above");
        let scheme = Scheme {
            kind,
            train_window_days: cfg.train_window_days,
            horizon_days: cfg.horizon_days,
            min_event_gap_days: cfg.min_event_gap_days,
        };
        match run_scheme(
            &frame,
            &cfg.target,
            &scheme,
            &cfg.model,
            &cfg.detector,
            &cfg.mitigation,
            cfg.seed,
        )
        .and_then(|report| {
            causality_audit(&report)?;
            Ok(report)
        }) {
            Ok(report) => {
                report
                    .trace
                    .write_csv(&out.join(format!("trace_{}.csv", report.label)))
                    .context("writing trace csv")?;
                report
                    .write_json(&out.join(format!("report_{}.json", report.label)))
                    .context("writing report json")?;
                reports.push(report);
            }
            Err(err) => {
                eprintln!("scheme {token} failed: {err}");
                failures.push((token.clone(), err.to_string()));
            }
        }
    }

    if !reports.is_empty() {
        let table = compare(&reports).map_err(|e| CliError::Runtime(e.into()))?;
        table
            .write_csv(&out.join("comparison.csv"))
            .context("writing comparison csv")?;
        table
            .write_json(&out.join("comparison.json"))
            .context("writing comparison json")?;
        print!("{}", table.render_text());

        let traces: Vec<(String, &leaf_core::metrics::ErrorSeries)> = reports
            .iter()
            .map(|r| (r.label.clone(), &r.trace))
            .collect();
        let events: Vec<leaf_core::detector::DriftEvent> = reports
            .iter()
            .flat_map(|r| r.drift_events.iter().copied())
            .collect();
        let svg = viz::error_trace_svg("per-date nrmse by scheme", &traces, &events);
        std::fs::write(out.join("trace.svg"), svg).context("writing trace svg")?;
    }

    if !failures.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "{} of {} schemes failed: {}",
            failures.len(),
            cfg.schemes.len(),
            failures
                .iter()
                .map(|(s, e)| format!("{s}: {e}"))
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(())
}

// -------------------------------------------------------------- explain ---

pub struct ExplainArgs {
    pub data: PathBuf,
    pub target: String,
    pub model: PathBuf,
    pub splits: Vec<String>,
    pub feature: Option<String>,
    pub bins: usize,
    pub horizon: u32,
    pub repeats: usize,
    pub tau: f64,
    pub seed: u64,
    pub svg: bool,
}

fn supervised_frame(data: &Path, target: &str, horizon: u32) -> Result<KpiFrame, CliError> {
    let frame = dataset::load_csv(data, &CsvSchema::with_target(target))
        .map_err(|e| usage(format!("loading dataset: {e}")))?;
    let frame = frame
        .with_target(target)
        .map_err(|e| usage(e.to_string()))?;
    let frame = if dataset::has_temporal_features(&frame) {
        frame
    } else {
        dataset::add_temporal_features(&frame).map_err(|e| CliError::Runtime(e.into()))?
    };
    dataset::make_supervised(&frame, horizon).map_err(|e| CliError::Runtime(e.into()))
}

pub fn explain(args: ExplainArgs, out: &Path) -> CliResult {
    if args.bins < 2 {
        return Err(usage("--bins must be >= 2"));
    }
    if args.splits.is_empty() {
        return Err(usage(
            "at least one --split name=FROM..TO is required (target-date range)",
        ));
    }
    let mut splits: Vec<(String, Day, Day)> = Vec::new();
    for raw in &args.splits {
        let (name, range) = raw
            .split_once('=')
            .ok_or_else(|| usage(format!("bad split {raw:?}; expected name=FROM..TO")))?;
        let (from, to) = parse_range(range)?;
        splits.push((name.to_string(), from, to));
    }

    let model = TrainedModel::load(&args.model)
        .map_err(|e| usage(format!("loading model {}: {e}", args.model.display())))?;
    let sup = supervised_frame(&args.data, &args.target, args.horizon)?;

    let split_frames: Vec<(String, KpiFrame)> = splits
        .iter()
        .map(|(name, from, to)| {
            let frame = sup.filter_target_dates(*from, *to);
            if frame.is_empty() {
                Err(usage(format!("split {name} selects no rows")))
            } else {
                Ok((name.clone(), frame))
            }
        })
        .collect::<Result<_, _>>()?;
    let union_from = splits.iter().map(|s| s.1).min().expect("nonempty");
    let union_to = splits.iter().map(|s| s.2).max().expect("nonempty");
    let union = sup.filter_target_dates(union_from, union_to);

    ensure_dir(out)?;

    let importance = permutation_importance(&model, &union, args.repeats, args.seed)
        .map_err(|e| CliError::Runtime(e.into()))?;
    importance
        .write_csv(&out.join("importance.csv"))
        .context("writing importance csv")?;
    let groups =
        group_features(&importance, &union, args.tau).map_err(|e| CliError::Runtime(e.into()))?;
    std::fs::write(
        out.join("groups.json"),
        leaf_core::explainer::groups_to_json(&groups).map_err(|e| CliError::Runtime(e.into()))?,
    )
    .context("writing groups json")?;

    let feature = match args.feature {
        Some(f) => f,
        None => groups
            .first()
            .map(|g| g.representative.clone())
            .ok_or_else(|| {
                CliError::Runtime(anyhow::anyhow!(
                    "no positive-importance feature group; pass --feature explicitly"
                ))
            })?,
    };

    let refs: Vec<(String, &KpiFrame)> = split_frames
        .iter()
        .map(|(n, f)| (n.clone(), f))
        .collect();
    let profiles = lea_profiles_shared_edges(&model, &refs, &feature, args.bins)
        .map_err(|e| CliError::Runtime(e.into()))?;
    for (label, profile) in &profiles {
        write_leaplot_csv(label, profile, &out.join(format!("leaplot_{label}.csv")))
            .context("writing leaplot csv")?;
    }
    let grid = leagram(&model, &union, &feature).map_err(|e| CliError::Runtime(e.into()))?;
    write_leagram_csv(&grid, &out.join("leagram.csv")).context("writing leagram csv")?;

    if args.svg {
        let profile_refs: Vec<(String, &leaf_core::explainer::LeaProfile)> = profiles
            .iter()
            .map(|(n, p)| (n.clone(), p))
            .collect();
        std::fs::write(
            out.join("leaplot.svg"),
            viz::leaplot_svg(&format!("binned error along {feature}"), &profile_refs),
        )
        .context("writing leaplot svg")?;
        std::fs::write(
            out.join("leagram.svg"),
            viz::leagram_svg(&format!("signed error grid along {feature}"), &grid),
        )
        .context("writing leagram svg")?;
    }
    println!(
        "explained {} along {feature}: {} splits, {} groups",
        args.data.display(),
        profiles.len(),
        groups.len()
    );
    Ok(())
}

// ------------------------------------------------------------- mitigate ---

pub struct MitigateArgs {
    pub data: PathBuf,
    pub target: String,
    pub model: PathBuf,
    pub train: String,
    pub latest: String,
    pub groups: usize,
    pub horizon: u32,
    pub seed: u64,
}

pub fn mitigate(args: MitigateArgs, out: &Path) -> CliResult {
    if args.groups < 1 {
        return Err(usage("--groups must be >= 1"));
    }
    let (train_from, train_to) = parse_range(&args.train)?;
    let (latest_from, latest_to) = parse_range(&args.latest)?;
    let model = TrainedModel::load(&args.model)
        .map_err(|e| usage(format!("loading model {}: {e}", args.model.display())))?;
    let sup = supervised_frame(&args.data, &args.target, args.horizon)?;
    let prev_train = sup.filter_target_dates(train_from, train_to);
    let latest = sup.filter_target_dates(latest_from, latest_to);
    if prev_train.is_empty() || latest.is_empty() {
        return Err(usage("--train or --latest selects no rows"));
    }

    let cfg = MitigationConfig {
        n_groups: args.groups,
        ..MitigationConfig::default()
    };
    let importance = permutation_importance(&model, &latest, cfg.importance_repeats, args.seed)
        .map_err(|e| CliError::Runtime(e.into()))?;
    let groups = group_features(&importance, &latest, cfg.tau)
        .map_err(|e| CliError::Runtime(e.into()))?;
    let outcome = mitigate_multigroup(
        &model,
        &prev_train,
        &latest,
        &groups,
        &model.spec,
        &cfg,
        args.seed,
    )
    .map_err(|e| CliError::Runtime(e.into()))?;

    ensure_dir(out)?;
    std::fs::write(
        out.join("audit.json"),
        audits_to_json(&outcome.audits).map_err(|e| CliError::Runtime(e.into()))?,
    )
    .context("writing audit json")?;
    outcome
        .model
        .save(&out.join("model_mitigated.json"))
        .context("writing mitigated model")?;
    dataset::write_csv(&outcome.train_set, &out.join("train_restructured.csv"))
        .context("writing restructured training set")?;
    let moved: usize = outcome.audits.iter().map(|p| p.draws.len()).sum();
    println!(
        "mitigated over {} rounds, resampled {moved} rows; artifacts in {}",
        outcome.audits.len(),
        out.display()
    );
    Ok(())
}

// --------------------------------------------------------------- report ---

pub fn report(inputs: &[PathBuf], out: &Path) -> CliResult {
    if inputs.is_empty() {
        return Err(usage("--inputs requires at least one report json"));
    }
    let reports: Vec<SchemeReport> = inputs
        .iter()
        .map(|p| {
            SchemeReport::read_json(p)
                .map_err(|e| usage(format!("reading report {}: {e}", p.display())))
        })
        .collect::<Result<_, _>>()?;
    let table = compare(&reports).map_err(|e| CliError::Runtime(e.into()))?;
    ensure_dir(out)?;
    table
        .write_csv(&out.join("comparison.csv"))
        .context("writing comparison csv")?;
    table
        .write_json(&out.join("comparison.json"))
        .context("writing comparison json")?;
    print!("{}", table.render_text());
    Ok(())
}
