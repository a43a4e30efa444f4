//! Drive the `leaf` binary end to end: exit codes, artifact sets, and
//! determinism of repeated invocations.

use std::path::Path;
use std::process::{Command, Output};

fn leaf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leaf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_small_spec(dir: &Path) -> std::path::PathBuf {
    let spec = r#"{
        "n_stations": 5, "span_days": 160, "seed": 9, "start_date": "2020-01-01",
        "base_levels": [50, 65, 80, 95, 110],
        "weekly_amplitude": 0.12, "trend_slope": 0.02,
        "shocks": [{"onset_day": 100, "magnitude": 1.0, "recovery_days": 400}],
        "side_channels": 1, "noise_sd": 2.0
    }"#;
    let path = dir.join("spec.json");
    std::fs::write(&path, spec).unwrap();
    path
}

#[test]
fn synth_is_deterministic_and_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let result = leaf(&[
            "synth",
            "--preset",
            "bursty-high-dispersion",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{result:?}");
    }
    for file in ["dataset.csv", "ground_truth.json"] {
        assert_eq!(
            std::fs::read(out_a.join(file)).unwrap(),
            std::fs::read(out_b.join(file)).unwrap(),
            "{file} differs between identical invocations"
        );
    }
}

#[test]
fn unknown_preset_exits_2_naming_valid_ones() {
    let dir = tempfile::tempdir().unwrap();
    let result = leaf(&[
        "synth",
        "--preset",
        "weekly-chaos",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("low-dispersion-periodic"), "stderr: {stderr}");
    assert!(stderr.contains("sudden-shock"));
}

#[test]
fn run_missing_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let result = leaf(&[
        "run",
        "--data",
        "/nonexistent/data.csv",
        "--target",
        "kpi",
        "--schemes",
        "static",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn invalid_scheme_token_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_small_spec(dir.path());
    let data_dir = dir.path().join("data");
    assert!(leaf(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data_dir.to_str().unwrap(),
    ])
    .status
    .success());
    let result = leaf(&[
        "run",
        "--data",
        data_dir.join("dataset.csv").to_str().unwrap(),
        "--target",
        "kpi",
        "--schemes",
        "leaf:0",
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn run_writes_reports_and_manifest_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_small_spec(dir.path());
    let data_dir = dir.path().join("data");
    assert!(leaf(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data_dir.to_str().unwrap(),
    ])
    .status
    .success());

    let run_dir = dir.path().join("run");
    let result = leaf(&[
        "run",
        "--data",
        data_dir.join("dataset.csv").to_str().unwrap(),
        "--target",
        "kpi",
        "--schemes",
        "static,periodic:30,triggered,leaf:1",
        "--horizon",
        "10",
        "--window",
        "10",
        "--seed",
        "3",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    for label in ["static", "periodic-30", "triggered", "leaf-1"] {
        assert!(run_dir.join(format!("report_{label}.json")).exists());
        assert!(run_dir.join(format!("trace_{label}.csv")).exists());
    }
    for file in ["comparison.csv", "comparison.json", "manifest.json", "static_model.json", "trace.svg"] {
        assert!(run_dir.join(file).exists(), "missing {file}");
    }

    let rerun_dir = dir.path().join("rerun");
    let rerun = leaf(&[
        "run",
        "--manifest",
        run_dir.join("manifest.json").to_str().unwrap(),
        "--out",
        rerun_dir.to_str().unwrap(),
    ]);
    assert!(rerun.status.success(), "{rerun:?}");
    for entry in std::fs::read_dir(&run_dir).unwrap() {
        let name = entry.unwrap().file_name();
        let name = name.to_str().unwrap();
        if name.ends_with(".csv") {
            assert_eq!(
                std::fs::read(run_dir.join(name)).unwrap(),
                std::fs::read(rerun_dir.join(name)).unwrap(),
                "{name} differs after manifest re-run"
            );
        }
    }
}

#[test]
fn explain_rejects_one_bin_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_small_spec(dir.path());
    let data_dir = dir.path().join("data");
    assert!(leaf(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data_dir.to_str().unwrap(),
    ])
    .status
    .success());
    let run_dir = dir.path().join("run");
    assert!(leaf(&[
        "run",
        "--data",
        data_dir.join("dataset.csv").to_str().unwrap(),
        "--target",
        "kpi",
        "--schemes",
        "static",
        "--horizon",
        "10",
        "--window",
        "10",
        "--out",
        run_dir.to_str().unwrap(),
    ])
    .status
    .success());

    let data = data_dir.join("dataset.csv");
    let model = run_dir.join("static_model.json");
    let bad = leaf(&[
        "explain",
        "--data",
        data.to_str().unwrap(),
        "--target",
        "kpi",
        "--model",
        model.to_str().unwrap(),
        "--split",
        "all=2020-02-01..2020-05-31",
        "--bins",
        "1",
        "--horizon",
        "10",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2));

    let explain = |out: &Path| {
        let result = leaf(&[
            "explain",
            "--data",
            data.to_str().unwrap(),
            "--target",
            "kpi",
            "--model",
            model.to_str().unwrap(),
            "--split",
            "before=2020-02-01..2020-04-09",
            "--split",
            "during=2020-04-10..2020-05-31",
            "--bins",
            "100",
            "--horizon",
            "10",
            "--svg",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{result:?}");
    };
    let out_a = dir.path().join("ea");
    let out_b = dir.path().join("eb");
    explain(&out_a);
    explain(&out_b);
    for file in [
        "importance.csv",
        "groups.json",
        "leaplot_before.csv",
        "leaplot_during.csv",
        "leagram.csv",
        "leaplot.svg",
        "leagram.svg",
    ] {
        assert_eq!(
            std::fs::read(out_a.join(file)).unwrap(),
            std::fs::read(out_b.join(file)).unwrap(),
            "{file} differs between identical explain runs"
        );
    }
    // the two leaplot csvs share bin edges: identical first two columns
    let edges = |path: &Path| -> Vec<(String, String)> {
        let mut reader = csv::Reader::from_path(path).unwrap();
        reader
            .records()
            .map(|r| {
                let r = r.unwrap();
                (r.get(0).unwrap().to_string(), r.get(1).unwrap().to_string())
            })
            .collect()
    };
    assert_eq!(
        edges(&out_a.join("leaplot_before.csv")),
        edges(&out_a.join("leaplot_during.csv"))
    );
}

#[test]
fn config_file_supplies_options_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_small_spec(dir.path());
    let data_dir = dir.path().join("data");
    assert!(leaf(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data_dir.to_str().unwrap(),
    ])
    .status
    .success());
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        format!(
            r#"{{"data": "{}", "target": "kpi", "schemes": ["static", "periodic:40"],
                "horizon_days": 10, "train_window_days": 10, "seed": 4}}"#,
            data_dir.join("dataset.csv").display()
        ),
    )
    .unwrap();
    // flag overrides the file's scheme list; everything else comes from it
    let out = dir.path().join("cfg_run");
    let result = leaf(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--schemes",
        "static",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    assert!(out.join("report_static.json").exists());
    assert!(!out.join("report_periodic-40.json").exists());
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 4"));
    assert!(manifest.contains("\"horizon_days\": 10"));
}

#[test]
fn mitigate_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_small_spec(dir.path());
    let data_dir = dir.path().join("data");
    assert!(leaf(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data_dir.to_str().unwrap(),
    ])
    .status
    .success());
    let run_dir = dir.path().join("run");
    assert!(leaf(&[
        "run",
        "--data",
        data_dir.join("dataset.csv").to_str().unwrap(),
        "--target",
        "kpi",
        "--schemes",
        "static,leaf:1",
        "--horizon",
        "10",
        "--window",
        "10",
        "--out",
        run_dir.to_str().unwrap(),
    ])
    .status
    .success());

    let mit_dir = dir.path().join("mit");
    let result = leaf(&[
        "mitigate",
        "--data",
        data_dir.join("dataset.csv").to_str().unwrap(),
        "--target",
        "kpi",
        "--model",
        run_dir.join("static_model.json").to_str().unwrap(),
        "--train",
        "2020-01-11..2020-01-20",
        "--latest",
        "2020-04-20..2020-04-29",
        "--horizon",
        "10",
        "--groups",
        "2",
        "--out",
        mit_dir.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    for file in ["audit.json", "model_mitigated.json", "train_restructured.csv"] {
        assert!(mit_dir.join(file).exists(), "missing {file}");
    }

    let rep_dir = dir.path().join("rep");
    let result = leaf(&[
        "report",
        "--inputs",
        run_dir.join("report_static.json").to_str().unwrap(),
        run_dir.join("report_leaf-1.json").to_str().unwrap(),
        "--out",
        rep_dir.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let table = std::fs::read_to_string(rep_dir.join("comparison.csv")).unwrap();
    assert!(table.contains("static"));
    assert!(table.contains("leaf-1"));
}
