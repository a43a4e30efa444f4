use leaf_core::dataset::{Day, KpiFrame};
use leaf_core::detector::KswinConfig;
use leaf_core::harness::*;
use leaf_core::mitigator::MitigationConfig;
use leaf_core::models::RegressorSpec;
use leaf_core::synth::{generate, ScenarioSpec, Shock};

fn scenario(seed: u64, magnitude: f64) -> ScenarioSpec {
    ScenarioSpec {
        n_stations: 20,
        span_days: 600,
        seed,
        start_date: Day::from_ymd(2018, 1, 1).unwrap(),
        base_levels: (0..20).map(|i| 60.0 + 5.0 * f64::from(i)).collect(),
        weekly_amplitude: 0.12,
        annual_amplitude: 0.0,
        trend_slope: 0.02,
        shocks: vec![Shock { onset_day: 300, magnitude, recovery_days: 600 }],
        burst_prob: 0.0,
        burst_scale: 1.0,
        loss_windows: vec![],
        side_channels: 0,
        noise_sd: 3.0,
    }
}

/// Two independent drivers, each observable through its own history feature;
/// the target is their sum, so errors arise along both features.
fn two_cause_frame() -> KpiFrame {
    let (a, _) = generate(&scenario(11, 1.2)).unwrap();
    let (b, _) = generate(&scenario(23, 0.9)).unwrap();
    let rows = a
        .rows()
        .iter()
        .zip(b.rows())
        .map(|(ra, rb)| {
            assert_eq!((&ra.station, ra.feature_date), (&rb.station, rb.feature_date));
            let (ya, yb) = (ra.target.unwrap(), rb.target.unwrap());
            (ra.station.clone(), ra.feature_date, vec![ya, yb], Some(ya + yb))
        })
        .collect();
    KpiFrame::from_parts(vec!["hist_a".into(), "hist_b".into()], "kpi".into(), rows).unwrap()
}

fn main() {
    let data = two_cause_frame();
    for master in 1u64..=8 {
        let scheme = |kind| Scheme { kind, train_window_days: 14, horizon_days: 30, min_event_gap_days: 0 };
        let run = |n| run_scheme(
            &data, "kpi", &scheme(SchemeKind::Leaf { n_groups: n }), &RegressorSpec::default_tree(0),
            &KswinConfig { window_size: 90, stat_size: 30, alpha: 1e-4, seed: 0, reset_on_detect: true },
            &MitigationConfig { removal_budget_frac: 0.5, ..MitigationConfig::default() }, master,
        ).unwrap();
        let l1 = run(1);
        let l3 = run(3);
        let ok = l3.delta_vs_static <= l1.delta_vs_static + 1.0;
        println!(
            "seed={master}: leaf1={:+.1}%({} ev) leaf3={:+.1}%({} ev) diff={:+.2} {}",
            l1.delta_vs_static, l1.n_retrains, l3.delta_vs_static, l3.n_retrains,
            l3.delta_vs_static - l1.delta_vs_static, if ok { "PASS" } else { "FAIL" },
        );
    }
}
