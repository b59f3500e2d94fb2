use proptest::prelude::*;
use qillum::chain::ChainParams;
use qillum::constants::{db_to_linear, moments_coherent, moments_from_tmsv};
use qillum::dsp::sample_records;
use qillum::experiments::{distance_to_eta_db, run_point, run_sweep, summarize, DistanceModel, SweepConfig};
use qillum::receivers::{
    heterodyne_snr, heterodyne_snr_analytic, homodyne_snr, homodyne_snr_analytic, pc_raw_snr, pc_snr_analytic,
};

fn config(text: &str) -> SweepConfig {
    SweepConfig::from_toml_str(text).unwrap()
}

#[test]
fn monte_carlo_agrees_with_closed_forms_on_a_small_sweep() {
    let cfg = config(
        r#"
[source]
kinds = ["tmsv", "classical", "coherent"]
purity = { kind = "constant", purity = 0.9 }

[sweep]
variable = "n_s"
grid = [0.2, 1.0, 5.0]
records = 40000
coherent_records = 40000
repetitions = 2
seed = 77
"#,
    );
    let result = run_sweep(&cfg).unwrap();
    assert!(result.failure.is_none());
    for row in result.rows.iter().filter(|r| r.receiver != "passive") {
        let z = (row.snr - row.analytic_snr) / row.stderr;
        assert!(z.abs() < 4.0, "{} at {}: z = {z}", row.series(), row.value);
    }
}

#[test]
fn fig2b_analytic_crossing_lies_between_three_and_six() {
    let mut cfg = SweepConfig::from_path(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/recipes/fig2b.toml"))).unwrap();
    cfg.sweep.monte_carlo = false;
    cfg.sweep.grid = (0..=60).map(|k| 0.1 * 100f64.powf(k as f64 / 60.0)).collect();
    let result = run_sweep(&cfg).unwrap();
    let summary = summarize("fig2b", &result);
    let xs = &cfg.sweep.grid;
    let curve = |series: &str| -> Vec<f64> {
        result.rows.iter().filter(|r| r.series() == series).map(|r| r.analytic_db).collect()
    };
    let qi = curve("tmsv/pc_calibrated");
    let het = curve("coherent/heterodyne");
    let diff: Vec<f64> = qi.iter().zip(&het).map(|(a, b)| a - b).collect();
    let roots = qillum::experiments::find_crossings(xs, &diff);
    assert_eq!(roots.len(), 1, "{roots:?}");
    assert!((3.0..=6.0).contains(&roots[0].0), "{roots:?}");
    assert!(summary.series.contains(&"coherent/homodyne".to_string()));
}

#[test]
fn distance_table_examples() {
    let model: DistanceModel = toml::from_str(
        r#"
kind = "table"
points = [{ d = 0.1, eta_db = -6.0 }, { d = 1.0, eta_db = -22.0 }]
"#,
    )
    .unwrap();
    assert!((distance_to_eta_db(&model, 0.1).unwrap() + 6.0).abs() < 1e-12);
    assert!((distance_to_eta_db(&model, 1.0).unwrap() + 22.0).abs() < 1e-12);
    let mid = distance_to_eta_db(&model, 0.5).unwrap();
    assert!(mid < -6.0 && mid > -22.0);
    assert!(distance_to_eta_db(&model, 2.0).is_err());
}

fn paired_batches(n_s: f64, seed: u64, count: usize) -> (qillum::dsp::RecordBatch, qillum::dsp::RecordBatch) {
    let present = moments_from_tmsv(n_s, 1.0).unwrap();
    let absent = moments_from_tmsv(0.0, 1.0).unwrap();
    let a = sample_records(&absent, count, seed).unwrap();
    let b = sample_records(&present, count, seed + 1).unwrap();
    (a, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn snr_is_invariant_under_record_rescaling(n_s in 0.05f64..3.0, k in 0.01f64..100.0, seed in 0u64..1000) {
        let (a, b) = paired_batches(n_s, seed, 2000);
        let base = pc_raw_snr(&a, &b).unwrap().snr;
        let scaled = pc_raw_snr(&a.scaled(k), &b.scaled(k)).unwrap().snr;
        prop_assert!((base - scaled).abs() <= 1e-9 * base.abs().max(1e-12));
        let het = heterodyne_snr(&a, &b).unwrap().snr;
        let het_scaled = heterodyne_snr(&a.scaled(k), &b.scaled(k)).unwrap().snr;
        prop_assert!((het - het_scaled).abs() <= 1e-9 * het.abs().max(1e-12));
        let hom = homodyne_snr(&a, &b, 0.3).unwrap().snr;
        let hom_scaled = homodyne_snr(&a.scaled(k), &b.scaled(k), 0.3).unwrap().snr;
        prop_assert!((hom - hom_scaled).abs() <= 1e-9 * hom.abs().max(1e-12));
    }

    #[test]
    fn analytic_snr_grows_with_transmissivity(n_s in 0.05f64..10.0, eta_db in -30.0f64..-0.5, step_db in 0.1f64..5.0) {
        let p = ChainParams::reference();
        let lo = db_to_linear(eta_db);
        let hi = db_to_linear((eta_db + step_db).min(0.0));
        let m = moments_from_tmsv(n_s, 1.0).unwrap();
        for calibrated in [false, true] {
            let a = pc_snr_analytic(&m, &p, lo, calibrated).unwrap().snr;
            let b = pc_snr_analytic(&m, &p, hi, calibrated).unwrap().snr;
            prop_assert!(b > a);
        }
        prop_assert!(homodyne_snr_analytic(n_s, &p, hi).unwrap().snr > homodyne_snr_analytic(n_s, &p, lo).unwrap().snr);
        prop_assert!(heterodyne_snr_analytic(n_s, &p, hi).unwrap().snr > heterodyne_snr_analytic(n_s, &p, lo).unwrap().snr);
    }

    #[test]
    fn homodyne_never_loses_to_heterodyne(n_s in 0.01f64..20.0, eta in 1e-4f64..1.0) {
        let p = ChainParams::reference();
        let hom = homodyne_snr_analytic(n_s, &p, eta).unwrap().snr;
        let het = heterodyne_snr_analytic(n_s, &p, eta).unwrap().snr;
        prop_assert!(hom >= het);
        prop_assert!(moments_coherent(n_s).unwrap().is_classical());
    }

    #[test]
    fn run_point_rows_are_well_formed(value in 0.05f64..8.0) {
        let cfg = config(
            r#"
[source]
kinds = ["tmsv", "classical", "coherent"]

[sweep]
variable = "n_s"
grid = [1.0]
monte_carlo = false
"#,
        );
        let rows = run_point(&cfg, value).unwrap();
        prop_assert_eq!(rows.len(), 7);
        for r in &rows {
            prop_assert!(r.snr >= 0.0 && r.snr.is_finite());
            prop_assert!((0.0..=0.5).contains(&r.error_probability));
            prop_assert_eq!(r.value, value);
            prop_assert_eq!(r.status.as_str(), "ok");
        }
    }
}
