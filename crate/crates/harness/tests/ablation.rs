mod common;

use mvpose_harness::ablation::{error_reduction, run_ablation, AblationTable, Suite};
use mvpose_harness::report::{emit_full_report, METRICS_FILE};
use mvpose_rig::SyntheticDataset;
use mvpose_rig::DatasetSource;

use common::tiny_config;

fn csv_rows(path: &std::path::Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn input_suite_table_report_and_resume() {
    let work = tempfile::tempdir().unwrap();
    let cfg = tiny_config();
    let table = run_ablation(&cfg, Suite::Inputs, work.path()).unwrap();
    let seeds = cfg.ablation.seeds.len();
    assert_eq!(table.rows.len(), 3 * seeds);
    for &seed in &cfg.ablation.seeds {
        assert_eq!(table.rows.iter().filter(|r| r.seed == seed).count(), 3);
    }
    let n_train = table.rows[0].n_train;
    assert!(n_train > 0);
    assert!(table.rows.iter().all(|r| r.n_train == n_train && r.n_test == table.rows[0].n_test));
    assert_eq!(table.reference, "heatmaps");
    assert_eq!(AblationTable::load(&AblationTable::table_path(work.path(), Suite::Inputs)).unwrap(), table);

    let out = work.path().join("report");
    emit_full_report(std::slice::from_ref(&table), &[], &out).unwrap();
    let csv_path = out.join("ablation_inputs.csv");
    let rows = csv_rows(&csv_path);
    assert_eq!(rows.len(), table.rows.len());
    for r in &rows {
        let (arm, seed, mpjpe) = (&r[0], &r[1], r[4].parse::<f64>().unwrap());
        let reference = rows
            .iter()
            .find(|x| &x[0] == "heatmaps" && &x[1] == seed)
            .map(|x| x[4].parse::<f64>().unwrap())
            .unwrap();
        if arm == "heatmaps" {
            assert!(r[8].is_empty());
        } else {
            let red: f64 = r[8].parse().unwrap();
            assert!((red - error_reduction(reference, mpjpe)).abs() < 1e-12, "{arm} seed {seed}");
        }
    }
    let metrics = csv_rows(&out.join(METRICS_FILE));
    assert_eq!(metrics.len(), cfg.data.subjects as usize * 3);
    let chart = std::fs::read(out.join("chart_inputs.svg")).unwrap();
    assert!(!chart.is_empty());

    let first = std::fs::read(&csv_path).unwrap();
    let first_metrics = std::fs::read(out.join(METRICS_FILE)).unwrap();
    let again = run_ablation(&cfg, Suite::Inputs, work.path()).unwrap();
    assert_eq!(again, table);
    emit_full_report(&[again], &[], &out).unwrap();
    assert_eq!(std::fs::read(&csv_path).unwrap(), first);
    assert_eq!(std::fs::read(out.join(METRICS_FILE)).unwrap(), first_metrics);
    assert_eq!(std::fs::read(out.join("chart_inputs.svg")).unwrap(), chart);
}

#[test]
fn view_suite_occludes_only_the_configured_view() {
    let work = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config();
    cfg.ablation.seeds = vec![4];
    let table = run_ablation(&cfg, Suite::Views, work.path()).unwrap();
    let arms: Vec<&str> = table.summary.iter().map(|s| s.arm.as_str()).collect();
    assert_eq!(arms, ["view0", "view1", "all-views"]);
    assert!(table.reference == "view0" || table.reference == "view1");
    let data_dir = std::fs::read_dir(work.path().join("data")).unwrap().next().unwrap().unwrap().path();
    let ds = SyntheticDataset::open(&data_dir).unwrap();
    let index = ds.index();
    let records: Vec<_> = index.sequences.iter().flat_map(|s| &s.records).collect();
    assert!(records.iter().any(|r| r.occluded[0].iter().any(|&o| o)));
    assert!(records.iter().all(|r| r.occluded[1].iter().all(|&o| !o)));
}

#[test]
fn encoder_suite_has_one_row_per_arm_and_seed() {
    let work = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config();
    cfg.ablation.seeds = vec![9];
    let table = run_ablation(&cfg, Suite::Encoders, work.path()).unwrap();
    let arms: Vec<&str> = table.rows.iter().map(|r| r.arm.as_str()).collect();
    assert_eq!(arms, ["simple-encoder", "half-hourglass"]);
    let s = &table.summary[1];
    let expect = error_reduction(table.summary[0].median_mpjpe_mm, s.median_mpjpe_mm);
    assert_eq!(s.error_reduction, Some(expect));
}
