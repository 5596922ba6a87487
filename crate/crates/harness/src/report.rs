//! Metrics tables and bar charts.
//!
//! `metrics.csv` has one row per (experiment, subject) with columns
//! `experiment, subject, n_frames, mpjpe_mm, variance_mm2, std_mm`.
//! Each ablation suite also gets `ablation_<suite>.csv` (one row per arm and
//! seed) and `chart_<suite>.svg`: per-subject mean error for every arm, with
//! whiskers of one standard deviation of the per-frame errors.
//! Floats are written in shortest round-trip form, so identical reports give
//! byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::ablation::AblationTable;
use crate::error::{HarnessError, Result};
use crate::eval::MetricsReport;

pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_COLUMNS: [&str; 6] = ["experiment", "subject", "n_frames", "mpjpe_mm", "variance_mm2", "std_mm"];
pub const ABLATION_COLUMNS: [&str; 9] = [
    "arm",
    "seed",
    "n_train",
    "n_test",
    "mpjpe_mm",
    "std_frames_mm",
    "std_subjects_mm",
    "reference",
    "error_reduction",
];

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

pub fn write_metrics_table(reports: &[MetricsReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(METRICS_COLUMNS).map_err(|e| csv_err(path, e))?;
    for r in reports {
        for s in &r.subjects {
            w.write_record([
                r.experiment.clone(),
                s.subject_id.to_string(),
                s.n_frames.to_string(),
                s.mean_mm.to_string(),
                s.variance_mm2.to_string(),
                s.std_mm.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_ablation_table(table: &AblationTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(ABLATION_COLUMNS).map_err(|e| csv_err(path, e))?;
    for r in &table.rows {
        w.write_record([
            r.arm.clone(),
            r.seed.to_string(),
            r.n_train.to_string(),
            r.n_test.to_string(),
            r.mpjpe_mm.to_string(),
            r.std_frames_mm.to_string(),
            r.std_subjects_mm.to_string(),
            table.reference.clone(),
            r.error_reduction.map_or_else(String::new, |v| v.to_string()),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

/// Grouped bar chart: one group per subject, one bar per report.
pub fn bar_chart_svg(title: &str, reports: &[MetricsReport]) -> String {
    let mut subjects: Vec<u32> = reports.iter().flat_map(|r| r.subjects.iter().map(|s| s.subject_id)).collect();
    subjects.sort_unstable();
    subjects.dedup();
    let cell: BTreeMap<(usize, u32), (f64, f64)> = reports
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.subjects.iter().map(move |s| ((i, s.subject_id), (s.mean_mm, s.std_mm))))
        .collect();
    let top = cell.values().map(|(m, s)| m + s).fold(1.0, f64::max) * 1.1;

    let (left, right, upper, lower) = (60.0, 20.0, 40.0, 50.0);
    let bar_w = 18.0;
    let group_w = bar_w * reports.len().max(1) as f64 + 24.0;
    let plot_w = group_w * subjects.len().max(1) as f64;
    let plot_h = 260.0;
    let legend_h = 18.0 * reports.len() as f64;
    let width = left + plot_w + right;
    let height = upper + plot_h + lower + legend_h;
    let y = |v: f64| upper + plot_h - v / top * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, escape(title));
    for k in 0..=4 {
        let v = top * k as f64 / 4.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{left:.1}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"##,
            left + plot_w,
            left - 6.0,
            yy + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">MPJPE (mm)</text>"#,
        upper + plot_h / 2.0,
        upper + plot_h / 2.0
    );
    for (g, subject) in subjects.iter().enumerate() {
        let gx = left + g as f64 * group_w + 12.0;
        for i in 0..reports.len() {
            let Some(&(mean, std)) = cell.get(&(i, *subject)) else { continue };
            let x = gx + i as f64 * bar_w;
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}"/>"#,
                y(mean),
                bar_w - 2.0,
                y(0.0) - y(mean)
            );
            let cx = x + (bar_w - 2.0) / 2.0;
            let _ = writeln!(
                s,
                r#"<path d="M{cx:.1} {:.1}V{:.1}M{:.1} {:.1}H{:.1}M{:.1} {:.1}H{:.1}" stroke="black" fill="none"/>"#,
                y((mean - std).max(0.0)),
                y(mean + std),
                cx - 4.0,
                y(mean + std),
                cx + 4.0,
                cx - 4.0,
                y((mean - std).max(0.0)),
                cx + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">S{subject}</text>"#,
            gx + bar_w * reports.len() as f64 / 2.0,
            upper + plot_h + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{left:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        y(0.0),
        left + plot_w,
        y(0.0)
    );
    for (i, r) in reports.iter().enumerate() {
        let ly = upper + plot_h + lower + 18.0 * i as f64 - 12.0;
        let _ = writeln!(
            s,
            r#"<rect x="{left:.1}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{} ({:.2} mm)</text>"#,
            ly - 10.0,
            PALETTE[i % PALETTE.len()],
            left + 18.0,
            ly,
            escape(&r.experiment),
            r.overall_mean_mm
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `metrics.csv` for all reports plus a chart per suite. Reports
/// without a suite are charted together as `chart_experiments.svg`.
pub fn emit_report(reports: &[MetricsReport], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(HarnessError::Config("no reports to emit".into()));
    }
    ensure_dir(out_dir)?;
    let mut written = vec![];
    let table = out_dir.join(METRICS_FILE);
    write_metrics_table(reports, &table)?;
    written.push(table);
    let mut by_suite: BTreeMap<&str, Vec<MetricsReport>> = BTreeMap::new();
    for r in reports {
        by_suite.entry(r.suite.as_deref().unwrap_or("experiments")).or_default().push(r.clone());
    }
    for (suite, rs) in by_suite {
        let path = out_dir.join(format!("chart_{suite}.svg"));
        let svg = bar_chart_svg(&format!("MPJPE per subject: {suite}"), &rs);
        std::fs::write(&path, svg).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Report for a set of ablation tables: their pooled per-arm reports, any
/// extra reports, and one CSV per table.
pub fn emit_full_report(tables: &[AblationTable], extra: &[MetricsReport], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut reports: Vec<MetricsReport> = tables.iter().flat_map(|t| t.reports.iter().cloned()).collect();
    reports.extend_from_slice(extra);
    let mut written = emit_report(&reports, out_dir)?;
    for t in tables {
        let path = out_dir.join(format!("ablation_{}.csv", t.suite.name()));
        write_ablation_table(t, &path)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics_from_predictions;
    use mvpose_core::Pose3D;

    fn report(name: &str, suite: Option<&str>, err: f64) -> MetricsReport {
        let gt = Pose3D::new(vec![[0.0; 3]; 14]).unwrap();
        let preds: Vec<Pose3D> = (0..6).map(|k| Pose3D::new(vec![[err + k as f64, 0.0, 0.0]; 14]).unwrap()).collect();
        let mut r = metrics_from_predictions(name, &preds, &vec![gt; 6], &[1, 1, 2, 2, 3, 3]).unwrap();
        r.suite = suite.map(str::to_string);
        r
    }

    #[test]
    fn table_rows_cover_subjects_times_experiments_and_are_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let reports = vec![report("a", Some("inputs"), 5.0), report("b", Some("inputs"), 3.0), report("c", None, 1.0)];
        emit_report(&reports, dir.path()).unwrap();
        let first = std::fs::read(dir.path().join(METRICS_FILE)).unwrap();
        let text = String::from_utf8(first.clone()).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 3);
        assert_eq!(text.lines().next().unwrap(), METRICS_COLUMNS.join(","));
        let chart = std::fs::read(dir.path().join("chart_inputs.svg")).unwrap();
        emit_report(&reports, dir.path()).unwrap();
        assert_eq!(std::fs::read(dir.path().join(METRICS_FILE)).unwrap(), first);
        assert_eq!(std::fs::read(dir.path().join("chart_inputs.svg")).unwrap(), chart);
        assert!(!std::fs::read(dir.path().join("chart_experiments.svg")).unwrap().is_empty());
    }

    #[test]
    fn io_failures_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let err = emit_report(&[report("a", None, 1.0)], &blocker.join("sub")).unwrap_err();
        assert_eq!(err.category(), "io");
        assert!(err.to_string().contains("file"));
    }

    #[test]
    fn empty_report_list_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&[], dir.path()).is_err());
    }
}
