//! MPJPE evaluation and per-subject summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use mvpose_core::{denormalize_pose, JointId, MultiViewIntegrator, Pose3D, ViewPerceptron};

use crate::data::LoadedSplit;
use crate::error::{HarnessError, Result};
use crate::features::FeatureCache;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMetrics {
    pub subject_id: u32,
    pub n_frames: usize,
    /// Mean per-frame MPJPE.
    pub mean_mm: f64,
    /// Population variance of per-frame MPJPE.
    pub variance_mm2: f64,
    pub std_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMetrics {
    pub joint: String,
    pub mean_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub experiment: String,
    /// Ablation suite this report belongs to, if any.
    pub suite: Option<String>,
    /// Training seed; `None` for reports pooled over seeds.
    pub seed: Option<u64>,
    pub n_frames: usize,
    /// Mean over all frames (equivalently, the frame-weighted mean of subject means).
    pub overall_mean_mm: f64,
    /// Standard deviation of per-frame MPJPE over all frames.
    pub overall_std_frames_mm: f64,
    /// Standard deviation of the per-subject means.
    pub overall_std_subjects_mm: f64,
    pub subjects: Vec<SubjectMetrics>,
    pub per_joint: Vec<JointMetrics>,
    pub metadata: serde_json::Value,
}

/// Euclidean distance of every joint pair.
pub fn joint_errors(pred: &Pose3D, gt: &Pose3D) -> Result<Vec<f64>> {
    if pred.num_joints() != gt.num_joints() {
        return Err(HarnessError::Mismatch(format!(
            "{} predicted joints vs {} ground-truth joints",
            pred.num_joints(),
            gt.num_joints()
        )));
    }
    Ok(pred
        .coords()
        .iter()
        .zip(gt.coords())
        .map(|(p, g)| ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt())
        .collect())
}

/// Mean over frames and joints of the per-joint Euclidean distance.
pub fn mpjpe(preds: &[Pose3D], gts: &[Pose3D]) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(HarnessError::Mismatch(format!("{} predictions for {} frames", preds.len(), gts.len())));
    }
    if preds.is_empty() {
        return Err(HarnessError::EmptySplit("evaluation"));
    }
    let mut total = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        let e = joint_errors(p, g)?;
        total += e.iter().sum::<f64>() / e.len() as f64;
    }
    Ok(total / preds.len() as f64)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Builds a report from predictions, ground truth and each frame's subject.
pub fn metrics_from_predictions(
    experiment: &str,
    preds: &[Pose3D],
    gts: &[Pose3D],
    subjects: &[u32],
) -> Result<MetricsReport> {
    if preds.len() != gts.len() || preds.len() != subjects.len() {
        return Err(HarnessError::Mismatch("predictions, ground truth and subjects differ in length".into()));
    }
    if preds.is_empty() {
        return Err(HarnessError::EmptySplit("evaluation"));
    }
    let joints = gts[0].num_joints();
    let mut frame_errors = Vec::with_capacity(preds.len());
    let mut joint_sums = vec![0.0; joints];
    let mut by_subject: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for ((p, g), &s) in preds.iter().zip(gts).zip(subjects) {
        let e = joint_errors(p, g)?;
        if e.len() != joints {
            return Err(HarnessError::Mismatch("frames have different joint counts".into()));
        }
        for (acc, v) in joint_sums.iter_mut().zip(&e) {
            *acc += v;
        }
        let frame = e.iter().sum::<f64>() / joints as f64;
        frame_errors.push(frame);
        by_subject.entry(s).or_default().push(frame);
    }
    let subjects: Vec<SubjectMetrics> = by_subject
        .into_iter()
        .map(|(subject_id, errs)| {
            let (mean, var) = mean_var(&errs);
            SubjectMetrics {
                subject_id,
                n_frames: errs.len(),
                mean_mm: mean,
                variance_mm2: var,
                std_mm: var.sqrt(),
            }
        })
        .collect();
    let (overall, var_frames) = mean_var(&frame_errors);
    let subject_means: Vec<f64> = subjects.iter().map(|s| s.mean_mm).collect();
    let (_, var_subjects) = mean_var(&subject_means);
    let n = preds.len();
    Ok(MetricsReport {
        experiment: experiment.to_string(),
        suite: None,
        seed: None,
        n_frames: n,
        overall_mean_mm: overall,
        overall_std_frames_mm: var_frames.sqrt(),
        overall_std_subjects_mm: var_subjects.sqrt(),
        subjects,
        per_joint: joint_sums
            .iter()
            .enumerate()
            .map(|(j, s)| JointMetrics {
                joint: JointId::from_index(j).map_or_else(|| format!("joint{j}"), |id| id.name().to_string()),
                mean_mm: s / n as f64,
            })
            .collect(),
        metadata: serde_json::Value::Null,
    })
}

impl MetricsReport {
    /// Frame-weighted mean of the per-subject means.
    pub fn weighted_subject_mean(&self) -> f64 {
        let total: f64 = self.subjects.iter().map(|s| s.mean_mm * s.n_frames as f64).sum();
        total / self.subjects.iter().map(|s| s.n_frames).sum::<usize>() as f64
    }

    /// Combines reports over the same subjects (e.g. several seeds) as if
    /// all their frames had been evaluated together.
    pub fn pool(experiment: &str, reports: &[MetricsReport]) -> Result<MetricsReport> {
        let first = reports.first().ok_or(HarnessError::EmptySplit("report pool"))?;
        // Per subject: (n, sum, sum of squares).
        let mut acc: BTreeMap<u32, (usize, f64, f64)> = BTreeMap::new();
        let mut joint_sums = vec![0.0; first.per_joint.len()];
        let mut n_total = 0;
        for r in reports {
            if r.per_joint.len() != joint_sums.len() {
                return Err(HarnessError::Mismatch("pooled reports differ in joint count".into()));
            }
            for s in &r.subjects {
                let e = acc.entry(s.subject_id).or_insert((0, 0.0, 0.0));
                let n = s.n_frames as f64;
                e.0 += s.n_frames;
                e.1 += s.mean_mm * n;
                e.2 += (s.variance_mm2 + s.mean_mm * s.mean_mm) * n;
            }
            for (a, j) in joint_sums.iter_mut().zip(&r.per_joint) {
                *a += j.mean_mm * r.n_frames as f64;
            }
            n_total += r.n_frames;
        }
        let subjects: Vec<SubjectMetrics> = acc
            .into_iter()
            .map(|(subject_id, (n, sum, sq))| {
                let mean = sum / n as f64;
                let var = (sq / n as f64 - mean * mean).max(0.0);
                SubjectMetrics {
                    subject_id,
                    n_frames: n,
                    mean_mm: mean,
                    variance_mm2: var,
                    std_mm: var.sqrt(),
                }
            })
            .collect();
        let n = n_total as f64;
        let overall = subjects.iter().map(|s| s.mean_mm * s.n_frames as f64).sum::<f64>() / n;
        let second = subjects
            .iter()
            .map(|s| (s.variance_mm2 + s.mean_mm * s.mean_mm) * s.n_frames as f64)
            .sum::<f64>()
            / n;
        let means: Vec<f64> = subjects.iter().map(|s| s.mean_mm).collect();
        let (_, var_subjects) = mean_var(&means);
        Ok(MetricsReport {
            experiment: experiment.to_string(),
            suite: first.suite.clone(),
            seed: None,
            n_frames: n_total,
            overall_mean_mm: overall,
            overall_std_frames_mm: (second - overall * overall).max(0.0).sqrt(),
            overall_std_subjects_mm: var_subjects.sqrt(),
            subjects,
            per_joint: first
                .per_joint
                .iter()
                .zip(&joint_sums)
                .map(|(j, s)| JointMetrics {
                    joint: j.joint.clone(),
                    mean_mm: s / n,
                })
                .collect(),
            metadata: serde_json::json!({ "pooled_reports": reports.len() }),
        })
    }
}

/// Denormalized predictions for every sample of a cached split.
pub fn predict_cached(
    integrator: &MultiViewIntegrator,
    cache: &FeatureCache,
    split: &LoadedSplit,
    views: &[usize],
) -> Result<Vec<Pose3D>> {
    split.check_views(views)?;
    if integrator.config().num_views != views.len() {
        return Err(HarnessError::Mismatch(format!(
            "integrator expects {} views, {} selected",
            integrator.config().num_views,
            views.len()
        )));
    }
    let variant = integrator.config().variant;
    (0..split.len())
        .map(|s| {
            let pred = integrator.forward(&cache.fused(s, views, variant)?)?;
            Ok(denormalize_pose(&pred, &split.norm_params)?)
        })
        .collect()
}

pub fn evaluate_cached(
    experiment: &str,
    integrator: &MultiViewIntegrator,
    cache: &FeatureCache,
    split: &LoadedSplit,
    views: &[usize],
) -> Result<MetricsReport> {
    let preds = predict_cached(integrator, cache, split, views)?;
    let gts: Vec<Pose3D> = split.samples.iter().map(|s| s.pose_3d.clone()).collect();
    let subjects: Vec<u32> = split.samples.iter().map(|s| s.subject_id).collect();
    metrics_from_predictions(experiment, &preds, &gts, &subjects)
}

/// Runs both networks on the split and scores the denormalized output
/// against the split's 3D ground truth.
pub fn evaluate_mpjpe(
    experiment: &str,
    perceptron: &ViewPerceptron,
    integrator: &MultiViewIntegrator,
    split: &LoadedSplit,
    views: &[usize],
) -> Result<MetricsReport> {
    if split.is_empty() {
        return Err(HarnessError::EmptySplit("evaluation"));
    }
    let cache = FeatureCache::build(perceptron, split)?;
    evaluate_cached(experiment, integrator, &cache, split, views)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pose(offset: [f64; 3], base: f64) -> Pose3D {
        Pose3D::new(
            (0..14)
                .map(|j| [base + j as f64 + offset[0], 2.0 * j as f64 + offset[1], offset[2] - j as f64])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_predictions_score_zero() {
        let gts = vec![pose([0.0; 3], 1.0), pose([0.0; 3], 5.0)];
        let r = metrics_from_predictions("x", &gts, &gts, &[1, 2]).unwrap();
        assert_eq!(r.overall_mean_mm, 0.0);
        assert!(r.subjects.iter().all(|s| s.mean_mm == 0.0 && s.variance_mm2 == 0.0));
    }

    #[test]
    fn three_four_five_offset() {
        let gts = vec![pose([0.0; 3], 1.0), pose([0.0; 3], -4.0)];
        let preds = vec![pose([3.0, 4.0, 0.0], 1.0), pose([3.0, 4.0, 0.0], -4.0)];
        assert!((mpjpe(&preds, &gts).unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn empty_and_mismatched_inputs_error() {
        assert!(mpjpe(&[], &[]).is_err());
        let a = vec![pose([0.0; 3], 0.0)];
        assert!(metrics_from_predictions("x", &a, &a, &[]).is_err());
    }

    fn arb_frames() -> impl Strategy<Value = Vec<(Vec<[f64; 3]>, Vec<[f64; 3]>, u32)>> {
        let joint = || prop::array::uniform3(-1000.0..1000.0f64);
        prop::collection::vec(
            (prop::collection::vec(joint(), 3), prop::collection::vec(joint(), 3), 0u32..4),
            1..12,
        )
    }

    proptest! {
        #[test]
        fn report_matches_double_loop_oracle(frames in arb_frames()) {
            let preds: Vec<Pose3D> = frames.iter().map(|f| Pose3D::new(f.0.clone()).unwrap()).collect();
            let gts: Vec<Pose3D> = frames.iter().map(|f| Pose3D::new(f.1.clone()).unwrap()).collect();
            let subs: Vec<u32> = frames.iter().map(|f| f.2).collect();
            let r = metrics_from_predictions("p", &preds, &gts, &subs).unwrap();
            let mut total = 0.0;
            for f in &frames {
                for j in 0..3 {
                    let d: f64 = (0..3).map(|k| (f.0[j][k] - f.1[j][k]).powi(2)).sum();
                    total += d.sqrt();
                }
            }
            let oracle = total / (3 * frames.len()) as f64;
            prop_assert!((r.overall_mean_mm - oracle).abs() <= 1e-9 * oracle.max(1.0));
            prop_assert!((r.weighted_subject_mean() - r.overall_mean_mm).abs() <= 1e-9 * oracle.max(1.0));
            prop_assert_eq!(r.subjects.iter().map(|s| s.n_frames).sum::<usize>(), frames.len());
        }

        #[test]
        fn pooling_equals_joint_evaluation(frames in arb_frames(), cut in 0usize..12) {
            let preds: Vec<Pose3D> = frames.iter().map(|f| Pose3D::new(f.0.clone()).unwrap()).collect();
            let gts: Vec<Pose3D> = frames.iter().map(|f| Pose3D::new(f.1.clone()).unwrap()).collect();
            let subs: Vec<u32> = frames.iter().map(|f| f.2).collect();
            let cut = cut.min(frames.len() - 1).max(1).min(frames.len());
            prop_assume!(cut < frames.len());
            let whole = metrics_from_predictions("w", &preds, &gts, &subs).unwrap();
            let a = metrics_from_predictions("a", &preds[..cut], &gts[..cut], &subs[..cut]).unwrap();
            let b = metrics_from_predictions("b", &preds[cut..], &gts[cut..], &subs[cut..]).unwrap();
            let pooled = MetricsReport::pool("w", &[a, b]).unwrap();
            let tol = 1e-7 * whole.overall_mean_mm.max(1.0);
            prop_assert!((pooled.overall_mean_mm - whole.overall_mean_mm).abs() <= tol);
            prop_assert!((pooled.overall_std_frames_mm - whole.overall_std_frames_mm).abs() <= 1e-5 * whole.overall_mean_mm.max(1.0));
            for (p, w) in pooled.subjects.iter().zip(&whole.subjects) {
                prop_assert_eq!(p.n_frames, w.n_frames);
                prop_assert!((p.mean_mm - w.mean_mm).abs() <= tol);
            }
        }
    }
}
