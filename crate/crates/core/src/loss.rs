//! Grouped-norm losses shared by the 2D heatmap loss and the 3D pose loss.
//!
//! Both losses average, over joints, a norm of the per-joint difference. For
//! heatmaps a group is one joint's map; for poses it is one joint's xyz.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// `(1/J) Σ ‖a_j − b_j‖`
    #[default]
    Euclidean,
    /// `(1/J) Σ ‖a_j − b_j‖²`
    Squared,
}

/// Loss and its gradient with respect to `pred`.
pub fn grouped_norm_loss(
    pred: &[f64],
    target: &[f64],
    groups: usize,
    kind: NormKind,
) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(CoreError::Shape(format!(
            "prediction has {} values, target {}",
            pred.len(),
            target.len()
        )));
    }
    if groups == 0 || pred.len() % groups != 0 {
        return Err(CoreError::Shape(format!(
            "{} values cannot be split into {groups} joints",
            pred.len()
        )));
    }
    let size = pred.len() / groups;
    let inv_j = 1.0 / groups as f64;
    let mut grad = vec![0.0; pred.len()];
    let mut total = 0.0;
    for ((p, t), g) in pred
        .chunks_exact(size)
        .zip(target.chunks_exact(size))
        .zip(grad.chunks_exact_mut(size))
    {
        let sq: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        match kind {
            NormKind::Euclidean => {
                let norm = sq.sqrt();
                total += norm;
                // subgradient 0 at the kink
                if norm > 0.0 {
                    for ((gi, a), b) in g.iter_mut().zip(p).zip(t) {
                        *gi = (a - b) / norm * inv_j;
                    }
                }
            }
            NormKind::Squared => {
                total += sq;
                for ((gi, a), b) in g.iter_mut().zip(p).zip(t) {
                    *gi = 2.0 * (a - b) * inv_j;
                }
            }
        }
    }
    Ok((total * inv_j, grad))
}
