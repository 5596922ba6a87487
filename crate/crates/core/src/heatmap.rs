//! Gaussian heatmap targets, argmax decoding and the pixel-wise heatmap loss.
//!
//! Coordinates are in heatmap pixels with pixel centers at integer positions;
//! callers scale image coordinates by `W_h / W` first. A stack of `J` maps is
//! a [`FeatureMap`] with one channel per joint.

use crate::error::{CoreError, Result};
use crate::loss::{grouped_norm_loss, NormKind};
use crate::skeleton::Pose2D;
use crate::tensor::FeatureMap;

/// Standard deviation of the target Gaussian, in heatmap pixels (variance 1).
pub const SIGMA: f64 = 1.0;

/// One joint's map, row-major (`values[y * width + x]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn from_channel(stack: &FeatureMap, joint: usize) -> Heatmap {
        Heatmap {
            width: stack.width(),
            height: stack.height(),
            values: stack.channel(joint).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedHeatmap {
    pub map: Heatmap,
    /// The joint lies more than 3σ outside the map; `map` is all zeros.
    pub out_of_frame: bool,
}

/// Unnormalized Gaussian with peak 1 centered on `joint = (x, y)`.
pub fn render_heatmap(joint: [f64; 2], width: usize, height: usize) -> Result<RenderedHeatmap> {
    if width < 2 || height < 2 {
        return Err(CoreError::Config(format!(
            "heatmap must be at least 2x2, got {width}x{height}"
        )));
    }
    if !joint[0].is_finite() || !joint[1].is_finite() {
        return Err(CoreError::NonFinite("heatmap joint"));
    }
    let margin = 3.0 * SIGMA;
    let (x, y) = (joint[0], joint[1]);
    let out_of_frame = x < -margin
        || y < -margin
        || x > (width - 1) as f64 + margin
        || y > (height - 1) as f64 + margin;
    let mut values = vec![0.0; width * height];
    if !out_of_frame {
        let denom = 2.0 * SIGMA * SIGMA;
        for v in 0..height {
            let dy = v as f64 - y;
            for u in 0..width {
                let dx = u as f64 - x;
                values[v * width + u] = (-(dx * dx + dy * dy) / denom).exp();
            }
        }
    }
    Ok(RenderedHeatmap {
        map: Heatmap {
            width,
            height,
            values,
        },
        out_of_frame,
    })
}

/// Ground-truth stack for a 2D pose given in image pixels.
pub fn render_pose_heatmaps(
    pose: &Pose2D,
    image_size: [usize; 2],
    resolution: usize,
) -> Result<FeatureMap> {
    let sx = resolution as f64 / image_size[0] as f64;
    let sy = resolution as f64 / image_size[1] as f64;
    let mut out = FeatureMap::zeros(pose.num_joints(), resolution, resolution);
    for (j, c) in pose.coords.iter().enumerate() {
        let r = render_heatmap([c[0] * sx, c[1] * sy], resolution, resolution)?;
        out.channel_mut(j).copy_from_slice(&r.map.values);
    }
    Ok(out)
}

/// Argmax location `(x, y)`. Ties go to the lowest row-major index. `None`
/// for an all-zero map (no detection).
pub fn decode_heatmap(map: &Heatmap) -> Option<[usize; 2]> {
    if map.values.iter().all(|&v| v == 0.0) {
        return None;
    }
    let mut best = 0;
    for (i, &v) in map.values.iter().enumerate() {
        if v > map.values[best] {
            best = i;
        }
    }
    Some([best % map.width, best / map.width])
}

/// `(1/J) Σ_j ‖pred_j − gt_j‖` over the joint maps of two stacks.
pub fn heatmap_loss(pred: &FeatureMap, gt: &FeatureMap, kind: NormKind) -> Result<f64> {
    heatmap_loss_with_grad(pred, gt, kind).map(|(l, _)| l)
}

pub fn heatmap_loss_with_grad(
    pred: &FeatureMap,
    gt: &FeatureMap,
    kind: NormKind,
) -> Result<(f64, FeatureMap)> {
    if pred.shape() != gt.shape() {
        return Err(CoreError::Shape(format!(
            "heatmap stacks differ: {:?} vs {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let (loss, grad) = grouped_norm_loss(pred.data(), gt.data(), pred.channels(), kind)?;
    let [c, h, w] = pred.shape();
    Ok((loss, FeatureMap::from_vec(c, h, w, grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_values() {
        let r = render_heatmap([32.0, 32.0], 64, 64).unwrap();
        assert!(!r.out_of_frame);
        assert_eq!(r.map.at(32, 32), 1.0);
        assert!((r.map.at(33, 32) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((r.map.at(34, 32) - (-2.0f64).exp()).abs() < 1e-15);
        assert!((r.map.at(33, 32) - 0.60653).abs() < 1e-5);
        assert!((r.map.at(34, 32) - 0.13534).abs() < 1e-5);
        assert!(r.map.values.iter().all(|&v| v >= 0.0 && v <= 1.0));
    }

    #[test]
    fn far_outside_joint_gives_empty_map() {
        let r = render_heatmap([-3.5, 10.0], 16, 16).unwrap();
        assert!(r.out_of_frame);
        assert!(r.map.values.iter().all(|&v| v == 0.0));
        assert_eq!(decode_heatmap(&r.map), None);
        // within 3σ of the border still renders
        let r = render_heatmap([-2.5, 10.0], 16, 16).unwrap();
        assert!(!r.out_of_frame);
        assert!(r.map.at(0, 10) > 0.0);
    }

    #[test]
    fn tiny_maps_rejected() {
        assert!(render_heatmap([0.0, 0.0], 1, 5).is_err());
    }

    #[test]
    fn decode_tie_break_and_round_trip() {
        let uniform = Heatmap {
            width: 5,
            height: 4,
            values: vec![0.3; 20],
        };
        assert_eq!(decode_heatmap(&uniform), Some([0, 0]));
        for (x, y) in [(3, 3), (12, 5), (60, 60), (31, 7)] {
            let r = render_heatmap([x as f64, y as f64], 64, 64).unwrap();
            assert_eq!(decode_heatmap(&r.map), Some([x, y]));
        }
    }

    #[test]
    fn loss_examples() {
        let a = FeatureMap::from_vec(2, 2, 2, vec![0.1, 0.2, 0.3, 0.4, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(heatmap_loss(&a, &a, NormKind::Euclidean).unwrap(), 0.0);
        let mut b = FeatureMap::zeros(1, 3, 3);
        b.set(0, 1, 2, 3.0);
        let z = FeatureMap::zeros(1, 3, 3);
        assert_eq!(heatmap_loss(&b, &z, NormKind::Euclidean).unwrap(), 3.0);
        assert_eq!(heatmap_loss(&b, &z, NormKind::Squared).unwrap(), 9.0);
        assert!(heatmap_loss(&a, &z, NormKind::Euclidean).is_err());
    }

    #[test]
    fn loss_gradient_matches_central_differences() {
        let pred = FeatureMap::from_vec(
            3,
            2,
            3,
            (0..18).map(|i| ((i * 7) % 11) as f64 * 0.13 - 0.4).collect(),
        )
        .unwrap();
        let gt = FeatureMap::from_vec(3, 2, 3, (0..18).map(|i| (i % 5) as f64 * 0.2).collect()).unwrap();
        for kind in [NormKind::Euclidean, NormKind::Squared] {
            let (_, grad) = heatmap_loss_with_grad(&pred, &gt, kind).unwrap();
            let h = 1e-6;
            for i in 0..18 {
                let mut p = pred.clone();
                p.data_mut()[i] += h;
                let up = heatmap_loss(&p, &gt, kind).unwrap();
                p.data_mut()[i] -= 2.0 * h;
                let down = heatmap_loss(&p, &gt, kind).unwrap();
                let fd = (up - down) / (2.0 * h);
                let an = grad.data()[i];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel < 1e-4, "index {i}: fd {fd} analytic {an}");
            }
        }
    }

    proptest! {
        #[test]
        fn render_is_translation_equivariant(x in 10.0f64..40.0, y in 10.0f64..40.0, dx in -4i32..5, dy in -4i32..5) {
            let a = render_heatmap([x, y], 64, 64).unwrap().map;
            let b = render_heatmap([x + dx as f64, y + dy as f64], 64, 64).unwrap().map;
            for v in 4..60usize {
                for u in 4..60usize {
                    let su = (u as i32 + dx) as usize;
                    let sv = (v as i32 + dy) as usize;
                    prop_assert!((a.at(u, v) - b.at(su, sv)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn loss_is_a_metric_per_joint(
            a in prop::collection::vec(-1.0f64..1.0, 12),
            b in prop::collection::vec(-1.0f64..1.0, 12),
            c in prop::collection::vec(-1.0f64..1.0, 12),
        ) {
            let m = |v: &Vec<f64>| FeatureMap::from_vec(3, 2, 2, v.clone()).unwrap();
            let (a, b, c) = (m(&a), m(&b), m(&c));
            let l = |p: &FeatureMap, q: &FeatureMap| heatmap_loss(p, q, NormKind::Euclidean).unwrap();
            prop_assert_eq!(l(&a, &b), l(&b, &a));
            prop_assert_eq!(l(&a, &a), 0.0);
            for j in 0..3 {
                let pick = |x: &FeatureMap| FeatureMap::from_vec(1, 2, 2, x.channel(j).to_vec()).unwrap();
                let (aj, bj, cj) = (pick(&a), pick(&b), pick(&c));
                prop_assert!(l(&aj, &cj) <= l(&aj, &bj) + l(&bj, &cj) + 1e-12);
            }
        }
    }
}
