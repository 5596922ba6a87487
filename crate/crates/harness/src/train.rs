//! Stage-1 (2D heatmaps) and stage-2 (3D pose) training loops.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mvpose_core::heatmap::render_pose_heatmaps;
use mvpose_core::integrator::heatmap_channel_order;
use mvpose_core::loss::grouped_norm_loss;
use mvpose_core::nn::{Gradients, NodeId, Optimizer, Tape};
use mvpose_core::{FeatureMap, MultiViewIntegrator, ViewPerceptron};

use crate::config::{Stage, TrainConfig};
use crate::data::LoadedSplit;
use crate::error::{HarnessError, Result};
use crate::features::FeatureCache;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage: Stage,
    /// Mean per-sample training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean loss of each optimizer step's batch.
    pub step_losses: Vec<f64>,
    pub steps: usize,
    pub samples_per_epoch: usize,
}

/// Shuffled minibatch schedule shared by both stages. `step` receives the
/// batch item indices plus (epoch, batch) and returns the summed loss.
fn run_schedule<F>(stage: Stage, n_items: usize, cfg: &TrainConfig, mut step: F) -> Result<TrainReport>
where
    F: FnMut(&[usize], usize, usize, usize) -> Result<f64>,
{
    let mut report = TrainReport {
        stage,
        epoch_losses: vec![],
        step_losses: vec![],
        steps: 0,
        samples_per_epoch: n_items,
    };
    let mut order: Vec<usize> = (0..n_items).collect();
    'epochs: for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mvpose_rig::mix_seed(&[cfg.seed, epoch as u64]));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut seen = 0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            if cfg.max_steps.is_some_and(|m| report.steps >= m) {
                if seen > 0 {
                    report.epoch_losses.push(total / seen as f64);
                }
                break 'epochs;
            }
            let loss = step(batch, epoch, b, report.steps)?;
            total += loss;
            seen += batch.len();
            report.step_losses.push(loss / batch.len() as f64);
            report.steps += 1;
        }
        let mean = total / seen as f64;
        info!("{stage:?} epoch {epoch}: loss {mean:.6}");
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

fn non_finite(stage: &'static str, epoch: usize, batch: usize, step: usize, loss: f64) -> HarnessError {
    HarnessError::NonFiniteLoss {
        stage,
        epoch,
        batch,
        step,
        loss,
    }
}

fn heatmap_target(split: &LoadedSplit, sample: usize, view: usize, res: usize) -> Result<FeatureMap> {
    Ok(render_pose_heatmaps(&split.samples[sample].pose_2d[view], split.image_size, res)?)
}

fn check_perceptron(perceptron: &ViewPerceptron, split: &LoadedSplit) -> Result<()> {
    let n = perceptron.config().input_size;
    if split.image_size != [n, n] {
        return Err(HarnessError::Mismatch(format!(
            "perceptron input {n}x{n} but images are {:?}",
            split.image_size
        )));
    }
    let joints = split.samples[0].pose_3d.num_joints();
    if perceptron.config().num_joints != joints {
        return Err(HarnessError::Mismatch(format!(
            "perceptron predicts {} joints, data has {joints}",
            perceptron.config().num_joints
        )));
    }
    Ok(())
}

/// Fits the perceptron to ground-truth heatmaps of every view of every
/// sample. The data order depends only on `cfg.seed`.
pub fn train_stage1(perceptron: &mut ViewPerceptron, split: &LoadedSplit, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate(Stage::Stage1_2d)?;
    if split.is_empty() {
        return Err(HarnessError::EmptySplit("stage-1 training"));
    }
    check_perceptron(perceptron, split)?;
    let res = perceptron.config().heatmap_resolution;
    let views = split.num_views;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, perceptron.params());
    run_schedule(Stage::Stage1_2d, split.len() * views, cfg, |batch, epoch, b, step| {
        let mut grads = Gradients::zeros_like(perceptron.params());
        let mut total = 0.0;
        for &item in batch {
            let (s, v) = (item / views, item % views);
            let image = split.image(s, v)?;
            let target = heatmap_target(split, s, v, res)?;
            let (loss, g) = perceptron.loss_and_grad(&image, &target, cfg.loss)?;
            if !loss.is_finite() || !g.is_finite() {
                return Err(non_finite("stage-1", epoch, b, step, loss));
            }
            total += loss;
            grads.accumulate(&g);
        }
        grads.scale(1.0 / batch.len() as f64);
        opt.step(perceptron.params_mut(), &grads);
        Ok(total)
    })
}

/// Mean stage-1 loss over every (sample, view).
pub fn stage1_loss(perceptron: &ViewPerceptron, split: &LoadedSplit, cfg: &TrainConfig) -> Result<f64> {
    let res = perceptron.config().heatmap_resolution;
    let mut total = 0.0;
    for s in 0..split.len() {
        for v in 0..split.num_views {
            total += perceptron.loss(&split.image(s, v)?, &heatmap_target(split, s, v, res)?, cfg.loss)?;
        }
    }
    Ok(total / (split.len() * split.num_views) as f64)
}

fn check_integrator(integrator: &MultiViewIntegrator, perceptron: &ViewPerceptron, views: &[usize]) -> Result<()> {
    let ic = integrator.config();
    let pc = perceptron.config();
    if ic.num_views != views.len() {
        return Err(HarnessError::Mismatch(format!(
            "integrator expects {} views, {} selected",
            ic.num_views,
            views.len()
        )));
    }
    if ic.resolution != pc.heatmap_resolution || ic.num_joints != pc.num_joints {
        return Err(HarnessError::Mismatch(format!(
            "integrator ({} px, {} joints) does not match perceptron ({} px, {} joints)",
            ic.resolution, ic.num_joints, pc.heatmap_resolution, pc.num_joints
        )));
    }
    if ic.variant.uses_skips() && ic.skip_channels != pc.base_channels {
        return Err(HarnessError::Mismatch(format!(
            "integrator expects {} skip channels, perceptron emits {}",
            ic.skip_channels, pc.base_channels
        )));
    }
    Ok(())
}

/// Trains the integrator on features of a frozen perceptron. The
/// perceptron is only read.
pub fn train_stage2(
    integrator: &mut MultiViewIntegrator,
    perceptron: &ViewPerceptron,
    split: &LoadedSplit,
    views: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if cfg.joint_finetune {
        return Err(HarnessError::Config(
            "joint_finetune needs train_stage2_joint, which takes the perceptron mutably".into(),
        ));
    }
    if split.is_empty() {
        return Err(HarnessError::EmptySplit("stage-2 training"));
    }
    check_perceptron(perceptron, split)?;
    check_integrator(integrator, perceptron, views)?;
    let cache = FeatureCache::build(perceptron, split)?;
    train_stage2_cached(integrator, &cache, split, views, cfg)
}

/// Stage 2 on precomputed perceptron features.
pub fn train_stage2_cached(
    integrator: &mut MultiViewIntegrator,
    cache: &FeatureCache,
    split: &LoadedSplit,
    views: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate(Stage::Stage2_3d)?;
    if cfg.joint_finetune {
        return Err(HarnessError::Config("cached features cannot be fine-tuned".into()));
    }
    if split.is_empty() {
        return Err(HarnessError::EmptySplit("stage-2 training"));
    }
    split.check_views(views)?;
    if cache.len() != split.len() {
        return Err(HarnessError::Mismatch("feature cache and split differ in length".into()));
    }
    if integrator.config().num_views != views.len() {
        return Err(HarnessError::Mismatch(format!(
            "integrator expects {} views, {} selected",
            integrator.config().num_views,
            views.len()
        )));
    }
    let variant = integrator.config().variant;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, integrator.params());
    run_schedule(Stage::Stage2_3d, split.len(), cfg, |batch, epoch, b, step| {
        let mut grads = Gradients::zeros_like(integrator.params());
        let mut total = 0.0;
        for &s in batch {
            let fused = cache.fused(s, views, variant)?;
            let (loss, g) = integrator.loss_and_grad(&fused, &split.samples[s].target, cfg.loss)?;
            if !loss.is_finite() || !g.is_finite() {
                return Err(non_finite("stage-2", epoch, b, step, loss));
            }
            total += loss;
            grads.accumulate(&g);
        }
        grads.scale(1.0 / batch.len() as f64);
        opt.step(integrator.params_mut(), &grads);
        Ok(total)
    })
}

/// Mean stage-2 loss over the split.
pub fn stage2_loss(
    integrator: &MultiViewIntegrator,
    cache: &FeatureCache,
    split: &LoadedSplit,
    views: &[usize],
    cfg: &TrainConfig,
) -> Result<f64> {
    let variant = integrator.config().variant;
    let mut total = 0.0;
    for s in 0..split.len() {
        let pred = integrator.forward(&cache.fused(s, views, variant)?)?;
        total += mvpose_core::pose_loss(&pred, &split.samples[s].target, cfg.loss)?;
    }
    Ok(total / split.len() as f64)
}

/// One joint forward/backward pass through perceptron and integrator.
fn joint_loss_and_grad(
    integrator: &MultiViewIntegrator,
    perceptron: &ViewPerceptron,
    split: &LoadedSplit,
    sample: usize,
    views: &[usize],
    cfg: &TrainConfig,
) -> Result<(f64, Gradients, Gradients)> {
    let ic = integrator.config();
    let res = ic.resolution;
    let mut tape = Tape::new();
    let pset = tape.bind(perceptron.params());
    let iset = tape.bind(integrator.params());
    let mut heat = vec![];
    let mut skips: Vec<Vec<NodeId>> = vec![];
    let mut images = vec![];
    for &v in views {
        let image = split.image(sample, v)?;
        let small = image.map().resize_bilinear(res, res);
        let x = tape.leaf(image.into_map());
        let nodes = perceptron.forward_on(&mut tape, pset, x)?;
        heat.push(nodes.heatmaps());
        skips.push(nodes.skips);
        images.push(tape.leaf(small));
    }
    let order: Vec<(NodeId, usize)> = heatmap_channel_order(ic.num_joints, views.len())
        .into_iter()
        .map(|(n, j)| (heat[n], j))
        .collect();
    let mut main = tape.gather(&order)?;
    if ic.variant.uses_image() {
        let mut parts = vec![main];
        parts.extend(&images);
        main = tape.concat(&parts)?;
    }
    let skip_levels = if ic.variant.uses_skips() {
        let levels = (0..skips[0].len())
            .map(|s| {
                let parts: Vec<NodeId> = skips.iter().map(|v| v[s]).collect();
                tape.concat(&parts)
            })
            .collect::<mvpose_core::Result<Vec<_>>>()?;
        Some(levels)
    } else {
        None
    };
    let out = integrator.forward_on(&mut tape, iset, main, skip_levels.as_deref())?;
    let target = split.samples[sample].target.to_flat();
    let (loss, grad) = grouped_norm_loss(tape.value(out).data(), &target, ic.num_joints, cfg.loss)?;
    let mut grads = tape.backward(vec![(out, FeatureMap::vector(grad))])?;
    let ig = grads.pop().expect("two bound sets");
    let pg = grads.pop().expect("two bound sets");
    Ok((loss, pg, ig))
}

/// Stage 2 with the perceptron updated jointly through the 3D loss. Both
/// networks use the stage-2 learning rate.
pub fn train_stage2_joint(
    integrator: &mut MultiViewIntegrator,
    perceptron: &mut ViewPerceptron,
    split: &LoadedSplit,
    views: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate(Stage::Stage2_3d)?;
    if split.is_empty() {
        return Err(HarnessError::EmptySplit("stage-2 training"));
    }
    split.check_views(views)?;
    check_perceptron(perceptron, split)?;
    check_integrator(integrator, perceptron, views)?;
    let mut iopt = Optimizer::new(cfg.optimizer, cfg.learning_rate, integrator.params());
    let mut popt = Optimizer::new(cfg.optimizer, cfg.learning_rate, perceptron.params());
    run_schedule(Stage::Stage2_3d, split.len(), cfg, |batch, epoch, b, step| {
        let mut igrads = Gradients::zeros_like(integrator.params());
        let mut pgrads = Gradients::zeros_like(perceptron.params());
        let mut total = 0.0;
        for &s in batch {
            let (loss, pg, ig) = joint_loss_and_grad(integrator, perceptron, split, s, views, cfg)?;
            if !loss.is_finite() || !pg.is_finite() || !ig.is_finite() {
                return Err(non_finite("stage-2", epoch, b, step, loss));
            }
            total += loss;
            igrads.accumulate(&ig);
            pgrads.accumulate(&pg);
        }
        let inv = 1.0 / batch.len() as f64;
        igrads.scale(inv);
        pgrads.scale(inv);
        iopt.step(integrator.params_mut(), &igrads);
        popt.step(perceptron.params_mut(), &pgrads);
        Ok(total)
    })
}
