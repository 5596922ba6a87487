//! Multi-view integration network: fuses per-view heatmaps (and optionally
//! images or skip pyramids) by channel concatenation and regresses the
//! normalized 3D pose with an encoder followed by one fully-connected layer.
//!
//! Fused heatmap channels are grouped by joint: channel `j·N + n` holds joint
//! `j` seen from view `n`. Views are always in ascending camera order, and
//! predictions depend on that order.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::loss::{grouped_norm_loss, NormKind};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{Conv2d, Gradients, Initializer, Linear, NodeId, ParamSet, Residual, SetHandle, Tape};
use crate::perceptron::{SkipPyramid, SKIP_LEVELS};
use crate::skeleton::{NormalizedPose3D, NUM_JOINTS};
use crate::tensor::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionInputVariant {
    HeatmapsOnly,
    HeatmapsPlusImage,
    HeatmapsPlusSkips,
}

impl FusionInputVariant {
    pub const ALL: [FusionInputVariant; 3] = [
        FusionInputVariant::HeatmapsOnly,
        FusionInputVariant::HeatmapsPlusImage,
        FusionInputVariant::HeatmapsPlusSkips,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FusionInputVariant::HeatmapsOnly => "heatmaps",
            FusionInputVariant::HeatmapsPlusImage => "heatmaps+image",
            FusionInputVariant::HeatmapsPlusSkips => "heatmaps+skips",
        }
    }

    pub fn uses_image(self) -> bool {
        self == FusionInputVariant::HeatmapsPlusImage
    }

    pub fn uses_skips(self) -> bool {
        self == FusionInputVariant::HeatmapsPlusSkips
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorArch {
    SimpleEncoder,
    HalfHourglass,
}

impl IntegratorArch {
    pub fn label(self) -> &'static str {
        match self {
            IntegratorArch::SimpleEncoder => "simple-encoder",
            IntegratorArch::HalfHourglass => "half-hourglass",
        }
    }
}

/// Image channels appended per view by [`FusionInputVariant::HeatmapsPlusImage`].
pub const IMAGE_CHANNELS: usize = 3;

/// Smallest feature side the encoders pool down to before the FC head.
pub const MIN_FINAL_RESOLUTION: usize = 4;

/// Fixed multipliers applied to the integrator inputs, usually the inverse
/// standard deviation of each input kind on the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputScales {
    pub heatmaps: f64,
    pub image: f64,
    /// One factor per skip level.
    pub skips: [f64; SKIP_LEVELS],
}

impl Default for InputScales {
    fn default() -> Self {
        Self {
            heatmaps: 1.0,
            image: 1.0,
            skips: [1.0; SKIP_LEVELS],
        }
    }
}

impl InputScales {
    fn validate(&self) -> Result<()> {
        let all = [self.heatmaps, self.image].into_iter().chain(self.skips);
        if all.into_iter().any(|k| !k.is_finite() || k <= 0.0) {
            return Err(CoreError::Config(format!("input scales must be finite and positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub arch: IntegratorArch,
    pub variant: FusionInputVariant,
    pub num_views: usize,
    pub num_joints: usize,
    /// Heatmap resolution of the incoming views.
    pub resolution: usize,
    pub trunk_channels: usize,
    /// Per-view channel count of each skip level.
    pub skip_channels: usize,
    /// Residual modules at each half-hourglass stage.
    pub residuals_per_stage: usize,
    pub input_scales: InputScales,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            arch: IntegratorArch::HalfHourglass,
            variant: FusionInputVariant::HeatmapsPlusSkips,
            num_views: 2,
            num_joints: NUM_JOINTS,
            resolution: 64,
            trunk_channels: 32,
            skip_channels: 16,
            residuals_per_stage: 2,
            input_scales: InputScales::default(),
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.arch == IntegratorArch::SimpleEncoder && self.variant.uses_skips() {
            return Err(CoreError::Unsupported(
                "the simple encoder has no pooling stages to receive skip features".into(),
            ));
        }
        if self.num_views == 0
            || self.num_joints == 0
            || self.trunk_channels == 0
            || self.skip_channels == 0
            || self.residuals_per_stage == 0
        {
            return Err(CoreError::Config(
                "views, joints, channel counts and residuals per stage must be >= 1".into(),
            ));
        }
        self.input_scales.validate()?;
        let bottom = 1 << SKIP_LEVELS;
        if self.resolution == 0 || self.resolution % bottom != 0 {
            return Err(CoreError::Config(format!(
                "resolution {} must be a positive multiple of {bottom}",
                self.resolution
            )));
        }
        Ok(())
    }

    pub fn main_channels(&self) -> usize {
        let mut c = self.num_joints * self.num_views;
        if self.variant.uses_image() {
            c += IMAGE_CHANNELS * self.num_views;
        }
        c
    }

    /// Side of the encoder output: one halving per skip level, except that the
    /// last halving is skipped when it would go below
    /// [`MIN_FINAL_RESOLUTION`].
    pub fn final_resolution(&self) -> usize {
        let deepest = self.resolution >> SKIP_LEVELS;
        deepest.max(MIN_FINAL_RESOLUTION.min(self.resolution >> (SKIP_LEVELS - 1)))
    }

    /// Number of resolution halvings in either encoder.
    pub fn encoder_stages(&self) -> usize {
        (self.resolution / self.final_resolution()).trailing_zeros() as usize
    }
}

/// One view's perceptron outputs plus its input image.
#[derive(Debug, Clone)]
pub struct ViewFeatures {
    pub heatmaps: FeatureMap,
    pub skips: SkipPyramid,
    /// Any resolution; resampled bilinearly to the heatmap resolution when fused.
    pub image: Option<FeatureMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedInput {
    pub variant: FusionInputVariant,
    pub num_views: usize,
    pub num_joints: usize,
    /// Heatmap block (joint-grouped), followed by image channels when present.
    pub main: FeatureMap,
    /// Per-level skip maps concatenated across views (view-major channels).
    pub skips: Option<Vec<FeatureMap>>,
}

impl FusedInput {
    /// Heatmap of `joint` as seen from `view`.
    pub fn heatmap(&self, joint: usize, view: usize) -> &[f64] {
        self.main.channel(joint * self.num_views + view)
    }
}

/// `(view, channel)` source of every fused heatmap channel.
pub fn heatmap_channel_order(num_joints: usize, num_views: usize) -> Vec<(usize, usize)> {
    (0..num_joints)
        .flat_map(|j| (0..num_views).map(move |n| (n, j)))
        .collect()
}

pub fn fuse_views(views: &[ViewFeatures], variant: FusionInputVariant) -> Result<FusedInput> {
    let first = views.first().ok_or(CoreError::Empty("view list"))?;
    let [joints, h, w] = first.heatmaps.shape();
    for (n, v) in views.iter().enumerate().skip(1) {
        if v.heatmaps.shape() != first.heatmaps.shape() {
            return Err(CoreError::Shape(format!(
                "view {n} heatmaps {:?} differ from view 0 {:?}",
                v.heatmaps.shape(),
                first.heatmaps.shape()
            )));
        }
        for (s, (a, b)) in v.skips.levels().iter().zip(first.skips.levels()).enumerate() {
            if a.shape() != b.shape() {
                return Err(CoreError::Shape(format!(
                    "view {n} skip level {s} {:?} differs from view 0 {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
    }
    let mut main = FeatureMap::zeros(joints * views.len(), h, w);
    for (i, (n, j)) in heatmap_channel_order(joints, views.len()).into_iter().enumerate() {
        main.channel_mut(i).copy_from_slice(views[n].heatmaps.channel(j));
    }
    if variant.uses_image() {
        let mut parts = vec![main];
        for (n, v) in views.iter().enumerate() {
            let img = v
                .image
                .as_ref()
                .ok_or_else(|| CoreError::MissingInput(format!("view {n} has no image")))?;
            if img.channels() != IMAGE_CHANNELS {
                return Err(CoreError::Shape(format!("view {n} image has {} channels", img.channels())));
            }
            parts.push(img.resize_bilinear(h, w));
        }
        let refs: Vec<&FeatureMap> = parts.iter().collect();
        main = FeatureMap::concat_channels(&refs)?;
    }
    let skips = if variant.uses_skips() {
        let levels = (0..SKIP_LEVELS)
            .map(|s| {
                let parts: Vec<&FeatureMap> = views.iter().map(|v| &v.skips.levels()[s]).collect();
                FeatureMap::concat_channels(&parts)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(levels)
    } else {
        None
    };
    Ok(FusedInput {
        variant,
        num_views: views.len(),
        num_joints: joints,
        main,
        skips,
    })
}

/// `(1/J) Σ_j ‖p_j − p̂_j‖` on normalized coordinates.
fn scale_uniform(tape: &mut Tape<'_>, node: NodeId, k: f64) -> Result<NodeId> {
    if k == 1.0 {
        return Ok(node);
    }
    let c = tape.value(node).channels();
    tape.scale_channels(node, &vec![k; c])
}

pub fn pose_loss(pred: &NormalizedPose3D, gt: &NormalizedPose3D, kind: NormKind) -> Result<f64> {
    if pred.num_joints() != gt.num_joints() {
        return Err(CoreError::Shape(format!(
            "{} predicted joints vs {} ground-truth joints",
            pred.num_joints(),
            gt.num_joints()
        )));
    }
    grouped_norm_loss(&pred.to_flat(), &gt.to_flat(), pred.num_joints(), kind).map(|(l, _)| l)
}

#[derive(Debug, Clone)]
enum Trunk {
    Simple(Vec<Conv2d>),
    /// One list of residual modules per stage.
    HalfHourglass(Vec<Vec<Residual>>),
}

#[derive(Debug, Clone)]
pub struct MultiViewIntegrator {
    config: IntegratorConfig,
    seed: u64,
    params: ParamSet,
    stem: Conv2d,
    trunk: Trunk,
    head: Linear,
    skip_branch: Option<Vec<Residual>>,
}

impl MultiViewIntegrator {
    pub const MODEL_TAG: &'static str = "multiview_integrator";

    /// Trunk parameters are created before the skip branch, so two variants
    /// with the same seed start from identical trunk weights.
    pub fn build(config: IntegratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut init = Initializer::new(seed);
        let c = config.trunk_channels;
        let stem = Conv2d::new(&mut params, &mut init, "stem", config.main_channels(), c, 3, 1, 1);
        let trunk = match config.arch {
            IntegratorArch::SimpleEncoder => Trunk::Simple(
                (0..config.encoder_stages())
                    .map(|s| Conv2d::new(&mut params, &mut init, &format!("trunk.{s}"), c, c, 2, 2, 0))
                    .collect(),
            ),
            IntegratorArch::HalfHourglass => Trunk::HalfHourglass(
                (0..SKIP_LEVELS)
                    .map(|s| {
                        (0..config.residuals_per_stage)
                            .map(|k| {
                                let name = if k == 0 { format!("trunk.{s}") } else { format!("trunk.{s}.{k}") };
                                Residual::new(&mut params, &mut init, &name, c, c)
                            })
                            .collect()
                    })
                    .collect(),
            ),
        };
        let flat = c * config.final_resolution() * config.final_resolution();
        let head = Linear::new(&mut params, &mut init, "head", flat, 3 * config.num_joints, 1.0);
        let skip_branch = config.variant.uses_skips().then(|| {
            (0..SKIP_LEVELS)
                .map(|s| {
                    Residual::projected(
                        &mut params,
                        &mut init,
                        &format!("skip.{s}"),
                        config.skip_channels * config.num_views,
                        c,
                    )
                })
                .collect()
        });
        Ok(Self {
            config,
            seed,
            params,
            stem,
            trunk,
            head,
            skip_branch,
        })
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Zero every weight and bias of the skip-fusion branch.
    pub fn zero_skip_branch(&mut self) {
        if let Some(branch) = &self.skip_branch {
            let ids: Vec<_> = branch.iter().flat_map(|r| r.params()).collect();
            for id in ids {
                self.params.get_mut(id).fill(0.0);
            }
        }
    }

    fn check_input(&self, main: &FeatureMap, skips: Option<&[&FeatureMap]>) -> Result<()> {
        let r = self.config.resolution;
        let expect = [self.config.main_channels(), r, r];
        if main.shape() != expect {
            return Err(CoreError::Shape(format!(
                "integrator expects fused input {expect:?}, got {:?}",
                main.shape()
            )));
        }
        match (self.config.variant.uses_skips(), skips) {
            (true, None) => {
                return Err(CoreError::MissingInput(
                    "heatmaps+skips variant needs fused skip features".into(),
                ))
            }
            (true, Some(levels)) => {
                if levels.len() != SKIP_LEVELS {
                    return Err(CoreError::Shape(format!("{} skip levels", levels.len())));
                }
                for (s, l) in levels.iter().enumerate() {
                    let expect = [self.config.skip_channels * self.config.num_views, r >> s, r >> s];
                    if l.shape() != expect {
                        return Err(CoreError::Shape(format!(
                            "skip level {s}: expected {expect:?}, got {:?}",
                            l.shape()
                        )));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Record a forward pass; returns the `3·J` output node.
    pub fn forward_on(
        &self,
        tape: &mut Tape<'_>,
        set: SetHandle,
        main: NodeId,
        skips: Option<&[NodeId]>,
    ) -> Result<NodeId> {
        {
            let skip_vals: Option<Vec<&FeatureMap>> = skips.map(|s| s.iter().map(|&n| tape.value(n)).collect());
            self.check_input(tape.value(main), skip_vals.as_deref())?;
        }
        let main = self.scale_main(tape, main)?;
        let skips = match skips {
            Some(levels) => Some(
                levels
                    .iter()
                    .zip(self.config.input_scales.skips)
                    .map(|(&n, k)| scale_uniform(tape, n, k))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let mut x = tape.conv(set, &self.stem, main)?;
        match &self.trunk {
            Trunk::Simple(convs) => {
                x = tape.relu(x);
                for conv in convs {
                    x = tape.conv(set, conv, x)?;
                    x = tape.relu(x);
                }
            }
            Trunk::HalfHourglass(stages) => {
                for (s, stage) in stages.iter().enumerate() {
                    for module in stage {
                        x = module.apply(tape, set, x)?;
                    }
                    if let (Some(branch), Some(sk)) = (&self.skip_branch, &skips) {
                        let t = branch[s].apply(tape, set, sk[s])?;
                        x = tape.add(x, t)?;
                    }
                    if s < self.config.encoder_stages() {
                        x = tape.max_pool(x)?;
                    }
                }
                x = tape.relu(x);
            }
        }
        tape.linear(set, &self.head, x)
    }

    fn scale_main(&self, tape: &mut Tape<'_>, main: NodeId) -> Result<NodeId> {
        let k = &self.config.input_scales;
        if k.heatmaps == 1.0 && k.image == 1.0 {
            return Ok(main);
        }
        let heat = self.config.num_joints * self.config.num_views;
        let scales: Vec<f64> = (0..self.config.main_channels())
            .map(|c| if c < heat { k.heatmaps } else { k.image })
            .collect();
        tape.scale_channels(main, &scales)
    }

    fn run(&self, fused: &FusedInput) -> Result<(Tape<'_>, NodeId)> {
        if fused.variant != self.config.variant || fused.num_views != self.config.num_views {
            return Err(CoreError::Shape(format!(
                "fused input ({:?}, {} views) does not match model ({:?}, {} views)",
                fused.variant, fused.num_views, self.config.variant, self.config.num_views
            )));
        }
        let mut tape = Tape::new();
        let set = tape.bind(&self.params);
        let main = tape.leaf(fused.main.clone());
        let skip_nodes: Option<Vec<NodeId>> = fused
            .skips
            .as_ref()
            .map(|levels| levels.iter().map(|l| tape.leaf(l.clone())).collect());
        let out = self.forward_on(&mut tape, set, main, skip_nodes.as_deref())?;
        Ok((tape, out))
    }

    pub fn forward(&self, fused: &FusedInput) -> Result<NormalizedPose3D> {
        let (tape, out) = self.run(fused)?;
        NormalizedPose3D::from_flat(tape.value(out).data())
    }

    pub fn loss_and_grad(
        &self,
        fused: &FusedInput,
        target: &NormalizedPose3D,
        kind: NormKind,
    ) -> Result<(f64, Gradients)> {
        let (tape, out) = self.run(fused)?;
        let (loss, grad) = grouped_norm_loss(tape.value(out).data(), &target.to_flat(), self.config.num_joints, kind)?;
        let grads = tape.backward(vec![(out, FeatureMap::vector(grad))])?.remove(0);
        Ok((loss, grads))
    }

    pub fn to_checkpoint(&self, view_order: &[usize]) -> Result<Checkpoint> {
        Ok(Checkpoint {
            model: Self::MODEL_TAG.into(),
            config: serde_json::to_value(&self.config).map_err(|e| CoreError::Checkpoint(e.to_string()))?,
            seed: self.seed,
            metadata: serde_json::json!({ "view_order": view_order }),
            params: self.params.clone(),
        })
    }

    /// Rebuild from a checkpoint; returns the model and its recorded view order.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, Vec<usize>)> {
        if ck.model != Self::MODEL_TAG {
            return Err(CoreError::Checkpoint(format!(
                "expected a {} checkpoint, found {}",
                Self::MODEL_TAG,
                ck.model
            )));
        }
        let config: IntegratorConfig =
            serde_json::from_value(ck.config.clone()).map_err(|e| CoreError::Checkpoint(e.to_string()))?;
        let view_order: Vec<usize> = serde_json::from_value(ck.metadata["view_order"].clone())
            .map_err(|e| CoreError::Checkpoint(format!("view_order: {e}")))?;
        if view_order.len() != config.num_views {
            return Err(CoreError::Checkpoint("view order length does not match num_views".into()));
        }
        let mut model = Self::build(config, ck.seed)?;
        model.params.load_from(&ck.params)?;
        Ok((model, view_order))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pattern(c: usize, h: usize, w: usize, phase: f64) -> FeatureMap {
        let n = c * h * w;
        FeatureMap::from_vec(c, h, w, (0..n).map(|i| ((i as f64) * 0.731 + phase).sin()).collect()).unwrap()
    }

    fn view(j: usize, r: usize, l: usize, phase: f64) -> ViewFeatures {
        ViewFeatures {
            heatmaps: pattern(j, r, r, phase),
            skips: SkipPyramid::new((0..4).map(|s| pattern(l, r >> s, r >> s, phase + s as f64)).collect()).unwrap(),
            image: Some(pattern(3, 2 * r, 2 * r, phase).resize_bilinear(2 * r, 2 * r)),
        }
    }

    fn tiny(arch: IntegratorArch, variant: FusionInputVariant, views: usize) -> IntegratorConfig {
        IntegratorConfig {
            arch,
            variant,
            num_views: views,
            num_joints: 3,
            resolution: 16,
            trunk_channels: 4,
            skip_channels: 2,
            residuals_per_stage: 2,
            input_scales: InputScales {
                heatmaps: 2.0,
                image: 0.5,
                skips: [1.5, 0.8, 1.2, 0.7],
            },
        }
    }

    #[test]
    fn fusion_shapes() {
        let one = fuse_views(&[view(14, 16, 16, 0.0)], FusionInputVariant::HeatmapsOnly).unwrap();
        assert_eq!(one.main.shape(), [14, 16, 16]);
        assert!(one.skips.is_none());
        let views = [view(14, 16, 16, 0.0), view(14, 16, 16, 1.0)];
        let two = fuse_views(&views, FusionInputVariant::HeatmapsPlusSkips).unwrap();
        assert_eq!(two.main.channels(), 28);
        let skips = two.skips.as_ref().unwrap();
        assert_eq!(skips[0].channels(), 32);
        assert_eq!(skips[3].shape(), [32, 2, 2]);
        let img = fuse_views(&views, FusionInputVariant::HeatmapsPlusImage).unwrap();
        assert_eq!(img.main.channels(), 28 + 6);
    }

    #[test]
    fn fusion_rejects_mismatched_view() {
        let views = [view(3, 16, 2, 0.0), view(3, 16, 4, 1.0)];
        let err = fuse_views(&views, FusionInputVariant::HeatmapsOnly).unwrap_err();
        assert!(err.to_string().contains("view 1"), "{err}");
        let mut noimg = view(3, 16, 2, 0.0);
        noimg.image = None;
        assert!(matches!(
            fuse_views(&[noimg], FusionInputVariant::HeatmapsPlusImage),
            Err(CoreError::MissingInput(_))
        ));
    }

    #[test]
    fn simple_encoder_with_skips_is_unsupported() {
        let err = MultiViewIntegrator::build(
            tiny(IntegratorArch::SimpleEncoder, FusionInputVariant::HeatmapsPlusSkips, 2),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::Unsupported(_)));
    }

    #[test]
    fn output_is_three_per_joint_for_every_combination() {
        let views = [view(3, 16, 2, 0.0), view(3, 16, 2, 0.4)];
        for arch in [IntegratorArch::SimpleEncoder, IntegratorArch::HalfHourglass] {
            for variant in FusionInputVariant::ALL {
                let cfg = tiny(arch, variant, 2);
                let Ok(model) = MultiViewIntegrator::build(cfg, 3) else {
                    continue;
                };
                let fused = fuse_views(&views, variant).unwrap();
                let out = model.forward(&fused).unwrap();
                assert_eq!(out.num_joints(), 3);
                assert_eq!(model.forward(&fused).unwrap(), out);
            }
        }
    }

    #[test]
    fn fc_output_length_for_full_skeleton() {
        let cfg = IntegratorConfig {
            resolution: 64,
            trunk_channels: 4,
            skip_channels: 2,
            ..IntegratorConfig::default()
        };
        let model = MultiViewIntegrator::build(cfg.clone(), 0).unwrap();
        assert_eq!(model.params().get(model.head.bias).len(), 42);
        assert_eq!(cfg.final_resolution(), 4);
        assert_eq!(cfg.encoder_stages(), 4);
    }

    #[test]
    fn encoders_stop_at_four_by_four() {
        for (res, fin, stages) in [(16, 2, 3), (32, 4, 3), (64, 4, 4), (128, 8, 4)] {
            let cfg = IntegratorConfig {
                resolution: res,
                ..IntegratorConfig::default()
            };
            assert_eq!((cfg.final_resolution(), cfg.encoder_stages()), (fin, stages), "resolution {res}");
        }
    }

    #[test]
    fn missing_skips_rejected() {
        let model = MultiViewIntegrator::build(
            tiny(IntegratorArch::HalfHourglass, FusionInputVariant::HeatmapsPlusSkips, 1),
            0,
        )
        .unwrap();
        let mut fused = fuse_views(&[view(3, 16, 2, 0.0)], FusionInputVariant::HeatmapsPlusSkips).unwrap();
        fused.skips = None;
        assert!(matches!(model.forward(&fused), Err(CoreError::MissingInput(_))));
    }

    #[test]
    fn zero_skip_branch_reduces_to_heatmaps_only() {
        let views = [view(3, 16, 2, 0.2), view(3, 16, 2, 0.9)];
        let mut with = MultiViewIntegrator::build(
            tiny(IntegratorArch::HalfHourglass, FusionInputVariant::HeatmapsPlusSkips, 2),
            17,
        )
        .unwrap();
        let without = MultiViewIntegrator::build(
            tiny(IntegratorArch::HalfHourglass, FusionInputVariant::HeatmapsOnly, 2),
            17,
        )
        .unwrap();
        assert!(with.num_parameters() > without.num_parameters());
        assert_eq!(with.params.copy_matching_from(without.params()), without.params().len());
        let fused_skip = fuse_views(&views, FusionInputVariant::HeatmapsPlusSkips).unwrap();
        let fused_plain = fuse_views(&views, FusionInputVariant::HeatmapsOnly).unwrap();
        let before = with.forward(&fused_skip).unwrap();
        let base = without.forward(&fused_plain).unwrap();
        assert_ne!(before, base);
        with.zero_skip_branch();
        let after = with.forward(&fused_skip).unwrap();
        for (a, b) in after.coords().iter().zip(base.coords()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn pose_loss_examples() {
        let gt = NormalizedPose3D::new(vec![[0.5; 3]; 14]).unwrap();
        assert_eq!(pose_loss(&gt, &gt, NormKind::Euclidean).unwrap(), 0.0);
        let mut moved = gt.coords().to_vec();
        moved[4] = [0.5, 1.5, 0.5];
        let pred = NormalizedPose3D::new(moved).unwrap();
        let l = pose_loss(&pred, &gt, NormKind::Euclidean).unwrap();
        assert!((l - 1.0 / 14.0).abs() < 1e-15);
        assert!((l - 0.071428).abs() < 1e-6);
        let short = NormalizedPose3D::new(vec![[0.5; 3]; 13]).unwrap();
        assert!(pose_loss(&short, &gt, NormKind::Euclidean).is_err());
    }

    #[test]
    fn checkpoint_records_view_order() {
        let model = MultiViewIntegrator::build(
            tiny(IntegratorArch::SimpleEncoder, FusionInputVariant::HeatmapsPlusImage, 2),
            2,
        )
        .unwrap();
        let mut buf = vec![];
        model.to_checkpoint(&[0, 1]).unwrap().write_to(&mut buf).unwrap();
        let (back, order) = MultiViewIntegrator::from_checkpoint(&Checkpoint::read_from(&buf[..]).unwrap()).unwrap();
        assert_eq!(order, vec![0, 1]);
        assert_eq!(back.params(), model.params());
    }

    fn pose_strategy(j: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
        prop::collection::vec(prop::array::uniform3(-1.0f64..2.0), j)
    }

    proptest! {
        #[test]
        fn fusion_slicing_recovers_views(phases in prop::collection::vec(0.0f64..6.0, 1..4)) {
            let views: Vec<ViewFeatures> = phases.iter().map(|&p| view(3, 16, 2, p)).collect();
            let fused = fuse_views(&views, FusionInputVariant::HeatmapsPlusSkips).unwrap();
            for (n, v) in views.iter().enumerate() {
                for j in 0..3 {
                    prop_assert_eq!(fused.heatmap(j, n), v.heatmaps.channel(j));
                }
                for (s, level) in fused.skips.as_ref().unwrap().iter().enumerate() {
                    for l in 0..2 {
                        prop_assert_eq!(level.channel(n * 2 + l), v.skips.levels()[s].channel(l));
                    }
                }
            }
        }

        #[test]
        fn pose_loss_properties(a in pose_strategy(5), b in pose_strategy(5), perm_seed in 0usize..120) {
            let pa = NormalizedPose3D::new(a.clone()).unwrap();
            let pb = NormalizedPose3D::new(b.clone()).unwrap();
            let l = |x: &NormalizedPose3D, y: &NormalizedPose3D| pose_loss(x, y, NormKind::Euclidean).unwrap();
            prop_assert_eq!(l(&pa, &pb), l(&pb, &pa));
            prop_assert!(l(&pa, &pb) >= 0.0);
            prop_assert_eq!(l(&pa, &pa), 0.0);
            if a != b { prop_assert!(l(&pa, &pb) > 0.0); }
            // a fixed permutation derived from the seed
            let mut idx: Vec<usize> = (0..5).collect();
            let mut s = perm_seed;
            for i in (1..5).rev() { idx.swap(i, s % (i + 1)); s /= i + 1; }
            let pa2 = NormalizedPose3D::new(idx.iter().map(|&i| a[i]).collect()).unwrap();
            let pb2 = NormalizedPose3D::new(idx.iter().map(|&i| b[i]).collect()).unwrap();
            prop_assert!((l(&pa2, &pb2) - l(&pa, &pb)).abs() < 1e-12);
        }
    }
}
