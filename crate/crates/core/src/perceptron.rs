//! View-specific perceptron: a single-view hourglass that maps an RGB image
//! to `J` joint heatmaps and exports the four skip-branch feature maps of its
//! last hourglass (one per resolution, captured before each pooling step).

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::heatmap::heatmap_loss_with_grad;
use crate::loss::NormKind;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{Conv2d, Gradients, Initializer, NodeId, ParamSet, Residual, SetHandle, Tape};
use crate::skeleton::NUM_JOINTS;
use crate::tensor::FeatureMap;

/// Number of skip levels exported per view.
pub const SKIP_LEVELS: usize = 4;

/// Initial weight scale of the heatmap output layer. Near-zero initial
/// heatmaps keep early updates from switching off the head's ReLUs.
pub const HEAD_OUT_SCALE: f64 = 0.01;

/// RGB image, channel-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor(FeatureMap);

impl ImageTensor {
    pub fn new(map: FeatureMap) -> Result<Self> {
        if map.channels() != 3 {
            return Err(CoreError::Shape(format!("image needs 3 channels, got {}", map.channels())));
        }
        if !map.data().iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(CoreError::NonFinite("image values outside [0, 1]"));
        }
        Ok(Self(map))
    }

    /// From interleaved 8-bit RGB rows.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(CoreError::Shape(format!(
                "{} bytes for a {width}x{height} RGB image",
                rgb.len()
            )));
        }
        let mut map = FeatureMap::zeros(3, height, width);
        for (i, px) in rgb.chunks_exact(3).enumerate() {
            for c in 0..3 {
                map.set(c, i / width, i % width, px[c] as f64 / 255.0);
            }
        }
        Ok(Self(map))
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        let (h, w) = (self.0.height(), self.0.width());
        let mut out = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    out.push((self.0.get(c, y, x) * 255.0).round() as u8);
                }
            }
        }
        out
    }

    pub fn map(&self) -> &FeatureMap {
        &self.0
    }

    pub fn into_map(self) -> FeatureMap {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }
}

/// The four per-view texture maps, finest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipPyramid {
    levels: Vec<FeatureMap>,
}

impl SkipPyramid {
    pub fn new(levels: Vec<FeatureMap>) -> Result<Self> {
        if levels.len() != SKIP_LEVELS {
            return Err(CoreError::Shape(format!(
                "skip pyramid needs {SKIP_LEVELS} levels, got {}",
                levels.len()
            )));
        }
        for s in 1..levels.len() {
            let (prev, cur) = (&levels[s - 1], &levels[s]);
            if cur.height() * 2 != prev.height() || cur.width() * 2 != prev.width() {
                return Err(CoreError::Shape(format!(
                    "skip level {s} is {}x{}, expected half of {}x{}",
                    cur.height(),
                    cur.width(),
                    prev.height(),
                    prev.width()
                )));
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[FeatureMap] {
        &self.levels
    }

    pub fn into_levels(self) -> Vec<FeatureMap> {
        self.levels
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptronConfig {
    pub input_size: usize,
    pub heatmap_resolution: usize,
    pub base_channels: usize,
    pub num_stacks: usize,
    pub num_joints: usize,
}

impl Default for PerceptronConfig {
    fn default() -> Self {
        Self {
            input_size: 256,
            heatmap_resolution: 64,
            base_channels: 16,
            num_stacks: 1,
            num_joints: NUM_JOINTS,
        }
    }
}

impl PerceptronConfig {
    /// Channel widths of the original hourglass.
    pub fn fidelity() -> Self {
        Self {
            base_channels: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::Config(m));
        if self.base_channels < 4 {
            return bad(format!("base_channels must be >= 4, got {}", self.base_channels));
        }
        if self.num_stacks == 0 || self.num_joints == 0 {
            return bad("num_stacks and num_joints must be >= 1".into());
        }
        if self.heatmap_resolution == 0 || self.input_size % self.heatmap_resolution != 0 {
            return bad(format!(
                "heatmap resolution {} does not divide input size {}",
                self.heatmap_resolution, self.input_size
            ));
        }
        let bottom = 1 << SKIP_LEVELS;
        if self.heatmap_resolution % bottom != 0 {
            return bad(format!(
                "heatmap resolution {} must be a multiple of {bottom} for {SKIP_LEVELS} pooling levels",
                self.heatmap_resolution
            ));
        }
        Ok(())
    }

    pub fn stem_stride(&self) -> usize {
        self.input_size / self.heatmap_resolution
    }

    /// Spatial side of each exported skip level.
    pub fn skip_resolutions(&self) -> [usize; SKIP_LEVELS] {
        std::array::from_fn(|s| self.heatmap_resolution >> s)
    }
}

#[derive(Debug, Clone)]
struct Level {
    up: Residual,
    low1: Residual,
    low3: Residual,
}

#[derive(Debug, Clone)]
struct Stack {
    levels: Vec<Level>,
    bottom: Residual,
    head_res: Residual,
    head_conv: Conv2d,
    head_out: Conv2d,
    /// Maps features and predictions back into the trunk before the next stack.
    merge: Option<(Conv2d, Conv2d)>,
}

/// Node ids of one perceptron forward pass on a tape.
#[derive(Debug, Clone)]
pub struct PerceptronNodes {
    /// Heatmaps of every stack; the last one is the network output.
    pub stack_heatmaps: Vec<NodeId>,
    pub skips: Vec<NodeId>,
}

impl PerceptronNodes {
    pub fn heatmaps(&self) -> NodeId {
        *self.stack_heatmaps.last().expect("at least one stack")
    }
}

#[derive(Debug, Clone)]
pub struct ViewPerceptron {
    config: PerceptronConfig,
    seed: u64,
    params: ParamSet,
    stem: Conv2d,
    stem_res: Residual,
    stacks: Vec<Stack>,
}

impl ViewPerceptron {
    pub const MODEL_TAG: &'static str = "view_perceptron";

    pub fn build(config: PerceptronConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut init = Initializer::new(seed);
        let c = config.base_channels;
        let stride = config.stem_stride();
        let kernel = if stride > 1 { 7 } else { 3 };
        let stem = Conv2d::new(&mut params, &mut init, "stem.conv", 3, c, kernel, stride, kernel / 2);
        let stem_res = Residual::new(&mut params, &mut init, "stem.res", c, c);
        let mut stacks = vec![];
        for k in 0..config.num_stacks {
            let p = format!("stack{k}");
            let levels = (0..SKIP_LEVELS)
                .map(|s| Level {
                    up: Residual::new(&mut params, &mut init, &format!("{p}.level{s}.up"), c, c),
                    low1: Residual::new(&mut params, &mut init, &format!("{p}.level{s}.low1"), c, c),
                    low3: Residual::new(&mut params, &mut init, &format!("{p}.level{s}.low3"), c, c),
                })
                .collect();
            let bottom = Residual::new(&mut params, &mut init, &format!("{p}.bottom"), c, c);
            let head_res = Residual::new(&mut params, &mut init, &format!("{p}.head.res"), c, c);
            let head_conv = Conv2d::new(&mut params, &mut init, &format!("{p}.head.conv"), c, c, 1, 1, 0);
            let head_out = Conv2d::scaled(
                &mut params,
                &mut init,
                &format!("{p}.head.out"),
                c,
                config.num_joints,
                1,
                1,
                0,
                HEAD_OUT_SCALE,
            );
            let merge = (k + 1 < config.num_stacks).then(|| {
                (
                    Conv2d::new(&mut params, &mut init, &format!("{p}.merge.features"), c, c, 1, 1, 0),
                    Conv2d::new(&mut params, &mut init, &format!("{p}.merge.heatmaps"), config.num_joints, c, 1, 1, 0),
                )
            });
            stacks.push(Stack {
                levels,
                bottom,
                head_res,
                head_conv,
                head_out,
                merge,
            });
        }
        Ok(Self {
            config,
            seed,
            params,
            stem,
            stem_res,
            stacks,
        })
    }

    pub fn config(&self) -> &PerceptronConfig {
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

    fn hourglass(
        &self,
        tape: &mut Tape<'_>,
        set: SetHandle,
        stack: &Stack,
        level: usize,
        x: NodeId,
        skips: &mut Vec<NodeId>,
    ) -> Result<NodeId> {
        let l = &stack.levels[level];
        let up1 = l.up.apply(tape, set, x)?;
        skips.push(up1);
        let low = tape.max_pool(x)?;
        let low1 = l.low1.apply(tape, set, low)?;
        let low2 = if level + 1 == stack.levels.len() {
            stack.bottom.apply(tape, set, low1)?
        } else {
            self.hourglass(tape, set, stack, level + 1, low1, skips)?
        };
        let low3 = l.low3.apply(tape, set, low2)?;
        let up2 = tape.upsample(low3);
        tape.add(up1, up2)
    }

    /// Record a forward pass of `image` (a tape node) on `tape`.
    pub fn forward_on(&self, tape: &mut Tape<'_>, set: SetHandle, image: NodeId) -> Result<PerceptronNodes> {
        let shape = tape.value(image).shape();
        let n = self.config.input_size;
        if shape != [3, n, n] {
            return Err(CoreError::Shape(format!("perceptron expects a 3x{n}x{n} image, got {shape:?}")));
        }
        let x = tape.conv(set, &self.stem, image)?;
        let mut x = self.stem_res.apply(tape, set, x)?;
        let mut stack_heatmaps = vec![];
        let mut skips = vec![];
        for stack in &self.stacks {
            skips.clear();
            let hg = self.hourglass(tape, set, stack, 0, x, &mut skips)?;
            let feat = stack.head_res.apply(tape, set, hg)?;
            let feat = tape.conv(set, &stack.head_conv, feat)?;
            let feat = tape.relu(feat);
            let heat = tape.conv(set, &stack.head_out, feat)?;
            stack_heatmaps.push(heat);
            if let Some((mf, mh)) = &stack.merge {
                let a = tape.conv(set, mf, feat)?;
                let b = tape.conv(set, mh, heat)?;
                let ab = tape.add(a, b)?;
                x = tape.add(x, ab)?;
            }
        }
        Ok(PerceptronNodes { stack_heatmaps, skips })
    }

    /// Inference: heatmap stack (`J × r × r`) and skip pyramid.
    pub fn infer(&self, image: &ImageTensor) -> Result<(FeatureMap, SkipPyramid)> {
        let mut tape = Tape::new();
        let set = tape.bind(&self.params);
        let x = tape.leaf(image.map().clone());
        let nodes = self.forward_on(&mut tape, set, x)?;
        let heat = tape.value(nodes.heatmaps()).clone();
        let skips = SkipPyramid::new(nodes.skips.iter().map(|&s| tape.value(s).clone()).collect())?;
        Ok((heat, skips))
    }

    pub fn infer_batch(&self, images: &[ImageTensor]) -> Result<Vec<(FeatureMap, SkipPyramid)>> {
        images.iter().map(|im| self.infer(im)).collect()
    }

    /// Heatmap loss (averaged over stacks) and its parameter gradient for one image.
    pub fn loss_and_grad(
        &self,
        image: &ImageTensor,
        target: &FeatureMap,
        kind: NormKind,
    ) -> Result<(f64, Gradients)> {
        let mut tape = Tape::new();
        let set = tape.bind(&self.params);
        let x = tape.leaf(image.map().clone());
        let nodes = self.forward_on(&mut tape, set, x)?;
        let inv = 1.0 / nodes.stack_heatmaps.len() as f64;
        let mut loss = 0.0;
        let mut seeds = vec![];
        for &h in &nodes.stack_heatmaps {
            let (l, mut g) = heatmap_loss_with_grad(tape.value(h), target, kind)?;
            loss += l * inv;
            g.data_mut().iter_mut().for_each(|v| *v *= inv);
            seeds.push((h, g));
        }
        let grads = tape.backward(seeds)?.remove(0);
        Ok((loss, grads))
    }

    pub fn loss(&self, image: &ImageTensor, target: &FeatureMap, kind: NormKind) -> Result<f64> {
        let mut tape = Tape::new();
        let set = tape.bind(&self.params);
        let x = tape.leaf(image.map().clone());
        let nodes = self.forward_on(&mut tape, set, x)?;
        let inv = 1.0 / nodes.stack_heatmaps.len() as f64;
        let mut loss = 0.0;
        for &h in &nodes.stack_heatmaps {
            loss += crate::heatmap::heatmap_loss(tape.value(h), target, kind)? * inv;
        }
        Ok(loss)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            model: Self::MODEL_TAG.into(),
            config: serde_json::to_value(&self.config).map_err(|e| CoreError::Checkpoint(e.to_string()))?,
            seed: self.seed,
            metadata: serde_json::Value::Null,
            params: self.params.clone(),
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.model != Self::MODEL_TAG {
            return Err(CoreError::Checkpoint(format!(
                "expected a {} checkpoint, found {}",
                Self::MODEL_TAG,
                ck.model
            )));
        }
        let config: PerceptronConfig =
            serde_json::from_value(ck.config.clone()).map_err(|e| CoreError::Checkpoint(e.to_string()))?;
        let mut model = Self::build(config, ck.seed)?;
        model.params.load_from(&ck.params)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> PerceptronConfig {
        PerceptronConfig {
            input_size: 32,
            heatmap_resolution: 16,
            base_channels: 4,
            num_stacks: 1,
            num_joints: 3,
        }
    }

    fn test_image(n: usize, phase: f64) -> ImageTensor {
        let mut m = FeatureMap::zeros(3, n, n);
        for c in 0..3 {
            for y in 0..n {
                for x in 0..n {
                    let v = 0.5 + 0.5 * ((x as f64 * 0.37 + y as f64 * 0.21 + c as f64 + phase).sin());
                    m.set(c, y, x, v);
                }
            }
        }
        ImageTensor::new(m).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(PerceptronConfig::default().validate().is_ok());
        assert!(PerceptronConfig { base_channels: 3, ..tiny() }.validate().is_err());
        assert!(PerceptronConfig { heatmap_resolution: 24, ..tiny() }.validate().is_err());
        assert!(PerceptronConfig { input_size: 40, ..tiny() }.validate().is_err());
        assert!(PerceptronConfig { num_stacks: 0, ..tiny() }.validate().is_err());
    }

    #[test]
    fn output_shapes() {
        let cfg = tiny();
        let m = ViewPerceptron::build(cfg.clone(), 1).unwrap();
        let (h, s) = m.infer(&test_image(32, 0.0)).unwrap();
        assert_eq!(h.shape(), [3, 16, 16]);
        let res: Vec<usize> = s.levels().iter().map(|l| l.height()).collect();
        assert_eq!(res, vec![16, 8, 4, 2]);
        assert!(s.levels().iter().all(|l| l.channels() == 4));
        assert!(m.infer(&test_image(16, 0.0)).is_err());
    }

    #[test]
    fn seeded_determinism_and_batch_consistency() {
        let a = ViewPerceptron::build(tiny(), 9).unwrap();
        let b = ViewPerceptron::build(tiny(), 9).unwrap();
        assert_eq!(a.params(), b.params());
        let c = ViewPerceptron::build(tiny(), 10).unwrap();
        assert_ne!(a.params(), c.params());
        let imgs = [test_image(32, 0.0), test_image(32, 1.0), test_image(32, 2.0)];
        let batch = a.infer_batch(&imgs).unwrap();
        for (img, out) in imgs.iter().zip(&batch) {
            let single = a.infer(img).unwrap();
            assert_eq!(&single, out);
        }
    }

    #[test]
    fn parameter_count_grows_with_width() {
        let small = ViewPerceptron::build(tiny(), 0).unwrap().num_parameters();
        let big = ViewPerceptron::build(PerceptronConfig { base_channels: 8, ..tiny() }, 0)
            .unwrap()
            .num_parameters();
        assert!(big > small);
    }

    #[test]
    fn stacked_variant_runs() {
        let m = ViewPerceptron::build(PerceptronConfig { num_stacks: 2, ..tiny() }, 4).unwrap();
        let target = FeatureMap::zeros(3, 16, 16);
        let (loss, g) = m.loss_and_grad(&test_image(32, 0.5), &target, NormKind::Euclidean).unwrap();
        assert!(loss > 0.0 && g.is_finite());
        let (h, _) = m.infer(&test_image(32, 0.5)).unwrap();
        assert_eq!(h.shape(), [3, 16, 16]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = ViewPerceptron::build(tiny(), 5).unwrap();
        let mut buf = vec![];
        m.to_checkpoint().unwrap().write_to(&mut buf).unwrap();
        let back = ViewPerceptron::from_checkpoint(&Checkpoint::read_from(&buf[..]).unwrap()).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.config(), m.config());
    }
}
