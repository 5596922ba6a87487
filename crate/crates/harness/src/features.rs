//! Frozen-perceptron outputs, computed once per split.

use mvpose_core::{
    fuse_views, FeatureMap, FusedInput, FusionInputVariant, InputScales, SkipPyramid, ViewFeatures,
    ViewPerceptron,
};

use crate::config::InputScaling;
use crate::data::LoadedSplit;
use crate::error::{HarnessError, Result};

/// Stored in `f32` to halve memory; values are widened back on use.
#[derive(Debug, Clone)]
struct Packed {
    shape: [usize; 3],
    data: Vec<f32>,
}

impl Packed {
    fn pack(m: &FeatureMap) -> Self {
        Self {
            shape: m.shape(),
            data: m.data().iter().map(|&v| v as f32).collect(),
        }
    }

    fn unpack(&self) -> FeatureMap {
        let [c, h, w] = self.shape;
        FeatureMap::from_vec(c, h, w, self.data.iter().map(|&v| f64::from(v)).collect())
            .expect("packed shape matches its data")
    }
}

#[derive(Debug, Clone)]
struct CachedView {
    heatmaps: Packed,
    skips: Vec<Packed>,
    /// Input image resampled to the heatmap resolution.
    image: Packed,
}

#[derive(Debug, Clone)]
pub struct FeatureCache {
    entries: Vec<Vec<CachedView>>,
}

impl FeatureCache {
    pub fn build(perceptron: &ViewPerceptron, split: &LoadedSplit) -> Result<Self> {
        let [w, h] = split.image_size;
        let n = perceptron.config().input_size;
        if [w, h] != [n, n] {
            return Err(HarnessError::Mismatch(format!(
                "perceptron input {n}x{n} but dataset images are {w}x{h}"
            )));
        }
        let res = perceptron.config().heatmap_resolution;
        let mut entries = Vec::with_capacity(split.len());
        for i in 0..split.len() {
            let mut views = Vec::with_capacity(split.num_views);
            for v in 0..split.num_views {
                let image = split.image(i, v)?;
                let (heat, skips) = perceptron.infer(&image)?;
                views.push(CachedView {
                    heatmaps: Packed::pack(&heat),
                    skips: skips.levels().iter().map(Packed::pack).collect(),
                    image: Packed::pack(&image.map().resize_bilinear(res, res)),
                });
            }
            entries.push(views);
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn view_features(&self, sample: usize, view: usize) -> Result<ViewFeatures> {
        let v = &self.entries[sample][view];
        Ok(ViewFeatures {
            heatmaps: v.heatmaps.unpack(),
            skips: SkipPyramid::new(v.skips.iter().map(Packed::unpack).collect())?,
            image: Some(v.image.unpack()),
        })
    }

    /// Integrator input for `sample` built from `views`, in that order.
    pub fn fused(&self, sample: usize, views: &[usize], variant: FusionInputVariant) -> Result<FusedInput> {
        let feats = views
            .iter()
            .map(|&v| self.view_features(sample, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(fuse_views(&feats, variant)?)
    }

    /// Inverse standard deviation of each input kind over the cached
    /// samples of `views`: all heatmap values, all image values, and each
    /// skip level.
    pub fn input_scales(&self, views: &[usize]) -> InputScales {
        let inv_std = |pick: &dyn Fn(&CachedView) -> &Packed| -> f64 {
            let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
            for e in &self.entries {
                for &v in views {
                    for &x in &pick(&e[v]).data {
                        let x = f64::from(x);
                        n += 1;
                        sum += x;
                        sq += x * x;
                    }
                }
            }
            if n == 0 {
                return 1.0;
            }
            let mean = sum / n as f64;
            let std = (sq / n as f64 - mean * mean).max(0.0).sqrt();
            if std > 1e-12 {
                1.0 / std
            } else {
                1.0
            }
        };
        InputScales {
            heatmaps: inv_std(&|c| &c.heatmaps),
            image: inv_std(&|c| &c.image),
            skips: std::array::from_fn(|s| inv_std(&|c| &c.skips[s])),
        }
    }

    /// Scales for `mode`, measured on the cached samples of `views`.
    pub fn scales_for(&self, views: &[usize], mode: InputScaling) -> InputScales {
        match mode {
            InputScaling::None => InputScales::default(),
            InputScaling::MatchHeatmaps => {
                let s = self.input_scales(views);
                InputScales {
                    heatmaps: 1.0,
                    image: s.image / s.heatmaps,
                    skips: s.skips.map(|k| k / s.heatmaps),
                }
            }
        }
    }
}
