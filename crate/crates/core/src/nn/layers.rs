//! Layer descriptors and their dense kernels.
//!
//! A layer only records shapes and the [`ParamId`]s of its weights; values
//! live in a [`ParamSet`]. Convolutions lower to im2col + GEMM.

use crate::error::{CoreError, Result};
use crate::nn::params::{Gradients, Initializer, ParamId, ParamSet};
use crate::nn::tape::{NodeId, SetHandle, Tape};
use crate::tensor::FeatureMap;

/// `C[m×n] = A[m×k]·B[k×n] + beta·C` with arbitrary strides on A and B.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slices cover the index ranges implied by the dimensions and
    // strides (checked above for the contiguous layouts used in this module).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let w = init.he_normal(fan_in, out_channels * fan_in);
        Self::with_weights(params, name, in_channels, out_channels, kernel, stride, pad, w)
    }

    /// Like [`Conv2d::new`] but with `N(0, scale²/fan_in)` weights.
    #[allow(clippy::too_many_arguments)]
    pub fn scaled(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        scale: f64,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let w = init.scaled_normal(fan_in, out_channels * fan_in, scale);
        Self::with_weights(params, name, in_channels, out_channels, kernel, stride, pad, w)
    }

    #[allow(clippy::too_many_arguments)]
    fn with_weights(
        params: &mut ParamSet,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        w: Vec<f64>,
    ) -> Self {
        let weight = params.push(
            format!("{name}.weight"),
            vec![out_channels, in_channels, kernel, kernel],
            w,
        );
        let bias = params.push(format!("{name}.bias"), vec![out_channels], vec![0.0; out_channels]);
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
        }
    }

    pub fn output_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let h = height + 2 * self.pad;
        let w = width + 2 * self.pad;
        if h < self.kernel || w < self.kernel {
            return Err(CoreError::Shape(format!(
                "{height}x{width} input too small for a {k}x{k} kernel",
                k = self.kernel
            )));
        }
        Ok(((h - self.kernel) / self.stride + 1, (w - self.kernel) / self.stride + 1))
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }

    fn im2col(&self, x: &FeatureMap, oh: usize, ow: usize) -> Vec<f64> {
        let k = self.kernel;
        let (h, w) = (x.height(), x.width());
        let p = oh * ow;
        let mut cols = vec![0.0; self.in_channels * k * k * p];
        for c in 0..self.in_channels {
            let src = x.channel(c);
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + ky) * k + kx) * p;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                        let dst = &mut cols[row + oy * ow..row + (oy + 1) * ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> FeatureMap {
        let k = self.kernel;
        let p = oh * ow;
        let mut dx = FeatureMap::zeros(self.in_channels, h, w);
        for c in 0..self.in_channels {
            let dst = dx.channel_mut(c);
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + ky) * k + kx) * p;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[iy as usize * w + ix as usize] += cols[row + oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub(crate) fn forward(&self, params: &ParamSet, x: &FeatureMap) -> Result<FeatureMap> {
        if x.channels() != self.in_channels {
            return Err(CoreError::Shape(format!(
                "convolution expects {} channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        let (oh, ow) = self.output_size(x.height(), x.width())?;
        let p = oh * ow;
        let kk = self.in_channels * self.kernel * self.kernel;
        let w = params.get(self.weight);
        let b = params.get(self.bias);
        let mut out = vec![0.0; self.out_channels * p];
        for (o, chunk) in out.chunks_exact_mut(p).enumerate() {
            chunk.fill(b[o]);
        }
        if self.is_pointwise() {
            gemm(self.out_channels, kk, p, w, (kk, 1), x.data(), (p, 1), 1.0, &mut out);
        } else {
            let cols = self.im2col(x, oh, ow);
            gemm(self.out_channels, kk, p, w, (kk, 1), &cols, (p, 1), 1.0, &mut out);
        }
        FeatureMap::from_vec(self.out_channels, oh, ow, out)
    }

    pub(crate) fn backward(
        &self,
        params: &ParamSet,
        x: &FeatureMap,
        dy: &FeatureMap,
        grads: &mut Gradients,
        need_dx: bool,
    ) -> Option<FeatureMap> {
        let (oh, ow) = (dy.height(), dy.width());
        let p = oh * ow;
        let kk = self.in_channels * self.kernel * self.kernel;
        let owned;
        let cols: &[f64] = if self.is_pointwise() {
            x.data()
        } else {
            owned = self.im2col(x, oh, ow);
            &owned
        };
        // dW += dY · colsᵀ
        gemm(
            self.out_channels,
            p,
            kk,
            dy.data(),
            (p, 1),
            cols,
            (1, p),
            1.0,
            grads.get_mut(self.weight),
        );
        for (gb, row) in grads.get_mut(self.bias).iter_mut().zip(dy.data().chunks_exact(p)) {
            *gb += row.iter().sum::<f64>();
        }
        if !need_dx {
            return None;
        }
        // dcols = Wᵀ · dY
        let w = params.get(self.weight);
        let mut dcols = vec![0.0; kk * p];
        gemm(kk, self.out_channels, p, w, (1, kk), dy.data(), (p, 1), 0.0, &mut dcols);
        if self.is_pointwise() {
            Some(FeatureMap::from_vec(self.in_channels, oh, ow, dcols).expect("shape"))
        } else {
            Some(self.col2im(&dcols, x.height(), x.width(), oh, ow))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_features: usize,
        out_features: usize,
        scale: f64,
    ) -> Self {
        let w = init.scaled_normal(in_features, in_features * out_features, scale);
        let weight = params.push(format!("{name}.weight"), vec![out_features, in_features], w);
        let bias = params.push(format!("{name}.bias"), vec![out_features], vec![0.0; out_features]);
        Self {
            weight,
            bias,
            in_features,
            out_features,
        }
    }

    pub(crate) fn forward(&self, params: &ParamSet, x: &FeatureMap) -> Result<FeatureMap> {
        if x.data().len() != self.in_features {
            return Err(CoreError::Shape(format!(
                "linear layer expects {} inputs, got {}",
                self.in_features,
                x.data().len()
            )));
        }
        let mut out = params.get(self.bias).to_vec();
        gemm(
            self.out_features,
            self.in_features,
            1,
            params.get(self.weight),
            (self.in_features, 1),
            x.data(),
            (1, 1),
            1.0,
            &mut out,
        );
        Ok(FeatureMap::vector(out))
    }

    pub(crate) fn backward(
        &self,
        params: &ParamSet,
        x: &FeatureMap,
        dy: &FeatureMap,
        grads: &mut Gradients,
        need_dx: bool,
    ) -> Option<FeatureMap> {
        let dyv = dy.data();
        {
            let gw = grads.get_mut(self.weight);
            for (o, row) in gw.chunks_exact_mut(self.in_features).enumerate() {
                let d = dyv[o];
                for (g, xi) in row.iter_mut().zip(x.data()) {
                    *g += d * xi;
                }
            }
        }
        for (g, d) in grads.get_mut(self.bias).iter_mut().zip(dyv) {
            *g += d;
        }
        if !need_dx {
            return None;
        }
        let mut dx = vec![0.0; self.in_features];
        gemm(
            self.in_features,
            self.out_features,
            1,
            params.get(self.weight),
            (1, self.in_features),
            dyv,
            (1, 1),
            0.0,
            &mut dx,
        );
        let [c, h, w] = x.shape();
        Some(FeatureMap::from_vec(c, h, w, dx).expect("shape"))
    }
}

/// Initial weight scale of the last convolution in a residual branch. Without
/// normalization layers, full-scale branches compound across a deep stack.
pub const RESIDUAL_BRANCH_SCALE: f64 = 0.1;

/// Pre-activation bottleneck residual module: ReLU → 1×1 → ReLU → 3×3 → ReLU
/// → 1×1, added to the identity (or a 1×1 projection when channel counts
/// differ). The bottleneck width is half the output channels.
#[derive(Debug, Clone)]
pub struct Residual {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub conv3: Conv2d,
    pub projection: Option<Conv2d>,
}

impl Residual {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_channels: usize,
        out_channels: usize,
    ) -> Self {
        let projection = (in_channels != out_channels).then_some(1.0);
        Self::build(params, init, name, in_channels, out_channels, projection)
    }

    /// Residual module whose shortcut is always a 1×1 projection, so zeroing
    /// its parameters zeroes its output. The projection starts at
    /// [`RESIDUAL_BRANCH_SCALE`], so the whole module starts near zero.
    pub fn projected(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_channels: usize,
        out_channels: usize,
    ) -> Self {
        Self::build(params, init, name, in_channels, out_channels, Some(RESIDUAL_BRANCH_SCALE))
    }

    fn build(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        projection_scale: Option<f64>,
    ) -> Self {
        let mid = (out_channels / 2).max(1);
        let conv1 = Conv2d::new(params, init, &format!("{name}.conv1"), in_channels, mid, 1, 1, 0);
        let conv2 = Conv2d::new(params, init, &format!("{name}.conv2"), mid, mid, 3, 1, 1);
        let conv3 = Conv2d::scaled(
            params,
            init,
            &format!("{name}.conv3"),
            mid,
            out_channels,
            1,
            1,
            0,
            RESIDUAL_BRANCH_SCALE,
        );
        let projection = projection_scale.map(|k| {
            Conv2d::scaled(params, init, &format!("{name}.proj"), in_channels, out_channels, 1, 1, 0, k)
        });
        Self {
            conv1,
            conv2,
            conv3,
            projection,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut ids = vec![];
        for c in [&self.conv1, &self.conv2, &self.conv3]
            .into_iter()
            .chain(self.projection.as_ref())
        {
            ids.push(c.weight);
            ids.push(c.bias);
        }
        ids
    }

    pub fn apply(&self, tape: &mut Tape<'_>, set: SetHandle, x: NodeId) -> Result<NodeId> {
        let a = tape.relu(x);
        let a = tape.conv(set, &self.conv1, a)?;
        let a = tape.relu(a);
        let a = tape.conv(set, &self.conv2, a)?;
        let a = tape.relu(a);
        let a = tape.conv(set, &self.conv3, a)?;
        let shortcut = match &self.projection {
            Some(p) => tape.conv(set, p, x)?,
            None => x,
        };
        tape.add(a, shortcut)
    }
}
