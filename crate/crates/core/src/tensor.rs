//! Channel-major single-sample feature maps.

use crate::error::{CoreError, Result};

/// A `channels × height × width` array stored row-major per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(CoreError::Shape(format!(
                "{} values do not fill {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// A flat vector viewed as `len × 1 × 1`.
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            channels: data.len(),
            height: 1,
            width: 1,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn add_assign(&mut self, other: &FeatureMap) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Stack channels of several maps sharing the same spatial size.
    pub fn concat_channels(parts: &[&FeatureMap]) -> Result<FeatureMap> {
        let first = parts.first().ok_or(CoreError::Empty("concatenation"))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        for (i, p) in parts.iter().enumerate() {
            if p.height != h || p.width != w {
                return Err(CoreError::Shape(format!(
                    "part {i} is {}x{}, expected {h}x{w}",
                    p.height, p.width
                )));
            }
            data.extend_from_slice(&p.data);
        }
        let channels = data.len() / (h * w);
        FeatureMap::from_vec(channels, h, w, data)
    }

    /// Bilinear resampling (half-pixel centers, edge clamped). Identity when
    /// the size already matches.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> FeatureMap {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut out = FeatureMap::zeros(self.channels, height, width);
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let coord = |d: usize, scale: f64, n: usize| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, s - i0 as f64)
        };
        for c in 0..self.channels {
            let src = self.channel(c);
            for y in 0..height {
                let (y0, y1, fy) = coord(y, sy, self.height);
                for x in 0..width {
                    let (x0, x1, fx) = coord(x, sx, self.width);
                    let top = src[y0 * self.width + x0] * (1.0 - fx) + src[y0 * self.width + x1] * fx;
                    let bot = src[y1 * self.width + x0] * (1.0 - fx) + src[y1 * self.width + x1] * fx;
                    out.set(c, y, x, top * (1.0 - fy) + bot * fy);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_slice_is_lossless() {
        let a = FeatureMap::from_vec(2, 2, 2, (0..8).map(f64::from).collect()).unwrap();
        let b = FeatureMap::from_vec(1, 2, 2, vec![9.0, 8.0, 7.0, 6.0]).unwrap();
        let c = FeatureMap::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), [3, 2, 2]);
        assert_eq!(c.channel(1), a.channel(1));
        assert_eq!(c.channel(2), b.channel(0));
        let bad = FeatureMap::zeros(1, 3, 2);
        assert!(FeatureMap::concat_channels(&[&a, &bad]).is_err());
    }

    #[test]
    fn bilinear_downsample_by_four_averages_center_pair() {
        let data: Vec<f64> = (0..64).map(f64::from).collect();
        let m = FeatureMap::from_vec(1, 8, 8, data).unwrap();
        let d = m.resize_bilinear(2, 2);
        // output (0,0) samples source (1.5, 1.5): mean of rows/cols 1 and 2
        let expect = (9.0 + 10.0 + 17.0 + 18.0) / 4.0;
        assert!((d.get(0, 0, 0) - expect).abs() < 1e-12);
        assert_eq!(m.resize_bilinear(8, 8), m);
    }
}
