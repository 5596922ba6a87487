//! Rectangular distractor patches.

use serde::{Deserialize, Serialize};

use mvpose_core::{FeatureMap, ImageTensor, Pose2D};

/// Pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Region {
    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    /// Whether the pixel holding point `p` lies inside.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (x, y) = (p[0].round(), p[1].round());
        x >= self.x0 as f64 && x < self.x1 as f64 && y >= self.y0 as f64 && y < self.y1 as f64
    }

    fn clipped(self, w: usize, h: usize) -> Self {
        Self {
            x0: self.x0.min(w),
            y0: self.y0.min(h),
            x1: self.x1.min(w),
            y1: self.y1.min(h),
        }
    }
}

const STRIPE_A: [f64; 3] = [0.55, 0.5, 0.42];
const STRIPE_B: [f64; 3] = [0.22, 0.27, 0.33];
const STRIPE_PERIOD: usize = 12;

/// Paints diagonal stripes over `region` (clipped to the image) and flags
/// each joint of `pose` whose pixel falls inside it.
pub fn apply_occluder(img: &ImageTensor, region: Region, pose: &Pose2D) -> (ImageTensor, Vec<bool>) {
    let r = region.clipped(img.width(), img.height());
    let mut map: FeatureMap = img.map().clone();
    for y in r.y0..r.y1 {
        for x in r.x0..r.x1 {
            let color = if (x + y) % STRIPE_PERIOD < STRIPE_PERIOD / 2 { STRIPE_A } else { STRIPE_B };
            for (c, v) in color.iter().enumerate() {
                map.set(c, y, x, *v);
            }
        }
    }
    let flags = pose
        .coords
        .iter()
        .map(|&p| !r.is_empty() && r.contains(p))
        .collect();
    let out = ImageTensor::new(map).expect("stripe colors are in range");
    (out, flags)
}
