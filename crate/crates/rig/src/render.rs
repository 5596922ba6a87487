//! Anti-aliased stick-figure renderer.

use serde::{Deserialize, Serialize};

use mvpose_core::skeleton::bones;
use mvpose_core::{project_to_view, CameraModel, FeatureMap, ImageTensor, JointId, Pose3D};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    /// Background color at the top row; it brightens slightly toward the bottom.
    pub background: [f64; 3],
    pub limb_radius_mm: f64,
    pub joint_radius_mm: f64,
    pub head_radius_mm: f64,
    /// Darken body parts farther from the camera.
    pub depth_shading: bool,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            background: [0.08, 0.08, 0.1],
            limb_radius_mm: 35.0,
            joint_radius_mm: 45.0,
            head_radius_mm: 100.0,
            depth_shading: true,
        }
    }
}

const LEFT: [f64; 3] = [1.0, 0.45, 0.3];
const RIGHT: [f64; 3] = [0.3, 0.55, 1.0];
const CENTER: [f64; 3] = [0.45, 0.95, 0.45];
const BACKGROUND_RAMP: f64 = 0.04;
const MIN_SHADE: f64 = 0.8;

fn side_color(j: JointId) -> [f64; 3] {
    if j.is_left() {
        LEFT
    } else if j.is_right() {
        RIGHT
    } else {
        CENTER
    }
}

fn lighten(c: [f64; 3], amount: f64) -> [f64; 3] {
    c.map(|v| v + (1.0 - v) * amount)
}

struct Primitive {
    a: [f64; 2],
    b: [f64; 2],
    radius: f64,
    depth: f64,
    color: [f64; 3],
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

pub fn background_at(style: &RenderStyle, y: usize, height: usize) -> [f64; 3] {
    let ramp = BACKGROUND_RAMP * y as f64 / height.max(1) as f64;
    style.background.map(|v| (v + ramp).clamp(0.0, 1.0))
}

/// Renders the pose as seen by `cam`. Pixel centers sit at integer
/// coordinates. Fails if any joint is behind the camera.
pub fn render_view(pose: &Pose3D, cam: &CameraModel, style: &RenderStyle) -> Result<ImageTensor> {
    let [w, h] = cam.image_size;
    let p2 = project_to_view(pose, cam)?;
    let depths: Vec<f64> = pose.coords().iter().map(|&x| cam.to_camera_frame(x)[2]).collect();
    let near = depths.iter().copied().fold(f64::INFINITY, f64::min);
    let far = depths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shade = |d: f64| {
        if style.depth_shading && far > near {
            1.0 - (1.0 - MIN_SHADE) * (d - near) / (far - near)
        } else {
            1.0
        }
    };
    let px_radius = |mm: f64, d: f64| (cam.focal * mm / d).max(1.0);

    let mut prims = Vec::new();
    let mut segments: Vec<(JointId, JointId)> = bones();
    segments.push((JointId::LHip, JointId::RHip));
    for (c, p) in segments {
        let (ci, pi) = (c.index(), p.index());
        let d = (depths[ci] + depths[pi]) / 2.0;
        let color = if c.is_left() && p.is_right() { CENTER } else { side_color(c) };
        prims.push(Primitive {
            a: p2.coords[ci],
            b: p2.coords[pi],
            radius: px_radius(style.limb_radius_mm, d),
            depth: d,
            color: color.map(|v| v * shade(d)),
        });
    }
    for j in JointId::ALL {
        let i = j.index();
        let mm = if j == JointId::Head { style.head_radius_mm } else { style.joint_radius_mm };
        prims.push(Primitive {
            a: p2.coords[i],
            b: p2.coords[i],
            radius: px_radius(mm, depths[i]),
            // Drawn just in front of the limbs that meet here.
            depth: depths[i] - 1.0,
            color: lighten(side_color(j), 0.35).map(|v| v * shade(depths[i])),
        });
    }
    // Far to near; ties keep creation order.
    prims.sort_by(|x, y| y.depth.total_cmp(&x.depth));

    let mut map = FeatureMap::zeros(3, h, w);
    for y in 0..h {
        let bg = background_at(style, y, h);
        for x in 0..w {
            for c in 0..3 {
                map.set(c, y, x, bg[c]);
            }
        }
    }
    for prim in &prims {
        let reach = prim.radius + 1.0;
        let x0 = (prim.a[0].min(prim.b[0]) - reach).floor().max(0.0) as usize;
        let y0 = (prim.a[1].min(prim.b[1]) - reach).floor().max(0.0) as usize;
        let x1 = ((prim.a[0].max(prim.b[0]) + reach).ceil().max(0.0) as usize).min(w);
        let y1 = ((prim.a[1].max(prim.b[1]) + reach).ceil().max(0.0) as usize).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                let d = segment_distance([x as f64, y as f64], prim.a, prim.b);
                let cover = (prim.radius + 0.5 - d).clamp(0.0, 1.0);
                if cover > 0.0 {
                    for c in 0..3 {
                        let old = map.get(c, y, x);
                        map.set(c, y, x, (old + (prim.color[c] - old) * cover).clamp(0.0, 1.0));
                    }
                }
            }
        }
    }
    Ok(ImageTensor::new(map)?)
}

/// Mean of the three channels at a pixel.
pub fn intensity(img: &ImageTensor, x: usize, y: usize) -> f64 {
    (0..3).map(|c| img.map().get(c, y, x)).sum::<f64>() / 3.0
}
