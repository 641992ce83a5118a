//! Layered scenes: each layer is a textured shape moving under its own affine
//! map. Textures are functions of layer-local (frame 1) coordinates, so a
//! surface point keeps its colour wherever it moves.

use serde::{Deserialize, Serialize};

/// `p -> c + s R(theta) (p - c) + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub center: [f64; 2],
    pub translation: [f64; 2],
    /// Radians, counter-clockwise in image coordinates (y down).
    pub rotation: f64,
    pub scale: f64,
}

impl Affine {
    pub fn translation(tx: f64, ty: f64) -> Self {
        Affine {
            center: [0.0, 0.0],
            translation: [tx, ty],
            rotation: 0.0,
            scale: 1.0,
        }
    }

    pub fn is_translation(&self) -> bool {
        self.rotation == 0.0 && self.scale == 1.0
    }

    pub fn apply(&self, [x, y]: [f64; 2]) -> [f64; 2] {
        let [tx, ty] = self.translation;
        if self.is_translation() {
            return [x + tx, y + ty];
        }
        let [cx, cy] = self.center;
        let (s, c) = self.rotation.sin_cos();
        let (dx, dy) = (x - cx, y - cy);
        [
            cx + self.scale * (c * dx - s * dy) + tx,
            cy + self.scale * (s * dx + c * dy) + ty,
        ]
    }

    pub fn invert(&self, [x, y]: [f64; 2]) -> [f64; 2] {
        let [tx, ty] = self.translation;
        if self.is_translation() {
            return [x - tx, y - ty];
        }
        let [cx, cy] = self.center;
        let (s, c) = self.rotation.sin_cos();
        let (dx, dy) = ((x - cx - tx) / self.scale, (y - cy - ty) / self.scale);
        [cx + c * dx + s * dy, cy - s * dx + c * dy]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Covers the whole plane.
    Plane,
    Rect {
        center: [f64; 2],
        half: [f64; 2],
    },
    Disk {
        center: [f64; 2],
        radius: f64,
    },
}

impl Shape {
    /// Membership of a layer-local point.
    pub fn contains(&self, [x, y]: [f64; 2]) -> bool {
        match *self {
            Shape::Plane => true,
            Shape::Rect { center, half } => (x - center[0]).abs() <= half[0] && (y - center[1]).abs() <= half[1],
            Shape::Disk { center, radius } => (x - center[0]).powi(2) + (y - center[1]).powi(2) <= radius * radius,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureFamily {
    Checker,
    Noise,
    Gradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Texture {
    Checker {
        period: f64,
        phase: [f64; 2],
        colors: [[f64; 3]; 2],
        /// Steepness of the tanh edge profile; lower is blurrier.
        sharpness: f64,
        /// `(amplitude, lattice seed)` of a per-cell grey offset that makes
        /// the pattern aperiodic.
        shade: (f64, u64),
    },
    Noise {
        base: [f64; 3],
        tint: [f64; 3],
        /// `(frequency in cycles/px, amplitude, lattice seed)`.
        octaves: Vec<(f64, f64, u64)>,
    },
    Gradient {
        colors: [[f64; 3]; 2],
        direction: [f64; 2],
        length: f64,
        offset: f64,
        wave: (f64, f64),
    },
}

/// Deterministic hash of a lattice cell into `[-1, 1]`.
pub fn lattice_value(seed: u64, i: i64, j: i64) -> f64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [i as u64, j as u64] {
        h ^= v.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 31)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 29;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn smooth_lattice(seed: u64, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let (i, j) = (x0 as i64, y0 as i64);
    let v00 = lattice_value(seed, i, j);
    let v10 = lattice_value(seed, i + 1, j);
    let v01 = lattice_value(seed, i, j + 1);
    let v11 = lattice_value(seed, i + 1, j + 1);
    let top = v00 + sx * (v10 - v00);
    let bottom = v01 + sx * (v11 - v01);
    top + sy * (bottom - top)
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| a[c] + t * (b[c] - a[c]))
}

impl Texture {
    pub fn color(&self, [x, y]: [f64; 2]) -> [f64; 3] {
        match self {
            Texture::Checker {
                period,
                phase,
                colors,
                sharpness,
                shade,
            } => {
                let (px, py) = (x + phase[0], y + phase[1]);
                let k = std::f64::consts::PI / period;
                let v = (px * k).sin() * (py * k).sin();
                let cell = lattice_value(shade.1, (px / period).floor() as i64, (py / period).floor() as i64);
                mix(colors[0], colors[1], 0.5 + 0.5 * (sharpness * v).tanh()).map(|c| c + shade.0 * cell)
            }
            Texture::Noise { base, tint, octaves } => {
                let n: f64 = octaves
                    .iter()
                    .map(|&(f, a, seed)| a * smooth_lattice(seed, x * f, y * f))
                    .sum();
                [0, 1, 2].map(|c| base[c] + n * tint[c])
            }
            Texture::Gradient {
                colors,
                direction,
                length,
                offset,
                wave,
            } => {
                let d = x * direction[0] + y * direction[1];
                let t = (d / length + offset + wave.1 * (d * wave.0).sin()).clamp(0.0, 1.0);
                mix(colors[0], colors[1], t)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub shape: Shape,
    pub motion: Affine,
    pub texture: Texture,
    /// Fixed-pattern grain attached to the surface, per unit cell.
    pub grain_sigma: f64,
    pub grain_seed: u64,
}

impl Layer {
    /// Surface colour at a layer-local point.
    pub fn surface(&self, q: [f64; 2]) -> [f64; 3] {
        let c = self.texture.color(q);
        if self.grain_sigma == 0.0 {
            return c;
        }
        let g = self.grain_sigma * lattice_value(self.grain_seed, q[0].floor() as i64, q[1].floor() as i64);
        c.map(|v| v + g)
    }
}

/// Sub-pixel sample offsets used for anti-aliasing.
pub const SUBSAMPLES: [[f64; 2]; 4] = [[-0.25, -0.25], [0.25, -0.25], [-0.25, 0.25], [0.25, 0.25]];

/// Layers in painter's order: index 0 is the background plane, higher
/// indices are nearer to the camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub height: usize,
    pub width: usize,
    pub layers: Vec<Layer>,
    /// Added to every rendered value before clamping.
    pub brightness: f64,
}

impl Scene {
    /// Topmost layer covering `p` in frame 1 (`second = false`) or frame 2.
    pub fn owner(&self, p: [f64; 2], second: bool) -> usize {
        self.layers
            .iter()
            .rposition(|l| l.shape.contains(if second { l.motion.invert(p) } else { p }))
            .expect("background covers the plane")
    }

    /// Colour at a continuous position of frame 1 or frame 2.
    pub fn sample(&self, p: [f64; 2], second: bool) -> [f64; 3] {
        let k = self.owner(p, second);
        let l = &self.layers[k];
        l.surface(if second { l.motion.invert(p) } else { p })
    }

    /// Anti-aliased RGB frame, `[3,H,W]` planar, before clamping.
    pub fn render(&self, second: bool) -> Vec<f64> {
        let (h, w) = (self.height, self.width);
        let mut out = vec![0.0; 3 * h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for d in SUBSAMPLES {
                    let c = self.sample([x as f64 + d[0], y as f64 + d[1]], second);
                    (0..3).for_each(|i| acc[i] += c[i]);
                }
                for (c, a) in acc.iter().enumerate() {
                    out[c * h * w + y * w + x] = a / SUBSAMPLES.len() as f64 + self.brightness;
                }
            }
        }
        out
    }

    /// Flow of the topmost layer at each frame-1 pixel centre, planar.
    pub fn flow(&self) -> Vec<f64> {
        self.flow_window(0, 0, self.height, self.width)
    }

    /// Flow of the scene seen through an `h x w` window whose top-left pixel
    /// is `(top, left)`: the labels of a camera cropped to that window.
    pub fn flow_window(&self, top: usize, left: usize, h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; 2 * h * w];
        for y in 0..h {
            for x in 0..w {
                let p = [(left + x) as f64, (top + y) as f64];
                let q = self.layers[self.owner(p, false)].motion.apply(p);
                out[y * w + x] = q[0] - p[0];
                out[h * w + y * w + x] = q[1] - p[1];
            }
        }
        out
    }

    /// Visibility in frame 2 (`true` = visible). A pixel is visible when every
    /// sub-sample belongs to the centre's layer, the centre lands inside
    /// frame 2, and every moved sub-sample is still on top in frame 2.
    /// Pixels straddling a layer edge count as occluded.
    pub fn visibility(&self) -> Vec<bool> {
        let (h, w) = (self.height, self.width);
        let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
        let mut out = vec![false; h * w];
        for y in 0..h {
            for x in 0..w {
                let p = [x as f64, y as f64];
                let k = self.owner(p, false);
                let m = &self.layers[k].motion;
                let c = m.apply(p);
                let inside = (0.0..=xmax).contains(&c[0]) && (0.0..=ymax).contains(&c[1]);
                out[y * w + x] = inside
                    && SUBSAMPLES.iter().all(|d| {
                        let s = [p[0] + d[0], p[1] + d[1]];
                        self.owner(s, false) == k && self.owner(m.apply(s), true) == k
                    });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_inverse_roundtrip() {
        let m = Affine {
            center: [10.0, 20.0],
            translation: [1.5, -2.0],
            rotation: 0.3,
            scale: 1.05,
        };
        for p in [[0.0, 0.0], [13.2, 7.7], [63.0, 1.0]] {
            let q = m.invert(m.apply(p));
            assert!((q[0] - p[0]).abs() < 1e-12 && (q[1] - p[1]).abs() < 1e-12);
        }
        let t = Affine::translation(3.0, -1.0);
        assert_eq!(t.apply([2.25, 4.75]), [5.25, 3.75]);
        assert_eq!(t.invert([5.25, 3.75]), [2.25, 4.75]);
    }

    #[test]
    fn lattice_is_deterministic_and_bounded() {
        for i in -20..20 {
            let v = lattice_value(7, i, 3 * i);
            assert_eq!(v, lattice_value(7, i, 3 * i));
            assert!((-1.0..=1.0).contains(&v));
        }
        assert_ne!(lattice_value(1, 0, 0), lattice_value(2, 0, 0));
    }

    #[test]
    fn shapes() {
        let r = Shape::Rect {
            center: [5.0, 5.0],
            half: [2.0, 1.0],
        };
        assert!(r.contains([7.0, 6.0]) && !r.contains([7.1, 5.0]));
        let d = Shape::Disk {
            center: [0.0, 0.0],
            radius: 2.0,
        };
        assert!(d.contains([1.2, 1.2]) && !d.contains([1.5, 1.5]));
    }
}
