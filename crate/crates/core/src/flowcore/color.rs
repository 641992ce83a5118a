use std::path::Path;

use super::{FlowField, Image};
use crate::error::{Error, Result};

/// Segment lengths of the Middlebury colour wheel: red-yellow, yellow-green,
/// green-cyan, cyan-blue, blue-magenta, magenta-red.
const SEGMENTS: [usize; 6] = [15, 6, 4, 11, 13, 6];

fn color_wheel() -> Vec<[f64; 3]> {
    let mut wheel = Vec::with_capacity(SEGMENTS.iter().sum());
    // Each segment ramps one channel while the others stay fixed.
    let ramps: [([usize; 3], usize, bool); 6] = [
        ([255, 0, 0], 1, true),
        ([255, 255, 0], 0, false),
        ([0, 255, 0], 2, true),
        ([0, 255, 255], 1, false),
        ([0, 0, 255], 0, true),
        ([255, 0, 255], 2, false),
    ];
    for (&len, (base, channel, rising)) in SEGMENTS.iter().zip(ramps) {
        for i in 0..len {
            let mut c = base.map(|v| v as f64);
            let t = 255.0 * i as f64 / len as f64;
            c[channel] = if rising { t } else { 255.0 - t };
            wheel.push(c.map(|v| v / 255.0));
        }
    }
    wheel
}

/// Colour-codes a flow field: hue follows the direction `atan2(v, u)`
/// (0 rad is red), saturation grows with magnitude relative to
/// `max_magnitude` (default: the field's own maximum). Zero flow is white;
/// vectors longer than the maximum are darkened.
pub fn flow_to_color(flow: &FlowField, max_magnitude: Option<f64>) -> Image {
    let (h, w) = flow.size();
    let n = h * w;
    let max = max_magnitude.unwrap_or_else(|| {
        (0..n)
            .map(|i| flow.data()[i].hypot(flow.data()[n + i]))
            .fold(0.0, f64::max)
    });
    let max = if max > 0.0 { max } else { 1.0 };
    let wheel = color_wheel();
    let ncols = wheel.len() as f64;
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        let (u, v) = (flow.data()[i], flow.data()[n + i]);
        let rad = u.hypot(v) / max;
        let turn = (v.atan2(u) / std::f64::consts::TAU).rem_euclid(1.0);
        let fk = turn * ncols;
        let k0 = (fk.floor() as usize) % wheel.len();
        let k1 = (k0 + 1) % wheel.len();
        let f = fk - fk.floor();
        for c in 0..3 {
            let col = (1.0 - f) * wheel[k0][c] + f * wheel[k1][c];
            let col = if rad <= 1.0 {
                1.0 - rad * (1.0 - col)
            } else {
                0.75 * col
            };
            data[c * n + i] = col.clamp(0.0, 1.0);
        }
    }
    Image::new(3, h, w, data).expect("colour image dimensions follow the flow field")
}

/// Writes an image as 8-bit RGB PNG.
pub fn save_rgb_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let rgb = img.to_rgb();
    let (h, w) = rgb.size();
    let n = h * w;
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for (i, px) in buf.pixels_mut().enumerate() {
        for c in 0..3 {
            px.0[c] = (rgb.data()[c * n + i] * 255.0).round() as u8;
        }
    }
    buf.save(path.as_ref()).map_err(|e| Error::Codec(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hsv_hue(r: f64, g: f64, b: f64) -> f64 {
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let d = max - min;
        let h = if max == r {
            ((g - b) / d).rem_euclid(6.0)
        } else if max == g {
            (b - r) / d + 2.0
        } else {
            (r - g) / d + 4.0
        };
        60.0 * h
    }

    #[test]
    fn zero_flow_is_white() {
        let img = flow_to_color(&FlowField::zeros(8, 8), None);
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rightward_flow_at_max_is_pure_red() {
        let img = flow_to_color(&FlowField::uniform(8, 8, 4.0, 0.0), Some(4.0));
        assert_eq!((img.get(0, 3, 3), img.get(1, 3, 3), img.get(2, 3, 3)), (1.0, 0.0, 0.0));
    }

    #[test]
    fn hue_increases_with_direction() {
        let angles: Vec<f64> = (0..8).map(|k| k as f64 * std::f64::consts::TAU / 8.0 + 0.1).collect();
        let flow = FlowField::from_fn(8, 8, |x, _| {
            let a = angles[x];
            (a.cos(), a.sin())
        });
        let img = flow_to_color(&flow, Some(1.0));
        let hues: Vec<f64> = (0..8)
            .map(|x| hsv_hue(img.get(0, 0, x), img.get(1, 0, x), img.get(2, 0, x)))
            .collect();
        for pair in hues.windows(2) {
            assert!(pair[1] > pair[0], "hues not increasing: {hues:?}");
        }
    }

    #[test]
    fn over_long_vectors_are_darkened() {
        let img = flow_to_color(&FlowField::uniform(8, 8, 8.0, 0.0), Some(4.0));
        assert_eq!(img.get(0, 0, 0), 0.75);
    }
}
