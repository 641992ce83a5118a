//! Value types shared by every other module, plus evaluation metrics, `.flo`
//! I/O and flow visualisation.
//!
//! Layout conventions: images are planar `[C,H,W]`, flow fields are planar
//! `[2,H,W]` with channel 0 = u (+right) and channel 1 = v (+down). Pixel
//! `(x, y)` of frame 1 maps to `(x + u, y + v)` in frame 2.

mod color;
mod flo;
mod metrics;

pub use color::{flow_to_color, save_rgb_png};
pub use flo::{decode_flo, encode_flo, read_flow_file, write_flow_file, FloError, FLO_MAGIC};
pub use metrics::{epe_map, fl_all, mean_epe};

use autograd::Tensor;

use crate::error::{Error, Result};

/// Smallest accepted image side.
pub const MIN_IMAGE_SIDE: usize = 8;

/// Planar `[C,H,W]` image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(
                "image.channels",
                format!("{channels} (expected 1 or 3)"),
            ));
        }
        if height < MIN_IMAGE_SIDE || width < MIN_IMAGE_SIDE {
            return Err(Error::invalid(
                "image.size",
                format!("{height}x{width} is below the {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE} minimum"),
            ));
        }
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "image data has {} values, expected {}",
                data.len(),
                channels * height * width
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid("image.data", format!("value {bad} outside [0, 1]")));
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    /// Builds an image from a `[C,H,W]` tensor, clamping into `[0, 1]`.
    pub fn from_tensor_clamped(t: &Tensor) -> Result<Self> {
        let (c, h, w) = t.dims3();
        Image::new(c, h, w, t.data().iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Image::new(channels, height, width, vec![value; channels * height * width])
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

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.channels, self.height, self.width], self.data.clone())
    }

    /// Three-channel copy (grey images are replicated).
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(3 * self.data.len());
        for _ in 0..3 {
            data.extend_from_slice(&self.data);
        }
        Image {
            channels: 3,
            data,
            ..*self
        }
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::invalid("crop", "window exceeds image bounds"));
        }
        let mut data = Vec::with_capacity(self.channels * height * width);
        for c in 0..self.channels {
            for y in top..top + height {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + left..row + left + width]);
            }
        }
        Image::new(self.channels, height, width, data)
    }
}

/// Planar `[2,H,W]` displacement field in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 2 * height * width {
            return Err(Error::ShapeMismatch(format!(
                "flow data has {} values, expected {}",
                data.len(),
                2 * height * width
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("flow.data", "non-finite displacement"));
        }
        Ok(FlowField { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::uniform(height, width, 0.0, 0.0)
    }

    pub fn uniform(height: usize, width: usize, u: f64, v: f64) -> Self {
        let n = height * width;
        let mut data = vec![u; 2 * n];
        data[n..].fill(v);
        FlowField { height, width, data }
    }

    /// Builds a field by evaluating `f(x, y) -> (u, v)` at every pixel.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Self {
        let n = height * width;
        let mut data = vec![0.0; 2 * n];
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x, y);
                data[y * width + x] = u;
                data[n + y * width + x] = v;
            }
        }
        FlowField { height, width, data }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (c, h, w) = t.dims3();
        if c != 2 {
            return Err(Error::ShapeMismatch(format!("flow tensor has {c} channels")));
        }
        FlowField::new(h, w, t.data().to_vec())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn u(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn v(&self, y: usize, x: usize) -> f64 {
        self.data[self.height * self.width + y * self.width + x]
    }

    pub fn at(&self, y: usize, x: usize) -> (f64, f64) {
        (self.u(y, x), self.v(y, x))
    }

    pub fn set(&mut self, y: usize, x: usize, u: f64, v: f64) {
        let n = self.height * self.width;
        self.data[y * self.width + x] = u;
        self.data[n + y * self.width + x] = v;
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[2, self.height, self.width], self.data.clone())
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<FlowField> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::invalid("crop", "window exceeds flow bounds"));
        }
        Ok(FlowField::from_fn(height, width, |x, y| self.at(y + top, x + left)))
    }

    /// Mean displacement magnitude.
    pub fn mean_magnitude(&self) -> f64 {
        let n = self.height * self.width;
        (0..n).map(|i| self.data[i].hypot(self.data[n + i])).sum::<f64>() / n as f64
    }
}

/// `H x W` map of exact 0/1 values.
///
/// Used as occlusion mask (1 = visible), curriculum weight mask
/// (1 = low difficulty) and ground-truth validity mask (1 = defined).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} values, expected {}",
                data.len(),
                height * width
            )));
        }
        Ok(BinaryMask { height, width, data })
    }

    pub fn ones(height: usize, width: usize) -> Self {
        BinaryMask {
            height,
            width,
            data: vec![true; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        BinaryMask {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height * width).map(|i| f(i % width, i / width)).collect();
        BinaryMask { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        crate::error::ensure_same_size("mask and", self.size(), other.size())?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect();
        BinaryMask::new(self.height, self.width, data)
    }

    /// `[1,H,W]` tensor of 0.0 / 1.0.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            &[1, self.height, self.width],
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<BinaryMask> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::invalid("crop", "window exceeds mask bounds"));
        }
        Ok(BinaryMask::from_fn(height, width, |x, y| self.get(y + top, x + left)))
    }
}

/// Per-pixel end-point error, in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct EpeMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl EpeMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch("epe map size".into()));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("epe", "values must be finite and non-negative"));
        }
        Ok(EpeMap { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_out_of_range_and_tiny() {
        assert!(Image::new(1, 8, 8, vec![1.5; 64]).is_err());
        assert!(Image::new(1, 4, 8, vec![0.5; 32]).is_err());
        assert!(Image::new(2, 8, 8, vec![0.5; 128]).is_err());
        assert!(Image::new(1, 8, 8, vec![0.5; 64]).is_ok());
    }

    #[test]
    fn flow_accessors_follow_planar_layout() {
        let f = FlowField::from_fn(3, 4, |x, y| (x as f64, -(y as f64)));
        assert_eq!(f.at(2, 3), (3.0, -2.0));
        let c = f.crop(1, 2, 2, 2).unwrap();
        assert_eq!(c.at(0, 0), (2.0, -1.0));
        assert!(FlowField::new(2, 2, vec![f64::NAN; 8]).is_err());
    }

    #[test]
    fn mask_counts_and_crops() {
        let m = BinaryMask::from_fn(4, 4, |x, _| x < 2);
        assert_eq!(m.count(), 8);
        assert_eq!(m.crop(0, 1, 2, 2).unwrap().count(), 2);
        assert_eq!(m.to_tensor().sum(), 8.0);
    }
}
