//! Target-branch data flow: shared random crops, label cropping and
//! photometric jitter for student inputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_size, Error, Result};
use crate::flowcore::{BinaryMask, FlowField, Image, MIN_IMAGE_SIDE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropWindow {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl CropWindow {
    pub fn full(height: usize, width: usize) -> Self {
        CropWindow {
            top: 0,
            left: 0,
            height,
            width,
        }
    }

    /// Checks the window against a frame of size `(h, w)`.
    pub fn check(&self, (h, w): (usize, usize)) -> Result<()> {
        if self.height < MIN_IMAGE_SIDE || self.width < MIN_IMAGE_SIDE {
            return Err(Error::invalid(
                "crop",
                format!("{}x{} below the {MIN_IMAGE_SIDE}px minimum", self.height, self.width),
            ));
        }
        if self.top + self.height > h || self.left + self.width > w {
            return Err(Error::invalid("crop", format!("{self:?} exceeds {h}x{w}")));
        }
        Ok(())
    }
}

/// Crop of a given fraction of each side, at least the minimum input size.
pub fn crop_size_for(frame: (usize, usize), fraction: f64) -> (usize, usize) {
    let side = |n: usize| ((n as f64 * fraction).round() as usize).clamp(MIN_IMAGE_SIDE.min(n), n);
    (side(frame.0), side(frame.1))
}

/// Crops both frames with one uniformly drawn window.
pub fn random_crop<R: Rng + ?Sized>(
    i1: &Image,
    i2: &Image,
    size: (usize, usize),
    rng: &mut R,
) -> Result<(Image, Image, CropWindow)> {
    ensure_same_size("random_crop", i1.size(), i2.size())?;
    let (h, w) = i1.size();
    if size.0 > h || size.1 > w {
        return Err(Error::invalid(
            "crop",
            format!("{}x{} larger than {h}x{w}", size.0, size.1),
        ));
    }
    let psi = CropWindow {
        top: rng.random_range(0..=h - size.0),
        left: rng.random_range(0..=w - size.1),
        height: size.0,
        width: size.1,
    };
    psi.check((h, w))?;
    Ok((crop_image(i1, &psi)?, crop_image(i2, &psi)?, psi))
}

pub fn crop_image(img: &Image, psi: &CropWindow) -> Result<Image> {
    psi.check(img.size())?;
    img.crop(psi.top, psi.left, psi.height, psi.width)
}

/// Slices flow and mask with `psi`. Flow vectors are copied unchanged.
pub fn crop_label(flow: &FlowField, mask: &BinaryMask, psi: &CropWindow) -> Result<(FlowField, BinaryMask)> {
    ensure_same_size("crop_label", flow.size(), mask.size())?;
    psi.check(flow.size())?;
    Ok((
        flow.crop(psi.top, psi.left, psi.height, psi.width)?,
        mask.crop(psi.top, psi.left, psi.height, psi.width)?,
    ))
}

/// Half-widths of the jitter ranges; `0` disables a component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Additive offset drawn from `[-b, b]`.
    pub brightness: f64,
    /// Contrast factor drawn from `[1 - c, 1 + c]`, pivot 0.5.
    pub contrast: f64,
    /// Saturation factor drawn from `[1 - s, 1 + s]` (RGB only).
    pub saturation: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            brightness: 0.1,
            contrast: 0.1,
            saturation: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        AugmentConfig {
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("augment.{name}"), "must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// One concrete draw of the jitter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jitter {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
}

impl Jitter {
    pub const IDENTITY: Jitter = Jitter {
        brightness: 0.0,
        contrast: 1.0,
        saturation: 1.0,
    };

    pub fn sample<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> Self {
        let mut draw = |half: f64| {
            if half > 0.0 {
                rng.random_range(-half..=half)
            } else {
                0.0
            }
        };
        Jitter {
            brightness: draw(cfg.brightness),
            contrast: 1.0 + draw(cfg.contrast),
            saturation: 1.0 + draw(cfg.saturation),
        }
    }

    /// Applies saturation, then contrast, then brightness, then clamps.
    /// Components at their identity value are skipped, so the identity draw
    /// returns the input bit for bit.
    pub fn apply(&self, img: &Image) -> Image {
        let (c, h, w) = (img.channels(), img.height(), img.width());
        let hw = h * w;
        let mut data = img.data().to_vec();
        if self.saturation != 1.0 && c == 3 {
            for i in 0..hw {
                let grey = (data[i] + data[hw + i] + data[2 * hw + i]) / 3.0;
                for ch in 0..3 {
                    let v = &mut data[ch * hw + i];
                    *v = grey + self.saturation * (*v - grey);
                }
            }
        }
        if self.contrast != 1.0 {
            data.iter_mut().for_each(|v| *v = 0.5 + self.contrast * (*v - 0.5));
        }
        if self.brightness != 0.0 {
            data.iter_mut().for_each(|v| *v += self.brightness);
        }
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Image::new(c, h, w, data).expect("jitter keeps the image shape")
    }
}

/// Jitters both frames of a pair with the same draw.
pub fn photometric_augment<R: Rng + ?Sized>(
    i1: &Image,
    i2: &Image,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> (Image, Image) {
    let j = Jitter::sample(cfg, rng);
    (j.apply(i1), j.apply(i2))
}
