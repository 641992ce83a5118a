//! Backward warping and the two terms of the unsupervised loss: an
//! SSIM-based photometric consistency loss and a first-order edge-aware
//! smoothness loss. Every loss has a differentiable form working on tape
//! variables (`*_var`) and a plain value form.

use autograd::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_size, Error, Result};
use crate::flowcore::{BinaryMask, FlowField, Image};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhotoLossConfig {
    pub ssim_weight: f64,
    pub l1_weight: f64,
    /// Side of the (odd, square) SSIM box window.
    pub ssim_window: usize,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
}

impl Default for PhotoLossConfig {
    fn default() -> Self {
        PhotoLossConfig {
            ssim_weight: 0.85,
            l1_weight: 0.15,
            ssim_window: 7,
            ssim_c1: 1e-4,
            ssim_c2: 9e-4,
        }
    }
}

impl PhotoLossConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.ssim_weight) || !unit.contains(&self.l1_weight) {
            return Err(Error::invalid(
                "photo.ssim_weight/l1_weight",
                "weights must lie in [0, 1]",
            ));
        }
        if (self.ssim_weight + self.l1_weight - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("photo.ssim_weight/l1_weight", "weights must sum to 1"));
        }
        if self.ssim_window < 3 || self.ssim_window.is_multiple_of(2) {
            return Err(Error::invalid("photo.ssim_window", "must be odd and at least 3"));
        }
        if !(self.ssim_c1 > 0.0 && self.ssim_c2 > 0.0) {
            return Err(Error::invalid("photo.ssim_c1/ssim_c2", "stabilisers must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothLossConfig {
    /// Sensitivity of the edge-aware weight `exp(-edge_weight * |dI|)`.
    pub edge_weight: f64,
}

impl Default for SmoothLossConfig {
    fn default() -> Self {
        SmoothLossConfig { edge_weight: 150.0 }
    }
}

impl SmoothLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.edge_weight > 0.0 && self.edge_weight.is_finite()) {
            return Err(Error::invalid("smooth.edge_weight", "must be positive"));
        }
        Ok(())
    }
}

/// Samples `image2` at `(x + u, y + v)` bilinearly. Sample points outside the
/// frame use edge-clamped coordinates and are flagged 0 in the returned mask.
pub fn backward_warp(image2: &Image, flow: &FlowField) -> Result<(Image, BinaryMask)> {
    ensure_same_size("backward_warp", image2.size(), flow.size())?;
    let tape = Tape::new();
    let (warped, inb) = warp_var(tape.constant(image2.to_tensor()), tape.constant(flow.to_tensor()));
    let img = Image::from_tensor_clamped(&warped.value())?;
    Ok((img, inb))
}

/// Differentiable backward warp of a `[C,H,W]` variable by a `[2,H,W]` flow.
pub fn warp_var<'t>(image: Var<'t>, flow: Var<'t>) -> (Var<'t>, BinaryMask) {
    let shape = image.shape();
    let (h, w) = (shape[1], shape[2]);
    let (warped, inb) = image.warp(flow);
    let mask = BinaryMask::new(h, w, inb).expect("warp mask matches image size");
    (warped, mask)
}

/// Per-pixel, per-channel SSIM between two `[C,H,W]` variables using box
/// windows truncated at the border.
pub fn ssim_map_var<'t>(x: Var<'t>, y: Var<'t>, cfg: &PhotoLossConfig) -> Var<'t> {
    let r = cfg.ssim_window / 2;
    let mu_x = x.box_filter(r);
    let mu_y = y.box_filter(r);
    let mu_xy = mu_x.mul(mu_y);
    let var_x = x.square().box_filter(r).sub(mu_x.square());
    let var_y = y.square().box_filter(r).sub(mu_y.square());
    let cov = x.mul(y).box_filter(r).sub(mu_xy);
    let num = mu_xy
        .mul_scalar(2.0)
        .add_scalar(cfg.ssim_c1)
        .mul(cov.mul_scalar(2.0).add_scalar(cfg.ssim_c2));
    let den = mu_x
        .square()
        .add(mu_y.square())
        .add_scalar(cfg.ssim_c1)
        .mul(var_x.add(var_y).add_scalar(cfg.ssim_c2));
    num.div(den)
}

fn zero_loss(tape: &Tape) -> Var<'_> {
    tape.constant(Tensor::scalar(0.0))
}

/// Masked photometric consistency loss between `i1` and `i2` warped by
/// `flow`: mean over pixels that are visible (`occ == 1`) and whose warp
/// sample stays in frame of `ssim_weight * (1 - SSIM) / 2 + l1_weight * |diff|`
/// (channel-averaged). An empty effective mask yields a zero loss.
pub fn photometric_loss_var<'t>(
    i1: Var<'t>,
    i2: Var<'t>,
    flow: Var<'t>,
    occ: &BinaryMask,
    cfg: &PhotoLossConfig,
) -> Result<Var<'t>> {
    let (s1, s2, sf) = (i1.shape(), i2.shape(), flow.shape());
    if s1 != s2 || s1[1..] != sf[1..] || sf[0] != 2 {
        return Err(Error::ShapeMismatch(format!(
            "photometric_loss: images {s1:?}/{s2:?}, flow {sf:?}"
        )));
    }
    ensure_same_size("photometric_loss occlusion", occ.size(), (s1[1], s1[2]))?;
    let tape = i1.tape();
    let (warped, inb) = warp_var(i2, flow);
    let effective = occ.and(&inb)?;
    let count = effective.count();
    if count == 0 {
        log::warn!("photometric loss: empty effective mask, returning zero");
        return Ok(zero_loss(tape));
    }
    let channels = s1[0];
    let ssim = ssim_map_var(i1, warped, cfg);
    let per_pixel = ssim
        .neg()
        .add_scalar(1.0)
        .mul_scalar(0.5 * cfg.ssim_weight)
        .add(i1.sub(warped).abs().mul_scalar(cfg.l1_weight))
        .sum_channels();
    let loss = per_pixel
        .mul_const(&effective.to_tensor())
        .sum()
        .mul_scalar(1.0 / (channels * count) as f64);
    Ok(loss)
}

pub fn photometric_loss(
    i1: &Image,
    i2: &Image,
    flow: &FlowField,
    occ: &BinaryMask,
    cfg: &PhotoLossConfig,
) -> Result<f64> {
    let tape = Tape::new();
    let loss = photometric_loss_var(
        tape.constant(i1.to_tensor()),
        tape.constant(i2.to_tensor()),
        tape.constant(flow.to_tensor()),
        occ,
        cfg,
    )?;
    Ok(loss.item())
}

/// Edge weights `exp(-edge_weight * mean_c |dI|)` for horizontal and vertical
/// neighbour differences, shaped `[1,H,W-1]` and `[1,H-1,W]`.
fn edge_weights(i1: &Image, cfg: &SmoothLossConfig) -> (Tensor, Tensor) {
    let (c, h, w) = (i1.channels(), i1.height(), i1.width());
    let mut wx = vec![0.0; h * (w - 1)];
    let mut wy = vec![0.0; (h - 1) * w];
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                let g: f64 = (0..c)
                    .map(|ch| (i1.get(ch, y, x + 1) - i1.get(ch, y, x)).abs())
                    .sum::<f64>()
                    / c as f64;
                wx[y * (w - 1) + x] = (-cfg.edge_weight * g).exp();
            }
            if y + 1 < h {
                let g: f64 = (0..c)
                    .map(|ch| (i1.get(ch, y + 1, x) - i1.get(ch, y, x)).abs())
                    .sum::<f64>()
                    / c as f64;
                wy[y * w + x] = (-cfg.edge_weight * g).exp();
            }
        }
    }
    (Tensor::new(&[1, h, w - 1], wx), Tensor::new(&[1, h - 1, w], wy))
}

/// First-order edge-aware smoothness: mean over all horizontal and vertical
/// neighbour pairs of `exp(-edge_weight * mean_c |dI1|) * (|du| + |dv|)`.
pub fn smoothness_loss_var<'t>(flow: Var<'t>, i1: &Image, cfg: &SmoothLossConfig) -> Result<Var<'t>> {
    let shape = flow.shape();
    if shape.len() != 3 || shape[0] != 2 {
        return Err(Error::ShapeMismatch(format!("smoothness_loss: flow {shape:?}")));
    }
    let (h, w) = (shape[1], shape[2]);
    ensure_same_size("smoothness_loss", (h, w), i1.size())?;
    let (wx, wy) = edge_weights(i1, cfg);
    let dx = flow.crop(0, 1, h, w - 1).sub(flow.crop(0, 0, h, w - 1));
    let dy = flow.crop(1, 0, h - 1, w).sub(flow.crop(0, 0, h - 1, w));
    let sx = dx.abs().sum_channels().mul_const(&wx).sum();
    let sy = dy.abs().sum_channels().mul_const(&wy).sum();
    let pairs = (h * (w - 1) + (h - 1) * w) as f64;
    Ok(sx.add(sy).mul_scalar(1.0 / pairs))
}

pub fn smoothness_loss(flow: &FlowField, i1: &Image, cfg: &SmoothLossConfig) -> Result<f64> {
    let tape = Tape::new();
    Ok(smoothness_loss_var(tape.constant(flow.to_tensor()), i1, cfg)?.item())
}
