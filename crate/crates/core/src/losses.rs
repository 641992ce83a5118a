//! Source supervision, pseudo-label adaptation, unsupervised and total loss.
//!
//! Per-pixel L1 is `|du| + |dv|`. Curriculum weights are `eps1` on
//! low-difficulty pixels and `eps2` elsewhere. Masks and pseudo-labels enter
//! the tape as constants.

use autograd::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_size, Error, Result};
use crate::flowcore::{BinaryMask, FlowField, Image};
use crate::warploss::{photometric_loss_var, smoothness_loss_var, PhotoLossConfig, SmoothLossConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Weight of low-difficulty pixels.
    pub eps1: f64,
    /// Weight of high-difficulty pixels.
    pub eps2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            eps1: 0.9,
            eps2: 0.1,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("weights.{name}"), "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Loss values of one training step, plus diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_s: f64,
    pub l_a: f64,
    pub l_u: f64,
    pub l_total: f64,
    /// Fraction of valid source pixels marked low-difficulty.
    pub masked_fraction_source: f64,
    /// Fraction of visible target-crop pixels marked low-difficulty.
    pub masked_fraction_target: f64,
    /// Fraction of target-crop pixels the teacher flagged as occluded.
    pub occluded_fraction: f64,
    /// Curriculum factor used for the masks.
    pub n: f64,
    /// Target crop area relative to the full frame.
    pub crop_area: f64,
}

/// `[1,H,W]` per-pixel weights `gate * (eps1 * m + eps2 * (1 - m))`.
fn curriculum_weights(mask: &BinaryMask, gate: &BinaryMask, w: &LossWeights) -> Tensor {
    let data = mask
        .data()
        .iter()
        .zip(gate.data())
        .map(|(&m, &g)| match (g, m) {
            (false, _) => 0.0,
            (true, true) => w.eps1,
            (true, false) => w.eps2,
        })
        .collect();
    Tensor::new(&[1, mask.height(), mask.width()], data)
}

fn check_flow_var(what: &str, flow: &Var<'_>, size: (usize, usize)) -> Result<()> {
    let s = flow.shape();
    if s.len() != 3 || s[0] != 2 {
        return Err(Error::ShapeMismatch(format!("{what}: flow var {s:?}")));
    }
    ensure_same_size(what, (s[1], s[2]), size)
}

fn weighted_l1<'t>(pred: Var<'t>, target: Var<'t>, weights: &Tensor) -> Var<'t> {
    pred.sub(target).abs().sum_channels().mul_const(weights).sum()
}

/// Curriculum-weighted L1 against ground truth, averaged over valid pixels.
/// Gradient flows to `pred` only.
pub fn supervised_loss_var<'t>(
    pred: Var<'t>,
    gt: &FlowField,
    easy: &BinaryMask,
    valid: &BinaryMask,
    w: &LossWeights,
) -> Result<Var<'t>> {
    check_flow_var("supervised_loss", &pred, gt.size())?;
    ensure_same_size("supervised_loss mask", easy.size(), gt.size())?;
    ensure_same_size("supervised_loss validity", valid.size(), gt.size())?;
    let count = valid.count();
    if count == 0 {
        return Err(Error::EmptyMask("supervised loss needs valid ground truth"));
    }
    let target = pred.tape().constant(gt.to_tensor());
    let weights = curriculum_weights(easy, valid, w);
    Ok(weighted_l1(pred, target, &weights).mul_scalar(1.0 / count as f64))
}

pub fn supervised_loss(
    pred: &FlowField,
    gt: &FlowField,
    easy: &BinaryMask,
    valid: &BinaryMask,
    w: &LossWeights,
) -> Result<f64> {
    let tape = Tape::new();
    Ok(supervised_loss_var(tape.constant(pred.to_tensor()), gt, easy, valid, w)?.item())
}

/// Occlusion-gated, curriculum-weighted L1 against teacher pseudo-labels,
/// averaged over all pixels (occluded pixels contribute zero).
///
/// `pseudo` is detached before use, so no gradient can reach it.
pub fn adaptation_loss_var<'t>(
    pred: Var<'t>,
    pseudo: Var<'t>,
    visible: &BinaryMask,
    easy: &BinaryMask,
    w: &LossWeights,
) -> Result<Var<'t>> {
    check_flow_var("adaptation_loss", &pred, visible.size())?;
    check_flow_var("adaptation_loss pseudo-label", &pseudo, visible.size())?;
    ensure_same_size("adaptation_loss mask", easy.size(), visible.size())?;
    let tape = pred.tape();
    if visible.count() == 0 {
        log::warn!("adaptation loss: every pixel occluded, returning zero");
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let weights = curriculum_weights(easy, visible, w);
    let n = visible.height() * visible.width();
    Ok(weighted_l1(pred, pseudo.detach(), &weights).mul_scalar(1.0 / n as f64))
}

pub fn adaptation_loss(
    pred: &FlowField,
    pseudo: &FlowField,
    visible: &BinaryMask,
    easy: &BinaryMask,
    w: &LossWeights,
) -> Result<f64> {
    let tape = Tape::new();
    let loss = adaptation_loss_var(
        tape.constant(pred.to_tensor()),
        tape.constant(pseudo.to_tensor()),
        visible,
        easy,
        w,
    )?;
    Ok(loss.item())
}

/// Smoothness plus visibility-masked photometric loss of `flow` on the pair.
pub fn unsupervised_loss_var<'t>(
    i1: &Image,
    i2: &Image,
    flow: Var<'t>,
    visible: &BinaryMask,
    photo: &PhotoLossConfig,
    smooth: &SmoothLossConfig,
) -> Result<Var<'t>> {
    let tape = flow.tape();
    let smooth = smoothness_loss_var(flow, i1, smooth)?;
    let photo = photometric_loss_var(
        tape.constant(i1.to_tensor()),
        tape.constant(i2.to_tensor()),
        flow,
        visible,
        photo,
    )?;
    Ok(smooth.add(photo))
}

pub fn unsupervised_loss(
    i1: &Image,
    i2: &Image,
    flow: &FlowField,
    visible: &BinaryMask,
    photo: &PhotoLossConfig,
    smooth: &SmoothLossConfig,
) -> Result<f64> {
    let tape = Tape::new();
    Ok(unsupervised_loss_var(i1, i2, tape.constant(flow.to_tensor()), visible, photo, smooth)?.item())
}

pub fn total_loss(l_s: f64, l_a: f64, l_u: f64, w: &LossWeights) -> f64 {
    w.alpha * l_s + w.beta * l_a + w.gamma * l_u
}

#[cfg(test)]
mod tests {
    use super::*;

    fn offset(f: &FlowField, c: f64) -> FlowField {
        FlowField::new(f.height(), f.width(), f.data().iter().map(|v| v + c).collect()).unwrap()
    }

    #[test]
    fn supervised_weights() {
        let gt = FlowField::from_fn(8, 8, |x, y| (x as f64, y as f64 * 0.5));
        let pred = offset(&gt, 0.25); // L1 = 0.5 per pixel
        let ones = BinaryMask::ones(8, 8);
        let w = LossWeights::default();
        assert_eq!(supervised_loss(&gt, &gt, &ones, &ones, &w).unwrap(), 0.0);
        assert!((supervised_loss(&pred, &gt, &ones, &ones, &w).unwrap() - 0.45).abs() < 1e-12);
        let zeros = BinaryMask::zeros(8, 8);
        assert!((supervised_loss(&pred, &gt, &zeros, &ones, &w).unwrap() - 0.05).abs() < 1e-12);
        assert!(supervised_loss(&pred, &gt, &ones, &zeros, &w).is_err());
    }

    #[test]
    fn without_curriculum_recovers_plain_l1() {
        let gt = FlowField::from_fn(8, 8, |x, _| (x as f64, 1.0));
        let pred = FlowField::from_fn(8, 8, |x, y| (x as f64 * 1.5, y as f64));
        let ones = BinaryMask::ones(8, 8);
        let w = LossWeights {
            eps1: 1.0,
            ..Default::default()
        };
        let plain: f64 = (0..8)
            .flat_map(|y| (0..8).map(move |x| (x, y)))
            .map(|(x, y)| (pred.u(y, x) - gt.u(y, x)).abs() + (pred.v(y, x) - gt.v(y, x)).abs())
            .sum::<f64>()
            / 64.0;
        assert!((supervised_loss(&pred, &gt, &ones, &ones, &w).unwrap() - plain).abs() < 1e-12);
    }

    #[test]
    fn adaptation_gating() {
        let pseudo = FlowField::uniform(8, 8, 1.0, 1.0);
        let pred = FlowField::uniform(8, 8, 1.5, 0.5); // L1 = 1
        let ones = BinaryMask::ones(8, 8);
        let w = LossWeights::default();
        assert_eq!(adaptation_loss(&pseudo, &pseudo, &ones, &ones, &w).unwrap(), 0.0);
        assert_eq!(
            adaptation_loss(&pred, &pseudo, &BinaryMask::zeros(8, 8), &ones, &w).unwrap(),
            0.0
        );
        assert!((adaptation_loss(&pred, &pseudo, &ones, &ones, &w).unwrap() - 0.9).abs() < 1e-12);
        // Half occluded: mean stays over all pixels.
        let half = BinaryMask::from_fn(8, 8, |x, _| x < 4);
        assert!((adaptation_loss(&pred, &pseudo, &half, &ones, &w).unwrap() - 0.45).abs() < 1e-12);
    }

    #[test]
    fn pseudo_labels_and_occluded_pixels_get_no_gradient() {
        let tape = Tape::new();
        let pred = tape.leaf(FlowField::uniform(8, 8, 2.0, 0.0).to_tensor());
        let pseudo = tape.leaf(FlowField::uniform(8, 8, 1.0, 1.0).to_tensor());
        let visible = BinaryMask::from_fn(8, 8, |x, _| x >= 2);
        let loss =
            adaptation_loss_var(pred, pseudo, &visible, &BinaryMask::ones(8, 8), &LossWeights::default()).unwrap();
        let grads = tape.backward(loss);
        assert!(grads.wrt(pseudo).is_none());
        let g = grads.wrt(pred).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let gu = g.data()[y * 8 + x];
                assert_eq!(gu == 0.0, x < 2, "({x},{y})");
            }
        }
    }

    #[test]
    fn total_composition() {
        let w = LossWeights::default();
        assert_eq!(total_loss(1.0, 2.0, 3.0, &w), 6.0);
        assert_eq!(total_loss(1.0, 2.0, 3.0, &LossWeights { beta: 0.0, ..w.clone() }), 4.0);
        assert_eq!(total_loss(0.0, 0.0, 0.0, &w), 0.0);
    }
}
