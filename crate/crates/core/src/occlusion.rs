//! Forward-backward consistency occlusion check.

use autograd::Tape;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_size, Error, Result};
use crate::flowcore::{BinaryMask, FlowField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcclusionConfig {
    /// Relative tolerance on the squared magnitudes.
    pub alpha1: f64,
    /// Absolute tolerance, px².
    pub alpha2: f64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        OcclusionConfig {
            alpha1: 0.01,
            alpha2: 0.5,
        }
    }
}

impl OcclusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            return Err(Error::invalid("occlusion.alpha1/alpha2", "must be non-negative"));
        }
        Ok(())
    }
}

/// Visibility mask (1 = visible) from a forward and a backward flow.
///
/// The backward flow is sampled bilinearly at `p + fwd(p)`; `p` is visible iff
/// `|fwd + bwd_sampled|² < alpha1 * (|fwd|² + |bwd_sampled|²) + alpha2` and the
/// forward target stays inside the frame. The result is a hard mask and never
/// carries gradients.
pub fn fb_occlusion(fwd: &FlowField, bwd: &FlowField, cfg: &OcclusionConfig) -> Result<BinaryMask> {
    ensure_same_size("fb_occlusion", fwd.size(), bwd.size())?;
    let tape = Tape::new();
    let (sampled, inb) = tape.constant(bwd.to_tensor()).warp(tape.constant(fwd.to_tensor()));
    let sampled = sampled.value();
    let (h, w) = fwd.size();
    let n = h * w;
    let (f, b) = (fwd.data(), sampled.data());
    let data = (0..n)
        .map(|i| {
            let (fu, fv, bu, bv) = (f[i], f[n + i], b[i], b[n + i]);
            let diff = (fu + bu).powi(2) + (fv + bv).powi(2);
            let mag = fu * fu + fv * fv + bu * bu + bv * bv;
            inb[i] && diff < cfg.alpha1 * mag + cfg.alpha2
        })
        .collect();
    BinaryMask::new(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_scene_is_visible() {
        let z = FlowField::zeros(8, 8);
        assert_eq!(fb_occlusion(&z, &z, &OcclusionConfig::default()).unwrap().count(), 64);
    }

    #[test]
    fn consistent_translation_occludes_trailing_columns() {
        let (h, w) = (8, 10);
        let fwd = FlowField::uniform(h, w, 2.0, 0.0);
        let bwd = FlowField::uniform(h, w, -2.0, 0.0);
        let mask = fb_occlusion(&fwd, &bwd, &OcclusionConfig::default()).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert_eq!(mask.get(y, x), x < w - 2, "({x},{y})");
            }
        }
    }

    #[test]
    fn inconsistent_flows_are_occluded() {
        let fwd = FlowField::uniform(8, 16, 5.0, 0.0);
        let mask = fb_occlusion(&fwd, &fwd, &OcclusionConfig::default()).unwrap();
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        assert!(fb_occlusion(
            &FlowField::zeros(8, 8),
            &FlowField::zeros(8, 9),
            &OcclusionConfig::default()
        )
        .is_err());
    }
}
