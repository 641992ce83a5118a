//! Adaptive curriculum weighting: pixels whose end-point error is at most
//! `mean + N * std` (statistics over the valid region of one image pair) are
//! marked low-difficulty, and `N` grows linearly over training.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_size, Error, Result};
use crate::flowcore::{BinaryMask, EpeMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcwSchedule {
    pub n_start: f64,
    pub n_end: f64,
    /// Optimizer steps over which `N` ramps from `n_start` to `n_end`.
    pub total_steps: u64,
}

impl Default for AcwSchedule {
    fn default() -> Self {
        AcwSchedule {
            n_start: 1.0,
            n_end: 5.0,
            total_steps: 1000,
        }
    }
}

impl AcwSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.n_end < self.n_start || self.n_start < 0.0 {
            return Err(Error::invalid("acw", "need 0 <= n_start <= n_end"));
        }
        if self.total_steps == 0 {
            return Err(Error::invalid("acw.total_steps", "must be at least 1"));
        }
        Ok(())
    }
}

/// Curriculum factor `N` at a given optimizer step.
pub fn current_n(step: u64, sched: &AcwSchedule) -> f64 {
    let t = (step as f64 / sched.total_steps as f64).min(1.0);
    sched.n_start + (sched.n_end - sched.n_start) * t
}

/// Mean and population standard deviation of `epe` over `valid` pixels.
///
/// Values are shifted by their minimum before accumulating, so a constant map
/// yields exactly `(value, 0)` and the mean never drops below the minimum.
pub fn masked_stats(epe: &EpeMap, valid: &BinaryMask) -> Result<(f64, f64)> {
    ensure_same_size("acw statistics", epe.size(), valid.size())?;
    let values: Vec<f64> = epe
        .data()
        .iter()
        .zip(valid.data())
        .filter_map(|(&e, &v)| v.then_some(e))
        .collect();
    if values.is_empty() {
        return Err(Error::EmptyMask("curriculum mask needs at least one valid pixel"));
    }
    let n = values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = min + values.iter().map(|e| e - min).sum::<f64>() / n;
    let var = values.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Low-difficulty mask: `1` where `valid` and `epe <= mean + n * std`.
pub fn acw_mask(epe: &EpeMap, n: f64, valid: &BinaryMask) -> Result<BinaryMask> {
    if n.is_nan() || n < 0.0 {
        return Err(Error::invalid("acw.N", "must be non-negative"));
    }
    let (mean, std) = masked_stats(epe, valid)?;
    let threshold = mean + n * std;
    let data = epe
        .data()
        .iter()
        .zip(valid.data())
        .map(|(&e, &v)| v && e <= threshold)
        .collect();
    BinaryMask::new(epe.height(), epe.width(), data)
}
