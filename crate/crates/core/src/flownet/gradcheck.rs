use autograd::{Tape, Var};
use rand::seq::index::sample;
use rand::RngCore;
use serde::Serialize;

use super::params::ParamSet;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Coordinates probed; all of them when the set is smaller.
    pub coordinates: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Floor on the relative-error denominator.
    pub denominator_floor: f64,
    /// Worst coordinates kept in the report.
    pub report_worst: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            coordinates: 50,
            step: 1e-5,
            tolerance: 1e-3,
            denominator_floor: 1e-7,
            report_worst: 5,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoordinateError {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub passed: bool,
    /// Sorted by descending relative error.
    pub worst: Vec<CoordinateError>,
}

/// Compares reverse-mode gradients of `loss_fn` w.r.t. `params` against
/// central differences on a random subset of coordinates.
///
/// `loss_fn` must be a pure function of the bound parameters; anything it
/// derives non-differentiably (masks, thresholds) should be computed outside
/// and captured, so the perturbed evaluations see the same constants.
pub fn gradient_check<F>(
    loss_fn: F,
    params: &ParamSet,
    cfg: &GradCheckConfig,
    rng: &mut dyn RngCore,
) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let eval = |p: &ParamSet| -> Result<f64> {
        let tape = Tape::new();
        let vars = p.bind(&tape, false);
        Ok(loss_fn(&tape, &vars)?.item())
    };
    let analytic = {
        let tape = Tape::new();
        let vars = params.bind(&tape, true);
        let loss = loss_fn(&tape, &vars)?;
        let grads = tape.backward(loss);
        params.flat_grad(&grads, &vars)
    };
    let n = params.len();
    let coords: Vec<usize> = if cfg.coordinates >= n {
        (0..n).collect()
    } else {
        let mut c = sample(rng, n, cfg.coordinates).into_vec();
        c.sort_unstable();
        c
    };
    let mut probe = params.clone();
    let mut errors = Vec::with_capacity(coords.len());
    for &i in &coords {
        let orig = probe.values()[i];
        probe.values_mut()[i] = orig + cfg.step;
        let plus = eval(&probe)?;
        probe.values_mut()[i] = orig - cfg.step;
        let minus = eval(&probe)?;
        probe.values_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * cfg.step);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(cfg.denominator_floor);
        let (name, index) = params.locate(i);
        errors.push(CoordinateError {
            name: name.to_string(),
            index,
            analytic: a,
            numeric,
            rel_error: (a - numeric).abs() / denom,
        });
    }
    errors.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
    let max_rel_error = errors.first().map_or(0.0, |e| e.rel_error);
    errors.truncate(cfg.report_worst);
    Ok(GradCheckReport {
        checked: coords.len(),
        max_rel_error,
        passed: max_rel_error <= cfg.tolerance,
        worst: errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use autograd::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ParamSet {
        let mut p = ParamSet::default();
        p.push("x", Tensor::new(&[4], vec![0.3, -1.2, 2.0, 0.7]));
        p
    }

    #[test]
    fn smooth_function_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = gradient_check(
            |_, v| Ok(v[0].tanh().square().sum()),
            &params(),
            &GradCheckConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.checked, 4);
    }

    #[test]
    fn zero_loss_has_exactly_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = gradient_check(
            |_, v| Ok(v[0].exp().sum().mul_scalar(0.0)),
            &params(),
            &GradCheckConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert!(r.worst.iter().all(|e| e.analytic == 0.0 && e.numeric == 0.0));
    }

    #[test]
    fn wrong_gradient_is_reported() {
        // Cutting the graph with detach makes the analytic gradient zero.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = gradient_check(
            |_, v| Ok(v[0].detach().mul(v[0]).sum()),
            &params(),
            &GradCheckConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert!(!r.passed);
        assert!(r.max_rel_error > 0.4);
        assert_eq!(r.worst[0].name, "x");
    }
}
