use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowcore::{fl_all, mean_epe, FlowField, Image};
use crate::flownet::{predict, FlowModel, ParamSet};
use crate::synthdata::LabeledPair;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub id: String,
    pub epe: f64,
    /// Percent of outlier pixels.
    pub fl_all: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Mean over pairs of the per-pair mean EPE.
    pub epe: f64,
    pub fl_all: f64,
    pub per_pair: Vec<PairMetrics>,
}

impl EvalMetrics {
    pub fn summary(&self) -> String {
        format!("EPE {:.3}, Fl-all {:.2}", self.epe, self.fl_all)
    }
}

/// Scores any predictor on labelled pairs.
pub fn evaluate_with<F>(pairs: &[LabeledPair], mut predictor: F) -> Result<EvalMetrics>
where
    F: FnMut(&LabeledPair) -> Result<FlowField>,
{
    if pairs.is_empty() {
        return Err(Error::invalid("eval set", "is empty"));
    }
    let per_pair = pairs
        .iter()
        .map(|p| {
            let pred = predictor(p)?;
            Ok(PairMetrics {
                id: p.id.clone(),
                epe: mean_epe(&pred, &p.gt_flow, &p.gt_valid)?,
                fl_all: fl_all(&pred, &p.gt_flow, &p.gt_valid)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_pair.len() as f64;
    Ok(EvalMetrics {
        epe: per_pair.iter().map(|m| m.epe).sum::<f64>() / n,
        fl_all: per_pair.iter().map(|m| m.fl_all).sum::<f64>() / n,
        per_pair,
    })
}

pub fn evaluate(model: &dyn FlowModel, params: &ParamSet, pairs: &[LabeledPair]) -> Result<EvalMetrics> {
    evaluate_with(pairs, |p: &LabeledPair| predict(model, params, &p.i1, &p.i2))
}

/// Shorthand for a predictor that only looks at the frames.
pub fn frames_only(f: impl Fn(&Image, &Image) -> Result<FlowField>) -> impl FnMut(&LabeledPair) -> Result<FlowField> {
    move |p| f(&p.i1, &p.i2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowcore::BinaryMask;

    fn pair(id: &str, u: f64, v: f64) -> LabeledPair {
        let img = Image::filled(3, 8, 8, 0.5).unwrap();
        LabeledPair {
            id: id.into(),
            seed: 0,
            i1: img.clone(),
            i2: img,
            gt_flow: FlowField::uniform(8, 8, u, v),
            gt_occlusion: BinaryMask::ones(8, 8),
            gt_valid: BinaryMask::ones(8, 8),
        }
    }

    #[test]
    fn oracle_and_zero_predictors() {
        let pairs = vec![pair("a", 3.0, 4.0), pair("b", 0.0, 1.0)];
        let perfect = evaluate_with(&pairs, |p| Ok(p.gt_flow.clone())).unwrap();
        assert_eq!((perfect.epe, perfect.fl_all), (0.0, 0.0));
        assert_eq!(perfect.summary(), "EPE 0.000, Fl-all 0.00");
        let zero = evaluate_with(&pairs, frames_only(|a, _| Ok(FlowField::zeros(a.height(), a.width())))).unwrap();
        assert!((zero.epe - 3.0).abs() < 1e-12);
        assert_eq!(zero.per_pair[0].fl_all, 100.0);
        assert_eq!(zero.per_pair[1].fl_all, 0.0);
        assert!(evaluate_with(&[], |p| Ok(p.gt_flow.clone())).is_err());
    }
}
