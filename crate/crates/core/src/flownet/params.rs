use autograd::{Gradients, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named tensors stored back to back in one flat `f64` buffer, so optimizer
/// and EMA updates are plain slice loops.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    specs: Vec<ParamSpec>,
    values: Vec<f64>,
}

impl ParamSet {
    pub fn push(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        assert!(self.index_of(&name).is_none(), "duplicate parameter {name}");
        self.specs.push(ParamSpec {
            name,
            shape: value.shape().to_vec(),
            offset: self.values.len(),
        });
        self.values.extend_from_slice(value.data());
    }

    /// Rebuilds a set from a layout and a flat buffer, e.g. when loading.
    pub fn from_parts(specs: Vec<ParamSpec>, values: Vec<f64>) -> Result<Self> {
        let mut offset = 0;
        for s in &specs {
            if s.offset != offset {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has offset {}, expected {offset}",
                    s.name, s.offset
                )));
            }
            offset += s.len();
        }
        if offset != values.len() {
            return Err(Error::Checkpoint(format!(
                "layout needs {offset} values, got {}",
                values.len()
            )));
        }
        Ok(ParamSet { specs, values })
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Total number of scalars.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.specs == other.specs
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn tensor(&self, i: usize) -> Tensor {
        let s = &self.specs[i];
        Tensor::new(&s.shape, self.values[s.offset..s.offset + s.len()].to_vec())
    }

    pub fn get(&self, name: &str) -> Option<Tensor> {
        self.index_of(name).map(|i| self.tensor(i))
    }

    /// Name and in-tensor index of a flat coordinate.
    pub fn locate(&self, flat: usize) -> (&str, usize) {
        let s = self
            .specs
            .iter()
            .rev()
            .find(|s| s.offset <= flat)
            .expect("coordinate out of range");
        (&s.name, flat - s.offset)
    }

    /// Records every parameter on `tape`, as leaves or as constants.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> Vec<Var<'t>> {
        (0..self.specs.len())
            .map(|i| {
                let t = self.tensor(i);
                if trainable {
                    tape.leaf(t)
                } else {
                    tape.constant(t)
                }
            })
            .collect()
    }

    /// Flat gradient in this set's layout; unreached parameters get zeros.
    pub fn flat_grad(&self, grads: &Gradients, vars: &[Var<'_>]) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len()];
        for (s, v) in self.specs.iter().zip(vars) {
            if let Some(g) = grads.wrt(*v) {
                out[s.offset..s.offset + s.len()].copy_from_slice(g.data());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_lookup() {
        let mut p = ParamSet::default();
        p.push("a", Tensor::new(&[2], vec![1.0, 2.0]));
        p.push("b", Tensor::new(&[1, 3], vec![3.0, 4.0, 5.0]));
        assert_eq!(p.len(), 5);
        assert_eq!(p.locate(0), ("a", 0));
        assert_eq!(p.locate(4), ("b", 2));
        assert_eq!(p.get("b").unwrap().data(), &[3.0, 4.0, 5.0]);
        let q = ParamSet::from_parts(p.specs().to_vec(), p.values().to_vec()).unwrap();
        assert_eq!(p, q);
        assert!(ParamSet::from_parts(p.specs().to_vec(), vec![0.0; 4]).is_err());
    }

    #[test]
    fn gradients_come_back_flat() {
        let mut p = ParamSet::default();
        p.push("a", Tensor::new(&[2], vec![1.0, 2.0]));
        p.push("unused", Tensor::new(&[1], vec![7.0]));
        let tape = Tape::new();
        let vars = p.bind(&tape, true);
        let loss = vars[0].square().sum();
        let g = tape.backward(loss);
        assert_eq!(p.flat_grad(&g, &vars), vec![2.0, 4.0, 0.0]);
    }
}
