use crate::tape::Var;
use crate::tensor::Tensor;

impl<'t> Var<'t> {
    pub fn add(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        let out = a.zip_map(&b, |x, y| x + y);
        self.tape().push_op(out, &[self, other], || {
            Box::new(|g, _| vec![Some(g.clone()), Some(g.clone())])
        })
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        let out = a.zip_map(&b, |x, y| x - y);
        self.tape().push_op(out, &[self, other], || {
            Box::new(|g, _| vec![Some(g.clone()), Some(g.map(|x| -x))])
        })
    }

    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        let out = a.zip_map(&b, |x, y| x * y);
        self.tape().push_op(out, &[self, other], move || {
            Box::new(move |g, needs| {
                vec![
                    needs[0].then(|| g.zip_map(&b, |gi, bi| gi * bi)),
                    needs[1].then(|| g.zip_map(&a, |gi, ai| gi * ai)),
                ]
            })
        })
    }

    pub fn div(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        let out = a.zip_map(&b, |x, y| x / y);
        self.tape().push_op(out, &[self, other], move || {
            Box::new(move |g, needs| {
                let ga = needs[0].then(|| g.zip_map(&b, |gi, bi| gi / bi));
                let gb = needs[1].then(|| {
                    let data = g
                        .data()
                        .iter()
                        .zip(a.data())
                        .zip(b.data())
                        .map(|((&gi, &ai), &bi)| -gi * ai / (bi * bi))
                        .collect();
                    Tensor::new(g.shape(), data)
                });
                vec![ga, gb]
            })
        })
    }

    pub fn neg(self) -> Var<'t> {
        self.mul_scalar(-1.0)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        let out = self.value().map(|x| x + c);
        self.tape()
            .push_op(out, &[self], || Box::new(|g, _| vec![Some(g.clone())]))
    }

    pub fn mul_scalar(self, c: f64) -> Var<'t> {
        let out = self.value().map(|x| x * c);
        self.tape()
            .push_op(out, &[self], move || Box::new(move |g, _| vec![Some(g.map(|x| x * c))]))
    }

    /// Elementwise product with a fixed tensor (masks, weights).
    pub fn mul_const(self, c: &Tensor) -> Var<'t> {
        let out = self.value().zip_map(c, |x, y| x * y);
        let c = c.clone();
        self.tape().push_op(out, &[self], move || {
            Box::new(move |g, _| vec![Some(g.zip_map(&c, |gi, ci| gi * ci))])
        })
    }

    pub fn square(self) -> Var<'t> {
        let a = self.value();
        let out = a.map(|x| x * x);
        self.tape().push_op(out, &[self], move || {
            Box::new(move |g, _| vec![Some(g.zip_map(&a, |gi, ai| 2.0 * gi * ai))])
        })
    }

    pub fn sqrt(self) -> Var<'t> {
        let out = self.value().map(f64::sqrt);
        let y = out.clone();
        self.tape().push_op(out, &[self], move || {
            Box::new(move |g, _| vec![Some(g.zip_map(&y, |gi, yi| gi * 0.5 / yi))])
        })
    }

    pub fn exp(self) -> Var<'t> {
        let out = self.value().map(f64::exp);
        let y = out.clone();
        self.tape().push_op(out, &[self], move || {
            Box::new(move |g, _| vec![Some(g.zip_map(&y, |gi, yi| gi * yi))])
        })
    }

    /// Absolute value; the subgradient at 0 is taken as 0.
    pub fn abs(self) -> Var<'t> {
        let a = self.value();
        let out = a.map(f64::abs);
        self.tape().push_op(out, &[self], move || {
            Box::new(move |g, _| {
                vec![Some(g.zip_map(&a, |gi, ai| {
                    if ai > 0.0 {
                        gi
                    } else if ai < 0.0 {
                        -gi
                    } else {
                        0.0
                    }
                }))]
            })
        })
    }

    pub fn sigmoid(self) -> Var<'t> {
        let out = self.value().map(|x| 1.0 / (1.0 + (-x).exp()));
        let y = out.clone();
        self.tape().push_op(out, &[self], move || {
            Box::new(move |g, _| vec![Some(g.zip_map(&y, |gi, yi| gi * yi * (1.0 - yi)))])
        })
    }

    pub fn tanh(self) -> Var<'t> {
        let out = self.value().map(f64::tanh);
        let y = out.clone();
        self.tape().push_op(out, &[self], move || {
            Box::new(move |g, _| vec![Some(g.zip_map(&y, |gi, yi| gi * (1.0 - yi * yi)))])
        })
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        let a = self.value();
        let out = a.map(|x| if x > 0.0 { x } else { slope * x });
        self.tape().push_op(out, &[self], move || {
            Box::new(move |g, _| vec![Some(g.zip_map(&a, |gi, ai| if ai > 0.0 { gi } else { slope * gi }))])
        })
    }

    pub fn relu(self) -> Var<'t> {
        self.leaky_relu(0.0)
    }

    /// `x * sigmoid(x)`; smooth everywhere.
    pub fn silu(self) -> Var<'t> {
        let a = self.value();
        let out = a.map(|x| x / (1.0 + (-x).exp()));
        self.tape().push_op(out, &[self], move || {
            Box::new(move |g, _| {
                vec![Some(g.zip_map(&a, |gi, x| {
                    let s = 1.0 / (1.0 + (-x).exp());
                    gi * s * (1.0 + x * (1.0 - s))
                }))]
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use crate::{Tape, Tensor};

    #[test]
    fn mul_and_div_gradients() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::new(&[2], vec![2.0, -3.0]));
        let b = tape.leaf(Tensor::new(&[2], vec![4.0, 5.0]));
        let y = a.mul(b).add(a.div(b)).sum();
        let g = tape.backward(y);
        // d/da = b + 1/b, d/db = a - a/b^2
        assert_eq!(g.wrt(a).unwrap().data(), &[4.25, 5.2]);
        assert_eq!(g.wrt(b).unwrap().data(), &[2.0 - 2.0 / 16.0, -3.0 + 3.0 / 25.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::new(&[2], vec![1.0, 2.0]));
        let c = tape.constant(Tensor::new(&[2], vec![3.0, 4.0]));
        let y = a.mul(c).sum();
        let g = tape.backward(y);
        assert!(g.wrt(c).is_none());
        assert!(!c.requires_grad());
        assert_eq!(g.wrt(a).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn abs_subgradient_at_zero_is_zero() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::new(&[3], vec![-1.0, 0.0, 2.0]));
        let g = tape.backward(a.abs().sum());
        assert_eq!(g.wrt(a).unwrap().data(), &[-1.0, 0.0, 1.0]);
    }
}
