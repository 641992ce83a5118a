use crate::tape::Var;
use crate::tensor::Tensor;

impl<'t> Var<'t> {
    /// Sum of all elements, as a single-element tensor.
    pub fn sum(self) -> Var<'t> {
        let a = self.value();
        let shape = a.shape().to_vec();
        let out = Tensor::scalar(a.sum());
        self.tape().push_op(out, &[self], move || {
            Box::new(move |g, _| vec![Some(Tensor::full(&shape, g.item()))])
        })
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().len() as f64;
        self.sum().mul_scalar(1.0 / n)
    }

    /// `[C,H,W] -> [1,H,W]` by summing channels.
    pub fn sum_channels(self) -> Var<'t> {
        let a = self.value();
        let (c, h, w) = a.dims3();
        let hw = h * w;
        let mut out = vec![0.0; hw];
        for ch in 0..c {
            for (o, x) in out.iter_mut().zip(&a.data()[ch * hw..(ch + 1) * hw]) {
                *o += x;
            }
        }
        self.tape().push_op(Tensor::new(&[1, h, w], out), &[self], move || {
            Box::new(move |g, _| {
                let mut data = Vec::with_capacity(c * hw);
                for _ in 0..c {
                    data.extend_from_slice(g.data());
                }
                vec![Some(Tensor::new(&[c, h, w], data))]
            })
        })
    }

    /// `[1,H,W] -> [C,H,W]` by copying the single channel.
    pub fn repeat_channels(self, c: usize) -> Var<'t> {
        let a = self.value();
        let (one, h, w) = a.dims3();
        assert_eq!(one, 1, "repeat_channels expects one channel");
        let data = a.data().repeat(c);
        self.tape().push_op(Tensor::new(&[c, h, w], data), &[self], move || {
            Box::new(move |g, _| {
                let hw = h * w;
                let mut out = vec![0.0; hw];
                for ch in 0..c {
                    for (o, x) in out.iter_mut().zip(&g.data()[ch * hw..(ch + 1) * hw]) {
                        *o += x;
                    }
                }
                vec![Some(Tensor::new(&[1, h, w], out))]
            })
        })
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t> {
        let a = self.value();
        let old = a.shape().to_vec();
        let out = (*a).clone().reshape(shape);
        self.tape().push_op(out, &[self], move || {
            Box::new(move |g, _| vec![Some(g.clone().reshape(&old))])
        })
    }

    /// Channel range `[start, end)` of a `[C,H,W]` tensor.
    pub fn slice_channels(self, start: usize, end: usize) -> Var<'t> {
        let a = self.value();
        let (c, h, w) = a.dims3();
        assert!(start < end && end <= c, "channel slice {start}..{end} of {c}");
        let hw = h * w;
        let out = Tensor::new(&[end - start, h, w], a.data()[start * hw..end * hw].to_vec());
        self.tape().push_op(out, &[self], move || {
            Box::new(move |g, _| {
                let mut full = vec![0.0; c * hw];
                full[start * hw..end * hw].copy_from_slice(g.data());
                vec![Some(Tensor::new(&[c, h, w], full))]
            })
        })
    }

    /// Spatial window `rows [top, top+height) x cols [left, left+width)`.
    pub fn crop(self, top: usize, left: usize, height: usize, width: usize) -> Var<'t> {
        let a = self.value();
        let (c, h, w) = a.dims3();
        assert!(top + height <= h && left + width <= w, "crop window out of bounds");
        let mut out = Vec::with_capacity(c * height * width);
        for ch in 0..c {
            for y in top..top + height {
                let row = (ch * h + y) * w;
                out.extend_from_slice(&a.data()[row + left..row + left + width]);
            }
        }
        self.tape()
            .push_op(Tensor::new(&[c, height, width], out), &[self], move || {
                Box::new(move |g, _| {
                    let mut full = vec![0.0; c * h * w];
                    let gd = g.data();
                    for ch in 0..c {
                        for y in 0..height {
                            let dst = (ch * h + y + top) * w + left;
                            let src = (ch * height + y) * width;
                            full[dst..dst + width].copy_from_slice(&gd[src..src + width]);
                        }
                    }
                    vec![Some(Tensor::new(&[c, h, w], full))]
                })
            })
    }

    /// Replicate-pads the bottom and right edges up to `height x width`.
    pub fn pad_edge(self, height: usize, width: usize) -> Var<'t> {
        let a = self.value();
        let (c, h, w) = a.dims3();
        assert!(height >= h && width >= w);
        let mut out = Vec::with_capacity(c * height * width);
        for ch in 0..c {
            for y in 0..height {
                let row = (ch * h + y.min(h - 1)) * w;
                for x in 0..width {
                    out.push(a.data()[row + x.min(w - 1)]);
                }
            }
        }
        self.tape()
            .push_op(Tensor::new(&[c, height, width], out), &[self], move || {
                Box::new(move |g, _| {
                    let mut full = vec![0.0; c * h * w];
                    let gd = g.data();
                    for ch in 0..c {
                        for y in 0..height {
                            let row = (ch * h + y.min(h - 1)) * w;
                            for x in 0..width {
                                full[row + x.min(w - 1)] += gd[(ch * height + y) * width + x];
                            }
                        }
                    }
                    vec![Some(Tensor::new(&[c, h, w], full))]
                })
            })
    }
}

/// Stacks `[C_i,H,W]` tensors along the channel axis.
pub fn concat_channels<'t>(parts: &[Var<'t>]) -> Var<'t> {
    assert!(!parts.is_empty());
    let tape = parts[0].tape();
    let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
    let (_, h, w) = values[0].dims3();
    let channels: Vec<usize> = values
        .iter()
        .map(|v| {
            let (c, vh, vw) = v.dims3();
            assert_eq!((vh, vw), (h, w), "concat spatial mismatch");
            c
        })
        .collect();
    let total: usize = channels.iter().sum();
    let mut data = Vec::with_capacity(total * h * w);
    for v in &values {
        data.extend_from_slice(v.data());
    }
    tape.push_op(Tensor::new(&[total, h, w], data), parts, move || {
        Box::new(move |g, needs| {
            let mut offset = 0;
            channels
                .iter()
                .zip(needs)
                .map(|(&c, &need)| {
                    let n = c * h * w;
                    let part = need.then(|| Tensor::new(&[c, h, w], g.data()[offset..offset + n].to_vec()));
                    offset += n;
                    part
                })
                .collect()
        })
    })
}

#[cfg(test)]
mod tests {
    use super::concat_channels;
    use crate::{Tape, Tensor};

    #[test]
    fn crop_of_pad_roundtrip_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let y = x.pad_edge(3, 3).sum();
        assert_eq!(y.item(), 1.0 + 2.0 * 2.0 + 3.0 * 2.0 + 4.0 * 4.0);
        let g = tape.backward(y);
        assert_eq!(g.wrt(x).unwrap().data(), &[1.0, 2.0, 2.0, 4.0]);
    }

    #[test]
    fn concat_then_slice_selects_part() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::full(&[1, 2, 2], 1.0));
        let b = tape.leaf(Tensor::full(&[2, 2, 2], 2.0));
        let cat = concat_channels(&[a, b]);
        assert_eq!(cat.shape(), vec![3, 2, 2]);
        let s = cat.slice_channels(1, 2).crop(1, 0, 1, 2).sum();
        assert_eq!(s.item(), 4.0);
        let g = tape.backward(s);
        assert_eq!(g.wrt(a).unwrap().sum(), 0.0);
        assert_eq!(g.wrt(b).unwrap().data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
