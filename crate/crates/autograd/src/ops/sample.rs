use crate::tape::Var;
use crate::tensor::Tensor;

#[derive(Clone, Copy)]
struct Tap {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    wx: f64,
    wy: f64,
    clamped_x: bool,
    clamped_y: bool,
}

fn axis_tap(pos: f64, len: usize) -> (usize, usize, f64, bool) {
    let max = (len - 1) as f64;
    let clamped = !(0.0..=max).contains(&pos);
    let p = pos.clamp(0.0, max);
    if len == 1 {
        return (0, 0, 0.0, clamped);
    }
    let i0 = (p.floor() as usize).min(len - 2);
    (i0, i0 + 1, p - i0 as f64, clamped)
}

impl<'t> Var<'t> {
    /// Backward warp: samples `self` (`[C,H,W]`) at `(x + u, y + v)` with
    /// bilinear interpolation, `flow` being `[2,H,W]` (u then v).
    ///
    /// Sample coordinates are clamped to the image, and clamped axes carry
    /// no gradient to the flow. The returned mask is `true` where the sample
    /// point lies inside `[0, W-1] x [0, H-1]`.
    pub fn warp(self, flow: Var<'t>) -> (Var<'t>, Vec<bool>) {
        let img = self.value();
        let fl = flow.value();
        let (c, h, w) = img.dims3();
        assert_eq!(fl.shape(), &[2, h, w], "flow shape must be [2,H,W] matching the image");
        let hw = h * w;
        let (fu, fv) = fl.data().split_at(hw);
        let mut taps = Vec::with_capacity(hw);
        let mut in_bounds = Vec::with_capacity(hw);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (x0, x1, wx, clamped_x) = axis_tap(x as f64 + fu[i], w);
                let (y0, y1, wy, clamped_y) = axis_tap(y as f64 + fv[i], h);
                in_bounds.push(!clamped_x && !clamped_y);
                taps.push(Tap {
                    x0,
                    y0,
                    x1,
                    y1,
                    wx,
                    wy,
                    clamped_x,
                    clamped_y,
                });
            }
        }
        let src = img.data();
        let mut out = vec![0.0; c * hw];
        for ch in 0..c {
            let plane = &src[ch * hw..(ch + 1) * hw];
            for (i, t) in taps.iter().enumerate() {
                out[ch * hw + i] = plane[t.y0 * w + t.x0] * (1.0 - t.wx) * (1.0 - t.wy)
                    + plane[t.y0 * w + t.x1] * t.wx * (1.0 - t.wy)
                    + plane[t.y1 * w + t.x0] * (1.0 - t.wx) * t.wy
                    + plane[t.y1 * w + t.x1] * t.wx * t.wy;
            }
        }
        let var = self
            .tape()
            .push_op(Tensor::new(&[c, h, w], out), &[self, flow], move || {
                Box::new(move |g, needs| {
                    let gd = g.data();
                    let src = img.data();
                    let gimg = needs[0].then(|| {
                        let mut acc = vec![0.0; c * hw];
                        for ch in 0..c {
                            let plane = &mut acc[ch * hw..(ch + 1) * hw];
                            for (i, t) in taps.iter().enumerate() {
                                let gi = gd[ch * hw + i];
                                plane[t.y0 * w + t.x0] += gi * (1.0 - t.wx) * (1.0 - t.wy);
                                plane[t.y0 * w + t.x1] += gi * t.wx * (1.0 - t.wy);
                                plane[t.y1 * w + t.x0] += gi * (1.0 - t.wx) * t.wy;
                                plane[t.y1 * w + t.x1] += gi * t.wx * t.wy;
                            }
                        }
                        Tensor::new(&[c, h, w], acc)
                    });
                    let gflow = needs[1].then(|| {
                        let mut acc = vec![0.0; 2 * hw];
                        for ch in 0..c {
                            let plane = &src[ch * hw..(ch + 1) * hw];
                            for (i, t) in taps.iter().enumerate() {
                                let gi = gd[ch * hw + i];
                                let (v00, v01) = (plane[t.y0 * w + t.x0], plane[t.y0 * w + t.x1]);
                                let (v10, v11) = (plane[t.y1 * w + t.x0], plane[t.y1 * w + t.x1]);
                                if !t.clamped_x {
                                    acc[i] += gi * ((1.0 - t.wy) * (v01 - v00) + t.wy * (v11 - v10));
                                }
                                if !t.clamped_y {
                                    acc[hw + i] += gi * ((1.0 - t.wx) * (v10 - v00) + t.wx * (v11 - v01));
                                }
                            }
                        }
                        Tensor::new(&[2, h, w], acc)
                    });
                    vec![gimg, gflow]
                })
            });
        (var, in_bounds)
    }

    /// Bilinear resize of a `[C,h,w]` tensor to `[C,height,width]`
    /// (half-pixel centers, edge clamped).
    pub fn upsample_bilinear(self, height: usize, width: usize) -> Var<'t> {
        let x = self.value();
        let (c, h, w) = x.dims3();
        let taps_for = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
            (0..out)
                .map(|d| {
                    let pos = (d as f64 + 0.5) * inp as f64 / out as f64 - 0.5;
                    let (i0, i1, wgt, _) = axis_tap(pos, inp);
                    (i0, i1, wgt)
                })
                .collect()
        };
        let ty = taps_for(height, h);
        let tx = taps_for(width, w);
        let mut out = vec![0.0; c * height * width];
        let src = x.data();
        for ch in 0..c {
            let plane = &src[ch * h * w..(ch + 1) * h * w];
            for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                    out[(ch * height + oy) * width + ox] = plane[y0 * w + x0] * (1.0 - wx) * (1.0 - wy)
                        + plane[y0 * w + x1] * wx * (1.0 - wy)
                        + plane[y1 * w + x0] * (1.0 - wx) * wy
                        + plane[y1 * w + x1] * wx * wy;
                }
            }
        }
        self.tape()
            .push_op(Tensor::new(&[c, height, width], out), &[self], move || {
                Box::new(move |g, _| {
                    let gd = g.data();
                    let mut acc = vec![0.0; c * h * w];
                    for ch in 0..c {
                        let plane = &mut acc[ch * h * w..(ch + 1) * h * w];
                        for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                            for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                                let gi = gd[(ch * height + oy) * width + ox];
                                plane[y0 * w + x0] += gi * (1.0 - wx) * (1.0 - wy);
                                plane[y0 * w + x1] += gi * wx * (1.0 - wy);
                                plane[y1 * w + x0] += gi * (1.0 - wx) * wy;
                                plane[y1 * w + x1] += gi * wx * wy;
                            }
                        }
                    }
                    vec![Some(Tensor::new(&[c, h, w], acc))]
                })
            })
    }
}

#[cfg(test)]
mod tests {
    use crate::{Tape, Tensor};

    #[test]
    fn zero_flow_is_identity() {
        let img = Tensor::new(&[1, 3, 3], (0..9).map(|i| i as f64 * 0.37).collect());
        let tape = Tape::new();
        let (out, inb) = tape
            .constant(img.clone())
            .warp(tape.constant(Tensor::zeros(&[2, 3, 3])));
        assert_eq!(*out.value(), img);
        assert!(inb.iter().all(|&b| b));
    }

    #[test]
    fn upsample_constant_stays_constant() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[2, 2, 3], 1.5));
        let y = x.upsample_bilinear(16, 24);
        assert!(y.value().data().iter().all(|&v| (v - 1.5).abs() < 1e-15));
        let g = tape.backward(y.sum());
        // Interpolation weights sum to one per output pixel.
        assert!((g.wrt(x).unwrap().sum() - (2 * 16 * 24) as f64).abs() < 1e-9);
    }
}
