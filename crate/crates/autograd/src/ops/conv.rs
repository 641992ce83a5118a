use std::rc::Rc;

use crate::tape::Var;
use crate::tensor::Tensor;

/// `c[m x n] = alpha * a[m x k] * b[k x n] + beta * c`, with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    hout: usize,
    wout: usize,
}

impl Geometry {
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col(x: &[f64], g: &Geometry) -> Vec<f64> {
    let n = g.hout * g.wout;
    let mut cols = vec![0.0; g.cin * g.k * g.k * n];
    for c in 0..g.cin {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((c * g.k + ky) * g.k + kx) * n;
                for oy in 0..g.hout {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = (c * g.h + iy as usize) * g.w;
                    let dst = row + oy * g.wout;
                    for ox in 0..g.wout {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            cols[dst + ox] = x[src + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &Geometry) -> Vec<f64> {
    let n = g.hout * g.wout;
    let mut x = vec![0.0; g.cin * g.h * g.w];
    for c in 0..g.cin {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((c * g.k + ky) * g.k + kx) * n;
                for oy in 0..g.hout {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = (c * g.h + iy as usize) * g.w;
                    let src = row + oy * g.wout;
                    for ox in 0..g.wout {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            x[dst + ix as usize] += cols[src + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

impl<'t> Var<'t> {
    /// 2-D convolution (cross-correlation) of a `[Cin,H,W]` input with
    /// `[Cout,Cin,k,k]` weights and `[Cout]` bias, zero padding.
    pub fn conv2d(self, weight: Var<'t>, bias: Var<'t>, stride: usize, pad: usize) -> Var<'t> {
        let x = self.value();
        let wv = weight.value();
        let (cin, h, w) = x.dims3();
        let ws = wv.shape();
        assert_eq!(ws.len(), 4, "conv weight must be [Cout,Cin,k,k]");
        let (cout, k) = (ws[0], ws[2]);
        assert_eq!(ws[1], cin, "conv input channels");
        assert_eq!(ws[3], k, "square kernels only");
        assert_eq!(bias.value().len(), cout, "conv bias length");
        assert!(stride >= 1 && h + 2 * pad >= k && w + 2 * pad >= k);
        let geo = Geometry {
            cin,
            h,
            w,
            k,
            stride,
            pad,
            hout: (h + 2 * pad - k) / stride + 1,
            wout: (w + 2 * pad - k) / stride + 1,
        };
        let n = geo.hout * geo.wout;
        let kdim = cin * k * k;
        let cols: Rc<Vec<f64>> = if geo.is_pointwise() {
            Rc::new(x.data().to_vec())
        } else {
            Rc::new(im2col(x.data(), &geo))
        };
        let bv = bias.value();
        let mut out = vec![0.0; cout * n];
        for (o, row) in out.chunks_mut(n).enumerate() {
            row.fill(bv.data()[o]);
        }
        gemm(cout, kdim, n, wv.data(), (kdim, 1), &cols, (n, 1), 1.0, &mut out);

        self.tape().push_op(
            Tensor::new(&[cout, geo.hout, geo.wout], out),
            &[self, weight, bias],
            move || {
                Box::new(move |g, needs| {
                    let gd = g.data();
                    let gx = needs[0].then(|| {
                        let mut dcols = vec![0.0; kdim * n];
                        gemm(kdim, cout, n, wv.data(), (1, kdim), gd, (n, 1), 0.0, &mut dcols);
                        let dx = if geo.is_pointwise() {
                            dcols
                        } else {
                            col2im(&dcols, &geo)
                        };
                        Tensor::new(&[cin, h, w], dx)
                    });
                    let gw = needs[1].then(|| {
                        let mut dw = vec![0.0; cout * kdim];
                        gemm(cout, n, kdim, gd, (n, 1), &cols, (1, n), 0.0, &mut dw);
                        Tensor::new(&[cout, cin, k, k], dw)
                    });
                    let gb = needs[2].then(|| Tensor::new(&[cout], gd.chunks(n).map(|r| r.iter().sum()).collect()));
                    vec![gx, gw, gb]
                })
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::{Tape, Tensor};

    fn naive_conv(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> Tensor {
        let (cin, h, wd) = x.dims3();
        let (cout, k) = (w.shape()[0], w.shape()[2]);
        let hout = (h + 2 * pad - k) / stride + 1;
        let wout = (wd + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0; cout * hout * wout];
        for o in 0..cout {
            for oy in 0..hout {
                for ox in 0..wout {
                    let mut acc = b[o];
                    for c in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += w.data()[((o * cin + c) * k + ky) * k + kx]
                                        * x.data()[(c * h + iy as usize) * wd + ix as usize];
                                }
                            }
                        }
                    }
                    out[(o * hout + oy) * wout + ox] = acc;
                }
            }
        }
        Tensor::new(&[cout, hout, wout], out)
    }

    fn ramp(shape: &[usize], scale: f64) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|i| ((i * 7 % 13) as f64 - 6.0) * scale).collect())
    }

    #[test]
    fn matches_naive_convolution() {
        for &(k, stride, pad) in &[(3, 1, 1), (3, 2, 1), (1, 1, 0), (3, 2, 0)] {
            let x = ramp(&[2, 7, 6], 0.1);
            let w = ramp(&[3, 2, k, k], 0.05);
            let b = [0.1, -0.2, 0.3];
            let tape = Tape::new();
            let y = tape.constant(x.clone()).conv2d(
                tape.constant(w.clone()),
                tape.constant(Tensor::new(&[3], b.to_vec())),
                stride,
                pad,
            );
            let expected = naive_conv(&x, &w, &b, stride, pad);
            assert_eq!(y.shape(), expected.shape());
            for (a, e) in y.value().data().iter().zip(expected.data()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = ramp(&[2, 5, 5], 0.1);
        let w = ramp(&[2, 2, 3, 3], 0.07);
        let b = Tensor::new(&[2], vec![0.05, -0.1]);
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| {
            let tape = Tape::new();
            let y = tape
                .constant(x.clone())
                .conv2d(tape.constant(w.clone()), tape.constant(b.clone()), 2, 1);
            y.square().sum().item()
        };
        let tape = Tape::new();
        let (xv, wv, bv) = (tape.leaf(x.clone()), tape.leaf(w.clone()), tape.leaf(b.clone()));
        let l = xv.conv2d(wv, bv, 2, 1).square().sum();
        let grads = tape.backward(l);
        let h = 1e-6;
        for (which, base) in [(0, &x), (1, &w), (2, &b)] {
            let analytic = grads.wrt([xv, wv, bv][which]).unwrap();
            for i in 0..base.len() {
                let mut plus = base.clone();
                plus.data_mut()[i] += h;
                let mut minus = base.clone();
                minus.data_mut()[i] -= h;
                let args = |t: &Tensor| match which {
                    0 => loss(t, &w, &b),
                    1 => loss(&x, t, &b),
                    _ => loss(&x, &w, t),
                };
                let fd = (args(&plus) - args(&minus)) / (2.0 * h);
                assert!((fd - analytic.data()[i]).abs() < 1e-6, "param {which} idx {i}");
            }
        }
    }
}
