use crate::tape::Var;
use crate::tensor::Tensor;

/// Window bounds and normalisation for a clamped moving average of length `n`.
fn windows(n: usize, radius: usize) -> Vec<(usize, usize, f64)> {
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(n - 1);
            (lo, hi, 1.0 / (hi - lo + 1) as f64)
        })
        .collect()
}

impl<'t> Var<'t> {
    /// Per-channel mean over a `(2r+1) x (2r+1)` window, truncated at the
    /// image border (the mean is over in-image pixels only).
    pub fn box_filter(self, radius: usize) -> Var<'t> {
        self.box_filter_axis(radius, true).box_filter_axis(radius, false)
    }

    fn box_filter_axis(self, radius: usize, horizontal: bool) -> Var<'t> {
        let x = self.value();
        let (c, h, w) = x.dims3();
        let (n, stride, count) = if horizontal { (w, 1, h) } else { (h, w, w) };
        let win = windows(n, radius);
        // Lines are rows (horizontal) or columns (vertical); `line_start`
        // maps a (channel, line) pair to its first element.
        let line_start = move |ch: usize, line: usize| {
            if horizontal {
                ch * h * w + line * w
            } else {
                ch * h * w + line
            }
        };
        let src = x.data();
        let mut out = vec![0.0; c * h * w];
        for ch in 0..c {
            for line in 0..count {
                let base = line_start(ch, line);
                for (i, &(lo, hi, inv)) in win.iter().enumerate() {
                    let mut acc = 0.0;
                    for j in lo..=hi {
                        acc += src[base + j * stride];
                    }
                    out[base + i * stride] = acc * inv;
                }
            }
        }
        self.tape().push_op(Tensor::new(&[c, h, w], out), &[self], move || {
            Box::new(move |g, _| {
                let gd = g.data();
                let mut acc = vec![0.0; c * h * w];
                for ch in 0..c {
                    for line in 0..count {
                        let base = line_start(ch, line);
                        for (i, &(lo, hi, inv)) in win.iter().enumerate() {
                            let gi = gd[base + i * stride] * inv;
                            for j in lo..=hi {
                                acc[base + j * stride] += gi;
                            }
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
    fn box_filter_matches_window_mean() {
        let (h, w, r) = (5usize, 6usize, 1usize);
        let data: Vec<f64> = (0..h * w).map(|i| (i * i % 17) as f64).collect();
        let tape = Tape::new();
        let out = tape
            .constant(Tensor::new(&[1, h, w], data.clone()))
            .box_filter(r)
            .value();
        for y in 0..h {
            for x in 0..w {
                let (mut sum, mut cnt) = (0.0, 0.0);
                for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                    for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                        sum += data[yy * w + xx];
                        cnt += 1.0;
                    }
                }
                assert!((out.data()[y * w + x] - sum / cnt).abs() < 1e-12);
            }
        }
    }
}
