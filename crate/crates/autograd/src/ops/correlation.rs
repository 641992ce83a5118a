use crate::tape::Var;
use crate::tensor::Tensor;

impl<'t> Var<'t> {
    /// Local correlation volume between two `[C,H,W]` feature maps.
    ///
    /// Output channel `(dy + r) * (2r + 1) + (dx + r)` holds
    /// `mean_c f1[c, y, x] * f2[c, y + dy, x + dx]`, zero where the displaced
    /// position leaves the map.
    pub fn correlation(self, other: Var<'t>, radius: usize) -> Var<'t> {
        let f1 = self.value();
        let f2 = other.value();
        let (c, h, w) = f1.dims3();
        assert_eq!(f2.dims3(), (c, h, w), "correlation inputs must match");
        let side = 2 * radius + 1;
        let hw = h * w;
        let norm = 1.0 / c as f64;
        let r = radius as isize;
        let mut out = vec![0.0; side * side * hw];
        // Iterate displacement-major so the inner loop is a contiguous row.
        for dy in -r..=r {
            for dx in -r..=r {
                let d = ((dy + r) as usize) * side + (dx + r) as usize;
                let (x_lo, x_hi) = (
                    (-dx).clamp(0, w as isize) as usize,
                    (w as isize - dx.max(0)).max(0) as usize,
                );
                for y in 0..h {
                    let ys = y as isize + dy;
                    if ys < 0 || ys >= h as isize || x_lo >= x_hi {
                        continue;
                    }
                    let dst = &mut out[d * hw + y * w..d * hw + (y + 1) * w];
                    for ch in 0..c {
                        let a = &f1.data()[ch * hw + y * w..ch * hw + (y + 1) * w];
                        let b = &f2.data()[ch * hw + ys as usize * w..ch * hw + (ys as usize + 1) * w];
                        for x in x_lo..x_hi {
                            dst[x] += a[x] * b[(x as isize + dx) as usize];
                        }
                    }
                }
            }
        }
        out.iter_mut().for_each(|v| *v *= norm);
        self.tape()
            .push_op(Tensor::new(&[side * side, h, w], out), &[self, other], move || {
                Box::new(move |g, needs| {
                    let gd = g.data();
                    let mut g1 = needs[0].then(|| vec![0.0; c * hw]);
                    let mut g2 = needs[1].then(|| vec![0.0; c * hw]);
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let d = ((dy + r) as usize) * side + (dx + r) as usize;
                            let (x_lo, x_hi) = (
                                (-dx).clamp(0, w as isize) as usize,
                                (w as isize - dx.max(0)).max(0) as usize,
                            );
                            for y in 0..h {
                                let ys = y as isize + dy;
                                if ys < 0 || ys >= h as isize || x_lo >= x_hi {
                                    continue;
                                }
                                let ys = ys as usize;
                                let grow = &gd[d * hw + y * w..d * hw + (y + 1) * w];
                                for ch in 0..c {
                                    let (r1, r2) = (ch * hw + y * w, ch * hw + ys * w);
                                    if let Some(g1) = g1.as_mut() {
                                        let b = &f2.data()[r2..r2 + w];
                                        for x in x_lo..x_hi {
                                            g1[r1 + x] += grow[x] * b[(x as isize + dx) as usize] * norm;
                                        }
                                    }
                                    if let Some(g2) = g2.as_mut() {
                                        let a = &f1.data()[r1..r1 + w];
                                        for x in x_lo..x_hi {
                                            g2[r2 + (x as isize + dx) as usize] += grow[x] * a[x] * norm;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    vec![
                        g1.map(|d| Tensor::new(&[c, h, w], d)),
                        g2.map(|d| Tensor::new(&[c, h, w], d)),
                    ]
                })
            })
    }
}

#[cfg(test)]
mod tests {
    use crate::{Tape, Tensor};

    #[test]
    fn matches_direct_definition() {
        check_against_loops(3, 4, 5, 2);
    }

    #[test]
    fn radius_wider_than_map() {
        check_against_loops(2, 1, 1, 3);
        check_against_loops(2, 2, 3, 3);
    }

    fn check_against_loops(c: usize, h: usize, w: usize, r: isize) {
        let f1 = Tensor::new(
            &[c, h, w],
            (0..c * h * w).map(|i| ((i * 5 % 11) as f64) * 0.1).collect(),
        );
        let f2 = Tensor::new(&[c, h, w], (0..c * h * w).map(|i| ((i * 3 % 7) as f64) * 0.2).collect());
        let tape = Tape::new();
        let out = tape
            .constant(f1.clone())
            .correlation(tape.constant(f2.clone()), r as usize)
            .value();
        let side = (2 * r + 1) as usize;
        for dy in -r..=r {
            for dx in -r..=r {
                for y in 0..h as isize {
                    for x in 0..w as isize {
                        let mut expect = 0.0;
                        if (0..h as isize).contains(&(y + dy)) && (0..w as isize).contains(&(x + dx)) {
                            for ch in 0..c {
                                expect += f1.data()[ch * h * w + (y as usize) * w + x as usize]
                                    * f2.data()[ch * h * w + ((y + dy) as usize) * w + (x + dx) as usize];
                            }
                            expect /= c as f64;
                        }
                        let d = ((dy + r) as usize) * side + (dx + r) as usize;
                        let got = out.data()[d * h * w + y as usize * w + x as usize];
                        assert!((got - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
