//! Pooling, bilinear resampling, and reflect padding (all on NCHW).

use super::Tensor;
use ndarray::{ArrayD, Ix4, IxDyn};

/// Mirror index into [0, n) without repeating the border sample.
fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Bilinear sampling taps for one axis (half-pixel centers).
fn bilinear_taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let src = src.clamp(0.0, in_len as f64 - 1.0);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            let frac = src - i0 as f64;
            (i0, i1, frac)
        })
        .collect()
}

impl Tensor {
    /// Average pooling to a target (out_h, out_w) grid.
    pub fn adaptive_avg_pool2d(&self, out_h: usize, out_w: usize) -> Tensor {
        let xs = self.shape();
        assert_eq!(xs.len(), 4);
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let xv = self.to_array().into_dimensionality::<Ix4>().unwrap();

        let bounds = |i: usize, out: usize, inp: usize| -> (usize, usize) {
            let s = i * inp / out;
            let e = ((i + 1) * inp + out - 1) / out;
            (s, e)
        };

        let mut out = ndarray::Array4::<f64>::zeros((n, c, out_h, out_w));
        for ni in 0..n {
            for ci in 0..c {
                for oi in 0..out_h {
                    let (r0, r1) = bounds(oi, out_h, h);
                    for oj in 0..out_w {
                        let (c0, c1) = bounds(oj, out_w, w);
                        let mut acc = 0.0;
                        for ii in r0..r1 {
                            for jj in c0..c1 {
                                acc += xv[[ni, ci, ii, jj]];
                            }
                        }
                        out[[ni, ci, oi, oj]] = acc / ((r1 - r0) * (c1 - c0)) as f64;
                    }
                }
            }
        }
        Tensor::from_op(
            out.into_dyn(),
            vec![self.clone()],
            Box::new(move |g| {
                let gv = g.to_owned().into_dimensionality::<Ix4>().unwrap();
                let mut gx = ndarray::Array4::<f64>::zeros((n, c, h, w));
                for ni in 0..n {
                    for ci in 0..c {
                        for oi in 0..out_h {
                            let (r0, r1) = bounds(oi, out_h, h);
                            for oj in 0..out_w {
                                let (c0, c1) = bounds(oj, out_w, w);
                                let share =
                                    gv[[ni, ci, oi, oj]] / ((r1 - r0) * (c1 - c0)) as f64;
                                for ii in r0..r1 {
                                    for jj in c0..c1 {
                                        gx[[ni, ci, ii, jj]] += share;
                                    }
                                }
                            }
                        }
                    }
                }
                vec![Some(gx.into_dyn())]
            }),
        )
    }

    /// Bilinear resize to (out_h, out_w); the backward pass is the adjoint
    /// scatter of the same taps.
    pub fn bilinear_resize(&self, out_h: usize, out_w: usize) -> Tensor {
        let xs = self.shape();
        assert_eq!(xs.len(), 4);
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let xv = self.to_array().into_dimensionality::<Ix4>().unwrap();
        let rows = bilinear_taps(out_h, h);
        let cols = bilinear_taps(out_w, w);

        let mut out = ndarray::Array4::<f64>::zeros((n, c, out_h, out_w));
        for ni in 0..n {
            for ci in 0..c {
                for (oi, &(r0, r1, fr)) in rows.iter().enumerate() {
                    for (oj, &(c0, c1, fc)) in cols.iter().enumerate() {
                        let v00 = xv[[ni, ci, r0, c0]];
                        let v01 = xv[[ni, ci, r0, c1]];
                        let v10 = xv[[ni, ci, r1, c0]];
                        let v11 = xv[[ni, ci, r1, c1]];
                        out[[ni, ci, oi, oj]] = v00 * (1.0 - fr) * (1.0 - fc)
                            + v01 * (1.0 - fr) * fc
                            + v10 * fr * (1.0 - fc)
                            + v11 * fr * fc;
                    }
                }
            }
        }
        Tensor::from_op(
            out.into_dyn(),
            vec![self.clone()],
            Box::new(move |g| {
                let gv = g.to_owned().into_dimensionality::<Ix4>().unwrap();
                let mut gx = ndarray::Array4::<f64>::zeros((n, c, h, w));
                for ni in 0..n {
                    for ci in 0..c {
                        for (oi, &(r0, r1, fr)) in rows.iter().enumerate() {
                            for (oj, &(c0, c1, fc)) in cols.iter().enumerate() {
                                let go = gv[[ni, ci, oi, oj]];
                                gx[[ni, ci, r0, c0]] += go * (1.0 - fr) * (1.0 - fc);
                                gx[[ni, ci, r0, c1]] += go * (1.0 - fr) * fc;
                                gx[[ni, ci, r1, c0]] += go * fr * (1.0 - fc);
                                gx[[ni, ci, r1, c1]] += go * fr * fc;
                            }
                        }
                    }
                }
                vec![Some(gx.into_dyn())]
            }),
        )
    }

    /// Reflect-pad the two spatial axes by (bottom, right) amounts.
    pub fn pad_reflect2d(&self, pad_h: usize, pad_w: usize) -> Tensor {
        let xs = self.shape();
        assert_eq!(xs.len(), 4);
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        if pad_h == 0 && pad_w == 0 {
            return self.reshape(&xs);
        }
        let xv = self.to_array().into_dimensionality::<Ix4>().unwrap();
        let (nh, nw) = (h + pad_h, w + pad_w);
        let mut out = ndarray::Array4::<f64>::zeros((n, c, nh, nw));
        for ni in 0..n {
            for ci in 0..c {
                for i in 0..nh {
                    let si = reflect_index(i as isize, h);
                    for j in 0..nw {
                        let sj = reflect_index(j as isize, w);
                        out[[ni, ci, i, j]] = xv[[ni, ci, si, sj]];
                    }
                }
            }
        }
        Tensor::from_op(
            out.into_dyn(),
            vec![self.clone()],
            Box::new(move |g| {
                let gv = g.to_owned().into_dimensionality::<Ix4>().unwrap();
                let mut gx = ndarray::Array4::<f64>::zeros((n, c, h, w));
                for ni in 0..n {
                    for ci in 0..c {
                        for i in 0..nh {
                            let si = reflect_index(i as isize, h);
                            for j in 0..nw {
                                let sj = reflect_index(j as isize, w);
                                gx[[ni, ci, si, sj]] += gv[[ni, ci, i, j]];
                            }
                        }
                    }
                }
                vec![Some(gx.into_dyn())]
            }),
        )
    }

    /// Crop the spatial axes to the top-left (out_h, out_w) region.
    pub fn crop2d(&self, out_h: usize, out_w: usize) -> Tensor {
        self.slice_axis(2, 0, out_h).slice_axis(3, 0, out_w)
    }

    /// Zero-pad along `axis` by appending `extra` zero slices.
    pub fn pad_zero_axis(&self, axis: usize, extra: usize) -> Tensor {
        if extra == 0 {
            return self.clone();
        }
        let mut shape = self.shape();
        shape[axis] = extra;
        let zeros = Tensor::constant(ArrayD::zeros(IxDyn(&shape)));
        Tensor::concat(&[self.clone(), zeros], axis)
    }
}
