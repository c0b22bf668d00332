//! 2-D convolution (grouped, strided, zero-padded) via im2col matmuls.

use super::Tensor;
use ndarray::{Array2, ArrayD, Axis, Ix2, Ix4, IxDyn};

fn conv_out_dim(inp: usize, k: usize, stride: usize, pad: usize) -> usize {
    (inp + 2 * pad - k) / stride + 1
}

/// Gather input patches: (C_g*kh*kw, Ho*Wo) for one sample slice (C_g, H, W).
fn im2col(
    x: &ndarray::ArrayView3<f64>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let mut cols = Array2::<f64>::zeros((c * kh * kw, ho * wo));
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                for oi in 0..ho {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..wo {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        cols[[row, oi * wo + oj]] = x[[ci, ii as usize, jj as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add the adjoint of im2col.
#[allow(clippy::too_many_arguments)]
fn col2im(
    cols: &Array2<f64>,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    out: &mut ndarray::ArrayViewMut3<f64>,
) {
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                for oi in 0..ho {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..wo {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        out[[ci, ii as usize, jj as usize]] += cols[[row, oi * wo + oj]];
                    }
                }
            }
        }
    }
}

impl Tensor {
    /// `input` (N, C_in, H, W), `weight` (C_out, C_in/groups, kh, kw),
    /// optional `bias` (C_out). Zero padding.
    pub fn conv2d(
        &self,
        weight: &Tensor,
        bias: Option<&Tensor>,
        stride: usize,
        pad: usize,
        groups: usize,
    ) -> Tensor {
        let xs = self.shape();
        let ws = weight.shape();
        assert_eq!(xs.len(), 4, "conv2d expects NCHW input");
        assert_eq!(ws.len(), 4, "conv2d expects OIHW weight");
        let (n, c_in, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (c_out, c_in_g, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        assert_eq!(c_in, c_in_g * groups, "conv2d channel/group mismatch");
        assert_eq!(c_out % groups, 0);
        let c_out_g = c_out / groups;
        let ho = conv_out_dim(h, kh, stride, pad);
        let wo = conv_out_dim(w, kw, stride, pad);

        let xv = self
            .to_array()
            .into_dimensionality::<Ix4>()
            .unwrap();
        let wv = weight.to_array().into_dimensionality::<Ix4>().unwrap();
        let bv = bias.map(|b| b.to_array());

        let mut out = ArrayD::zeros(IxDyn(&[n, c_out, ho, wo]));
        // weight as (groups, C_out_g, C_in_g*kh*kw)
        let wmat = wv
            .clone()
            .into_shape((groups, c_out_g, c_in_g * kh * kw))
            .unwrap();
        for ni in 0..n {
            for g in 0..groups {
                let xg = xv.slice(ndarray::s![ni, g * c_in_g..(g + 1) * c_in_g, .., ..]);
                let cols = im2col(&xg, kh, kw, stride, pad, ho, wo);
                let res = wmat.index_axis(Axis(0), g).dot(&cols); // (C_out_g, Ho*Wo)
                let mut dst = out.slice_mut(ndarray::s![
                    ni,
                    g * c_out_g..(g + 1) * c_out_g,
                    ..,
                    ..
                ]);
                dst.assign(
                    &res.into_shape((c_out_g, ho, wo))
                        .unwrap(),
                );
            }
            if let Some(b) = &bv {
                for co in 0..c_out {
                    out.slice_mut(ndarray::s![ni, co, .., ..])
                        .mapv_inplace(|v| v + b[[co]]);
                }
            }
        }

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        let has_bias = bias.is_some();
        Tensor::from_op(
            out,
            parents,
            Box::new(move |g| {
                let gv = g
                    .to_owned()
                    .into_dimensionality::<Ix4>()
                    .unwrap();
                let mut gx = ndarray::Array4::<f64>::zeros((n, c_in, h, w));
                let mut gw = ndarray::Array3::<f64>::zeros((groups, c_out_g, c_in_g * kh * kw));
                for ni in 0..n {
                    for grp in 0..groups {
                        let xg = xv.slice(ndarray::s![ni, grp * c_in_g..(grp + 1) * c_in_g, .., ..]);
                        let cols = im2col(&xg, kh, kw, stride, pad, ho, wo);
                        let go = gv
                            .slice(ndarray::s![ni, grp * c_out_g..(grp + 1) * c_out_g, .., ..])
                            .to_owned()
                            .into_shape((c_out_g, ho * wo))
                            .unwrap();
                        // dW += dY . cols^T
                        let gw_g = go.dot(&cols.t());
                        gw.index_axis_mut(Axis(0), grp)
                            .zip_mut_with(&gw_g, |a, &b| *a += b);
                        // dcols = W^T . dY, then scatter
                        let w_g = wmat
                            .index_axis(Axis(0), grp)
                            .into_dimensionality::<Ix2>()
                            .unwrap();
                        let gcols = w_g.t().dot(&go);
                        let mut gx_slice =
                            gx.slice_mut(ndarray::s![ni, grp * c_in_g..(grp + 1) * c_in_g, .., ..]);
                        col2im(
                            &gcols, c_in_g, h, w, kh, kw, stride, pad, ho, wo, &mut gx_slice,
                        );
                    }
                }
                let gw = gw
                    .into_shape((c_out, c_in_g, kh, kw))
                    .unwrap()
                    .into_dyn();
                let mut grads = vec![Some(gx.into_dyn()), Some(gw)];
                if has_bias {
                    let gb = gv.sum_axis(Axis(0)).sum_axis(Axis(1)).sum_axis(Axis(1));
                    grads.push(Some(gb.into_dyn()));
                }
                grads
            }),
        )
    }
}
