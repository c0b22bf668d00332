//! Elementwise, reduction, shape, and matrix ops with their backward rules.

use super::{broadcast_shape, reduce_to_shape, Tensor};
use ndarray::{ArrayD, Axis, Ix2, IxDyn, Slice};

fn bcast(a: &ArrayD<f64>, shape: &[usize]) -> ArrayD<f64> {
    a.broadcast(IxDyn(shape))
        .expect("broadcast failed")
        .to_owned()
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Tensor {
        let out_shape = broadcast_shape(&self.shape(), &other.shape());
        let value = &bcast(&self.value(), &out_shape) + &bcast(&other.value(), &out_shape);
        let (sa, sb) = (self.shape(), other.shape());
        Tensor::from_op(
            value,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                vec![
                    Some(reduce_to_shape(g, &sa)),
                    Some(reduce_to_shape(g, &sb)),
                ]
            }),
        )
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        let out_shape = broadcast_shape(&self.shape(), &other.shape());
        let value = &bcast(&self.value(), &out_shape) - &bcast(&other.value(), &out_shape);
        let (sa, sb) = (self.shape(), other.shape());
        Tensor::from_op(
            value,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                vec![
                    Some(reduce_to_shape(g, &sa)),
                    Some(reduce_to_shape(&-g.clone(), &sb)),
                ]
            }),
        )
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        let out_shape = broadcast_shape(&self.shape(), &other.shape());
        let av = bcast(&self.value(), &out_shape);
        let bv = bcast(&other.value(), &out_shape);
        let value = &av * &bv;
        let (sa, sb) = (self.shape(), other.shape());
        Tensor::from_op(
            value,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                vec![
                    Some(reduce_to_shape(&(g * &bv), &sa)),
                    Some(reduce_to_shape(&(g * &av), &sb)),
                ]
            }),
        )
    }

    pub fn div(&self, other: &Tensor) -> Tensor {
        let out_shape = broadcast_shape(&self.shape(), &other.shape());
        let av = bcast(&self.value(), &out_shape);
        let bv = bcast(&other.value(), &out_shape);
        let value = &av / &bv;
        let (sa, sb) = (self.shape(), other.shape());
        Tensor::from_op(
            value,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let ga = g / &bv;
                let gb = -(g * &av) / (&bv * &bv);
                vec![
                    Some(reduce_to_shape(&ga, &sa)),
                    Some(reduce_to_shape(&gb, &sb)),
                ]
            }),
        )
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let value = self.value().mapv(|x| x * c);
        Tensor::from_op(
            value,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.mapv(|x| x * c))]),
        )
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let value = self.value().mapv(|x| x + c);
        Tensor::from_op(value, vec![self.clone()], Box::new(|g| vec![Some(g.clone())]))
    }

    pub fn square(&self) -> Tensor {
        self.mul(self)
    }

    pub fn sqrt(&self) -> Tensor {
        let y = self.value().mapv(f64::sqrt);
        let yc = y.clone();
        Tensor::from_op(
            y,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g * &yc.mapv(|v| 0.5 / v))]),
        )
    }

    pub fn exp(&self) -> Tensor {
        let y = self.value().mapv(f64::exp);
        let yc = y.clone();
        Tensor::from_op(y, vec![self.clone()], Box::new(move |g| vec![Some(g * &yc)]))
    }

    pub fn tanh(&self) -> Tensor {
        let y = self.value().mapv(f64::tanh);
        let yc = y.clone();
        Tensor::from_op(
            y,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g * &yc.mapv(|v| 1.0 - v * v))]),
        )
    }

    pub fn sigmoid(&self) -> Tensor {
        let y = self.value().mapv(|x| 1.0 / (1.0 + (-x).exp()));
        let yc = y.clone();
        Tensor::from_op(
            y,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g * &yc.mapv(|v| v * (1.0 - v)))]),
        )
    }

    /// Smooth GELU (tanh approximation); used everywhere an activation is
    /// needed so finite-difference checks stay away from kinks.
    pub fn gelu(&self) -> Tensor {
        const K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
        const C: f64 = 0.044715;
        let xv = self.to_array();
        let y = xv.mapv(|x| 0.5 * x * (1.0 + (K * (x + C * x * x * x)).tanh()));
        Tensor::from_op(
            y,
            vec![self.clone()],
            Box::new(move |g| {
                let dg = xv.mapv(|x| {
                    let u = K * (x + C * x * x * x);
                    let t = u.tanh();
                    let du = K * (1.0 + 3.0 * C * x * x);
                    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
                });
                vec![Some(g * &dg)]
            }),
        )
    }

    /// |x|, with subgradient 0 at the origin.
    pub fn abs(&self) -> Tensor {
        let xv = self.to_array();
        let y = xv.mapv(f64::abs);
        Tensor::from_op(
            y,
            vec![self.clone()],
            Box::new(move |g| vec![Some(g * &xv.mapv(|x| x.signum() * (x != 0.0) as u8 as f64))]),
        )
    }

    pub fn sum_all(&self) -> Tensor {
        let s = self.value().sum();
        let shape = self.shape();
        Tensor::from_op(
            ArrayD::from_elem(IxDyn(&[]), s),
            vec![self.clone()],
            Box::new(move |g| {
                let gv = *g.iter().next().unwrap();
                vec![Some(ArrayD::from_elem(IxDyn(&shape), gv))]
            }),
        )
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.len() as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Sum over `axis`, keeping the axis with length 1.
    pub fn sum_axis_keep(&self, axis: usize) -> Tensor {
        let value = self.value().sum_axis(Axis(axis)).insert_axis(Axis(axis));
        let shape = self.shape();
        Tensor::from_op(
            value,
            vec![self.clone()],
            Box::new(move |g| vec![Some(bcast(g, &shape))]),
        )
    }

    pub fn mean_axis_keep(&self, axis: usize) -> Tensor {
        let n = self.shape()[axis] as f64;
        self.sum_axis_keep(axis).scale(1.0 / n)
    }

    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        let orig = self.shape();
        let value = self
            .value()
            .as_standard_layout()
            .to_owned()
            .into_shape(IxDyn(shape))
            .expect("reshape: element count mismatch");
        Tensor::from_op(
            value,
            vec![self.clone()],
            Box::new(move |g| {
                vec![Some(
                    g.as_standard_layout()
                        .to_owned()
                        .into_shape(IxDyn(&orig))
                        .unwrap(),
                )]
            }),
        )
    }

    pub fn permute(&self, axes: &[usize]) -> Tensor {
        let value = self
            .value()
            .clone()
            .permuted_axes(IxDyn(axes))
            .as_standard_layout()
            .to_owned();
        let mut inverse = vec![0usize; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        Tensor::from_op(
            value,
            vec![self.clone()],
            Box::new(move |g| {
                vec![Some(
                    g.clone()
                        .permuted_axes(IxDyn(&inverse))
                        .as_standard_layout()
                        .to_owned(),
                )]
            }),
        )
    }

    /// Swap the last two axes.
    pub fn transpose_last(&self) -> Tensor {
        let n = self.shape().len();
        let mut axes: Vec<usize> = (0..n).collect();
        axes.swap(n - 1, n - 2);
        self.permute(&axes)
    }

    /// Matrix product over the last two axes; leading (batch) axes must match.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let sa = self.shape();
        let sb = other.shape();
        assert!(sa.len() >= 2 && sb.len() == sa.len(), "matmul rank mismatch");
        assert_eq!(&sa[..sa.len() - 2], &sb[..sb.len() - 2], "matmul batch mismatch");
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        assert_eq!(k, k2, "matmul inner dim mismatch");
        let batch: usize = sa[..sa.len() - 2].iter().product();

        let av = self
            .value()
            .as_standard_layout()
            .to_owned()
            .into_shape(IxDyn(&[batch, m, k]))
            .unwrap();
        let bv = other
            .value()
            .as_standard_layout()
            .to_owned()
            .into_shape(IxDyn(&[batch, k, n]))
            .unwrap();

        let mut out = ArrayD::zeros(IxDyn(&[batch, m, n]));
        for i in 0..batch {
            let a2 = av
                .index_axis(Axis(0), i)
                .into_dimensionality::<Ix2>()
                .unwrap();
            let b2 = bv
                .index_axis(Axis(0), i)
                .into_dimensionality::<Ix2>()
                .unwrap();
            out.index_axis_mut(Axis(0), i).assign(&a2.dot(&b2).into_dyn());
        }
        let mut out_shape = sa[..sa.len() - 2].to_vec();
        out_shape.push(m);
        out_shape.push(n);
        let out = out.into_shape(IxDyn(&out_shape)).unwrap();

        let (sa2, sb2) = (sa.clone(), sb.clone());
        Tensor::from_op(
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let gv = g
                    .as_standard_layout()
                    .to_owned()
                    .into_shape(IxDyn(&[batch, m, n]))
                    .unwrap();
                let mut ga = ArrayD::zeros(IxDyn(&[batch, m, k]));
                let mut gb = ArrayD::zeros(IxDyn(&[batch, k, n]));
                for i in 0..batch {
                    let g2 = gv
                        .index_axis(Axis(0), i)
                        .into_dimensionality::<Ix2>()
                        .unwrap();
                    let a2 = av
                        .index_axis(Axis(0), i)
                        .into_dimensionality::<Ix2>()
                        .unwrap();
                    let b2 = bv
                        .index_axis(Axis(0), i)
                        .into_dimensionality::<Ix2>()
                        .unwrap();
                    ga.index_axis_mut(Axis(0), i)
                        .assign(&g2.dot(&b2.t()).into_dyn());
                    gb.index_axis_mut(Axis(0), i)
                        .assign(&a2.t().dot(&g2).into_dyn());
                }
                vec![
                    Some(ga.into_shape(IxDyn(&sa2)).unwrap()),
                    Some(gb.into_shape(IxDyn(&sb2)).unwrap()),
                ]
            }),
        )
    }

    /// Numerically stable softmax over the last axis.
    pub fn softmax_last(&self) -> Tensor {
        let x = self.to_array();
        let last = x.ndim() - 1;
        let mut y = x;
        for mut row in y.lanes_mut(Axis(last)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - m).exp());
            let s: f64 = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let yc = y.clone();
        Tensor::from_op(
            y,
            vec![self.clone()],
            Box::new(move |g| {
                let mut out = g * &yc;
                // g_i = y_i * (g_i - sum_j g_j y_j)
                let dots = out.sum_axis(Axis(last)).insert_axis(Axis(last));
                out = &out - &(&yc * &dots);
                vec![Some(out)]
            }),
        )
    }

    pub fn concat(tensors: &[Tensor], axis: usize) -> Tensor {
        assert!(!tensors.is_empty());
        let views: Vec<_> = tensors.iter().map(|t| t.to_array()).collect();
        let view_refs: Vec<_> = views.iter().map(|v| v.view()).collect();
        let value = ndarray::concatenate(Axis(axis), &view_refs).expect("concat shape mismatch");
        let sizes: Vec<usize> = tensors.iter().map(|t| t.shape()[axis]).collect();
        Tensor::from_op(
            value,
            tensors.to_vec(),
            Box::new(move |g| {
                let mut out = Vec::new();
                let mut start = 0isize;
                for &sz in &sizes {
                    let piece = g
                        .slice_axis(Axis(axis), Slice::new(start, Some(start + sz as isize), 1))
                        .to_owned();
                    out.push(Some(piece));
                    start += sz as isize;
                }
                out
            }),
        )
    }

    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Tensor {
        let value = self
            .value()
            .slice_axis(
                Axis(axis),
                Slice::new(start as isize, Some((start + len) as isize), 1),
            )
            .to_owned();
        let shape = self.shape();
        Tensor::from_op(
            value,
            vec![self.clone()],
            Box::new(move |g| {
                let mut out = ArrayD::zeros(IxDyn(&shape));
                out.slice_axis_mut(
                    Axis(axis),
                    Slice::new(start as isize, Some((start + len) as isize), 1),
                )
                .assign(g);
                vec![Some(out)]
            }),
        )
    }
}

#[allow(clippy::needless_range_loop)]
pub(crate) fn _unused() {}
