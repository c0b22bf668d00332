//! The training objective: content, exclusion, perceptual, and
//! reconstruction terms, plus the spatial-gradient primitive they share.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Loss term weights. `omega` holds the five perceptual tap weights.
#[derive(Debug, Clone)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub omega: [f64; 5],
}

impl Default for LossWeights {
    fn default() -> LossWeights {
        LossWeights {
            alpha: 0.3,
            beta: 0.6,
            lambda1: 0.01,
            lambda2: 0.2,
            omega: [1.0; 5],
        }
    }
}

/// Per-term loss values, kept as graph nodes so the total can be
/// backpropagated. `total = content + exclusion + λ1·perceptual +
/// λ2·reconstruction` by construction.
pub struct LossReport {
    pub content: Tensor,
    pub exclusion: Tensor,
    pub perceptual: Tensor,
    pub reconstruction: Tensor,
    pub total: Tensor,
}

impl LossReport {
    pub fn values(&self) -> (f64, f64, f64, f64, f64) {
        (
            self.content.item(),
            self.exclusion.item(),
            self.perceptual.item(),
            self.reconstruction.item(),
            self.total.item(),
        )
    }
}

/// Forward differences along H and W with a zero-padded final row/column.
/// `x`: (B, C, H, W); returns (∂/∂h, ∂/∂w) of the same shape.
pub fn grad_op(x: &Tensor) -> (Tensor, Tensor) {
    let s = x.shape();
    assert!(s.len() == 4 && s[2] >= 2 && s[3] >= 2, "grad_op wants (B, C, H>=2, W>=2)");
    let (h, w) = (s[2], s[3]);
    let dh = x
        .slice_axis(2, 1, h - 1)
        .sub(&x.slice_axis(2, 0, h - 1))
        .pad_zero_axis(2, 1);
    let dw = x
        .slice_axis(3, 1, w - 1)
        .sub(&x.slice_axis(3, 0, w - 1))
        .pad_zero_axis(3, 1);
    (dh, dw)
}

fn mse(a: &Tensor, b: &Tensor) -> Tensor {
    a.sub(b).square().mean_all()
}

fn l1(a: &Tensor, b: &Tensor) -> Tensor {
    a.sub(b).abs().mean_all()
}

fn grad_l1(a: &Tensor, b: &Tensor) -> Tensor {
    let (ah, aw) = grad_op(a);
    let (bh, bw) = grad_op(b);
    l1(&ah, &bh).add(&l1(&aw, &bw)).scale(0.5)
}

/// Content term: MSE on T and R, α-weighted MSE on N, plus β-weighted L1
/// gradient terms (N's gradient term also α-weighted).
pub fn content_loss(
    t_hat: &Tensor,
    r_hat: &Tensor,
    n_hat: &Tensor,
    t: &Tensor,
    r: &Tensor,
    n: &Tensor,
    w: &LossWeights,
) -> Result<Tensor> {
    for (a, b) in [(t_hat, t), (r_hat, r), (n_hat, n)] {
        if a.shape() != b.shape() {
            return Err(Error::invalid("content_loss: prediction/label shape mismatch"));
        }
    }
    let pixel = mse(t_hat, t)
        .add(&mse(r_hat, r))
        .add(&mse(n_hat, n).scale(w.alpha));
    let grad = grad_l1(t_hat, t)
        .add(&grad_l1(r_hat, r))
        .add(&grad_l1(n_hat, n).scale(w.alpha));
    Ok(pixel.add(&grad.scale(w.beta)))
}

/// Mean absolute spatial gradient, as a scalar graph node.
fn mean_abs_grad(x: &Tensor) -> Tensor {
    let (dh, dw) = grad_op(x);
    dh.abs().mean_all().add(&dw.abs().mean_all()).scale(0.5)
}

/// Exclusion term: average over n ∈ {0, 1, 2} of the mean square of
/// tanh(ξ1·|∇T̂|) ⊙ tanh(ξ2·|∇R̂|) on 2ⁿ-downsampled versions, with
/// ξ1 = √((μ_R + ε) / (μ_T + ε)), ξ2 = √((μ_T + ε) / (μ_R + ε)), the μ being mean
/// absolute gradients, ε = 1e-6.
pub fn exclusion_loss(t_hat: &Tensor, r_hat: &Tensor) -> Result<Tensor> {
    let s = t_hat.shape();
    if s != r_hat.shape() {
        return Err(Error::invalid("exclusion_loss: shape mismatch"));
    }
    if s.len() != 4 || s[2] < 4 || s[3] < 4 {
        return Err(Error::invalid("exclusion_loss: spatial dims must be >= 4"));
    }
    const EPS: f64 = 1e-6;
    let mut acc: Option<Tensor> = None;
    for n in 0..3usize {
        // never shrink below 2x2, so 4-pixel inputs stay legal
        let (h, w) = ((s[2] >> n).max(2), (s[3] >> n).max(2));
        let t = t_hat.bilinear_resize(h, w);
        let r = r_hat.bilinear_resize(h, w);
        let mu_t = mean_abs_grad(&t);
        let mu_r = mean_abs_grad(&r);
        // ε in the numerator too: keeps the sqrt argument bounded away from
        // zero, where its derivative blows up (flat predictions have μ = 0)
        let xi1 = mu_r.add_scalar(EPS).div(&mu_t.add_scalar(EPS)).sqrt();
        let xi2 = mu_t.add_scalar(EPS).div(&mu_r.add_scalar(EPS)).sqrt();
        let (th, tw) = grad_op(&t);
        let (rh, rw) = grad_op(&r);
        let term_h = th.abs().mul(&xi1).tanh().mul(&rh.abs().mul(&xi2).tanh());
        let term_w = tw.abs().mul(&xi1).tanh().mul(&rw.abs().mul(&xi2).tanh());
        let level = term_h
            .square()
            .mean_all()
            .add(&term_w.square().mean_all())
            .scale(0.5);
        acc = Some(match acc {
            None => level,
            Some(a) => a.add(&level),
        });
    }
    Ok(acc.unwrap().scale(1.0 / 3.0))
}

/// Pluggable feature extractor for the perceptual term: five tapped maps.
pub trait FeatureExtractor {
    fn features(&self, x: &Tensor) -> Vec<Tensor>;
}

/// Trivial extractor whose five taps are the input itself.
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn features(&self, x: &Tensor) -> Vec<Tensor> {
        (0..5).map(|_| x.clone()).collect()
    }
}

/// Deterministic random-weight convolutional stub: five strided conv taps
/// with fixed weights. Stands in for a pretrained perceptual network.
pub struct RandomStubExtractor {
    kernels: Vec<Tensor>,
}

impl RandomStubExtractor {
    pub fn new(seed: u64) -> RandomStubExtractor {
        use ndarray::{ArrayD, IxDyn};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let kernels = (0..5)
            .map(|_| {
                Tensor::constant(ArrayD::from_shape_fn(IxDyn(&[4, 3, 3, 3]), |_| {
                    (rng.gen::<f64>() - 0.5) * 0.5
                }))
            })
            .collect();
        RandomStubExtractor { kernels }
    }
}

impl FeatureExtractor for RandomStubExtractor {
    fn features(&self, x: &Tensor) -> Vec<Tensor> {
        self.kernels
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let stride = if i < 2 { 1 } else { 2 };
                x.conv2d(k, None, stride, 1, 1).gelu()
            })
            .collect()
    }
}

/// Perceptual term: Σ ω_i · L1(φ_i(t̂), φ_i(T)).
pub fn perceptual_loss(
    t_hat: &Tensor,
    t: &Tensor,
    extractor: &dyn FeatureExtractor,
    omega: &[f64; 5],
) -> Result<Tensor> {
    if t_hat.shape() != t.shape() {
        return Err(Error::invalid("perceptual_loss: shape mismatch"));
    }
    let fa = extractor.features(t_hat);
    let fb = extractor.features(t);
    if fa.len() != 5 || fb.len() != 5 {
        return Err(Error::invalid("perceptual extractor must expose 5 taps"));
    }
    let mut acc: Option<Tensor> = None;
    for ((a, b), &w) in fa.iter().zip(&fb).zip(omega) {
        let term = l1(a, b).scale(w);
        acc = Some(match acc {
            None => term,
            Some(s) => s.add(&term),
        });
    }
    Ok(acc.unwrap())
}

/// Reconstruction term: mean L1 of I − T̂ − R̂ − N̂.
pub fn reconstruction_loss(
    image: &Tensor,
    t_hat: &Tensor,
    r_hat: &Tensor,
    n_hat: &Tensor,
) -> Result<Tensor> {
    if image.shape() != t_hat.shape()
        || image.shape() != r_hat.shape()
        || image.shape() != n_hat.shape()
    {
        return Err(Error::invalid("reconstruction_loss: shape mismatch"));
    }
    Ok(image.sub(t_hat).sub(r_hat).sub(n_hat).abs().mean_all())
}

/// All four terms and their weighted total.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    image: &Tensor,
    t_hat: &Tensor,
    r_hat: &Tensor,
    n_hat: &Tensor,
    t: &Tensor,
    r: &Tensor,
    n: &Tensor,
    extractor: &dyn FeatureExtractor,
    w: &LossWeights,
) -> Result<LossReport> {
    let content = content_loss(t_hat, r_hat, n_hat, t, r, n, w)?;
    let exclusion = exclusion_loss(t_hat, r_hat)?;
    let perceptual = perceptual_loss(t_hat, t, extractor, &w.omega)?;
    let reconstruction = reconstruction_loss(image, t_hat, r_hat, n_hat)?;
    let total = content
        .add(&exclusion)
        .add(&perceptual.scale(w.lambda1))
        .add(&reconstruction.scale(w.lambda2));
    Ok(LossReport {
        content,
        exclusion,
        perceptual,
        reconstruction,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use crate::labels::{synthesize_mixture, SynthesisParams};
    use crate::img::Image;
    use ndarray::{Array3, ArrayD, IxDyn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randt(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::constant(ArrayD::from_shape_fn(IxDyn(shape), |_| rng.gen::<f64>()))
    }

    #[test]
    fn grad_op_constant_and_ramp() {
        let c = Tensor::constant(ArrayD::from_elem(IxDyn(&[1, 1, 4, 4]), 0.7));
        let (dh, dw) = grad_op(&c);
        assert!(dh.value().iter().all(|&v| v == 0.0));
        assert!(dw.value().iter().all(|&v| v == 0.0));

        let w = 8usize;
        let ramp = Tensor::constant(ArrayD::from_shape_fn(IxDyn(&[1, 1, 4, w]), |ix| {
            ix[3] as f64 / w as f64
        }));
        let (dh, dw) = grad_op(&ramp);
        assert!(dh.value().iter().all(|&v| v == 0.0));
        let dwv = dw.value();
        for i in 0..4 {
            for j in 0..w - 1 {
                assert!((dwv[[0, 0, i, j]] - 1.0 / w as f64).abs() < 1e-12);
            }
            assert_eq!(dwv[[0, 0, i, w - 1]], 0.0); // zero-padded final column
        }
    }

    #[test]
    fn grad_op_matches_handrolled_differences() {
        let x = randt(&[1, 1, 5, 5], 1);
        let (dh, dw) = grad_op(&x);
        let xv = x.to_array();
        let dhv = dh.value();
        let dwv = dw.value();
        for i in 0..5 {
            for j in 0..5 {
                let eh = if i + 1 < 5 { xv[[0, 0, i + 1, j]] - xv[[0, 0, i, j]] } else { 0.0 };
                let ew = if j + 1 < 5 { xv[[0, 0, i, j + 1]] - xv[[0, 0, i, j]] } else { 0.0 };
                assert_eq!(dhv[[0, 0, i, j]], eh);
                assert_eq!(dwv[[0, 0, i, j]], ew);
            }
        }
    }

    #[test]
    fn content_loss_zero_at_labels_and_offset_case() {
        let w = LossWeights::default();
        let t = randt(&[1, 3, 4, 4], 2);
        let r = randt(&[1, 3, 4, 4], 3);
        let n = randt(&[1, 3, 4, 4], 4);
        let zero = content_loss(&t, &r, &n, &t, &r, &n, &w).unwrap();
        assert_eq!(zero.item(), 0.0);

        // constant offset: pure MSE, gradient terms vanish
        let t_off = t.add_scalar(0.1);
        let l = content_loss(&t_off, &r, &n, &t, &r, &n, &w).unwrap();
        assert!((l.item() - 0.01).abs() < 1e-12, "{}", l.item());
    }

    #[test]
    fn content_loss_matches_scalar_oracle() {
        let w = LossWeights::default();
        let shapes = [1usize, 3, 4, 4];
        let (th, rh, nh) = (randt(&shapes, 5), randt(&shapes, 6), randt(&shapes, 7));
        let (t, r, n) = (randt(&shapes, 8), randt(&shapes, 9), randt(&shapes, 10));
        let got = content_loss(&th, &rh, &nh, &t, &r, &n, &w).unwrap().item();

        // oracle with plain array arithmetic
        let mse_o = |a: &Tensor, b: &Tensor| -> f64 {
            let (av, bv) = (a.to_array(), b.to_array());
            av.iter().zip(bv.iter()).map(|(&x, &y)| (x - y).powi(2)).sum::<f64>()
                / av.len() as f64
        };
        let grad_o = |a: &Tensor| -> (ArrayD<f64>, ArrayD<f64>) {
            let v = a.to_array();
            let mut dh = ArrayD::zeros(v.raw_dim());
            let mut dw = ArrayD::zeros(v.raw_dim());
            for b in 0..1 {
                for c in 0..3 {
                    for i in 0..4 {
                        for j in 0..4 {
                            if i + 1 < 4 {
                                dh[[b, c, i, j]] = v[[b, c, i + 1, j]] - v[[b, c, i, j]];
                            }
                            if j + 1 < 4 {
                                dw[[b, c, i, j]] = v[[b, c, i, j + 1]] - v[[b, c, i, j]];
                            }
                        }
                    }
                }
            }
            (dh, dw)
        };
        let gl1 = |a: &Tensor, b: &Tensor| -> f64 {
            let (ah, aw) = grad_o(a);
            let (bh, bw) = grad_o(b);
            let l1h: f64 =
                ah.iter().zip(bh.iter()).map(|(&x, &y)| (x - y).abs()).sum::<f64>() / ah.len() as f64;
            let l1w: f64 =
                aw.iter().zip(bw.iter()).map(|(&x, &y)| (x - y).abs()).sum::<f64>() / aw.len() as f64;
            0.5 * (l1h + l1w)
        };
        let expect = mse_o(&th, &t)
            + mse_o(&rh, &r)
            + w.alpha * mse_o(&nh, &n)
            + w.beta * (gl1(&th, &t) + gl1(&rh, &r) + w.alpha * gl1(&nh, &n));
        assert!((got - expect).abs() <= 1e-10, "{got} vs {expect}");
    }

    #[test]
    fn exclusion_loss_zero_for_constant_reflection() {
        let t = randt(&[1, 3, 8, 8], 11);
        let r = Tensor::constant(ArrayD::from_elem(IxDyn(&[1, 3, 8, 8]), 0.5));
        let l = exclusion_loss(&t, &r).unwrap();
        assert!(l.item().abs() < 1e-12);
    }

    #[test]
    fn exclusion_loss_is_symmetric() {
        let t = randt(&[1, 3, 8, 8], 12);
        let r = randt(&[1, 3, 8, 8], 13);
        let a = exclusion_loss(&t, &r).unwrap().item();
        let b = exclusion_loss(&r, &t).unwrap().item();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn exclusion_loss_matches_brute_force_oracle() {
        let t = randt(&[1, 3, 8, 8], 14);
        let r = randt(&[1, 3, 8, 8], 15);
        let got = exclusion_loss(&t, &r).unwrap().item();

        // the same formula, recomputed term by term with plain arrays,
        // reusing only the bilinear resize primitive
        let mut levels = 0.0;
        for n in 0..3usize {
            let (h, w) = (8 >> n, 8 >> n);
            let td = t.bilinear_resize(h, w).to_array();
            let rd = r.bilinear_resize(h, w).to_array();
            let grads = |v: &ArrayD<f64>| {
                let mut out = Vec::new(); // (dh, dw) flattened per component
                let mut dh = ArrayD::zeros(v.raw_dim());
                let mut dw = ArrayD::zeros(v.raw_dim());
                for c in 0..3 {
                    for i in 0..h {
                        for j in 0..w {
                            if i + 1 < h {
                                dh[[0, c, i, j]] = v[[0, c, i + 1, j]] - v[[0, c, i, j]];
                            }
                            if j + 1 < w {
                                dw[[0, c, i, j]] = v[[0, c, i, j + 1]] - v[[0, c, i, j]];
                            }
                        }
                    }
                }
                out.push(dh);
                out.push(dw);
                out
            };
            let gt = grads(&td);
            let gr = grads(&rd);
            let mu = |g: &[ArrayD<f64>]| {
                0.5 * (g[0].iter().map(|v| v.abs()).sum::<f64>() / g[0].len() as f64
                    + g[1].iter().map(|v| v.abs()).sum::<f64>() / g[1].len() as f64)
            };
            let (mu_t, mu_r) = (mu(&gt), mu(&gr));
            let xi1 = ((mu_r + 1e-6) / (mu_t + 1e-6)).sqrt();
            let xi2 = ((mu_t + 1e-6) / (mu_r + 1e-6)).sqrt();
            let mut level = 0.0;
            for k in 0..2 {
                let prod2: f64 = gt[k]
                    .iter()
                    .zip(gr[k].iter())
                    .map(|(&a, &b)| {
                        let p = (xi1 * a.abs()).tanh() * (xi2 * b.abs()).tanh();
                        p * p
                    })
                    .sum::<f64>()
                    / gt[k].len() as f64;
                level += 0.5 * prod2;
            }
            levels += level;
        }
        let expect = levels / 3.0;
        assert!((got - expect).abs() <= 1e-8, "{got} vs {expect}");
    }

    #[test]
    fn perceptual_loss_identity_extractor() {
        let t = randt(&[1, 3, 8, 8], 16);
        let th = randt(&[1, 3, 8, 8], 17);
        assert_eq!(
            perceptual_loss(&t, &t, &IdentityExtractor, &[1.0; 5]).unwrap().item(),
            0.0
        );
        let l = perceptual_loss(&th, &t, &IdentityExtractor, &[1.0; 5]).unwrap().item();
        let direct = th.sub(&t).abs().mean_all().item();
        assert!((l - 5.0 * direct).abs() < 1e-12);
    }

    #[test]
    fn perceptual_loss_stub_recompute() {
        let ext = RandomStubExtractor::new(42);
        let t = randt(&[1, 3, 16, 16], 18);
        let th = randt(&[1, 3, 16, 16], 19);
        assert_eq!(perceptual_loss(&t, &t, &ext, &[1.0; 5]).unwrap().item(), 0.0);
        let omega = [0.5, 1.0, 1.5, 2.0, 2.5];
        let got = perceptual_loss(&th, &t, &ext, &omega).unwrap().item();
        let mut expect = 0.0;
        for ((a, b), &w) in ext.features(&th).iter().zip(&ext.features(&t)).zip(&omega) {
            expect += w * a.sub(b).abs().mean_all().item();
        }
        assert_eq!(got, expect);
    }

    #[test]
    fn reconstruction_loss_identity_and_offset() {
        // exact labels satisfy I = T + R_low + N, so the loss is zero
        let t_img = Image::constant(8, 8, 0.45);
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let refl = Array3::from_shape_fn((8, 8, 3), |_| rng.gen::<f64>() * 0.5);
        let (mix, labels) = synthesize_mixture(
            &t_img,
            &Image::new(refl).unwrap(),
            &SynthesisParams {
                reflection_blur_sigma: 1.0,
                reflection_weight: 0.6,
                rng_seed: 1,
            },
            1.5,
        )
        .unwrap();
        let i = mix.to_tensor();
        let t = labels.transmission.to_tensor();
        let r = Tensor::constant(
            labels.reflection_label.clone().permuted_axes([2, 0, 1]).insert_axis(ndarray::Axis(0)).into_dyn().as_standard_layout().to_owned(),
        );
        let n = Tensor::constant(
            labels.residual_label.clone().permuted_axes([2, 0, 1]).insert_axis(ndarray::Axis(0)).into_dyn().as_standard_layout().to_owned(),
        );
        let l = reconstruction_loss(&i, &t, &r, &n).unwrap().item();
        assert!(l < 1e-10, "{l}");

        let n_off = n.add_scalar(0.05);
        let l2 = reconstruction_loss(&i, &t, &r, &n_off).unwrap().item();
        assert!((l2 - 0.05).abs() < 1e-10);
    }

    #[test]
    fn reconstruction_loss_matches_scalar_oracle() {
        let (i, t, r, n) = (
            randt(&[1, 3, 5, 5], 21),
            randt(&[1, 3, 5, 5], 22),
            randt(&[1, 3, 5, 5], 23),
            randt(&[1, 3, 5, 5], 24),
        );
        let got = reconstruction_loss(&i, &t, &r, &n).unwrap().item();
        let (iv, tv, rv, nv) = (i.to_array(), t.to_array(), r.to_array(), n.to_array());
        let expect = iv
            .iter()
            .zip(tv.iter())
            .zip(rv.iter())
            .zip(nv.iter())
            .map(|(((&a, &b), &c), &d)| (a - b - c - d).abs())
            .sum::<f64>()
            / iv.len() as f64;
        assert!((got - expect).abs() <= 1e-10);
    }

    #[test]
    fn total_loss_weighting_and_report_invariant() {
        let shapes = [1usize, 3, 8, 8];
        let (i, th, rh, nh) = (
            randt(&shapes, 25),
            randt(&shapes, 26),
            randt(&shapes, 27),
            randt(&shapes, 28),
        );
        let (t, r, n) = (randt(&shapes, 29), randt(&shapes, 30), randt(&shapes, 31));
        let w = LossWeights::default();
        let rep = total_loss(&i, &th, &rh, &nh, &t, &r, &n, &IdentityExtractor, &w).unwrap();
        let (c, e, p, rc, tot) = rep.values();
        assert!((tot - (c + e + w.lambda1 * p + w.lambda2 * rc)).abs() < 1e-10);
        assert!(c >= 0.0 && e >= 0.0 && p >= 0.0 && rc >= 0.0);
        // unit term values force the documented total
        assert!((1.0 + 1.0 + 0.01 * 1.0 + 0.2 * 1.0 - 2.21f64).abs() < 1e-12);
    }

    #[test]
    fn all_terms_zero_at_perfect_prediction() {
        let t = randt(&[1, 3, 8, 8], 32);
        let r = Tensor::constant(ArrayD::from_elem(IxDyn(&[1, 3, 8, 8]), 0.25));
        let n = Tensor::constant(ArrayD::zeros(IxDyn(&[1, 3, 8, 8])));
        let i = t.add(&r).add(&n);
        let w = LossWeights::default();
        let rep = total_loss(&i, &t, &r, &n, &t, &r, &n, &IdentityExtractor, &w).unwrap();
        let (c, e, p, rc, tot) = rep.values();
        assert_eq!(c, 0.0);
        assert!(e.abs() < 1e-12); // constant r has zero gradient
        assert_eq!(p, 0.0);
        assert!(rc < 1e-12);
        assert!(tot < 1e-10);
    }

    #[test]
    fn exclusion_loss_gradcheck() {
        // sample well away from zero-gradient kinks
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mk = |seed: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            Tensor::leaf(ArrayD::from_shape_fn(IxDyn(&[1, 1, 4, 4]), |_| {
                0.3 + r.gen::<f64>() * 0.4
            }))
        };
        let _ = &mut rng;
        let t = mk(34);
        let r = mk(35);
        let report = check_gradients(
            || exclusion_loss(&t, &r).unwrap(),
            &[t.clone(), r.clone()],
            Some(8),
            1e-5,
        );
        assert!(report.passes(1e-4), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn content_loss_gradcheck() {
        let w = LossWeights::default();
        let mk = |seed: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            Tensor::leaf(ArrayD::from_shape_fn(IxDyn(&[1, 1, 4, 4]), |_| r.gen::<f64>()))
        };
        let (th, rh, nh) = (mk(36), mk(37), mk(38));
        let (t, r, n) = (mk(39), mk(40), mk(41));
        let params = [th.clone(), rh.clone(), nh.clone()];
        let report = check_gradients(
            || content_loss(&th, &rh, &nh, &t, &r, &n, &w).unwrap(),
            &params,
            Some(8),
            1e-5,
        );
        assert!(report.passes(1e-4), "max rel err {}", report.max_rel_err);
    }
}
