//! Frequency-domain masks, the impulse-response/ringing analysis, and the
//! Gaussian adaptive frequency learning block (FMiM split + FMoM fusion).

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Init, ParamBuilder};
use crate::tensor::{fft2d, ifft2d, Tensor};
use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::Complex64;

/// Which frequency boundary a mask uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Hard cutoff box (the ablation baseline).
    Rectangular,
    /// Smooth Gaussian coefficients.
    Gaussian,
}

/// Mask parameters in normalized frequency units (cycles/sample, Nyquist
/// at 0.5): cutoffs for rectangular, sigmas for gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskParams {
    Cutoffs { x: f64, y: f64 },
    Sigmas { x: f64, y: f64 },
}

/// A sampled low-pass mask on the centered frequency grid (DC at H/2, W/2).
#[derive(Debug, Clone)]
pub struct FrequencyMask {
    pub kind: MaskKind,
    pub params: MaskParams,
    pub grid: Array2<f64>,
}

/// Signed centered frequency at grid index `i` of `n` samples.
fn centered_freq(i: usize, n: usize) -> f64 {
    (i as isize - (n / 2) as isize) as f64 / n as f64
}

/// Sample a mask of the given kind on an (H, W) centered grid.
pub fn build_mask(kind: MaskKind, shape: (usize, usize), params: MaskParams) -> Result<FrequencyMask> {
    let (h, w) = shape;
    if h < 2 || w < 2 {
        return Err(Error::invalid("build_mask: grid must be at least 2x2"));
    }
    let grid = match (kind, params) {
        (MaskKind::Rectangular, MaskParams::Cutoffs { x, y }) => {
            if x <= 0.0 || y <= 0.0 {
                return Err(Error::invalid("build_mask: cutoffs must be positive"));
            }
            Array2::from_shape_fn((h, w), |(i, j)| {
                let wy = centered_freq(i, h);
                let wx = centered_freq(j, w);
                if wx.abs() <= x && wy.abs() <= y {
                    1.0
                } else {
                    0.0
                }
            })
        }
        (MaskKind::Gaussian, MaskParams::Sigmas { x, y }) => {
            if x <= 0.0 || y <= 0.0 {
                return Err(Error::invalid("build_mask: sigmas must be positive"));
            }
            Array2::from_shape_fn((h, w), |(i, j)| {
                let wy = centered_freq(i, h);
                let wx = centered_freq(j, w);
                (-0.5 * (wx * wx / (x * x) + wy * wy / (y * y))).exp()
            })
        }
        _ => {
            return Err(Error::invalid(
                "build_mask: kind and params disagree (cutoffs go with rectangular, sigmas with gaussian)",
            ))
        }
    };
    Ok(FrequencyMask { kind, params, grid })
}

/// Centered inverse DFT of the mask. The mask is symmetric under frequency
/// negation so the response is real; any imaginary leakage above 1e-9 is a
/// bug and asserted away.
pub fn impulse_response(mask: &FrequencyMask) -> Array2<f64> {
    let (h, w) = mask.grid.dim();
    // ifftshift: move DC from the grid center to index 0
    let mut buf = Array2::from_shape_fn((h, w), |(i, j)| {
        let si = (i + h / 2) % h;
        let sj = (j + w / 2) % w;
        Complex64::new(mask.grid[[si, sj]], 0.0)
    });
    ifft2d(&mut buf);
    let max_imag = buf.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
    assert!(
        max_imag < 1e-9,
        "impulse response should be real, imag magnitude {max_imag}"
    );
    // fftshift back so the peak sits at the center
    Array2::from_shape_fn((h, w), |(i, j)| {
        let si = (i + h - h / 2) % h;
        let sj = (j + w - w / 2) % w;
        buf[[si, sj]].re
    })
}

/// Sidelobe ratio `|min h| / max h` of the impulse response; zero for a
/// response that never goes negative.
pub fn ringing_metric(mask: &FrequencyMask) -> Result<f64> {
    let h = impulse_response(mask);
    let mx = h.iter().cloned().fold(f64::MIN, f64::max);
    let mn = h.iter().cloned().fold(f64::MAX, f64::min);
    if mx.abs() < 1e-300 {
        return Err(Error::invalid("ringing_metric: degenerate zero response"));
    }
    Ok(mn.min(0.0).abs() / mx)
}

/// Split a feature map (NCHW tensor) into complementary low/high bands via
/// a Gaussian low-pass in the Fourier domain. `sigma` is `[sigma_y,
/// sigma_x]` in cycles/sample and participates in the gradient.
pub fn fmim_split(x: &Tensor, sigma: &Tensor) -> Result<(Tensor, Tensor)> {
    let s = x.shape();
    if s.len() != 4 || s[2] < 2 || s[3] < 2 {
        return Err(Error::invalid("fmim_split: spatial dims must be >= 2"));
    }
    let sv = sigma.to_array();
    if sv.iter().any(|&v| v <= 0.0) {
        return Err(Error::invalid("fmim_split: sigma must be positive"));
    }
    let low = x.fft_lowpass(sigma);
    let high = x.sub(&low);
    Ok((low, high))
}

/// Convenience: FMiM on a plain array with fixed sigmas.
pub fn fmim_split_array(
    x: &ArrayD<f64>,
    sigma_y: f64,
    sigma_x: f64,
) -> Result<(ArrayD<f64>, ArrayD<f64>)> {
    let t = Tensor::constant(x.clone());
    let s = Tensor::constant(
        ArrayD::from_shape_vec(IxDyn(&[2]), vec![sigma_y, sigma_x]).unwrap(),
    );
    let (lo, hi) = fmim_split(&t, &s)?;
    Ok((lo.to_array(), hi.to_array()))
}

/// Apply a centered-grid mask to one 2-D plane (analysis path, hard or
/// gaussian masks alike).
pub fn apply_mask_plane(x: &Array2<f64>, mask: &FrequencyMask) -> Array2<f64> {
    let (h, w) = x.dim();
    assert_eq!(mask.grid.dim(), (h, w));
    let mut buf = x.mapv(|v| Complex64::new(v, 0.0));
    fft2d(&mut buf, false);
    // mask is centered; index it shifted
    for i in 0..h {
        for j in 0..w {
            let si = (i + h / 2) % h;
            let sj = (j + w / 2) % w;
            buf[[i, j]] *= mask.grid[[si, sj]];
        }
    }
    ifft2d(&mut buf);
    buf.mapv(|c| c.re)
}

/// Parameter bounds for the predicted spatial blur scale, in pixels at
/// feature resolution. Keeps the mask away from all-pass and all-block.
#[derive(Debug, Clone, Copy)]
pub struct SigmaBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for SigmaBounds {
    fn default() -> Self {
        SigmaBounds { min: 0.5, max: 8.0 }
    }
}

/// Gaussian adaptive frequency learning block.
///
/// A small head predicts per-image spatial sigmas from `I`; the enhanced
/// image features are split into Gaussian low/high bands (FMiM); each band
/// cross-attends channel-wise against the input features; the fused bands
/// are added back through a zero-initialized projection (FMoM), so the
/// block is an exact identity at initialization.
pub struct Gaflb {
    pub channels: usize,
    pub sigma_bounds: SigmaBounds,
    enhance_proj: Conv2d,
    enhance_conv: Conv2d,
    sigma_conv: Conv2d,
    sigma_fc_w: Tensor,
    sigma_fc_b: Tensor,
    q_proj: Conv2d,
    k_low: Conv2d,
    v_low: Conv2d,
    k_high: Conv2d,
    v_high: Conv2d,
    fuse: Conv2d,
}

impl Gaflb {
    pub fn new(pb: &mut ParamBuilder, channels: usize, sigma_bounds: SigmaBounds) -> Gaflb {
        let sc = 8; // sigma head width
        Gaflb {
            channels,
            sigma_bounds,
            enhance_proj: Conv2d::new(pb, "enhance_proj", 3, channels, 1, 1, 0, 1, Init::Kaiming),
            enhance_conv: Conv2d::new(pb, "enhance_conv", channels, channels, 3, 1, 1, 1, Init::Kaiming),
            sigma_conv: Conv2d::new(pb, "sigma_conv", 3, sc, 3, 2, 1, 1, Init::Kaiming),
            sigma_fc_w: pb.param("sigma_fc.weight", &[2, sc], Init::Kaiming),
            sigma_fc_b: pb.param("sigma_fc.bias", &[2], Init::Zero),
            q_proj: Conv2d::new(pb, "q_proj", channels, channels, 1, 1, 0, 1, Init::Kaiming),
            k_low: Conv2d::new(pb, "k_low", channels, channels, 1, 1, 0, 1, Init::Kaiming),
            v_low: Conv2d::new(pb, "v_low", channels, channels, 1, 1, 0, 1, Init::Kaiming),
            k_high: Conv2d::new(pb, "k_high", channels, channels, 1, 1, 0, 1, Init::Kaiming),
            v_high: Conv2d::new(pb, "v_high", channels, channels, 1, 1, 0, 1, Init::Kaiming),
            fuse: Conv2d::new(pb, "fuse", 2 * channels, channels, 1, 1, 0, 1, Init::Zero),
        }
    }

    /// Predict `[sigma_y, sigma_x]` (spatial pixels, clamped into bounds via
    /// a scaled sigmoid) from the resampled input image.
    pub fn predict_sigma(&self, image: &Tensor) -> Tensor {
        let f = self.sigma_conv.forward(image).gelu();
        let pooled = f.adaptive_avg_pool2d(1, 1); // (1, sc, 1, 1)
        let sc = pooled.shape()[1];
        let flat = pooled.reshape(&[1, sc]);
        let z = flat
            .matmul(&self.sigma_fc_w.transpose_last())
            .add(&self.sigma_fc_b)
            .reshape(&[2]);
        let span = self.sigma_bounds.max - self.sigma_bounds.min;
        z.sigmoid().scale(span).add_scalar(self.sigma_bounds.min)
    }

    /// Channel-wise cross attention: queries from `x_in`, keys/values from
    /// one frequency band, attention over the channel axis.
    fn cross_attention(&self, x_in: &Tensor, band: &Tensor, k: &Conv2d, v: &Conv2d) -> Tensor {
        let s = x_in.shape();
        let (c, h, w) = (s[1], s[2], s[3]);
        let n = h * w;
        let q = self.q_proj.forward(x_in).reshape(&[1, c, n]);
        let kt = k.forward(band).reshape(&[1, c, n]);
        let vt = v.forward(band).reshape(&[1, c, n]);
        let attn = q
            .matmul(&kt.transpose_last())
            .scale(1.0 / (n as f64).sqrt())
            .softmax_last(); // (1, C, C)
        attn.matmul(&vt).reshape(&[1, c, h, w])
    }

    /// `x_in`: (1, C, H, W) features; `image`: (1, 3, H, W) input resampled
    /// to the feature resolution. Output shape equals input shape.
    pub fn forward(&self, x_in: &Tensor, image: &Tensor) -> Result<Tensor> {
        let xs = x_in.shape();
        let is = image.shape();
        if xs[2] != is[2] || xs[3] != is[3] {
            return Err(Error::invalid(
                "gaflb_forward: image must be resampled to feature resolution",
            ));
        }
        if xs[1] != self.channels {
            return Err(Error::invalid("gaflb_forward: channel mismatch"));
        }
        let sigma_spatial = self.predict_sigma(image);
        // spatial sigma (pixels) -> frequency sigma (cycles/sample)
        let sigma_freq = Tensor::scalar(1.0 / (2.0 * std::f64::consts::PI))
            .div(&sigma_spatial);
        let enhanced = self.enhance_conv.forward(&self.enhance_proj.forward(image).gelu());
        let (f_low, f_high) = fmim_split(&enhanced, &sigma_freq)?;
        let x_low = self.cross_attention(x_in, &f_low, &self.k_low, &self.v_low);
        let x_high = self.cross_attention(x_in, &f_high, &self.k_high, &self.v_high);
        let fused = self.fuse.forward(&Tensor::concat(&[x_low, x_high], 1));
        Ok(x_in.add(&fused))
    }
}
