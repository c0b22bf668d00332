//! Superposition synthesis and the unified supervision labels.
//!
//! A mixture decomposes as `I = T + R_low + N` where `R_low` is the
//! low-frequency part of `I - T` and `N` carries everything the low-pass
//! filtered out. The identity holds exactly by construction, for synthetic
//! and real pairs alike.

use crate::error::{Error, Result};
use crate::img::Image;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (T, R_low, N) supervision set satisfying `T + R_low + N = I`.
#[derive(Debug, Clone)]
pub struct LabelTriplet {
    pub transmission: Image,
    /// Low-pass of `I - T`; may leave [0, 1] slightly, never clipped.
    pub reflection_label: Array3<f64>,
    /// Signed remainder `(I - T) - reflection_label`.
    pub residual_label: Array3<f64>,
}

/// Mixture synthesis knobs. Values are concrete; `sample` draws them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisParams {
    pub reflection_blur_sigma: f64,
    pub reflection_weight: f64,
    pub rng_seed: u64,
}

pub const BLUR_SIGMA_RANGE: (f64, f64) = (0.2, 4.0);
pub const REFLECTION_WEIGHT_RANGE: (f64, f64) = (0.4, 1.0);

impl SynthesisParams {
    /// Draw blur sigma ~ U[0.2, 4.0] and weight ~ U[0.4, 1.0] from the seed.
    pub fn sample(rng_seed: u64) -> SynthesisParams {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let reflection_blur_sigma =
            rng.gen_range(BLUR_SIGMA_RANGE.0..=BLUR_SIGMA_RANGE.1);
        let reflection_weight =
            rng.gen_range(REFLECTION_WEIGHT_RANGE.0..=REFLECTION_WEIGHT_RANGE.1);
        SynthesisParams {
            reflection_blur_sigma,
            reflection_weight,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reflection_blur_sigma <= 0.0 {
            return Err(Error::invalid("reflection_blur_sigma must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.reflection_weight) {
            return Err(Error::invalid("reflection_weight must be in [0,1]"));
        }
        Ok(())
    }
}

/// Default label-generator sigma: 2.0 at 384-pixel scale, proportional to
/// image size.
pub fn default_label_sigma(height: usize, width: usize) -> f64 {
    2.0 * (height.min(width) as f64) / 384.0
}

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

/// Normalized 1-D Gaussian taps, radius `ceil(3 sigma)`.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Spatial Gaussian blur of a signed (H, W, C) array with reflect padding.
/// Unit DC gain: constants pass through unchanged.
pub fn lowpass_2d(img: &Array3<f64>, sigma: f64) -> Result<Array3<f64>> {
    if sigma <= 0.0 {
        return Err(Error::invalid("lowpass_2d: sigma must be > 0"));
    }
    if img.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("lowpass_2d: input must be finite"));
    }
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;
    let (h, w, c) = img.dim();
    if radius == 0 {
        return Ok(img.clone());
    }
    // separable: rows then columns
    let mut tmp = Array3::<f64>::zeros((h, w, c));
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (t, &kv) in kernel.iter().enumerate() {
                    let jj = reflect_index(j as isize + t as isize - radius as isize, w);
                    acc += kv * img[[i, jj, ch]];
                }
                tmp[[i, j, ch]] = acc;
            }
        }
    }
    let mut out = Array3::<f64>::zeros((h, w, c));
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (t, &kv) in kernel.iter().enumerate() {
                    let ii = reflect_index(i as isize + t as isize - radius as isize, h);
                    acc += kv * tmp[[ii, j, ch]];
                }
                out[[i, j, ch]] = acc;
            }
        }
    }
    Ok(out)
}

/// Split `I - T` into its low-pass part (the reflection label) and the
/// signed remainder (the residual label).
pub fn generate_unified_labels(i: &Image, t: &Image, sigma: f64) -> Result<LabelTriplet> {
    if !i.same_size(t) {
        return Err(Error::invalid("generate_unified_labels: shape mismatch"));
    }
    let diff = i.pixels() - t.pixels();
    let reflection_label = lowpass_2d(&diff, sigma)?;
    let residual_label = &diff - &reflection_label;
    Ok(LabelTriplet {
        transmission: t.clone(),
        reflection_label,
        residual_label,
    })
}

/// Blend a blurred, weighted reflection onto a transmission image and
/// derive the unified labels from the produced mixture, so clipping
/// effects land in the labels consistently.
pub fn synthesize_mixture(
    t: &Image,
    r: &Image,
    params: &SynthesisParams,
    label_sigma: f64,
) -> Result<(Image, LabelTriplet)> {
    if !t.same_size(r) {
        return Err(Error::invalid("synthesize_mixture: shape mismatch"));
    }
    params.validate()?;
    let blurred = lowpass_2d(r.pixels(), params.reflection_blur_sigma)?;
    let mixed = t.pixels() + &(blurred * params.reflection_weight);
    let i = Image::from_clipped(mixed);
    let labels = generate_unified_labels(&i, t, label_sigma)?;
    Ok((i, labels))
}

impl LabelTriplet {
    /// Max per-pixel error of `T + R_low + N` against `I`.
    pub fn reconstruction_error(&self, i: &Image) -> f64 {
        let recon =
            self.transmission.pixels() + &self.reflection_label + &self.residual_label;
        (&recon - i.pixels())
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}
