//! Frequency-domain Gaussian low-pass as a differentiable op, plus the
//! plain FFT helpers shared with the filter-analysis code.

use super::Tensor;
use ndarray::{Array2, ArrayD, Ix4, IxDyn};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place 2-D FFT of a complex matrix (rows then columns).
pub fn fft2d(data: &mut Array2<Complex64>, inverse: bool) {
    let (h, w) = data.dim();
    let mut planner = FftPlanner::<f64>::new();
    let fft_w = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    let fft_h = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    for mut row in data.rows_mut() {
        let buf = row.as_slice_mut();
        match buf {
            Some(b) => fft_w.process(b),
            None => {
                let mut tmp: Vec<Complex64> = row.iter().cloned().collect();
                fft_w.process(&mut tmp);
                for (dst, src) in row.iter_mut().zip(tmp) {
                    *dst = src;
                }
            }
        }
    }
    let mut col_buf = vec![Complex64::default(); h];
    for j in 0..w {
        for i in 0..h {
            col_buf[i] = data[[i, j]];
        }
        fft_h.process(&mut col_buf);
        for i in 0..h {
            data[[i, j]] = col_buf[i];
        }
    }
    if inverse {
        let scale = 1.0 / (h * w) as f64;
        data.mapv_inplace(|v| v * scale);
    }
}

pub fn ifft2d(data: &mut Array2<Complex64>) {
    fft2d(data, true);
}

/// Signed frequency in cycles/sample at FFT bin `k` (fftfreq convention).
fn fftfreq(k: usize, n: usize) -> f64 {
    let k = k as isize;
    let n = n as isize;
    let signed = if k <= (n - 1) / 2 { k } else { k - n };
    signed as f64 / n as f64
}

/// Gaussian low-pass mask on the uncentered FFT grid:
/// `exp(-0.5 ((wy/sy)^2 + (wx/sx)^2))`, sigmas in cycles/sample.
pub fn gaussian_freq_mask(h: usize, w: usize, sigma_y: f64, sigma_x: f64) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |(i, j)| {
        let wy = fftfreq(i, h);
        let wx = fftfreq(j, w);
        (-0.5 * (wy * wy / (sigma_y * sigma_y) + wx * wx / (sigma_x * sigma_x))).exp()
    })
}

fn apply_mask_2d(x: &Array2<f64>, mask: &Array2<f64>) -> Array2<f64> {
    let mut buf = x.mapv(|v| Complex64::new(v, 0.0));
    fft2d(&mut buf, false);
    buf.zip_mut_with(mask, |c, &m| *c *= m);
    ifft2d(&mut buf);
    buf.mapv(|c| c.re)
}

impl Tensor {
    /// Per-channel Gaussian low-pass in the Fourier domain.
    ///
    /// `sigma` is a 2-element tensor `[sigma_y, sigma_x]` in cycles/sample
    /// and is itself differentiable: dM/dsigma = M * w^2 / sigma^3.
    /// The mask is real and symmetric under frequency negation, so the
    /// input gradient is the same low-pass applied to the output gradient.
    pub fn fft_lowpass(&self, sigma: &Tensor) -> Tensor {
        let xs = self.shape();
        assert_eq!(xs.len(), 4, "fft_lowpass expects NCHW");
        assert_eq!(sigma.len(), 2, "sigma must be [sigma_y, sigma_x]");
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let sv = sigma.to_array();
        let (sy, sx) = (sv[[0]], sv[[1]]);
        assert!(sy > 0.0 && sx > 0.0, "fft_lowpass: non-positive sigma");
        let mask = gaussian_freq_mask(h, w, sy, sx);

        let xv = self.to_array().into_dimensionality::<Ix4>().unwrap();
        let mut out = ndarray::Array4::<f64>::zeros((n, c, h, w));
        for ni in 0..n {
            for ci in 0..c {
                let plane = xv.slice(ndarray::s![ni, ci, .., ..]).to_owned();
                out.slice_mut(ndarray::s![ni, ci, .., ..])
                    .assign(&apply_mask_2d(&plane, &mask));
            }
        }

        Tensor::from_op(
            out.into_dyn(),
            vec![self.clone(), sigma.clone()],
            Box::new(move |g| {
                let gv = g.to_owned().into_dimensionality::<Ix4>().unwrap();
                let mut gx = ndarray::Array4::<f64>::zeros((n, c, h, w));
                // dM/dsy = M * wy^2 / sy^3, dM/dsx likewise.
                let dmask_sy = Array2::from_shape_fn((h, w), |(i, j)| {
                    let wy = fftfreq(i, h);
                    mask[[i, j]] * wy * wy / (sy * sy * sy)
                });
                let dmask_sx = Array2::from_shape_fn((h, w), |(i, j)| {
                    let wx = fftfreq(j, w);
                    mask[[i, j]] * wx * wx / (sx * sx * sx)
                });
                let mut gsy = 0.0;
                let mut gsx = 0.0;
                for ni in 0..n {
                    for ci in 0..c {
                        let gplane = gv.slice(ndarray::s![ni, ci, .., ..]).to_owned();
                        gx.slice_mut(ndarray::s![ni, ci, .., ..])
                            .assign(&apply_mask_2d(&gplane, &mask));
                        let xplane = xv.slice(ndarray::s![ni, ci, .., ..]).to_owned();
                        let dy = apply_mask_2d(&xplane, &dmask_sy);
                        let dx = apply_mask_2d(&xplane, &dmask_sx);
                        gsy += (&gplane * &dy).sum();
                        gsx += (&gplane * &dx).sum();
                    }
                }
                let gs = ArrayD::from_shape_vec(IxDyn(&[2]), vec![gsy, gsx]).unwrap();
                vec![Some(gx.into_dyn()), Some(gs)]
            }),
        )
    }
}
