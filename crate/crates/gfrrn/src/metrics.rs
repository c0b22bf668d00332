//! Evaluation metrics: PSNR and single-scale SSIM, plus the per-dataset
//! report type.

use crate::error::{Error, Result};
use crate::img::Image;
use serde::Serialize;

/// PSNR cap for identical images (zero MSE).
pub const PSNR_CAP_DB: f64 = 99.0;

/// PSNR in dB over all RGB channels, values assumed in [0, 1].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_size(b) {
        return Err(Error::invalid("psnr: shape mismatch"));
    }
    let pa = a.pixels();
    let pb = b.pixels();
    let mse = pa
        .iter()
        .zip(pb.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / pa.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [[f64; SSIM_WINDOW]; SSIM_WINDOW] {
    let mut w = [[0.0; SSIM_WINDOW]; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            *v = (-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            sum += *v;
        }
    }
    for row in w.iter_mut() {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    w
}

/// Single-scale SSIM: 11×11 Gaussian window (σ = 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1. Computed per RGB channel over all fully
/// interior windows, then averaged across channels (no luminance
/// conversion).
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_size(b) {
        return Err(Error::invalid("ssim: shape mismatch"));
    }
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid("ssim: image smaller than the 11x11 window"));
    }
    let win = gaussian_window();
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let pa = a.pixels();
    let pb = b.pixels();
    let mut channel_means = [0.0f64; 3];
    for (ch, cm) in channel_means.iter_mut().enumerate() {
        let mut acc = 0.0;
        let mut count = 0usize;
        for i in 0..=h - SSIM_WINDOW {
            for j in 0..=w - SSIM_WINDOW {
                let (mut mx, mut my) = (0.0, 0.0);
                let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
                for (di, row) in win.iter().enumerate() {
                    for (dj, &g) in row.iter().enumerate() {
                        let x = pa[[i + di, j + dj, ch]];
                        let y = pb[[i + di, j + dj, ch]];
                        mx += g * x;
                        my += g * y;
                        xx += g * x * x;
                        yy += g * y * y;
                        xy += g * x * y;
                    }
                }
                let vx = xx - mx * mx;
                let vy = yy - my * my;
                let cov = xy - mx * my;
                let s = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                acc += s;
                count += 1;
            }
        }
        *cm = acc / count as f64;
    }
    Ok(channel_means.iter().sum::<f64>() / 3.0)
}

/// One evaluated pair.
#[derive(Debug, Clone, Serialize)]
pub struct PairMetrics {
    pub pair_id: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Per-image rows plus dataset averages.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub rows: Vec<PairMetrics>,
    pub avg_psnr_db: f64,
    pub avg_ssim: f64,
}

impl MetricsReport {
    pub fn from_rows(rows: Vec<PairMetrics>) -> MetricsReport {
        let n = rows.len().max(1) as f64;
        let avg_psnr_db = rows.iter().map(|r| r.psnr_db).sum::<f64>() / n;
        let avg_ssim = rows.iter().map(|r| r.ssim).sum::<f64>() / n;
        MetricsReport {
            rows,
            avg_psnr_db,
            avg_ssim,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,psnr_db,ssim\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.6},{:.8}\n", r.pair_id, r.psnr_db, r.ssim));
        }
        out.push_str(&format!("average,{:.6},{:.8}\n", self.avg_psnr_db, self.avg_ssim));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_img(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(Array3::from_shape_fn((h, w, 3), |_| rng.gen::<f64>())).unwrap()
    }

    #[test]
    fn psnr_identical_hits_cap() {
        let a = rand_img(16, 16, 1);
        assert_eq!(psnr(&a, &a).unwrap(), 99.0);
    }

    #[test]
    fn psnr_uniform_offset_is_twenty_db() {
        let a = Image::constant(16, 16, 0.4);
        let b = Image::constant(16, 16, 0.5);
        let p = psnr(&a, &b).unwrap();
        assert!((p - 20.0).abs() < 1e-9, "{p}");
    }

    #[test]
    fn psnr_matches_scalar_oracle_and_is_symmetric() {
        for seed in 0..20 {
            let a = rand_img(12, 13, seed );
            let b = rand_img(12, 13, seed + 100);
            let got = psnr(&a, &b).unwrap();
            let mse: f64 = a
                .pixels()
                .iter()
                .zip(b.pixels().iter())
                .map(|(&x, &y)| (x - y).powi(2))
                .sum::<f64>()
                / (12.0 * 13.0 * 3.0);
            let expect = 10.0 * (1.0 / mse).log10();
            assert!((got - expect).abs() <= 1e-9);
            assert!((got - psnr(&b, &a).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn ssim_self_is_one() {
        let a = rand_img(16, 16, 2);
        let s = ssim(&a, &a).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn ssim_constant_patches_match_closed_form() {
        let a = Image::constant(16, 16, 0.3);
        let b = Image::constant(16, 16, 0.7);
        let s = ssim(&a, &b).unwrap();
        // constant patches: variances and covariance are zero, so
        // SSIM = (2 μx μy + C1) / (μx² + μy² + C1)
        let c1 = 0.01f64.powi(2);
        let expect = (2.0 * 0.3 * 0.7 + c1) / (0.3f64.powi(2) + 0.7f64.powi(2) + c1);
        assert!((s - expect).abs() < 1e-12, "{s} vs {expect}");
        assert!(s < 1.0);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = rand_img(8, 16, 3);
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn ssim_symmetric_and_bounded() {
        for seed in 0..10 {
            let a = rand_img(14, 15, seed + 40);
            let b = rand_img(14, 15, seed + 80);
            let s1 = ssim(&a, &b).unwrap();
            let s2 = ssim(&b, &a).unwrap();
            assert!((s1 - s2).abs() < 1e-9);
            assert!((-1.0..=1.0).contains(&s1));
        }
    }

    #[test]
    fn report_averages_are_row_means() {
        let rows = vec![
            PairMetrics {
                pair_id: "a".into(),
                psnr_db: 20.0,
                ssim: 0.8,
            },
            PairMetrics {
                pair_id: "b".into(),
                psnr_db: 30.0,
                ssim: 0.9,
            },
        ];
        let rep = MetricsReport::from_rows(rows);
        assert!((rep.avg_psnr_db - 25.0).abs() < 1e-9);
        assert!((rep.avg_ssim - 0.85).abs() < 1e-9);
        assert!(rep.to_csv().lines().count() == 4);
    }
}
