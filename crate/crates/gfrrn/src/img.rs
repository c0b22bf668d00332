//! The universal pixel container: H x W x 3 intensities in [0, 1].

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use ndarray::{Array3, ArrayD, Ix4, IxDyn};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Array3<f64>, // (H, W, 3)
}

impl Image {
    pub fn new(pixels: Array3<f64>) -> Result<Image> {
        if pixels.shape()[2] != 3 {
            return Err(Error::invalid("image must have 3 channels"));
        }
        if pixels.is_empty() {
            return Err(Error::invalid("image must be non-empty"));
        }
        for &v in pixels.iter() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid("image intensities must be finite and in [0,1]"));
            }
        }
        Ok(Image { pixels })
    }

    /// Clip arbitrary finite values into [0, 1] and wrap.
    pub fn from_clipped(pixels: Array3<f64>) -> Image {
        Image {
            pixels: pixels.mapv(|v| v.clamp(0.0, 1.0)),
        }
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Image {
        Image {
            pixels: Array3::from_elem((height, width, 3), value.clamp(0.0, 1.0)),
        }
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array3<f64> {
        self.pixels
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.height() == other.height() && self.width() == other.width()
    }

    /// NCHW tensor (1, 3, H, W), non-differentiable input.
    pub fn to_tensor(&self) -> Tensor {
        let (h, w) = (self.height(), self.width());
        let mut arr = ArrayD::zeros(IxDyn(&[1, 3, h, w]));
        for i in 0..h {
            for j in 0..w {
                for c in 0..3 {
                    arr[[0, c, i, j]] = self.pixels[[i, j, c]];
                }
            }
        }
        Tensor::constant(arr)
    }

    /// Back from a (1, 3, H, W) tensor value, clipping into range.
    pub fn from_tensor_clipped(t: &Tensor) -> Image {
        let v = t.to_array().into_dimensionality::<Ix4>().unwrap();
        let (h, w) = (v.shape()[2], v.shape()[3]);
        let mut px = Array3::zeros((h, w, 3));
        for i in 0..h {
            for j in 0..w {
                for c in 0..3 {
                    px[[i, j, c]] = v[[0, c, i, j]].clamp(0.0, 1.0);
                }
            }
        }
        Image { pixels: px }
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let img = image::open(path)?.into_rgb8();
        let (w, h) = img.dimensions();
        let mut px = Array3::zeros((h as usize, w as usize, 3));
        for (x, y, p) in img.enumerate_pixels() {
            for c in 0..3 {
                px[[y as usize, x as usize, c]] = p.0[c] as f64 / 255.0;
            }
        }
        Ok(Image { pixels: px })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let (h, w) = (self.height(), self.width());
        let mut img = image::RgbImage::new(w as u32, h as u32);
        for i in 0..h {
            for j in 0..w {
                let p = image::Rgb([
                    (self.pixels[[i, j, 0]] * 255.0).round().clamp(0.0, 255.0) as u8,
                    (self.pixels[[i, j, 1]] * 255.0).round().clamp(0.0, 255.0) as u8,
                    (self.pixels[[i, j, 2]] * 255.0).round().clamp(0.0, 255.0) as u8,
                ]);
                img.put_pixel(j as u32, i as u32, p);
            }
        }
        img.save(path)?;
        Ok(())
    }
}

/// Signed H x W x 3 arrays saved as offset-encoded 16-bit PNG:
/// `v = round((n + 1) * 32767.5)` maps [-1, 1] onto [0, 65535].
pub fn save_signed_png16(arr: &Array3<f64>, path: &Path) -> Result<()> {
    let (h, w) = (arr.shape()[0], arr.shape()[1]);
    let mut img = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            let enc = |v: f64| ((v + 1.0) * 32767.5).round().clamp(0.0, 65535.0) as u16;
            img.put_pixel(
                j as u32,
                i as u32,
                image::Rgb([
                    enc(arr[[i, j, 0]]),
                    enc(arr[[i, j, 1]]),
                    enc(arr[[i, j, 2]]),
                ]),
            );
        }
    }
    img.save(path)?;
    Ok(())
}

pub fn load_signed_png16(path: &Path) -> Result<Array3<f64>> {
    let img = image::open(path)?.into_rgb16();
    let (w, h) = img.dimensions();
    let mut arr = Array3::zeros((h as usize, w as usize, 3));
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            arr[[y as usize, x as usize, c]] = p.0[c] as f64 / 32767.5 - 1.0;
        }
    }
    Ok(arr)
}
