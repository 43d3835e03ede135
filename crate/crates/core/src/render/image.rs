//! Linear-RGB float images, 8-bit sRGB PNG I/O and masked metrics.

use std::path::Path;

use crate::error::{Error, Result};

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, scanline order.
    pub rgb: Vec<f32>,
}

impl Image {
    pub fn filled(width: usize, height: usize, color: [f32; 3]) -> Image {
        Image {
            width,
            height,
            rgb: color.repeat(width * height),
        }
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, i: usize) -> [f32; 3] {
        [self.rgb[3 * i], self.rgb[3 * i + 1], self.rgb[3 * i + 2]]
    }

    pub fn set_pixel(&mut self, i: usize, c: [f32; 3]) {
        self.rgb[3 * i..3 * i + 3].copy_from_slice(&c);
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes: Vec<u8> = self.rgb.iter().map(|&c| encode_srgb(c)).collect();
        image::save_buffer(path, &bytes, self.width as u32, self.height as u32, image::ColorType::Rgb8)?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
        let img = image::open(path)?.to_rgb8();
        Ok(Image {
            width: img.width() as usize,
            height: img.height() as usize,
            rgb: img.as_raw().iter().map(|&b| decode_srgb(b)).collect(),
        })
    }
}

/// Linear value in `[0, 1]` to an 8-bit sRGB code, round to nearest.
pub fn encode_srgb(c: f32) -> u8 {
    let c = c.clamp(0.0, 1.0) as f64;
    let s = if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    };
    (s * 255.0).round() as u8
}

pub fn decode_srgb(b: u8) -> f32 {
    let s = b as f64 / 255.0;
    let c = if s <= 0.04045 {
        s / 12.92
    } else {
        ((s + 0.055) / 1.055).powf(2.4)
    };
    c as f32
}

/// Grayscale mask image: white where set.
pub fn save_mask_png(mask: &[bool], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    image::save_buffer(path, &bytes, width as u32, height as u32, image::ColorType::L8)?;
    Ok(())
}

fn check_pair(a: &Image, b: &Image, mask: &[bool]) -> Result<usize> {
    if a.width != b.width || a.height != b.height || mask.len() != a.num_pixels() {
        return Err(Error::shape(format!(
            "image sizes {}x{}, {}x{} and mask of {} pixels differ",
            a.width,
            a.height,
            b.width,
            b.height,
            mask.len()
        )));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::invalid("mask selects no pixels"));
    }
    Ok(n)
}

/// Mean squared error over masked pixels and all channels.
pub fn masked_mse(a: &Image, b: &Image, mask: &[bool]) -> Result<f64> {
    let n = check_pair(a, b, mask)?;
    let mut sum = 0.0;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for c in 0..3 {
            let d = a.rgb[3 * i + c] as f64 - b.rgb[3 * i + c] as f64;
            sum += d * d;
        }
    }
    Ok(sum / (3 * n) as f64)
}

/// Mean absolute error over masked pixels and all channels.
pub fn masked_mae(a: &Image, b: &Image, mask: &[bool]) -> Result<f64> {
    let n = check_pair(a, b, mask)?;
    let mut sum = 0.0;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for c in 0..3 {
            sum += (a.rgb[3 * i + c] as f64 - b.rgb[3 * i + c] as f64).abs();
        }
    }
    Ok(sum / (3 * n) as f64)
}

/// `10 log10(1 / MSE)` over masked pixels, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image, mask: &[bool]) -> Result<f64> {
    let mse = masked_mse(a, b, mask)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

fn gaussian_taps() -> Vec<f64> {
    let taps: Vec<f64> = (0..=2 * SSIM_RADIUS)
        .map(|i| {
            let x = i as f64 - SSIM_RADIUS as f64;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Separable Gaussian filter with zero padding.
fn blur(src: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let r = SSIM_RADIUS as isize;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut s = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let xx = x as isize + k as isize - r;
                if xx >= 0 && (xx as usize) < width {
                    s += t * src[y * width + xx as usize];
                }
            }
            tmp[y * width + x] = s;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut s = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let yy = y as isize + k as isize - r;
                if yy >= 0 && (yy as usize) < height {
                    s += t * tmp[yy as usize * width + x];
                }
            }
            out[y * width + x] = s;
        }
    }
    out
}

/// Mean SSIM over masked pixels, averaged over channels.
///
/// Each window is an 11x11 Gaussian (σ = 1.5) restricted to masked pixels
/// and renormalized, so background never enters the statistics.
pub fn ssim(a: &Image, b: &Image, mask: &[bool]) -> Result<f64> {
    let n = check_pair(a, b, mask)?;
    let (w, h) = (a.width, a.height);
    let taps = gaussian_taps();
    let m: Vec<f64> = mask.iter().map(|&m| m as u8 as f64).collect();
    let wsum = blur(&m, w, h, &taps);
    let mut total = 0.0;
    for c in 0..3 {
        let chan = |img: &Image| -> Vec<f64> { (0..w * h).map(|i| img.rgb[3 * i + c] as f64 * m[i]).collect() };
        let (x, y) = (chan(a), chan(b));
        let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(p, q)| p * q).collect() };
        let sx = blur(&x, w, h, &taps);
        let sy = blur(&y, w, h, &taps);
        let sxx = blur(&prod(&x, &x), w, h, &taps);
        let syy = blur(&prod(&y, &y), w, h, &taps);
        let sxy = blur(&prod(&x, &y), w, h, &taps);
        for i in (0..w * h).filter(|&i| mask[i]) {
            let ws = wsum[i];
            let (mx, my) = (sx[i] / ws, sy[i] / ws);
            let vx = sxx[i] / ws - mx * mx;
            let vy = syy[i] / ws - my * my;
            let cxy = sxy[i] / ws - mx * my;
            total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
        }
    }
    Ok(total / (3 * n) as f64)
}

/// `(1 − SSIM) / 2`.
pub fn dssim(a: &Image, b: &Image, mask: &[bool]) -> Result<f64> {
    Ok((1.0 - ssim(a, b, mask)?) / 2.0)
}
