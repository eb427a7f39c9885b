//! Grayscale rasters, decoding, bilinear resizing and Gaussian blur.

use std::path::Path;

use image::DynamicImage;

use crate::error::{Error, Result};

/// Canonical pipeline side length.
pub const DEFAULT_IMAGE_SIZE: usize = 320;

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// Row-major single-channel image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::format(0, format!("zero-dimension image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Argument(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::Argument(format!("pixel {i} = {} outside [0,1]", pixels[i])));
        }
        Ok(GrayImage { width, height, pixels })
    }

    /// Builds an image from arbitrary values, clamping each into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                pixels.push(if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 });
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixel lookup with coordinates clamped to the border (replicate padding).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[y * self.width + x]
    }

    /// Quantizes to 8 bits, as stored on disk.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_bytes())
            .expect("buffer length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::format(0, other.to_string()),
        })
    }
}

/// Loads a PNG or PGM raster, converts to gray with Rec. 601 luma weights and
/// resizes to `target x target` bilinearly.
pub fn load_image(path: &Path, target: usize) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, target)
}

/// In-memory variant of [`load_image`].
pub fn decode_image(bytes: &[u8], target: usize) -> Result<GrayImage> {
    if target == 0 {
        return Err(Error::Argument("target size must be positive".into()));
    }
    let decoded = image::load_from_memory(bytes).map_err(|e| Error::format(0, e.to_string()))?;
    let gray = to_gray(&decoded)?;
    Ok(resize_bilinear(&gray, target, target))
}

fn to_gray(img: &DynamicImage) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::format(0, format!("zero-dimension image {w}x{h}")));
    }
    let pixels: Vec<f64> = if img.color().has_color() {
        img.to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                (LUMA_R * r as f64 + LUMA_G * g as f64 + LUMA_B * b as f64) / 255.0
            })
            .map(|v| v.clamp(0.0, 1.0))
            .collect()
    } else {
        img.to_luma8().pixels().map(|p| p.0[0] as f64 / 255.0).collect()
    };
    GrayImage::new(w, h, pixels)
}

/// Bilinear resize with half-pixel centre alignment and clamped borders.
pub fn resize_bilinear(src: &GrayImage, out_w: usize, out_h: usize) -> GrayImage {
    if src.width == out_w && src.height == out_h {
        return src.clone();
    }
    let sx = src.width as f64 / out_w as f64;
    let sy = src.height as f64 / out_h as f64;
    let xs: Vec<(usize, usize, f64)> = (0..out_w).map(|x| source_taps(x, sx, src.width)).collect();
    let mut pixels = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, fy) = source_taps(y, sy, src.height);
        for &(x0, x1, fx) in &xs {
            let top = src.get(x0, y0) * (1.0 - fx) + src.get(x1, y0) * fx;
            let bot = src.get(x0, y1) * (1.0 - fx) + src.get(x1, y1) * fx;
            pixels.push((top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0));
        }
    }
    GrayImage { width: out_w, height: out_h, pixels }
}

/// Same sampling rule on an unconstrained f64 grid; used to upsample anomaly maps.
pub fn resize_grid(src: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    if w == out_w && h == out_h {
        return src.to_vec();
    }
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let xs: Vec<(usize, usize, f64)> = (0..out_w).map(|x| source_taps(x, sx, w)).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, fy) = source_taps(y, sy, h);
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

fn source_taps(dst: usize, scale: f64, len: usize) -> (usize, usize, f64) {
    let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
    let i0 = pos.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, pos - i0 as f64)
}

/// Separable Gaussian blur with replicate borders; kernel radius `ceil(3 sigma)`.
pub fn gaussian_blur(src: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return src.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);

    let (w, h) = (src.width, src.height);
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, k) in kernel.iter().enumerate() {
                acc += k * src.get_clamped(x as isize + j as isize - radius, y as isize);
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut pixels = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, k) in kernel.iter().enumerate() {
                let yy = (y as isize + j as isize - radius).clamp(0, h as isize - 1) as usize;
                acc += k * tmp[yy * w + x];
            }
            pixels[y * w + x] = acc.clamp(0.0, 1.0);
        }
    }
    GrayImage { width: w, height: h, pixels }
}
