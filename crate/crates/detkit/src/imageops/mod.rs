//! Raster pre-processing and augmentation: blending, blurs, color shifts,
//! geometric warps with box co-transform, color-constancy correction, and
//! patch-based denoising.
//!
//! Images are 8-bit interleaved RGB. Fractional results are rounded half away
//! from zero and clamped, everywhere, so outputs are reproducible byte for
//! byte across runs and thread counts.

mod blur;
mod manifest;
mod nlm;
mod ppm;
mod warp;

pub use blur::{gaussian_blur, gaussian_kernel, median_blur, motion_blur};
pub use manifest::{apply_op, load_manifest, AugmentOp, ManifestRow};
pub use nlm::denoise_nlm;
pub use ppm::{read_ppm, write_ppm};
pub use warp::flip_or_affine;

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use thiserror::Error;

use crate::geometry::{BBox, GeometryError};

#[derive(Debug, Error)]
pub enum ImageOpsError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("sample buffer holds {actual} bytes, expected {expected}")]
    DataSize { expected: usize, actual: usize },
    #[error("images are {0}x{1} and {2}x{3}, expected equal dimensions")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("lambda must be in [0,1], got {0}")]
    InvalidLambda(f64),
    #[error("alpha must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("{0}")]
    InvalidParameter(String),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Row-major interleaved 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageOpsError> {
        if width == 0 || height == 0 {
            return Err(ImageOpsError::InvalidDimensions { width, height });
        }
        let expected = 3 * width * height;
        if data.len() != expected {
            return Err(ImageOpsError::DataSize {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// A constant-color image.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ImageOpsError> {
        let mut data = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Mean value of one channel (0 = R, 1 = G, 2 = B).
    pub fn channel_mean(&self, channel: usize) -> f64 {
        let sum: f64 = self.data[channel..].iter().step_by(3).map(|&v| f64::from(v)).sum();
        sum / (self.width * self.height) as f64
    }
}

/// Round half away from zero, then clamp into the 8-bit range.
#[inline]
pub fn round_clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// A box carrying a blend weight, produced by [`mixup`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedBox {
    pub bbox: BBox,
    pub weight: f64,
}

/// Blends two equally-sized images pixel-wise as `lambda*a + (1-lambda)*b`
/// and unions their boxes, tagged with the blend weights.
pub fn mixup(
    a: &Image,
    boxes_a: &[BBox],
    b: &Image,
    boxes_b: &[BBox],
    lambda: f64,
) -> Result<(Image, Vec<WeightedBox>), ImageOpsError> {
    if a.width != b.width || a.height != b.height {
        return Err(ImageOpsError::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(ImageOpsError::InvalidLambda(lambda));
    }
    let complement = 1.0 - lambda;
    let rows = crate::parallel::map_indexed(a.height, |y| {
        let start = 3 * y * a.width;
        let end = start + 3 * a.width;
        a.data[start..end]
            .iter()
            .zip(&b.data[start..end])
            .map(|(&pa, &pb)| round_clamp_u8(lambda * f64::from(pa) + complement * f64::from(pb)))
            .collect::<Vec<u8>>()
    });
    let image = Image::new(a.width, a.height, rows.concat())?;
    let mut boxes: Vec<WeightedBox> = boxes_a
        .iter()
        .map(|&bbox| WeightedBox {
            bbox,
            weight: lambda,
        })
        .collect();
    boxes.extend(boxes_b.iter().map(|&bbox| WeightedBox {
        bbox,
        weight: complement,
    }));
    Ok((image, boxes))
}

/// Draws a blend coefficient from `Beta(alpha, alpha)`, deterministically for
/// a given seed.
pub fn sample_mixup_lambda(alpha: f64, seed: u64) -> Result<f64, ImageOpsError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ImageOpsError::InvalidAlpha(alpha));
    }
    let beta = Beta::new(alpha, alpha).map_err(|_| ImageOpsError::InvalidAlpha(alpha))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(beta.sample(&mut rng))
}

/// Photometric adjustment modes for [`color_adjust`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColorAdjust {
    /// Add `delta` to every channel, clamped.
    RgbShift { delta: f64 },
    /// Shift hue (degrees, wrapping), saturation, and value in HSV space.
    HsvShift { dh: f64, ds: f64, dv: f64 },
    /// Apply `alpha * p + beta * 255`, clamped.
    BrightnessContrast { beta: f64, alpha: f64 },
}

/// Hexcone RGB -> HSV with H in [0,360) and S, V in [0,1].
fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / delta).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h.rem_euclid(360.0), s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

/// Applies one photometric adjustment to every pixel.
pub fn color_adjust(img: &Image, mode: ColorAdjust) -> Image {
    let rows = crate::parallel::map_indexed(img.height, |y| {
        let mut row = Vec::with_capacity(3 * img.width);
        for x in 0..img.width {
            let [r, g, b] = img.pixel(x, y);
            let out = match mode {
                ColorAdjust::RgbShift { delta } => [
                    round_clamp_u8(f64::from(r) + delta),
                    round_clamp_u8(f64::from(g) + delta),
                    round_clamp_u8(f64::from(b) + delta),
                ],
                ColorAdjust::HsvShift { dh, ds, dv } => {
                    let (h, s, v) =
                        rgb_to_hsv(f64::from(r) / 255.0, f64::from(g) / 255.0, f64::from(b) / 255.0);
                    let (nr, ng, nb) = hsv_to_rgb(
                        (h + dh).rem_euclid(360.0),
                        (s + ds).clamp(0.0, 1.0),
                        (v + dv).clamp(0.0, 1.0),
                    );
                    [
                        round_clamp_u8(nr * 255.0),
                        round_clamp_u8(ng * 255.0),
                        round_clamp_u8(nb * 255.0),
                    ]
                }
                ColorAdjust::BrightnessContrast { beta, alpha } => [
                    round_clamp_u8(alpha * f64::from(r) + beta * 255.0),
                    round_clamp_u8(alpha * f64::from(g) + beta * 255.0),
                    round_clamp_u8(alpha * f64::from(b) + beta * 255.0),
                ],
            };
            row.extend_from_slice(&out);
        }
        row
    });
    Image::new(img.width, img.height, rows.concat()).expect("dimensions unchanged")
}

/// Minkowski-norm color constancy: estimates a per-channel illuminant
/// `e_c = (mean((I_c/255)^p))^(1/p)`, then scales each channel by
/// `mean(e)/e_c`. An all-black channel keeps a unit gain.
pub fn shades_of_gray(img: &Image, p: f64) -> Result<Image, ImageOpsError> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(ImageOpsError::InvalidParameter(format!(
            "norm order must be >= 1, got {p}"
        )));
    }
    let n = (img.width * img.height) as f64;
    let mut illuminant = [0.0f64; 3];
    for (c, e) in illuminant.iter_mut().enumerate() {
        let sum: f64 = img.data[c..]
            .iter()
            .step_by(3)
            .map(|&v| (f64::from(v) / 255.0).powf(p))
            .sum();
        *e = (sum / n).powf(1.0 / p);
    }
    let mean_e = illuminant.iter().sum::<f64>() / 3.0;
    let gains: Vec<f64> = illuminant
        .iter()
        .map(|&e| if e > 0.0 { mean_e / e } else { 1.0 })
        .collect();
    let rows = crate::parallel::map_indexed(img.height, |y| {
        let start = 3 * y * img.width;
        img.data[start..start + 3 * img.width]
            .iter()
            .enumerate()
            .map(|(i, &v)| round_clamp_u8(f64::from(v) * gains[i % 3]))
            .collect::<Vec<u8>>()
    });
    Image::new(img.width, img.height, rows.concat())
}
