//! Convolution-based blurs: separable Gaussian, per-channel median, and
//! directional line (motion) blur. All use reflect padding and normalized
//! kernels, so constant images are fixpoints.

use super::{round_clamp_u8, Image, ImageOpsError};
use crate::parallel;

/// Reflects an out-of-range index back into `[0, n)` (symmetric padding:
/// -1 -> 0, -2 -> 1, n -> n-1).
#[inline]
fn reflect(i: i64, n: i64) -> usize {
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Normalized 1D Gaussian weights for `gaussian_blur`. Sigma follows the
/// conventional size coupling `0.3*((size-1)/2 - 1) + 0.8`.
pub fn gaussian_kernel(size: usize) -> Result<Vec<f64>, ImageOpsError> {
    if size < 3 || size % 2 == 0 {
        return Err(ImageOpsError::InvalidParameter(format!(
            "kernel size must be odd and >= 3, got {size}"
        )));
    }
    let sigma = 0.3 * ((size - 1) as f64 / 2.0 - 1.0) + 0.8;
    let center = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_blur(img: &Image, size: usize) -> Result<Image, ImageOpsError> {
    let kernel = gaussian_kernel(size)?;
    let radius = (size / 2) as i64;
    let (w, h) = (img.width(), img.height());

    // horizontal pass into a float buffer
    let horizontal: Vec<Vec<f64>> = parallel::map_indexed(h, |y| {
        let mut row = vec![0.0f64; 3 * w];
        for x in 0..w {
            for (k, &weight) in kernel.iter().enumerate() {
                let sx = reflect(x as i64 + k as i64 - radius, w as i64);
                let p = img.pixel(sx, y);
                for c in 0..3 {
                    row[3 * x + c] += weight * f64::from(p[c]);
                }
            }
        }
        row
    });

    // vertical pass, rounding once at the end
    let rows: Vec<Vec<u8>> = parallel::map_indexed(h, |y| {
        let mut row = vec![0u8; 3 * w];
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, &weight) in kernel.iter().enumerate() {
                    let sy = reflect(y as i64 + k as i64 - radius, h as i64);
                    acc += weight * horizontal[sy][3 * x + c];
                }
                row[3 * x + c] = round_clamp_u8(acc);
            }
        }
        row
    });
    Image::new(w, h, rows.concat())
}

/// Per-channel median filter with reflect padding.
pub fn median_blur(img: &Image, size: usize) -> Result<Image, ImageOpsError> {
    if size < 3 || size % 2 == 0 {
        return Err(ImageOpsError::InvalidParameter(format!(
            "kernel size must be odd and >= 3, got {size}"
        )));
    }
    let radius = (size / 2) as i64;
    let (w, h) = (img.width(), img.height());
    let rows: Vec<Vec<u8>> = parallel::map_indexed(h, |y| {
        let mut row = vec![0u8; 3 * w];
        let mut window = Vec::with_capacity(size * size);
        for x in 0..w {
            for c in 0..3 {
                window.clear();
                for dy in -radius..=radius {
                    let sy = reflect(y as i64 + dy, h as i64);
                    for dx in -radius..=radius {
                        let sx = reflect(x as i64 + dx, w as i64);
                        window.push(img.pixel(sx, sy)[c]);
                    }
                }
                window.sort_unstable();
                row[3 * x + c] = window[window.len() / 2];
            }
        }
        row
    });
    Image::new(w, h, rows.concat())
}

/// Builds the set of kernel cells crossed by a centered line of `length`
/// pixels at `angle_deg` (0 = horizontal, counter-clockwise), each weighted
/// `1/count`.
fn line_kernel(length: usize, angle_deg: f64) -> Vec<(i64, i64, f64)> {
    let theta = angle_deg.to_radians();
    let (sin, cos) = (theta.sin(), theta.cos());
    let half = (length as f64 - 1.0) / 2.0;
    let mut cells: Vec<(i64, i64)> = Vec::new();
    for i in 0..length {
        let t = i as f64 - half;
        // y grows downward in raster space
        let x = (t * cos).round() as i64;
        let y = (-t * sin).round() as i64;
        if !cells.contains(&(x, y)) {
            cells.push((x, y));
        }
    }
    let weight = 1.0 / cells.len() as f64;
    cells.into_iter().map(|(x, y)| (x, y, weight)).collect()
}

/// Directional blur along a line kernel, simulating camera motion. Length 1
/// is the identity.
pub fn motion_blur(img: &Image, length: usize, angle_deg: f64) -> Result<Image, ImageOpsError> {
    if length < 1 {
        return Err(ImageOpsError::InvalidParameter(
            "blur length must be at least 1".into(),
        ));
    }
    let kernel = line_kernel(length, angle_deg);
    let (w, h) = (img.width(), img.height());
    let rows: Vec<Vec<u8>> = parallel::map_indexed(h, |y| {
        let mut row = vec![0u8; 3 * w];
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for &(dx, dy, weight) in &kernel {
                let sx = reflect(x as i64 + dx, w as i64);
                let sy = reflect(y as i64 + dy, h as i64);
                let p = img.pixel(sx, sy);
                for c in 0..3 {
                    acc[c] += weight * f64::from(p[c]);
                }
            }
            for c in 0..3 {
                row[3 * x + c] = round_clamp_u8(acc[c]);
            }
        }
        row
    });
    Image::new(w, h, rows.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_kernel_is_normalized() {
        for size in [3, 5, 7, 9] {
            let k = gaussian_kernel(size).unwrap();
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(gaussian_kernel(4).is_err());
        assert!(gaussian_kernel(1).is_err());
    }

    #[test]
    fn constant_image_is_a_blur_fixpoint() {
        let img = Image::filled(17, 11, [200, 30, 99]).unwrap();
        assert_eq!(gaussian_blur(&img, 3).unwrap(), img);
        assert_eq!(median_blur(&img, 3).unwrap(), img);
        assert_eq!(motion_blur(&img, 7, 30.0).unwrap(), img);
    }

    #[test]
    fn median_of_one_through_nine_is_five() {
        let data: Vec<u8> = (1..=9).flat_map(|v| [v, v, v]).collect();
        let img = Image::new(3, 3, data).unwrap();
        let out = median_blur(&img, 3).unwrap();
        assert_eq!(out.pixel(1, 1), [5, 5, 5]);
    }

    #[test]
    fn gaussian_blur_smooths_towards_neighbors() {
        let mut img = Image::filled(9, 9, [0, 0, 0]).unwrap();
        img.set_pixel(4, 4, [255, 255, 255]);
        let out = gaussian_blur(&img, 3).unwrap();
        assert!(out.pixel(4, 4)[0] < 255);
        assert!(out.pixel(3, 4)[0] > 0);
        // total intensity is preserved by the normalized kernel
        let total_in: u64 = img.data().iter().map(|&v| u64::from(v)).sum();
        let total_out: u64 = out.data().iter().map(|&v| u64::from(v)).sum();
        assert!((total_in as i64 - total_out as i64).abs() < 30);
    }

    #[test]
    fn unit_length_motion_blur_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(127);
        let img = super::super::tests::random_image(&mut rng, 13, 7);
        assert_eq!(motion_blur(&img, 1, 45.0).unwrap(), img);
    }

    #[test]
    fn horizontal_motion_blur_spreads_an_impulse() {
        let mut img = Image::filled(9, 9, [0, 0, 0]).unwrap();
        img.set_pixel(4, 4, [255, 255, 255]);
        let out = motion_blur(&img, 3, 0.0).unwrap();
        // direct convolution oracle: three cells at 1/3 intensity
        let expected = round_clamp_u8(255.0 / 3.0);
        for x in [3, 4, 5] {
            assert_eq!(out.pixel(x, 4)[0], expected);
        }
        assert_eq!(out.pixel(6, 4)[0], 0);
        assert_eq!(out.pixel(4, 3)[0], 0);
    }

    #[test]
    fn vertical_motion_blur_spreads_an_impulse_vertically() {
        let mut img = Image::filled(9, 9, [0, 0, 0]).unwrap();
        img.set_pixel(4, 4, [90, 90, 90]);
        let out = motion_blur(&img, 3, 90.0).unwrap();
        for y in [3, 4, 5] {
            assert_eq!(out.pixel(4, y)[0], 30);
        }
        assert_eq!(out.pixel(3, 4)[0], 0);
    }

    #[test]
    fn line_kernel_cells_are_unit_normalized() {
        for (length, angle) in [(3, 0.0), (5, 45.0), (9, 120.0), (7, 90.0)] {
            let k = line_kernel(length, angle);
            let total: f64 = k.iter().map(|&(_, _, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
