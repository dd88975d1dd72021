//! Geometric warps with box co-transform.

use super::{round_clamp_u8, Image, ImageOpsError};
use crate::geometry::{transform_box, AffineMap, BBox};
use crate::parallel;

/// Bilinear sample at a continuous pixel-center coordinate, edge-clamped.
#[inline]
fn sample(img: &Image, cx: f64, cy: f64, channel: usize) -> f64 {
    let u = cx - 0.5;
    let v = cy - 0.5;
    let x0 = u.floor();
    let y0 = v.floor();
    let fx = u - x0;
    let fy = v - y0;
    let clamp_x = |x: f64| (x.max(0.0) as usize).min(img.width() - 1);
    let clamp_y = |y: f64| (y.max(0.0) as usize).min(img.height() - 1);
    let (x0i, x1i) = (clamp_x(x0), clamp_x(x0 + 1.0));
    let (y0i, y1i) = (clamp_y(y0), clamp_y(y0 + 1.0));
    let p00 = f64::from(img.pixel(x0i, y0i)[channel]);
    let p10 = f64::from(img.pixel(x1i, y0i)[channel]);
    let p01 = f64::from(img.pixel(x0i, y1i)[channel]);
    let p11 = f64::from(img.pixel(x1i, y1i)[channel]);
    (1.0 - fy) * ((1.0 - fx) * p00 + fx * p10) + fy * ((1.0 - fx) * p01 + fx * p11)
}

/// Warps the raster through `map` (by inverse-mapped bilinear resampling into
/// an output of the same dimensions) and carries the boxes along via corner
/// mapping plus clipping. Boxes mapped entirely outside the raster are
/// dropped. The identity map reproduces the input bit for bit.
pub fn flip_or_affine(
    img: &Image,
    boxes: &[BBox],
    map: &AffineMap,
) -> Result<(Image, Vec<BBox>), ImageOpsError> {
    let inverse = map.inverse();
    let (w, h) = (img.width(), img.height());
    let rows: Vec<Vec<u8>> = parallel::map_indexed(h, |y| {
        let mut row = vec![0u8; 3 * w];
        for x in 0..w {
            // pixel centers sit at half-integer coordinates
            let (sx, sy) = inverse.apply(x as f64 + 0.5, y as f64 + 0.5);
            for c in 0..3 {
                row[3 * x + c] = round_clamp_u8(sample(img, sx, sy, c));
            }
        }
        row
    });
    let image = Image::new(w, h, rows.concat())?;
    let mapped = boxes
        .iter()
        .filter_map(|b| transform_box(b, map).clip(w as f64, h as f64).ok())
        .collect();
    Ok((image, mapped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bb(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> BBox {
        BBox::new(xmin, ymin, xmax, ymax).unwrap()
    }

    #[test]
    fn identity_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(137);
        let img = super::super::tests::random_image(&mut rng, 21, 13);
        let boxes = vec![bb(2.0, 3.0, 10.0, 9.0)];
        let (out, out_boxes) = flip_or_affine(&img, &boxes, &AffineMap::identity()).unwrap();
        assert_eq!(out, img);
        assert_eq!(out_boxes, boxes);
    }

    #[test]
    fn double_hflip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(139);
        let img = super::super::tests::random_image(&mut rng, 20, 10);
        let flip = AffineMap::hflip(20.0);
        let (once, _) = flip_or_affine(&img, &[], &flip).unwrap();
        assert_ne!(once, img);
        let (twice, _) = flip_or_affine(&once, &[], &flip).unwrap();
        assert_eq!(twice, img);
    }

    #[test]
    fn hflip_mirrors_pixels_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(149);
        let img = super::super::tests::random_image(&mut rng, 8, 4);
        let (out, _) = flip_or_affine(&img, &[], &AffineMap::hflip(8.0)).unwrap();
        for y in 0..4 {
            for x in 0..8 {
                assert_eq!(out.pixel(x, y), img.pixel(7 - x, y));
            }
        }
    }

    #[test]
    fn hflip_box_mapping_matches_corner_oracle() {
        let img = Image::filled(100, 50, [9, 9, 9]).unwrap();
        let boxes = vec![bb(10.0, 10.0, 20.0, 20.0)];
        let (_, mapped) = flip_or_affine(&img, &boxes, &AffineMap::hflip(100.0)).unwrap();
        assert_eq!(mapped, vec![bb(80.0, 10.0, 90.0, 20.0)]);
    }

    #[test]
    fn isometries_preserve_total_box_area() {
        let img = Image::filled(64, 64, [1, 2, 3]).unwrap();
        let boxes = vec![bb(4.0, 8.0, 20.0, 30.0), bb(40.0, 40.0, 60.0, 55.0)];
        let total: f64 = boxes.iter().map(BBox::area).sum();
        for map in [
            AffineMap::hflip(64.0),
            AffineMap::vflip(64.0),
            AffineMap::rotation_about(90.0, 32.0, 32.0).unwrap(),
        ] {
            let (_, mapped) = flip_or_affine(&img, &boxes, &map).unwrap();
            let mapped_total: f64 = mapped.iter().map(BBox::area).sum();
            assert!((mapped_total - total).abs() < 1e-6 * total);
        }
    }

    #[test]
    fn boxes_leaving_the_raster_are_dropped() {
        let img = Image::filled(32, 32, [0, 0, 0]).unwrap();
        let boxes = vec![bb(1.0, 1.0, 8.0, 8.0)];
        let shift = AffineMap::translation(100.0, 0.0);
        let (_, mapped) = flip_or_affine(&img, &boxes, &shift).unwrap();
        assert!(mapped.is_empty());
    }

    #[test]
    fn output_dimensions_never_change() {
        let img = Image::filled(10, 20, [5, 5, 5]).unwrap();
        let map = AffineMap::scale_about(0.5, 2.0, 5.0, 10.0).unwrap();
        let (out, _) = flip_or_affine(&img, &[], &map).unwrap();
        assert_eq!((out.width(), out.height()), (10, 20));
    }
}
