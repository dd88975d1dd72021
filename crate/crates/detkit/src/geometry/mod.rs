//! Axis-aligned box arithmetic: areas, IoU, merging, coordinate conversions,
//! grid-cell offset encoding, affine corner mapping, and anchor clustering.

mod affine;
mod anchors;
mod yolo;

pub use affine::{transform_box, AffineMap};
pub use anchors::cluster_anchors;
pub use yolo::{decode_yolo, encode_yolo, YoloOffsets};

use thiserror::Error;

/// Relative slack tolerated when checking boxes against image bounds.
pub const BOUNDS_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid box: xmin={xmin}, ymin={ymin}, xmax={xmax}, ymax={ymax}")]
    InvalidBox {
        xmin: f64,
        ymin: f64,
        xmax: f64,
        ymax: f64,
    },
    #[error("box ({xmin},{ymin},{xmax},{ymax}) lies outside the {width}x{height} image")]
    OutOfBounds {
        xmin: f64,
        ymin: f64,
        xmax: f64,
        ymax: f64,
        width: f64,
        height: f64,
    },
    #[error("invalid normalized box: cx={cx}, cy={cy}, w={w}, h={h}")]
    InvalidNormBox { cx: f64, cy: f64, w: f64, h: f64 },
    #[error("image dimensions must be positive, got {width}x{height}")]
    InvalidDimensions { width: f64, height: f64 },
    #[error("affine map is singular (determinant = 0)")]
    SingularMap,
    #[error("offsets must be finite: tx={tx}, ty={ty}, tw={tw}, th={th}")]
    NonFiniteOffsets { tx: f64, ty: f64, tw: f64, th: f64 },
    #[error("box center ({cx},{cy}) does not fall strictly inside grid cell ({cellx},{celly})")]
    CenterOutsideCell {
        cx: f64,
        cy: f64,
        cellx: u32,
        celly: u32,
    },
    #[error("cannot encode a zero-size box against an anchor")]
    ZeroSizeBox,
    #[error("anchor dimensions must be positive, got ({pw},{ph})")]
    InvalidAnchor { pw: f64, ph: f64 },
    #[error("stride must be positive, got {0}")]
    InvalidStride(f64),
    #[error("cannot form {k} clusters from {distinct} distinct box sizes")]
    TooFewDistinctSizes { k: usize, distinct: usize },
    #[error("k must be at least 1")]
    ZeroClusters,
}

/// Axis-aligned rectangle in continuous pixel coordinates, origin top-left,
/// x rightward, y downward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BBox {
    /// Builds a box, rejecting inverted or non-finite coordinates.
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, GeometryError> {
        let all_finite =
            xmin.is_finite() && ymin.is_finite() && xmax.is_finite() && ymax.is_finite();
        if !all_finite || xmin > xmax || ymin > ymax {
            return Err(GeometryError::InvalidBox {
                xmin,
                ymin,
                xmax,
                ymax,
            });
        }
        Ok(Self {
            xmin,
            ymin,
            xmax,
            ymax,
        })
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    /// Continuous area `(xmax - xmin) * (ymax - ymin)`; 0 for degenerate boxes.
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)
    }

    /// Area of the overlap region, 0 when the boxes are disjoint.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.xmax.min(other.xmax) - self.xmin.max(other.xmin);
        let h = self.ymax.min(other.ymax) - self.ymin.max(other.ymin);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    /// Intersection over union. Defined as 0 when the union has zero area.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    /// Smallest box containing both inputs: component-wise min/max of the corners.
    pub fn merge(&self, other: &BBox) -> BBox {
        BBox {
            xmin: self.xmin.min(other.xmin),
            ymin: self.ymin.min(other.ymin),
            xmax: self.xmax.max(other.xmax),
            ymax: self.ymax.max(other.ymax),
        }
    }

    /// Clamps the box to `[0,width] x [0,height]`. A box entirely outside the
    /// image cannot be represented and is an error.
    pub fn clip(&self, width: f64, height: f64) -> Result<BBox, GeometryError> {
        if width <= 0.0 || height <= 0.0 {
            return Err(GeometryError::InvalidDimensions { width, height });
        }
        if self.xmax < 0.0 || self.ymax < 0.0 || self.xmin > width || self.ymin > height {
            return Err(GeometryError::OutOfBounds {
                xmin: self.xmin,
                ymin: self.ymin,
                xmax: self.xmax,
                ymax: self.ymax,
                width,
                height,
            });
        }
        Ok(BBox {
            xmin: self.xmin.clamp(0.0, width),
            ymin: self.ymin.clamp(0.0, height),
            xmax: self.xmax.clamp(0.0, width),
            ymax: self.ymax.clamp(0.0, height),
        })
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.xmin <= other.xmin
            && self.ymin <= other.ymin
            && self.xmax >= other.xmax
            && self.ymax >= other.ymax
    }

    fn within_image(&self, width: f64, height: f64) -> bool {
        self.xmin >= -BOUNDS_EPS * width
            && self.ymin >= -BOUNDS_EPS * height
            && self.xmax <= width * (1.0 + BOUNDS_EPS)
            && self.ymax <= height * (1.0 + BOUNDS_EPS)
    }
}

/// Center/extent box normalized by image dimensions; the resolution-independent
/// representation used by grid detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl NormBox {
    /// Builds a normalized box, rejecting values whose extent leaves `[0,1]`
    /// by more than [`BOUNDS_EPS`].
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        let edge_ok = |v: f64| (-BOUNDS_EPS..=1.0 + BOUNDS_EPS).contains(&v);
        let ok = in_unit(cx)
            && in_unit(cy)
            && w > 0.0
            && w <= 1.0
            && h > 0.0
            && h <= 1.0
            && edge_ok(cx - w / 2.0)
            && edge_ok(cx + w / 2.0)
            && edge_ok(cy - h / 2.0)
            && edge_ok(cy + h / 2.0);
        if !ok {
            return Err(GeometryError::InvalidNormBox { cx, cy, w, h });
        }
        Ok(Self { cx, cy, w, h })
    }
}

/// Converts a pixel-space box inside a `width x height` image to normalized
/// center/extent form.
pub fn to_normalized(b: &BBox, width: f64, height: f64) -> Result<NormBox, GeometryError> {
    if width <= 0.0 || height <= 0.0 {
        return Err(GeometryError::InvalidDimensions { width, height });
    }
    if !b.within_image(width, height) {
        return Err(GeometryError::OutOfBounds {
            xmin: b.xmin,
            ymin: b.ymin,
            xmax: b.xmax,
            ymax: b.ymax,
            width,
            height,
        });
    }
    NormBox::new(
        ((b.xmin + b.xmax) / (2.0 * width)).clamp(0.0, 1.0),
        ((b.ymin + b.ymax) / (2.0 * height)).clamp(0.0, 1.0),
        (b.width() / width).min(1.0),
        (b.height() / height).min(1.0),
    )
}

/// Exact algebraic inverse of [`to_normalized`].
pub fn from_normalized(n: &NormBox, width: f64, height: f64) -> BBox {
    BBox {
        xmin: (n.cx - n.w / 2.0) * width,
        ymin: (n.cy - n.h / 2.0) * height,
        xmax: (n.cx + n.w / 2.0) * width,
        ymax: (n.cy + n.h / 2.0) * height,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bb(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> BBox {
        BBox::new(xmin, ymin, xmax, ymax).unwrap()
    }

    #[test]
    fn area_of_square_and_degenerates() {
        assert_eq!(bb(0.0, 0.0, 10.0, 10.0).area(), 100.0);
        assert_eq!(bb(5.0, 5.0, 5.0, 9.0).area(), 0.0);
        assert_eq!(bb(2.0, 3.0, 8.0, 9.0).area(), 36.0);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BBox::new(5.0, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, 5.0, 1.0, 1.0).is_err());
        assert!(BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn iou_identity_disjoint_and_partial() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&bb(20.0, 20.0, 30.0, 30.0)), 0.0);
        // intersection 25, union 175
        assert_abs_diff_eq!(a.iou(&bb(5.0, 5.0, 15.0, 15.0)), 25.0 / 175.0, epsilon = 1e-12);
    }

    #[test]
    fn iou_of_zero_area_boxes_is_zero() {
        let p = bb(3.0, 3.0, 3.0, 3.0);
        assert_eq!(p.iou(&p), 0.0);
    }

    #[test]
    fn merge_uses_outer_boundaries() {
        let a = bb(2.0, 3.0, 8.0, 9.0);
        let b = bb(5.0, 1.0, 10.0, 7.0);
        assert_eq!(a.merge(&b), bb(2.0, 1.0, 10.0, 9.0));
        assert_eq!(a.merge(&a), a);
        assert_eq!(
            bb(0.0, 0.0, 1.0, 1.0).merge(&bb(10.0, 10.0, 11.0, 11.0)),
            bb(0.0, 0.0, 11.0, 11.0)
        );
    }

    #[test]
    fn clip_clamps_and_rejects_outside() {
        assert_eq!(
            bb(-5.0, -5.0, 10.0, 10.0).clip(640.0, 480.0).unwrap(),
            bb(0.0, 0.0, 10.0, 10.0)
        );
        assert_eq!(
            bb(0.0, 0.0, 10.0, 10.0).clip(640.0, 480.0).unwrap(),
            bb(0.0, 0.0, 10.0, 10.0)
        );
        assert_eq!(
            bb(630.0, 470.0, 700.0, 500.0).clip(640.0, 480.0).unwrap(),
            bb(630.0, 470.0, 640.0, 480.0)
        );
        assert!(bb(700.0, 0.0, 710.0, 10.0).clip(640.0, 480.0).is_err());
    }

    #[test]
    fn normalization_examples() {
        let n = to_normalized(&bb(0.0, 0.0, 640.0, 480.0), 640.0, 480.0).unwrap();
        assert_eq!(n, NormBox::new(0.5, 0.5, 1.0, 1.0).unwrap());

        let n = to_normalized(&bb(160.0, 120.0, 480.0, 360.0), 640.0, 480.0).unwrap();
        assert_eq!(n, NormBox::new(0.5, 0.5, 0.5, 0.5).unwrap());

        assert!(to_normalized(&bb(0.0, 0.0, 700.0, 10.0), 640.0, 480.0).is_err());
    }

    #[test]
    fn normbox_invariants_enforced() {
        assert!(NormBox::new(0.5, 0.5, 0.0, 0.5).is_err());
        assert!(NormBox::new(1.2, 0.5, 0.1, 0.1).is_err());
        // extent would reach 1.1, well past the edge slack
        assert!(NormBox::new(0.9, 0.5, 0.4, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn merge_commutative_assoc_idempotent(
            ax in -100.0..100.0f64, ay in -100.0..100.0f64, aw in 0.0..50.0f64, ah in 0.0..50.0f64,
            bx in -100.0..100.0f64, by in -100.0..100.0f64, bw in 0.0..50.0f64, bh in 0.0..50.0f64,
            cx in -100.0..100.0f64, cy in -100.0..100.0f64, cw in 0.0..50.0f64, ch in 0.0..50.0f64,
        ) {
            let a = bb(ax, ay, ax + aw, ay + ah);
            let b = bb(bx, by, bx + bw, by + bh);
            let c = bb(cx, cy, cx + cw, cy + ch);
            prop_assert_eq!(a.merge(&b), b.merge(&a));
            prop_assert_eq!(a.merge(&b).merge(&c), a.merge(&b.merge(&c)));
            prop_assert_eq!(a.merge(&a), a);
            let m = a.merge(&b);
            prop_assert!(m.area() >= a.area().max(b.area()));
            prop_assert!(m.contains(&a) && m.contains(&b));
        }

        #[test]
        fn normalized_round_trip(
            x in 0.0..600.0f64, y in 0.0..440.0f64,
            w in 0.001..40.0f64, h in 0.001..40.0f64,
        ) {
            let b = bb(x, y, x + w, y + h);
            let n = to_normalized(&b, 640.0, 480.0).unwrap();
            let back = from_normalized(&n, 640.0, 480.0);
            prop_assert!((back.xmin - b.xmin).abs() < 1e-6 * 640.0);
            prop_assert!((back.ymin - b.ymin).abs() < 1e-6 * 480.0);
            prop_assert!((back.xmax - b.xmax).abs() < 1e-6 * 640.0);
            prop_assert!((back.ymax - b.ymax).abs() < 1e-6 * 480.0);
        }
    }

    // Larger fuzz than proptest's default case count, with a fixed seed.
    #[test]
    fn iou_symmetry_and_range_fuzz() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100_000 {
            let g = |rng: &mut rand_chacha::ChaCha8Rng| {
                let x: f64 = rng.random_range(-50.0..50.0);
                let y: f64 = rng.random_range(-50.0..50.0);
                let w: f64 = rng.random_range(0.0..30.0);
                let h: f64 = rng.random_range(0.0..30.0);
                bb(x, y, x + w, y + h)
            };
            let a = g(&mut rng);
            let b = g(&mut rng);
            let ab = a.iou(&b);
            assert_eq!(ab, b.iou(&a));
            assert!((0.0..=1.0).contains(&ab));
            if a.area() > 0.0 {
                assert_eq!(a.iou(&a), 1.0);
            }
        }
    }
}
