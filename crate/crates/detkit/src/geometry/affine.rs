//! Invertible 2D affine maps and axis-aligned box transforms.

use super::{BBox, GeometryError};

/// Row-major 2x3 matrix `[a b tx; c d ty]` mapping pixel coordinates
/// `(x, y) -> (a*x + b*y + tx, c*x + d*y + ty)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub c: f64,
    pub d: f64,
    pub ty: f64,
}

impl AffineMap {
    /// Builds a map, rejecting singular or non-finite matrices.
    pub fn new(a: f64, b: f64, tx: f64, c: f64, d: f64, ty: f64) -> Result<Self, GeometryError> {
        let det = a * d - b * c;
        if !det.is_finite() || det == 0.0 || !tx.is_finite() || !ty.is_finite() {
            return Err(GeometryError::SingularMap);
        }
        Ok(Self { a, b, tx, c, d, ty })
    }

    pub fn identity() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            tx: 0.0,
            c: 0.0,
            d: 1.0,
            ty: 0.0,
        }
    }

    /// Mirror about the vertical axis of a `width`-wide image: `x' = width - x`.
    pub fn hflip(width: f64) -> Self {
        Self {
            a: -1.0,
            b: 0.0,
            tx: width,
            c: 0.0,
            d: 1.0,
            ty: 0.0,
        }
    }

    /// Mirror about the horizontal axis of a `height`-tall image: `y' = height - y`.
    pub fn vflip(height: f64) -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            tx: 0.0,
            c: 0.0,
            d: -1.0,
            ty: height,
        }
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            tx: dx,
            c: 0.0,
            d: 1.0,
            ty: dy,
        }
    }

    /// Uniform or anisotropic scaling about a fixed point.
    pub fn scale_about(sx: f64, sy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        Self::new(sx, 0.0, cx - sx * cx, 0.0, sy, cy - sy * cy)
    }

    /// Counter-clockwise rotation (in screen coordinates, y down this appears
    /// clockwise) by `degrees` about a fixed point.
    pub fn rotation_about(degrees: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        let r = degrees.to_radians();
        let (sin, cos) = (r.sin(), r.cos());
        Self::new(
            cos,
            -sin,
            cx - cos * cx + sin * cy,
            sin,
            cos,
            cy - sin * cx - cos * cy,
        )
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a * x + self.b * y + self.tx,
            self.c * x + self.d * y + self.ty,
        )
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// The map sending every output of `self` back to its input.
    pub fn inverse(&self) -> AffineMap {
        // Constructor guaranteed det != 0.
        let det = self.determinant();
        let (ia, ib, ic, id) = (self.d / det, -self.b / det, -self.c / det, self.a / det);
        AffineMap {
            a: ia,
            b: ib,
            tx: -(ia * self.tx + ib * self.ty),
            c: ic,
            d: id,
            ty: -(ic * self.tx + id * self.ty),
        }
    }

    /// Composition applying `self` first, then `after`.
    pub fn then(&self, after: &AffineMap) -> AffineMap {
        AffineMap {
            a: after.a * self.a + after.b * self.c,
            b: after.a * self.b + after.b * self.d,
            tx: after.a * self.tx + after.b * self.ty + after.tx,
            c: after.c * self.a + after.d * self.c,
            d: after.c * self.b + after.d * self.d,
            ty: after.c * self.tx + after.d * self.ty + after.ty,
        }
    }
}

/// Maps all four corners and returns the minimal axis-aligned box containing
/// them.
pub fn transform_box(b: &BBox, m: &AffineMap) -> BBox {
    let corners = [
        m.apply(b.xmin, b.ymin),
        m.apply(b.xmax, b.ymin),
        m.apply(b.xmin, b.ymax),
        m.apply(b.xmax, b.ymax),
    ];
    let mut xmin = f64::INFINITY;
    let mut ymin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for (x, y) in corners {
        xmin = xmin.min(x);
        ymin = ymin.min(y);
        xmax = xmax.max(x);
        ymax = ymax.max(y);
    }
    BBox {
        xmin,
        ymin,
        xmax,
        ymax,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use approx::assert_abs_diff_eq;

    fn bb(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> BBox {
        BBox::new(xmin, ymin, xmax, ymax).unwrap()
    }

    #[test]
    fn singular_maps_rejected() {
        assert!(AffineMap::new(1.0, 2.0, 0.0, 2.0, 4.0, 0.0).is_err());
        assert!(AffineMap::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn identity_preserves_boxes() {
        let b = bb(3.0, 4.0, 9.0, 11.0);
        assert_eq!(transform_box(&b, &AffineMap::identity()), b);
    }

    #[test]
    fn hflip_mirrors_corners() {
        // corner-mapping oracle: x' = 100 - x swaps and mirrors the x extent
        let b = bb(10.0, 10.0, 20.0, 20.0);
        let flipped = transform_box(&b, &AffineMap::hflip(100.0));
        assert_eq!(flipped, bb(80.0, 10.0, 90.0, 20.0));
    }

    #[test]
    fn quarter_rotation_preserves_area() {
        let b = bb(10.0, 20.0, 30.0, 25.0);
        let m = AffineMap::rotation_about(90.0, 50.0, 50.0).unwrap();
        let r = transform_box(&b, &m);
        assert_abs_diff_eq!(r.area(), b.area(), epsilon = 1e-9);
    }

    #[test]
    fn inverse_round_trip_contains_original() {
        let m = AffineMap::new(0.9, 0.2, 5.0, -0.1, 1.1, -3.0).unwrap();
        let b = bb(5.0, 6.0, 20.0, 18.0);
        let round = transform_box(&transform_box(&b, &m), &m.inverse());
        // corner mapping of a rotated box can only grow, never shrink
        assert!(round.xmin <= b.xmin + 1e-6 && round.xmax >= b.xmax - 1e-6);
        assert!(round.contains(&bb(
            b.xmin + 1e-6,
            b.ymin + 1e-6,
            b.xmax - 1e-6,
            b.ymax - 1e-6
        )));

        // axis-preserving maps round-trip exactly (up to float noise)
        let m = AffineMap::scale_about(2.0, 0.5, 10.0, 10.0).unwrap();
        let round = transform_box(&transform_box(&b, &m), &m.inverse());
        assert_abs_diff_eq!(round.xmin, b.xmin, epsilon = 1e-9);
        assert_abs_diff_eq!(round.ymax, b.ymax, epsilon = 1e-9);
    }

    #[test]
    fn composition_matches_sequential_application() {
        let m1 = AffineMap::rotation_about(30.0, 4.0, 7.0).unwrap();
        let m2 = AffineMap::scale_about(1.5, 0.75, 1.0, 2.0).unwrap();
        let composed = m1.then(&m2);
        let (x1, y1) = m2.apply(m1.apply(3.0, 5.0).0, m1.apply(3.0, 5.0).1);
        let (x2, y2) = composed.apply(3.0, 5.0);
        assert_abs_diff_eq!(x1, x2, epsilon = 1e-12);
        assert_abs_diff_eq!(y1, y2, epsilon = 1e-12);
    }
}
