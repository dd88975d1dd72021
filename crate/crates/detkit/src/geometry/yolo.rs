//! Grid-cell offset encoding for anchor-based detectors.

use super::{BBox, GeometryError};

/// Raw network-space box offsets relative to a grid cell and an anchor prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoloOffsets {
    pub tx: f64,
    pub ty: f64,
    pub tw: f64,
    pub th: f64,
    /// Grid cell column offset from the top-left of the image.
    pub cellx: u32,
    /// Grid cell row offset from the top-left of the image.
    pub celly: u32,
    /// Anchor prior width in pixels.
    pub pw: f64,
    /// Anchor prior height in pixels.
    pub ph: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Decodes offsets into a corner box:
/// center `((sigmoid(tx) + cellx) * stride, (sigmoid(ty) + celly) * stride)`,
/// size `(pw * exp(tw), ph * exp(th))`.
pub fn decode_yolo(t: &YoloOffsets, stride: f64) -> Result<BBox, GeometryError> {
    if stride <= 0.0 {
        return Err(GeometryError::InvalidStride(stride));
    }
    if t.pw <= 0.0 || t.ph <= 0.0 {
        return Err(GeometryError::InvalidAnchor { pw: t.pw, ph: t.ph });
    }
    if !(t.tx.is_finite() && t.ty.is_finite() && t.tw.is_finite() && t.th.is_finite()) {
        return Err(GeometryError::NonFiniteOffsets {
            tx: t.tx,
            ty: t.ty,
            tw: t.tw,
            th: t.th,
        });
    }
    let bx = (sigmoid(t.tx) + f64::from(t.cellx)) * stride;
    let by = (sigmoid(t.ty) + f64::from(t.celly)) * stride;
    let bw = t.pw * t.tw.exp();
    let bh = t.ph * t.th.exp();
    BBox::new(bx - bw / 2.0, by - bh / 2.0, bx + bw / 2.0, by + bh / 2.0)
}

/// Exact inverse of [`decode_yolo`]: recovers the offsets of a box whose
/// center falls strictly inside the given grid cell.
pub fn encode_yolo(
    b: &BBox,
    cellx: u32,
    celly: u32,
    pw: f64,
    ph: f64,
    stride: f64,
) -> Result<YoloOffsets, GeometryError> {
    if stride <= 0.0 {
        return Err(GeometryError::InvalidStride(stride));
    }
    if pw <= 0.0 || ph <= 0.0 {
        return Err(GeometryError::InvalidAnchor { pw, ph });
    }
    if b.width() <= 0.0 || b.height() <= 0.0 {
        return Err(GeometryError::ZeroSizeBox);
    }
    let (cx, cy) = b.center();
    // The logistic function only reaches (0,1), so the center must sit
    // strictly inside the cell.
    let ux = cx / stride - f64::from(cellx);
    let uy = cy / stride - f64::from(celly);
    if !(ux > 0.0 && ux < 1.0 && uy > 0.0 && uy < 1.0) {
        return Err(GeometryError::CenterOutsideCell {
            cx,
            cy,
            cellx,
            celly,
        });
    }
    Ok(YoloOffsets {
        tx: logit(ux),
        ty: logit(uy),
        tw: (b.width() / pw).ln(),
        th: (b.height() / ph).ln(),
        cellx,
        celly,
        pw,
        ph,
    })
}
