//! Patch-based denoising: weighted averaging over a search window, with
//! patch distances measured separately on luminance and chroma.

use super::{round_clamp_u8, Image, ImageOpsError};
use crate::parallel;

fn rgb_to_ycbcr(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    (y, cb, cr)
}

fn ycbcr_to_rgb(y: f64, cb: f64, cr: f64) -> (f64, f64, f64) {
    let r = y + 1.402 * (cr - 128.0);
    let g = y - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0);
    let b = y + 1.772 * (cb - 128.0);
    (r, g, b)
}

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

/// Builds a luminance/chroma plane padded by `pad` on each side with
/// reflected borders.
fn padded_planes(img: &Image, pad: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, usize) {
    let (w, h) = (img.width(), img.height());
    let pw = w + 2 * pad;
    let ph = h + 2 * pad;
    let mut yp = vec![0.0; pw * ph];
    let mut cbp = vec![0.0; pw * ph];
    let mut crp = vec![0.0; pw * ph];
    for py in 0..ph {
        let sy = reflect(py as i64 - pad as i64, h as i64);
        for px in 0..pw {
            let sx = reflect(px as i64 - pad as i64, w as i64);
            let [r, g, b] = img.pixel(sx, sy);
            let (y, cb, cr) = rgb_to_ycbcr(f64::from(r), f64::from(g), f64::from(b));
            let i = py * pw + px;
            yp[i] = y;
            cbp[i] = cb;
            crp[i] = cr;
        }
    }
    (yp, cbp, crp, pw)
}

/// Non-local weighted averaging over a `search x search` window of candidate
/// patches of size `template x template`. Weights are
/// `exp(-d2/h^2)` with `d2` the mean squared patch difference, taken on the
/// luminance plane for `h` and on the two chroma planes for `h_color` (no
/// noise-level offset is subtracted). Constant images are fixpoints.
pub fn denoise_nlm(
    img: &Image,
    h: f64,
    h_color: f64,
    template: usize,
    search: usize,
) -> Result<Image, ImageOpsError> {
    if template % 2 == 0 || search % 2 == 0 {
        return Err(ImageOpsError::InvalidParameter(format!(
            "template ({template}) and search ({search}) sizes must be odd"
        )));
    }
    if template > search {
        return Err(ImageOpsError::InvalidParameter(format!(
            "template size {template} exceeds search size {search}"
        )));
    }
    if !(h > 0.0) || !(h_color > 0.0) {
        return Err(ImageOpsError::InvalidParameter(
            "filter strengths must be positive".into(),
        ));
    }
    let (w, ih) = (img.width(), img.height());
    let t_rad = template / 2;
    let s_rad = search / 2;
    let (yp, cbp, crp, pw) = padded_planes(img, t_rad);
    let patch_area = (template * template) as f64;
    let inv_h2 = 1.0 / (h * h);
    let inv_hc2 = 1.0 / (h_color * h_color);

    let rows: Vec<Vec<u8>> = parallel::map_indexed(ih, |y| {
        let mut row = vec![0u8; 3 * w];
        for x in 0..w {
            let sy_lo = y.saturating_sub(s_rad);
            let sy_hi = (y + s_rad).min(ih - 1);
            let sx_lo = x.saturating_sub(s_rad);
            let sx_hi = (x + s_rad).min(w - 1);
            let mut acc_y = 0.0;
            let mut acc_cb = 0.0;
            let mut acc_cr = 0.0;
            let mut sum_wy = 0.0;
            let mut sum_wc = 0.0;
            for sy in sy_lo..=sy_hi {
                for sx in sx_lo..=sx_hi {
                    let mut dy2 = 0.0;
                    let mut dc2 = 0.0;
                    for dj in 0..template {
                        let a = (y + dj) * pw + x;
                        let b = (sy + dj) * pw + sx;
                        for di in 0..template {
                            let d = yp[a + di] - yp[b + di];
                            dy2 += d * d;
                            let d = cbp[a + di] - cbp[b + di];
                            dc2 += d * d;
                            let d = crp[a + di] - crp[b + di];
                            dc2 += d * d;
                        }
                    }
                    dy2 /= patch_area;
                    dc2 /= 2.0 * patch_area;
                    let wy = (-dy2 * inv_h2).exp();
                    let wc = (-dc2 * inv_hc2).exp();
                    let center = (sy + t_rad) * pw + sx + t_rad;
                    acc_y += wy * yp[center];
                    acc_cb += wc * cbp[center];
                    acc_cr += wc * crp[center];
                    sum_wy += wy;
                    sum_wc += wc;
                }
            }
            let (r, g, b) = ycbcr_to_rgb(acc_y / sum_wy, acc_cb / sum_wc, acc_cr / sum_wc);
            row[3 * x] = round_clamp_u8(r);
            row[3 * x + 1] = round_clamp_u8(g);
            row[3 * x + 2] = round_clamp_u8(b);
        }
        row
    });
    Image::new(w, ih, rows.concat())
}
