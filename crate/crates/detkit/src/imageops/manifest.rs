//! Augmentation manifests: a CSV pairing input images with operations,
//! parameters, and seeds, so augmentation runs are fully reproducible.
//!
//! Format: `input,input2,output,op,params,seed` where `params` holds
//! space-separated `key=value` pairs and `input2` is only used by `mixup`.

use std::collections::HashMap;
use std::path::Path;

use super::{
    color_adjust, denoise_nlm, flip_or_affine, gaussian_blur, median_blur, mixup, motion_blur,
    sample_mixup_lambda, shades_of_gray, ColorAdjust, Image, ImageOpsError, WeightedBox,
};
use crate::geometry::{AffineMap, BBox};

/// One augmentation step.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentOp {
    /// Blend with a second image; `lambda` fixed or sampled from
    /// `Beta(alpha, alpha)` with the row seed.
    Mixup { lambda: Option<f64>, alpha: f64 },
    MotionBlur { length: usize, angle: f64 },
    GaussianBlur { size: usize },
    MedianBlur { size: usize },
    RgbShift { delta: f64 },
    HsvShift { dh: f64, ds: f64, dv: f64 },
    BrightnessContrast { beta: f64, alpha: f64 },
    HFlip,
    VFlip,
    Rotate { degrees: f64 },
    Scale { sx: f64, sy: f64 },
    Affine { a: f64, b: f64, tx: f64, c: f64, d: f64, ty: f64 },
    ShadesOfGray { p: f64 },
    DenoiseNlm { h: f64, h_color: f64, template: usize, search: usize },
}

/// One parsed manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub input: String,
    pub input2: Option<String>,
    pub output: String,
    pub op: AugmentOp,
    pub seed: u64,
}

fn row_err(path: &Path, line: u64, message: impl Into<String>) -> ImageOpsError {
    ImageOpsError::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: {}", message.into()),
    }
}

struct Params<'a> {
    map: HashMap<&'a str, &'a str>,
}

impl<'a> Params<'a> {
    fn parse(field: &'a str) -> Result<Self, String> {
        let mut map = HashMap::new();
        for part in field.split_whitespace() {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("malformed parameter '{part}'"))?;
            map.insert(k, v);
        }
        Ok(Self { map })
    }

    fn f64(&self, key: &str, default: Option<f64>) -> Result<f64, String> {
        match self.map.get(key) {
            Some(v) => v.parse().map_err(|_| format!("non-numeric {key}: '{v}'")),
            None => default.ok_or_else(|| format!("missing parameter '{key}'")),
        }
    }

    fn usize(&self, key: &str, default: Option<usize>) -> Result<usize, String> {
        match self.map.get(key) {
            Some(v) => v.parse().map_err(|_| format!("non-numeric {key}: '{v}'")),
            None => default.ok_or_else(|| format!("missing parameter '{key}'")),
        }
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>, String> {
        self.map
            .get(key)
            .map(|v| v.parse().map_err(|_| format!("non-numeric {key}: '{v}'")))
            .transpose()
    }
}

fn parse_op(name: &str, params: &Params) -> Result<AugmentOp, String> {
    match name {
        "mixup" => Ok(AugmentOp::Mixup {
            lambda: params.opt_f64("lambda")?,
            alpha: params.f64("alpha", Some(1.5))?,
        }),
        "motion_blur" => Ok(AugmentOp::MotionBlur {
            length: params.usize("length", None)?,
            angle: params.f64("angle", Some(0.0))?,
        }),
        "gaussian_blur" => Ok(AugmentOp::GaussianBlur {
            size: params.usize("size", Some(3))?,
        }),
        "median_blur" => Ok(AugmentOp::MedianBlur {
            size: params.usize("size", Some(3))?,
        }),
        "rgb_shift" => Ok(AugmentOp::RgbShift {
            delta: params.f64("delta", None)?,
        }),
        "hsv_shift" => Ok(AugmentOp::HsvShift {
            dh: params.f64("dh", Some(0.0))?,
            ds: params.f64("ds", Some(0.0))?,
            dv: params.f64("dv", Some(0.0))?,
        }),
        "brightness_contrast" => Ok(AugmentOp::BrightnessContrast {
            beta: params.f64("beta", Some(0.0))?,
            alpha: params.f64("alpha", Some(1.0))?,
        }),
        "hflip" => Ok(AugmentOp::HFlip),
        "vflip" => Ok(AugmentOp::VFlip),
        "rotate" => Ok(AugmentOp::Rotate {
            degrees: params.f64("degrees", None)?,
        }),
        "scale" => {
            let sx = params.f64("sx", None)?;
            Ok(AugmentOp::Scale {
                sx,
                sy: params.f64("sy", Some(sx))?,
            })
        }
        "affine" => Ok(AugmentOp::Affine {
            a: params.f64("a", None)?,
            b: params.f64("b", Some(0.0))?,
            tx: params.f64("tx", Some(0.0))?,
            c: params.f64("c", Some(0.0))?,
            d: params.f64("d", None)?,
            ty: params.f64("ty", Some(0.0))?,
        }),
        "shades_of_gray" => Ok(AugmentOp::ShadesOfGray {
            p: params.f64("p", Some(6.0))?,
        }),
        "denoise_nlm" => Ok(AugmentOp::DenoiseNlm {
            h: params.f64("h", Some(1.0))?,
            h_color: params.f64("hcolor", Some(1.0))?,
            template: params.usize("template", Some(7))?,
            search: params.usize("search", Some(21))?,
        }),
        other => Err(format!("unknown operation '{other}'")),
    }
}

/// Loads and parses a manifest CSV.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>, ImageOpsError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| ImageOpsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| row_err(path, 1, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let expected = ["input", "input2", "output", "op", "params", "seed"];
    if headers != expected {
        return Err(row_err(
            path,
            1,
            format!("expected header '{}', found '{}'", expected.join(","), headers.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| row_err(path, 0, e.to_string()))?;
        let line = record.position().map_or(0, csv::Position::line);
        if record.len() != expected.len() {
            return Err(row_err(
                path,
                line,
                format!("expected {} fields, found {}", expected.len(), record.len()),
            ));
        }
        let params = Params::parse(&record[4]).map_err(|m| row_err(path, line, m))?;
        let op = parse_op(record[3].trim(), &params).map_err(|m| row_err(path, line, m))?;
        let input2 = record[1].trim();
        if matches!(op, AugmentOp::Mixup { .. }) && input2.is_empty() {
            return Err(row_err(path, line, "mixup requires input2"));
        }
        let seed: u64 = record[5]
            .trim()
            .parse()
            .map_err(|_| row_err(path, line, format!("non-numeric seed: '{}'", &record[5])))?;
        rows.push(ManifestRow {
            input: record[0].trim().to_string(),
            input2: (!input2.is_empty()).then(|| input2.to_string()),
            output: record[2].trim().to_string(),
            op,
            seed,
        });
    }
    Ok(rows)
}

/// Applies one operation. `input2`/`boxes2` are only consulted by `mixup`.
/// Returns the output image and its boxes: geometric ops map and clip them,
/// mixup unions both sets with blend weights, photometric ops pass them
/// through at weight 1.
pub fn apply_op(
    op: &AugmentOp,
    input: &Image,
    input2: Option<&Image>,
    boxes: &[BBox],
    boxes2: &[BBox],
    seed: u64,
) -> Result<(Image, Vec<WeightedBox>), ImageOpsError> {
    let unit_boxes = |bs: &[BBox]| -> Vec<WeightedBox> {
        bs.iter()
            .map(|&bbox| WeightedBox { bbox, weight: 1.0 })
            .collect()
    };
    let (w, h) = (input.width() as f64, input.height() as f64);
    match op {
        AugmentOp::Mixup { lambda, alpha } => {
            let other = input2.ok_or_else(|| {
                ImageOpsError::InvalidParameter("mixup requires a second image".into())
            })?;
            let lambda = match lambda {
                Some(l) => *l,
                None => sample_mixup_lambda(*alpha, seed)?,
            };
            mixup(input, boxes, other, boxes2, lambda)
        }
        AugmentOp::MotionBlur { length, angle } => {
            Ok((motion_blur(input, *length, *angle)?, unit_boxes(boxes)))
        }
        AugmentOp::GaussianBlur { size } => {
            Ok((gaussian_blur(input, *size)?, unit_boxes(boxes)))
        }
        AugmentOp::MedianBlur { size } => Ok((median_blur(input, *size)?, unit_boxes(boxes))),
        AugmentOp::RgbShift { delta } => Ok((
            color_adjust(input, ColorAdjust::RgbShift { delta: *delta }),
            unit_boxes(boxes),
        )),
        AugmentOp::HsvShift { dh, ds, dv } => Ok((
            color_adjust(
                input,
                ColorAdjust::HsvShift {
                    dh: *dh,
                    ds: *ds,
                    dv: *dv,
                },
            ),
            unit_boxes(boxes),
        )),
        AugmentOp::BrightnessContrast { beta, alpha } => Ok((
            color_adjust(
                input,
                ColorAdjust::BrightnessContrast {
                    beta: *beta,
                    alpha: *alpha,
                },
            ),
            unit_boxes(boxes),
        )),
        AugmentOp::HFlip => {
            let (img, bs) = flip_or_affine(input, boxes, &AffineMap::hflip(w))?;
            Ok((img, unit_boxes(&bs)))
        }
        AugmentOp::VFlip => {
            let (img, bs) = flip_or_affine(input, boxes, &AffineMap::vflip(h))?;
            Ok((img, unit_boxes(&bs)))
        }
        AugmentOp::Rotate { degrees } => {
            let map = AffineMap::rotation_about(*degrees, w / 2.0, h / 2.0)?;
            let (img, bs) = flip_or_affine(input, boxes, &map)?;
            Ok((img, unit_boxes(&bs)))
        }
        AugmentOp::Scale { sx, sy } => {
            let map = AffineMap::scale_about(*sx, *sy, w / 2.0, h / 2.0)?;
            let (img, bs) = flip_or_affine(input, boxes, &map)?;
            Ok((img, unit_boxes(&bs)))
        }
        AugmentOp::Affine { a, b, tx, c, d, ty } => {
            let map = AffineMap::new(*a, *b, *tx, *c, *d, *ty)?;
            let (img, bs) = flip_or_affine(input, boxes, &map)?;
            Ok((img, unit_boxes(&bs)))
        }
        AugmentOp::ShadesOfGray { p } => Ok((shades_of_gray(input, *p)?, unit_boxes(boxes))),
        AugmentOp::DenoiseNlm {
            h: strength,
            h_color,
            template,
            search,
        } => Ok((
            denoise_nlm(input, *strength, *h_color, *template, *search)?,
            unit_boxes(boxes),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn manifest_parses_ops_params_and_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        fs::write(
            &path,
            "input,input2,output,op,params,seed\n\
             a.ppm,,a_blur.ppm,motion_blur,length=9 angle=45,0\n\
             a.ppm,b.ppm,ab.ppm,mixup,alpha=1.5,7\n\
             a.ppm,,a_flip.ppm,hflip,,0\n\
             a.ppm,,a_sog.ppm,shades_of_gray,,0\n",
        )
        .unwrap();
        let rows = load_manifest(&path).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(
            rows[0].op,
            AugmentOp::MotionBlur {
                length: 9,
                angle: 45.0
            }
        );
        assert_eq!(
            rows[1],
            ManifestRow {
                input: "a.ppm".into(),
                input2: Some("b.ppm".into()),
                output: "ab.ppm".into(),
                op: AugmentOp::Mixup {
                    lambda: None,
                    alpha: 1.5
                },
                seed: 7,
            }
        );
        assert_eq!(rows[3].op, AugmentOp::ShadesOfGray { p: 6.0 });
    }

    #[test]
    fn manifest_rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        fs::write(
            &path,
            "input,input2,output,op,params,seed\na.ppm,,out.ppm,warp_drive,,0\n",
        )
        .unwrap();
        assert!(load_manifest(&path).is_err());

        fs::write(
            &path,
            "input,input2,output,op,params,seed\na.ppm,,out.ppm,mixup,lambda=0.5,0\n",
        )
        .unwrap();
        assert!(load_manifest(&path).is_err(), "mixup without input2");

        fs::write(
            &path,
            "input,input2,output,op,params,seed\na.ppm,,out.ppm,rotate,,0\n",
        )
        .unwrap();
        assert!(load_manifest(&path).is_err(), "rotate without degrees");
    }

    #[test]
    fn apply_op_routes_boxes() {
        let img = Image::filled(100, 50, [10, 10, 10]).unwrap();
        let boxes = vec![BBox::new(10.0, 10.0, 20.0, 20.0).unwrap()];

        let (out, bs) = apply_op(&AugmentOp::HFlip, &img, None, &boxes, &[], 0).unwrap();
        assert_eq!(out, img);
        assert_eq!(bs[0].bbox, BBox::new(80.0, 10.0, 90.0, 20.0).unwrap());
        assert_eq!(bs[0].weight, 1.0);

        let other = Image::filled(100, 50, [30, 30, 30]).unwrap();
        let b2 = vec![BBox::new(0.0, 0.0, 5.0, 5.0).unwrap()];
        let op = AugmentOp::Mixup {
            lambda: Some(0.25),
            alpha: 1.5,
        };
        let (out, bs) = apply_op(&op, &img, Some(&other), &boxes, &b2, 0).unwrap();
        assert_eq!(out.pixel(0, 0), [25, 25, 25]);
        assert_eq!(bs.len(), 2);
        assert_eq!(bs[0].weight, 0.25);
        assert_eq!(bs[1].weight, 0.75);
    }

    #[test]
    fn sampled_mixup_lambda_is_seed_deterministic() {
        let img = Image::filled(8, 8, [100, 100, 100]).unwrap();
        let other = Image::filled(8, 8, [200, 200, 200]).unwrap();
        let op = AugmentOp::Mixup {
            lambda: None,
            alpha: 1.5,
        };
        let (a, _) = apply_op(&op, &img, Some(&other), &[], &[], 42).unwrap();
        let (b, _) = apply_op(&op, &img, Some(&other), &[], &[], 42).unwrap();
        assert_eq!(a, b);
    }
}
