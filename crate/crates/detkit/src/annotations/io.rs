//! On-disk formats: annotation/detection CSV, image-meta CSV, duplicate-pair
//! CSV, and per-image normalized label files.
//!
//! All floats are written with six decimal places, so save/load round-trips
//! are lossless at that precision.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{Annotation, Detection, DuplicatePair, ImageMeta};
use crate::geometry::{from_normalized, to_normalized, BBox, GeometryError, NormBox};

const ANNOTATION_HEADER: [&str; 5] = ["filename", "xmin", "ymin", "xmax", "ymax"];
const DETECTION_HEADER: [&str; 6] = ["filename", "xmin", "ymin", "xmax", "ymax", "score"];
const META_HEADER: [&str; 3] = ["filename", "width", "height"];
const PAIR_HEADER: [&str; 2] = ["filename_a", "filename_b"];

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: expected header '{expected}', found '{found}'")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}, line {line}: {message}")]
    Record {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("no image dimensions known for '{image_id}'")]
    MissingMeta { image_id: String },
    #[error("invalid geometry for '{image_id}'")]
    Geometry {
        image_id: String,
        #[source]
        source: GeometryError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AnnotationError + '_ {
    move |source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open_reader(path: &Path, expected: &[&str]) -> Result<csv::Reader<fs::File>, AnnotationError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers().map_err(|source| AnnotationError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != expected {
        return Err(AnnotationError::Header {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(reader)
}

fn record_err(path: &Path, line: u64, message: impl Into<String>) -> AnnotationError {
    AnnotationError::Record {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_f64(
    field: &str,
    name: &str,
    path: &Path,
    line: u64,
) -> Result<f64, AnnotationError> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| record_err(path, line, format!("non-numeric {name}: '{field}'")))
}

fn read_rows(
    path: &Path,
    expected: &[&str],
) -> Result<Vec<(u64, csv::StringRecord)>, AnnotationError> {
    let mut reader = open_reader(path, expected)?;
    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|source| AnnotationError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        if record.len() != expected.len() {
            return Err(record_err(
                path,
                line,
                format!("expected {} fields, found {}", expected.len(), record.len()),
            ));
        }
        rows.push((line, record));
    }
    Ok(rows)
}

fn parse_box(
    record: &csv::StringRecord,
    path: &Path,
    line: u64,
) -> Result<(String, BBox), AnnotationError> {
    let image_id = record[0].trim().to_string();
    if image_id.is_empty() {
        return Err(record_err(path, line, "empty filename"));
    }
    let xmin = parse_f64(&record[1], "xmin", path, line)?;
    let ymin = parse_f64(&record[2], "ymin", path, line)?;
    let xmax = parse_f64(&record[3], "xmax", path, line)?;
    let ymax = parse_f64(&record[4], "ymax", path, line)?;
    let bbox = BBox::new(xmin, ymin, xmax, ymax)
        .map_err(|e| record_err(path, line, e.to_string()))?;
    Ok((image_id, bbox))
}

/// Loads a `filename,xmin,ymin,xmax,ymax` CSV, preserving row order.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<Annotation>, AnnotationError> {
    let path = path.as_ref();
    read_rows(path, &ANNOTATION_HEADER)?
        .iter()
        .map(|(line, record)| {
            let (image_id, bbox) = parse_box(record, path, *line)?;
            Ok(Annotation { image_id, bbox })
        })
        .collect()
}

/// Loads a `filename,xmin,ymin,xmax,ymax,score` CSV, preserving row order.
pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>, AnnotationError> {
    let path = path.as_ref();
    read_rows(path, &DETECTION_HEADER)?
        .iter()
        .map(|(line, record)| {
            let (image_id, bbox) = parse_box(record, path, *line)?;
            let score = parse_f64(&record[5], "score", path, *line)?;
            if !(0.0..=1.0).contains(&score) {
                return Err(record_err(path, *line, format!("score {score} outside [0,1]")));
            }
            Ok(Detection {
                image_id,
                bbox,
                score,
            })
        })
        .collect()
}

/// Loads a `filename,width,height` CSV of image dimensions.
pub fn load_image_metas(path: impl AsRef<Path>) -> Result<Vec<ImageMeta>, AnnotationError> {
    let path = path.as_ref();
    read_rows(path, &META_HEADER)?
        .iter()
        .map(|(line, record)| {
            let image_id = record[0].trim().to_string();
            if image_id.is_empty() {
                return Err(record_err(path, *line, "empty filename"));
            }
            let parse_dim = |field: &str, name: &str| -> Result<u32, AnnotationError> {
                let v: u32 = field
                    .trim()
                    .parse()
                    .map_err(|_| record_err(path, *line, format!("non-numeric {name}: '{field}'")))?;
                if v == 0 {
                    return Err(record_err(path, *line, format!("{name} must be positive")));
                }
                Ok(v)
            };
            Ok(ImageMeta {
                image_id,
                width: parse_dim(&record[1], "width")?,
                height: parse_dim(&record[2], "height")?,
            })
        })
        .collect()
}

/// Loads a `filename_a,filename_b` CSV of duplicate-image pairs.
pub fn load_duplicate_pairs(path: impl AsRef<Path>) -> Result<Vec<DuplicatePair>, AnnotationError> {
    let path = path.as_ref();
    read_rows(path, &PAIR_HEADER)?
        .iter()
        .map(|(line, record)| {
            let a = record[0].trim().to_string();
            let b = record[1].trim().to_string();
            if a.is_empty() || b.is_empty() {
                return Err(record_err(path, *line, "empty filename"));
            }
            if a == b {
                return Err(record_err(path, *line, format!("pair '{a}' duplicates itself")));
            }
            Ok(DuplicatePair {
                image_id_a: a,
                image_id_b: b,
            })
        })
        .collect()
}

fn write_atomic_lines(path: &Path, contents: &str) -> Result<(), AnnotationError> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(contents.as_bytes()).map_err(io_err(path))?;
    Ok(())
}

/// Saves annotations as `filename,xmin,ymin,xmax,ymax` with six-decimal floats.
pub fn save_annotations(
    annots: &[Annotation],
    path: impl AsRef<Path>,
) -> Result<(), AnnotationError> {
    let mut out = String::from("filename,xmin,ymin,xmax,ymax\n");
    for a in annots {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            a.image_id, a.bbox.xmin, a.bbox.ymin, a.bbox.xmax, a.bbox.ymax
        ));
    }
    write_atomic_lines(path.as_ref(), &out)
}

/// Saves detections as `filename,xmin,ymin,xmax,ymax,score` with six-decimal floats.
pub fn save_detections(
    dets: &[Detection],
    path: impl AsRef<Path>,
) -> Result<(), AnnotationError> {
    let mut out = String::from("filename,xmin,ymin,xmax,ymax,score\n");
    for d in dets {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            d.image_id, d.bbox.xmin, d.bbox.ymin, d.bbox.xmax, d.bbox.ymax, d.score
        ));
    }
    write_atomic_lines(path.as_ref(), &out)
}

/// Saves image metadata as `filename,width,height`.
pub fn save_image_metas(
    metas: &[ImageMeta],
    path: impl AsRef<Path>,
) -> Result<(), AnnotationError> {
    let mut out = String::from("filename,width,height\n");
    for m in metas {
        out.push_str(&format!("{},{},{}\n", m.image_id, m.width, m.height));
    }
    write_atomic_lines(path.as_ref(), &out)
}

fn label_file_name(image_id: &str) -> String {
    let stem = Path::new(image_id)
        .file_stem()
        .map_or_else(|| image_id.to_string(), |s| s.to_string_lossy().into_owned());
    format!("{stem}.txt")
}

/// Writes one `<stem>.txt` per image meta with lines `0 cx cy w h` in
/// normalized coordinates. Images without boxes get an empty file.
pub fn save_yolo(
    annots: &[Annotation],
    metas: &[ImageMeta],
    dir: impl AsRef<Path>,
) -> Result<(), AnnotationError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let meta_by_id: HashMap<&str, &ImageMeta> =
        metas.iter().map(|m| (m.image_id.as_str(), m)).collect();
    let mut per_image: HashMap<&str, Vec<&BBox>> = HashMap::new();
    for a in annots {
        if !meta_by_id.contains_key(a.image_id.as_str()) {
            return Err(AnnotationError::MissingMeta {
                image_id: a.image_id.clone(),
            });
        }
        per_image.entry(a.image_id.as_str()).or_default().push(&a.bbox);
    }
    for meta in metas {
        let mut contents = String::new();
        if let Some(boxes) = per_image.get(meta.image_id.as_str()) {
            for bbox in boxes {
                let n = to_normalized(bbox, f64::from(meta.width), f64::from(meta.height))
                    .map_err(|source| AnnotationError::Geometry {
                        image_id: meta.image_id.clone(),
                        source,
                    })?;
                contents.push_str(&format!(
                    "0 {:.6} {:.6} {:.6} {:.6}\n",
                    n.cx, n.cy, n.w, n.h
                ));
            }
        }
        let path = dir.join(label_file_name(&meta.image_id));
        write_atomic_lines(&path, &contents)?;
    }
    Ok(())
}

/// Reads per-image `<stem>.txt` label files back into pixel-space annotations.
/// Every label file in `dir` must correspond to a known image meta.
pub fn load_yolo(
    dir: impl AsRef<Path>,
    metas: &[ImageMeta],
) -> Result<Vec<Annotation>, AnnotationError> {
    let dir = dir.as_ref();
    let mut stem_to_meta: HashMap<String, &ImageMeta> = HashMap::new();
    for m in metas {
        stem_to_meta.insert(label_file_name(&m.image_id), m);
    }
    let mut names: Vec<String> = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".txt") {
            names.push(name);
        }
    }
    names.sort();

    let mut out = Vec::new();
    for name in names {
        let meta = stem_to_meta
            .get(&name)
            .ok_or_else(|| AnnotationError::MissingMeta {
                image_id: name.clone(),
            })?;
        let path = dir.join(&name);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        for (i, raw) in text.lines().enumerate() {
            let line = (i + 1) as u64;
            let fields: Vec<&str> = raw.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(record_err(
                    &path,
                    line,
                    format!("expected 5 fields, found {}", fields.len()),
                ));
            }
            if fields[0] != "0" {
                return Err(record_err(
                    &path,
                    line,
                    format!("unsupported class '{}', only class 0 exists", fields[0]),
                ));
            }
            let v: Result<Vec<f64>, _> = fields[1..]
                .iter()
                .enumerate()
                .map(|(j, f)| parse_f64(f, ["cx", "cy", "w", "h"][j], &path, line))
                .collect();
            let v = v?;
            let norm = NormBox::new(v[0], v[1], v[2], v[3])
                .map_err(|e| record_err(&path, line, e.to_string()))?;
            let bbox = from_normalized(&norm, f64::from(meta.width), f64::from(meta.height));
            out.push(Annotation::new(meta.image_id.clone(), bbox));
        }
    }
    Ok(out)
}
