//! Implementations of the subcommands: thin wrappers that load the
//! documented file formats, call one library operation chain, and write the
//! result atomically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};

use detkit::annotations::{
    self, load_annotations, load_detections, load_duplicate_pairs, load_image_metas,
    load_yolo, save_annotations, save_detections, save_yolo, Annotation, Detection,
};
use detkit::ensemble::{self, FusionConfig, ScoreMode, ViewTransform};
use detkit::geometry::{cluster_anchors, AffineMap, BBox};
use detkit::imageops::{self, read_ppm, write_ppm, AugmentOp, Image, WeightedBox};
use detkit::metrics::{evaluate, threshold_sweep, ApMode, EvalReport};
use detkit::parallel;
use detkit::postprocess::{self, Decay, SoftNmsConfig};

use crate::output::{emit_text, write_atomic};
use crate::Command;

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Evaluate {
            gt,
            pred,
            iou,
            ap_mode,
            out,
        } => {
            let report = evaluate(
                &load_annotations(&gt)?,
                &load_detections(&pred)?,
                iou,
                parse_ap_mode(&ap_mode)?,
            )?;
            emit_text(out.as_deref(), &format!("{}\n", report.to_json()))?;
        }
        Command::Sweep {
            gt,
            pred,
            ious,
            ap_mode,
            out,
        } => {
            let thresholds = parse_f64_list(&ious)?;
            let reports = threshold_sweep(
                &load_annotations(&gt)?,
                &load_detections(&pred)?,
                &thresholds,
                parse_ap_mode(&ap_mode)?,
            )?;
            emit_text(out.as_deref(), &format!("{}\n", reports_json(&reports)))?;
        }
        Command::Nms { pred, iou, out } => {
            let dets = per_image(load_detections(&pred)?, |img| {
                Ok(postprocess::nms(img, iou)?)
            })?;
            save_dets(&dets, out.as_deref())?;
        }
        Command::Softnms {
            pred,
            decay,
            sigma,
            iou_trigger,
            prune,
            out,
        } => {
            let decay = match decay.as_str() {
                "gaussian" => Decay::Gaussian { sigma },
                "linear" => Decay::Linear,
                other => bail!("unknown decay family '{other}' (expected gaussian or linear)"),
            };
            let cfg = SoftNmsConfig::new(decay, iou_trigger, prune)?;
            let dets = per_image(load_detections(&pred)?, |img| {
                Ok(postprocess::soft_nms(img, &cfg)?)
            })?;
            save_dets(&dets, out.as_deref())?;
        }
        Command::Filter {
            pred,
            min_score,
            out,
        } => {
            let dets = per_image(load_detections(&pred)?, |img| {
                Ok(postprocess::filter_confidence(img, min_score)?)
            })?;
            save_dets(&dets, out.as_deref())?;
        }
        Command::RemoveOverlaps { pred, overlap, out } => {
            let dets = per_image(load_detections(&pred)?, |img| {
                Ok(postprocess::remove_overlaps(img, overlap)?)
            })?;
            save_dets(&dets, out.as_deref())?;
        }
        Command::AdaptiveSuppress { pred, thresh, out } => {
            let dets = per_image(load_detections(&pred)?, |img| {
                Ok(postprocess::adaptive_suppress(img, thresh)?)
            })?;
            save_dets(&dets, out.as_deref())?;
        }
        Command::Wbf {
            pred,
            weights,
            iou,
            score_mode,
            out,
        } => {
            let fused = run_wbf(&pred, weights.as_deref(), iou, &score_mode)?;
            save_dets(&fused, out.as_deref())?;
        }
        Command::TtaMerge {
            pred,
            view,
            nms_iou,
            out,
        } => {
            let merged = run_tta(&pred, &view, nms_iou)?;
            save_dets(&merged, out.as_deref())?;
        }
        Command::PseudoLabel {
            pred,
            min_score,
            out,
        } => {
            if !(0.0..=1.0).contains(&min_score) {
                bail!("min score must be in [0,1], got {min_score}");
            }
            let labels = annotations::pseudo_label(&load_detections(&pred)?, min_score);
            save_annots(&labels, out.as_deref())?;
        }
        Command::MergeAnnotations {
            annotations: path,
            pairs,
            out,
        } => {
            let mut annots = load_annotations(&path)?;
            if let Some(pairs) = pairs {
                let pairs = load_duplicate_pairs(&pairs)?;
                let (joined, warnings) = annotations::join_duplicates(annots, &pairs);
                for w in warnings {
                    eprintln!("warning: {w}");
                }
                annots = joined;
            }
            let merged = annotations::merge_intersecting(annots);
            save_annots(&merged, out.as_deref())?;
        }
        Command::Validate {
            annotations: path,
            metas,
        } => {
            let issues =
                annotations::validate(&load_annotations(&path)?, &load_image_metas(&metas)?);
            for issue in &issues {
                println!("{issue}");
            }
            if !issues.is_empty() {
                eprintln!("{} issue(s) found", issues.len());
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Convert {
            to,
            annotations: annots,
            yolo_dir,
            metas,
            out_dir,
            out,
        } => {
            let metas = load_image_metas(&metas)?;
            match to.as_str() {
                "yolo" => {
                    let annots = annots
                        .ok_or_else(|| anyhow!("--annotations is required with --to yolo"))?;
                    let dir = out_dir
                        .ok_or_else(|| anyhow!("--out-dir is required with --to yolo"))?;
                    let records = load_annotations(&annots)?;
                    convert_to_yolo(&records, &metas, &dir)?;
                }
                "csv" => {
                    let dir = yolo_dir
                        .ok_or_else(|| anyhow!("--yolo-dir is required with --to csv"))?;
                    let records = load_yolo(&dir, &metas)?;
                    save_annots(&records, out.as_deref())?;
                }
                other => bail!("unknown target format '{other}' (expected yolo or csv)"),
            }
        }
        Command::Augment {
            manifest,
            images_root,
            annotations: annots,
            out_annotations,
        } => {
            run_augment(&manifest, images_root, annots, out_annotations)?;
        }
        Command::Anchors {
            annotations: path,
            k,
            seed,
            out,
        } => {
            let records = load_annotations(&path)?;
            let boxes: Vec<BBox> = records.iter().map(|a| a.bbox).collect();
            let anchors = cluster_anchors(&boxes, k, seed)?;
            let mut text = String::from("width,height\n");
            for (w, h) in anchors {
                text.push_str(&format!("{w:.6},{h:.6}\n"));
            }
            emit_text(out.as_deref(), &text)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_ap_mode(s: &str) -> Result<ApMode> {
    s.parse().map_err(|e: String| anyhow!(e))
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("non-numeric list entry '{t}'"))
        })
        .collect()
}

pub fn reports_json(reports: &[EvalReport]) -> String {
    let items: Vec<String> = reports.iter().map(EvalReport::to_json).collect();
    format!("[{}]", items.join(","))
}

/// Groups detections by image, applies `f` per image (in parallel when
/// enabled), and concatenates the results in image-id order.
fn per_image<F>(dets: Vec<Detection>, f: F) -> Result<Vec<Detection>>
where
    F: Fn(&[Detection]) -> Result<Vec<Detection>> + Send + Sync,
{
    let mut groups: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        groups.entry(d.image_id.clone()).or_default().push(d);
    }
    let entries: Vec<(String, Vec<Detection>)> = groups.into_iter().collect();
    let results = parallel::map_slice(&entries, |(_, group)| f(group));
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn save_dets(dets: &[Detection], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, |tmp| Ok(save_detections(dets, tmp)?)),
        None => {
            let mut text = String::from("filename,xmin,ymin,xmax,ymax,score\n");
            for d in dets {
                text.push_str(&format!(
                    "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                    d.image_id, d.bbox.xmin, d.bbox.ymin, d.bbox.xmax, d.bbox.ymax, d.score
                ));
            }
            print!("{text}");
            Ok(())
        }
    }
}

fn save_annots(annots: &[Annotation], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, |tmp| Ok(save_annotations(annots, tmp)?)),
        None => {
            let mut text = String::from("filename,xmin,ymin,xmax,ymax\n");
            for a in annots {
                text.push_str(&format!(
                    "{},{:.6},{:.6},{:.6},{:.6}\n",
                    a.image_id, a.bbox.xmin, a.bbox.ymin, a.bbox.xmax, a.bbox.ymax
                ));
            }
            print!("{text}");
            Ok(())
        }
    }
}

fn convert_to_yolo(
    records: &[Annotation],
    metas: &[detkit::ImageMeta],
    dir: &Path,
) -> Result<()> {
    // stage into a temporary directory, then move the label files into place
    // so a failed conversion leaves nothing behind
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let staging = tempfile::tempdir_in(dir).context("creating staging directory")?;
    save_yolo(records, metas, staging.path())?;
    for entry in std::fs::read_dir(staging.path())? {
        let entry = entry?;
        std::fs::rename(entry.path(), dir.join(entry.file_name()))
            .with_context(|| format!("moving {} into place", entry.path().display()))?;
    }
    Ok(())
}

fn run_wbf(
    preds: &[PathBuf],
    weights: Option<&str>,
    iou: f64,
    score_mode: &str,
) -> Result<Vec<Detection>> {
    let score_mode = match score_mode {
        "mean" => ScoreMode::Mean,
        "mean_rescaled" => ScoreMode::MeanRescaled,
        other => bail!("unknown score mode '{other}' (expected mean or mean_rescaled)"),
    };
    let weights = match weights {
        Some(list) => parse_f64_list(list)?,
        None => vec![1.0; preds.len()],
    };
    let cfg = FusionConfig {
        iou_thresh: iou,
        weights,
        score_mode,
    };
    let models: Vec<Vec<Detection>> = preds
        .iter()
        .map(load_detections)
        .collect::<Result<_, _>>()?;

    // fuse per image over the union of image ids
    let mut per_model_groups: Vec<BTreeMap<&str, Vec<Detection>>> = Vec::new();
    let mut images: Vec<&str> = Vec::new();
    for model in &models {
        let mut groups: BTreeMap<&str, Vec<Detection>> = BTreeMap::new();
        for d in model {
            groups.entry(d.image_id.as_str()).or_default().push(d.clone());
        }
        images.extend(groups.keys().copied());
        per_model_groups.push(groups);
    }
    images.sort_unstable();
    images.dedup();

    let fused_per_image = parallel::map_slice(&images, |image| {
        let slices: Vec<Vec<Detection>> = per_model_groups
            .iter()
            .map(|g| g.get(image).cloned().unwrap_or_default())
            .collect();
        ensemble::wbf(&slices, &cfg)
    });
    let mut out = Vec::new();
    for fused in fused_per_image {
        out.extend(fused?);
    }
    Ok(out)
}

fn parse_view(spec: &str) -> Result<ViewTransform> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let nums = |s: &str| -> Result<Vec<f64>> { parse_f64_list(s) };
    let map = match kind {
        "identity" => AffineMap::identity(),
        "hflip" => {
            let v = nums(rest)?;
            if v.len() != 1 {
                bail!("hflip takes one value (the view width), got '{rest}'");
            }
            AffineMap::hflip(v[0])
        }
        "vflip" => {
            let v = nums(rest)?;
            if v.len() != 1 {
                bail!("vflip takes one value (the view height), got '{rest}'");
            }
            AffineMap::vflip(v[0])
        }
        "scale" => {
            let v = nums(rest)?;
            let (sx, sy) = match v.as_slice() {
                [s] => (*s, *s),
                [sx, sy] => (*sx, *sy),
                _ => bail!("scale takes one or two values, got '{rest}'"),
            };
            AffineMap::scale_about(sx, sy, 0.0, 0.0)?
        }
        "matrix" => {
            let v = nums(rest)?;
            if v.len() != 6 {
                bail!("matrix takes six values a,b,tx,c,d,ty, got '{rest}'");
            }
            AffineMap::new(v[0], v[1], v[2], v[3], v[4], v[5])?
        }
        other => bail!("unknown view '{other}' (expected identity, hflip, vflip, scale, matrix)"),
    };
    Ok(ViewTransform::new(map, spec))
}

fn run_tta(preds: &[PathBuf], views: &[String], nms_iou: f64) -> Result<Vec<Detection>> {
    if preds.len() != views.len() {
        bail!(
            "{} prediction files but {} views; pass one --view per --pred",
            preds.len(),
            views.len()
        );
    }
    let transforms: Vec<ViewTransform> = views
        .iter()
        .map(|v| parse_view(v))
        .collect::<Result<_>>()?;
    let all: Vec<Vec<Detection>> = preds
        .iter()
        .map(load_detections)
        .collect::<Result<_, _>>()?;

    let mut images: Vec<String> = all
        .iter()
        .flatten()
        .map(|d| d.image_id.clone())
        .collect();
    images.sort_unstable();
    images.dedup();

    let merged_per_image = parallel::map_slice(&images, |image| {
        let per_view: Vec<(ViewTransform, Vec<Detection>)> = transforms
            .iter()
            .zip(&all)
            .map(|(t, dets)| {
                let for_image: Vec<Detection> = dets
                    .iter()
                    .filter(|d| d.image_id == *image)
                    .cloned()
                    .collect();
                (t.clone(), for_image)
            })
            .collect();
        ensemble::tta_merge(&per_view, nms_iou)
    });
    let mut out = Vec::new();
    for merged in merged_per_image {
        out.extend(merged?);
    }
    Ok(out)
}

fn resolve(root: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        root.join(path)
    }
}

fn run_augment(
    manifest: &Path,
    images_root: Option<PathBuf>,
    annotations: Option<PathBuf>,
    out_annotations: Option<PathBuf>,
) -> Result<()> {
    let rows = imageops::load_manifest(manifest)?;
    let root = images_root.unwrap_or_else(|| {
        manifest
            .parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    });
    let boxes_by_image: BTreeMap<String, Vec<BBox>> = match &annotations {
        Some(path) => {
            let mut map: BTreeMap<String, Vec<BBox>> = BTreeMap::new();
            for a in load_annotations(path)? {
                map.entry(a.image_id).or_default().push(a.bbox);
            }
            map
        }
        None => BTreeMap::new(),
    };
    let empty: Vec<BBox> = Vec::new();

    // compute everything before writing anything
    let results: Vec<Result<(Image, Vec<WeightedBox>)>> = parallel::map_slice(&rows, |row| {
        let input = read_ppm(resolve(&root, &row.input))
            .with_context(|| format!("loading '{}'", row.input))?;
        let input2 = match &row.input2 {
            Some(p) => Some(read_ppm(resolve(&root, p)).with_context(|| format!("loading '{p}'"))?),
            None => None,
        };
        let boxes = boxes_by_image.get(&row.input).unwrap_or(&empty);
        let boxes2 = row
            .input2
            .as_ref()
            .and_then(|p| boxes_by_image.get(p))
            .unwrap_or(&empty);
        let needs_second = matches!(row.op, AugmentOp::Mixup { .. });
        let out = imageops::apply_op(
            &row.op,
            &input,
            if needs_second { input2.as_ref() } else { None },
            boxes,
            boxes2,
            row.seed,
        )?;
        Ok(out)
    });

    let mut out_rows: Vec<Detection> = Vec::new();
    for (row, result) in rows.iter().zip(results) {
        let (image, boxes) = result?;
        let out_path = resolve(&root, &row.output);
        write_atomic(&out_path, |tmp| Ok(write_ppm(&image, tmp)?))?;
        for wb in boxes {
            out_rows.push(Detection::new(row.output.clone(), wb.bbox, wb.weight));
        }
    }
    if let Some(path) = out_annotations {
        write_atomic(&path, |tmp| Ok(save_detections(&out_rows, tmp)?))?;
    }
    Ok(())
}
