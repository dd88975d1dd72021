//! The count-based evaluation protocol: greedy IoU matching, TP/FP/FN,
//! recall/precision/F1, average precision, and threshold sweeps.

use std::collections::HashMap;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::annotations::{detection_order, Annotation, Detection};
use crate::parallel;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("iou threshold must be in (0,1], got {0}")]
    InvalidIouThreshold(f64),
}

fn check_iou(t: f64) -> Result<(), MetricsError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(MetricsError::InvalidIouThreshold(t))
    }
}

/// One detection's matching outcome, in global descending-score order.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMatch {
    pub detection: Detection,
    /// Index into the ground-truth slice when this detection is a true
    /// positive, `None` for a false positive.
    pub matched_gt: Option<usize>,
}

/// Matching outcome over the whole image universe.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub iou_threshold: f64,
    /// Detections in global descending-score order with their TP/FP flags.
    pub detections: Vec<DetectionMatch>,
    /// Per ground-truth flag, indexed like the input slice.
    pub gt_matched: Vec<bool>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.detections.iter().filter(|d| d.matched_gt.is_some()).count()
    }

    pub fn fp(&self) -> usize {
        self.detections.len() - self.tp()
    }
}

/// Greedily matches detections (in descending score order) to the unmatched
/// same-image ground truth of highest IoU, counting a true positive when that
/// IoU reaches `iou_thresh`. Each ground truth is claimed at most once;
/// detections on images absent from the ground truth are false positives.
pub fn match_detections(
    gt: &[Annotation],
    dets: &[Detection],
    iou_thresh: f64,
) -> Result<MatchResult, MetricsError> {
    check_iou(iou_thresh)?;
    let mut gt_by_image: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, g) in gt.iter().enumerate() {
        gt_by_image.entry(g.image_id.as_str()).or_default().push(i);
    }
    let mut dets_by_image: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, d) in dets.iter().enumerate() {
        dets_by_image.entry(d.image_id.as_str()).or_default().push(i);
    }
    // Matching is independent per image; a fixed image order plus the global
    // sort below keeps the result identical under any parallel schedule.
    let mut images: Vec<&str> = dets_by_image.keys().copied().collect();
    images.sort_unstable();
    let empty: Vec<usize> = Vec::new();

    let per_image: Vec<(Vec<DetectionMatch>, Vec<usize>)> =
        parallel::map_slice(&images, |image| {
            let mut det_idx: Vec<usize> = dets_by_image[image].clone();
            det_idx.sort_by(|&a, &b| detection_order(&dets[a], &dets[b]));
            let gt_idx = gt_by_image.get(image).unwrap_or(&empty);
            let mut taken = vec![false; gt_idx.len()];
            let mut matches = Vec::with_capacity(det_idx.len());
            let mut claimed = Vec::new();
            for &di in &det_idx {
                let mut best: Option<(usize, f64)> = None;
                for (slot, &gi) in gt_idx.iter().enumerate() {
                    if taken[slot] {
                        continue;
                    }
                    let iou = dets[di].bbox.iou(&gt[gi].bbox);
                    let better = match best {
                        None => true,
                        Some((_, best_iou)) => iou > best_iou,
                    };
                    if better {
                        best = Some((slot, iou));
                    }
                }
                let matched_gt = match best {
                    Some((slot, iou)) if iou >= iou_thresh => {
                        taken[slot] = true;
                        claimed.push(gt_idx[slot]);
                        Some(gt_idx[slot])
                    }
                    _ => None,
                };
                matches.push(DetectionMatch {
                    detection: dets[di].clone(),
                    matched_gt,
                });
            }
            (matches, claimed)
        });

    let mut gt_matched = vec![false; gt.len()];
    let mut detections = Vec::with_capacity(dets.len());
    for (matches, claimed) in per_image {
        for gi in claimed {
            gt_matched[gi] = true;
        }
        detections.extend(matches);
    }
    detections.sort_by(|a, b| detection_order(&a.detection, &b.detection));
    Ok(MatchResult {
        iou_threshold: iou_thresh,
        detections,
        gt_matched,
    })
}

/// Cumulative (recall, precision) points indexed by descending detection
/// score.
#[derive(Debug, Clone, PartialEq)]
pub struct PRCurve {
    pub points: Vec<(f64, f64)>,
}

/// Builds the cumulative precision/recall curve from a global match result.
pub fn pr_curve(matches: &MatchResult, n_gt: usize) -> PRCurve {
    let mut points = Vec::with_capacity(matches.detections.len());
    let mut tp = 0usize;
    let mut fp = 0usize;
    for m in &matches.detections {
        if m.matched_gt.is_some() {
            tp += 1;
        } else {
            fp += 1;
        }
        let recall = if n_gt > 0 { tp as f64 / n_gt as f64 } else { 0.0 };
        let precision = tp as f64 / (tp + fp) as f64;
        points.push((recall, precision));
    }
    PRCurve { points }
}

/// Average-precision interpolation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApMode {
    /// Area under the precision envelope over all recall breakpoints.
    #[serde(rename = "allpoint")]
    AllPoint,
    /// Mean envelope precision at recalls 0.0, 0.1, ..., 1.0.
    #[serde(rename = "elevenpoint")]
    ElevenPoint,
}

impl std::str::FromStr for ApMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "allpoint" => Ok(ApMode::AllPoint),
            "elevenpoint" => Ok(ApMode::ElevenPoint),
            other => Err(format!("unknown ap mode '{other}'")),
        }
    }
}

impl std::fmt::Display for ApMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ApMode::AllPoint => "allpoint",
            ApMode::ElevenPoint => "elevenpoint",
        })
    }
}

/// Integrates the precision envelope of a curve. The envelope replaces each
/// precision by the maximum precision at equal-or-greater recall, removing
/// the sawtooth caused by false positives.
pub fn average_precision(curve: &PRCurve, mode: ApMode) -> f64 {
    if curve.points.is_empty() {
        return 0.0;
    }
    let n = curve.points.len();
    let mut envelope = vec![0.0f64; n];
    let mut running = 0.0f64;
    for i in (0..n).rev() {
        running = running.max(curve.points[i].1);
        envelope[i] = running;
    }
    match mode {
        ApMode::AllPoint => {
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (i, &(recall, _)) in curve.points.iter().enumerate() {
                ap += (recall - prev_recall) * envelope[i];
                prev_recall = recall;
            }
            ap
        }
        ApMode::ElevenPoint => {
            let mut total = 0.0;
            for step in 0..=10u32 {
                let r = f64::from(step) / 10.0;
                let p = curve
                    .points
                    .iter()
                    .zip(&envelope)
                    .find(|((recall, _), _)| *recall >= r)
                    .map_or(0.0, |(_, &e)| e);
                total += p;
            }
            total / 11.0
        }
    }
}

/// Counts plus the derived ratios of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(serialize_with = "round6")]
    pub iou_threshold: f64,
    pub ap_mode: ApMode,
    pub n_gt: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    #[serde(serialize_with = "round6")]
    pub recall: f64,
    #[serde(serialize_with = "round6")]
    pub precision: f64,
    #[serde(serialize_with = "round6")]
    pub f1: f64,
    #[serde(serialize_with = "round6")]
    pub ap: f64,
}

fn round6<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64((v * 1e6).round() / 1e6)
}

impl EvalReport {
    /// Derives recall, precision, and F1 from raw counts. Ratios with zero
    /// denominators are defined as 0.
    pub fn from_counts(
        tp: usize,
        fp: usize,
        n_gt: usize,
        ap: f64,
        iou_threshold: f64,
        ap_mode: ApMode,
    ) -> Self {
        let recall = if n_gt > 0 { tp as f64 / n_gt as f64 } else { 0.0 };
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            iou_threshold,
            ap_mode,
            n_gt,
            tp,
            fp,
            fn_: n_gt - tp.min(n_gt),
            recall,
            precision,
            f1,
            ap,
        }
    }

    /// Serializes the report as a single JSON object with six-decimal floats.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }
}

/// Matches, counts, and scores one prediction set against the ground truth.
pub fn evaluate(
    gt: &[Annotation],
    preds: &[Detection],
    iou_thresh: f64,
    ap_mode: ApMode,
) -> Result<EvalReport, MetricsError> {
    let matches = match_detections(gt, preds, iou_thresh)?;
    let curve = pr_curve(&matches, gt.len());
    let ap = average_precision(&curve, ap_mode);
    Ok(EvalReport::from_counts(
        matches.tp(),
        matches.fp(),
        gt.len(),
        ap,
        iou_thresh,
        ap_mode,
    ))
}

/// One [`EvalReport`] per threshold, in the given order.
pub fn threshold_sweep(
    gt: &[Annotation],
    preds: &[Detection],
    thresholds: &[f64],
    ap_mode: ApMode,
) -> Result<Vec<EvalReport>, MetricsError> {
    thresholds
        .iter()
        .map(|&t| evaluate(gt, preds, t, ap_mode))
        .collect()
}
