//! Cross-model and cross-view fusion: weighted boxes fusion and
//! test-time-augmentation merging.

use thiserror::Error;

use crate::annotations::{detection_order, Detection};
use crate::geometry::{transform_box, AffineMap};
use crate::postprocess::{self, PostprocessError, SoftNmsConfig};

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("iou threshold must be in (0,1], got {0}")]
    InvalidIouThreshold(f64),
    #[error("{weights} weights supplied for {models} models")]
    WeightCountMismatch { weights: usize, models: usize },
    #[error("weights must be nonnegative and at least one positive")]
    InvalidWeights,
    #[error(transparent)]
    Postprocess(#[from] PostprocessError),
}

/// How a fused cluster's score is computed from its members.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// Weighted mean of member scores.
    Mean,
    /// Weighted mean multiplied by `min(T, N) / N`, down-weighting clusters
    /// that only a minority of the N models contributed to.
    MeanRescaled,
}

/// Settings for [`wbf`]: cluster trigger, one weight per model, score mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub iou_thresh: f64,
    pub weights: Vec<f64>,
    pub score_mode: ScoreMode,
}

impl FusionConfig {
    /// Reference defaults: equal weights, cluster trigger 0.55, rescaled mean.
    pub fn equal_weights(models: usize) -> Self {
        Self {
            iou_thresh: 0.55,
            weights: vec![1.0; models],
            score_mode: ScoreMode::MeanRescaled,
        }
    }

    fn validate(&self, models: usize) -> Result<(), EnsembleError> {
        if !(self.iou_thresh > 0.0 && self.iou_thresh <= 1.0) {
            return Err(EnsembleError::InvalidIouThreshold(self.iou_thresh));
        }
        if self.weights.len() != models {
            return Err(EnsembleError::WeightCountMismatch {
                weights: self.weights.len(),
                models,
            });
        }
        let valid = self.weights.iter().all(|w| w.is_finite() && *w >= 0.0)
            && self.weights.iter().any(|w| *w > 0.0);
        if !valid {
            return Err(EnsembleError::InvalidWeights);
        }
        Ok(())
    }
}

struct Cluster {
    /// (model weight, detection) per member.
    members: Vec<(f64, Detection)>,
    fused: Detection,
}

impl Cluster {
    fn new(weight: f64, det: Detection) -> Self {
        let fused = det.clone();
        Self {
            members: vec![(weight, det)],
            fused,
        }
    }

    fn push(&mut self, weight: f64, det: Detection) {
        self.members.push((weight, det));
        self.refuse();
    }

    /// Recomputes the fused box (confidence-weight-weighted coordinate
    /// average) and the weighted mean score.
    fn refuse(&mut self) {
        let mut cw = 0.0; // Σ w·s, the coordinate weight
        let mut sw = 0.0; // Σ w
        let mut coords = [0.0f64; 4];
        let mut score_acc = 0.0;
        for (w, d) in &self.members {
            let f = w * d.score;
            cw += f;
            sw += w;
            coords[0] += f * d.bbox.xmin;
            coords[1] += f * d.bbox.ymin;
            coords[2] += f * d.bbox.xmax;
            coords[3] += f * d.bbox.ymax;
            score_acc += w * d.score;
        }
        if cw > 0.0 {
            self.fused.bbox.xmin = coords[0] / cw;
            self.fused.bbox.ymin = coords[1] / cw;
            self.fused.bbox.xmax = coords[2] / cw;
            self.fused.bbox.ymax = coords[3] / cw;
        } else {
            // all members carry zero confidence-weight; fall back to the
            // plain mean so the fused box stays a convex combination
            let n = self.members.len() as f64;
            self.fused.bbox.xmin = self.members.iter().map(|(_, d)| d.bbox.xmin).sum::<f64>() / n;
            self.fused.bbox.ymin = self.members.iter().map(|(_, d)| d.bbox.ymin).sum::<f64>() / n;
            self.fused.bbox.xmax = self.members.iter().map(|(_, d)| d.bbox.xmax).sum::<f64>() / n;
            self.fused.bbox.ymax = self.members.iter().map(|(_, d)| d.bbox.ymax).sum::<f64>() / n;
        }
        self.fused.score = if sw > 0.0 {
            score_acc / sw
        } else {
            0.0
        };
    }

    fn final_score(&self, mode: ScoreMode, models: usize) -> f64 {
        match mode {
            ScoreMode::Mean => self.fused.score,
            ScoreMode::MeanRescaled => {
                let t = self.members.len() as f64;
                let n = models as f64;
                self.fused.score * t.min(n) / n
            }
        }
    }
}

/// Weighted boxes fusion over one image's detections from N models.
///
/// Boxes are processed in descending weighted score; each joins the first
/// existing cluster whose running fused box overlaps it at `iou_thresh`, or
/// starts a new cluster. Fused coordinates are the confidence-times-weight
/// average of the members; fused scores follow [`ScoreMode`]. Output is in
/// descending fused-score order.
pub fn wbf(
    per_model_dets: &[Vec<Detection>],
    cfg: &FusionConfig,
) -> Result<Vec<Detection>, EnsembleError> {
    cfg.validate(per_model_dets.len())?;
    let mut incoming: Vec<(f64, &Detection)> = Vec::new();
    for (model, dets) in per_model_dets.iter().enumerate() {
        for d in dets {
            incoming.push((cfg.weights[model], d));
        }
    }
    // descending weighted score, canonical tie-break
    incoming.sort_by(|(wa, a), (wb, b)| {
        (wb * b.score)
            .partial_cmp(&(wa * a.score))
            .expect("finite weighted scores")
            .then_with(|| detection_order(a, b))
    });

    let mut clusters: Vec<Cluster> = Vec::new();
    for (weight, det) in incoming {
        match clusters
            .iter_mut()
            .find(|c| c.fused.bbox.iou(&det.bbox) >= cfg.iou_thresh)
        {
            Some(cluster) => cluster.push(weight, det.clone()),
            None => clusters.push(Cluster::new(weight, det.clone())),
        }
    }

    let models = per_model_dets.len();
    let mut out: Vec<Detection> = clusters
        .iter()
        .map(|c| {
            let mut d = c.fused.clone();
            d.score = c.final_score(cfg.score_mode, models);
            d
        })
        .collect();
    out.sort_by(detection_order);
    Ok(out)
}

/// An augmented view's detections are mapped back to original-image
/// coordinates through this transform.
#[derive(Debug, Clone)]
pub struct ViewTransform {
    /// Map from view coordinates to original-image coordinates.
    pub map: AffineMap,
    pub label: String,
}

impl ViewTransform {
    pub fn identity() -> Self {
        Self {
            map: AffineMap::identity(),
            label: "identity".into(),
        }
    }

    pub fn new(map: AffineMap, label: impl Into<String>) -> Self {
        Self {
            map,
            label: label.into(),
        }
    }
}

/// Maps every view's detections back into original coordinates, pools them,
/// and collapses duplicates with greedy NMS at `nms_iou`.
pub fn tta_merge(
    views: &[(ViewTransform, Vec<Detection>)],
    nms_iou: f64,
) -> Result<Vec<Detection>, EnsembleError> {
    let mut pooled = Vec::new();
    for (view, dets) in views {
        for d in dets {
            let mut mapped = d.clone();
            mapped.bbox = transform_box(&d.bbox, &view.map);
            pooled.push(mapped);
        }
    }
    Ok(postprocess::nms(&pooled, nms_iou)?)
}

/// A post-processing step applied after fusion.
#[derive(Debug, Clone, PartialEq)]
pub enum PostOp {
    Nms { iou: f64 },
    SoftNms(SoftNmsConfig),
    FilterConfidence { min_score: f64 },
    RemoveOverlaps { iou: f64 },
    AdaptiveSuppress { thresh: f64 },
}

/// Weighted boxes fusion followed by a configurable suppression chain.
pub fn ensemble_pipeline(
    per_model_dets: &[Vec<Detection>],
    cfg: &FusionConfig,
    post: &[PostOp],
) -> Result<Vec<Detection>, EnsembleError> {
    let mut dets = wbf(per_model_dets, cfg)?;
    for op in post {
        dets = match op {
            PostOp::Nms { iou } => postprocess::nms(&dets, *iou)?,
            PostOp::SoftNms(cfg) => postprocess::soft_nms(&dets, cfg)?,
            PostOp::FilterConfidence { min_score } => {
                postprocess::filter_confidence(&dets, *min_score)?
            }
            PostOp::RemoveOverlaps { iou } => postprocess::remove_overlaps(&dets, *iou)?,
            PostOp::AdaptiveSuppress { thresh } => {
                postprocess::adaptive_suppress(&dets, *thresh)?
            }
        };
    }
    Ok(dets)
}
