//! Single-model detection filtering: greedy NMS, score-decay NMS, confidence
//! filtering, high-overlap removal, and single-detection-exempt suppression.
//!
//! Every function here takes one image's detections and is deterministic
//! under the canonical tie-break (score desc, area desc, corners, image id).

use thiserror::Error;

use crate::annotations::{detection_order, Detection};

#[derive(Debug, Error, PartialEq)]
pub enum PostprocessError {
    #[error("iou threshold must be in (0,1], got {0}")]
    InvalidIouThreshold(f64),
    #[error("score threshold must be in [0,1], got {0}")]
    InvalidScoreThreshold(f64),
    #[error("sigma must be positive, got {0}")]
    InvalidSigma(f64),
}

fn check_iou(t: f64) -> Result<(), PostprocessError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(PostprocessError::InvalidIouThreshold(t))
    }
}

fn check_score(t: f64) -> Result<(), PostprocessError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(PostprocessError::InvalidScoreThreshold(t))
    }
}

/// Greedy non-maximum suppression: repeatedly keep the highest-scored box and
/// discard every remaining box with `iou >= iou_thresh` against it. Output is
/// a subset of the input in descending score order.
pub fn nms(dets: &[Detection], iou_thresh: f64) -> Result<Vec<Detection>, PostprocessError> {
    check_iou(iou_thresh)?;
    let mut pending: Vec<&Detection> = dets.iter().collect();
    pending.sort_by(|a, b| detection_order(a, b));
    let mut kept = Vec::new();
    while let Some(seed) = pending.first().copied() {
        kept.push(seed.clone());
        pending.retain(|d| seed.bbox.iou(&d.bbox) < iou_thresh);
    }
    Ok(kept)
}

/// How overlapping scores decay during [`soft_nms`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay {
    /// Multiply by `exp(-iou^2 / sigma)`; acts on every overlapping box.
    Gaussian { sigma: f64 },
    /// Multiply by `1 - iou` once `iou >= iou_trigger`.
    Linear,
}

/// Configuration for [`soft_nms`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftNmsConfig {
    pub decay: Decay,
    /// Overlap level at which the linear decay engages.
    pub iou_trigger: f64,
    /// Decayed boxes scoring below this are dropped.
    pub prune_score: f64,
}

impl SoftNmsConfig {
    pub fn new(decay: Decay, iou_trigger: f64, prune_score: f64) -> Result<Self, PostprocessError> {
        if let Decay::Gaussian { sigma } = decay {
            if !(sigma > 0.0) {
                return Err(PostprocessError::InvalidSigma(sigma));
            }
        }
        check_iou(iou_trigger)?;
        check_score(prune_score)?;
        Ok(Self {
            decay,
            iou_trigger,
            prune_score,
        })
    }

    /// Gaussian decay with sigma 0.5, trigger 0.5, prune 0.5.
    pub fn gaussian_default() -> Self {
        Self {
            decay: Decay::Gaussian { sigma: 0.5 },
            iou_trigger: 0.5,
            prune_score: 0.5,
        }
    }
}

/// Score-decay suppression: the highest-scored box is selected, every
/// remaining box overlapping it has its score decayed, and a box whose
/// decayed score falls below `prune_score` is dropped. Boxes the decay rule
/// leaves untouched are never pruned, so with linear decay and
/// `prune_score = 1.0` this removes exactly what hard NMS removes.
pub fn soft_nms(dets: &[Detection], cfg: &SoftNmsConfig) -> Result<Vec<Detection>, PostprocessError> {
    SoftNmsConfig::new(cfg.decay, cfg.iou_trigger, cfg.prune_score)?;
    let mut pending: Vec<Detection> = dets.to_vec();
    let mut kept = Vec::new();
    while !pending.is_empty() {
        pending.sort_by(detection_order);
        let seed = pending.remove(0);
        let mut survivors = Vec::with_capacity(pending.len());
        for mut d in pending {
            let iou = seed.bbox.iou(&d.bbox);
            let factor = match cfg.decay {
                Decay::Gaussian { sigma } => (-iou * iou / sigma).exp(),
                Decay::Linear if iou >= cfg.iou_trigger => 1.0 - iou,
                Decay::Linear => 1.0,
            };
            if factor < 1.0 {
                d.score *= factor;
                if d.score < cfg.prune_score {
                    continue;
                }
            }
            survivors.push(d);
        }
        pending = survivors;
        kept.push(seed);
    }
    Ok(kept)
}

/// Keeps detections scoring at least `min_score`, preserving input order.
pub fn filter_confidence(
    dets: &[Detection],
    min_score: f64,
) -> Result<Vec<Detection>, PostprocessError> {
    check_score(min_score)?;
    Ok(dets.iter().filter(|d| d.score >= min_score).cloned().collect())
}

/// Groups detections whose pairwise overlap reaches `overlap_thresh`
/// (transitively) and keeps only the highest-confidence member of each group.
pub fn remove_overlaps(
    dets: &[Detection],
    overlap_thresh: f64,
) -> Result<Vec<Detection>, PostprocessError> {
    check_iou(overlap_thresh)?;
    let n = dets.len();
    // union-find over the overlap graph
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if dets[i].bbox.iou(&dets[j].bbox) >= overlap_thresh {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut best: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        best[root] = match best[root] {
            None => Some(i),
            Some(b) if detection_order(&dets[i], &dets[b]).is_lt() => Some(i),
            keep => keep,
        };
    }
    let mut kept: Vec<Detection> = best
        .into_iter()
        .flatten()
        .map(|i| dets[i].clone())
        .collect();
    kept.sort_by(detection_order);
    Ok(kept)
}

/// Threshold suppression that exempts the lone-detection case: an input with
/// exactly one detection is returned unchanged, anything else is filtered at
/// `thresh`. May return an empty set when two or more detections all fall
/// below the threshold.
pub fn adaptive_suppress(
    dets: &[Detection],
    thresh: f64,
) -> Result<Vec<Detection>, PostprocessError> {
    check_score(thresh)?;
    if dets.len() == 1 {
        return Ok(dets.to_vec());
    }
    filter_confidence(dets, thresh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det(xmin: f64, ymin: f64, xmax: f64, ymax: f64, score: f64) -> Detection {
        Detection::new("img.jpg", BBox::new(xmin, ymin, xmax, ymax).unwrap(), score)
    }

    fn three_boxes() -> Vec<Detection> {
        vec![
            det(0.0, 0.0, 10.0, 10.0, 0.9),
            det(1.0, 1.0, 11.0, 11.0, 0.8),
            det(20.0, 20.0, 30.0, 30.0, 0.7),
        ]
    }

    /// Independent quadratic oracle: marks each box suppressed by the first
    /// higher-ranked unsuppressed box overlapping it at or above the threshold.
    fn nms_oracle(dets: &[Detection], thresh: f64) -> Vec<Detection> {
        let mut sorted: Vec<Detection> = dets.to_vec();
        sorted.sort_by(detection_order);
        let mut suppressed = vec![false; sorted.len()];
        for i in 0..sorted.len() {
            if suppressed[i] {
                continue;
            }
            for j in (i + 1)..sorted.len() {
                if !suppressed[j] && sorted[i].bbox.iou(&sorted[j].bbox) >= thresh {
                    suppressed[j] = true;
                }
            }
        }
        sorted
            .into_iter()
            .zip(suppressed)
            .filter(|(_, s)| !s)
            .map(|(d, _)| d)
            .collect()
    }

    fn random_dets(rng: &mut ChaCha8Rng, n: usize) -> Vec<Detection> {
        (0..n)
            .map(|_| {
                let x: f64 = rng.random_range(0.0..80.0);
                let y: f64 = rng.random_range(0.0..80.0);
                let w: f64 = rng.random_range(1.0..40.0);
                let h: f64 = rng.random_range(1.0..40.0);
                det(x, y, x + w, y + h, rng.random_range(0.0..1.0))
            })
            .collect()
    }

    #[test]
    fn nms_suppresses_the_overlapping_pair() {
        // iou of the first two is 81/119 ~ 0.6807
        let kept = nms(&three_boxes(), 0.5).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].score, 0.9);
        assert_eq!(kept[1].score, 0.7);
    }

    #[test]
    fn nms_keeps_singletons_and_disjoint_sets() {
        let single = vec![det(0.0, 0.0, 10.0, 10.0, 0.4)];
        assert_eq!(nms(&single, 0.5).unwrap(), single);
        let disjoint = vec![
            det(0.0, 0.0, 10.0, 10.0, 0.9),
            det(50.0, 50.0, 60.0, 60.0, 0.5),
        ];
        assert_eq!(nms(&disjoint, 0.5).unwrap().len(), 2);
    }

    #[test]
    fn nms_matches_quadratic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let n = rng.random_range(0..50);
            let dets = random_dets(&mut rng, n);
            let thresh = rng.random_range(0.1..1.0);
            assert_eq!(nms(&dets, thresh).unwrap(), nms_oracle(&dets, thresh));
        }
    }

    #[test]
    fn nms_retains_global_maximum_and_justifies_suppressions() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..200 {
            let n = rng.random_range(1..30);
            let dets = random_dets(&mut rng, n);
            let kept = nms(&dets, 0.4).unwrap();
            let best = dets
                .iter()
                .min_by(|a, b| detection_order(a, b))
                .unwrap();
            assert_eq!(&kept[0], best);
            for d in &dets {
                if !kept.contains(d) {
                    assert!(kept
                        .iter()
                        .any(|k| k.score >= d.score && k.bbox.iou(&d.bbox) >= 0.4));
                }
            }
        }
    }

    #[test]
    fn soft_nms_gaussian_decays_and_prunes() {
        let cfg = SoftNmsConfig::gaussian_default();
        let kept = soft_nms(&three_boxes(), &cfg).unwrap();
        // second box decays to 0.8 * exp(-0.6807^2 / 0.5) ~ 0.3167 < 0.5
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].score, 0.9);
        assert_eq!(kept[1].score, 0.7);

        let no_prune = SoftNmsConfig::new(Decay::Gaussian { sigma: 0.5 }, 0.5, 0.0).unwrap();
        let rescored = soft_nms(&three_boxes(), &no_prune).unwrap();
        assert_eq!(rescored.len(), 3);
        let iou: f64 = 81.0 / 119.0;
        let expected = 0.8 * (-iou * iou / 0.5).exp();
        assert!((rescored[2].score - expected).abs() < 1e-12);
        assert!((expected - 0.3167).abs() < 5e-4);
    }

    #[test]
    fn soft_nms_leaves_disjoint_scores_unchanged() {
        let dets = vec![
            det(0.0, 0.0, 10.0, 10.0, 0.9),
            det(50.0, 50.0, 60.0, 60.0, 0.2),
        ];
        let kept = soft_nms(&dets, &SoftNmsConfig::gaussian_default()).unwrap();
        assert_eq!(kept, dets);
    }

    #[test]
    fn soft_nms_never_increases_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..300 {
            let n = rng.random_range(0..30);
            let dets = random_dets(&mut rng, n);
            let cfg = SoftNmsConfig::new(
                Decay::Gaussian {
                    sigma: rng.random_range(0.05..2.0),
                },
                0.5,
                0.0,
            )
            .unwrap();
            let out = soft_nms(&dets, &cfg).unwrap();
            assert_eq!(out.len(), dets.len());
            for o in &out {
                let orig = dets
                    .iter()
                    .find(|d| d.bbox == o.bbox)
                    .expect("box survives rescoring");
                assert!(o.score <= orig.score + 1e-15);
            }
        }
    }

    #[test]
    fn soft_nms_linear_with_full_prune_equals_hard_nms() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..500 {
            let n = rng.random_range(0..40);
            let dets = random_dets(&mut rng, n);
            let thresh = rng.random_range(0.1..1.0);
            let cfg = SoftNmsConfig::new(Decay::Linear, thresh, 1.0).unwrap();
            let soft: Vec<BBox> = soft_nms(&dets, &cfg).unwrap().iter().map(|d| d.bbox).collect();
            let hard: Vec<BBox> = nms(&dets, thresh).unwrap().iter().map(|d| d.bbox).collect();
            assert_eq!(soft, hard);
        }
    }

    #[test]
    fn filter_confidence_keeps_at_or_above() {
        let dets = vec![
            det(0.0, 0.0, 10.0, 10.0, 0.9),
            det(1.0, 1.0, 11.0, 11.0, 0.29),
        ];
        assert_eq!(filter_confidence(&dets, 0.3).unwrap().len(), 1);
        assert_eq!(filter_confidence(&dets, 0.0).unwrap(), dets);
    }

    #[test]
    fn filter_confidence_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..1000 {
            let n = rng.random_range(0..20);
            let dets = random_dets(&mut rng, n);
            let t = rng.random_range(0.0..1.0);
            let expected: Vec<Detection> =
                dets.iter().filter(|d| d.score >= t).cloned().collect();
            assert_eq!(filter_confidence(&dets, t).unwrap(), expected);
        }
    }

    #[test]
    fn remove_overlaps_keeps_highest_confidence() {
        // iou 0.85 pair
        let a = det(0.0, 0.0, 100.0, 10.0, 0.7);
        let b = det(0.0, 0.0, 85.0, 10.0, 0.6);
        assert!(a.bbox.iou(&b.bbox) >= 0.85);
        let kept = remove_overlaps(&[a.clone(), b], 0.8).unwrap();
        assert_eq!(kept, vec![a]);

        // iou just below the threshold: both kept
        let c = det(0.0, 0.0, 100.0, 10.0, 0.7);
        let d = det(0.0, 0.0, 79.0, 10.0, 0.6);
        assert!(c.bbox.iou(&d.bbox) < 0.8);
        assert_eq!(remove_overlaps(&[c, d], 0.8).unwrap().len(), 2);
    }

    /// Transitive-closure grouping oracle built on repeated set expansion.
    fn remove_overlaps_oracle(dets: &[Detection], thresh: f64) -> Vec<Detection> {
        let n = dets.len();
        let mut group: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for i in 0..n {
                for j in 0..n {
                    if dets[i].bbox.iou(&dets[j].bbox) >= thresh && group[i] != group[j] {
                        let g = group[i].min(group[j]);
                        group[i] = g;
                        group[j] = g;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut out: Vec<Detection> = (0..n)
            .filter(|&i| {
                (0..n).all(|j| group[j] != group[i] || !detection_order(&dets[j], &dets[i]).is_lt())
            })
            .map(|i| dets[i].clone())
            .collect();
        out.sort_by(detection_order);
        out
    }

    #[test]
    fn remove_overlaps_matches_grouping_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..1000 {
            let n = rng.random_range(0..25);
            let dets = random_dets(&mut rng, n);
            let t = rng.random_range(0.3..1.0);
            assert_eq!(
                remove_overlaps(&dets, t).unwrap(),
                remove_overlaps_oracle(&dets, t)
            );
        }
    }

    #[test]
    fn adaptive_suppress_exempts_single_detection() {
        let lone = vec![det(0.0, 0.0, 10.0, 10.0, 0.4)];
        assert_eq!(adaptive_suppress(&lone, 0.5).unwrap(), lone);

        let two = vec![
            det(0.0, 0.0, 10.0, 10.0, 0.6),
            det(20.0, 20.0, 30.0, 30.0, 0.4),
        ];
        let kept = adaptive_suppress(&two, 0.5).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.6);

        let low = vec![
            det(0.0, 0.0, 10.0, 10.0, 0.4),
            det(20.0, 20.0, 30.0, 30.0, 0.3),
        ];
        assert!(adaptive_suppress(&low, 0.5).unwrap().is_empty());
    }

    #[test]
    fn filters_are_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..200 {
            let n = rng.random_range(0..20);
            let dets = random_dets(&mut rng, n);
            let once = filter_confidence(&dets, 0.3).unwrap();
            assert_eq!(filter_confidence(&once, 0.3).unwrap(), once);
            let once = remove_overlaps(&dets, 0.8).unwrap();
            assert_eq!(remove_overlaps(&once, 0.8).unwrap(), once);
            let once = adaptive_suppress(&dets, 0.5).unwrap();
            assert_eq!(adaptive_suppress(&once, 0.5).unwrap(), once);
        }
    }

    #[test]
    fn invalid_thresholds_are_rejected() {
        let dets = three_boxes();
        assert!(nms(&dets, 0.0).is_err());
        assert!(nms(&dets, 1.5).is_err());
        assert!(filter_confidence(&dets, -0.1).is_err());
        assert!(SoftNmsConfig::new(Decay::Gaussian { sigma: 0.0 }, 0.5, 0.5).is_err());
    }
}
