//! Anchor prior selection by k-means over box dimensions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BBox, GeometryError};

const MAX_ITERATIONS: usize = 300;

/// IoU of two boxes aligned at a common center, so only the dimensions matter.
fn centered_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = a.0.min(b.0) * a.1.min(b.1);
    let union = a.0 * a.1 + b.0 * b.1 - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    1.0 - centered_iou(a, b)
}

fn nearest(point: (f64, f64), centers: &[(f64, f64)]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &c) in centers.iter().enumerate() {
        let d = distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Clusters box dimensions into `k` anchor priors with k-means under the
/// `1 - IoU` distance, seeded deterministically. Returns `(width, height)`
/// pairs sorted by area.
pub fn cluster_anchors(
    boxes: &[BBox],
    k: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>, GeometryError> {
    if k == 0 {
        return Err(GeometryError::ZeroClusters);
    }
    let sizes: Vec<(f64, f64)> = boxes.iter().map(|b| (b.width(), b.height())).collect();
    let mut distinct: Vec<(f64, f64)> = sizes.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite dimensions"));
    distinct.dedup();
    if distinct.len() < k {
        return Err(GeometryError::TooFewDistinctSizes {
            k,
            distinct: distinct.len(),
        });
    }

    // k-means++ style seeding: first center uniform, the rest weighted by
    // squared distance to the nearest chosen center. Points coinciding with a
    // chosen center carry zero weight, so the k centers are always distinct.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(k);
    centers.push(sizes[rng.random_range(0..sizes.len())]);
    while centers.len() < k {
        let weights: Vec<f64> = sizes
            .iter()
            .map(|&s| {
                let d = nearest(s, &centers).1;
                d * d
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = sizes.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            sizes[chosen]
        } else {
            // All points sit on chosen centers; pick the first distinct size
            // not yet selected (guaranteed to exist by the check above).
            *distinct
                .iter()
                .find(|s| !centers.contains(s))
                .expect("more distinct sizes than centers")
        };
        centers.push(next);
    }

    let mut assignment = vec![usize::MAX; sizes.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (i, &s) in sizes.iter().enumerate() {
            let cluster = nearest(s, &centers).0;
            if assignment[i] != cluster {
                assignment[i] = cluster;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (i, &s) in sizes.iter().enumerate() {
            let entry = &mut sums[assignment[i]];
            entry.0 += s.0;
            entry.1 += s.1;
            entry.2 += 1;
        }
        for (c, sum) in centers.iter_mut().zip(&sums) {
            // An emptied cluster keeps its previous center.
            if sum.2 > 0 {
                *c = (sum.0 / sum.2 as f64, sum.1 / sum.2 as f64);
            }
        }
    }

    centers.sort_by(|a, b| {
        (a.0 * a.1, a.0)
            .partial_cmp(&(b.0 * b.1, b.0))
            .expect("finite dimensions")
    });
    Ok(centers)
}
