//! Ground-truth and prediction records: cleansing, duplicate joining,
//! intersection merging, validation, and pseudo-label export.

mod io;

pub use io::{
    load_annotations, load_detections, load_duplicate_pairs, load_image_metas, load_yolo,
    save_annotations, save_detections, save_image_metas, save_yolo, AnnotationError,
};

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::geometry::BBox;
use crate::parallel;

/// A ground-truth (or pseudo-label) box on a named image.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub image_id: String,
    pub bbox: BBox,
}

impl Annotation {
    pub fn new(image_id: impl Into<String>, bbox: BBox) -> Self {
        Self {
            image_id: image_id.into(),
            bbox,
        }
    }
}

/// A scored predicted box on a named image.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub bbox: BBox,
    /// Confidence in `[0, 1]`.
    pub score: f64,
}

impl Detection {
    pub fn new(image_id: impl Into<String>, bbox: BBox, score: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&score), "score out of range: {score}");
        Self {
            image_id: image_id.into(),
            bbox,
            score,
        }
    }
}

/// Pixel dimensions of a named image, needed for normalized conversions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageMeta {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
}

/// Two image ids identified as duplicates of each other.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicatePair {
    pub image_id_a: String,
    pub image_id_b: String,
}

/// Canonical annotation ordering: image id, then box corners.
pub fn annotation_order(a: &Annotation, b: &Annotation) -> Ordering {
    (
        &a.image_id,
        a.bbox.xmin,
        a.bbox.ymin,
        a.bbox.xmax,
        a.bbox.ymax,
    )
        .partial_cmp(&(
            &b.image_id,
            b.bbox.xmin,
            b.bbox.ymin,
            b.bbox.xmax,
            b.bbox.ymax,
        ))
        .expect("finite coordinates")
}

/// Canonical detection ordering used by every selection and tie-break in the
/// toolkit: score descending, then area descending, then corner coordinates,
/// then image id.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .expect("finite scores")
        .then_with(|| {
            b.bbox
                .area()
                .partial_cmp(&a.bbox.area())
                .expect("finite areas")
        })
        .then_with(|| {
            (a.bbox.xmin, a.bbox.ymin, a.bbox.xmax, a.bbox.ymax)
                .partial_cmp(&(b.bbox.xmin, b.bbox.ymin, b.bbox.xmax, b.bbox.ymax))
                .expect("finite coordinates")
        })
        .then_with(|| a.image_id.cmp(&b.image_id))
}

/// Groups detections by image id, preserving each group's input order.
pub fn group_by_image(dets: &[Detection]) -> BTreeMap<&str, Vec<&Detection>> {
    let mut groups: BTreeMap<&str, Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        groups.entry(d.image_id.as_str()).or_default().push(d);
    }
    groups
}

/// Reassigns every box of the duplicate image to its retained partner (the
/// lexicographically smaller id). No box is ever dropped.
///
/// Pairs naming images absent from the annotation set produce warnings, not
/// errors. Output is sorted canonically.
pub fn join_duplicates(
    mut annots: Vec<Annotation>,
    pairs: &[DuplicatePair],
) -> (Vec<Annotation>, Vec<String>) {
    let known: HashSet<String> = annots.iter().map(|a| a.image_id.clone()).collect();
    let mut warnings = Vec::new();
    for pair in pairs {
        for id in [&pair.image_id_a, &pair.image_id_b] {
            if !known.contains(id) {
                warnings.push(format!(
                    "duplicate pair references '{id}', which has no annotations"
                ));
            }
        }
        let (keep, drop) = if pair.image_id_a <= pair.image_id_b {
            (&pair.image_id_a, &pair.image_id_b)
        } else {
            (&pair.image_id_b, &pair.image_id_a)
        };
        for ann in &mut annots {
            if ann.image_id == *drop {
                ann.image_id = keep.clone();
            }
        }
    }
    annots.sort_by(annotation_order);
    (annots, warnings)
}

fn merge_boxes_fixpoint(mut boxes: Vec<BBox>) -> Vec<BBox> {
    let canonical = |a: &BBox, b: &BBox| {
        (a.xmin, a.ymin, a.xmax, a.ymax)
            .partial_cmp(&(b.xmin, b.ymin, b.xmax, b.ymax))
            .expect("finite coordinates")
    };
    boxes.sort_by(canonical);
    'outer: loop {
        for i in 0..boxes.len() {
            for j in (i + 1)..boxes.len() {
                if boxes[i].intersection_area(&boxes[j]) > 0.0 {
                    let merged = boxes[i].merge(&boxes[j]);
                    boxes.remove(j);
                    boxes[i] = merged;
                    boxes.sort_by(canonical);
                    continue 'outer;
                }
            }
        }
        return boxes;
    }
}

/// Per image, repeatedly replaces any two boxes with positive intersection
/// area by their merged hull until no intersections remain.
pub fn merge_intersecting(annots: Vec<Annotation>) -> Vec<Annotation> {
    let mut per_image: BTreeMap<String, Vec<BBox>> = BTreeMap::new();
    for a in annots {
        per_image.entry(a.image_id).or_default().push(a.bbox);
    }
    let entries: Vec<(String, Vec<BBox>)> = per_image.into_iter().collect();
    let merged = parallel::map_slice(&entries, |(id, boxes)| {
        (id.clone(), merge_boxes_fixpoint(boxes.clone()))
    });
    let mut out: Vec<Annotation> = merged
        .into_iter()
        .flat_map(|(id, boxes)| {
            boxes
                .into_iter()
                .map(move |b| Annotation::new(id.clone(), b))
        })
        .collect();
    out.sort_by(annotation_order);
    out
}

/// A consistency problem found in an annotation set.
#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    /// Box extends beyond its image's recorded dimensions (row is 0-based).
    OutOfBounds { row: usize, image_id: String },
    /// Box has zero area.
    ZeroArea { row: usize, image_id: String },
    /// No [`ImageMeta`] exists for the image (reported at first occurrence).
    MissingMeta { row: usize, image_id: String },
    /// Row is byte-identical to an earlier row.
    DuplicateRow {
        row: usize,
        first_row: usize,
        image_id: String,
    },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::OutOfBounds { row, image_id } => {
                write!(f, "row {row}: box on '{image_id}' exceeds image bounds")
            }
            Issue::ZeroArea { row, image_id } => {
                write!(f, "row {row}: box on '{image_id}' has zero area")
            }
            Issue::MissingMeta { row, image_id } => {
                write!(f, "row {row}: no image dimensions known for '{image_id}'")
            }
            Issue::DuplicateRow {
                row,
                first_row,
                image_id,
            } => write!(
                f,
                "row {row}: duplicate of row {first_row} on '{image_id}'"
            ),
        }
    }
}

/// Checks annotations against image metadata: bounds, degenerate boxes,
/// missing metadata, and duplicated rows. An empty result means a clean set.
pub fn validate(annots: &[Annotation], metas: &[ImageMeta]) -> Vec<Issue> {
    let dims: HashMap<&str, (f64, f64)> = metas
        .iter()
        .map(|m| (m.image_id.as_str(), (f64::from(m.width), f64::from(m.height))))
        .collect();
    let mut issues = Vec::new();
    let mut meta_reported: HashSet<&str> = HashSet::new();
    let mut seen: HashMap<(&str, [u64; 4]), usize> = HashMap::new();
    for (row, ann) in annots.iter().enumerate() {
        let key = (
            ann.image_id.as_str(),
            [
                ann.bbox.xmin.to_bits(),
                ann.bbox.ymin.to_bits(),
                ann.bbox.xmax.to_bits(),
                ann.bbox.ymax.to_bits(),
            ],
        );
        match seen.get(&key) {
            Some(&first_row) => issues.push(Issue::DuplicateRow {
                row,
                first_row,
                image_id: ann.image_id.clone(),
            }),
            None => {
                seen.insert(key, row);
            }
        }
        if ann.bbox.area() == 0.0 {
            issues.push(Issue::ZeroArea {
                row,
                image_id: ann.image_id.clone(),
            });
        }
        match dims.get(ann.image_id.as_str()) {
            Some(&(w, h)) => {
                let b = &ann.bbox;
                if b.xmin < 0.0 || b.ymin < 0.0 || b.xmax > w || b.ymax > h {
                    issues.push(Issue::OutOfBounds {
                        row,
                        image_id: ann.image_id.clone(),
                    });
                }
            }
            None => {
                if meta_reported.insert(ann.image_id.as_str()) {
                    issues.push(Issue::MissingMeta {
                        row,
                        image_id: ann.image_id.clone(),
                    });
                }
            }
        }
    }
    issues
}

/// Keeps detections scoring at least `min_score` and strips the scores,
/// turning confident predictions into training annotations.
pub fn pseudo_label(dets: &[Detection], min_score: f64) -> Vec<Annotation> {
    dets.iter()
        .filter(|d| d.score >= min_score)
        .map(|d| Annotation::new(d.image_id.clone(), d.bbox))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn bb(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> BBox {
        BBox::new(xmin, ymin, xmax, ymax).unwrap()
    }

    #[test]
    fn join_moves_boxes_to_retained_image() {
        let annots = vec![
            Annotation::new("a.jpg", bb(0.0, 0.0, 5.0, 5.0)),
            Annotation::new("b.jpg", bb(10.0, 10.0, 20.0, 20.0)),
        ];
        let pairs = vec![DuplicatePair {
            image_id_a: "b.jpg".into(),
            image_id_b: "a.jpg".into(),
        }];
        let (joined, warnings) = join_duplicates(annots, &pairs);
        assert!(warnings.is_empty());
        assert_eq!(joined.len(), 2);
        assert!(joined.iter().all(|a| a.image_id == "a.jpg"));
    }

    #[test]
    fn join_with_one_empty_side_warns_and_keeps_boxes() {
        let annots = vec![Annotation::new("a.jpg", bb(0.0, 0.0, 5.0, 5.0))];
        let pairs = vec![DuplicatePair {
            image_id_a: "a.jpg".into(),
            image_id_b: "b.jpg".into(),
        }];
        let (joined, warnings) = join_duplicates(annots, &pairs);
        assert_eq!(warnings.len(), 1);
        assert_eq!(joined.len(), 1);
        assert_eq!(joined[0].image_id, "a.jpg");
    }

    #[test]
    fn join_preserves_box_count() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut annots = Vec::new();
        for img in 0..50 {
            for _ in 0..rng.random_range(0..4) {
                let x: f64 = rng.random_range(0.0..600.0);
                let y: f64 = rng.random_range(0.0..440.0);
                annots.push(Annotation::new(
                    format!("img{img:03}.jpg"),
                    bb(x, y, x + 10.0, y + 10.0),
                ));
            }
        }
        let total = annots.len();
        let pairs: Vec<DuplicatePair> = (0..10)
            .map(|i| DuplicatePair {
                image_id_a: format!("img{:03}.jpg", i * 2),
                image_id_b: format!("img{:03}.jpg", i * 2 + 1),
            })
            .collect();
        let (joined, _) = join_duplicates(annots, &pairs);
        assert_eq!(joined.len(), total);
    }

    #[test]
    fn merge_joins_intersecting_pair() {
        let annots = vec![
            Annotation::new("x.jpg", bb(2.0, 3.0, 8.0, 9.0)),
            Annotation::new("x.jpg", bb(5.0, 1.0, 10.0, 7.0)),
        ];
        let merged = merge_intersecting(annots);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].bbox, bb(2.0, 1.0, 10.0, 9.0));
    }

    #[test]
    fn merge_leaves_disjoint_boxes_alone() {
        let annots = vec![
            Annotation::new("x.jpg", bb(0.0, 0.0, 5.0, 5.0)),
            Annotation::new("x.jpg", bb(10.0, 10.0, 20.0, 20.0)),
        ];
        assert_eq!(merge_intersecting(annots.clone()), annots);
    }

    #[test]
    fn merge_chains_through_transitive_overlap() {
        // a and b intersect, b and c intersect, a and c do not
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let b = bb(8.0, 0.0, 20.0, 10.0);
        let c = bb(18.0, 0.0, 30.0, 10.0);
        let annots = vec![
            Annotation::new("x.jpg", a),
            Annotation::new("x.jpg", b),
            Annotation::new("x.jpg", c),
        ];
        let merged = merge_intersecting(annots);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].bbox, a.merge(&b).merge(&c));
    }

    #[test]
    fn merge_ignores_edge_touching_boxes() {
        let annots = vec![
            Annotation::new("x.jpg", bb(0.0, 0.0, 5.0, 5.0)),
            Annotation::new("x.jpg", bb(5.0, 0.0, 10.0, 5.0)),
        ];
        assert_eq!(merge_intersecting(annots).len(), 2);
    }

    #[test]
    fn merge_is_a_fixpoint_on_random_inputs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(1..10);
            let annots: Vec<Annotation> = (0..n)
                .map(|_| {
                    let x: f64 = rng.random_range(0.0..80.0);
                    let y: f64 = rng.random_range(0.0..80.0);
                    let w: f64 = rng.random_range(1.0..40.0);
                    let h: f64 = rng.random_range(1.0..40.0);
                    Annotation::new("img.jpg", bb(x, y, x + w, y + h))
                })
                .collect();
            let once = merge_intersecting(annots.clone());
            let twice = merge_intersecting(once.clone());
            assert_eq!(once, twice);
            for (i, a) in once.iter().enumerate() {
                for b in once.iter().skip(i + 1) {
                    assert_eq!(a.bbox.intersection_area(&b.bbox), 0.0);
                }
                assert!(annots.iter().any(|orig| a.bbox.contains(&orig.bbox)));
            }
        }
    }

    #[test]
    fn validate_reports_each_issue_kind() {
        let metas = vec![ImageMeta {
            image_id: "a.jpg".into(),
            width: 640,
            height: 480,
        }];
        let annots = vec![
            Annotation::new("a.jpg", bb(0.0, 0.0, 700.0, 10.0)),
            Annotation::new("a.jpg", bb(1.0, 1.0, 1.0, 5.0)),
            Annotation::new("b.jpg", bb(0.0, 0.0, 10.0, 10.0)),
            Annotation::new("a.jpg", bb(0.0, 0.0, 700.0, 10.0)),
        ];
        let issues = validate(&annots, &metas);
        assert!(issues.contains(&Issue::OutOfBounds {
            row: 0,
            image_id: "a.jpg".into()
        }));
        assert!(issues.contains(&Issue::ZeroArea {
            row: 1,
            image_id: "a.jpg".into()
        }));
        assert!(issues.contains(&Issue::MissingMeta {
            row: 2,
            image_id: "b.jpg".into()
        }));
        assert!(issues.contains(&Issue::DuplicateRow {
            row: 3,
            first_row: 0,
            image_id: "a.jpg".into()
        }));
    }

    #[test]
    fn validate_clean_set_is_empty() {
        let metas = vec![ImageMeta {
            image_id: "a.jpg".into(),
            width: 640,
            height: 480,
        }];
        let annots = vec![Annotation::new("a.jpg", bb(5.0, 5.0, 50.0, 60.0))];
        assert!(validate(&annots, &metas).is_empty());
    }

    #[test]
    fn pseudo_label_filters_and_strips_scores() {
        let dets = vec![
            Detection::new("a.jpg", bb(0.0, 0.0, 10.0, 10.0), 0.9),
            Detection::new("a.jpg", bb(5.0, 5.0, 15.0, 15.0), 0.65),
        ];
        let labels = pseudo_label(&dets, 0.70);
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].bbox, bb(0.0, 0.0, 10.0, 10.0));
        assert_eq!(pseudo_label(&dets, 0.0).len(), 2);
    }

    #[test]
    fn pseudo_label_matches_linear_scan_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let dets: Vec<Detection> = (0..2200)
            .map(|i| {
                Detection::new(
                    format!("u{i:04}.jpg"),
                    bb(0.0, 0.0, 10.0, 10.0),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        let expected = dets.iter().filter(|d| d.score >= 0.70).count();
        assert_eq!(pseudo_label(&dets, 0.70).len(), expected);
    }
}
