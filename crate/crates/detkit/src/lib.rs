//! detkit: a box-level object-detection toolkit.
//!
//! Everything here operates on annotation/prediction files and raw RGB
//! rasters, with no neural-network dependency: exact box geometry and
//! grid-offset codecs, annotation cleansing (duplicate joining, intersection
//! merging), suppression variants (hard NMS, score-decay NMS, overlap
//! removal), weighted boxes fusion and test-time-augmentation merging, the
//! count-based evaluation protocol (TP/FP, recall/precision/F1, average
//! precision), and the raster pre-processing and augmentation operations the
//! pipelines call for.
//!
//! All operations are pure and deterministic; randomized behavior flows
//! through explicit seeds. With the default `parallel` feature, data-parallel
//! inner loops fan out over a rayon pool without changing any output byte.

pub mod annotations;
pub mod ensemble;
pub mod geometry;
pub mod imageops;
pub mod metrics;
pub mod parallel;
pub mod postprocess;

pub use annotations::{Annotation, Detection, DuplicatePair, ImageMeta};
pub use geometry::{AffineMap, BBox, NormBox, YoloOffsets};
