//! `detkit`: every pipeline stage as a subcommand over the documented file
//! formats.
//!
//! Exit codes: 0 on success, 1 on input or validation errors (diagnostics on
//! stderr), 2 on usage errors. Outputs are written to a temporary file and
//! renamed into place, so a failed run never leaves a partial file.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "detkit", version, about = "Detection post-processing, ensembling, and evaluation toolkit")]
struct Cli {
    /// Print a machine-readable JSON description of all subcommands and flags
    #[arg(long)]
    help_json: bool,

    /// Bound worker parallelism across images (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Match predictions against ground truth and report TP/FP, recall,
    /// precision, F1, and average precision as JSON
    Evaluate {
        /// Ground-truth CSV (filename,xmin,ymin,xmax,ymax)
        #[arg(long)]
        gt: PathBuf,
        /// Prediction CSV (filename,xmin,ymin,xmax,ymax,score)
        #[arg(long)]
        pred: PathBuf,
        /// IoU threshold for a true positive
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        /// Average-precision interpolation: allpoint or elevenpoint
        #[arg(long, default_value = "allpoint")]
        ap_mode: String,
        /// Output JSON path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate at several IoU thresholds and emit a JSON array of reports
    Sweep {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Comma-separated IoU thresholds, e.g. 0.3,0.4,0.5
        #[arg(long, default_value = "0.3,0.4,0.5")]
        ious: String,
        #[arg(long, default_value = "allpoint")]
        ap_mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy non-maximum suppression per image
    Nms {
        #[arg(long)]
        pred: PathBuf,
        /// Suppression IoU threshold
        #[arg(long, default_value_t = 0.3)]
        iou: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score-decay (soft) suppression per image
    Softnms {
        #[arg(long)]
        pred: PathBuf,
        /// Decay family: gaussian or linear
        #[arg(long, default_value = "gaussian")]
        decay: String,
        /// Gaussian decay width
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        /// Overlap at which the linear decay engages
        #[arg(long, default_value_t = 0.5)]
        iou_trigger: f64,
        /// Drop decayed detections below this score
        #[arg(long, default_value_t = 0.5)]
        prune: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drop detections below a confidence threshold
    Filter {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        min_score: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Among heavily-overlapping detections keep only the most confident
    RemoveOverlaps {
        #[arg(long)]
        pred: PathBuf,
        /// Pairwise IoU defining an overlap group
        #[arg(long, default_value_t = 0.8)]
        overlap: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Confidence filter that leaves a lone detection untouched
    AdaptiveSuppress {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        thresh: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fuse detections from several models with weighted boxes fusion
    Wbf {
        /// Prediction CSV per model (repeat the flag)
        #[arg(long, required = true)]
        pred: Vec<PathBuf>,
        /// Comma-separated per-model weights (default: equal)
        #[arg(long)]
        weights: Option<String>,
        /// Cluster trigger IoU
        #[arg(long, default_value_t = 0.55)]
        iou: f64,
        /// Fused score mode: mean or mean_rescaled
        #[arg(long, default_value = "mean_rescaled")]
        score_mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Map augmented-view predictions back to original coordinates, pool,
    /// and collapse with NMS
    TtaMerge {
        /// Prediction CSV per view (repeat the flag)
        #[arg(long, required = true)]
        pred: Vec<PathBuf>,
        /// View transform per prediction file, in order: identity,
        /// hflip:WIDTH, vflip:HEIGHT, scale:SX[,SY], or
        /// matrix:a,b,tx,c,d,ty (view -> original coordinates)
        #[arg(long, required = true)]
        view: Vec<String>,
        #[arg(long, default_value_t = 0.3)]
        nms_iou: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export confident detections as annotations for self-training
    PseudoLabel {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        min_score: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Join duplicate-image annotations, then merge intersecting boxes
    MergeAnnotations {
        #[arg(long)]
        annotations: PathBuf,
        /// Duplicate-pair CSV (filename_a,filename_b); optional
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check annotations against image metadata and report issues
    Validate {
        #[arg(long)]
        annotations: PathBuf,
        /// Image dimensions CSV (filename,width,height)
        #[arg(long)]
        metas: PathBuf,
    },
    /// Convert between corner-format CSV and normalized per-image label files
    Convert {
        /// Target format: yolo or csv
        #[arg(long)]
        to: String,
        /// Source CSV (required when --to yolo)
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Source label directory (required when --to csv)
        #[arg(long)]
        yolo_dir: Option<PathBuf>,
        #[arg(long)]
        metas: PathBuf,
        /// Output label directory (when --to yolo)
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Output CSV (when --to csv; stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply an augmentation manifest to raster images
    Augment {
        /// Manifest CSV: input,input2,output,op,params,seed
        #[arg(long)]
        manifest: PathBuf,
        /// Directory image paths are resolved against (default: the
        /// manifest's directory)
        #[arg(long)]
        images_root: Option<PathBuf>,
        /// Input boxes keyed by the manifest's input column
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Where to write output boxes (detection CSV; score carries the
        /// blend weight)
        #[arg(long)]
        out_annotations: Option<PathBuf>,
    },
    /// Cluster annotation box dimensions into anchor priors
    Anchors {
        #[arg(long)]
        annotations: PathBuf,
        /// Number of anchors
        #[arg(short, long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn help_json() -> String {
    let cmd = Cli::command();
    let subcommands: Vec<serde_json::Value> = cmd
        .get_subcommands()
        .map(|sub| {
            let args: Vec<serde_json::Value> = sub
                .get_arguments()
                .filter(|a| a.get_id() != "help")
                .map(|a| {
                    serde_json::json!({
                        "long": a.get_long(),
                        "required": a.is_required_set(),
                        "default": a.get_default_values().first()
                            .map(|v| v.to_string_lossy().into_owned()),
                        "help": a.get_help().map(ToString::to_string),
                    })
                })
                .collect();
            serde_json::json!({
                "name": sub.get_name(),
                "about": sub.get_about().map(ToString::to_string),
                "args": args,
            })
        })
        .collect();
    serde_json::json!({
        "name": "detkit",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommands": subcommands,
    })
    .to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.help_json {
        println!("{}", help_json());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        Cli::command().print_help().ok();
        return ExitCode::from(2);
    };
    let outcome = detkit::parallel::run_with_threads(cli.jobs, || commands::run(command));
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
