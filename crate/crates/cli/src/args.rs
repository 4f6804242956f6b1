use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sbs_core::blur_map::{HifstParams, LayerSet};
use sbs_core::loss_numerics::TargetSource;
use sbs_core::synth::Pattern;

#[derive(Debug, Parser)]
#[command(name = "sbs", version, about = "Selective blurry-slice stacking for z-stack microscopy")]
pub struct Cli {
    /// TOML file overriding built-in defaults; command-line flags still win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Add wall-clock stage timings to the report. Reports are otherwise
    /// bit-reproducible.
    #[arg(long, global = true)]
    pub timings: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-pixel blur detection map of one image.
    Blurmap(BlurmapArgs),
    /// Rank slices, keep the top k and fuse them into one image.
    Stack(StackArgs),
    /// Checkpoint stability of pseudo-masks and reliable-sample selection.
    Stability(StabilityArgs),
    /// Training-loss numerics.
    #[command(subcommand)]
    Loss(LossCommand),
    /// Generate a synthetic z-stack with ground truth.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LayersArg {
    PerScaleAll,
    FirstSumM,
}

impl From<LayersArg> for LayerSet {
    fn from(l: LayersArg) -> Self {
        match l {
            LayersArg::PerScaleAll => LayerSet::PerScaleAll,
            LayersArg::FirstSumM => LayerSet::FirstSumM,
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct HifstFlags {
    /// Denoising Gaussian standard deviation, px.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Number of DCT patch scales (7, 15, 31, ... px).
    #[arg(long)]
    pub scales: Option<usize>,
    /// Side of the entropy neighbourhood (odd).
    #[arg(long)]
    pub entropy_patch: Option<usize>,
    /// Guided-filter radius, px.
    #[arg(long)]
    pub smoothing_radius: Option<usize>,
    /// Guided-filter regularizer.
    #[arg(long)]
    pub smoothing_eps: Option<f64>,
    /// Which sorted DCT layers enter the per-pixel maximum.
    #[arg(long, value_enum)]
    pub layers: Option<LayersArg>,
}

impl HifstFlags {
    pub fn apply(&self, p: &mut HifstParams) {
        if let Some(v) = self.sigma {
            p.sigma = v;
        }
        if let Some(v) = self.scales {
            p.scale_count = v;
        }
        if let Some(v) = self.entropy_patch {
            p.entropy_patch = v;
        }
        if let Some(v) = self.smoothing_radius {
            p.smoothing_radius = v;
        }
        if let Some(v) = self.smoothing_eps {
            p.smoothing_eps = v;
        }
        if let Some(v) = self.layers {
            p.layers = v.into();
        }
    }
}

#[derive(Debug, Args)]
pub struct BlurmapArgs {
    /// 8/16-bit grayscale PNG or TIFF.
    #[arg(long)]
    pub input: PathBuf,
    /// Float map output (PFM).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write an 8-bit PNG rendering of the map.
    #[arg(long, value_name = "FILE")]
    pub png: Option<PathBuf>,
    /// Also write the map blended at 50% over the source image.
    #[arg(long, value_name = "FILE")]
    pub overlay: Option<PathBuf>,
    /// JSON report path, `-` for standard output.
    #[arg(long, value_name = "FILE")]
    pub report: Option<String>,
    #[command(flatten)]
    pub hifst: HifstFlags,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum BitDepth {
    #[value(name = "8")]
    Eight,
    #[default]
    #[value(name = "16")]
    Sixteen,
}

#[derive(Debug, Args)]
pub struct StackArgs {
    /// Directory of slices (sorted by file name) or a JSON manifest.
    #[arg(long)]
    pub input: PathBuf,
    /// Number of slices to keep.
    #[arg(long)]
    pub k: Option<usize>,
    /// Register the kept slices onto the best one before fusing.
    #[arg(long)]
    pub align: bool,
    /// RANSAC seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gaussian pre-blur before the fusion Laplacian, px.
    #[arg(long)]
    pub fusion_sigma: Option<f64>,
    /// Fused image (PNG).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = BitDepth::Sixteen)]
    pub bit_depth: BitDepth,
    /// Directory receiving one PFM blur map per slice.
    #[arg(long, value_name = "DIR")]
    pub maps: Option<PathBuf>,
    /// JSON report path, `-` for standard output.
    #[arg(long, value_name = "FILE")]
    pub report: Option<String>,
    #[command(flatten)]
    pub hifst: HifstFlags,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// One directory of 8-bit label PNGs per checkpoint, final checkpoint
    /// last. Masks are paired by file name.
    #[arg(long, num_args = 2.., required = true, value_name = "DIR")]
    pub checkpoints: Vec<PathBuf>,
    /// Reliability threshold; samples need a score strictly above it.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Number of classes including background (default: largest label + 1).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Slices the stacked samples were fused from (recorded in the output).
    #[arg(long)]
    pub slice_count: Option<usize>,
    /// JSON output path, `-` for standard output.
    #[arg(long, default_value = "-", value_name = "FILE")]
    pub out: String,
}

#[derive(Debug, Subcommand)]
pub enum LossCommand {
    /// Confidence-gated consistency loss between weak and strong predictions.
    Consistency(ConsistencyArgs),
    /// Weighted total of given loss components.
    Total(TotalArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TargetArg {
    Weak,
    Strong,
}

impl From<TargetArg> for TargetSource {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Weak => TargetSource::Weak,
            TargetArg::Strong => TargetSource::Strong,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConsistencyArgs {
    /// Weak-augmentation predictions (.pfmstack with `<file>.json` sidecar).
    #[arg(long)]
    pub weak: PathBuf,
    /// Strong-augmentation predictions, same layout.
    #[arg(long)]
    pub strong: PathBuf,
    /// Confidence gate on the weak prediction.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Weight of the consistency term in the total.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Soft cross entropy instead of the hard pseudo-label form.
    #[arg(long)]
    pub soft: bool,
    /// Which prediction provides the target distribution.
    #[arg(long, value_enum, default_value_t = TargetArg::Weak)]
    pub target: TargetArg,
    /// Probability floor before logarithms.
    #[arg(long)]
    pub floor: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub l_cls: f64,
    #[arg(long, default_value_t = 0.0)]
    pub l_box: f64,
    #[arg(long, default_value_t = 0.0)]
    pub l_mask: f64,
    /// JSON report path, `-` for standard output.
    #[arg(long, default_value = "-", value_name = "FILE")]
    pub report: String,
}

#[derive(Debug, Args)]
pub struct TotalArgs {
    #[arg(long)]
    pub l_cls: f64,
    #[arg(long)]
    pub l_box: f64,
    #[arg(long)]
    pub l_mask: f64,
    #[arg(long)]
    pub l_u: f64,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value = "-", value_name = "FILE")]
    pub report: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PatternArg {
    Checker,
    Blobs,
    TextLike,
}

impl From<PatternArg> for Pattern {
    fn from(p: PatternArg) -> Self {
        match p {
            PatternArg::Checker => Pattern::Checker,
            PatternArg::Blobs => Pattern::Blobs,
            PatternArg::TextLike => Pattern::TextLike,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Full generator spec (JSON). Without it a randomized focal series is
    /// generated from the flags below.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub z_count: Option<usize>,
    /// Slices with sharp content in the focal series.
    #[arg(long)]
    pub in_focus: Option<usize>,
    #[arg(long)]
    pub noise: Option<f32>,
    #[arg(long, value_enum)]
    pub pattern: Option<PatternArg>,
    /// JSON report path, `-` for standard output.
    #[arg(long, value_name = "FILE")]
    pub report: Option<String>,
}
