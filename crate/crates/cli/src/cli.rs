//! Argument parsing. Configuration flags override `--config`, which
//! overrides the built-in defaults.

use crate::commands;
use crate::config::{InitMethod, PipelineConfig, PolicyName};
use crate::error::Result;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "airmap", version, about = "Airway reconstruction fusion, registration and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic airway dataset, including the CT cloud.
    Synth {
        /// Output dataset directory.
        out: PathBuf,
        /// Overrides `synth.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Check a dataset's layout and every file in it.
    Validate { dataset: PathBuf },
    /// Fuse keyframes into a labeled point cloud.
    Fuse {
        dataset: PathBuf,
        /// Output PLY file.
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Register a reconstruction to the CT cloud.
    Register {
        recon: PathBuf,
        ct: PathBuf,
        /// Initial transform file; skips automatic initialization.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Directory for transform.toml, aligned.ply and registration.log.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Compute metrics and the distance heatmap.
    Eval {
        recon: PathBuf,
        ct: PathBuf,
        /// Transform file from `register`; identity when omitted.
        #[arg(long)]
        transform: Option<PathBuf>,
        /// Dataset holding the keyframes used for segmentation precision.
        #[arg(long)]
        dataset: PathBuf,
        /// Directory for report.toml and heatmap.ply.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run fuse, register and eval in sequence.
    Pipeline {
        dataset: PathBuf,
        /// CT cloud; defaults to the dataset's ct_ground_truth.ply.
        #[arg(long)]
        ct: Option<PathBuf>,
        /// Initial transform file; skips automatic initialization.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Directory for every intermediate and final output.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use every n-th frame as a keyframe.
    #[arg(long)]
    pub frame_stride: Option<usize>,
    /// Fusion: reject inverse depths at or below this (1/mm).
    #[arg(long)]
    pub min_inv_depth: Option<f64>,
    /// Fusion: reject inverse depths at or above this (1/mm).
    #[arg(long)]
    pub max_inv_depth: Option<f64>,
    /// Fusion: skip this many pixels at each image border.
    #[arg(long)]
    pub border_margin: Option<usize>,
    /// Fusion: sample every n-th pixel.
    #[arg(long)]
    pub pixel_stride: Option<usize>,
    /// Fusion: voxel size for downsampling in mm; 0 disables it.
    #[arg(long)]
    pub voxel_size: Option<f64>,
    /// Registration start when no --init file is given.
    #[arg(long, value_enum)]
    pub init_method: Option<InitMethod>,
    /// ICP iteration cap.
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// ICP stops when the relative RMS change falls below this.
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// ICP correspondence gate in mm.
    #[arg(long)]
    pub max_corr_dist: Option<f64>,
    /// ICP: fraction of the worst correspondences dropped.
    #[arg(long)]
    pub trim_fraction: Option<f64>,
    /// ICP estimates a global scale.
    #[arg(long)]
    pub with_scale: Option<bool>,
    /// ICP runs on at most this many reconstruction points.
    #[arg(long)]
    pub max_points: Option<usize>,
    /// Registration fails when the final RMS exceeds this (mm).
    #[arg(long)]
    pub max_rms: Option<f64>,
    /// Coverage distance threshold in mm.
    #[arg(long)]
    pub coverage_threshold: Option<f64>,
    /// Distance mapped to full red in the heatmap, mm.
    #[arg(long)]
    pub heatmap_d_max: Option<f64>,
    /// Keyframes used for segmentation precision.
    #[arg(long, value_enum)]
    pub precision_policy: Option<PolicyName>,
    /// Synthetic sequence length.
    #[arg(long)]
    pub n_frames: Option<usize>,
    /// Number of synthetic CT surface samples.
    #[arg(long)]
    pub ct_points: Option<usize>,
    /// Gaussian depth noise for synthetic frames, mm.
    #[arg(long)]
    pub depth_noise_std: Option<f64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $($target:ident).+;)*) => {
                $(if let Some(v) = self.$field { c.$($target).+ = v; })*
            };
        }
        set! {
            frame_stride => frame_stride;
            min_inv_depth => fusion.min_inv_depth;
            max_inv_depth => fusion.max_inv_depth;
            border_margin => fusion.border_margin;
            pixel_stride => fusion.pixel_stride;
            voxel_size => fusion.voxel_size;
            init_method => registration.init;
            max_iterations => registration.max_iterations;
            rel_tol => registration.rel_tol;
            max_corr_dist => registration.max_corr_dist;
            trim_fraction => registration.trim_fraction;
            with_scale => registration.with_scale;
            max_points => registration.max_points;
            max_rms => registration.max_rms;
            coverage_threshold => eval.coverage_threshold;
            heatmap_d_max => eval.heatmap_d_max;
            precision_policy => eval.precision_policy;
            n_frames => synth.n_frames;
            ct_points => synth.ct_points;
            depth_noise_std => synth.depth_noise_std;
        }
        c.validate()?;
        Ok(c)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, seed, cfg } => {
            let mut c = cfg.resolve()?;
            if let Some(s) = seed {
                c.synth.seed = s;
            }
            commands::synth(&c, &out)
        }
        Command::Validate { dataset } => commands::validate(&dataset),
        Command::Fuse { dataset, out, cfg } => {
            commands::fuse(&dataset, &cfg.resolve()?, &out).map(|_| ())
        }
        Command::Register {
            recon,
            ct,
            init,
            out_dir,
            cfg,
        } => commands::register(&recon, &ct, &cfg.resolve()?, init.as_deref(), &out_dir).map(|_| ()),
        Command::Eval {
            recon,
            ct,
            transform,
            dataset,
            out_dir,
            cfg,
        } => commands::eval(
            &recon,
            &ct,
            transform.as_deref(),
            &dataset,
            &cfg.resolve()?,
            &out_dir,
        )
        .map(|_| ()),
        Command::Pipeline {
            dataset,
            ct,
            init,
            out_dir,
            cfg,
        } => commands::pipeline(
            &dataset,
            &cfg.resolve()?,
            ct.as_deref(),
            init.as_deref(),
            &out_dir,
        )
        .map(|_| ()),
    }
}
