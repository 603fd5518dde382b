//! Pipeline configuration, read from TOML. Every key is optional; missing
//! keys take the defaults below. Unknown keys are rejected.
//!
//! ```toml
//! frame_stride = 2                 # use every n-th keyframe (by pose order)
//!
//! [fusion]
//! min_inv_depth = 0.0033333333333333335  # 1/mm, exclusive (far limit 300 mm)
//! max_inv_depth = 1.0              # 1/mm, exclusive (near limit 1 mm)
//! border_margin = 8                # px, in depth-map pixels
//! pixel_stride = 1
//! voxel_size = 0.0                 # mm; 0 disables downsampling
//!
//! [registration]
//! init = "auto"                    # auto | pca | identity
//! max_iterations = 60
//! rel_tol = 1e-7
//! max_corr_dist = 10.0             # mm
//! trim_fraction = 0.2
//! with_scale = true
//! max_points = 20000               # ICP source subsample (evenly strided)
//! max_rms = 2.0                    # mm; a larger final RMS fails registration
//!
//! [eval]
//! coverage_threshold = 1.0         # mm
//! heatmap_d_max = 5.0              # mm, distance mapped to full red
//! precision_policy = "all_keyframes"   # all_keyframes | source_frame
//!
//! [synth]
//! seed = 7
//! ct_points = 1000000
//! depth_noise_std = 0.0            # mm
//! width = 320
//! height = 240
//! fx = 100.0
//! fy = 100.0
//! cx = 159.5
//! cy = 119.5
//! cylinder_radius = 9.0
//! cylinder_length = 80.0
//! tumor = true
//! tumor_center = [9.0, 0.0, 40.0]
//! tumor_radius = 5.0
//! n_frames = 40
//! start_z = 2.0
//! end_z = 78.0
//! lateral_amplitude = 2.0
//! look_ahead = 10.0
//! return_pass = true
//! ```

use crate::error::{CliError, Result};
use crate::formats::read_text;
use airmap::fusion::FusionFilter;
use airmap::geometry::{CameraIntrinsics, Vec3};
use airmap::metrics::{EvalOptions, PrecisionPolicy};
use airmap::registration::IcpParams;
use airmap::synth::{
    default_intrinsics, AirwayScene, SequenceOptions, TrajectorySpec, Tumor,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub frame_stride: usize,
    pub fusion: FusionConfig,
    pub registration: RegistrationConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frame_stride: 2,
            fusion: FusionConfig::default(),
            registration: RegistrationConfig::default(),
            eval: EvalConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub min_inv_depth: f64,
    pub max_inv_depth: f64,
    pub border_margin: usize,
    pub pixel_stride: usize,
    pub voxel_size: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let f = FusionFilter::default();
        Self {
            min_inv_depth: f.min_inv_depth,
            max_inv_depth: f.max_inv_depth,
            border_margin: f.border_margin,
            pixel_stride: f.pixel_stride,
            voxel_size: 0.0,
        }
    }
}

impl FusionConfig {
    pub fn filter(&self) -> FusionFilter {
        FusionFilter {
            min_inv_depth: self.min_inv_depth,
            max_inv_depth: self.max_inv_depth,
            border_margin: self.border_margin,
            pixel_stride: self.pixel_stride,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// ICP from both identity and PCA alignment; keep the better fit.
    Auto,
    Pca,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    pub init: InitMethod,
    pub max_iterations: usize,
    pub rel_tol: f64,
    pub max_corr_dist: f64,
    pub trim_fraction: f64,
    pub with_scale: bool,
    pub max_points: usize,
    pub max_rms: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        let p = IcpParams::default();
        Self {
            init: InitMethod::Auto,
            max_iterations: p.max_iterations,
            rel_tol: p.rel_tol,
            max_corr_dist: p.max_corr_dist,
            trim_fraction: p.trim_fraction,
            with_scale: p.with_scale,
            max_points: 20_000,
            max_rms: 2.0,
        }
    }
}

impl RegistrationConfig {
    pub fn icp_params(&self) -> IcpParams {
        IcpParams {
            max_iterations: self.max_iterations,
            rel_tol: self.rel_tol,
            max_corr_dist: self.max_corr_dist,
            trim_fraction: self.trim_fraction,
            with_scale: self.with_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    AllKeyframes,
    SourceFrame,
}

impl From<PolicyName> for PrecisionPolicy {
    fn from(p: PolicyName) -> Self {
        match p {
            PolicyName::AllKeyframes => PrecisionPolicy::AllKeyframes,
            PolicyName::SourceFrame => PrecisionPolicy::SourceFrameOnly,
        }
    }
}

pub fn policy_name(p: PrecisionPolicy) -> &'static str {
    match p {
        PrecisionPolicy::AllKeyframes => "all_keyframes",
        PrecisionPolicy::SourceFrameOnly => "source_frame",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub coverage_threshold: f64,
    pub heatmap_d_max: f64,
    pub precision_policy: PolicyName,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let o = EvalOptions::default();
        Self {
            coverage_threshold: o.coverage_threshold,
            heatmap_d_max: o.heatmap_d_max,
            precision_policy: PolicyName::AllKeyframes,
        }
    }
}

impl EvalConfig {
    pub fn options(&self) -> EvalOptions {
        EvalOptions {
            coverage_threshold: self.coverage_threshold,
            heatmap_d_max: self.heatmap_d_max,
            policy: self.precision_policy.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub ct_points: usize,
    pub depth_noise_std: f64,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub cylinder_radius: f64,
    pub cylinder_length: f64,
    pub tumor: bool,
    pub tumor_center: [f64; 3],
    pub tumor_radius: f64,
    pub n_frames: usize,
    pub start_z: f64,
    pub end_z: f64,
    pub lateral_amplitude: f64,
    pub look_ahead: f64,
    pub return_pass: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let k = default_intrinsics();
        let scene = AirwayScene::default();
        let tumor = scene.tumor.expect("default scene has a tumor");
        let t = TrajectorySpec::default();
        let o = SequenceOptions::default();
        Self {
            seed: o.seed,
            ct_points: 1_000_000,
            depth_noise_std: o.depth_noise_std,
            width: k.width,
            height: k.height,
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            cylinder_radius: scene.cylinder_radius,
            cylinder_length: scene.cylinder_length,
            tumor: true,
            tumor_center: tumor.center.into(),
            tumor_radius: tumor.radius,
            n_frames: t.n_frames,
            start_z: t.start_z,
            end_z: t.end_z,
            lateral_amplitude: t.lateral_amplitude,
            look_ahead: t.look_ahead,
            return_pass: t.return_pass,
        }
    }
}

impl SynthConfig {
    pub fn scene(&self) -> AirwayScene {
        AirwayScene {
            cylinder_radius: self.cylinder_radius,
            cylinder_length: self.cylinder_length,
            tumor: self.tumor.then(|| Tumor {
                center: Vec3::from(self.tumor_center),
                radius: self.tumor_radius,
            }),
        }
    }

    pub fn trajectory(&self) -> TrajectorySpec {
        TrajectorySpec {
            n_frames: self.n_frames,
            start_z: self.start_z,
            end_z: self.end_z,
            lateral_amplitude: self.lateral_amplitude,
            look_ahead: self.look_ahead,
            return_pass: self.return_pass,
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::pinhole(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            .map_err(|e| CliError::Validation(format!("synth intrinsics: {e}")))
    }

    pub fn sequence_options(&self) -> SequenceOptions {
        SequenceOptions {
            depth_noise_std: self.depth_noise_std,
            seed: self.seed,
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?).map_err(|e| CliError::format(path, e))
    }

    /// Checks cross-field constraints that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Validation(format!("config: {m}")));
        if self.frame_stride == 0 {
            return bad("frame_stride must be >= 1".into());
        }
        self.fusion
            .filter()
            .validate()
            .map_err(|e| CliError::Validation(format!("config: {e}")))?;
        let v = self.fusion.voxel_size;
        if !(v.is_finite() && v >= 0.0) {
            return bad(format!("voxel_size {v} must be >= 0"));
        }
        self.registration
            .icp_params()
            .validate()
            .map_err(|e| CliError::Validation(format!("config: {e}")))?;
        if self.registration.max_points < 3 {
            return bad("registration.max_points must be >= 3".into());
        }
        let m = self.registration.max_rms;
        if !(m.is_finite() && m > 0.0) {
            return bad(format!("registration.max_rms {m} must be > 0"));
        }
        let e = &self.eval;
        if !(e.coverage_threshold.is_finite() && e.coverage_threshold >= 0.0) {
            return bad(format!("coverage_threshold {} must be >= 0", e.coverage_threshold));
        }
        if !(e.heatmap_d_max.is_finite() && e.heatmap_d_max > 0.0) {
            return bad(format!("heatmap_d_max {} must be > 0", e.heatmap_d_max));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(PipelineConfig::parse("").unwrap(), PipelineConfig::default());
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn serialized_defaults_parse_back() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn documented_example_matches_defaults() {
        let doc: String = include_str!("config.rs")
            .lines()
            .take_while(|l| l.starts_with("//!"))
            .skip_while(|l| !l.contains("```toml"))
            .skip(1)
            .take_while(|l| !l.contains("```"))
            .map(|l| l.trim_start_matches("//!").trim_start_matches(' '))
            .collect::<Vec<_>>()
            .join("\n");
        assert_eq!(PipelineConfig::parse(&doc).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn partial_sections_and_unknown_keys() {
        let c = PipelineConfig::parse("frame_stride = 1\n[eval]\nprecision_policy = \"source_frame\"\n")
            .unwrap();
        assert_eq!(c.frame_stride, 1);
        assert_eq!(c.eval.precision_policy, PolicyName::SourceFrame);
        assert_eq!(c.fusion, FusionConfig::default());
        assert!(PipelineConfig::parse("[fusion]\nmargin = 3\n").is_err());
        assert!(PipelineConfig::parse("[registration]\ninit = \"manual\"\n").is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let mut c = PipelineConfig::default();
        c.frame_stride = 0;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.registration.trim_fraction = 1.0;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.fusion.min_inv_depth = 2.0;
        assert!(c.validate().is_err());
    }
}
