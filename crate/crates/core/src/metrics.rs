//! Reconstruction and segmentation metrics.
//!
//! Distances run from reconstruction to CT, except coverage, which asks how
//! much of the CT surface has a reconstructed point nearby. All reductions
//! are sequential over per-point results, so outputs do not depend on thread
//! scheduling.

use crate::fusion::KeyframeRecord;
use crate::geometry::{CameraIntrinsics, Label, LabeledPointCloud, Pose, SimilarityTransform, Vec3};
use crate::image::{rescale_mask_nearest, round_half_up, SegmentationMask};
use crate::registration::{NearestNeighborIndex, RegistrationError};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{0} point cloud is empty")]
    EmptyInput(&'static str),
    #[error("no keyframes supplied")]
    NoKeyframes,
    #[error("cloud has no obstruction points")]
    NoObstructionPoints,
    #[error("no obstruction point projected inside any mask ({excluded} projections excluded)")]
    NoValidProjections { excluded: usize },
    #[error("source-frame policy needs one source index per point ({got} for {points} points)")]
    MissingSourceFrames { points: usize, got: usize },
    #[error("source frame {index} out of range for {keyframes} keyframes")]
    BadSourceFrame { index: usize, keyframes: usize },
    #[error("heatmap range must be positive and finite, got {0}")]
    InvalidRange(f64),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
}

/// Distance from every point of `from` to its nearest neighbor in `to`.
pub fn closest_distances(from: &[Vec3], to: &NearestNeighborIndex) -> Vec<f64> {
    to.nearest_many(from).iter().map(|n| n.distance).collect()
}

/// Summary statistics of a distance list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceSummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    /// Sum in list order divided by the count.
    pub mean: f64,
    /// Mean of the two middle values for even counts.
    pub median: f64,
}

impl DistanceSummary {
    pub fn of(distances: &[f64]) -> Option<Self> {
        if distances.is_empty() {
            return None;
        }
        let mut sorted = distances.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Some(Self {
            count: n,
            min: sorted[0],
            max: sorted[n - 1],
            mean: distances.iter().sum::<f64>() / n as f64,
            median,
        })
    }
}

fn summary(recon: &[Vec3], ct: &NearestNeighborIndex) -> Result<DistanceSummary, MetricsError> {
    DistanceSummary::of(&closest_distances(recon, ct)).ok_or(MetricsError::EmptyInput("reconstruction"))
}

/// Percentage of CT points with a reconstructed point within `threshold` mm.
pub fn coverage(
    ct: &[Vec3],
    recon: &NearestNeighborIndex,
    threshold: f64,
) -> Result<f64, MetricsError> {
    if ct.is_empty() {
        return Err(MetricsError::EmptyInput("CT"));
    }
    let covered = closest_distances(ct, recon)
        .iter()
        .filter(|&&d| d <= threshold)
        .count();
    Ok(100.0 * covered as f64 / ct.len() as f64)
}

/// Mean reconstruction-to-CT closest-point distance.
pub fn chamfer_one_sided(recon: &[Vec3], ct: &NearestNeighborIndex) -> Result<f64, MetricsError> {
    Ok(summary(recon, ct)?.mean)
}

/// Largest reconstruction-to-CT closest-point distance.
pub fn hausdorff_one_sided(recon: &[Vec3], ct: &NearestNeighborIndex) -> Result<f64, MetricsError> {
    Ok(summary(recon, ct)?.max)
}

pub fn median_closest(recon: &[Vec3], ct: &NearestNeighborIndex) -> Result<f64, MetricsError> {
    Ok(summary(recon, ct)?.median)
}

/// Which keyframes an obstruction point is projected into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrecisionPolicy {
    #[default]
    AllKeyframes,
    /// Only the keyframe the point was fused from.
    SourceFrameOnly,
}

/// Raw reprojection tallies. Every (point, keyframe) pair lands in exactly
/// one of `valid` or `excluded`; `hits <= valid`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PrecisionCounts {
    pub obstruction_points: usize,
    pub hits: usize,
    pub valid: usize,
    /// Behind the camera or outside the mask.
    pub excluded: usize,
}

impl PrecisionCounts {
    pub fn precision_pct(&self) -> Option<f64> {
        (self.valid > 0).then(|| 100.0 * self.hits as f64 / self.valid as f64)
    }
}

/// Projects a point into one keyframe. `None` means excluded, otherwise
/// whether the mask is set at the rounded pixel.
///
/// The lookup happens on the depth-map grid with the mask rescaled exactly
/// as fusion rescales it.
fn project_hit(
    p: &Vec3,
    world_to_cam: &Pose,
    k: &CameraIntrinsics,
    mask: &SegmentationMask,
) -> Option<bool> {
    let x = world_to_cam.apply(p);
    if !(x.z > 0.0) {
        return None;
    }
    let (u, v) = k.project(&x);
    let (ui, vi) = (round_half_up(u), round_half_up(v));
    if !(ui >= 0.0 && vi >= 0.0 && ui < mask.width() as f64 && vi < mask.height() as f64) {
        return None;
    }
    Some(mask.get(ui as usize, vi as usize) == 1)
}

/// Tallies reprojections of every obstruction point without judging the
/// result; see [`segmentation_precision`].
pub fn precision_counts(
    cloud: &LabeledPointCloud,
    keyframes: &[KeyframeRecord],
    policy: PrecisionPolicy,
    source_frames: Option<&[usize]>,
) -> Result<PrecisionCounts, MetricsError> {
    if keyframes.is_empty() {
        return Err(MetricsError::NoKeyframes);
    }
    let sources = match policy {
        PrecisionPolicy::AllKeyframes => None,
        PrecisionPolicy::SourceFrameOnly => {
            let s = source_frames.unwrap_or(&[]);
            if s.len() != cloud.len() {
                return Err(MetricsError::MissingSourceFrames {
                    points: cloud.len(),
                    got: s.len(),
                });
            }
            if let Some(&index) = s.iter().find(|&&i| i >= keyframes.len()) {
                return Err(MetricsError::BadSourceFrame {
                    index,
                    keyframes: keyframes.len(),
                });
            }
            Some(s)
        }
    };
    let views: Vec<_> = keyframes
        .par_iter()
        .map(|r| {
            let k = r.depth_intrinsics();
            let mask = rescale_mask_nearest(&r.mask, k.width, k.height);
            (r.pose.inverse(), k, mask)
        })
        .collect();
    let tumor: Vec<(usize, Vec3)> = cloud
        .iter()
        .enumerate()
        .filter(|(_, (_, l))| *l == Label::Obstruction)
        .map(|(i, (p, _))| (i, *p))
        .collect();
    let per_point: Vec<(usize, usize, usize)> = tumor
        .par_iter()
        .map(|&(i, p)| {
            let mut tally = (0, 0, 0);
            let mut visit = |view: &(Pose, CameraIntrinsics, SegmentationMask)| match project_hit(
                &p, &view.0, &view.1, &view.2,
            ) {
                None => tally.2 += 1,
                Some(hit) => {
                    tally.1 += 1;
                    tally.0 += usize::from(hit);
                }
            };
            match sources {
                Some(s) => visit(&views[s[i]]),
                None => views.iter().for_each(visit),
            }
            tally
        })
        .collect();
    let mut counts = PrecisionCounts {
        obstruction_points: tumor.len(),
        ..PrecisionCounts::default()
    };
    for (h, v, e) in per_point {
        counts.hits += h;
        counts.valid += v;
        counts.excluded += e;
    }
    Ok(counts)
}

/// Percentage of valid obstruction-point reprojections that land on a set
/// mask pixel, with the tallies behind it.
pub fn segmentation_precision(
    cloud: &LabeledPointCloud,
    keyframes: &[KeyframeRecord],
    policy: PrecisionPolicy,
    source_frames: Option<&[usize]>,
) -> Result<(f64, PrecisionCounts), MetricsError> {
    let counts = precision_counts(cloud, keyframes, policy, source_frames)?;
    if counts.obstruction_points == 0 {
        return Err(MetricsError::NoObstructionPoints);
    }
    match counts.precision_pct() {
        Some(p) => Ok((p, counts)),
        None => Err(MetricsError::NoValidProjections {
            excluded: counts.excluded,
        }),
    }
}

/// Linear blue-to-red ramp over `[0, d_max]`. The red byte rounds half
/// down and blue is its complement, so the two always sum to 255.
pub fn heat_color(d: f64, d_max: f64) -> [u8; 3] {
    let t = (d / d_max).clamp(0.0, 1.0);
    let red = (255.0 * t - 0.5).ceil().clamp(0.0, 255.0) as u8;
    [red, 0, 255 - red]
}

/// Reconstruction points colored by distance to the closest CT point.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapCloud {
    pub points: Vec<Vec3>,
    pub distances: Vec<f64>,
    pub colors: Vec<[u8; 3]>,
    pub d_max: f64,
}

pub fn heatmap(
    recon: &[Vec3],
    ct: &NearestNeighborIndex,
    d_max: f64,
) -> Result<HeatmapCloud, MetricsError> {
    if !(d_max.is_finite() && d_max > 0.0) {
        return Err(MetricsError::InvalidRange(d_max));
    }
    if recon.is_empty() {
        return Err(MetricsError::EmptyInput("reconstruction"));
    }
    Ok(heatmap_from_distances(recon, closest_distances(recon, ct), d_max))
}

fn heatmap_from_distances(recon: &[Vec3], distances: Vec<f64>, d_max: f64) -> HeatmapCloud {
    HeatmapCloud {
        points: recon.to_vec(),
        colors: distances.iter().map(|&d| heat_color(d, d_max)).collect(),
        distances,
        d_max,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub coverage_threshold: f64,
    pub heatmap_d_max: f64,
    pub policy: PrecisionPolicy,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            coverage_threshold: 1.0,
            heatmap_d_max: 5.0,
            policy: PrecisionPolicy::AllKeyframes,
        }
    }
}

/// Registration outcome carried into the report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationSummary {
    pub transform: SimilarityTransform,
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl RegistrationSummary {
    pub fn identity() -> Self {
        Self {
            transform: SimilarityTransform::identity(),
            rms: 0.0,
            iterations: 0,
            converged: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReportCounts {
    pub recon_points: usize,
    pub ct_points: usize,
    /// Obstruction-labeled reconstruction points.
    pub tumor_points: usize,
    pub projected_hits: usize,
    pub projected_valid: usize,
    pub projected_excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub coverage_pct: f64,
    pub coverage_threshold_mm: f64,
    pub median_closest_mm: f64,
    pub chamfer_one_sided_mm: f64,
    pub hausdorff_one_sided_mm: f64,
    /// `None` when no obstruction point produced a valid projection.
    pub seg_precision_pct: Option<f64>,
    pub precision_policy: PrecisionPolicy,
    pub counts: ReportCounts,
    pub registration: RegistrationSummary,
}

/// Everything the evaluation step produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub heatmap: HeatmapCloud,
}

/// Full evaluation of a reconstruction against the CT cloud.
///
/// `recon` stays in the SLAM frame, where the keyframe poses live, for
/// reprojection; distances use `registration.transform` applied to it.
/// A precision without valid projections is reported as `None`, not as an
/// error.
pub fn evaluate(
    recon: &LabeledPointCloud,
    ct: &LabeledPointCloud,
    keyframes: &[KeyframeRecord],
    source_frames: Option<&[usize]>,
    registration: &RegistrationSummary,
    opts: &EvalOptions,
) -> Result<Evaluation, MetricsError> {
    if recon.is_empty() {
        return Err(MetricsError::EmptyInput("reconstruction"));
    }
    if ct.is_empty() {
        return Err(MetricsError::EmptyInput("CT"));
    }
    if !(opts.heatmap_d_max.is_finite() && opts.heatmap_d_max > 0.0) {
        return Err(MetricsError::InvalidRange(opts.heatmap_d_max));
    }
    let t = registration.transform;
    let moved: Vec<Vec3> = recon.points().par_iter().map(|p| t.apply(p)).collect();
    let ct_index = NearestNeighborIndex::build(ct.points())?;
    let recon_index = NearestNeighborIndex::build(&moved)?;

    let distances = closest_distances(&moved, &ct_index);
    let s = DistanceSummary::of(&distances).ok_or(MetricsError::EmptyInput("reconstruction"))?;
    let coverage_pct = coverage(ct.points(), &recon_index, opts.coverage_threshold)?;
    let pc = precision_counts(recon, keyframes, opts.policy, source_frames)?;

    let report = MetricsReport {
        coverage_pct,
        coverage_threshold_mm: opts.coverage_threshold,
        median_closest_mm: s.median,
        chamfer_one_sided_mm: s.mean,
        hausdorff_one_sided_mm: s.max,
        seg_precision_pct: pc.precision_pct(),
        precision_policy: opts.policy,
        counts: ReportCounts {
            recon_points: recon.len(),
            ct_points: ct.len(),
            tumor_points: pc.obstruction_points,
            projected_hits: pc.hits,
            projected_valid: pc.valid,
            projected_excluded: pc.excluded,
        },
        registration: *registration,
    };
    Ok(Evaluation {
        report,
        heatmap: heatmap_from_distances(&moved, distances, opts.heatmap_d_max),
    })
}
