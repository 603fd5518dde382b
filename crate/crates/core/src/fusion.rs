//! Back-projection of inverse-depth keyframes into a labeled world-space cloud.
//!
//! Inverse depth is `1 / z_cam` in 1/mm (pinhole depth, not ray length).
//! Values `<= 0` or non-finite mark a pixel as having no depth.

use crate::geometry::{CameraIntrinsics, Distortion, Label, LabeledPointCloud, Pose, Vec3};
use crate::image::{rescale_mask_nearest, SegmentationMask};
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("invalid inverse depth {0} (must be positive and finite)")]
    InvalidDepth(f64),
    #[error("keyframe {frame_id}: {reason}")]
    InvalidKeyframe { frame_id: u64, reason: String },
    #[error("invalid fusion filter: {0}")]
    InvalidFilter(String),
    #[error("voxel size must be positive and finite, got {0}")]
    InvalidVoxel(f64),
    #[error("no keyframes to fuse")]
    EmptySequence,
}

/// Per-pixel inverse depth, 1/mm, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseDepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl InverseDepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, FusionError> {
        if width * height != data.len() {
            return Err(FusionError::InvalidKeyframe {
                frame_id: 0,
                reason: format!(
                    "inverse depth buffer of length {} does not match {width}x{height}",
                    data.len()
                ),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&d| is_valid_depth(d)).count()
    }
}

pub fn is_valid_depth(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

/// One keyframe as delivered by the SLAM front end.
///
/// `intrinsics` describe the (undistorted) frame, which is also the mask
/// resolution. The inverse-depth map may be coarser; intrinsics are rescaled
/// to it at fusion time.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeRecord {
    pub frame_id: u64,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    pub inv_depth: InverseDepthMap,
    pub mask: SegmentationMask,
}

impl KeyframeRecord {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |reason: String| {
            Err(FusionError::InvalidKeyframe {
                frame_id: self.frame_id,
                reason,
            })
        };
        if self.intrinsics.distortion != Distortion::None {
            return bad("intrinsics must describe the undistorted frame".into());
        }
        if let Err(e) = self.intrinsics.validate() {
            return bad(e.to_string());
        }
        let k = &self.intrinsics;
        if self.mask.width() != k.width || self.mask.height() != k.height {
            return bad(format!(
                "mask is {}x{} but the frame is {}x{}",
                self.mask.width(),
                self.mask.height(),
                k.width,
                k.height
            ));
        }
        if self.inv_depth.width == 0 || self.inv_depth.height == 0 {
            return bad("empty inverse-depth map".into());
        }
        Ok(())
    }

    /// Intrinsics matching the inverse-depth map resolution.
    pub fn depth_intrinsics(&self) -> CameraIntrinsics {
        self.intrinsics
            .scaled_to(self.inv_depth.width, self.inv_depth.height)
    }
}

/// Point selection thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionFilter {
    /// Exclusive lower bound, 1/mm (far limit).
    pub min_inv_depth: f64,
    /// Exclusive upper bound, 1/mm (near limit).
    pub max_inv_depth: f64,
    /// Pixels this close to the depth-map border are skipped.
    pub border_margin: usize,
    /// Only pixels with `u % stride == 0 && v % stride == 0` are used.
    pub pixel_stride: usize,
}

impl Default for FusionFilter {
    fn default() -> Self {
        Self {
            min_inv_depth: 1.0 / 300.0,
            max_inv_depth: 1.0,
            border_margin: 8,
            pixel_stride: 1,
        }
    }
}

impl FusionFilter {
    /// Accepts every positive depth and every pixel.
    pub fn permissive() -> Self {
        Self {
            min_inv_depth: 0.0,
            max_inv_depth: f64::INFINITY,
            border_margin: 0,
            pixel_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.min_inv_depth >= 0.0 && self.min_inv_depth < self.max_inv_depth) {
            return Err(FusionError::InvalidFilter(format!(
                "need 0 <= min_inv_depth < max_inv_depth, got {} and {}",
                self.min_inv_depth, self.max_inv_depth
            )));
        }
        if self.pixel_stride == 0 {
            return Err(FusionError::InvalidFilter("pixel_stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn accepts(&self, d: f64) -> bool {
        is_valid_depth(d) && d > self.min_inv_depth && d < self.max_inv_depth
    }
}

/// `pose * ((u - cx) / fx, (v - cy) / fy, 1) / d`
pub fn backproject_pixel(
    u: f64,
    v: f64,
    d: f64,
    k: &CameraIntrinsics,
    pose: &Pose,
) -> Result<Vec3, FusionError> {
    if !is_valid_depth(d) {
        return Err(FusionError::InvalidDepth(d));
    }
    let z = 1.0 / d;
    let x_cam = Vec3::new((u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z);
    Ok(pose.apply(&x_cam))
}

/// Counts for one fused keyframe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FuseStats {
    /// Pixels on the stride grid inside the margin.
    pub considered: usize,
    pub emitted: usize,
    pub obstruction: usize,
    /// Considered pixels dropped for invalid or out-of-range depth.
    pub rejected_depth: usize,
}

/// A fused keyframe plus the depth-map pixel each point came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedKeyframe {
    pub cloud: LabeledPointCloud,
    pub pixels: Vec<(u32, u32)>,
    pub stats: FuseStats,
}

fn grid(len: usize, margin: usize, stride: usize) -> impl Iterator<Item = usize> {
    let end = len.saturating_sub(margin);
    (margin..end).filter(move |i| i % stride == 0)
}

/// Fuses one keyframe and records the source pixel of every point.
pub fn fuse_keyframe_traced(rec: &KeyframeRecord, filter: &FusionFilter) -> FusedKeyframe {
    let (w, h) = (rec.inv_depth.width(), rec.inv_depth.height());
    let k = rec.depth_intrinsics();
    let mask = rescale_mask_nearest(&rec.mask, w, h);
    let stride = filter.pixel_stride.max(1);
    let mut cloud = LabeledPointCloud::new();
    let mut pixels = Vec::new();
    let mut stats = FuseStats::default();
    for v in grid(h, filter.border_margin, stride) {
        for u in grid(w, filter.border_margin, stride) {
            stats.considered += 1;
            let d = rec.inv_depth.get(u, v);
            if !filter.accepts(d) {
                stats.rejected_depth += 1;
                continue;
            }
            let Ok(p) = backproject_pixel(u as f64, v as f64, d, &k, &rec.pose) else {
                stats.rejected_depth += 1;
                continue;
            };
            let label = if mask.get(u, v) == 1 {
                stats.obstruction += 1;
                Label::Obstruction
            } else {
                Label::Background
            };
            cloud.push(p, label);
            pixels.push((u as u32, v as u32));
        }
    }
    stats.emitted = cloud.len();
    FusedKeyframe {
        cloud,
        pixels,
        stats,
    }
}

pub fn fuse_keyframe(rec: &KeyframeRecord, filter: &FusionFilter) -> LabeledPointCloud {
    fuse_keyframe_traced(rec, filter).cloud
}

/// Concatenates per-keyframe clouds in input order. Keyframes are fused in
/// parallel; the result does not depend on scheduling.
pub fn fuse_sequence(
    recs: &[KeyframeRecord],
    filter: &FusionFilter,
) -> Result<LabeledPointCloud, FusionError> {
    Ok(fuse_sequence_traced(recs, filter)?.cloud)
}

/// Sequence fusion that also reports, per point, the index (into `recs`) of
/// its source keyframe, plus per-keyframe stats.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedSequence {
    pub cloud: LabeledPointCloud,
    pub source_frames: Vec<usize>,
    pub stats: Vec<FuseStats>,
}

pub fn fuse_sequence_traced(
    recs: &[KeyframeRecord],
    filter: &FusionFilter,
) -> Result<FusedSequence, FusionError> {
    if recs.is_empty() {
        return Err(FusionError::EmptySequence);
    }
    filter.validate()?;
    for r in recs {
        r.validate()?;
    }
    let parts: Vec<FusedKeyframe> = recs
        .par_iter()
        .map(|r| fuse_keyframe_traced(r, filter))
        .collect();
    let total: usize = parts.iter().map(|p| p.cloud.len()).sum();
    let mut cloud = LabeledPointCloud::with_capacity(total);
    let mut source_frames = Vec::with_capacity(total);
    let mut stats = Vec::with_capacity(parts.len());
    for (i, part) in parts.into_iter().enumerate() {
        cloud.extend_from(&part.cloud);
        source_frames.extend(std::iter::repeat_n(i, part.cloud.len()));
        stats.push(part.stats);
    }
    Ok(FusedSequence {
        cloud,
        source_frames,
        stats,
    })
}

/// One point per occupied voxel at the centroid of its members. Labels go
/// by majority; ties become `Obstruction`. Output follows first occurrence.
pub fn voxel_downsample(
    cloud: &LabeledPointCloud,
    voxel: f64,
) -> Result<LabeledPointCloud, FusionError> {
    if !(voxel.is_finite() && voxel > 0.0) {
        return Err(FusionError::InvalidVoxel(voxel));
    }
    struct Acc {
        sum: Vec3,
        n: usize,
        obstruction: usize,
    }
    let mut slots: HashMap<[i64; 3], usize> = HashMap::new();
    let mut accs: Vec<Acc> = Vec::new();
    for (p, label) in cloud.iter() {
        let key = [
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
        ];
        let slot = *slots.entry(key).or_insert_with(|| {
            accs.push(Acc {
                sum: Vec3::zeros(),
                n: 0,
                obstruction: 0,
            });
            accs.len() - 1
        });
        let a = &mut accs[slot];
        a.sum += p;
        a.n += 1;
        a.obstruction += (label == Label::Obstruction) as usize;
    }
    let mut out = LabeledPointCloud::with_capacity(accs.len());
    for a in accs {
        let label = if 2 * a.obstruction >= a.n {
            Label::Obstruction
        } else {
            Label::Background
        };
        out.push(a.sum / a.n as f64, label);
    }
    Ok(out)
}
