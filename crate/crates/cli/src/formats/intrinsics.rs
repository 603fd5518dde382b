//! Camera description of a dataset, as TOML.
//!
//! ```toml
//! width = 320            # mask (raw frame) size, px
//! height = 240
//! fx = 100.0
//! fy = 100.0
//! cx = 159.5             # pixel (0, 0) is the center of the top-left pixel
//! cy = 119.5
//! depth_width = 320      # optional, inverse-depth map size (default: frame size)
//! depth_height = 240
//!
//! [distortion]           # optional; the masks are distorted raw frames
//! model = "radtan"       # radtan (k1 k2 p1 p2 k3) | fisheye_equidistant (k1 k2 k3 k4)
//! coefficients = [-0.2, 0.05, 0.0, 0.0, 0.0]
//!
//! [crop]                 # optional window around the principal point
//! width = 280
//! height = 210
//! ```
//!
//! Masks are undistorted and cropped on load. Inverse-depth maps always
//! describe the undistorted, cropped frame.

use airmap::geometry::{CameraIntrinsics, Distortion};
use airmap::image::{build_undistort_map, crop_intrinsics, remap_nearest, SegmentationMask};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistortionDoc {
    model: String,
    coefficients: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crop {
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    width: usize,
    height: usize,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_height: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distortion: Option<DistortionDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    crop: Option<Crop>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetCamera {
    /// Camera of the stored masks, with its distortion model.
    pub raw: CameraIntrinsics,
    pub crop: Option<Crop>,
    pub depth_size: Option<(usize, usize)>,
}

impl DatasetCamera {
    pub fn pinhole(k: CameraIntrinsics) -> Self {
        Self {
            raw: k,
            crop: None,
            depth_size: None,
        }
    }

    /// Undistorted (and cropped) frame seen by fusion.
    pub fn frame_intrinsics(&self) -> Result<CameraIntrinsics, String> {
        let k = self.raw.without_distortion();
        match self.crop {
            None => Ok(k),
            Some(c) => crop_intrinsics(&k, c.width, c.height).map_err(|e| e.to_string()),
        }
    }

    pub fn depth_size(&self) -> Result<(usize, usize), String> {
        let k = self.frame_intrinsics()?;
        Ok(self.depth_size.unwrap_or((k.width, k.height)))
    }

    pub fn needs_remap(&self) -> bool {
        self.raw.distortion != Distortion::None || self.crop.is_some()
    }

    /// Maps a raw mask onto the frame; a no-op without distortion or crop.
    pub fn prepare_mask(&self, mask: &SegmentationMask) -> Result<SegmentationMask, String> {
        if !self.needs_remap() {
            return Ok(mask.clone());
        }
        let map = build_undistort_map(&self.raw, &self.frame_intrinsics()?)
            .map_err(|e| e.to_string())?;
        Ok(remap_nearest(mask, &map))
    }
}

pub fn encode(cam: &DatasetCamera) -> String {
    let k = &cam.raw;
    let doc = Doc {
        width: k.width,
        height: k.height,
        fx: k.fx,
        fy: k.fy,
        cx: k.cx,
        cy: k.cy,
        depth_width: cam.depth_size.map(|s| s.0),
        depth_height: cam.depth_size.map(|s| s.1),
        distortion: (k.distortion != Distortion::None).then(|| DistortionDoc {
            model: k.distortion.name().to_string(),
            coefficients: k.distortion.coefficients(),
        }),
        crop: cam.crop,
    };
    toml::to_string(&doc).expect("intrinsics serialize")
}

pub fn decode(text: &str) -> Result<DatasetCamera, String> {
    let doc: Doc = toml::from_str(text).map_err(|e| e.to_string())?;
    let distortion = match &doc.distortion {
        None => Distortion::None,
        Some(d) => Distortion::from_parts(&d.model, &d.coefficients).map_err(|e| e.to_string())?,
    };
    let raw = CameraIntrinsics::new(doc.fx, doc.fy, doc.cx, doc.cy, doc.width, doc.height, distortion)
        .map_err(|e| e.to_string())?;
    let depth_size = match (doc.depth_width, doc.depth_height) {
        (None, None) => None,
        (Some(w), Some(h)) if w > 0 && h > 0 => Some((w, h)),
        (Some(_), Some(_)) => return Err("depth size must be positive".into()),
        _ => return Err("depth_width and depth_height must be given together".into()),
    };
    let cam = DatasetCamera {
        raw,
        crop: doc.crop,
        depth_size,
    };
    cam.frame_intrinsics()?;
    Ok(cam)
}
