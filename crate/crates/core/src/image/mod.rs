//! Image-space preprocessing: undistortion maps, resampling, cropping, and
//! mask rescaling.
//!
//! Pixel `(0, 0)` is the center of the top-left pixel. Buffers are row-major.

mod distortion;
mod remap;

pub use distortion::{
    distort_point, undistort_point, DistortionError, UNDISTORT_MAX_ITERATIONS,
    UNDISTORT_TOLERANCE,
};
pub use remap::{
    build_undistort_map, crop_intrinsics, remap_bilinear, remap_nearest, rescale_mask_nearest,
    CropWindow,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("buffer of length {len} does not match {width}x{height}")]
    SizeMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("mask value {value} at index {index} is not binary")]
    NonBinary { index: usize, value: u8 },
    #[error("non-finite intensity at index {0}")]
    NonFinite(usize),
    #[error("crop {crop_w}x{crop_h} does not fit in {width}x{height}")]
    CropTooLarge {
        crop_w: usize,
        crop_h: usize,
        width: usize,
        height: usize,
    },
    #[error("target camera must be distortion-free")]
    DistortedTarget,
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

fn check_len(width: usize, height: usize, len: usize) -> Result<(), ImageError> {
    if width * height == len {
        Ok(())
    } else {
        Err(ImageError::SizeMismatch { width, height, len })
    }
}

/// Grayscale intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGray {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        check_len(width, height, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..height)
            .flat_map(|v| (0..width).map(move |u| (u, v)))
            .map(|(u, v)| f(u, v))
            .collect();
        Self {
            width,
            height,
            data,
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
}

/// Binary obstruction mask: 0 = background, 1 = obstruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl SegmentationMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        check_len(width, height, data.len())?;
        if let Some(index) = data.iter().position(|&v| v > 1) {
            return Err(ImageError::NonBinary {
                index,
                value: data[index],
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height)
            .flat_map(|v| (0..width).map(move |u| (u, v)))
            .map(|(u, v)| f(u, v) as u8)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.data[v * self.width + u]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }
}

/// Per-output-pixel source coordinates for a resampling pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMap {
    width: usize,
    height: usize,
    src_x: Vec<f64>,
    src_y: Vec<f64>,
    valid: Vec<bool>,
}

impl PixelMap {
    pub fn new(
        width: usize,
        height: usize,
        src_x: Vec<f64>,
        src_y: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self, ImageError> {
        check_len(width, height, src_x.len())?;
        check_len(width, height, src_y.len())?;
        check_len(width, height, valid.len())?;
        if let Some(i) = (0..valid.len())
            .find(|&i| valid[i] && !(src_x[i].is_finite() && src_y[i].is_finite()))
        {
            return Err(ImageError::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            src_x,
            src_y,
            valid,
        })
    }

    /// A map sampling `src (u + dx, v + dy)` for every output pixel, valid
    /// where that lands inside a `src_w x src_h` image.
    pub fn shift(width: usize, height: usize, dx: f64, dy: f64, src_w: usize, src_h: usize) -> Self {
        let n = width * height;
        let mut m = Self {
            width,
            height,
            src_x: Vec::with_capacity(n),
            src_y: Vec::with_capacity(n),
            valid: Vec::with_capacity(n),
        };
        for v in 0..height {
            for u in 0..width {
                let (x, y) = (u as f64 + dx, v as f64 + dy);
                m.src_x.push(x);
                m.src_y.push(y);
                m.valid.push(in_source(x, y, src_w, src_h));
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `Some((src_x, src_y))` if the entry is valid.
    pub fn get(&self, u: usize, v: usize) -> Option<(f64, f64)> {
        let i = v * self.width + u;
        self.valid[i].then(|| (self.src_x[i], self.src_y[i]))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Whether a continuous coordinate lies within the pixel-center hull of an image.
pub(crate) fn in_source(x: f64, y: f64, width: usize, height: usize) -> bool {
    x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64
}

/// Round half up, the nearest-pixel convention used for all label lookups.
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}
