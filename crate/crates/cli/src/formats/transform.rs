//! Registration output, as TOML. `matrix` is the row-major 4x4 homogeneous
//! form of `x_ct = scale * R * x_recon + t`, so its upper-left block is
//! `scale * R`.
//!
//! ```toml
//! scale = 1.0
//! matrix = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
//! rms_mm = 0.0          # optional
//! iterations = 0        # optional
//! converged = true      # optional
//! ```
//!
//! A hand-written initial transform needs only `matrix`.

use airmap::geometry::SimilarityTransform;
use airmap::metrics::RegistrationSummary;
use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    pub matrix: [[f64; 4]; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rms_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

impl TransformDoc {
    pub fn from_summary(s: &RegistrationSummary) -> Self {
        let m = s.transform.to_homogeneous();
        Self {
            scale: Some(s.transform.scale),
            matrix: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
            rms_mm: Some(s.rms),
            iterations: Some(s.iterations),
            converged: Some(s.converged),
        }
    }

    pub fn transform(&self) -> Result<SimilarityTransform, String> {
        let m = Matrix4::from_fn(|r, c| self.matrix[r][c]);
        if m.row(3).iter().copied().ne([0.0, 0.0, 0.0, 1.0]) {
            return Err("last matrix row must be [0, 0, 0, 1]".into());
        }
        let t = SimilarityTransform::from_homogeneous(&m).map_err(|e| e.to_string())?;
        let r = t.rotation_matrix();
        let ortho = (r.transpose() * r - nalgebra::Matrix3::identity()).abs().max();
        let fit = (m.fixed_view::<3, 3>(0, 0) - r * t.scale).abs().max();
        if ortho > 1e-6 || fit > 1e-6 * t.scale.max(1.0) {
            return Err("matrix is not a similarity transform (scale times rotation)".into());
        }
        if let Some(s) = self.scale {
            if (s - t.scale).abs() > 1e-9 * s.abs().max(1.0) {
                return Err(format!("scale {s} disagrees with matrix scale {}", t.scale));
            }
        }
        Ok(t)
    }

    pub fn summary(&self) -> Result<RegistrationSummary, String> {
        Ok(RegistrationSummary {
            transform: self.transform()?,
            rms: self.rms_mm.unwrap_or(f64::NAN),
            iterations: self.iterations.unwrap_or(0),
            converged: self.converged.unwrap_or(true),
        })
    }
}

pub fn encode(s: &RegistrationSummary) -> String {
    toml::to_string(&TransformDoc::from_summary(s)).expect("transform serializes")
}

pub fn decode(text: &str) -> Result<TransformDoc, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}
