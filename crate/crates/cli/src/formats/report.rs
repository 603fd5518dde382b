//! Metrics report, as TOML.
//!
//! ```toml
//! coverage_pct = 97.1             # CT points with a reconstruction point within the threshold
//! coverage_threshold_mm = 1.0
//! median_closest_mm = 0.03        # reconstruction -> CT, after registration
//! chamfer_one_sided_mm = 0.03     # mean
//! hausdorff_one_sided_mm = 0.14   # max
//! seg_precision_defined = true
//! seg_precision_pct = 99.8        # omitted when undefined
//! precision_policy = "all_keyframes"
//!
//! [counts]
//! recon_points = 0
//! ct_points = 0
//! tumor_points = 0                # obstruction-labeled reconstruction points
//! projected_hits = 0              # reprojections landing on a set mask pixel
//! projected_valid = 0             # reprojections inside a mask
//! projected_excluded = 0          # behind the camera or outside the mask
//!
//! [registration]                  # same keys as the transform file
//! ```

use super::transform::TransformDoc;
use crate::config::policy_name;
use airmap::metrics::{MetricsReport, ReportCounts};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsDoc {
    pub recon_points: usize,
    pub ct_points: usize,
    pub tumor_points: usize,
    pub projected_hits: usize,
    pub projected_valid: usize,
    pub projected_excluded: usize,
}

impl From<ReportCounts> for CountsDoc {
    fn from(c: ReportCounts) -> Self {
        Self {
            recon_points: c.recon_points,
            ct_points: c.ct_points,
            tumor_points: c.tumor_points,
            projected_hits: c.projected_hits,
            projected_valid: c.projected_valid,
            projected_excluded: c.projected_excluded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDoc {
    pub coverage_pct: f64,
    pub coverage_threshold_mm: f64,
    pub median_closest_mm: f64,
    pub chamfer_one_sided_mm: f64,
    pub hausdorff_one_sided_mm: f64,
    pub seg_precision_defined: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seg_precision_pct: Option<f64>,
    pub precision_policy: String,
    pub counts: CountsDoc,
    pub registration: TransformDoc,
}

impl From<&MetricsReport> for ReportDoc {
    fn from(r: &MetricsReport) -> Self {
        Self {
            coverage_pct: r.coverage_pct,
            coverage_threshold_mm: r.coverage_threshold_mm,
            median_closest_mm: r.median_closest_mm,
            chamfer_one_sided_mm: r.chamfer_one_sided_mm,
            hausdorff_one_sided_mm: r.hausdorff_one_sided_mm,
            seg_precision_defined: r.seg_precision_pct.is_some(),
            seg_precision_pct: r.seg_precision_pct,
            precision_policy: policy_name(r.precision_policy).to_string(),
            counts: r.counts.into(),
            registration: TransformDoc::from_summary(&r.registration),
        }
    }
}

pub fn encode(r: &MetricsReport) -> String {
    toml::to_string(&ReportDoc::from(r)).expect("report serializes")
}

pub fn decode(text: &str) -> Result<ReportDoc, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}
