//! Aligning a reconstruction to the ground-truth cloud: exact nearest
//! neighbors, closed-form similarity fitting, PCA initialization and
//! trimmed point-to-point ICP.

mod icp;
mod kdtree;
mod pca;
mod umeyama;

pub use icp::{icp, IcpIteration, IcpParams, IcpResult};
pub use kdtree::{squared_distance, NearestNeighborIndex, Neighbor};
pub use pca::{pca_coarse_align, PcaAlignment};
pub use umeyama::kabsch_umeyama;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("{0} needs at least one point")]
    EmptyInput(&'static str),
    #[error("non-finite coordinate in input")]
    NonFinite,
    #[error("point lists differ in length ({src} vs {dst})")]
    LengthMismatch { src: usize, dst: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error(
        "ICP iteration {iteration}: only {kept} usable correspondences \
         ({within} of {total} within the distance gate)"
    )]
    InsufficientCorrespondences {
        iteration: usize,
        total: usize,
        within: usize,
        kept: usize,
    },
    #[error("invalid ICP parameters: {0}")]
    InvalidParams(String),
}
