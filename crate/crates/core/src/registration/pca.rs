use super::{NearestNeighborIndex, RegistrationError};
use crate::geometry::{SimilarityTransform, Vec3};
use nalgebra::{Matrix3, Rotation3, SymmetricEigen, UnitQuaternion};

const MIN_POINTS: usize = 10;
/// Candidates are scored on at most this many (evenly strided) source points.
const SCORE_POINTS: usize = 20_000;

/// Result of principal-axis initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaAlignment {
    pub transform: SimilarityTransform,
    /// The four proper-rotation axis sign assignments, in a fixed order.
    pub candidates: [SimilarityTransform; 4],
    /// One-pass nearest-neighbor RMS of each candidate, mm.
    pub candidate_rms: [f64; 4],
    pub chosen: usize,
}

struct Moments {
    mean: Vec3,
    /// Eigenvectors as columns, sorted by descending eigenvalue, det = +1.
    axes: Matrix3<f64>,
    /// Mean squared distance to the centroid.
    spread: f64,
}

fn moments(points: &[Vec3], what: &str) -> Result<Moments, RegistrationError> {
    if points.len() < MIN_POINTS {
        return Err(RegistrationError::TooFewPoints {
            needed: MIN_POINTS,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let c = p - mean;
        cov += c * c.transpose();
    }
    cov /= n;
    if !cov.iter().all(|v| v.is_finite()) {
        return Err(RegistrationError::NonFinite);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.map(|i| eig.eigenvalues[i]);
    if vals[0] <= 0.0 || vals[1] <= 1e-12 * vals[0] {
        return Err(RegistrationError::Degenerate(format!(
            "{what} covariance is rank deficient (eigenvalues {:.3e}, {:.3e}, {:.3e}); \
             supply a manual initial transform",
            vals[0], vals[1], vals[2]
        )));
    }
    let mut axes = Matrix3::from_columns(&[
        eig.eigenvectors.column(order[0]).into_owned(),
        eig.eigenvectors.column(order[1]).into_owned(),
        eig.eigenvectors.column(order[2]).into_owned(),
    ]);
    if axes.determinant() < 0.0 {
        axes.set_column(2, &(-axes.column(2)));
    }
    Ok(Moments {
        mean,
        axes,
        spread: cov.trace(),
    })
}

/// Coarse alignment of `src` onto the indexed cloud: centroids coincide,
/// scale (optionally) matches RMS radii, and principal axes line up. The
/// axis sign ambiguity is resolved by trying all four proper rotations and
/// keeping the one with the lowest nearest-neighbor RMS.
pub fn pca_coarse_align(
    src: &[Vec3],
    dst: &NearestNeighborIndex,
    with_scale: bool,
) -> Result<PcaAlignment, RegistrationError> {
    let ms = moments(src, "source")?;
    let md = moments(dst.points(), "target")?;
    let scale = if with_scale {
        (md.spread / ms.spread).sqrt()
    } else {
        1.0
    };

    const SIGNS: [[f64; 3]; 4] = [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ];
    let step = src.len().div_ceil(SCORE_POINTS).max(1);
    let sample: Vec<Vec3> = src.iter().step_by(step).copied().collect();

    let mut candidates = [SimilarityTransform::identity(); 4];
    let mut candidate_rms = [0.0; 4];
    for (k, s) in SIGNS.iter().enumerate() {
        let flip = Matrix3::from_diagonal(&Vec3::new(s[0], s[1], s[2]));
        let r = md.axes * flip * ms.axes.transpose();
        let rotation =
            UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
        let translation = md.mean - scale * (rotation * ms.mean);
        let t = SimilarityTransform::new(scale, rotation, translation)
            .map_err(|e| RegistrationError::Degenerate(e.to_string()))?;
        let moved: Vec<Vec3> = sample.iter().map(|p| t.apply(p)).collect();
        let sum_sq: f64 = dst
            .nearest_many(&moved)
            .iter()
            .map(|n| n.distance * n.distance)
            .sum();
        candidates[k] = t;
        candidate_rms[k] = (sum_sq / moved.len() as f64).sqrt();
    }
    let chosen = (0..4)
        .min_by(|&a, &b| candidate_rms[a].total_cmp(&candidate_rms[b]))
        .unwrap_or(0);
    Ok(PcaAlignment {
        transform: candidates[chosen],
        candidates,
        candidate_rms,
        chosen,
    })
}
