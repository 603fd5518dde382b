use super::{kabsch_umeyama, NearestNeighborIndex, RegistrationError};
use crate::geometry::{SimilarityTransform, Vec3};

/// RMS (mm) at or below which the alignment counts as exact; relative
/// changes of rounding-level residuals are noise.
pub const RMS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop when `|ΔRMS| / RMS` falls below this.
    pub rel_tol: f64,
    /// Correspondences farther apart than this (mm) are rejected.
    pub max_corr_dist: f64,
    /// Fraction of the worst gated correspondences dropped each iteration.
    pub trim_fraction: f64,
    pub with_scale: bool,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 60,
            rel_tol: 1e-7,
            max_corr_dist: 10.0,
            trim_fraction: 0.2,
            with_scale: true,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let bad = |m: String| Err(RegistrationError::InvalidParams(m));
        if self.max_iterations == 0 {
            return bad("max_iterations must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.trim_fraction) {
            return bad(format!("trim_fraction {} not in [0, 1)", self.trim_fraction));
        }
        if !(self.max_corr_dist > 0.0) {
            return bad(format!("max_corr_dist {} must be > 0", self.max_corr_dist));
        }
        if !(self.rel_tol >= 0.0) {
            return bad(format!("rel_tol {} must be >= 0", self.rel_tol));
        }
        Ok(())
    }
}

/// Correspondence statistics at the start of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpIteration {
    pub iteration: usize,
    /// RMS over surviving pairs, mm.
    pub rms: f64,
    /// Pairs inside the distance gate.
    pub within: usize,
    /// Pairs kept after trimming.
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps the original source cloud into the target frame.
    pub transform: SimilarityTransform,
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IcpIteration>,
}

struct Correspondences {
    src: Vec<Vec3>,
    dst: Vec<Vec3>,
    stats: IcpIteration,
}

fn correspond(
    src: &[Vec3],
    dst: &NearestNeighborIndex,
    current: &SimilarityTransform,
    params: &IcpParams,
    iteration: usize,
) -> Result<Correspondences, RegistrationError> {
    let moved: Vec<Vec3> = src.iter().map(|p| current.apply(p)).collect();
    let nn = dst.nearest_many(&moved);
    let mut pairs: Vec<(f64, usize, usize)> = nn
        .iter()
        .enumerate()
        .filter(|(_, n)| n.distance <= params.max_corr_dist)
        .map(|(i, n)| (n.distance, i, n.index))
        .collect();
    let within = pairs.len();
    let kept = within - (params.trim_fraction * within as f64).floor() as usize;
    if kept < 3 {
        return Err(RegistrationError::InsufficientCorrespondences {
            iteration,
            total: src.len(),
            within,
            kept,
        });
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    pairs.truncate(kept);
    let sum_sq: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
    let points = dst.points();
    Ok(Correspondences {
        src: pairs.iter().map(|p| moved[p.1]).collect(),
        dst: pairs.iter().map(|p| points[p.2]).collect(),
        stats: IcpIteration {
            iteration,
            rms: (sum_sq / kept as f64).sqrt(),
            within,
            kept,
        },
    })
}

/// Trimmed point-to-point ICP.
///
/// Each iteration moves the source by the current estimate, pairs every
/// point with its nearest target, drops pairs beyond `max_corr_dist` and then
/// the worst `trim_fraction` of the rest, and composes the closed-form
/// similarity fitted to the survivors onto the estimate.
pub fn icp(
    src: &[Vec3],
    dst: &NearestNeighborIndex,
    init: &SimilarityTransform,
    params: &IcpParams,
) -> Result<IcpResult, RegistrationError> {
    params.validate()?;
    if src.is_empty() {
        return Err(RegistrationError::EmptyInput("ICP source"));
    }
    let mut current = *init;
    let mut history = Vec::new();
    let mut previous: Option<f64> = None;
    for iteration in 1..=params.max_iterations {
        let corr = correspond(src, dst, &current, params, iteration)?;
        let rms = corr.stats.rms;
        history.push(corr.stats);
        let settled = rms <= RMS_FLOOR
            || previous.is_some_and(|p| (p - rms).abs() <= params.rel_tol * rms);
        if settled {
            return Ok(IcpResult {
                transform: current,
                rms,
                iterations: iteration,
                converged: true,
                history,
            });
        }
        let delta = kabsch_umeyama(&corr.src, &corr.dst, params.with_scale)?;
        current = delta.compose(&current);
        previous = Some(rms);
    }
    let last = correspond(src, dst, &current, params, params.max_iterations + 1)?;
    Ok(IcpResult {
        transform: current,
        rms: last.stats.rms,
        iterations: params.max_iterations,
        converged: false,
        history,
    })
}
