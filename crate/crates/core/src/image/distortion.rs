//! Forward distortion and its iterative inverse in normalized camera coordinates.

use crate::geometry::Distortion;
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

/// Iteration cap for [`undistort_point`].
pub const UNDISTORT_MAX_ITERATIONS: usize = 50;
/// Residual (normalized units) at which [`undistort_point`] stops.
pub const UNDISTORT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistortionError {
    #[error("non-finite input point ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("incidence angle {theta} rad is outside the fisheye model (must be < pi/2)")]
    OutOfModel { theta: f64 },
    #[error("undistortion did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("undistorted point ({x}, {y}) lies where the model folds over")]
    Folded { x: f64, y: f64 },
}

/// Maps an ideal normalized point `(x/z, y/z)` to its distorted position.
pub fn distort_point(xn: f64, yn: f64, model: &Distortion) -> Result<(f64, f64), DistortionError> {
    if !(xn.is_finite() && yn.is_finite()) {
        return Err(DistortionError::NonFinite(xn, yn));
    }
    match *model {
        Distortion::None => Ok((xn, yn)),
        Distortion::RadTan { k1, k2, p1, p2, k3 } => {
            let r2 = xn * xn + yn * yn;
            let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
            let xd = xn * radial + 2.0 * p1 * xn * yn + p2 * (r2 + 2.0 * xn * xn);
            let yd = yn * radial + p1 * (r2 + 2.0 * yn * yn) + 2.0 * p2 * xn * yn;
            Ok((xd, yd))
        }
        Distortion::FisheyeEquidistant { k1, k2, k3, k4 } => {
            let r = xn.hypot(yn);
            let theta = r.atan();
            if theta >= FRAC_PI_2 {
                return Err(DistortionError::OutOfModel { theta });
            }
            let factor = fisheye_poly(theta, k1, k2, k3, k4);
            // theta_d / r -> factor as r -> 0 since atan(r)/r -> 1.
            let scale = if r < 1e-12 {
                factor
            } else {
                theta * factor / r
            };
            Ok((xn * scale, yn * scale))
        }
    }
}

/// `1 + k1 θ² + k2 θ⁴ + k3 θ⁶ + k4 θ⁸`
fn fisheye_poly(theta: f64, k1: f64, k2: f64, k3: f64, k4: f64) -> f64 {
    let t2 = theta * theta;
    1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4)))
}

/// Intermediate targets on the way from the optical axis to the input.
const CONTINUATION_STAGES: usize = 4;
/// Iteration cap per intermediate target.
const STAGE_ITERATIONS: usize = 8;

struct NewtonStep {
    point: (f64, f64),
    residual: f64,
    iterations: usize,
    converged: bool,
}

fn radial_factor(r2: f64, model: &Distortion) -> f64 {
    match *model {
        Distortion::RadTan { k1, k2, k3, .. } => 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3)),
        _ => 1.0,
    }
}

fn radtan_jacobian(x: f64, y: f64, model: &Distortion) -> [[f64; 2]; 2] {
    let Distortion::RadTan { k1, k2, p1, p2, k3 } = *model else {
        return [[1.0, 0.0], [0.0, 1.0]];
    };
    let r2 = x * x + y * y;
    let radial = radial_factor(r2, model);
    // d(radial)/d(r2)
    let dradial = k1 + r2 * (2.0 * k2 + 3.0 * k3 * r2);
    let off = 2.0 * x * y * dradial + 2.0 * p1 * x + 2.0 * p2 * y;
    [
        [radial + 2.0 * x * x * dradial + 2.0 * p1 * y + 6.0 * p2 * x, off],
        [off, radial + 2.0 * y * y * dradial + 6.0 * p1 * y + 2.0 * p2 * x],
    ]
}

/// 2D Newton solve of `distort(x, y) = (xd, yd)` from `start`.
fn radtan_newton(
    xd: f64,
    yd: f64,
    start: (f64, f64),
    max_iterations: usize,
    model: &Distortion,
) -> Result<NewtonStep, DistortionError> {
    let (mut x, mut y) = start;
    let mut residual = f64::INFINITY;
    for i in 0..max_iterations {
        let (fx, fy) = distort_point(x, y, model)?;
        let (ex, ey) = (fx - xd, fy - yd);
        residual = ex.hypot(ey);
        let [[j00, j01], [j10, j11]] = radtan_jacobian(x, y, model);
        let det = j00 * j11 - j01 * j10;
        let singular = det.abs() < 1e-300 || !det.is_finite();
        if residual < UNDISTORT_TOLERANCE {
            // One more step near a fold sharpens the point itself, not
            // just the residual; keep it only if it helps.
            let mut point = (x, y);
            if !singular {
                let px = x - (j11 * ex - j01 * ey) / det;
                let py = y - (-j10 * ex + j00 * ey) / det;
                let (qx, qy) = distort_point(px, py, model)?;
                let r = (qx - xd).hypot(qy - yd);
                if r < residual {
                    (point, residual) = ((px, py), r);
                }
            }
            return Ok(NewtonStep { point, residual, iterations: i + 1, converged: true });
        }
        if singular {
            return Ok(NewtonStep { point: (x, y), residual, iterations: i + 1, converged: false });
        }
        x -= (j11 * ex - j01 * ey) / det;
        y -= (-j10 * ex + j00 * ey) / det;
    }
    Ok(NewtonStep { point: (x, y), residual, iterations: max_iterations, converged: false })
}

/// Inverts [`distort_point`].
///
/// RadTan uses a 2D Newton iteration continued from the optical axis, at
/// most [`UNDISTORT_MAX_ITERATIONS`] steps in total. The fisheye model
/// reduces to a 1D Newton solve for the incidence angle.
pub fn undistort_point(xd: f64, yd: f64, model: &Distortion) -> Result<(f64, f64), DistortionError> {
    if !(xd.is_finite() && yd.is_finite()) {
        return Err(DistortionError::NonFinite(xd, yd));
    }
    match *model {
        Distortion::None => Ok((xd, yd)),
        Distortion::RadTan { .. } => {
            // Walk the target out from the optical axis so Newton stays on
            // the branch connected to the identity; starting directly at
            // the target can land on a far preimage when tangential terms
            // are strong.
            let (mut x, mut y) = (0.0, 0.0);
            let mut used = 0;
            for stage in 1..CONTINUATION_STAGES {
                let s = stage as f64 / CONTINUATION_STAGES as f64;
                let step = radtan_newton(xd * s, yd * s, (x, y), STAGE_ITERATIONS, model)?;
                used += step.iterations;
                if !step.converged {
                    break;
                }
                (x, y) = step.point;
            }
            let last = radtan_newton(xd, yd, (x, y), UNDISTORT_MAX_ITERATIONS - used, model)?;
            if !last.converged {
                return Err(DistortionError::NoConvergence {
                    iterations: UNDISTORT_MAX_ITERATIONS,
                    residual: last.residual,
                });
            }
            let (x, y) = last.point;
            // A root with a non-positive radial factor or Jacobian is a
            // mirrored preimage past the fold, not the physical ray.
            let [[j00, j01], [j10, j11]] = radtan_jacobian(x, y, model);
            let r2 = x * x + y * y;
            if radial_factor(r2, model) <= 0.0 || j00 * j11 - j01 * j10 <= 0.0 {
                return Err(DistortionError::Folded { x, y });
            }
            Ok((x, y))
        }
        Distortion::FisheyeEquidistant { k1, k2, k3, k4 } => {
            let theta_d = xd.hypot(yd);
            if theta_d < 1e-12 {
                let f = fisheye_poly(0.0, k1, k2, k3, k4);
                return Ok((xd / f, yd / f));
            }
            let mut theta = theta_d;
            let mut residual = f64::INFINITY;
            for _ in 0..UNDISTORT_MAX_ITERATIONS {
                let t2 = theta * theta;
                let f = theta * fisheye_poly(theta, k1, k2, k3, k4) - theta_d;
                residual = f.abs();
                if residual < UNDISTORT_TOLERANCE {
                    if !(0.0..FRAC_PI_2).contains(&theta) {
                        return Err(DistortionError::OutOfModel { theta });
                    }
                    let r = theta.tan();
                    return Ok((xd * r / theta_d, yd * r / theta_d));
                }
                let df = 1.0 + t2 * (3.0 * k1 + t2 * (5.0 * k2 + t2 * (7.0 * k3 + t2 * 9.0 * k4)));
                if df.abs() < 1e-300 || !df.is_finite() {
                    break;
                }
                theta -= f / df;
            }
            Err(DistortionError::NoConvergence {
                iterations: UNDISTORT_MAX_ITERATIONS,
                residual,
            })
        }
    }
}
