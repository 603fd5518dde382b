use super::RegistrationError;
use crate::geometry::{SimilarityTransform, Vec3};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion};

/// Relative singular-value floor below which the cross-covariance is
/// treated as rank deficient.
const RANK_EPS: f64 = 1e-12;

/// Least-squares similarity (or rigid, when `with_scale` is false) mapping
/// `src[i]` onto `dst[i]`:
///
/// ```text
/// argmin  Σ ‖s R src_i + t - dst_i‖²,   det R = +1
/// ```
///
/// Closed form via the SVD of the cross-covariance, with reflection
/// correction.
pub fn kabsch_umeyama(
    src: &[Vec3],
    dst: &[Vec3],
    with_scale: bool,
) -> Result<SimilarityTransform, RegistrationError> {
    if src.len() != dst.len() {
        return Err(RegistrationError::LengthMismatch {
            src: src.len(),
            dst: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(RegistrationError::TooFewPoints {
            needed: 3,
            got: src.len(),
        });
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vec3>() / n;
    let mu_d = dst.iter().sum::<Vec3>() / n;

    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let sc = s - mu_s;
        let dc = d - mu_d;
        cov += dc * sc.transpose();
        var_s += sc.norm_squared();
    }
    cov /= n;
    var_s /= n;
    if !cov.iter().all(|v| v.is_finite()) {
        return Err(RegistrationError::NonFinite);
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(RegistrationError::Degenerate("SVD failed".into())),
    };
    let mut sv = [
        svd.singular_values[0],
        svd.singular_values[1],
        svd.singular_values[2],
    ];
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= 0.0 || sv[1] <= RANK_EPS * sv[0] {
        return Err(RegistrationError::Degenerate(format!(
            "cross-covariance has rank < 2 (singular values {:.3e}, {:.3e}, {:.3e})",
            sv[0], sv[1], sv[2]
        )));
    }

    let mut signs = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        let smallest = svd.singular_values.imin();
        signs[(smallest, smallest)] = -1.0;
    }
    let r = u * signs * v_t;
    let scale = if with_scale {
        let mut trace = 0.0;
        for i in 0..3 {
            trace += svd.singular_values[i] * signs[(i, i)];
        }
        trace / var_s
    } else {
        1.0
    };
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let translation = mu_d - scale * (rotation * mu_s);
    SimilarityTransform::new(scale, rotation, translation)
        .map_err(|e| RegistrationError::Degenerate(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Quaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                )
            })
            .collect()
    }

    fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
        UnitQuaternion::new_normalize(Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ))
    }

    #[test]
    fn identity_when_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let p = random_points(&mut rng, 20);
        let t = kabsch_umeyama(&p, &p, true).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.rotation.angle() < 1e-9);
        assert!(t.translation.amax() < 1e-12);
    }

    #[test]
    fn pure_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = random_points(&mut rng, 20);
        let q: Vec<Vec3> = p.iter().map(|x| x + Vec3::new(5.0, 0.0, 0.0)).collect();
        let t = kabsch_umeyama(&p, &q, false).unwrap();
        assert_eq!(t.scale, 1.0);
        assert!((t.translation - Vec3::new(5.0, 0.0, 0.0)).amax() < 1e-12);
        assert!(t.rotation.angle() < 1e-9);
    }

    #[test]
    fn recovers_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let p = random_points(&mut rng, 50);
        let truth = SimilarityTransform::new(
            1.7,
            UnitQuaternion::from_axis_angle(&Vec3::z_axis(), FRAC_PI_4),
            Vec3::new(3.0, -8.0, 12.5),
        )
        .unwrap();
        let q: Vec<Vec3> = p.iter().map(|x| truth.apply(x)).collect();
        let t = kabsch_umeyama(&p, &q, true).unwrap();
        assert!((t.scale - 1.7).abs() < 1e-9);
        assert!(t.rotation.angle_to(&truth.rotation) < 1e-9);
        assert!((t.translation - truth.translation).amax() < 1e-9);
    }

    #[test]
    fn rigid_mode_has_unit_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let p = random_points(&mut rng, 30);
        let q: Vec<Vec3> = p.iter().map(|x| 2.0 * x).collect();
        assert_eq!(kabsch_umeyama(&p, &q, false).unwrap().scale, 1.0);
    }

    #[test]
    fn reflection_is_corrected() {
        // Mirror image: the best proper rotation still has det +1.
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let p = random_points(&mut rng, 30);
        let q: Vec<Vec3> = p.iter().map(|x| Vec3::new(-x.x, x.y, x.z)).collect();
        let t = kabsch_umeyama(&p, &q, true).unwrap();
        assert!((t.rotation_matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let line: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(
            kabsch_umeyama(&line, &line, true),
            Err(RegistrationError::Degenerate(_))
        ));
        let two = [Vec3::zeros(), Vec3::x()];
        assert!(matches!(
            kabsch_umeyama(&two, &two, true),
            Err(RegistrationError::TooFewPoints { .. })
        ));
        assert!(matches!(
            kabsch_umeyama(&line[..4], &line[..5], true),
            Err(RegistrationError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn planar_points_are_fine() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let p: Vec<Vec3> = (0..30)
            .map(|_| Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 0.0))
            .collect();
        let truth = SimilarityTransform::new(0.8, random_rotation(&mut rng), Vec3::new(1.0, 2.0, 3.0))
            .unwrap();
        let q: Vec<Vec3> = p.iter().map(|x| truth.apply(x)).collect();
        let t = kabsch_umeyama(&p, &q, true).unwrap();
        assert!(t.rotation.angle_to(&truth.rotation) < 1e-9);
        assert!((t.scale - 0.8).abs() < 1e-9);
    }

    #[test]
    fn equivariant_under_common_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..20 {
            let p = random_points(&mut rng, 40);
            let q: Vec<Vec3> = p
                .iter()
                .map(|x| x + Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.5))
                .collect();
            let g = SimilarityTransform::new(
                1.0,
                random_rotation(&mut rng),
                Vec3::new(rng.random_range(-30.0..30.0), 4.0, -2.0),
            )
            .unwrap();
            let t = kabsch_umeyama(&p, &q, true).unwrap();
            let gp: Vec<Vec3> = p.iter().map(|x| g.apply(x)).collect();
            let gq: Vec<Vec3> = q.iter().map(|x| g.apply(x)).collect();
            let tg = kabsch_umeyama(&gp, &gq, true).unwrap();
            let expect = g.compose(&t).compose(&g.inverse());
            assert!((tg.to_homogeneous() - expect.to_homogeneous()).amax() < 1e-9);
        }
    }
}
