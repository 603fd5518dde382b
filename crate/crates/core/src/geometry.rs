//! Rigid and similarity transforms, camera intrinsics, and labeled clouds.
//!
//! World units are millimeters everywhere. Poses are camera-to-world:
//! `X_world = R * X_cam + t`.

use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

/// A 3D point or direction, millimeters.
pub type Vec3 = Vector3<f64>;

/// Allowed deviation of a stored quaternion from unit norm.
pub const QUATERNION_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("quaternion norm {0} is not within {QUATERNION_NORM_TOL} of 1")]
    NonUnitQuaternion(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("cloud has {points} points but {labels} labels")]
    LengthMismatch { points: usize, labels: usize },
}

fn unit_quaternion(q: Quaternion<f64>) -> Result<UnitQuaternion<f64>, GeometryError> {
    let norm = q.norm();
    if !norm.is_finite() {
        return Err(GeometryError::NonFinite("quaternion"));
    }
    if (norm - 1.0).abs() > QUATERNION_NORM_TOL {
        return Err(GeometryError::NonUnitQuaternion(norm));
    }
    Ok(UnitQuaternion::new_normalize(q))
}

fn check_finite(v: &Vec3, what: &'static str) -> Result<(), GeometryError> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(GeometryError::NonFinite(what))
    }
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Builds a pose from raw quaternion components, rejecting non-unit input.
    pub fn from_wxyz(wxyz: [f64; 4], translation: Vec3) -> Result<Self, GeometryError> {
        let [w, x, y, z] = wxyz;
        check_finite(&translation, "translation")?;
        Ok(Self {
            rotation: unit_quaternion(Quaternion::new(w, x, y, z))?,
            translation,
        })
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Camera position in world coordinates.
    pub fn position(&self) -> Vec3 {
        self.translation
    }
}

/// `x -> scale * R * x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(
        scale: f64,
        rotation: UnitQuaternion<f64>,
        translation: Vec3,
    ) -> Result<Self, GeometryError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(GeometryError::InvalidScale(scale));
        }
        check_finite(&translation, "translation")?;
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    pub fn from_pose(p: &Pose) -> Self {
        Self {
            scale: 1.0,
            rotation: p.rotation,
            translation: p.translation,
        }
    }

    /// Splits a homogeneous matrix `[s*R | t; 0 0 0 1]` into its parts.
    ///
    /// The rotation is re-orthonormalized, so text round trips with limited
    /// digits still produce a proper rotation.
    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("transform matrix"));
        }
        let sr: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let det = sr.determinant();
        if det <= 0.0 {
            return Err(GeometryError::InvalidScale(det));
        }
        let scale = det.cbrt();
        let rot = Rotation3::from_matrix_eps(&(sr / scale), 1e-15, 100, Rotation3::identity());
        Self::new(
            scale,
            UnitQuaternion::from_rotation_matrix(&rot),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.scale * (self.rotation * x) + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> SimilarityTransform {
        SimilarityTransform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv = self.rotation.inverse();
        let s = 1.0 / self.scale;
        SimilarityTransform {
            scale: s,
            rotation: inv,
            translation: -(s * (inv * self.translation)),
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(self.rotation_matrix() * self.scale));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// Lens distortion, with the coefficient set carried by the variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distortion {
    None,
    /// OpenCV radial-tangential (`k1 k2 p1 p2 k3`).
    RadTan {
        k1: f64,
        k2: f64,
        p1: f64,
        p2: f64,
        k3: f64,
    },
    /// Equidistant fisheye (`k1 k2 k3 k4`), `theta_d = theta (1 + k1 θ² + ...)`.
    FisheyeEquidistant { k1: f64, k2: f64, k3: f64, k4: f64 },
}

impl Distortion {
    pub fn name(&self) -> &'static str {
        match self {
            Distortion::None => "none",
            Distortion::RadTan { .. } => "radtan",
            Distortion::FisheyeEquidistant { .. } => "fisheye_equidistant",
        }
    }

    pub fn coefficients(&self) -> Vec<f64> {
        match *self {
            Distortion::None => vec![],
            Distortion::RadTan { k1, k2, p1, p2, k3 } => vec![k1, k2, p1, p2, k3],
            Distortion::FisheyeEquidistant { k1, k2, k3, k4 } => vec![k1, k2, k3, k4],
        }
    }

    /// Parses a model name plus coefficient list; the count must match the model.
    pub fn from_parts(model: &str, coefficients: &[f64]) -> Result<Self, GeometryError> {
        let expect = |n: usize| {
            if coefficients.len() == n {
                Ok(())
            } else {
                Err(GeometryError::InvalidIntrinsics(format!(
                    "distortion model `{model}` takes {n} coefficients, got {}",
                    coefficients.len()
                )))
            }
        };
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite("distortion coefficients"));
        }
        match model {
            "none" => {
                expect(0)?;
                Ok(Distortion::None)
            }
            "radtan" => {
                expect(5)?;
                let c = coefficients;
                Ok(Distortion::RadTan {
                    k1: c[0],
                    k2: c[1],
                    p1: c[2],
                    p2: c[3],
                    k3: c[4],
                })
            }
            "fisheye_equidistant" => {
                expect(4)?;
                let c = coefficients;
                Ok(Distortion::FisheyeEquidistant {
                    k1: c[0],
                    k2: c[1],
                    k3: c[2],
                    k4: c[3],
                })
            }
            other => Err(GeometryError::InvalidIntrinsics(format!(
                "unknown distortion model `{other}`"
            ))),
        }
    }
}

/// Pinhole camera with optional distortion. Pixel `(0, 0)` is the center of
/// the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub distortion: Distortion,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        distortion: Distortion,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            distortion,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn pinhole(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        Self::new(fx, fy, cx, cy, width, height, Distortion::None)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::InvalidIntrinsics(msg));
        if ![self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(GeometryError::NonFinite("intrinsics"));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return bad(format!("focal lengths must be positive ({}, {})", self.fx, self.fy));
        }
        if self.width == 0 || self.height == 0 {
            return bad(format!("empty image size {}x{}", self.width, self.height));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return bad(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            ));
        }
        Ok(())
    }

    /// Same camera with the distortion model dropped.
    pub fn without_distortion(&self) -> Self {
        Self {
            distortion: Distortion::None,
            ..*self
        }
    }

    /// Intrinsics for the same field of view sampled at a different
    /// resolution, keeping the pixel-center convention.
    pub fn scaled_to(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return *self;
        }
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
            width,
            height,
            distortion: self.distortion,
        }
    }

    /// Pinhole projection of a camera-frame point (no distortion applied).
    pub fn project(&self, x_cam: &Vec3) -> (f64, f64) {
        (
            self.fx * x_cam.x / x_cam.z + self.cx,
            self.fy * x_cam.y / x_cam.z + self.cy,
        )
    }

    pub fn pixel_to_normalized(&self, u: f64, v: f64) -> (f64, f64) {
        ((u - self.cx) / self.fx, (v - self.cy) / self.fy)
    }

    pub fn normalized_to_pixel(&self, xn: f64, yn: f64) -> (f64, f64) {
        (self.fx * xn + self.cx, self.fy * yn + self.cy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Background,
    Obstruction,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Background => 0,
            Label::Obstruction => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Background),
            1 => Some(Label::Obstruction),
            _ => None,
        }
    }
}

/// Points with a parallel label per point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledPointCloud {
    points: Vec<Vec3>,
    labels: Vec<Label>,
}

impl LabeledPointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            points: Vec::with_capacity(n),
            labels: Vec::with_capacity(n),
        }
    }

    pub fn from_parts(points: Vec<Vec3>, labels: Vec<Label>) -> Result<Self, GeometryError> {
        if points.len() != labels.len() {
            return Err(GeometryError::LengthMismatch {
                points: points.len(),
                labels: labels.len(),
            });
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite("cloud point"));
        }
        Ok(Self { points, labels })
    }

    /// All points labeled `label`.
    pub fn uniform(points: Vec<Vec3>, label: Label) -> Result<Self, GeometryError> {
        let labels = vec![label; points.len()];
        Self::from_parts(points, labels)
    }

    pub fn push(&mut self, p: Vec3, label: Label) {
        debug_assert!(p.iter().all(|c| c.is_finite()));
        self.points.push(p);
        self.labels.push(label);
    }

    pub fn extend_from(&mut self, other: &LabeledPointCloud) {
        self.points.extend_from_slice(&other.points);
        self.labels.extend_from_slice(&other.labels);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec3, Label)> {
        self.points.iter().zip(self.labels.iter().copied())
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Points carrying `label`, in cloud order.
    pub fn points_with(&self, label: Label) -> Vec<Vec3> {
        self.iter()
            .filter(|(_, l)| *l == label)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn transformed(&self, t: &SimilarityTransform) -> LabeledPointCloud {
        LabeledPointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn into_parts(self) -> (Vec<Vec3>, Vec<Label>) {
        (self.points, self.labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        UnitQuaternion::new_normalize(q)
    }

    fn random_vec(rng: &mut impl Rng, r: f64) -> Vec3 {
        Vec3::new(
            rng.random_range(-r..r),
            rng.random_range(-r..r),
            rng.random_range(-r..r),
        )
    }

    fn random_pose(rng: &mut impl Rng) -> Pose {
        Pose::new(random_rotation(rng), random_vec(rng, 50.0))
    }

    /// Quaternion -> matrix written out by hand, independent of nalgebra.
    fn quat_to_matrix(q: &UnitQuaternion<f64>) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (q.w, q.i, q.j, q.k);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    fn homogeneous(r: [[f64; 3]; 3], t: &Vec3) -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for i in 0..3 {
            m[i][..3].copy_from_slice(&r[i]);
            m[i][3] = t[i];
        }
        m[3][3] = 1.0;
        m
    }

    fn matmul4(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
        let mut c = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }

    fn apply4(m: &[[f64; 4]; 4], x: &Vec3) -> Vec3 {
        let h = [x.x, x.y, x.z, 1.0];
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|k| m[i][k] * h[k]).sum();
        }
        Vec3::new(out[0], out[1], out[2])
    }

    #[test]
    fn identity_pose_leaves_points() {
        let p = Pose::identity();
        assert_eq!(p.apply(&Vec3::new(1.0, 2.0, 3.0)), Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn quarter_turn_about_z() {
        let p = Pose::new(
            UnitQuaternion::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2),
            Vec3::zeros(),
        );
        let y = p.apply(&Vec3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(y, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn apply_matches_homogeneous_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p = random_pose(&mut rng);
            let x = random_vec(&mut rng, 100.0);
            let m = homogeneous(quat_to_matrix(&p.rotation), &p.translation);
            assert!((p.apply(&x) - apply4(&m, &x)).amax() < 1e-9);
        }
    }

    #[test]
    fn compose_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let ab = a.compose(&b);
            let ma = homogeneous(quat_to_matrix(&a.rotation), &a.translation);
            let mb = homogeneous(quat_to_matrix(&b.rotation), &b.translation);
            let mab = matmul4(&ma, &mb);
            let got = ab.to_homogeneous();
            for i in 0..4 {
                for j in 0..4 {
                    assert!((got[(i, j)] - mab[i][j]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn compose_with_identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_pose(&mut rng);
        let q = p.compose(&Pose::identity());
        assert!((q.to_homogeneous() - p.to_homogeneous()).amax() < 1e-12);
        let id = p.compose(&p.inverse());
        assert!((id.to_homogeneous() - Matrix4::identity()).amax() < 1e-9);
    }

    #[test]
    fn inverse_cases() {
        assert_eq!(Pose::identity().inverse(), Pose::identity());
        let t = Pose::from_translation(Vec3::new(1.0, 2.0, 3.0)).inverse();
        assert_eq!(t.translation, Vec3::new(-1.0, -2.0, -3.0));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_pose(&mut rng);
        let inv = p.inverse();
        let worst = (0..100)
            .map(|_| {
                let x = random_vec(&mut rng, 100.0);
                (inv.apply(&p.apply(&x)) - x).amax()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "round trip error {worst}");
    }

    #[test]
    fn rejects_non_unit_quaternion() {
        assert!(matches!(
            Pose::from_wxyz([1.0, 0.1, 0.0, 0.0], Vec3::zeros()),
            Err(GeometryError::NonUnitQuaternion(_))
        ));
        assert!(Pose::from_wxyz([1.0, 0.0, 0.0, 0.0], Vec3::zeros()).is_ok());
    }

    #[test]
    fn similarity_cases() {
        let id = SimilarityTransform::identity();
        let x = Vec3::new(0.3, -2.0, 7.0);
        assert_eq!(id.apply(&x), x);
        let s2 = SimilarityTransform::new(2.0, UnitQuaternion::identity(), Vec3::zeros()).unwrap();
        assert_eq!(s2.apply(&Vec3::new(1.0, 1.0, 1.0)), Vec3::new(2.0, 2.0, 2.0));
        assert!(SimilarityTransform::new(0.0, UnitQuaternion::identity(), Vec3::zeros()).is_err());
        assert!(SimilarityTransform::new(-1.0, UnitQuaternion::identity(), Vec3::zeros()).is_err());
    }

    #[test]
    fn similarity_matches_componentwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let s = SimilarityTransform::new(
                rng.random_range(0.2..5.0),
                random_rotation(&mut rng),
                random_vec(&mut rng, 50.0),
            )
            .unwrap();
            let x = random_vec(&mut rng, 100.0);
            let r = quat_to_matrix(&s.rotation);
            let mut expect = [0.0; 3];
            for i in 0..3 {
                expect[i] =
                    s.scale * (r[i][0] * x.x + r[i][1] * x.y + r[i][2] * x.z) + s.translation[i];
            }
            let got = s.apply(&x);
            for i in 0..3 {
                assert!((got[i] - expect[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn similarity_homogeneous_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = SimilarityTransform::new(1.7, random_rotation(&mut rng), random_vec(&mut rng, 20.0))
            .unwrap();
        let back = SimilarityTransform::from_homogeneous(&s.to_homogeneous()).unwrap();
        assert!((back.scale - s.scale).abs() < 1e-12);
        assert!(back.rotation.angle_to(&s.rotation) < 1e-12);
        assert!((back.translation - s.translation).amax() < 1e-12);
        let x = Vec3::new(1.0, 2.0, 3.0);
        assert!((s.inverse().apply(&s.apply(&x)) - x).amax() < 1e-12);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::pinhole(300.0, 300.0, 320.0, 240.0, 640, 480).is_ok());
        assert!(CameraIntrinsics::pinhole(-1.0, 300.0, 320.0, 240.0, 640, 480).is_err());
        assert!(CameraIntrinsics::pinhole(300.0, 300.0, 640.0, 240.0, 640, 480).is_err());
        assert!(Distortion::from_parts("radtan", &[0.1, 0.0, 0.0]).is_err());
        assert!(Distortion::from_parts("fisheye_equidistant", &[0.0; 4]).is_ok());
        assert!(Distortion::from_parts("kb8", &[]).is_err());
    }

    #[test]
    fn scaled_intrinsics_keep_pixel_centers() {
        let k = CameraIntrinsics::pinhole(200.0, 200.0, 255.5, 191.5, 512, 384).unwrap();
        let half = k.scaled_to(256, 192);
        assert_eq!((half.cx, half.cy), (127.5, 95.5));
        assert_eq!(half.fx, 100.0);
        // A ray through a full-res pixel center maps to the same ray at half res.
        let ray = Vec3::new(0.1, -0.2, 1.0);
        let (u, v) = k.project(&ray);
        let (uh, vh) = half.project(&ray);
        assert_relative_eq!((u + 0.5) / 2.0 - 0.5, uh, epsilon = 1e-12);
        assert_relative_eq!((v + 0.5) / 2.0 - 0.5, vh, epsilon = 1e-12);
    }

    #[test]
    fn cloud_parts_must_match() {
        assert!(LabeledPointCloud::from_parts(vec![Vec3::zeros()], vec![]).is_err());
        assert!(LabeledPointCloud::from_parts(
            vec![Vec3::new(f64::NAN, 0.0, 0.0)],
            vec![Label::Background]
        )
        .is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn quat() -> impl Strategy<Value = UnitQuaternion<f64>> {
            (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
                .prop_filter("nonzero", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
                .prop_map(|(w, x, y, z)| UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z)))
        }

        fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
            (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
        }

        fn pose() -> impl Strategy<Value = Pose> {
            (quat(), vec3(100.0)).prop_map(|(q, t)| Pose::new(q, t))
        }

        proptest! {
            #[test]
            fn rotation_matrix_is_proper(q in quat()) {
                let r = Pose::new(q, Vec3::zeros()).rotation_matrix();
                let err = (r.transpose() * r - Matrix3::identity()).amax();
                prop_assert!(err < 1e-9);
                prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn compose_is_associative(a in pose(), b in pose(), c in pose(), x in vec3(100.0)) {
                let l = a.compose(&b).compose(&c);
                let r = a.compose(&b.compose(&c));
                prop_assert!((l.to_homogeneous() - r.to_homogeneous()).amax() < 1e-9);
                prop_assert!((l.apply(&x) - a.apply(&b.apply(&c.apply(&x)))).amax() < 1e-9);
            }

            #[test]
            fn pose_preserves_distances(p in pose(), x in vec3(100.0), y in vec3(100.0)) {
                let d0 = (x - y).norm();
                let d1 = (p.apply(&x) - p.apply(&y)).norm();
                prop_assert!((d0 - d1).abs() < 1e-9);
            }

            #[test]
            fn similarity_scales_distances(
                q in quat(), t in vec3(50.0), s in 0.1..10.0f64, x in vec3(100.0), y in vec3(100.0)
            ) {
                let st = SimilarityTransform::new(s, q, t).unwrap();
                let d0 = (x - y).norm();
                let d1 = (st.apply(&x) - st.apply(&y)).norm();
                prop_assert!((d1 - s * d0).abs() < 1e-9);
            }
        }
    }
}
