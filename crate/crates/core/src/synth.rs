//! Analytic airway scene used as ground truth: an open cylinder along +z
//! with an optional spherical tumor centered on its wall.
//!
//! Frames are rendered by exact ray casting, so fusing them reproduces
//! points on the analytic surfaces up to floating-point error.

use crate::fusion::{InverseDepthMap, KeyframeRecord};
use crate::geometry::{CameraIntrinsics, Distortion, Label, LabeledPointCloud, Pose, Vec3};
use crate::image::SegmentationMask;
use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("synthetic frames must use undistorted intrinsics")]
    DistortedIntrinsics,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error(
        "{} camera at ({:.3}, {:.3}, {:.3}) is outside the free lumen",
        frame_label(.frame), .position.x, .position.y, .position.z
    )]
    CameraOutsideLumen { frame: Option<usize>, position: Vec3 },
    #[error("invalid option: {0}")]
    InvalidOption(String),
}

fn frame_label(frame: &Option<usize>) -> String {
    match frame {
        Some(i) => format!("frame {i}:"),
        None => "render:".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tumor {
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AirwayScene {
    pub cylinder_radius: f64,
    /// The wall spans `z` in `[0, cylinder_length]`; both ends are open.
    pub cylinder_length: f64,
    pub tumor: Option<Tumor>,
}

impl Default for AirwayScene {
    fn default() -> Self {
        Self {
            cylinder_radius: 9.0,
            cylinder_length: 80.0,
            tumor: Some(Tumor {
                center: Vec3::new(9.0, 0.0, 40.0),
                radius: 5.0,
            }),
        }
    }
}

/// How far the tumor center may sit off the wall, mm.
const WALL_TOLERANCE: f64 = 1e-6;

impl AirwayScene {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidScene(m));
        let (r, l) = (self.cylinder_radius, self.cylinder_length);
        if !(r.is_finite() && r > 0.0 && l.is_finite() && l > 0.0) {
            return bad(format!("cylinder radius {r} and length {l} must be positive"));
        }
        if let Some(t) = &self.tumor {
            if !(t.radius > 0.0 && t.radius < r) {
                return bad(format!("tumor radius {} not in (0, {r})", t.radius));
            }
            if !t.center.iter().all(|c| c.is_finite()) {
                return bad("tumor center is not finite".into());
            }
            let off = (t.center.xy().norm() - r).abs();
            if off > WALL_TOLERANCE {
                return bad(format!("tumor center is {off:.3e} mm off the wall"));
            }
            if !(0.0..=l).contains(&t.center.z) {
                return bad(format!("tumor center z {} outside [0, {l}]", t.center.z));
            }
        }
        Ok(())
    }

    /// Strictly inside the cylinder and outside the tumor.
    pub fn in_free_lumen(&self, p: &Vec3) -> bool {
        let r = self.cylinder_radius;
        let inside = p.x * p.x + p.y * p.y < r * r && p.z > 0.0 && p.z < self.cylinder_length;
        inside
            && self
                .tumor
                .is_none_or(|t| (p - t.center).norm_squared() > t.radius * t.radius)
    }

    /// Nearest surface hit along a ray: parameter and the surface label.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, Label)> {
        let wall = ray_cylinder(origin, dir, self.cylinder_radius, self.cylinder_length)
            .map(|t| (t, Label::Background));
        let tumor = self
            .tumor
            .and_then(|s| ray_sphere(origin, dir, &s.center, s.radius))
            .map(|t| (t, Label::Obstruction));
        match (wall, tumor) {
            (Some(w), Some(s)) => Some(if s.0 < w.0 { s } else { w }),
            (w, s) => w.or(s),
        }
    }
}

/// Roots of `a t² + b t + c = 0` in ascending order, computed without
/// cancellation.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || a == 0.0 {
        return None;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        // b == 0 and c == 0: double root at zero.
        return Some((0.0, 0.0));
    }
    let (t0, t1) = (q / a, c / q);
    Some((t0.min(t1), t0.max(t1)))
}

/// Smallest positive ray parameter where `origin + t dir` meets the wall
/// `x² + y² = radius²` with `0 <= z <= length`.
pub fn ray_cylinder(origin: &Vec3, dir: &Vec3, radius: f64, length: f64) -> Option<f64> {
    let a = dir.x * dir.x + dir.y * dir.y;
    let b = 2.0 * (origin.x * dir.x + origin.y * dir.y);
    let c = origin.x * origin.x + origin.y * origin.y - radius * radius;
    let (t0, t1) = quadratic_roots(a, b, c)?;
    [t0, t1].into_iter().find(|&t| {
        let z = origin.z + t * dir.z;
        t > 0.0 && (0.0..=length).contains(&z)
    })
}

/// Smallest positive ray parameter where the ray meets the sphere.
pub fn ray_sphere(origin: &Vec3, dir: &Vec3, center: &Vec3, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let a = dir.norm_squared();
    let b = 2.0 * oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let (t0, t1) = quadratic_roots(a, b, c)?;
    [t0, t1].into_iter().find(|&t| t > 0.0)
}

/// Renders inverse depth (`1 / z_cam`, 0 where nothing is hit) and the
/// tumor mask for a camera-to-world pose.
pub fn render_keyframe(
    scene: &AirwayScene,
    pose: &Pose,
    k: &CameraIntrinsics,
) -> Result<(InverseDepthMap, SegmentationMask), SynthError> {
    render(scene, pose, k, None)
}

fn render(
    scene: &AirwayScene,
    pose: &Pose,
    k: &CameraIntrinsics,
    frame: Option<usize>,
) -> Result<(InverseDepthMap, SegmentationMask), SynthError> {
    scene.validate()?;
    if k.distortion != Distortion::None {
        return Err(SynthError::DistortedIntrinsics);
    }
    k.validate()
        .map_err(|e| SynthError::InvalidIntrinsics(e.to_string()))?;
    let origin = pose.position();
    if !scene.in_free_lumen(&origin) {
        return Err(SynthError::CameraOutsideLumen {
            frame,
            position: origin,
        });
    }
    let rot = pose.rotation_matrix();
    let (w, h) = (k.width, k.height);
    let pixels: Vec<(f64, u8)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (u, v) = ((i % w) as f64, (i / w) as f64);
            // z component 1, so the ray parameter is the camera depth.
            let d_cam = Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
            match scene.intersect(&origin, &(rot * d_cam)) {
                Some((t, label)) => (1.0 / t, u8::from(label == Label::Obstruction)),
                None => (0.0, 0),
            }
        })
        .collect();
    let (depth, mask): (Vec<f64>, Vec<u8>) = pixels.into_iter().unzip();
    let depth = InverseDepthMap::new(w, h, depth)
        .map_err(|e| SynthError::InvalidIntrinsics(e.to_string()))?;
    let mask =
        SegmentationMask::new(w, h, mask).map_err(|e| SynthError::InvalidIntrinsics(e.to_string()))?;
    Ok((depth, mask))
}

/// Camera path through the lumen.
///
/// The camera advances from `start_z` to `end_z` along the axis while
/// swinging laterally (`x = a sin 2πu`, `y = a/2 sin 4πu`), always looking
/// at the axis point `look_ahead` mm ahead. With `return_pass` the second
/// half of the frames retraces the path backwards, looking the other way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySpec {
    pub n_frames: usize,
    pub start_z: f64,
    pub end_z: f64,
    pub lateral_amplitude: f64,
    pub look_ahead: f64,
    pub return_pass: bool,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            n_frames: 40,
            start_z: 2.0,
            end_z: 78.0,
            lateral_amplitude: 2.0,
            look_ahead: 10.0,
            return_pass: true,
        }
    }
}

/// Camera-to-world pose at `position` looking at `target`, image `x`
/// perpendicular to world `y`.
pub fn look_at(position: Vec3, target: Vec3) -> Option<Pose> {
    let z = (target - position).try_normalize(1e-12)?;
    let x = Vec3::y().cross(&z).try_normalize(1e-12)?;
    let y = z.cross(&x);
    let r = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
    Some(Pose::new(UnitQuaternion::from_rotation_matrix(&r), position))
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidTrajectory(m));
        if self.n_frames < 2 {
            return bad(format!("need at least 2 frames, got {}", self.n_frames));
        }
        let values = [self.start_z, self.end_z, self.lateral_amplitude, self.look_ahead];
        if !values.iter().all(|v| v.is_finite()) {
            return bad("non-finite trajectory parameter".into());
        }
        if self.look_ahead <= 0.0 {
            return bad(format!("look_ahead {} must be positive", self.look_ahead));
        }
        Ok(())
    }

    pub fn poses(&self) -> Result<Vec<Pose>, SynthError> {
        self.validate()?;
        let n = self.n_frames;
        (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                let (u, forward) = if !self.return_pass {
                    (s, true)
                } else if s <= 0.5 {
                    (2.0 * s, true)
                } else {
                    (2.0 - 2.0 * s, false)
                };
                let a = self.lateral_amplitude;
                let z = self.start_z + u * (self.end_z - self.start_z);
                let heading = if (self.end_z >= self.start_z) == forward { 1.0 } else { -1.0 };
                let position = Vec3::new(a * (TAU * u).sin(), 0.5 * a * (2.0 * TAU * u).sin(), z);
                let target = Vec3::new(0.0, 0.0, z + heading * self.look_ahead);
                look_at(position, target).ok_or_else(|| {
                    SynthError::InvalidTrajectory(format!("frame {i}: degenerate viewing direction"))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceOptions {
    /// Standard deviation of Gaussian noise added to the camera depth, mm.
    /// Zero renders exact depth.
    pub depth_noise_std: f64,
    pub seed: u64,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        Self {
            depth_noise_std: 0.0,
            seed: 7,
        }
    }
}

/// Frame size and focal length used by the synthetic datasets.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 100.0,
        fy: 100.0,
        cx: 159.5,
        cy: 119.5,
        width: 320,
        height: 240,
        distortion: Distortion::None,
    }
}

/// Renders every pose of the trajectory. Frame ids are `0..n_frames`.
pub fn generate_sequence(
    scene: &AirwayScene,
    traj: &TrajectorySpec,
    k: &CameraIntrinsics,
    opts: &SequenceOptions,
) -> Result<Vec<KeyframeRecord>, SynthError> {
    if !(opts.depth_noise_std.is_finite() && opts.depth_noise_std >= 0.0) {
        return Err(SynthError::InvalidOption(format!(
            "depth_noise_std {} must be >= 0",
            opts.depth_noise_std
        )));
    }
    scene.validate()?;
    let poses = traj.poses()?;
    for (i, p) in poses.iter().enumerate() {
        if !scene.in_free_lumen(&p.position()) {
            return Err(SynthError::CameraOutsideLumen {
                frame: Some(i),
                position: p.position(),
            });
        }
    }
    poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let (mut depth, mask) = render(scene, pose, k, Some(i))?;
            if opts.depth_noise_std > 0.0 {
                depth = jitter(&depth, opts.depth_noise_std, opts.seed, i as u64);
            }
            Ok(KeyframeRecord {
                frame_id: i as u64,
                intrinsics: *k,
                pose: *pose,
                inv_depth: depth,
                mask,
            })
        })
        .collect()
}

fn jitter(depth: &InverseDepthMap, std: f64, seed: u64, frame: u64) -> InverseDepthMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame + 1);
    let noise = Normal::new(0.0, std).expect("std checked by caller");
    let data = depth
        .data()
        .iter()
        .map(|&d| {
            if d <= 0.0 {
                return d;
            }
            let z = 1.0 / d + noise.sample(&mut rng);
            if z > 0.0 {
                1.0 / z
            } else {
                0.0
            }
        })
        .collect();
    InverseDepthMap::new(depth.width(), depth.height(), data).expect("same dimensions")
}

/// Uniform samples over the surface seen from inside the lumen: the wall
/// outside the tumor and the part of the tumor inside the cylinder.
/// Labels follow the surface each sample came from.
pub fn sample_surface(
    scene: &AirwayScene,
    n: usize,
    seed: u64,
) -> Result<LabeledPointCloud, SynthError> {
    scene.validate()?;
    let (r, l) = (scene.cylinder_radius, scene.cylinder_length);
    let wall_area = TAU * r * l;
    let tumor_area = scene.tumor.map_or(0.0, |t| 4.0 * PI * t.radius * t.radius);
    let p_wall = wall_area / (wall_area + tumor_area);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = LabeledPointCloud::with_capacity(n);
    while cloud.len() < n {
        if rng.random::<f64>() < p_wall {
            let theta = rng.random_range(0.0..TAU);
            let p = Vec3::new(r * theta.cos(), r * theta.sin(), rng.random_range(0.0..=l));
            let hidden = scene
                .tumor
                .is_some_and(|t| (p - t.center).norm_squared() < t.radius * t.radius);
            if !hidden {
                cloud.push(p, Label::Background);
            }
        } else if let Some(t) = scene.tumor {
            let g: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let Some(dir) = Vec3::from(g).try_normalize(1e-12) else {
                continue;
            };
            let p = t.center + t.radius * dir;
            if p.x * p.x + p.y * p.y < r * r && (0.0..=l).contains(&p.z) {
                cloud.push(p, Label::Obstruction);
            }
        }
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{fuse_keyframe, FusionFilter};

    /// Bisection on a sign change of `f` along the ray, starting from a
    /// bracket found by marching.
    fn bisect(f: impl Fn(f64) -> f64, t_max: f64) -> Option<f64> {
        let steps = 100_000;
        let mut lo = 1e-9;
        for i in 1..=steps {
            let hi = t_max * i as f64 / steps as f64;
            if f(lo).signum() != f(hi).signum() {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if f(a).signum() == f(m).signum() {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                return Some(0.5 * (a + b));
            }
            lo = hi;
        }
        None
    }

    #[test]
    fn cylinder_hand_cases() {
        let o = Vec3::new(0.0, 0.0, 40.0);
        assert_eq!(ray_cylinder(&o, &Vec3::x(), 9.0, 80.0), Some(9.0));
        assert_eq!(ray_cylinder(&o, &Vec3::z(), 9.0, 80.0), None);
        // Exits through the open end before reaching the wall.
        assert_eq!(ray_cylinder(&o, &Vec3::new(0.1, 0.0, 1.0), 9.0, 80.0), None);
    }

    #[test]
    fn cylinder_matches_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..200 {
            let o = Vec3::new(
                rng.random_range(-6.0..6.0),
                rng.random_range(-6.0..6.0),
                rng.random_range(10.0..70.0),
            );
            let a: f64 = rng.random_range(0.0..TAU);
            let d = Vec3::new(a.cos(), a.sin(), rng.random_range(-0.3..0.3));
            let t = ray_cylinder(&o, &d, 9.0, 80.0).unwrap();
            let f = |s: f64| {
                let p = o + s * d;
                p.x * p.x + p.y * p.y - 81.0
            };
            let tb = bisect(f, 100.0).unwrap();
            assert!((t - tb).abs() < 1e-10, "{t} vs {tb}");
        }
    }

    #[test]
    fn sphere_hand_cases() {
        let c = Vec3::new(0.0, 0.0, 10.0);
        assert_eq!(ray_sphere(&Vec3::zeros(), &Vec3::z(), &c, 5.0), Some(5.0));
        assert_eq!(ray_sphere(&Vec3::zeros(), &Vec3::x(), &c, 5.0), None);
        // Grazing: discriminant exactly zero, tangent at t = 10.
        let t = ray_sphere(&Vec3::new(5.0, 0.0, 0.0), &Vec3::z(), &c, 5.0).unwrap();
        assert!((t - 10.0).abs() < 1e-9);
        // From inside, the exit point.
        assert_eq!(ray_sphere(&c, &Vec3::y(), &c, 5.0), Some(5.0));
    }

    #[test]
    fn scene_validation() {
        assert!(AirwayScene::default().validate().is_ok());
        let mut s = AirwayScene::default();
        s.tumor = Some(Tumor {
            center: Vec3::new(8.0, 0.0, 40.0),
            radius: 5.0,
        });
        assert!(s.validate().is_err());
        s.tumor = Some(Tumor {
            center: Vec3::new(9.0, 0.0, 40.0),
            radius: 9.5,
        });
        assert!(s.validate().is_err());
    }

    #[test]
    fn bare_wall_depth() {
        let scene = AirwayScene {
            tumor: None,
            ..AirwayScene::default()
        };
        let pose = look_at(Vec3::new(0.0, 0.0, 40.0), Vec3::new(1.0, 0.0, 40.0)).unwrap();
        let k = CameraIntrinsics::pinhole(50.0, 50.0, 32.0, 24.0, 65, 49).unwrap();
        let (d, m) = render_keyframe(&scene, &pose, &k).unwrap();
        assert!((d.get(32, 24) - 1.0 / 9.0).abs() < 1e-12);
        assert_eq!(m.count_ones(), 0);
    }

    #[test]
    fn camera_outside_lumen_is_rejected() {
        let pose = look_at(Vec3::new(20.0, 0.0, 40.0), Vec3::new(0.0, 0.0, 40.0)).unwrap();
        let err = render_keyframe(&AirwayScene::default(), &pose, &default_intrinsics());
        assert!(matches!(err, Err(SynthError::CameraOutsideLumen { .. })));
        // Inside the tumor.
        let pose = look_at(Vec3::new(7.0, 0.0, 40.0), Vec3::new(0.0, 0.0, 40.0)).unwrap();
        let err = render_keyframe(&AirwayScene::default(), &pose, &default_intrinsics());
        assert!(matches!(err, Err(SynthError::CameraOutsideLumen { .. })));
    }

    #[test]
    fn fused_points_lie_on_surfaces() {
        let scene = AirwayScene::default();
        let k = CameraIntrinsics::pinhole(60.0, 60.0, 47.5, 35.5, 96, 72).unwrap();
        let t = scene.tumor.unwrap();
        for z in [20.0, 30.0, 55.0] {
            let heading = if z < 40.0 { 1.0 } else { -1.0 };
            let pose = look_at(Vec3::new(-1.0, 0.5, z), Vec3::new(0.0, 0.0, z + 10.0 * heading))
                .unwrap();
            let (inv_depth, mask) = render_keyframe(&scene, &pose, &k).unwrap();
            let rec = KeyframeRecord {
                frame_id: 0,
                intrinsics: k,
                pose,
                inv_depth,
                mask,
            };
            let cloud = fuse_keyframe(&rec, &FusionFilter::permissive());
            assert!(cloud.count(Label::Obstruction) > 0);
            for (p, label) in cloud.iter() {
                let residual = match label {
                    Label::Background => p.xy().norm() - 9.0,
                    Label::Obstruction => (p - t.center).norm() - 5.0,
                };
                assert!(residual.abs() < 1e-6, "{label:?} residual {residual}");
            }
        }
    }

    #[test]
    fn mask_marks_exactly_tumor_hits() {
        let scene = AirwayScene::default();
        let k = CameraIntrinsics::pinhole(40.0, 40.0, 31.5, 23.5, 64, 48).unwrap();
        let pose = look_at(Vec3::new(0.0, 0.0, 25.0), Vec3::new(0.0, 0.0, 35.0)).unwrap();
        let (d, m) = render_keyframe(&scene, &pose, &k).unwrap();
        let t = scene.tumor.unwrap();
        let rot = pose.rotation_matrix();
        for v in 0..48 {
            for u in 0..64 {
                let dir = rot * Vec3::new((u as f64 - 31.5) / 40.0, (v as f64 - 23.5) / 40.0, 1.0);
                let o = pose.position();
                let ts = ray_sphere(&o, &dir, &t.center, t.radius);
                let tc = ray_cylinder(&o, &dir, 9.0, 80.0);
                let tumor = match (ts, tc) {
                    (Some(s), Some(c)) => s < c,
                    (Some(_), None) => true,
                    _ => false,
                };
                assert_eq!(m.get(u, v) == 1, tumor);
                let hit = ts.is_some() || tc.is_some();
                assert_eq!(d.get(u, v) > 0.0, hit);
            }
        }
        assert!(m.count_ones() > 0);
    }

    #[test]
    fn trajectory_construction() {
        let traj = TrajectorySpec {
            n_frames: 2,
            lateral_amplitude: 0.0,
            return_pass: false,
            ..TrajectorySpec::default()
        };
        let poses = traj.poses().unwrap();
        assert_eq!(poses.len(), 2);
        for p in &poses {
            assert!(p.position().xy().norm() < 1e-12);
            let view = p.rotation_matrix() * Vec3::z();
            assert!((view - Vec3::z()).norm() < 1e-12);
        }
        assert!((poses[0].position().z - 2.0).abs() < 1e-12);
        assert!((poses[1].position().z - 78.0).abs() < 1e-12);

        let scene = AirwayScene::default();
        let poses = TrajectorySpec::default().poses().unwrap();
        assert!(poses.iter().all(|p| scene.in_free_lumen(&p.position())));
        let last = poses.last().unwrap().rotation_matrix() * Vec3::z();
        assert!(last.z < 0.0);
        assert!(TrajectorySpec {
            n_frames: 1,
            ..TrajectorySpec::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn sequence_reports_offending_frame() {
        let traj = TrajectorySpec {
            lateral_amplitude: 12.0,
            ..TrajectorySpec::default()
        };
        let k = CameraIntrinsics::pinhole(20.0, 20.0, 15.5, 11.5, 32, 24).unwrap();
        match generate_sequence(&AirwayScene::default(), &traj, &k, &SequenceOptions::default()) {
            Err(SynthError::CameraOutsideLumen { frame: Some(_), .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn noisy_sequences_are_reproducible() {
        let traj = TrajectorySpec {
            n_frames: 4,
            ..TrajectorySpec::default()
        };
        let k = CameraIntrinsics::pinhole(20.0, 20.0, 15.5, 11.5, 32, 24).unwrap();
        let opts = SequenceOptions {
            depth_noise_std: 0.1,
            seed: 3,
        };
        let scene = AirwayScene::default();
        let a = generate_sequence(&scene, &traj, &k, &opts).unwrap();
        let b = generate_sequence(&scene, &traj, &k, &opts).unwrap();
        assert_eq!(a, b);
        let exact = generate_sequence(&scene, &traj, &k, &SequenceOptions::default()).unwrap();
        assert_ne!(a[0].inv_depth, exact[0].inv_depth);
        assert_eq!(a[0].mask, exact[0].mask);
    }

    #[test]
    fn samples_lie_on_surfaces() {
        let scene = AirwayScene::default();
        let t = scene.tumor.unwrap();
        let one = sample_surface(&scene, 1, 5).unwrap();
        assert_eq!(one.len(), 1);
        let cloud = sample_surface(&scene, 20_000, 5).unwrap();
        for (p, label) in cloud.iter() {
            let residual = match label {
                Label::Background => p.xy().norm() - 9.0,
                Label::Obstruction => (p - t.center).norm() - 5.0,
            };
            assert!(residual.abs() < 1e-9);
        }
        assert_eq!(cloud, sample_surface(&scene, 20_000, 5).unwrap());
    }

    /// Visible areas by numerical quadrature: wall outside the sphere, and
    /// sphere inside the cylinder.
    fn visible_areas(scene: &AirwayScene) -> (f64, f64) {
        let (r, l) = (scene.cylinder_radius, scene.cylinder_length);
        let t = scene.tumor.unwrap();
        let n = 4000;
        let mut wall_hidden = 0.0;
        for i in 0..n {
            let th = TAU * (i as f64 + 0.5) / n as f64;
            let d2 = (r * th.cos() - t.center.x).powi(2) + (r * th.sin() - t.center.y).powi(2);
            if d2 < t.radius * t.radius {
                wall_hidden += 2.0 * (t.radius * t.radius - d2).sqrt() * r * TAU / n as f64;
            }
        }
        let mut cap = 0.0;
        let m = 2000;
        for i in 0..m {
            let phi = PI * (i as f64 + 0.5) / m as f64;
            for j in 0..2 * m {
                let th = TAU * (j as f64 + 0.5) / (2 * m) as f64;
                let p = t.center
                    + t.radius * Vec3::new(phi.sin() * th.cos(), phi.sin() * th.sin(), phi.cos());
                if p.x * p.x + p.y * p.y < r * r {
                    cap += t.radius * t.radius * phi.sin() * (PI / m as f64) * (TAU / (2 * m) as f64);
                }
            }
        }
        (TAU * r * l - wall_hidden, cap)
    }

    #[test]
    fn label_fractions_follow_areas() {
        let scene = AirwayScene::default();
        let (wall, cap) = visible_areas(&scene);
        let expected = cap / (wall + cap);
        let cloud = sample_surface(&scene, 100_000, 9).unwrap();
        let got = cloud.count(Label::Obstruction) as f64 / cloud.len() as f64;
        assert!((got - expected).abs() < 0.02, "{got} vs {expected}");
        // Binomial standard error here is about 6e-4.
        assert!((got - expected).abs() < 0.003, "{got} vs {expected}");
    }
}
