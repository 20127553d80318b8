//! Depth-camera model: visibility of surface samples and simulated captures.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::SurfaceModel;
use crate::error::{Error, Result};
use crate::geometry::ply::{write_point_cloud, PlyFormat};
use crate::geometry::{PointCloud, Pose, Vec3};

/// A sample counts as occluded only by hits at least this far in front of it.
pub const OCCLUSION_TOLERANCE: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub h_fov: f64,
    pub v_fov: f64,
    pub min_range: f64,
    pub max_range: f64,
    /// Largest angle between view ray and surface normal still seen.
    pub max_incidence: f64,
    /// Depth noise standard deviation along the view ray.
    pub noise_sigma: f64,
    /// Per-capture pose error magnitude `(rotation rad, translation m)`.
    pub pose_jitter: (f64, f64),
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            h_fov: 75f64.to_radians(),
            v_fov: 65f64.to_radians(),
            min_range: 0.5,
            max_range: 3.86,
            max_incidence: 60f64.to_radians(),
            noise_sigma: 0.002,
            pose_jitter: (0.5f64.to_radians(), 0.005),
        }
    }
}

impl CameraModel {
    /// Noise-free, jitter-free copy.
    pub fn ideal(&self) -> Self {
        Self {
            noise_sigma: 0.0,
            pose_jitter: (0.0, 0.0),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let half_turn = std::f64::consts::PI;
        let ok = 0.0 < self.min_range
            && self.min_range < self.max_range
            && 0.0 < self.h_fov
            && self.h_fov < half_turn
            && 0.0 < self.v_fov
            && self.v_fov < half_turn
            && 0.0 < self.max_incidence
            && self.max_incidence <= half_turn / 2.0
            && self.noise_sigma >= 0.0
            && self.pose_jitter.0 >= 0.0
            && self.pose_jitter.1 >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid camera model {self:?}")))
        }
    }

    /// Frustum, range and incidence tests for one point; occlusion excluded.
    pub fn sees_unoccluded(&self, pose: &Pose, point: &Vec3, normal: &Vec3) -> bool {
        let local = pose.inverse().transform_point(point);
        if local.z <= 0.0 {
            return false;
        }
        if local.x.atan2(local.z).abs() > self.h_fov / 2.0 || local.y.atan2(local.z).abs() > self.v_fov / 2.0 {
            return false;
        }
        let range = local.norm();
        if range < self.min_range || range > self.max_range {
            return false;
        }
        let to_camera = (pose.translation() - point) / range;
        normal.dot(&to_camera) >= self.max_incidence.cos()
    }
}

/// Indices of model samples the camera at `pose` sees, ascending.
pub fn visible_points(cam: &CameraModel, pose: &Pose, model: &SurfaceModel) -> Vec<usize> {
    let points = model.samples().points();
    let normals = model.samples().normals().expect("surface samples carry normals");
    let origin = *pose.translation();
    let mesh = model.mesh();
    (0..points.len())
        .into_par_iter()
        .filter(|&i| {
            cam.sees_unoccluded(pose, &points[i], &normals[i]) && {
                let d = points[i] - origin;
                let dist = d.norm();
                !mesh.occluded(&origin, &(d / dist), dist - OCCLUSION_TOLERANCE)
            }
        })
        .collect()
}

/// One simulated capture.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanFrame {
    pub camera_pose_commanded: Pose,
    pub camera_pose_actual: Pose,
    /// Measured points in the actual camera frame.
    pub cloud: PointCloud,
    /// Ground-truth sample indices seen from the actual pose.
    pub visible_indices: Vec<usize>,
}

impl ScanFrame {
    /// Cloud placed in the world by the commanded pose.
    pub fn world_cloud_commanded(&self) -> PointCloud {
        self.cloud.transformed(&self.camera_pose_commanded)
    }

    /// Writes `<stem>.ply` and `<stem>.pose.txt` into `dir`.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_point_cloud(dir.join(format!("{stem}.ply")), &self.cloud, PlyFormat::BinaryLittleEndian)?;
        let path = dir.join(format!("{stem}.pose.txt"));
        std::fs::write(&path, self.pose_sidecar()).map_err(|e| Error::io(&path, e))
    }

    /// Text sidecar: translation and quaternion (x y z w) for both poses.
    pub fn pose_sidecar(&self) -> String {
        let mut s = String::new();
        for (name, p) in [("commanded", &self.camera_pose_commanded), ("actual", &self.camera_pose_actual)] {
            let t = p.translation();
            let q = p.rotation().coords;
            writeln!(s, "{name} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}", t.x, t.y, t.z, q.x, q.y, q.z, q.w)
                .expect("write to string");
        }
        writeln!(s, "points {}", self.cloud.len()).expect("write to string");
        s
    }
}

fn jitter_pose(cam: &CameraModel, rng: &mut ChaCha8Rng) -> Pose {
    let (rot, trans) = cam.pose_jitter;
    // per-axis sigma so the expected vector magnitude is about the configured value
    let axis_sigma = |v: f64| v / 3f64.sqrt();
    let draw = |sigma: f64, rng: &mut ChaCha8Rng| {
        if sigma > 0.0 {
            let n = Normal::new(0.0, sigma).expect("finite sigma");
            Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng))
        } else {
            Vec3::zeros()
        }
    };
    let r = draw(axis_sigma(rot), rng);
    let t = draw(axis_sigma(trans), rng);
    Pose::from_scaled_axis(r, t)
}

/// Simulated capture: the camera actually sits at `commanded ∘ jitter`, sees
/// what is visible from there, and measures each point with Gaussian noise
/// along the view ray.
pub fn render_scan(cam: &CameraModel, commanded: &Pose, truth: &SurfaceModel, seed: u64) -> ScanFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actual = commanded.compose(&jitter_pose(cam, &mut rng));
    let visible = visible_points(cam, &actual, truth);
    let to_camera = actual.inverse();
    let noise = (cam.noise_sigma > 0.0).then(|| Normal::new(0.0, cam.noise_sigma).expect("finite sigma"));
    let points = visible
        .iter()
        .map(|&i| {
            let local = to_camera.transform_point(truth.point(i));
            match &noise {
                Some(n) => {
                    let r = local.norm();
                    local * ((r + n.sample(&mut rng)) / r)
                }
                None => local,
            }
        })
        .collect();
    ScanFrame {
        camera_pose_commanded: *commanded,
        camera_pose_actual: actual,
        cloud: PointCloud::new(points).expect("finite points"),
        visible_indices: visible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{make_half_cylinder, CouchSpec, SurfaceModel};
    use crate::geometry::{ray_triangle, TriangleMesh};
    use rand::Rng;

    fn flat_patch(size: f64, step: f64) -> SurfaceModel {
        let h = size / 2.0;
        let mesh = TriangleMesh::new(
            vec![Vec3::new(-h, -h, 0.0), Vec3::new(h, -h, 0.0), Vec3::new(h, h, 0.0), Vec3::new(-h, h, 0.0)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let n = (size / step).round() as usize;
        let mut pts = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                pts.push(Vec3::new(-h + i as f64 * step, -h + j as f64 * step, 0.0));
            }
        }
        let normals = vec![Vec3::z(); pts.len()];
        SurfaceModel::new(PointCloud::with_normals(pts, normals).unwrap(), mesh, step, CouchSpec::default()).unwrap()
    }

    fn looking_down(height: f64) -> Pose {
        Pose::look_at(Vec3::new(0.0, 0.0, height), Vec3::zeros(), Vec3::x())
    }

    pub(crate) fn brute_force(cam: &CameraModel, pose: &Pose, model: &SurfaceModel) -> Vec<usize> {
        let o = *pose.translation();
        let mesh = model.mesh();
        let normals = model.samples().normals().unwrap();
        (0..model.len())
            .filter(|&i| {
                let p = model.point(i);
                let local = pose.inverse().transform_point(p);
                let in_frustum = local.z > 0.0
                    && local.x.atan2(local.z).abs() <= cam.h_fov / 2.0
                    && local.y.atan2(local.z).abs() <= cam.v_fov / 2.0;
                let r = (p - o).norm();
                let in_range = r >= cam.min_range && r <= cam.max_range;
                let incidence = normals[i].dot(&((o - p) / r)).clamp(-1.0, 1.0).acos();
                let dir = (p - o) / r;
                let unoccluded = (0..mesh.triangles().len())
                    .all(|t| ray_triangle(&o, &dir, &mesh.corners(t)).is_none_or(|h| h >= r - OCCLUSION_TOLERANCE));
                in_frustum && in_range && incidence <= cam.max_incidence + 1e-12 && unoccluded
            })
            .collect()
    }

    #[test]
    fn patch_below_camera_is_fully_visible() {
        let model = flat_patch(0.2, 0.02);
        let cam = CameraModel::default();
        assert_eq!(visible_points(&cam, &looking_down(0.6), &model).len(), model.len());
    }

    #[test]
    fn too_close_sees_nothing() {
        let model = flat_patch(0.2, 0.02);
        let cam = CameraModel::default();
        assert!(visible_points(&cam, &looking_down(0.3), &model).is_empty());
    }

    #[test]
    fn half_cylinder_from_above_matches_brute_force() {
        let model = make_half_cylinder(1.75, 0.2, CouchSpec::default(), 0.03).unwrap();
        let cam = CameraModel::default();
        let pose = Pose::look_at(Vec3::new(0.2, 0.0, 1.6), Vec3::new(0.2, 0.0, 0.67), Vec3::x());
        let got = visible_points(&cam, &pose, &model);
        assert_eq!(got, brute_force(&cam, &pose, &model));
        // steep lateral walls fail the incidence test
        let normals = model.samples().normals().unwrap();
        assert!(got.iter().all(|&i| normals[i].z >= cam.max_incidence.cos() - 0.2));
        assert!(got.len() > 50);
    }

    #[test]
    fn lateral_camera_never_sees_far_side() {
        let couch = CouchSpec::default();
        let model = make_half_cylinder(1.75, 0.2, couch, 0.02).unwrap();
        let cam = CameraModel::default();
        for x in [-0.5, 0.0, 0.5] {
            let eye = Vec3::new(x, 1.2, couch.height + 0.02);
            let pose = Pose::look_at(eye, Vec3::new(x, 0.0, couch.height + 0.05), Vec3::z());
            let seen = visible_points(&cam, &pose, &model);
            assert!(!seen.is_empty());
            assert!(seen.iter().all(|&i| model.point(i).y > -1e-9), "far-side sample visible");
        }
    }

    #[test]
    fn shrinking_limits_never_adds_points() {
        let model = make_half_cylinder(1.75, 0.2, CouchSpec::default(), 0.04).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let eye = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(1.0..1.8));
            let pose = Pose::look_at(eye, Vec3::new(0.0, 0.0, 0.7), Vec3::z());
            let wide = CameraModel::default();
            let narrow = CameraModel {
                h_fov: wide.h_fov * 0.6,
                max_incidence: wide.max_incidence * 0.7,
                ..wide
            };
            let a = visible_points(&wide, &pose, &model);
            let b = visible_points(&narrow, &pose, &model);
            assert!(b.iter().all(|i| a.binary_search(i).is_ok()));
        }
    }

    #[test]
    fn ideal_render_is_exact() {
        let model = make_half_cylinder(1.75, 0.2, CouchSpec::default(), 0.05).unwrap();
        let cam = CameraModel::default().ideal();
        let pose = Pose::look_at(Vec3::new(0.0, 0.5, 1.4), Vec3::new(0.0, 0.0, 0.8), Vec3::x());
        let frame = render_scan(&cam, &pose, &model, 1);
        assert_eq!(frame.camera_pose_actual, pose);
        let world = frame.world_cloud_commanded();
        for (k, &i) in frame.visible_indices.iter().enumerate() {
            assert!((world.point(k) - model.point(i)).norm() < 1e-12);
        }
    }

    #[test]
    fn render_is_deterministic() {
        let model = make_half_cylinder(1.75, 0.2, CouchSpec::default(), 0.05).unwrap();
        let cam = CameraModel::default();
        let pose = Pose::look_at(Vec3::new(0.0, 0.5, 1.4), Vec3::new(0.0, 0.0, 0.8), Vec3::x());
        assert_eq!(render_scan(&cam, &pose, &model, 5), render_scan(&cam, &pose, &model, 5));
        assert_ne!(render_scan(&cam, &pose, &model, 5), render_scan(&cam, &pose, &model, 6));
    }

    #[test]
    fn depth_noise_has_configured_sigma() {
        let model = flat_patch(0.6, 0.01);
        let cam = CameraModel {
            pose_jitter: (0.0, 0.0),
            ..CameraModel::default()
        };
        let pose = looking_down(0.8);
        let frame = render_scan(&cam, &pose, &model, 11);
        assert!(frame.cloud.len() >= 1000);
        let errors: Vec<f64> = frame
            .visible_indices
            .iter()
            .enumerate()
            .map(|(k, &i)| frame.cloud.point(k).norm() - pose.inverse().transform_point(model.point(i)).norm())
            .collect();
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let std = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.0016..=0.0024).contains(&std), "{std}");
    }

    #[test]
    fn frame_points_stay_in_range_band() {
        let model = make_half_cylinder(1.75, 0.2, CouchSpec::default(), 0.02).unwrap();
        let cam = CameraModel::default();
        let pose = Pose::look_at(Vec3::new(0.3, 0.6, 1.5), Vec3::new(0.0, 0.0, 0.8), Vec3::x());
        let frame = render_scan(&cam, &pose, &model, 2);
        for p in frame.cloud.points() {
            let r = p.norm();
            assert!(r >= cam.min_range * 0.9 && r <= cam.max_range * 1.1);
        }
    }

    #[test]
    fn sidecar_lists_both_poses() {
        let model = flat_patch(0.2, 0.05);
        let frame = render_scan(&CameraModel::default(), &looking_down(0.7), &model, 0);
        let text = frame.pose_sidecar();
        assert!(text.starts_with("commanded "));
        assert!(text.contains("\nactual "));
    }
}
