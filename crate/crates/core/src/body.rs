//! Body geometries used for planning and as simulated ground truth.
//!
//! All models live in the world frame: floor at z = 0, couch top centered on
//! the z axis at `couch.height`, couch length along x (head toward +x).

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose, TriangleMesh, Vec3};

/// Angular facets used for half-cylinder meshes.
const CYLINDER_SEGMENTS: usize = 64;
/// Oversampling factor before voxel thinning in `sample_mesh_surface`.
const OVERSAMPLING: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouchSpec {
    pub length: f64,
    pub width: f64,
    /// Height of the top surface above the floor.
    pub height: f64,
}

impl Default for CouchSpec {
    fn default() -> Self {
        Self {
            length: 2.0,
            width: 0.7,
            height: 0.67,
        }
    }
}

impl CouchSpec {
    pub fn with_height(height: f64) -> Self {
        Self {
            height,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.length, self.width, self.height].iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("couch dimensions must be > 0: {self:?}")))
        }
    }

    pub fn half_length(&self) -> f64 {
        self.length / 2.0
    }

    pub fn half_width(&self) -> f64 {
        self.width / 2.0
    }

    /// True if the floor point lies within the couch footprint.
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.half_length() && y.abs() <= self.half_width()
    }
}

/// Sampled body surface plus the mesh used for occlusion tests.
#[derive(Clone, Debug)]
pub struct SurfaceModel {
    samples: PointCloud,
    mesh: TriangleMesh,
    resolution: f64,
    couch: CouchSpec,
    stripped: bool,
}

impl SurfaceModel {
    /// Wraps samples and mesh. Samples must carry normals.
    pub fn new(samples: PointCloud, mesh: TriangleMesh, resolution: f64, couch: CouchSpec) -> Result<Self> {
        if samples.normals().is_none() {
            return Err(Error::InvalidParameter("surface samples need normals".into()));
        }
        Ok(Self {
            samples,
            mesh,
            resolution,
            couch,
            stripped: false,
        })
    }

    /// Samples a body mesh given in couch-top coordinates (z = 0 on the couch
    /// top, origin at the couch center) and lifts it to the couch height.
    pub fn from_body_mesh(local: &TriangleMesh, couch: CouchSpec, resolution: f64, seed: u64) -> Result<Self> {
        let mesh = local.transformed(&Pose::from_translation(Vec3::new(0.0, 0.0, couch.height)));
        let samples = sample_mesh_surface(&mesh, resolution, seed)?;
        Self::new(samples, mesh, resolution, couch)
    }

    pub fn samples(&self) -> &PointCloud {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn point(&self, i: usize) -> &Vec3 {
        self.samples.point(i)
    }

    pub fn normal(&self, i: usize) -> &Vec3 {
        &self.samples.normals().expect("surface samples carry normals")[i]
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn couch(&self) -> &CouchSpec {
        &self.couch
    }

    /// Whether the couch-contact region has been removed.
    pub fn is_stripped(&self) -> bool {
        self.stripped
    }
}

/// Half-cylinder lying flat on the couch with its axis along the couch.
///
/// The curved surface and both semicircular end caps are sampled on regular
/// grids with spacing close to `resolution`; normals point outward.
pub fn make_half_cylinder(length: f64, radius: f64, couch: CouchSpec, resolution: f64) -> Result<SurfaceModel> {
    couch.validate()?;
    if !(length > 0.0 && radius > 0.0 && resolution > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "half-cylinder needs positive length, radius and resolution (got {length}, {radius}, {resolution})"
        )));
    }
    if resolution > radius {
        return Err(Error::ResolutionTooCoarse { resolution, radius });
    }
    let h = couch.height;
    let half = length / 2.0;
    let seg = CYLINDER_SEGMENTS;
    // rim angle measured from +z toward +y
    let rim = |k: usize| -PI / 2.0 + PI * k as f64 / seg as f64;
    let at = |x: f64, phi: f64| Vec3::new(x, radius * phi.sin(), h + radius * phi.cos());

    let mut vertices = Vec::new();
    for &x in &[-half, half] {
        for k in 0..=seg {
            vertices.push(at(x, rim(k)));
        }
    }
    let row = seg + 1;
    let mut triangles = Vec::new();
    for k in 0..seg {
        let (a, b) = (k, k + 1);
        let (c, d) = (row + k, row + k + 1);
        // outward winding: (x-, phi_k) -> (x+, phi_k) -> (x+, phi_k+1)
        triangles.push([a, c, d]);
        triangles.push([a, d, b]);
    }
    for (side, &x) in [-half, half].iter().enumerate() {
        let center = vertices.len();
        vertices.push(Vec3::new(x, 0.0, h));
        let base = side * row;
        for k in 0..seg {
            if side == 0 {
                triangles.push([center, base + k, base + k + 1]);
            } else {
                triangles.push([center, base + k + 1, base + k]);
            }
        }
    }
    let mesh = TriangleMesh::new(vertices, triangles)?;

    let mut points = Vec::new();
    let mut normals = Vec::new();
    let n_arc = ((PI * radius / resolution).round() as usize).max(1);
    let n_len = ((length / resolution).round() as usize).max(1);
    for i in 0..n_len {
        let x = -half + (i as f64 + 0.5) * length / n_len as f64;
        for j in 0..n_arc {
            let phi = -PI / 2.0 + (j as f64 + 0.5) * PI / n_arc as f64;
            // place the sample on the facet (chord) under the analytic angle
            let u = (phi + PI / 2.0) / PI * seg as f64;
            let k = (u.floor() as usize).min(seg - 1);
            let f = u - k as f64;
            let p = at(x, rim(k)) * (1.0 - f) + at(x, rim(k + 1)) * f;
            points.push(p);
            normals.push(Vec3::new(0.0, phi.sin(), phi.cos()));
        }
    }
    let inscribed = radius * (PI / seg as f64).cos();
    let n_cap = (2.0 * radius / resolution).ceil() as i64;
    for (&x, sign) in [-half, half].iter().zip([-1.0, 1.0]) {
        for iy in 0..n_cap {
            let y = -radius + (iy as f64 + 0.5) * resolution;
            for iz in 0..n_cap {
                let z = (iz as f64 + 0.5) * resolution;
                if y.hypot(z) < inscribed * 0.999 {
                    points.push(Vec3::new(x, y, h + z));
                    normals.push(Vec3::new(sign, 0.0, 0.0));
                }
            }
        }
    }
    let samples = PointCloud::with_normals(points, normals)?;
    SurfaceModel::new(samples, mesh, resolution, couch)
}

/// Area-weighted random surface sampling thinned to one sample per voxel.
///
/// Each kept sample is the member closest to its voxel's centroid, so every
/// output point lies exactly on the mesh. Normals come from the triangle
/// planes; the whole set is flipped if the area-weighted mean normal points
/// down.
pub fn sample_mesh_surface(mesh: &TriangleMesh, resolution: f64, seed: u64) -> Result<PointCloud> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if !(resolution > 0.0) {
        return Err(Error::InvalidParameter(format!("resolution {resolution} must be > 0")));
    }
    let n_tri = mesh.triangles().len();
    let areas: Vec<f64> = (0..n_tri).map(|t| mesh.triangle_area(t)).collect();
    let total: f64 = areas.iter().sum();
    let mut cdf = Vec::with_capacity(n_tri);
    let mut acc = 0.0;
    for a in &areas {
        acc += a;
        cdf.push(acc / total);
    }
    let mean_nz: f64 = (0..n_tri).map(|t| mesh.triangle_normal(t).z * areas[t]).sum::<f64>();
    let flip = if mean_nz < 0.0 { -1.0 } else { 1.0 };

    let count = ((OVERSAMPLING * total / (resolution * resolution)).ceil() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Vec::with_capacity(count);
    for _ in 0..count {
        let r: f64 = rng.random();
        let t = cdf.partition_point(|&c| c < r).min(n_tri - 1);
        let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let [a, b, c] = mesh.corners(t);
        raw.push((a + (b - a) * u + (c - a) * v, t));
    }

    let mut slot: HashMap<[i64; 3], usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, (p, _)) in raw.iter().enumerate() {
        let key = [
            (p.x / resolution).floor() as i64,
            (p.y / resolution).floor() as i64,
            (p.z / resolution).floor() as i64,
        ];
        let g = *slot.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    let mut points = Vec::with_capacity(groups.len());
    let mut normals = Vec::with_capacity(groups.len());
    for members in groups {
        let centroid: Vec3 = members.iter().map(|&i| raw[i].0).sum::<Vec3>() / members.len() as f64;
        let best = members
            .iter()
            .copied()
            .min_by(|&a, &b| {
                (raw[a].0 - centroid)
                    .norm_squared()
                    .partial_cmp(&(raw[b].0 - centroid).norm_squared())
                    .unwrap()
                    .then(a.cmp(&b))
            })
            .unwrap();
        points.push(raw[best].0);
        normals.push(mesh.triangle_normal(raw[best].1) * flip);
    }
    PointCloud::with_normals(points, normals)
}

/// Cosine of the steepest normal tilt kept near the couch contact (80 deg).
pub fn underside_normal_threshold() -> f64 {
    80f64.to_radians().cos()
}

/// Removes the couch-contact region no camera can observe.
///
/// A sample is dropped when its normal's z component is below cos(80°) and it
/// sits within two resolutions of the couch top.
pub fn strip_underside(model: &SurfaceModel) -> SurfaceModel {
    strip_underside_within(model, 2.0 * model.resolution)
}

/// [`strip_underside`] with an explicit contact band height in meters.
pub fn strip_underside_within(model: &SurfaceModel, band: f64) -> SurfaceModel {
    let threshold = underside_normal_threshold();
    let normals = model.samples.normals().expect("surface samples carry normals");
    let keep: Vec<usize> = (0..model.len())
        .filter(|&i| !(normals[i].z < threshold && model.point(i).z - model.couch.height <= band))
        .collect();
    SurfaceModel {
        samples: model.samples.select(&keep),
        mesh: model.mesh.clone(),
        resolution: model.resolution,
        couch: model.couch,
        stripped: true,
    }
}

/// Ellipsoidal body part rising from the couch top: semi-axes along x and y,
/// peak height above the couch. The lower `WALL_FRACTION` of the part is a
/// vertical wall, standing in for the flanks that curve back under the body.
#[derive(Clone, Copy, Debug)]
struct Blob {
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
    peak: f64,
}

impl Blob {
    fn height(&self, x: f64, y: f64) -> f64 {
        let q = ((x - self.cx) / self.ax).powi(2) + ((y - self.cy) / self.ay).powi(2);
        if q < 1.0 {
            self.peak * (WALL_FRACTION + (1.0 - WALL_FRACTION) * (1.0 - q).sqrt())
        } else {
            0.0
        }
    }
}

const WALL_FRACTION: f64 = 0.4;
/// Lattice spacing of the default humanoid height field.
pub const HUMANOID_GRID: f64 = 0.01;

fn humanoid_parts() -> Vec<Blob> {
    let b = |cx, cy, ax, ay, peak| Blob { cx, cy, ax, ay, peak };
    let mut parts = vec![
        b(0.77, 0.0, 0.11, 0.08, 0.19),  // head
        b(0.64, 0.0, 0.06, 0.06, 0.12),  // neck
        b(0.36, 0.0, 0.27, 0.18, 0.22),  // chest
        b(0.02, 0.0, 0.22, 0.17, 0.20),  // abdomen and pelvis
    ];
    for side in [-1.0, 1.0] {
        parts.extend([
            b(0.38, 0.23 * side, 0.17, 0.05, 0.09),   // upper arm
            b(0.05, 0.25 * side, 0.16, 0.045, 0.08),  // forearm
            b(-0.17, 0.26 * side, 0.08, 0.045, 0.04), // hand
            b(-0.32, 0.10 * side, 0.24, 0.085, 0.16), // thigh
            b(-0.65, 0.10 * side, 0.20, 0.06, 0.11),  // shin
            b(-0.84, 0.10 * side, 0.05, 0.05, 0.18),  // foot, toes up
        ]);
    }
    parts
}

/// Procedural supine adult humanoid (1.75 m) as a height field over the couch
/// top, in couch-top coordinates.
///
/// The surface is the upper envelope of ellipsoidal parts sampled on a
/// `grid` spaced lattice; cells with no body height are left open.
pub fn humanoid_mesh(grid: f64) -> Result<TriangleMesh> {
    let parts = humanoid_parts();
    let (x0, x1, y0, y1) = (-0.92, 0.92, -0.34, 0.34);
    let nx = ((x1 - x0) / grid).round() as usize;
    let ny = ((y1 - y0) / grid).round() as usize;
    let height = |x: f64, y: f64| parts.iter().map(|p| p.height(x, y)).fold(0.0, f64::max);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            let x = x0 + i as f64 * (x1 - x0) / nx as f64;
            let y = y0 + j as f64 * (y1 - y0) / ny as f64;
            vertices.push(Vec3::new(x, y, height(x, y)));
        }
    }
    let id = |i: usize, j: usize| i * (ny + 1) + j;
    let mut triangles = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let quad = [id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)];
            if quad.iter().all(|&v| vertices[v].z <= 0.0) {
                continue;
            }
            // counter-clockwise seen from above, so normals point up
            triangles.push([quad[0], quad[1], quad[2]]);
            triangles.push([quad[0], quad[2], quad[3]]);
        }
    }
    TriangleMesh::new_dropping_degenerate(vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on_mesh(mesh: &TriangleMesh, p: &Vec3) -> bool {
        // distance from p to the closest triangle, by brute force
        (0..mesh.triangles().len()).any(|t| {
            let [a, b, c] = mesh.corners(t);
            let n = (b - a).cross(&(c - a)).normalize();
            let d = n.dot(&(p - a));
            if d.abs() > 1e-6 {
                return false;
            }
            let q = p - n * d;
            let s = |u: Vec3, v: Vec3| (v - u).cross(&(q - u)).dot(&n);
            let (e0, e1, e2) = (s(a, b), s(b, c), s(c, a));
            (e0 >= -1e-9 && e1 >= -1e-9 && e2 >= -1e-9) || (e0 <= 1e-9 && e1 <= 1e-9 && e2 <= 1e-9)
        })
    }

    #[test]
    fn half_cylinder_sample_count_matches_area() {
        let m = make_half_cylinder(1.75, 0.2, CouchSpec::default(), 0.1).unwrap();
        let area = PI * 0.2 * 1.75 + PI * 0.2 * 0.2;
        let expected = area / 0.01;
        let n = m.len() as f64;
        assert!((n - expected).abs() <= 0.2 * expected, "{n} vs {expected}");
    }

    #[test]
    fn half_cylinder_geometry() {
        let couch = CouchSpec::default();
        let m = make_half_cylinder(1.75, 0.2, couch, 0.1).unwrap();
        let normals = m.samples().normals().unwrap();
        assert!(normals.iter().all(|n| n.z >= 0.0));
        let apex = m.samples().points().iter().map(|p| p.z).fold(f64::MIN, f64::max);
        assert!((apex - (couch.height + 0.2)).abs() <= 0.05);
        for p in m.samples().points() {
            assert!(on_mesh(m.mesh(), p), "{p:?} off mesh");
        }
        assert!(matches!(
            make_half_cylinder(1.75, 0.2, couch, 0.3),
            Err(Error::ResolutionTooCoarse { .. })
        ));
    }

    #[test]
    fn half_cylinder_mesh_normals_point_outward() {
        let m = make_half_cylinder(1.75, 0.2, CouchSpec::default(), 0.1).unwrap();
        let center = Vec3::new(0.0, 0.0, 0.67);
        for t in 0..m.mesh().triangles().len() {
            let [a, b, c] = m.mesh().corners(t);
            let mid = (a + b + c) / 3.0;
            let out = m.mesh().triangle_normal(t).dot(&(mid - center));
            assert!(out > 0.0, "triangle {t} faces inward");
        }
    }

    fn unit_square() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn unit_square_sampling() {
        let c = sample_mesh_surface(&unit_square(), 0.5, 3).unwrap();
        assert!((4..=9).contains(&c.len()), "{}", c.len());
        assert!(c.normals().unwrap().iter().all(|n| (n - Vec3::z()).norm() < 1e-12));
        let again = sample_mesh_surface(&unit_square(), 0.5, 3).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn downward_wound_mesh_is_flipped_up() {
        let m = unit_square();
        let flipped = TriangleMesh::new(m.vertices().to_vec(), vec![[0, 2, 1], [0, 3, 2]]).unwrap();
        let c = sample_mesh_surface(&flipped, 0.25, 1).unwrap();
        assert!(c.normals().unwrap().iter().all(|n| n.z > 0.99));
    }

    #[test]
    fn halving_resolution_quadruples_count() {
        let big = unit_square().transformed(&Pose::identity());
        let scale = |m: &TriangleMesh| {
            TriangleMesh::new(m.vertices().iter().map(|v| v * 4.0).collect(), m.triangles().to_vec()).unwrap()
        };
        let big = scale(&big);
        let coarse = sample_mesh_surface(&big, 0.2, 9).unwrap().len() as f64;
        let fine = sample_mesh_surface(&big, 0.1, 9).unwrap().len() as f64;
        let ratio = fine / coarse;
        assert!((ratio - 4.0).abs() <= 1.2, "ratio {ratio}");
    }

    #[test]
    fn empty_mesh_errors() {
        let m = TriangleMesh::new(vec![], vec![]).unwrap();
        assert!(matches!(sample_mesh_surface(&m, 0.1, 0), Err(Error::EmptyMesh)));
    }

    #[test]
    fn stripping_half_cylinder() {
        let m = make_half_cylinder(1.75, 0.2, CouchSpec::default(), 0.025).unwrap();
        let s = strip_underside(&m);
        assert!(s.is_stripped() && !m.is_stripped());
        assert!(s.len() < m.len());
        let apex = m.samples().points().iter().map(|p| p.z).fold(f64::MIN, f64::max);
        assert!(s.samples().points().iter().any(|p| p.z == apex));
        // cap rim points touching the couch are gone
        let h = m.couch().height;
        assert!(!s
            .samples()
            .points()
            .iter()
            .zip(s.samples().normals().unwrap())
            .any(|(p, n)| n.x.abs() > 0.99 && p.z - h < 0.02 && p.y.abs() > 0.15));
        let twice = strip_underside(&s);
        assert_eq!(twice.samples(), s.samples());
    }

    #[test]
    fn stripping_keeps_upward_surfaces() {
        let couch = CouchSpec::default();
        let mesh = unit_square();
        let m = SurfaceModel::from_body_mesh(&mesh, couch, 0.1, 1).unwrap();
        assert_eq!(strip_underside(&m).samples(), m.samples());
    }

    #[test]
    fn humanoid_strip_fraction_is_pinned() {
        let mesh = humanoid_mesh(HUMANOID_GRID).unwrap();
        // measured once: 8.3 % at 0.01 m, 25.8 % at 0.025 m
        for res in [0.01, 0.025] {
            let m = SurfaceModel::from_body_mesh(&mesh, CouchSpec::default(), res, 1).unwrap();
            let removed = 1.0 - strip_underside(&m).len() as f64 / m.len() as f64;
            assert!((0.05..=0.40).contains(&removed), "removed {removed} at {res}");
        }
        let m = SurfaceModel::from_body_mesh(&mesh, CouchSpec::default(), 0.025, 1).unwrap();
        for p in m.samples().points().iter().step_by(97) {
            assert!(on_mesh(m.mesh(), p));
        }
    }
}
