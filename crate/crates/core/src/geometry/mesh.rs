use std::sync::OnceLock;

use super::cloud::Vec3;
use super::Pose;
use crate::error::{Error, Result};

/// Smallest triangle area accepted at construction (m²).
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;
/// Hits closer than this to the ray origin are ignored (m).
pub const RAY_EPSILON: f64 = 1e-6;

/// Indexed triangle mesh. Degenerate triangles are rejected on construction.
#[derive(Clone, Debug)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    bvh: OnceLock<Bvh>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references vertex {bad} of {}",
                    vertices.len()
                )));
            }
            let area = tri_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if !(area > MIN_TRIANGLE_AREA) {
                return Err(Error::InvalidMesh(format!("triangle {t} is degenerate (area {area:e})")));
            }
        }
        Ok(Self {
            vertices,
            triangles,
            bvh: OnceLock::new(),
        })
    }

    /// Builds a mesh, silently dropping degenerate triangles.
    pub fn new_dropping_degenerate(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let keep = triangles
            .into_iter()
            .filter(|t| {
                t.iter().all(|&i| i < vertices.len())
                    && tri_area(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]) > MIN_TRIANGLE_AREA
            })
            .collect();
        Self::new(vertices, keep)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        tri_area(&a, &b, &c)
    }

    /// Unit normal following the triangle's winding.
    pub fn triangle_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn transformed(&self, pose: &Pose) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| pose.transform_point(v)).collect(),
            triangles: self.triangles.clone(),
            bvh: OnceLock::new(),
        }
    }

    /// Appends another mesh's geometry.
    pub fn merged(&self, other: &TriangleMesh) -> TriangleMesh {
        let offset = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(other.triangles.iter().map(|t| [t[0] + offset, t[1] + offset, t[2] + offset]));
        TriangleMesh {
            vertices,
            triangles,
            bvh: OnceLock::new(),
        }
    }

    /// Closest hit with `t > RAY_EPSILON`, as `(t, triangle)`.
    pub fn intersect_ray(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, usize)> {
        self.bvh().closest_hit(self, origin, dir, f64::INFINITY)
    }

    /// True if any triangle is hit with `RAY_EPSILON < t < t_max`.
    pub fn occluded(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> bool {
        self.bvh().closest_hit(self, origin, dir, t_max).is_some()
    }

    fn bvh(&self) -> &Bvh {
        self.bvh.get_or_init(|| Bvh::build(self))
    }
}

pub(crate) fn tri_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Möller–Trumbore ray/triangle test; returns `t` for hits beyond `RAY_EPSILON`.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > RAY_EPSILON).then_some(t)
}

/// Closest intersection of a ray with the mesh: `(t, triangle index)`.
pub fn ray_mesh_intersect(origin: &Vec3, direction: &Vec3, mesh: &TriangleMesh) -> Option<(f64, usize)> {
    mesh.intersect_ray(origin, direction)
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn union(&mut self, o: &Aabb) {
        self.lo = self.lo.inf(&o.lo);
        self.hi = self.hi.sup(&o.hi);
    }

    // slab test; returns entry distance when the box is hit before t_max
    fn hit(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut near = (self.lo[a] - origin[a]) * inv_dir[a];
            let mut far = (self.hi[a] - origin[a]) * inv_dir[a];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN arises for axis-parallel rays starting on a slab plane
            if near.is_nan() || far.is_nan() {
                if origin[a] < self.lo[a] || origin[a] > self.hi[a] {
                    return None;
                }
                continue;
            }
            t0 = t0.max(near);
            t1 = t1.min(far * (1.0 + 4.0 * f64::EPSILON));
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, count: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Median-split bounding volume hierarchy over mesh triangles.
#[derive(Clone, Debug)]
struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    fn build(mesh: &TriangleMesh) -> Self {
        let n = mesh.triangles.len();
        let boxes: Vec<Aabb> = (0..n)
            .map(|t| {
                let mut b = Aabb::empty();
                mesh.corners(t).iter().for_each(|p| b.grow(p));
                b
            })
            .collect();
        let centers: Vec<Vec3> = boxes.iter().map(|b| (b.lo + b.hi) * 0.5).collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1),
            order: (0..n).collect(),
        };
        if n > 0 {
            bvh.split(0, n, &boxes, &centers);
        }
        bvh
    }

    fn split(&mut self, start: usize, end: usize, boxes: &[Aabb], centers: &[Vec3]) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbox = Aabb::empty();
        for &t in &self.order[start..end] {
            bounds.union(&boxes[t]);
            cbox.grow(&centers[t]);
        }
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                bounds,
                start,
                count: end - start,
            });
            return id;
        }
        let ext = cbox.hi - cbox.lo;
        let axis = ext.imax();
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centers[a][axis]
                .partial_cmp(&centers[b][axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        self.nodes.push(Node::Leaf {
            bounds,
            start: 0,
            count: 0,
        });
        let left = self.split(start, mid, boxes, centers);
        let right = self.split(mid, end, boxes, centers);
        self.nodes[id] = Node::Inner { bounds, left, right };
        id
    }

    fn closest_hit(&self, mesh: &TriangleMesh, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<(f64, usize)> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<(f64, usize)> = None;
        let mut limit = t_max;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.bounds().hit(origin, &inv, limit).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { start, count, .. } => {
                    for &t in &self.order[start..start + count] {
                        if let Some(d) = ray_triangle(origin, dir, &mesh.corners(t)) {
                            let better = match best {
                                None => d < limit,
                                Some((bd, bt)) => d < bd || (d == bd && t < bt),
                            };
                            if better {
                                best = Some((d, t));
                                limit = d;
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().hit(origin, &inv, limit);
                    let dr = self.nodes[right].bounds().hit(origin, &inv, limit);
                    // push the farther child first so the nearer one is popped next
                    match (dl, dr) {
                        (Some(a), Some(b)) if a <= b => {
                            stack.push(right);
                            stack.push(left);
                        }
                        (Some(_), Some(_)) => {
                            stack.push(left);
                            stack.push(right);
                        }
                        (Some(_), None) => stack.push(left),
                        (None, Some(_)) => stack.push(right),
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    // Independent oracle: plane intersection followed by a barycentric
    // inside test, evaluated for every triangle.
    fn oracle(origin: &Vec3, dir: &Vec3, mesh: &TriangleMesh) -> Option<f64> {
        let mut best: Option<f64> = None;
        for t in 0..mesh.triangles().len() {
            let [a, b, c] = mesh.corners(t);
            let n = (b - a).cross(&(c - a));
            let denom = n.dot(dir);
            if denom.abs() < 1e-15 {
                continue;
            }
            let s = n.dot(&(a - origin)) / denom;
            if s <= RAY_EPSILON {
                continue;
            }
            let p = origin + dir * s;
            let area = n.norm();
            let w0 = (b - p).cross(&(c - p)).dot(&n) / (area * area);
            let w1 = (c - p).cross(&(a - p)).dot(&n) / (area * area);
            let w2 = 1.0 - w0 - w1;
            if w0 >= -1e-12 && w1 >= -1e-12 && w2 >= -1e-12 {
                best = Some(best.map_or(s, |b: f64| b.min(s)));
            }
        }
        best
    }

    #[test]
    fn downward_ray_hits_square_at_one() {
        let m = unit_square();
        let (t, _) = ray_mesh_intersect(&Vec3::new(0.3, 0.4, 1.0), &-Vec3::z(), &m).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ray_pointing_away_misses() {
        let m = unit_square();
        assert!(ray_mesh_intersect(&Vec3::new(0.3, 0.4, 1.0), &Vec3::z(), &m).is_none());
    }

    #[test]
    fn degenerate_triangles_rejected() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 2]]).is_err());
        assert!(TriangleMesh::new(v, vec![[0, 1, 5]]).is_err());
    }

    #[test]
    fn random_rays_match_per_triangle_oracle() {
        let m = unit_square();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hits = 0;
        for _ in 0..500 {
            let o = Vec3::new(rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5), rng.random_range(0.1..2.0));
            // aim at a point around the quad so roughly half the rays hit
            let aim = Vec3::new(rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5), 0.0);
            let d = (aim - o).normalize();
            let got = ray_mesh_intersect(&o, &d, &m).map(|h| h.0);
            let want = oracle(&o, &d, &m);
            match (got, want) {
                (Some(a), Some(b)) => {
                    hits += 1;
                    assert!((a - b).abs() < 1e-9)
                }
                (None, None) => {}
                other => panic!("mismatch {other:?}"),
            }
        }
        assert!(hits > 100);
    }

    #[test]
    fn bvh_returns_minimum_over_many_triangles() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut verts = Vec::new();
        let mut tris = Vec::new();
        for _ in 0..300 {
            let c = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let base = verts.len();
            for _ in 0..3 {
                verts.push(c + Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)));
            }
            tris.push([base, base + 1, base + 2]);
        }
        let m = TriangleMesh::new_dropping_degenerate(verts, tris).unwrap();
        for _ in 0..500 {
            let o = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                .normalize();
            let got = m.intersect_ray(&o, &d).map(|h| h.0);
            let want = (0..m.triangles().len())
                .filter_map(|t| ray_triangle(&o, &d, &m.corners(t)))
                .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))));
            assert_eq!(got, want);
        }
    }
}
