use std::collections::HashMap;

use super::cloud::{voxel_key, PointCloud, Vec3};
use crate::error::{Error, Result};

/// Uniform hash grid over a fixed point set.
///
/// Queries are exact: results always agree with a linear scan, including the
/// tie-break on the lowest point index.
#[derive(Clone, Debug)]
pub struct SpatialIndex<'a> {
    points: &'a [Vec3],
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
    key_min: [i64; 3],
    key_max: [i64; 3],
}

impl<'a> SpatialIndex<'a> {
    pub fn new(points: &'a [Vec3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let mut key_min = [i64::MAX; 3];
        let mut key_max = [i64::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let k = voxel_key(p, cell);
            for a in 0..3 {
                key_min[a] = key_min[a].min(k[a]);
                key_max[a] = key_max[a].max(k[a]);
            }
            cells.entry(k).or_default().push(i);
        }
        Self {
            points,
            cell,
            cells,
            key_min,
            key_max,
        }
    }

    /// Picks a cell size from the point density (about two points per cell).
    pub fn auto(points: &'a [Vec3]) -> Self {
        Self::new(points, auto_cell(points))
    }

    pub fn for_cloud(cloud: &'a PointCloud, cell: f64) -> Self {
        Self::new(cloud.points(), cell)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    /// Nearest point as `(index, distance)`.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        self.nearest_bounded(q, f64::INFINITY)
    }

    /// Nearest point no farther than `radius`.
    pub fn nearest_within(&self, q: &Vec3, radius: f64) -> Option<(usize, f64)> {
        self.nearest_bounded(q, radius)
    }

    fn nearest_bounded(&self, q: &Vec3, radius: f64) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let center = voxel_key(q, self.cell);
        let r_start = self.shell_gap(&center);
        let r_end = self.max_shell(&center);
        let r_limit = if radius.is_finite() {
            ((radius / self.cell).ceil() as i64 + 1).min(r_end)
        } else {
            r_end
        };
        let radius_sq = radius * radius;
        let mut best: Option<(f64, usize)> = None;
        let mut r = r_start;
        while r <= r_limit {
            if shell_volume(r) > 4 * self.points.len() as i64 {
                return self.linear_nearest(q, radius_sq);
            }
            self.visit_shell(&center, r, |i| {
                let d2 = (self.points[i] - q).norm_squared();
                if d2 <= radius_sq && best.is_none_or(|(bd, bi)| (d2, i) < (bd, bi)) {
                    best = Some((d2, i));
                }
            });
            if let Some((bd, _)) = best {
                let reach = r as f64 * self.cell;
                if bd <= reach * reach {
                    break;
                }
            }
            r += 1;
        }
        best.map(|(d2, i)| (i, d2.sqrt()))
    }

    fn linear_nearest(&self, q: &Vec3, radius_sq: f64) -> Option<(usize, f64)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, p) in self.points.iter().enumerate() {
            let d2 = (p - q).norm_squared();
            if d2 <= radius_sq && best.is_none_or(|(bd, _)| d2 < bd) {
                best = Some((d2, i));
            }
        }
        best.map(|(d2, i)| (i, d2.sqrt()))
    }

    /// The `k` nearest points sorted by `(distance, index)`.
    pub fn k_nearest(&self, q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let center = voxel_key(q, self.cell);
        let r_end = self.max_shell(&center);
        let mut found: Vec<(f64, usize)> = Vec::new();
        let mut r = self.shell_gap(&center);
        while r <= r_end {
            if shell_volume(r) > 4 * self.points.len() as i64 {
                found = self
                    .points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| ((p - q).norm_squared(), i))
                    .collect();
                break;
            }
            self.visit_shell(&center, r, |i| {
                found.push(((self.points[i] - q).norm_squared(), i));
            });
            if found.len() >= k {
                found.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let reach = r as f64 * self.cell;
                if found[k - 1].0 <= reach * reach {
                    break;
                }
            }
            r += 1;
        }
        found.sort_by(|a, b| a.partial_cmp(b).unwrap());
        found.truncate(k);
        found.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect()
    }

    /// All points within `radius`, in index order.
    pub fn within(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        let center = voxel_key(q, self.cell);
        let span = (radius / self.cell).ceil() as i64;
        let r2 = radius * radius;
        let mut out = Vec::new();
        for dx in -span..=span {
            for dy in -span..=span {
                for dz in -span..=span {
                    let key = [center[0] + dx, center[1] + dy, center[2] + dz];
                    if let Some(ids) = self.cells.get(&key) {
                        out.extend(ids.iter().copied().filter(|&i| (self.points[i] - q).norm_squared() <= r2));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    // Chebyshev distance (in cells) from `center` to the occupied key box.
    fn shell_gap(&self, center: &[i64; 3]) -> i64 {
        (0..3)
            .map(|a| {
                if center[a] < self.key_min[a] {
                    self.key_min[a] - center[a]
                } else if center[a] > self.key_max[a] {
                    center[a] - self.key_max[a]
                } else {
                    0
                }
            })
            .max()
            .unwrap_or(0)
    }

    fn max_shell(&self, center: &[i64; 3]) -> i64 {
        (0..3)
            .map(|a| (center[a] - self.key_min[a]).abs().max((self.key_max[a] - center[a]).abs()))
            .max()
            .unwrap_or(0)
    }

    fn visit_shell(&self, c: &[i64; 3], r: i64, mut f: impl FnMut(usize)) {
        let mut visit = |key: [i64; 3]| {
            if let Some(ids) = self.cells.get(&key) {
                ids.iter().for_each(|&i| f(i));
            }
        };
        if r == 0 {
            visit(*c);
            return;
        }
        for dx in -r..=r {
            for dy in -r..=r {
                if dx.abs() == r || dy.abs() == r {
                    for dz in -r..=r {
                        visit([c[0] + dx, c[1] + dy, c[2] + dz]);
                    }
                } else {
                    visit([c[0] + dx, c[1] + dy, c[2] - r]);
                    visit([c[0] + dx, c[1] + dy, c[2] + r]);
                }
            }
        }
    }
}

fn shell_volume(r: i64) -> i64 {
    let s = 2 * r + 1;
    s * s * s
}

fn auto_cell(points: &[Vec3]) -> f64 {
    let Some(first) = points.first() else {
        return 1.0;
    };
    let (lo, hi) = points
        .iter()
        .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    let ext = hi - lo;
    let longest = ext.max().max(1e-6);
    // treat flat or linear sets by their occupied dimensions only
    let dims: Vec<f64> = ext.iter().copied().filter(|e| *e > longest * 1e-3).collect();
    let measure: f64 = dims.iter().product();
    let per_point = measure / points.len() as f64 * 2.0;
    per_point.powf(1.0 / dims.len().max(1) as f64).max(longest * 1e-4)
}

/// Nearest point of `target` to `query`; ties resolve to the lowest index.
pub fn nearest_neighbor(query: &Vec3, target: &PointCloud) -> Result<(usize, f64)> {
    if target.is_empty() {
        return Err(Error::EmptyTarget);
    }
    SpatialIndex::auto(target.points())
        .nearest(query)
        .ok_or(Error::EmptyTarget)
}
