use std::collections::HashMap;

use nalgebra::Vector3;

use super::Pose;
use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Point cloud with optional per-point unit normals and RGB colors in [0, 1].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    colors: Option<Vec<[f64; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        Self::with_attributes(points, None, None)
    }

    pub fn with_normals(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        Self::with_attributes(points, Some(normals), None)
    }

    /// Validates finiteness, normal length and attribute counts.
    pub fn with_attributes(
        points: Vec<Vec3>,
        normals: Option<Vec<Vec3>>,
        colors: Option<Vec<[f64; 3]>>,
    ) -> Result<Self> {
        if let Some(bad) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidParameter(format!("point {bad} is not finite")));
        }
        if let Some(n) = &normals {
            if n.len() != points.len() {
                return Err(Error::InvalidParameter(format!(
                    "{} normals for {} points",
                    n.len(),
                    points.len()
                )));
            }
            if let Some(bad) = n.iter().position(|v| (v.norm() - 1.0).abs() > 1e-6) {
                return Err(Error::InvalidParameter(format!("normal {bad} is not unit length")));
            }
        }
        if let Some(c) = &colors {
            if c.len() != points.len() {
                return Err(Error::InvalidParameter(format!(
                    "{} colors for {} points",
                    c.len(),
                    points.len()
                )));
            }
        }
        Ok(Self {
            points,
            normals,
            colors,
        })
    }

    pub fn empty() -> Self {
        Self::default()
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

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn colors(&self) -> Option<&[[f64; 3]]> {
        self.colors.as_deref()
    }

    pub fn point(&self, i: usize) -> &Vec3 {
        &self.points[i]
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| pose.transform_vector(n)).collect()),
            colors: self.colors.clone(),
        }
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| indices.iter().map(|&i| ns[i]).collect()),
            colors: self
                .colors
                .as_ref()
                .map(|cs| indices.iter().map(|&i| cs[i]).collect()),
        }
    }

    /// Concatenates clouds; an attribute survives only if every input carries it.
    pub fn concat<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>) -> PointCloud {
        let clouds: Vec<&PointCloud> = clouds.into_iter().collect();
        let has_normals = !clouds.is_empty() && clouds.iter().all(|c| c.normals.is_some());
        let has_colors = !clouds.is_empty() && clouds.iter().all(|c| c.colors.is_some());
        let mut out = PointCloud {
            points: Vec::new(),
            normals: has_normals.then(Vec::new),
            colors: has_colors.then(Vec::new),
        };
        for c in clouds {
            out.points.extend_from_slice(&c.points);
            if let (Some(dst), Some(src)) = (out.normals.as_mut(), c.normals.as_ref()) {
                dst.extend_from_slice(src);
            }
            if let (Some(dst), Some(src)) = (out.colors.as_mut(), c.colors.as_ref()) {
                dst.extend_from_slice(src);
            }
        }
        out
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vec3 = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }

    /// Axis-aligned bounds `(min, max)`, or `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    /// Voxel-grid downsampling: one centroid per occupied voxel.
    ///
    /// Normals and colors are averaged; averaged normals are renormalized.
    /// Output order follows the first occurrence of each voxel.
    pub fn voxel_downsample(&self, voxel: f64) -> Result<PointCloud> {
        Ok(self.voxel_downsample_grouped(voxel)?.0)
    }

    /// Downsampling that also returns, per output point, the input indices it
    /// was averaged from.
    pub fn voxel_downsample_grouped(&self, voxel: f64) -> Result<(PointCloud, Vec<Vec<usize>>)> {
        if !(voxel > 0.0) || !voxel.is_finite() {
            return Err(Error::InvalidParameter(format!("voxel size {voxel} must be > 0")));
        }
        let mut slot: HashMap<[i64; 3], usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            let key = voxel_key(p, voxel);
            let g = *slot.entry(key).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(i);
        }
        let mut points = Vec::with_capacity(groups.len());
        let mut normals = self.normals.as_ref().map(|_| Vec::with_capacity(groups.len()));
        let mut colors = self.colors.as_ref().map(|_| Vec::with_capacity(groups.len()));
        for members in &groups {
            let inv = 1.0 / members.len() as f64;
            points.push(members.iter().map(|&i| self.points[i]).sum::<Vec3>() * inv);
            if let (Some(dst), Some(src)) = (normals.as_mut(), self.normals.as_ref()) {
                let sum: Vec3 = members.iter().map(|&i| src[i]).sum();
                // opposing normals can cancel; fall back to the first member's
                let n = sum
                    .try_normalize(1e-12)
                    .unwrap_or(src[members[0]]);
                dst.push(n);
            }
            if let (Some(dst), Some(src)) = (colors.as_mut(), self.colors.as_ref()) {
                let mut c = [0.0; 3];
                for &i in members {
                    for k in 0..3 {
                        c[k] += src[i][k] * inv;
                    }
                }
                dst.push(c);
            }
        }
        Ok((
            PointCloud {
                points,
                normals,
                colors,
            },
            groups,
        ))
    }
}

pub(crate) fn voxel_key(p: &Vec3, voxel: f64) -> [i64; 3] {
    [
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn close_points_merge_to_midpoint() {
        let c = PointCloud::new(vec![Vec3::new(0.001, 0.002, 0.003), Vec3::new(0.002, 0.002, 0.003)])
            .unwrap();
        let d = c.voxel_downsample(0.01).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d.point(0) - Vec3::new(0.0015, 0.002, 0.003)).norm() < 1e-12);
    }

    #[test]
    fn distant_points_are_kept() {
        let c = PointCloud::new(vec![Vec3::new(0.005, 0.005, 0.005), Vec3::new(1.005, 0.005, 0.005)])
            .unwrap();
        let d = c.voxel_downsample(0.01).unwrap();
        assert_eq!(d.points(), c.points());
    }

    #[test]
    fn empty_cloud_downsamples_to_empty() {
        assert!(PointCloud::empty().voxel_downsample(0.01).unwrap().is_empty());
        assert!(PointCloud::empty().voxel_downsample(0.0).is_err());
    }

    #[test]
    fn random_cube_matches_occupied_voxel_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec3> = (0..100_000)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        // oracle: distinct integer cells computed with plain division
        let occupied: HashSet<(i32, i32, i32)> = pts
            .iter()
            .map(|p| ((p.x * 10.0) as i32, (p.y * 10.0) as i32, (p.z * 10.0) as i32))
            .collect();
        let d = PointCloud::new(pts).unwrap().voxel_downsample(0.1).unwrap();
        assert!(d.len() <= 1000);
        assert_eq!(d.len(), occupied.len());
    }

    #[test]
    fn normals_are_renormalized_after_averaging() {
        let n1 = Vec3::new(1.0, 0.0, 0.0);
        let n2 = Vec3::new(0.0, 1.0, 0.0);
        let c = PointCloud::with_normals(
            vec![Vec3::new(0.001, 0.0, 0.0), Vec3::new(0.002, 0.0, 0.0)],
            vec![n1, n2],
        )
        .unwrap();
        let d = c.voxel_downsample(0.01).unwrap();
        assert!((d.normals().unwrap()[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_attributes() {
        assert!(PointCloud::new(vec![Vec3::new(f64::NAN, 0.0, 0.0)]).is_err());
        assert!(PointCloud::with_normals(vec![Vec3::zeros()], vec![Vec3::new(2.0, 0.0, 0.0)]).is_err());
        assert!(PointCloud::with_normals(vec![Vec3::zeros()], vec![]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn downsampling_is_idempotent(
            raw in proptest::collection::vec(proptest::array::uniform3(-1.0f64..1.0), 1..300),
            voxel in 0.01f64..0.5,
        ) {
            let c = PointCloud::new(raw.into_iter().map(Vec3::from).collect()).unwrap();
            let once = c.voxel_downsample(voxel).unwrap();
            let twice = once.voxel_downsample(voxel).unwrap();
            proptest::prop_assert!(once.len() <= c.len());
            proptest::prop_assert_eq!(once.len(), twice.len());
        }
    }
}
