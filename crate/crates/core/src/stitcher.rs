//! Reconstruction of the full surface from simulated captures.

use std::fmt::Write as _;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose, SpatialIndex, Vec3};
use crate::sensor::ScanFrame;

pub const STITCH_VOXEL: f64 = 0.01;
pub const MIN_CORRESPONDENCES: usize = 10;
pub const MAX_CORRECTION_DEG: f64 = 30.0;
pub const ICP_CONVERGENCE: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StitchSettings {
    pub voxel: f64,
    pub max_corr_dist: f64,
    pub max_iters: usize,
    pub outlier_k: usize,
    pub outlier_sigma: f64,
    /// Keep the commanded placement of a stop that has too few
    /// correspondences instead of failing.
    pub keep_coarse_on_low_overlap: bool,
    /// Corrections larger than `(degrees, meters)` are discarded and the
    /// commanded placement kept.
    pub max_accepted_correction: Option<(f64, f64)>,
}

impl Default for StitchSettings {
    fn default() -> Self {
        Self {
            voxel: STITCH_VOXEL,
            max_corr_dist: 0.05,
            max_iters: 50,
            outlier_k: 20,
            outlier_sigma: 2.0,
            keep_coarse_on_low_overlap: false,
            max_accepted_correction: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcpResult {
    /// Source-to-target correction.
    pub pose: Pose,
    /// Inlier RMS at the final pose, meters.
    pub rms: f64,
    /// Inlier RMS before the first iteration, meters.
    pub initial_rms: f64,
    /// Truncated RMS before the first and after every iteration: each
    /// source point contributes `min(d, max_corr_dist)`.
    pub history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StitchResult {
    /// World-frame cloud on the stitch voxel grid.
    pub cloud: PointCloud,
    /// Earliest stop contributing to each point of `cloud`.
    pub stage_labels: Vec<usize>,
    /// ICP correction per stop; the anchor keeps the identity.
    pub per_stage_transforms: Vec<Pose>,
    /// Final inlier RMS per stop, meters; 0 for the anchor. Stops whose
    /// correction was discarded report the RMS at their commanded placement.
    pub icp_residuals: Vec<f64>,
    pub rejected_outliers: usize,
}

impl StitchResult {
    /// Points from stops `0..=stage`.
    pub fn cloud_through(&self, stage: usize) -> PointCloud {
        let idx: Vec<usize> = (0..self.cloud.len()).filter(|&i| self.stage_labels[i] <= stage).collect();
        self.cloud.select(&idx)
    }

    pub fn corrections_csv(&self) -> String {
        let mut s = String::from("stage,rotation_deg,translation_mm,icp_rms_mm\n");
        for (i, (t, r)) in self.per_stage_transforms.iter().zip(&self.icp_residuals).enumerate() {
            writeln!(
                s,
                "{i},{:.6},{:.6},{:.6}",
                t.rotation_angle().to_degrees(),
                t.translation().norm() * 1000.0,
                r * 1000.0
            )
            .unwrap();
        }
        s
    }
}

/// One world-frame cloud per stop: frames placed by their commanded poses,
/// merged and downsampled.
pub fn coarse_assemble(stops: &[Vec<ScanFrame>]) -> Result<Vec<PointCloud>> {
    coarse_assemble_with(stops, STITCH_VOXEL)
}

pub fn coarse_assemble_with(stops: &[Vec<ScanFrame>], voxel: f64) -> Result<Vec<PointCloud>> {
    if stops.is_empty() || stops.iter().any(|s| s.is_empty()) {
        return Err(Error::NoFrames);
    }
    stops
        .iter()
        .map(|frames| {
            let world: Vec<PointCloud> = frames.iter().map(|f| f.world_cloud_commanded()).collect();
            PointCloud::concat(&world).voxel_downsample(voxel)
        })
        .collect()
}

/// Least-squares rigid transform taking `src[i]` onto `dst[i]`.
pub fn rigid_fit(src: &[Vec3], dst: &[Vec3]) -> Pose {
    let n = src.len() as f64;
    let cs: Vec3 = src.iter().sum::<Vec3>() / n;
    let cd: Vec3 = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut r = v_t.transpose() * u.transpose();
    if r.determinant() < 0.0 {
        let mut v = v_t.transpose();
        v.column_mut(2).neg_mut();
        r = v * u.transpose();
    }
    Pose::from_rotation_matrix(&r, cd - r * cs)
}

/// Point-to-point ICP; returns the source-to-target correction and the
/// final inlier RMS.
pub fn icp_point_to_point(source: &PointCloud, target: &PointCloud, max_corr_dist: f64, max_iters: usize) -> Result<(Pose, f64)> {
    let r = icp_detailed(source, target, max_corr_dist, max_iters)?;
    Ok((r.pose, r.rms))
}

pub fn icp_detailed(source: &PointCloud, target: &PointCloud, max_corr_dist: f64, max_iters: usize) -> Result<IcpResult> {
    icp_with(source, target, &IcpOptions::new(max_corr_dist, max_iters))
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcpOptions {
    pub max_corr_dist: f64,
    pub max_iters: usize,
    /// Keep only pairs that are mutual nearest neighbors.
    pub reciprocal: bool,
}

impl IcpOptions {
    pub fn new(max_corr_dist: f64, max_iters: usize) -> Self {
        Self {
            max_corr_dist,
            max_iters,
            reciprocal: false,
        }
    }
}

/// ICP loop shared by the plain and reciprocal variants.
///
/// The tracked objective is the truncated RMS: every source point costs
/// its squared pair distance, or `max_corr_dist²` without a pair. A step
/// that would raise it is rejected and ends the loop.
pub fn icp_with(source: &PointCloud, target: &PointCloud, opts: &IcpOptions) -> Result<IcpResult> {
    let max_corr_dist = opts.max_corr_dist;
    if !(max_corr_dist > 0.0) {
        return Err(Error::InvalidParameter(format!("max_corr_dist {max_corr_dist} must be > 0")));
    }
    for c in [source, target] {
        if c.len() < MIN_CORRESPONDENCES {
            return Err(Error::InsufficientOverlap { found: c.len() });
        }
    }
    let index = SpatialIndex::new(target.points(), max_corr_dist);
    let cap2 = max_corr_dist * max_corr_dist;
    let n = source.len() as f64;
    let correspond = |pose: &Pose| -> (Vec<(Vec3, Vec3)>, f64, f64) {
        let moved: Vec<Vec3> = source.points().iter().map(|p| pose.transform_point(p)).collect();
        let back = opts.reciprocal.then(|| SpatialIndex::new(&moved, max_corr_dist));
        let found: Vec<Option<(Vec3, Vec3, f64)>> = (0..moved.len())
            .into_par_iter()
            .map(|i| {
                let (j, d) = index.nearest_within(&moved[i], max_corr_dist)?;
                if let Some(b) = &back {
                    if b.nearest_within(target.point(j), max_corr_dist).map(|(k, _)| k) != Some(i) {
                        return None;
                    }
                }
                Some((*source.point(i), *target.point(j), d * d))
            })
            .collect();
        let pairs: Vec<(Vec3, Vec3)> = found.iter().flatten().map(|&(s, t, _)| (s, t)).collect();
        let inlier: f64 = found.iter().flatten().map(|&(_, _, d2)| d2).sum();
        let unpaired = found.iter().filter(|f| f.is_none()).count() as f64;
        let truncated = ((inlier + unpaired * cap2) / n).sqrt();
        let rms = if pairs.is_empty() { 0.0 } else { (inlier / pairs.len() as f64).sqrt() };
        (pairs, truncated, rms)
    };
    let mut pose = Pose::identity();
    let (mut pairs, mut truncated, mut rms) = correspond(&pose);
    let initial_rms = rms;
    let mut history = vec![truncated];
    for _ in 0..opts.max_iters {
        if pairs.len() < MIN_CORRESPONDENCES {
            return Err(Error::InsufficientOverlap { found: pairs.len() });
        }
        let (src, dst): (Vec<Vec3>, Vec<Vec3>) = pairs.iter().copied().unzip();
        let next = rigid_fit(&src, &dst);
        let (next_pairs, next_truncated, next_rms) = correspond(&next);
        if next_truncated > truncated {
            break;
        }
        let change = truncated - next_truncated;
        pose = next;
        pairs = next_pairs;
        truncated = next_truncated;
        rms = next_rms;
        history.push(truncated);
        if change < ICP_CONVERGENCE {
            break;
        }
    }
    if pairs.len() < MIN_CORRESPONDENCES {
        return Err(Error::InsufficientOverlap { found: pairs.len() });
    }
    Ok(IcpResult {
        pose,
        rms,
        initial_rms,
        history,
    })
}

/// Statistical outlier removal on the mean distance to the `k` nearest
/// neighbors. Clouds with at most `k` points are returned unchanged.
pub fn remove_outliers(cloud: &PointCloud, k: usize, sigma_mult: f64) -> PointCloud {
    remove_outliers_indexed(cloud, k, sigma_mult).0
}

/// Like [`remove_outliers`], also returning the kept indices.
pub fn remove_outliers_indexed(cloud: &PointCloud, k: usize, sigma_mult: f64) -> (PointCloud, Vec<usize>) {
    let all: Vec<usize> = (0..cloud.len()).collect();
    if k == 0 || cloud.len() <= k {
        return (cloud.clone(), all);
    }
    let index = SpatialIndex::auto(cloud.points());
    let means: Vec<f64> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let nn = index.k_nearest(cloud.point(i), k + 1);
            let d: f64 = nn.iter().filter(|&&(j, _)| j != i).take(k).map(|&(_, d)| d).sum();
            d / k as f64
        })
        .collect();
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let std = (means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n).sqrt();
    let limit = mean + sigma_mult * std;
    let keep: Vec<usize> = all.into_iter().filter(|&i| means[i] <= limit).collect();
    (cloud.select(&keep), keep)
}

/// Distance the centroid of `cloud` moves under `pose`.
fn centroid_shift(cloud: &PointCloud, pose: &Pose) -> f64 {
    cloud.centroid().map_or(0.0, |c| (pose.transform_point(&c) - c).norm())
}

/// Full reconstruction with default settings.
pub fn stitch_full(stops: &[Vec<ScanFrame>]) -> Result<StitchResult> {
    stitch_full_with(stops, &StitchSettings::default())
}

/// Coarse placement, sequential ICP of each stop onto the union of the
/// stops before it, outlier removal and a final downsample. Pairs must be
/// mutual nearest neighbors, which keeps partial views from sliding along
/// symmetric surfaces. Stops whose merged cloud is empty keep the identity
/// correction.
pub fn stitch_full_with(stops: &[Vec<ScanFrame>], settings: &StitchSettings) -> Result<StitchResult> {
    let coarse = coarse_assemble_with(stops, settings.voxel)?;
    let mut aligned: Vec<PointCloud> = Vec::with_capacity(coarse.len());
    let mut transforms = Vec::with_capacity(coarse.len());
    let mut residuals = Vec::with_capacity(coarse.len());
    for (i, cloud) in coarse.iter().enumerate() {
        let anchor = PointCloud::concat(&aligned);
        if i == 0 || cloud.is_empty() || anchor.is_empty() {
            transforms.push(Pose::identity());
            residuals.push(0.0);
            aligned.push(cloud.clone());
            continue;
        }
        let opts = IcpOptions {
            reciprocal: true,
            ..IcpOptions::new(settings.max_corr_dist, settings.max_iters)
        };
        let r = match icp_with(cloud, &anchor, &opts) {
            Err(Error::InsufficientOverlap { .. }) if settings.keep_coarse_on_low_overlap => {
                transforms.push(Pose::identity());
                residuals.push(0.0);
                aligned.push(cloud.clone());
                continue;
            }
            r => r?,
        };
        let degrees = r.pose.rotation_angle().to_degrees();
        if degrees > MAX_CORRECTION_DEG {
            return Err(Error::CoarseAlignmentFailure { degrees });
        }
        let (pose, rms) = match settings.max_accepted_correction {
            Some((deg, m)) if degrees > deg || centroid_shift(cloud, &r.pose) > m => (Pose::identity(), r.initial_rms),
            _ => (r.pose, r.rms),
        };
        aligned.push(cloud.transformed(&pose));
        transforms.push(pose);
        residuals.push(rms);
    }
    let labels: Vec<usize> = aligned.iter().enumerate().flat_map(|(i, c)| std::iter::repeat_n(i, c.len())).collect();
    let merged = PointCloud::concat(&aligned);
    let (filtered, kept) = remove_outliers_indexed(&merged, settings.outlier_k, settings.outlier_sigma);
    let rejected_outliers = merged.len() - filtered.len();
    let (cloud, groups) = filtered.voxel_downsample_grouped(settings.voxel)?;
    let stage_labels = groups
        .iter()
        .map(|g| g.iter().map(|&j| labels[kept[j]]).min().expect("non-empty voxel"))
        .collect();
    Ok(StitchResult {
        cloud,
        stage_labels,
        per_stage_transforms: transforms,
        icp_residuals: residuals,
        rejected_outliers,
    })
}
