use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{enumerate_base_candidates_with, CandidateSettings, WorkspaceSpec};
use crate::body::{CouchSpec, SurfaceModel};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::robot::{link_frames, solve_arm_ik_pointing, ArmConfig, BasePose, CollisionScene, RobotParams};
use crate::sensor::{visible_points, CameraModel};

pub const DICTIONARY_VERSION: u32 = 1;

/// How camera views are generated per base position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSettings {
    /// Camera distances from the target along the viewing direction, tried
    /// in order.
    pub standoffs: Vec<f64>,
    /// Target grid spacing as a multiple of the model resolution.
    pub target_spacing_factor: f64,
    /// Fallback tilts (degrees) of the viewing direction from the surface
    /// normal toward the shoulder, tried when the orthogonal view fails.
    pub tilts_deg: Vec<f64>,
    /// Records kept per target, first successes in trial order.
    pub views_per_target: usize,
}

impl Default for ViewSettings {
    fn default() -> Self {
        Self {
            standoffs: vec![0.6],
            target_spacing_factor: 2.0,
            tilts_deg: vec![20.0, 40.0],
            views_per_target: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    pub candidates: CandidateSettings,
    pub views: ViewSettings,
}

/// One reachable, collision-free camera configuration and what it sees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    /// Index into [`ConfigDictionary::bases`].
    pub base_index: usize,
    pub base: BasePose,
    pub arm: ArmConfig,
    /// Camera pose by forward kinematics of `arm`.
    pub camera: Pose,
    /// Model sample the view was aimed at.
    pub target: usize,
    /// Ascending sample indices.
    pub visible: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigDictionary {
    pub version: u32,
    pub bases: Vec<BasePose>,
    /// Grouped by base, ascending `base_index`.
    pub records: Vec<ConfigRecord>,
    pub model_resolution: f64,
    pub n_samples: usize,
    /// Mean wall-clock analysis time per base position, seconds.
    pub analysis_time_per_base: f64,
    pub params_hash: String,
}

impl ConfigDictionary {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn records_for_base(&self, base_index: usize) -> impl Iterator<Item = (usize, &ConfigRecord)> {
        self.records
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.base_index == base_index)
    }

    /// Sorted union of all visible sets.
    pub fn union_visible(&self) -> Vec<usize> {
        let mut seen = vec![false; self.n_samples];
        for r in &self.records {
            for &i in &r.visible {
                seen[i] = true;
            }
        }
        (0..self.n_samples).filter(|&i| seen[i]).collect()
    }

    /// Equality ignoring timing.
    pub fn same_content(&self, other: &ConfigDictionary) -> bool {
        self.bases == other.bases
            && self.records == other.records
            && self.model_resolution == other.model_resolution
            && self.n_samples == other.n_samples
            && self.params_hash == other.params_hash
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads a dictionary, refusing it if its hash differs from `expected_hash`.
    pub fn load(path: impl AsRef<Path>, expected_hash: &str) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dict: ConfigDictionary = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        if dict.version != DICTIONARY_VERSION {
            return Err(Error::Config(format!("dictionary version {} unsupported", dict.version)));
        }
        if dict.params_hash != expected_hash {
            return Err(Error::HashMismatch {
                expected: expected_hash.to_string(),
                found: dict.params_hash,
            });
        }
        Ok(dict)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over every input that shapes a dictionary.
pub fn params_hash(
    model: &SurfaceModel,
    params: &RobotParams,
    cam: &CameraModel,
    couch: &CouchSpec,
    workspace: &WorkspaceSpec,
    settings: &AnalysisSettings,
) -> String {
    let mut h = Sha256::new();
    h.update(DICTIONARY_VERSION.to_le_bytes());
    for p in model.samples().points() {
        for c in p.iter() {
            h.update(c.to_le_bytes());
        }
    }
    for n in model.samples().normals().unwrap_or(&[]) {
        for c in n.iter() {
            h.update(c.to_le_bytes());
        }
    }
    h.update((model.mesh().triangles().len() as u64).to_le_bytes());
    h.update(model.resolution().to_le_bytes());
    let json = serde_json::to_string(&(params, cam, couch, workspace, settings)).expect("serializable inputs");
    h.update(json.as_bytes());
    hex(&h.finalize())
}

/// Sample indices used as view targets: one per voxel of `spacing`, the
/// member closest to its voxel's centroid.
pub fn view_targets(model: &SurfaceModel, spacing: f64) -> Result<Vec<usize>> {
    let (centroids, groups) = model.samples().voxel_downsample_grouped(spacing)?;
    Ok(groups
        .iter()
        .enumerate()
        .map(|(g, members)| {
            let c = centroids.point(g);
            *members
                .iter()
                .min_by(|&&a, &&b| {
                    (model.point(a) - c)
                        .norm_squared()
                        .total_cmp(&(model.point(b) - c).norm_squared())
                        .then(a.cmp(&b))
                })
                .expect("non-empty voxel")
        })
        .collect())
}

/// Per-scene view generator shared across base positions.
pub struct Analyzer<'a> {
    model: &'a SurfaceModel,
    params: &'a RobotParams,
    cam: &'a CameraModel,
    couch: &'a CouchSpec,
    views: &'a ViewSettings,
    targets: Vec<usize>,
    collision: CollisionScene<'a>,
}

impl<'a> Analyzer<'a> {
    pub fn new(
        model: &'a SurfaceModel,
        params: &'a RobotParams,
        cam: &'a CameraModel,
        couch: &'a CouchSpec,
        workspace: &'a WorkspaceSpec,
        views: &'a ViewSettings,
    ) -> Result<Self> {
        let targets = view_targets(model, views.target_spacing_factor * model.resolution())?;
        Ok(Self {
            model,
            params,
            cam,
            couch,
            views,
            targets,
            collision: CollisionScene::new(couch, model, workspace),
        })
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    fn view_directions(&self, normal: &Vec3, toward_shoulder: &Vec3) -> Vec<Vec3> {
        let mut dirs = vec![*normal];
        let side = toward_shoulder - normal * normal.dot(toward_shoulder);
        if let Some(w) = side.try_normalize(1e-9) {
            for t in &self.views.tilts_deg {
                let (s, c) = t.to_radians().sin_cos();
                dirs.push(normal * c + w * s);
            }
        }
        dirs
    }

    /// Records for every target reachable from `base`.
    pub fn analyze(&self, base_index: usize, base: &BasePose) -> Vec<ConfigRecord> {
        let shoulder = *link_frames(self.params, base, &ArmConfig::zero())[1].translation();
        let reach = self.params.reach_bound();
        let normals = self.model.samples().normals().expect("surface normals");
        let mut records = Vec::new();
        for &t in &self.targets {
            let p = self.model.point(t);
            let Some(toward) = (shoulder - p).try_normalize(1e-9) else {
                continue;
            };
            let n = normals[t];
            let dirs = self.view_directions(&n, &toward);
            let eyes: Vec<Vec3> = self
                .views
                .standoffs
                .iter()
                .flat_map(|&d| dirs.iter().map(move |dir| p + dir * d))
                .collect();
            let mut kept = 0;
            for eye in eyes {
                let Some(dir) = (eye - p).try_normalize(1e-9) else {
                    continue;
                };
                let range = (eye - p).norm();
                if eye.z <= self.couch.height
                    || (eye - shoulder).norm() > reach
                    || range < self.cam.min_range
                    || range > self.cam.max_range
                    || dir.dot(&n) < self.cam.max_incidence.cos()
                {
                    continue;
                }
                let Some(arm) = solve_arm_ik_pointing(self.params, base, &eye, &(-dir), &ArmConfig::folded()) else {
                    continue;
                };
                if !self.collision.check(self.params, base, &arm) {
                    continue;
                }
                let camera = crate::robot::forward_kinematics(self.params, base, &arm).expect("IK respects limits");
                let visible = visible_points(self.cam, &camera, self.model);
                if visible.is_empty() {
                    continue;
                }
                records.push(ConfigRecord {
                    base_index,
                    base: *base,
                    arm,
                    camera,
                    target: t,
                    visible,
                });
                kept += 1;
                if kept >= self.views.views_per_target {
                    break;
                }
            }
        }
        records
    }
}

/// Reachable, collision-free views from one base position.
pub fn analyze_base_position(
    base: &BasePose,
    model: &SurfaceModel,
    params: &RobotParams,
    cam: &CameraModel,
    couch: &CouchSpec,
    workspace: &WorkspaceSpec,
) -> Vec<ConfigRecord> {
    let views = ViewSettings::default();
    match Analyzer::new(model, params, cam, couch, workspace, &views) {
        Ok(a) => a.analyze(0, base),
        Err(_) => Vec::new(),
    }
}

/// Dictionary over all candidate bases with default analysis settings.
pub fn build_dictionary(
    model: &SurfaceModel,
    params: &RobotParams,
    cam: &CameraModel,
    couch: &CouchSpec,
    workspace: &WorkspaceSpec,
) -> Result<ConfigDictionary> {
    build_dictionary_with(model, params, cam, couch, workspace, &AnalysisSettings::default())
}

/// Analyzes every candidate base in parallel; records keep candidate order.
pub fn build_dictionary_with(
    model: &SurfaceModel,
    params: &RobotParams,
    cam: &CameraModel,
    couch: &CouchSpec,
    workspace: &WorkspaceSpec,
    settings: &AnalysisSettings,
) -> Result<ConfigDictionary> {
    let bases = enumerate_base_candidates_with(couch, workspace, params, &settings.candidates)?;
    let analyzer = Analyzer::new(model, params, cam, couch, workspace, &settings.views)?;
    let per_base: Vec<(Vec<ConfigRecord>, f64)> = bases
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let start = Instant::now();
            let r = analyzer.analyze(i, b);
            (r, start.elapsed().as_secs_f64())
        })
        .collect();
    let analysis_time_per_base = per_base.iter().map(|(_, t)| t).sum::<f64>() / bases.len() as f64;
    Ok(ConfigDictionary {
        version: DICTIONARY_VERSION,
        records: per_base.into_iter().flat_map(|(r, _)| r).collect(),
        bases,
        model_resolution: model.resolution(),
        n_samples: model.len(),
        analysis_time_per_base,
        params_hash: params_hash(model, params, cam, couch, workspace, settings),
    })
}
