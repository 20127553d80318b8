//! End-to-end scan scenarios: configuration, simulated execution, Monte-Carlo
//! batches and parameter sweeps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::body::{humanoid_mesh, make_half_cylinder, strip_underside, strip_underside_within, CouchSpec, SurfaceModel, HUMANOID_GRID};
use crate::cspace::{build_dictionary_with, params_hash, select_resolution_kneedle, AnalysisSettings, ConfigDictionary, WorkspaceKind, WorkspaceSpec, NARROW_CORRIDOR};
use crate::error::{Error, Result};
use crate::geometry::ply::read_mesh;
use crate::geometry::{Pose, TriangleMesh, Vec3};
use crate::metrics::{coverage, coverage_curve, coverage_curve_from, mean_surface_distance, CoverageReport};
use crate::planner::{greedy_select, navigation_grid, plan_base_path, ScanPlan, TimingSettings};
use crate::robot::{base_allowed, forward_kinematics, link_frames, solve_arm_ik_pointing, ArmConfig, BasePose, CollisionScene, RobotParams};
use crate::sensor::{render_scan, visible_points, CameraModel, ScanFrame};
use crate::stitcher::{stitch_full_with, StitchResult, StitchSettings};

pub const CONFIG_VERSION: u32 = 1;
/// Couch-contact band stripped from planning models, meters.
pub const PLANNING_STRIP_BAND: f64 = 0.02;
/// Attempts at drawing a collision-free random start.
const START_ATTEMPTS: usize = 10_000;
/// Arm extensions tried for the explorative capture, meters from the shoulder.
const EXPLORE_REACH: [f64; 4] = [0.35, 0.25, 0.45, 0.15];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodySpec {
    HalfCylinder {
        #[serde(default = "default_length")]
        length: f64,
        #[serde(default = "default_radius")]
        radius: f64,
    },
    Humanoid {},
    /// PLY mesh in couch-top coordinates.
    Mesh { path: PathBuf },
}

fn default_length() -> f64 {
    1.75
}

fn default_radius() -> f64 {
    0.2
}

impl Default for BodySpec {
    fn default() -> Self {
        Self::HalfCylinder {
            length: default_length(),
            radius: default_radius(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceConfig {
    pub kind: WorkspaceKind,
    /// Free floor beside each couch edge in a narrow room.
    pub corridor: f64,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        Self {
            kind: WorkspaceKind::Full,
            corridor: NARROW_CORRIDOR,
        }
    }
}

impl WorkspaceConfig {
    pub fn spec(&self, couch: &CouchSpec) -> WorkspaceSpec {
        match self.kind {
            WorkspaceKind::Narrow => WorkspaceSpec::narrow(couch, self.corridor),
            kind => WorkspaceSpec::for_kind(kind, couch),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    pub max_bases: usize,
    pub max_views: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            max_bases: 3,
            max_views: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Body sampling and the random start pose.
    pub sampling: u64,
    /// Camera pose errors.
    pub jitter: u64,
    /// Depth noise.
    pub noise: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self {
            sampling: seed,
            jitter: seed,
            noise: seed,
        }
    }

    /// Seeds for run `i` of a batch.
    pub fn offset(&self, i: u64) -> Self {
        Self {
            sampling: self.sampling.wrapping_add(i),
            jitter: self.jitter.wrapping_add(i),
            noise: self.noise.wrapping_add(i),
        }
    }

    /// Render seed of capture `index`.
    pub fn frame_seed(&self, index: u64) -> u64 {
        splitmix(splitmix(self.jitter ^ 0x6a09_e667_f3bc_c908) ^ splitmix(self.noise ^ 0xbb67_ae85_84ca_a73b) ^ index)
    }
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Everything that defines a scan scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub body: BodySpec,
    pub couch: CouchSpec,
    pub workspace: WorkspaceConfig,
    pub camera: CameraModel,
    pub robot: RobotParams,
    pub analysis: AnalysisSettings,
    pub budgets: Budgets,
    pub seeds: Seeds,
    /// Planning model resolution, meters.
    pub resolution: f64,
    /// Reference model resolution and coverage voxel, meters.
    pub evaluation_resolution: f64,
    /// Cell size of the navigation grid, meters.
    pub navigation_cell: f64,
    pub stitch: StitchSettings,
    pub timing: TimingSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            body: BodySpec::default(),
            couch: CouchSpec::default(),
            workspace: WorkspaceConfig::default(),
            camera: CameraModel::default(),
            robot: RobotParams::default(),
            analysis: AnalysisSettings::default(),
            budgets: Budgets::default(),
            seeds: Seeds::default(),
            resolution: 0.1,
            evaluation_resolution: 0.01,
            navigation_cell: 0.1,
            stitch: StitchSettings {
                keep_coarse_on_low_overlap: true,
                max_accepted_correction: Some((2.0, 0.02)),
                ..StitchSettings::default()
            },
            timing: TimingSettings::default(),
        }
    }
}

/// Short names accepted for sweep axes and overrides.
const AXIS_ALIASES: [(&str, &str); 6] = [
    ("couch_height", "couch.height"),
    ("workspace", "workspace.kind"),
    ("bases", "budgets.max_bases"),
    ("views", "budgets.max_views"),
    ("body", "body.kind"),
    ("seed", "seeds"),
];

/// Full dotted path for an axis name or alias.
pub fn resolve_axis(axis: &str) -> &str {
    let axis = axis.trim();
    AXIS_ALIASES
        .iter()
        .find(|(a, _)| *a == axis.replace('-', "_"))
        .map(|(_, p)| *p)
        .unwrap_or(axis)
}

/// Parses a command-line value as a TOML literal, falling back to a string.
pub fn parse_value(text: &str) -> toml::Value {
    let text = text.trim();
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // a new body kind replaces the whole body table
                    Some(slot) if k == "body" && v.get("kind").is_some() => *slot = v,
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ScenarioConfig {
    /// Parses a TOML document layered over the defaults. Unknown keys and
    /// unsupported versions are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let overlay: toml::Table = toml::from_str(text).map_err(config_error)?;
        let mut value = toml::Value::try_from(Self::default()).map_err(config_error)?;
        merge(&mut value, toml::Value::Table(overlay));
        let cfg: Self = value.try_into().map_err(config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!("config version {} unsupported (expected {CONFIG_VERSION})", self.version)));
        }
        for (name, v) in [
            ("resolution", self.resolution),
            ("evaluation_resolution", self.evaluation_resolution),
            ("navigation_cell", self.navigation_cell),
            ("workspace.corridor", self.workspace.corridor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a positive number, got {v}")));
            }
        }
        if let BodySpec::HalfCylinder { length, radius } = self.body {
            if !(length > 0.0 && radius > 0.0) {
                return Err(Error::Config("half-cylinder length and radius must be > 0".into()));
            }
        }
        if self.budgets.max_bases == 0 || self.budgets.max_views == 0 {
            return Err(Error::Config("budgets must be at least 1".into()));
        }
        self.couch.validate()?;
        self.camera.validate()?;
        self.robot.validate()
    }

    /// Copy with one dotted key (or alias) replaced.
    pub fn with_override(&self, key: &str, value: toml::Value) -> Result<Self> {
        let path = resolve_axis(key);
        let value = match (path, value) {
            ("workspace.kind", toml::Value::String(s)) => toml::Value::String(s.replace('-', "_")),
            ("seeds", toml::Value::Integer(n)) => toml::Value::try_from(Seeds::all(n as u64)).map_err(config_error)?,
            (_, v) => v,
        };
        let mut root = toml::Value::try_from(self).map_err(config_error)?;
        let mut parts: Vec<&str> = path.split('.').collect();
        let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty key '{key}'")))?;
        if path == "body.kind" {
            root["body"] = toml::Value::Table(toml::Table::from_iter([("kind".to_string(), value)]));
        } else {
            let mut node = &mut root;
            for p in &parts {
                node = node
                    .get_mut(*p)
                    .filter(|v| v.is_table())
                    .ok_or_else(|| Error::Config(format!("unknown config key '{key}'")))?;
            }
            let table = node.as_table_mut().expect("checked table");
            let slot = table.get_mut(last).ok_or_else(|| Error::Config(format!("unknown config key '{key}'")))?;
            *slot = value;
        }
        let cfg: Self = root.try_into().map_err(config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Effective configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("serializable config")
    }

    /// SHA-256 of [`Self::to_toml`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Body geometry, planning model and evaluation reference for a config.
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub workspace: WorkspaceSpec,
    /// Sampled at `resolution`, couch contact stripped.
    pub planning: SurfaceModel,
    /// Sampled at `evaluation_resolution`, couch contact stripped.
    pub reference: SurfaceModel,
}

fn body_mesh(body: &BodySpec) -> Result<Option<TriangleMesh>> {
    match body {
        BodySpec::HalfCylinder { .. } => Ok(None),
        BodySpec::Humanoid {} => humanoid_mesh(HUMANOID_GRID).map(Some),
        BodySpec::Mesh { path } => read_mesh(path).map(Some),
    }
}

fn sample_body(cfg: &ScenarioConfig, mesh: Option<&TriangleMesh>, resolution: f64) -> Result<SurfaceModel> {
    match (&cfg.body, mesh) {
        (BodySpec::HalfCylinder { length, radius }, _) => make_half_cylinder(*length, *radius, cfg.couch, resolution),
        (_, Some(m)) => SurfaceModel::from_body_mesh(m, cfg.couch, resolution, cfg.seeds.sampling),
        (_, None) => Err(Error::EmptyMesh),
    }
}

/// Outcome of one simulated scan.
#[derive(Clone, Debug)]
pub struct WorkflowRun {
    pub start: BasePose,
    pub explorative_camera: Pose,
    pub plan: ScanPlan,
    /// Captures grouped by stop; stop 0 is the explorative scan.
    pub frames: Vec<Vec<ScanFrame>>,
    pub stitch: StitchResult,
    pub report: CoverageReport,
    pub timing: RunTiming,
}

/// Wall-clock seconds per phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub analysis: f64,
    pub analysis_per_base: f64,
    pub planning: f64,
    pub simulation: f64,
    pub stitching: f64,
    pub evaluation: f64,
    /// Estimated execution time of the plan on the robot.
    pub estimated_execution: f64,
}

impl RunTiming {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("phase,seconds\n");
        for (name, v) in [
            ("analysis", self.analysis),
            ("analysis_per_base", self.analysis_per_base),
            ("planning", self.planning),
            ("simulation", self.simulation),
            ("stitching", self.stitching),
            ("evaluation", self.evaluation),
            ("estimated_execution", self.estimated_execution),
        ] {
            writeln!(s, "{name},{v:.6}").expect("write to string");
        }
        s
    }
}

/// Where the robot starts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StartPose {
    /// Uniform over the free floor, drawn from the sampling seed.
    Random,
    At(BasePose),
}

fn pad_stages(report: &mut CoverageReport, stages: usize) {
    let first_base = report.stage_names.iter().filter(|n| !n.starts_with("base")).count();
    while report.per_stage_coverage.len() < stages {
        let k = report.per_stage_coverage.len() - first_base + 1;
        let last = report.per_stage_coverage.last().copied().unwrap_or(0.0);
        report.per_stage_coverage.push(last);
        report.stage_names.push(format!("base {k}"));
    }
    while !report.realized_stage_coverage.is_empty() && report.realized_stage_coverage.len() < stages {
        let last = *report.realized_stage_coverage.last().expect("non-empty");
        report.realized_stage_coverage.push(last);
    }
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let workspace = cfg.workspace.spec(&cfg.couch);
        workspace.validate()?;
        let mesh = body_mesh(&cfg.body)?;
        let planning = strip_underside_within(&sample_body(&cfg, mesh.as_ref(), cfg.resolution)?, PLANNING_STRIP_BAND);
        let reference = strip_underside(&sample_body(&cfg, mesh.as_ref(), cfg.evaluation_resolution)?);
        if reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        Ok(Self {
            cfg,
            workspace,
            planning,
            reference,
        })
    }

    pub fn params_hash(&self) -> String {
        let c = &self.cfg;
        params_hash(&self.planning, &c.robot, &c.camera, &c.couch, &self.workspace, &c.analysis)
    }

    /// Configuration dictionary over the planning model.
    pub fn analyze(&self) -> Result<ConfigDictionary> {
        let c = &self.cfg;
        build_dictionary_with(&self.planning, &c.robot, &c.camera, &c.couch, &self.workspace, &c.analysis)
    }

    /// Greedy plan without an explorative scan and its expected coverage
    /// on the reference, one stage per base in the budget.
    pub fn plan_curve(&self, dict: &ConfigDictionary) -> Result<(ScanPlan, CoverageReport)> {
        let b = &self.cfg.budgets;
        let plan = greedy_select(dict, b.max_bases, b.max_views, &[])?;
        let mut report = coverage_curve(dict, &plan, &self.reference, &self.cfg.camera);
        pad_stages(&mut report, b.max_bases);
        Ok((plan, report))
    }

    /// Collision-free start pose drawn uniformly over the free floor.
    pub fn random_start(&self) -> Result<BasePose> {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(self.cfg.seeds.sampling));
        let r = &self.workspace.free_region;
        for _ in 0..START_ATTEMPTS {
            let pose = BasePose::new(
                rng.random_range(r.x_min..r.x_max),
                rng.random_range(r.y_min..r.y_max),
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            );
            if base_allowed(&self.cfg.robot, &pose, &self.cfg.couch, &self.workspace) {
                return Ok(pose);
            }
        }
        Err(Error::NoCandidates)
    }

    /// Camera pose of the explorative capture from `start`, aimed at the
    /// couch center. Falls back to the folded arm when no aimed
    /// configuration is reachable and collision-free.
    pub fn explorative_camera(&self, start: &BasePose) -> Pose {
        let c = &self.cfg;
        let target = Vec3::new(0.0, 0.0, c.couch.height);
        let shoulder = *link_frames(&c.robot, start, &ArmConfig::zero())[1].translation();
        let scene = CollisionScene::new(&c.couch, &self.planning, &self.workspace);
        if let Some(dir) = (target - shoulder).try_normalize(1e-9) {
            for reach in EXPLORE_REACH {
                let eye = shoulder + dir * reach;
                let Some(arm) = solve_arm_ik_pointing(&c.robot, start, &eye, &(target - eye), &ArmConfig::folded()) else {
                    continue;
                };
                if scene.check(&c.robot, start, &arm) {
                    return forward_kinematics(&c.robot, start, &arm).expect("IK respects limits");
                }
            }
        }
        crate::robot::camera_pose_unchecked(&c.robot, start, &ArmConfig::folded())
    }

    /// Explorative scan, plan, simulated execution, stitching and report.
    pub fn run(&self, dict: &ConfigDictionary, start: StartPose) -> Result<WorkflowRun> {
        let c = &self.cfg;
        let mut timing = RunTiming {
            analysis_per_base: dict.analysis_time_per_base,
            ..RunTiming::default()
        };
        let t = Instant::now();
        let start = match start {
            StartPose::Random => self.random_start()?,
            StartPose::At(p) => p,
        };
        let explorative_camera = self.explorative_camera(&start);
        let seen = visible_points(&c.camera, &explorative_camera, &self.planning);
        let mut plan = greedy_select(dict, c.budgets.max_bases, c.budgets.max_views, &seen)?;
        let grid = navigation_grid(&c.couch, &self.workspace, &c.robot, c.navigation_cell)?;
        let mut from = start;
        for stop in &plan.stops {
            plan.base_paths.push(plan_base_path(&from, &stop.base, &grid)?);
            from = stop.base;
        }
        timing.planning = t.elapsed().as_secs_f64();
        timing.estimated_execution = crate::planner::estimate_plan_time_with(&plan, &c.robot, &c.timing);

        let t = Instant::now();
        let mut poses = vec![vec![explorative_camera]];
        for stop in &plan.stops {
            poses.push(stop.views.iter().map(|&r| dict.records[r].camera).collect());
        }
        let mut index = 0u64;
        let mut jobs = Vec::new();
        for (s, stop) in poses.iter().enumerate() {
            for pose in stop {
                jobs.push((s, *pose, c.seeds.frame_seed(index)));
                index += 1;
            }
        }
        let rendered: Vec<(usize, ScanFrame)> = jobs
            .par_iter()
            .map(|&(s, pose, seed)| (s, render_scan(&c.camera, &pose, &self.reference, seed)))
            .collect();
        let mut frames: Vec<Vec<ScanFrame>> = vec![Vec::new(); poses.len()];
        for (s, f) in rendered {
            frames[s].push(f);
        }
        timing.simulation = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let stitch = stitch_full_with(&frames, &c.stitch)?;
        timing.stitching = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let explored = visible_points(&c.camera, &explorative_camera, &self.reference);
        let mut report = coverage_curve_from(dict, &plan, &self.reference, &c.camera, Some(&explored));
        let voxel = c.evaluation_resolution;
        report.realized_stage_coverage = (0..frames.len())
            .map(|k| coverage(&stitch.cloud_through(k), self.reference.samples(), voxel))
            .collect::<Result<_>>()?;
        report.voxel = voxel;
        report.mean_distance = if stitch.cloud.is_empty() {
            None
        } else {
            Some(mean_surface_distance(&stitch.cloud, self.reference.samples())?)
        };
        pad_stages(&mut report, c.budgets.max_bases + 1);
        report.coverage_pct = *report.realized_stage_coverage.last().expect("explorative stage");
        timing.evaluation = t.elapsed().as_secs_f64();

        Ok(WorkflowRun {
            start,
            explorative_camera,
            plan,
            frames,
            stitch,
            report,
            timing,
        })
    }
}

/// Builds the scenario and dictionary, then runs one scan.
pub fn run_workflow(cfg: &ScenarioConfig, start: StartPose) -> Result<(StitchResult, CoverageReport)> {
    let scenario = Scenario::new(cfg.clone())?;
    let dict = scenario.analyze()?;
    let run = scenario.run(&dict, start)?;
    Ok((run.stitch, run.report))
}

/// Per-run figures of a Monte-Carlo batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seeds: Seeds,
    pub start: BasePose,
    pub expected_stage_coverage: Vec<f64>,
    pub realized_stage_coverage: Vec<f64>,
    pub coverage_pct: f64,
    pub mean_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub runs: Vec<RunSummary>,
}

impl MonteCarloSummary {
    fn finals(&self) -> impl Iterator<Item = f64> + '_ {
        self.runs.iter().map(|r| r.coverage_pct)
    }

    pub fn mean_coverage(&self) -> f64 {
        self.finals().sum::<f64>() / self.runs.len().max(1) as f64
    }

    /// Sample standard deviation of final coverage.
    pub fn std_coverage(&self) -> f64 {
        if self.runs.len() < 2 {
            return 0.0;
        }
        let m = self.mean_coverage();
        (self.finals().map(|v| (v - m).powi(2)).sum::<f64>() / (self.runs.len() - 1) as f64).sqrt()
    }

    pub fn to_csv(&self) -> String {
        let stages = self.runs.iter().map(|r| r.expected_stage_coverage.len()).max().unwrap_or(0);
        let mut s = String::from("run,sampling_seed,start_x,start_y,start_heading");
        for k in 0..stages {
            write!(s, ",expected_{k}").expect("write to string");
        }
        for k in 0..stages {
            write!(s, ",realized_{k}").expect("write to string");
        }
        s.push_str(",coverage_pct,mean_distance_mm\n");
        for (i, r) in self.runs.iter().enumerate() {
            write!(s, "{i},{},{:.4},{:.4},{:.6}", r.seeds.sampling, r.start.x, r.start.y, r.start.heading).expect("write to string");
            for v in r.expected_stage_coverage.iter().chain(&r.realized_stage_coverage) {
                write!(s, ",{v:.4}").expect("write to string");
            }
            let d = r.mean_distance.map(|d| format!("{:.4}", d * 1000.0)).unwrap_or_default();
            writeln!(s, ",{:.4},{d}", r.coverage_pct).expect("write to string");
        }
        s
    }
}

/// `runs` scans from random starts with seeds offset by the run index,
/// sharing one dictionary. Results keep run order.
pub fn run_monte_carlo(cfg: &ScenarioConfig, runs: usize) -> Result<MonteCarloSummary> {
    let scenario = Scenario::new(cfg.clone())?;
    let dict = scenario.analyze()?;
    let runs = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seeds = cfg.seeds.offset(i);
            let s = Scenario {
                cfg: c,
                workspace: cfg.workspace.spec(&cfg.couch),
                planning: scenario.planning.clone(),
                reference: scenario.reference.clone(),
            };
            let run = s.run(&dict, StartPose::Random)?;
            Ok(RunSummary {
                seeds: s.cfg.seeds,
                start: run.start,
                expected_stage_coverage: run.report.per_stage_coverage.clone(),
                realized_stage_coverage: run.report.realized_stage_coverage.clone(),
                coverage_pct: run.report.coverage_pct,
                mean_distance: run.report.mean_distance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MonteCarloSummary { runs })
}

/// Sweep output: a deterministic table and the wall-clock timings kept apart.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub axis: String,
    pub csv: String,
    pub timing_csv: String,
    /// Kneedle choice over `(resolution, coverage)` for resolution sweeps
    /// with enough distinct points.
    pub knee: Option<f64>,
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// One row per value of `axis`, in input order, with every other setting
/// and seed held fixed.
///
/// The `resolution` axis only builds dictionaries and reports the planned
/// coverage on the reference; any other axis runs the whole workflow from a
/// random start and also lists the plan-only coverage per base count.
pub fn run_sweep(base: &ScenarioConfig, axis: &str, values: &[String]) -> Result<SweepResult> {
    let path = resolve_axis(axis);
    base.with_override(path, toml::Value::try_from(lookup(base, path)?).map_err(config_error)?)?;
    let cfgs: Vec<(String, ScenarioConfig)> = values
        .iter()
        .map(|v| {
            let value = parse_value(v);
            Ok((value_label(&value), base.with_override(path, value)?))
        })
        .collect::<Result<_>>()?;
    if path == "resolution" {
        resolution_sweep(&cfgs)
    } else {
        workflow_sweep(path, &cfgs)
    }
}

fn lookup(cfg: &ScenarioConfig, path: &str) -> Result<toml::Value> {
    let root = toml::Value::try_from(cfg).map_err(config_error)?;
    path.split('.')
        .try_fold(&root, |node, p| node.get(p))
        .cloned()
        .ok_or_else(|| Error::Config(format!("unknown sweep axis '{path}'")))
}

fn resolution_sweep(cfgs: &[(String, ScenarioConfig)]) -> Result<SweepResult> {
    let mut csv = String::from("resolution,n_samples,n_candidates,n_records,expected_coverage_pct,coverage_pct\n");
    let mut timing_csv = String::from("resolution,analysis_time_per_base_s,analysis_s\n");
    let mut curve = Vec::with_capacity(cfgs.len());
    // sequential so per-base timings are not skewed by sibling analyses
    for (label, cfg) in cfgs {
        let scenario = Scenario::new(cfg.clone())?;
        let t = Instant::now();
        let dict = scenario.analyze()?;
        let elapsed = t.elapsed().as_secs_f64();
        let (plan, report) = scenario.plan_curve(&dict)?;
        writeln!(
            csv,
            "{label},{},{},{},{:.4},{:.4}",
            dict.n_samples,
            dict.bases.len(),
            dict.len(),
            plan.expected_coverage,
            report.coverage_pct
        )
        .expect("write to string");
        writeln!(timing_csv, "{label},{:.6},{elapsed:.6}", dict.analysis_time_per_base).expect("write to string");
        curve.push((cfg.resolution, report.coverage_pct));
    }
    Ok(SweepResult {
        axis: "resolution".into(),
        csv,
        timing_csv,
        knee: select_resolution_kneedle(&curve).ok(),
    })
}

fn workflow_sweep(axis: &str, cfgs: &[(String, ScenarioConfig)]) -> Result<SweepResult> {
    let rows: Vec<(String, CoverageReport, WorkflowRun)> = cfgs
        .par_iter()
        .map(|(label, cfg)| {
            let scenario = Scenario::new(cfg.clone())?;
            let dict = scenario.analyze()?;
            let (_, planned) = scenario.plan_curve(&dict)?;
            let run = scenario.run(&dict, StartPose::Random)?;
            Ok((label.clone(), planned, run))
        })
        .collect::<Result<_>>()?;
    let bases = cfgs.iter().map(|(_, c)| c.budgets.max_bases).max().unwrap_or(0);
    let mut csv = axis.to_string();
    for k in 1..=bases {
        write!(csv, ",coverage_{k}_bases").expect("write to string");
    }
    csv.push_str(",explorative_pct,expected_final_pct,realized_final_pct,mean_distance_mm\n");
    let mut timing_csv = format!("{axis},analysis_time_per_base_s,planning_s,simulation_s,stitching_s,evaluation_s\n");
    for (label, planned, run) in rows {
        write!(csv, "{label}").expect("write to string");
        for k in 0..bases {
            match planned.per_stage_coverage.get(k) {
                Some(v) => write!(csv, ",{v:.4}").expect("write to string"),
                None => csv.push(','),
            }
        }
        let r = &run.report;
        let d = r.mean_distance.map(|d| format!("{:.4}", d * 1000.0)).unwrap_or_default();
        writeln!(
            csv,
            ",{:.4},{:.4},{:.4},{d}",
            r.per_stage_coverage[0],
            r.per_stage_coverage.last().expect("stages"),
            r.coverage_pct
        )
        .expect("write to string");
        let t = &run.timing;
        writeln!(
            timing_csv,
            "{label},{:.6},{:.6},{:.6},{:.6},{:.6}",
            t.analysis_per_base, t.planning, t.simulation, t.stitching, t.evaluation
        )
        .expect("write to string");
    }
    Ok(SweepResult {
        axis: axis.to_string(),
        csv,
        timing_csv,
        knee: None,
    })
}
