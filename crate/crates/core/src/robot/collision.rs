//! Coarse collision screen: couch as a box, body as sample points, links as
//! capsules around the segments joining consecutive frame origins.

use super::{link_frames, ArmConfig, BasePose, RobotParams};
use crate::body::{CouchSpec, SurfaceModel};
use crate::cspace::WorkspaceSpec;
use crate::geometry::{SpatialIndex, Vec2, Vec3};

/// Spacing of clearance probes along each link segment.
const PROBE_STEP: f64 = 0.01;

/// Floor corners of the base footprint, counter-clockwise.
pub fn footprint_corners(params: &RobotParams, base: &BasePose) -> [Vec2; 4] {
    let (w, d) = params.base_footprint;
    let (s, c) = base.heading.sin_cos();
    let along = Vec2::new(c, s) * (d / 2.0);
    let across = Vec2::new(-s, c) * (w / 2.0);
    let p = base.position();
    [p + along + across, p - along + across, p - along - across, p + along - across]
}

fn couch_rect_corners(couch: &CouchSpec) -> [Vec2; 4] {
    let (hl, hw) = (couch.half_length(), couch.half_width());
    [Vec2::new(hl, hw), Vec2::new(-hl, hw), Vec2::new(-hl, -hw), Vec2::new(hl, -hw)]
}

/// Separating-axis overlap test between two convex quadrilaterals.
fn quads_overlap(a: &[Vec2; 4], b: &[Vec2; 4]) -> bool {
    let axes = [a[1] - a[0], a[2] - a[1], b[1] - b[0], b[2] - b[1]];
    axes.iter().all(|edge| {
        let axis = Vec2::new(-edge.y, edge.x);
        let project = |q: &[Vec2; 4]| {
            q.iter()
                .map(|p| p.dot(&axis))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (a_lo, a_hi) = project(a);
        let (b_lo, b_hi) = project(b);
        a_hi > b_lo && b_hi > a_lo
    })
}

fn distance_to_couch_box(couch: &CouchSpec, p: &Vec3) -> f64 {
    let dx = (p.x.abs() - couch.half_length()).max(0.0);
    let dy = (p.y.abs() - couch.half_width()).max(0.0);
    let dz = (p.z - couch.height).max(-p.z).max(0.0);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Footprint-only part of the screen: on free floor, on an accessible side
/// and clear of the couch.
pub fn base_allowed(params: &RobotParams, base: &BasePose, couch: &CouchSpec, workspace: &WorkspaceSpec) -> bool {
    let corners = footprint_corners(params, base);
    corners.iter().all(|c| workspace.free_region.contains(c))
        && workspace.side_allowed(couch, &base.position())
        && !quads_overlap(&corners, &couch_rect_corners(couch))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClearanceReport {
    pub footprint_in_free_region: bool,
    pub footprint_clear_of_couch: bool,
    /// Smallest distance from any link probe to the couch box.
    pub couch_clearance: f64,
    /// Smallest distance from any link probe to a body sample
    /// (infinite when none is within the probe radius).
    pub body_clearance: f64,
    pub camera_above_couch: bool,
    pub link_radius: f64,
}

impl ClearanceReport {
    pub fn is_clear(&self) -> bool {
        self.footprint_in_free_region
            && self.footprint_clear_of_couch
            && self.couch_clearance >= self.link_radius
            && self.body_clearance >= self.link_radius
            && self.camera_above_couch
    }
}

/// Reusable collision scene; builds the body-sample index once.
pub struct CollisionScene<'a> {
    couch: &'a CouchSpec,
    workspace: &'a WorkspaceSpec,
    body: SpatialIndex<'a>,
}

impl<'a> CollisionScene<'a> {
    pub fn new(couch: &'a CouchSpec, body: &'a SurfaceModel, workspace: &'a WorkspaceSpec) -> Self {
        let cell = body.resolution().max(0.05);
        Self {
            couch,
            workspace,
            body: SpatialIndex::new(body.samples().points(), cell),
        }
    }

    pub fn report(&self, params: &RobotParams, base: &BasePose, arm: &ArmConfig) -> ClearanceReport {
        let corners = footprint_corners(params, base);
        let frames = link_frames(params, base, arm);
        let origins: Vec<Vec3> = frames.iter().map(|f| *f.translation()).collect();
        let mut couch_clearance = f64::INFINITY;
        let mut body_clearance = f64::INFINITY;
        let radius = params.link_radius;
        for seg in origins.windows(2) {
            let len = (seg[1] - seg[0]).norm();
            let steps = (len / PROBE_STEP).ceil().max(1.0) as usize;
            for k in 0..=steps {
                let p = seg[0].lerp(&seg[1], k as f64 / steps as f64);
                couch_clearance = couch_clearance.min(distance_to_couch_box(self.couch, &p));
                if let Some((_, d)) = self.body.nearest_within(&p, radius) {
                    body_clearance = body_clearance.min(d);
                }
            }
        }
        let camera = origins.last().expect("camera frame");
        ClearanceReport {
            footprint_in_free_region: corners.iter().all(|c| self.workspace.free_region.contains(c))
                && self.workspace.side_allowed(self.couch, &base.position()),
            footprint_clear_of_couch: !quads_overlap(&corners, &couch_rect_corners(self.couch)),
            couch_clearance,
            body_clearance,
            camera_above_couch: camera.z > self.couch.height,
            link_radius: radius,
        }
    }

    pub fn check(&self, params: &RobotParams, base: &BasePose, arm: &ArmConfig) -> bool {
        self.report(params, base, arm).is_clear()
    }
}

/// True iff the base footprint is on free floor away from the couch, every
/// link keeps `link_radius` from the couch box and body samples, and the
/// camera is above the couch top.
pub fn check_config(
    params: &RobotParams,
    base: &BasePose,
    arm: &ArmConfig,
    couch: &CouchSpec,
    body: &SurfaceModel,
    workspace: &WorkspaceSpec,
) -> bool {
    CollisionScene::new(couch, body, workspace).check(params, base, arm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{make_half_cylinder, strip_underside};
    use crate::robot::forward_kinematics;

    fn scene() -> (CouchSpec, SurfaceModel, WorkspaceSpec) {
        let couch = CouchSpec::default();
        let body = strip_underside(&make_half_cylinder(1.75, 0.2, couch, 0.05).unwrap());
        let ws = WorkspaceSpec::full(&couch);
        (couch, body, ws)
    }

    #[test]
    fn base_inside_couch_footprint_fails() {
        let (couch, body, ws) = scene();
        let p = RobotParams::default();
        let base = BasePose::new(0.0, 0.0, 0.0);
        assert!(!check_config(&p, &base, &ArmConfig::folded(), &couch, &body, &ws));
    }

    #[test]
    fn folded_arm_beside_couch_is_clear() {
        // footprint y in [0.95, 1.35], 0.6 m from the couch edge
        let (couch, body, ws) = scene();
        let p = RobotParams::default();
        let base = BasePose::new(0.0, couch.half_width() + 0.8, -std::f64::consts::FRAC_PI_2);
        let r = CollisionScene::new(&couch, &body, &ws).report(&p, &base, &ArmConfig::folded());
        assert!(r.is_clear(), "{r:?}");
        assert!(r.couch_clearance > 0.3, "{r:?}");
    }

    #[test]
    fn camera_below_couch_top_fails() {
        let (couch, body, ws) = scene();
        let p = RobotParams {
            base_height: 0.5,
            ..RobotParams::default()
        };
        let base = BasePose::new(0.0, couch.half_width() + 0.8, -std::f64::consts::FRAC_PI_2);
        let arm = ArmConfig::zero();
        let cam = forward_kinematics(&p, &base, &arm).unwrap();
        assert!(cam.translation().z < couch.height);
        assert!(!check_config(&p, &base, &arm, &couch, &body, &ws));
    }

    #[test]
    fn base_outside_free_region_fails() {
        let (couch, body, ws) = scene();
        let p = RobotParams::default();
        let base = BasePose::new(0.0, couch.half_width() + 1.45, -std::f64::consts::FRAC_PI_2);
        assert!(!check_config(&p, &base, &ArmConfig::folded(), &couch, &body, &ws));
    }

    #[test]
    fn sat_detects_rotated_overlap() {
        let a = [Vec2::new(1.0, 1.0), Vec2::new(-1.0, 1.0), Vec2::new(-1.0, -1.0), Vec2::new(1.0, -1.0)];
        let p = RobotParams::default();
        let touching = footprint_corners(&p, &BasePose::new(1.1, 1.1, 0.785));
        let apart = footprint_corners(&p, &BasePose::new(1.3, 1.3, 0.785));
        assert!(quads_overlap(&a, &touching));
        assert!(!quads_overlap(&a, &apart));
    }
}
