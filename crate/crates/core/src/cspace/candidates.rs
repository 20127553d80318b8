use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::WorkspaceSpec;
use crate::body::CouchSpec;
use crate::error::{Error, Result};
use crate::robot::{base_allowed, BasePose, RobotParams};

/// Ring of candidate base positions around the couch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSettings {
    /// Distances from the couch edge to the base center.
    pub standoffs: Vec<f64>,
    /// Spacing along the sides and around the corner arcs.
    pub spacing: f64,
}

impl Default for CandidateSettings {
    fn default() -> Self {
        Self {
            standoffs: vec![0.3, 0.5],
            spacing: 0.25,
        }
    }
}

fn centered_positions(extent: f64, spacing: f64) -> Vec<f64> {
    let n = (extent / spacing + 1e-9).floor() as usize + 1;
    let start = -((n - 1) as f64) * spacing / 2.0;
    (0..n).map(|k| start + k as f64 * spacing).collect()
}

/// Candidate bases on the default ring, filtered by the workspace.
pub fn enumerate_base_candidates(couch: &CouchSpec, workspace: &WorkspaceSpec, params: &RobotParams) -> Result<Vec<BasePose>> {
    enumerate_base_candidates_with(couch, workspace, params, &CandidateSettings::default())
}

/// Bases along each couch side and on quarter arcs around each corner, all
/// facing the couch, keeping only those whose footprint is allowed.
pub fn enumerate_base_candidates_with(
    couch: &CouchSpec,
    workspace: &WorkspaceSpec,
    params: &RobotParams,
    settings: &CandidateSettings,
) -> Result<Vec<BasePose>> {
    if !(settings.spacing > 0.0) {
        return Err(Error::InvalidParameter("candidate spacing must be > 0".into()));
    }
    let (hl, hw) = (couch.half_length(), couch.half_width());
    let mut all = Vec::new();
    for &s in &settings.standoffs {
        for x in centered_positions(couch.length, settings.spacing) {
            all.push(BasePose::new(x, hw + s, -FRAC_PI_2));
            all.push(BasePose::new(x, -hw - s, FRAC_PI_2));
        }
        for y in centered_positions(couch.width, settings.spacing) {
            all.push(BasePose::new(hl + s, y, PI));
            all.push(BasePose::new(-hl - s, y, 0.0));
        }
        let arc_points = (FRAC_PI_2 * s / settings.spacing + 1e-9).floor() as usize;
        for (cx, cy, start) in [(hl, hw, 0.0), (-hl, hw, FRAC_PI_2), (-hl, -hw, PI), (hl, -hw, -FRAC_PI_2)] {
            for k in 1..=arc_points {
                let a = start + FRAC_PI_2 * k as f64 / (arc_points + 1) as f64;
                let (x, y) = (cx + s * a.cos(), cy + s * a.sin());
                all.push(BasePose::facing(x, y, cx, cy));
            }
        }
    }
    let kept: Vec<BasePose> = all
        .into_iter()
        .filter(|b| base_allowed(params, b, couch, workspace))
        .collect();
    if kept.is_empty() {
        Err(Error::NoCandidates)
    } else {
        Ok(kept)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cspace::{Rect, Side, WorkspaceKind};

    #[test]
    fn full_workspace_ring_count() {
        // per standoff: 2 x 9 long-side + 2 x 3 short-side positions, plus
        // 4 arcs of floor(pi/2 * s / 0.25) points: 1 at 0.3 m, 3 at 0.5 m
        let couch = CouchSpec::default();
        let c = enumerate_base_candidates(&couch, &WorkspaceSpec::full(&couch), &RobotParams::default()).unwrap();
        assert_eq!(c.len(), (18 + 6 + 4) + (18 + 6 + 12));
        for side in [Side::Left, Side::Right, Side::Head, Side::Foot] {
            assert!(c.iter().any(|b| Side::of_point(&couch, b.x, b.y) == side));
        }
    }

    #[test]
    fn candidates_face_the_couch() {
        let couch = CouchSpec::default();
        let c = enumerate_base_candidates(&couch, &WorkspaceSpec::full(&couch), &RobotParams::default()).unwrap();
        for b in &c {
            let ahead = (b.x + 0.5 * b.heading.cos(), b.y + 0.5 * b.heading.sin());
            let d_now = (b.x.abs() - couch.half_length()).max(0.0).hypot((b.y.abs() - couch.half_width()).max(0.0));
            let d_ahead =
                (ahead.0.abs() - couch.half_length()).max(0.0).hypot((ahead.1.abs() - couch.half_width()).max(0.0));
            assert!(d_ahead < d_now);
        }
    }

    #[test]
    fn one_side_keeps_right_side_clear() {
        let couch = CouchSpec::default();
        let ws = WorkspaceSpec::one_side(&couch);
        assert_eq!(ws.kind, WorkspaceKind::OneSide);
        let c = enumerate_base_candidates(&couch, &ws, &RobotParams::default()).unwrap();
        assert!(!c.is_empty());
        assert!(c.iter().all(|b| Side::of_point(&couch, b.x, b.y) != Side::Right));
        assert!(c.iter().all(|b| !(b.y < 0.0 && b.y.abs() > couch.half_width())));
    }

    #[test]
    fn narrow_room_keeps_ring_inside_walls() {
        let couch = CouchSpec::default();
        let ws = WorkspaceSpec::narrow(&couch, 0.8);
        let c = enumerate_base_candidates(&couch, &ws, &RobotParams::default()).unwrap();
        let full = enumerate_base_candidates(&couch, &WorkspaceSpec::full(&couch), &RobotParams::default()).unwrap();
        assert!(c.len() <= full.len());
        assert!(c.iter().all(|b| ws.free_region.contains(&b.position())));
    }

    #[test]
    fn tiny_free_region_has_no_candidates() {
        let couch = CouchSpec::default();
        let ws = WorkspaceSpec {
            kind: WorkspaceKind::Narrow,
            free_region: Rect::new(-0.5, -0.2, 0.5, 0.2),
            blocked_sides: vec![],
        };
        assert!(matches!(
            enumerate_base_candidates(&couch, &ws, &RobotParams::default()),
            Err(Error::NoCandidates)
        ));
    }
}
