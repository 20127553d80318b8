use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::body::CouchSpec;
use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Free floor margin around the couch in an unconstrained room.
pub const FULL_MARGIN: f64 = 1.5;
/// Free floor on each accessible side in a narrow room.
pub const NARROW_CORRIDOR: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkspaceKind {
    Full,
    Narrow,
    OneSide,
}

impl FromStr for WorkspaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "narrow" => Ok(Self::Narrow),
            "one_side" | "one-side" => Ok(Self::OneSide),
            other => Err(Error::Config(format!("unknown workspace kind '{other}'"))),
        }
    }
}

impl fmt::Display for WorkspaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Narrow => "narrow",
            Self::OneSide => "one_side",
        })
    }
}

/// Couch side, seen from the couch center: head is +x, left is +y.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Head,
    Foot,
}

impl Side {
    /// Side of the couch a floor point lies on.
    pub fn of_point(couch: &CouchSpec, x: f64, y: f64) -> Side {
        let dx = x.abs() - couch.half_length();
        let dy = y.abs() - couch.half_width();
        if dy >= dx {
            if y >= 0.0 {
                Side::Left
            } else {
                Side::Right
            }
        } else if x >= 0.0 {
            Side::Head
        } else {
            Side::Foot
        }
    }
}

/// Axis-aligned floor rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn around_couch(couch: &CouchSpec, margin: f64) -> Self {
        let (hl, hw) = (couch.half_length(), couch.half_width());
        Self::new(-hl - margin, -hw - margin, hl + margin, hw + margin)
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Distance from `p` to the rectangle (0 inside).
    pub fn distance(&self, p: &Vec2) -> f64 {
        let dx = (self.x_min - p.x).max(p.x - self.x_max).max(0.0);
        let dy = (self.y_min - p.y).max(p.y - self.y_max).max(0.0);
        dx.hypot(dy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceSpec {
    pub kind: WorkspaceKind,
    /// Navigable floor.
    pub free_region: Rect,
    pub blocked_sides: Vec<Side>,
}

impl WorkspaceSpec {
    /// Open room with [`FULL_MARGIN`] of floor around the couch.
    pub fn full(couch: &CouchSpec) -> Self {
        Self {
            kind: WorkspaceKind::Full,
            free_region: Rect::around_couch(couch, FULL_MARGIN),
            blocked_sides: Vec::new(),
        }
    }

    /// Walls `corridor` meters from every couch edge.
    pub fn narrow(couch: &CouchSpec, corridor: f64) -> Self {
        Self {
            kind: WorkspaceKind::Narrow,
            free_region: Rect::around_couch(couch, corridor),
            blocked_sides: Vec::new(),
        }
    }

    /// Couch pushed against a wall along its right (-y) edge.
    pub fn one_side(couch: &CouchSpec) -> Self {
        let mut free_region = Rect::around_couch(couch, FULL_MARGIN);
        free_region.y_min = -couch.half_width();
        Self {
            kind: WorkspaceKind::OneSide,
            free_region,
            blocked_sides: vec![Side::Right],
        }
    }

    pub fn for_kind(kind: WorkspaceKind, couch: &CouchSpec) -> Self {
        match kind {
            WorkspaceKind::Full => Self::full(couch),
            WorkspaceKind::Narrow => Self::narrow(couch, NARROW_CORRIDOR),
            WorkspaceKind::OneSide => Self::one_side(couch),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.free_region;
        if !(r.x_min < r.x_max && r.y_min < r.y_max) {
            return Err(Error::InvalidParameter(format!("free region {r:?} is empty")));
        }
        Ok(())
    }

    pub fn side_blocked(&self, side: Side) -> bool {
        self.blocked_sides.contains(&side)
    }

    /// True if a base centered at `p` may stand there as far as sides go.
    pub fn side_allowed(&self, couch: &CouchSpec, p: &Vec2) -> bool {
        !self.side_blocked(Side::of_point(couch, p.x, p.y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sides_split_along_diagonals() {
        let c = CouchSpec::default();
        assert_eq!(Side::of_point(&c, 0.0, 1.0), Side::Left);
        assert_eq!(Side::of_point(&c, 0.0, -1.0), Side::Right);
        assert_eq!(Side::of_point(&c, 1.5, 0.2), Side::Head);
        assert_eq!(Side::of_point(&c, -1.5, -0.2), Side::Foot);
        assert_eq!(Side::of_point(&c, 1.2, 0.6), Side::Left);
    }

    #[test]
    fn kind_round_trips_through_strings() {
        for k in [WorkspaceKind::Full, WorkspaceKind::Narrow, WorkspaceKind::OneSide] {
            assert_eq!(k.to_string().parse::<WorkspaceKind>().unwrap(), k);
        }
        assert!("attic".parse::<WorkspaceKind>().is_err());
    }

    #[test]
    fn rect_distance() {
        let r = Rect::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(r.distance(&Vec2::new(0.5, 0.5)), 0.0);
        assert!((r.distance(&Vec2::new(2.0, 2.0)) - 2f64.sqrt()).abs() < 1e-12);
    }
}
