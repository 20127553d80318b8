use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::body::CouchSpec;
use crate::cspace::WorkspaceSpec;
use crate::error::{Error, Result};
use crate::geometry::{Cell, OccupancyGrid, Vec2};
use crate::robot::{BasePose, RobotParams};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// 8-connected moves as `(dx, dy, length in cells)`.
const MOVES: [(i64, i64, f64); 8] = [
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, SQRT_2),
    (1, -1, SQRT_2),
    (-1, 1, SQRT_2),
    (-1, -1, SQRT_2),
];

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    f: f64,
    g: f64,
    cell: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on f, then larger g (deeper first), then cell index
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.total_cmp(&other.g))
            .then(other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest 8-connected path between two free cells.
///
/// Diagonal steps may not cut blocked corners. The heuristic is the
/// Euclidean distance scaled by `heuristic_weight`; weights in [0, 1] keep
/// it admissible and 0 turns the search into Dijkstra. Returns the cells
/// from `start` to `goal` and the cost in meters.
pub fn astar_cells(grid: &OccupancyGrid, start: Cell, goal: Cell, heuristic_weight: f64) -> Option<(Vec<Cell>, f64)> {
    let (w, h) = (grid.width(), grid.height());
    let free = |(x, y): Cell| x < w && y < h && !grid.is_blocked((x, y));
    if !free(start) || !free(goal) {
        return None;
    }
    let idx = |(x, y): Cell| y * w + x;
    let cell_of = |i: usize| (i % w, i / w);
    let cs = grid.cell_size();
    let heuristic = |(x, y): Cell| {
        let dx = x as f64 - goal.0 as f64;
        let dy = y as f64 - goal.1 as f64;
        heuristic_weight * cs * dx.hypot(dy)
    };
    let mut g = vec![f64::INFINITY; w * h];
    let mut parent = vec![usize::MAX; w * h];
    let mut closed = vec![false; w * h];
    let mut open = BinaryHeap::new();
    g[idx(start)] = 0.0;
    open.push(Entry {
        f: heuristic(start),
        g: 0.0,
        cell: idx(start),
    });
    while let Some(Entry { g: gc, cell, .. }) = open.pop() {
        if closed[cell] {
            continue;
        }
        closed[cell] = true;
        if cell == idx(goal) {
            let mut path = vec![goal];
            let mut c = cell;
            while parent[c] != usize::MAX {
                c = parent[c];
                path.push(cell_of(c));
            }
            path.reverse();
            return Some((path, gc));
        }
        let (x, y) = cell_of(cell);
        for (dx, dy, len) in MOVES {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if !grid.in_bounds(nx, ny) {
                continue;
            }
            let next = (nx as usize, ny as usize);
            if !free(next) {
                continue;
            }
            if dx != 0 && dy != 0 && (!free((nx as usize, y)) || !free((x, ny as usize))) {
                continue;
            }
            let ni = idx(next);
            let cand = gc + len * cs;
            if cand < g[ni] {
                g[ni] = cand;
                parent[ni] = cell;
                open.push(Entry {
                    f: cand + heuristic(next),
                    g: cand,
                    cell: ni,
                });
            }
        }
    }
    None
}

/// Cell-center waypoints from `from` to `to` by A* with the Euclidean
/// heuristic. Start or goal poses on blocked cells snap to the nearest free
/// cell.
pub fn plan_base_path(from: &BasePose, to: &BasePose, grid: &OccupancyGrid) -> Result<Vec<Vec2>> {
    let start = nearest_free_cell(grid, &from.position()).ok_or(Error::Unreachable)?;
    let goal = nearest_free_cell(grid, &to.position()).ok_or(Error::Unreachable)?;
    let (cells, _) = astar_cells(grid, start, goal, 1.0).ok_or(Error::Unreachable)?;
    Ok(cells.into_iter().map(|c| grid.cell_center(c)).collect())
}

/// Free cell whose center is closest to `p` (lowest index on ties).
pub fn nearest_free_cell(grid: &OccupancyGrid, p: &Vec2) -> Option<Cell> {
    if let Some(c) = grid.world_to_cell(p) {
        if !grid.is_blocked(c) {
            return Some(c);
        }
    }
    let mut best: Option<(f64, Cell)> = None;
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            if grid.is_blocked((x, y)) {
                continue;
            }
            let d = (grid.cell_center((x, y)) - p).norm_squared();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, (x, y)));
            }
        }
    }
    best.map(|(_, c)| c)
}

/// Floor grid over the free region with the couch inflated by half the base
/// footprint diagonal.
pub fn navigation_grid(couch: &CouchSpec, workspace: &WorkspaceSpec, params: &RobotParams, cell: f64) -> Result<OccupancyGrid> {
    let r = &workspace.free_region;
    let width = (r.width() / cell).ceil().max(1.0) as usize;
    let height = (r.height() / cell).ceil().max(1.0) as usize;
    let mut grid = OccupancyGrid::new(Vec2::new(r.x_min, r.y_min), cell, width, height)?;
    let inflate = params.base_footprint.0.hypot(params.base_footprint.1) / 2.0;
    let couch_rect = crate::cspace::Rect::around_couch(couch, 0.0);
    grid.block_where(|p| couch_rect.distance(p) < inflate || !r.contains(p));
    Ok(grid)
}
