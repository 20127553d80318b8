use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Integer cell coordinate `(column, row)`.
pub type Cell = (usize, usize);

/// 2-D occupancy grid on the floor plane; `true` marks a blocked cell.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    origin: Vec2,
    cell_size: f64,
    width: usize,
    height: usize,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    /// All-free grid of `width` x `height` cells whose corner is at `origin`.
    pub fn new(origin: Vec2, cell_size: f64, width: usize, height: usize) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::InvalidParameter(format!("cell size {cell_size} must be > 0")));
        }
        Ok(Self {
            origin,
            cell_size,
            width,
            height,
            cells: vec![false; width * height],
        })
    }

    /// Builds a grid from rows of `'#'` (blocked) and `'.'` (free); row 0 is y = 0.
    pub fn from_ascii(rows: &[&str], cell_size: f64) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut g = Self::new(Vec2::zeros(), cell_size, width, height)?;
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                g.set((x, y), ch == '#');
            }
        }
        Ok(g)
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn is_blocked(&self, (x, y): Cell) -> bool {
        self.cells[y * self.width + x]
    }

    pub fn set(&mut self, (x, y): Cell, blocked: bool) {
        self.cells[y * self.width + x] = blocked;
    }

    pub fn world_to_cell(&self, p: &Vec2) -> Option<Cell> {
        let x = ((p.x - self.origin.x) / self.cell_size).floor() as i64;
        let y = ((p.y - self.origin.y) / self.cell_size).floor() as i64;
        self.in_bounds(x, y).then_some((x as usize, y as usize))
    }

    pub fn cell_center(&self, (x, y): Cell) -> Vec2 {
        self.origin + Vec2::new(x as f64 + 0.5, y as f64 + 0.5) * self.cell_size
    }

    /// Marks every cell whose center satisfies `pred` as blocked.
    pub fn block_where(&mut self, pred: impl Fn(&Vec2) -> bool) {
        for y in 0..self.height {
            for x in 0..self.width {
                if pred(&self.cell_center((x, y))) {
                    self.set((x, y), true);
                }
            }
        }
    }

    pub fn blocked_fraction(&self) -> f64 {
        self.cells.iter().filter(|&&b| b).count() as f64 / self.cells.len().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_cell_round_trip() {
        let g = OccupancyGrid::new(Vec2::new(-1.0, -2.0), 0.1, 30, 40).unwrap();
        for x in 0..30 {
            for y in 0..40 {
                let c = g.cell_center((x, y));
                assert_eq!(g.world_to_cell(&c), Some((x, y)));
            }
        }
        assert_eq!(g.world_to_cell(&Vec2::new(-1.5, 0.0)), None);
    }

    #[test]
    fn rejects_zero_cell() {
        assert!(OccupancyGrid::new(Vec2::zeros(), 0.0, 2, 2).is_err());
    }

    #[test]
    fn ascii_layout() {
        let g = OccupancyGrid::from_ascii(&["..#", "#.."], 1.0).unwrap();
        assert!(g.is_blocked((2, 0)));
        assert!(g.is_blocked((0, 1)));
        assert!(!g.is_blocked((1, 1)));
    }
}
