//! Planar grid primitives shared by every module.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A grid cell addressed by zero-based column `x` and row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    /// L1 distance in cells.
    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    /// Center of the cell in map meters.
    pub fn center_m(self, cell_size_m: f64) -> Point {
        Point::new(
            (f64::from(self.x) + 0.5) * cell_size_m,
            (f64::from(self.y) + 0.5) * cell_size_m,
        )
    }

    pub fn is_4_neighbor(self, other: Cell) -> bool {
        self.manhattan(other) == 1
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// A continuous point in map meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Cell containing this point (floor quantization). Negative coordinates clamp to 0.
    pub fn to_cell(self, cell_size_m: f64) -> Cell {
        let q = |v: f64| (v / cell_size_m).floor().max(0.0) as u32;
        Cell::new(q(self.x), q(self.y))
    }
}

/// Grid extent in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub width: u32,
    pub height: u32,
}

impl Grid {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    pub fn cell_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Row-major index of an in-bounds cell.
    pub fn index(&self, cell: Cell) -> usize {
        cell.y as usize * self.width as usize + cell.x as usize
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Cell::new(x, y)))
    }

    /// 4-neighbors in the fixed expansion order +x, -x, +y, -y, clipped to the grid.
    pub fn neighbors4(&self, cell: Cell) -> impl Iterator<Item = Cell> {
        let Cell { x, y } = cell;
        let (w, h) = (self.width, self.height);
        [
            (x + 1 < w).then(|| Cell::new(x + 1, y)),
            (x > 0).then(|| Cell::new(x - 1, y)),
            (y + 1 < h).then(|| Cell::new(x, y + 1)),
            (y > 0).then(|| Cell::new(x, y - 1)),
        ]
        .into_iter()
        .flatten()
    }
}
