//! Obstacle templates and their translation into coupling conductances.
//!
//! Obstacles are described by a grayscale image the size of the cell
//! array. The edge between two adjacent cells is weakened according to the
//! intensity difference of the corresponding pixels, so contrasting regions
//! end up decoupled and fronts cannot cross between them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Cell, CouplingMap, GridParams};

/// Intensity of open space in generated fixtures.
pub const FREE: u8 = 255;
/// Intensity of obstacles in generated fixtures.
pub const OBSTACLE: u8 = 0;

/// An 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateImage {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
}

impl TemplateImage {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(Error::Dimension(format!("{} pixels for a {rows}x{cols} image", pixels.len())));
        }
        Ok(Self { rows, cols, pixels })
    }

    pub fn filled(rows: usize, cols: usize, value: u8) -> Self {
        Self { rows, cols, pixels: vec![value; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, cell: Cell) -> u8 {
        self.pixels[cell.row * self.cols + cell.col]
    }

    pub fn set(&mut self, cell: Cell, value: u8) {
        self.pixels[cell.row * self.cols + cell.col] = value;
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    /// Cells whose pixel equals [`FREE`].
    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.pixels.iter().enumerate().filter(|(_, &p)| p == FREE).map(|(i, _)| Cell::new(i / self.cols, i % self.cols))
    }
}

/// Rule mapping a pixel difference `d = |I_a - I_b|` onto a conductance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum CouplingMode {
    /// `G` when `d <= theta`, otherwise 0.
    Threshold { theta: u8 },
    /// `G / (1 + alpha d)`: resistance grows linearly with the difference.
    Proportional { alpha: f64 },
}

impl Default for CouplingMode {
    fn default() -> Self {
        CouplingMode::Threshold { theta: 127 }
    }
}

impl CouplingMode {
    pub fn conductance(&self, nominal: f64, a: u8, b: u8) -> f64 {
        let d = a.abs_diff(b);
        match *self {
            CouplingMode::Threshold { theta } => {
                if d <= theta {
                    nominal
                } else {
                    0.0
                }
            }
            CouplingMode::Proportional { alpha } => nominal / (1.0 + alpha * f64::from(d)),
        }
    }
}

/// Builds the per-edge conductances for `img` under `mode`.
pub fn build_coupling(img: &TemplateImage, params: &GridParams, mode: CouplingMode) -> Result<CouplingMap> {
    if img.rows != params.rows || img.cols != params.cols {
        return Err(Error::Dimension(format!(
            "template is {}x{}, grid is {}x{}",
            img.rows, img.cols, params.rows, params.cols
        )));
    }
    if let CouplingMode::Proportional { alpha } = mode {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("proportional coupling needs alpha >= 0, got {alpha}")));
        }
    }
    let (rows, cols) = (img.rows, img.cols);
    let g = params.conductance;
    let px = &img.pixels;
    let mut horizontal = Vec::with_capacity(rows * cols.saturating_sub(1));
    for r in 0..rows {
        for c in 0..cols.saturating_sub(1) {
            let i = r * cols + c;
            horizontal.push(mode.conductance(g, px[i], px[i + 1]));
        }
    }
    let mut vertical = Vec::with_capacity(rows.saturating_sub(1) * cols);
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols {
            let i = r * cols + c;
            vertical.push(mode.conductance(g, px[i], px[i + cols]));
        }
    }
    CouplingMap::new(rows, cols, horizontal, vertical)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureKind {
    /// Open floor with sparse rectangular obstacles.
    Room,
    /// Perfect maze carved by a recursive backtracker; one-pixel walls and
    /// passages.
    Maze,
    /// A single free lane along the middle row.
    Corridor,
    /// Open floor with a one-pixel ring walling off the centre.
    Sealed,
}

impl std::str::FromStr for FixtureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "room" => Ok(Self::Room),
            "maze" => Ok(Self::Maze),
            "corridor" => Ok(Self::Corridor),
            "sealed" => Ok(Self::Sealed),
            other => Err(Error::InvalidParameter(format!("unknown fixture kind {other:?}"))),
        }
    }
}

/// Ring radius (Chebyshev) of the sealed fixture.
const SEAL_RADIUS: usize = 2;

/// The enclosed centre cell of a sealed fixture.
pub fn sealed_center(rows: usize, cols: usize) -> Cell {
    Cell::new(rows / 2, cols / 2)
}

/// Generates a fixture image. The output depends only on the arguments.
pub fn make_fixture(kind: FixtureKind, rows: usize, cols: usize, seed: u64) -> Result<TemplateImage> {
    let too_small = |min_r: usize, min_c: usize| {
        Err(Error::InvalidParameter(format!(
            "{kind:?} fixture needs at least {min_r}x{min_c} cells, got {rows}x{cols}"
        )))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        FixtureKind::Corridor => {
            if rows == 0 || cols == 0 {
                return too_small(1, 1);
            }
            let mut img = TemplateImage::filled(rows, cols, OBSTACLE);
            let lane = rows / 2;
            for c in 0..cols {
                img.set(Cell::new(lane, c), FREE);
            }
            Ok(img)
        }
        FixtureKind::Room => {
            if rows < 3 || cols < 3 {
                return too_small(3, 3);
            }
            Ok(room(rows, cols, &mut rng))
        }
        FixtureKind::Maze => {
            if rows < 3 || cols < 3 {
                return too_small(3, 3);
            }
            Ok(maze(rows, cols, &mut rng))
        }
        FixtureKind::Sealed => {
            let min = 2 * SEAL_RADIUS + 3;
            if rows < min || cols < min {
                return too_small(min, min);
            }
            let mut img = TemplateImage::filled(rows, cols, FREE);
            let centre = sealed_center(rows, cols);
            for r in centre.row - SEAL_RADIUS..=centre.row + SEAL_RADIUS {
                for c in centre.col - SEAL_RADIUS..=centre.col + SEAL_RADIUS {
                    let ring = r.abs_diff(centre.row).max(c.abs_diff(centre.col)) == SEAL_RADIUS;
                    if ring {
                        img.set(Cell::new(r, c), OBSTACLE);
                    }
                }
            }
            Ok(img)
        }
    }
}

fn room(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> TemplateImage {
    let mut img = TemplateImage::filled(rows, cols, FREE);
    let count = (rows * cols / 120).max(1);
    let max_h = (rows / 5).max(2).min(rows - 1);
    let max_w = (cols / 5).max(2).min(cols - 1);
    for _ in 0..count {
        let h = rng.gen_range(1..=max_h);
        let w = rng.gen_range(1..=max_w);
        let r0 = rng.gen_range(0..=rows - h);
        let c0 = rng.gen_range(0..=cols - w);
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                img.set(Cell::new(r, c), OBSTACLE);
            }
        }
    }
    img
}

fn maze(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> TemplateImage {
    let mut img = TemplateImage::filled(rows, cols, OBSTACLE);
    // Passage cells sit at odd coordinates; walls fill the rest.
    let (mr, mc) = ((rows - 1) / 2, (cols - 1) / 2);
    let at = |r: usize, c: usize| Cell::new(2 * r + 1, 2 * c + 1);
    let mut visited = vec![false; mr * mc];
    let mut stack = vec![(0usize, 0usize)];
    visited[0] = true;
    img.set(at(0, 0), FREE);
    while let Some(&(r, c)) = stack.last() {
        let mut options: Vec<(usize, usize)> = Vec::with_capacity(4);
        if r > 0 && !visited[(r - 1) * mc + c] {
            options.push((r - 1, c));
        }
        if c + 1 < mc && !visited[r * mc + c + 1] {
            options.push((r, c + 1));
        }
        if r + 1 < mr && !visited[(r + 1) * mc + c] {
            options.push((r + 1, c));
        }
        if c > 0 && !visited[r * mc + c - 1] {
            options.push((r, c - 1));
        }
        match options.choose(rng) {
            Some(&(nr, nc)) => {
                visited[nr * mc + nc] = true;
                let (a, b) = (at(r, c), at(nr, nc));
                img.set(Cell::new((a.row + b.row) / 2, (a.col + b.col) / 2), FREE);
                img.set(b, FREE);
                stack.push((nr, nc));
            }
            None => {
                stack.pop();
            }
        }
    }
    img
}
