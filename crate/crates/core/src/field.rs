//! Regular-grid scalar fields and the pixel ↔ physical coordinate mapping.
//!
//! Pixel `(row, col)` covers `[col·dx, (col+1)·dx) × [row·dy, (row+1)·dy)` nm
//! and is represented by its center.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical position in nm, `[x, y]`.
pub type Pos = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub fn new(row: usize, col: usize) -> Self {
        Pixel { row, col }
    }

    /// Euclidean distance in pixel units.
    pub fn dist(self, other: Pixel) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        dr.hypot(dc)
    }
}

/// Shape and physical extent of a pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    /// Physical size in nm, `[x, y]`.
    pub extent: [f64; 2],
}

impl Grid {
    pub fn new(width: usize, height: usize, extent: [f64; 2]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("grid {width}x{height} is empty")));
        }
        if !(extent[0] > 0.0 && extent[1] > 0.0) || !extent.iter().all(|e| e.is_finite()) {
            return Err(Error::invalid(format!("grid extent {extent:?} must be positive")));
        }
        Ok(Grid {
            width,
            height,
            extent,
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// nm per pixel along x and y.
    pub fn pixel_size(&self) -> [f64; 2] {
        [
            self.extent[0] / self.width as f64,
            self.extent[1] / self.height as f64,
        ]
    }

    pub fn index(&self, px: Pixel) -> usize {
        px.row * self.width + px.col
    }

    pub fn pixel(&self, index: usize) -> Pixel {
        Pixel::new(index / self.width, index % self.width)
    }

    pub fn contains(&self, px: Pixel) -> bool {
        px.row < self.height && px.col < self.width
    }

    pub fn center(&self, px: Pixel) -> Pos {
        let [dx, dy] = self.pixel_size();
        [(px.col as f64 + 0.5) * dx, (px.row as f64 + 0.5) * dy]
    }

    pub fn in_window(&self, pos: Pos) -> bool {
        (0.0..=self.extent[0]).contains(&pos[0]) && (0.0..=self.extent[1]).contains(&pos[1])
    }

    /// Pixel containing `pos`, clamped onto the grid.
    pub fn pixel_at(&self, pos: Pos) -> Pixel {
        let [dx, dy] = self.pixel_size();
        let col = (pos[0] / dx).floor().clamp(0.0, (self.width - 1) as f64) as usize;
        let row = (pos[1] / dy).floor().clamp(0.0, (self.height - 1) as f64) as usize;
        Pixel::new(row, col)
    }

    /// All pixel centers in row-major order.
    pub fn centers(&self) -> Vec<Pos> {
        (0..self.len()).map(|i| self.center(self.pixel(i))).collect()
    }

    /// Diagonal of the window, nm.
    pub fn diagonal(&self) -> f64 {
        self.extent[0].hypot(self.extent[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField2D {
    pub width: usize,
    pub height: usize,
    pub extent: [f64; 2],
    /// Row-major, `width * height` entries.
    pub values: Vec<f64>,
}

impl ScalarField2D {
    pub fn filled(grid: Grid, value: f64) -> Self {
        ScalarField2D {
            width: grid.width,
            height: grid.height,
            extent: grid.extent,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "field of {}x{} needs {} values, got {}",
                grid.width,
                grid.height,
                grid.len(),
                values.len()
            )));
        }
        Ok(ScalarField2D {
            width: grid.width,
            height: grid.height,
            extent: grid.extent,
            values,
        })
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(Pixel) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.pixel(i))).collect();
        ScalarField2D {
            width: grid.width,
            height: grid.height,
            extent: grid.extent,
            values,
        }
    }

    pub fn grid(&self) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            extent: self.extent,
        }
    }

    pub fn get(&self, px: Pixel) -> f64 {
        self.values[px.row * self.width + px.col]
    }

    pub fn set(&mut self, px: Pixel, v: f64) {
        self.values[px.row * self.width + px.col] = v;
    }

    pub fn same_shape(&self, other: &ScalarField2D) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation at a physical position, using pixel centers as
    /// nodes and holding the edge value constant outside them.
    pub fn bilinear(&self, pos: Pos) -> f64 {
        bilinear_by(self.grid(), pos, |i| self.values[i])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField2D {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }
}

/// Bilinear interpolation of a per-pixel function (indexed row-major) on
/// `grid`. Exact at pixel centers.
pub fn bilinear_by(grid: Grid, pos: Pos, f: impl Fn(usize) -> f64) -> f64 {
    let [dx, dy] = grid.pixel_size();
    let (w, h) = (grid.width, grid.height);
    let u = (pos[0] / dx - 0.5).clamp(0.0, (w - 1) as f64);
    let v = (pos[1] / dy - 0.5).clamp(0.0, (h - 1) as f64);
    let (c0, r0) = (u.floor() as usize, v.floor() as usize);
    let (c1, r1) = ((c0 + 1).min(w - 1), (r0 + 1).min(h - 1));
    let (fu, fv) = (u - c0 as f64, v - r0 as f64);
    // Skip the blend when a weight vanishes so node values come back exactly.
    let row = |r: usize| {
        if fu == 0.0 {
            f(r * w + c0)
        } else {
            f(r * w + c0) * (1.0 - fu) + f(r * w + c1) * fu
        }
    };
    if fv == 0.0 {
        row(r0)
    } else {
        row(r0) * (1.0 - fv) + row(r1) * fv
    }
}
