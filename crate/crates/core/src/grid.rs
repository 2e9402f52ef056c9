//! Uniform square lattice and the cell-centered field types used everywhere else.
//!
//! Fields are immutable values once constructed: operations return new fields
//! and may be called concurrently on shared references.

use crate::error::{Error, Result};

/// Uniform 2-D lattice of square cells. The cell `(i, j)` has its center at
/// `origin + (i*dx, j*dx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub origin: (f64, f64),
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, dx: f64, origin: (f64, f64)) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidParam {
                name: "nx/ny",
                reason: format!("grid must be at least 2x2, got {nx}x{ny}"),
            });
        }
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(Error::InvalidParam {
                name: "dx",
                reason: format!("cell spacing must be positive and finite, got {dx}"),
            });
        }
        Ok(GridSpec { nx, ny, dx, origin })
    }

    /// Grid covering `[xmin, xmax] x [ymin, ymax]` with `nx x ny` square cells.
    /// The two axes must yield the same spacing.
    pub fn from_domain(nx: usize, ny: usize, xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        let dx = (xmax - xmin) / nx as f64;
        let dy = (ymax - ymin) / ny as f64;
        if !(dx > 0.0) {
            return Err(Error::InvalidParam {
                name: "domain",
                reason: format!("xmax must exceed xmin, got [{xmin}, {xmax}]"),
            });
        }
        if ((dy - dx) / dx).abs() > 1e-12 {
            return Err(Error::InvalidParam {
                name: "domain",
                reason: format!("cells must be square: dx = {dx}, dy = {dy}"),
            });
        }
        GridSpec::new(nx, ny, dx, (xmin + 0.5 * dx, ymin + 0.5 * dx))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Physical coordinates of the center of cell `(i, j)`.
    #[inline]
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + i as f64 * self.dx,
            self.origin.1 + j as f64 * self.dx,
        )
    }

    /// Area of one cell.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx * self.dx
    }

    fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(self.len(), other.len()));
        }
        Ok(())
    }
}

/// One real value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(grid.len(), values.len()));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Cell-measure integral `dx^2 * sum(values)`. For a 0/1 field this is the
    /// area of the covered set.
    pub fn integrate(&self) -> f64 {
        let sum: f64 = self.values.iter().sum();
        sum * self.grid.cell_area()
    }

    /// Strict superlevel set `{ u > s }`; ties are excluded.
    pub fn threshold(&self, s: f64) -> IndicatorField {
        IndicatorField {
            grid: self.grid,
            values: self.values.iter().map(|&v| v > s).collect(),
        }
    }
}

/// One bit per cell; `true` marks cells inside the set.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    pub grid: GridSpec,
    pub values: Vec<bool>,
}

impl IndicatorField {
    pub fn new(grid: GridSpec, values: Vec<bool>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(grid.len(), values.len()));
        }
        Ok(IndicatorField { grid, values })
    }

    pub fn empty(grid: GridSpec) -> Self {
        IndicatorField {
            grid,
            values: vec![false; grid.len()],
        }
    }

    pub fn full(grid: GridSpec) -> Self {
        IndicatorField {
            grid,
            values: vec![true; grid.len()],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> bool {
        self.values[self.grid.idx(i, j)]
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }

    pub fn is_empty_set(&self) -> bool {
        self.values.iter().all(|&b| !b)
    }

    pub fn is_full_set(&self) -> bool {
        self.values.iter().all(|&b| b)
    }

    /// Set area `dx^2 * #cells`.
    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid.cell_area()
    }

    /// Lift to a 0/1-valued scalar field.
    pub fn to_scalar(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&b| b as u8 as f64).collect(),
        }
    }

    /// Measure of the symmetric difference, `dx^2 * #{cells where a != b}`.
    pub fn symdiff_measure(&self, other: &IndicatorField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let n = self
            .values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a != b)
            .count();
        Ok(n as f64 * self.grid.cell_area())
    }

    /// Smallest number of cells between the set and the domain frame,
    /// i.e. `min(i, j, nx-1-i, ny-1-j)` over set cells. `None` for the empty set.
    pub fn frame_margin(&self) -> Option<usize> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut margin: Option<usize> = None;
        for j in 0..ny {
            for i in 0..nx {
                if self.values[j * nx + i] {
                    let m = i.min(j).min(nx - 1 - i).min(ny - 1 - j);
                    margin = Some(margin.map_or(m, |cur| cur.min(m)));
                }
            }
        }
        margin
    }

    /// Cells of the set with a 4-neighbor outside it.
    pub fn inner_boundary(&self) -> Vec<(usize, usize)> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut cells = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if !self.values[j * nx + i] {
                    continue;
                }
                let exposed = (i > 0 && !self.values[j * nx + i - 1])
                    || (i + 1 < nx && !self.values[j * nx + i + 1])
                    || (j > 0 && !self.values[(j - 1) * nx + i])
                    || (j + 1 < ny && !self.values[(j + 1) * nx + i])
                    || i == 0
                    || j == 0
                    || i + 1 == nx
                    || j + 1 == ny;
                if exposed {
                    cells.push((i, j));
                }
            }
        }
        cells
    }
}

/// Two reals per cell; the dual variable of the discrete total variation.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: GridSpec,
    pub px: Vec<f64>,
    pub py: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        VectorField {
            grid,
            px: vec![0.0; grid.len()],
            py: vec![0.0; grid.len()],
        }
    }

    /// Largest pointwise Euclidean norm.
    pub fn max_norm(&self) -> f64 {
        self.px
            .iter()
            .zip(&self.py)
            .map(|(&a, &b)| (a * a + b * b).sqrt())
            .fold(0.0, f64::max)
    }
}
