//! Cell-centred uniform grids on 1D/2D boxes with zero-flux (Neumann) faces.

mod cg;
mod ops;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use cg::{cg_solve, cg_solve_field, CgOptions, CgSolution, LinearOperator};
pub use ops::{div_kappa_grad, laplacian_neumann, FluxOperator, ShiftedFluxOperator};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; 2],
    lengths: [f64; 2],
}

impl Grid {
    /// `cells` and `lengths` must both have `dim` entries.
    pub fn new(cells: &[usize], lengths: &[f64]) -> Result<Grid> {
        let dim = cells.len();
        if !(dim == 1 || dim == 2) || lengths.len() != dim {
            return Err(Error::InvalidParameter(alloc::format!(
                "grid needs 1 or 2 axes with matching lengths, got {} cells / {} lengths",
                cells.len(),
                lengths.len()
            )));
        }
        let mut c = [1usize; 2];
        let mut l = [1.0f64; 2];
        for axis in 0..dim {
            if cells[axis] == 0 || !(lengths[axis] > 0.0 && lengths[axis].is_finite()) {
                return Err(Error::InvalidParameter(alloc::format!(
                    "axis {axis}: need at least one cell and a positive length"
                )));
            }
            c[axis] = cells[axis];
            l[axis] = lengths[axis];
        }
        Ok(Grid { dim, cells: c, lengths: l })
    }

    pub fn line(cells: usize, length: f64) -> Result<Grid> {
        Grid::new(&[cells], &[length])
    }

    pub fn rect(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Grid> {
        Grid::new(&[nx, ny], &[lx, ly])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.cells[axis] as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// Centre of cell `index` (row-major, x fastest). The y coordinate is 0 in 1D.
    pub fn center(&self, index: usize) -> [f64; 2] {
        let (ix, iy) = (index % self.cells[0], index / self.cells[0]);
        let x = (ix as f64 + 0.5) * self.spacing(0);
        let y = if self.dim == 2 { (iy as f64 + 0.5) * self.spacing(1) } else { 0.0 };
        [x, y]
    }

    /// Visits every interior face as `(lower cell, upper cell, spacing)`.
    pub(crate) fn for_each_face(&self, mut f: impl FnMut(usize, usize, f64)) {
        let [nx, ny] = self.cells;
        let dx = self.spacing(0);
        for iy in 0..ny {
            let row = iy * nx;
            for ix in 0..nx.saturating_sub(1) {
                f(row + ix, row + ix + 1, dx);
            }
        }
        if self.dim == 2 {
            let dy = self.spacing(1);
            for iy in 0..ny.saturating_sub(1) {
                for ix in 0..nx {
                    f(iy * nx + ix, (iy + 1) * nx + ix, dy);
                }
            }
        }
    }

    pub(crate) fn face_count(&self) -> usize {
        let [nx, ny] = self.cells;
        let mut n = (nx - 1) * ny;
        if self.dim == 2 {
            n += nx * (ny - 1);
        }
        n
    }
}

/// One scalar per cell of a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

/// Cell-volume-weighted discrete norms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Norms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub l4: f64,
    pub l6: f64,
    pub h1_seminorm: f64,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(alloc::format!(
                "field has {} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!("field value at cell {i} is not finite")));
        }
        Ok(Field { grid, values })
    }

    /// Builds a field without the finiteness check; for internal kernels whose
    /// inputs are already validated.
    pub(crate) fn from_vec(grid: Grid, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn constant(grid: Grid, value: f64) -> Field {
        Field { grid, values: vec![value; grid.len()] }
    }

    pub fn zeros(grid: Grid) -> Field {
        Field::constant(grid, 0.0)
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Field {
        Field { grid, values: (0..grid.len()).map(|i| f(grid.center(i))).collect() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// ∫ u, as a cell-volume-weighted sum.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// Volume-weighted L² inner product.
    pub fn dot(&self, other: &Field) -> f64 {
        self.grid.cell_volume() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norms(&self) -> Norms {
        norms(&self.grid, &self.values)
    }

    pub fn l2(&self) -> f64 {
        lp_norm(&self.grid, &self.values, 2)
    }
}

/// ‖u‖_p for finite even or odd `p ≥ 1`.
pub fn lp_norm(grid: &Grid, values: &[f64], p: i32) -> f64 {
    let vol = grid.cell_volume();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    // Scaled to avoid overflow in high powers.
    let sum: f64 = values.iter().map(|v| libm::pow((v / scale).abs(), p as f64)).sum();
    scale * libm::pow(vol * sum, 1.0 / p as f64)
}

/// |u|_{H¹} from face differences.
pub fn h1_seminorm(grid: &Grid, values: &[f64]) -> f64 {
    let mut sum = 0.0;
    grid.for_each_face(|i, j, d| {
        let g = (values[j] - values[i]) / d;
        sum += g * g;
    });
    libm::sqrt(grid.cell_volume() * sum)
}

pub fn norms(grid: &Grid, values: &[f64]) -> Norms {
    Norms {
        l1: grid.cell_volume() * values.iter().map(|v| v.abs()).sum::<f64>(),
        l2: lp_norm(grid, values, 2),
        linf: values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        l4: lp_norm(grid, values, 4),
        l6: lp_norm(grid, values, 6),
        h1_seminorm: h1_seminorm(grid, values),
    }
}
