use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellCoord, GridSpec};

/// One scalar per cube-sphere cell, stored face-major then row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Field {
            grid,
            values: vec![value; grid.cell_count()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::invalid(format!(
                "field for N={} needs {} values, got {}",
                grid.resolution(),
                grid.cell_count(),
                values.len()
            )));
        }
        Ok(Field { grid, values })
    }

    /// Builds a field by evaluating `f` at every cell.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(CellCoord) -> f64) -> Self {
        let values = grid.cells().map(&mut f).collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, c: CellCoord) -> Result<f64> {
        Ok(self.values[self.grid.index_of(c)?])
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn ensure_grid(&self, grid: GridSpec) -> Result<()> {
        if self.grid != grid {
            return Err(Error::invalid(format!(
                "grid mismatch: field has N={}, expected N={}",
                self.grid.resolution(),
                grid.resolution()
            )));
        }
        Ok(())
    }
}
