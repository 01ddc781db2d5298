//! Coarse-cell averages and the relative cell-average error.

use serde::{Deserialize, Serialize};

use crate::basis::BasisLabel;
use crate::coarse::CoarseGrid;
use crate::error::{NlmcError, Result};
use crate::mesh::FineMesh;

/// Per-block means, `values[block * ncomp + comp]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAverageField {
    pub ncomp: usize,
    pub values: Vec<f64>,
    pub areas: Vec<f64>,
}

impl CellAverageField {
    pub fn n_blocks(&self) -> usize {
        self.areas.len()
    }

    pub fn get(&self, block: usize, comp: usize) -> f64 {
        self.values[block * self.ncomp + comp]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

/// Exact P1 means over each block's in-domain area. `u` is a slot vector
/// (`nodes · ncomp`, zeros on eliminated slots).
pub fn cell_average(u: &[f64], ncomp: usize, mesh: &FineMesh, grid: &CoarseGrid) -> Result<CellAverageField> {
    if u.len() != mesh.nodes.len() * ncomp {
        return Err(NlmcError::DimensionMismatch {
            what: "fine field",
            expected: mesh.nodes.len() * ncomp,
            found: u.len(),
        });
    }
    let mut values = vec![0.0; grid.n_blocks() * ncomp];
    let mut areas = vec![0.0; grid.n_blocks()];
    for (b, block) in grid.blocks.iter().enumerate() {
        if block.triangles.is_empty() || !(block.area > 0.0) {
            return Err(NlmcError::EmptyBlock { block: b });
        }
        for &t in &block.triangles {
            let w = mesh.triangle_area(t) / 3.0;
            for n in mesh.triangles[t] {
                for c in 0..ncomp {
                    values[b * ncomp + c] += w * u[n * ncomp + c];
                }
            }
        }
        for c in 0..ncomp {
            values[b * ncomp + c] /= block.area;
        }
        areas[b] = block.area;
    }
    Ok(CellAverageField { ncomp, values, areas })
}

/// Background-continuum values of a coarse solution as a cell field.
pub fn coarse_cell_field(u: &[f64], labels: &[BasisLabel], ncomp: usize, grid: &CoarseGrid) -> CellAverageField {
    let mut values = vec![0.0; grid.n_blocks() * ncomp];
    for (v, l) in u.iter().zip(labels) {
        if l.continuum == 0 {
            values[l.block * ncomp + l.component()] = *v;
        }
    }
    CellAverageField {
        ncomp,
        values,
        areas: grid.blocks.iter().map(|b| b.area).collect(),
    }
}

/// `100 · sqrt(Σ w (ref − test)² / Σ w ref²)` for one component, with
/// `w = |K|` when `weighted` and 1 otherwise.
pub fn relative_l2(reference: &CellAverageField, test: &CellAverageField, comp: usize, weighted: bool) -> Result<f64> {
    if reference.n_blocks() != test.n_blocks() || reference.ncomp != test.ncomp {
        return Err(NlmcError::DimensionMismatch {
            what: "cell average fields",
            expected: reference.values.len(),
            found: test.values.len(),
        });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for b in 0..reference.n_blocks() {
        let w = if weighted { reference.areas[b] } else { 1.0 };
        let (r, t) = (reference.get(b, comp), test.get(b, comp));
        num += w * (r - t) * (r - t);
        den += w * r * r;
    }
    if den == 0.0 {
        return Err(NlmcError::ZeroReference);
    }
    Ok(100.0 * (num / den).sqrt())
}

/// One line of an error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub scenario: String,
    pub problem: String,
    pub nx: usize,
    pub ny: usize,
    pub basis_type: String,
    pub layers: usize,
    pub step: usize,
    pub time: f64,
    pub component: String,
    pub error_percent: Option<f64>,
    pub reference_percent: Option<f64>,
    pub dof_f: usize,
    pub dof_c: usize,
    pub status: String,
    pub message: String,
}
