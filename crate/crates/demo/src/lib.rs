//! Browser demo: generate a perforated layout, inspect one multiscale basis
//! function, and compare the fine and upscaled Laplace solutions.
//!
//! [`Session`] holds the work and is plain Rust; [`Demo`] wraps it for
//! JavaScript.

use nlmc::basis::{BasisType, Discretization};
use nlmc::coarse::{build_coarse_grid, index_perforation_segments, CoarseGrid, PerforationSegmentIndex};
use nlmc::error::{NlmcError, Result};
use nlmc::fem::{assemble_load, assemble_stiffness_laplace, restrict_matrix, MaterialParams};
use nlmc::geometry::{BoundaryRules, LayoutGenerator, Rect};
use nlmc::mesh::{build_fine_mesh, FineMesh};
use nlmc::metrics::{cell_average, relative_l2};
use nlmc::solver::SpdSolver;
use nlmc::sparse::SparseMatrix;
use nlmc::upscale::{assemble_steady, downscale, solve_steady};
use wasm_bindgen::prelude::*;

/// Fine lattice cells per side.
pub const FINE_CELLS: usize = 64;

pub struct Session {
    pub mesh: FineMesh,
    pub grid: CoarseGrid,
    pub segments: PerforationSegmentIndex,
    stiffness: SparseMatrix,
    load: Vec<f64>,
}

/// Fine and downscaled coarse solutions as nodal values.
pub struct Comparison {
    pub fine: Vec<f64>,
    pub coarse: Vec<f64>,
    pub error_percent: f64,
    pub dof_f: usize,
    pub dof_c: usize,
}

impl Session {
    /// `holes_per_side²` disks (at most 36), Dirichlet on the left and bottom,
    /// unit flux out of every hole, on a `coarse × coarse` grid.
    pub fn new(holes_per_side: usize, seed: u64, coarse: usize) -> Result<Self> {
        if coarse == 0 || !FINE_CELLS.is_multiple_of(coarse) {
            return Err(NlmcError::InvalidParams(format!("coarse grid must divide {FINE_CELLS}")));
        }
        let h = 1.0 / FINE_CELLS as f64;
        let n = holes_per_side.clamp(1, 6);
        let spacing = 0.8 / n as f64;
        let generator = LayoutGenerator {
            count: n * n,
            radius_min: 0.2 * spacing,
            radius_max: 0.25 * spacing,
            seed,
            margin: 0.1 + 0.5 * spacing,
            jitter: 0.05 * spacing,
            clearance: 2.0 * std::f64::consts::SQRT_2 * h,
        };
        let geometry = generator.generate(Rect::unit(), BoundaryRules::dirichlet_left_bottom())?;
        let mesh = build_fine_mesh(&geometry, h)?;
        let grid = build_coarse_grid(&mesh, coarse, coarse)?;
        let segments = index_perforation_segments(&mesh, &grid);
        let dofs = &mesh.dof_map;
        let stiffness = restrict_matrix(&assemble_stiffness_laplace(&mesh, &MaterialParams::default())?, dofs);
        let load = dofs.restrict(&assemble_load(&mesh, &vec![0.0; mesh.triangles.len()], &mesh.perforation_field(1.0)));
        Ok(Self {
            mesh,
            grid,
            segments,
            stiffness,
            load,
        })
    }

    fn discretization(&self) -> Discretization<'_> {
        Discretization::new(&self.mesh, &self.grid, &self.segments, self.mesh.dof_map.clone(), self.stiffness.clone())
    }

    /// Block containing `(x, y)`, if it is not inside a hole-only region.
    pub fn block_at(&self, x: f64, y: f64) -> Option<usize> {
        if !(0.0..1.0).contains(&x) || !(0.0..1.0).contains(&y) {
            return None;
        }
        let (ix, iy) = ((x * self.grid.nx as f64) as usize, (y * self.grid.ny as f64) as usize);
        self.grid.block_at[iy * self.grid.nx + ix]
    }

    /// Type 2 basis `(block, continuum)` on `layers` rings, as nodal values.
    pub fn basis(&self, block: usize, continuum: usize, layers: usize) -> Result<Vec<f64>> {
        if block >= self.grid.n_blocks() {
            return Err(NlmcError::InvalidParams(format!("no block {block}")));
        }
        let disc = self.discretization();
        let funcs = disc.block_bases(block, layers.max(1), BasisType::Type2)?;
        let f = funcs
            .into_iter()
            .find(|f| f.label.continuum == continuum)
            .ok_or(NlmcError::InvalidContinuum {
                block,
                continuum,
                available: self.segments.count(block),
            })?;
        let mut reduced = vec![0.0; disc.dofs.ndof()];
        for (d, v) in f.entries {
            reduced[d] = v;
        }
        Ok(disc.dofs.expand(&reduced))
    }

    pub fn compare(&self, layers: usize, basis_type: BasisType) -> Result<Comparison> {
        let disc = self.discretization();
        let u_f = SpdSolver::new(&self.stiffness)?.solve(&self.load)?;
        let r = disc.build_basis(layers.max(1), basis_type)?;
        let sys = assemble_steady(&r, &self.stiffness, &self.load)?;
        let u_c = downscale(&r, &solve_steady(&sys)?)?;
        let (fine, coarse) = (disc.dofs.expand(&u_f), disc.dofs.expand(&u_c));
        let error_percent = relative_l2(
            &cell_average(&fine, 1, &self.mesh, &self.grid)?,
            &cell_average(&coarse, 1, &self.mesh, &self.grid)?,
            0,
            true,
        )?;
        Ok(Comparison {
            fine,
            coarse,
            error_percent,
            dof_f: disc.dofs.ndof(),
            dof_c: r.n_coarse(),
        })
    }
}

fn js(e: NlmcError) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(holes_per_side: usize, seed: u32, coarse: usize) -> std::result::Result<Demo, JsError> {
        Session::new(holes_per_side, seed as u64, coarse).map(|session| Demo { session }).map_err(js)
    }

    /// Node coordinates, `x0, y0, x1, y1, …`.
    pub fn nodes(&self) -> Vec<f64> {
        self.session.mesh.nodes.iter().flatten().copied().collect()
    }

    pub fn triangles(&self) -> Vec<u32> {
        self.session.mesh.triangles.iter().flatten().map(|&n| n as u32).collect()
    }

    /// Endpoint pairs of all hole edges.
    pub fn hole_edges(&self) -> Vec<u32> {
        let m = &self.session.mesh;
        m.perforation_facets().flat_map(|(f, _)| m.facets[f].nodes.map(|n| n as u32)).collect()
    }

    pub fn coarse_size(&self) -> usize {
        self.session.grid.nx
    }

    /// Block under a point, or -1.
    pub fn block_at(&self, x: f64, y: f64) -> i32 {
        self.session.block_at(x, y).map_or(-1, |b| b as i32)
    }

    /// Number of hole continua of a block.
    pub fn continua(&self, block: usize) -> usize {
        self.session.segments.count(block)
    }

    pub fn basis(&self, block: usize, continuum: usize, layers: usize) -> std::result::Result<Vec<f64>, JsError> {
        self.session.basis(block, continuum, layers).map_err(js)
    }

    /// Runs both solves; the result holds nodal fields and the error.
    pub fn compare(&self, layers: usize, type2: bool) -> std::result::Result<DemoComparison, JsError> {
        let bt = if type2 { BasisType::Type2 } else { BasisType::Type1 };
        self.session.compare(layers, bt).map(DemoComparison).map_err(js)
    }
}

#[wasm_bindgen]
pub struct DemoComparison(Comparison);

#[wasm_bindgen]
impl DemoComparison {
    pub fn fine(&self) -> Vec<f64> {
        self.0.fine.clone()
    }

    pub fn coarse(&self) -> Vec<f64> {
        self.0.coarse.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn error_percent(&self) -> f64 {
        self.0.error_percent
    }

    #[wasm_bindgen(getter)]
    pub fn dof_f(&self) -> usize {
        self.0.dof_f
    }

    #[wasm_bindgen(getter)]
    pub fn dof_c(&self) -> usize {
        self.0.dof_c
    }
}
