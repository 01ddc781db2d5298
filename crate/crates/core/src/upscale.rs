//! Coarse (upscaled) systems: Galerkin stiffness, lumped mass and Robin
//! terms, steady and time-dependent solves, and downscaling.

use std::io::Write;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisLabel, ProjectionMatrix};
use crate::coarse::{CoarseGrid, PerforationSegmentIndex};
use crate::error::{NlmcError, Result};
use crate::fem::History;
use crate::solver::DenseSolver;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Steady,
    Parabolic,
    Robin,
}

/// Coarse matrices and load, one row per labeled continuum.
#[derive(Debug, Clone)]
pub struct UpscaledSystem {
    pub t: Mat<f64>,
    /// Diagonal of the coarse mass.
    pub m: Vec<f64>,
    /// Diagonal of the coarse Robin matrix.
    pub c: Vec<f64>,
    pub q: Vec<f64>,
    pub labels: Vec<BasisLabel>,
    pub variant: Variant,
}

impl UpscaledSystem {
    pub fn size(&self) -> usize {
        self.q.len()
    }

    /// Largest `|Σ_j T_ij|` over rows.
    pub fn max_row_sum(&self) -> f64 {
        let n = self.size();
        (0..n)
            .map(|i| (0..n).map(|j| self.t[(i, j)]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    pub fn t_max_abs(&self) -> f64 {
        let n = self.size();
        let mut m = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                m = m.max(self.t[(i, j)].abs());
            }
        }
        m
    }

    /// Writes labels, `T`, `M`, `C` and `q̄` as plain text.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# variant {:?}", self.variant)?;
        writeln!(w, "# labels: index block continuum direction")?;
        for (k, l) in self.labels.iter().enumerate() {
            let dir = match l.direction {
                Some(d) => format!("{d:?}"),
                None => "-".into(),
            };
            writeln!(w, "L {k} {} {} {dir}", l.block, l.continuum)?;
        }
        let n = self.size();
        writeln!(w, "# T triplets: row col value")?;
        for i in 0..n {
            for j in 0..n {
                let v = self.t[(i, j)];
                if v != 0.0 {
                    writeln!(w, "T {i} {j} {v:e}")?;
                }
            }
        }
        writeln!(w, "# diagonals: index M C q")?;
        for i in 0..n {
            writeln!(w, "D {i} {:e} {:e} {:e}", self.m[i], self.c[i], self.q[i])?;
        }
        Ok(())
    }
}

/// `R A Rᵀ` as a dense symmetric matrix.
///
/// `Z = A Rᵀ` is stored per fine dof, so each entry `T_ij` (i ≤ j) is one
/// sparse dot product computed once and mirrored.
pub fn galerkin_stiffness(r: &ProjectionMatrix, a: &SparseMatrix) -> Result<Mat<f64>> {
    let rm = &r.matrix;
    if a.nrows() != rm.ncols() || a.ncols() != rm.ncols() {
        return Err(NlmcError::DimensionMismatch {
            what: "stiffness vs projection columns",
            expected: rm.ncols(),
            found: a.nrows(),
        });
    }
    let nc = rm.nrows();
    let nf = rm.ncols();
    // Column-wise A ψ_i, gathered into per-dof lists of (i, value).
    let mut counts = vec![0usize; nf + 1];
    let mut scratch = vec![0.0; nf];
    let mut mark = vec![usize::MAX; nf];
    let mut touched = Vec::new();
    let mut z_cols: Vec<(usize, f64)> = Vec::new();
    let mut z_ptr = vec![0usize; nc + 1];
    for i in 0..nc {
        let (cols, vals) = rm.row(i);
        for (&k, &v) in cols.iter().zip(vals) {
            let (ac, av) = a.row(k);
            for (&p, &w) in ac.iter().zip(av) {
                if mark[p] != i {
                    mark[p] = i;
                    scratch[p] = 0.0;
                    touched.push(p);
                }
                scratch[p] += w * v;
            }
        }
        touched.sort_unstable();
        for &p in &touched {
            if scratch[p] != 0.0 {
                z_cols.push((p, scratch[p]));
                counts[p + 1] += 1;
            }
        }
        touched.clear();
        z_ptr[i + 1] = z_cols.len();
    }
    for p in 0..nf {
        counts[p + 1] += counts[p];
    }
    let mut fill = counts.clone();
    let mut zt = vec![(0usize, 0.0f64); z_cols.len()];
    for i in 0..nc {
        for &(p, v) in &z_cols[z_ptr[i]..z_ptr[i + 1]] {
            zt[fill[p]] = (i, v);
            fill[p] += 1;
        }
    }
    drop(z_cols);

    let row_of = |j: usize| -> Vec<(usize, f64)> {
        let mut acc = vec![0.0; j + 1];
        let (cols, vals) = rm.row(j);
        for (&k, &v) in cols.iter().zip(vals) {
            for &(i, z) in &zt[counts[k]..counts[k + 1]] {
                if i <= j {
                    acc[i] += v * z;
                }
            }
        }
        acc.into_iter().enumerate().filter(|e| e.1 != 0.0).collect()
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<(usize, f64)>> = {
        use rayon::prelude::*;
        (0..nc).into_par_iter().map(row_of).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<(usize, f64)>> = (0..nc).map(row_of).collect();

    let mut t = Mat::<f64>::zeros(nc, nc);
    for (j, row) in rows.into_iter().enumerate() {
        for (i, v) in row {
            t[(i, j)] = v;
            t[(j, i)] = v;
        }
    }
    Ok(t)
}

/// `T = R A Rᵀ`, `q̄ = R b`.
pub fn assemble_steady(r: &ProjectionMatrix, a: &SparseMatrix, b: &[f64]) -> Result<UpscaledSystem> {
    if b.len() != r.n_fine() {
        return Err(NlmcError::DimensionMismatch {
            what: "fine load",
            expected: r.n_fine(),
            found: b.len(),
        });
    }
    let t = galerkin_stiffness(r, a)?;
    let n = r.n_coarse();
    Ok(UpscaledSystem {
        t,
        m: vec![0.0; n],
        c: vec![0.0; n],
        q: r.matrix.mul_vec(b),
        labels: r.labels.clone(),
        variant: Variant::Steady,
    })
}

/// Measure `|V|` of every continuum: block area for the background,
/// segment length (merged for Type 1) otherwise.
pub fn continuum_measures(labels: &[BasisLabel], grid: &CoarseGrid, segs: &PerforationSegmentIndex, merged: bool) -> Vec<f64> {
    labels
        .iter()
        .map(|l| {
            if l.continuum == 0 {
                grid.blocks[l.block].area
            } else if merged {
                segs.merged_length(l.block)
            } else {
                segs.active(l.block).nth(l.continuum - 1).map_or(0.0, |s| s.length)
            }
        })
        .collect()
}

/// Coefficients of the lumped time-dependent model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LumpedParams {
    /// Storage of the background continuum.
    pub c: f64,
    /// Storage per unit length of perforation continua.
    pub perforation_storage: f64,
    /// Constant source in the domain.
    pub f: f64,
    /// Constant flux on perforations.
    pub g: f64,
}

/// Parabolic model: `T` with its diagonal replaced by minus the sum of the
/// off-diagonal entries of the row, diagonal mass `c_m |V|`, and the lumped
/// load `f |K|` (background) / `g |γ|` (perforations).
pub fn assemble_parabolic(r: &ProjectionMatrix, a: &SparseMatrix, measures: &[f64], p: LumpedParams) -> Result<UpscaledSystem> {
    let n = r.n_coarse();
    if measures.len() != n {
        return Err(NlmcError::DimensionMismatch {
            what: "continuum measures",
            expected: n,
            found: measures.len(),
        });
    }
    let mut t = galerkin_stiffness(r, a)?;
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| t[(i, j)]).sum();
        t[(i, i)] = -off;
    }
    let background = |k: usize| r.labels[k].continuum == 0;
    let m = (0..n)
        .map(|k| measures[k] * if background(k) { p.c } else { p.perforation_storage })
        .collect();
    let q = (0..n)
        .map(|k| measures[k] * if background(k) { p.f } else { p.g })
        .collect();
    Ok(UpscaledSystem {
        t,
        m,
        c: vec![0.0; n],
        q,
        labels: r.labels.clone(),
        variant: Variant::Parabolic,
    })
}

/// Adds the Robin term: `C = α|γ|` on perforation rows and `α g |γ|` to `q̄`.
pub fn assemble_robin(mut sys: UpscaledSystem, alpha: f64, g: f64, measures: &[f64]) -> Result<UpscaledSystem> {
    if measures.len() != sys.size() {
        return Err(NlmcError::DimensionMismatch {
            what: "continuum measures",
            expected: sys.size(),
            found: measures.len(),
        });
    }
    for (k, &m) in measures.iter().enumerate() {
        if sys.labels[k].continuum != 0 {
            sys.c[k] = alpha * m;
            sys.q[k] += alpha * g * m;
        }
    }
    sys.variant = Variant::Robin;
    Ok(sys)
}

/// Replaces the load by `q̄ = R b`, the integrals of every basis function
/// against the fine load. Equals the closed form `f |K| + g |γ|` whenever all
/// perforation edges belong to constrained segments, and also carries the
/// flux through edges that do not.
pub fn integrate_load(mut sys: UpscaledSystem, r: &ProjectionMatrix, b: &[f64]) -> Result<UpscaledSystem> {
    if b.len() != r.n_fine() {
        return Err(NlmcError::DimensionMismatch {
            what: "fine load",
            expected: r.n_fine(),
            found: b.len(),
        });
    }
    sys.q = r.matrix.mul_vec(b);
    Ok(sys)
}

/// Robin term from basis integrals: `C_ii = α ∫_Γ ψ_i ds`, the row sums of
/// `R B Rᵀ` against the unit field (`boundary_row_sums = B 1`), and
/// `q̄ += R b_r`.
pub fn assemble_robin_integrated(
    mut sys: UpscaledSystem,
    r: &ProjectionMatrix,
    boundary_row_sums: &[f64],
    robin_load: &[f64],
) -> Result<UpscaledSystem> {
    for v in [boundary_row_sums, robin_load] {
        if v.len() != r.n_fine() {
            return Err(NlmcError::DimensionMismatch {
                what: "Robin data",
                expected: r.n_fine(),
                found: v.len(),
            });
        }
    }
    let c = r.matrix.mul_vec(boundary_row_sums);
    let q = r.matrix.mul_vec(robin_load);
    for k in 0..sys.size() {
        sys.c[k] += c[k];
        sys.q[k] += q[k];
    }
    sys.variant = Variant::Robin;
    Ok(sys)
}

/// Solves `(T + C) ū = q̄`.
pub fn solve_steady(sys: &UpscaledSystem) -> Result<Vec<f64>> {
    let mut lhs = sys.t.clone();
    for i in 0..sys.size() {
        lhs[(i, i)] += sys.c[i];
    }
    Ok(DenseSolver::new(&lhs, true)?.solve(&sys.q))
}

/// Backward Euler `(M/τ + T + C) ū^{n+1} = q̄ + M ū^n / τ`.
pub fn coarse_time_march(sys: &UpscaledSystem, u0: &[f64], tau: f64, n_steps: usize, snapshots: &[usize]) -> Result<History> {
    if !(tau > 0.0) {
        return Err(NlmcError::InvalidParams("tau must be positive".into()));
    }
    let n = sys.size();
    if u0.len() != n {
        return Err(NlmcError::DimensionMismatch {
            what: "coarse initial state",
            expected: n,
            found: u0.len(),
        });
    }
    let mut lhs = sys.t.clone();
    for i in 0..n {
        lhs[(i, i)] += sys.m[i] / tau + sys.c[i];
    }
    let solver = DenseSolver::new(&lhs, false)?;
    let mut u = u0.to_vec();
    let mut out = Vec::new();
    if snapshots.contains(&0) {
        out.push((0, u.clone()));
    }
    for step in 1..=n_steps {
        let rhs: Vec<f64> = (0..n).map(|i| sys.q[i] + sys.m[i] * u[i] / tau).collect();
        u = solver.solve(&rhs);
        if snapshots.contains(&step) {
            out.push((step, u.clone()));
        }
    }
    Ok(out)
}

/// `u = Rᵀ ū` over fine dofs.
pub fn downscale(r: &ProjectionMatrix, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != r.n_coarse() {
        return Err(NlmcError::DimensionMismatch {
            what: "coarse vector",
            expected: r.n_coarse(),
            found: u.len(),
        });
    }
    Ok(r.matrix.mul_transpose_vec(u))
}
