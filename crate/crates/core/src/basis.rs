//! Multiscale basis functions by constrained energy minimization on
//! oversampled regions, and the projection matrix they form.

use serde::{Deserialize, Serialize};

use crate::coarse::{oversample, CoarseGrid, OversampleRegion, PerforationSegmentIndex};
use crate::error::{NlmcError, Result};
use crate::fem::{assemble_stiffness_elasticity, assemble_stiffness_laplace, restrict_matrix, MaterialParams};
use crate::mesh::{DofMap, FineMesh};
use crate::solver::SaddleSolver;
use crate::sparse::SparseMatrix;

/// Absolute tolerance on `|Cψ − δ|` for an accepted basis.
pub const CONSTRAINT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisType {
    /// One merged perforation continuum per block.
    Type1,
    /// One continuum per perforation segment of a block.
    Type2,
}

impl BasisType {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisType::Type1 => "type1",
            BasisType::Type2 => "type2",
        }
    }

    /// Perforation continua of a block with `l` active segments.
    pub fn continua(self, l: usize) -> usize {
        match self {
            BasisType::Type1 => l.min(1),
            BasisType::Type2 => l,
        }
    }
}

impl std::fmt::Display for BasisType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    X,
    Y,
}

impl Direction {
    pub fn component(self) -> usize {
        match self {
            Direction::X => 0,
            Direction::Y => 1,
        }
    }
}

/// Identifies a coarse unknown: block, continuum (0 = background) and, for
/// vector problems, the displacement direction it controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisLabel {
    pub block: usize,
    pub continuum: usize,
    pub direction: Option<Direction>,
}

impl BasisLabel {
    pub fn component(&self) -> usize {
        self.direction.map_or(0, Direction::component)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    CellAverage { block: usize },
    /// Average over segment `component` (1-based) of `block`; `merged` rows
    /// average over all segments of the block at once.
    SegmentAverage { block: usize, component: usize, merged: bool },
}

/// One averaging functional with its prescribed value.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub kind: ConstraintKind,
    /// Displacement component the functional acts on (0 for scalars).
    pub field_component: usize,
    /// Sorted `(dof, weight)` pairs over global equation indices.
    pub coeffs: Vec<(usize, f64)>,
    pub value: f64,
}

impl ConstraintRow {
    pub fn apply(&self, v: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(d, w)| w * v[d]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSet {
    pub rows: Vec<ConstraintRow>,
}

impl ConstraintSet {
    /// Largest `|Cψ − δ|` for a vector over global dofs.
    pub fn max_violation(&self, psi: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.apply(psi) - r.value).abs())
            .fold(0.0, f64::max)
    }
}

/// Normalized averaging functionals of every block, over global dofs.
#[derive(Debug, Clone)]
pub struct BlockFunctionals {
    pub ncomp: usize,
    /// `cell[j][c]`.
    pub cell: Vec<Vec<Vec<(usize, f64)>>>,
    /// `segment[j][l][c]` for active segments.
    pub segment: Vec<Vec<Vec<Vec<(usize, f64)>>>>,
    /// `merged[j][c]`, empty when the block has no active segment.
    pub merged: Vec<Vec<Vec<(usize, f64)>>>,
}

fn finish_row(acc: &mut Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    acc.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(acc.len());
    for &(d, w) in acc.iter() {
        match out.last_mut() {
            Some(last) if last.0 == d => last.1 += w,
            _ => out.push((d, w)),
        }
    }
    acc.clear();
    out.retain(|e| e.1 != 0.0);
    out
}

impl BlockFunctionals {
    pub fn new(mesh: &FineMesh, grid: &CoarseGrid, segs: &PerforationSegmentIndex, dofs: &DofMap) -> Self {
        let ncomp = dofs.ncomp();
        let mut acc = Vec::new();
        let mut cell = Vec::with_capacity(grid.n_blocks());
        let mut segment = Vec::with_capacity(grid.n_blocks());
        let mut merged = Vec::with_capacity(grid.n_blocks());
        for (j, block) in grid.blocks.iter().enumerate() {
            let mut per_comp = Vec::with_capacity(ncomp);
            for c in 0..ncomp {
                for &t in &block.triangles {
                    let w = mesh.triangle_area(t) / 3.0 / block.area;
                    for n in mesh.triangles[t] {
                        if let Some(d) = dofs.dof(n, c) {
                            acc.push((d, w));
                        }
                    }
                }
                per_comp.push(finish_row(&mut acc));
            }
            cell.push(per_comp);

            let seg_row = |facets: &mut dyn Iterator<Item = usize>, len: f64, c: usize, acc: &mut Vec<(usize, f64)>| {
                for f in facets {
                    let w = mesh.facet_length(f) / 2.0 / len;
                    for n in mesh.facets[f].nodes {
                        if let Some(d) = dofs.dof(n, c) {
                            acc.push((d, w));
                        }
                    }
                }
                finish_row(acc)
            };
            let mut seg_rows = Vec::new();
            for s in segs.active(j) {
                seg_rows.push(
                    (0..ncomp)
                        .map(|c| seg_row(&mut s.facets.iter().copied(), s.length, c, &mut acc))
                        .collect(),
                );
            }
            segment.push(seg_rows);
            let total = segs.merged_length(j);
            merged.push(if total > 0.0 {
                (0..ncomp)
                    .map(|c| {
                        let mut it = segs.active(j).flat_map(|s| s.facets.iter().copied());
                        seg_row(&mut it, total, c, &mut acc)
                    })
                    .collect()
            } else {
                Vec::new()
            });
        }
        Self {
            ncomp,
            cell,
            segment,
            merged,
        }
    }

    /// Perforation continua of block `j`.
    pub fn continua(&self, j: usize, basis_type: BasisType) -> usize {
        basis_type.continua(self.segment[j].len())
    }

    /// Functional of continuum `m` of block `j` acting on component `c`.
    pub fn row(&self, j: usize, m: usize, c: usize, basis_type: BasisType) -> &[(usize, f64)] {
        match (m, basis_type) {
            (0, _) => &self.cell[j][c],
            (_, BasisType::Type1) => &self.merged[j][c],
            (_, BasisType::Type2) => &self.segment[j][m - 1][c],
        }
    }
}

/// Constraint rows for basis `(i, m)` on `region`: every block of the region
/// contributes a cell row and its segment rows (merged for Type 1), per field
/// component, with value 1 only on the target functional.
pub fn build_constraints(
    func: &BlockFunctionals,
    region: &OversampleRegion,
    i: usize,
    m: usize,
    basis_type: BasisType,
    direction: Option<Direction>,
) -> Result<ConstraintSet> {
    let available = func.continua(i, basis_type);
    if m > available {
        return Err(NlmcError::InvalidContinuum {
            block: i,
            continuum: m,
            available,
        });
    }
    let target_c = direction.map_or(0, Direction::component);
    let mut rows = Vec::new();
    for &j in &region.member_blocks {
        for c in 0..func.ncomp {
            let hit = |mm: usize| if j == i && mm == m && c == target_c { 1.0 } else { 0.0 };
            rows.push(ConstraintRow {
                kind: ConstraintKind::CellAverage { block: j },
                field_component: c,
                coeffs: func.cell[j][c].clone(),
                value: hit(0),
            });
            for l in 1..=func.continua(j, basis_type) {
                rows.push(ConstraintRow {
                    kind: ConstraintKind::SegmentAverage {
                        block: j,
                        component: l,
                        merged: basis_type == BasisType::Type1,
                    },
                    field_component: c,
                    coeffs: func.row(j, l, c, basis_type).to_vec(),
                    value: hit(l),
                });
            }
        }
    }
    Ok(ConstraintSet { rows })
}

/// Solves `min ½ψᵀAψ` subject to `Cψ = δ` for every column of `deltas`.
/// Returns the minimizers and the largest constraint violation.
pub fn solve_local_basis(a_local: &SparseMatrix, c_local: &SparseMatrix, deltas: &[Vec<f64>], shift: bool) -> Result<(Vec<Vec<f64>>, f64)> {
    let saddle = SaddleSolver::new(a_local, c_local, shift)?;
    let (psi, _) = saddle.solve_constraints(deltas);
    let mut worst = 0.0f64;
    for (p, d) in psi.iter().zip(deltas) {
        let cp = c_local.mul_vec(p);
        for (x, y) in cp.iter().zip(d) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok((psi, worst))
}

/// A basis vector stored sparsely over global dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisFunction {
    pub label: BasisLabel,
    pub layers: usize,
    pub entries: Vec<(usize, f64)>,
    /// Largest `|Cψ − δ|` over all rows of its constraint set.
    pub constraint_residual: f64,
}

/// Everything needed to build bases for one operator on one coarse grid.
pub struct Discretization<'a> {
    pub mesh: &'a FineMesh,
    pub grid: &'a CoarseGrid,
    pub segments: &'a PerforationSegmentIndex,
    pub dofs: DofMap,
    /// Stiffness over free dofs.
    pub stiffness: SparseMatrix,
    pub functionals: BlockFunctionals,
}

impl<'a> Discretization<'a> {
    pub fn new(mesh: &'a FineMesh, grid: &'a CoarseGrid, segments: &'a PerforationSegmentIndex, dofs: DofMap, stiffness: SparseMatrix) -> Self {
        let functionals = BlockFunctionals::new(mesh, grid, segments, &dofs);
        Self {
            mesh,
            grid,
            segments,
            dofs,
            stiffness,
            functionals,
        }
    }

    pub fn laplace(mesh: &'a FineMesh, grid: &'a CoarseGrid, segments: &'a PerforationSegmentIndex, params: &MaterialParams) -> Result<Self> {
        let dofs = mesh.dof_map.clone();
        let a = restrict_matrix(&assemble_stiffness_laplace(mesh, params)?, &dofs);
        Ok(Self::new(mesh, grid, segments, dofs, a))
    }

    pub fn elasticity(mesh: &'a FineMesh, grid: &'a CoarseGrid, segments: &'a PerforationSegmentIndex, params: &MaterialParams) -> Result<Self> {
        let dofs = mesh.elastic_dof_map();
        let a = restrict_matrix(&assemble_stiffness_elasticity(mesh, params)?, &dofs);
        Ok(Self::new(mesh, grid, segments, dofs, a))
    }

    pub fn ncomp(&self) -> usize {
        self.dofs.ncomp()
    }

    /// Labels in canonical order: block-major, continuum-minor; for vector
    /// problems all X labels precede all Y labels.
    pub fn labels(&self, basis_type: BasisType) -> Vec<BasisLabel> {
        let dirs: Vec<Option<Direction>> = if self.ncomp() == 1 {
            vec![None]
        } else {
            vec![Some(Direction::X), Some(Direction::Y)]
        };
        let mut labels = Vec::new();
        for d in dirs {
            for i in 0..self.grid.n_blocks() {
                for m in 0..=self.functionals.continua(i, basis_type) {
                    labels.push(BasisLabel {
                        block: i,
                        continuum: m,
                        direction: d,
                    });
                }
            }
        }
        labels
    }

    /// All bases owned by block `i`, from a single factorization.
    pub fn block_bases(&self, i: usize, s: usize, basis_type: BasisType) -> Result<Vec<BasisFunction>> {
        let region = oversample(self.grid, i, s);
        let ncomp = self.ncomp();
        let interior = region.interior_nodes(self.mesh, self.grid);
        let mut local_of = vec![usize::MAX; self.dofs.ndof()];
        let mut local = Vec::new();
        let mut any_fixed = false;
        for (n, &inside) in interior.iter().enumerate() {
            let touched = inside || self.mesh.node_triangles(n).iter().any(|&t| region.contains(self.grid.block_of[t]));
            if !touched {
                continue;
            }
            for c in 0..ncomp {
                match (inside, self.dofs.dof(n, c)) {
                    (true, Some(d)) => {
                        local_of[d] = local.len();
                        local.push(d);
                    }
                    _ => any_fixed = true,
                }
            }
        }
        let a_local = self.stiffness.restrict(&local, &local_of);

        let dirs: Vec<Option<Direction>> = if ncomp == 1 {
            vec![None]
        } else {
            vec![Some(Direction::X), Some(Direction::Y)]
        };
        let n_cont = self.functionals.continua(i, basis_type);
        let mut targets = Vec::new();
        for &d in &dirs {
            for m in 0..=n_cont {
                targets.push(BasisLabel {
                    block: i,
                    continuum: m,
                    direction: d,
                });
            }
        }
        let sets: Vec<ConstraintSet> = targets
            .iter()
            .map(|t| build_constraints(&self.functionals, &region, i, t.continuum, basis_type, t.direction))
            .collect::<Result<_>>()?;

        // Rows are shared by all targets; drop those vanishing on free dofs.
        let template = &sets[0].rows;
        let mut kept_rows = Vec::new();
        let mut kept_idx = Vec::new();
        for (r, row) in template.iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> = row
                .coeffs
                .iter()
                .filter(|(d, _)| local_of[*d] != usize::MAX)
                .map(|&(d, w)| (local_of[d], w))
                .collect();
            coeffs.sort_by_key(|e| e.0);
            if coeffs.is_empty() {
                if sets.iter().any(|s| s.rows[r].value != 0.0) {
                    return Err(NlmcError::RankDeficientConstraints {
                        block: i,
                        detail: format!("target functional {:?} has no free dofs", row.kind),
                    });
                }
                continue;
            }
            kept_rows.push(coeffs);
            kept_idx.push(r);
        }
        let c_local = SparseMatrix::from_rows(local.len(), &kept_rows);
        let deltas: Vec<Vec<f64>> = sets
            .iter()
            .map(|s| kept_idx.iter().map(|&r| s.rows[r].value).collect())
            .collect();
        let (psi, _) = solve_local_basis(&a_local, &c_local, &deltas, !any_fixed)
            .map_err(|e| match e {
                NlmcError::SaddleSolveFailure { residual, .. } => NlmcError::SaddleSolveFailure { block: i, residual },
                other => other,
            })?;

        let mut out = Vec::with_capacity(targets.len());
        let mut full = vec![0.0; self.dofs.ndof()];
        for ((label, set), p) in targets.into_iter().zip(&sets).zip(psi) {
            for (k, &d) in local.iter().enumerate() {
                full[d] = p[k];
            }
            let residual = set.max_violation(&full);
            if !(residual <= CONSTRAINT_TOL) {
                return Err(NlmcError::SaddleSolveFailure { block: i, residual });
            }
            let entries: Vec<(usize, f64)> = local
                .iter()
                .zip(&p)
                .filter(|(_, v)| **v != 0.0)
                .map(|(&d, &v)| (d, v))
                .collect();
            for &d in &local {
                full[d] = 0.0;
            }
            out.push(BasisFunction {
                label,
                layers: s,
                entries,
                constraint_residual: residual,
            });
        }
        Ok(out)
    }

    /// Builds every basis and stacks them into `R`.
    pub fn build_basis(&self, s: usize, basis_type: BasisType) -> Result<ProjectionMatrix> {
        if s == 0 {
            return Err(NlmcError::InvalidParams("oversampling layers must be at least 1".into()));
        }
        let blocks: Vec<usize> = (0..self.grid.n_blocks()).collect();
        #[cfg(feature = "parallel")]
        let per_block: Vec<Result<Vec<BasisFunction>>> = {
            use rayon::prelude::*;
            blocks.par_iter().map(|&i| self.block_bases(i, s, basis_type)).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let per_block: Vec<Result<Vec<BasisFunction>>> =
            blocks.iter().map(|&i| self.block_bases(i, s, basis_type)).collect();

        let per_block = per_block.into_iter().collect::<Result<Vec<_>>>()?;
        let ncomp = self.ncomp();
        // Within a block, bases are ordered direction-major; regroup so all X
        // rows come before all Y rows.
        let mut parts: Vec<Vec<Vec<BasisFunction>>> = per_block
            .into_iter()
            .map(|mut bases| {
                let per_dir = bases.len() / ncomp;
                let mut split = Vec::with_capacity(ncomp);
                for c in (1..ncomp).rev() {
                    split.push(bases.split_off(c * per_dir));
                }
                split.push(bases);
                split.reverse();
                split
            })
            .collect();
        let mut funcs = Vec::new();
        for c in 0..ncomp {
            for block in parts.iter_mut() {
                funcs.append(&mut block[c]);
            }
        }
        Ok(ProjectionMatrix::from_functions(funcs, self.dofs.ndof(), s, basis_type, ncomp))
    }
}

/// Stacked basis vectors `R` (one row per coarse unknown) with labels.
#[derive(Debug, Clone)]
pub struct ProjectionMatrix {
    pub matrix: SparseMatrix,
    pub labels: Vec<BasisLabel>,
    pub layers: usize,
    pub basis_type: BasisType,
    pub ncomp: usize,
    pub constraint_residuals: Vec<f64>,
}

impl ProjectionMatrix {
    pub fn from_functions(funcs: Vec<BasisFunction>, ndof: usize, layers: usize, basis_type: BasisType, ncomp: usize) -> Self {
        let labels = funcs.iter().map(|f| f.label).collect();
        let constraint_residuals = funcs.iter().map(|f| f.constraint_residual).collect();
        let rows: Vec<Vec<(usize, f64)>> = funcs.into_iter().map(|f| f.entries).collect();
        Self {
            matrix: SparseMatrix::from_rows(ndof, &rows),
            labels,
            layers,
            basis_type,
            ncomp,
            constraint_residuals,
        }
    }

    /// `DOF_c`.
    pub fn n_coarse(&self) -> usize {
        self.labels.len()
    }

    pub fn n_fine(&self) -> usize {
        self.matrix.ncols()
    }

    /// Row `r` as a dense vector over fine dofs.
    pub fn basis_vector(&self, r: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_fine()];
        let (cols, vals) = self.matrix.row(r);
        for (&c, &x) in cols.iter().zip(vals) {
            v[c] = x;
        }
        v
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.constraint_residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Expected `DOF_c` from the segment counts.
pub fn coarse_dof_count(grid: &CoarseGrid, segs: &PerforationSegmentIndex, basis_type: BasisType, ncomp: usize) -> usize {
    ncomp * (0..grid.n_blocks()).map(|j| 1 + basis_type.continua(segs.count(j))).sum::<usize>()
}

/// Share of a basis vector's squared L² mass on blocks at each layer distance
/// from its owner; entry `d` covers distance `d`.
pub fn basis_decay_profile(basis: &[f64], owner: usize, mesh: &FineMesh, grid: &CoarseGrid, dofs: &DofMap) -> Vec<f64> {
    let full = dofs.expand(basis);
    let ncomp = dofs.ncomp();
    let mut prof: Vec<f64> = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let d = grid.layer_distance(owner, grid.block_of[t]);
        let mut sq = 0.0;
        for &n in tri {
            for c in 0..ncomp {
                sq += full[n * ncomp + c].powi(2);
            }
        }
        if prof.len() <= d {
            prof.resize(d + 1, 0.0);
        }
        prof[d] += sq * mesh.triangle_area(t) / 3.0;
    }
    let total: f64 = prof.iter().sum();
    if total > 0.0 {
        prof.iter_mut().for_each(|p| *p /= total);
    }
    prof
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::{build_coarse_grid, index_perforation_segments};
    use crate::geometry::{BoundaryRules, PerforatedGeometry, Perforation, Rect};
    use crate::mesh::build_fine_mesh;

    fn setup(disks: &[(f64, f64, f64)]) -> (FineMesh, CoarseGrid, PerforationSegmentIndex) {
        let g = PerforatedGeometry::new(
            Rect::unit(),
            BoundaryRules::dirichlet_left_bottom(),
            disks.iter().map(|&(x, y, r)| Perforation::disk(x, y, r)).collect(),
        );
        let mesh = build_fine_mesh(&g, 1.0 / 32.0).unwrap();
        let grid = build_coarse_grid(&mesh, 4, 4).unwrap();
        let segs = index_perforation_segments(&mesh, &grid);
        (mesh, grid, segs)
    }

    #[test]
    fn constraint_rows_without_perforations() {
        let (mesh, grid, segs) = setup(&[]);
        let f = BlockFunctionals::new(&mesh, &grid, &segs, &mesh.dof_map);
        let region = oversample(&grid, 5, 1);
        let set = build_constraints(&f, &region, 5, 0, BasisType::Type2, None).unwrap();
        assert_eq!(set.rows.len(), 9);
        assert_eq!(set.rows.iter().filter(|r| r.value == 1.0).count(), 1);
        assert!(matches!(
            build_constraints(&f, &region, 5, 1, BasisType::Type2, None),
            Err(NlmcError::InvalidContinuum { block: 5, continuum: 1, available: 0 })
        ));
    }

    #[test]
    fn type2_kronecker_structure() {
        // Three small disks inside block 5 = [0.25,0.5]x[0.25,0.5].
        let (mesh, grid, segs) = setup(&[(0.3, 0.3, 0.025), (0.44, 0.31, 0.025), (0.37, 0.44, 0.025)]);
        assert_eq!(segs.count(5), 3);
        let f = BlockFunctionals::new(&mesh, &grid, &segs, &mesh.dof_map);
        let region = oversample(&grid, 5, 1);
        let set = build_constraints(&f, &region, 5, 2, BasisType::Type2, None).unwrap();
        let ones: Vec<_> = set.rows.iter().filter(|r| r.value == 1.0).collect();
        assert_eq!(ones.len(), 1);
        assert_eq!(ones[0].kind, ConstraintKind::SegmentAverage { block: 5, component: 2, merged: false });
        let t1 = build_constraints(&f, &region, 5, 1, BasisType::Type1, None).unwrap();
        let ones: Vec<_> = t1.rows.iter().filter(|r| r.value == 1.0).collect();
        assert_eq!(ones.len(), 1);
        assert!(matches!(ones[0].kind, ConstraintKind::SegmentAverage { merged: true, .. }));
        assert!(build_constraints(&f, &region, 5, 2, BasisType::Type1, None).is_err());
    }

    #[test]
    fn cell_functional_integrates_exactly() {
        let (mesh, grid, segs) = setup(&[(0.375, 0.375, 0.06)]);
        let f = BlockFunctionals::new(&mesh, &grid, &segs, &mesh.dof_map);
        // u = x + 2y: its block average is the area-weighted centroid value.
        let u: Vec<f64> = (0..mesh.dof_map.ndof())
            .map(|d| {
                let p = mesh.nodes[mesh.dof_map.slot(d).0];
                p[0] + 2.0 * p[1]
            })
            .collect();
        let j = 5;
        let b = &grid.blocks[j];
        let exact: f64 = b
            .triangles
            .iter()
            .map(|&t| {
                let c = mesh.centroid(t);
                (c[0] + 2.0 * c[1]) * mesh.triangle_area(t)
            })
            .sum::<f64>()
            / b.area;
        let got: f64 = f.cell[j][0].iter().map(|&(d, w)| w * u[d]).sum();
        assert!((got - exact).abs() < 1e-13);
    }

    #[test]
    fn bases_satisfy_constraints_and_count() {
        let (mesh, grid, segs) = setup(&[(0.375, 0.375, 0.06), (0.62, 0.5, 0.05)]);
        let disc = Discretization::laplace(&mesh, &grid, &segs, &MaterialParams::default()).unwrap();
        for bt in [BasisType::Type1, BasisType::Type2] {
            let r = disc.build_basis(2, bt).unwrap();
            assert_eq!(r.n_coarse(), coarse_dof_count(&grid, &segs, bt, 1));
            assert!(r.max_constraint_residual() <= CONSTRAINT_TOL);
            assert_eq!(r.labels, disc.labels(bt));
        }
    }

    #[test]
    fn elastic_labels_put_x_before_y() {
        let (mesh, grid, segs) = setup(&[(0.375, 0.375, 0.06)]);
        let disc = Discretization::elasticity(&mesh, &grid, &segs, &MaterialParams::default()).unwrap();
        let r = disc.build_basis(1, BasisType::Type2).unwrap();
        let half = r.n_coarse() / 2;
        assert!(r.labels[..half].iter().all(|l| l.direction == Some(Direction::X)));
        assert!(r.labels[half..].iter().all(|l| l.direction == Some(Direction::Y)));
        assert_eq!(r.n_coarse(), 2 * (16 + 1));
        // X basis of a plain block: y averages vanish, x averages are Kronecker.
        let row = r.labels.iter().position(|l| l.block == 0 && l.direction == Some(Direction::X)).unwrap();
        let psi = r.basis_vector(row);
        for j in 0..grid.n_blocks() {
            let ax: f64 = disc.functionals.cell[j][0].iter().map(|&(d, w)| w * psi[d]).sum();
            let ay: f64 = disc.functionals.cell[j][1].iter().map(|&(d, w)| w * psi[d]).sum();
            assert!((ax - if j == 0 { 1.0 } else { 0.0 }).abs() < 1e-9);
            assert!(ay.abs() < 1e-9);
        }
    }

    #[test]
    fn single_block_support_profile() {
        let (mesh, grid, _) = setup(&[]);
        let mut v = vec![0.0; mesh.dof_map.ndof()];
        let b = &grid.blocks[5];
        let cell = [b.ix * 8 + 3, b.iy * 8 + 3];
        let t = (0..mesh.triangles.len()).find(|&t| mesh.triangle_cell[t] == cell).unwrap();
        for n in mesh.triangles[t] {
            if let Some(d) = mesh.dof_map.dof(n, 0) {
                v[d] = 1.0;
            }
        }
        let p = basis_decay_profile(&v, 5, &mesh, &grid, &mesh.dof_map);
        // Nodes of an interior triangle touch only block 5.
        assert!((p[0] - 1.0).abs() < 1e-15);
    }
}
