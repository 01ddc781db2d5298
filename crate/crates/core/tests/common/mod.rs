#![allow(dead_code)]

use std::path::Path;

use faer::Mat;
use nlmc::basis::{build_constraints, BasisLabel, BasisType, Discretization, ProjectionMatrix};
use nlmc::coarse::{oversample, PerforationSegmentIndex};
use nlmc::experiment::preset;
use nlmc::geometry::{BoundaryRules, PerforatedGeometry, Perforation, Rect};
use nlmc::mesh::FineMesh;
use nlmc::scenario::{ExportFields, GeometrySource, ProblemClass, ScenarioSpec};
use nlmc::solver::DenseSolver;
use rand::Rng;

pub fn geometry(disks: &[(f64, f64, f64)], boundary: BoundaryRules) -> PerforatedGeometry {
    PerforatedGeometry::new(
        Rect::unit(),
        boundary,
        disks.iter().map(|&(x, y, r)| Perforation::disk(x, y, r)).collect(),
    )
}

/// A scenario on an explicit layout, saved to `dir/geometry.toml`.
pub fn spec_for(problem: ProblemClass, geom: &PerforatedGeometry, dir: &Path, h: f64, grid: usize, layers: &[usize]) -> ScenarioSpec {
    let name = match problem {
        ProblemClass::Laplace => "laplace",
        ProblemClass::Elasticity => "elasticity",
        ProblemClass::Parabolic => "parabolic_neumann",
    };
    let path = dir.join("geometry.toml");
    geom.save(&path).unwrap();
    let mut spec = preset(name).unwrap();
    spec.h = h;
    spec.grids = vec![[grid, grid]];
    spec.layers = layers.to_vec();
    spec.basis_types = vec![BasisType::Type1, BasisType::Type2];
    spec.geometry = GeometrySource {
        file: Some(path),
        generator: None,
        domain: geom.domain,
    };
    spec.boundary = Some(geom.boundary);
    spec.export_fields = ExportFields::None;
    spec
}

/// Mean of a slot vector over the active segments a coarse label refers to,
/// by edge-midpoint quadrature.
pub fn segment_average(mesh: &FineMesh, segs: &PerforationSegmentIndex, u: &[f64], ncomp: usize, label: &BasisLabel, basis_type: BasisType) -> f64 {
    let comp = label.component();
    let chosen: Vec<_> = match basis_type {
        BasisType::Type1 => segs.active(label.block).collect(),
        BasisType::Type2 => segs.active(label.block).skip(label.continuum - 1).take(1).collect(),
    };
    let (mut integral, mut length) = (0.0, 0.0);
    for seg in chosen {
        for &f in &seg.facets {
            let [a, b] = mesh.facets[f].nodes;
            let len = mesh.facet_length(f);
            integral += 0.5 * len * (u[a * ncomp + comp] + u[b * ncomp + comp]);
            length += len;
        }
    }
    integral / length
}

/// Worst `|a(ψ, v)| / (‖ψ‖_a ‖v‖_a)` over `samples` random directions `v`
/// supported on the local problem of basis `row` and annihilated by its
/// constraints.
pub fn stationarity(disc: &Discretization, r: &ProjectionMatrix, row: usize, samples: usize, rng: &mut impl Rng) -> f64 {
    let label = r.labels[row];
    let region = oversample(disc.grid, label.block, r.layers);
    let interior = region.interior_nodes(disc.mesh, disc.grid);
    let ncomp = disc.ncomp();
    let mut local_of = vec![usize::MAX; disc.dofs.ndof()];
    let mut local = Vec::new();
    for (n, &inside) in interior.iter().enumerate() {
        if !inside {
            continue;
        }
        for c in 0..ncomp {
            if let Some(d) = disc.dofs.dof(n, c) {
                local_of[d] = local.len();
                local.push(d);
            }
        }
    }
    let set = build_constraints(&disc.functionals, &region, label.block, label.continuum, r.basis_type, label.direction).unwrap();
    let rows: Vec<Vec<(usize, f64)>> = set
        .rows
        .iter()
        .map(|row| {
            row.coeffs
                .iter()
                .filter(|(d, _)| local_of[*d] != usize::MAX)
                .map(|&(d, w)| (local_of[d], w))
                .collect::<Vec<_>>()
        })
        .filter(|c| !c.is_empty())
        .collect();
    let apply = |v: &[f64]| -> Vec<f64> { rows.iter().map(|c| c.iter().map(|&(k, w)| w * v[k]).sum()).collect() };
    let gram = Mat::from_fn(rows.len(), rows.len(), |i, j| {
        let (a, b) = (&rows[i], &rows[j]);
        let (mut p, mut q, mut s) = (0, 0, 0.0);
        while p < a.len() && q < b.len() {
            match a[p].0.cmp(&b[q].0) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    s += a[p].1 * b[q].1;
                    p += 1;
                    q += 1;
                }
            }
        }
        s
    });
    let gram = DenseSolver::new(&gram, true).unwrap();
    let project = |v: &mut Vec<f64>| {
        let y = gram.solve(&apply(v));
        for (c, yk) in rows.iter().zip(y) {
            for &(k, w) in c {
                v[k] -= w * yk;
            }
        }
    };
    let psi = r.basis_vector(row);
    let a_psi = disc.stiffness.mul_vec(&psi);
    let psi_norm = psi.iter().zip(&a_psi).map(|(x, y)| x * y).sum::<f64>().sqrt();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let mut v: Vec<f64> = (0..local.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        project(&mut v);
        project(&mut v);
        let mut full = vec![0.0; disc.dofs.ndof()];
        for (k, &d) in local.iter().enumerate() {
            full[d] = v[k];
        }
        let v_norm = disc.stiffness.bilinear(&full, &full).sqrt();
        let num = a_psi.iter().zip(&full).map(|(x, y)| x * y).sum::<f64>().abs();
        worst = worst.max(num / (psi_norm * v_norm));
    }
    worst
}
