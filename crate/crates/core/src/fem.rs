//! P1 finite-element assembly and the fine-scale reference solvers.

use serde::{Deserialize, Serialize};

use crate::error::{NlmcError, Result};
use crate::mesh::{DofMap, FineMesh};
use crate::solver::SpdSolver;
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Conductivity: one value everywhere or one per triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Uniform(f64),
    PerTriangle(Vec<f64>),
}

impl Coefficient {
    #[inline]
    pub fn at(&self, t: usize) -> f64 {
        match self {
            Coefficient::Uniform(v) => *v,
            Coefficient::PerTriangle(v) => v[t],
        }
    }
}

impl Default for Coefficient {
    fn default() -> Self {
        Coefficient::Uniform(1.0)
    }
}

/// Physical and time-stepping parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialParams {
    pub k: Coefficient,
    pub c: f64,
    #[serde(rename = "young")]
    pub e: f64,
    #[serde(rename = "poisson")]
    pub nu: f64,
    pub alpha: f64,
    pub tau: f64,
    pub n_steps: usize,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            k: Coefficient::Uniform(1.0),
            c: 1.0,
            e: 1.0,
            nu: 0.3,
            alpha: 0.0,
            tau: 0.005 / 20.0,
            n_steps: 20,
        }
    }
}

impl MaterialParams {
    pub fn lame_mu(&self) -> f64 {
        self.e / (2.0 * (1.0 + self.nu))
    }

    pub fn lame_lambda(&self) -> f64 {
        self.e * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))
    }

    pub fn validate(&self, n_triangles: usize) -> Result<()> {
        let bad = |m: &str| Err(NlmcError::InvalidParams(m.to_string()));
        match &self.k {
            Coefficient::Uniform(v) if !(*v > 0.0) => return bad("k must be positive"),
            Coefficient::PerTriangle(v) if v.len() != n_triangles => {
                return Err(NlmcError::DimensionMismatch {
                    what: "conductivity field",
                    expected: n_triangles,
                    found: v.len(),
                })
            }
            Coefficient::PerTriangle(v) if v.iter().any(|x| !(*x > 0.0)) => {
                return bad("k must be positive")
            }
            _ => {}
        }
        if !(self.c > 0.0) {
            return bad("c must be positive");
        }
        if !(self.e > 0.0) {
            return bad("Young modulus must be positive");
        }
        if !(self.nu > 0.0 && self.nu < 0.5) {
            return bad("Poisson ratio must lie in (0, 0.5)");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        Ok(())
    }
}

/// Gradients of the three barycentric functions and the signed area.
#[inline]
fn p1_gradients(p: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]));
    let g = |a: usize, b: usize| {
        [
            (p[a][1] - p[b][1]) / (2.0 * area),
            (p[b][0] - p[a][0]) / (2.0 * area),
        ]
    };
    ([g(1, 2), g(2, 0), g(0, 1)], area)
}

fn checked_triangle(mesh: &FineMesh, t: usize) -> Result<([[f64; 2]; 3], f64)> {
    let (g, area) = p1_gradients(mesh.triangles[t].map(|n| mesh.nodes[n]));
    if !(area > 0.0) {
        return Err(NlmcError::DegenerateTriangle { triangle: t, area });
    }
    Ok((g, area))
}

/// Element stiffness `k·|T|·∇φ_a·∇φ_b` of a P1 triangle.
pub fn element_stiffness_laplace(p: [[f64; 2]; 3], k: f64) -> [[f64; 3]; 3] {
    let (g, area) = p1_gradients(p);
    let mut ke = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            ke[a][b] = k * area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    ke
}

/// Element stiffness for plane strain, dofs ordered `(x0, y0, x1, y1, x2, y2)`.
pub fn element_stiffness_elasticity(p: [[f64; 2]; 3], lambda: f64, mu: f64) -> [[f64; 6]; 6] {
    let (g, area) = p1_gradients(p);
    // Strain rows (exx, eyy, 2exy).
    let mut bm = [[0.0; 6]; 3];
    for a in 0..3 {
        bm[0][2 * a] = g[a][0];
        bm[1][2 * a + 1] = g[a][1];
        bm[2][2 * a] = g[a][1];
        bm[2][2 * a + 1] = g[a][0];
    }
    let d = [
        [lambda + 2.0 * mu, lambda, 0.0],
        [lambda, lambda + 2.0 * mu, 0.0],
        [0.0, 0.0, mu],
    ];
    let mut ke = [[0.0; 6]; 6];
    for r in 0..6 {
        for c in 0..6 {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += bm[i][r] * d[i][j] * bm[j][c];
                }
            }
            ke[r][c] = area * s;
        }
    }
    ke
}

/// Scatters a symmetric element matrix: upper triangle computed once and
/// mirrored, so the assembled matrix is bitwise symmetric.
fn scatter_sym<const N: usize>(b: &mut TripletBuilder, dofs: [usize; N], ke: &[[f64; N]; N]) {
    for r in 0..N {
        b.push(dofs[r], dofs[r], ke[r][r]);
        for c in r + 1..N {
            b.push_sym(dofs[r], dofs[c], ke[r][c]);
        }
    }
}

/// Laplace stiffness over all mesh nodes.
pub fn assemble_stiffness_laplace(mesh: &FineMesh, params: &MaterialParams) -> Result<SparseMatrix> {
    let n = mesh.nodes.len();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        checked_triangle(mesh, t)?;
        let ke = element_stiffness_laplace(tri.map(|v| mesh.nodes[v]), params.k.at(t));
        scatter_sym(&mut b, *tri, &ke);
    }
    Ok(b.build(true))
}

/// Plane-strain stiffness over all `2 · nodes` slots (interleaved components).
pub fn assemble_stiffness_elasticity(mesh: &FineMesh, params: &MaterialParams) -> Result<SparseMatrix> {
    let n = 2 * mesh.nodes.len();
    let (lambda, mu) = (params.lame_lambda(), params.lame_mu());
    let mut b = TripletBuilder::with_capacity(n, n, 36 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        checked_triangle(mesh, t)?;
        let ke = element_stiffness_elasticity(tri.map(|v| mesh.nodes[v]), lambda, mu);
        let dofs = [
            2 * tri[0],
            2 * tri[0] + 1,
            2 * tri[1],
            2 * tri[1] + 1,
            2 * tri[2],
            2 * tri[2] + 1,
        ];
        scatter_sym(&mut b, dofs, &ke);
    }
    Ok(b.build(true))
}

/// Consistent P1 mass `c·∫φ_a φ_b`.
pub fn assemble_mass(mesh: &FineMesh, params: &MaterialParams) -> Result<SparseMatrix> {
    let n = mesh.nodes.len();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (_, area) = checked_triangle(mesh, t)?;
        let (d, o) = (params.c * area / 6.0, params.c * area / 12.0);
        let me = [[d, o, o], [o, d, o], [o, o, d]];
        scatter_sym(&mut b, *tri, &me);
    }
    Ok(b.build(true))
}

/// `∫ f φ_j dx + ∫_Γ g φ_j ds` with `f` per triangle and `g` per facet
/// (only perforation facets contribute).
pub fn assemble_load(mesh: &FineMesh, f: &[f64], g: &[f64]) -> Vec<f64> {
    assert_eq!(f.len(), mesh.triangles.len());
    assert_eq!(g.len(), mesh.facets.len());
    let mut b = vec![0.0; mesh.nodes.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if f[t] != 0.0 {
            let v = f[t] * mesh.triangle_area(t) / 3.0;
            for &n in tri {
                b[n] += v;
            }
        }
    }
    for (k, _) in mesh.perforation_facets() {
        if g[k] != 0.0 {
            let v = g[k] * mesh.facet_length(k) / 2.0;
            for n in mesh.facets[k].nodes {
                b[n] += v;
            }
        }
    }
    b
}

/// Vector load over `2 · nodes` slots for body force `f` and traction `g`.
pub fn assemble_load_elasticity(mesh: &FineMesh, f: &[[f64; 2]], g: &[[f64; 2]]) -> Vec<f64> {
    assert_eq!(f.len(), mesh.triangles.len());
    assert_eq!(g.len(), mesh.facets.len());
    let mut b = vec![0.0; 2 * mesh.nodes.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.triangle_area(t) / 3.0;
        for &n in tri {
            b[2 * n] += f[t][0] * a;
            b[2 * n + 1] += f[t][1] * a;
        }
    }
    for (k, _) in mesh.perforation_facets() {
        let len = mesh.facet_length(k) / 2.0;
        for n in mesh.facets[k].nodes {
            b[2 * n] += g[k][0] * len;
            b[2 * n + 1] += g[k][1] * len;
        }
    }
    b
}

/// Boundary mass `α ∫_Γ φ_a φ_b ds` and the load `α ∫_Γ g φ_j ds`.
pub fn assemble_robin_boundary(mesh: &FineMesh, params: &MaterialParams, g: &[f64]) -> (SparseMatrix, Vec<f64>) {
    assert_eq!(g.len(), mesh.facets.len());
    let n = mesh.nodes.len();
    let mut b = TripletBuilder::new(n, n);
    let mut rhs = vec![0.0; n];
    if params.alpha != 0.0 {
        for (k, _) in mesh.perforation_facets() {
            let len = mesh.facet_length(k);
            let (d, o) = (params.alpha * len / 3.0, params.alpha * len / 6.0);
            scatter_sym(&mut b, mesh.facets[k].nodes, &[[d, o], [o, d]]);
            for v in mesh.facets[k].nodes {
                rhs[v] += params.alpha * g[k] * len / 2.0;
            }
        }
    }
    (b.build(true), rhs)
}

/// Eliminates fixed slots of a homogeneous Dirichlet problem.
pub fn apply_dirichlet(matrix: &SparseMatrix, rhs: &[f64], dofs: &DofMap) -> (SparseMatrix, Vec<f64>) {
    let keep: Vec<usize> = (0..dofs.ndof()).map(|d| {
        let (n, c) = dofs.slot(d);
        n * dofs.ncomp() + c
    }).collect();
    (matrix.restrict(&keep, dofs.slot_to_dof()), dofs.restrict(rhs))
}

/// Reduced matrix only.
pub fn restrict_matrix(matrix: &SparseMatrix, dofs: &DofMap) -> SparseMatrix {
    let keep: Vec<usize> = (0..dofs.ndof()).map(|d| {
        let (n, c) = dofs.slot(d);
        n * dofs.ncomp() + c
    }).collect();
    matrix.restrict(&keep, dofs.slot_to_dof())
}

/// Snapshots `(step, values)` of a time march; step 0 is the initial state.
pub type History = Vec<(usize, Vec<f64>)>;

/// Backward Euler: `(S/τ + A + B) u^{n+1} = b + S u^n / τ`, keeping the
/// states listed in `snapshots`.
pub fn fine_time_march(
    s: &SparseMatrix,
    a: &SparseMatrix,
    b_robin: Option<&SparseMatrix>,
    rhs: &[f64],
    u0: &[f64],
    tau: f64,
    n_steps: usize,
    snapshots: &[usize],
) -> Result<History> {
    if !(tau > 0.0) {
        return Err(NlmcError::InvalidParams("tau must be positive".into()));
    }
    let mut lhs = a.add_scaled(s, 1.0 / tau)?;
    if let Some(b) = b_robin {
        lhs = lhs.add_scaled(b, 1.0)?;
    }
    let solver = SpdSolver::new(&lhs)?;
    let mut u = u0.to_vec();
    let mut out = Vec::new();
    if snapshots.contains(&0) {
        out.push((0, u.clone()));
    }
    for step in 1..=n_steps {
        let su = s.mul_vec(&u);
        let r: Vec<f64> = rhs.iter().zip(&su).map(|(b, m)| b + m / tau).collect();
        u = solver.solve(&r)?;
        if snapshots.contains(&step) {
            out.push((step, u.clone()));
        }
    }
    Ok(out)
}
