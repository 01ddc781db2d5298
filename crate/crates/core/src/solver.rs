//! Linear solvers: sparse Cholesky with a CG fallback, a regularized LDLᵀ
//! for constrained minimization, and dense coarse factorizations.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::linalg::solvers::{Llt as DenseLlt, PartialPivLu, Solve};
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, LdltRef, SymbolicCholesky,
};
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Par, Side};

use crate::error::{NlmcError, Result};
use crate::sparse::SparseMatrix;

pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_REFINE: usize = 4;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.mul_vec(x);
    b.iter().zip(&ax).map(|(b, ax)| b - ax).collect()
}

fn col_to_mat(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

/// Factor of a sparse SPD matrix, reusable across right-hand sides.
pub struct SpdSolver {
    matrix: SparseMatrix,
    llt: Option<Llt<usize, f64>>,
    tol: f64,
}

impl SpdSolver {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        Self::with_tol(a, DEFAULT_TOL)
    }

    pub fn with_tol(a: &SparseMatrix, tol: f64) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(NlmcError::DimensionMismatch {
                what: "square matrix",
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        let llt = if a.nrows() == 0 {
            None
        } else {
            a.to_faer().sp_cholesky(Side::Lower).ok()
        };
        if llt.is_none() && a.nrows() > 0 {
            log::debug!("sparse Cholesky failed, falling back to conjugate gradients");
        }
        Ok(Self {
            matrix: a.clone(),
            llt,
            tol,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.matrix.nrows();
        if b.len() != n {
            return Err(NlmcError::DimensionMismatch {
                what: "right-hand side",
                expected: n,
                found: b.len(),
            });
        }
        let bn = norm2(b);
        if bn == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let Some(llt) = &self.llt else {
            return match conjugate_gradient(&self.matrix, b, None, self.tol, 10 * n + 100) {
                Err(NlmcError::NotConverged { .. }) => Err(NlmcError::SingularSystem),
                other => other,
            };
        };
        let mut rhs = col_to_mat(b);
        llt.solve_in_place(rhs.as_mut());
        let mut x: Vec<f64> = (0..n).map(|i| rhs[(i, 0)]).collect();
        let mut r = residual(&self.matrix, &x, b);
        let mut rel = norm2(&r) / bn;
        for _ in 0..MAX_REFINE {
            if rel <= 0.01 * self.tol {
                break;
            }
            let mut d = col_to_mat(&r);
            llt.solve_in_place(d.as_mut());
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += d[(i, 0)];
            }
            let next = residual(&self.matrix, &x, b);
            let next_rel = norm2(&next) / bn;
            if next_rel >= rel {
                break;
            }
            r = next;
            rel = next_rel;
        }
        if rel > self.tol {
            return conjugate_gradient(&self.matrix, b, Some(&x), self.tol, 10 * n + 100);
        }
        Ok(x)
    }
}

/// Solves `A x = b` for SPD `A` to relative residual `tol`.
pub fn solve_spd(a: &SparseMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    SpdSolver::with_tol(a, tol)?.solve(b)
}

/// Jacobi-preconditioned conjugate gradients.
pub fn conjugate_gradient(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    let n = a.nrows();
    let bn = norm2(b);
    if bn == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let diag = a.diagonal();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(NlmcError::SingularSystem);
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = residual(a, &x, b);
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iters {
        if norm2(&r) / bn <= tol {
            return Ok(x);
        }
        a.mul_vec_into(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(NlmcError::SingularSystem);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm2(&r) / bn;
    if res <= tol {
        Ok(x)
    } else {
        Err(NlmcError::NotConverged {
            max_iters,
            residual: res,
        })
    }
}

/// Factorization of `[A Cᵀ; C 0]` for minimizing `½ψᵀAψ` subject to `Cψ = δ`.
///
/// The block matrix is perturbed to the quasi-definite
/// `[A + εₐI, Cᵀ; C, −ε_c I]`, which admits a sign-stable LDLᵀ under any
/// symmetric ordering; iterative refinement against the unperturbed system
/// removes the perturbation.
pub struct SaddleSolver {
    a: SparseMatrix,
    c: SparseMatrix,
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
}

impl SaddleSolver {
    /// `shift_a` adds `εₐ I` to the leading block; needed when `A` is singular.
    pub fn new(a: &SparseMatrix, c: &SparseMatrix, shift_a: bool) -> Result<Self> {
        let (n, m) = (a.nrows(), c.nrows());
        if c.ncols() != n {
            return Err(NlmcError::DimensionMismatch {
                what: "constraint columns",
                expected: n,
                found: c.ncols(),
            });
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let eps_a = if shift_a { 1e-10 * scale } else { 0.0 };
        let eps_c = 1e-12 * scale;
        let mut trips = Vec::with_capacity(a.nnz() + 2 * c.nnz() + n + m);
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    let v = if i == j { v + eps_a } else { v };
                    trips.push(Triplet::new(i, j, v));
                }
            }
        }
        for q in 0..m {
            let (cols, vals) = c.row(q);
            for (&j, &v) in cols.iter().zip(vals) {
                trips.push(Triplet::new(n + q, j, v));
            }
            trips.push(Triplet::new(n + q, n + q, -eps_c));
        }
        let k = SparseColMat::<usize, f64>::try_new_from_triplets(n + m, n + m, &trips)
            .map_err(|_| NlmcError::SaddleSolveFailure { block: usize::MAX, residual: f64::NAN })?;
        let symbolic = factorize_symbolic_cholesky(
            k.symbolic(),
            Side::Lower,
            Default::default(),
            Default::default(),
        )
        .map_err(|_| NlmcError::SaddleSolveFailure { block: usize::MAX, residual: f64::NAN })?;
        let mut values = vec![0.0; symbolic.len_val()];
        let signs: Vec<i8> = (0..n + m).map(|i| if i < n { 1 } else { -1 }).collect();
        let req = symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default());
        let mut mem = MemBuffer::new(req);
        symbolic
            .factorize_numeric_ldlt(
                &mut values,
                k.as_ref(),
                Side::Lower,
                LdltRegularization {
                    dynamic_regularization_signs: Some(&signs),
                    dynamic_regularization_delta: 1e-10 * scale,
                    dynamic_regularization_epsilon: 1e-14 * scale,
                },
                Par::Seq,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|_| NlmcError::SaddleSolveFailure { block: usize::MAX, residual: f64::NAN })?;
        Ok(Self {
            a: a.clone(),
            c: c.clone(),
            symbolic,
            values,
        })
    }

    pub fn n_primal(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_constraints(&self) -> usize {
        self.c.nrows()
    }

    fn apply_regularized_inverse(&self, rhs: &mut Mat<f64>) {
        let ld = LdltRef::<usize, f64>::new(&self.symbolic, &self.values);
        let req = self.symbolic.solve_in_place_scratch::<f64>(rhs.ncols(), Par::Seq);
        let mut mem = MemBuffer::new(req);
        ld.solve_in_place_with_conj(Conj::No, rhs.as_mut(), Par::Seq, MemStack::new(&mut mem));
    }

    /// Residual `(f, δ) − K (ψ, λ)` of the exact system for every column.
    fn kkt_residual(&self, x: &Mat<f64>, rhs: &Mat<f64>) -> Mat<f64> {
        let (n, m) = (self.n_primal(), self.n_constraints());
        let mut r = rhs.clone();
        for col in 0..x.ncols() {
            for i in 0..n {
                let (cols, vals) = self.a.row(i);
                let s: f64 = cols.iter().zip(vals).map(|(&j, &v)| v * x[(j, col)]).sum();
                r[(i, col)] -= s;
            }
            for q in 0..m {
                let (cols, vals) = self.c.row(q);
                let mut s = 0.0;
                let lam = x[(n + q, col)];
                for (&j, &v) in cols.iter().zip(vals) {
                    s += v * x[(j, col)];
                    r[(j, col)] -= v * lam;
                }
                r[(n + q, col)] -= s;
            }
        }
        r
    }

    /// Solves for each column of `delta` (length `m`) with zero primal load.
    /// Returns the primal solutions, one `Vec` per column, and the final
    /// max-norm KKT residual.
    pub fn solve_constraints(&self, delta: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
        let (n, m) = (self.n_primal(), self.n_constraints());
        let rhs = Mat::from_fn(n + m, delta.len(), |i, c| if i < n { 0.0 } else { delta[c][i - n] });
        let mut x = rhs.clone();
        self.apply_regularized_inverse(&mut x);
        let max_abs = |r: &Mat<f64>| {
            let mut v = 0.0f64;
            for c in 0..r.ncols() {
                for i in 0..r.nrows() {
                    v = v.max(r[(i, c)].abs());
                }
            }
            v
        };
        let scale = self.a.max_abs().max(1.0);
        let mut r = self.kkt_residual(&x, &rhs);
        let mut res = max_abs(&r);
        for _ in 0..MAX_REFINE {
            if res <= 1e-14 * scale {
                break;
            }
            let mut d = r.clone();
            self.apply_regularized_inverse(&mut d);
            let trial = &x + &d;
            let rt = self.kkt_residual(&trial, &rhs);
            let rt_max = max_abs(&rt);
            if rt_max >= res {
                break;
            }
            x = trial;
            r = rt;
            res = rt_max;
        }
        let out = (0..delta.len())
            .map(|c| (0..n).map(|i| x[(i, c)]).collect())
            .collect();
        (out, res)
    }
}

/// Dense factorization for the coarse systems: Cholesky when possible,
/// partial-pivot LU otherwise.
pub enum DenseSolver {
    Cholesky(DenseLlt<f64>),
    Lu(PartialPivLu<f64>),
}

impl DenseSolver {
    pub fn new(a: &Mat<f64>, try_cholesky: bool) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(NlmcError::DimensionMismatch {
                what: "square matrix",
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        if try_cholesky {
            if let Ok(llt) = a.llt(Side::Lower) {
                return Ok(DenseSolver::Cholesky(llt));
            }
            log::debug!("dense Cholesky failed, using LU");
        }
        let lu = a.partial_piv_lu();
        // Detect exact singularity through the diagonal of U.
        let u = lu.U();
        let umax = (0..u.nrows()).map(|i| u[(i, i)].abs()).fold(0.0, f64::max);
        if (0..u.nrows()).any(|i| !(u[(i, i)].abs() > 1e-14 * umax)) {
            return Err(NlmcError::SingularSystem);
        }
        Ok(DenseSolver::Lu(lu))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = col_to_mat(b);
        match self {
            DenseSolver::Cholesky(f) => f.solve_in_place(x.as_mut()),
            DenseSolver::Lu(f) => f.solve_in_place(x.as_mut()),
        }
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }
}
