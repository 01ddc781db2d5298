//! Scenario configuration and the per-scenario driver: fine reference,
//! basis construction (cached), coarse solves and error rows.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "laplace"
//! problem = "laplace"            # laplace | elasticity | parabolic
//! h = 0.00625
//! grids = [[20, 20], [40, 40]]
//! layers = [1, 2, 3, 4, 6]
//! basis_types = ["type1", "type2"]
//! source = 0.0                   # f, scalar problems
//! traction = [1.0, 1.0]          # elasticity only
//!
//! [geometry]
//! file = "../data/perforated_400.toml"   # or a [geometry.generator] table
//!
//! [boundary]                     # optional; overrides the geometry file
//! left = "dirichlet"
//! right = "neumann"
//! bottom = "dirichlet"
//! top = "neumann"
//!
//! [perforation]
//! kind = "neumann"               # or "robin" with alpha
//! g = 1.0
//!
//! [time]                         # parabolic only
//! t_max = 0.005
//! n_steps = 20
//! snapshots = [5, 10, 15, 20]
//! initial = 0.0
//! ```
//!
//! Further optional keys: `material` (k, c, young, poisson),
//! `perforation_storage`, `weighted_error`, `export_fields`
//! (`none | max_layers | all`), `dump_systems`, `output`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::{coarse_dof_count, BasisType, Discretization, ProjectionMatrix};
use crate::coarse::{build_coarse_grid, index_perforation_segments, CoarseGrid, PerforationSegmentIndex};
use crate::error::{NlmcError, Result};
use crate::experiment::{reference_percent, ReferenceKey};
use crate::fem::{
    assemble_load, assemble_load_elasticity, assemble_mass, assemble_robin_boundary, assemble_stiffness_elasticity,
    assemble_stiffness_laplace, fine_time_march, restrict_matrix, MaterialParams,
};
use crate::geometry::{BoundaryKind, BoundaryRules, LayoutGenerator, PerforatedGeometry, Rect};
use crate::io::{write_reports_csv, write_vtk_file, BasisCache, BasisKey, VtkField};
use crate::mesh::{build_fine_mesh, DofMap, FineMesh};
use crate::metrics::{cell_average, coarse_cell_field, relative_l2, CellAverageField, ErrorReport};
use crate::solver::SpdSolver;
use crate::sparse::SparseMatrix;
use crate::upscale::{
    assemble_parabolic, assemble_robin, assemble_robin_integrated, assemble_steady, integrate_load, coarse_time_march, continuum_measures, downscale, solve_steady,
    LumpedParams, UpscaledSystem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemClass {
    Laplace,
    Elasticity,
    Parabolic,
}

impl ProblemClass {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Laplace => "laplace",
            Self::Elasticity => "elasticity",
            Self::Parabolic => "parabolic",
        }
    }

    pub fn ncomp(self) -> usize {
        if self == Self::Elasticity {
            2
        } else {
            1
        }
    }

    pub fn components(self) -> &'static [&'static str] {
        if self == Self::Elasticity {
            &["ux", "uy"]
        } else {
            &["u"]
        }
    }
}

/// Condition on the perforation boundaries of scalar problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PerforationBc {
    /// `-k ∂u/∂n = g`, i.e. flux `g` into the domain.
    Neumann { g: f64 },
    /// `-k ∂u/∂n = α (u − g)`.
    Robin { alpha: f64, g: f64 },
}

impl Default for PerforationBc {
    fn default() -> Self {
        Self::Neumann { g: 1.0 }
    }
}

impl PerforationBc {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Neumann { .. } => "neumann",
            Self::Robin { .. } => "robin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<LayoutGenerator>,
    #[serde(default = "Rect::unit")]
    pub domain: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeSettings {
    pub t_max: f64,
    pub n_steps: usize,
    pub snapshots: Vec<usize>,
    pub initial: f64,
}

impl Default for TimeSettings {
    fn default() -> Self {
        Self {
            t_max: 0.005,
            n_steps: 20,
            snapshots: vec![5, 10, 15, 20],
            initial: 0.0,
        }
    }
}

impl TimeSettings {
    pub fn tau(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }
}

/// How the coarse load and Robin terms of parabolic problems are formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadLumping {
    /// Integrals of the basis functions against the fine load and boundary
    /// mass (`q̄ = R b`, `C_ii = α ∫_Γ ψ_i`).
    #[default]
    BasisIntegrals,
    /// `f |K| + g |γ|` and `α |γ|` from segment measures; ignores edges of
    /// perforations clipped out of every segment.
    ClosedForm,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFields {
    None,
    #[default]
    MaxLayers,
    All,
}

fn default_traction() -> [f64; 2] {
    [1.0, 1.0]
}

fn default_true() -> bool {
    true
}

/// One study: a geometry, an operator and a sweep over grids, basis types and
/// oversampling layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub problem: ProblemClass,
    pub h: f64,
    pub grids: Vec<[usize; 2]>,
    pub layers: Vec<usize>,
    pub basis_types: Vec<BasisType>,
    #[serde(default)]
    pub source: f64,
    #[serde(default = "default_traction")]
    pub traction: [f64; 2],
    /// Storage coefficient per unit length of perforation continua.
    #[serde(default)]
    pub perforation_storage: f64,
    #[serde(default)]
    pub load_lumping: LoadLumping,
    #[serde(default = "default_true")]
    pub weighted_error: bool,
    #[serde(default)]
    pub export_fields: ExportFields,
    #[serde(default)]
    pub dump_systems: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub geometry: GeometrySource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryRules>,
    #[serde(default)]
    pub perforation: PerforationBc,
    #[serde(default)]
    pub time: TimeSettings,
    #[serde(default)]
    pub material: MaterialParams,
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| NlmcError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| NlmcError::Config(e.to_string()))
    }

    /// Reads a scenario; a relative geometry file is resolved against the
    /// directory of `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec = Self::from_toml(&fs::read_to_string(path)?)?;
        if let Some(file) = &spec.geometry.file {
            if file.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                spec.geometry.file = Some(base.join(file));
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NlmcError::Config(format!("scenario `{}`: {m}", self.name)));
        if self.grids.is_empty() || self.layers.is_empty() || self.basis_types.is_empty() {
            return bad("grids, layers and basis_types must be non-empty");
        }
        if self.grids.iter().any(|g| g[0] == 0 || g[1] == 0) {
            return bad("coarse grids need at least one block per direction");
        }
        if !(self.h > 0.0) {
            return bad("h must be positive");
        }
        match (&self.geometry.file, &self.geometry.generator) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return bad("geometry needs exactly one of `file` or `generator`"),
        }
        if self.problem == ProblemClass::Parabolic {
            let t = &self.time;
            if t.n_steps == 0 || !(t.t_max > 0.0) {
                return bad("time horizon and step count must be positive");
            }
            if t.snapshots.is_empty() || t.snapshots.iter().any(|&s| s > t.n_steps) {
                return bad("snapshots must be non-empty and at most n_steps");
            }
        } else if matches!(self.perforation, PerforationBc::Robin { .. }) {
            return bad("Robin perforation conditions are supported for parabolic problems only");
        }
        Ok(())
    }

    /// Parameters with time step and Robin coefficient filled in.
    pub fn resolved_material(&self) -> MaterialParams {
        let mut m = self.material.clone();
        m.n_steps = self.time.n_steps;
        m.tau = self.time.tau();
        m.alpha = match self.perforation {
            PerforationBc::Robin { alpha, .. } => alpha,
            PerforationBc::Neumann { .. } => 0.0,
        };
        m
    }

    pub fn load_geometry(&self) -> Result<PerforatedGeometry> {
        let mut geom = match (&self.geometry.file, &self.geometry.generator) {
            (Some(f), _) => PerforatedGeometry::load(f)?,
            (None, Some(g)) => g.generate(self.geometry.domain, BoundaryRules::default())?,
            (None, None) => return Err(NlmcError::Config("no geometry source".into())),
        };
        if let Some(b) = self.boundary {
            geom.boundary = b;
        }
        Ok(geom)
    }

    /// Snapshot steps in output order; steady problems have the single step 0.
    pub fn steps(&self) -> Vec<usize> {
        if self.problem == ProblemClass::Parabolic {
            self.time.snapshots.clone()
        } else {
            vec![0]
        }
    }

    /// Operator signature used in basis cache keys.
    pub fn operator_signature(&self, geom: &PerforatedGeometry) -> String {
        let b = geom.boundary;
        let side = |k: BoundaryKind| if k == BoundaryKind::Dirichlet { 'D' } else { 'N' };
        let m = &self.material;
        let coeffs = match self.problem {
            ProblemClass::Elasticity => format!("E={:e} nu={:e}", m.e, m.nu),
            _ => format!("k={:?}", m.k),
        };
        let operator = if self.problem == ProblemClass::Elasticity { "elasticity" } else { "diffusion" };
        format!(
            "{operator} {coeffs} {}{}{}{}",
            side(b.left),
            side(b.right),
            side(b.bottom),
            side(b.top)
        )
    }
}

/// Fine-scale operator and reference solution at every snapshot.
pub struct FineProblem {
    pub geometry: PerforatedGeometry,
    pub mesh: FineMesh,
    pub dofs: DofMap,
    /// Stiffness over free dofs.
    pub stiffness: SparseMatrix,
    /// Load over free dofs (without Robin terms).
    pub load: Vec<f64>,
    /// Row sums `B 1` of the Robin boundary mass and the Robin load, over
    /// free dofs.
    pub robin: Option<(Vec<f64>, Vec<f64>)>,
    /// `(step, time, slot vector)`.
    pub snapshots: Vec<(usize, f64, Vec<f64>)>,
}

impl FineProblem {
    pub fn build(spec: &ScenarioSpec, geometry: PerforatedGeometry) -> Result<Self> {
        let mesh = build_fine_mesh(&geometry, spec.h)?;
        let params = spec.resolved_material();
        params.validate(mesh.triangles.len())?;
        let ntri = mesh.triangles.len();
        let (dofs, a_full, b_full) = match spec.problem {
            ProblemClass::Elasticity => {
                let t = spec.traction;
                let g: Vec<[f64; 2]> = mesh
                    .facets
                    .iter()
                    .map(|f| if f.tag.perforation().is_some() { t } else { [0.0; 2] })
                    .collect();
                let b = assemble_load_elasticity(&mesh, &vec![[0.0; 2]; ntri], &g);
                (mesh.elastic_dof_map(), assemble_stiffness_elasticity(&mesh, &params)?, b)
            }
            _ => {
                let g = match spec.perforation {
                    PerforationBc::Neumann { g } => g,
                    PerforationBc::Robin { .. } => 0.0,
                };
                let b = assemble_load(&mesh, &vec![spec.source; ntri], &mesh.perforation_field(g));
                (mesh.dof_map.clone(), assemble_stiffness_laplace(&mesh, &params)?, b)
            }
        };
        let stiffness = restrict_matrix(&a_full, &dofs);
        let load = dofs.restrict(&b_full);
        let mut robin_terms = None;
        let snapshots = match spec.problem {
            ProblemClass::Parabolic => {
                let s = restrict_matrix(&assemble_mass(&mesh, &params)?, &dofs);
                let (robin, rhs) = match spec.perforation {
                    PerforationBc::Robin { g, .. } => {
                        let (bm, r) = assemble_robin_boundary(&mesh, &params, &mesh.perforation_field(g));
                        let weights = dofs.restrict(&bm.mul_vec(&vec![1.0; bm.ncols()]));
                        robin_terms = Some((weights, dofs.restrict(&r)));
                        (Some(restrict_matrix(&bm, &dofs)), dofs.restrict(&r))
                    }
                    PerforationBc::Neumann { .. } => (None, vec![0.0; dofs.ndof()]),
                };
                let total: Vec<f64> = load.iter().zip(&rhs).map(|(a, b)| a + b).collect();
                let u0 = vec![spec.time.initial; dofs.ndof()];
                let tau = spec.time.tau();
                let hist = fine_time_march(
                    &s,
                    &stiffness,
                    robin.as_ref(),
                    &total,
                    &u0,
                    tau,
                    spec.time.n_steps,
                    &spec.time.snapshots,
                )?;
                hist.into_iter()
                    .map(|(k, u)| (k, k as f64 * tau, dofs.expand(&u)))
                    .collect()
            }
            _ => {
                let u = SpdSolver::new(&stiffness)?.solve(&load)?;
                vec![(0, 0.0, dofs.expand(&u))]
            }
        };
        Ok(Self {
            geometry,
            mesh,
            dofs,
            stiffness,
            load,
            robin: robin_terms,
            snapshots,
        })
    }

    pub fn ncomp(&self) -> usize {
        self.dofs.ncomp()
    }
}

/// Where a run writes, and whether bases are cached.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub cache: Option<BasisCache>,
}

/// Rows and bookkeeping of one scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub reports: Vec<ErrorReport>,
    pub failed_cells: usize,
    pub dof_f: usize,
    pub geometry_hash: String,
}

#[derive(Serialize)]
struct Provenance<'a> {
    geometry_hash: &'a str,
    perforations: usize,
    fine_nodes: usize,
    fine_triangles: usize,
    dof_f: usize,
    threads: usize,
    version: &'static str,
}

#[derive(Serialize)]
struct ResolvedConfig<'a> {
    #[serde(flatten)]
    spec: &'a ScenarioSpec,
    resolved: Provenance<'a>,
}

/// Coarse grid with its segment index.
pub struct CoarseSetup {
    pub grid: CoarseGrid,
    pub segments: PerforationSegmentIndex,
}

impl CoarseSetup {
    pub fn new(mesh: &FineMesh, nx: usize, ny: usize) -> Result<Self> {
        let grid = build_coarse_grid(mesh, nx, ny)?;
        let segments = index_perforation_segments(mesh, &grid);
        Ok(Self { grid, segments })
    }
}

/// Builds (or loads) `R` for one cell.
pub fn projection_for(
    spec: &ScenarioSpec,
    fine: &FineProblem,
    disc: &Discretization,
    s: usize,
    basis_type: BasisType,
    cache: Option<&BasisCache>,
) -> Result<ProjectionMatrix> {
    let key = BasisKey {
        geometry_hash: fine.geometry.content_hash(),
        h: spec.h,
        nx: disc.grid.nx,
        ny: disc.grid.ny,
        layers: s,
        basis_type,
        operator: spec.operator_signature(&fine.geometry),
    };
    if let Some(c) = cache {
        match c.load(&key) {
            Ok(Some(r)) if r.n_fine() == disc.dofs.ndof() => {
                log::debug!("basis cache hit {}", key.file_name());
                return Ok(r);
            }
            Ok(_) => {}
            Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", key.file_name()),
        }
    }
    let r = disc.build_basis(s, basis_type)?;
    if let Some(c) = cache {
        c.store(&key, &r)?;
    }
    Ok(r)
}

/// Coarse solution and upscaled system of one cell.
pub struct CellSolution {
    pub projection: ProjectionMatrix,
    pub system: UpscaledSystem,
    /// `(step, coarse vector)` aligned with the fine snapshots.
    pub states: Vec<(usize, Vec<f64>)>,
}

pub fn solve_cell(
    spec: &ScenarioSpec,
    fine: &FineProblem,
    coarse: &CoarseSetup,
    disc: &Discretization,
    s: usize,
    basis_type: BasisType,
    cache: Option<&BasisCache>,
) -> Result<CellSolution> {
    let r = projection_for(spec, fine, disc, s, basis_type, cache)?;
    let expected = coarse_dof_count(&coarse.grid, &coarse.segments, basis_type, fine.ncomp());
    if r.n_coarse() != expected {
        return Err(NlmcError::DimensionMismatch {
            what: "coarse unknowns",
            expected,
            found: r.n_coarse(),
        });
    }
    let (system, states) = match spec.problem {
        ProblemClass::Parabolic => {
            let merged = basis_type == BasisType::Type1;
            let measures = continuum_measures(&r.labels, &coarse.grid, &coarse.segments, merged);
            let g = match spec.perforation {
                PerforationBc::Neumann { g } => g,
                PerforationBc::Robin { .. } => 0.0,
            };
            let lumped = LumpedParams {
                c: spec.material.c,
                perforation_storage: spec.perforation_storage,
                f: spec.source,
                g,
            };
            let mut sys = assemble_parabolic(&r, &fine.stiffness, &measures, lumped)?;
            match spec.load_lumping {
                LoadLumping::BasisIntegrals => {
                    sys = integrate_load(sys, &r, &fine.load)?;
                    if let Some((weights, load)) = &fine.robin {
                        sys = assemble_robin_integrated(sys, &r, weights, load)?;
                    }
                }
                LoadLumping::ClosedForm => {
                    if let PerforationBc::Robin { alpha, g } = spec.perforation {
                        sys = assemble_robin(sys, alpha, g, &measures)?;
                    }
                }
            }
            let u0 = vec![spec.time.initial; sys.size()];
            let hist = coarse_time_march(&sys, &u0, spec.time.tau(), spec.time.n_steps, &spec.time.snapshots)?;
            (sys, hist)
        }
        _ => {
            let sys = assemble_steady(&r, &fine.stiffness, &fine.load)?;
            let u = solve_steady(&sys)?;
            (sys, vec![(0, u)])
        }
    };
    Ok(CellSolution {
        projection: r,
        system,
        states,
    })
}

fn cell_tag(nx: usize, ny: usize, basis_type: BasisType, s: usize) -> String {
    format!("{nx}x{ny}_{basis_type}_s{s}")
}

fn broadcast(field: &CellAverageField, grid: &CoarseGrid, mesh: &FineMesh) -> Vec<f64> {
    let nc = field.ncomp;
    let mut out = vec![0.0; mesh.triangles.len() * nc];
    for (b, block) in grid.blocks.iter().enumerate() {
        for &t in &block.triangles {
            for c in 0..nc {
                out[t * nc + c] = field.get(b, c);
            }
        }
    }
    out
}

/// Runs every (grid, type, s) cell of `spec`. A failing cell yields
/// `status = "failed"` rows; only failures of the shared fine stage abort.
pub fn run_scenario(spec: &ScenarioSpec, opts: &RunOptions) -> Result<ScenarioOutcome> {
    spec.validate()?;
    let started = Instant::now();
    let geometry = spec.load_geometry()?;
    let geometry_hash = geometry.content_hash();
    let fine = FineProblem::build(spec, geometry)?;
    let ncomp = fine.ncomp();
    let dof_f = fine.dofs.ndof();
    log::info!(
        "{}: fine mesh {} nodes, {} dofs, reference ready in {:.1?}",
        spec.name,
        fine.mesh.nodes.len(),
        dof_f,
        started.elapsed()
    );

    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir)?;
        fine.geometry.save(&dir.join("geometry.toml"))?;
        let resolved = ResolvedConfig {
            spec,
            resolved: Provenance {
                geometry_hash: &geometry_hash,
                perforations: fine.geometry.perforations.len(),
                fine_nodes: fine.mesh.nodes.len(),
                fine_triangles: fine.mesh.triangles.len(),
                dof_f,
                threads: current_threads(),
                version: env!("CARGO_PKG_VERSION"),
            },
        };
        let text = toml::to_string(&resolved).map_err(|e| NlmcError::Config(e.to_string()))?;
        fs::write(dir.join("resolved_config.toml"), text)?;
        if spec.dump_systems {
            let sys_dir = dir.join("systems");
            fs::create_dir_all(&sys_dir)?;
            fine.stiffness
                .write_triplets(BufWriter::new(File::create(sys_dir.join("fine_stiffness.txt"))?))?;
        }
    }

    let steps = spec.steps();
    let max_layers = spec.layers.iter().copied().max().unwrap_or(0);
    let components = spec.problem.components();
    let base_row = |nx: usize, ny: usize, bt: BasisType, s: usize, step: usize, comp: usize| ErrorReport {
        scenario: spec.name.clone(),
        problem: spec.problem.as_str().into(),
        nx,
        ny,
        basis_type: bt.as_str().into(),
        layers: s,
        step,
        time: if spec.problem == ProblemClass::Parabolic { step as f64 * spec.time.tau() } else { 0.0 },
        component: components[comp].into(),
        error_percent: None,
        reference_percent: reference_percent(&ReferenceKey {
            problem: spec.problem,
            perforation: spec.perforation.kind(),
            nx,
            ny,
            basis_type: bt,
            layers: s,
            step,
            component: comp,
        }),
        dof_f,
        dof_c: 0,
        status: "failed".into(),
        message: String::new(),
    };
    let failed_rows = |nx, ny, bt, s, msg: &str| -> Vec<ErrorReport> {
        let mut rows = Vec::new();
        for &step in &steps {
            for c in 0..ncomp {
                let mut r = base_row(nx, ny, bt, s, step, c);
                r.message = msg.to_string();
                rows.push(r);
            }
        }
        rows
    };

    let mut reports = Vec::new();
    let mut failed_cells = 0;
    for &[nx, ny] in &spec.grids {
        let cells: Vec<(BasisType, usize)> = spec
            .basis_types
            .iter()
            .flat_map(|&bt| spec.layers.iter().map(move |&s| (bt, s)))
            .collect();
        let setup = CoarseSetup::new(&fine.mesh, nx, ny).and_then(|coarse| {
            let refs = fine
                .snapshots
                .iter()
                .map(|(_, _, u)| cell_average(u, ncomp, &fine.mesh, &coarse.grid))
                .collect::<Result<Vec<_>>>()?;
            Ok((coarse, refs))
        });
        let (coarse, refs) = match setup {
            Ok(v) => v,
            Err(e) => {
                log::error!("{}: grid {nx}x{ny}: {e}", spec.name);
                for &(bt, s) in &cells {
                    failed_cells += 1;
                    reports.extend(failed_rows(nx, ny, bt, s, &e.to_string()));
                }
                continue;
            }
        };
        let disc = Discretization::new(
            &fine.mesh,
            &coarse.grid,
            &coarse.segments,
            fine.dofs.clone(),
            fine.stiffness.clone(),
        );

        let run_cell = |&(bt, s): &(BasisType, usize)| -> Result<Vec<ErrorReport>> {
            let t0 = Instant::now();
            let sol = solve_cell(spec, &fine, &coarse, &disc, s, bt, opts.cache.as_ref())?;
            let tag = cell_tag(nx, ny, bt, s);
            let export = match spec.export_fields {
                ExportFields::None => false,
                ExportFields::MaxLayers => s == max_layers,
                ExportFields::All => true,
            };
            let mut rows = Vec::new();
            for ((step, _, u_fine), (coarse_step, u)) in fine.snapshots.iter().zip(&sol.states) {
                debug_assert_eq!(step, coarse_step);
                let reference = &refs[fine.snapshots.iter().position(|x| x.0 == *step).unwrap_or(0)];
                let field = coarse_cell_field(u, &sol.projection.labels, ncomp, &coarse.grid);
                for c in 0..ncomp {
                    let mut row = base_row(nx, ny, bt, s, *step, c);
                    row.dof_c = sol.projection.n_coarse();
                    match relative_l2(reference, &field, c, spec.weighted_error) {
                        Ok(e) => {
                            row.error_percent = Some(e);
                            row.status = "ok".into();
                        }
                        Err(e) => row.message = e.to_string(),
                    }
                    rows.push(row);
                }
                if let (true, Some(dir)) = (export, &opts.out_dir) {
                    let fields_dir = dir.join("fields");
                    fs::create_dir_all(&fields_dir)?;
                    let ms = fine.dofs.expand(&downscale(&sol.projection, u)?);
                    let avg_f = broadcast(reference, &coarse.grid, &fine.mesh);
                    let avg_c = broadcast(&field, &coarse.grid, &fine.mesh);
                    write_vtk_file(
                        &fields_dir.join(format!("{tag}_step{step}.vtk")),
                        &fine.mesh,
                        &format!("{} {tag} step {step}", spec.name),
                        &[
                            VtkField { name: "fine", ncomp, values: u_fine },
                            VtkField { name: "downscaled", ncomp, values: &ms },
                        ],
                        &[
                            VtkField { name: "fine_cell_average", ncomp, values: &avg_f },
                            VtkField { name: "coarse_cell_value", ncomp, values: &avg_c },
                        ],
                    )?;
                }
            }
            if let (true, Some(dir)) = (spec.dump_systems, &opts.out_dir) {
                let p = dir.join("systems").join(format!("coarse_{tag}.txt"));
                sol.system.write_dump(BufWriter::new(File::create(p)?))?;
            }
            log::info!(
                "{}: {tag} done in {:.1?} (DOF_c {}, max constraint residual {:.1e})",
                spec.name,
                t0.elapsed(),
                sol.projection.n_coarse(),
                sol.projection.max_constraint_residual()
            );
            Ok(rows)
        };

        for (cell, result) in cells.iter().zip(map_cells(&cells, run_cell)) {
            match result {
                Ok(rows) => reports.extend(rows),
                Err(e) => {
                    log::error!("{}: {} failed: {e}", spec.name, cell_tag(nx, ny, cell.0, cell.1));
                    failed_cells += 1;
                    reports.extend(failed_rows(nx, ny, cell.0, cell.1, &e.to_string()));
                }
            }
        }
    }

    if let Some(dir) = &opts.out_dir {
        write_reports_csv(BufWriter::new(File::create(dir.join("errors.csv"))?), &reports)?;
    }
    log::info!("{}: finished in {:.1?}", spec.name, started.elapsed());
    Ok(ScenarioOutcome {
        reports,
        failed_cells,
        dof_f,
        geometry_hash,
    })
}

/// Cells run as a job pool; results come back in input order.
#[cfg(feature = "parallel")]
fn map_cells<T, F>(cells: &[(BasisType, usize)], f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(&(BasisType, usize)) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    cells.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_cells<T, F>(cells: &[(BasisType, usize)], f: F) -> Vec<Result<T>>
where
    F: Fn(&(BasisType, usize)) -> Result<T>,
{
    cells.iter().map(f).collect()
}

fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
