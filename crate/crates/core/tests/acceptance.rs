//! End-to-end acceptance suite on the shipped layout. Prints one PASS/FAIL
//! line per criterion and exits nonzero if any fails.
//!
//! The full run builds every basis of the study (several minutes on one core),
//! so it only executes when `NLMC_ACCEPTANCE=1`; otherwise each criterion is
//! reported as skipped. `NLMC_CACHE_DIR` reuses a basis cache across runs.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nlmc::basis::{build_constraints, coarse_dof_count, BasisType, Discretization, ProjectionMatrix};
use nlmc::coarse::oversample;
use nlmc::error::Result;
use nlmc::experiment::{preset, PRESETS};
use nlmc::fem::assemble_stiffness_elasticity;
use nlmc::io::BasisCache;
use nlmc::metrics::{cell_average, ErrorReport};
use nlmc::scenario::{
    projection_for, run_scenario, solve_cell, CoarseSetup, ExportFields, FineProblem, PerforationBc, RunOptions,
    ScenarioOutcome, ScenarioSpec,
};
use nlmc::upscale::downscale;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{segment_average, stationarity};

const CRITERIA: [&str; 9] = [
    "constraint_exactness",
    "minimizer_stationarity",
    "averaging_identity",
    "oracle_equivalence",
    "laplace_trend",
    "elasticity_trend",
    "parabolic_conservation",
    "robin_steady_limit",
    "dof_accounting",
];

type Verdict = (bool, String);

struct BasisRecord {
    scenario: String,
    grid: [usize; 2],
    basis_type: BasisType,
    layers: usize,
    n_coarse: usize,
    expected: usize,
    dof_f: usize,
    residual: f64,
    recomputed: f64,
}

struct Context {
    work: PathBuf,
    cache: BasisCache,
    warm_cache: bool,
    specs: HashMap<&'static str, ScenarioSpec>,
    fine: HashMap<&'static str, FineProblem>,
    basis_time: HashMap<&'static str, Duration>,
    bases: Vec<BasisRecord>,
    runs: HashMap<&'static str, (ScenarioOutcome, Duration)>,
}

fn spec(name: &str) -> ScenarioSpec {
    let mut s = preset(name).expect("preset exists");
    s.export_fields = ExportFields::None;
    s
}

fn discretization<'a>(fine: &'a FineProblem, coarse: &'a CoarseSetup) -> Discretization<'a> {
    Discretization::new(&fine.mesh, &coarse.grid, &coarse.segments, fine.dofs.clone(), fine.stiffness.clone())
}

/// `max |Cψ − δ|` over every row of `r`, rebuilding each constraint set from
/// the block functionals.
fn recompute_residual(disc: &Discretization, r: &ProjectionMatrix) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut psi = vec![0.0; r.n_fine()];
    for (row, label) in r.labels.iter().enumerate() {
        let region = oversample(disc.grid, label.block, r.layers);
        let set = build_constraints(&disc.functionals, &region, label.block, label.continuum, r.basis_type, label.direction)?;
        let (cols, vals) = r.matrix.row(row);
        for (&c, &v) in cols.iter().zip(vals) {
            psi[c] = v;
        }
        worst = worst.max(set.max_violation(&psi));
        for &c in cols {
            psi[c] = 0.0;
        }
    }
    Ok(worst)
}

/// Builds (or loads) every basis of every scenario.
fn basis_sweep(ctx: &mut Context) -> Result<()> {
    for name in PRESETS {
        let spec = &ctx.specs[name];
        let t0 = Instant::now();
        let fine = FineProblem::build(spec, spec.load_geometry()?)?;
        for &[nx, ny] in &spec.grids {
            let coarse = CoarseSetup::new(&fine.mesh, nx, ny)?;
            let disc = discretization(&fine, &coarse);
            for &bt in &spec.basis_types {
                for &s in &spec.layers {
                    let t = Instant::now();
                    let r = projection_for(spec, &fine, &disc, s, bt, Some(&ctx.cache))?;
                    let recomputed = recompute_residual(&disc, &r)?;
                    eprintln!("  {name} {nx}x{ny} {bt} s={s}: DOF_c {} residual {recomputed:.1e} ({:.1?})", r.n_coarse(), t.elapsed());
                    ctx.bases.push(BasisRecord {
                        scenario: name.to_string(),
                        grid: [nx, ny],
                        basis_type: bt,
                        layers: s,
                        n_coarse: r.n_coarse(),
                        expected: coarse_dof_count(&coarse.grid, &coarse.segments, bt, fine.ncomp()),
                        dof_f: fine.dofs.ndof(),
                        residual: r.max_constraint_residual(),
                        recomputed,
                    });
                }
            }
        }
        ctx.basis_time.insert(name, t0.elapsed());
        ctx.fine.insert(name, fine);
    }
    Ok(())
}

fn scenario_runs(ctx: &mut Context) -> Result<()> {
    for name in PRESETS {
        let t0 = Instant::now();
        let opts = RunOptions {
            out_dir: Some(ctx.work.join(name)),
            cache: Some(ctx.cache.clone()),
        };
        let outcome = run_scenario(&ctx.specs[name], &opts)?;
        eprintln!("  {name}: {} rows, {} failed cells ({:.1?})", outcome.reports.len(), outcome.failed_cells, t0.elapsed());
        ctx.runs.insert(name, (outcome, t0.elapsed()));
    }
    Ok(())
}

fn constraint_exactness(ctx: &Context) -> Result<Verdict> {
    let worst = ctx.bases.iter().map(|b| b.recomputed.max(b.residual)).fold(0.0, f64::max);
    let total: Duration = ctx.basis_time.values().sum();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let ok = worst <= 1e-8 && total < Duration::from_secs(180);
    Ok((
        ok,
        format!(
            "max |C psi - delta| {worst:.2e} over {} projections; sweep {:.0} s on {threads} thread(s), limit 180 s{}",
            ctx.bases.len(),
            total.as_secs_f64(),
            if ctx.warm_cache { " (warm cache)" } else { " (cold cache)" }
        ),
    ))
}

fn minimizer_stationarity(ctx: &Context) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut sampled = 0;
    for (name, grid, s) in [("laplace", 20, 2), ("laplace", 20, 6), ("laplace", 40, 1), ("elasticity", 20, 2), ("elasticity", 20, 4)] {
        let spec = &ctx.specs[name];
        let fine = &ctx.fine[name];
        let coarse = CoarseSetup::new(&fine.mesh, grid, grid)?;
        let disc = discretization(fine, &coarse);
        for &bt in &spec.basis_types {
            let r = projection_for(spec, fine, &disc, s, bt, Some(&ctx.cache))?;
            let mut rows: Vec<usize> = (0..6).map(|_| rng.gen_range(0..r.n_coarse())).collect();
            rows.extend(r.labels.iter().position(|l| l.continuum > 0));
            for row in rows {
                worst = worst.max(stationarity(&disc, &r, row, 20, &mut rng));
                sampled += 1;
            }
        }
    }
    Ok((worst <= 1e-8, format!("max |a(psi,v)|/(|psi|_a |v|_a) {worst:.2e} over {sampled} bases x 20 directions")))
}

fn averaging_identity(ctx: &Context) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut cell_err, mut seg_err) = (0.0f64, 0.0f64);
    for (name, grid, s, bt) in [
        ("laplace", 20, 3, BasisType::Type1),
        ("laplace", 40, 2, BasisType::Type2),
        ("elasticity", 20, 2, BasisType::Type1),
    ] {
        let spec = &ctx.specs[name];
        let fine = &ctx.fine[name];
        let coarse = CoarseSetup::new(&fine.mesh, grid, grid)?;
        let disc = discretization(fine, &coarse);
        let r = projection_for(spec, fine, &disc, s, bt, Some(&ctx.cache))?;
        let nc = disc.ncomp();
        for _ in 0..3 {
            let ubar: Vec<f64> = (0..r.n_coarse()).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let u = disc.dofs.expand(&downscale(&r, &ubar)?);
            let avg = cell_average(&u, nc, &fine.mesh, &coarse.grid)?;
            for (l, &v) in r.labels.iter().zip(&ubar) {
                if l.continuum == 0 {
                    cell_err = cell_err.max((avg.get(l.block, l.component()) - v).abs());
                } else {
                    seg_err = seg_err.max((segment_average(&fine.mesh, &coarse.segments, &u, nc, l, bt) - v).abs());
                }
            }
        }
    }
    Ok((
        cell_err <= 1e-9 && seg_err <= 1e-9,
        format!("max cell-average error {cell_err:.2e}, max segment-average error {seg_err:.2e}"),
    ))
}

fn oracle_equivalence(ctx: &Context) -> Result<Verdict> {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for name in ["laplace", "elasticity"] {
        let spec = &ctx.specs[name];
        let fine = &ctx.fine[name];
        let coarse = CoarseSetup::new(&fine.mesh, 4, 4)?;
        let disc = discretization(fine, &coarse);
        let u_f = fine.dofs.restrict(&fine.snapshots[0].2);
        for bt in [BasisType::Type1, BasisType::Type2] {
            let sol = solve_cell(spec, fine, &coarse, &disc, 4, bt, None)?;
            let mut scale = 0.0f64;
            let mut diff = 0.0f64;
            for (l, &v) in sol.projection.labels.iter().zip(&sol.states[0].1) {
                let row = disc.functionals.row(l.block, l.continuum, l.component(), bt);
                let avg: f64 = row.iter().map(|&(d, w)| w * u_f[d]).sum();
                diff = diff.max((avg - v).abs());
                scale = scale.max(avg.abs());
            }
            let rel = diff / scale.max(1.0);
            worst = worst.max(rel);
            parts.push(format!("{name} {bt} {rel:.1e}"));
        }
    }
    Ok((worst <= 1e-8, format!("4x4, s=4 (saturated): {}", parts.join(", "))))
}

fn errors<'a>(reports: &'a [ErrorReport], nx: usize, bt: &str, component: &str) -> Vec<&'a ErrorReport> {
    let mut v: Vec<&ErrorReport> = reports
        .iter()
        .filter(|r| r.nx == nx && r.basis_type == bt && r.component == component)
        .collect();
    v.sort_by_key(|r| (r.step, r.layers));
    v
}

fn err(reports: &[&ErrorReport], layers: usize) -> f64 {
    reports
        .iter()
        .find(|r| r.layers == layers)
        .and_then(|r| r.error_percent)
        .unwrap_or(f64::NAN)
}

fn strictly_decreasing(series: &[&ErrorReport]) -> bool {
    let e: Vec<f64> = series.iter().map(|r| r.error_percent.unwrap_or(f64::NAN)).collect();
    e.windows(2).all(|w| w[1] < w[0])
}

fn laplace_trend(ctx: &Context) -> Result<Verdict> {
    let (outcome, run_time) = &ctx.runs["laplace"];
    let reports = &outcome.reports;
    let mut ok = outcome.failed_cells == 0;
    let mut parts = Vec::new();
    for bt in ["type1", "type2"] {
        let (c, f) = (errors(reports, 20, bt, "u"), errors(reports, 40, bt, "u"));
        let (e1, e4, e6) = (err(&c, 1), err(&c, 4), err(&f, 6));
        ok &= e1 > 50.0 && e4 < 5.0 && e6 < 2.0 && strictly_decreasing(&c) && strictly_decreasing(&f);
        parts.push(format!("{bt}: 20x20 s=1 {e1:.2}%, s=4 {e4:.3}%; 40x40 s=6 {e6:.3}%"));
    }
    let total = ctx.basis_time["laplace"] + *run_time;
    ok &= total < Duration::from_secs(600);
    Ok((ok, format!("{}; runtime {:.0} s (limit 600 s)", parts.join("; "), total.as_secs_f64())))
}

fn elasticity_trend(ctx: &Context) -> Result<Verdict> {
    let (outcome, _) = &ctx.runs["elasticity"];
    let (ex, ey) = (
        err(&errors(&outcome.reports, 40, "type1", "ux"), 6),
        err(&errors(&outcome.reports, 40, "type1", "uy"), 6),
    );
    let mesh = &ctx.fine["elasticity"].mesh;
    let a = assemble_stiffness_elasticity(mesh, &ctx.specs["elasticity"].resolved_material())?;
    let mut rigid = 0.0f64;
    let modes: [fn([f64; 2]) -> [f64; 2]; 3] = [|_| [1.0, 0.0], |_| [0.0, 1.0], |p| [-p[1], p[0]]];
    for mode in modes {
        let v: Vec<f64> = mesh.nodes.iter().flat_map(|&p| mode(p)).collect();
        rigid = rigid.max(a.mul_vec(&v).iter().fold(0.0f64, |m, x| m.max(x.abs())) / a.max_abs());
    }
    let monotone = ["ux", "uy"]
        .iter()
        .all(|c| strictly_decreasing(&errors(&outcome.reports, 20, "type1", c)) && strictly_decreasing(&errors(&outcome.reports, 40, "type1", c)));
    Ok((
        ex < 5.0 && ey < 5.0 && rigid <= 1e-12 && outcome.failed_cells == 0,
        format!("40x40 s=6: ux {ex:.3}%, uy {ey:.3}%; rigid-body residual {rigid:.1e}·|A|; monotone in s: {monotone}"),
    ))
}

fn parabolic_conservation(ctx: &Context) -> Result<Verdict> {
    let base = &ctx.specs["parabolic_neumann"];
    let fine = &ctx.fine["parabolic_neumann"];
    let mut row_sum = 0.0f64;
    for &[nx, ny] in &base.grids {
        let coarse = CoarseSetup::new(&fine.mesh, nx, ny)?;
        let disc = discretization(fine, &coarse);
        for &bt in &base.basis_types {
            for s in [1, 6] {
                let sol = solve_cell(base, fine, &coarse, &disc, s, bt, Some(&ctx.cache))?;
                row_sum = row_sum.max(sol.system.max_row_sum() / sol.system.t_max_abs());
            }
        }
    }
    let mut spec = base.clone();
    spec.perforation = PerforationBc::Neumann { g: 0.0 };
    spec.source = 0.0;
    spec.time.initial = 1.0;
    spec.time.snapshots = vec![20];
    let still = FineProblem::build(&spec, spec.load_geometry()?)?;
    let fine_drift = still
        .dofs
        .restrict(&still.snapshots[0].2)
        .iter()
        .fold(0.0f64, |m, u| m.max((u - 1.0).abs()));
    let mut coarse_drift = 0.0f64;
    for (grid, s) in [(20, 2), (40, 6)] {
        let coarse = CoarseSetup::new(&still.mesh, grid, grid)?;
        let disc = discretization(&still, &coarse);
        for &bt in &spec.basis_types {
            let sol = solve_cell(&spec, &still, &coarse, &disc, s, bt, Some(&ctx.cache))?;
            for (_, u) in &sol.states {
                coarse_drift = coarse_drift.max(u.iter().fold(0.0, |m, x| m.max((x - 1.0).abs())));
            }
        }
    }
    Ok((
        row_sum <= 1e-10 && coarse_drift <= 1e-10 && fine_drift <= 1e-10,
        format!("max |row sum|/|T| {row_sum:.1e}; constant state after 20 steps: coarse drift {coarse_drift:.1e}, fine drift {fine_drift:.1e}"),
    ))
}

fn robin_steady_limit(ctx: &Context) -> Result<Verdict> {
    let (outcome, _) = &ctx.runs["parabolic_robin"];
    let mut snap = 0.0f64;
    for bt in ["type1", "type2"] {
        for r in errors(&outcome.reports, 40, bt, "u").iter().filter(|r| r.layers == 6) {
            snap = snap.max(r.error_percent.unwrap_or(f64::INFINITY));
        }
    }
    let mut spec = ctx.specs["parabolic_robin"].clone();
    let g = match spec.perforation {
        PerforationBc::Robin { g, .. } => g,
        PerforationBc::Neumann { .. } => unreachable!("robin preset"),
    };
    spec.time.t_max = 5.0;
    spec.time.n_steps = 100;
    spec.time.snapshots = vec![100];
    let fine = FineProblem::build(&spec, spec.load_geometry()?)?;
    let u_f = fine.dofs.restrict(&fine.snapshots[0].2);
    let (mut fine_dev, mut coarse_dev) = (0.0f64, 0.0f64);
    for (grid, s) in [(20, 1), (40, 6)] {
        let coarse = CoarseSetup::new(&fine.mesh, grid, grid)?;
        let disc = discretization(&fine, &coarse);
        for &bt in &spec.basis_types {
            let sol = solve_cell(&spec, &fine, &coarse, &disc, s, bt, Some(&ctx.cache))?;
            for (l, &v) in sol.projection.labels.iter().zip(&sol.states[0].1) {
                coarse_dev = coarse_dev.max((v - g).abs() / g);
                let row = disc.functionals.row(l.block, l.continuum, 0, bt);
                let avg: f64 = row.iter().map(|&(d, w)| w * u_f[d]).sum();
                fine_dev = fine_dev.max((avg - g).abs() / g);
            }
        }
    }
    Ok((
        fine_dev < 0.01 && coarse_dev < 0.01 && snap < 5.0 && outcome.failed_cells == 0,
        format!(
            "t=5: max |u - {g}|/{g} coarse {:.2e}, fine {:.2e}; 40x40 s=6 snapshot errors <= {snap:.3}%",
            coarse_dev, fine_dev
        ),
    ))
}

fn dof_accounting(ctx: &Context) -> Result<Verdict> {
    let mismatches = ctx.bases.iter().filter(|b| b.n_coarse != b.expected).count();
    let ratio = |name: &str| {
        ctx.bases
            .iter()
            .filter(|b| b.scenario == name && b.grid == [40, 40])
            .map(|b| b.n_coarse as f64 / b.dof_f as f64)
            .fold(0.0, f64::max)
    };
    let (rl, re) = (ratio("laplace"), ratio("elasticity"));
    let dofs: Vec<String> = ctx
        .bases
        .iter()
        .filter(|b| b.layers == 1 && b.scenario != "parabolic_robin")
        .map(|b| format!("{} {}x{} {} {}", b.scenario, b.grid[0], b.grid[1], b.basis_type, b.n_coarse))
        .collect();
    Ok((
        mismatches == 0 && rl < 0.2 && re < 0.2,
        format!("{mismatches} count mismatches; DOF_c/DOF_f at 40x40: laplace {rl:.3}, elasticity {re:.3}; {}", dofs.join(", ")),
    ))
}

fn judge(name: &str, f: impl FnOnce() -> Result<Verdict>) -> bool {
    let t0 = Instant::now();
    let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => v,
        Ok(Err(e)) => (false, format!("error: {e}")),
        Err(p) => (false, format!("panic: {}", p.downcast_ref::<String>().cloned().unwrap_or_default())),
    };
    println!("{} {name}: {detail} [{:.1?}]", if ok { "PASS" } else { "FAIL" }, t0.elapsed());
    ok
}

fn work_dir() -> (PathBuf, Option<tempfile::TempDir>) {
    match std::env::var_os("NLMC_ACCEPTANCE_OUT") {
        Some(p) => (PathBuf::from(p), None),
        None => {
            let t = tempfile::tempdir().expect("temp dir");
            (t.path().to_path_buf(), Some(t))
        }
    }
}

fn cache_at(path: &Path) -> (BasisCache, bool) {
    let warm = std::fs::read_dir(path).map(|mut d| d.next().is_some()).unwrap_or(false);
    (BasisCache::new(path).expect("cache dir"), warm)
}

fn main() -> ExitCode {
    if std::env::var("NLMC_ACCEPTANCE").map_or(true, |v| v.is_empty() || v == "0") {
        for name in CRITERIA {
            println!("SKIP {name}: set NLMC_ACCEPTANCE=1 to run the full suite");
        }
        return ExitCode::SUCCESS;
    }
    let (work, _guard) = work_dir();
    let cache_dir = std::env::var_os("NLMC_CACHE_DIR").map_or_else(|| work.join("cache"), PathBuf::from);
    let (cache, warm_cache) = cache_at(&cache_dir);
    let mut ctx = Context {
        work,
        cache,
        warm_cache,
        specs: PRESETS.iter().map(|&n| (n, spec(n))).collect(),
        fine: HashMap::new(),
        basis_time: HashMap::new(),
        bases: Vec::new(),
        runs: HashMap::new(),
    };
    eprintln!("basis sweep");
    if let Err(e) = basis_sweep(&mut ctx) {
        println!("FAIL {}: basis sweep aborted: {e}", CRITERIA[0]);
        return ExitCode::FAILURE;
    }
    eprintln!("scenario runs");
    if let Err(e) = scenario_runs(&mut ctx) {
        println!("FAIL scenario runs aborted: {e}");
        return ExitCode::FAILURE;
    }
    let ctx = &ctx;
    let checks: [(&str, &dyn Fn() -> Result<Verdict>); 9] = [
        (CRITERIA[0], &|| constraint_exactness(ctx)),
        (CRITERIA[1], &|| minimizer_stationarity(ctx)),
        (CRITERIA[2], &|| averaging_identity(ctx)),
        (CRITERIA[3], &|| oracle_equivalence(ctx)),
        (CRITERIA[4], &|| laplace_trend(ctx)),
        (CRITERIA[5], &|| elasticity_trend(ctx)),
        (CRITERIA[6], &|| parabolic_conservation(ctx)),
        (CRITERIA[7], &|| robin_steady_limit(ctx)),
        (CRITERIA[8], &|| dof_accounting(ctx)),
    ];
    let failed = checks.iter().filter(|(name, f)| !judge(name, f)).count();
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
