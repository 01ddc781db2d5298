use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nlmc::basis::{coarse_dof_count, BasisType, Discretization};
use nlmc::experiment::{preset, reproduce_tables, PRESETS};
use nlmc::io::{read_reports_csv, write_vtk_file, BasisCache, VtkField};
use nlmc::mesh::build_fine_mesh;
use nlmc::scenario::{projection_for, run_scenario, CoarseSetup, FineProblem, ProblemClass, RunOptions, ScenarioSpec};

/// NLMC upscaling on perforated domains.
#[derive(Parser)]
#[command(name = "nlmc", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Built-in scenario used when no config file is given.
    #[arg(long, global = true, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: Option<String>,
    /// Output directory.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(short = 'j', long, global = true)]
    threads: Option<usize>,
    /// Directory for cached bases.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Restrict to these coarse grids, e.g. `20x20`.
    #[arg(long, global = true, value_delimiter = ',')]
    grid: Vec<String>,
    /// Restrict to these oversampling layer counts.
    #[arg(long, global = true, value_delimiter = ',')]
    layers: Vec<usize>,
    /// Restrict to these basis types.
    #[arg(long = "type", global = true, value_delimiter = ',')]
    basis_type: Vec<String>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Build the geometry and fine mesh; write them with a summary.
    Mesh,
    /// Build (and cache) multiscale bases for every grid, type and layer count.
    Basis {
        /// Also write each projection matrix as triplets.
        #[arg(long)]
        dump: bool,
    },
    /// Run a steady scenario (Laplace or elasticity).
    Solve,
    /// Run a time-dependent scenario.
    March,
    /// Summarize an error CSV; fails if any row failed.
    Errors {
        /// CSV written by `solve`, `march` or `reproduce`.
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the whole study and write comparison tables.
    Reproduce {
        /// Directory of scenario files; built-in scenarios when omitted.
        #[arg(long)]
        configs: Option<PathBuf>,
    },
    /// Print a built-in scenario as TOML.
    Show,
}

fn parse_grid(s: &str) -> Result<[usize; 2]> {
    let (a, b) = s.split_once('x').with_context(|| format!("grid `{s}` is not of the form NXxNY"))?;
    Ok([a.trim().parse()?, b.trim().parse()?])
}

fn parse_type(s: &str) -> Result<BasisType> {
    match s.to_ascii_lowercase().as_str() {
        "type1" | "1" => Ok(BasisType::Type1),
        "type2" | "2" => Ok(BasisType::Type2),
        _ => bail!("unknown basis type `{s}`"),
    }
}

impl Common {
    fn spec(&self, fallback: &str) -> Result<ScenarioSpec> {
        let mut spec = match (&self.config, &self.preset) {
            (Some(path), _) => ScenarioSpec::load(path).with_context(|| format!("reading {}", path.display()))?,
            (None, Some(name)) => preset(name).expect("validated by clap"),
            (None, None) => preset(fallback).expect("known preset"),
        };
        if !self.grid.is_empty() {
            spec.grids = self.grid.iter().map(|g| parse_grid(g)).collect::<Result<_>>()?;
        }
        if !self.layers.is_empty() {
            spec.layers = self.layers.clone();
        }
        if !self.basis_type.is_empty() {
            spec.basis_types = self.basis_type.iter().map(|t| parse_type(t)).collect::<Result<_>>()?;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn out_dir(&self, spec: Option<&ScenarioSpec>, default: &str) -> PathBuf {
        self.out
            .clone()
            .or_else(|| spec.and_then(|s| s.output.clone()))
            .unwrap_or_else(|| Path::new("out").join(default))
    }

    fn cache(&self) -> Result<Option<BasisCache>> {
        Ok(match &self.cache_dir {
            Some(d) => Some(BasisCache::new(d)?),
            None => None,
        })
    }
}

fn cmd_mesh(common: &Common) -> Result<u8> {
    let spec = common.spec("laplace")?;
    let out = common.out_dir(Some(&spec), &spec.name);
    fs::create_dir_all(&out)?;
    let t0 = Instant::now();
    let geom = spec.load_geometry()?;
    let mesh = build_fine_mesh(&geom, spec.h)?;
    geom.save(&out.join("geometry.toml"))?;
    let fixed: Vec<f64> = (0..mesh.nodes.len())
        .map(|n| if mesh.dof_map.dof(n, 0).is_none() { 1.0 } else { 0.0 })
        .collect();
    let [nx, ny] = spec.grids[0];
    let setup = CoarseSetup::new(&mesh, nx, ny)?;
    let mut block = vec![0.0; mesh.triangles.len()];
    for (b, blk) in setup.grid.blocks.iter().enumerate() {
        for &t in &blk.triangles {
            block[t] = b as f64;
        }
    }
    write_vtk_file(
        &out.join("mesh.vtk"),
        &mesh,
        &format!("{} mesh", spec.name),
        &[VtkField { name: "dirichlet", ncomp: 1, values: &fixed }],
        &[VtkField { name: "coarse_block", ncomp: 1, values: &block }],
    )?;
    let inactive: usize = setup.segments.segments.iter().flatten().filter(|s| !s.active).count();
    println!("geometry   {} perforations, hash {}", geom.perforations.len(), &geom.content_hash()[..16]);
    println!("fine mesh  {} nodes, {} triangles, {} free scalar dofs", mesh.nodes.len(), mesh.triangles.len(), mesh.dof_map.ndof());
    println!("coarse     {nx}x{ny}: {} blocks, {inactive} single-edge segments ignored", setup.grid.n_blocks());
    println!("written    {} ({:.1?})", out.display(), t0.elapsed());
    Ok(0)
}

fn cmd_basis(common: &Common, dump: bool) -> Result<u8> {
    let spec = common.spec("laplace")?;
    let out = common.out_dir(Some(&spec), &spec.name);
    fs::create_dir_all(&out)?;
    let cache = common.cache()?;
    let fine = FineProblem::build(&spec, spec.load_geometry()?)?;
    let mut failed = 0u8;
    for &[nx, ny] in &spec.grids {
        let coarse = CoarseSetup::new(&fine.mesh, nx, ny)?;
        let disc = Discretization::new(&fine.mesh, &coarse.grid, &coarse.segments, fine.dofs.clone(), fine.stiffness.clone());
        for &bt in &spec.basis_types {
            for &s in &spec.layers {
                let t0 = Instant::now();
                match projection_for(&spec, &fine, &disc, s, bt, cache.as_ref()) {
                    Ok(r) => {
                        let expected = coarse_dof_count(&coarse.grid, &coarse.segments, bt, fine.ncomp());
                        println!(
                            "{nx}x{ny} {bt} s={s}: DOF_c {} (expected {expected}), nnz {}, max |C psi - delta| {:.1e}, {:.1?}",
                            r.n_coarse(),
                            r.matrix.nnz(),
                            r.max_constraint_residual(),
                            t0.elapsed()
                        );
                        if dump {
                            let path = out.join(format!("basis_{nx}x{ny}_{bt}_s{s}.txt"));
                            let mut w = BufWriter::new(File::create(&path)?);
                            for (k, l) in r.labels.iter().enumerate() {
                                let dir = l.direction.map_or("-".to_string(), |d| format!("{d:?}"));
                                writeln!(w, "# L {k} {} {} {dir}", l.block, l.continuum)?;
                            }
                            r.matrix.write_triplets(&mut w)?;
                        }
                    }
                    Err(e) => {
                        eprintln!("{nx}x{ny} {bt} s={s}: failed: {e}");
                        failed = 1;
                    }
                }
            }
        }
    }
    Ok(failed)
}

fn cmd_run(common: &Common, parabolic: bool) -> Result<u8> {
    let spec = common.spec(if parabolic { "parabolic_neumann" } else { "laplace" })?;
    match (parabolic, spec.problem) {
        (true, ProblemClass::Parabolic) | (false, ProblemClass::Laplace | ProblemClass::Elasticity) => {}
        (true, _) => bail!("`march` needs a parabolic scenario; use `solve`"),
        (false, _) => bail!("`solve` needs a steady scenario; use `march`"),
    }
    let out = common.out_dir(Some(&spec), &spec.name);
    let outcome = run_scenario(&spec, &RunOptions { out_dir: Some(out.clone()), cache: common.cache()? })?;
    print_rows(&outcome.reports);
    println!("rows written to {}", out.join("errors.csv").display());
    Ok((outcome.failed_cells > 0) as u8)
}

fn print_rows(rows: &[nlmc::metrics::ErrorReport]) {
    println!("{:<8} {:<6} {:>3} {:>5} {:<4} {:>10} {:>10} {:>7}  status", "grid", "type", "s", "step", "comp", "error_%", "ref_%", "DOF_c");
    for r in rows {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "{:<8} {:<6} {:>3} {:>5} {:<4} {:>10} {:>10} {:>7}  {}{}",
            format!("{}x{}", r.nx, r.ny),
            r.basis_type,
            r.layers,
            r.step,
            r.component,
            f(r.error_percent),
            f(r.reference_percent),
            r.dof_c,
            r.status,
            if r.message.is_empty() { String::new() } else { format!(" ({})", r.message) }
        );
    }
}

fn cmd_errors(input: &Path) -> Result<u8> {
    let rows = read_reports_csv(BufReader::new(File::open(input).with_context(|| format!("opening {}", input.display()))?))?;
    print_rows(&rows);
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    println!("{} rows, {failed} failed", rows.len());
    Ok((failed > 0) as u8)
}

fn cmd_reproduce(common: &Common, configs: Option<&Path>) -> Result<u8> {
    let mut specs = Vec::new();
    match configs {
        Some(dir) => {
            let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "toml"))
                .collect();
            paths.sort();
            for p in paths {
                specs.push(ScenarioSpec::load(&p).with_context(|| format!("reading {}", p.display()))?);
            }
        }
        None => {
            for name in PRESETS {
                specs.push(preset(name).expect("known preset"));
            }
        }
    }
    let out = common.out_dir(None, "reproduce");
    let outcome = reproduce_tables(&specs, &out, common.cache()?)?;
    for t in &outcome.trends {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "{:<36} {:<6} {:<18} s={}: {:>8}  s={}: {:>8}  {}",
            t.table,
            t.grid,
            t.series,
            t.layers_min,
            f(t.error_at_min),
            t.layers_max,
            f(t.error_at_max),
            if t.decreasing { "decreasing" } else { "NOT decreasing" }
        );
    }
    println!("tables written to {}", out.join("tables").display());
    if outcome.failed_cells > 0 {
        eprintln!("{} scenario cells failed", outcome.failed_cells);
    }
    Ok((outcome.failed_cells > 0) as u8)
}

fn run(cli: Cli) -> Result<u8> {
    let level = match cli.common.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Mesh => cmd_mesh(&cli.common),
        Command::Basis { dump } => cmd_basis(&cli.common, *dump),
        Command::Solve => cmd_run(&cli.common, false),
        Command::March => cmd_run(&cli.common, true),
        Command::Errors { input } => cmd_errors(input),
        Command::Reproduce { configs } => cmd_reproduce(&cli.common, configs.as_deref()),
        Command::Show => {
            print!("{}", cli.common.spec("laplace")?.to_toml()?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
