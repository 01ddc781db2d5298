//! The default study: shipped scenarios, reference error values and the
//! wide comparison tables built from a set of runs.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::basis::BasisType;
use crate::error::{NlmcError, Result};
use crate::geometry::{BoundaryKind, BoundaryRules, LayoutGenerator, Rect};
use crate::io::{write_reports_csv, BasisCache};
use crate::metrics::ErrorReport;
use crate::scenario::{
    run_scenario, ExportFields, GeometrySource, PerforationBc, ProblemClass, RunOptions, ScenarioSpec, TimeSettings,
};

/// Fine spacing of the default study.
pub const DEFAULT_H: f64 = 1.0 / 160.0;

/// Generator of the shipped 400-disk layout.
pub fn default_generator() -> LayoutGenerator {
    LayoutGenerator {
        count: 400,
        radius_min: 0.007,
        radius_max: 0.011,
        seed: 20240601,
        margin: 0.05,
        jitter: 0.004,
        clearance: 2.0 * std::f64::consts::SQRT_2 * DEFAULT_H,
    }
}

pub const PRESETS: [&str; 4] = ["laplace", "elasticity", "parabolic_neumann", "parabolic_robin"];

/// Built-in scenario by name. All use the generated default layout; the
/// shipped config files point at the committed copy of the same layout.
pub fn preset(name: &str) -> Option<ScenarioSpec> {
    let mut spec = ScenarioSpec {
        name: name.to_string(),
        problem: ProblemClass::Laplace,
        h: DEFAULT_H,
        grids: vec![[20, 20], [40, 40]],
        layers: vec![1, 2, 3, 4, 6],
        basis_types: vec![BasisType::Type1, BasisType::Type2],
        source: 0.0,
        traction: [1.0, 1.0],
        perforation_storage: 0.0,
        load_lumping: Default::default(),
        weighted_error: true,
        export_fields: ExportFields::MaxLayers,
        dump_systems: false,
        output: None,
        geometry: GeometrySource {
            file: None,
            generator: Some(default_generator()),
            domain: Rect::unit(),
        },
        boundary: Some(BoundaryRules::dirichlet_left_bottom()),
        perforation: PerforationBc::Neumann { g: 1.0 },
        time: TimeSettings::default(),
        material: Default::default(),
    };
    match name {
        "laplace" => {}
        "elasticity" => {
            spec.problem = ProblemClass::Elasticity;
            spec.basis_types = vec![BasisType::Type1];
        }
        "parabolic_neumann" | "parabolic_robin" => {
            spec.problem = ProblemClass::Parabolic;
            spec.boundary = Some(BoundaryRules::all(BoundaryKind::Neumann));
            if name == "parabolic_robin" {
                spec.perforation = PerforationBc::Robin { alpha: 100.0, g: 7.0 };
            }
        }
        _ => return None,
    }
    Some(spec)
}

/// Lookup key for a reference error value.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceKey<'a> {
    pub problem: ProblemClass,
    pub perforation: &'a str,
    pub nx: usize,
    pub ny: usize,
    pub basis_type: BasisType,
    pub layers: usize,
    pub step: usize,
    pub component: usize,
}

// Steady tables: (s, first column, second column); Laplace columns are the
// two basis types, elasticity columns the two displacement components.
const LAPLACE_20: [(usize, f64, f64); 4] = [(1, 98.854, 98.004), (2, 96.831, 69.208), (3, 96.554, 9.864), (4, 1.836, 1.287)];
const LAPLACE_40: [(usize, f64, f64); 5] = [
    (1, 99.792, 99.820),
    (2, 97.716, 97.768),
    (3, 91.475, 79.359),
    (4, 24.594, 24.329),
    (6, 0.637, 0.642),
];
const ELASTIC_20: [(usize, f64, f64); 4] = [(1, 95.451, 96.073), (2, 77.983, 73.635), (3, 10.026, 13.585), (4, 1.959, 0.928)];
const ELASTIC_40: [(usize, f64, f64); 5] = [
    (1, 99.057, 99.064),
    (2, 96.950, 97.102),
    (3, 67.089, 67.695),
    (4, 20.924, 22.024),
    (6, 0.460, 0.475),
];

// Time-dependent tables: (s, values at steps 5, 10, 15, 20).
type TimeRow = (usize, [f64; 4]);
const NEUMANN_T1_20: [TimeRow; 4] = [
    (1, [3.865, 3.581, 3.468, 3.399]),
    (2, [3.429, 3.324, 3.302, 3.261]),
    (3, [3.412, 3.318, 3.308, 3.278]),
    (4, [2.735, 1.553, 1.061, 0.798]),
];
const NEUMANN_T1_40: [TimeRow; 5] = [
    (1, [18.688, 27.751, 38.829, 47.005]),
    (2, [1.570, 1.433, 1.389, 1.390]),
    (3, [1.361, 1.265, 1.194, 1.129]),
    (4, [0.866, 0.453, 0.308, 0.239]),
    (6, [0.862, 0.443, 0.304, 0.224]),
];
const ROBIN_T1_20: [TimeRow; 4] = [
    (1, [21.897, 25.518, 27.812, 29.375]),
    (2, [16.030, 17.217, 17.928, 18.397]),
    (3, [15.844, 16.938, 17.588, 17.991]),
    (4, [1.948, 1.199, 0.938, 0.806]),
];
const ROBIN_T1_40: [TimeRow; 5] = [
    (1, [50.837, 60.026, 64.118, 66.390]),
    (2, [11.800, 13.691, 15.129, 16.210]),
    (3, [8.818, 8.632, 8.550, 8.494]),
    (4, [0.758, 0.449, 0.335, 0.280]),
    (6, [0.738, 0.442, 0.332, 0.277]),
];
const ROBIN_T2_20: [TimeRow; 4] = [
    (1, [12.609, 15.717, 17.912, 19.466]),
    (2, [2.253, 1.470, 1.236, 0.166]),
    (3, [2.067, 1.241, 0.932, 0.771]),
    (4, [2.059, 1.237, 0.931, 0.770]),
];
const ROBIN_T2_40: [TimeRow; 5] = [
    (1, [54.461, 63.396, 67.208, 69.288]),
    (2, [8.568, 11.829, 13.889, 15.278]),
    (3, [1.289, 1.327, 1.484, 1.622]),
    (4, [0.760, 0.450, 0.336, 0.280]),
    (6, [0.740, 0.440, 0.331, 0.274]),
];

/// Reference relative errors (percent) for the default study on a different
/// 400-perforation layout; comparison is trend-level only.
pub fn reference_percent(key: &ReferenceKey) -> Option<f64> {
    if key.nx != key.ny || !(key.nx == 20 || key.nx == 40) {
        return None;
    }
    let big = key.nx == 40;
    let steady = |t20: &[(usize, f64, f64)], t40: &[(usize, f64, f64)], col: usize| {
        let t = if big { t40 } else { t20 };
        t.iter()
            .find(|r| r.0 == key.layers)
            .map(|r| if col == 0 { r.1 } else { r.2 })
    };
    let timed = |t20: &[TimeRow], t40: &[TimeRow]| {
        let idx = [5, 10, 15, 20].iter().position(|&s| s == key.step)?;
        let t = if big { t40 } else { t20 };
        t.iter().find(|r| r.0 == key.layers).map(|r| r.1[idx])
    };
    let type2 = key.basis_type == BasisType::Type2;
    match (key.problem, key.perforation) {
        (ProblemClass::Laplace, "neumann") if key.step == 0 => steady(&LAPLACE_20, &LAPLACE_40, type2 as usize),
        (ProblemClass::Elasticity, _) if key.step == 0 && !type2 => steady(&ELASTIC_20, &ELASTIC_40, key.component),
        (ProblemClass::Parabolic, "neumann") if !type2 => timed(&NEUMANN_T1_20, &NEUMANN_T1_40),
        (ProblemClass::Parabolic, "robin") if type2 => timed(&ROBIN_T2_20, &ROBIN_T2_40),
        (ProblemClass::Parabolic, "robin") => timed(&ROBIN_T1_20, &ROBIN_T1_40),
        _ => None,
    }
}

/// Outcome of a full reproduction.
#[derive(Debug, Clone)]
pub struct ReproduceOutcome {
    pub reports: Vec<ErrorReport>,
    pub failed_cells: usize,
    pub tables: Vec<PathBuf>,
    pub trends: Vec<TrendCheck>,
}

/// `error(s = max) < error(s = 1)` for one series of a table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendCheck {
    pub table: String,
    pub grid: String,
    pub series: String,
    pub layers_min: usize,
    pub layers_max: usize,
    pub error_at_min: Option<f64>,
    pub error_at_max: Option<f64>,
    pub decreasing: bool,
}

/// Column of a wide table: which rows feed it.
struct Series {
    name: String,
    scenario: String,
    basis_type: &'static str,
    component: &'static str,
    step: usize,
}

struct TableDef {
    file: &'static str,
    description: &'static str,
    series: Vec<Series>,
}

fn table_defs(specs: &[ScenarioSpec]) -> Vec<TableDef> {
    let has = |name: &str| specs.iter().any(|s| s.name == name);
    let steps = |name: &str| {
        specs
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.time.snapshots.clone())
            .unwrap_or_default()
    };
    let mut defs = Vec::new();
    let mut steady = Vec::new();
    if has("laplace") {
        for bt in ["type1", "type2"] {
            steady.push(Series { name: format!("laplace_{bt}"), scenario: "laplace".into(), basis_type: bt, component: "u", step: 0 });
        }
    }
    if has("elasticity") {
        for c in ["ux", "uy"] {
            steady.push(Series { name: format!("elasticity_{c}"), scenario: "elasticity".into(), basis_type: "type1", component: c, step: 0 });
        }
    }
    if !steady.is_empty() {
        defs.push(TableDef {
            file: "table_steady.csv",
            description: "steady Laplace (both basis types) and elasticity (Type 1, per component)",
            series: steady,
        });
    }
    let timed = [
        ("parabolic_neumann", "type1", "table_parabolic_neumann_type1.csv", "parabolic, flux on perforations, Type 1"),
        ("parabolic_neumann", "type2", "table_parabolic_neumann_type2.csv", "parabolic, flux on perforations, Type 2"),
        ("parabolic_robin", "type1", "table_parabolic_robin_type1.csv", "parabolic, Robin on perforations, Type 1"),
        ("parabolic_robin", "type2", "table_parabolic_robin_type2.csv", "parabolic, Robin on perforations, Type 2"),
    ];
    for (scenario, bt, file, description) in timed {
        if !has(scenario) {
            continue;
        }
        let series: Vec<Series> = steps(scenario)
            .into_iter()
            .map(|step| Series { name: format!("step{step}"), scenario: scenario.into(), basis_type: bt, component: "u", step })
            .collect();
        defs.push(TableDef { file, description, series });
    }
    defs
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

/// Writes the wide tables plus `dof.csv`, `trends.csv` and `manifest.csv`
/// from finished rows. Returns the written paths and trend checks.
pub fn write_tables(dir: &Path, specs: &[ScenarioSpec], reports: &[ErrorReport]) -> Result<(Vec<PathBuf>, Vec<TrendCheck>)> {
    fs::create_dir_all(dir)?;
    let mut index: BTreeMap<(&str, usize, &str, usize, &str, usize), &ErrorReport> = BTreeMap::new();
    for r in reports {
        index.insert((&r.scenario, r.nx, &r.basis_type, r.layers, &r.component, r.step), r);
    }
    let mut grids: Vec<[usize; 2]> = specs.iter().flat_map(|s| s.grids.iter().copied()).collect();
    grids.sort();
    grids.dedup();
    let mut layers: Vec<usize> = specs.iter().flat_map(|s| s.layers.iter().copied()).collect();
    layers.sort();
    layers.dedup();

    let mut written = Vec::new();
    let mut trends = Vec::new();
    let mut manifest = csv::Writer::from_path(dir.join("manifest.csv"))?;
    manifest.write_record(["table", "description", "comparison"])?;
    for def in table_defs(specs) {
        let mut w = csv::Writer::from_path(dir.join(def.file))?;
        let mut header = vec!["grid".to_string(), "layers".to_string()];
        for s in &def.series {
            header.push(format!("{}_error_percent", s.name));
            header.push(format!("{}_reference_percent", s.name));
        }
        w.write_record(&header)?;
        for g in &grids {
            let grid = format!("{}x{}", g[0], g[1]);
            let lookup = |s: &Series, l: usize| index.get(&(s.scenario.as_str(), g[0], s.basis_type, l, s.component, s.step)).copied();
            for &l in &layers {
                if def.series.iter().all(|s| lookup(s, l).is_none()) {
                    continue;
                }
                let mut rec = vec![grid.clone(), l.to_string()];
                for s in &def.series {
                    let r = lookup(s, l);
                    rec.push(fmt(r.and_then(|r| r.error_percent)));
                    rec.push(fmt(r.and_then(|r| r.reference_percent)));
                }
                w.write_record(&rec)?;
            }
            for s in &def.series {
                let present: Vec<usize> = layers.iter().copied().filter(|&l| lookup(s, l).is_some()).collect();
                let (Some(&lo), Some(&hi)) = (present.first(), present.last()) else { continue };
                let e_lo = lookup(s, lo).and_then(|r| r.error_percent);
                let e_hi = lookup(s, hi).and_then(|r| r.error_percent);
                trends.push(TrendCheck {
                    table: def.file.into(),
                    grid: grid.clone(),
                    series: s.name.clone(),
                    layers_min: lo,
                    layers_max: hi,
                    error_at_min: e_lo,
                    error_at_max: e_hi,
                    decreasing: matches!((e_lo, e_hi), (Some(a), Some(b)) if b < a),
                });
            }
        }
        w.flush()?;
        manifest.write_record([
            def.file,
            def.description,
            "trend-level: generated layout; reference values come from a different layout",
        ])?;
        written.push(dir.join(def.file));
    }

    let mut dof = csv::Writer::from_path(dir.join("dof.csv"))?;
    dof.write_record(["scenario", "grid", "basis_type", "dof_f", "dof_c", "ratio"])?;
    let mut seen = std::collections::BTreeSet::new();
    for r in reports.iter().filter(|r| r.status == "ok") {
        if seen.insert((r.scenario.clone(), r.nx, r.ny, r.basis_type.clone())) {
            dof.write_record([
                r.scenario.clone(),
                format!("{}x{}", r.nx, r.ny),
                r.basis_type.clone(),
                r.dof_f.to_string(),
                r.dof_c.to_string(),
                format!("{:.4}", r.dof_c as f64 / r.dof_f as f64),
            ])?;
        }
    }
    dof.flush()?;
    manifest.write_record(["dof.csv", "fine and coarse unknown counts", "exact"])?;

    let mut tw = csv::Writer::from_path(dir.join("trends.csv"))?;
    for t in &trends {
        tw.serialize(t)?;
    }
    tw.flush()?;
    manifest.write_record(["trends.csv", "error at the largest layer count below error at the smallest", "per series"])?;
    manifest.flush()?;
    written.push(dir.join("dof.csv"));
    written.push(dir.join("trends.csv"));
    Ok((written, trends))
}

/// Runs `specs` (each into `out_dir/<name>`), then writes all rows to
/// `out_dir/errors.csv` and the comparison tables to `out_dir/tables`.
pub fn reproduce_tables(specs: &[ScenarioSpec], out_dir: &Path, cache: Option<BasisCache>) -> Result<ReproduceOutcome> {
    if specs.is_empty() {
        return Err(NlmcError::Config("no scenarios to run".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut reports = Vec::new();
    let mut failed_cells = 0;
    for spec in specs {
        let opts = RunOptions {
            out_dir: Some(out_dir.join(&spec.name)),
            cache: cache.clone(),
        };
        match run_scenario(spec, &opts) {
            Ok(o) => {
                failed_cells += o.failed_cells;
                reports.extend(o.reports);
            }
            Err(e) => {
                log::error!("scenario {} failed before its cells ran: {e}", spec.name);
                failed_cells += spec.grids.len() * spec.basis_types.len() * spec.layers.len();
            }
        }
    }
    write_reports_csv(BufWriter::new(File::create(out_dir.join("errors.csv"))?), &reports)?;
    let (tables, trends) = write_tables(&out_dir.join("tables"), specs, &reports)?;
    Ok(ReproduceOutcome {
        reports,
        failed_cells,
        tables,
        trends,
    })
}
