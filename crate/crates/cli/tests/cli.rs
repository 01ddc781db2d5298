use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn smoke_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke/smoke.toml")
}

fn nlmc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlmc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("-j")
        .arg("1")
        .output()
        .expect("binary runs")
}

fn config_args() -> Vec<String> {
    vec!["--config".into(), smoke_config().display().to_string()]
}

fn with<'a>(base: &'a [String], extra: &[&'a str]) -> Vec<&'a str> {
    let mut v: Vec<&str> = extra.to_vec();
    v.extend(base.iter().map(String::as_str));
    v
}

#[test]
fn solve_writes_outputs_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solve");
    let cache = dir.path().join("cache");
    let cfg = config_args();
    let mut args = with(&cfg, &["solve"]);
    let cache_s = cache.display().to_string();
    args.extend(["--cache-dir", cache_s.as_str()]);
    let o = nlmc(&args, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["errors.csv", "resolved_config.toml", "geometry.toml", "systems/fine_stiffness.txt", "fields/4x4_type1_s4_step0.vtk"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(std::fs::read_dir(&cache).unwrap().count() > 0);
    let resolved = std::fs::read_to_string(out.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("geometry_hash"));

    let csv = out.join("errors.csv").display().to_string();
    let o = nlmc(&["errors", "--input", &csv], &out);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("4x4"));
}

#[test]
fn failing_cells_make_the_exit_code_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let cfg = config_args();
    let o = nlmc(&with(&cfg, &["solve", "--grid", "4x4,5x5"]), &out);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("errors.csv")).unwrap();
    assert!(text.contains(",failed,"));
    assert!(text.contains(",ok,"));
    let csv = out.join("errors.csv").display().to_string();
    let o = nlmc(&["errors", "--input", &csv], &out);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn mesh_and_basis_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mesh");
    let cfg = config_args();
    let o = nlmc(&with(&cfg, &["mesh"]), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let vtk = std::fs::read_to_string(out.join("mesh.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version"));

    let o = nlmc(&with(&cfg, &["basis", "--dump", "--layers", "1", "--type", "type2"]), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dump = std::fs::read_to_string(out.join("basis_4x4_type2_s1.txt")).unwrap();
    assert!(dump.lines().any(|l| l.starts_with("# L ")));
}

#[test]
fn march_rejects_steady_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_args();
    let o = nlmc(&with(&cfg, &["march"]), dir.path());
    assert!(!o.status.success());
}
