use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3

[grid]
case = "c"
x_half_width = 20.0
nx = 64
width = 6.283185307179586
ny = 8

[run]
t_final = 0.2
t0 = 0.02
snapshot_every = 5

[initial]
profile = "gaussian"
amplitude = 0.5
y_coeffs = [1.0, 0.3]
"#;

fn zkstrip(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zkstrip"))
        .args(args)
        .current_dir(dir)
        .env_remove("ZKSTRIP_OUT")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let o = zkstrip(&["--config", &cfg, "--out", "out", "run"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["invariants.csv", "summary.json", "config.toml", "snapshots/snap_00000.bin"] {
        assert!(dir.path().join("out").join(f).exists(), "missing {f}");
    }
}

#[test]
fn env_var_overrides_config_but_not_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", &format!("out_dir = \"from_config\"\n{SMALL}"));
    let run = |flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_zkstrip"));
        c.current_dir(dir.path()).env("ZKSTRIP_OUT", dir.path().join("from_env")).args(["--config", &cfg]);
        if let Some(f) = flag {
            c.args(["--out", f]);
        }
        c.arg("run").output().unwrap()
    };
    assert_eq!(code(&run(None)), 0);
    assert!(dir.path().join("from_env/summary.json").exists());
    assert!(!dir.path().join("from_config").exists());
    assert_eq!(code(&run(Some("from_flag"))), 0);
    assert!(dir.path().join("from_flag/summary.json").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    for out in ["a", "b"] {
        assert_eq!(code(&zkstrip(&["--config", &cfg, "--out", out, "--threads", "2", "run"], dir.path())), 0);
    }
    for f in ["invariants.csv", "summary.json", "config.toml", "snapshots/snap_00001.bin"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn unknown_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &SMALL.replace("t0 = 0.02", "t0 = 0.02\nstep = 1"));
    let o = zkstrip(&["--config", &cfg, "run"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("step"));
}

#[test]
fn invalid_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for (from, to) in [("t0 = 0.02", "t0 = 0.02\ndelta = 2.0"), ("case = \"c\"", "case = \"e\""), ("nx = 64", "nx = 63")] {
        let cfg = write(dir.path(), "bad.toml", &SMALL.replace(from, to));
        assert_eq!(code(&zkstrip(&["--config", &cfg, "run"], dir.path())), 2, "{to}");
    }
    assert_eq!(code(&zkstrip(&["--config", "missing.toml", "run"], dir.path())), 2);
    assert_eq!(code(&zkstrip(&["run"], dir.path())), 2);
    assert_eq!(code(&zkstrip(&["--config", "x.toml", "check", "nonsense"], dir.path())), 2);
}

#[test]
fn empty_sweep_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", &format!("{SMALL}\n[sweep]\nparameter = \"h\"\nvalues = []\n"));
    assert_eq!(code(&zkstrip(&["--config", &cfg, "--out", "o", "sweep"], dir.path())), 2);
}

#[test]
fn mismatched_dependence_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.toml", &format!("{SMALL}\n[check.dependence]\nother_nx = 128\n"));
    let o = zkstrip(&["--config", &cfg, "--out", "o", "check", "dependence"], dir.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn nonconvergent_slab_is_a_solver_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("t0 = 0.02", "t0 = 0.2\nmax_iter = 2\nmax_halvings = 0")
        .replace("amplitude = 0.5", "amplitude = 3.0");
    let cfg = write(dir.path(), "f.toml", &text);
    let o = zkstrip(&["--config", &cfg, "--out", "o", "run"], dir.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn conservation_check_rejects_damping() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &SMALL.replace("t0 = 0.02", "t0 = 0.02\ndelta = 0.1"));
    assert_eq!(code(&zkstrip(&["--config", &cfg, "--out", "o", "check", "conservation"], dir.path())), 2);
}

#[test]
fn conservation_check_passes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &SMALL.replace("case = \"c\"", "case = \"d\"").replace("nx = 64", "nx = 128"));
    let o = zkstrip(&["--config", &cfg, "--out", "o", "check", "conservation"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("o/check_conservation.json").exists());
}

#[test]
fn unresolved_energy_floor_fails_the_check() {
    // with a sine basis in y the flux projection leaves a floor that t0 cannot remove
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let o = zkstrip(&["--config", &cfg, "--out", "o", "check", "conservation"], dir.path());
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("pass = false"));
}

#[test]
fn info_lists_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let o = zkstrip(&["--config", &cfg, "info"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).to_lowercase().contains("lambda"));
}
