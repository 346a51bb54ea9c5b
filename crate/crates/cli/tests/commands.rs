use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const NORMAL: &str = r#"{"prior": {"kind": "normal", "m": 0, "gamma": 0.5}, "sigma": 0.2, "T": 1"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, format!("{body}}}")).unwrap();
    path
}

fn driftstop(args: &[&str], config: &Path, out: &Path) -> Output {
    driftstop_env(args, config, out, &[])
}

fn driftstop_env(args: &[&str], config: &Path, out: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_driftstop"));
    cmd.args(args).arg("--config").arg(config).arg("--out").arg(out);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn csv(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn checks(out: &Path) -> Vec<Value> {
    serde_json::from_str::<Value>(&fs::read_to_string(out.join("checks.json")).unwrap()).unwrap().as_array().unwrap().clone()
}

fn check_named<'a>(checks: &'a [Value], name: &str) -> &'a Value {
    checks.iter().find(|c| c["name"] == name).unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn invalid_prior_exits_2_and_names_the_invariant() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{"prior": {"kind": "normal", "m": 0, "gamma": -0.5}, "sigma": 0.2, "T": 1"#);
    let o = driftstop(&["solve"], &cfg, &dir.path().join("out"));
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));
}

#[test]
fn malformed_flags_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), NORMAL);
    let o = driftstop(&["verify", "--engine", "exact"], &cfg, &dir.path().join("out"));
    assert_eq!(code(&o), 2);
}

#[test]
fn solve_is_byte_identical_and_ends_at_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), NORMAL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&driftstop(&["solve"], &cfg, &a)), 0);
    assert_eq!(code(&driftstop_env(&["solve"], &cfg, &b, &[("RAYON_NUM_THREADS", "1")])), 0);
    for f in ["surface.csv", "boundary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let (header, rows) = csv(&a.join("boundary.csv"));
    assert_eq!(header, "t,h");
    assert_eq!(*rows.last().unwrap(), vec![1.0, 0.0]);
    assert_eq!(rows.len(), 2001);

    let meta: Value = serde_json::from_str(&fs::read_to_string(a.join("meta.json")).unwrap()).unwrap();
    let v0 = meta["v0"].as_f64().unwrap();
    assert!(v0 > 1.0 && v0 < 1.5, "v0 = {v0}");
    assert_eq!(meta["grid"]["n_t"], 2000);
    assert!(meta["runtime_ms"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_passes_on_the_solved_boundary() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), NORMAL);
    let out = dir.path().join("out");
    let o = driftstop(&["verify"], &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let cs = checks(&out);
    assert!(cs.iter().all(|c| c["pass"] == true));
    for c in &cs {
        for key in ["name", "pass", "measured", "tolerance"] {
            assert!(c.get(key).is_some(), "{c} lacks {key}");
        }
    }
    let (header, rows) = csv(&out.join("residual.csv"));
    assert_eq!(header, "t,residual");
    assert_eq!(*rows.last().unwrap(), vec![1.0, 0.0]);
}

#[test]
fn verify_rejects_a_perturbed_boundary() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), NORMAL);
    let solved = dir.path().join("solved");
    assert_eq!(code(&driftstop(&["solve"], &cfg, &solved)), 0);
    let (_, rows) = csv(&solved.join("boundary.csv"));
    let mut text = String::from("t,h\n");
    for r in &rows {
        text.push_str(&format!("{},{}\n", r[0], r[1] - 0.1));
    }
    let perturbed = dir.path().join("perturbed.csv");
    fs::write(&perturbed, text).unwrap();

    let out = dir.path().join("out");
    let o = driftstop(&["verify", "--boundary", perturbed.to_str().unwrap()], &cfg, &out);
    assert_eq!(code(&o), 4);
    let cs = checks(&out);
    let residual = check_named(&cs, "integral_equation_residual");
    assert_eq!(residual["pass"], false);
    assert!(residual["measured"].as_f64().unwrap() > 0.02);
}

#[test]
fn gauss_engine_needs_a_normal_prior() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{"prior": {"kind": "two_point", "l": -1, "h": 1, "pi": 0.5}, "sigma": 0.5, "T": 1"#);
    let o = driftstop(&["verify", "--engine", "gauss"], &cfg, &dir.path().join("out"));
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_writes_one_row_per_rule() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{NORMAL}, "sim": {{"n_paths": 20000, "n_steps": 500}}"#));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&driftstop(&["simulate", "--seed", "3"], &cfg, &a)), 0);
    assert_eq!(code(&driftstop_env(&["simulate", "--seed", "3"], &cfg, &b, &[("RAYON_NUM_THREADS", "3")])), 0);
    assert_eq!(fs::read(a.join("estimates.csv")).unwrap(), fs::read(b.join("estimates.csv")).unwrap());

    let text = fs::read_to_string(a.join("estimates.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rule,mean,stderr,n");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["boundary", "immediate", "terminal", "zero_or_t"]);
    assert_eq!(lines[2], "immediate,1,0,20000");

    let field = |row: usize, col: usize| -> f64 { lines[row].split(',').nth(col).unwrap().parse().unwrap() };
    // E[e^{X}] for X ~ N(0, 0.25)
    let mgf = (0.125f64).exp();
    assert!((field(3, 1) - mgf).abs() <= 3.0 * field(3, 2));
    for row in 2..=4 {
        let tol = 3.0 * (field(1, 2).powi(2) + field(row, 2).powi(2)).sqrt();
        assert!(field(1, 1) >= field(row, 1) - tol, "row {row}");
    }

    let other = dir.path().join("c");
    assert_eq!(code(&driftstop(&["simulate", "--seed", "4"], &cfg, &other)), 0);
    assert_ne!(fs::read(a.join("estimates.csv")).unwrap(), fs::read(other.join("estimates.csv")).unwrap());
}

#[test]
fn gamma_sweep_orders_the_boundaries() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), NORMAL);
    let out = dir.path().join("out");
    let o = driftstop(&["sweep", "--axis", "gamma", "--values", "0.3,0.5,0.8"], &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv(&out.join("boundaries.csv"));
    assert_eq!(header, "t,gamma=0.3,gamma=0.5,gamma=0.8");
    for r in &rows {
        assert!(r[3] <= r[2] + 1e-12 && r[2] <= r[1] + 1e-12, "{r:?}");
    }
    let (header, rows) = csv(&out.join("sweep.csv"));
    assert_eq!(header, "gamma,value_filtered,value_naive,improvement");
    assert_eq!(rows.len(), 3);
    for v in ["0.3", "0.5", "0.8"] {
        assert!(out.join(format!("boundary_gamma_{v}.csv")).exists());
    }
}

#[test]
fn gamma_sweep_needs_a_normal_prior() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{"prior": {"kind": "two_point", "l": -1, "h": 1, "pi": 0.5}, "sigma": 0.5, "T": 1"#);
    let o = driftstop(&["sweep", "--axis", "gamma", "--values", "0.3,0.5"], &cfg, &dir.path().join("out"));
    assert_eq!(code(&o), 2);
}

#[test]
fn sigma_sweep_value_is_nonincreasing_for_two_point() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{"prior": {"kind": "two_point", "l": -1, "h": 1, "pi": 0.5}, "sigma": 0.5, "T": 1"#);
    let out = dir.path().join("out");
    let o = driftstop(&["sweep", "--axis", "sigma", "--values", "0.3,0.5,0.8,1.2"], &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = csv(&out.join("sweep.csv"));
    for w in rows.windows(2) {
        assert!(w[1][1] <= w[0][1] + 1e-9, "{w:?}");
    }
}

#[test]
fn sigma_sweep_boundaries_cross() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), NORMAL);
    let out = dir.path().join("out");
    assert_eq!(code(&driftstop(&["sweep", "--axis", "sigma", "--values", "0.2,0.5"], &cfg, &out)), 0);
    let (_, rows) = csv(&out.join("boundaries.csv"));
    // skip the terminal node where both are zero
    let diffs: Vec<f64> = rows[..rows.len() - 1].iter().map(|r| r[1] - r[2]).collect();
    assert!(diffs.iter().any(|d| *d > 1e-6) && diffs.iter().any(|d| *d < -1e-6));
}

#[test]
fn sweep_axis_comes_from_the_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{NORMAL}, "sweep": {{"axis": "sigma", "values": [0.3]}}"#));
    let out = dir.path().join("out");
    assert_eq!(code(&driftstop(&["sweep"], &cfg, &out)), 0);
    assert!(out.join("boundary_sigma_0.3.csv").exists());

    let bare = write_config(dir.path(), NORMAL);
    assert_eq!(code(&driftstop(&["sweep"], &bare, &out)), 2);
}

#[test]
fn psi_table_has_its_header() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{NORMAL}, "surface_stride": 500"#));
    let out = dir.path().join("out");
    assert_eq!(code(&driftstop(&["psi-table"], &cfg, &out)), 0);
    let (header, rows) = csv(&out.join("psi.csv"));
    assert_eq!(header, "t,x,psi");
    assert_eq!(rows.len(), 5 * 401);
    // normal prior: psi(t, x) = sigma gamma^2 / (sigma^2 + t gamma^2)
    for r in &rows {
        let exact = 0.2 * 0.25 / (0.04 + r[0] * 0.25);
        assert!((r[2] - exact).abs() < 1e-12, "{r:?}");
    }
}

#[test]
fn check_runs_the_full_suite() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{NORMAL}, "sim": {{"n_paths": 40000}}"#));
    let out = dir.path().join("out");
    let o = driftstop(&["check"], &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let cs = checks(&out);
    for name in ["integral_equation_residual", "boundary_rule_dominates", "terminal_matches_closed_form", "value_convex_in_x"] {
        assert_eq!(check_named(&cs, name)["pass"], true);
    }
    assert!(out.join("estimates.csv").exists() && out.join("residual.csv").exists());
}
