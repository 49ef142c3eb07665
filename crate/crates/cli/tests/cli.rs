use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 7

[problem]
domain = [0, "pi"]
initial = "sin(x)"
orders = [0.8, 0.4]
weights = [1, "1 + x*(pi - x)/4"]

[discretization]
n = 32
steps = 32
t_end = 0.5
"#;

fn multifrac(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_multifrac"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .expect("spawn multifrac")
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(|v| v.parse::<f64>().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn malformed_config_exits_with_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("not toml = = 1", "config"),
        (&SMALL.replace("orders = [0.8, 0.4]", "orders = [0.4, 0.8]") as &str, "problem.orders"),
        (&SMALL.replace("n = 32", "n = 1"), "discretization.n"),
        (&SMALL.replace("initial = \"sin(x)\"", "initial = \"sin(y)\""), "problem.initial"),
        (&format!("{SMALL}\nbogus = 1\n"), "bogus"),
    ];
    for (text, field) in cases {
        let o = multifrac(dir.path(), text, &["solve"]);
        assert_eq!(o.status.code(), Some(2), "{field}: {}", String::from_utf8_lossy(&o.stderr));
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(field), "stderr should name {field}: {err}");
    }
}

#[test]
fn missing_config_flag_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_multifrac")).arg("solve").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_writes_the_field_with_boundary_free_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = multifrac(dir.path(), SMALL, &["solve"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&dir.path().join("out/solution_picard.csv"));
    assert_eq!(header, ["t", "x", "u"]);
    assert_eq!(rows.len(), 33 * 32);
    // first row block is the initial value sin x
    for r in &rows[..32] {
        assert_eq!(r[0], 0.0);
        assert!((r[2] - r[1].sin()).abs() < 1e-14);
    }
    assert!(rows.iter().all(|r| r[1] > 0.0 && r[1] < std::f64::consts::PI));
}

#[test]
fn crosscheck_and_solvers_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}\n[solver]\nkind = \"laplace\"\nreference = \"picard\"\n");
    let o = multifrac(dir.path(), &cfg, &["crosscheck"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&dir.path().join("out/crosscheck.csv"));
    assert_eq!(header, ["t", "l2_solver", "l2_reference", "l2_delta", "max_abs_delta"]);
    assert_eq!(rows.len(), 33);
    let worst = rows.iter().map(|r| r[3] / r[2]).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
    assert!(dir.path().join("out/crosscheck_summary.csv").exists());
}

#[test]
fn spectral_refuses_two_orders() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}\n[solver]\nkind = \"spectral\"\n");
    assert_eq!(multifrac(dir.path(), &cfg, &["solve"]).status.code(), Some(2));
}

#[test]
fn ml_eval_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}\n[ml]\nalphas = [1.0]\nbetas = [1.0]\nx_min = -2\nx_max = 2\npoints = 5\n");
    let o = multifrac(dir.path(), &cfg, &["ml-eval"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&dir.path().join("out/ml_eval.csv"));
    assert_eq!(header, ["alpha", "beta", "x", "value"]);
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert!((r[3] - r[2].exp()).abs() <= 1e-14 * r[2].exp());
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("criterion 1: PASS"));
}

#[test]
fn invert_recovers_orders_from_a_written_observation() {
    let dir = tempfile::tempdir().unwrap();
    // synthesise the observation through the CLI's own contour solver, then
    // feed it back as a file
    let ts: Vec<f64> = (1..=40).map(|k| 10.0 * k as f64 / 40.0).collect();
    let p = multifrac_cli::Config::from_str(SMALL, dir.path()).unwrap().problem().unwrap();
    let node = p.grid.nearest(std::f64::consts::FRAC_PI_2);
    let contour = multifrac::forward::ContourSpec::default_for(&p.orders, ts[0]).unwrap();
    let us = multifrac::forward::laplace_solve_at(&p, &contour, &ts, node).unwrap();
    let mut w = csv::Writer::from_path(dir.path().join("obs.csv")).unwrap();
    w.write_record(["t", "u"]).unwrap();
    for (t, u) in ts.iter().zip(&us) {
        w.write_record([format!("{t:.16e}"), format!("{u:.16e}")]).unwrap();
    }
    w.flush().unwrap();

    let cfg = format!("{SMALL}\n[inverse]\nobservation = \"obs.csv\"\ninitial_orders = [0.7, 0.3]\n");
    let o = multifrac(dir.path(), &cfg, &["invert"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&dir.path().join("out/inversion_orders.csv"));
    assert_eq!(header, ["j", "initial", "estimate", "configured"]);
    assert!((rows[0][2] - 0.8).abs() < 0.01 && (rows[1][2] - 0.4).abs() < 0.01, "{rows:?}");
}
