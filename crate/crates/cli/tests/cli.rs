use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn erw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_erw")).current_dir(dir).args(args).output().expect("spawn erw")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn exact_rows_carry_rational_values() {
    let dir = TempDir::new().unwrap();
    let o = erw(dir.path(), &["exact", "--alpha", "1/2", "--beta", "1", "--n", "3", "--orders", "1,2", "--out", "-"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,order,value,float");
    assert!(lines[1].starts_with("3,1,15/8,"));
    assert!(lines[2].starts_with("3,2,11/2,"));
}

#[test]
fn symmetric_odd_moment_is_zero() {
    let dir = TempDir::new().unwrap();
    let o = erw(dir.path(), &["exact", "--alpha", "0", "--beta", "0", "--n", "10", "--orders", "3", "--out", "-"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().nth(1).unwrap(), "10,3,0,0");
}

#[test]
fn alpha_out_of_range_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = erw(dir.path(), &["exact", "--alpha", "2", "--n", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha must lie in (-1,1)"));
}

#[test]
fn malformed_rational_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = erw(dir.path(), &["exact", "--alpha", "one half", "--n", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_dyadic_decimal_warns() {
    let dir = TempDir::new().unwrap();
    let o = erw(dir.path(), &["exact", "--alpha", "0.1", "--n", "3", "--out", "-"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("1/10"));
}

#[test]
fn exact_bit_cap_exits_3() {
    let dir = TempDir::new().unwrap();
    let o = erw(dir.path(), &["exact", "--alpha", "1/4", "--n", "10^5", "--orders", "12", "--bit-cap", "1000"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn default_rate_scan_covers_grid() {
    let dir = TempDir::new().unwrap();
    let o = erw(dir.path(), &["rates", "--out", "-"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.split(',').any(|c| c == "flags"));
    assert!(header.starts_with("alpha,order,gamma_hat,gamma_predicted"));
    assert!(lines.count() >= 54);
}

#[test]
fn degenerate_cell_is_flagged() {
    let dir = TempDir::new().unwrap();
    let o = erw(dir.path(), &["rates", "--orders", "2", "--alpha-grid", "0", "--out", "-"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].ends_with("identically_zero"));
}

#[test]
fn short_horizon_warning_reaches_manifest() {
    let dir = TempDir::new().unwrap();
    let o = erw(dir.path(), &["rates", "--n-max", "10^3", "--out", "r.csv"]);
    assert!(o.status.success());
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.csv.manifest.json")).unwrap()).unwrap();
    let warnings = m["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("--n-max")));
}

#[test]
fn predictions_only_table() {
    let dir = TempDir::new().unwrap();
    let o = erw(dir.path(), &["rates", "--predictions-only", "--alpha-grid", "1/4", "--orders", "1,2", "--out", "-"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("alpha,order,gamma_exponent,coefficient,decay_kind"));
    assert_eq!(text.lines().count(), 3);
}

const SIM: &[&str] =
    &["simulate", "--alpha", "1/4", "--beta", "1/2", "--n", "500", "--replicas", "3000", "--seed", "11"];

#[test]
fn simulation_is_reproducible_and_replayable() {
    let dir = TempDir::new().unwrap();
    let run = |out: &str, extra: &[&str]| {
        let mut args = SIM.to_vec();
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out", out]);
        let o = erw(dir.path(), &args);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(dir.path().join(out)).unwrap()
    };
    let a = run("a.csv", &[]);
    let b = run("b.csv", &["--threads", "1"]);
    let c = run("c.csv", &["--threads", "3"]);
    assert_eq!(a, b);
    assert_eq!(a, c);

    let manifest = dir.path().join("a.csv.manifest.json");
    let m: Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["seed"], 11);
    assert_eq!(m["subcommand"], "simulate");
    assert!(!m["argv"].as_array().unwrap().iter().any(|v| v == "--out"));

    let o = erw(dir.path(), &["replay", "a.csv.manifest.json", "--out", "d.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(a, fs::read(dir.path().join("d.csv")).unwrap());
}

#[test]
fn different_seeds_differ() {
    let dir = TempDir::new().unwrap();
    let mut args = SIM.to_vec();
    args.extend_from_slice(&["--out", "-"]);
    let a = stdout(&erw(dir.path(), &args));
    let seed_at = args.len() - 3;
    args[seed_at] = "12";
    let b = stdout(&erw(dir.path(), &args));
    assert_ne!(a, b);
}

#[test]
fn seed_is_mandatory() {
    let dir = TempDir::new().unwrap();
    let o = erw(dir.path(), &["simulate", "--alpha", "0", "--n", "10", "--replicas", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn replay_dynamics_memory_cap_exits_3() {
    let dir = TempDir::new().unwrap();
    let o = erw(
        dir.path(),
        &["simulate", "--alpha", "1/4", "--n", "1000000", "--replicas", "10", "--seed", "1", "--dynamics", "replay"],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("memory cap"));
}

#[test]
fn dump_holds_one_f64_per_replica() {
    let dir = TempDir::new().unwrap();
    let mut args = SIM.to_vec();
    args.extend_from_slice(&["--dump", "terminal.bin", "--out", "s.csv"]);
    let o = erw(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let bytes = fs::read(dir.path().join("terminal.bin")).unwrap();
    assert_eq!(bytes.len(), 3000 * 8);
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("s.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn checkpoints_add_rows() {
    let dir = TempDir::new().unwrap();
    let mut args = SIM.to_vec();
    args.extend_from_slice(&["--checkpoints", "10,100", "--out", "-"]);
    let o = erw(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let ns: Vec<String> = stdout(&o).lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    assert_eq!(ns, ["10", "100", "500"]);
}

#[test]
fn json_output_parses() {
    let dir = TempDir::new().unwrap();
    let o = erw(dir.path(), &["exact", "--alpha", "1/2", "--beta", "1", "--n", "3", "--format", "json", "--out", "-"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[1]["value"], "11/2");
    assert_eq!(v[1]["float"], 5.5);
    assert_eq!(v[0]["order"], 1);
}

#[test]
fn default_output_name_uses_subcommand() {
    let dir = TempDir::new().unwrap();
    let o = erw(dir.path(), &["exact", "--alpha", "0", "--n", "4", "--format", "json"]);
    assert!(o.status.success());
    assert!(dir.path().join("erw-exact.json").exists());
    assert!(dir.path().join("erw-exact.json.manifest.json").exists());
}

#[test]
fn bounds_and_first_return_run() {
    let dir = TempDir::new().unwrap();
    let o = erw(dir.path(), &["bounds", "--alpha", "1/4", "--n-max", "10^3", "--per-decade", "1", "--out", "-"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("n,berry_esseen_shape,s2,sigma2,ratio_error,variance_asymptote"));

    let o = erw(
        dir.path(),
        &["first-return", "--alpha", "0", "--horizon", "100", "--replicas", "500", "--seed", "3", "--out", "-"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "100");
    assert_eq!(row[1], "500");
}

#[test]
fn deviations_emit_requested_orders() {
    let dir = TempDir::new().unwrap();
    let o = erw(
        dir.path(),
        &["deviations", "--alpha", "-1/4", "--beta", "1", "--orders", "3,4", "--n-max", "1000", "--out", "-"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let orders: std::collections::BTreeSet<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(orders.into_iter().collect::<Vec<_>>(), ["3", "4"]);
}

#[test]
fn help_lists_flags() {
    let dir = TempDir::new().unwrap();
    let top = stdout(&erw(dir.path(), &["--help"]));
    for flag in ["--threads", "--format", "--out", "simulate", "rates", "replay"] {
        assert!(top.contains(flag), "missing {flag}");
    }
    let sim = stdout(&erw(dir.path(), &["simulate", "--help"]));
    for flag in ["--alpha", "--beta", "--replicas", "--seed", "--dynamics", "--dump"] {
        assert!(sim.contains(flag), "missing {flag}");
    }
}
