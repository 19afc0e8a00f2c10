use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use covcal::experiments::screen::{simulate_screen, ScreenSpec};
use covcal::ingest::save_lfc_csv;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_covcal"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn covcal")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"{
  "p": 40, "d_avg": 2.0, "n_obs": 60, "n_per_intervention": 60, "n_interventions": 30,
  "alpha": 0.1, "q_fdr": 0.05, "seeds": [0, 1, 2, 3, 4, 5],
  "delta_inject": [0.0, 0.1]
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn summary_rows(dir: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(dir.join("summary.csv")).unwrap();
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(rows: &[Vec<String>], name: &str) -> usize {
    rows[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn missing_config_exits_2_and_names_path() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("nope.json");
    let out = tmp.path().join("out");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.json"), "{}", stderr(&o));
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", &SMALL.replace("\"q_fdr\"", "\"q_fdrr\""));
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("q_fdrr"), "{}", stderr(&o));
}

#[test]
fn bundled_table1_config_has_four_methods_and_seed_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/table1_ci.json");
    let out = tmp.path().join("out");
    let o = run(&["simulate", "--config", cfg, "--out", out.to_str().unwrap(), "--seeds", "0..2", "--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = summary_rows(&out);
    let methods: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(methods, ["oracle", "estimated", "pooled", "corrected"]);
    let m = manifest(&out);
    assert_eq!(m["seeds"], serde_json::json!([0, 1, 2]));
    assert_eq!(m["config"]["seeds"], serde_json::json!([0, 1, 2]));
    assert_eq!(m["command"], "simulate");
    assert!(m["wall_clock_secs"].as_f64().unwrap() >= 0.0);
    assert!(m["outputs"].as_array().unwrap().iter().any(|v| v == "records.csv"));
    let records = fs::read_to_string(out.join("records.csv")).unwrap();
    assert!(records.starts_with("seed,method,test_intervention,gene,center,radius,covered,feasible,n_cal,delta_true,delta_hat"));
    assert!(!out.join(".manifest.json.tmp").exists());
}

#[test]
fn records_are_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.json", SMALL);
    let mut files = Vec::new();
    for (k, threads) in ["1", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("run{k}"));
        let o = run(&["ablate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", stderr(&o));
        files.push(fs::read(out.join("records.csv")).unwrap());
    }
    assert!(!files[0].is_empty());
    assert_eq!(files[0], files[1]);
}

#[test]
fn ablate_writes_well_formed_svgs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.json", SMALL);
    let out = tmp.path().join("out");
    let o = run(&["ablate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["coverage_vs_delta.svg", "bound_gap.svg"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(doc.descendants().any(|n| n.has_tag_name("polyline")));
    }
    let rows = summary_rows(&out);
    assert_eq!(rows.len(), 1 + 2 * 4);
    let gap = fs::read_to_string(out.join("bound_gap.csv")).unwrap();
    assert!(gap.starts_with("method,delta_inject,coverage"));
}

#[test]
fn single_zero_delta_estimated_matches_oracle() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.json", SMALL);
    let out = tmp.path().join("out");
    let o = run(&["ablate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--deltas", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = summary_rows(&out);
    assert_eq!(rows.len(), 5);
    let find = |m: &str| rows.iter().find(|r| r[0] == m).unwrap().clone();
    let (oracle, est) = (find("oracle"), find("estimated"));
    let cov = column(&rows, "coverage");
    let width = column(&rows, "mean_width");
    assert_eq!(oracle[cov], est[cov]);
    assert_eq!(oracle[width], est[width]);
}

fn toy_lfc(dir: &Path) -> PathBuf {
    let spec = ScreenSpec {
        n_regulators: 20,
        n_targets: 300,
        n_broad: 2,
        broad_targets: 60,
        narrow_median: 20.0,
        n_control: 100,
        n_cells: 60,
        ..ScreenSpec::default()
    };
    let (_, m) = simulate_screen(&spec, 4);
    let path = dir.join("toy.csv");
    save_lfc_csv(&m, &path).unwrap();
    path
}

fn real_config(dir: &Path) -> PathBuf {
    write_config(dir, "real.json", r#"{"alpha": 0.1, "seeds": [0, 1, 2], "test_perturbations": ["R19"]}"#)
}

#[test]
fn real_reports_feasibility_and_bootstrap_sd() {
    let tmp = TempDir::new().unwrap();
    let data = toy_lfc(tmp.path());
    let cfg = real_config(tmp.path());
    let plain = tmp.path().join("plain");
    let o = run(&["real", "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", plain.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("feasible"));
    let rows = summary_rows(&plain);
    assert_eq!(rows.len(), 5);
    let f = column(&rows, "feasible_frac");
    let sd = column(&rows, "coverage_sd");
    for r in &rows[1..] {
        let v: f64 = r[f].parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
        assert!(r[sd].is_empty());
    }

    let boot = tmp.path().join("boot");
    let o = run(&[
        "real", "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(),
        "--out", boot.to_str().unwrap(), "--bootstrap", "20",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = summary_rows(&boot);
    for r in &rows[1..] {
        let v: f64 = r[sd].parse().unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }
    assert_eq!(manifest(&boot)["config"]["bootstrap"], 20);
}

#[test]
fn real_cells_without_control_exits_2() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("cells.csv");
    let mut text = String::from("cell_id,perturbation,g1,g2\n");
    for k in 0..10 {
        text.push_str(&format!("c{k},{},1.0,2.0\n", if k % 2 == 0 { "A" } else { "B" }));
    }
    fs::write(&data, text).unwrap();
    let cfg = real_config(tmp.path());
    let o = run(&["real", "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("control"), "{}", stderr(&o));
}

#[test]
fn unrecognised_data_layout_exits_2() {
    let tmp = TempDir::new().unwrap();
    let data = write_config(tmp.path(), "x.csv", "foo,bar\n1,2\n");
    let cfg = real_config(tmp.path());
    let o = run(&["real", "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bound_table() {
    let o = run(&["bound", "--alpha", "0.1", "--n", "121", "--deltas", "0,0.05,0.3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().filter(|l| l.trim_start().starts_with(|c: char| c.is_ascii_digit())).collect();
    assert_eq!(lines.len(), 3);
    let cols: Vec<&str> = lines[0].split_whitespace().collect();
    assert_eq!(cols, ["0", "0.00000", "0.90000", "0.10000", "yes"]);
    let cols: Vec<&str> = lines[2].split_whitespace().collect();
    assert_eq!(cols[1], "0.42357");
    assert_eq!(cols[4], "no");
    let cols: Vec<&str> = lines[1].split_whitespace().collect();
    assert_eq!(cols[4], "yes");
}

#[test]
fn bad_bound_input_exits_2() {
    let o = run(&["bound", "--alpha", "1.5", "--n", "10"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["bound", "--n", "10", "--deltas", "1.2"]);
    assert_eq!(o.status.code(), Some(2));
}
