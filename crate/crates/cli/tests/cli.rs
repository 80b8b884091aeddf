use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_foliation-lab"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("foliation-lab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (head, rows)
}

#[test]
fn singularities_of_jouanolou() {
    let d = scratch("sing");
    let o = run_in(&d, &["singularities", "--preset", "jouanolou:2", "--out", "pts.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("PASS residuals"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("pts.json")).unwrap()).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 7);
}

#[test]
fn classify_reports_normalized_ratios() {
    let d = scratch("classify");
    let o = run_in(&d, &["classify", "--preset", "jouanolou:2", "--out", "c.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("c.json")).unwrap()).unwrap();
    let s = v["singularities"].as_array().unwrap();
    assert_eq!(s.len(), 7);
    for p in s {
        assert_eq!(p["class"], "hyperbolic");
        assert!(p["lambda"][1].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn sector_accepts_typographic_minus() {
    let d = scratch("sector");
    let o = run_in(&d, &["sector", "--lambda", "\u{2212}1,1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("gamma 4.0000000000000000e0"), "{}", stdout(&o));
}

#[test]
fn sector_model_polyline() {
    let d = scratch("model");
    let o = run_in(&d, &["sector", "--lambda=i", "--trace-model", "--grid", "6", "--out", "m.csv"]);
    assert_eq!(o.status.code(), Some(2), "`i` is not a number pair");
    let o = run_in(&d, &["sector", "--lambda=0,1", "--trace-model", "--grid", "6", "--out", "m.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (head, rows) = csv_rows(&d.join("m.csv"));
    assert_eq!(head[0], "ray");
    assert_eq!(rows.len(), 36);
}

#[test]
fn trace_writes_polyline_csv() {
    let d = scratch("trace");
    let o = run_in(&d, &["trace", "--preset", "jouanolou:2", "--start", "0.3,0.1,0.2,-0.1", "--arc", "5", "--out", "t.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (head, rows) = csv_rows(&d.join("t.csv"));
    assert_eq!(head, ["chart", "re_z", "im_z", "re_w", "im_w", "s"]);
    assert!(rows.len() > 10);
}

#[test]
fn poisson_of_sampled_data() {
    let d = scratch("poisson");
    fs::write(d.join("h.csv"), "x,value\n-1,0\n0,1\n1,0\n").unwrap();
    let o = run_in(&d, &["poisson", "--data", "h.csv", "--at", "0,1", "--out", "p.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = csv_rows(&d.join("p.csv"));
    let value: f64 = rows[0][2].parse().unwrap();
    // Unit tent on [-1, 1] seen from (0, 1).
    let exact = 0.5 - 2.0f64.ln() / std::f64::consts::PI;
    assert!((value - exact).abs() < 1e-8, "{value} vs {exact}");
    let o = run_in(&d, &["poisson", "--data", "h.csv", "--tail", "power:-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn wedge_csv_has_one_row_per_level() {
    let d = scratch("wedge");
    let o = run_in(&d, &["wedge", "--seed", "5", "--pairs", "20", "--eps", "1e-2,5e-3", "--out", "w.csv"]);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
    let (head, rows) = csv_rows(&d.join("w.csv"));
    assert_eq!(head, ["eps", "J", "stderr", "unresolved_frac"]);
    assert_eq!(rows.len(), 2);
}

#[test]
fn family_sweep_reports_neighbour_distances() {
    let d = scratch("sweep");
    let o = run_in(&d, &["family-sweep", "--lambda-path", "\u{2212}1,1 \u{2192} \u{2212}1,1.2", "--out", "f.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (head, rows) = csv_rows(&d.join("f.csv"));
    assert_eq!(head.last().unwrap(), "distance");
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[5].parse::<f64>().unwrap().is_finite()));
}

#[test]
fn metric_checks_pass_and_fail_with_exit_codes() {
    let d = scratch("metric");
    let o = run_in(&d, &["metric", "--check", "curvature", "--seed", "1", "--samples", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = run_in(&d, &["metric", "--check", "curvature", "--seed", "1", "--samples", "50", "--tol", "1e-15"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("FAIL curvature") && out.contains("witness:"), "{out}");
    let o = run_in(&d, &["metric", "--check", "mass"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn config_file_merges_with_flags() {
    let d = scratch("config");
    fs::write(d.join("run.json"), r#"{"command": "wedge", "seed": 9, "pairs": 500, "eps": [0.01]}"#).unwrap();
    let o = run_in(&d, &["run", "--config", "run.json", "--pairs", "10", "--report", "r.json", "--format", "json"]);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["pairs"], 10);
    assert_eq!(v["config"]["seed"], 9);
    assert_eq!(v["config"]["delta"], 0.3);
    assert_eq!(v["tables"][0]["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn config_command_must_match_subcommand() {
    let d = scratch("mismatch");
    fs::write(d.join("run.json"), r#"{"command": "wedge", "seed": 9}"#).unwrap();
    let o = run_in(&d, &["ergodic", "--config", "run.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_config_field_is_rejected() {
    let d = scratch("unknown");
    fs::write(d.join("run.json"), r#"{"command": "wedge", "seed": 1, "pears": 3}"#).unwrap();
    let o = run_in(&d, &["run", "--config", "run.json"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("pears") && e.contains("pairs"), "{e}");
}

#[test]
fn invalid_inputs_exit_with_two() {
    let d = scratch("invalid");
    for args in [
        &["trace", "--preset", "jouanolou:2", "--start", "0.3,0.2", "--tol", "0"][..],
        &["trace", "--preset", "cubic:2", "--start", "0.3,0.2"],
        &["wedge", "--pairs", "10"],
        &["singularities", "--preset", "jouanolou:2", "--chart", "3"],
        &["run"],
    ] {
        let o = run_in(&d, args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error: "), "{args:?}");
    }
}

#[test]
fn stochastic_reruns_are_byte_identical() {
    let runs: [&[&str]; 3] = [
        &["wedge", "--seed", "11", "--pairs", "15", "--eps", "1e-2,5e-3"],
        &["metric", "--check", "schwarz", "--seed", "11", "--samples", "40"],
        &["ergodic", "--seed", "11", "--n", "6", "--horizon", "64"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let mut outs = Vec::new();
        for k in 0..2 {
            let d = scratch(&format!("det{i}-{k}"));
            let mut a = args.to_vec();
            a.extend(["--out", "a.csv", "--report", "r.json", "--format", "json"]);
            let o = run_in(&d, &a);
            if o.status.code() == Some(2) {
                // Too short to visit every cell; the failure itself must be reproducible.
                outs.push((Vec::new(), o.stderr));
                continue;
            }
            outs.push((fs::read(d.join("a.csv")).unwrap(), fs::read(d.join("r.json")).unwrap()));
        }
        assert_eq!(outs[0], outs[1], "{args:?}");
    }
}

#[test]
fn json_report_round_trips() {
    let d = scratch("json");
    let o = run_in(&d, &["sector", "--lambda", "-1,1", "--report", "r.json", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(d.join("r.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["command"], "sector");
    assert_eq!(v["data"]["gamma"].as_f64().unwrap(), 4.0);
    assert!(v.get("wall_clock").is_none());
    fs::write(d.join("again.json"), serde_json::to_string(&v["config"]).unwrap()).unwrap();
    let o = run_in(&d, &["run", "--config", "again.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn csv_report_writes_check_and_table_files() {
    let d = scratch("csvreport");
    let o = run_in(&d, &["metric", "--check", "mass", "--report", "rep.csv", "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (head, rows) = csv_rows(&d.join("rep.csv"));
    assert_eq!(head, ["name", "pass", "detail", "witness"]);
    assert_eq!(rows.len(), 3);
    let (_, mass) = csv_rows(&d.join("rep-mass.csv"));
    assert_eq!(mass.len(), 3);
}

#[test]
fn jobs_flag_is_accepted() {
    let d = scratch("jobs");
    let o = bin().current_dir(&d).env("FOLIATION_LAB_JOBS", "1").args(["sector", "--lambda", "0,1"]).output().unwrap();
    assert!(o.status.success());
    let o = run_in(&d, &["--jobs", "1", "sector", "--lambda", "0,1"]);
    assert!(o.status.success());
}
