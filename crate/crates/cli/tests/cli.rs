use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn cml(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cml"));
    for (k, _) in std::env::vars_os() {
        if k.to_string_lossy().starts_with("CML_") {
            c.env_remove(k);
        }
    }
    c.args(args);
    c
}

fn run(args: &[&str]) -> Output {
    cml(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn bounds_prints_the_bundle() {
    let v = stdout_json(&run(&["bounds", "--a", "0.1", "--b", "0.25"]));
    assert_eq!(v["mean_Nb"], 4.0);
    assert_eq!(v["mean_Dab"], 5.0);
    assert_eq!(v["var_cap_Nb"], 12.0);
    assert_eq!(v["var_cap_Dab_conjectured"], 30.0);
}

#[test]
fn simulate_output_is_byte_identical_for_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for workers in ["1", "2", "1"] {
        let path = dir.path().join(format!("r{}.json", files.len()));
        let p = path.to_str().unwrap();
        let out = run(&[
            "simulate",
            "--program",
            "sequential",
            "--b0",
            "0.05",
            "--a",
            "0.1",
            "--b",
            "0.25",
            "--runs",
            "1500",
            "--seed",
            "42",
            "--workers",
            workers,
            "--out",
            p,
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        files.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
    let v: Value = serde_json::from_slice(&files[0]).unwrap();
    assert_eq!(v["program"], "sequential");
    assert_eq!(v["runs"], 1500);
    assert_eq!(v["report"]["n_b"]["n"], 1500);
    assert!(v["goodness_of_fit"]["n_b_geometric"]["p_value"].is_number());
}

#[test]
fn every_program_runs() {
    for (prog, a, b) in [
        ("survivor", "0.1", "0.3"),
        ("survivor0", "0.1", "0.25"),
        ("smallspread", "0.05", "0.1"),
        ("embed", "0.1", "0.25"),
        ("small-spread", "0.05", "0.1"),
    ] {
        let v = stdout_json(&run(&[
            "simulate",
            "--program",
            prog,
            "--a",
            a,
            "--b",
            b,
            "--runs",
            "200",
        ]));
        assert_eq!(v["report"]["n_b"]["n"], 200, "{prog}");
    }
    let v = stdout_json(&run(&[
        "simulate",
        "--program",
        "wf",
        "--k",
        "4",
        "--h",
        "1e-3",
        "--a",
        "0.2",
        "--b",
        "0.4",
        "--runs",
        "20",
    ]));
    assert_eq!(v["program"], "wf");
    assert_eq!(v["parameters"]["k"], 4);
}

#[test]
fn survivor_law_through_the_cli() {
    let v = stdout_json(&run(&[
        "simulate",
        "--program",
        "survivor",
        "--n0",
        "100",
        "--a",
        "0.1",
        "--b",
        "0.3",
        "--runs",
        "500",
    ]));
    let hist = v["report"]["n_b"]["histogram"].as_object().unwrap();
    let keys: Vec<&str> = hist.keys().map(String::as_str).collect();
    assert_eq!(keys, ["3", "4"]);
}

#[test]
fn explicit_distribution_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.txt");
    std::fs::write(&p, "0.25 0.25\n0.25, 0.25\n").unwrap();
    let v = stdout_json(&run(&[
        "simulate",
        "--program",
        "survivor",
        "--p-file",
        p.to_str().unwrap(),
        "--a",
        "0.1",
        "--b",
        "0.25",
        "--runs",
        "50",
    ]));
    assert_eq!(v["report"]["n_b"]["histogram"]["4"], 50);
    let out = run(&[
        "simulate",
        "--program",
        "survivor",
        "--p",
        "0.6,0.4",
        "--a",
        "0.1",
        "--b",
        "0.25",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("precondition"));
}

fn seed_of(out: Output) -> u64 {
    stdout_json(&out)["seed"].as_u64().unwrap()
}

#[test]
fn config_precedence_is_cli_then_env_then_file() {
    let conf = fixture("sequential.conf");
    let conf = conf.to_str().unwrap();
    let from_file = run(&["simulate", "--config", conf]);
    let v = stdout_json(&from_file);
    assert_eq!(v["seed"], 7);
    assert_eq!(v["runs"], 500);

    let env = cml(&["simulate", "--config", conf])
        .env("CML_SEED", "8")
        .output()
        .unwrap();
    assert_eq!(seed_of(env), 8);

    let cli = cml(&["simulate", "--config", conf, "--seed", "9"])
        .env("CML_SEED", "8")
        .output()
        .unwrap();
    assert_eq!(seed_of(cli), 9);

    let via_env = cml(&["simulate"]).env("CML_CONFIG", conf).output().unwrap();
    assert_eq!(seed_of(via_env), 7);

    // the file only fills in what is missing
    let explicit = run(&[
        "simulate",
        "--program",
        "sequential",
        "--a",
        "0.1",
        "--b",
        "0.25",
        "--b0",
        "0.05",
        "--runs",
        "500",
        "--seed",
        "7",
    ]);
    assert_eq!(explicit.stdout, from_file.stdout);
}

#[test]
fn bad_config_files_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.conf");
    std::fs::write(&p, "colour = blue\n").unwrap();
    let out = run(&["bounds", "--config", p.to_str().unwrap(), "--a", "0.1", "--b", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown key 'colour'"));
    let out = run(&["bounds", "--config", "/nonexistent/x.conf"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_matches_hand_counts() {
    let csv = fixture("market_three.csv");
    for interp in ["linear", "step"] {
        let v = stdout_json(&run(&[
            "analyze",
            "--csv",
            csv.to_str().unwrap(),
            "--a",
            "0.2",
            "--b",
            "0.5",
            "--interp",
            interp,
        ]));
        let c = &v["crossings"];
        assert_eq!(v["renormalized_timestamps"], 1);
        assert_eq!(c["n_b"], 3, "{interp}");
        assert_eq!(c["d_ab"], 3, "{interp}");
        let per: Vec<(String, u64, bool)> = c["contestants"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| {
                (
                    x["contestant"].as_str().unwrap().to_string(),
                    x["monitor"]["downcrossings"].as_u64().unwrap(),
                    x["monitor"]["reached_b"].as_bool().unwrap(),
                )
            })
            .collect();
        assert_eq!(
            per,
            [
                ("alice".to_string(), 2, true),
                ("bob".to_string(), 1, true),
                ("carol".to_string(), 0, true)
            ]
        );
        assert!(c["caveat"].as_str().unwrap().contains("undercount"));
    }
    let v = stdout_json(&run(&[
        "analyze",
        "--csv",
        csv.to_str().unwrap(),
        "--a",
        "0.25",
        "--b",
        "0.55",
    ]));
    assert_eq!(v["crossings"]["n_b"], 3);
    assert_eq!(v["crossings"]["d_ab"], 2);
}

#[test]
fn malformed_market_files() {
    let cases = [
        ("market_bad_prob.csv", "line 4"),
        ("market_bad_norm.csv", "1352163600"),
        ("market_empty.csv", "no data rows"),
        ("market_unsorted.csv", "line 4"),
        ("market_bad_header.csv", "line 1"),
    ];
    for (name, needle) in cases {
        let csv = fixture(name);
        let out = run(&["analyze", "--csv", csv.to_str().unwrap(), "--a", "0.2", "--b", "0.5"]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        assert!(stderr(&out).contains(needle), "{name}: {}", stderr(&out));
    }
    let out = run(&["analyze", "--csv", "none.csv", "--a", "0.2", "--b", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("file not found"));
    let csv = fixture("market_three.csv");
    let out = run(&["analyze", "--csv", csv.to_str().unwrap(), "--a", "0.5", "--b", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "analyze",
        "--csv",
        csv.to_str().unwrap(),
        "--a",
        "0.2",
        "--b",
        "0.5",
        "--interp",
        "cubic",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    let out = run(&["simulate", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Usage"));
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let out = run(&[
        "simulate",
        "--program",
        "embed",
        "--a",
        "0.1",
        "--b",
        "0.25",
        "--depth",
        "-1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "simulate",
        "--program",
        "sequential",
        "--b0",
        "0.3",
        "--a",
        "0.1",
        "--b",
        "0.25",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(run(&["--help"]).status.success());
}

#[test]
fn solver_failure_is_a_runtime_error() {
    let out = run(&["pde", "--b", "0.5", "--m", "31", "--max-iter", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("did not converge"));
}

#[test]
fn pde_writes_grid_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.csv");
    let v = stdout_json(&run(&[
        "pde",
        "--b",
        "0.5",
        "--m",
        "15",
        "--out",
        grid.to_str().unwrap(),
    ]));
    assert!(v["symmetry_defect"].as_f64().unwrap() <= 1e-8);
    assert_eq!(v["boundary_defect"], 0.0);
    let text = std::fs::read_to_string(&grid).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,f"));
    assert_eq!(lines.count(), 17 * 17);
    let v = stdout_json(&run(&["pde", "--b", "0.5", "--m", "255", "--corner", "--tol", "1e-10"]));
    assert_eq!(v["corner"]["ratios"].as_array().unwrap().len(), 4);
    assert!(v["nested_difference"].as_f64().unwrap() < 1e-3);
}

#[test]
fn trace_and_histogram_files() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let hist = dir.path().join("h.csv");
    let out = dir.path().join("r.json");
    let o = run(&[
        "simulate",
        "--program",
        "sequential",
        "--a",
        "0.1",
        "--b",
        "0.25",
        "--runs",
        "100",
        "--trace",
        trace.to_str().unwrap(),
        "--hist",
        hist.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("mean_Nb"));
    let t = std::fs::read_to_string(&trace).unwrap();
    assert!(t.starts_with("run_id,stage,component_id,value,status\n"));
    assert!(t.lines().count() > 2);
    let h = std::fs::read_to_string(&hist).unwrap();
    assert!(h.starts_with("statistic,value,count\n"));
    let total: u64 = h
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("N_b,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 100);
}

#[test]
fn report_merges_documents() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    std::fs::write(&a, "{\"x\": 1}").unwrap();
    std::fs::write(&b, "[2]").unwrap();
    let v = stdout_json(&run(&["report", a.to_str().unwrap(), b.to_str().unwrap()]));
    assert_eq!(v["documents"][0]["content"]["x"], 1);
    assert_eq!(v["documents"][1]["content"][0], 2);
    std::fs::write(&b, "not json").unwrap();
    let out = run(&["report", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cov3_through_wf() {
    let v = stdout_json(&run(&[
        "wf", "--b", "0.5", "--cov3", "0.2,0.2", "--runs", "100", "--h", "1e-3",
    ]));
    let e = v["cov3"]["estimate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&e));
    let v = stdout_json(&run(&["wf", "--b", "0.5", "--cov3", "0,0.2", "--runs", "10"]));
    assert_eq!(v["cov3"]["estimate"], 0.0);
    let out = run(&["wf", "--b", "0.5", "--cov3", "0.6,0.2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["wf", "--b", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}
