use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use divbandit_cli::commands::{self, LowerBoundArgs};
use divbandit_cli::{ExperimentConfig, Overrides, EXIT_CONFIG, EXIT_RUNTIME};
use serde_json::Value;
use tempfile::TempDir;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn divbandit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divbandit"))
        .args(args)
        .env_remove("DIVBANDIT_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

const FLOOR_POLYTOPE: &str = r#"
[polytope]
type = "group"
k = 3
groups = [[0], [1]]
lower = [0.1, 0.1]
"#;

#[test]
fn smoke_run_writes_csvs_with_exact_headers_quickly() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let start = Instant::now();
    let o = divbandit(&[
        "run",
        config_path("smoke.toml").to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(elapsed < 1.0, "smoke run took {elapsed}s");

    let inst = out.join("alpha_0.05");
    let (h, rows) = read_csv(&inst.join("runs.csv"));
    assert_eq!(
        h,
        ["algorithm", "run", "seed", "t", "pseudo_regret", "n_star"]
    );
    // 3 policies × 2 runs × checkpoints {5, 10}.
    assert_eq!(rows.len(), 12);
    let (h, rows) = read_csv(&inst.join("summary.csv"));
    assert_eq!(h, ["algorithm", "t", "mean", "stderr", "lo2se", "hi2se"]);
    assert_eq!(rows.len(), 6);
    let algos: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(
        algos,
        [
            "dp_ucb",
            "dp_ucb",
            "vertex_ucb",
            "vertex_ucb",
            "lin_ucb",
            "lin_ucb"
        ]
    );
}

#[test]
fn meta_json_round_trips_the_resolved_config() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = config_path("smoke.toml");
    let o = divbandit(&[
        "run",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--seed",
        "42",
        "--stride",
        "2",
    ]);
    assert!(o.status.success());
    let meta: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("alpha_0.05/meta.json")).unwrap())
            .unwrap();

    let mut expected = ExperimentConfig::load(&cfg).unwrap();
    expected.apply(&Overrides {
        seed: Some(42),
        out_dir: Some(out.clone()),
        stride: Some(2),
    });
    let embedded: ExperimentConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    assert_eq!(embedded, expected);
    // And the embedded config survives a trip through TOML.
    assert_eq!(
        ExperimentConfig::from_toml(&embedded.to_toml().unwrap()).unwrap(),
        expected
    );

    assert_eq!(
        meta["gap_report"]["optimal_set"].as_array().unwrap().len(),
        1
    );
    assert!(meta["envelopes"]["case1_at_horizon"].as_f64().unwrap() > 0.0);
    assert_eq!(meta["policies"].as_array().unwrap().len(), 3);
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    for name in [
        "paper_sec4.toml",
        "paper_confsets.toml",
        "lowerbound_gaussian.toml",
        "smoke.toml",
        "baselines.toml",
    ] {
        let cfg = ExperimentConfig::load(&config_path(name)).unwrap();
        assert_eq!(
            ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(),
            cfg,
            "{name}"
        );
        cfg.resolve().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn alpha_grid_config_yields_four_summaries() {
    let dir = TempDir::new().unwrap();
    let mut cfg = ExperimentConfig::load(&config_path("paper_sec4.toml")).unwrap();
    assert_eq!(
        (cfg.horizon, cfg.n_runs, cfg.instances.len()),
        (20_000, 75, 4)
    );
    // Same setting at a short horizon.
    cfg.horizon = 300;
    cfg.n_runs = 3;
    cfg.out_dir = Some(dir.path().to_path_buf());
    let resolved = cfg.resolve().unwrap();
    let dirs = commands::run(&resolved, None, Some(2), &mut Vec::new()).unwrap();
    let names: Vec<String> = dirs
        .iter()
        .map(|d| d.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        ["alpha_-0.1", "alpha_-0.05", "alpha_0.05", "alpha_0.1"]
    );
    for d in dirs {
        assert!(d.join("summary.csv").is_file());
    }
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = config_path("smoke.toml");
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "3", "3"].iter().enumerate() {
        let out = dir.path().join(format!("o{i}"));
        let o = divbandit(&[
            "run",
            cfg.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "--threads",
            threads,
            "--seed",
            "9",
        ]);
        assert!(o.status.success());
        outputs.push(std::fs::read(out.join("alpha_0.05/runs.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
}

#[test]
fn threads_env_var_is_the_fallback() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_divbandit"))
        .args([
            "run",
            config_path("smoke.toml").to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ])
        .env("DIVBANDIT_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(EXIT_CONFIG as i32));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--threads"));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = TempDir::new().unwrap();
    let bad_ell = write_config(&dir, "ell.toml", "name = \"x\"\n[polytope]\ntype = \"min_prob\"\nk = 3\nell = 0.5\n[[instances]]\nalpha = 0.05\n");
    let unknown = write_config(
        &dir,
        "unknown.toml",
        &format!("name = \"x\"\nhorizn = 5\n{FLOOR_POLYTOPE}\n[[instances]]\nalpha = 0.05\n"),
    );
    let both = write_config(&dir, "both.toml", &format!("name = \"x\"\n{FLOOR_POLYTOPE}\n[[instances]]\nalpha = 0.05\narms = [{{ kind = \"point\", value = 0.5 }}]\n"));
    let empty = write_config(&dir, "empty.toml", "name = \"x\"\n[polytope]\ntype = \"budget\"\nk = 2\ncosts = [[-1.0, -1.0]]\ncaps = [-2.0]\n[[instances]]\narms = [{ kind = \"point\", value = 0.5 }, { kind = \"point\", value = 0.2 }]\n");
    let gaussian_run = config_path("lowerbound_gaussian.toml");
    let missing = dir.path().join("missing.toml");
    for args in [
        vec!["run", bad_ell.as_str()],
        vec!["run", unknown.as_str()],
        vec!["analyze", both.as_str()],
        vec!["analyze", empty.as_str()],
        vec!["run", gaussian_run.to_str().unwrap()],
        vec!["run", missing.to_str().unwrap()],
        vec!["confsets", config_path("smoke.toml").to_str().unwrap()],
        vec!["lowerbound", config_path("smoke.toml").to_str().unwrap()],
        vec![
            "analyze",
            config_path("smoke.toml").to_str().unwrap(),
            "--instance",
            "nope",
        ],
    ] {
        let o = divbandit(&args);
        assert_eq!(
            o.status.code(),
            Some(EXIT_CONFIG as i32),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(!o.stderr.is_empty());
    }
    let o = divbandit(&["run", bad_ell.as_str()]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("minimal probability"));
}

#[test]
fn runtime_errors_exit_with_code_3() {
    let dir = TempDir::new().unwrap();
    let tie = write_config(&dir, "tie.toml", "name = \"x\"\n[polytope]\ntype = \"min_prob\"\nk = 2\nell = 0.0\n[[instances]]\narms = [{ kind = \"gaussian\", mean = 0.5, variance = 1.0 }, { kind = \"gaussian\", mean = 0.5, variance = 1.0 }]\n");
    let o = divbandit(&["lowerbound", &tie]);
    assert_eq!(o.status.code(), Some(EXIT_RUNTIME as i32));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not unique"));

    // The output directory path is occupied by a file.
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let o = divbandit(&[
        "run",
        config_path("smoke.toml").to_str().unwrap(),
        "--out-dir",
        blocker.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_RUNTIME as i32));
}

#[test]
fn analyze_reports_alpha_family_gaps() {
    let cfg = config_path("paper_sec4.toml");
    let v = json(&divbandit(&[
        "analyze",
        cfg.to_str().unwrap(),
        "--instance",
        "alpha_0.05",
    ]));
    let r = &v[0];
    let gaps = &r["gap_report"];
    assert!((gaps["min_gap"].as_f64().unwrap() - 0.08).abs() < 1e-12);
    assert_eq!(gaps["p_star_min"].as_f64().unwrap(), 0.0);
    let opt = gaps["optimal_set"][0].as_u64().unwrap() as usize;
    let vertex: Vec<f64> = serde_json::from_value(r["vertices"][opt].clone()).unwrap();
    assert_eq!(vertex, [0.9, 0.1, 0.0]);

    let v = json(&divbandit(&[
        "analyze",
        cfg.to_str().unwrap(),
        "--instance",
        "alpha_-0.05",
    ]));
    let gaps = &v[0]["gap_report"];
    assert!((gaps["p_star_min"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    // P contains p_3 = 0 points, so the ell > 0 envelope does not apply here.
    assert_eq!(gaps["ell_min"].as_f64().unwrap(), 0.0);
    assert!(v[0]["envelopes"]["case3"].is_null());
}

#[test]
fn analyze_reports_case3_and_t0_when_ell_is_positive() {
    let v = json(&divbandit(&[
        "analyze",
        config_path("smoke.toml").to_str().unwrap(),
    ]));
    let env = &v[0]["envelopes"];
    assert!(env["case3"].as_f64().unwrap().is_finite());
    let t0 = &env["t0"];
    let value = t0["value"].as_f64().unwrap();
    assert!(t0["lower"].as_f64().unwrap() <= value && value <= t0["upper"].as_f64().unwrap());
}

#[test]
fn single_vertex_polytope_gets_a_notice() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "one.toml", "name = \"x\"\n[polytope]\ntype = \"vertices\"\nlist = [[0.5, 0.5]]\n[[instances]]\narms = [{ kind = \"bernoulli\", mean = 0.3 }, { kind = \"bernoulli\", mean = 0.6 }]\n");
    let o = divbandit(&["analyze", &cfg]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no suboptimal vertices"));
    let v = json(&o);
    assert_eq!(
        v[0]["notice"].as_str().unwrap(),
        commands::NO_SUBOPTIMAL_NOTICE
    );
    assert!(v[0]["gap_report"]["min_gap"].is_null());
}

#[test]
fn lowerbound_interior_is_zero_and_boundary_is_positive() {
    let cfg = config_path("lowerbound_gaussian.toml");
    let v = json(&divbandit(&[
        "lowerbound",
        cfg.to_str().unwrap(),
        "--grid-points",
        "50",
    ]));
    assert_eq!(v[0]["instance"], "interior");
    assert_eq!(v[0]["value"].as_f64().unwrap(), 0.0);
    assert_eq!(v[0]["conf_empty"], true);
    assert_eq!(v[1]["instance"], "boundary");
    assert!(v[1]["value"].as_f64().unwrap() > 1e-4);
    assert!(v[1]["constraint_count"].as_u64().unwrap() > 0);
    assert_eq!(v[1]["allocation"].as_array().unwrap().len(), 2);

    // Bounded instances are mapped to their Gaussian analog by --sigma2.
    let alpha_cfg = config_path("paper_sec4.toml");
    let w = json(&divbandit(&[
        "lowerbound",
        alpha_cfg.to_str().unwrap(),
        "--sigma2",
        "1",
        "--instance",
        "alpha_0.05",
        "--grid-points",
        "50",
    ]));
    assert!((w[0]["value"].as_f64().unwrap() - v[1]["value"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn lowerbound_empty_grid_warns_and_returns_zero() {
    let cfg = config_path("lowerbound_gaussian.toml");
    let o = divbandit(&[
        "lowerbound",
        cfg.to_str().unwrap(),
        "--grid-points",
        "0",
        "--instance",
        "boundary",
    ]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let v = json(&o);
    assert_eq!(v[0]["value"].as_f64().unwrap(), 0.0);
    assert!(v[0]["warning"].is_string());
}

#[test]
fn lowerbound_flags_override_config() {
    let resolved = ExperimentConfig::load(&config_path("lowerbound_gaussian.toml"))
        .unwrap()
        .resolve()
        .unwrap();
    let args = |points| LowerBoundArgs {
        grid_points: Some(points),
        grid_min: Some(0.5),
        grid_max: Some(3.0),
        ..Default::default()
    };
    let coarse = commands::lowerbound(
        &resolved,
        Some("boundary"),
        &args(6),
        &mut Vec::new(),
        &mut Vec::new(),
    )
    .unwrap();
    let fine = commands::lowerbound(
        &resolved,
        Some("boundary"),
        &args(11),
        &mut Vec::new(),
        &mut Vec::new(),
    )
    .unwrap();
    assert_eq!(coarse[0].grid_points, 6);
    assert!(fine[0].value >= coarse[0].value);
}

#[test]
fn confsets_replays_the_figure_protocol() {
    let dir = TempDir::new().unwrap();
    let cfg = config_path("paper_confsets.toml");
    let mut files = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("c{i}"));
        let v = json(&divbandit(&[
            "confsets",
            cfg.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ]));
        assert_eq!(v["observations"], 300);
        files.push(std::fs::read(out.join("confsets.csv")).unwrap());
        let (h, rows) = read_csv(&out.join("confsets.csv"));
        assert_eq!(h, ["shape", "index", "x", "y"]);
        let count = |s: &str| rows.iter().filter(|r| r[0] == s).count();
        assert_eq!(count("rectangle"), 4);
        assert_eq!(count("ellipse"), 256);
        assert_eq!(count("true_mean"), 1);
        let mean = rows.iter().find(|r| r[0] == "true_mean").unwrap();
        assert_eq!((mean[2].as_str(), mean[3].as_str()), ("0.2", "0.3"));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn confsets_without_samples_is_centered_on_defaults() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "zero.toml", &format!(
        "name = \"z\"\nout_dir = \"{}\"\n[polytope]\ntype = \"min_prob\"\nk = 2\nell = 0.0\n[[instances]]\narms = [{{ kind = \"bernoulli\", mean = 0.2 }}, {{ kind = \"bernoulli\", mean = 0.3 }}]\n[confsets]\nactions = [[0.5, 0.5]]\ncounts = [0]\n",
        dir.path().join("out").display()
    ));
    let v = json(&divbandit(&["confsets", &cfg]));
    assert_eq!(v["observations"], 0);
    let (_, rows) = read_csv(&dir.path().join("out/confsets.csv"));
    let w = (2.0 * 2f64.ln()).sqrt();
    for r in rows.iter().filter(|r| r[0] == "rectangle") {
        for c in [&r[2], &r[3]] {
            let x: f64 = c.parse().unwrap();
            assert!(((x - 1.0).abs() - w).abs() < 1e-12);
        }
    }
}

#[test]
fn confsets_rejects_more_than_two_arms() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "k3.toml", &format!("name = \"x\"\n{FLOOR_POLYTOPE}\n[[instances]]\nalpha = 0.05\n[confsets]\nactions = [[0.1, 0.9, 0.0]]\ncounts = [10]\n"));
    let o = divbandit(&["confsets", &cfg]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG as i32));
    assert!(String::from_utf8_lossy(&o.stderr).contains("2-D"));
}
