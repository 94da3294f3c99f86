//! End-to-end tests of the `twise` binary: command examples, output formats,
//! sidecars and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn twise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twise"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = twise(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn sidecar(path: &Path) -> serde_json::Value {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    serde_json::from_str(&std::fs::read_to_string(s).unwrap()).unwrap()
}

#[test]
fn loss_eval_grid() {
    let csv = stdout(&["loss-eval", "--gamma", "2", "--eps", "-2:0.5:2"]);
    let rows: Vec<&str> = csv.trim().lines().collect();
    assert_eq!(rows[0], "epsilon,value,dvalue");
    assert_eq!(rows.len() - 1, 9, "expected 9 data rows");
    // spot-check against the library kernels
    let cells: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(cells[0], "-2");
    let value: f64 = cells[1].parse().unwrap();
    assert_eq!(value, twise::losses::ale(-2.0, 2.0).unwrap().value);
}

#[test]
fn loss_eval_gamma_one_is_abs() {
    let csv = stdout(&["loss-eval", "--gamma", "1", "--eps", "-3:1:3"]);
    for line in csv.trim().lines().skip(1) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells[1], cells[0].abs(), "gamma=1 must equal |eps|");
    }
}

#[test]
fn loss_eval_field_mode_matches_scalar_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, vals: &[f64]| {
        let map = twise::DepthMap::from_data(2, 1, vals.to_vec()).unwrap();
        let path = dir.path().join(name);
        twise::pgm::write_depth(&path, &map).unwrap();
        path
    };
    // values on the 1/256 grid so the PGM encoding is exact
    let c1 = write("c1.pgm", &[11.0, 8.0]);
    let c2 = write("c2.pgm", &[9.0, 12.0]);
    let target = write("t.pgm", &[10.0, 10.0]);
    let sigma_grid = twise::Grid::from_data(2, 1, vec![0.5, 0.5]).unwrap();
    let sigma_path = dir.path().join("sigma.pgm");
    twise::pgm::write_unit(&sigma_path, &sigma_grid).unwrap();

    let out = stdout(&[
        "loss-eval",
        "--gamma",
        "2",
        "--c1",
        c1.to_str().unwrap(),
        "--c2",
        c2.to_str().unwrap(),
        "--sigma",
        sigma_path.to_str().unwrap(),
        "--target",
        target.to_str().unwrap(),
    ]);
    let lines: Vec<&str> = out.trim().lines().collect();
    assert_eq!(lines[0], "combined_loss");
    let got: f64 = lines[1].parse().unwrap();
    // scalar recomputation: pixel 1: ale(1,2)+rale(-1,2)+|10-10| = 4;
    // pixel 2: ale(-2,2)+rale(2,2)+|10-10| = 1 + 1 + 0 = 2; mean = 3.
    // sigma rides through a 16-bit PGM, so allow its quantization step.
    assert!((got - 3.0).abs() < 1e-4, "combined loss {got}");
}

#[test]
fn analyze_thresholds_and_empirical_agreement() {
    let csv = stdout(&["analyze", "--p1", "0.1,0.5", "--gamma", "2"]);
    let rows: Vec<&str> = csv.trim().lines().collect();
    assert_eq!(
        rows[0],
        "p1,gamma,threshold,predicted,empirical_c1,empirical_c2,empirical_sigma,agree"
    );
    let row_01: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(row_01[0], "0.1");
    assert_eq!(row_01[2], "3"); // sqrt(0.9/0.1)
    let row_05: Vec<&str> = rows[2].split(',').collect();
    assert_eq!(row_05[2], "1");

    let csv = stdout(&[
        "analyze",
        "--p1",
        "0.3",
        "--gamma",
        "2",
        "--empirical",
        "--iterations",
        "8000",
    ]);
    let row: Vec<&str> = csv.trim().lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[7], "yes", "empirical fit should agree with prediction: {row:?}");
    let c1: f64 = row[4].parse().unwrap();
    assert!((c1 - 10.0).abs() < 1.5);
}

#[test]
fn synth_writes_maps_with_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let out = twise(&[
        "synth",
        "--preset",
        "slab2d",
        "--seed",
        "5",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    for name in ["dense.pgm", "sparse.pgm", "labels.pgm"] {
        let path = dir.path().join(name);
        assert!(path.exists(), "{name} missing");
        let side = sidecar(&path);
        assert_eq!(side["tool"], "twise");
        assert_eq!(side["seed"], 5);
        assert!(side["config_hash"].as_str().unwrap().starts_with("fnv1a64:"));
        assert_eq!(side["config"]["scene"]["kind"], "slab2d");
    }
    let dense = twise::pgm::read_depth(dir.path().join("dense.pgm")).unwrap();
    assert!(dense.valid_count() > 0);
}

#[test]
fn sparsify_counts_halve() {
    let dir = tempfile::tempdir().unwrap();
    let mut counts = Vec::new();
    for rows in ["32", "16"] {
        let out = twise(&[
            "sparsify",
            "--preset",
            "composite",
            "--rows",
            rows,
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success());
        let path = dir.path().join(format!("sparse_{rows}r.pgm"));
        counts.push(twise::pgm::read_depth(&path).unwrap().valid_count() as f64);
        let side = sidecar(&path);
        assert_eq!(side["stats"]["kept_rings"].as_array().unwrap().len(), rows.parse::<usize>().unwrap());
    }
    let ratio = counts[0] / counts[1];
    assert!((1.7..=2.3).contains(&ratio), "32R/16R ratio {ratio}");
}

#[test]
fn semidense_outlier_fraction_in_sidecar() {
    let dir0 = tempfile::tempdir().unwrap();
    let out = twise(&[
        "semidense",
        "--preset",
        "slab2d",
        "--sigma-t",
        "0",
        "--sigma-r",
        "0",
        "--frames",
        "2",
        "--out-dir",
        dir0.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let side = sidecar(&dir0.path().join("semidense.pgm"));
    assert_eq!(side["stats"]["outliers"]["metric_fraction"], 0.0);

    let dir1 = tempfile::tempdir().unwrap();
    let out = twise(&[
        "semidense",
        "--preset",
        "slab2d",
        "--sigma-t",
        "0.05",
        "--frames",
        "2",
        "--seed",
        "4",
        "--out-dir",
        dir1.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let side = sidecar(&dir1.path().join("semidense.pgm"));
    assert!(side["stats"]["outliers"]["metric_fraction"].as_f64().unwrap() > 0.0);
}

#[test]
fn fit_compare_pipeline_on_step_scene() {
    let dir = tempfile::tempdir().unwrap();
    let scene_dir = dir.path().join("scene");
    let twise_dir = dir.path().join("twise_fit");
    let l2_dir = dir.path().join("l2_fit");
    let cmp_dir = dir.path().join("cmp");

    assert!(twise(&[
        "synth", "--preset", "step1d", "--out-dir", scene_dir.to_str().unwrap()
    ])
    .status
    .success());
    for (d, baseline) in [(&twise_dir, "twise"), (&l2_dir, "l2")] {
        let out = twise(&[
            "fit",
            "--preset",
            "step1d",
            "--baseline",
            baseline,
            "--iterations",
            "200",
            "--out-dir",
            d.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "fit {baseline} failed");
        for name in ["fused.pgm", "c1.pgm", "c2.pgm", "sigma.pgm", "ambiguity.pgm", "trace.csv", "report.json"] {
            assert!(d.join(name).exists(), "{baseline}: {name} missing");
        }
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
        assert_eq!(report["diverged"], false);
    }

    // trace is monotone non-increasing
    let trace = std::fs::read_to_string(twise_dir.join("trace.csv")).unwrap();
    let losses: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(losses.windows(2).all(|w| w[1] <= w[0] + 1e-12));

    let out = twise(&[
        "compare",
        "--pred-a",
        l2_dir.join("fused.pgm").to_str().unwrap(),
        "--pred-b",
        twise_dir.join("fused.pgm").to_str().unwrap(),
        "--gt",
        scene_dir.join("dense.pgm").to_str().unwrap(),
        "--labels",
        scene_dir.join("labels.pgm").to_str().unwrap(),
        "--out-dir",
        cmp_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // twin-surface wins more pixels than it loses against L2
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cmp_dir.join("summary.json")).unwrap()).unwrap();
    let wins = summary["win_count"].as_u64().unwrap();
    let losses = summary["loss_count"].as_u64().unwrap();
    assert!(wins > losses, "wins {wins} vs losses {losses}");

    // region rows are ordered whole/edge/inside
    let metrics = std::fs::read_to_string(cmp_dir.join("metrics_b.csv")).unwrap();
    let regions: Vec<&str> = metrics
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(regions, vec!["whole", "edge", "inside"]);

    // histogram CSV format
    let hist = std::fs::read_to_string(cmp_dir.join("hist_a_wins.csv")).unwrap();
    assert!(hist.starts_with("bin_left,bin_right,count\n"));

    // identical predictions produce zero maps and equal metrics
    let cmp_same = dir.path().join("cmp_same");
    assert!(twise(&[
        "compare",
        "--pred-a",
        twise_dir.join("fused.pgm").to_str().unwrap(),
        "--pred-b",
        twise_dir.join("fused.pgm").to_str().unwrap(),
        "--gt",
        scene_dir.join("dense.pgm").to_str().unwrap(),
        "--out-dir",
        cmp_same.to_str().unwrap(),
    ])
    .status
    .success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cmp_same.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["win_count"], 0);
    assert_eq!(summary["loss_count"], 0);
}

#[test]
fn metrics_perfect_prediction() {
    let dir = tempfile::tempdir().unwrap();
    assert!(twise(&["synth", "--preset", "flat1d", "--out-dir", dir.path().to_str().unwrap()])
        .status
        .success());
    let dense = dir.path().join("dense.pgm");
    let csv = stdout(&[
        "metrics",
        "--pred",
        dense.to_str().unwrap(),
        "--gt",
        dense.to_str().unwrap(),
    ]);
    let row: Vec<&str> = csv.trim().lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "whole");
    for cell in &row[1..7] {
        assert_eq!(cell.parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn fit_config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("fit.json");
    std::fs::write(
        &cfg_path,
        r#"{"learning_rate": 0.5, "iterations": 60, "bandwidth": 6.0, "gamma": 2.0}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = twise(&[
        "fit",
        "--preset",
        "flat1d",
        "--config",
        cfg_path.to_str().unwrap(),
        "--iterations",
        "30",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["fit"]["iterations"], 30, "flag must override file");

    // unknown keys in the config are rejected (exit 1)
    std::fs::write(&cfg_path, r#"{"learning_rate": 0.5, "unknown_key": 1}"#).unwrap();
    let out = twise(&[
        "fit",
        "--preset",
        "flat1d",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    // usage errors -> 1
    assert_eq!(twise(&["loss-eval", "--gamma", "0.5", "--eps", "0:1:2"]).status.code(), Some(1));
    assert_eq!(twise(&["loss-eval"]).status.code(), Some(1));
    assert_eq!(
        twise(&["sparsify", "--preset", "slab2d", "--rows", "12", "--out-dir", "/tmp"]).status.code(),
        Some(1)
    );
    assert_eq!(twise(&["fit", "--iterations", "5"]).status.code(), Some(1)); // no scene
    assert_eq!(twise(&["no-such-command"]).status.code(), Some(1));

    // data errors -> 2
    assert_eq!(
        twise(&["metrics", "--pred", "/nonexistent.pgm", "--gt", "/nonexistent.pgm"]).status.code(),
        Some(2)
    );

    // non-convergence -> 3 (a divergent stochastic fit)
    let out = twise(&[
        "analyze",
        "--p1",
        "0.3",
        "--gamma",
        "2",
        "--empirical",
        "--learning-rate",
        "1e9",
        "--iterations",
        "2000",
    ]);
    assert_eq!(out.status.code(), Some(3));

    // help exits 0
    assert_eq!(twise(&["--help"]).status.code(), Some(0));
}

#[test]
fn scene_spec_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("scene.json");
    std::fs::write(
        &spec_path,
        r#"{"kind": "pole", "width": 96, "height": 64, "pole_depth": 7.0, "bg_depth": 25.0, "pole_width_px": 2}"#,
    )
    .unwrap();
    let out = twise(&[
        "synth",
        "--scene",
        spec_path.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let labels = twise::pgm::read_labels(dir.path().join("labels.pgm")).unwrap();
    assert!(labels.2.contains(&1), "pole label missing");

    // unknown scene keys rejected
    std::fs::write(&spec_path, r#"{"kind": "pole", "bogus": 1}"#).unwrap();
    assert_eq!(
        twise(&["synth", "--scene", spec_path.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}
