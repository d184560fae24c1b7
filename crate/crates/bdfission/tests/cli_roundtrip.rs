//! End-to-end checks of the batch front door: the binary's subcommands, the
//! persisted file formats, determinism of reruns, and the exit-code
//! contract.

use std::fs;
use std::path::Path;
use std::process::Command;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bdfission"))
}

fn desk_config() -> serde_json::Value {
    serde_json::json!({
        "model": {
            "dimension": 1,
            "mortality": {"kind": "constant", "rate": 1.0},
            "competition": {"shape": "tophat", "amplitude": 0.3, "radius": 1.0},
            "fission": {
                "total_mass": 0.8,
                "variant": "factorized",
                "dispersal": {"shape": "gaussian", "amplitude": 1.0, "scale": 0.4, "cutoff": 2.0}
            }
        },
        "simulation": {
            "window_side": 8.0,
            "end_time": 0.5,
            "replicas": 20,
            "seed": 42,
            "snapshots": [0.0, 0.5],
            "initial": {"poisson": {"intensity": 2.0}}
        },
        "analysis": {
            "pair_bins": 4,
            "pair_r_max": 1.0,
            "moment_orders": 2,
            "theta": [
                {"shape": "constant", "value": 0.0,
                 "support": {"lo": [2.0], "hi": [6.0]}},
                {"shape": "constant", "value": -0.4,
                 "support": {"lo": [2.0], "hi": [6.0]}}
            ]
        },
        "analytics": {
            "alpha0": 4.2,
            "kappa": 1.0,
            "kappa_prime": 0.5,
            "epsilon": 0.05,
            "r": 0.5,
            "h": 0.5,
            "horizon": 2.0
        },
        "master": {
            "m_sites": 2,
            "n_max": 6,
            "t_end": 0.5,
            "competition": [[0.2, 0.1], [0.1, 0.3]],
            "mortality": [0.5, 0.7],
            "fission": [
                [[0.15, 0.05], [0.05, 0.25]],
                [[0.1, 0.2], [0.2, 0.1]]
            ],
            "initial_state": [0, 1],
            "dt": null
        }
    })
}

fn write_config(dir: &Path, value: &serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

#[test]
fn simulate_writes_run_directory_and_reruns_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &desk_config());
    let out1 = tmp.path().join("run1");
    let out2 = tmp.path().join("run2");

    for out in [&out1, &out2] {
        let status = binary()
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["manifest.json", "ensemble.json", "snapshots.csv"] {
        assert!(out1.join(name).exists(), "{name} missing");
    }
    // Sidecar schemas accompany the numeric outputs.
    assert!(out1.join("snapshots.csv.schema.json").exists());
    assert!(out1.join("ensemble.json.schema.json").exists());
    // Trajectory CSVs are recorded for small ensembles.
    assert!(out1.join("trajectory_0000.csv").exists());

    let a = fs::read(out1.join("ensemble.json")).unwrap();
    let b = fs::read(out2.join("ensemble.json")).unwrap();
    assert_eq!(a, b, "rerun must be byte-identical");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out1.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["replica_seeds"].as_array().unwrap().len(), 20);
    assert_eq!(manifest["master_seed"], 42);
}

#[test]
fn run_is_reproducible_from_manifest_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &desk_config());
    let original = tmp.path().join("original");
    assert!(binary()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&original)
        .status()
        .unwrap()
        .success());
    // Rebuild the run from nothing but the manifest: embedded config + seed.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(original.join("manifest.json")).unwrap())
            .unwrap();
    let replay_config = tmp.path().join("replay.json");
    fs::write(
        &replay_config,
        serde_json::to_string_pretty(&manifest["config"]).unwrap(),
    )
    .unwrap();
    let seed = manifest["master_seed"].as_u64().unwrap().to_string();
    let replay = tmp.path().join("replay");
    assert!(binary()
        .args(["simulate", "--config"])
        .arg(&replay_config)
        .arg("--out")
        .arg(&replay)
        .args(["--seed", &seed])
        .status()
        .unwrap()
        .success());
    let a = fs::read(original.join("ensemble.json")).unwrap();
    let b = fs::read(replay.join("ensemble.json")).unwrap();
    assert_eq!(a, b);
    let a = fs::read(original.join("snapshots.csv")).unwrap();
    let b = fs::read(replay.join("snapshots.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_override_changes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &desk_config());
    let out1 = tmp.path().join("a");
    let out2 = tmp.path().join("b");
    assert!(binary()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out1)
        .status()
        .unwrap()
        .success());
    assert!(binary()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out2)
        .args(["--seed", "777"])
        .status()
        .unwrap()
        .success());
    let a = fs::read(out1.join("ensemble.json")).unwrap();
    let b = fs::read(out2.join("ensemble.json")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn analyze_emits_reports_and_theta_zero_is_exactly_one() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &desk_config());
    let run = tmp.path().join("run");
    let reports = tmp.path().join("reports");
    assert!(binary()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&run)
        .status()
        .unwrap()
        .success());
    assert!(binary()
        .args(["analyze", "--config"])
        .arg(&config)
        .arg("--run")
        .arg(&run)
        .arg("--out")
        .arg(&reports)
        .status()
        .unwrap()
        .success());
    let analysis: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(reports.join("analysis.json")).unwrap()).unwrap();
    // θ ≡ 0 gives the empty-product value exactly.
    assert_eq!(analysis["bogoliubov"][0]["functional"], 1.0);
    let second = analysis["bogoliubov"][1]["functional"].as_f64().unwrap();
    assert!(second > 0.0 && second < 1.0);
    assert!(analysis["intensity"]["mean"][0].as_f64().unwrap() > 0.0);
    assert!(reports.join("pair_correlation.csv").exists());
    assert!(reports.join("pair_correlation.csv.schema.json").exists());
}

#[test]
fn analyze_without_data_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &desk_config());
    let empty_run = tmp.path().join("empty");
    fs::create_dir_all(&empty_run).unwrap();
    let status = binary()
        .args(["analyze", "--config"])
        .arg(&config)
        .arg("--run")
        .arg(&empty_run)
        .arg("--out")
        .arg(tmp.path().join("r"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn master_subcommand_writes_distribution_and_marginal() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &desk_config());
    let out = tmp.path().join("master");
    assert!(binary()
        .args(["master", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("master.json")).unwrap()).unwrap();
    let mass = report["total_mass"].as_f64().unwrap();
    assert!((mass - 1.0).abs() < 1e-9);
    let marginal = fs::read_to_string(out.join("population_marginal.csv")).unwrap();
    assert!(marginal.starts_with("n,probability"));
    assert!(marginal.contains("sink,"));
    let dist: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("distribution.json")).unwrap()).unwrap();
    assert!(dist.get("empty").is_some());
    assert!(dist.get("0-1").is_some());
}

#[test]
fn constants_subcommand_emits_bundle_and_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &desk_config());
    let out = tmp.path().join("constants");
    assert!(binary()
        .args(["constants", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let bundle: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("constants.json")).unwrap()).unwrap();
    assert!(bundle["certificate"]["omega"].as_f64().unwrap() > 0.0);
    assert!(bundle["time_bounds"]["t_max"].as_f64().unwrap() > 0.0);
    assert!(bundle["domination_audit"]["pass"].as_bool().unwrap());
    let sched = fs::read_to_string(out.join("schedule.csv")).unwrap();
    assert!(sched.starts_with("n,t_n,alpha_star_n,alpha_n,sum_t"));
    assert!(sched.lines().count() > 2);
}

#[test]
fn constants_with_zero_competition_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = desk_config();
    cfg["model"]["competition"]["amplitude"] = serde_json::json!(0.0);
    let config = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("constants");
    let output = binary()
        .args(["constants", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("positive on a ball"), "stderr: {stderr}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = desk_config();
    cfg["simulation"]["unknown_key"] = serde_json::json!(1);
    let config = write_config(tmp.path(), &cfg);
    let status = binary()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path().join("x"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn verify_quick_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("verify");
    let output = binary()
        .args(["verify", "--level", "quick", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stdout: {}",
        String::from_utf8_lossy(&output.stdout)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("[PASS] duality"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn tabulated_csv_kernel_round_trips_through_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    // Two-column CSV (position, value) for the competition kernel.
    fs::write(
        tmp.path().join("a.csv"),
        "position,value\n0.0,0.5\n0.5,0.5\n1.0,0.0\n",
    )
    .unwrap();
    let mut cfg = desk_config();
    cfg["model"]["competition"] = serde_json::json!({
        "shape": "tabulated_csv",
        "path": "a.csv"
    });
    let config = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("run");
    let output = binary()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let validation: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("validation.json")).unwrap()).unwrap();
    assert_eq!(validation["pass"], true);
}
