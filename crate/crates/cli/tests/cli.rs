//! Subcommand-level behavior: artifact inventories, exit codes, rerun
//! stability, and the report contents.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_muscleseg")
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(bin()).args(args).output().expect("spawn")
}

fn write_conf(dir: &Path, body: &str) -> String {
    let path = dir.join("run.conf");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn count_lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn cohort_gen_writes_expected_inventory() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(dir.path(), "n = 10\n");
    let w = dir.path().join("w");
    let out = run(&[
        "--config",
        &conf,
        "--workdir",
        w.to_str().unwrap(),
        "--seed",
        "3",
        "cohort-gen",
    ]);
    assert!(out.status.success());
    // header + 10 rows
    assert_eq!(count_lines(&w.join("cohort.csv")), 11);
    let images = std::fs::read_dir(w.join("images")).unwrap().count();
    let masks = std::fs::read_dir(w.join("masks")).unwrap().count();
    assert_eq!(images, 10);
    assert_eq!(masks, 10);
    assert_eq!(count_lines(&w.join("landmarks.csv")), 11);
}

#[test]
fn cohort_gen_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(dir.path(), "n = 5\nimages = false\n");
    let w = dir.path().join("w");
    for _ in 0..2 {
        let out = run(&[
            "--config",
            &conf,
            "--workdir",
            w.to_str().unwrap(),
            "--seed",
            "9",
            "cohort-gen",
        ]);
        assert!(out.status.success());
    }
    let first = std::fs::read(w.join("cohort.csv")).unwrap();
    let out = run(&[
        "--config",
        &conf,
        "--workdir",
        w.to_str().unwrap(),
        "--seed",
        "9",
        "cohort-gen",
    ]);
    assert!(out.status.success());
    assert_eq!(first, std::fs::read(w.join("cohort.csv")).unwrap());
}

#[test]
fn cohort_gen_rejects_empty_cohort_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(dir.path(), "n = 0\n");
    let w = dir.path().join("w");
    let out = run(&[
        "--config",
        &conf,
        "--workdir",
        w.to_str().unwrap(),
        "cohort-gen",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!w.join("cohort.csv").exists(), "no files on rejected input");
}

#[test]
fn train_without_cohort_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(dir.path(), "n = 4\n");
    let w = dir.path().join("w");
    let out = run(&["--config", &conf, "--workdir", w.to_str().unwrap(), "train"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("cohort-gen"), "hint expected, got: {msg}");
}

#[test]
fn stats_without_predictions_exits_2_naming_column() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(dir.path(), "n = 4\nimages = false\n");
    let w = dir.path().join("w");
    let ok = run(&[
        "--config",
        &conf,
        "--workdir",
        w.to_str().unwrap(),
        "--seed",
        "1",
        "cohort-gen",
    ]);
    assert!(ok.status.success());
    // pose the cohort csv as a segmented csv missing the prediction columns
    std::fs::copy(w.join("cohort.csv"), w.join("segmented.csv")).unwrap();
    let out = run(&["--config", &conf, "--workdir", w.to_str().unwrap(), "stats"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(
        msg.contains("predicted_left_ml"),
        "missing column not named: {msg}"
    );
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(dir.path(), "not_a_key = 1\n");
    let out = run(&["--config", &conf, "cohort-gen"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn full_pipeline_artifacts_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(
        dir.path(),
        "n = 5\ntrain_count = 3\nepochs = 2\naug_count = 0\nlearning_rate = 0.001\nval_count = 1\n",
    );
    let w = dir.path().join("w");
    let wstr = w.to_str().unwrap().to_string();
    for cmd in ["cohort-gen", "train", "segment", "eval", "stats"] {
        let out = run(&["--config", &conf, "--workdir", &wstr, "--seed", "21", cmd]);
        assert!(
            out.status.success(),
            "{cmd} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }

    // history has one row per epoch (plus header) and a val_dsc column
    let history = std::fs::read_to_string(w.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    assert!(history.starts_with("epoch,loss,val_dsc"));
    let last = history.lines().last().unwrap();
    assert!(!last.ends_with(','), "validation DSC expected: {last}");

    // segmented csv keeps all subjects and adds the prediction columns
    let segmented = std::fs::read_to_string(w.join("segmented.csv")).unwrap();
    assert_eq!(segmented.lines().count(), 6);
    assert!(segmented
        .lines()
        .next()
        .unwrap()
        .ends_with("predicted_left_ml,predicted_right_ml"));
    for line in segmented.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let left: f64 = fields[fields.len() - 2].parse().unwrap();
        let right: f64 = fields[fields.len() - 1].parse().unwrap();
        assert!(left >= 0.0 && right >= 0.0);
    }
    assert_eq!(std::fs::read_dir(w.join("predictions")).unwrap().count(), 5);

    // eval footer carries mean/sd/min/max and values lie in [0,1]
    let dsc = std::fs::read_to_string(w.join("dsc.csv")).unwrap();
    for key in ["mean,", "sd,", "min,", "max,"] {
        assert!(dsc.contains(key), "missing footer field {key}");
    }
    for line in dsc.lines().skip(1) {
        let (_, value) = line.split_once(',').unwrap();
        if let Ok(v) = value.parse::<f64>() {
            assert!((0.0..=1.0).contains(&v), "DSC out of range: {line}");
        }
    }

    // stats artifacts: three tables, four plots, one json index
    let stats = w.join("stats");
    for f in [
        "table_demographics.csv",
        "table_volumes.csv",
        "table_correlations.csv",
        "volume_vs_height.svg",
        "imi_vs_bmi.svg",
        "imi_vs_age.svg",
        "bland_altman.svg",
        "report.json",
    ] {
        assert!(stats.join(f).exists(), "missing stats artifact {f}");
    }

    // the agreement plot draws three dashed rules (bias + both limits)
    let ba = std::fs::read_to_string(stats.join("bland_altman.svg")).unwrap();
    assert_eq!(ba.matches("stroke-dasharray").count(), 3);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(stats.join("report.json")).unwrap())
            .unwrap();
    assert!(report["summary"]["groups"].is_array());
    assert!(report["bland_altman"]["bias"].is_number());
}

#[test]
fn interrupted_training_leaves_no_partial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    // enough epochs that training is still running when the kill lands
    let conf = write_conf(
        dir.path(),
        "n = 4\ntrain_count = 3\nepochs = 50\naug_count = 1\n",
    );
    let w = dir.path().join("w");
    let wstr = w.to_str().unwrap().to_string();
    let out = run(&["--config", &conf, "--workdir", &wstr, "--seed", "2", "cohort-gen"]);
    assert!(out.status.success());

    let mut child = Command::new(bin())
        .args(["--config", &conf, "--workdir", &wstr, "--seed", "2", "train"])
        .spawn()
        .expect("spawn train");
    std::thread::sleep(std::time::Duration::from_secs(3));
    child.kill().expect("kill train");
    let _ = child.wait();

    assert!(
        !w.join("checkpoint.ckpt").exists(),
        "killed run must not leave a checkpoint"
    );
    let stray_tmp = std::fs::read_dir(&w)
        .unwrap()
        .filter_map(|e| e.ok())
        .any(|e| e.file_name().to_string_lossy().ends_with(".tmp"));
    assert!(!stray_tmp, "killed run must not leave temp files");
}

#[test]
fn gam_curves_drawn_per_sex_on_large_cohort() {
    // covariates-only cohort large enough for per-sex spline fits; fake
    // perfect predictions so stats can run without train/segment
    let dir = tempfile::tempdir().unwrap();
    let conf = write_conf(dir.path(), "n = 60\nimages = false\n");
    let w = dir.path().join("w");
    let wstr = w.to_str().unwrap().to_string();
    let out = run(&["--config", &conf, "--workdir", &wstr, "--seed", "4", "cohort-gen"]);
    assert!(out.status.success());

    let cohort = std::fs::read_to_string(w.join("cohort.csv")).unwrap();
    let mut seg = String::new();
    for (i, line) in cohort.lines().enumerate() {
        if i == 0 {
            seg.push_str(line);
            seg.push_str(",predicted_left_ml,predicted_right_ml\n");
        } else {
            let fields: Vec<&str> = line.split(',').collect();
            let left = fields[7];
            let right = fields[8];
            seg.push_str(&format!("{line},{left},{right}\n"));
        }
    }
    std::fs::write(w.join("segmented.csv"), seg).unwrap();

    let out = run(&["--config", &conf, "--workdir", &wstr, "stats"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let svg = std::fs::read_to_string(w.join("stats").join("imi_vs_age.svg")).unwrap();
    assert!(svg.contains("female trend"), "female curve missing");
    assert!(svg.contains("male trend"), "male curve missing");
    // perfect agreement: bias exactly zero in the report
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(w.join("stats/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["bland_altman"]["bias"].as_f64().unwrap(), 0.0);
}
