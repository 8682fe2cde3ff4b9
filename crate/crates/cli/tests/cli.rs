use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vecfuse::encode::{projection_trace_header, read_projection_trace};
use vecfuse::{load_dataset, project, ProjectionModel};

fn iris(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/iris").join(name)
}

fn vecfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vecfuse"))
        .args(args)
        .output()
        .expect("run vecfuse")
}

fn iris_args(cmd: &str, out: &Path) -> Vec<String> {
    vec![
        cmd.into(),
        "--x".into(),
        iris("x.csv").display().to_string(),
        "--y".into(),
        iris("y.csv").display().to_string(),
        "--label-column".into(),
        "species".into(),
        "--out".into(),
        out.display().to_string(),
    ]
}

fn run(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    vecfuse(&refs)
}

fn with(mut base: Vec<String>, extra: &[&str]) -> Vec<String> {
    base.extend(extra.iter().map(|s| s.to_string()));
    base
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn kv(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .to_string()
}

/// Two-feature-per-modality fixture with three classes.
fn write_small(dir: &Path) -> (PathBuf, PathBuf) {
    let mut x = String::from("a,b,label\n");
    let mut y = String::from("c,d\n");
    for i in 0..18 {
        let c = i % 3;
        let t = i as f64 * 0.37;
        x.push_str(&format!("{},{},{}\n", c as f64 + t.sin() * 0.3, t.cos(), c));
        y.push_str(&format!("{},{}\n", (t * 1.7).sin(), -(c as f64) + t.cos() * 0.2));
    }
    let (xp, yp) = (dir.join("x.csv"), dir.join("y.csv"));
    std::fs::write(&xp, x).unwrap();
    std::fs::write(&yp, y).unwrap();
    (xp, yp)
}

#[test]
fn fit_iris_writes_model_with_positive_eigenvalue() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&iris_args("fit", dir.path()));
    assert_ok(&out);
    let model = ProjectionModel::load(dir.path().join("model.bin")).unwrap();
    assert_eq!(model.code_length(), 1);
    assert!(model.spectrum[0] > 0.0);
    let log = std::fs::read_to_string(dir.path().join("fit_log.txt")).unwrap();
    assert_eq!(kv(&log, "config_hash").len(), 64);
    assert_eq!(kv(&log, "seed"), "0");
    assert!(kv(&log, "spectrum").parse::<f64>().unwrap() > 0.0);
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("model.bin\tfit\t"));
    assert!(manifest.contains("fit_log.txt\tfit\t"));
}

#[test]
fn dnccm_two_iterations_give_two_columns() {
    let dir = tempfile::tempdir().unwrap();
    let (xp, yp) = write_small(dir.path());
    let run_dir = dir.path().join("run");
    let args: Vec<String> = [
        "fit", "--x", xp.to_str().unwrap(), "--y", yp.to_str().unwrap(),
        "--method", "dnccm", "--code-length", "2", "--out", run_dir.to_str().unwrap(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    assert_ok(&run(&args));
    let model = ProjectionModel::load(run_dir.join("model.bin")).unwrap();
    assert_eq!(model.w_x.shape(), (2, 2));
    assert_eq!(model.w_y.shape(), (2, 2));
    let log = std::fs::read_to_string(run_dir.join("fit_log.txt")).unwrap();
    assert_eq!(kv(&log, "residual_trace").split_whitespace().count(), 2);
}

#[test]
fn missing_label_column_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = iris_args("fit", dir.path());
    let pos = args.iter().position(|a| a == "species").unwrap();
    args[pos] = "kind_of_flower".into();
    let out = run(&args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind_of_flower"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = vecfuse(&["fit", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_on_training_data_is_perfect_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (xp, yp) = write_small(dir.path());
    let base = |out: &Path, cmd: &str| -> Vec<String> {
        [cmd, "--x", xp.to_str().unwrap(), "--y", yp.to_str().unwrap(), "--out", out.to_str().unwrap()]
            .iter()
            .map(|s| s.to_string())
            .collect()
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_ok(&run(&base(d, "fit")));
        assert_ok(&run(&base(d, "eval")));
    }
    let report = std::fs::read_to_string(a.join("report.txt")).unwrap();
    assert_eq!(kv(&report, "accuracy").parse::<f64>().unwrap(), 1.0);
    for f in ["model.bin", "report.txt", "report.json", "confusion.csv", "fit_log.txt"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs between runs"
        );
    }
}

#[test]
fn l_sweep_emits_one_report_per_length() {
    let dir = tempfile::tempdir().unwrap();
    let (xp, yp) = write_small(dir.path());
    let run_dir = dir.path().join("run");
    let base: Vec<String> = ["--x", xp.to_str().unwrap(), "--y", yp.to_str().unwrap(), "--out", run_dir.to_str().unwrap()]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut fit = vec!["fit".to_string(), "--method".into(), "dnccm".into(), "--code-length".into(), "4".into()];
    fit.extend(base.clone());
    assert_ok(&run(&fit));
    let mut eval = vec!["eval".to_string(), "--L-sweep".into(), "1..4".into()];
    eval.extend(base);
    let out = run(&eval);
    assert_ok(&out);
    for l in 1..=4 {
        let report = std::fs::read_to_string(run_dir.join(format!("report_L{l}.txt"))).unwrap();
        assert_eq!(kv(&report, "code_length"), l.to_string());
        assert!(run_dir.join(format!("confusion_L{l}.csv")).exists());
    }
    assert!(!run_dir.join("report_L5.txt").exists());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 4);
}

#[test]
fn sweep_fits_each_length() {
    let dir = tempfile::tempdir().unwrap();
    let (xp, yp) = write_small(dir.path());
    let run_dir = dir.path().join("run");
    let args: Vec<String> = [
        "sweep", "--x", xp.to_str().unwrap(), "--y", yp.to_str().unwrap(),
        "--split", "per_class:3", "--seed", "7", "--l-range", "1..2", "--out", run_dir.to_str().unwrap(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    assert_ok(&run(&args));
    let summary = std::fs::read_to_string(run_dir.join("sweep.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    for l in 1..=2 {
        let m = ProjectionModel::load(run_dir.join(format!("model_L{l}.bin"))).unwrap();
        assert_eq!(m.code_length(), l);
        let report = std::fs::read_to_string(run_dir.join(format!("report_L{l}.txt"))).unwrap();
        assert_eq!(kv(&report, "n_train"), "9");
        assert_eq!(kv(&report, "n_test"), "9");
    }
}

#[test]
fn visualize_iris_trace_has_100_rows_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run(&iris_args("fit", dir.path())));
    assert_ok(&run(&iris_args("visualize", dir.path())));
    let path = dir.path().join("trace_train.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "sample_index,label,zx_1,zy_1");
    assert_eq!(projection_trace_header(1).join(","), "sample_index,label,zx_1,zy_1");
    assert_eq!(text.lines().count(), 101);
    assert!(!dir.path().join("trace_test.csv").exists());

    let trace = read_projection_trace(&path).unwrap();
    let model = ProjectionModel::load(dir.path().join("model.bin")).unwrap();
    let ds = load_dataset(iris("x.csv"), iris("y.csv"), "species").unwrap();
    let (zx, zy) = project(&model, ds.x(), ds.y()).unwrap();
    assert_eq!(trace.sample_index, ds.original_indices());
    assert_eq!(trace.zx, zx);
    assert_eq!(trace.zy, zy);
}

#[test]
fn visualize_with_split_writes_both_partitions() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run(&iris_args("fit", dir.path())));
    let args = with(iris_args("visualize", dir.path()), &["--split", "per_class:10"]);
    assert_ok(&run(&args));
    let count = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap().lines().count();
    assert_eq!(count("trace_train.csv"), 21);
    assert_eq!(count("trace_test.csv"), 81);
}

#[test]
fn refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run(&iris_args("fit", dir.path())));
    let before = std::fs::read(dir.path().join("model.bin")).unwrap();
    let out = run(&with(iris_args("fit", dir.path()), &["--ridge", "0.5"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
    assert_eq!(std::fs::read(dir.path().join("model.bin")).unwrap(), before);

    assert_ok(&run(&with(iris_args("fit", dir.path()), &["--ridge", "0.5", "--force"])));
    let forced = std::fs::read(dir.path().join("model.bin")).unwrap();
    assert_ne!(forced, before);
    assert_ok(&run(&with(iris_args("fit", dir.path()), &["--ridge", "0.5", "--force"])));
    assert_eq!(std::fs::read(dir.path().join("model.bin")).unwrap(), forced);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    write_small(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# relative paths resolve against this file\nx_path = x.csv\ny_path = y.csv\nmethod = dnccm\ncode_length = 3\nout_dir = out\n",
    )
    .unwrap();
    assert_ok(&vecfuse(&["fit", "--config", cfg.to_str().unwrap(), "--code-length", "1"]));
    let model = ProjectionModel::load(dir.path().join("out/model.bin")).unwrap();
    assert_eq!(model.method.as_str(), "dnccm");
    assert_eq!(model.code_length(), 1);

    std::fs::write(&cfg, "x_path = x.csv\nbogus = 1\n").unwrap();
    let out = vecfuse(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_dimension_mismatch_names_both_shapes() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run(&iris_args("fit", dir.path())));
    let (xp, yp) = write_small(dir.path());
    let model = dir.path().join("model.bin");
    let out = vecfuse(&[
        "eval", "--x", xp.to_str().unwrap(), "--y", yp.to_str().unwrap(),
        "--model", model.to_str().unwrap(), "--out", dir.path().join("e").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("x 1 cols, y 1 cols") && err.contains("x 2 cols, y 2 cols"), "{err}");
}
