use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn densadapt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_densadapt"))
        .args(args)
        .current_dir(dir)
        .env_remove("DENSADAPT_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn make_synthetic_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.obj", "b.obj"] {
        ok(&densadapt(dir.path(), &["make-synthetic", "--kind", "spiky_star", "--subdivisions", "3", "--jitter", "0.2", "--seed", "9", "--out", name]));
    }
    assert_eq!(fs::read(dir.path().join("a.obj")).unwrap(), fs::read(dir.path().join("b.obj")).unwrap());
}

#[test]
fn unknown_kind_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = densadapt(dir.path(), &["make-synthetic", "--kind", "torus", "--out", "x.obj"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_writes_mesh_metrics_and_config() {
    let dir = tempfile::tempdir().unwrap();
    ok(&densadapt(dir.path(), &["make-synthetic", "--kind", "bumpy_sphere", "--subdivisions", "3", "--out", "t.obj"]));
    ok(&densadapt(dir.path(), &["fit", "--target", "t.obj", "--subdivisions", "2", "--iters", "40", "--out-dir", "run"]));
    let csv = fs::read_to_string(dir.path().join("run/metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "iter,E_d,D_c,D_n,E_a_u,E_a_k,E_lmk,w_u,w_k,edge_len_mean,edge_len_cv,wall_ms");
    assert_eq!(lines.count(), 40);
    let config: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run/config.json")).unwrap()).unwrap();
    assert_eq!(config["fit"]["iterations"], 40);
    assert_eq!(config["fit"]["strength"], 1.5);
    assert_eq!(config["template"]["subdivisions"], 2);
    let fitted = fs::read_to_string(dir.path().join("run/fitted.obj")).unwrap();
    assert_eq!(fitted.lines().filter(|l| l.starts_with("v ")).count(), 162);
}

#[test]
fn fit_output_does_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    ok(&densadapt(dir.path(), &["make-synthetic", "--kind", "spiky_star", "--subdivisions", "3", "--out", "t.obj"]));
    let mut meshes = Vec::new();
    for threads in ["1", "3"] {
        let out = Command::new(env!("CARGO_BIN_EXE_densadapt"))
            .args(["fit", "--target", "t.obj", "--subdivisions", "2", "--iters", "30", "--out-dir", threads])
            .current_dir(dir.path())
            .env("DENSADAPT_THREADS", threads)
            .output()
            .unwrap();
        ok(&out);
        meshes.push(fs::read(dir.path().join(threads).join("fitted.obj")).unwrap());
    }
    assert_eq!(meshes[0], meshes[1]);
}

#[test]
fn missing_target_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = densadapt(dir.path(), &["fit", "--target", "nowhere.obj", "--subdivisions", "1", "--iters", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.obj"));
}

#[test]
fn bad_thread_env_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_densadapt"))
        .args(["gradcheck", "--sizes", "50"])
        .current_dir(dir.path())
        .env("DENSADAPT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_and_reports_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let good = densadapt(dir.path(), &["gradcheck", "--sizes", "50", "--out", "report.json"]);
    ok(&good);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["checks"].as_array().unwrap().len(), 12);

    let bad = densadapt(dir.path(), &["gradcheck", "--sizes", "50", "--corrupt", "chamfer"]);
    assert_eq!(bad.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&bad.stderr);
    assert!(stderr.contains("chamfer") && stderr.contains("vertex"), "{stderr}");
}

#[test]
fn eval_of_identical_meshes_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    ok(&densadapt(dir.path(), &["make-synthetic", "--kind", "sphere", "--subdivisions", "3", "--out", "s.obj"]));
    let out = densadapt(dir.path(), &["eval", "--fitted", "s.obj", "--target", "s.obj", "--samples", "5000", "--out", "m.json"]);
    ok(&out);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert!(m["chamfer"].as_f64().unwrap().abs() < 1e-9);
    assert!(m["normal_mse"].as_f64().unwrap().abs() < 1e-9);
}

fn face_corpus(dir: &Path) {
    for seed in ["0", "1"] {
        ok(&densadapt(
            dir,
            &[
                "make-synthetic", "--kind", "face_blob", "--subdivisions", "3", "--seed", seed,
                "--out", &format!("face{seed}.obj"), "--landmarks-out", &format!("face{seed}.txt"),
            ],
        ));
    }
    fs::write(dir.join("corpus.txt"), "face0.obj face0.txt fits/face0.obj\nface1.obj face1.txt fits/face1.obj\n").unwrap();
}

#[test]
fn register_runs_all_stages() {
    let dir = tempfile::tempdir().unwrap();
    face_corpus(dir.path());
    ok(&densadapt(dir.path(), &["register", "--manifest", "corpus.txt", "--subdivisions", "2", "--iters", "300"]));
    let a = fs::read_to_string(dir.path().join("fits/face0.obj")).unwrap();
    let b = fs::read_to_string(dir.path().join("fits/face1.obj")).unwrap();
    let faces = |s: &str| s.lines().filter(|l| l.starts_with("f ")).map(str::to_owned).collect::<Vec<_>>();
    assert_eq!(faces(&a), faces(&b));
    let landmarks = fs::read_to_string(dir.path().join("resampled_landmarks.txt")).unwrap();
    assert_eq!(landmarks.lines().filter(|l| l.starts_with("i ")).count(), 38);
    assert!(landmarks.contains("# anchor_index: 16"));
    assert!(dir.path().join("fits/face0.metrics.csv").exists());

    // stage 2 alone from the written fits
    ok(&densadapt(dir.path(), &["resample-landmarks", "--manifest", "corpus.txt", "--subdivisions", "2", "--out", "again.txt"]));
    let again = fs::read_to_string(dir.path().join("again.txt")).unwrap();
    assert_eq!(again.lines().filter(|l| l.starts_with("i ")).count(), 38);
}

#[test]
fn register_skip_landmarks_stops_after_stage_one() {
    let dir = tempfile::tempdir().unwrap();
    face_corpus(dir.path());
    ok(&densadapt(dir.path(), &["register", "--manifest", "corpus.txt", "--subdivisions", "1", "--iters", "20", "--skip-landmarks"]));
    assert!(dir.path().join("fits/face0.obj").exists());
    assert!(!dir.path().join("resampled_landmarks.txt").exists());
}

#[test]
fn register_names_target_with_wrong_landmark_count() {
    let dir = tempfile::tempdir().unwrap();
    face_corpus(dir.path());
    let text = fs::read_to_string(dir.path().join("face1.txt")).unwrap();
    let truncated: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    fs::write(dir.path().join("face1.txt"), truncated).unwrap();
    let out = densadapt(dir.path(), &["register", "--manifest", "corpus.txt", "--subdivisions", "1", "--iters", "20"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("face1"));
}
