use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn cdbound(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdbound"))
        .current_dir(dir)
        .env_remove("CDBOUND_WORKERS")
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path
}

/// Data rows as string records, skipping `#` comments and the header.
fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let data = r
        .records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect();
    (header, data)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn decoupled_sweep_has_unit_fidelity_and_zero_margin() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "experiment = \"dynamics-sweep\"\n[bath]\nlambda = 0.0\n[sweep]\ndeltas = [0.5, 1.0, 1.5]\nsteepness = [1.0, 10.0]\n",
    );
    let out = cdbound(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (h, data) = rows(&tmp.path().join("out/dynamics-sweep.csv"));
    assert_eq!(data.len(), 6);
    for r in &data {
        let f: f64 = r[column(&h, "fidelity")].parse().unwrap();
        let m: f64 = r[column(&h, "margin")].parse().unwrap();
        assert!((f - 1.0).abs() < 1e-8);
        assert!(m.abs() < 1e-8);
        assert_eq!(r[column(&h, "status")], "ok");
    }
    assert!(tmp
        .path()
        .join("out/dynamics-sweep.convergence.json")
        .exists());
    assert!(tmp.path().join("out/dynamics-sweep.config.toml").exists());
}

#[test]
fn single_point_smoke_run_is_quick_and_respects_the_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = cdbound(
        tmp.path(),
        &[
            "run",
            "-e",
            "dynamics-sweep",
            "--set",
            "sweep.deltas=[1.0]",
            "--set",
            "sweep.steepness=[3.0]",
        ],
    );
    assert!(start.elapsed() < Duration::from_secs(60));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (h, data) = rows(&tmp.path().join("out/dynamics-sweep.csv"));
    let margin: f64 = data[0][column(&h, "margin")].parse().unwrap();
    assert!(margin >= -1e-3);
    let json: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("out/dynamics-sweep.convergence.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json[0]["convergence"]["solver"], "heom");
    assert!(json[0]["convergence"]["hierarchy_delta"].as_f64().unwrap() < 1e-4);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "experiment = \"bound-sweep\"\nworkers = 3\n");
    let run = || {
        let out = cdbound(tmp.path(), &["run", cfg.to_str().unwrap()]);
        assert!(out.status.success());
        fs::read(tmp.path().join("out/bound-sweep.csv")).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# cdbound "));
    assert!(text
        .lines()
        .any(|l| l.starts_with("# config-sha256: ") && l.len() == "# config-sha256: ".len() + 64));
    assert!(text.lines().any(|l| l == "# schema: bound-sweep/1"));
    // 20 gaps × 3 steepness values, in sweep order.
    let (h, data) = rows(&tmp.path().join("out/bound-sweep.csv"));
    assert_eq!(data.len(), 60);
    assert_eq!(data[0][column(&h, "delta")], "0.1");
    assert_eq!(data[2][column(&h, "steepness")], "10.0");
}

#[test]
fn worker_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let read = |workers: &str| {
        let out = cdbound(
            tmp.path(),
            &[
                "run",
                "-e",
                "bound-sweep",
                "--set",
                &format!("workers={workers}"),
            ],
        );
        assert!(out.status.success());
        let (_, data) = rows(&tmp.path().join("out/bound-sweep.csv"));
        data
    };
    assert_eq!(read("1"), read("4"));
}

#[test]
fn unknown_keys_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "experiment = \"bound-sweep\"\n[bath]\nlamda = 0.1\n",
    );
    let out = cdbound(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));
    let out = cdbound(
        tmp.path(),
        &["run", "-e", "bound-sweep", "--set", "solver.dept=3"],
    );
    assert_eq!(out.status.code(), Some(4));
    let out = cdbound(tmp.path(), &["run"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn environment_sets_the_pool_size() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cdbound"))
        .current_dir(tmp.path())
        .env("CDBOUND_WORKERS", "2")
        .args(["config", "-e", "bound-sweep", "--set", "workers=7"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("workers = 2"));
}

#[test]
fn sta_verify_passes_by_default_and_guards_temperature() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cdbound(tmp.path(), &["run", "-e", "sta-verify"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (h, data) = rows(&tmp.path().join("out/sta-verify.csv"));
    let last = &data[data.len() - 1];
    let sta: f64 = last[column(&h, "fidelity_sta")].parse().unwrap();
    let fixed: f64 = last[column(&h, "fidelity_static")].parse().unwrap();
    assert!(sta >= 0.999 && fixed < sta);

    let out = cdbound(
        tmp.path(),
        &["run", "-e", "sta-verify", "--set", "sta_verify.beta=1.0"],
    );
    assert_eq!(out.status.code(), Some(4));

    let out = cdbound(
        tmp.path(),
        &["run", "-e", "sta-verify", "--set", "bath.lambda=0.0"],
    );
    assert!(out.status.success());

    // An unreachable threshold fails with the trace on stderr.
    let out = cdbound(
        tmp.path(),
        &[
            "run",
            "-e",
            "sta-verify",
            "--set",
            "sta_verify.threshold=1.5",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fidelity trace"));
}

#[test]
fn starved_hierarchy_is_reported_as_unconverged() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cdbound(
        tmp.path(),
        &[
            "run",
            "-e",
            "dynamics-sweep",
            "--set",
            "sweep.deltas=[1.0]",
            "--set",
            "sweep.steepness=[1.0]",
            "--set",
            "bath.lambda=0.4",
            "--set",
            "solver.depth=1",
            "--set",
            "solver.matsubara=0",
            "--set",
            "solver.max_depth=1",
            "--set",
            "solver.max_matsubara=0",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (h, data) = rows(&tmp.path().join("out/dynamics-sweep.csv"));
    assert_eq!(data[0][column(&h, "status")], "unconverged");
}

#[test]
fn optimizer_appends_to_its_ledger() {
    let tmp = tempfile::tempdir().unwrap();
    for _ in 0..2 {
        let out = cdbound(tmp.path(), &["run", "-e", "optimize"]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let path = tmp.path().join("out/optimize.csv");
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(
        text.lines().filter(|l| l.starts_with("# cdbound")).count(),
        1
    );
    let (h, data) = rows(&path);
    assert_eq!(data.len(), 2);
    assert_eq!(data[0], data[1]);
    assert_eq!(data[0][column(&h, "at_boundary")], "true");
    let a: f64 = data[0][column(&h, "values")].parse().unwrap();
    assert!((a - 50.0).abs() < 0.05);
}

#[test]
fn bath_functionals_start_at_zero_shift() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cdbound(tmp.path(), &["run", "-e", "bath-functionals"]);
    assert!(out.status.success());
    let (h, data) = rows(&tmp.path().join("out/bath-functionals.csv"));
    assert_eq!(data.len(), 401);
    assert_eq!(data[0][column(&h, "x")].parse::<f64>().unwrap(), 0.0);
    let s: f64 = data[0][column(&h, "s")].parse().unwrap();
    let b2: f64 = data[0][column(&h, "b_squared")].parse().unwrap();
    assert_eq!(s, b2);
}

#[test]
fn tables_feed_the_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let mut drive = String::from("t,q\n");
    for k in 0..=40 {
        let t = 2.0 * k as f64 / 40.0;
        drive.push_str(&format!(
            "{t},{}\n",
            (3.0 * (t - 1.0)).tanh() / 3.0f64.tanh()
        ));
    }
    fs::write(tmp.path().join("drive.csv"), drive).unwrap();
    let mut density = String::from("# omega,J\n");
    for k in 0..=4000 {
        let w = 20.0 * k as f64 / 4000.0;
        let d = 1.0 - w * w;
        density.push_str(&format!(
            "{w},{}\n",
            0.01 * 0.1 * w / (d * d + 0.01 * w * w)
        ));
    }
    fs::write(tmp.path().join("density.csv"), density).unwrap();
    let cfg = write_config(
        tmp.path(),
        "experiment = \"bound-sweep\"\n[protocol]\nfamily = \"tabulated\"\ntable = \"drive.csv\"\n\
         [bath]\nkind = \"tabulated\"\ntable = \"density.csv\"\n[sweep]\ndeltas = [1.0]\n",
    );
    let out = cdbound(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (h, data) = rows(&tmp.path().join("out/bound-sweep.csv"));
    let l: f64 = data[0][column(&h, "l_bd")].parse().unwrap();

    let reference = write_config(
        tmp.path(),
        "experiment = \"bound-sweep\"\n[protocol]\nfamily = \"tabulated\"\ntable = \"drive.csv\"\n[sweep]\ndeltas = [1.0]\n",
    );
    let out = cdbound(tmp.path(), &["run", reference.to_str().unwrap()]);
    assert!(out.status.success());
    let (_, data) = rows(&tmp.path().join("out/bound-sweep.csv"));
    let l_ref: f64 = data[0][column(&h, "l_bd")].parse().unwrap();
    assert!((l - l_ref).abs() < 1e-3 * l_ref, "{l} vs {l_ref}");
}
