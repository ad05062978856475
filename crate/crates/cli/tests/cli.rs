use std::path::Path;
use std::process::{Command, Output};

fn quadwind(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadwind"))
        .args(args)
        .env_remove("QUADWIND_THREADS")
        .env("QUADWIND_OUTPUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &[
    "--set", "data.duration=2",
    "--set", "data.winds_per_kind=1",
    "--set", "bench.duration=1",
    "--set", "train.epochs=2",
    "--set", "train.n_colloc=16",
    "--set", "net.tcn_channels=4",
    "--set", "net.head=[8]",
    "--set", "net.mlp_hidden=[8]",
];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(SMALL);
    v
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    for flag in ["--help", "--version"] {
        let o = quadwind(dir.path(), &[flag]);
        assert_eq!(code(&o), 0, "{flag}");
        assert!(!stdout(&o).is_empty());
    }
    let o = quadwind(dir.path(), &["track", "--help"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn bad_arguments_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&quadwind(dir.path(), &["fly"])), 1);
    assert_eq!(code(&quadwind(dir.path(), &["train", "--method", "PI-XYZ"])), 1);
    assert_eq!(code(&quadwind(dir.path(), &["track", "--method", "Nom", "--traj", "circle", "--wind", "1"])), 1);
    assert_eq!(code(&quadwind(dir.path(), &["train", "--method", "Nom"])), 1);
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "run_id = \"x\"\n[train]\nepochz = 3\n").unwrap();
    let o = quadwind(dir.path(), &["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("epochz"), "{}", stderr(&o));

    let o = quadwind(dir.path(), &["sweep", "--set", "train.lambda=-0.5"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("train.lambda"), "{}", stderr(&o));

    let o = quadwind(dir.path(), &["sweep", "--set", "adapter.history=21"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("adapter.history"), "{}", stderr(&o));
    // Nothing was written for a rejected config.
    assert!(!dir.path().join("reports").exists());
}

#[test]
fn environment_overrides_threads() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_quadwind"))
        .args(["sweep"])
        .env("QUADWIND_OUTPUT_DIR", dir.path())
        .env("QUADWIND_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("QUADWIND_THREADS"));
}

#[test]
fn track_smoke_and_overwrite_guard() {
    let dir = tempfile::tempdir().unwrap();
    let args = with_small(&["track", "--method", "Nom", "--traj", "circle", "--wind", "2,0", "--set", "run_id=smoke"]);
    let o = quadwind(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("tracking RMSE"));
    let reports = dir.path().join("reports/smoke");
    assert!(reports.join("config-echo.toml").exists());
    let csv = std::fs::read_to_string(reports.join("track-nom-circle-w2_0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 50);

    let o = quadwind(dir.path(), &args);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--force"));
    let mut forced = args.clone();
    forced.push("--force");
    assert_eq!(code(&quadwind(dir.path(), &forced)), 0);

    // A learned method without a checkpoint is a usage error.
    let o = quadwind(dir.path(), &with_small(&["track", "--method", "TCN", "--traj", "circle", "--set", "run_id=smoke"]));
    assert_eq!(code(&o), 1);
}

fn checkpoint_hash(o: &Output) -> String {
    let s = stdout(o);
    s.split("sha256=").nth(1).expect("hash printed").trim().to_string()
}

#[test]
fn pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadwind(dir.path(), &with_small(&["collect", "--set", "run_id=a"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let data = dir.path().join("data/a/dataset.bin");
    assert!(data.exists());

    let train = |run: &str, seed: &str| {
        let o = quadwind(
            dir.path(),
            &with_small(&["train", "--method", "PI-WAN", "--seed", seed, "--data", data.to_str().unwrap(), "--set", &format!("run_id={run}")]),
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        checkpoint_hash(&o)
    };
    let first = train("a", "3");
    assert_eq!(first, train("b", "3"));
    assert_ne!(first, train("c", "4"));
    let log = std::fs::read_to_string(dir.path().join("checkpoints/a/pi-wan-s3.csv")).unwrap();
    assert!(log.starts_with("epoch,"));
    assert_eq!(log.lines().count(), 1 + 2);

    let ckpt = dir.path().join("checkpoints/a/pi-wan-s3.ckpt");
    let o = quadwind(dir.path(), &with_small(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--set", "run_id=a"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let eval = std::fs::read_to_string(dir.path().join("reports/a/eval-pi-wan-s3.csv")).unwrap();
    assert_eq!(eval.lines().count(), 1 + 7);

    let o = quadwind(
        dir.path(),
        &with_small(&[
            "sweep", "--set", "run_id=a", "--set", "bench.seeds=[3]",
            "--set", "bench.methods=[\"Nom\", \"PI-WAN\", \"TCN\"]",
            "--set", "bench.trajectories=[\"circle\"]", "--set", "bench.winds=[[2.0, 0.0]]",
        ]),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // TCN was never trained: its cells fail, the rest complete.
    assert!(stderr(&o).contains("TCN"));
    let matrix = std::fs::read_to_string(dir.path().join("reports/a/matrix.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 1 + 3 * 2);
    assert!(dir.path().join("reports/a/heatmap-circle.svg").exists());

    std::fs::remove_file(dir.path().join("reports/a/heatmap-circle.svg")).unwrap();
    let o = quadwind(dir.path(), &["report", "--set", "run_id=a"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("reports/a/heatmap-circle.svg").exists());
    assert!(stdout(&o).contains("PI-WAN"));
}
