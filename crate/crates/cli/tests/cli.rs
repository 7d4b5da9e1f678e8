use std::path::Path;
use std::process::{Command, Output};

fn stepmix(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stepmix"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const CONFIG: &str = "eta = 10.0\ngamma = 2.2\ntrials = 2\nepisodes = 50\nroot_seed = 3\nbonus_scale = 1e-4\n";

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = stepmix(&["run", "--config", "missing.file", "--out", "r.csv"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("missing.file"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = stepmix(&["run", "--no-such-flag", "--out", "r.csv"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("Usage"));
    assert_eq!(code(&stepmix(&["frobnicate"], dir.path())), 1);
    assert_eq!(
        code(&stepmix(
            &["run", "--gamma", "1", "--gamma-frac", "0.1", "--out", "r.csv"],
            dir.path()
        )),
        1
    );
    assert_eq!(code(&stepmix(&["--help"], dir.path())), 0);
}

#[test]
fn invalid_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    let out = stepmix(
        &["run", "--config", "c.toml", "--eta", "-3", "--out", "r.csv"],
        dir.path(),
    );
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    std::fs::write(dir.path().join("bad.toml"), "gamma = 2.0\nepisodez = 3\n").unwrap();
    let out = stepmix(&["run", "--config", "bad.toml", "--out", "r.csv"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("episodez"));
    let out = stepmix(
        &["run", "--config", "c.toml", "--env", "nowhere.txt", "--out", "r.csv"],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nowhere.txt"));
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    let out = stepmix(&["run", "--config", "c.toml", "--out", "no/such/dir/r.csv"], dir.path());
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn pinned_environment_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.toml"), CONFIG).unwrap();
    let out = stepmix(
        &[
            "gen-env", "--S", "5", "--A", "5", "--H", "3", "--seed", "7", "--out", "env.txt",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in ["a", "b"] {
        let csv = format!("{name}.csv");
        let json = format!("{name}.json");
        let out = stepmix(
            &[
                "run",
                "--config",
                "c.toml",
                "--env",
                "env.txt",
                "--out",
                &csv,
                "--summary",
                &json,
            ],
            d,
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(
        std::fs::read(d.join("a.csv")).unwrap(),
        std::fs::read(d.join("b.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(d.join("a.json")).unwrap(),
        std::fs::read(d.join("b.json")).unwrap()
    );
    let text = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "trial,episode,algorithm,kind,rho,h_k,value,mixture_value,violation,cum_regret"
    );
    assert_eq!(text.lines().count(), 1 + 2 * 50 * 3);
}

#[test]
fn full_size_run_writes_every_episode() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("c.toml"),
        "eta = 10.0\ngamma = 2.2\ntrials = 10\nepisodes = 2000\nbonus_scale = 1e-4\n",
    )
    .unwrap();
    let out = stepmix(
        &["run", "--config", "c.toml", "--out", "r.csv", "--summary", "s.json"],
        d,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(d.join("r.csv")).unwrap();
    for alg in ["stepmix", "epsmix", "optimistic"] {
        let rows = text.lines().filter(|l| l.split(',').nth(2) == Some(alg)).count();
        assert_eq!(rows, 2000 * 10);
    }
    let summary = std::fs::read_to_string(d.join("s.json")).unwrap();
    assert!(summary.contains("\"schema_version\": 1"));
}

#[test]
fn report_aggregates_record_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.toml"), CONFIG).unwrap();
    for (csv, seed) in [("a.csv", "1"), ("b.csv", "2")] {
        assert_eq!(
            code(&stepmix(
                &["run", "--config", "c.toml", "--root-seed", seed, "--out", csv],
                d
            )),
            0
        );
    }
    let out = stepmix(&["report", "a.csv", "b.csv", "--summary", "s.json"], d);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = std::fs::read_to_string(d.join("s.json")).unwrap();
    assert!(summary.contains("\"trials\": 4"));
    assert_eq!(code(&stepmix(&["report", "missing.csv", "--summary", "s.json"], d)), 1);
}

#[test]
fn offline_pipeline_reports_extracted_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        "offline",
        "--n",
        "2000",
        "--c",
        "0.05",
        "-K",
        "100",
        "--bonus-scale",
        "1e-4",
        "--out",
        "o.csv",
        "--policy-out",
        "pi.txt",
    ];
    let out = stepmix(&args, d);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("extracted baseline value"));
    assert!(stdout.contains("dataset size: 2000"));
    assert_eq!(std::fs::read_to_string(d.join("o.csv")).unwrap().lines().count(), 101);
    assert!(d.join("pi.txt").is_file());
    assert_eq!(
        code(&stepmix(&["offline", "--algorithm", "greedy", "--out", "o.csv"], d)),
        1
    );
}
