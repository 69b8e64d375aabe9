use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn surroforge(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surroforge"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "info")
        .env_remove("SURROFORGE_CACHE")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn lhs_mountain_car_has_one_row_per_state_and_action() {
    let dir = tempfile::tempdir().unwrap();
    let out = surroforge(
        &["gen-dataset", "--env", "mountaincar", "--sampler", "lhs", "--samples", "1000", "--out", "lhs.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(data_rows(&dir.path().join("lhs.csv")), 3000);
    assert!(dir.path().join("lhs.meta.json").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("3000 transitions"));
}

#[test]
fn random_agent_dataset_has_exact_count_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        let out = surroforge(
            &["gen-dataset", "--env", "cartpole", "--sampler", "ra", "--samples", "1000", "--seed", "4", "--out", name],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(data_rows(&dir.path().join("a.csv")), 1000);
    assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), fs::read(dir.path().join("b.csv")).unwrap());
}

#[test]
fn trained_policy_file_is_reproducible_and_drives_mea_datasets() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("small.toml"),
        "env = \"mountaincar\"\n[mea]\niterations = 2\npopulation = 8\nepisodes_per_eval = 2\nhorizon = 60\nhidden = 4\n",
    )
    .unwrap();
    for name in ["p1.json", "p2.json"] {
        let out = surroforge(&["train-mea", "--config", "small.toml", "--seed", "3", "--out", name], dir.path());
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).contains("nats"));
    }
    assert_eq!(fs::read(dir.path().join("p1.json")).unwrap(), fs::read(dir.path().join("p2.json")).unwrap());
    for name in ["m1.csv", "m2.csv"] {
        let out = surroforge(
            &[
                "gen-dataset",
                "--config",
                "small.toml",
                "--sampler",
                "mea",
                "--samples",
                "200",
                "--policy",
                "p1.json",
                "--out",
                name,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(fs::read(dir.path().join("m1.csv")).unwrap(), fs::read(dir.path().join("m2.csv")).unwrap());
}

#[test]
fn missing_environment_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = surroforge(&["train-mea", "--out", "p.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("environment"));
    let out = surroforge(&["gen-dataset", "--env", "acrobot", "--sampler", "lhs"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = surroforge(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_sampler_is_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "samplers = [\"lhs\", \"bogus\"]\nout_dir = \"res\"\n").unwrap();
    let out = surroforge(&["run-experiment", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("bogus"));
    assert!(!dir.path().join("res").exists());
    let out = surroforge(&["gen-dataset", "--env", "cartpole", "--sampler", "bogus"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = surroforge(&["report", dir.path().to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("results"));
    let out = surroforge(&["report", "--out", "does-not-exist"], dir.path());
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn experiment_reuses_cache_and_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config =
        "env = \"mountaincar\"\nsamplers = [\"lhs\", \"sobol\", \"ra\", \"ea\"]\nsamples = 300\nseeds = [0, 1]\n\
                  cache_dir = \"cache\"\n[train.gbt]\ntrees = 20\n";
    fs::write(dir.path().join("exp.toml"), config).unwrap();
    let first = surroforge(&["run-experiment", "--config", "exp.toml", "--out", "r1", "--jobs", "2"], dir.path());
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(!stderr(&first).contains("cache hit"));
    let second = surroforge(&["run-experiment", "--config", "exp.toml", "--out", "r2"], dir.path());
    assert!(second.status.success(), "{}", stderr(&second));
    assert!(stderr(&second).contains("cache hit"), "{}", stderr(&second));
    assert!(!stderr(&second).contains("building"));
    for name in ["matrix_gbt.csv", "groups_gbt.csv", "ranked_gbt.csv", "scatter_ra.csv"] {
        let a = fs::read(dir.path().join("r1").join(name)).unwrap();
        let b = fs::read(dir.path().join("r2").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let report = surroforge(&["report", "r1"], dir.path());
    assert!(report.status.success());
    let text = String::from_utf8_lossy(&report.stdout);
    let ranked: Vec<f64> = text
        .lines()
        .skip_while(|l| !l.contains("mean R² over all test datasets"))
        .skip(1)
        .take_while(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().last().unwrap().parse().unwrap())
        .collect();
    assert_eq!(ranked.len(), 4);
    assert!(ranked.windows(2).all(|w| w[0] >= w[1]));
}
