use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nigelpark::report::{OUT_ENV, TRIAL_FILES};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> PathBuf {
    root().join("scenarios").join(format!("{name}.yaml"))
}

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nigelpark")).args(args).current_dir(cwd).env_remove(OUT_ENV).output().unwrap()
}

/// park_reverse starting on its own goal, so every run is instant.
fn parked_scenario(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(scenario("park_reverse")).unwrap();
    let worlds = root().join("scenarios/worlds");
    let text = text
        .replace("worlds/", &format!("{}/", worlds.display()))
        .replace("start: [2.725, 1.12, 0.0]", "start: [2.225, 0.22, 1.5707963267948966]");
    let p = dir.join("parked.yaml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(cli(&["bogus"], d).status.code(), Some(2));
    assert_eq!(cli(&["park"], d).status.code(), Some(2));
    let s = scenario("park_reverse");
    assert_eq!(cli(&["park", s.to_str().unwrap(), "--wat"], d).status.code(), Some(2));
    assert_eq!(cli(&["park", s.to_str().unwrap(), "--stage", "hybrid"], d).status.code(), Some(2));
    assert_eq!(cli(&["--help"], d).status.code(), Some(0));
}

#[test]
fn missing_scenario_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["park", "no/such/scenario.yaml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("no/such/scenario.yaml"), "{err}");
}

#[test]
fn output_dir_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = parked_scenario(d);
    let s = s.to_str().unwrap();
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_nigelpark"));
        c.args(["park", s, "--seed", "2"]).current_dir(d).env_remove(OUT_ENV);
        if let Some(e) = env {
            c.env(OUT_ENV, e);
        }
        if let Some(f) = flag {
            c.args(["--out", f]);
        }
        let o = c.output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(None, None);
    assert!(d.join("out/trial_2/result.json").is_file());
    run(Some("from_env"), None);
    assert!(d.join("from_env/trial_2/result.json").is_file());
    run(Some("from_env2"), Some("from_flag"));
    assert!(d.join("from_flag/trial_2/result.json").is_file());
    assert!(!d.join("from_env2").exists());
}

#[test]
fn park_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = scenario("park_reverse");
    for out in ["a", "b"] {
        let o = cli(&["park", s.to_str().unwrap(), "--seed", "7", "--out", out], d);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    }
    for f in TRIAL_FILES {
        let a = std::fs::read(d.join("a/trial_7").join(f)).unwrap();
        let b = std::fs::read(d.join("b/trial_7").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn failed_checks_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["park", scenario("park_goal_blocked").to_str().unwrap(), "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("unreachable"));
    assert!(dir.path().join("o/trial_1/result.json").is_file());
}

#[test]
fn verify_emits_report_and_plot_renders() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = parked_scenario(d);
    let o = cli(&["verify", s.to_str().unwrap(), "--trials", "2", "--out", "v"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "repeatability.json", "map.yaml", "map.pgm", "firmware/equivalence.json", "trial_2/trajectory.csv"] {
        assert!(d.join("v").join(f).is_file(), "{f}");
    }
    let blocked = scenario("park_goal_blocked");
    let o = cli(&["verify", blocked.to_str().unwrap(), "--trials", "2", "--out", "w"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(d.join("w/report.json").is_file());

    let o = cli(&["plot", "v/trial_1"], d);
    assert_eq!(o.status.code(), Some(0));
    let svg = std::fs::read_to_string(d.join("v/trial_1/trajectory.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let ids: Vec<_> = doc.descendants().filter_map(|n| n.attribute("id")).collect();
    assert!(ids.contains(&"map") && ids.contains(&"trajectory"), "{ids:?}");
    assert!(doc.descendants().filter(|n| n.has_tag_name("rect")).count() > 10);

    assert_eq!(cli(&["plot", "v/trial_9"], d).status.code(), Some(2));
}

#[test]
fn plot_of_a_moving_trial() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = cli(&["park", scenario("park_parallel").to_str().unwrap(), "--seed", "3", "--out", "p"], d);
    assert_eq!(o.status.code(), Some(0));
    let o = cli(&["plot", "p/trial_3/trajectory.csv", "--output", "x.svg"], d);
    assert_eq!(o.status.code(), Some(0));
    let svg = std::fs::read_to_string(d.join("x.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let line = doc.descendants().find(|n| n.attribute("id") == Some("trajectory")).unwrap();
    assert!(line.attribute("points").unwrap().split(' ').count() > 20);
}
