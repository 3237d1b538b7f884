use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sdsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    root.join(name).display().to_string()
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn parking_lot_trace_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let res = sdsim(&["run", &scenario("parking_lot.json"), "--out", &out]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let trace = std::fs::read_to_string(dir.path().join("trace.txt")).unwrap();
    let expected = std::fs::read_to_string(golden("parking_lot.trace.txt")).unwrap();
    assert_eq!(trace, expected);
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(dir.path().join("metrics.json").exists());
}

#[test]
fn bundled_scenarios_validate() {
    for name in ["parking_lot.json", "federal_state.json", "hot_service.json"] {
        let res = sdsim(&["validate", &scenario(name)]);
        assert_eq!(res.status.code(), Some(0), "{name}");
        assert!(String::from_utf8_lossy(&res.stdout).starts_with("ok:"));
    }
}

#[test]
fn invalid_scenarios_exit_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("parking_lot.json")).unwrap();

    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, text.replace("\"base_ttl\": 30", "\"base_ttl\": 30, \"ttl_jitter\": 2")).unwrap();
    let res = sdsim(&["validate", unknown.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    let line = text.lines().position(|l| l.contains("\"base_ttl\"")).unwrap() + 1;
    assert!(err.contains("ttl_jitter") && err.contains(&format!("line {line},")), "{err}");

    let bad_layer = dir.path().join("bad_layer.json");
    std::fs::write(&bad_layer, text.replace("\"layer\": \"NSD\"", "\"layer\": \"LSD\"")).unwrap();
    let res = sdsim(&["run", bad_layer.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nsd-city"));
    assert!(!dir.path().join("o").exists());

    let dangling = dir.path().join("dangling.json");
    std::fs::write(&dangling, text.replace("\"lsd\": \"lsd-north\"", "\"lsd\": \"lsd-west\"")).unwrap();
    let res = sdsim(&["validate", dangling.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("lsd-west"));

    let res = sdsim(&["validate", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn sweep_writes_one_directory_per_seed_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let res = sdsim(&["run", &scenario("federal_state.json"), "--out", &out, "--sweep", "1-3"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for seed in 1..=3 {
        assert!(dir.path().join(format!("seed-{seed}/metrics.json")).exists());
    }
    let again = tempfile::tempdir().unwrap();
    let res = sdsim(&["run", &scenario("federal_state.json"), "--out", again.path().to_str().unwrap(), "--seed", "2"]);
    assert!(res.status.success());
    let a = std::fs::read(dir.path().join("seed-2/metrics.json")).unwrap();
    let b = std::fs::read(again.path().join("metrics.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn compare_adaptive_against_static() {
    let dir = tempfile::tempdir().unwrap();
    let (s, a) = (dir.path().join("static"), dir.path().join("adaptive"));
    for (path, flag) in [(&s, "--adaptive=false"), (&a, "--adaptive")] {
        let res = sdsim(&["run", &scenario("hot_service.json"), "--out", path.to_str().unwrap(), flag]);
        assert!(res.status.success());
    }
    let res = sdsim(&["compare", s.to_str().unwrap(), a.to_str().unwrap()]);
    assert!(res.status.success());
    let table = String::from_utf8_lossy(&res.stdout);
    let row = table.lines().find(|l| l.starts_with("requests_to_tsd")).unwrap();
    let cols: Vec<u64> = row.split_whitespace().skip(1).take(2).map(|c| c.parse().unwrap()).collect();
    assert!(cols[1] < cols[0], "{row}");
}
