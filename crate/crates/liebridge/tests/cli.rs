use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn liebridge(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liebridge")).args(args).current_dir(dir).output().expect("binary runs")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn bridge_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.txt"), "space = so3\nT = 1\nsteps = 50\nn_paths = 6\nseed = 42\n").unwrap();
    for out in ["a", "b"] {
        let o = liebridge(&["bridge", "--config", "c.txt", "--out", out], tmp.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(tmp.path().join("a/paths.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/paths.csv")).unwrap();
    assert_eq!(a, b);
    let (ma, mb) = (manifest(&tmp.path().join("a")), manifest(&tmp.path().join("b")));
    assert_eq!(ma["files"], mb["files"]);
    assert_eq!(ma["summary"], mb["summary"]);

    let o = liebridge(&["bridge", "--config", "c.txt", "--out", "c", "--seed", "43"], tmp.path());
    assert!(o.status.success());
    assert_ne!(fs::read(tmp.path().join("c/paths.csv")).unwrap(), a);
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.txt"), "space = s2\nsteps = 40\nn_paths = 12\nseed = 5\n").unwrap();
    for (out, threads) in [("one", "1"), ("four", "4")] {
        let o = Command::new(env!("CARGO_BIN_EXE_liebridge"))
            .args(["fermi", "--config", "c.txt", "--out", out])
            .env("LIEBRIDGE_THREADS", threads)
            .current_dir(tmp.path())
            .output()
            .unwrap();
        assert!(o.status.success());
    }
    assert_eq!(manifest(&tmp.path().join("one"))["files"], manifest(&tmp.path().join("four"))["files"]);
}

#[test]
fn manifest_lists_every_file_with_its_checksum() {
    use sha2::{Digest, Sha256};
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.txt"), "K = 400\nseed = 3\n").unwrap();
    let o = liebridge(&["mh", "--config", "c.txt", "--out", "o"], tmp.path());
    assert!(o.status.success());
    let dir = tmp.path().join("o");
    let m = manifest(&dir);
    let listed: Vec<String> =
        m["files"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap().to_string()).collect();
    let mut on_disk: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut sorted = listed.clone();
    sorted.sort();
    assert_eq!(sorted, on_disk);
    for f in m["files"].as_array().unwrap() {
        let bytes = fs::read(dir.join(f["name"].as_str().unwrap())).unwrap();
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(f["sha256"].as_str().unwrap(), hex);
    }
    assert_eq!(m["config"]["experiment"], "mh");
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn paths_csv_layout() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.txt"), "space = abelian:2\nsteps = 4\nn_paths = 2\nseed = 1\n").unwrap();
    assert!(liebridge(&["bridge", "--config", "c.txt", "--out", "o"], tmp.path()).status.success());
    let text = fs::read_to_string(tmp.path().join("o/paths.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "path,t,x0,x1,log_phi");
    assert_eq!(lines.len(), 1 + 2 * 5);
    assert!(lines[1].starts_with("0,0.0,0.0,0.0,") && lines[1].ends_with(','));
    assert_eq!(lines[5], "0,1.0,1.0,1.0,0.0");
}

#[test]
fn print_config_echoes_effective_config() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.json"), r#"{"T": 0.5, "seed": 11}"#).unwrap();
    let o = liebridge(&["s2-kernel", "--config", "c.json", "--print-config"], tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(
        text.contains("experiment = s2-kernel\n") && text.contains("T = 0.5\n") && text.contains("n_bridges = 384\n")
    );
    let reparsed = liebridge::parse_config(&text).unwrap();
    assert_eq!(reparsed.seed, 11);
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn failures_exit_nonzero_with_a_record() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.txt"), "seed = 1\nsteps = -3\n").unwrap();
    let o = liebridge(&["bm", "--config", "bad.txt", "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let rec: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(rec["error"]["kind"], "config");
    assert_eq!(rec["error"]["key"], "steps");
    assert_eq!(rec["error"]["line"], 2);
    assert!(tmp.path().join("o/error.json").exists());

    let o = liebridge(&["frobnicate", "--seed", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(2));

    // the metric is not positive definite: a module error, not a config error
    fs::write(tmp.path().join("m.txt"), "seed = 1\nmetric = 1,0,0,-1,0,1\n").unwrap();
    let o = liebridge(&["bridge", "--config", "m.txt", "--out", "m"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let rec: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(rec["error"]["kind"].as_str().unwrap().starts_with("core."), "{rec}");
}

#[test]
fn seed_is_required() {
    let tmp = tempfile::tempdir().unwrap();
    let o = liebridge(&["bm"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}
