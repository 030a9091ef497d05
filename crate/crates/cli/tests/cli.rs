use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_electrosense"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = run(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn write_config(dir: &Path, text: &str) -> String {
    write_named(dir, "c.toml", text)
}

fn write_named(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.into()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const TOP: &str = "positions = 10\nreceptors = 64\nfrequencies = [1.0, 2.0, 4.0, 8.0]\n";

const DICT: &str = "[[dictionary]]\nname = \"disk\"\nshape = \"disk\"\n\
[[dictionary]]\nname = \"ellipse\"\nshape = \"ellipse\"\n\
[[dictionary]]\nname = \"triangle\"\nshape = \"triangle\"\n";

#[test]
fn default_dictionary_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["build-dict", "--out", "a.json"]);
    ok(dir.path(), &["build-dict", "--out", "b.json", "--threads", "1"]);
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());
    let v = json(&dir.path().join("a.json"));
    assert_eq!(v["entries"].as_array().unwrap().len(), 8);
    assert_eq!(v["frequencies"].as_array().unwrap().len(), 10);
    assert_eq!(v["version"], 1);
    assert!(v["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn single_frequency_dictionary_warns_and_omits_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "frequencies = [3.0]\n");
    let o = ok(dir.path(), &["build-dict", "--config", &c, "--out", "d.json"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mu features are omitted"));
    let v = json(&dir.path().join("d.json"));
    for e in v["entries"].as_array().unwrap() {
        assert!(e["mu"].as_array().unwrap().is_empty());
        assert_eq!(e["tau"].as_array().unwrap().len(), 1);
    }
}

#[test]
fn validation_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "[target]\nshape = \"banana\"\n");
    let o = run(dir.path(), &["simulate", "--config", &c]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("banana") && err.contains("letterA") && err.contains("triangle"), "{err}");

    for args in [
        vec!["build-dict", "--family", "shapes"],
        vec!["build-dict", "--fish", "shark"],
        vec!["stability", "--trials", "0"],
        vec!["stability", "--noise", "-0.5"],
        vec!["simulate", "--noise", "0.1,0.2"],
        vec!["build-dict", "--config", "missing.toml"],
    ] {
        let o = run(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    let c = write_config(dir.path(), "frequencies = [2.0, 1.0]\n");
    assert_eq!(run(dir.path(), &["build-dict", "--config", &c]).status.code(), Some(2));
    let c = write_config(dir.path(), "unknown_key = 1\n");
    assert_eq!(run(dir.path(), &["build-dict", "--config", &c]).status.code(), Some(2));
}

fn max_abs_entry(dir: &Path) -> f64 {
    let meta = json(&dir.join("metadata.json"));
    let mut m: f64 = 0.0;
    for f in meta["files"].as_array().unwrap() {
        let text = std::fs::read_to_string(dir.join(f.as_str().unwrap())).unwrap();
        for field in text.split([',', '\n']).filter(|s| !s.is_empty()) {
            let body = field.strip_suffix('j').unwrap();
            let split = body
                .char_indices()
                .skip(1)
                .filter(|&(i, c)| (c == '+' || c == '-') && !body[..i].ends_with(['e', 'E']))
                .last()
                .unwrap()
                .0;
            let re: f64 = body[..split].parse().unwrap();
            let im: f64 = body[split..].parse().unwrap();
            m = m.max(re.hypot(im));
        }
    }
    m
}

#[test]
fn neutral_target_gives_zero_data() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(
        dir.path(),
        "positions = 4\nreceptors = 32\nfrequencies = [1.0, 3.0]\n[target]\nsigma = 1.0\nepsilon = 0.0\n",
    );
    ok(dir.path(), &["simulate", "--config", &c, "--out", "b"]);
    assert!(max_abs_entry(&dir.path().join("b")) <= 1e-10);
}

#[test]
fn default_simulation_layout() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--out", "b"]);
    let meta = json(&dir.path().join("b/metadata.json"));
    let files = meta["files"].as_array().unwrap();
    assert_eq!(files.len(), 10);
    for f in files {
        let text = std::fs::read_to_string(dir.path().join("b").join(f.as_str().unwrap())).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 20);
        assert!(rows.iter().all(|r| r.split(',').count() == 128));
    }
    assert!(max_abs_entry(&dir.path().join("b")) > 0.0);
}

#[test]
fn noisy_bundles_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "positions = 4\nreceptors = 32\nfrequencies = [1.0, 3.0]\n");
    let read = |name: &str| std::fs::read(dir.path().join(name).join("q_f02.csv")).unwrap();
    ok(dir.path(), &["simulate", "--config", &c, "--noise", "0.5", "--seed", "3", "--out", "a"]);
    ok(dir.path(), &["simulate", "--config", &c, "--noise", "0.5", "--seed", "3", "--out", "b"]);
    ok(dir.path(), &["simulate", "--config", &c, "--noise", "0.5", "--seed", "4", "--out", "c"]);
    ok(dir.path(), &["simulate", "--config", &c, "--out", "clean"]);
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    assert_ne!(read("a"), read("clean"));
}

#[test]
fn classify_recovers_the_simulated_target() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), &format!("{TOP}{DICT}[target]\nshape = \"triangle\"\nangle = 0.4\n"));
    ok(dir.path(), &["build-dict", "--config", &c, "--out", "d.json"]);
    ok(dir.path(), &["simulate", "--config", &c, "--out", "b"]);
    for family in ["sv", "svr", "sd", "pt-imag"] {
        let o = ok(
            dir.path(),
            &["classify", "--config", &c, "--bundle", "b", "--dict", "d.json", "--family", family, "--out", "r.json"],
        );
        let r = json(&dir.path().join("r.json"));
        assert_eq!(r["family"], family);
        assert_eq!(r["scores"].as_array().unwrap().len(), 3);
        assert_eq!(r["winner_name"], "triangle", "{family}: {r}");
        assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "triangle");
    }

    // Truncated row in one data file.
    let path = dir.path().join("b/q_f01.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let cut = lines[3].rfind(',').unwrap();
    lines[3].truncate(cut);
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = run(dir.path(), &["classify", "--config", &c, "--bundle", "b", "--dict", "d.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("q_f01.csv"));

    // Dictionary on another frequency grid.
    let c2 = write_named(dir.path(), "c2.toml", &format!("{}{DICT}", TOP.replace("[1.0, 2.0, 4.0, 8.0]", "[1.0, 2.0]")));
    ok(dir.path(), &["build-dict", "--config", &c2, "--out", "d2.json"]);
    ok(dir.path(), &["simulate", "--config", &c, "--out", "b2"]);
    let o = run(dir.path(), &["classify", "--config", &c, "--bundle", "b2", "--dict", "d2.json"]);
    assert_eq!(o.status.code(), Some(2));
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn stability_curves_stop_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), &format!("{TOP}trials = 60\nstop_rate = 0.5\n{DICT}"));
    ok(dir.path(), &["stability", "--config", &c, "--noise", "0", "--out", "s.csv"]);
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(text.starts_with("# config_hash="));
    assert_eq!(text.lines().nth(1).unwrap(), "noise_level,target,trials,detections,rate");
    let first = rows(&dir.path().join("s.csv"));
    assert_eq!(first.len(), 4);
    let num = |s: &str| s.parse::<f64>().unwrap();
    assert!(first.iter().all(|r| num(&r[0]) == 0.0 && num(&r[4]) == 1.0));
    assert_eq!(first[3][1], "all");
    assert_eq!(first[3][2], "60");

    // Extending the grid keeps the finished level and stops after the
    // first level at or below the stop rate.
    ok(dir.path(), &["stability", "--config", &c, "--noise", "0,1000,2000", "--out", "s.csv"]);
    let all = rows(&dir.path().join("s.csv"));
    assert_eq!(&all[..4], &first[..]);
    let levels: Vec<f64> = all.iter().filter(|r| r[1] == "all").map(|r| num(&r[0])).collect();
    assert_eq!(levels, [0.0, 1000.0]);
    let rate: f64 = all[7][4].parse().unwrap();
    assert!(rate <= 0.5);

    // Thread count does not change the curve.
    ok(dir.path(), &["stability", "--config", &c, "--noise", "0,1000", "--out", "t.csv", "--threads", "2"]);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("t.csv")).unwrap(),
        std::fs::read_to_string(dir.path().join("s.csv")).unwrap()
    );

    // A file from another configuration is not reused.
    let o = run(dir.path(), &["stability", "--config", &c, "--noise", "0", "--seed", "9", "--out", "s.csv"]);
    assert_eq!(o.status.code(), Some(2));
}
