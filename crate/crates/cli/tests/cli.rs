use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 7
[train]
n = 200
heldout = 32
epochs = 2
[model]
width = 16
hidden = 2
[sampler]
n_steps = 40
n_samples = 48
[evaluation]
n_grid = [40, 80]
repeats = 2
eval_size = 48
score_mc = 80
"#;

fn mandiff(args: &[&str], dir: &Path, workers: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mandiff"))
        .args(args)
        .arg("--out")
        .arg(dir.join("out"))
        .env("MANDIFF_WORKERS", workers)
        .output()
        .expect("spawn mandiff")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    fs::write(dir.path().join("p.csv"), "x1,x2\n1,0\n0.5,0.5\n0,-1.5\n3,3\n").unwrap();
    dir
}

fn cfg(dir: &Path) -> String {
    dir.join("c.toml").display().to_string()
}

#[test]
fn invariants_pass_and_write_manifest() {
    let dir = setup();
    let out = mandiff(&["invariants", "--config", &cfg(dir.path())], dir.path(), "1");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("out/invariants");
    for f in ["config.toml", "invariants.json", "manifest.json"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["details"]["failed"], 0);
}

#[test]
fn unknown_subcommand_exits_2() {
    let dir = setup();
    let out = mandiff(&["frobnicate"], dir.path(), "1");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("SubcommandUnknown"));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = setup();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[schedule]\nt0 = 1e-3\nbogus = 1\n").unwrap();
    let out = mandiff(&["invariants", "--config", &bad.display().to_string()], dir.path(), "1");
    assert_eq!(out.status.code(), Some(2));
    let line = String::from_utf8_lossy(&out.stderr);
    let rec: serde_json::Value = serde_json::from_str(line.lines().last().unwrap()).unwrap();
    assert_eq!(rec["exit_code"], 2);
    assert_eq!(rec["error"], "ConfigInvalid");
}

#[test]
fn invalid_schedule_exits_2() {
    let dir = setup();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[schedule]\nt0 = 5.0\nt_end = 1.0\n").unwrap();
    let out = mandiff(&["invariants", "--config", &bad.display().to_string()], dir.path(), "1");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_eval_requires_points_and_t() {
    let dir = setup();
    let out = mandiff(&["oracle-eval", "--config", &cfg(dir.path())], dir.path(), "1");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_eval_identical_across_workers() {
    let dir = setup();
    let p = dir.path().join("p.csv").display().to_string();
    let args = ["oracle-eval", "--config", &cfg(dir.path()), "--points", &p, "--t", "0.05"];
    let a = mandiff(&args, dir.path(), "1");
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let first = fs::read(dir.path().join("out/oracle-eval/scores.csv")).unwrap();
    let b = mandiff(&args, dir.path(), "3");
    assert_eq!(b.status.code(), Some(0));
    let second = fs::read(dir.path().join("out/oracle-eval/scores.csv")).unwrap();
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x1,x2,t,s1,s2,log_p");
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn oracle_eval_reads_binary_points() {
    let dir = setup();
    let bin = dir.path().join("p.bin");
    let bytes: Vec<u8> = [1.0f64, 0.0, 0.5, 0.5].iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&bin, bytes).unwrap();
    let out = mandiff(
        &["oracle-eval", "--config", &cfg(dir.path()), "--points", &bin.display().to_string(), "--t", "0.1"],
        dir.path(),
        "1",
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("out/oracle-eval/scores.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn train_then_sample_from_checkpoint() {
    let dir = setup();
    let c = cfg(dir.path());
    let t = mandiff(&["train", "--config", &c], dir.path(), "1");
    assert_eq!(t.status.code(), Some(0), "{}", String::from_utf8_lossy(&t.stderr));
    let model = dir.path().join("out/train/model.bin");
    assert!(model.exists());
    let loss = fs::read_to_string(dir.path().join("out/train/loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);

    let s = mandiff(&["sample", "--config", &c, "--model", &model.display().to_string()], dir.path(), "1");
    assert_eq!(s.status.code(), Some(0), "{}", String::from_utf8_lossy(&s.stderr));
    let samples = fs::read_to_string(dir.path().join("out/sample/samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 49);
}

#[test]
fn train_is_reproducible_with_seed() {
    let dir = setup();
    let c = cfg(dir.path());
    let run = |workers| {
        let out = mandiff(&["train", "--config", &c, "--seed", "11"], dir.path(), workers);
        assert_eq!(out.status.code(), Some(0));
        (fs::read(dir.path().join("out/train/model.bin")).unwrap(), fs::read(dir.path().join("out/train/loss.csv")).unwrap())
    };
    let a = run("1");
    let b = run("2");
    assert_eq!(a, b);
}

#[test]
fn missing_checkpoint_is_a_config_error() {
    let dir = setup();
    let out = mandiff(&["sample", "--config", &cfg(dir.path()), "--model", "/nonexistent/model.bin"], dir.path(), "1");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rate_and_report() {
    let dir = setup();
    let c = cfg(dir.path());
    let r = mandiff(&["rate", "--config", &c], dir.path(), "1");
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/rate/rate_report.json")).unwrap()).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 4);
    let csv = fs::read_to_string(dir.path().join("out/rate/rate.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "n,repeat,w1,score_l2,wall_seconds");

    let rep = mandiff(&["report"], dir.path(), "1");
    assert_eq!(rep.status.code(), Some(0), "{}", String::from_utf8_lossy(&rep.stderr));
    assert!(fs::read_to_string(dir.path().join("out/report/report.md")).unwrap().contains("Rate"));
}

#[test]
fn report_without_runs_fails() {
    let dir = setup();
    let out = mandiff(&["report"], dir.path(), "1");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_configs_pass_invariants() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let dir = tempfile::tempdir().unwrap();
            let out = mandiff(&["invariants", "--config", &path.display().to_string()], dir.path(), "1");
            assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&out.stdout));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
