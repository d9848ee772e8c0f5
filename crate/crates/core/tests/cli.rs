use std::path::Path;
use std::process::{Command, Output};

fn genkernel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genkernel"))
        .current_dir(dir)
        .env("GENKERNEL_THREADS", "2")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CONFIG: &str = r#"
seed = 11
schedule = { k_min = 4, k_max = 10 }

[kernels.k]
kind = "random-smooth"
domain = "X"
terms = 2

[[tasks]]
name = "image"
op = "apply"
kernel = "k"
function = "probe"

[[tasks]]
name = "series"
op = "exp"
kernel = "logbump"
t = [0.5, 0.0]

[[tasks]]
name = "gate"
op = "verify"
suite = "log-scale"
kernel = "invbump"
"#;

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(genkernel(d, &["apply", "rank1", "bump"]).status.code(), Some(0));
    assert_eq!(genkernel(d, &["verify", "zero", "rank1"]).status.code(), Some(1));
    let gated = genkernel(d, &["exp", "invbump"]);
    assert_eq!(gated.status.code(), Some(1));
    assert!(stderr(&gated).contains("task exp"), "{}", stderr(&gated));
    assert!(stderr(&gated).contains("not log-scale"));
    // Past the gate, eps^-1 growth exhausts the term cap instead.
    let forced = genkernel(d, &["exp", "invbump", "--proceed", "--t", "0.1"]);
    assert_eq!(forced.status.code(), Some(1));
    assert!(stderr(&forced).contains("within 300 terms"), "{}", stderr(&forced));

    let undefined = genkernel(d, &["apply", "Hmissing", "bump"]);
    assert_eq!(undefined.status.code(), Some(2));
    assert!(stderr(&undefined).contains("Hmissing"));
    assert_eq!(genkernel(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(genkernel(d, &["--config", "absent.toml", "run"]).status.code(), Some(2));
}

#[test]
fn run_writes_reports_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), CONFIG).unwrap();
    let first = genkernel(d, &["--config", "run.toml", "--out", "a", "run"]);
    assert_eq!(first.status.code(), Some(1), "{}", stderr(&first));
    assert!(stderr(&first).contains("gate"));
    let second = genkernel(d, &["--config", "run.toml", "--out", "b", "run"]);
    assert_eq!(second.status.code(), Some(1));
    for name in ["image", "series", "gate"] {
        for ext in ["report.json", "samples.csv"] {
            let a = std::fs::read(d.join("a").join(format!("{name}.{ext}"))).unwrap();
            let b = std::fs::read(d.join("b").join(format!("{name}.{ext}"))).unwrap();
            assert_eq!(a, b, "{name}.{ext} differs between runs");
        }
    }
    let env: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("a/series.report.json")).unwrap()).unwrap();
    assert_eq!(env["pass"], true);
    assert_eq!(env["result"]["epsilons"].as_array().unwrap().len(), 7);

    let only = genkernel(d, &["--config", "run.toml", "--out", "c", "run", "--only", "image"]);
    assert_eq!(only.status.code(), Some(0));
    assert!(!d.join("c/series.report.json").exists());

    let rep = genkernel(d, &["--out", "a", "report", "a/image.report.json", "a/series.report.json", "a/gate.report.json"]);
    assert_eq!(rep.status.code(), Some(0));
    let table = std::fs::read_to_string(d.join("a/summary.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.lines().any(|l| l.starts_with("gate,verify,fail")));
}

#[test]
fn moments_subcommand_reports_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = genkernel(dir.path(), &["moments", "--m-max", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let env: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/moments.report.json")).unwrap()).unwrap();
    let rows = env["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["pass"] == true));
}

#[test]
fn bad_config_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("dup.toml"), "[[tasks]]\nname = \"a\"\nop = \"moments\"\n[[tasks]]\nname = \"a\"\nop = \"moments\"\n").unwrap();
    assert_eq!(genkernel(d, &["--config", "dup.toml", "run"]).status.code(), Some(2));
    std::fs::write(d.join("dom.toml"), "[kernels.q]\nkind = \"zero\"\nx = \"X\"\ny = \"Nowhere\"\n").unwrap();
    let o = genkernel(d, &["--config", "dom.toml", "run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Nowhere"));
}
