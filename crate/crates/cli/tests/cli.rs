use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fineq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fineq")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_SWEEP: &str = "kind = \"soundness-sweep\"\nseed = 5\nintervals = 1024\n[sweep]\ninstances = 16\nmollify_instances = 4\n";

#[test]
fn malformed_config_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "kind = \"soundness-sweep\"\n[sweep]\ninstances = \"lots\"\n");
    let out = fineq(&["sweep", "--config", s(&cfg), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml:3:"), "{err}");
}

#[test]
fn unknown_key_and_kind_mismatch_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "typo.toml", "kind = \"mollify\"\n[mollify]\nlocations = [1.0]\nsigmas = [1.0]\nsigma = 2\n");
    let out = fineq(&["mollify", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo.toml:5:"));
    let cfg = write(dir.path(), "other.toml", SMALL_SWEEP);
    assert_eq!(fineq(&["mollify", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn sweep_is_sound_and_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.toml", SMALL_SWEEP);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ra = fineq(&["sweep", "--config", s(&cfg), "--out-dir", s(&a), "--threads", "1"]);
    let rb = fineq(&["sweep", "--config", s(&cfg), "--out-dir", s(&b), "--threads", "3"]);
    assert!(ra.status.success() && rb.status.success(), "{}", String::from_utf8_lossy(&ra.stderr));
    let ca = fs::read(a.join("soundness-sweep.csv")).unwrap();
    assert_eq!(ca, fs::read(b.join("soundness-sweep.csv")).unwrap());
    let header = String::from_utf8_lossy(&ca).lines().next().unwrap().to_string();
    assert_eq!(header, "instance,base,perturbation,theorem,quantity,applicable,bound,oracle,ratio,violation,params,margins");
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.join("soundness-sweep.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["violations"], 0);
}

#[test]
fn seed_flag_changes_instances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.toml", SMALL_SWEEP);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    fineq(&["sweep", "--config", s(&cfg), "--out-dir", s(&a)]);
    fineq(&["sweep", "--config", s(&cfg), "--out-dir", s(&b), "--seed", "6"]);
    assert_ne!(fs::read(a.join("soundness-sweep.csv")).unwrap(), fs::read(b.join("soundness-sweep.csv")).unwrap());
}

#[test]
fn regress_flags_emit_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = fineq(&["regress", "--n", "16", "--M", "8", "--sparsity", "2", "--alpha", "5", "--beta", "64", "--tau", "1", "--seed", "2", "--steps", "4000", "--h", "0.01", "--out-dir", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("regress.json")).unwrap()).unwrap();
    let d = &v["details"];
    assert!(d["q"].as_f64().unwrap() > 0.0);
    assert!(d["q_prime"].as_f64().unwrap() > 0.0);
    assert_eq!(d["estimation"]["lambda_hat"].as_array().unwrap().len(), 8);
    assert!(d["gated"]["theorem"] == "regression_gated");
}

#[test]
fn langevin_dumps_samples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "l.toml", "kind = \"langevin\"\nseed = 4\n[langevin]\nmeasure = { family = \"gaussian\", rho = 2.0 }\nh = 0.05\nsteps = 300\nchains = 2\n");
    let out = fineq(&["langevin", "--config", s(&cfg), "--out-dir", s(dir.path()), "--dump-samples"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = fs::read(dir.path().join("langevin_chain1.bin")).unwrap();
    let (n, steps, seed, data) = fineq::langevin::read_samples(&mut bytes.as_slice()).unwrap();
    assert_eq!((n, steps), (1, 300));
    assert_eq!(seed, fineq::langevin::chain_seed(4, 1));
    assert_eq!(data.len(), 300);
}

#[test]
fn compare_reports_regimes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "kind = \"compare\"\nintervals = 1024\n[compare]\nmeasure = { family = \"gaussian\", rho = 1.0 }\namplitudes = [0.2, 4.0]\nwidths = [0.25, 4.0]\n");
    let out = fineq(&["compare", "--config", s(&cfg), "--out-dir", s(dir.path())]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("compare.json")).unwrap()).unwrap();
    let wins = &v["details"]["wins"];
    assert!(wins["holley_stroock"].as_u64().unwrap() > 0 && wins["lipschitz_poincare"].as_u64().unwrap() > 0, "{wins}");
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(root).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            fineq::scenario::load_scenario(&p).unwrap_or_else(|e| panic!("{e}"));
            n += 1;
        }
    }
    assert_eq!(n, 7);
}
