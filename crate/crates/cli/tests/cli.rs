use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_dynreg");
const SCHEMA: &str = include_str!("../schema/report.schema.json");

static COUNTER: AtomicUsize = AtomicUsize::new(0);

fn scratch(tag: &str) -> PathBuf {
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let dir = std::env::temp_dir().join(format!("dynreg-cli-{}-{tag}-{n}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn dynreg(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN).arg("--out").arg(out).args(args).env_remove("DYNREG_OUT_DIR").output().unwrap()
}

fn report(out: &Path, command: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join(format!("{command}.json"))).unwrap()).unwrap()
}

fn assert_valid(doc: &Value) {
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = v.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

const IDENTITY: &str = "[field]\nfamily = \"identity\"\ndim = 2\n";

#[test]
fn identity_field_is_differentiable() {
    let dir = scratch("classify");
    let cfg = write_config(&dir, IDENTITY);
    let out = dynreg(&dir, &["classify", "-c", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = report(&dir, "classify");
    assert_valid(&doc);
    assert_eq!(doc["status"], "ok");
    assert_eq!(doc["results"]["verdict"]["classification"], "DifferentiableAtOrigin");
    assert!(dir.join("conditions.csv").exists());
}

#[test]
fn convergent_example_reports_the_independence_triple() {
    let dir = scratch("gs");
    let out = dynreg(&dir, &["gs", "--example", "cesari-convergent"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = report(&dir, "gs");
    assert_valid(&doc);
    let ind = &doc["results"]["independence"];
    assert_eq!(ind["asym_constant"]["verdict"], "EvidenceYes");
    assert_eq!(ind["uniformly_stable"]["verdict"], "EvidenceUnstable");
    assert_eq!(ind["square_dini"]["verdict"]["verdict"], "Converges");
}

#[test]
fn negative_tolerance_is_a_config_error() {
    let dir = scratch("badtol");
    let cfg = write_config(&dir, &format!("{IDENTITY}[budget]\ntol = -1e-6\n"));
    let out = dynreg(&dir, &["classify", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("tol") && err.contains("[budget]"), "{err}");
    assert!(!dir.join("classify.json").exists());

    let out = dynreg(&dir, &["integrate", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_toml_names_the_line() {
    let dir = scratch("syntax");
    let cfg = write_config(&dir, "[field]\nfamily = \"identity\"\ndim = \n");
    let out = dynreg(&dir, &["moments", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn numerical_failure_leaves_a_partial_report() {
    let dir = scratch("partial");
    let out = dynreg(&dir, &["integrate", "--example", "cesari-minus-infinity", "--tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(1));
    let doc = report(&dir, "integrate");
    assert_valid(&doc);
    assert_eq!(doc["status"], "numerical_failure");
    assert_eq!(doc["error"]["module"], "dynsys");
    // the construction stage ran before the failure
    assert!(doc["results"]["construction"].is_object());
}

fn without_timing(mut doc: Value) -> String {
    doc["provenance"]["timing"] = Value::Null;
    serde_json::to_string_pretty(&doc).unwrap()
}

#[test]
fn reports_are_deterministic() {
    let text = format!("{IDENTITY}[moments]\nlevels = 8\n[pde]\ncells = 64\n");
    let a = scratch("det-a");
    let b = scratch("det-b");
    for dir in [&a, &b] {
        let cfg = write_config(dir, &text);
        let out = dynreg(dir, &["report", "-c", cfg.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (ra, rb) = (report(&a, "report"), report(&b, "report"));
    assert_valid(&ra);
    assert_eq!(without_timing(ra), without_timing(rb));
    for csv in ["moments.csv", "trajectory.csv", "conditions.csv", "radii.csv"] {
        assert_eq!(std::fs::read(a.join(csv)).unwrap(), std::fs::read(b.join(csv)).unwrap(), "{csv}");
    }
}

#[test]
fn output_directory_precedence() {
    let dir = scratch("env");
    let from_cfg = dir.join("from-config");
    let from_env = dir.join("from-env");
    let cfg = write_config(&dir, &format!("{IDENTITY}[output]\ndir = {:?}\n", from_cfg.to_str().unwrap()));
    let run = |env: bool| {
        let mut c = Command::new(BIN);
        c.args(["moments", "-c", cfg.to_str().unwrap()]).env_remove("DYNREG_OUT_DIR");
        if env {
            c.env("DYNREG_OUT_DIR", &from_env);
        }
        assert!(c.output().unwrap().status.success());
    };
    run(false);
    assert!(from_cfg.join("moments.json").exists());
    run(true);
    assert!(from_env.join("moments.json").exists());
}

#[test]
fn every_subcommand_emits_a_valid_report() {
    let dir = scratch("all");
    let cfg = write_config(
        &dir,
        "[field]\nfamily = \"gilbarg_serrin\"\ndim = 2\ng = \"-1/log(e^2/r)\"\n[moments]\nlevels = 6\n[appendix]\nsamples = 10\n[pde]\ncells = 32\n",
    );
    let c = cfg.to_str().unwrap();
    for cmd in ["moments", "integrate", "classify", "appendix", "gs", "verify", "report"] {
        let out = dynreg(&dir, &[cmd, "-c", c]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let doc = report(&dir, cmd);
        assert_valid(&doc);
        for f in doc["files"].as_array().unwrap() {
            let text = std::fs::read_to_string(dir.join(f.as_str().unwrap())).unwrap();
            let mut lines = text.lines();
            let width = lines.next().unwrap().split(',').count();
            assert!(lines.all(|l| l.split(',').count() == width), "{cmd}: ragged {f}");
        }
    }
}
