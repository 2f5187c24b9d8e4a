use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn bytower(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bytower"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("config.toml");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

#[test]
fn broken_lambda_names_the_expansion_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[scheme]\nkind = \"doubling\"\nlambda_override = 3.0\n[validate]\nsamples = 2000\n";
    let out = bytower(&["validate"], Some(cfg), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("invariant failed: validate.expansion"), "{err}");
    assert_eq!(report(dir.path())["failures"][0], "validate.expansion");
}

#[test]
fn schema_violations_exit_2_with_the_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = bytower(&["plan"], Some("[scheme]\nkind = \"doubling\"\n[plan]\nN = \"two\"\n"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("plan.N"));

    let out = bytower(&["plan"], Some("[scheme]\nkind = \"doubling\"\ncolour = 1\n"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scheme") && err.contains("colour"), "{err}");

    let out = bytower(&["sample", "--theta", "1.5"], None, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampler.theta"));
}

#[test]
fn plan_emits_the_constants() {
    let dir = tempfile::tempdir().unwrap();
    let out = bytower(&["plan", "--threads", "1"], None, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    let c = &r["stages"]["plan"]["summary"]["constants"];
    assert_eq!(c["R"], 0.05);
    assert_eq!(c["xi"], "2/5");
    assert_eq!(c["N"], 2);
    assert_eq!(c["eps"], "27/50");
    for key in ["theta", "C_1", "C_2"] {
        assert!(c[key].is_string(), "{key}");
    }
    assert_eq!(c["C_1"], "27/125");
    assert_eq!(r["budgets"]["tower_truncation"], "1/8");
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    let csv = std::fs::read_to_string(dir.path().join("out/p_sequence.csv")).unwrap();
    assert!(csv.starts_with("k,p_k,t_k\n-1,27/125,\n"));
}

#[test]
fn laws_table_has_the_hand_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[scheme]\nkind = \"doubling\"\n[laws]\ntheta_m = [0.5]\ntheta_x = [0.5]\ntable_max = 3\n";
    let out = bytower(&["laws"], Some(cfg), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/geom_sum_law.csv")).unwrap();
    let exact: Vec<&str> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    // eta_2 = 1/4 and eta_1 = 1/3: P(0) = 1/2, P(n) = (1/6)(3/4)^n.
    assert_eq!(exact, ["1/2", "1/8", "3/32", "9/128"]);
}

#[test]
fn skipped_stages_for_float_schemes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[scheme]\nkind = \"lsv\"\ngamma = 0.5\ndepth = 30\n";
    let out = bytower(&["plan"], Some(cfg), dir.path());
    assert!(out.status.success());
    assert!(report(dir.path())["stages"]["plan"]["summary"]["skipped"].is_string());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        bytower_cli::config::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
