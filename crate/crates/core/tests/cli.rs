use std::path::Path;
use std::process::{Command, Output};

fn wavg(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wavg"));
    cmd.args(args).env_remove("WAVG_OUT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn constant_average_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "kind = \"avg\"\nscheme = \"cesaro\"\nsequence = \"constant:3\"\nhorizon = 100\n[assert]\nexpected = 3\n",
    );
    let out_dir = tmp.path().join("out");
    let out = wavg(&["run", &cfg, "--out-dir", out_dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out_dir);
    assert!((r["result"]["value"]["re"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert!(out_dir.join("report.meta.json").exists());
    let csv = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,re,im"));
    for line in lines {
        assert!(line.split(',').all(|v| v.parse::<f64>().unwrap().is_finite()));
    }
}

#[test]
fn iterated_log_phase_prediction() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "i.toml",
        "kind = \"iterate\"\nscheme = \"cesaro\"\nsequence = \"exp_log_phase\"\nhorizon = 100000\n\
         [iterate]\nk = 3\n[assert]\nexpected = \"prediction\"\nmax_error = 0.05\n",
    );
    let out = wavg(&["run", &cfg, "--out-dir", tmp.path().join("o").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_scheme_exits_one_and_names_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "kind = \"avg\"\nsequence = \"constant:3\"\n");
    for sub in ["run", "check"] {
        let out = wavg(&[sub, &cfg], &[("WAVG_OUT_DIR", tmp.path())]);
        assert_eq!(out.status.code(), Some(1));
        assert!(String::from_utf8_lossy(&out.stderr).contains("scheme"));
    }
    let out = wavg(&["run", tmp.path().join("absent.toml").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_assertion_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "f.toml",
        "kind = \"avg\"\nscheme = \"log\"\nsequence = \"constant:1\"\nhorizon = 1000\n[assert]\nexpected = 2.0\n",
    );
    let out = wavg(&["run", &cfg], &[("WAVG_OUT_DIR", tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(tmp.path())["passed"], serde_json::json!(false));
}

#[test]
fn reports_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "d.toml",
        "kind = \"uniform\"\nscheme = \"exp_sqrt\"\nsequence = \"random_sign\"\nhorizon = 20000\nseed = 5\n\
         [uniform]\nthreshold = 20.0\n",
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(wavg(&["run", &cfg, "--out-dir", d.to_str().unwrap()], &[]).status.code(), Some(0));
    }
    let read = |d: &Path| std::fs::read(d.join("report.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    let c = tmp.path().join("c");
    wavg(&["run", &cfg, "--out-dir", c.to_str().unwrap(), "--seed", "6"], &[]);
    assert_ne!(read(&a), read(&c));
}

#[test]
fn env_sets_output_dir_and_flag_wins() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "e.toml", "kind = \"avg\"\nscheme = \"cesaro\"\nsequence = \"alternating\"\nhorizon = 500\n");
    let env_dir = tmp.path().join("from_env");
    assert_eq!(wavg(&["run", &cfg], &[("WAVG_OUT_DIR", &env_dir)]).status.code(), Some(0));
    assert!(env_dir.join("report.json").exists());
    let flag_dir = tmp.path().join("from_flag");
    wavg(&["run", &cfg, "--out-dir", flag_dir.to_str().unwrap(), "--threads", "2"], &[("WAVG_OUT_DIR", &env_dir)]);
    assert!(flag_dir.join("report.json").exists());
}

#[test]
fn horizon_override_and_cap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "h.toml",
        "kind = \"avg\"\nscheme = \"cesaro\"\nsequence = \"constant:1\"\nhorizon = 100\nmax_horizon = 1000\n",
    );
    let out = wavg(&["check", &cfg, "--horizon", "5000"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cap"));
    assert_eq!(wavg(&["check", &cfg, "--horizon", "900"], &[]).status.code(), Some(0));
}

#[test]
fn list_shows_builtins_and_custom() {
    let out = wavg(&["list"], &[]);
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["cesaro", "log", "exp_sqrt", "rotation", "blocks"] {
        assert!(text.contains(name), "{name}");
    }
    assert!(!text.contains("custom"));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "s.toml",
        "kind = \"avg\"\n[[schemes]]\nname = \"w_three_halves\"\nfrom_f = \"power:1.5\"\nell = 2\n",
    );
    let text = String::from_utf8_lossy(&wavg(&["list", "--config", &cfg], &[]).stdout).into_owned();
    assert!(text.contains("w_three_halves (custom)"));
}

#[test]
fn scan_and_toeplitz_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let scan = write(
        tmp.path(),
        "scan.toml",
        "kind = \"scan\"\n[scan]\nset = \"congruence\"\nmodulus = 2\nresidues = [0]\nn_max = 50000\n\
         f = \"power:1.5\"\nk = 1\nn_lo = 2\nn_hi = 400\nepsilon = 0.3\nn_list = [300]\n[assert]\nrequire = [\"good_nonempty\"]\n",
    );
    let d = tmp.path().join("scan");
    assert_eq!(wavg(&["run", &scan, "--out-dir", d.to_str().unwrap()], &[]).status.code(), Some(0));
    assert!(std::fs::read_to_string(d.join("density.csv")).unwrap().starts_with("n,density"));

    let tp = write(
        tmp.path(),
        "t.toml",
        "kind = \"toeplitz\"\nhorizon = 10000\n[toeplitz]\nmatrix = \"column_one\"\n[assert]\nrequire = [\"regular\"]\n",
    );
    assert_eq!(wavg(&["run", &tp, "--out-dir", tmp.path().join("t").to_str().unwrap()], &[]).status.code(), Some(2));
}
