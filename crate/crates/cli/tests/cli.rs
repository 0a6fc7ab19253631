use std::fs;
use std::process::{Command, Output};

fn fbmcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbmcode"))
        .args(args)
        .env_remove("FBMCODE_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn sample_is_reproducible() {
    let a = fbmcode(&["sample", "--hurst", "0.5", "--seed", "7"]);
    let b = fbmcode(&["sample", "--hurst", "0.5", "--seed", "7"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,value"));
    assert_eq!(lines.next(), Some("0,0"));
    assert_eq!(lines.count(), 256);
    let c = fbmcode(&["sample", "--hurst", "0.5", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn waterfill_example() {
    let o = fbmcode(&["waterfill", "--spectrum", "exact-bm", "--rates", "100,1000"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(text.lines().next(), Some("r,D,rH_D"));
    assert_eq!(rows.len(), 2);
    let kappa = std::f64::consts::SQRT_2 / std::f64::consts::PI;
    assert!((rows[1][2] / kappa - 1.0).abs() < 0.02);

    let o = fbmcode(&["waterfill", "--spectrum", "discretized", "--hurst", "0.3", "--n", "256", "--format", "json"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("\"rH_D\""));
}

#[test]
fn concat_report_respects_the_error_bound() {
    let dir = tempfile::tempdir().unwrap();
    let diag = dir.path().join("diag.json");
    let o = fbmcode(&[
        "rd", "--scheme", "concat", "--hurst", "0.5", "--mc", "100", "--seed", "1",
        "--diagnostics", diag.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    let distortions: Vec<f64> = report
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(6).unwrap().parse().unwrap())
        .collect();
    let diagnostics: serde_json::Value = serde_json::from_str(&fs::read_to_string(&diag).unwrap()).unwrap();
    let bounds: Vec<f64> = diagnostics
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["error_bound"].as_f64().unwrap())
        .collect();
    assert_eq!(distortions.len(), bounds.len());
    for (d, b) in distortions.iter().zip(&bounds) {
        assert!(d <= b, "{d} > {b}");
    }
}

#[test]
fn exit_statuses() {
    let o = fbmcode(&["rd", "--hurst", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--hurst"));

    let o = fbmcode(&["rd", "--mc", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mc:"));

    let o = fbmcode(&["rd", "--scheme", "concat", "--norm", "lp"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("norm:"));

    let o = fbmcode(&["rd", "--rates", "8,4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rates:"));

    let o = fbmcode(&["sample", "--output", "/nonexistent-dir/x.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent-dir/x.csv"));

    assert_eq!(fbmcode(&["bogus"]).status.code(), Some(2));
    assert_eq!(fbmcode(&["--help"]).status.code(), Some(0));
}

#[test]
fn help_lists_defaults() {
    for (sub, flags) in [
        ("sample", &["--hurst", "--horizon", "--n-per-unit", "--seed", "--format"][..]),
        ("rd", &["--scheme", "--hurst", "--q", "--rates", "--mc", "--seed", "--n-per-unit", "--format"][..]),
        ("kappa", &["--scheme", "--rates"][..]),
        ("waterfill", &["--spectrum", "--hurst", "--terms", "--n", "--rates", "--format"][..]),
        ("selftest", &["--seed"][..]),
    ] {
        let text = stdout(&fbmcode(&[sub, "--help"]));
        for flag in flags {
            let mut block = text.lines().skip_while(|l| !l.trim_start().starts_with(flag));
            let first = block.next().unwrap_or_default();
            let line = std::iter::once(first)
                .chain(block.take_while(|l| !l.trim_start().starts_with("--")))
                .collect::<String>();
            assert!(line.contains("[default:"), "{sub} {flag}: {line}");
        }
    }
}

#[test]
fn outputs_go_only_where_asked() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = fbmcode(&[
        "rd", "--mc", "100", "--rates", "4,8", "--n-per-unit", "32", "--pool-size", "500",
        "--format", "json", "--output", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec!["report.json"]);
    assert!(fs::read_to_string(&out).unwrap().trim_start().starts_with('['));

    let env_dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fbmcode"))
        .args(["waterfill", "--rates", "10,20", "--terms", "1000"])
        .env("FBMCODE_OUTPUT_DIR", env_dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(env_dir.path().join("waterfill.csv").exists());
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "hurst=0.3\nn_per_unit=16\nseed=5\n").unwrap();
    let from_file = fbmcode(&["sample", "--config", conf.to_str().unwrap()]);
    let explicit = fbmcode(&["sample", "--hurst", "0.3", "--n-per-unit", "16", "--seed", "5"]);
    assert!(from_file.status.success());
    assert_eq!(from_file.stdout, explicit.stdout);

    let overridden = fbmcode(&["sample", "--config", conf.to_str().unwrap(), "--seed", "6"]);
    let explicit = fbmcode(&["sample", "--hurst", "0.3", "--n-per-unit", "16", "--seed", "6"]);
    assert_eq!(overridden.stdout, explicit.stdout);

    fs::write(&conf, "colour=blue\n").unwrap();
    let o = fbmcode(&["sample", "--config", conf.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn kappa_and_selftest_run() {
    let o = fbmcode(&["kappa", "--scheme", "waterfill_ref", "--rates", "100,1000,10000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("hurst,norm,p,rate,normalized,plateau\n"));
    assert!(stderr(&o).starts_with("plateau 0.44"));

    let o = fbmcode(&["selftest", "--seed", "3"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS ")).count(), 5);
}
