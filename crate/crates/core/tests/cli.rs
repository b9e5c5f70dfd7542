use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hyperwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperwalk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn walk_output_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = hyperwalk(&[
            "walk",
            "--amplitude",
            "0.3",
            "--steps-per-period",
            "2000",
            "--out",
            path(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next(), Some("n,t,re,im"));
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    assert_eq!(last[0], "2000");
}

#[test]
fn zero_field_rows_repeat_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("zero.csv");
    let o = hyperwalk(&[
        "walk",
        "--field",
        "zero",
        "--amplitude",
        "0.25",
        "--stride",
        "100",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    let states: Vec<String> = text
        .lines()
        .skip(1)
        .map(|l| l.splitn(3, ',').nth(2).unwrap().to_string())
        .collect();
    assert_eq!(states.len(), 101);
    assert!(states.iter().all(|s| s == &states[0]));
    assert_eq!(states[0], "2.5000000000000000e-1,0.0000000000000000e0");
}

#[test]
fn period_defaults_write_all_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("period");
    let o = hyperwalk(&["period", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let header = "a,lambda,T_measured,T_oracle,T_linear,abs_dev,rel_dev";
    for name in ["period_nonlinear.csv", "period_rotation.csv"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        assert_eq!(text.lines().next(), Some(header));
        assert_eq!(text.lines().count(), 6);
    }
    let rotation = fs::read_to_string(out.join("period_rotation.csv")).unwrap();
    for line in rotation.lines().skip(1) {
        let abs_dev: f64 = line.split(',').nth(5).unwrap().parse().unwrap();
        assert!(abs_dev <= 1e-9, "{line}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("period_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["verdict"], "adequal_trend");
    let p = summary["fit_exponent"].as_f64().unwrap();
    assert!((p - 2.0).abs() < 0.3, "{p}");
    assert!(out.join("adequality.json").exists());
    let leftovers = fs::read_dir(&out).unwrap().count();
    assert_eq!(leftovers, 4, "no temporary files remain");
}

#[test]
fn compare_writes_rows_fit_and_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let o = hyperwalk(&[
        "compare",
        "--lambdas",
        "1e-2,1e-3,1e-4",
        "--radius",
        "1",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["parameter"], "lambda");
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
    for key in ["scale", "sup_abs", "sup_rel"] {
        assert!(v["rows"][0][key].is_number());
    }
    for key in ["exponent", "prefactor", "residual"] {
        assert!(v["fit"][key].is_number());
    }
    assert_eq!(v["fit"]["verdict"], "adequal_trend");
    assert!(v["envelope"]
        .as_array()
        .unwrap()
        .iter()
        .all(|e| e["violations"] == 0));
}

#[test]
fn gronwall_table_starts_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    let o = hyperwalk(&[
        "gronwall",
        "--eta",
        "2",
        "--lipschitz",
        "0",
        "--t-max",
        "1",
        "--intervals",
        "2",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "t,bound");
    // K = 0 gives η·t
    assert_eq!(rows[1], "0.0000000000000000e0,0.0000000000000000e0");
    assert_eq!(rows[3], "1.0000000000000000e0,2.0000000000000000e0");
}

#[test]
fn series_prints_the_rescaled_ratio() {
    let o = hyperwalk(&["series", "--z", "1:0"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("1 - 0.16666666666666666·ε^2"), "{text}");
    assert!(text.contains("adequal to δ_E: holds"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# walk settings\nfield = zero\namplitude = 0.5\nstride = 10000\n",
    )
    .unwrap();
    let out = dir.path().join("w.csv");
    let o = hyperwalk(&[
        "walk",
        "--config",
        path(&cfg),
        "--amplitude",
        "0.125",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.ends_with("1.2500000000000000e-1,0.0000000000000000e0")));
}

#[test]
fn list_flags_replace_config_lists() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "lambdas = 1e-1,1e-2,1e-3\nradius = 1\n").unwrap();
    let out = dir.path().join("c.json");
    let args = [
        "compare",
        "--config",
        path(&cfg),
        "--lambdas",
        "5e-2,5e-3,5e-4",
        "--out",
        path(&out),
    ];
    assert!(hyperwalk(&args).status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let scales: Vec<f64> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["scale"].as_f64().unwrap())
        .collect();
    assert_eq!(scales, [5e-2, 5e-3, 5e-4]);
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let code = |args: &[&str]| hyperwalk(args).status.code().unwrap();

    assert_eq!(code(&["walk", "--amplitude", "4", "--out", path(&out)]), 2);
    assert_eq!(code(&["walk", "--lambda", "-1", "--out", path(&out)]), 2);
    assert_eq!(
        code(&[
            "compare",
            "--lambdas",
            "1e-3,1e-2,1e-4",
            "--out",
            path(&out)
        ]),
        2
    );
    assert_eq!(
        code(&["period", "--steps-per-period", "100", "--out", path(&out)]),
        2
    );

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "no-such-flag = 1\n").unwrap();
    assert_eq!(
        code(&["walk", "--config", path(&bad), "--out", path(&out)]),
        2
    );

    // the linear walk at a coarse mesh spirals out of its domain
    let blowup = [
        "walk",
        "--field",
        "linear",
        "--lambda",
        "0.5",
        "--t-final",
        "200",
        "--out",
        path(&out),
    ];
    assert_eq!(code(&blowup), 3);
    assert!(!out.exists(), "failed runs leave no output");

    // deviations of F from E do not vanish with the mesh alone
    let inconclusive = [
        "compare",
        "--pair",
        "nonlinear-linear",
        "--lambdas",
        "0.1,0.03,0.01,0.003",
        "--out",
        path(&out),
    ];
    assert_eq!(code(&inconclusive), 0);
    let mut strict = vec!["--strict"];
    strict.extend_from_slice(&inconclusive);
    assert_eq!(code(&strict), 4);
}

#[test]
fn help_documents_units() {
    let o = hyperwalk(&["walk", "--help"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("[rad]") && text.contains("[time]"));
}
