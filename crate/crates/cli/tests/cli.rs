use std::path::PathBuf;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn example(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn dide(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dide"))
        .args(args)
        .output()
        .expect("spawn dide")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn simulate_steps(method: &str) -> Output {
    let spec = example("steps.json");
    dide(&[
        "simulate",
        "--spec",
        spec.to_str().unwrap(),
        "--step",
        "1e-3",
        "--horizon",
        "2",
        "--method",
        method,
    ])
}

#[test]
fn simulate_reproduces_method_of_steps() {
    for method in ["mild", "direct"] {
        let out = simulate_steps(method);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let text = stdout(&out);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x[0]"));
        let last: Vec<f64> = text
            .lines()
            .last()
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(last[0], 2.0);
        assert!((last[1] - 3.5).abs() <= 1e-5, "{method}: {}", last[1]);
        let at_one: Vec<f64> = text
            .lines()
            .find(|l| l.starts_with("1,"))
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert!((at_one[1] - 2.0).abs() <= 1e-5);
    }
}

#[test]
fn simulate_is_byte_deterministic() {
    let a = simulate_steps("mild");
    let b = simulate_steps("mild");
    assert_eq!(a.stdout, b.stdout);
    let spec = example("memory.json");
    let args = [
        "simulate",
        "--spec",
        spec.to_str().unwrap(),
        "--step",
        "0.01",
        "--horizon",
        "3",
    ];
    assert_eq!(dide(&args).stdout, dide(&args).stdout);
}

#[test]
fn minimal_spec_decays_exponentially() {
    let spec = example("minimal.json");
    let out = dide(&[
        "simulate",
        "--spec",
        spec.to_str().unwrap(),
        "--step",
        "1e-3",
        "--horizon",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    for line in stdout(&out).lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        if v[0] >= 0.0 {
            assert!((v[1] - (-v[0]).exp()).abs() <= 1e-6, "{line}");
        }
    }
}

#[test]
fn trace_written_to_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let spec = example("memory.json");
    let out = dide(&[
        "simulate",
        "--spec",
        spec.to_str().unwrap(),
        "--step",
        "0.01",
        "--horizon",
        "2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = dide_core::io::read_trace(std::fs::File::open(&path).unwrap()).unwrap();
    let spec = dide_core::load_spec(&spec).unwrap();
    let report = dide_core::solve_mild(&spec, 0.01, 2.0).unwrap();
    assert_eq!(table.x.len(), report.x.len());
    for (k, row) in table.x.iter().enumerate() {
        assert_eq!(row.as_slice(), report.x.sample(k));
    }
    let y = report.y.as_ref().unwrap();
    let origin = report.origin_index();
    for (k, row) in table.y.iter().enumerate().skip(origin) {
        assert_eq!(row.as_deref(), Some(y.sample(k - origin)));
    }
    assert!(table.y[..origin].iter().all(Option::is_none));
}

#[test]
fn spectrum_finds_the_critical_root() {
    let spec = example("critical.json");
    let out = dide(&["spectrum", "--spec", spec.to_str().unwrap(), "--region", "-1,1,0,2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "re,im,abs_det,newton_iters");
    assert_eq!(rows.len(), 2, "{text}");
    let v: Vec<f64> = rows[1].split(',').map(|s| s.parse().unwrap()).collect();
    assert!(v[0].abs() <= 1e-8);
    assert!((v[1] - std::f64::consts::FRAC_PI_2).abs() <= 1e-8);
}

#[test]
fn resolvent_table_has_row_major_columns() {
    let spec = example("memory.json");
    let out = dide(&[
        "resolvent",
        "--spec",
        spec.to_str().unwrap(),
        "--step",
        "0.1",
        "--horizon",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,R[0][0],R[0][1],R[1][0],R[1][1]"));
    assert_eq!(lines.next(), Some("0,1.0,0.0,0.0,1.0"));
    assert_eq!(lines.count(), 10);
}

#[test]
fn info_summarizes_the_spec() {
    let spec = example("memory.json");
    let out = dide(&["info", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("state dimension d = 2"));
    assert!(text.contains("poles -2+0i (order 1)"), "{text}");
    assert!(text.contains("K: 2x1"));
}

#[test]
fn atom_at_zero_exits_with_spec_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = std::fs::read_to_string(example("steps.json"))
        .unwrap()
        .replace("\"theta\": -1", "\"theta\": 0");
    std::fs::write(&path, text).unwrap();
    let out = dide(&[
        "simulate",
        "--spec",
        path.to_str().unwrap(),
        "--step",
        "1e-3",
        "--horizon",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error kind=spec"), "{err}");
    assert!(err.contains("measure must be continuous at 0"), "{err}");
}

#[test]
fn malformed_json_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"d\": 1,\n  \"A\": [[0]\n}\n").unwrap();
    let out = dide(&["info", "--spec", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 4"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    let spec = example("steps.json");
    let spec = spec.to_str().unwrap();
    for args in [
        vec!["simulate", "--spec", spec, "--step", "-1", "--horizon", "1"],
        vec!["simulate", "--spec", spec, "--step", "0.3", "--horizon", "1"],
        vec!["spectrum", "--spec", spec, "--region", "1,0,0,1"],
        vec!["spectrum", "--spec", spec, "--region", "0,1"],
        vec!["frobnicate"],
    ] {
        let out = dide(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
        assert_eq!(stderr(&out).lines().count(), 1, "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).starts_with("error kind=usage"));
    }
}

#[test]
fn missing_spec_file_is_a_spec_error() {
    let out = dide(&["info", "--spec", "/nonexistent/spec.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn criterion_12_verify_passes_within_budget() {
    let start = Instant::now();
    let specs: Vec<String> = ["steps.json", "critical.json", "minimal.json", "memory.json"]
        .iter()
        .map(|n| example(n).to_str().unwrap().to_string())
        .collect();
    let mut args = vec!["verify"];
    for s in &specs {
        args.push("--spec");
        args.push(s);
    }
    let out = dide(&args);
    let elapsed = start.elapsed();
    let text = stdout(&out);
    print!("{text}");
    let passed = out.status.code() == Some(0) && elapsed < Duration::from_secs(180);
    println!(
        "criterion 12 [{}] verify subcommand: exit {:?} in {:.1}s",
        if passed { "PASS" } else { "FAIL" },
        out.status.code(),
        elapsed.as_secs_f64()
    );
    assert!(passed, "{}", stderr(&out));
    for id in 1..=11 {
        let tag = format!("{id:>4}  PASS");
        assert!(
            text.lines().any(|l| l.starts_with(&tag)),
            "criterion {id} missing: {text}"
        );
    }
}
