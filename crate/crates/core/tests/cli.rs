use std::process::{Command, Output};

fn run(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_renorm-perc"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("PERC_THREADS", t),
        None => cmd.env_remove("PERC_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SWEEP: &[&str] = &["sweep", "--delta", "1e-3,1e-2", "--L", "12", "--pg", "0.95", "--pb", "0.1", "--depth", "400", "--reps", "40", "--seed", "9"];

#[test]
fn output_is_byte_identical_across_runs_and_threads() {
    let a = run(SWEEP, Some("1"));
    let b = run(SWEEP, Some("4"));
    let c = run(SWEEP, None);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let env = ["env", "--delta", "1e-3", "--L", "12", "--window", "20000", "--seed", "5"];
    assert_eq!(run(&env, Some("1")).stdout, run(&env, Some("3")).stdout);
}

#[test]
fn first_line_is_a_header() {
    let o = run(SWEEP, None);
    let s = stdout(&o);
    let first = s.lines().next().unwrap();
    assert!(first.starts_with(&format!("# renorm-perc {} {{", env!("CARGO_PKG_VERSION"))), "{first}");
    assert!(first.contains("\"seed\":9"));
    let svg = run(&["render", "--delta", "1e-3", "--L", "12", "--window", "5000"], None);
    assert!(svg.status.success());
    assert!(stdout(&svg).starts_with("<!-- renorm-perc "));
}

#[test]
fn exit_codes() {
    let ok = run(&["verify", "--delta", "1e-5", "--L", "108", "--window", "200000", "--seed", "2"], None);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(stdout(&ok).contains("\"checks\""));
    assert_eq!(run(&["env", "--delta", "1.5"], None).status.code(), Some(2));
    assert_eq!(run(&["env", "--no-such-flag"], None).status.code(), Some(2));
    assert_eq!(run(&["render", "--format", "json"], None).status.code(), Some(2));
    let io = run(&["bounds", "--out", "/nonexistent-dir/x/out.csv"], None);
    assert_eq!(io.status.code(), Some(1));
}

#[test]
fn bounds_reports_n() {
    let o = run(&["bounds", "--pg", "0.9", "--pb", "0.3", "--format", "csv"], None);
    assert!(o.status.success());
    assert!(stdout(&o).lines().any(|l| l.starts_with("# N=28 ")));
    let j = run(&["bounds", "--pg", "0.99", "--pb", "0.01", "--m-max", "10"], None);
    assert!(stdout(&j).contains("\"N\": 17"));
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = std::env::temp_dir().join(format!("rp-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.json");
    std::fs::write(&cfg, r#"{"delta":[0.001],"L":12,"window":20000,"seed":5}"#).unwrap();
    let path = cfg.to_str().unwrap();
    let from_file = run(&["env", "--config", path], None);
    let from_flags = run(&["env", "--delta", "1e-3", "--L", "12", "--window", "20000", "--seed", "5"], None);
    assert!(from_file.status.success(), "{}", String::from_utf8_lossy(&from_file.stderr));
    let body = |o: &Output| stdout(o).lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&from_file), body(&from_flags));
    let override_seed = run(&["env", "--config", path, "--seed", "6"], None);
    assert_ne!(body(&override_seed), body(&from_file));
    std::fs::write(&cfg, r#"{"sede":5}"#).unwrap();
    assert_eq!(run(&["env", "--config", path], None).status.code(), Some(2));
    let out = dir.join("out.json");
    assert!(run(&["env", "--config", path.replace("run", "missing").as_str()], None).status.code() != Some(0));
    std::fs::write(&cfg, r#"{"delta":[0.001],"L":12,"window":20000}"#).unwrap();
    assert!(run(&["env", "--config", path, "--out", out.to_str().unwrap()], None).status.success());
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("# renorm-perc"));
    std::fs::remove_dir_all(&dir).ok();
}
