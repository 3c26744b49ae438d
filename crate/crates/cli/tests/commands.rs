use std::path::Path;
use std::process::{Command, Output};

use impactlab::agents::PowerExpoUtility;
use impactlab::market::read_log_str;
use impactlab::numerics::RngStream;
use impactlab::risk::{screen_consistent, synthesize_responses, write_responses, LotteryMenu, LotteryResponse, Scale, PAIRS};

fn impactlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impactlab")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const ROSTER: &str = r#"
[[agents]]
count = 4
strategy = "buy_and_hold"

[[agents]]
count = 4
strategy = "churner"
rate = 0.4
"#;

const CONFIG: &str = "depth_n = 8\nseed = 3\n";

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for out in [&a, &b] {
        let o = impactlab(&["simulate", "--seed", "7", "--out", p(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let log = read_log_str(&text).unwrap();
    assert_eq!(log.trader_count(), 24);
    assert_eq!(log.config.seed, 7);
}

#[test]
fn unknown_strategy_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let roster = dir.path().join("r.toml");
    std::fs::write(&roster, "[[agents]]\ncount = 24\nstrategy = \"oracle\"\n").unwrap();
    let o = impactlab(&["simulate", "--roster", p(&roster), "--out", p(&dir.path().join("x.jsonl"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("oracle"), "{}", stderr(&o));
    // roster and depth disagree
    let o = impactlab(&["simulate", "--roster", p(&roster), "--out", p(&dir.path().join("x.jsonl"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn paired_run_shares_the_noise_path() {
    let dir = tempfile::tempdir().unwrap();
    let (config, roster) = (dir.path().join("c.toml"), dir.path().join("r.toml"));
    std::fs::write(&config, CONFIG).unwrap();
    std::fs::write(&roster, ROSTER).unwrap();
    let out = dir.path().join("run.jsonl");
    let o = impactlab(&["simulate", "--config", p(&config), "--roster", p(&roster), "--pair", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let read = |name: &str| read_log_str(&std::fs::read_to_string(dir.path().join(name)).unwrap()).unwrap();
    let (one, two) = (read("run.1.jsonl"), read("run.2.jsonl"));
    assert_eq!(one.etas(), two.etas());
    assert_eq!(one.bare_prices, two.bare_prices);
    let actions = |l: &impactlab::SessionLog| -> Vec<_> { l.rounds.iter().map(|r| r.per_trader[7].action).collect() };
    assert_ne!(actions(&one), actions(&two));
}

fn three_logs(dir: &Path) -> Vec<String> {
    let (config, roster) = (dir.join("c.toml"), dir.join("r.toml"));
    std::fs::write(&config, CONFIG).unwrap();
    std::fs::write(&roster, ROSTER).unwrap();
    (0..3)
        .map(|k| {
            let out = dir.join("logs").join(format!("s{k}.jsonl"));
            let seed = k.to_string();
            let o = impactlab(&["simulate", "--config", p(&config), "--roster", p(&roster), "--seed", &seed, "--out", p(&out)]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            p(&out).to_string()
        })
        .collect()
}

#[test]
fn analyze_writes_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    three_logs(dir.path());
    let logs = dir.path().join("logs");
    let mut reports = Vec::new();
    for name in ["r1", "r2"] {
        let out = dir.path().join(name);
        let o = impactlab(&["analyze", p(&logs), "--out", p(&out), "--null-replicates", "50", "--seed", "4"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        reports.push(out);
    }
    for f in ["report.json", "traders.csv", "sync.csv", "plot_skewness.csv", "clusters.csv", "forecast_fits.csv", "tail_fits.csv"] {
        let a = std::fs::read(reports[0].join(f)).unwrap();
        assert_eq!(a, std::fs::read(reports[1].join(f)).unwrap(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(reports[0].join("report.json")).unwrap()).unwrap();
    assert_eq!(report["sessions"].as_array().unwrap().len(), 3);
}

#[test]
fn analyze_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&impactlab(&["analyze", p(&empty), "--out", p(&out)])), 2);
    assert_eq!(code(&impactlab(&["analyze", "--out", p(&out)])), 2);

    let logs = three_logs(dir.path());
    let text = std::fs::read_to_string(&logs[0]).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "{\"record\":\"round\",\"t\":";
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let o = impactlab(&["analyze", p(&bad), "--out", p(&out)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let future = dir.path().join("future.jsonl");
    std::fs::write(&future, text.replacen("\"schema_version\":1", "\"schema_version\":2", 1)).unwrap();
    let o = impactlab(&["analyze", p(&future), "--out", p(&out)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("schema version"), "{}", stderr(&o));
}

fn write_fixture(path: &Path, alpha: f64, r: f64, mu: f64, subjects: usize, seed: u64) -> Vec<LotteryResponse> {
    let menu = LotteryMenu::default();
    let u = PowerExpoUtility::new(alpha, r).unwrap();
    let responses = synthesize_responses(&menu, &u, mu, subjects, &mut RngStream::new(seed, 0)).unwrap();
    let mut buf = Vec::new();
    write_responses(&mut buf, &responses).unwrap();
    std::fs::write(path, buf).unwrap();
    responses
}

#[test]
fn fit_risk_recovers_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("resp.csv");
    write_fixture(&csv, 0.106, 0.345, 0.114, 200, 21);
    let out = dir.path().join("fit.json");
    let o = impactlab(&["fit-risk", p(&csv), "--replicates", "0", "--keep-inconsistent", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("N = 200 subjects"), "{table}");
    let fit: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let e = &fit["estimate"];
    let within = |k: &str, lo: f64, hi: f64| {
        let v = e[k].as_f64().unwrap();
        assert!((lo..=hi).contains(&v), "{k} = {v}");
    };
    within("alpha_u", 0.085, 0.130);
    within("r_u", 0.263, 0.443);
    within("mu", 0.101, 0.133);
}

#[test]
fn fit_risk_subject_counts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("few.csv");
    write_fixture(&csv, 0.106, 0.345, 0.114, 3, 1);
    let o = impactlab(&["fit-risk", p(&csv), "--replicates", "0"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    // one subject switches back and forth on both scales
    let csv = dir.path().join("mixed.csv");
    let mut responses = write_fixture(&csv, 0.106, 0.345, 0.02, 20, 5);
    let mut zigzag = [false; PAIRS];
    for (k, c) in zigzag.iter_mut().enumerate() {
        *c = k % 2 == 1;
    }
    responses.retain(|r| r.subject_id != "s0000");
    responses.push(LotteryResponse { subject_id: "s0000".into(), scale: Scale::X2, choices: zigzag });
    responses.push(LotteryResponse { subject_id: "s0000".into(), scale: Scale::X10, choices: zigzag });
    let mut buf = Vec::new();
    write_responses(&mut buf, &responses).unwrap();
    std::fs::write(&csv, buf).unwrap();
    let kept = impactlab(&["fit-risk", p(&csv), "--replicates", "0", "--keep-inconsistent"]);
    let screened = impactlab(&["fit-risk", p(&csv), "--replicates", "0"]);
    assert!(String::from_utf8_lossy(&kept.stdout).contains("N = 20 subjects"), "{}", stderr(&kept));
    let (consistent, dropped) = screen_consistent(&responses);
    assert!(dropped.contains(&"s0000".to_string()));
    let want = format!("N = {} subjects", consistent.len() / 2);
    assert!(String::from_utf8_lossy(&screened.stdout).contains(&want), "{}", stderr(&screened));
}

#[test]
fn fit_risk_rejects_a_corrupt_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "subject_id,scale,c1,c2,c3,c4,c5,c6,c7,c8,c9,c10\na,X2,0,0,0,0,7,1,1,1,1,1\n").unwrap();
    assert_eq!(code(&impactlab(&["fit-risk", p(&csv)])), 3);
}

#[test]
fn sweep_writes_rows_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sweep.toml");
    std::fs::write(
        &spec,
        r#"
s = [0.05, 0.1]
depth_n = [6]
seeds = [1, 2]
replications = 2

[base]
fixed_end_round = 19

[[mixes]]
name = "hold"
agents = [{ fraction = 1.0, strategy = "buy_and_hold" }]
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = impactlab(&["sweep", "--config", p(&spec), "--out", p(&out), "--logs", "--threads", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
    assert!(out.join("logs/s=0.05_n=6_mix=hold_seed=2/rep=0001.jsonl").exists());

    let capped = std::fs::read_to_string(&spec).unwrap().replace("replications = 2", "replications = 2\nmax_runs = 4");
    std::fs::write(&spec, capped).unwrap();
    assert_eq!(code(&impactlab(&["sweep", "--config", p(&spec), "--out", p(&out)])), 2);
}

#[test]
fn help_documents_the_flags() {
    let o = impactlab(&["simulate", "--help"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for flag in ["--config", "--roster", "--seed", "--pair", "--out"] {
        assert!(text.contains(flag), "{flag}");
    }
    let text = String::from_utf8(impactlab(&["fit-risk", "--help"]).stdout).unwrap();
    assert!(text.contains("--replicates") && text.contains("--keep-inconsistent"));
    let text = String::from_utf8(impactlab(&["analyze", "--help"]).stdout).unwrap();
    assert!(text.contains("--null-replicates"));
    assert_eq!(code(&impactlab(&["simulate", "--bogus"])), 2);
}
