use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn ecd(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ecd"))
        .args(args)
        .env("ECD_THREADS", "2")
        .output()
        .expect("ecd runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(args: &[&str]) -> String {
    let (code, stdout, stderr) = ecd(args);
    assert_eq!(code, 0, "{args:?}\n{stderr}");
    stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, n: usize, len: usize, seed: u64) -> PathBuf {
    let d = dir.join(format!("fleet-{n}-{len}-{seed}"));
    ok(&["gen", "--out", s(&d), "--n", &n.to_string(), "--len", &len.to_string(), "--seed", &seed.to_string()]);
    d
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn repeated_runs_write_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen(tmp.path(), 150, 24, 5);
    let out = tmp.path().join("mec");
    let args = ["discover", "--data", s(&data), "--out", s(&out), "--algo", "mec", "--eps-ne", "0.2", "--no-timing"];
    ok(&args);
    let first = files(&out);
    for name in ["communities.csv", "admissions.csv", "flows.csv", "metrics.csv", "metrics.txt", "substations.csv", "config.echo"] {
        assert!(first.contains_key(name), "{name} missing: {:?}", first.keys());
    }
    ok(&args);
    assert_eq!(files(&out), first);

    let again = gen(&tmp.path().join("again"), 150, 24, 5);
    assert_eq!(fs::read(data.join("energy.csv")).unwrap(), fs::read(again.join("energy.csv")).unwrap());
}

#[test]
fn stored_assignment_reproduces_flows_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen(tmp.path(), 120, 24, 2);
    let run = tmp.path().join("run");
    let common = ["--data", s(&data), "--algo", "hec-ldbscan", "--population", "non-positive", "--min", "3", "--no-timing"];
    let mut args = vec!["discover", "--out", s(&run)];
    args.extend(common);
    ok(&args);

    let flows = tmp.path().join("flows");
    let communities = run.join("communities.csv");
    let mut args = vec!["flow", "--out", s(&flows), "--communities", s(&communities)];
    args.extend(common);
    ok(&args);
    assert_eq!(fs::read(flows.join("flows.csv")).unwrap(), fs::read(run.join("flows.csv")).unwrap());

    let report = tmp.path().join("report");
    let stored_flows = run.join("flows.csv");
    let mut args = vec!["metrics", "--out", s(&report), "--communities", s(&communities), "--flows", s(&stored_flows)];
    args.extend(common);
    ok(&args);
    assert_eq!(fs::read(report.join("metrics.csv")).unwrap(), fs::read(run.join("metrics.csv")).unwrap());
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen(tmp.path(), 80, 12, 1);
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "algorithm = \"mec\"\nseed = 7\neps_ne = 0.3\neps_sp = 0.2\n").unwrap();
    let out = tmp.path().join("out");
    ok(&["discover", "--config", s(&cfg), "--data", s(&data), "--out", s(&out), "--seed", "9"]);
    let echo: toml::Table = toml::from_str(&fs::read_to_string(out.join("config.echo")).unwrap()).unwrap();
    assert_eq!(echo["algorithm"].as_str(), Some("mec"));
    assert_eq!(echo["seed"].as_integer(), Some(9));
    assert_eq!(echo["eps_ne"].as_float(), Some(0.3));
    assert_eq!(echo["tabu_len"].as_integer(), Some(10));
    assert_eq!(echo["time_budget"].as_float(), Some(300.0));
    assert!(out.join("admissions.csv").exists());

    fs::write(&cfg, "algorithm = \"mec\"\nepsilon = 0.3\n").unwrap();
    let (code, _, err) = ecd(&["discover", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn exit_codes_follow_the_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen(tmp.path(), 120, 96, 3);
    let out = tmp.path().join("out");
    let base = ["discover", "--data", s(&data), "--out", s(&out)];
    let run = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend(extra);
        ecd(&a)
    };

    let (code, _, err) = run(&["--algo", "mec", "--eps-ne", "1.5"]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("eps"), "{err}");
    let (code, _, err) = run(&["--algo", "hec-kmeans"]);
    assert_eq!(code, 2, "mixed fleet is not homogeneous: {err}");
    let (code, _, err) = ecd(&["discover", "--data", s(&tmp.path().join("missing")), "--out", s(&out)]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("missing"), "{err}");
    let (code, _, _) = ecd(&["discover", "--bogus"]);
    assert_eq!(code, 2);

    let (code, _, err) = run(&["--algo", "sec-tabu", "--population", "non-positive", "--time-budget", "1"]);
    assert_eq!(code, 3, "{err}");
    let consumers = tmp.path().join("consumers");
    ok(&["gen", "--out", s(&consumers), "--n", "30", "--len", "24", "--mode", "consumption-only"]);
    let (code, _, err) = ecd(&["discover", "--data", s(&consumers), "--out", s(&out), "--algo", "sec-twophase"]);
    assert_eq!(code, 3, "{err}");

    let budget = tmp.path().join("budget");
    let (code, _, err) = ecd(&[
        "discover", "--data", s(&data), "--out", s(&budget), "--algo", "sec-tabu", "--population", "nonnegative", "--k", "30",
        "--max-iters", "0",
    ]);
    assert_eq!(code, 4, "{err}");
    let trace = fs::read_to_string(budget.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,K,"), "{trace}");
    assert!(trace.lines().count() >= 2);
}

#[test]
fn sweep_writes_one_plot_file_per_metric() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen(tmp.path(), 150, 48, 4);
    let out = tmp.path().join("sweep");
    let stdout = ok(&[
        "sweep", "--data", s(&data), "--out", s(&out), "--algo", "hec-kmeans", "--population", "positive", "--param", "k",
        "--from", "2", "--to", "8", "--step", "2", "--no-timing",
    ]);
    assert_eq!(stdout.lines().count(), 4, "{stdout}");
    let text = fs::read_to_string(out.join("size_avg.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# fixed:") && lines[0].contains("algorithm=hec-kmeans"), "{}", lines[0]);
    assert!(!lines[0].contains(" k="), "{}", lines[0]);
    assert_eq!(lines[1], "k,size_avg");
    let sizes: Vec<f64> = lines[2..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(sizes.len(), 4);
    assert!(sizes.windows(2).all(|w| w[1] <= w[0]), "{sizes:?}");
    for metric in ["community_count", "load_with", "load_without", "spatial_sse", "net_energy_avg"] {
        assert!(out.join(format!("{metric}.csv")).exists(), "{metric}");
    }
    for k in [2, 4, 6, 8] {
        assert!(out.join("points").join(format!("k-{k}")).join("communities.csv").exists());
    }

    let t = tmp.path().join("t");
    ok(&[
        "sweep", "--data", s(&data), "--out", s(&t), "--algo", "mec", "--param", "t", "--values", "12,24,48", "--no-timing",
    ]);
    let text = fs::read_to_string(t.join("sse_ratio.csv")).unwrap();
    assert_eq!(text.lines().nth(1), Some("window_len,sse_ratio"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn oracle_bounds_the_heuristics() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen(tmp.path(), 9, 4, 6);
    let stdout = ok(&["oracle", "--data", s(&data), "--target", "sse", "--k-min", "2", "--k-max", "4"]);
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "{stdout}");
    for r in rows {
        let ratio: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(ratio >= 1.0 - 1e-12, "{r}");
    }

    let out = tmp.path().join("o");
    let stdout = ok(&[
        "oracle", "--data", s(&data), "--out", s(&out), "--target", "sec", "--population", "nonnegative", "--k-min", "1",
        "--k-max", "3", "--time-budget", "5",
    ]);
    let ratio: f64 = stdout.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(ratio >= 1.0 - 1e-9, "{stdout}");
    assert!(out.join("oracle.csv").exists() && out.join("config.echo").exists());

    let big = gen(tmp.path(), 40, 4, 6);
    let (code, _, err) = ecd(&["oracle", "--data", s(&big), "--target", "sse"]);
    assert_eq!(code, 2, "{err}");
}
