use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_asyncdgd");

fn asyncdgd(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const QUADRATIC: &str = r#"
[problem]
loss = "quadratic"
nodes = 5
dim = 3
samples = 6
seed = 11

[graph]
kind = "random"
edges = 6
seed = 4

[algorithm]
kind = "prox_dgd"
alpha_fraction = 0.9
start = "random"
start_seed = 5

[schedule]
regime = "partial"
horizon = 600
b = 8
d = 5
seed = 2

[output]
stride = 10
"#;

const LOGISTIC: &str = r#"
[problem]
loss = "logistic"
nodes = 8
dim = 4
samples = 20
seed = 1
lambda1 = 0.01
lambda2 = 0.05

[graph]
kind = "random"
edges = 11
seed = 1

[algorithm]
kind = "prox_dgd"
alpha_rule = "min_self_weight_over_max_l"

[schedule]
regime = "partial"
horizon = 3000
b = 16
d = 8
seed = 1

[output]
stride = 50
"#;

fn run_ok(args: &[&str]) -> String {
    let out = asyncdgd(args);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn report_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("missing {key}"))
        .to_string()
}

#[test]
fn run_writes_all_artifacts_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "q.toml", QUADRATIC);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    for name in ["trace.csv", "schedule.txt", "gap_report.txt", "envelope_report.txt", "report.txt", "config.toml"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    let trace = read(&a, "trace.csv");
    assert!(trace.starts_with("k,active_node,distance_to_fixed_point,F_value,F_mean,consensus_error\n"));
    assert_eq!(trace.lines().count(), 1 + 61);
    let env = read(&a, "envelope_report.txt");
    assert_eq!(report_value(&env, "period_envelope_holds"), "true");
    assert_eq!(report_value(&env, "adaptive_envelope_holds"), "true");
    assert!(read(&a, "gap_report.txt").contains("F_x_star_le_F_opt=true"));
}

#[test]
fn seed_flag_changes_the_instance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "q.toml", QUADRATIC);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(), "--seed", "1"]);
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "2"]);
    assert_ne!(read(&a, "trace.csv"), read(&b, "trace.csv"));
    assert!(read(&a, "config.toml").contains("seed = 1"));
}

#[test]
fn fixed_point_start_gives_flat_zero_distance() {
    let tmp = tempfile::tempdir().unwrap();
    let body = QUADRATIC.replace("start = \"random\"", "start = \"fixed_point\"");
    let cfg = write_config(tmp.path(), "q.toml", &body);
    let out = tmp.path().join("o");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let trace = read(&out, "trace.csv");
    for line in trace.lines().skip(1) {
        let dist: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(dist <= 1e-9, "{line}");
    }
}

#[test]
fn oversized_step_is_refused_without_override_and_marked_with_it() {
    let tmp = tempfile::tempdir().unwrap();
    let body = QUADRATIC.replace("alpha_fraction = 0.9", "alpha = 50.0");
    let cfg = write_config(tmp.path(), "q.toml", &body);
    let out = tmp.path().join("o");
    let refused = asyncdgd(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("algorithm"));
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--override-stepsize"]);
    assert!(read(&out, "trace.csv").lines().next().unwrap().ends_with(",stepsize_override"));
    for entry in fs::read_dir(&out).unwrap() {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        assert!(text.contains("stepsize_override"));
    }
}

#[test]
fn config_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let body = QUADRATIC.replace("horizon = 600\n", "");
    let cfg = write_config(tmp.path(), "q.toml", &body);
    let out = asyncdgd(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("schedule.horizon"));
}

#[test]
fn logistic_elastic_net_run_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "l.toml", LOGISTIC);
    let out = tmp.path().join("o");
    let summary = run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(report_value(&summary, "stepsize_override"), "false");
    assert_eq!(report_value(&summary, "central_converged"), "true");
    assert!(read(&out, "gap_report.txt").contains("gap_case=IdenticalH"));
}

#[test]
fn runtime_run_records_timestamps_and_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let body = LOGISTIC
        .replace("[schedule]\nregime = \"partial\"\nhorizon = 3000\nb = 16\nd = 8\nseed = 1\n", "[runtime]\niterations = 1500\n");
    let cfg = write_config(tmp.path(), "r.toml", &body);
    let out = tmp.path().join("o");
    let summary = run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(report_value(&summary, "mode"), "runtime");
    assert!(read(&out, "trace.csv").lines().next().unwrap().ends_with("timestamp_ns"));
    let delays = tmp.path().join("d");
    let text = run_ok(&[
        "delays",
        "--schedule",
        out.join("schedule.txt").to_str().unwrap(),
        "--out",
        delays.to_str().unwrap(),
    ]);
    let max: u64 = report_value(&text, "max_delay").parse().unwrap();
    let p95: u64 = report_value(&text, "p95_delay").parse().unwrap();
    assert!(p95 <= max);
    // realized epochs sit between the worst-case floor and the upper line
    for line in read(&delays, "adaptivity.csv").lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[2] <= v[1] && v[1] <= v[4], "{line}");
    }
}

#[test]
fn delays_of_worst_case_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let body = QUADRATIC.replace("regime = \"partial\"", "regime = \"worst\"").replace("b = 8", "b = 4");
    let cfg = write_config(tmp.path(), "w.toml", &body);
    let out = tmp.path().join("d");
    let summary = run_ok(&["delays", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--bucket", "1"]);
    // with B = n - 1 every read is delayed by exactly D
    assert_eq!(report_value(&summary, "max_delay"), "5");
    let hist = read(&out, "delay_histogram.csv");
    let nonzero: Vec<&str> = hist.lines().skip(1).filter(|l| !l.ends_with(",0")).collect();
    assert_eq!(nonzero.len(), 1);
    assert!(nonzero[0].starts_with("5,5,"), "{hist}");
    for line in read(&out, "adaptivity.csv").lines().skip(1) {
        let v: Vec<&str> = line.split(',').collect();
        assert_eq!(v[1], v[2], "{line}");
    }
}

#[test]
fn compare_merges_curves_and_rejects_mismatched_problems() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(tmp.path(), "async.toml", LOGISTIC);
    let sync = LOGISTIC.replace("regime = \"partial\"", "regime = \"synchronous\"");
    let b = write_config(tmp.path(), "sync.toml", &sync);
    let out = tmp.path().join("c");
    run_ok(&["compare", "--config", a.to_str().unwrap(), b.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let csv = read(&out, "compare.csv");
    assert!(csv.starts_with("k,async,sync\n"));
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(last[0], 3000.0);
    // asynchronous run ends within 10x of the synchronous one
    assert!(last[1] <= 10.0 * last[2].max(1e-12), "{last:?}");
    let other = write_config(tmp.path(), "other.toml", &LOGISTIC.replace("seed = 1\nlambda1", "seed = 2\nlambda1"));
    let bad = asyncdgd(&["compare", "--config", a.to_str().unwrap(), other.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("problem section differs"));
}

#[test]
fn single_config_compare_is_one_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(tmp.path(), "solo.toml", QUADRATIC);
    let out = tmp.path().join("c");
    run_ok(&["compare", "--config", a.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(read(&out, "compare.csv").starts_with("k,solo\n"));
}
