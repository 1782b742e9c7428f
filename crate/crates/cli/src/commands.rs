//! `run`, `compare` and `delays`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use asyncdgd_core::analysis::{
    central_solve, envelope_check, fixed_point, fixed_point_quadratic_direct, gap_report, separable_minimum,
    CentralSolution, GapCase,
};
use asyncdgd_core::asynchrony::{delay_metrics, DelayMetrics, Schedule};
use asyncdgd_core::engine::{run_concurrent, simulate, RunTrace, RuntimeOptions, TraceOptions};
use asyncdgd_core::operators::{contraction_factor, AlgorithmKind, AlgorithmSpec};
use asyncdgd_core::problem::{BlockVector, SmoothKind};

use crate::config::{ExperimentConfig, Start};

const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_ITERS: usize = 200_000;
const CENTRAL_TOL: f64 = 1e-10;
const CENTRAL_ITERS: usize = 1_000_000;
/// Resampling bin of runtime comparisons.
const TIME_BIN_NS: u64 = 10_000_000;

/// One executed configuration.
pub struct Execution {
    pub config: ExperimentConfig,
    pub spec: AlgorithmSpec,
    pub trace: RunTrace,
    pub x_star: Option<BlockVector>,
    pub central: CentralSolution,
    pub notes: Vec<String>,
}

impl Execution {
    fn watermark(&self) -> Option<String> {
        self.spec.step_override().then(|| {
            format!(
                "stepsize_override=true alpha={} max_stepsize={}",
                self.spec.alpha(),
                self.spec.max_stepsize()
            )
        })
    }
}

fn compute_fixed_point(spec: &AlgorithmSpec, notes: &mut Vec<String>) -> Result<Option<BlockVector>> {
    let quadratic = spec.problem().smooth_oracles().iter().all(|f| matches!(f.kind(), SmoothKind::Quadratic { .. }));
    if spec.kind() == AlgorithmKind::ProxDgd && spec.problem().all_h_zero() && quadratic {
        let r = fixed_point_quadratic_direct(spec)?;
        if r.residual <= 1e-9 {
            return Ok(Some(r.x_star));
        }
    }
    let r = fixed_point(spec, FIXED_POINT_TOL, FIXED_POINT_ITERS)?;
    if r.converged && r.residual <= 1e-9 {
        Ok(Some(r.x_star))
    } else {
        notes.push(format!(
            "fixed point not found within {FIXED_POINT_ITERS} synchronous iterations (residual {}); distances omitted",
            r.residual
        ));
        Ok(None)
    }
}

pub fn execute(config: &ExperimentConfig, allow_override: bool) -> Result<Execution> {
    let (spec, graph) = config.build_spec(allow_override)?;
    let mut notes = Vec::new();
    let x_star = compute_fixed_point(&spec, &mut notes)?;
    let x0 = match config.algorithm.start {
        Start::FixedPoint => x_star
            .clone()
            .ok_or_else(|| anyhow!("algorithm.start: fixed_point requested but no fixed point was found"))?,
        _ => config.initial_point(spec.n(), spec.d()),
    };
    let trace_opts = TraceOptions { stride: config.output.stride, x_star: x_star.clone() };
    let trace = if config.schedule.is_some() {
        let schedule = config.build_schedule(&graph)?;
        simulate(&spec, &schedule, &x0, &trace_opts)?
    } else {
        let rt = config.runtime.as_ref().expect("validated");
        let opts = RuntimeOptions {
            iterations: rt.iterations,
            duration: rt.duration_ms.map(Duration::from_millis),
            threshold: rt.threshold,
            trace: trace_opts,
            panic_after: None,
        };
        run_concurrent(&spec, &x0, &opts)?
    };
    if let Some(f) = &trace.failure {
        notes.push(format!("worker failure: {f}"));
    }
    let central = central_solve(spec.problem(), CENTRAL_TOL, CENTRAL_ITERS)?;
    if !central.converged {
        notes.push(format!("central solver stopped at residual {}", central.residual));
    }
    Ok(Execution { config: config.clone(), spec, trace, x_star, central, notes })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Trace CSV: one row per recorded iterate.
pub fn trace_csv(exec: &Execution) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let timestamps = exec.trace.timestamps_ns.as_ref();
    let mut header = vec!["k", "active_node", "distance_to_fixed_point", "F_value", "F_mean", "consensus_error"];
    if timestamps.is_some() {
        header.push("timestamp_ns");
    }
    let mark = exec.watermark().is_some();
    if mark {
        header.push("stepsize_override");
    }
    w.write_record(&header)?;
    for row in &exec.trace.metrics {
        let mut rec = vec![
            row.k.to_string(),
            row.active_node.map_or(String::new(), |i| i.to_string()),
            fmt_opt(row.distance),
            row.f_value.to_string(),
            row.f_mean.to_string(),
            row.consensus_error.to_string(),
        ];
        if let Some(ts) = timestamps {
            rec.push(if row.k == 0 { "0".into() } else { ts[row.k - 1].to_string() });
        }
        if mark {
            rec.push("true".into());
        }
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn gap_cases(exec: &Execution) -> Vec<GapCase> {
    let p = exec.spec.problem();
    match exec.spec.kind() {
        AlgorithmKind::DgdAtc => vec![GapCase::Atc],
        AlgorithmKind::ProxDgd => {
            let mut cases = vec![GapCase::General];
            let per_node: Option<Vec<f64>> = (0..p.n())
                .map(|i| Some(p.smooth(i).lipschitz_g()? + p.prox(i).lipschitz_g()?))
                .collect();
            if let Some(g) = per_node {
                cases.push(GapCase::Lipschitz { g: g.iter().map(|v| v * v).sum::<f64>().sqrt() });
            }
            if p.identical_h() {
                cases.push(GapCase::IdenticalH);
            }
            cases
        }
    }
}

pub fn gap_text(exec: &Execution) -> Result<Option<String>> {
    let Some(xs) = &exec.x_star else { return Ok(None) };
    let p = exec.spec.problem();
    let min_f = separable_minimum(p, CENTRAL_TOL, CENTRAL_ITERS)?;
    let mut out = String::new();
    for case in gap_cases(exec) {
        let r = gap_report(p, exec.spec.mixing(), exec.spec.alpha(), xs, exec.central.f_opt, min_f, case)?;
        out.push_str(&r.to_text());
        out.push('\n');
    }
    Ok(Some(out))
}

pub fn envelope_text(exec: &Execution) -> Result<Option<String>> {
    let (Some(_), Some(schedule)) = (&exec.x_star, &exec.trace.schedule) else { return Ok(None) };
    let rho = contraction_factor(&exec.spec);
    if !rho.valid || rho.factor >= 1.0 {
        return Ok(None);
    }
    let metrics = delay_metrics(schedule);
    Ok(Some(envelope_check(&exec.trace, rho.factor, &metrics)?.to_text()))
}

pub fn summary_text(exec: &Execution) -> String {
    let t = &exec.trace;
    let last = t.metrics.last().expect("trace has the initial row");
    let rho = contraction_factor(&exec.spec);
    let mut s = String::new();
    let _ = writeln!(s, "algorithm={}", exec.spec.kind());
    let _ = writeln!(s, "mode={}", if exec.config.runtime.is_some() { "runtime" } else { "simulator" });
    let _ = writeln!(s, "nodes={}", exec.spec.n());
    let _ = writeln!(s, "dim={}", exec.spec.d());
    let _ = writeln!(s, "alpha={}", exec.spec.alpha());
    let _ = writeln!(s, "max_stepsize={}", exec.spec.max_stepsize());
    let _ = writeln!(s, "stepsize_override={}", exec.spec.step_override());
    let _ = writeln!(s, "beta={}", exec.spec.mixing().beta());
    let _ = writeln!(s, "contraction_factor={}", rho.factor);
    let _ = writeln!(s, "contraction_factor_valid={}", rho.valid);
    let _ = writeln!(s, "iterations={}", t.iterations());
    let _ = writeln!(s, "final_distance_to_fixed_point={}", fmt_opt(t.distances.as_ref().and_then(|d| d.last().copied())));
    let _ = writeln!(s, "final_F_value={}", last.f_value);
    let _ = writeln!(s, "final_F_mean={}", last.f_mean);
    let _ = writeln!(s, "final_consensus_error={}", last.consensus_error);
    let _ = writeln!(s, "F_opt={}", exec.central.f_opt);
    let _ = writeln!(s, "central_converged={}", exec.central.converged);
    if let Some(schedule) = &t.schedule {
        let m = delay_metrics(schedule);
        let _ = writeln!(s, "observed_B={}", m.observed_b);
        let _ = writeln!(s, "observed_D={}", m.observed_d);
        let _ = writeln!(s, "epochs={}", m.epochs.len() - 1);
    }
    for n in &exec.notes {
        let _ = writeln!(s, "note={n}");
    }
    s
}

fn write_file(dir: &Path, name: &str, body: &str, watermark: Option<&str>) -> Result<PathBuf> {
    let path = dir.join(name);
    let text = match watermark {
        Some(w) => format!("# {w}\n{body}"),
        None => body.to_string(),
    };
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Writes the trace, schedule, reports and resolved config of one run; returns the summary.
pub fn cmd_run(config: &ExperimentConfig, allow_override: bool, out: &Path) -> Result<String> {
    let exec = execute(config, allow_override)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mark = exec.watermark();
    let mark = mark.as_deref();
    // the CSV keeps its header first; the watermark is a column there
    write_file(out, "trace.csv", &trace_csv(&exec)?, None)?;
    if let Some(s) = &exec.trace.schedule {
        write_file(out, "schedule.txt", &s.to_text(), mark)?;
    }
    if let Some(g) = gap_text(&exec)? {
        write_file(out, "gap_report.txt", &g, mark)?;
    }
    if let Some(e) = envelope_text(&exec)? {
        write_file(out, "envelope_report.txt", &e, mark)?;
    }
    write_file(out, "config.toml", &exec.config.to_toml(), mark)?;
    let summary = summary_text(&exec);
    write_file(out, "report.txt", &summary, mark)?;
    Ok(summary)
}

/// `F(x_bar) - F*` curves of several configs on one problem, merged into one CSV.
pub fn cmd_compare(configs: &[(String, ExperimentConfig)], allow_override: bool, out: &Path) -> Result<String> {
    let Some((_, first)) = configs.first() else { bail!("compare needs at least one config") };
    for (label, cfg) in &configs[1..] {
        if cfg.problem != first.problem {
            bail!("config '{label}': problem section differs from the first config; compare needs one problem instance");
        }
    }
    let runtime = first.runtime.is_some();
    if configs.iter().any(|(_, c)| c.runtime.is_some() != runtime) {
        bail!("compare: mixing simulator and runtime configs is not supported");
    }
    let runs = configs
        .iter()
        .map(|(label, cfg)| execute(cfg, allow_override).with_context(|| format!("config '{label}'")))
        .collect::<Result<Vec<_>>>()?;
    let f_opt = runs.iter().map(|r| r.central.f_opt).fold(f64::INFINITY, f64::min);
    let labels: Vec<&str> = configs.iter().map(|(l, _)| l.as_str()).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let axis = if runtime { "t_ms" } else { "k" };
    let mut header = vec![axis.to_string()];
    header.extend(labels.iter().map(|l| l.to_string()));
    if runs.iter().any(|r| r.spec.step_override()) {
        header.push("stepsize_override".into());
    }
    let mark = header.len() > labels.len() + 1;
    w.write_record(&header)?;
    if runtime {
        // each curve holds its last value within every 10 ms bin
        let series: Vec<Vec<(u64, f64)>> = runs
            .iter()
            .map(|r| {
                let ts = r.trace.timestamps_ns.as_ref().expect("runtime traces carry timestamps");
                r.trace
                    .metrics
                    .iter()
                    .map(|m| (if m.k == 0 { 0 } else { ts[m.k - 1] }, m.f_mean - f_opt))
                    .collect()
            })
            .collect();
        let end = series.iter().filter_map(|s| s.last().map(|p| p.0)).max().unwrap_or(0);
        let bins = end / TIME_BIN_NS + 1;
        for b in 0..bins {
            let edge = (b + 1) * TIME_BIN_NS;
            let mut rec = vec![((b + 1) * (TIME_BIN_NS / 1_000_000)).to_string()];
            for s in &series {
                let idx = s.partition_point(|p| p.0 < edge);
                rec.push(if idx == 0 { String::new() } else { s[idx - 1].1.to_string() });
            }
            if mark {
                rec.push("true".into());
            }
            w.write_record(&rec)?;
        }
    } else {
        let ks: BTreeSet<usize> = runs.iter().flat_map(|r| r.trace.metrics.iter().map(|m| m.k)).collect();
        for k in ks {
            let mut rec = vec![k.to_string()];
            for r in &runs {
                let m = r.trace.metrics.binary_search_by_key(&k, |m| m.k).ok().map(|i| &r.trace.metrics[i]);
                rec.push(m.map_or(String::new(), |m| (m.f_mean - f_opt).to_string()));
            }
            if mark {
                rec.push("true".into());
            }
            w.write_record(&rec)?;
        }
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_file(out, "compare.csv", &String::from_utf8(w.into_inner()?)?, None)?;
    let mut summary = format!("F_opt={f_opt}\n");
    for (label, r) in labels.iter().zip(&runs) {
        let last = r.trace.metrics.last().expect("initial row");
        let _ = writeln!(summary, "{label}.algorithm={}", r.spec.kind());
        let _ = writeln!(summary, "{label}.alpha={}", r.spec.alpha());
        let _ = writeln!(summary, "{label}.stepsize_override={}", r.spec.step_override());
        let _ = writeln!(summary, "{label}.iterations={}", r.trace.iterations());
        let _ = writeln!(summary, "{label}.final_gap={}", last.f_mean - f_opt);
    }
    let any_override = runs.iter().find_map(|r| r.watermark());
    write_file(out, "compare_summary.txt", &summary, any_override.as_deref())?;
    Ok(summary)
}

/// CSV text with an optional trailing `stepsize_override` column.
fn csv_table(header: &[&str], rows: impl Iterator<Item = Vec<String>>, mark: bool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head: Vec<&str> = header.to_vec();
    if mark {
        head.push("stepsize_override");
    }
    w.write_record(&head)?;
    for mut row in rows {
        if mark {
            row.push("true".into());
        }
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn histogram_csv(metrics: &DelayMetrics, bucket: u64, mark: bool) -> Result<String> {
    let rows = (0..=metrics.max_delay()).step_by(bucket as usize).map(|start| {
        let end = start + bucket - 1;
        let count: u64 = metrics.histogram.range(start..=end).map(|(_, c)| c).sum();
        vec![start.to_string(), end.to_string(), count.to_string()]
    });
    csv_table(&["bucket_start", "bucket_end", "count"], rows, mark)
}

/// Realized `m^k` next to the worst-case floor `floor(k/(B+D+1))`, the
/// best-case line `(k-(B+D+1))/n` and the upper line `floor(k/n)`, with the
/// observed `(B, D)`.
pub fn adaptivity_csv(metrics: &DelayMetrics, n: usize, mark: bool) -> Result<String> {
    let period = metrics.observed_b + metrics.observed_d + 1;
    let rows = metrics.m.iter().enumerate().map(|(k, &m)| {
        let best = ((k as f64 - period as f64) / n as f64).max(0.0);
        vec![k.to_string(), m.to_string(), (k / period).to_string(), best.to_string(), (k / n).to_string()]
    });
    csv_table(&["k", "m_realized", "worst_case_floor", "best_case_line", "upper_line"], rows, mark)
}

pub fn delay_summary(metrics: &DelayMetrics) -> String {
    format!(
        "reads={}\nmax_delay={}\np95_delay={}\nmean_delay={}\nB_min={}\nD_min={}\nevery_node_updates={}\nepochs={}\n",
        metrics.reads(),
        metrics.max_delay(),
        metrics.delay_quantile(0.95),
        metrics.mean_delay(),
        metrics.observed_b,
        metrics.observed_d,
        metrics.holds,
        metrics.epochs.len() - 1
    )
}

/// Delay histogram, summary, epoch table and `m^k` series of a schedule.
pub fn cmd_delays(schedule: &Schedule, bucket: u64, out: &Path, watermark: Option<&str>) -> Result<String> {
    if bucket == 0 {
        bail!("--bucket: must be positive");
    }
    let metrics = delay_metrics(schedule);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mark = watermark.is_some();
    write_file(out, "delay_histogram.csv", &histogram_csv(&metrics, bucket, mark)?, None)?;
    let epochs = metrics.epochs.iter().enumerate().map(|(m, k)| vec![m.to_string(), k.to_string()]);
    write_file(out, "epochs.csv", &csv_table(&["m", "k_m"], epochs, mark)?, None)?;
    write_file(out, "adaptivity.csv", &adaptivity_csv(&metrics, schedule.n(), mark)?, None)?;
    let summary = delay_summary(&metrics);
    write_file(out, "delay_summary.txt", &summary, watermark)?;
    Ok(summary)
}

/// Schedule of a config: generated for simulator configs, recorded for runtime configs.
pub fn schedule_of(config: &ExperimentConfig, allow_override: bool) -> Result<(Schedule, Option<String>)> {
    if config.schedule.is_some() {
        let (spec, graph) = config.build_spec(allow_override)?;
        let mark = spec.step_override().then(|| format!("stepsize_override=true alpha={}", spec.alpha()));
        return Ok((config.build_schedule(&graph)?, mark));
    }
    let exec = execute(config, allow_override)?;
    let schedule = exec.trace.schedule.clone().ok_or_else(|| anyhow!("runtime produced no schedule"))?;
    Ok((schedule, exec.watermark()))
}
