//! The four subcommands. Each returns its in-memory result so tests can
//! assert on it without re-reading files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};
use taskalloc::channel::{composite_gains, sample_channels_slot};
use taskalloc::oracle_baselines::{self, OracleError, OracleResult};
use taskalloc::{load_scenario_file, scenario_gains, solver_accel, solver_parallel};
use taskalloc::{GainMatrix, Method, Scenario, Solution, TraceRow};

use crate::channels::{read_channel_csv, write_channel_csv};
use crate::fmt::{f17, num, nums};
use crate::plot::{first_below, render_svg, Series};
use crate::report::{self, RunSummary};
use crate::trace::{read_trace, TraceRecord, TraceWriter};
use crate::CliError;

pub const ALL_METHODS: [Method; 4] = [Method::Parallel, Method::Accelerated, Method::EqualPower, Method::SumRate];

pub const SUMRATE_MAX_ITERS: usize = 5000;
pub const SUMRATE_TOL: f64 = 1e-10;

/// Relative slack allowed over the oracle optimum.
pub const ORACLE_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct Globals {
    pub seed: Option<u64>,
    pub out: PathBuf,
    /// Worker count in effect, recorded in manifests only.
    pub threads: usize,
}

pub fn parse_method(s: &str) -> Result<Method, CliError> {
    ALL_METHODS
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| CliError::Usage(format!("unknown method {s:?}, expected one of parallel, accelerated, equal-power, sum-rate")))
}

pub fn load(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let s = load_scenario_file(path).with_context(|| format!("loading scenario {}", path.display()))?;
    Ok(match seed {
        Some(seed) => s.with_seed(seed),
        None => s,
    })
}

/// Runs one method; `observer` sees every solver iteration.
pub fn run_method(s: &Scenario, g: &GainMatrix, method: Method, observer: &mut dyn FnMut(&TraceRow)) -> Result<Solution> {
    Ok(match method {
        Method::Parallel => solver_parallel::run_with(s, g, observer)?,
        Method::Accelerated => solver_accel::run_with(s, g, observer)?,
        Method::EqualPower => {
            let p = oracle_baselines::equal_power(s);
            oracle_baselines::baseline_solution(s, g, method, p, 0, true)
        }
        Method::SumRate => {
            let r = oracle_baselines::sumrate_baseline(s, g, SUMRATE_MAX_ITERS, SUMRATE_TOL);
            oracle_baselines::baseline_solution(s, g, method, r.p, r.iterations, r.converged)
        }
    })
}

fn is_iterative(m: Method) -> bool {
    matches!(m, Method::Parallel | Method::Accelerated)
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

/// Writes one CSV per fading slot; returns the file names.
pub fn dump_channels(s: &Scenario, dir: &Path) -> Result<Vec<String>> {
    let n = &s.network;
    let mut names = Vec::new();
    for slot in 0..n.slots {
        let ch = sample_channels_slot(s.seed, slot, n.num_antennas, &n.path_loss)?;
        let name = if n.slots == 1 { "channels.csv".to_string() } else { format!("channels-slot{slot}.csv") };
        write_channel_csv(&dir.join(&name), &ch, slot)?;
        names.push(name);
    }
    Ok(names)
}

/// Gains from a single-slot channel dump; N, K and seed must match.
pub fn gains_from_channels(s: &Scenario, path: &Path) -> Result<GainMatrix> {
    let (meta, ch) = read_channel_csv(path, &s.network.path_loss)?;
    if meta.num_antennas != s.network.num_antennas {
        return Err(anyhow!("channel file has N={} but the scenario has N={}", meta.num_antennas, s.network.num_antennas));
    }
    if s.network.slots != 1 {
        return Err(anyhow!("channel files can only replace single-slot scenarios (slots = {})", s.network.slots));
    }
    Ok(composite_gains(&ch))
}

pub struct SolveOutput {
    pub scenario: Scenario,
    pub gains: GainMatrix,
    pub solution: Solution,
    pub wall_time_ns: u64,
    pub files: Vec<String>,
}

pub fn cmd_solve(g: &Globals, scenario_path: &Path, method: Method, channels: Option<&Path>) -> Result<SolveOutput, CliError> {
    let s = load(scenario_path, g.seed)?;
    create_out(&g.out)?;
    let gains = match channels {
        Some(p) => gains_from_channels(&s, p)?,
        None => scenario_gains(&s).map_err(anyhow::Error::from)?,
    };
    let mut files = dump_channels(&s, &g.out)?;

    let start = Instant::now();
    let (solution, trace_name) = if is_iterative(method) {
        let mut tw = TraceWriter::create(&g.out.join("trace.csv"))?;
        let mut write_err = None;
        let sol = run_method(&s, &gains, method, &mut |row| {
            if write_err.is_none() {
                if let Err(e) = tw.push(row) {
                    write_err = Some(e);
                }
            }
        });
        let flushed = tw.finish();
        let sol = sol?;
        if let Some(e) = write_err {
            return Err(e.into());
        }
        flushed?;
        (sol, Some("trace.csv"))
    } else {
        (run_method(&s, &gains, method, &mut |_| {})?, None)
    };
    let wall = start.elapsed().as_nanos() as u64;

    if let Some(t) = trace_name {
        files.push(t.to_string());
    }
    report::write_json(&g.out.join("result.json"), &report::result_json(&s, &gains, &solution, trace_name))?;
    files.push("result.json".into());
    files.push("report.md".into());
    files.push("manifest.json".into());
    let runs = [RunSummary { solution: &solution, tasks: report::task_summaries(&s, &gains, &solution), wall_time_ns: wall }];
    std::fs::write(g.out.join("report.md"), report::report_md(&s, &runs, &files)).context("writing report.md")?;
    let manifest = report::manifest_json("solve", g.threads, &files, &[(method.as_str().to_string(), wall)]);
    report::write_json(&g.out.join("manifest.json"), &manifest)?;

    Ok(SolveOutput { scenario: s, gains, solution, wall_time_ns: wall, files })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    NumUsers,
    TotalPower,
    Seed,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::NumUsers => "num_users",
            Axis::TotalPower => "total_power",
            Axis::Seed => "seed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: Axis,
    /// K, P in dBm, or the seed, as given on the command line.
    pub value: f64,
    pub method: Method,
    pub seed: u64,
    pub objective: f64,
    /// Mean of the per-task learning errors.
    pub mle: f64,
    pub learning_errors: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub active_users: usize,
    pub ops_per_iteration: f64,
    pub wall_time_ns: u64,
}

fn sweep_scenario(base: &Scenario, axis: Axis, value: f64, seed: u64) -> Result<Scenario> {
    let s = base.with_seed(seed);
    Ok(match axis {
        Axis::NumUsers => s.with_num_users(value as usize)?,
        Axis::TotalPower => s.with_total_power(taskalloc::config::dbm_to_mw(value))?,
        Axis::Seed => s.with_seed(value as u64),
    })
}

fn check_axis_value(axis: Axis, v: f64) -> Result<(), CliError> {
    let integral = v.is_finite() && v >= 0.0 && v.fract() == 0.0;
    match axis {
        Axis::NumUsers | Axis::Seed if !integral => {
            Err(CliError::Usage(format!("{} values must be nonnegative integers, found {v}", axis.as_str())))
        }
        Axis::TotalPower if !v.is_finite() => Err(CliError::Usage(format!("total_power values must be finite, found {v}"))),
        _ => Ok(()),
    }
}

/// One row per (value, method, seed). Runs in parallel across jobs; rows
/// come back in (value, seed, method) order regardless of scheduling.
pub fn cmd_sweep(
    g: &Globals,
    scenario_path: &Path,
    axis: Axis,
    values: &[f64],
    methods: &[Method],
    seeds: &[u64],
) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Usage("sweep needs at least one value".into()));
    }
    if methods.is_empty() {
        return Err(CliError::Usage("sweep needs at least one method".into()));
    }
    for &v in values {
        check_axis_value(axis, v)?;
    }
    let base = load(scenario_path, g.seed)?;
    let seeds: Vec<u64> = match (axis, seeds.is_empty()) {
        (Axis::Seed, _) => vec![base.seed],
        (_, true) => vec![base.seed],
        (_, false) => seeds.to_vec(),
    };
    let mut jobs = Vec::new();
    for &v in values {
        for &seed in &seeds {
            let s = sweep_scenario(&base, axis, v, seed)?;
            for &m in methods {
                jobs.push((v, s.clone(), m));
            }
        }
    }
    create_out(&g.out)?;

    let rows: Vec<Result<SweepRow>> = jobs
        .par_iter()
        .map(|(v, s, m)| {
            let start = Instant::now();
            let gains = scenario_gains(s)?;
            let sol = run_method(s, &gains, *m, &mut |_| {})?;
            let wall = start.elapsed().as_nanos() as u64;
            let tasks = report::task_summaries(s, &gains, &sol);
            Ok(SweepRow {
                axis,
                value: *v,
                method: *m,
                seed: s.seed,
                objective: sol.objective.total,
                mle: report::mean_learning_error(&tasks),
                learning_errors: tasks.iter().map(|t| t.learning_error).collect(),
                iterations: sol.iterations,
                converged: sol.converged,
                active_users: sol.mask.iter().filter(|&&m| m > 0.0).count(),
                ops_per_iteration: sol.counts.total_per_iteration(),
                wall_time_ns: wall,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    write_sweep_csv(&g.out.join("sweep.csv"), &rows)?;
    let files = vec!["sweep.csv".to_string(), "manifest.json".to_string()];
    let wall: Vec<(String, u64)> = rows
        .iter()
        .map(|r| (format!("{}={}/{}/seed={}", axis.as_str(), r.value, r.method.as_str(), r.seed), r.wall_time_ns))
        .collect();
    report::write_json(&g.out.join("manifest.json"), &report::manifest_json("sweep", g.threads, &files, &wall))?;
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let tasks = rows.first().map_or(0, |r| r.learning_errors.len());
    let mut header: Vec<String> = ["axis", "value", "method", "seed", "objective", "mle"].map(String::from).to_vec();
    header.extend((0..tasks).map(|i| format!("learning_error_{i}")));
    header.extend(
        ["iterations", "converged", "active_users", "ops_per_iteration", "wall_time_s"].map(String::from),
    );
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.axis.as_str().to_string(),
            f17(r.value),
            r.method.as_str().to_string(),
            r.seed.to_string(),
            f17(r.objective),
            f17(r.mle),
        ];
        rec.extend(r.learning_errors.iter().map(|&x| f17(x)));
        rec.extend([
            r.iterations.to_string(),
            r.converged.to_string(),
            r.active_users.to_string(),
            f17(r.ops_per_iteration),
            f17(r.wall_time_ns as f64 * 1e-9),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub struct PlotOutput {
    pub svg: String,
    /// (label, first iteration at or below ε) per series.
    pub reached: Vec<(String, Option<usize>)>,
}

fn series_label(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match path.parent().and_then(|p| p.file_name()) {
        Some(dir) if stem == "trace" => dir.to_string_lossy().into_owned(),
        _ => stem,
    }
}

pub fn cmd_plot(traces: &[PathBuf], out_svg: &Path, epsilon: f64) -> Result<PlotOutput, CliError> {
    if traces.is_empty() {
        return Err(CliError::Usage("plot needs at least one trace".into()));
    }
    let data: Vec<(String, Vec<TraceRecord>)> =
        traces.iter().map(|p| Ok((series_label(p), read_trace(p)?))).collect::<Result<_>>()?;
    let series: Vec<Series> = data.iter().map(|(label, rows)| Series { label: label.clone(), rows }).collect();
    let svg = render_svg(&series, Some(epsilon));
    if let Some(dir) = out_svg.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_out(dir)?;
    }
    std::fs::write(out_svg, &svg).with_context(|| format!("writing {}", out_svg.display()))?;
    let reached = data.iter().map(|(l, rows)| (l.clone(), first_below(rows, epsilon))).collect();
    Ok(PlotOutput { svg, reached })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheckRow {
    pub method: Method,
    pub objective: f64,
    pub bound: f64,
    pub converged: bool,
    pub iterations: usize,
    pub pass: bool,
}

pub struct OracleCheck {
    pub oracle: OracleResult,
    pub from_cache: bool,
    pub rows: Vec<OracleCheckRow>,
    pub pass: bool,
}

pub fn oracle_bound(oracle: &OracleResult) -> f64 {
    oracle.objective_best + ORACLE_REL_TOL * oracle.objective_best + oracle.gap_bound
}

fn oracle_to_json(hash: &str, r: &OracleResult) -> Value {
    json!({
        "scenario_hash": hash,
        "resolution": r.resolution,
        "objective_best": num(r.objective_best),
        "p_best": nums(&r.p_best),
        "index": r.index,
        "evaluations": r.evaluations,
        "gap_bound": num(r.gap_bound),
    })
}

fn oracle_from_json(v: &Value, hash: &str, resolution: usize) -> Option<OracleResult> {
    if v["scenario_hash"].as_str()? != hash || v["resolution"].as_u64()? != resolution as u64 {
        return None;
    }
    let f = |x: &Value| x.as_f64();
    Some(OracleResult {
        p_best: v["p_best"].as_array()?.iter().map(f).collect::<Option<_>>()?,
        objective_best: f(&v["objective_best"])?,
        resolution,
        evaluations: v["evaluations"].as_u64()?,
        index: v["index"].as_array()?.iter().map(|x| x.as_u64().map(|n| n as usize)).collect::<Option<_>>()?,
        gap_bound: f(&v["gap_bound"])?,
    })
}

/// Cache file for a (scenario hash, resolution) pair.
pub fn oracle_cache_path(out: &Path, hash: &str, resolution: usize) -> PathBuf {
    out.join("oracle-cache").join(format!("{hash}-{resolution}.json"))
}

/// Grid oracle with an on-disk cache under `<out>/oracle-cache`.
pub fn cached_oracle(out: &Path, s: &Scenario, g: &GainMatrix, resolution: usize) -> Result<(OracleResult, bool), CliError> {
    let hash = s.hash();
    let path = oracle_cache_path(out, &hash, resolution);
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Some(r) = serde_json::from_str::<Value>(&text).ok().and_then(|v| oracle_from_json(&v, &hash, resolution)) {
            return Ok((r, true));
        }
    }
    let r = oracle_baselines::grid_oracle(s, g, resolution).map_err(|e| match e {
        OracleError::TooManyUsers(_) | OracleError::ZeroResolution => CliError::Usage(e.to_string()),
    })?;
    create_out(path.parent().expect("cache path has a parent"))?;
    report::write_json(&path, &oracle_to_json(&hash, &r))?;
    Ok((r, false))
}

pub fn cmd_oracle_check(g: &Globals, scenario_path: &Path, resolution: usize) -> Result<OracleCheck, CliError> {
    if resolution == 0 {
        return Err(CliError::Usage("resolution must be at least 1".into()));
    }
    let s = load(scenario_path, g.seed)?;
    if s.num_users() > oracle_baselines::MAX_ORACLE_USERS {
        return Err(CliError::Usage(
            OracleError::TooManyUsers(s.num_users()).to_string(),
        ));
    }
    create_out(&g.out)?;
    let gains = scenario_gains(&s).map_err(anyhow::Error::from)?;
    let (oracle, from_cache) = cached_oracle(&g.out, &s, &gains, resolution)?;
    let bound = oracle_bound(&oracle);
    let mut rows = Vec::new();
    for m in [Method::Parallel, Method::Accelerated] {
        let sol = run_method(&s, &gains, m, &mut |_| {})?;
        rows.push(OracleCheckRow {
            method: m,
            objective: sol.objective.total,
            bound,
            converged: sol.converged,
            iterations: sol.iterations,
            pass: sol.objective.total <= bound,
        });
    }
    let pass = rows.iter().all(|r| r.pass);
    let v = json!({
        "scenario_hash": s.hash(),
        "resolution": resolution,
        "oracle_objective": num(oracle.objective_best),
        "oracle_power_mw": nums(&oracle.p_best),
        "gap_bound": num(oracle.gap_bound),
        "bound": num(bound),
        "solvers": rows.iter().map(|r| json!({
            "method": r.method.as_str(),
            "objective": num(r.objective),
            "converged": r.converged,
            "iterations": r.iterations,
            "pass": r.pass,
        })).collect::<Vec<_>>(),
        "pass": pass,
    });
    report::write_json(&g.out.join("oracle_check.json"), &v)?;
    Ok(OracleCheck { oracle, from_cache, rows, pass })
}
