//! result.json, report.md and manifest.json.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};
use taskalloc::config::task_weights;
use taskalloc::learning::{self, CountMode};
use taskalloc::{GainMatrix, Scenario, Solution};

use crate::fmt::{f17, num, nums};

pub const RESULT_SCHEMA_VERSION: u64 = 1;

/// Per-task outcome of a solution, in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSummary {
    pub name: String,
    pub lambda: f64,
    /// Θ_i = a_i·D_i^(−b_i) with continuous D_i.
    pub learning_error: f64,
    /// ⌊D_i⌋, the number of samples actually delivered.
    pub samples: f64,
    pub active_users: usize,
    pub max_active: usize,
}

pub fn task_summaries(s: &Scenario, g: &GainMatrix, sol: &Solution) -> Vec<TaskSummary> {
    let lambda = task_weights(&s.tasks).expect("validated scenario has positive weights");
    let d = learning::sample_counts(s, g, &sol.p_hat, &sol.mask, CountMode::Continuous);
    let floored = learning::sample_counts(s, g, &sol.p_hat, &sol.mask, CountMode::Floored);
    let active = sol.active_per_task(&s.tasks);
    s.tasks
        .iter()
        .enumerate()
        .map(|(i, t)| TaskSummary {
            name: t.name.clone(),
            lambda: lambda[i],
            learning_error: learning::learning_error(t.a, t.b, d[i]).unwrap_or(f64::NAN),
            samples: floored[i],
            active_users: active[i],
            max_active: t.max_active,
        })
        .collect()
}

/// Mean of Θ_i over tasks.
pub fn mean_learning_error(tasks: &[TaskSummary]) -> f64 {
    tasks.iter().map(|t| t.learning_error).sum::<f64>() / tasks.len() as f64
}

pub fn scenario_echo(s: &Scenario) -> Value {
    let n = &s.network;
    let tasks: Vec<Value> = s
        .tasks
        .iter()
        .map(|t| {
            json!({
                "name": t.name,
                "a": num(t.a),
                "b": num(t.b),
                "initial_samples": num(t.initial_samples),
                "bits_per_sample": num(t.bits_per_sample),
                "user_ids": t.user_ids,
                "max_active": t.max_active,
                "nu": num(t.nu),
            })
        })
        .collect();
    json!({
        "hash": s.hash(),
        "seed": s.seed,
        "num_users": s.num_users(),
        "num_antennas": n.num_antennas,
        "bandwidth_hz": num(n.bandwidth),
        "transmit_time_s": num(n.transmit_time),
        "noise_power_mw": num(n.noise_power),
        "total_power_mw": num(n.total_power),
        "path_loss": nums(&n.path_loss),
        "slots": n.slots,
        "tasks": tasks,
    })
}

/// Contents of result.json. Nothing here depends on wall time or thread count.
pub fn result_json(s: &Scenario, g: &GainMatrix, sol: &Solution, trace_file: Option<&str>) -> Value {
    let tasks: Vec<Value> = task_summaries(s, g, sol)
        .iter()
        .zip(&sol.nu_final)
        .map(|(t, &nu)| {
            json!({
                "name": t.name,
                "lambda": num(t.lambda),
                "learning_error": num(t.learning_error),
                "samples": num(t.samples),
                "active_users": t.active_users,
                "max_active": t.max_active,
                "nu_final": num(nu),
            })
        })
        .collect();
    let mut ops = Map::new();
    ops.insert("per_task".into(), Value::Array(sol.counts.per_task.iter().map(|&c| json!(c)).collect()));
    ops.insert("reduction".into(), json!(sol.counts.reduction));
    ops.insert("per_iteration".into(), num(sol.counts.total_per_iteration()));
    json!({
        "schema_version": RESULT_SCHEMA_VERSION,
        "method": sol.method.as_str(),
        "scenario": scenario_echo(s),
        "converged": sol.converged,
        "iterations": sol.iterations,
        "final_mse": num(sol.final_mse),
        "eta": sol.eta.map_or(Value::Null, num),
        "objective": num(sol.objective.total),
        "weighted_per_task": nums(&sol.objective.per_task),
        "tasks": tasks,
        "power_mw": nums(&sol.p_hat),
        "mask": nums(&sol.mask),
        "relaxed_mask": nums(&sol.relaxed_mask),
        "delta_mw": nums(&sol.delta),
        "ops": Value::Object(ops),
        "trace": trace_file,
    })
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub struct RunSummary<'a> {
    pub solution: &'a Solution,
    pub tasks: Vec<TaskSummary>,
    pub wall_time_ns: u64,
}

pub fn report_md(s: &Scenario, runs: &[RunSummary], files: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# taskalloc report\n");
    let _ = writeln!(
        out,
        "Scenario `{}`: seed {}, {} users, {} tasks, P = {} mW.\n",
        s.hash(),
        s.seed,
        s.num_users(),
        s.num_tasks(),
        f17(s.network.total_power)
    );
    let _ = writeln!(out, "| method | objective | iterations | converged | final MSE | wall time (s) |");
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for r in runs {
        let sol = r.solution;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {:.3} |",
            sol.method.as_str(),
            f17(sol.objective.total),
            sol.iterations,
            sol.converged,
            f17(sol.final_mse),
            r.wall_time_ns as f64 * 1e-9
        );
    }
    for r in runs {
        let _ = writeln!(out, "\n## {} per task\n", r.solution.method.as_str());
        let _ = writeln!(out, "| task | weight | learning error | samples | active / cap |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        for t in &r.tasks {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} / {} |",
                t.name,
                f17(t.lambda),
                f17(t.learning_error),
                t.samples,
                t.active_users,
                t.max_active
            );
        }
    }
    if !files.is_empty() {
        let _ = writeln!(out, "\n## Files\n");
        for f in files {
            let _ = writeln!(out, "- `{f}`");
        }
    }
    out
}

pub fn manifest_json(command: &str, threads: usize, files: &[String], wall: &[(String, u64)]) -> Value {
    let mut w = Map::new();
    for (k, ns) in wall {
        w.insert(k.clone(), json!(ns));
    }
    json!({
        "command": command,
        "threads": threads,
        "files": files,
        "wall_time_ns": Value::Object(w),
    })
}
