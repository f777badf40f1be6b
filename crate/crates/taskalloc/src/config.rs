//! Scenario schema, validation and unit conversions.
//!
//! Scenario files are TOML with `[network]`, `[[tasks]]` and an optional
//! `[solver]` section. dB-valued fields carry a `_db`/`_dbm` suffix and are
//! converted to linear units once, here.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Schema version every scenario document must declare as `spec = 1`.
pub const SCHEMA_VERSION: i64 = 1;

pub const DEFAULT_PATH_LOSS_DB: f64 = -90.0;
pub const DEFAULT_NU_I: f64 = 0.1;

pub fn dbm_to_mw(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

pub fn mw_to_dbm(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn db_to_ratio(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

pub fn ratio_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema version: expected `spec = {SCHEMA_VERSION}`, {0}")]
    Version(String),
    #[error("field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("user sets disjoint: user {user} belongs to tasks {first} and {second}")]
    Overlap { user: usize, first: usize, second: usize },
    #[error("user ids must cover 0..{num_users} with no gaps: user {missing} is unassigned")]
    Gap { num_users: usize, missing: usize },
    #[error("scenario has no tasks")]
    NoTasks,
    #[error("task weights undefined: every A_i*V_i is zero")]
    ZeroWeights,
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub num_antennas: usize,
    /// Hz.
    pub bandwidth: f64,
    /// Seconds.
    pub transmit_time: f64,
    /// mW.
    pub noise_power: f64,
    /// mW.
    pub total_power: f64,
    /// Linear ratio per user.
    pub path_loss: Vec<f64>,
    /// Number of fading slots averaged into the gain matrix.
    pub slots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub a: f64,
    pub b: f64,
    /// Initial sample count A_i.
    pub initial_samples: f64,
    /// Bits per sample V_i.
    pub bits_per_sample: f64,
    /// Zero-based user indices.
    pub user_ids: Vec<usize>,
    /// Max active users N_i.
    pub max_active: usize,
    /// Scheduling sparsity penalty ν_i.
    pub nu: f64,
}

/// Which weight masks the interference term δ_k inside the scheduling update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightConvention {
    /// Interferer ℓ is weighted by w̃_ℓ, as in the rate expression.
    Interferer,
    /// The whole interference sum of victim k is weighted by w̃_k.
    Victim,
}

impl WeightConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightConvention::Interferer => "interferer",
            WeightConvention::Victim => "victim",
        }
    }
}

/// Resolved solver options. Power-like quantities (`eta`, `nu_power`) are in
/// units of the total budget P, see [`crate::problem`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub eta: f64,
    pub epsilon_tol: f64,
    pub epsilon_floor: f64,
    pub nu_power: f64,
    pub mu_s: f64,
    /// Cap on the penalty μ. `None` derives it from the gains, see
    /// [`crate::problem::Problem::mu_cap`].
    pub mu_max: Option<f64>,
    pub max_iters: usize,
    /// Value of the normalized objective at the equal-power start.
    pub objective_scale: f64,
    pub scheduling: bool,
    pub weight_convention: WeightConvention,
    pub lipschitz_samples: usize,
}

/// Optional overrides as written in the `[solver]` section.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub eta: Option<f64>,
    pub epsilon_tol: Option<f64>,
    pub epsilon_floor: Option<f64>,
    pub nu_power: Option<f64>,
    pub mu_s: Option<f64>,
    pub mu_max: Option<f64>,
    pub max_iters: Option<usize>,
    pub objective_scale: Option<f64>,
    pub scheduling: Option<bool>,
    pub weight_convention: Option<String>,
    pub lipschitz_samples: Option<usize>,
}

impl SolverOptions {
    /// Defaults for `k` users.
    pub fn resolve(o: &SolverOverrides, k: usize) -> Result<SolverOptions, ConfigError> {
        let kf = k.max(1) as f64;
        let eta = o.eta.unwrap_or(1e-3 / kf);
        let weight_convention = match o.weight_convention.as_deref() {
            None | Some("interferer") => WeightConvention::Interferer,
            Some("victim") => WeightConvention::Victim,
            Some(other) => {
                return Err(invalid(
                    "solver.weight_convention",
                    format!("expected \"interferer\" or \"victim\", found {other:?}"),
                ))
            }
        };
        let opts = SolverOptions {
            eta,
            epsilon_tol: o.epsilon_tol.unwrap_or(1e-4),
            epsilon_floor: o.epsilon_floor.unwrap_or(1e-6),
            nu_power: o.nu_power.unwrap_or(1e-2 / kf),
            mu_s: o.mu_s.unwrap_or(1.5),
            mu_max: o.mu_max,
            max_iters: o.max_iters.unwrap_or(5000),
            objective_scale: o.objective_scale.unwrap_or(100.0),
            scheduling: o.scheduling.unwrap_or(true),
            weight_convention,
            lipschitz_samples: o.lipschitz_samples.unwrap_or(1000),
        };
        opts.validate()?;
        Ok(opts)
    }

    pub fn defaults(k: usize) -> SolverOptions {
        SolverOptions::resolve(&SolverOverrides::default(), k).expect("defaults are valid")
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("solver.eta", self.eta),
            ("solver.epsilon_tol", self.epsilon_tol),
            ("solver.epsilon_floor", self.epsilon_floor),
            ("solver.nu_power", self.nu_power),
            ("solver.mu_max", self.mu_max.unwrap_or(1.0)),
            ("solver.objective_scale", self.objective_scale),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("must be positive and finite, found {v}")));
            }
        }
        if !(self.mu_s > 1.0 && self.mu_s.is_finite()) {
            return Err(invalid("solver.mu_s", format!("must exceed 1, found {}", self.mu_s)));
        }
        if self.epsilon_floor >= 0.5 {
            return Err(invalid("solver.epsilon_floor", "must be well below the rounding threshold 0.5"));
        }
        if self.max_iters == 0 {
            return Err(invalid("solver.max_iters", "must be at least 1"));
        }
        if self.lipschitz_samples == 0 {
            return Err(invalid("solver.lipschitz_samples", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: NetworkConfig,
    pub tasks: Vec<TaskSpec>,
    pub seed: u64,
    pub solver: SolverOptions,
    /// What the document set explicitly; used to re-derive defaults when the
    /// user count changes.
    pub solver_overrides: SolverOverrides,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    spec: Option<i64>,
    #[serde(default)]
    seed: u64,
    network: RawNetwork,
    #[serde(default)]
    tasks: Vec<RawTask>,
    #[serde(default)]
    solver: SolverOverrides,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PathLoss {
    Uniform(f64),
    PerUser(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    num_antennas: usize,
    bandwidth: f64,
    transmit_time: f64,
    noise_power: Option<f64>,
    noise_power_dbm: Option<f64>,
    total_power: Option<f64>,
    total_power_dbm: Option<f64>,
    path_loss: Option<PathLoss>,
    path_loss_db: Option<PathLoss>,
    slots: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RawTask {
    name: Option<String>,
    a_i: f64,
    b_i: f64,
    A_i: f64,
    V_i: f64,
    user_ids: Vec<usize>,
    N_i: Option<usize>,
    nu_i: Option<f64>,
}

fn one_of(
    field: &str,
    linear: Option<f64>,
    log: Option<f64>,
    suffix: &str,
    conv: fn(f64) -> f64,
) -> Result<f64, ConfigError> {
    match (linear, log) {
        (Some(_), Some(_)) => Err(invalid(
            format!("network.{field}"),
            format!("give either `{field}` or `{field}{suffix}`, not both"),
        )),
        (Some(v), None) => Ok(v),
        (None, Some(v)) => {
            if !v.is_finite() {
                return Err(invalid(format!("network.{field}{suffix}"), "must be finite"));
            }
            Ok(conv(v))
        }
        (None, None) => Err(invalid(
            format!("network.{field}"),
            format!("missing; give `{field}` or `{field}{suffix}`"),
        )),
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(source: &str) -> Result<Scenario, ConfigError> {
    let raw: RawScenario = toml::from_str(source).map_err(|e| ConfigError::Parse(e.to_string()))?;
    match raw.spec {
        Some(SCHEMA_VERSION) => {}
        Some(v) => return Err(ConfigError::Version(format!("found `spec = {v}`"))),
        None => return Err(ConfigError::Version("field is missing".into())),
    }
    if raw.tasks.is_empty() {
        return Err(ConfigError::NoTasks);
    }

    let mut tasks = Vec::with_capacity(raw.tasks.len());
    for (i, t) in raw.tasks.into_iter().enumerate() {
        let n = t.user_ids.len();
        tasks.push(TaskSpec {
            name: t.name.unwrap_or_else(|| format!("task{i}")),
            a: t.a_i,
            b: t.b_i,
            initial_samples: t.A_i,
            bits_per_sample: t.V_i,
            user_ids: t.user_ids,
            max_active: t.N_i.unwrap_or(n),
            nu: t.nu_i.unwrap_or(DEFAULT_NU_I),
        });
    }
    let k = validate_tasks(&tasks)?;

    let n = raw.network;
    let noise_power = one_of("noise_power", n.noise_power, n.noise_power_dbm, "_dbm", dbm_to_mw)?;
    let total_power = one_of("total_power", n.total_power, n.total_power_dbm, "_dbm", dbm_to_mw)?;
    let path_loss = match (n.path_loss, n.path_loss_db) {
        (Some(_), Some(_)) => {
            return Err(invalid("network.path_loss", "give either `path_loss` or `path_loss_db`, not both"))
        }
        (Some(PathLoss::Uniform(v)), None) => vec![v; k],
        (Some(PathLoss::PerUser(v)), None) => v,
        (None, Some(PathLoss::Uniform(v))) => vec![db_to_ratio(v); k],
        (None, Some(PathLoss::PerUser(v))) => v.into_iter().map(db_to_ratio).collect(),
        (None, None) => vec![db_to_ratio(DEFAULT_PATH_LOSS_DB); k],
    };
    let network = NetworkConfig {
        num_antennas: n.num_antennas,
        bandwidth: n.bandwidth,
        transmit_time: n.transmit_time,
        noise_power,
        total_power,
        path_loss,
        slots: n.slots.unwrap_or(1),
    };
    validate_network(&network, k)?;

    let solver = SolverOptions::resolve(&raw.solver, k)?;
    if !solver.scheduling {
        if let Some((i, t)) = tasks.iter().enumerate().find(|(_, t)| t.max_active < t.user_ids.len()) {
            return Err(invalid(
                format!("tasks[{i}].N_i"),
                format!("{} < |user_ids| = {} needs scheduling; with `solver.scheduling = false` every user transmits", t.max_active, t.user_ids.len()),
            ));
        }
    }
    Ok(Scenario { network, tasks, seed: raw.seed, solver, solver_overrides: raw.solver })
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    load_scenario(&text)
}

/// Checks per-task invariants and returns the user count K.
fn validate_tasks(tasks: &[TaskSpec]) -> Result<usize, ConfigError> {
    let mut owner: Vec<Option<usize>> = Vec::new();
    for (i, t) in tasks.iter().enumerate() {
        let f = |name: &str| format!("tasks[{i}].{name}");
        if !(t.a.is_finite() && t.a > 0.0) {
            return Err(invalid(f("a_i"), "must be positive"));
        }
        if !(t.b.is_finite() && t.b > 0.0) {
            return Err(invalid(f("b_i"), "must be positive"));
        }
        if !(t.initial_samples.is_finite() && t.initial_samples >= 0.0) {
            return Err(invalid(f("A_i"), "must be nonnegative"));
        }
        if !(t.bits_per_sample.is_finite() && t.bits_per_sample > 0.0) {
            return Err(invalid(f("V_i"), "must be positive"));
        }
        if t.user_ids.is_empty() {
            return Err(invalid(f("user_ids"), "must not be empty"));
        }
        if t.max_active < 1 || t.max_active > t.user_ids.len() {
            return Err(invalid(
                f("N_i"),
                format!("must satisfy 1 <= N_i <= |user_ids| = {}", t.user_ids.len()),
            ));
        }
        if !(t.nu.is_finite() && t.nu > 0.0) {
            return Err(invalid(f("nu_i"), "must be positive"));
        }
        for &u in &t.user_ids {
            if u >= owner.len() {
                owner.resize(u + 1, None);
            }
            if let Some(first) = owner[u] {
                return Err(ConfigError::Overlap { user: u, first, second: i });
            }
            owner[u] = Some(i);
        }
    }
    let k = owner.len();
    if let Some(missing) = owner.iter().position(Option::is_none) {
        return Err(ConfigError::Gap { num_users: k, missing });
    }
    Ok(k)
}

fn validate_network(n: &NetworkConfig, k: usize) -> Result<(), ConfigError> {
    if n.num_antennas < 1 {
        return Err(invalid("network.num_antennas", "must be at least 1"));
    }
    for (field, v) in [
        ("network.bandwidth", n.bandwidth),
        ("network.transmit_time", n.transmit_time),
        ("network.noise_power", n.noise_power),
        ("network.total_power", n.total_power),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(field, format!("must be positive and finite, found {v}")));
        }
    }
    if n.noise_power >= n.total_power {
        return Err(invalid("network.noise_power", "must be below total_power"));
    }
    if n.path_loss.len() != k {
        return Err(invalid(
            "network.path_loss",
            format!("per-user list has {} entries for {k} users", n.path_loss.len()),
        ));
    }
    for (u, &r) in n.path_loss.iter().enumerate() {
        if !(r.is_finite() && r > 0.0 && r <= 1.0) {
            return Err(invalid(format!("network.path_loss[{u}]"), format!("must lie in (0, 1], found {r}")));
        }
    }
    if n.slots < 1 {
        return Err(invalid("network.slots", "must be at least 1"));
    }
    Ok(())
}

/// λ_i = A_i V_i / Σ_j A_j V_j.
pub fn task_weights(tasks: &[TaskSpec]) -> Result<Vec<f64>, ConfigError> {
    if tasks.is_empty() {
        return Err(ConfigError::NoTasks);
    }
    let av: Vec<f64> = tasks.iter().map(|t| t.initial_samples * t.bits_per_sample).collect();
    let total: f64 = av.iter().sum();
    if total <= 0.0 {
        return Err(ConfigError::ZeroWeights);
    }
    Ok(av.iter().map(|x| x / total).collect())
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.network.path_loss.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Task index of every user.
    pub fn owners(&self) -> Vec<usize> {
        let mut o = vec![0; self.num_users()];
        for (i, t) in self.tasks.iter().enumerate() {
            for &u in &t.user_ids {
                o[u] = i;
            }
        }
        o
    }

    /// Hex SHA-256 of a canonical rendering of the resolved scenario.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        let mut s = String::with_capacity(64);
        for b in digest.iter() {
            let _ = write!(s, "{b:02x}");
        }
        s
    }

    fn canonical(&self) -> String {
        let n = &self.network;
        let mut s = String::new();
        let bits = |x: f64| format!("{:016x}", x.to_bits());
        let _ = writeln!(s, "spec={SCHEMA_VERSION};seed={}", self.seed);
        let _ = writeln!(
            s,
            "N={};B={};T={};s2={};P={};M={}",
            n.num_antennas,
            bits(n.bandwidth),
            bits(n.transmit_time),
            bits(n.noise_power),
            bits(n.total_power),
            n.slots
        );
        let pl: Vec<String> = n.path_loss.iter().map(|&x| bits(x)).collect();
        let _ = writeln!(s, "rho={}", pl.join(","));
        for t in &self.tasks {
            let users: Vec<String> = t.user_ids.iter().map(|u| u.to_string()).collect();
            let _ = writeln!(
                s,
                "task={:?};a={};b={};A={};V={};users={};N={};nu={}",
                t.name,
                bits(t.a),
                bits(t.b),
                bits(t.initial_samples),
                bits(t.bits_per_sample),
                users.join(","),
                t.max_active,
                bits(t.nu)
            );
        }
        let o = &self.solver;
        let _ = writeln!(
            s,
            "eta={};tol={};floor={};nu={};mus={};mumax={};iters={};scale={};sched={};conv={};ls={}",
            bits(o.eta),
            bits(o.epsilon_tol),
            bits(o.epsilon_floor),
            bits(o.nu_power),
            bits(o.mu_s),
            o.mu_max.map_or_else(|| "auto".to_string(), |m| bits(m).to_string()),
            o.max_iters,
            bits(o.objective_scale),
            o.scheduling,
            o.weight_convention.as_str(),
            o.lipschitz_samples
        );
        s
    }

    pub fn with_seed(&self, seed: u64) -> Scenario {
        Scenario { seed, ..self.clone() }
    }

    pub fn with_total_power(&self, p_mw: f64) -> Result<Scenario, ConfigError> {
        let mut s = self.clone();
        s.network.total_power = p_mw;
        validate_network(&s.network, s.num_users())?;
        Ok(s)
    }

    /// Re-splits `k` users into contiguous blocks, one per task, keeping each
    /// task's N_i/|K_i| ratio. Requires a uniform path loss.
    pub fn with_num_users(&self, k: usize) -> Result<Scenario, ConfigError> {
        let i_count = self.num_tasks();
        if k < i_count {
            return Err(invalid("num_users", format!("need at least one user per task ({i_count})")));
        }
        let rho = self.network.path_loss[0];
        if self.network.path_loss.iter().any(|&r| r != rho) {
            return Err(invalid("network.path_loss", "resizing requires a uniform path loss"));
        }
        let mut s = self.clone();
        let mut next = 0;
        for (i, t) in s.tasks.iter_mut().enumerate() {
            let size = k / i_count + usize::from(i < k % i_count);
            let ratio = t.max_active as f64 / t.user_ids.len() as f64;
            t.user_ids = (next..next + size).collect();
            t.max_active = ((ratio * size as f64).round() as usize).clamp(1, size);
            next += size;
        }
        s.network.path_loss = vec![rho; k];
        s.solver = SolverOptions::resolve(&s.solver_overrides, k)?;
        Ok(s)
    }
}
