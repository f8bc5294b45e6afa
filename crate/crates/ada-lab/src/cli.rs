//! Command-line front end: experiment config files, CSV emission, and the
//! fast self-test suite.
//!
//! One binary, one `--command` flag:
//!
//! - `game`     — play a single game and write its transcript
//! - `sweep`    — estimate risk for one or more configs, write results CSVs
//! - `noiseopt` — solve the optimal-noise LP for a list of noise levels
//! - `bounds`   — tabulate the closed-form bounds for the given configs
//! - `selftest` — run the named invariant checks and exit nonzero on failure
//!
//! Existing output files are never overwritten without `--force`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::adversaries::{AdversaryConfig, AdversaryKind};
use crate::bounds::{self, BoundReport};
use crate::harness::{self, Conjunction, ExperimentConfig, RiskReport};
use crate::mechanisms::{default_schedule, MechanismConfig, MechanismKind};
use crate::signopt;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config { path: PathBuf, detail: String },
    Io { path: PathBuf, detail: String },
    OutputExists { path: PathBuf },
    Run(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(msg) => write!(f, "usage error: {msg}"),
            Self::Config { path, detail } => {
                write!(f, "config {}: {detail}", path.display())
            }
            Self::Io { path, detail } => write!(f, "io {}: {detail}", path.display()),
            Self::OutputExists { path } => {
                write!(f, "refusing to overwrite {} (pass --force)", path.display())
            }
            Self::Run(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Game,
    Sweep,
    Noiseopt,
    Bounds,
    Selftest,
}

impl Command {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "game" => Ok(Self::Game),
            "sweep" => Ok(Self::Sweep),
            "noiseopt" => Ok(Self::Noiseopt),
            "bounds" => Ok(Self::Bounds),
            "selftest" => Ok(Self::Selftest),
            other => Err(CliError::Usage(format!(
                "unknown command {other:?}; expected game|sweep|noiseopt|bounds|selftest"
            ))),
        }
    }
}

/// Parsed invocation.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: Command,
    pub config_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub force: bool,
    pub reps_override: Option<u64>,
    pub seed_override: Option<u64>,
    pub workers: Option<usize>,
}

pub const USAGE: &str = "usage: ada-lab --command {game|sweep|noiseopt|bounds|selftest} \
[--config PATH] [--out DIR] [--reps N] [--seed N] [--workers N] [--force]\n\
ADA_LAB_WORKERS is honored when --workers is absent.";

pub fn parse_args(args: &[String]) -> Result<RunManifest, CliError> {
    let mut command = None;
    let mut config_path = None;
    let mut output_dir = None;
    let mut force = false;
    let mut reps_override = None;
    let mut seed_override = None;
    let mut workers = None;

    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let mut take = |name: &str| -> Result<String, CliError> {
            it.next()
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("{name} needs a value")))
        };
        match arg.as_str() {
            "--command" => command = Some(Command::parse(&take("--command")?)?),
            "--config" => config_path = Some(PathBuf::from(take("--config")?)),
            "--out" => output_dir = Some(PathBuf::from(take("--out")?)),
            "--force" => force = true,
            "--reps" => {
                reps_override = Some(take("--reps")?.parse::<u64>().map_err(|e| {
                    CliError::Usage(format!("--reps must be an integer: {e}"))
                })?)
            }
            "--seed" => {
                seed_override = Some(take("--seed")?.parse::<u64>().map_err(|e| {
                    CliError::Usage(format!("--seed must be an integer: {e}"))
                })?)
            }
            "--workers" => {
                workers = Some(take("--workers")?.parse::<usize>().map_err(|e| {
                    CliError::Usage(format!("--workers must be an integer: {e}"))
                })?)
            }
            "--help" | "-h" => return Err(CliError::Usage("help requested".into())),
            other => return Err(CliError::Usage(format!("unknown flag {other:?}"))),
        }
    }

    let command = command.ok_or_else(|| CliError::Usage("--command is required".into()))?;
    if workers.is_none() {
        if let Ok(v) = std::env::var("ADA_LAB_WORKERS") {
            workers = Some(v.parse::<usize>().map_err(|e| {
                CliError::Usage(format!("ADA_LAB_WORKERS must be an integer: {e}"))
            })?);
        }
    }
    Ok(RunManifest {
        command,
        config_path,
        output_dir: output_dir.unwrap_or_else(|| PathBuf::from("out")),
        force,
        reps_override,
        seed_override,
        workers,
    })
}

// ── Config files ────────────────────────────────────────────────────────

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMechanism {
    kind: MechanismKind,
    #[serde(default)]
    w_schedule: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdversary {
    kind: AdversaryKind,
    #[serde(default)]
    sigma: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    k: i64,
    sigma: f64,
    replications: u64,
    seed: u64,
    mechanism: RawMechanism,
    adversary: RawAdversary,
    #[serde(default)]
    conjunction: Option<Conjunction>,
}


fn resolve(raw: RawExperiment) -> Result<ExperimentConfig, String> {
    if raw.k < 1 {
        return Err(format!("k must be ≥ 1 (got {})", raw.k));
    }
    let k = raw.k as usize;
    if !(raw.sigma > 0.0) || !raw.sigma.is_finite() {
        return Err(format!("sigma must be > 0 (got {})", raw.sigma));
    }
    if raw.replications < 1 {
        return Err("replications must be ≥ 1".into());
    }
    let w_schedule = match (&raw.mechanism.kind, raw.mechanism.w_schedule) {
        (MechanismKind::Custom, None) => {
            return Err("mechanism.w_schedule is required for kind \"custom\"".into())
        }
        (MechanismKind::ZeroNoise, None) => vec![0.0; k],
        (_, None) => default_schedule(k, raw.sigma).map_err(|e| e.to_string())?.w_schedule,
        (_, Some(ws)) => {
            if ws.len() != k {
                return Err(format!(
                    "mechanism.w_schedule must have length k = {k} (got {})",
                    ws.len()
                ));
            }
            if let Some(bad) = ws.iter().find(|w| !w.is_finite() || **w < 0.0) {
                return Err(format!("mechanism.w_schedule entries must be ≥ 0 (got {bad})"));
            }
            ws
        }
    };
    let mechanism =
        MechanismConfig::new(raw.mechanism.kind, w_schedule).map_err(|e| e.to_string())?;
    let adv_sigma = raw.adversary.sigma.unwrap_or(raw.sigma);
    if (adv_sigma - raw.sigma).abs() > 1e-12 * raw.sigma {
        return Err(format!(
            "adversary.sigma must equal sigma ({} ≠ {})",
            adv_sigma, raw.sigma
        ));
    }
    let config = ExperimentConfig {
        k,
        sigma: raw.sigma,
        mechanism,
        adversary: AdversaryConfig { kind: raw.adversary.kind, sigma: adv_sigma },
        replications: raw.replications,
        seed: raw.seed,
        conjunction: raw.conjunction.unwrap_or(Conjunction::Max),
    };
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

/// Parses an experiment config file: a single JSON object or a list of them.
/// Unknown keys are rejected.
pub fn parse_config(path: &Path) -> Result<Vec<ExperimentConfig>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io { path: path.to_path_buf(), detail: e.to_string() })?;
    parse_config_str(&text).map_err(|detail| CliError::Config { path: path.to_path_buf(), detail })
}

/// String form of [`parse_config`]; keeps round-trip tests filesystem-free.
pub fn parse_config_str(text: &str) -> Result<Vec<ExperimentConfig>, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let items = match value {
        serde_json::Value::Array(items) => items,
        other => vec![other],
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let raw: RawExperiment = serde_json::from_value(v)
                .map_err(|e| format!("entry {i}: {e}"))?;
            resolve(raw).map_err(|e| format!("entry {i}: {e}"))
        })
        .collect()
}

/// Serializes a config so that `parse_config` reproduces it exactly.
pub fn emit_config(config: &ExperimentConfig) -> String {
    serde_json::to_string_pretty(config).expect("config serializes")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoiseOpt {
    sigma: f64,
    w: Vec<f64>,
    #[serde(default)]
    n_points: Option<usize>,
    #[serde(default)]
    half_width: Option<f64>,
}

// ── Formatting and files ────────────────────────────────────────────────

/// Nine significant digits, scientific; stable across runs and platforms.
pub fn fmt_g9(x: f64) -> String {
    format!("{x:.8e}")
}

fn write_new(path: &Path, contents: &str, force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(CliError::OutputExists { path: path.to_path_buf() });
    }
    fs::write(path, contents)
        .map_err(|e| CliError::Io { path: path.to_path_buf(), detail: e.to_string() })
}

pub const RESULTS_HEADER: &str = "k,sigma,adversary,mechanism,round,bias_hat,bias_se,\
bias_sq_hat,mse_hat,mse_se,combined_risk,upper_bound,lower_bound,sharpness_floor";

/// Per-round results table with the bound columns attached to every row.
pub fn results_csv(entries: &[(ExperimentConfig, RiskReport)]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for (config, report) in entries {
        for (idx, round) in report.per_round.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                config.k,
                fmt_g9(config.sigma),
                config.adversary.kind,
                config.mechanism.kind,
                idx + 1,
                fmt_g9(round.bias_hat),
                fmt_g9(round.bias_se),
                fmt_g9(round.bias_sq_hat),
                fmt_g9(round.mse_hat),
                fmt_g9(round.mse_se),
                fmt_g9(report.combined_risk),
                fmt_g9(report.bound_report.k_step_mse),
                fmt_g9(report.bound_report.minimax_lower),
                fmt_g9(report.bound_report.sharpness_floor),
            ));
        }
    }
    out
}

pub const PLOTDATA_HEADER: &str = "k,empirical_max_mse,theorem2_bound,theorem3_bound";

/// Plot-ready risk-versus-k table, sorted by k.
pub fn plotdata_csv(entries: &[(ExperimentConfig, RiskReport)]) -> String {
    let mut rows: Vec<(usize, f64, f64, f64)> = entries
        .iter()
        .map(|(config, report)| {
            (
                config.k,
                report.max_round_mse(),
                report.bound_report.k_step_mse,
                report.bound_report.minimax_lower,
            )
        })
        .collect();
    rows.sort_by_key(|r| r.0);
    let mut out = String::from(PLOTDATA_HEADER);
    out.push('\n');
    for (k, mse, t2, t3) in rows {
        out.push_str(&format!("{k},{},{},{}\n", fmt_g9(mse), fmt_g9(t2), fmt_g9(t3)));
    }
    out
}

/// Writes `results.csv` and `plotdata_risk_vs_k.csv` into the output dir.
pub fn emit_results(
    entries: &[(ExperimentConfig, RiskReport)],
    manifest: &RunManifest,
) -> Result<Vec<PathBuf>, CliError> {
    if entries.is_empty() {
        return Err(CliError::Run("no successful reports to emit".into()));
    }
    fs::create_dir_all(&manifest.output_dir).map_err(|e| CliError::Io {
        path: manifest.output_dir.clone(),
        detail: e.to_string(),
    })?;
    let results = manifest.output_dir.join("results.csv");
    write_new(&results, &results_csv(entries), manifest.force)?;
    let plot = manifest.output_dir.join("plotdata_risk_vs_k.csv");
    write_new(&plot, &plotdata_csv(entries), manifest.force)?;
    Ok(vec![results, plot])
}

fn transcript_csv(history: &crate::world::GameHistory) -> String {
    let mut out = String::from(
        "round,query_mean,query_variance,noise_family,noise_mean,noise_scale,release,\
realized_phi,realized_noise\n",
    );
    for (i, (s, p)) in
        history.shared.rounds.iter().zip(&history.player_private.rounds).enumerate()
    {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            i + 1,
            fmt_g9(s.query.mean),
            fmt_g9(s.query.variance),
            s.declared_noise.family,
            fmt_g9(s.declared_noise.mean),
            fmt_g9(s.declared_noise.scale),
            fmt_g9(s.release),
            fmt_g9(p.phi),
            fmt_g9(p.noise_value),
        ));
    }
    out
}

// ── Commands ────────────────────────────────────────────────────────────

fn apply_overrides(configs: &mut [ExperimentConfig], manifest: &RunManifest) {
    for c in configs.iter_mut() {
        if let Some(r) = manifest.reps_override {
            c.replications = r;
        }
        if let Some(s) = manifest.seed_override {
            c.seed = s;
        }
    }
}

fn require_config(manifest: &RunManifest) -> Result<PathBuf, CliError> {
    manifest
        .config_path
        .clone()
        .ok_or_else(|| CliError::Usage("--config is required for this command".into()))
}

fn cmd_game(manifest: &RunManifest) -> Result<(), CliError> {
    let path = require_config(manifest)?;
    let mut configs = parse_config(&path)?;
    apply_overrides(&mut configs, manifest);
    fs::create_dir_all(&manifest.output_dir).map_err(|e| CliError::Io {
        path: manifest.output_dir.clone(),
        detail: e.to_string(),
    })?;
    for (i, config) in configs.iter().enumerate() {
        let history = harness::run_game(config, 0).map_err(|e| CliError::Run(e.to_string()))?;
        let name = if configs.len() == 1 {
            "transcript.csv".to_string()
        } else {
            format!("transcript_{i}.csv")
        };
        let out = manifest.output_dir.join(name);
        write_new(&out, &transcript_csv(&history), manifest.force)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_sweep(manifest: &RunManifest) -> Result<(), CliError> {
    let path = require_config(manifest)?;
    let mut configs = parse_config(&path)?;
    apply_overrides(&mut configs, manifest);
    let reports = harness::sweep(&configs);
    let mut ok = Vec::new();
    let mut failures = 0;
    for (config, report) in configs.into_iter().zip(reports) {
        match report {
            Ok(r) => ok.push((config, r)),
            Err(e) => {
                failures += 1;
                eprintln!("config k={} failed: {e}", config.k);
            }
        }
    }
    let files = emit_results(&ok, manifest)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    if failures > 0 {
        return Err(CliError::Run(format!("{failures} config(s) failed")));
    }
    Ok(())
}

fn cmd_bounds(manifest: &RunManifest) -> Result<(), CliError> {
    let path = require_config(manifest)?;
    let configs = parse_config(&path)?;
    fs::create_dir_all(&manifest.output_dir).map_err(|e| CliError::Io {
        path: manifest.output_dir.clone(),
        detail: e.to_string(),
    })?;
    let mut out = String::from(
        "k,sigma,w1,one_step_bias_sq,one_step_mse,sharpness_floor,k_step_bias_sq,\
k_step_mse,minimax_lower\n",
    );
    for config in &configs {
        let b = BoundReport::evaluate(config.k, config.sigma, &config.mechanism.w_schedule);
        let w1 = config.mechanism.w_schedule.first().copied().unwrap_or(0.0);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            config.k,
            fmt_g9(config.sigma),
            fmt_g9(w1),
            fmt_g9(b.one_step_bias_sq),
            fmt_g9(b.one_step_mse),
            fmt_g9(b.sharpness_floor),
            fmt_g9(b.k_step_bias_sq),
            fmt_g9(b.k_step_mse),
            fmt_g9(b.minimax_lower),
        ));
    }
    let file = manifest.output_dir.join("bounds.csv");
    write_new(&file, &out, manifest.force)?;
    println!("wrote {}", file.display());
    Ok(())
}

fn cmd_noiseopt(manifest: &RunManifest) -> Result<(), CliError> {
    let path = require_config(manifest)?;
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Io { path: path.clone(), detail: e.to_string() })?;
    let raw: RawNoiseOpt = serde_json::from_str(&text)
        .map_err(|e| CliError::Config { path: path.clone(), detail: e.to_string() })?;
    if !(raw.sigma > 0.0) {
        return Err(CliError::Config { path, detail: "sigma must be > 0".into() });
    }
    fs::create_dir_all(&manifest.output_dir).map_err(|e| CliError::Io {
        path: manifest.output_dir.clone(),
        detail: e.to_string(),
    })?;
    let grid = signopt::GridConfig {
        n_points: raw.n_points.unwrap_or(2001),
        half_width: raw.half_width,
    };
    let mut csv = String::from(
        "sigma,w,n_points,primal_objective,margin,margin_lower_bound,margin_uniform,\
dual_objective_bound,rel_duality_gap\n",
    );
    for (i, &w) in raw.w.iter().enumerate() {
        let (dist, objective) = signopt::solve_optimal_noise(raw.sigma, w, &grid)
            .map_err(|e| CliError::Run(format!("noiseopt w={w}: {e}")))?;
        let margin = 0.5 * objective;
        let unif = signopt::DiscretizedDistribution::uniform(w, grid.n_points)
            .and_then(|u| signopt::margin_risk(&u, raw.sigma))
            .unwrap_or(f64::NAN);
        let (dual, gap) = match signopt::dual_certificate(raw.sigma, w) {
            Ok(cert) => {
                let gap = (objective - cert.objective_bound) / objective.abs().max(1e-300);
                (fmt_g9(cert.objective_bound), fmt_g9(gap))
            }
            Err(_) => (String::new(), String::new()),
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt_g9(raw.sigma),
            fmt_g9(w),
            grid.n_points,
            fmt_g9(objective),
            fmt_g9(margin),
            fmt_g9(signopt::margin_lower_bound(raw.sigma, w)),
            fmt_g9(unif),
            dual,
            gap,
        ));
        let mut density = String::new();
        for (x, wt) in dist.points().zip(&dist.weights) {
            density.push_str(&format!("{} {}\n", fmt_g9(x), fmt_g9(*wt)));
        }
        let dfile = manifest.output_dir.join(format!("noise_density_{i}.txt"));
        write_new(&dfile, &density, manifest.force)?;
        println!("wrote {} (w = {w})", dfile.display());
    }
    let file = manifest.output_dir.join("noiseopt.csv");
    write_new(&file, &csv, manifest.force)?;
    println!("wrote {}", file.display());
    Ok(())
}

// ── Selftest ────────────────────────────────────────────────────────────

/// A named invariant check.
pub struct SelfCheck {
    pub name: &'static str,
    pub run: fn() -> Result<(), String>,
}

fn check<T: PartialOrd + fmt::Display>(what: &str, got: T, want: T, tol: T) -> Result<(), String>
where
    T: Copy + std::ops::Sub<Output = T>,
{
    let diff = if got > want { got - want } else { want - got };
    if diff > tol {
        Err(format!("{what}: got {got}, want {want} ± {tol}"))
    } else {
        Ok(())
    }
}

fn selfcheck_schedule() -> Result<(), String> {
    let s = default_schedule(5, 2.0).map_err(|e| e.to_string())?;
    let w = 4.0f64.powf(0.25) * 2.0;
    check("w_1", s.w_schedule[0], w, 1e-12)?;
    check("w_5", s.w_schedule[4], 0.0, 0.0)
}

fn selfcheck_bounds() -> Result<(), String> {
    check("one_step_bias_sq(2,1,1)", bounds::one_step_bias_sq_bound(2, 1.0, 1.0), 1.0, 1e-15)?;
    check("one_step_mse(2,1)", bounds::one_step_mse_bound(2, 1.0), 3.0, 1e-15)?;
    check("k_step_mse(101,1)", bounds::k_step_mse_bound(101, 1.0), 22.0, 1e-12)?;
    check(
        "minimax_lower(4,1)",
        bounds::minimax_lower_bound(4, 1.0),
        0.5,
        1e-15,
    )?;
    check("sharpness(2,1,1)", bounds::sharpness_floor(2, 1.0, 1.0), 0.5, 1e-15)
}

// Brute-force oracle for one peel of the recursion: build the bordered
// quadratic-form matrix with explicit inverses and take the Gaussian
// conditional expectation directly. No code shared with the closed form.
fn selfcheck_recursion() -> Result<(), String> {
    use crate::linalg::{dot, SymMatrix};
    use rand::Rng;
    let mut rng = crate::rngs::stream(1001, 0, 0, crate::rngs::Purpose::Statistic);
    for trial in 0..32 {
        let dim = 1 + (trial % 4);
        let mut b = vec![0.0; dim * dim];
        for v in b.iter_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        let mut sig = SymMatrix::identity(dim, 0.0);
        for i in 0..dim {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..dim {
                    s += b[i * dim + k] * b[j * dim + k];
                }
                sig.set(i, j, 0.5 * s / dim as f64 + if i == j { 0.1 } else { 0.0 });
            }
        }
        let w_diag: Vec<f64> = (0..dim).map(|_| 0.3 + rng.random::<f64>()).collect();
        let lambda = 0.4 + 0.5 * rng.random::<f64>();
        let dir: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        let inv = sig.inverse().map_err(|e| e.to_string())?;
        let q = inv.quad_form(&dir);
        let shrink = (lambda / q).sqrt() * 0.7;
        let v: Vec<f64> = dir.iter().map(|d| d * shrink).collect();
        let w_sq = 0.5 + rng.random::<f64>();
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();

        let mut sw = sig.clone();
        for i in 0..dim {
            sw.set(i, i, sw.get(i, i) + w_diag[i]);
        }
        let sw_inv = sw.inverse().map_err(|e| e.to_string())?;
        let f_prev = sig.quad_form(&sw_inv.matvec(&x));

        // closed form under test
        let got = bounds::recursive_fk_update(f_prev, &sig, &w_diag, &v, lambda, w_sq)
            .map_err(|e| e.to_string())?;

        // oracle: bordered matrices, explicit inverse, conditional Gaussian
        // moments
        let mut sig_full = sig.clone();
        sig_full.extend(&v, lambda);
        let mut sw_full = sig_full.clone();
        for i in 0..dim {
            sw_full.set(i, i, sw_full.get(i, i) + w_diag[i]);
        }
        sw_full.set(dim, dim, sw_full.get(dim, dim) + w_sq);
        let swf_inv = sw_full.inverse().map_err(|e| e.to_string())?;
        let mut f_mat = SymMatrix::identity(dim + 1, 0.0);
        for i in 0..=dim {
            for j in 0..=i {
                let mut s = 0.0;
                for a in 0..=dim {
                    for c in 0..=dim {
                        s += swf_inv.get(i, a) * sig_full.get(a, c) * swf_inv.get(c, j);
                    }
                }
                f_mat.set(i, j, s);
            }
        }
        let a_vec = sw_inv.matvec(&v);
        let m_y = dot(&a_vec, &x);
        let var_y = lambda + w_sq - dot(&v, &a_vec);
        let mut xe = x.clone();
        xe.push(m_y);
        let want = f_mat.quad_form(&xe) + f_mat.get(dim, dim) * var_y;
        check("recursion peel", got, want, 1e-10 * (1.0 + want.abs()))?;
    }
    Ok(())
}

fn selfcheck_block_inverse() -> Result<(), String> {
    use crate::linalg::SymMatrix;
    let sig = SymMatrix::from_rows(&[vec![0.8, 0.2], vec![0.2, 0.6]]);
    let w_diag = [0.5, 0.7];
    let v = [0.3, -0.2];
    let (tl, tr, alpha) =
        bounds::block_inverse_sw(&sig, &w_diag, &v, 0.9, 1.1).map_err(|e| e.to_string())?;
    let mut full = sig.clone();
    full.extend(&v, 0.9);
    full.set(0, 0, full.get(0, 0) + 0.5);
    full.set(1, 1, full.get(1, 1) + 0.7);
    full.set(2, 2, full.get(2, 2) + 1.1);
    let inv = full.inverse().map_err(|e| e.to_string())?;
    for i in 0..2 {
        for j in 0..2 {
            check("TL block", tl.get(i, j), inv.get(i, j), 1e-10)?;
        }
        check("border", tr[i], inv.get(i, 2), 1e-10)?;
    }
    check("corner", alpha, inv.get(2, 2), 1e-10)
}

fn operator_identity(idx: u32) -> Result<(), String> {
    let sigma = 1.0;
    let grid = signopt::UniformGrid::new(-12.0, 12.0, 481);
    let f: Vec<f64> = (0..grid.n).map(|i| grid.point(i).powi(idx as i32)).collect();
    let out = signopt::operator_a_apply(&f, &grid, sigma).map_err(|e| e.to_string())?;
    for i in grid.interior(8.0 * sigma) {
        let x = grid.point(i);
        let want = match idx {
            0 => 0.0,
            1 => 2.0,
            2 => 4.0 * x,
            3 => 6.0 * x * x + 6.0,
            _ => unreachable!(),
        };
        if (out[i] - want).abs() > 1e-5 * (1.0 + want.abs()) {
            return Err(format!("A x^{idx} at {x}: got {}, want {want}", out[i]));
        }
    }
    Ok(())
}

fn selfcheck_margin_point_mass() -> Result<(), String> {
    let p = signopt::DiscretizedDistribution::point_mass_at_zero();
    let got = signopt::margin_risk(&p, 1.0).map_err(|e| e.to_string())?;
    let want = (2.0 / std::f64::consts::PI).sqrt();
    check("margin(δ₀)", got, want, 2e-4)
}

fn selfcheck_certificate() -> Result<(), String> {
    let cert = signopt::dual_certificate(1.0, 1.0).map_err(|e| e.to_string())?;
    check("certificate bound at w=σ", cert.objective_bound, 1.0 / 3.0f64.sqrt(), 1e-14)
}

fn selfcheck_tie_rule() -> Result<(), String> {
    let noise = crate::mechanisms::NoiseSpec::gaussian(0.0, 1.0);
    let s = crate::adversaries::bayes_sign_classify(0.0, 0.0, &noise, 1.0)
        .map_err(|e| e.to_string())?;
    if s == 1 {
        Ok(())
    } else {
        Err(format!("tie resolved to {s}, want +1"))
    }
}

fn selfcheck_determinism() -> Result<(), String> {
    let config = ExperimentConfig {
        k: 3,
        sigma: 1.0,
        mechanism: default_schedule(3, 1.0).map_err(|e| e.to_string())?,
        adversary: AdversaryConfig { kind: AdversaryKind::KStepGreedy, sigma: 1.0 },
        replications: 500,
        seed: 2024,
        conjunction: Conjunction::Max,
    };
    let a = harness::estimate_risk(&config).map_err(|e| e.to_string())?;
    let b = harness::estimate_risk(&config).map_err(|e| e.to_string())?;
    let ja = serde_json::to_string(&a).map_err(|e| e.to_string())?;
    let jb = serde_json::to_string(&b).map_err(|e| e.to_string())?;
    if ja != jb {
        return Err("repeated estimates differ".into());
    }
    let h = harness::run_game(&config, 0).map_err(|e| e.to_string())?;
    if !h.reconstruction_holds() {
        return Err("reconstruction identity failed".into());
    }
    Ok(())
}

pub fn selftest_checks() -> Vec<SelfCheck> {
    vec![
        SelfCheck { name: "schedule_default_values", run: selfcheck_schedule },
        SelfCheck { name: "bound_arithmetic", run: selfcheck_bounds },
        SelfCheck { name: "recursion_closed_form", run: selfcheck_recursion },
        SelfCheck { name: "block_inversion_identity", run: selfcheck_block_inverse },
        SelfCheck { name: "operator_identity_A1", run: || operator_identity(0) },
        SelfCheck { name: "operator_identity_Ax", run: || operator_identity(1) },
        SelfCheck { name: "operator_identity_Ax2", run: || operator_identity(2) },
        SelfCheck { name: "operator_identity_Ax3", run: || operator_identity(3) },
        SelfCheck { name: "margin_point_mass", run: selfcheck_margin_point_mass },
        SelfCheck { name: "dual_certificate_w1", run: selfcheck_certificate },
        SelfCheck { name: "lr_tie_rule", run: selfcheck_tie_rule },
        SelfCheck { name: "determinism_and_reconstruction", run: selfcheck_determinism },
    ]
}

/// Runs the given checks, printing one line per check; returns the failures.
pub fn run_checks(checks: &[SelfCheck], out: &mut dyn std::io::Write) -> Vec<String> {
    let mut failed = Vec::new();
    for c in checks {
        match (c.run)() {
            Ok(()) => {
                let _ = writeln!(out, "selftest {}: PASS", c.name);
            }
            Err(detail) => {
                let _ = writeln!(out, "selftest {}: FAIL ({detail})", c.name);
                failed.push(c.name.to_string());
            }
        }
    }
    failed
}

fn cmd_selftest() -> Result<(), CliError> {
    let checks = selftest_checks();
    let mut stdout = std::io::stdout();
    let failed = run_checks(&checks, &mut stdout);
    if failed.is_empty() {
        println!("selftest: {} checks passed", checks.len());
        Ok(())
    } else {
        Err(CliError::Run(format!("selftest failures: {}", failed.join(", "))))
    }
}

// ── Entry points ────────────────────────────────────────────────────────

fn execute(manifest: &RunManifest) -> Result<(), CliError> {
    match manifest.command {
        Command::Game => cmd_game(manifest),
        Command::Sweep => cmd_sweep(manifest),
        Command::Noiseopt => cmd_noiseopt(manifest),
        Command::Bounds => cmd_bounds(manifest),
        Command::Selftest => cmd_selftest(),
    }
}

/// Parses arguments (without the program name) and runs; returns the exit
/// status.
pub fn run(args: &[String]) -> i32 {
    let manifest = match parse_args(args) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("{e}\n{USAGE}");
            return 2;
        }
    };
    let body = || match execute(&manifest) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            1
        }
    };
    match manifest.workers {
        Some(w) if w > 0 => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(w).build();
            match pool {
                Ok(pool) => pool.install(body),
                Err(e) => {
                    eprintln!("failed to build thread pool: {e}");
                    1
                }
            }
        }
        _ => body(),
    }
}

pub fn run_from_env() -> i32 {
    let args: Vec<String> = std::env::args().skip(1).collect();
    run(&args)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "k": 2, "sigma": 1.0, "replications": 1000, "seed": 7,
        "mechanism": {"kind": "gaussian_schedule"},
        "adversary": {"kind": "bayes_sign"},
        "conjunction": "max"
    }"#;

    #[test]
    fn minimal_config_parses() {
        let configs = parse_config_str(MINIMAL).unwrap();
        assert_eq!(configs.len(), 1);
        let c = &configs[0];
        assert_eq!(c.k, 2);
        assert_eq!(c.mechanism.w_schedule, vec![1.0, 0.0]);
        assert_eq!(c.conjunction, Conjunction::Max);
    }

    #[test]
    fn k_zero_rejected_with_named_message() {
        let text = MINIMAL.replace("\"k\": 2", "\"k\": 0");
        let err = parse_config_str(&text).unwrap_err();
        assert!(err.contains("k must be ≥ 1"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("\"seed\": 7", "\"seed\": 7, \"typo_key\": 1");
        let err = parse_config_str(&text).unwrap_err();
        assert!(err.contains("typo_key"), "{err}");
    }

    #[test]
    fn sweep_file_preserves_order() {
        let one: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        let mut list = Vec::new();
        for k in [2, 3, 5, 7, 11] {
            let mut v = one.clone();
            v["k"] = serde_json::json!(k);
            list.push(v);
        }
        let text = serde_json::to_string(&list).unwrap();
        let configs = parse_config_str(&text).unwrap();
        let ks: Vec<usize> = configs.iter().map(|c| c.k).collect();
        assert_eq!(ks, vec![2, 3, 5, 7, 11]);
    }

    #[test]
    fn config_round_trips_through_emit() {
        let configs = parse_config_str(MINIMAL).unwrap();
        let emitted = emit_config(&configs[0]);
        let reparsed = parse_config_str(&emitted).unwrap();
        assert_eq!(configs, reparsed);
    }

    #[test]
    fn fmt_g9_has_nine_significant_digits() {
        assert_eq!(fmt_g9(1.0), "1.00000000e0");
        assert_eq!(fmt_g9(0.2887), "2.88700000e-1");
        assert_eq!(fmt_g9(f64::INFINITY), "inf");
    }

    #[test]
    fn results_csv_schema_is_stable() {
        assert_eq!(RESULTS_HEADER.split(',').count(), 14);
        let configs = parse_config_str(MINIMAL).unwrap();
        let mut cfg = configs[0].clone();
        cfg.replications = 200;
        let report = harness::estimate_risk(&cfg).unwrap();
        let csv = results_csv(&[(cfg, report)]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), RESULTS_HEADER);
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 2); // k = 2 rounds
        for row in rows {
            assert_eq!(row.split(',').count(), 14);
        }
    }

    #[test]
    fn plotdata_rows_sorted_by_k() {
        let base = parse_config_str(MINIMAL).unwrap().remove(0);
        let mut entries = Vec::new();
        for k in [5usize, 2, 3] {
            let mut cfg = base.clone();
            cfg.k = k;
            cfg.mechanism = default_schedule(k, 1.0).unwrap();
            cfg.replications = 100;
            let report = harness::estimate_risk(&cfg).unwrap();
            entries.push((cfg, report));
        }
        let csv = plotdata_csv(&entries);
        let ks: Vec<i64> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(ks, vec![2, 3, 5]);
    }

    #[test]
    fn refuses_to_overwrite_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = RunManifest {
            command: Command::Sweep,
            config_path: None,
            output_dir: dir.path().to_path_buf(),
            force: false,
            reps_override: None,
            seed_override: None,
            workers: None,
        };
        let mut cfg = parse_config_str(MINIMAL).unwrap().remove(0);
        cfg.replications = 50;
        let report = harness::estimate_risk(&cfg).unwrap();
        let entries = vec![(cfg, report)];
        emit_results(&entries, &manifest).unwrap();
        let err = emit_results(&entries, &manifest).unwrap_err();
        assert!(matches!(err, CliError::OutputExists { .. }));
        let mut forced = manifest;
        forced.force = true;
        emit_results(&entries, &forced).unwrap();
    }

    #[test]
    fn selftest_passes_and_reports_injected_failures() {
        let mut buf = Vec::new();
        let failed = run_checks(&selftest_checks(), &mut buf);
        let text = String::from_utf8(buf).unwrap();
        assert!(failed.is_empty(), "failures: {failed:?}\n{text}");
        assert!(text.contains("selftest operator_identity_Ax: PASS"));

        // Injected failure is reported by name.
        let bad = vec![SelfCheck { name: "operator_identity_Ax", run: || Err("injected".into()) }];
        let mut buf2 = Vec::new();
        let failed2 = run_checks(&bad, &mut buf2);
        assert_eq!(failed2, vec!["operator_identity_Ax".to_string()]);
        assert!(String::from_utf8(buf2).unwrap().contains("FAIL (injected)"));
    }

    #[test]
    fn selftest_output_is_stable_across_runs() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        run_checks(&selftest_checks(), &mut a);
        run_checks(&selftest_checks(), &mut b);
        assert_eq!(a, b);
    }

    #[test]
    fn parse_args_full_invocation() {
        let args: Vec<String> = [
            "--command", "sweep", "--config", "c.json", "--out", "results", "--reps", "100",
            "--seed", "5", "--workers", "4", "--force",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let m = parse_args(&args).unwrap();
        assert_eq!(m.command, Command::Sweep);
        assert_eq!(m.config_path.as_deref(), Some(Path::new("c.json")));
        assert_eq!(m.reps_override, Some(100));
        assert_eq!(m.seed_override, Some(5));
        assert_eq!(m.workers, Some(4));
        assert!(m.force);
    }

    #[test]
    fn parse_args_rejects_unknown_flag() {
        let args = vec!["--command".to_string(), "sweep".to_string(), "--bogus".to_string()];
        assert!(matches!(parse_args(&args), Err(CliError::Usage(_))));
    }
}
