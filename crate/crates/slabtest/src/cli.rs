//! Command-line surface: argument parsing, file formats, orchestration.
//!
//! Four subcommands over the library:
//!
//! * `analyze`  — read observations from a file, calibrate ŵ by marginal
//!   maximum likelihood, optionally run one procedure, report JSON;
//! * `simulate` — run Monte Carlo cells from a JSON config and write the
//!   metrics CSV;
//! * `curves`   — preset simulate grids (figures 1–4): FDR of the
//!   value-thresholding rules across signal strength, sparsity and level;
//! * `diagnose` — numeric tables for the pseudo-thresholds ξ, ζ, χ and the
//!   score moments m̃, m₁, m₂.
//!
//! Formats: JSON in (configs) and out (analyze reports, stable key order);
//! CSV out for tables, opening with a `# slabtest <version>` comment line.
//! Floats are serialized at 17 significant digits so the printed decimal
//! round-trips to the exact f64, which makes output files byte-identical
//! across runs and worker counts.  Orchestration itself is single-threaded;
//! the worker budget (`--workers`, else `SLABTEST_WORKERS`, else 1) only
//! sizes the simulation engine's thread pool.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentContext;
use crate::prior::SlabPrior;
use crate::procedures::TestOutcome;
use crate::sim::{dispatch, requires_weight, sweep, with_workers, Scenario, SimulationCell, SweepRow, WPolicy};
use crate::thresholds::ThresholdContext;
use crate::weight::{estimate_weight, ObservationBatch, WeightEstimate};

/// Fixed column order of the metrics CSV.
pub const METRICS_COLUMNS: &str =
    "procedure,prior,n,s,mu,scenario,t,reps,fdr,fdr_se,fnr,fnr_se,mean_rejections";

const GRID_HELP: &str = "Grid spec: comma list `a,b,c`, `lin:lo:hi:k` (k evenly spaced points, \
                         endpoints included) or `log:lo:hi:k` (geometric)";

#[derive(Debug, Parser)]
#[command(
    name = "slabtest",
    version,
    about = "Empirical-Bayes multiple testing for sparse Gaussian sequences"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate the spike weight on an observation file, optionally run one
    /// procedure, and report JSON.
    Analyze {
        /// Input file: one decimal observation per line, optional header `x`.
        #[arg(long)]
        input: PathBuf,
        /// Slab prior: quasi-cauchy | laplace:<a> | quadrature:<prior>.
        #[arg(long, default_value = "quasi-cauchy")]
        prior: String,
        /// Procedure to run at the calibrated weight: ebayes-l | ebayes-q |
        /// ebayes-q0 | ebayes-hybrid | sc | mci | bh | bonferroni.
        #[arg(long)]
        procedure: Option<String>,
        /// Level t in (0, 1); required with --procedure.
        #[arg(long)]
        t: Option<f64>,
        /// Output path for the JSON report; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the Monte Carlo cells of a JSON config and write the metrics CSV.
    Simulate {
        /// Config file: {"cells": [...], "workers"?, "seed"?}.
        #[arg(long)]
        config: PathBuf,
        /// Output path for the metrics CSV.
        #[arg(long)]
        output: PathBuf,
        /// Worker threads (overrides the config and SLABTEST_WORKERS; default 1).
        #[arg(long)]
        workers: Option<usize>,
        /// Override the seed of every cell.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a preset experiment grid and write the metrics CSV.
    Curves {
        /// Preset grid: 1 (EBayesL/EBayesq, constant signals), 2 (gated
        /// q-rules, constant), 3 (EBayesL/EBayesq, uniform signals),
        /// 4 (gated q-rules, uniform).
        #[arg(long)]
        figure: u8,
        /// Output path for the metrics CSV.
        #[arg(long)]
        output: PathBuf,
        /// Worker threads (overrides SLABTEST_WORKERS; default 1).
        #[arg(long)]
        workers: Option<usize>,
        /// Seed of every cell (default 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Replications per cell (default 2000).
        #[arg(long)]
        reps: Option<u64>,
    },
    /// Numeric diagnostic tables.
    #[command(subcommand)]
    Diagnose(Diagnose),
}

#[derive(Debug, Subcommand)]
pub enum Diagnose {
    /// Tabulate the pseudo-thresholds ξ(u), ζ(u), χ(u) on a grid of u;
    /// cells outside a function's domain are left empty.
    Thresholds {
        /// Slab prior: quasi-cauchy | laplace:<a> | quadrature:<prior>.
        #[arg(long, default_value = "quasi-cauchy")]
        prior: String,
        #[arg(long, help = GRID_HELP)]
        grid: String,
        /// Output path for the CSV; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Tabulate the score moments m̃(w), m₁(τ, w), m₂(τ, w) on w × τ grids.
    Moments {
        /// Slab prior: quasi-cauchy | laplace:<a> | quadrature:<prior>.
        #[arg(long, default_value = "quasi-cauchy")]
        prior: String,
        #[arg(long = "w-grid", help = GRID_HELP)]
        w_grid: String,
        /// τ grid (same spec format); defaults to the single point τ = 0.
        #[arg(long = "tau-grid")]
        tau_grid: Option<String>,
        /// Output path for the CSV; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Top-level dispatch; every failure surfaces as a one-line diagnostic.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { input, prior, procedure, t, output } => {
            let report = analyze(&input, &prior, procedure.as_deref(), t)?;
            write_text(output.as_deref(), &report)
        }
        Command::Simulate { config, output, workers, seed } => {
            let text = fs::read_to_string(&config).map_err(|e| Error::io(&config, e))?;
            let mut config = parse_config(&text)?;
            if let Some(s) = seed.or(config.seed) {
                for cell in &mut config.cells {
                    cell.seed = s;
                }
            }
            let workers = resolve_workers(workers, config.workers, env_workers().as_deref())?;
            let rows = with_workers(Some(workers), || sweep(&config.cells))?;
            write_text(Some(&output), &metrics_csv(&rows))
        }
        Command::Curves { figure, output, workers, seed, reps } => {
            let cells = figure_cells(figure, reps, seed)?;
            let workers = resolve_workers(workers, None, env_workers().as_deref())?;
            let rows = with_workers(Some(workers), || sweep(&cells))?;
            write_text(Some(&output), &metrics_csv(&rows))
        }
        Command::Diagnose(Diagnose::Thresholds { prior, grid, output }) => {
            let prior = SlabPrior::parse(&prior)?;
            let table = thresholds_csv(prior, &parse_grid(&grid)?);
            write_text(output.as_deref(), &table)
        }
        Command::Diagnose(Diagnose::Moments { prior, w_grid, tau_grid, output }) => {
            let prior = SlabPrior::parse(&prior)?;
            let w_grid = parse_grid(&w_grid)?;
            let tau_grid = match tau_grid {
                Some(spec) => parse_grid(&spec)?,
                None => vec![0.0],
            };
            let table = moments_csv(prior, &w_grid, &tau_grid);
            write_text(output.as_deref(), &table)
        }
    }
}

/// Root of the simulate config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub cells: Vec<SimulationCell>,
    /// Worker default for this config; the --workers flag wins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Seed applied to every cell; the --seed flag wins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Parse and validate a simulate config.  Unknown keys are rejected with
/// the offending key named (both at the root and inside cells); per-cell
/// defaults (reps = 2000, seed = 0, MMLE weights) are filled by serde.
pub fn parse_config(source: &str) -> Result<SimConfig> {
    let config: SimConfig =
        serde_json::from_str(source).map_err(|e| Error::config(format!("config: {e}")))?;
    if config.cells.is_empty() {
        return Err(Error::config("config: `cells` must contain at least one cell"));
    }
    if config.workers == Some(0) {
        return Err(Error::config("config: `workers` must be at least 1"));
    }
    for cell in &config.cells {
        cell.validate()?;
    }
    Ok(config)
}

fn env_workers() -> Option<String> {
    std::env::var("SLABTEST_WORKERS").ok()
}

/// Worker budget: flag, else config, else SLABTEST_WORKERS, else 1.
fn resolve_workers(flag: Option<usize>, config: Option<usize>, env: Option<&str>) -> Result<usize> {
    let from_env = match env {
        None => None,
        Some(v) => Some(v.trim().parse::<usize>().ok().filter(|k| *k >= 1).ok_or_else(
            || Error::config(format!("SLABTEST_WORKERS=`{v}` is not a positive integer")),
        )?),
    };
    match flag.or(config).or(from_env).unwrap_or(1) {
        0 => Err(Error::config("workers must be at least 1")),
        k => Ok(k),
    }
}

/// Read an observation file: one decimal per line, optional first line `x`
/// as a header, blank lines ignored.
pub fn read_observations(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let field = line.trim();
        if field.is_empty() || (lineno == 0 && field == "x") {
            continue;
        }
        let v: f64 = field.parse().map_err(|_| {
            Error::config(format!(
                "{}:{}: `{field}` is not a decimal number",
                path.display(),
                lineno + 1
            ))
        })?;
        out.push(v);
    }
    Ok(out)
}

/// 17 significant digits: the shortest fixed width at which every f64
/// round-trips exactly through its decimal text.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn json_num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => fmt_float(v),
        _ => "null".to_string(),
    }
}

fn header_comment() -> String {
    format!("# slabtest {}\n", crate::VERSION)
}

/// The sweep table as CSV: version comment, fixed column order, standard
/// errors left empty for single-replication cells.
pub fn metrics_csv(rows: &[SweepRow]) -> String {
    let mut out = header_comment();
    out.push_str(METRICS_COLUMNS);
    out.push('\n');
    for row in rows {
        let m = &row.metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.procedure_id,
            row.cell.prior_id,
            row.cell.n,
            row.cell.s,
            fmt_float(row.cell.mu),
            row.cell.scenario,
            fmt_float(row.t),
            row.cell.reps,
            fmt_float(m.fdr),
            fmt_opt(m.fdr_se),
            fmt_float(m.fnr),
            fmt_opt(m.fnr_se),
            fmt_float(m.mean_rejections),
        ));
    }
    out
}

/// Analyze one observation file: ŵ over [1/n, 1], then (optionally) one
/// procedure run at that weight.  Returns the JSON report.
pub fn analyze(input: &Path, prior_id: &str, procedure: Option<&str>, t: Option<f64>) -> Result<String> {
    let prior = SlabPrior::parse(prior_id)?;
    let batch = ObservationBatch::new(read_observations(input)?)?;
    let n = batch.len();
    let est = estimate_weight(&prior, &batch, 1.0 / n as f64)?;
    let outcome = match procedure {
        None => None,
        Some(id) => {
            let t = t.ok_or_else(|| Error::config("analyze: --t is required with --procedure"))?;
            let w = requires_weight(id).then_some(est.w_hat);
            Some(dispatch(&prior, &batch, id, t, w)?)
        }
    };
    Ok(analyze_json(&prior, n, &est, outcome.as_ref()))
}

/// Hand-assembled analyze report: stable key order, floats at 17
/// significant digits, `null` for absent optionals.
pub fn analyze_json(
    prior: &SlabPrior,
    n: usize,
    est: &WeightEstimate,
    outcome: Option<&TestOutcome>,
) -> String {
    let mut s = String::with_capacity(256 + outcome.map_or(0, |o| 32 * o.values.len()));
    s.push_str("{\n");
    s.push_str(&format!("  \"slabtest_version\": \"{}\",\n", crate::VERSION));
    s.push_str(&format!("  \"prior\": \"{}\",\n", prior.id_string()));
    s.push_str(&format!("  \"n\": {n},\n"));
    s.push_str(&format!("  \"w_hat\": {},\n", fmt_float(est.w_hat)));
    s.push_str(&format!("  \"at_lower_boundary\": {},\n", est.at_lower_boundary));
    s.push_str(&format!("  \"at_upper_boundary\": {}", est.at_upper_boundary));
    if let Some(o) = outcome {
        s.push_str(",\n");
        s.push_str(&format!("  \"procedure\": \"{}\",\n", o.procedure_id));
        s.push_str(&format!("  \"t\": {},\n", fmt_float(o.t)));
        s.push_str(&format!("  \"w_used\": {},\n", json_num(o.w_used)));
        s.push_str(&format!("  \"omega\": {},\n", json_num(o.omega)));
        s.push_str(&format!("  \"degenerate_w_one\": {},\n", o.degenerate_w_one));
        s.push_str(&format!("  \"rejections\": {},\n", o.n_rejections()));
        s.push_str(&format!(
            "  \"effective_abs_threshold\": {},\n",
            json_num(o.effective_abs_threshold)
        ));
        let values: Vec<String> = o.values.iter().map(|&v| fmt_float(v)).collect();
        s.push_str(&format!("  \"values\": [{}],\n", values.join(", ")));
        let reject: Vec<String> = o.reject.iter().map(|r| r.to_string()).collect();
        s.push_str(&format!("  \"reject\": [{}]", reject.join(", ")));
    }
    s.push_str("\n}\n");
    s
}

/// Preset grids behind `curves --figure N`.
///
/// All four figures share n = 10⁴, s ∈ {1000, 100, 10}, μ ∈ {0.01, 0.5, 1,
/// 2, …, 10}, levels t ∈ {0.05, 0.1, 0.2}, quasi-Cauchy and Laplace(0.5)
/// slabs, MMLE-calibrated weights and 2000 replications:
///
/// * figure 1: EBayesL and EBayesq, constant alternatives θᵢ = μ;
/// * figure 2: EBayesq.0 and EBayesq.hybrid, constant alternatives;
/// * figure 3: EBayesL and EBayesq, alternatives i.i.d. uniform on [0, 2μ];
/// * figure 4: EBayesq.0 and EBayesq.hybrid, uniform alternatives.
pub fn figure_cells(figure: u8, reps: Option<u64>, seed: Option<u64>) -> Result<Vec<SimulationCell>> {
    let (scenario, ids) = match figure {
        1 => (Scenario::Constant, ["ebayes-l", "ebayes-q"]),
        2 => (Scenario::Constant, ["ebayes-q0", "ebayes-hybrid"]),
        3 => (Scenario::UniformRandom, ["ebayes-l", "ebayes-q"]),
        4 => (Scenario::UniformRandom, ["ebayes-q0", "ebayes-hybrid"]),
        other => return Err(Error::config(format!("unknown figure {other}; expected 1-4"))),
    };
    const MUS: [f64; 12] = [0.01, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
    const TS: [f64; 3] = [0.05, 0.1, 0.2];
    let procedures: Vec<(String, f64)> = ids
        .iter()
        .flat_map(|id| TS.iter().map(move |&t| (id.to_string(), t)))
        .collect();
    let mut cells = Vec::new();
    for prior_id in ["quasi-cauchy", "laplace:0.5"] {
        for s in [1000, 100, 10] {
            for mu in MUS {
                cells.push(SimulationCell {
                    n: 10_000,
                    s,
                    mu,
                    scenario,
                    prior_id: prior_id.to_string(),
                    procedures: procedures.clone(),
                    reps: reps.unwrap_or(2000),
                    seed: seed.unwrap_or(0),
                    w_policy: WPolicy::Mmle,
                });
            }
        }
    }
    Ok(cells)
}

/// Parse a grid spec: `a,b,c`, `lin:lo:hi:k` or `log:lo:hi:k`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |msg: String| Error::config(format!("grid `{spec}`: {msg}"));
    let num = |s: &str| -> Result<f64> {
        let s = s.trim();
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad(format!("`{s}` is not a finite number")))
    };
    if let Some(rest) = spec.strip_prefix("lin:").or_else(|| spec.strip_prefix("log:")) {
        let log = spec.starts_with("log:");
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected lo:hi:count after the prefix".to_string()));
        }
        let lo = num(parts[0])?;
        let hi = num(parts[1])?;
        let k: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("count `{}` is not an integer", parts[2].trim())))?;
        if k < 2 {
            return Err(bad("count must be at least 2".to_string()));
        }
        // The negation also rejects NaN bounds ("nan" parses as a float).
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(lo < hi) {
            return Err(bad(format!("need lo < hi, got {lo} and {hi}")));
        }
        if log && lo <= 0.0 {
            return Err(bad(format!("log grids need lo > 0, got {lo}")));
        }
        let (a, b) = if log { (lo.ln(), hi.ln()) } else { (lo, hi) };
        let step = (b - a) / (k - 1) as f64;
        return Ok((0..k)
            .map(|i| match i {
                0 => lo,
                i if i + 1 == k => hi,
                _ => {
                    let v = a + step * i as f64;
                    if log {
                        v.exp()
                    } else {
                        v
                    }
                }
            })
            .collect());
    }
    spec.split(',').map(num).collect()
}

/// Threshold table: one row per grid value u, empty cells where u is
/// outside the domain of ξ (u ≤ (g/φ)(0)⁻¹ scale), ζ (u ∈ (0,1)) or χ
/// (u ∈ (0,1]).
pub fn thresholds_csv(prior: SlabPrior, grid: &[f64]) -> String {
    let ctx = ThresholdContext::new(prior);
    let mut out = header_comment();
    out.push_str("u,xi,zeta,chi\n");
    for &u in grid {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_float(u),
            fmt_opt(ctx.xi(u).ok()),
            fmt_opt(ctx.zeta(u).ok()),
            fmt_opt(ctx.chi(u).ok()),
        ));
    }
    out
}

/// Moment table over the w × τ product grid (w outer, τ inner); empty
/// cells where a moment is undefined (w outside (0, 1]).
pub fn moments_csv(prior: SlabPrior, w_grid: &[f64], tau_grid: &[f64]) -> String {
    let ctx = MomentContext::new(prior);
    let mut out = header_comment();
    out.push_str("w,tau,m_tilde,m1,m2\n");
    for &w in w_grid {
        let m_tilde = ctx.m_tilde(w).ok();
        for &tau in tau_grid {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_float(w),
                fmt_float(tau),
                fmt_opt(m_tilde),
                fmt_opt(ctx.m1(tau, w).ok()),
                fmt_opt(ctx.m2(tau, w).ok()),
            ));
        }
    }
    out
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
