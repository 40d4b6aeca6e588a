//! Scenario generation and the deterministic parallel Monte Carlo engine.
//!
//! A `SimulationCell` fixes the data-generating process (n, s, μ, scenario),
//! the analysis (prior, procedures with levels, weight policy), and the
//! replication budget.  Scenarios place signals on the first s coordinates:
//!
//! - `constant`:       θᵢ = μ,
//! - `uniform-random`: θᵢ ~ U(0, 2μ) i.i.d.,
//! - `large-class`:    θᵢ = μ·√(2·log(n/s)), the boundary amplitude of the
//!   "large signal" class scaled by μ.
//!
//! All randomness is counter-based: coordinate i of replication `rep` reads
//! from `derive_key([seed, domain, cell_hash, rep])` at index i, so any
//! coordinate can be generated independently and the result is bit-identical
//! for every worker count and scheduling order.  The cell hash covers only
//! the data-generating fields (n, s, μ, scenario): cells that differ in
//! prior, procedures, or weight policy see common random numbers, which
//! pairs their Monte Carlo comparisons.
//!
//! Replications run in parallel for moderate n; above `REP_PARALLEL_MAX_N`
//! the engine switches to serial replications with block-parallel
//! generation, keeping peak memory at a few vectors of length n.

use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::{aggregate, fdp_fnp, AggregateMetrics, MetricsRecord};
use crate::moments::MomentContext;
use crate::prior::SlabPrior;
use crate::procedures::{
    bh_procedure, bonferroni_procedure, ebayes_hybrid_at, ebayes_l_at, ebayes_q0_at, ebayes_q_at,
    mci_procedure_at, sc_procedure_at, TestOutcome, PROCEDURE_IDS,
};
use crate::rng::{derive_key, normal_at, uniform_at, DOMAIN_NOISE, DOMAIN_SIGNAL};
use crate::weight::{estimate_weight, ObservationBatch};

/// Coordinate block size for parallel generation at large n.
pub const BLOCK: usize = 1_000_000;

/// Above this n, replications run serially and parallelism moves inside the
/// replication, bounding peak memory.
const REP_PARALLEL_MAX_N: u64 = 2_000_000;

/// Signal placement scheme for the nonzero coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Constant,
    UniformRandom,
    LargeClass,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Constant => "constant",
            Scenario::UniformRandom => "uniform-random",
            Scenario::LargeClass => "large-class",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Scenario::Constant),
            "uniform-random" => Ok(Scenario::UniformRandom),
            "large-class" => Ok(Scenario::LargeClass),
            other => Err(Error::config(format!(
                "unknown scenario `{other}`; known: constant, uniform-random, large-class"
            ))),
        }
    }
}

/// How each replication resolves the spike weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WPolicy {
    /// Marginal maximum likelihood over [1/n, 1], re-estimated per replication.
    Mmle,
    /// A fixed weight shared by all replications.
    Fixed(f64),
    /// w* solving s = (n−s)·w·m̃(w), computed once per cell.
    WStar,
}

impl Serialize for WPolicy {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            WPolicy::Mmle => ser.serialize_str("mmle"),
            WPolicy::WStar => ser.serialize_str("wstar"),
            WPolicy::Fixed(w) => {
                use serde::ser::SerializeMap;
                let mut map = ser.serialize_map(Some(1))?;
                map.serialize_entry("fixed", w)?;
                map.end()
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FixedRepr {
    fixed: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WPolicyRepr {
    Name(String),
    Fixed(FixedRepr),
}

impl<'de> Deserialize<'de> for WPolicy {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        match WPolicyRepr::deserialize(de)? {
            WPolicyRepr::Name(s) => match s.as_str() {
                "mmle" => Ok(WPolicy::Mmle),
                "wstar" => Ok(WPolicy::WStar),
                other => Err(D::Error::custom(format!(
                    "unknown w_policy `{other}`; known: \"mmle\", \"wstar\", {{\"fixed\": w}}"
                ))),
            },
            WPolicyRepr::Fixed(f) => Ok(WPolicy::Fixed(f.fixed)),
        }
    }
}

/// One Monte Carlo experiment: data-generating process, analysis, budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationCell {
    pub n: u64,
    pub s: u64,
    pub mu: f64,
    pub scenario: Scenario,
    pub prior_id: String,
    /// (procedure_id, level t) pairs, all run on the same data.
    pub procedures: Vec<(String, f64)>,
    #[serde(default = "default_reps")]
    pub reps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_w_policy")]
    pub w_policy: WPolicy,
}

fn default_reps() -> u64 {
    2000
}

fn default_w_policy() -> WPolicy {
    WPolicy::Mmle
}

fn fnv1a(h: u64, v: u64) -> u64 {
    v.to_le_bytes().iter().fold(h, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

impl SimulationCell {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("cell field n must be at least 1".to_string()));
        }
        if self.s > self.n {
            return Err(Error::config(format!(
                "cell field s = {} exceeds n = {}",
                self.s, self.n
            )));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::config(format!("cell field mu = {} must be finite and >= 0", self.mu)));
        }
        if self.reps == 0 {
            return Err(Error::config("cell field reps must be at least 1".to_string()));
        }
        SlabPrior::parse(&self.prior_id)?;
        for (id, t) in &self.procedures {
            if !PROCEDURE_IDS.contains(&id.as_str()) {
                return Err(Error::UnknownProcedure(id.clone()));
            }
            if !(t.is_finite() && *t > 0.0 && *t < 1.0) {
                return Err(Error::config(format!(
                    "cell field procedures: level t = {t} for `{id}` must lie in (0, 1)"
                )));
            }
        }
        if let WPolicy::Fixed(w) = self.w_policy {
            if !(w.is_finite() && (0.0..=1.0).contains(&w)) {
                return Err(Error::config(format!(
                    "cell field w_policy: fixed weight {w} must lie in [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// FNV-1a over the data-generating fields only, so cells differing in
    /// analysis settings draw common random numbers.
    pub fn cell_hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325;
        h = fnv1a(h, self.n);
        h = fnv1a(h, self.s);
        h = fnv1a(h, self.mu.to_bits());
        h = fnv1a(
            h,
            match self.scenario {
                Scenario::Constant => 0,
                Scenario::UniformRandom => 1,
                Scenario::LargeClass => 2,
            },
        );
        h
    }

    fn describe(&self) -> String {
        format!(
            "cell(n={}, s={}, mu={}, scenario={}, prior={})",
            self.n, self.s, self.mu, self.scenario, self.prior_id
        )
    }
}

/// Observations for one replication: θ per scenario on coordinates 0..s,
/// plus standard normal noise everywhere.  Bit-identical for identical
/// (cell data fields, seed, rep) at any worker count.
pub fn generate(cell: &SimulationCell, rep: u64) -> Result<ObservationBatch> {
    cell.validate()?;
    if rep >= cell.reps {
        return Err(Error::domain(format!(
            "replication index {rep} out of range for reps = {}",
            cell.reps
        )));
    }
    let n = usize::try_from(cell.n)
        .map_err(|_| Error::domain(format!("n = {} does not fit in memory addressing", cell.n)))?;
    let s = cell.s as usize;
    let hash = cell.cell_hash();
    let noise_key = derive_key(&[cell.seed, DOMAIN_NOISE, hash, rep]);

    let mut truth = vec![0.0f64; n];
    match cell.scenario {
        Scenario::Constant => truth[..s].fill(cell.mu),
        Scenario::UniformRandom => {
            let signal_key = derive_key(&[cell.seed, DOMAIN_SIGNAL, hash, rep]);
            for (i, v) in truth[..s].iter_mut().enumerate() {
                *v = 2.0 * cell.mu * uniform_at(signal_key, i as u64);
            }
        }
        Scenario::LargeClass => {
            if s > 0 {
                let amp = cell.mu * (2.0 * (cell.n as f64 / cell.s as f64).ln()).sqrt();
                truth[..s].fill(amp);
            }
        }
    }

    let mut x = truth.clone();
    x.par_chunks_mut(BLOCK).enumerate().for_each(|(b, chunk)| {
        let base = (b * BLOCK) as u64;
        for (j, v) in chunk.iter_mut().enumerate() {
            *v += normal_at(noise_key, base + j as u64);
        }
    });
    ObservationBatch::with_truth(x, truth)
}

/// Whether a procedure thresholds posterior values (and so needs a spike
/// weight) rather than raw p-values.
pub fn requires_weight(id: &str) -> bool {
    !matches!(id, "bh" | "bonferroni")
}

/// Run one procedure by id.  `w` must be `Some` whenever
/// [`requires_weight`] holds for the id; p-value baselines ignore it.
pub fn dispatch(
    prior: &SlabPrior,
    batch: &ObservationBatch,
    id: &str,
    t: f64,
    w: Option<f64>,
) -> Result<TestOutcome> {
    let need_w = || w.expect("weight resolved before dispatch");
    match id {
        "ebayes-l" => ebayes_l_at(prior, batch, need_w(), t),
        "ebayes-q" => ebayes_q_at(prior, batch, need_w(), t),
        "ebayes-q0" => ebayes_q0_at(prior, batch, need_w(), t, None),
        "ebayes-hybrid" => ebayes_hybrid_at(prior, batch, need_w(), t, None),
        "sc" => sc_procedure_at(prior, batch, need_w(), t),
        "mci" => mci_procedure_at(prior, batch, need_w(), t),
        "bh" => bh_procedure(batch, t),
        "bonferroni" => bonferroni_procedure(batch, t),
        other => Err(Error::UnknownProcedure(other.to_string())),
    }
}

fn run_rep(
    cell: &SimulationCell,
    prior: &SlabPrior,
    wstar: Option<f64>,
    rep: u64,
) -> Result<Vec<MetricsRecord>> {
    let annotate = |e: Error| Error::domain(format!("{} rep {rep}: {e}", cell.describe()));
    let batch = generate(cell, rep)?;
    let w = if cell.procedures.iter().any(|(id, _)| requires_weight(id)) {
        Some(match cell.w_policy {
            WPolicy::Fixed(w) => w,
            WPolicy::WStar => wstar.expect("w* resolved for the wstar policy"),
            WPolicy::Mmle => {
                estimate_weight(prior, &batch, 1.0 / cell.n as f64).map_err(annotate)?.w_hat
            }
        })
    } else {
        None
    };
    let truth = batch.truth().expect("generated batches carry truth");
    cell.procedures
        .iter()
        .map(|(id, t)| fdp_fnp(&dispatch(prior, &batch, id, *t, w)?, truth))
        .collect::<Result<Vec<_>>>()
        .map_err(annotate)
}

/// Aggregated metrics for one procedure of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcedureAggregate {
    pub procedure_id: String,
    pub t: f64,
    pub metrics: AggregateMetrics,
}

/// Run every replication of the cell and aggregate per procedure, in the
/// cell's procedure order.  The result is independent of worker count.
pub fn run_cell(cell: &SimulationCell) -> Result<Vec<ProcedureAggregate>> {
    cell.validate()?;
    if cell.procedures.is_empty() {
        return Ok(Vec::new());
    }
    let prior = SlabPrior::parse(&cell.prior_id)?;
    let wstar = match cell.w_policy {
        WPolicy::WStar => Some(
            MomentContext::new(prior.clone())
                .solve_wstar(cell.n, cell.s)
                .map_err(|e| Error::domain(format!("{}: {e}", cell.describe())))?
                .w_star,
        ),
        _ => None,
    };

    let per_rep: Vec<Vec<MetricsRecord>> = if cell.n <= REP_PARALLEL_MAX_N {
        (0..cell.reps)
            .into_par_iter()
            .map(|rep| run_rep(cell, &prior, wstar, rep))
            .collect::<Result<_>>()?
    } else {
        (0..cell.reps).map(|rep| run_rep(cell, &prior, wstar, rep)).collect::<Result<_>>()?
    };

    cell.procedures
        .iter()
        .enumerate()
        .map(|(k, (id, t))| {
            let records: Vec<MetricsRecord> = per_rep.iter().map(|r| r[k]).collect();
            Ok(ProcedureAggregate {
                procedure_id: id.clone(),
                t: *t,
                metrics: aggregate(&records)?,
            })
        })
        .collect()
}

/// One row of the sweep table: a cell × procedure aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: SimulationCell,
    pub procedure_id: String,
    pub t: f64,
    pub metrics: AggregateMetrics,
}

/// Run every cell in order, fail-fast, and flatten to table rows.
pub fn sweep(cells: &[SimulationCell]) -> Result<Vec<SweepRow>> {
    if cells.is_empty() {
        return Err(Error::domain("sweep requires at least one cell"));
    }
    let mut rows = Vec::new();
    for cell in cells {
        for pa in run_cell(cell)? {
            rows.push(SweepRow {
                cell: cell.clone(),
                procedure_id: pa.procedure_id,
                t: pa.t,
                metrics: pa.metrics,
            });
        }
    }
    Ok(rows)
}

/// Run `f` on a dedicated pool of `workers` threads (or the global pool).
/// Results are bit-identical either way; the pool only changes wall time.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match workers {
        None => f(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .expect("building a rayon pool cannot fail with a positive thread count")
            .install(f),
    }
}
