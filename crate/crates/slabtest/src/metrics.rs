//! False discovery / non-discovery proportions and their aggregation.
//!
//! Per replication, against a truth vector θ₀ with σ₀ nonzero coordinates:
//!
//!   FDP = #{i : rejected, θ₀ᵢ = 0} / (1 ∨ #rejections),
//!   FNP = #{i : not rejected, θ₀ᵢ ≠ 0} / (1 ∨ σ₀),
//!
//! whose Monte Carlo means estimate the FDR and FNR; the classification
//! risk is their sum.  Records carry counts rather than masks so that
//! aggregating replications at n = 10⁷ stays memory-light.

use crate::error::{Error, Result};
use crate::procedures::TestOutcome;

/// Discovery counts and proportions for one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub rejections: u64,
    pub true_rejections: u64,
    pub n: u64,
    /// Number of nonzero coordinates of the truth.
    pub sigma0: u64,
    pub fdp: f64,
    pub fnp: f64,
}

impl MetricsRecord {
    /// Build a record from counts, enforcing the counting identities.
    pub fn from_counts(rejections: u64, true_rejections: u64, n: u64, sigma0: u64) -> Result<Self> {
        if sigma0 > n || rejections > n {
            return Err(Error::domain(format!(
                "counts exceed the number of coordinates: rejections = {rejections}, \
                 sigma0 = {sigma0}, n = {n}"
            )));
        }
        if true_rejections > rejections.min(sigma0) {
            return Err(Error::domain(format!(
                "true rejections ({true_rejections}) exceed min(rejections = {rejections}, \
                 sigma0 = {sigma0})"
            )));
        }
        let fdp = (rejections - true_rejections) as f64 / rejections.max(1) as f64;
        let fnp = (sigma0 - true_rejections) as f64 / sigma0.max(1) as f64;
        Ok(MetricsRecord { rejections, true_rejections, n, sigma0, fdp, fnp })
    }
}

/// FDP/FNP of one outcome against the truth vector.
pub fn fdp_fnp(outcome: &TestOutcome, truth: &[f64]) -> Result<MetricsRecord> {
    if truth.len() != outcome.reject.len() {
        return Err(Error::domain(format!(
            "truth length {} does not match outcome length {}",
            truth.len(),
            outcome.reject.len()
        )));
    }
    let mut rejections = 0u64;
    let mut true_rejections = 0u64;
    let mut sigma0 = 0u64;
    for (&r, &theta) in outcome.reject.iter().zip(truth) {
        let signal = theta != 0.0;
        sigma0 += u64::from(signal);
        rejections += u64::from(r);
        true_rejections += u64::from(r && signal);
    }
    MetricsRecord::from_counts(rejections, true_rejections, truth.len() as u64, sigma0)
}

/// Monte Carlo aggregate over replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateMetrics {
    pub fdr: f64,
    pub fnr: f64,
    /// Standard errors (sample sd / √reps); absent for a single replication.
    pub fdr_se: Option<f64>,
    pub fnr_se: Option<f64>,
    pub reps: u64,
    pub mean_rejections: f64,
    /// Classification risk FDR + FNR.
    pub risk: f64,
}

/// Mean FDP/FNP with standard errors over a nonempty record list.
pub fn aggregate(records: &[MetricsRecord]) -> Result<AggregateMetrics> {
    if records.is_empty() {
        return Err(Error::domain("cannot aggregate an empty record list"));
    }
    let reps = records.len() as u64;
    let nf = reps as f64;
    let fdr = records.iter().map(|r| r.fdp).sum::<f64>() / nf;
    let fnr = records.iter().map(|r| r.fnp).sum::<f64>() / nf;
    let mean_rejections = records.iter().map(|r| r.rejections as f64).sum::<f64>() / nf;
    let se = |mean: f64, of: fn(&MetricsRecord) -> f64| {
        (reps >= 2).then(|| {
            let ss = records.iter().map(|r| (of(r) - mean).powi(2)).sum::<f64>();
            (ss / (nf - 1.0)).sqrt() / nf.sqrt()
        })
    };
    Ok(AggregateMetrics {
        fdr,
        fnr,
        fdr_se: se(fdr, |r| r.fdp),
        fnr_se: se(fnr, |r| r.fnp),
        reps,
        mean_rejections,
        risk: fdr + fnr,
    })
}
