//! Per-coordinate evidence values and the multiple-testing procedures.
//!
//! Posterior quantities at weight w (writing r = w/(1−w)):
//!
//! - ℓ-value  ℓ(x;w) = (1−w)φ/((1−w)φ + wg) = 1/(1 + r·(g/φ)(x)), the
//!   posterior probability of θᵢ = 0;
//! - q-value  q(x;w) = 1/(1 + r·(Ḡ/Φ̄)(|x|)), the tail analogue;
//! - m-value  m(x;w) = ((1−w)φ + w g₋(|x|))/((1−w)φ + w g), one minus the
//!   posterior mass of the bigger half-line, with q ≤ ℓ ≤ m pointwise.
//!
//! Procedures (all calibrate ŵ by marginal maximum likelihood over [1/n, 1]
//! unless given a weight explicitly):
//!
//! - `ebayes_l` / `ebayes_q`: reject where the ℓ-/q-value is ≤ t;
//! - `ebayes_q0`: as `ebayes_q` but rejects nothing unless ŵ > ωₙ where
//!   ωₙ = Lₙ/(n·Ḡ(√(2.1 log n)));
//! - `ebayes_hybrid`: as `ebayes_q`, falling back to Bonferroni at t/n when
//!   ŵ ≤ ωₙ;
//! - `sc_procedure`: rejects the k̂ smallest ℓ-values, k̂ the largest k whose
//!   running mean of sorted ℓ-values is ≤ t;
//! - `mci_procedure`: rejects where the m-value is < t (strict), t < 1/2;
//! - `bh_procedure` / `bonferroni_procedure`: classical baselines on the
//!   two-sided p-values.
//!
//! Every rule thresholds its values directly; the equivalent |X| cutoffs
//! (ξ, χ, normal quantiles) are recorded for cross-checking but are never
//! the decision path, since their equivalences carry preconditions on
//! r(w, t) that the value form does not need.

use crate::error::{Error, Result};
use crate::prior::SlabPrior;
use crate::stdnorm::{ln_upper_tail, p_value, phi, upper_tail_inv};
use crate::thresholds::{mixing_ratio, ThresholdContext};
use crate::weight::{estimate_weight, ObservationBatch, WeightEstimate};

pub const PROCEDURE_IDS: [&str; 8] = [
    "ebayes-l",
    "ebayes-q",
    "ebayes-q0",
    "ebayes-hybrid",
    "sc",
    "mci",
    "bh",
    "bonferroni",
];

/// The decision of one procedure on one batch.
#[derive(Clone, Debug)]
pub struct TestOutcome {
    pub procedure_id: String,
    /// Cutoff level the rule was run at.
    pub t: f64,
    /// Weight the values were computed under; None for p-value baselines.
    pub w_used: Option<f64>,
    /// The ℓ-, q-, m- or p-values actually thresholded.
    pub values: Vec<f64>,
    pub reject: Vec<bool>,
    /// |X| cutoff equivalent to the value rule, when one exists.
    pub effective_abs_threshold: Option<f64>,
    /// Gate level ωₙ for the gated q-value rules.
    pub omega: Option<f64>,
    /// w = 1 makes every ℓ/q-value 0 and the value rules reject everything.
    pub degenerate_w_one: bool,
}

impl TestOutcome {
    pub fn n_rejections(&self) -> usize {
        self.reject.iter().filter(|r| **r).count()
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::domain(format!("cutoff t={t} outside (0, 1)")));
    }
    Ok(())
}

fn check_w(w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::domain(format!("weight w={w} outside [0, 1]")));
    }
    Ok(())
}

/// ℓ-value from a precomputed log-ratio log(g/φ): the one code path shared
/// by the vector op, the procedures and the large-n simulation engine.
#[inline]
pub fn l_value_from_log_ratio(lr: f64, w: f64) -> f64 {
    if w == 0.0 {
        1.0
    } else if w == 1.0 {
        0.0
    } else {
        let ln_r = (w / (1.0 - w)).ln();
        1.0 / (1.0 + (ln_r + lr).exp())
    }
}

/// q-value at a single point.
pub fn q_value_at(prior: &SlabPrior, x: f64, w: f64) -> f64 {
    if w == 0.0 {
        return 1.0;
    }
    if w == 1.0 {
        return 0.0;
    }
    let t = x.abs();
    let ln_ratio = prior.ln_slab_tail(t) - ln_upper_tail(t);
    let ln_r = (w / (1.0 - w)).ln();
    1.0 / (1.0 + (ln_r + ln_ratio).exp())
}

/// m-value at a single point; w = 1 breaks the defining ratio.
pub fn m_value_at(prior: &SlabPrior, x: f64, w: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&w) {
        return Err(Error::domain(format!("m-value: w={w} outside [0, 1)")));
    }
    let num = (1.0 - w) * phi(x) + w * prior.half_conv_neg(x.abs());
    let den = (1.0 - w) * phi(x) + w * prior.slab_density(x);
    if den <= 0.0 {
        return Ok(0.0); // φ and g both underflowed: |x| astronomically large
    }
    Ok(num / den)
}

/// ℓ-values for the whole batch at weight w.
pub fn l_values(prior: &SlabPrior, batch: &ObservationBatch, w: f64) -> Result<Vec<f64>> {
    check_w(w)?;
    Ok(batch
        .x()
        .iter()
        .map(|&x| l_value_from_log_ratio(prior.log_density_ratio(x), w))
        .collect())
}

/// q-values for the whole batch at weight w.
pub fn q_values(prior: &SlabPrior, batch: &ObservationBatch, w: f64) -> Result<Vec<f64>> {
    check_w(w)?;
    Ok(batch.x().iter().map(|&x| q_value_at(prior, x, w)).collect())
}

/// m-values for the whole batch at weight w ∈ [0, 1).
pub fn m_values(prior: &SlabPrior, batch: &ObservationBatch, w: f64) -> Result<Vec<f64>> {
    batch.x().iter().map(|&x| m_value_at(prior, x, w)).collect()
}

/// MMLE weight with the standard lower bound 1/n.
fn mmle(prior: &SlabPrior, batch: &ObservationBatch) -> Result<WeightEstimate> {
    estimate_weight(prior, batch, 1.0 / batch.len() as f64)
}

/// ℓ threshold ξ(r(w,t)) when the equivalence precondition r ≤ (φ/g)(0)
/// holds; once r exceeds it even x = 0 is rejected and the cutoff is 0.
fn l_abs_threshold(prior: &SlabPrior, w: f64, t: f64) -> Result<f64> {
    if w == 1.0 {
        return Ok(0.0);
    }
    let ctx = ThresholdContext::new(prior.clone());
    let r = mixing_ratio(w, t)?;
    if r == 0.0 {
        return Ok(f64::INFINITY); // w = 0: nothing is ever rejected
    }
    if r <= ctx.xi_upper_bound() {
        ctx.xi(r)
    } else {
        Ok(0.0)
    }
}

/// q threshold χ(r(w,t)) under its precondition r ≤ 1, else 0.
fn q_abs_threshold(prior: &SlabPrior, w: f64, t: f64) -> Result<f64> {
    if w == 1.0 {
        return Ok(0.0);
    }
    let ctx = ThresholdContext::new(prior.clone());
    let r = mixing_ratio(w, t)?;
    if r == 0.0 {
        return Ok(f64::INFINITY);
    }
    if r <= 1.0 {
        ctx.chi(r)
    } else {
        Ok(0.0)
    }
}

/// ℓ-value rule at an externally supplied weight.
pub fn ebayes_l_at(prior: &SlabPrior, batch: &ObservationBatch, w: f64, t: f64) -> Result<TestOutcome> {
    check_t(t)?;
    check_w(w)?;
    let values = l_values(prior, batch, w)?;
    let reject: Vec<bool> = values.iter().map(|&v| v <= t).collect();
    Ok(TestOutcome {
        procedure_id: "ebayes-l".to_string(),
        t,
        w_used: Some(w),
        effective_abs_threshold: Some(l_abs_threshold(prior, w, t)?),
        omega: None,
        degenerate_w_one: w == 1.0,
        values,
        reject,
    })
}

/// EBayesL: MMLE ŵ, then reject where ℓ̂ᵢ ≤ t.
pub fn ebayes_l(prior: &SlabPrior, batch: &ObservationBatch, t: f64) -> Result<TestOutcome> {
    let est = mmle(prior, batch)?;
    ebayes_l_at(prior, batch, est.w_hat, t)
}

/// q-value rule at an externally supplied weight.
pub fn ebayes_q_at(prior: &SlabPrior, batch: &ObservationBatch, w: f64, t: f64) -> Result<TestOutcome> {
    check_t(t)?;
    check_w(w)?;
    let values = q_values(prior, batch, w)?;
    let reject: Vec<bool> = values.iter().map(|&v| v <= t).collect();
    Ok(TestOutcome {
        procedure_id: "ebayes-q".to_string(),
        t,
        w_used: Some(w),
        effective_abs_threshold: Some(q_abs_threshold(prior, w, t)?),
        omega: None,
        degenerate_w_one: w == 1.0,
        values,
        reject,
    })
}

/// EBayesq: MMLE ŵ, then reject where q̂ᵢ ≤ t.
pub fn ebayes_q(prior: &SlabPrior, batch: &ObservationBatch, t: f64) -> Result<TestOutcome> {
    let est = mmle(prior, batch)?;
    ebayes_q_at(prior, batch, est.w_hat, t)
}

/// ωₙ = L/(n·Ḡ(√(2.1 log n))), the minimal credible weight.
pub fn omega_n(prior: &SlabPrior, n: usize, l_n: f64) -> Result<f64> {
    if n <= 2 {
        return Err(Error::domain(format!("omega_n: n={n} must exceed 2")));
    }
    // The negation also rejects a NaN bound.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(l_n > 0.0) {
        return Err(Error::domain(format!("omega_n: L={l_n} must be > 0")));
    }
    let n_f = n as f64;
    Ok(l_n / (n_f * prior.slab_tail((2.1 * n_f.ln()).sqrt())))
}

fn default_l_n(n: usize) -> f64 {
    (n as f64).ln().ln()
}

/// Gated q-value rule at a supplied weight: rejects nothing unless w > ωₙ.
pub fn ebayes_q0_at(
    prior: &SlabPrior,
    batch: &ObservationBatch,
    w: f64,
    t: f64,
    l_n: Option<f64>,
) -> Result<TestOutcome> {
    let omega = omega_n(prior, batch.len(), l_n.unwrap_or_else(|| default_l_n(batch.len())))?;
    let mut out = ebayes_q_at(prior, batch, w, t)?;
    out.procedure_id = "ebayes-q0".to_string();
    out.omega = Some(omega);
    if w <= omega {
        out.reject.iter_mut().for_each(|r| *r = false);
        out.effective_abs_threshold = None;
    }
    Ok(out)
}

/// EBayesq.0: EBayesq with the small-weight gate ŵ > ωₙ.
pub fn ebayes_q0(
    prior: &SlabPrior,
    batch: &ObservationBatch,
    t: f64,
    l_n: Option<f64>,
) -> Result<TestOutcome> {
    let est = mmle(prior, batch)?;
    ebayes_q0_at(prior, batch, est.w_hat, t, l_n)
}

/// Gated q-value rule with a Bonferroni fallback, at a supplied weight.
pub fn ebayes_hybrid_at(
    prior: &SlabPrior,
    batch: &ObservationBatch,
    w: f64,
    t: f64,
    l_n: Option<f64>,
) -> Result<TestOutcome> {
    let omega = omega_n(prior, batch.len(), l_n.unwrap_or_else(|| default_l_n(batch.len())))?;
    if w > omega {
        let mut out = ebayes_q_at(prior, batch, w, t)?;
        out.procedure_id = "ebayes-hybrid".to_string();
        out.omega = Some(omega);
        return Ok(out);
    }
    check_t(t)?;
    let n = batch.len() as f64;
    let cut = t / n;
    let values: Vec<f64> = batch.x().iter().map(|&x| p_value(x)).collect();
    let reject: Vec<bool> = values.iter().map(|&p| p <= cut).collect();
    Ok(TestOutcome {
        procedure_id: "ebayes-hybrid".to_string(),
        t,
        w_used: Some(w),
        effective_abs_threshold: Some(upper_tail_inv(cut / 2.0)?),
        omega: Some(omega),
        degenerate_w_one: false,
        values,
        reject,
    })
}

/// EBayesq.hybrid: EBayesq when ŵ > ωₙ, Bonferroni at t/n otherwise.
pub fn ebayes_hybrid(
    prior: &SlabPrior,
    batch: &ObservationBatch,
    t: f64,
    l_n: Option<f64>,
) -> Result<TestOutcome> {
    let est = mmle(prior, batch)?;
    ebayes_hybrid_at(prior, batch, est.w_hat, t, l_n)
}

/// k̂ and the rejection mask for the sum-criterion rule on given values:
/// k̂ = max{k : mean of the k smallest values ≤ t} (0 when even the smallest
/// exceeds t), rejecting the k̂ smallest with ties broken by original index.
pub fn sc_reject_mask(values: &[f64], t: f64) -> (usize, Vec<bool>) {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut k_hat = 0usize;
    let mut running = 0.0f64;
    for (i, v) in sorted.iter().enumerate() {
        running += v;
        if running <= t * (i + 1) as f64 {
            k_hat = i + 1;
        }
    }
    let mut reject = vec![false; values.len()];
    if k_hat == 0 {
        return (0, reject);
    }
    let cutoff = sorted[k_hat - 1];
    let strictly_below = sorted.partition_point(|v| *v < cutoff);
    let mut at_cutoff_quota = k_hat - strictly_below;
    for (i, &v) in values.iter().enumerate() {
        if v < cutoff {
            reject[i] = true;
        } else if v == cutoff && at_cutoff_quota > 0 {
            reject[i] = true;
            at_cutoff_quota -= 1;
        }
    }
    (k_hat, reject)
}

/// SC rule on precomputed ℓ-values plus the matching |X| data (so the
/// simulation engine can feed its streaming buffers through the same code).
pub fn sc_outcome_from_values(
    values: Vec<f64>,
    x: &[f64],
    w: f64,
    t: f64,
) -> TestOutcome {
    let (k_hat, reject) = sc_reject_mask(&values, t);
    let threshold = if k_hat == 0 {
        None
    } else {
        Some(
            x.iter()
                .zip(&reject)
                .filter(|(_, r)| **r)
                .map(|(v, _)| v.abs())
                .fold(f64::INFINITY, f64::min),
        )
    };
    TestOutcome {
        procedure_id: "sc".to_string(),
        t,
        w_used: Some(w),
        effective_abs_threshold: threshold,
        omega: None,
        degenerate_w_one: w == 1.0,
        values,
        reject,
    }
}

/// SC rule at an externally supplied weight.
pub fn sc_procedure_at(prior: &SlabPrior, batch: &ObservationBatch, w: f64, t: f64) -> Result<TestOutcome> {
    check_t(t)?;
    check_w(w)?;
    let values = l_values(prior, batch, w)?;
    Ok(sc_outcome_from_values(values, batch.x(), w, t))
}

/// SC: rejects the k̂ smallest MMLE ℓ-values by the running-mean criterion.
pub fn sc_procedure(prior: &SlabPrior, batch: &ObservationBatch, t: f64) -> Result<TestOutcome> {
    let est = mmle(prior, batch)?;
    sc_procedure_at(prior, batch, est.w_hat, t)
}

/// m-value rule at an externally supplied weight (strict inequality).
pub fn mci_procedure_at(prior: &SlabPrior, batch: &ObservationBatch, w: f64, t: f64) -> Result<TestOutcome> {
    if !(t > 0.0 && t < 0.5) {
        return Err(Error::domain(format!("mci: t={t} outside (0, 1/2)")));
    }
    let values = m_values(prior, batch, w)?;
    let reject: Vec<bool> = values.iter().map(|&v| v < t).collect();
    Ok(TestOutcome {
        procedure_id: "mci".to_string(),
        t,
        w_used: Some(w),
        effective_abs_threshold: None, // no m-value inverse is defined
        omega: None,
        degenerate_w_one: false,
        values,
        reject,
    })
}

/// MCI: marginal credible interval rule, m̂ᵢ < t at the MMLE weight.
pub fn mci_procedure(prior: &SlabPrior, batch: &ObservationBatch, t: f64) -> Result<TestOutcome> {
    let est = mmle(prior, batch)?;
    mci_procedure_at(prior, batch, est.w_hat, t)
}

/// Benjamini-Hochberg step-up on the two-sided p-values.
pub fn bh_procedure(batch: &ObservationBatch, alpha: f64) -> Result<TestOutcome> {
    check_t(alpha)?;
    let n = batch.len();
    let values: Vec<f64> = batch.x().iter().map(|&x| p_value(x)).collect();
    let mut sorted = values.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut k_hat = 0usize;
    for (i, p) in sorted.iter().enumerate() {
        if *p <= alpha * (i + 1) as f64 / n as f64 {
            k_hat = i + 1;
        }
    }
    let (reject, threshold): (Vec<bool>, Option<f64>) = if k_hat == 0 {
        (vec![false; n], None)
    } else {
        let cut = sorted[k_hat - 1];
        let mask: Vec<bool> = values.iter().map(|&p| p <= cut).collect();
        let min_abs = batch
            .x()
            .iter()
            .zip(&mask)
            .filter(|(_, r)| **r)
            .map(|(v, _)| v.abs())
            .fold(f64::INFINITY, f64::min);
        (mask, Some(min_abs))
    };
    Ok(TestOutcome {
        procedure_id: "bh".to_string(),
        t: alpha,
        w_used: None,
        effective_abs_threshold: threshold,
        omega: None,
        degenerate_w_one: false,
        values,
        reject,
    })
}

/// Bonferroni: reject where the two-sided p-value is ≤ alpha/n.
pub fn bonferroni_procedure(batch: &ObservationBatch, alpha: f64) -> Result<TestOutcome> {
    check_t(alpha)?;
    let n = batch.len() as f64;
    let cut = alpha / n;
    let values: Vec<f64> = batch.x().iter().map(|&x| p_value(x)).collect();
    let reject: Vec<bool> = values.iter().map(|&p| p <= cut).collect();
    Ok(TestOutcome {
        procedure_id: "bonferroni".to_string(),
        t: alpha,
        w_used: None,
        effective_abs_threshold: Some(upper_tail_inv(cut / 2.0)?),
        omega: None,
        degenerate_w_one: false,
        values,
        reject,
    })
}
