//! Pseudo-thresholds turning value cutoffs into |X| cutoffs.
//!
//! With r(w,t) = wt/((1−w)(1−t)):
//!
//! - ℓ-value ≤ t  ⟺  (φ/g)(|X|) ≤ r, so ξ = (φ/g)⁻¹ is the ℓ threshold;
//! - β(|X|) = 1/w defines ζ(w), the boundary where the posterior starts to
//!   favor the slab; ζ(w) = ξ(w/(1+w));
//! - q-value ≤ t  ⟺  (Φ̄/Ḡ)(|X|) ≤ r, so χ = (Φ̄/Ḡ)⁻¹ is the q threshold.
//!
//! All three forward maps are strictly monotone with awkward derivatives, so
//! inversion is bracketed bisection: the initial bracket end grows
//! geometrically from the asymptotic guess √(2 log(1/u)) + 5 until the sign
//! changes, then 200 halvings pin the root far below the 1e−10 contract.
//! Forward evaluations run in log space (log φ − log g, log Φ̄ − log Ḡ) so
//! targets far past underflow (u ≪ 1e−300 never arises, but u ~ 1e−9 at
//! n = 10⁷ does) lose nothing.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::prior::SlabPrior;
use crate::stdnorm::ln_upper_tail;

/// r(w, t) = wt/((1−w)(1−t)), the scalar that plays the role of a threshold
/// for ℓ- and q-values. Zero iff w = 0 or t = 0, strictly increasing in each
/// argument.
pub fn mixing_ratio(w: f64, t: f64) -> Result<f64> {
    if !((0.0..1.0).contains(&w) && (0.0..1.0).contains(&t)) {
        return Err(Error::domain(format!(
            "mixing_ratio: w={w}, t={t} must both lie in [0, 1)"
        )));
    }
    Ok(w * t / ((1.0 - w) * (1.0 - t)))
}

const FN_XI: u8 = 0;
const FN_ZETA: u8 = 1;
const FN_CHI: u8 = 2;

/// Threshold solver for one prior, with an optional root memo.
///
/// Without the cache the context is pure and freely shareable; with it, the
/// memo is behind a mutex so a shared context stays consistent. Correctness
/// never depends on the cache: it only replays previously computed roots for
/// bit-identical targets.
pub struct ThresholdContext {
    prior: SlabPrior,
    cache: Option<Mutex<HashMap<(u8, u64), f64>>>,
}

impl ThresholdContext {
    pub fn new(prior: SlabPrior) -> Self {
        ThresholdContext { prior, cache: None }
    }

    pub fn with_cache(prior: SlabPrior) -> Self {
        ThresholdContext { prior, cache: Some(Mutex::new(HashMap::new())) }
    }

    pub fn prior(&self) -> &SlabPrior {
        &self.prior
    }

    /// Largest admissible ξ target: (φ/g)(0).
    pub fn xi_upper_bound(&self) -> f64 {
        (-self.prior.log_density_ratio(0.0)).exp()
    }

    /// ξ(u): the x ≥ 0 with φ(x)/g(x) = u, for 0 < u ≤ (φ/g)(0).
    pub fn xi(&self, u: f64) -> Result<f64> {
        let bound = self.xi_upper_bound();
        if !(u > 0.0 && u <= bound) {
            return Err(Error::domain(format!(
                "xi: u={u} outside (0, {bound}] (upper bound is (phi/g)(0))"
            )));
        }
        if u == bound {
            return Ok(0.0);
        }
        self.memoized(FN_XI, u, |x| {
            // φ/g = u ⟺ −log(g/φ) = log u, decreasing in x.
            -self.prior.log_density_ratio(x) - u.ln()
        })
    }

    /// ζ(w): the x ≥ 0 with β(x) = 1/w, for w ∈ (0, 1]. Coincides with
    /// ξ(w/(1+w)) but is solved on β directly so that identity stays a
    /// genuine cross-check.
    pub fn zeta(&self, w: f64) -> Result<f64> {
        if !(w > 0.0 && w <= 1.0) {
            return Err(Error::domain(format!("zeta: w={w} outside (0, 1]")));
        }
        let target = 1.0 / w;
        self.memoized(FN_ZETA, w, |x| {
            // β increasing; negate so the bisection sees a decreasing map.
            let beta = libm::expm1(self.prior.log_density_ratio(x));
            if beta.is_infinite() {
                f64::NEG_INFINITY
            } else {
                target - beta
            }
        })
    }

    /// χ(u): the x ≥ 0 with Φ̄(x)/Ḡ(x) = u, for u ∈ (0, 1]; χ(1) = 0.
    pub fn chi(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::domain(format!("chi: u={u} outside (0, 1]")));
        }
        if u == 1.0 {
            return Ok(0.0);
        }
        self.memoized(FN_CHI, u, |x| {
            ln_upper_tail(x) - self.prior.ln_slab_tail(x) - u.ln()
        })
    }

    /// Bisection on a decreasing map with root where `excess` crosses zero.
    /// `key` identifies (function, target) for the optional memo.
    fn memoized<F: Fn(f64) -> f64>(&self, fid: u8, target: f64, excess: F) -> Result<f64> {
        if let Some(cache) = &self.cache {
            if let Some(&root) = cache.lock().unwrap().get(&(fid, target.to_bits())) {
                return Ok(root);
            }
        }
        let root = bisect_decreasing(&excess, target)?;
        if let Some(cache) = &self.cache {
            cache.lock().unwrap().insert((fid, target.to_bits()), root);
        }
        Ok(root)
    }
}

/// Root of a strictly decreasing `excess` with excess(0) ≥ 0. The bracket end
/// starts at √(2 log(1/target)) + 5 (clamped) and doubles until the sign
/// flips.
fn bisect_decreasing<F: Fn(f64) -> f64>(excess: &F, target: f64) -> Result<f64> {
    let mut hi = (2.0 * (1.0 / target).ln()).max(0.0).sqrt() + 5.0;
    let mut grow = 0;
    while excess(hi) > 0.0 {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::domain(format!(
                "threshold inversion: no sign change below {hi:e} for target {target}"
            )));
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * (1.0 + hi) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
