//! Slab priors for the two-group model (1−w)δ₀ + w·γ.
//!
//! Each prior exposes the quantities the testing machinery consumes:
//!
//! - `slab_raw_density`  γ(u), the slab density itself;
//! - `slab_density`      g(x) = (γ ⋆ φ)(x), the marginal under the slab;
//! - `beta`              β(x) = g(x)/φ(x) − 1, the score kernel;
//! - `slab_tail`         Ḡ(x) = ∫ₓ^∞ g, the marginal upper tail;
//! - `half_conv_neg`     g₋(x) = ∫_{−∞}^0 φ(x−u)γ(u) du, the wrong-sign part;
//! - `raw_tail`          Γ̄(y) = ∫_y^∞ γ, with its inverse for sampling.
//!
//! Two closed-form families are provided. The quasi-Cauchy slab has
//! γ(u) = φ(0)(1 − |u|Φ̄(|u|)/φ(u)) and g(x) = φ(0)(1 − e^{−x²/2})/x², with
//! Cauchy-like tails (κ = 2). The Laplace(a) slab has γ(u) = (a/2)e^{−a|u|}
//! and exponential tails (κ = 1); its convolution is evaluated via
//! log-space terms lnA = a²/2 − a|x| + lnΦ̄(a−|x|) and the mirror lnB so no
//! intermediate e^{a²/2} can overflow.
//!
//! `Quadrature` wraps any prior and recomputes g, Ḡ and g₋ by adaptive
//! integration of γ alone, giving an independent route for validating the
//! closed forms. Tail mass beyond the integration window is restored from
//! Γ̄, which both families admit exactly (quasi-Cauchy: Γ̄(y) = φ(0)Φ̄(y)/φ(y);
//! Laplace: Γ̄(y) = e^{−ay}/2).

use crate::error::{Error, Result};
use crate::quad;
use crate::stdnorm::{
    ln_phi, ln_upper_tail, mills_ratio, phi, upper_tail, FRAC_1_SQRT_2PI, LN_SQRT_2PI,
};

/// A symmetric unimodal slab density γ.
#[derive(Clone, Debug, PartialEq)]
pub enum SlabPrior {
    QuasiCauchy,
    Laplace { a: f64 },
    /// Re-derives g, Ḡ, g₋ from γ of the inner prior by numeric integration.
    Quadrature(Box<SlabPrior>),
}

/// log(exp(a) + exp(b)) without overflow.
fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// log Mills ratio ln(Φ̄(y)/φ(y)) for any real y.
fn ln_mills(y: f64) -> f64 {
    if y >= 8.0 {
        mills_ratio(y).ln()
    } else {
        ln_upper_tail(y) + 0.5 * y * y + LN_SQRT_2PI
    }
}

/// Laplace(a) log-space convolution terms (lnA, lnB) at t = |x|.
fn laplace_ln_ab(a: f64, t: f64) -> (f64, f64) {
    let h = 0.5 * a * a;
    (h - a * t + ln_upper_tail(a - t), h + a * t + ln_upper_tail(a + t))
}

/// Continued fraction u = 1/(x + 2/(x + 3/(x + …))) so that the Mills ratio
/// is 1/(x+u) and 1 − x·Φ̄/φ = u/(x+u) without cancellation (used for the
/// quasi-Cauchy γ at large |x|).
fn qc_cf_rest(x: f64) -> f64 {
    let mut t = x;
    for k in (2..=33u32).rev() {
        t = x + f64::from(k) / t;
    }
    1.0 / t
}

impl SlabPrior {
    pub fn quasi_cauchy() -> Self {
        SlabPrior::QuasiCauchy
    }

    pub fn laplace(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::domain(format!("laplace scale a={a} must be finite and > 0")));
        }
        Ok(SlabPrior::Laplace { a })
    }

    pub fn quadrature(inner: SlabPrior) -> Self {
        SlabPrior::Quadrature(Box::new(inner))
    }

    /// The slab density γ(u).
    pub fn slab_raw_density(&self, u: f64) -> f64 {
        let t = u.abs();
        match self {
            SlabPrior::QuasiCauchy => {
                if t < 8.0 {
                    FRAC_1_SQRT_2PI * (1.0 - t * mills_ratio(t))
                } else {
                    let rest = qc_cf_rest(t);
                    FRAC_1_SQRT_2PI * rest / (t + rest)
                }
            }
            SlabPrior::Laplace { a } => 0.5 * a * (-a * t).exp(),
            SlabPrior::Quadrature(inner) => inner.slab_raw_density(u),
        }
    }

    /// The slab tail Γ̄(y) = ∫_y^∞ γ, for any real y.
    pub fn raw_tail(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 1.0 - self.raw_tail(-y);
        }
        match self {
            SlabPrior::QuasiCauchy => FRAC_1_SQRT_2PI * mills_ratio(y),
            SlabPrior::Laplace { a } => 0.5 * (-a * y).exp(),
            SlabPrior::Quadrature(inner) => inner.raw_tail(y),
        }
    }

    /// Inverse of `raw_tail` on (0, 1): the y with Γ̄(y) = u. Feeding a
    /// uniform u through this samples θ ~ γ.
    pub fn raw_tail_inv(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(format!("raw_tail_inv: u={u} outside (0, 1)")));
        }
        if u > 0.5 {
            return Ok(-self.raw_tail_inv(1.0 - u)?);
        }
        match self {
            SlabPrior::Laplace { a } => Ok(-(2.0 * u).ln() / a),
            SlabPrior::Quadrature(inner) => inner.raw_tail_inv(u),
            SlabPrior::QuasiCauchy => {
                // Bisection on the decreasing tail; Γ̄(y) ~ φ(0)/y caps the
                // bracket growth at ~φ(0)/u.
                let mut hi = 1.0f64;
                while self.raw_tail(hi) > u {
                    hi *= 2.0;
                    if hi > 1e300 {
                        return Err(Error::domain(format!("raw_tail_inv: u={u} too small")));
                    }
                }
                let mut lo = 0.0f64;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.raw_tail(mid) > u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-14 * (1.0 + hi.abs()) {
                        break;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }

    /// The marginal density g(x) = ∫ φ(x−u)γ(u) du.
    pub fn slab_density(&self, x: f64) -> f64 {
        match self {
            SlabPrior::QuasiCauchy => {
                let t = x.abs();
                if t < 1e-3 {
                    let x2 = x * x;
                    FRAC_1_SQRT_2PI * (0.5 - x2 / 8.0 + x2 * x2 / 48.0)
                } else {
                    FRAC_1_SQRT_2PI * (-libm::expm1(-0.5 * x * x)) / (x * x)
                }
            }
            SlabPrior::Laplace { a } => {
                let (ln_a_term, ln_b_term) = laplace_ln_ab(*a, x.abs());
                0.5 * a * (ln_a_term.exp() + ln_b_term.exp())
            }
            SlabPrior::Quadrature(inner) => {
                let f = |u: f64| phi(x - u) * inner.slab_raw_density(u);
                quad::integrate(f, x - 45.0, x + 45.0, 1e-10, 1e-280)
            }
        }
    }

    /// log(g(x)/φ(x)), stable over the whole real line. This is the quantity
    /// every downstream consumer (β, thresholds, weight score) is built from.
    pub fn log_density_ratio(&self, x: f64) -> f64 {
        match self {
            SlabPrior::QuasiCauchy => {
                // g/φ = (e^y − 1)/(2y) with y = x²/2.
                let y = 0.5 * x * x;
                if y == 0.0 {
                    -std::f64::consts::LN_2
                } else if x.abs() < 0.25 {
                    let s = 1.0
                        + y * (0.5
                            + y * (1.0 / 6.0
                                + y * (1.0 / 24.0
                                    + y * (1.0 / 120.0 + y * (1.0 / 720.0 + y / 5040.0)))));
                    (0.5 * s).ln()
                } else if y < 350.0 {
                    (libm::expm1(y) / (2.0 * y)).ln()
                } else {
                    y + (-(-y).exp()).ln_1p() - (2.0 * y).ln()
                }
            }
            SlabPrior::Laplace { a } => {
                let t = x.abs();
                (0.5 * a).ln() + log_add_exp(ln_mills(a - t), ln_mills(a + t))
            }
            SlabPrior::Quadrature(_) => self.slab_density(x).ln() - ln_phi(x),
        }
    }

    /// β(x) = g(x)/φ(x) − 1 ∈ (−1, ∞), increasing in |x|.
    pub fn beta(&self, x: f64) -> f64 {
        libm::expm1(self.log_density_ratio(x))
    }

    /// The marginal upper tail Ḡ(x) = ∫ₓ^∞ g, for any real x.
    pub fn slab_tail(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0 - self.slab_tail(-x);
        }
        match self {
            SlabPrior::QuasiCauchy => {
                // Ḡ(x) = Φ̄(x) + (φ(0) − φ(x))/x; the difference is evaluated
                // through expm1 so small x loses nothing.
                if x == 0.0 {
                    0.5
                } else {
                    upper_tail(x) + FRAC_1_SQRT_2PI * (-libm::expm1(-0.5 * x * x)) / x
                }
            }
            SlabPrior::Laplace { a } => {
                let (ln_a_term, ln_b_term) = laplace_ln_ab(*a, x);
                upper_tail(x) + 0.5 * (ln_a_term.exp() - ln_b_term.exp())
            }
            SlabPrior::Quadrature(inner) => {
                let cut = x.abs() + 45.0;
                let f = |s: f64| inner.slab_raw_density(s) * upper_tail(x - s);
                quad::integrate(f, -cut, cut, 1e-10, 1e-280) + inner.raw_tail(cut)
            }
        }
    }

    /// log Ḡ(x).
    pub fn ln_slab_tail(&self, x: f64) -> f64 {
        self.slab_tail(x).ln()
    }

    /// The wrong-sign half convolution g₋(x) = ∫_{−∞}^0 φ(x−u)γ(u) du.
    pub fn half_conv_neg(&self, x: f64) -> f64 {
        match self {
            SlabPrior::Laplace { a } => {
                0.5 * a * (0.5 * a * a + a * x + ln_upper_tail(x + a)).exp()
            }
            SlabPrior::QuasiCauchy | SlabPrior::Quadrature(_) => {
                let raw = |u: f64| self.slab_raw_density(u);
                let f = |u: f64| phi(x - u) * raw(u);
                quad::integrate(f, -(x.abs() + 45.0), 0.0, 1e-10, 1e-300)
            }
        }
    }

    /// Polynomial tail exponent κ: Ḡ(y) ≍ y^{κ−1} g(y) for large y.
    pub fn tail_exponent(&self) -> f64 {
        match self {
            SlabPrior::QuasiCauchy => 2.0,
            SlabPrior::Laplace { .. } => 1.0,
            SlabPrior::Quadrature(inner) => inner.tail_exponent(),
        }
    }

    /// Stable identifier, e.g. `quasi-cauchy`, `laplace:0.5`,
    /// `quadrature:laplace:0.5`. Round-trips through `parse`.
    pub fn id_string(&self) -> String {
        match self {
            SlabPrior::QuasiCauchy => "quasi-cauchy".to_string(),
            SlabPrior::Laplace { a } => format!("laplace:{a}"),
            SlabPrior::Quadrature(inner) => format!("quadrature:{}", inner.id_string()),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "quasi-cauchy" {
            Ok(SlabPrior::QuasiCauchy)
        } else if let Some(rest) = s.strip_prefix("laplace:") {
            let a: f64 = rest
                .parse()
                .map_err(|_| Error::UnknownPrior(s.to_string()))?;
            SlabPrior::laplace(a)
        } else if let Some(rest) = s.strip_prefix("quadrature:") {
            Ok(SlabPrior::quadrature(SlabPrior::parse(rest)?))
        } else {
            Err(Error::UnknownPrior(s.to_string()))
        }
    }
}

impl std::fmt::Display for SlabPrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.id_string())
    }
}

/// Sample one slab draw from a uniform u ∈ (0, 1).
pub fn sample_slab(prior: &SlabPrior, u: f64) -> f64 {
    prior
        .raw_tail_inv(u)
        .expect("uniform variates are strictly inside (0, 1)")
}
