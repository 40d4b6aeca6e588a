//! Python bindings for the slabtest library.
//!
//! A [`PyPrior`] bundles a slab prior with its threshold and moment solvers;
//! procedures return [`PyOutcome`] objects mirroring the Rust `TestOutcome`.
//! Library errors surface as `ValueError` carrying the original diagnostic.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use slabtest::metrics::fdp_fnp;
use slabtest::moments::MomentContext;
use slabtest::prior::SlabPrior;
use slabtest::procedures::{l_value_from_log_ratio, m_value_at, q_value_at, TestOutcome};
use slabtest::rng::{derive_key, normal_at};
use slabtest::sim::{
    dispatch, generate, requires_weight, run_cell, with_workers, Scenario, SimulationCell, WPolicy,
};
use slabtest::thresholds::ThresholdContext;
use slabtest::weight::{estimate_weight, log_marginal, score, ObservationBatch};

fn as_value_error(e: slabtest::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn batch_from(xs: Vec<f64>) -> PyResult<ObservationBatch> {
    ObservationBatch::new(xs).map_err(as_value_error)
}

/// Result of the marginal-likelihood weight calibration.
#[pyclass(frozen, name = "WeightFit", module = "slabtest_py")]
struct PyWeightFit {
    /// Argmax of the marginal likelihood over [lower, 1].
    #[pyo3(get)]
    w_hat: f64,
    #[pyo3(get)]
    at_lower_boundary: bool,
    #[pyo3(get)]
    at_upper_boundary: bool,
    /// Score S(ŵ); ≈ 0 for an interior root, single-signed at a boundary.
    #[pyo3(get)]
    score_at_root: f64,
}

#[pymethods]
impl PyWeightFit {
    fn __repr__(&self) -> String {
        format!(
            "WeightFit(w_hat={}, at_lower_boundary={}, at_upper_boundary={}, score_at_root={})",
            self.w_hat, self.at_lower_boundary, self.at_upper_boundary, self.score_at_root
        )
    }
}

/// Decision of one procedure on one batch of observations.
#[pyclass(frozen, name = "Outcome", module = "slabtest_py")]
struct PyOutcome {
    inner: TestOutcome,
}

#[pymethods]
impl PyOutcome {
    /// Procedure identifier, e.g. "ebayes-l".
    #[getter]
    fn procedure(&self) -> &str {
        &self.inner.procedure_id
    }

    /// Cutoff level the rule was run at.
    #[getter]
    fn t(&self) -> f64 {
        self.inner.t
    }

    /// Spike weight the values were computed under; None for p-value rules.
    #[getter]
    fn w_used(&self) -> Option<f64> {
        self.inner.w_used
    }

    /// Gate level ωₙ for the gated q-value rules, else None.
    #[getter]
    fn omega(&self) -> Option<f64> {
        self.inner.omega
    }

    /// True when w = 1 collapses every posterior value to 0.
    #[getter]
    fn degenerate_w_one(&self) -> bool {
        self.inner.degenerate_w_one
    }

    /// |X| cutoff equivalent to the value rule, when one exists.
    #[getter]
    fn effective_abs_threshold(&self) -> Option<f64> {
        self.inner.effective_abs_threshold
    }

    /// The ℓ-, q-, m- or p-values actually thresholded, one per coordinate.
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    /// Per-coordinate rejection decisions.
    #[getter]
    fn reject(&self) -> Vec<bool> {
        self.inner.reject.clone()
    }

    fn n_rejections(&self) -> usize {
        self.inner.n_rejections()
    }

    /// Discovery counts and proportions against a known mean vector:
    /// a dict with rejections, true_rejections, n, nonzero, fdp, fnp.
    fn error_rates<'py>(&self, py: Python<'py>, truth: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let rec = fdp_fnp(&self.inner, &truth).map_err(as_value_error)?;
        let d = PyDict::new(py);
        d.set_item("rejections", rec.rejections)?;
        d.set_item("true_rejections", rec.true_rejections)?;
        d.set_item("n", rec.n)?;
        d.set_item("nonzero", rec.sigma0)?;
        d.set_item("fdp", rec.fdp)?;
        d.set_item("fnp", rec.fnp)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Outcome(procedure='{}', t={}, n={}, rejections={})",
            self.inner.procedure_id,
            self.inner.t,
            self.inner.values.len(),
            self.inner.n_rejections()
        )
    }
}

/// A spike-and-slab prior together with its derived solvers.
///
/// Construct from an identifier — "quasi-cauchy", "laplace:<a>", or
/// "quadrature:<prior>" for the numeric-integration cross-check variant.
#[pyclass(frozen, name = "Prior", module = "slabtest_py")]
struct PyPrior {
    prior: SlabPrior,
    thresholds: ThresholdContext,
    moments: MomentContext,
}

impl PyPrior {
    fn build(prior: SlabPrior) -> Self {
        PyPrior {
            thresholds: ThresholdContext::with_cache(prior.clone()),
            moments: MomentContext::new(prior.clone()),
            prior,
        }
    }
}

#[pymethods]
impl PyPrior {
    #[new]
    fn new(id: &str) -> PyResult<Self> {
        Ok(PyPrior::build(SlabPrior::parse(id).map_err(as_value_error)?))
    }

    #[staticmethod]
    fn quasi_cauchy() -> Self {
        PyPrior::build(SlabPrior::quasi_cauchy())
    }

    #[staticmethod]
    fn laplace(a: f64) -> PyResult<Self> {
        Ok(PyPrior::build(SlabPrior::laplace(a).map_err(as_value_error)?))
    }

    /// Canonical identifier, accepted back by the constructor.
    #[getter]
    fn id(&self) -> String {
        self.prior.id_string()
    }

    fn __repr__(&self) -> String {
        format!("Prior('{}')", self.prior.id_string())
    }

    /// Slab marginal density g(x) = (γ ⋆ φ)(x).
    fn slab_density(&self, x: f64) -> f64 {
        self.prior.slab_density(x)
    }

    /// Slab marginal upper tail Ḡ(x) = ∫ₓ^∞ g.
    fn slab_tail(&self, x: f64) -> f64 {
        self.prior.slab_tail(x)
    }

    /// Likelihood ratio β(x) = g(x)/φ(x) − 1.
    fn beta(&self, x: f64) -> f64 {
        self.prior.beta(x)
    }

    /// log(g(x)/φ(x)), stable for large |x| where both factors underflow.
    fn log_density_ratio(&self, x: f64) -> f64 {
        self.prior.log_density_ratio(x)
    }

    /// Slab quantile: the θ with raw tail mass u, for u ∈ (0, 1).
    fn slab_sample(&self, u: f64) -> PyResult<f64> {
        self.prior.raw_tail_inv(u).map_err(as_value_error)
    }

    /// ℓ-value: posterior null probability P(θ = 0 | X = x) under weight w.
    fn l_value(&self, x: f64, w: f64) -> f64 {
        l_value_from_log_ratio(self.prior.log_density_ratio(x), w)
    }

    /// q-value: tail-based analogue P(θ = 0 | |X| ≥ |x|) under weight w.
    fn q_value(&self, x: f64, w: f64) -> f64 {
        q_value_at(&self.prior, x, w)
    }

    /// m-value: marginal credible-interval score under weight w.
    fn m_value(&self, x: f64, w: f64) -> PyResult<f64> {
        m_value_at(&self.prior, x, w).map_err(as_value_error)
    }

    /// Largest admissible ξ target, (φ/g)(0).
    #[getter]
    fn xi_upper_bound(&self) -> f64 {
        self.thresholds.xi_upper_bound()
    }

    /// ξ(u): the x ≥ 0 with φ(x)/g(x) = u.
    fn xi(&self, u: f64) -> PyResult<f64> {
        self.thresholds.xi(u).map_err(as_value_error)
    }

    /// ζ(w): the x ≥ 0 with β(x) = 1/w.
    fn zeta(&self, w: f64) -> PyResult<f64> {
        self.thresholds.zeta(w).map_err(as_value_error)
    }

    /// χ(u): the x ≥ 0 with Φ̄(x)/Ḡ(x) = u.
    fn chi(&self, u: f64) -> PyResult<f64> {
        self.thresholds.chi(u).map_err(as_value_error)
    }

    /// Score moment m̃(w) = E₀ β(X, w)² / E_γ β(X, w).
    fn m_tilde(&self, w: f64) -> PyResult<f64> {
        self.moments.m_tilde(w).map_err(as_value_error)
    }

    /// First score moment m₁(τ, w) = E_{θ=τ} β(X, w).
    fn m1(&self, tau: f64, w: f64) -> PyResult<f64> {
        self.moments.m1(tau, w).map_err(as_value_error)
    }

    /// Second score moment m₂(τ, w) = E_{θ=τ} β(X, w)².
    fn m2(&self, tau: f64, w: f64) -> PyResult<f64> {
        self.moments.m2(tau, w).map_err(as_value_error)
    }

    /// Strong-signal weight: solves s = (n−s)·w·m̃(w); returns (w_star,
    /// saturated) where saturated means even w = 1 cannot balance s signals.
    fn solve_wstar(&self, n: u64, s: u64) -> PyResult<(f64, bool)> {
        let ws = self.moments.solve_wstar(n, s).map_err(as_value_error)?;
        Ok((ws.w_star, ws.saturated))
    }

    /// fₙ(u) = E₀[ℓ(X, w)·1{q(X, w) ≤ u}] / P₀(q(X, w) ≤ u), the null
    /// ℓ-mass per q-rejection; drives the sum-capped rule's FDR inflation.
    fn f_n(&self, u: f64, w: f64) -> PyResult<f64> {
        self.moments.f_n(u, w).map_err(as_value_error)
    }

    /// Score S(w) = Σᵢ β(Xᵢ, w).
    fn score(&self, xs: Vec<f64>, w: f64) -> PyResult<f64> {
        Ok(score(&self.prior, &batch_from(xs)?, w))
    }

    /// Marginal log-likelihood L(w) = Σᵢ log((1−w)φ(Xᵢ) + w·g(Xᵢ)).
    fn log_marginal(&self, xs: Vec<f64>, w: f64) -> PyResult<f64> {
        Ok(log_marginal(&self.prior, &batch_from(xs)?, w))
    }

    /// Maximum-marginal-likelihood weight over [lower, 1]; `lower` defaults
    /// to 1/len(xs).
    #[pyo3(signature = (xs, lower = None))]
    fn estimate_weight(&self, xs: Vec<f64>, lower: Option<f64>) -> PyResult<PyWeightFit> {
        let batch = batch_from(xs)?;
        let lower = lower.unwrap_or(1.0 / batch.len() as f64);
        let est = estimate_weight(&self.prior, &batch, lower).map_err(as_value_error)?;
        Ok(PyWeightFit {
            w_hat: est.w_hat,
            at_lower_boundary: est.at_lower_boundary,
            at_upper_boundary: est.at_upper_boundary,
            score_at_root: est.score_at_root,
        })
    }

    /// Run one procedure by id at level t. Posterior-value rules need a
    /// spike weight: pass `w`, or leave it None to calibrate by maximum
    /// marginal likelihood over [1/len(xs), 1]. The p-value baselines
    /// ("bh", "bonferroni") ignore `w`.
    #[pyo3(signature = (xs, procedure, t, w = None))]
    fn run(&self, xs: Vec<f64>, procedure: &str, t: f64, w: Option<f64>) -> PyResult<PyOutcome> {
        let batch = batch_from(xs)?;
        let w = if requires_weight(procedure) {
            Some(match w {
                Some(w) => w,
                None => {
                    estimate_weight(&self.prior, &batch, 1.0 / batch.len() as f64)
                        .map_err(as_value_error)?
                        .w_hat
                }
            })
        } else {
            None
        };
        let outcome = dispatch(&self.prior, &batch, procedure, t, w).map_err(as_value_error)?;
        Ok(PyOutcome { inner: outcome })
    }
}

/// Accept a w_policy as "mmle" / "wstar" or a fixed float weight.
#[derive(FromPyObject)]
enum WPolicyArg {
    Fixed(f64),
    Name(String),
}

impl WPolicyArg {
    fn resolve(self) -> PyResult<WPolicy> {
        match self {
            WPolicyArg::Fixed(w) => Ok(WPolicy::Fixed(w)),
            WPolicyArg::Name(s) => match s.as_str() {
                "mmle" => Ok(WPolicy::Mmle),
                "wstar" => Ok(WPolicy::WStar),
                other => Err(PyValueError::new_err(format!(
                    "unknown w_policy `{other}`; known: \"mmle\", \"wstar\", or a float weight"
                ))),
            },
        }
    }
}

#[allow(clippy::too_many_arguments)] // mirrors the cell's field list
fn build_cell(
    n: u64,
    s: u64,
    mu: f64,
    scenario: &str,
    prior: &str,
    procedures: Vec<(String, f64)>,
    reps: u64,
    seed: u64,
    w_policy: WPolicyArg,
) -> PyResult<SimulationCell> {
    let scenario: Scenario = scenario
        .parse()
        .map_err(|e: slabtest::Error| as_value_error(e))?;
    let cell = SimulationCell {
        n,
        s,
        mu,
        scenario,
        prior_id: prior.to_string(),
        procedures,
        reps,
        seed,
        w_policy: w_policy.resolve()?,
    };
    cell.validate().map_err(as_value_error)?;
    Ok(cell)
}

/// One replication of a cell's data-generating process. Returns (x, truth)
/// lists; identical (n, s, mu, scenario, seed, rep) always reproduce the
/// same draw, at any worker count.
#[pyfunction]
#[pyo3(signature = (n, s, mu, scenario, seed = 0, rep = 0))]
fn generate_observations(
    n: u64,
    s: u64,
    mu: f64,
    scenario: &str,
    seed: u64,
    rep: u64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    // prior_id and w_policy do not enter the data-generating process; any
    // valid values produce the same draw as an engine cell with these data
    // fields.
    let cell = build_cell(
        n,
        s,
        mu,
        scenario,
        "quasi-cauchy",
        Vec::new(),
        rep + 1,
        seed,
        WPolicyArg::Name("mmle".to_string()),
    )?;
    let batch = generate(&cell, rep).map_err(as_value_error)?;
    let truth = batch.truth().expect("generated batches carry truth").to_vec();
    Ok((batch.x().to_vec(), truth))
}

/// Monte Carlo run of one experiment cell; mirrors one entry of the CLI's
/// simulate config. Returns one dict per (procedure, t) with the aggregated
/// error rates. `w_policy` is "mmle", "wstar", or a fixed float weight.
#[pyfunction]
#[pyo3(signature = (n, s, mu, scenario, prior, procedures, reps = 2000, seed = 0, w_policy = None, workers = None))]
#[allow(clippy::too_many_arguments)]
fn simulate_cell<'py>(
    py: Python<'py>,
    n: u64,
    s: u64,
    mu: f64,
    scenario: &str,
    prior: &str,
    procedures: Vec<(String, f64)>,
    reps: u64,
    seed: u64,
    w_policy: Option<WPolicyArg>,
    workers: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let w_policy = w_policy.unwrap_or(WPolicyArg::Name("mmle".to_string()));
    let cell = build_cell(n, s, mu, scenario, prior, procedures, reps, seed, w_policy)?;
    if let Some(0) = workers {
        return Err(PyValueError::new_err("workers must be at least 1"));
    }
    let aggregates = with_workers(workers, || run_cell(&cell)).map_err(as_value_error)?;
    aggregates
        .iter()
        .map(|agg| {
            let d = PyDict::new(py);
            d.set_item("procedure", &agg.procedure_id)?;
            d.set_item("t", agg.t)?;
            d.set_item("reps", agg.metrics.reps)?;
            d.set_item("fdr", agg.metrics.fdr)?;
            d.set_item("fdr_se", agg.metrics.fdr_se)?;
            d.set_item("fnr", agg.metrics.fnr)?;
            d.set_item("fnr_se", agg.metrics.fnr_se)?;
            d.set_item("mean_rejections", agg.metrics.mean_rejections)?;
            d.set_item("risk", agg.metrics.risk)?;
            Ok(d)
        })
        .collect()
}

/// Deterministic standard normal draws from the library's counter-based
/// stream; draw j depends only on (seed, j).
#[pyfunction]
fn normal_draws(seed: u64, count: usize) -> Vec<f64> {
    let key = derive_key(&[seed]);
    (0..count as u64).map(|j| normal_at(key, j)).collect()
}

/// Empirical-Bayes multiple testing in the sparse Gaussian sequence model.
#[pymodule]
fn slabtest_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", slabtest::VERSION)?;
    m.add_class::<PyPrior>()?;
    m.add_class::<PyOutcome>()?;
    m.add_class::<PyWeightFit>()?;
    m.add_function(wrap_pyfunction!(generate_observations, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_cell, m)?)?;
    m.add_function(wrap_pyfunction!(normal_draws, m)?)?;
    Ok(())
}
