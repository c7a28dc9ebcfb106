//! Exact posterior model probabilities for small problems.
//!
//! For a handful of predictors the model space can be enumerated outright and
//! the continuous parameters integrated numerically, giving a ground-truth
//! distribution over active sets to hold the sampler against. Two independent
//! routes are provided: tensor Gauss-Legendre quadrature over
//! `(ln g, ln sigma2)` using a per-model eigendecomposition, and — when the
//! ridge correction is off — one-dimensional quadrature over `ln g` of the
//! closed-form marginal with the noise variance integrated analytically.

use nalgebra::SymmetricEigen;
use statrs::function::gamma::ln_gamma;
use std::collections::HashMap;

use crate::data::StandardizedDataset;
use crate::error::{BvsError, Result};
use crate::posterior::{log_marginal_set_g, GramCache, GramEntry, LN_TAU};
use crate::priors::PriorSpec;
use crate::sampler::RetainedSample;
use crate::set::ActiveSet;

/// Hard limit on enumerable problem sizes: `2^20 - 1` models is already a
/// million.
pub const MAX_ENUMERABLE_P: usize = 20;

/// Bounds and refinement policy for the quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Lower integration bound for both scalars, on their natural scale.
    pub lo: f64,
    /// Upper integration bound.
    pub hi: f64,
    /// Node count of the first pass.
    pub initial_nodes: usize,
    /// Node-doubling stops at this count even if not converged.
    pub max_nodes: usize,
    /// Doubling stops once no model probability moves by more than this.
    pub tolerance: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            lo: 1e-8,
            hi: 1e8,
            initial_nodes: 128,
            max_nodes: 2048,
            tolerance: 1e-8,
        }
    }
}

impl QuadratureOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.hi.is_finite() && self.lo < self.hi) {
            return Err(BvsError::validation(format!(
                "integration bounds must satisfy 0 < lo < hi < inf, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.initial_nodes < 2 || self.max_nodes < self.initial_nodes {
            return Err(BvsError::validation(format!(
                "need 2 <= initial_nodes <= max_nodes, got {} and {}",
                self.initial_nodes, self.max_nodes
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(BvsError::validation("quadrature tolerance must be positive"));
        }
        Ok(())
    }
}

/// The exact distribution over all candidate active sets.
#[derive(Debug, Clone)]
pub struct ModelPosterior {
    /// Every nonempty subset, in [`enumerate_sets`] order.
    pub sets: Vec<ActiveSet>,
    /// Log of each model's integrated (unnormalized) posterior mass.
    pub log_evidence: Vec<f64>,
    /// Normalized probabilities aligned with `sets`.
    pub probabilities: Vec<f64>,
    /// Nodes per axis in the final pass.
    pub nodes: usize,
    /// Whether the refinement loop met its tolerance before the node cap.
    pub converged: bool,
}

impl ModelPosterior {
    /// The most probable set.
    pub fn map_set(&self) -> &ActiveSet {
        let i = self
            .probabilities
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("probabilities are finite"))
            .expect("at least one model")
            .0;
        &self.sets[i]
    }

    /// Per-predictor inclusion probabilities.
    pub fn inclusion_probabilities(&self, p: usize) -> Vec<f64> {
        let mut incl = vec![0.0; p];
        for (set, prob) in self.sets.iter().zip(&self.probabilities) {
            for i in set.iter() {
                incl[i] += prob;
            }
        }
        incl
    }
}

/// All nonempty subsets of `{0, .., p-1}` in bitmask order.
pub fn enumerate_sets(p: usize) -> Result<Vec<ActiveSet>> {
    if p == 0 {
        return Err(BvsError::validation("need at least one predictor"));
    }
    if p > MAX_ENUMERABLE_P {
        return Err(BvsError::validation(format!(
            "enumeration over {p} predictors would visit 2^{p} - 1 models; \
             the limit is p = {MAX_ENUMERABLE_P}"
        )));
    }
    (1u64..1u64 << p).map(ActiveSet::from_bitmask).collect()
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "quadrature needs at least two nodes");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Roots come in +/- pairs; solve the upper half.
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n and its derivative by upward recurrence.
            let (mut p0, mut p1) = (1.0, x);
            for m in 2..=n {
                let mf = m as f64;
                let p2 = ((2.0 * mf - 1.0) * x * p1 - (mf - 1.0) * p0) / mf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Map a rule from `[-1, 1]` onto `[a, b]`.
fn scaled_rule(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(n);
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    (
        nodes.iter().map(|t| mid + half * t).collect(),
        weights.iter().map(|w| w * half).collect(),
    )
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    fn new() -> LogSum {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

fn normalize_log_masses(log_evidence: &[f64]) -> Vec<f64> {
    let mut total = LogSum::new();
    for &le in log_evidence {
        total.add(le);
    }
    let total = total.value();
    log_evidence.iter().map(|&le| (le - total).exp()).collect()
}

/// Marginal-likelihood evaluator for one active set, built on the
/// eigendecomposition of its Gram matrix so each `(g, sigma2)` costs `O(k)`.
pub struct ModelEvaluator {
    /// Eigenvalues of `X_A'X_A`, clamped at zero.
    eigenvalues: Vec<f64>,
    /// `X_A'y` rotated into the eigenbasis.
    rotated_xty: Vec<f64>,
    yty: f64,
    n: usize,
    lambda: f64,
    /// Set prior plus the normalizing constants of the two scalar priors.
    log_prior_const: f64,
    g_shape: f64,
    g_scale: f64,
    a: f64,
    b: f64,
}

impl ModelEvaluator {
    pub fn new(
        set: &ActiveSet,
        s: &StandardizedDataset,
        spec: &PriorSpec,
        cache: &mut GramCache,
    ) -> Result<ModelEvaluator> {
        let entry = cache.entry(set, s);
        let yty = cache.yty(s);
        ModelEvaluator::from_entry(set, &entry, yty, s.n(), spec)
    }

    fn from_entry(
        set: &ActiveSet,
        entry: &GramEntry,
        yty: f64,
        n: usize,
        spec: &PriorSpec,
    ) -> Result<ModelEvaluator> {
        let k = set.k();
        let eig = SymmetricEigen::new(entry.xtx.clone());
        let max_ev = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
        let mut eigenvalues = Vec::with_capacity(k);
        for &v in eig.eigenvalues.iter() {
            if v < -1e-9 * max_ev.max(1.0) {
                return Err(BvsError::numeric(format!(
                    "Gram matrix of set {{{}}} has negative eigenvalue {v}",
                    set.format_one_based(",")
                )));
            }
            eigenvalues.push(v.max(0.0));
        }
        let rotated = eig.eigenvectors.transpose() * &entry.xty;
        let log_prior_const = spec.log_active_set_prior(set)
            + spec.g_shape * spec.g_scale.ln()
            - ln_gamma(spec.g_shape)
            + spec.a * spec.b.ln()
            - ln_gamma(spec.a);
        Ok(ModelEvaluator {
            eigenvalues,
            rotated_xty: rotated.iter().copied().collect(),
            yty,
            n,
            lambda: spec.ridge_lambda(k, n),
            log_prior_const,
            g_shape: spec.g_shape,
            g_scale: spec.g_scale,
            a: spec.a,
            b: spec.b,
        })
    }

    /// `ln p(y | set, g, sigma2)` with the coefficients integrated out; same
    /// constants as the matrix-factorization route.
    pub fn log_marginal(&self, g: f64, sigma2: f64) -> f64 {
        let nf = self.n as f64;
        let c_f = (1.0 + 1.0 / g) / sigma2;
        let c_p = 1.0 / (g * sigma2);
        let mut log_det_f = 0.0;
        let mut log_det_p = 0.0;
        let mut quad_f = 0.0;
        for (ev, z) in self.eigenvalues.iter().zip(&self.rotated_xty) {
            let f = c_f * ev + self.lambda;
            log_det_f += f.ln();
            log_det_p += (c_p * ev + self.lambda).ln();
            quad_f += z * z / f;
        }
        let log_det_m = nf * sigma2.ln() + log_det_f - log_det_p;
        let quad = self.yty / sigma2 - quad_f / (sigma2 * sigma2);
        -0.5 * nf * LN_TAU - 0.5 * log_det_m - 0.5 * quad
    }

    /// The integrand of the substitution `(u, v) = (ln g, ln sigma2)`,
    /// Jacobian excluded: marginal likelihood times the set prior times both
    /// scalar priors.
    fn log_integrand_2d(&self, u: f64, v: f64) -> f64 {
        let (g, sigma2) = (u.exp(), v.exp());
        self.log_marginal(g, sigma2) + self.log_prior_const
            - (self.g_shape + 1.0) * u
            - self.g_scale / g
            - (self.a + 1.0) * v
            - self.b / sigma2
    }
}

/// Integrated posterior mass of every model by tensor quadrature on
/// `(ln g, ln sigma2)`, with node doubling until the normalized
/// probabilities settle.
pub fn model_posterior_quadrature(
    s: &StandardizedDataset,
    spec: &PriorSpec,
    opts: &QuadratureOptions,
) -> Result<ModelPosterior> {
    opts.validate()?;
    if spec.p() != s.p() {
        return Err(BvsError::validation(format!(
            "prior is for {} predictors, data has {}",
            spec.p(),
            s.p()
        )));
    }
    let sets = enumerate_sets(s.p())?;
    let mut cache = GramCache::new(sets.len());
    let evaluators = sets
        .iter()
        .map(|set| ModelEvaluator::new(set, s, spec, &mut cache))
        .collect::<Result<Vec<_>>>()?;

    let (lo, hi) = (opts.lo.ln(), opts.hi.ln());
    let mut nodes = opts.initial_nodes;
    let mut previous: Option<Vec<f64>> = None;
    loop {
        let (u, wu) = scaled_rule(nodes, lo, hi);
        let log_wu: Vec<f64> = wu.iter().map(|w| w.ln()).collect();
        let log_evidence: Vec<f64> = evaluators
            .iter()
            .map(|ev| {
                let mut acc = LogSum::new();
                for (ui, lwi) in u.iter().zip(&log_wu) {
                    for (vj, lwj) in u.iter().zip(&log_wu) {
                        // Jacobian of (ln g, ln sigma2) -> (g, sigma2).
                        acc.add(ev.log_integrand_2d(*ui, *vj) + lwi + lwj + ui + vj);
                    }
                }
                acc.value()
            })
            .collect();
        let probabilities = normalize_log_masses(&log_evidence);
        let converged = previous
            .as_ref()
            .map(|prev| {
                prev.iter()
                    .zip(&probabilities)
                    .all(|(a, b)| (a - b).abs() <= opts.tolerance)
            })
            .unwrap_or(false);
        if converged || nodes >= opts.max_nodes {
            if !converged {
                log::warn!(
                    "quadrature stopped at the {nodes}-node cap without meeting \
                     tolerance {}",
                    opts.tolerance
                );
            }
            return Ok(ModelPosterior {
                sets,
                log_evidence,
                probabilities,
                nodes,
                converged,
            });
        }
        previous = Some(probabilities);
        nodes = (nodes * 2).min(opts.max_nodes);
    }
}

/// Integrated posterior mass of every model through the closed-form marginal
/// (noise variance integrated analytically), leaving one-dimensional
/// quadrature over `ln g`. Only available when the ridge correction is off.
pub fn model_posterior_closedform(
    s: &StandardizedDataset,
    spec: &PriorSpec,
    opts: &QuadratureOptions,
) -> Result<ModelPosterior> {
    opts.validate()?;
    if spec.p() != s.p() {
        return Err(BvsError::validation(format!(
            "prior is for {} predictors, data has {}",
            spec.p(),
            s.p()
        )));
    }
    if spec.ridge_lambda(1, s.n()) != 0.0 {
        return Err(BvsError::validation(
            "the closed-form route requires the ridge correction to be off \
             (finite zeta below the sample size)",
        ));
    }
    let sets = enumerate_sets(s.p())?;
    let mut cache = GramCache::new(sets.len());
    let (lo, hi) = (opts.lo.ln(), opts.hi.ln());
    let mut nodes = opts.initial_nodes;
    let mut previous: Option<Vec<f64>> = None;
    loop {
        let (u, wu) = scaled_rule(nodes, lo, hi);
        let mut log_evidence = Vec::with_capacity(sets.len());
        for set in &sets {
            let mut acc = LogSum::new();
            for (ui, wi) in u.iter().zip(&wu) {
                let g = ui.exp();
                acc.add(log_marginal_set_g(set, g, s, spec, &mut cache)? + wi.ln() + ui);
            }
            log_evidence.push(acc.value());
        }
        let probabilities = normalize_log_masses(&log_evidence);
        let converged = previous
            .as_ref()
            .map(|prev| {
                prev.iter()
                    .zip(&probabilities)
                    .all(|(a, b)| (a - b).abs() <= opts.tolerance)
            })
            .unwrap_or(false);
        if converged || nodes >= opts.max_nodes {
            if !converged {
                log::warn!(
                    "quadrature stopped at the {nodes}-node cap without meeting \
                     tolerance {}",
                    opts.tolerance
                );
            }
            return Ok(ModelPosterior {
                sets,
                log_evidence,
                probabilities,
                nodes,
                converged,
            });
        }
        previous = Some(probabilities);
        nodes = (nodes * 2).min(opts.max_nodes);
    }
}

/// Total variation distance `max_A |P(A) - Q(A)| = (1/2) sum |p_i - q_i|`
/// between two distributions given over the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(BvsError::validation(format!(
            "distributions have different supports ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    for (name, dist) in [("first", p), ("second", q)] {
        let total: f64 = dist.iter().sum();
        if dist.iter().any(|&v| !(0.0..=1.0 + 1e-9).contains(&v)) || (total - 1.0).abs() > 1e-6 {
            return Err(BvsError::validation(format!(
                "{name} argument is not a probability distribution (sums to {total})"
            )));
        }
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0)
}

/// Fraction of retained samples occupying each of the given sets.
pub fn empirical_probabilities(
    samples: &[RetainedSample],
    sets: &[ActiveSet],
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(BvsError::validation("no retained samples"));
    }
    let index: HashMap<&ActiveSet, usize> =
        sets.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let mut counts = vec![0usize; sets.len()];
    for sample in samples {
        let i = index.get(&sample.state.active).ok_or_else(|| {
            BvsError::validation(format!(
                "sample visits set {{{}}}, which is outside the enumerated support",
                sample.state.active.format_one_based(",")
            ))
        })?;
        counts[*i] += 1;
    }
    let total = samples.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}
