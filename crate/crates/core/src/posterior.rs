//! Log-density evaluations for the hierarchical regression model: the joint
//! over (active set, coefficients, shrinkage factor g, noise variance), the
//! conditional Gaussian used to propose coefficients, and the marginal
//! likelihoods with the coefficients (and optionally the variance) integrated
//! out.
//!
//! Convention: every returned log density keeps all terms that depend on the
//! model state and drops additive constants that do not (the `(2*pi)^{-n/2}`
//! of the data likelihood, the inverse-gamma normalizers of the g and variance
//! priors). The coefficient-prior determinant and its `(2*pi)^{-k/2}` are
//! kept because the dimension k changes across states. The two marginal
//! likelihood routines are exceptions: they retain full constants so the two
//! integration routes can be compared level-to-level.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;
use std::collections::HashMap;
use std::rc::Rc;

use crate::data::StandardizedDataset;
use crate::error::{BvsError, Result};
use crate::priors::PriorSpec;
use crate::set::ActiveSet;

/// One point in the trans-dimensional state space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub active: ActiveSet,
    /// Coefficients aligned with `active.as_slice()`.
    pub beta: DVector<f64>,
    pub g: f64,
    pub sigma2: f64,
}

impl ModelState {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.beta.len() != self.active.k() {
            return Err(BvsError::validation(format!(
                "coefficient vector length {} does not match active set size {}",
                self.beta.len(),
                self.active.k()
            )));
        }
        if let Some(i) = self.active.iter().find(|&i| i >= p) {
            return Err(BvsError::validation(format!(
                "active index {i} out of range for p = {p}"
            )));
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(BvsError::validation(format!(
                "shrinkage factor must be positive and finite, got {}",
                self.g
            )));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(BvsError::validation(format!(
                "noise variance must be positive and finite, got {}",
                self.sigma2
            )));
        }
        if let Some(v) = self.beta.iter().find(|v| !v.is_finite()) {
            return Err(BvsError::validation(format!(
                "non-finite coefficient {v}"
            )));
        }
        Ok(())
    }
}

/// Cross-products for one active set: `X_A'X_A` and `X_A'y`.
#[derive(Debug, Clone)]
pub struct GramEntry {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
}

impl GramEntry {
    pub fn compute(set: &ActiveSet, s: &StandardizedDataset) -> GramEntry {
        let k = set.k();
        let idx = set.as_slice();
        let mut xtx = DMatrix::zeros(k, k);
        let mut xty = DVector::zeros(k);
        for a in 0..k {
            let ca = s.x.column(idx[a]);
            xty[a] = ca.dot(&s.y);
            for b in a..k {
                let v = ca.dot(&s.x.column(idx[b]));
                xtx[(a, b)] = v;
                xtx[(b, a)] = v;
            }
        }
        GramEntry { xtx, xty }
    }
}

/// Bounded cache of [`GramEntry`] values keyed by active set, with
/// least-recently-used batch eviction. One cache serves one chain over one
/// dataset; it is deliberately not shareable across threads.
pub struct GramCache {
    map: HashMap<ActiveSet, (Rc<GramEntry>, u64)>,
    clock: u64,
    capacity: usize,
    yty: Option<f64>,
}

pub const DEFAULT_GRAM_CACHE_CAPACITY: usize = 4096;

impl GramCache {
    pub fn new(capacity: usize) -> GramCache {
        GramCache {
            map: HashMap::new(),
            clock: 0,
            capacity: capacity.max(1),
            yty: None,
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Cached `y'y` for the dataset this cache serves.
    pub fn yty(&mut self, s: &StandardizedDataset) -> f64 {
        *self.yty.get_or_insert_with(|| s.y.norm_squared())
    }

    pub fn entry(&mut self, set: &ActiveSet, s: &StandardizedDataset) -> Rc<GramEntry> {
        self.clock += 1;
        let clock = self.clock;
        if let Some((entry, stamp)) = self.map.get_mut(set) {
            *stamp = clock;
            return Rc::clone(entry);
        }
        if self.map.len() >= self.capacity {
            self.evict_oldest_quarter();
        }
        let entry = Rc::new(GramEntry::compute(set, s));
        self.map.insert(set.clone(), (Rc::clone(&entry), clock));
        entry
    }

    fn evict_oldest_quarter(&mut self) {
        let mut stamps: Vec<u64> = self.map.values().map(|(_, t)| *t).collect();
        stamps.sort_unstable();
        let cutoff = stamps[stamps.len() / 4];
        self.map.retain(|_, (_, t)| *t > cutoff);
    }
}

/// `ln(2*pi)`.
pub const LN_TAU: f64 = 1.837877066409345483560659472811235279722;

/// Cholesky factorization that insists on strictly positive pivots, with an
/// error message naming the matrix being factored.
fn spd_cholesky(m: DMatrix<f64>, what: impl Fn() -> String) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(m).ok_or_else(|| {
        BvsError::numeric(format!("{} is not positive definite", what()))
    })?;
    let l = chol.l_dirty();
    for j in 0..l.nrows() {
        if !(l[(j, j)] > 0.0 && l[(j, j)].is_finite()) {
            return Err(BvsError::numeric(format!(
                "{} is numerically singular",
                what()
            )));
        }
    }
    Ok(chol)
}

fn log_det_from_chol(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|j| l[(j, j)].ln()).sum::<f64>() * 2.0
}

/// Precision matrix of the coefficient prior:
/// `X_A'X_A / (g * sigma2) + lambda * I`.
pub fn beta_precision(entry: &GramEntry, g: f64, sigma2: f64, lambda: f64) -> DMatrix<f64> {
    let k = entry.xtx.nrows();
    let mut p = &entry.xtx * (1.0 / (g * sigma2));
    for j in 0..k {
        p[(j, j)] += lambda;
    }
    p
}

/// Unnormalized inverse-gamma log density `-(shape+1) ln x - scale / x`.
pub fn log_inv_gamma_unnorm(x: f64, shape: f64, scale: f64) -> Result<f64> {
    if !(x > 0.0) || !(shape > 0.0) || !(scale > 0.0) {
        return Err(BvsError::validation(format!(
            "inverse-gamma arguments must be positive (x = {x}, shape = {shape}, scale = {scale})"
        )));
    }
    Ok(-(shape + 1.0) * x.ln() - scale / x)
}

/// Fully normalized inverse-gamma log density.
pub fn log_inv_gamma(x: f64, shape: f64, scale: f64) -> Result<f64> {
    Ok(shape * scale.ln() - ln_gamma(shape) + log_inv_gamma_unnorm(x, shape, scale)?)
}

/// The additive pieces of the joint log density at one state, under the
/// constant conventions described in the module docs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogJointParts {
    /// `-(n/2) ln sigma2 - RSS / (2 sigma2)`
    pub data: f64,
    /// `(1/2) ln det P - (k/2) ln 2pi - (1/2) beta' P beta`
    pub coef_prior: f64,
    /// `ln(sum of member weights) - ln k + ln size_weight(k)`
    pub set_prior: f64,
    /// Unnormalized inverse-gamma in g
    pub g_prior: f64,
    /// Unnormalized inverse-gamma in sigma2
    pub sigma2_prior: f64,
    pub total: f64,
}

/// Joint log density of the full state given the data (up to state-independent
/// constants). Errors when the state is invalid or the coefficient-prior
/// precision cannot be factored.
pub fn log_joint(
    state: &ModelState,
    s: &StandardizedDataset,
    spec: &PriorSpec,
    cache: &mut GramCache,
) -> Result<LogJointParts> {
    state.validate(s.p())?;
    let n = s.n();
    let k = state.active.k();
    let entry = cache.entry(&state.active, s);
    let yty = cache.yty(s);
    let lambda = spec.ridge_lambda(k, n);

    let p = beta_precision(&entry, state.g, state.sigma2, lambda);
    let quad_p = (&p * &state.beta).dot(&state.beta);
    let chol_p = spd_cholesky(p, || {
        format!(
            "coefficient-prior precision (set {{{}}}, lambda = {lambda})",
            state.active.format_one_based(",")
        )
    })?;
    let log_det_p = log_det_from_chol(&chol_p);

    let rss = yty - 2.0 * state.beta.dot(&entry.xty) + (&entry.xtx * &state.beta).dot(&state.beta);
    let data = -(n as f64 / 2.0) * state.sigma2.ln() - rss / (2.0 * state.sigma2);
    let coef_prior = 0.5 * log_det_p - (k as f64 / 2.0) * LN_TAU - 0.5 * quad_p;
    let set_prior = spec.log_active_set_prior(&state.active);
    let g_prior = log_inv_gamma_unnorm(state.g, spec.g_shape, spec.g_scale)?;
    let sigma2_prior = log_inv_gamma_unnorm(state.sigma2, spec.a, spec.b)?;

    let total = data + coef_prior + set_prior + g_prior + sigma2_prior;
    Ok(LogJointParts {
        data,
        coef_prior,
        set_prior,
        g_prior,
        sigma2_prior,
        total,
    })
}

/// The Gaussian proposal for coefficients given everything else: precision
/// `F = (1 + 1/g)/sigma2 * X_A'X_A + lambda I`, mean `F^{-1} X_A'y / sigma2`.
pub struct BetaProposal {
    pub mean: DVector<f64>,
    pub log_det_precision: f64,
    chol: Cholesky<f64, Dyn>,
}

impl BetaProposal {
    pub fn k(&self) -> usize {
        self.mean.len()
    }

    /// Draw `mean + L^{-T} z` with `z` standard normal, so the draw has
    /// covariance `F^{-1}`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let k = self.k();
        let z = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
        let l = self.chol.l_dirty();
        let x = l
            .tr_solve_lower_triangular(&z)
            .expect("Cholesky factor has positive diagonal");
        &self.mean + x
    }

    /// Normalized Gaussian log density of `beta` under this proposal.
    pub fn log_density(&self, beta: &DVector<f64>) -> f64 {
        let k = self.k() as f64;
        let d = beta - &self.mean;
        // d' F d as ||L' d||^2, reading only the valid lower triangle of the
        // stored factor.
        let l = self.chol.l_dirty();
        let mut quad = 0.0;
        for j in 0..self.k() {
            let mut acc = 0.0;
            for i in j..self.k() {
                acc += l[(i, j)] * d[i];
            }
            quad += acc * acc;
        }
        0.5 * self.log_det_precision - 0.5 * k * LN_TAU - 0.5 * quad
    }
}

/// Build the conditional coefficient proposal for `set` at the given scalars.
pub fn conditional_beta_proposal(
    set: &ActiveSet,
    entry: &GramEntry,
    g: f64,
    sigma2: f64,
    lambda: f64,
) -> Result<BetaProposal> {
    if !(g > 0.0 && g.is_finite()) || !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(BvsError::validation(format!(
            "proposal scalars must be positive and finite (g = {g}, sigma2 = {sigma2})"
        )));
    }
    let k = entry.xtx.nrows();
    let mut f = &entry.xtx * ((1.0 + 1.0 / g) / sigma2);
    for j in 0..k {
        f[(j, j)] += lambda;
    }
    let chol = spd_cholesky(f, || {
        format!(
            "coefficient-proposal precision (set {{{}}}, lambda = {lambda})",
            set.format_one_based(",")
        )
    })?;
    let log_det_precision = log_det_from_chol(&chol);
    let rhs = &entry.xty / sigma2;
    let mean = chol.solve(&rhs);
    Ok(BetaProposal {
        mean,
        log_det_precision,
        chol,
    })
}

/// Log marginal likelihood of the data given (set, g, sigma2), with the
/// coefficients integrated out analytically. Full constants retained.
///
/// Uses the determinant and Woodbury identities so only k-by-k systems are
/// factored: with `P` the coefficient-prior precision and
/// `F = P + X_A'X_A / sigma2`,
/// `ln det M = n ln sigma2 + ln det F - ln det P` and
/// `y'M^{-1}y = y'y/sigma2 - (X_A'y)'F^{-1}(X_A'y)/sigma2^2`.
pub fn log_marginal_likelihood(
    set: &ActiveSet,
    g: f64,
    sigma2: f64,
    s: &StandardizedDataset,
    spec: &PriorSpec,
    cache: &mut GramCache,
) -> Result<f64> {
    if !(g > 0.0 && g.is_finite()) || !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(BvsError::validation(format!(
            "marginal likelihood needs positive scalars (g = {g}, sigma2 = {sigma2})"
        )));
    }
    let n = s.n();
    let k = set.k();
    let entry = cache.entry(set, s);
    let yty = cache.yty(s);
    let lambda = spec.ridge_lambda(k, n);

    let p = beta_precision(&entry, g, sigma2, lambda);
    let chol_p = spd_cholesky(p, || {
        format!(
            "coefficient-prior precision (set {{{}}}, lambda = {lambda})",
            set.format_one_based(",")
        )
    })?;
    let log_det_p = log_det_from_chol(&chol_p);

    let mut f = &entry.xtx * ((1.0 + 1.0 / g) / sigma2);
    for j in 0..k {
        f[(j, j)] += lambda;
    }
    let chol_f = spd_cholesky(f, || {
        format!(
            "integrated-likelihood precision (set {{{}}}, lambda = {lambda})",
            set.format_one_based(",")
        )
    })?;
    let log_det_f = log_det_from_chol(&chol_f);
    let finv_xty = chol_f.solve(&entry.xty);

    let log_det_m = n as f64 * sigma2.ln() + log_det_f - log_det_p;
    let quad = yty / sigma2 - entry.xty.dot(&finv_xty) / (sigma2 * sigma2);
    Ok(-0.5 * (n as f64) * LN_TAU - 0.5 * log_det_m - 0.5 * quad)
}

/// Log of the unnormalized posterior of (set, g) with both the coefficients
/// and the noise variance integrated out analytically. Only valid when the
/// ridge correction is off (`ridge_lambda == 0`) for this set; errors
/// otherwise.
///
/// Writing `R2 = y'H_A y / (y'y + 2b)` with `H_A` the projector onto the
/// active columns, the g-dependent part is
/// `(a + n/2 - k/2) ln(1+g) - (a + n/2) ln(1 + g(1 - R2))`, multiplied by the
/// set prior and the inverse-gamma prior on g. Full constants retained.
pub fn log_marginal_set_g(
    set: &ActiveSet,
    g: f64,
    s: &StandardizedDataset,
    spec: &PriorSpec,
    cache: &mut GramCache,
) -> Result<f64> {
    let n = s.n();
    let k = set.k();
    let lambda = spec.ridge_lambda(k, n);
    if lambda != 0.0 {
        return Err(BvsError::validation(format!(
            "closed-form marginal requires the ridge correction to be off, \
             but lambda = {lambda} for k = {k}, n = {n}"
        )));
    }
    if !(g > 0.0 && g.is_finite()) {
        return Err(BvsError::validation(format!(
            "shrinkage factor must be positive and finite, got {g}"
        )));
    }
    let entry = cache.entry(set, s);
    let yty = cache.yty(s);
    let chol = spd_cholesky(entry.xtx.clone(), || {
        format!(
            "active-column Gram matrix (set {{{}}})",
            set.format_one_based(",")
        )
    })?;
    let yhy = entry.xty.dot(&chol.solve(&entry.xty));
    let denom = yty + 2.0 * spec.b;
    let r2 = yhy / denom;

    let (a, nf, kf) = (spec.a, n as f64, k as f64);
    let log_fit = (a + nf / 2.0 - kf / 2.0) * (1.0 + g).ln()
        - (a + nf / 2.0) * (1.0 + g * (1.0 - r2)).ln();
    let log_const = -(nf / 2.0) * LN_TAU + a * spec.b.ln() - ln_gamma(a)
        + ln_gamma(nf / 2.0 + a)
        - (nf / 2.0 + a) * (denom / 2.0).ln();
    Ok(spec.log_active_set_prior(set)
        + log_inv_gamma(g, spec.g_shape, spec.g_scale)?
        + log_const
        + log_fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{standardize, Dataset};
    use crate::priors::{ImportanceWeights, SizePrior};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::f64::consts::TAU;

    fn toy(n: usize, p: usize, seed: u64) -> StandardizedDataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let y = DVector::from_fn(n, |i, _| {
            1.3 * x[(i, 0)] - 0.7 * x[(i, p - 1)] + 0.5 * (rng.random::<f64>() - 0.5)
        });
        standardize(&Dataset::with_default_names(x, y).unwrap()).unwrap()
    }

    fn spec_for(s: &StandardizedDataset, zeta: Option<usize>) -> PriorSpec {
        PriorSpec::new(
            ImportanceWeights::from_raw(&vec![1.0; s.p()]).unwrap(),
            ImportanceWeights::from_raw(&vec![1.0; s.p()]).unwrap(),
            SizePrior::ztb(s.p(), 1.5).unwrap(),
            0.001,
            0.001,
            s.n(),
            zeta,
        )
        .unwrap()
    }

    #[test]
    fn gram_entries_match_direct_columns() {
        let s = toy(9, 4, 1);
        let mut cache = GramCache::new(16);
        let set = ActiveSet::new(vec![0, 2, 3]).unwrap();
        let e = cache.entry(&set, &s);
        for (a, ia) in set.iter().enumerate() {
            let direct_y: f64 = (0..s.n()).map(|r| s.x[(r, ia)] * s.y[r]).sum();
            assert_abs_diff_eq!(e.xty[a], direct_y, epsilon = 1e-12);
            for (b, ib) in set.iter().enumerate() {
                let direct: f64 = (0..s.n()).map(|r| s.x[(r, ia)] * s.x[(r, ib)]).sum();
                assert_abs_diff_eq!(e.xtx[(a, b)], direct, epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(cache.yty(&s), s.y.norm_squared(), epsilon = 1e-12);
    }

    #[test]
    fn gram_cache_bounds_size_and_recomputes_after_eviction() {
        let s = toy(8, 10, 2);
        let mut cache = GramCache::new(8);
        for i in 0..10 {
            let set = ActiveSet::singleton(i);
            let _ = cache.entry(&set, &s);
        }
        assert!(cache.len() <= 8);
        // Whatever was evicted must recompute to the same values.
        let set = ActiveSet::singleton(0);
        let e = cache.entry(&set, &s);
        let direct: f64 = (0..s.n()).map(|r| s.x[(r, 0)] * s.x[(r, 0)]).sum();
        assert_abs_diff_eq!(e.xtx[(0, 0)], direct, epsilon = 1e-12);
    }

    #[test]
    fn beta_precision_matches_elementwise_formula() {
        let s = toy(11, 5, 3);
        let mut cache = GramCache::new(8);
        let set = ActiveSet::new(vec![0, 2, 3]).unwrap();
        let e = cache.entry(&set, &s);
        let (g, sigma2, lambda) = (3.7, 0.9, 0.33);
        let p = beta_precision(&e, g, sigma2, lambda);
        let idx = set.as_slice();
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..s.n()).map(|r| s.x[(r, idx[a])] * s.x[(r, idx[b])]).sum();
                let expect = dot / (g * sigma2) + if a == b { lambda } else { 0.0 };
                assert_abs_diff_eq!(p[(a, b)], expect, epsilon = 1e-12);
            }
        }
    }

    /// Independent dense evaluation of the joint log density: explicit
    /// residual loop, determinant through LU, explicit quadratic forms.
    fn dense_log_joint(
        state: &ModelState,
        s: &StandardizedDataset,
        spec: &PriorSpec,
    ) -> (f64, f64, f64, f64, f64) {
        let n = s.n();
        let k = state.active.k();
        let idx = state.active.as_slice();
        let lambda = spec.ridge_lambda(k, n);

        let mut rss = 0.0;
        for r in 0..n {
            let fit: f64 = (0..k).map(|j| s.x[(r, idx[j])] * state.beta[j]).sum();
            rss += (s.y[r] - fit) * (s.y[r] - fit);
        }
        let data = -(n as f64 / 2.0) * state.sigma2.ln() - rss / (2.0 * state.sigma2);

        let mut p = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                let dot: f64 = (0..n).map(|r| s.x[(r, idx[a])] * s.x[(r, idx[b])]).sum();
                p[(a, b)] = dot / (state.g * state.sigma2) + if a == b { lambda } else { 0.0 };
            }
        }
        let det = p.clone().determinant();
        let mut quad = 0.0;
        for a in 0..k {
            for b in 0..k {
                quad += state.beta[a] * p[(a, b)] * state.beta[b];
            }
        }
        let coef = 0.5 * det.ln() - (k as f64 / 2.0) * TAU.ln() - 0.5 * quad;

        let wsum: f64 = state.active.iter().map(|i| spec.prior_weights.get(i)).sum();
        let set_prior =
            wsum.ln() - (k as f64).ln() + spec.size_prior.log_weight(k);
        let g_prior = -(spec.g_shape + 1.0) * state.g.ln() - spec.g_scale / state.g;
        let s2_prior = -(spec.a + 1.0) * state.sigma2.ln() - spec.b / state.sigma2;
        (data, coef, set_prior, g_prior, s2_prior)
    }

    #[test]
    fn log_joint_matches_independent_dense_evaluation() {
        let s = toy(12, 3, 4);
        let spec = spec_for(&s, None);
        let mut cache = GramCache::new(8);
        let state = ModelState {
            active: ActiveSet::new(vec![0, 2]).unwrap(),
            beta: DVector::from_row_slice(&[0.3, -1.1]),
            g: 5.0,
            sigma2: 0.7,
        };
        let parts = log_joint(&state, &s, &spec, &mut cache).unwrap();
        let (data, coef, set_p, g_p, s2_p) = dense_log_joint(&state, &s, &spec);
        assert_abs_diff_eq!(parts.data, data, epsilon = 1e-10);
        assert_abs_diff_eq!(parts.coef_prior, coef, epsilon = 1e-10);
        assert_abs_diff_eq!(parts.set_prior, set_p, epsilon = 1e-12);
        assert_abs_diff_eq!(parts.g_prior, g_p, epsilon = 1e-12);
        assert_abs_diff_eq!(parts.sigma2_prior, s2_p, epsilon = 1e-12);
        assert_abs_diff_eq!(
            parts.total,
            data + coef + set_p + g_p + s2_p,
            epsilon = 1e-10
        );
    }

    #[test]
    fn log_joint_matches_dense_with_nonuniform_weights_and_ridge_off() {
        let s = toy(15, 4, 5);
        let spec = PriorSpec::new(
            ImportanceWeights::from_raw(&[0.5, 0.1, 0.3, 0.1]).unwrap(),
            ImportanceWeights::uniform(4).unwrap(),
            SizePrior::ztb_cubed(4, 2.0).unwrap(),
            0.01,
            0.2,
            s.n(),
            Some(10), // n = 15 > zeta: ridge correction off
        )
        .unwrap();
        let mut cache = GramCache::new(8);
        let state = ModelState {
            active: ActiveSet::new(vec![1, 2, 3]).unwrap(),
            beta: DVector::from_row_slice(&[0.4, -0.2, 0.9]),
            g: 11.0,
            sigma2: 1.4,
        };
        let parts = log_joint(&state, &s, &spec, &mut cache).unwrap();
        let (data, coef, set_p, g_p, s2_p) = dense_log_joint(&state, &s, &spec);
        assert_abs_diff_eq!(parts.total, data + coef + set_p + g_p + s2_p, epsilon = 1e-10);
    }

    #[test]
    fn increasing_b_shifts_log_joint_by_delta_over_sigma2() {
        let s = toy(10, 3, 6);
        let mut spec = spec_for(&s, None);
        let mut cache = GramCache::new(8);
        let state = ModelState {
            active: ActiveSet::singleton(1),
            beta: DVector::from_row_slice(&[0.8]),
            g: 2.0,
            sigma2: 0.6,
        };
        let before = log_joint(&state, &s, &spec, &mut cache).unwrap().total;
        let delta = 0.37;
        spec.b += delta;
        let after = log_joint(&state, &s, &spec, &mut cache).unwrap().total;
        assert_abs_diff_eq!(before - after, delta / state.sigma2, epsilon = 1e-12);
    }

    #[test]
    fn invalid_states_are_rejected() {
        let s = toy(10, 3, 7);
        let spec = spec_for(&s, None);
        let mut cache = GramCache::new(8);
        let ok = ModelState {
            active: ActiveSet::singleton(0),
            beta: DVector::from_row_slice(&[0.1]),
            g: 1.0,
            sigma2: 1.0,
        };
        for bad in [
            ModelState { g: -1.0, ..ok.clone() },
            ModelState { sigma2: 0.0, ..ok.clone() },
            ModelState {
                beta: DVector::from_row_slice(&[0.1, 0.2]),
                ..ok.clone()
            },
            ModelState {
                active: ActiveSet::singleton(5),
                ..ok.clone()
            },
        ] {
            assert!(log_joint(&bad, &s, &spec, &mut cache).is_err());
        }
    }

    #[test]
    fn exactly_collinear_columns_without_ridge_fail_loudly() {
        // Two identical columns make the Gram matrix exactly singular; with
        // the ridge correction switched off the factorization must error
        // rather than return garbage.
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let n = 6;
        let c0: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { c0[i] } else { c0[i] });
        let y = DVector::from_fn(n, |i, _| c0[i] + 0.1 * rng.random::<f64>());
        let s = standardize(&Dataset::with_default_names(x, y).unwrap()).unwrap();
        let spec = spec_for(&s, Some(2)); // n = 6 > zeta = 2: lambda = 0
        let mut cache = GramCache::new(8);
        let state = ModelState {
            active: ActiveSet::new(vec![0, 1]).unwrap(),
            beta: DVector::from_row_slice(&[0.1, 0.1]),
            g: 1.0,
            sigma2: 1.0,
        };
        let err = log_joint(&state, &s, &spec, &mut cache).unwrap_err();
        assert!(matches!(err, BvsError::Numeric(_)), "{err}");
    }

    #[test]
    fn conditional_proposal_approaches_least_squares_when_unshrunk() {
        let s = toy(30, 3, 9);
        let set = ActiveSet::new(vec![0, 1, 2]).unwrap();
        let mut cache = GramCache::new(8);
        let e = cache.entry(&set, &s);
        let prop = conditional_beta_proposal(&set, &e, 1e8, 0.5, 0.0).unwrap();
        let ols = e
            .xtx
            .clone()
            .lu()
            .solve(&e.xty)
            .expect("well-conditioned toy Gram");
        assert!((prop.mean - &ols).norm() / ols.norm() < 1e-6);
    }

    #[test]
    fn proposal_log_density_matches_dense_gaussian() {
        let s = toy(20, 4, 10);
        let set = ActiveSet::new(vec![0, 1, 3]).unwrap();
        let mut cache = GramCache::new(8);
        let e = cache.entry(&set, &s);
        let (g, sigma2, lambda) = (4.0, 0.8, 0.4);
        let prop = conditional_beta_proposal(&set, &e, g, sigma2, lambda).unwrap();

        // Independent dense route: rebuild F elementwise, determinant via LU,
        // quadratic form via loops.
        let k = 3;
        let mut f = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                f[(a, b)] = e.xtx[(a, b)] * (1.0 + 1.0 / g) / sigma2
                    + if a == b { lambda } else { 0.0 };
            }
        }
        let beta = DVector::from_row_slice(&[0.2, -0.5, 1.0]);
        let d = &beta - &prop.mean;
        let mut quad = 0.0;
        for a in 0..k {
            for b in 0..k {
                quad += d[a] * f[(a, b)] * d[b];
            }
        }
        let dense = 0.5 * f.clone().determinant().ln()
            - (k as f64 / 2.0) * TAU.ln()
            - 0.5 * quad;
        assert_abs_diff_eq!(prop.log_density(&beta), dense, epsilon = 1e-10);
    }

    #[test]
    fn proposal_samples_recover_mean_and_spread() {
        let s = toy(25, 2, 11);
        let set = ActiveSet::new(vec![0, 1]).unwrap();
        let mut cache = GramCache::new(8);
        let e = cache.entry(&set, &s);
        let prop = conditional_beta_proposal(&set, &e, 10.0, 1.0, 0.5).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let m = 20_000;
        let mut sum = DVector::zeros(2);
        let mut sum_sq = DVector::zeros(2);
        for _ in 0..m {
            let d = prop.sample(&mut rng);
            sum += &d;
            sum_sq += d.component_mul(&d);
        }
        let mean = sum / m as f64;
        let var = sum_sq / m as f64 - mean.component_mul(&mean);

        // Reference covariance: dense inverse of F.
        let mut f = e.xtx.clone() * ((1.0 + 1.0 / 10.0) / 1.0);
        for j in 0..2 {
            f[(j, j)] += 0.5;
        }
        let cov = f.try_inverse().unwrap();
        for j in 0..2 {
            let se_mean = (cov[(j, j)] / m as f64).sqrt();
            assert!(
                (mean[j] - prop.mean[j]).abs() < 4.0 * se_mean,
                "mean component {j} off: {} vs {}",
                mean[j],
                prop.mean[j]
            );
            let se_var = cov[(j, j)] * (2.0 / m as f64).sqrt();
            assert!(
                (var[j] - cov[(j, j)]).abs() < 5.0 * se_var,
                "variance component {j} off: {} vs {}",
                var[j],
                cov[(j, j)]
            );
        }
    }

    #[test]
    fn marginal_likelihood_matches_dense_gaussian_in_data_space() {
        // Small enough to build the n-by-n covariance directly:
        // M = sigma2 I + X_A P^{-1} X_A'.
        let s = toy(6, 3, 12);
        let spec = spec_for(&s, None);
        let mut cache = GramCache::new(8);
        for set in [
            ActiveSet::singleton(1),
            ActiveSet::new(vec![0, 2]).unwrap(),
            ActiveSet::new(vec![0, 1, 2]).unwrap(),
        ] {
            let (g, sigma2) = (3.0, 0.9);
            let got = log_marginal_likelihood(&set, g, sigma2, &s, &spec, &mut cache).unwrap();

            let k = set.k();
            let n = s.n();
            let idx = set.as_slice();
            let lambda = spec.ridge_lambda(k, n);
            let xa = DMatrix::from_fn(n, k, |i, j| s.x[(i, idx[j])]);
            let mut p = xa.tr_mul(&xa) / (g * sigma2);
            for j in 0..k {
                p[(j, j)] += lambda;
            }
            let pinv = p.try_inverse().unwrap();
            let m = DMatrix::identity(n, n) * sigma2 + &xa * pinv * xa.transpose();
            let det = m.clone().determinant();
            let minv_y = m.clone().lu().solve(&s.y).unwrap();
            let dense = -0.5 * (n as f64) * TAU.ln() - 0.5 * det.ln() - 0.5 * s.y.dot(&minv_y);
            assert_abs_diff_eq!(got, dense, epsilon = 1e-9);
        }
    }

    #[test]
    fn marginal_likelihood_reduces_to_projector_form_without_ridge() {
        let s = toy(8, 2, 13);
        let spec = spec_for(&s, Some(4)); // n = 8 > zeta: lambda = 0
        let mut cache = GramCache::new(8);
        let set = ActiveSet::new(vec![0, 1]).unwrap();
        let (g, sigma2) = (7.0, 1.3);
        let got = log_marginal_likelihood(&set, g, sigma2, &s, &spec, &mut cache).unwrap();

        let n = s.n();
        let k = set.k();
        let xa = DMatrix::from_fn(n, k, |i, j| s.x[(i, set.as_slice()[j])]);
        let h = &xa * xa.tr_mul(&xa).try_inverse().unwrap() * xa.transpose();
        let yty = s.y.norm_squared();
        let yhy = s.y.dot(&(&h * &s.y));
        let expect = -0.5 * (n as f64) * (TAU.ln() + sigma2.ln())
            - 0.5 * (k as f64) * (1.0 + g).ln()
            - (yty - (g / (1.0 + g)) * yhy) / (2.0 * sigma2);
        assert_abs_diff_eq!(got, expect, epsilon = 1e-9);
    }

    /// Simpson integration of `f` over `[lo, hi]` with `m` panels (m even).
    fn simpson(lo: f64, hi: f64, m: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = (hi - lo) / m as f64;
        let mut acc = f(lo) + f(hi);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(lo + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn normalized_inverse_gamma_integrates_to_one() {
        // Shape 1/2 has a very slow x^{-3/2} right tail; the upper cutoff has
        // to sit near e^45 before the truncated mass drops below 1e-9.
        let (shape, scale) = (0.5, 3.0);
        let total = simpson(-40.0, 45.0, 10_000, |u| {
            // substitute x = e^u, dx = e^u du
            let x = u.exp();
            log_inv_gamma(x, shape, scale).unwrap().exp() * x
        });
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn unnormalized_inverse_gamma_differs_by_constant() {
        let (shape, scale) = (2.5, 1.7);
        let c0 = log_inv_gamma(0.3, shape, scale).unwrap()
            - log_inv_gamma_unnorm(0.3, shape, scale).unwrap();
        let c1 = log_inv_gamma(4.0, shape, scale).unwrap()
            - log_inv_gamma_unnorm(4.0, shape, scale).unwrap();
        assert_abs_diff_eq!(c0, c1, epsilon = 1e-12);
        assert!(log_inv_gamma_unnorm(-1.0, shape, scale).is_err());
        assert!(log_inv_gamma_unnorm(1.0, 0.0, scale).is_err());
    }

    #[test]
    fn closed_form_set_g_marginal_matches_variance_quadrature() {
        let s = toy(10, 3, 14);
        let spec = spec_for(&s, Some(0)); // lambda = 0 everywhere
        let mut cache = GramCache::new(8);
        for set in [
            ActiveSet::singleton(0),
            ActiveSet::new(vec![0, 1]).unwrap(),
            ActiveSet::new(vec![0, 1, 2]).unwrap(),
        ] {
            for g in [0.5, 3.0, 40.0] {
                let closed = log_marginal_set_g(&set, g, &s, &spec, &mut cache).unwrap();
                // Independent route: integrate the (beta-integrated) marginal
                // likelihood against the normalized variance prior on the log
                // scale, then add the set and g priors.
                let integral = simpson(-22.0, 22.0, 6000, |u| {
                    let sigma2 = u.exp();
                    let ml = log_marginal_likelihood(&set, g, sigma2, &s, &spec, &mut cache)
                        .unwrap();
                    let prior = log_inv_gamma(sigma2, spec.a, spec.b).unwrap();
                    (ml + prior).exp() * sigma2
                });
                let numeric = integral.ln()
                    + spec.log_active_set_prior(&set)
                    + log_inv_gamma(g, spec.g_shape, spec.g_scale).unwrap();
                assert_abs_diff_eq!(closed, numeric, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn closed_form_refuses_active_ridge() {
        let s = toy(10, 3, 15);
        let spec = spec_for(&s, None); // ridge always on
        let mut cache = GramCache::new(8);
        let err =
            log_marginal_set_g(&ActiveSet::singleton(0), 1.0, &s, &spec, &mut cache).unwrap_err();
        assert!(matches!(err, BvsError::Validation(_)), "{err}");
    }
}
