//! Prior specification: predictor importance weights, the model-size prior,
//! the hyperparameters of the variance and shrinkage priors, and the
//! data-driven weight constructions (correlation- and ridge-based).

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::{k_fold_split, StandardizedDataset};
use crate::error::{BvsError, Result};
use crate::set::ActiveSet;

/// Every importance weight is floored at this value so that no predictor is
/// ever unreachable by the set proposals.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// A probability vector over predictors with every entry at least
/// [`WEIGHT_FLOOR`]. Used both for the set prior and for the proposal
/// distribution that drives set moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceWeights {
    w: Vec<f64>,
}

impl ImportanceWeights {
    /// Normalize raw nonnegative scores and mix toward the floor:
    /// `w_i = floor + (1 - p * floor) * raw_i / sum(raw)`. The result sums to
    /// one with `min(w) >= floor`, and preserves the ordering of the raw
    /// scores.
    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        let p = raw.len();
        if p == 0 {
            return Err(BvsError::validation("weight vector must be nonempty"));
        }
        if (p as f64) * WEIGHT_FLOOR >= 1.0 {
            return Err(BvsError::validation(format!(
                "too many predictors ({p}) for the weight floor"
            )));
        }
        if let Some(v) = raw.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(BvsError::validation(format!(
                "raw weights must be finite and nonnegative, got {v}"
            )));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(BvsError::validation("raw weights must not all be zero"));
        }
        let slack = 1.0 - (p as f64) * WEIGHT_FLOOR;
        let w = raw
            .iter()
            .map(|&r| WEIGHT_FLOOR + slack * (r / total))
            .collect();
        Ok(ImportanceWeights { w })
    }

    pub fn uniform(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(BvsError::validation("weight vector must be nonempty"));
        }
        if (p as f64) * WEIGHT_FLOOR >= 1.0 {
            return Err(BvsError::validation(format!(
                "too many predictors ({p}) for the weight floor"
            )));
        }
        Ok(ImportanceWeights {
            w: vec![1.0 / p as f64; p],
        })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.w[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    /// Sum of the weights of the members of `set`.
    pub fn sum_over(&self, set: &ActiveSet) -> f64 {
        set.iter().map(|i| self.w[i]).sum()
    }

    /// Sum of reciprocal weights of the members of `set` (finite because of
    /// the floor).
    pub fn sum_reciprocal_over(&self, set: &ActiveSet) -> f64 {
        set.iter().map(|i| 1.0 / self.w[i]).sum()
    }
}

/// Unnormalized prior over the model size `k in 1..=p`, stored in log space so
/// that sharply decaying tails (a cubed truncated binomial at large `p`) do
/// not underflow to hard zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePrior {
    log_w: Vec<f64>,
}

impl SizePrior {
    /// Zero-truncated Binomial(p, mean/p) probability mass.
    pub fn ztb(p: usize, mean: f64) -> Result<Self> {
        Ok(SizePrior {
            log_w: ztb_log_pmf_table(p, mean)?,
        })
    }

    /// The zero-truncated binomial pmf cubed (sharper concentration at small
    /// sizes).
    pub fn ztb_cubed(p: usize, mean: f64) -> Result<Self> {
        let log_w = ztb_log_pmf_table(p, mean)?
            .into_iter()
            .map(|lw| 3.0 * lw)
            .collect();
        Ok(SizePrior { log_w })
    }

    /// Equal mass on every size.
    pub fn uniform(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(BvsError::validation("size prior needs p >= 1"));
        }
        Ok(SizePrior { log_w: vec![0.0; p] })
    }

    /// Caller-supplied nonnegative weights for sizes `1..=p`; zeros are
    /// allowed (those sizes become unreachable) but not all entries may be
    /// zero.
    pub fn custom(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(BvsError::validation("size prior needs p >= 1"));
        }
        if let Some(v) = weights.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(BvsError::validation(format!(
                "size weights must be finite and nonnegative, got {v}"
            )));
        }
        if weights.iter().all(|&v| v == 0.0) {
            return Err(BvsError::validation("size weights must not all be zero"));
        }
        Ok(SizePrior {
            log_w: weights.iter().map(|&v| v.ln()).collect(),
        })
    }

    pub fn p(&self) -> usize {
        self.log_w.len()
    }

    /// `ln` of the (unnormalized) weight of size `k`, `-inf` where a custom
    /// weight is zero.
    pub fn log_weight(&self, k: usize) -> f64 {
        assert!(k >= 1 && k <= self.log_w.len(), "size {k} out of range");
        self.log_w[k - 1]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.log_weight(k).exp()
    }
}

/// Log pmf of the zero-truncated Binomial(p, q) with q = mean / p, for
/// k = 1..=p.
fn ztb_log_pmf_table(p: usize, mean: f64) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(BvsError::validation("size prior needs p >= 1"));
    }
    let q = mean / p as f64;
    if !(q > 0.0 && q < 1.0) {
        return Err(BvsError::validation(format!(
            "size prior mean {mean} must lie strictly between 0 and p = {p}"
        )));
    }
    let pf = p as f64;
    // ln P(X >= 1) = ln(1 - (1-q)^p), computed via expm1 for stability when
    // the truncated mass is tiny.
    let log_trunc = (-((pf * (1.0 - q).ln()).exp_m1())).ln();
    let table = (1..=p)
        .map(|k| {
            let kf = k as f64;
            let log_choose = ln_gamma(pf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(pf - kf + 1.0);
            log_choose + kf * q.ln() + (pf - kf) * (1.0 - q).ln() - log_trunc
        })
        .collect();
    Ok(table)
}

/// How the importance weights for a fit are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum WeightMode {
    Uniform,
    /// Absolute sample correlation between each standardized predictor and the
    /// centered response.
    Correlations,
    /// Absolute ridge coefficients raised to `power`, with the penalty chosen
    /// by cross-validation when `penalty` is absent.
    Ridge {
        #[serde(default = "default_ridge_power")]
        power: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        penalty: Option<f64>,
    },
}

fn default_ridge_power() -> f64 {
    1.0
}

impl Default for WeightMode {
    fn default() -> Self {
        WeightMode::Uniform
    }
}

impl WeightMode {
    /// Build the weights this mode describes for the given data. `seed`
    /// drives the fold split when the ridge penalty is chosen by
    /// cross-validation; the other modes are deterministic.
    pub fn resolve(&self, s: &StandardizedDataset, seed: u64) -> Result<ImportanceWeights> {
        match self {
            WeightMode::Uniform => ImportanceWeights::uniform(s.p()),
            WeightMode::Correlations => weights_from_correlations(s),
            WeightMode::Ridge { power, penalty } => {
                let penalty = match penalty {
                    Some(v) => *v,
                    None => select_ridge_penalty(s, 5, seed)?,
                };
                weights_from_ridge(s, penalty, *power)
            }
        }
    }
}

/// Full prior specification for one fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Weights `p_i` entering the set prior.
    pub prior_weights: ImportanceWeights,
    /// Weights driving the set proposal moves (often identical to
    /// `prior_weights`, but independently configurable).
    pub proposal_weights: ImportanceWeights,
    pub size_prior: SizePrior,
    /// Shape of the inverse-gamma prior on the noise variance.
    pub a: f64,
    /// Scale of the inverse-gamma prior on the noise variance.
    pub b: f64,
    /// Shape of the inverse-gamma prior on the shrinkage factor g (1/2 under
    /// the Zellner-Siow choice).
    pub g_shape: f64,
    /// Scale of the inverse-gamma prior on g (n/2 under Zellner-Siow).
    pub g_scale: f64,
    /// Sample-size threshold for the ridge correction inside the coefficient
    /// prior: the correction is active while `n <= zeta`. `None` means
    /// "always active".
    pub zeta: Option<usize>,
}

impl PriorSpec {
    /// Standard construction: Zellner-Siow hyperparameters for g derived from
    /// the sample size.
    pub fn new(
        prior_weights: ImportanceWeights,
        proposal_weights: ImportanceWeights,
        size_prior: SizePrior,
        a: f64,
        b: f64,
        n: usize,
        zeta: Option<usize>,
    ) -> Result<Self> {
        let p = prior_weights.len();
        if proposal_weights.len() != p || size_prior.p() != p {
            return Err(BvsError::validation(format!(
                "inconsistent dimensions: prior weights {p}, proposal weights {}, size prior {}",
                proposal_weights.len(),
                size_prior.p()
            )));
        }
        if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
            return Err(BvsError::validation(format!(
                "variance prior parameters must be positive, got a = {a}, b = {b}"
            )));
        }
        if n < 2 {
            return Err(BvsError::validation(format!("need n >= 2, got {n}")));
        }
        Ok(PriorSpec {
            prior_weights,
            proposal_weights,
            size_prior,
            a,
            b,
            g_shape: 0.5,
            g_scale: n as f64 / 2.0,
            zeta,
        })
    }

    pub fn p(&self) -> usize {
        self.prior_weights.len()
    }

    /// Ridge correction added to the coefficient-prior precision:
    /// `max(1/k, 1/300)` while `n <= zeta`, zero once `n > zeta`.
    pub fn ridge_lambda(&self, k: usize, n: usize) -> f64 {
        assert!(k >= 1, "active set size must be positive");
        match self.zeta {
            Some(z) if n > z => 0.0,
            _ => (1.0 / k as f64).max(1.0 / 300.0),
        }
    }

    /// Unnormalized log prior of an active set:
    /// `ln(sum of member weights) - ln k + ln size_weight(k)`.
    pub fn log_active_set_prior(&self, set: &ActiveSet) -> f64 {
        let k = set.k();
        self.prior_weights.sum_over(set).ln() - (k as f64).ln() + self.size_prior.log_weight(k)
    }
}

/// Penalized least squares on the standardized data:
/// solves `(X'X + penalty * I) b = X'y`.
pub fn ridge_fit(s: &StandardizedDataset, penalty: f64) -> Result<DVector<f64>> {
    if !(penalty >= 0.0 && penalty.is_finite()) {
        return Err(BvsError::validation(format!(
            "ridge penalty must be nonnegative and finite, got {penalty}"
        )));
    }
    let p = s.p();
    let mut gram = s.x.tr_mul(&s.x);
    for j in 0..p {
        gram[(j, j)] += penalty;
    }
    let chol = Cholesky::new(gram).ok_or_else(|| {
        BvsError::numeric(format!(
            "ridge system not positive definite (p = {p}, penalty = {penalty}); \
             a positive penalty is required when p >= n"
        ))
    })?;
    let xty = s.x.tr_mul(&s.y);
    Ok(chol.solve(&xty))
}

/// Select the ridge penalty by k-fold cross-validation over a 50-point
/// log-spaced grid on `[1e-4, 1e4]` scaled by `n - 1`, minimizing the mean
/// absolute heldout error. Ties resolve to the smaller penalty.
pub fn select_ridge_penalty(s: &StandardizedDataset, folds: usize, seed: u64) -> Result<f64> {
    let n = s.n();
    let p = s.p();
    let folds = folds.min(n);
    let grid = ridge_penalty_grid(n);
    let split = k_fold_split(n, folds, seed)?;

    // Per fold: Gram and cross moments once; every grid point reuses them.
    let mut fold_moments = Vec::with_capacity(split.len());
    for (train, heldout) in &split {
        let xt = DMatrix::from_fn(train.len(), p, |i, j| s.x[(train[i], j)]);
        let yt = DVector::from_fn(train.len(), |i, _| s.y[train[i]]);
        let gram = xt.tr_mul(&xt);
        let xty = xt.tr_mul(&yt);
        fold_moments.push((gram, xty, heldout.clone()));
    }

    let mut best: Option<(f64, f64)> = None;
    for &penalty in &grid {
        let mut score_sum = 0.0;
        for (gram, xty, heldout) in &fold_moments {
            let mut a = gram.clone();
            for j in 0..p {
                a[(j, j)] += penalty;
            }
            let chol = Cholesky::new(a).ok_or_else(|| {
                BvsError::numeric(format!(
                    "ridge cross-validation system singular at penalty {penalty}"
                ))
            })?;
            let b = chol.solve(xty);
            let mut abs_err = 0.0;
            for &r in heldout {
                let pred: f64 = (0..p).map(|j| s.x[(r, j)] * b[j]).sum();
                abs_err += (s.y[r] - pred).abs();
            }
            score_sum += abs_err / heldout.len() as f64;
        }
        let score = score_sum / fold_moments.len() as f64;
        if best.map_or(true, |(best_score, _)| score < best_score) {
            best = Some((score, penalty));
        }
    }
    Ok(best.expect("grid is nonempty").1)
}

/// The cross-validation grid for `select_ridge_penalty`.
pub fn ridge_penalty_grid(n: usize) -> Vec<f64> {
    let scale = n as f64 - 1.0;
    let (lo, hi) = (1e-4f64, 1e4f64);
    let m = 50;
    (0..m)
        .map(|i| {
            let t = i as f64 / (m - 1) as f64;
            scale * (lo.ln() + t * (hi.ln() - lo.ln())).exp()
        })
        .collect()
}

/// Importance weights from absolute ridge coefficients raised to `power`.
pub fn weights_from_ridge(
    s: &StandardizedDataset,
    penalty: f64,
    power: f64,
) -> Result<ImportanceWeights> {
    if !(power > 0.0 && power.is_finite()) {
        return Err(BvsError::validation(format!(
            "weight power must be positive, got {power}"
        )));
    }
    let b = ridge_fit(s, penalty)?;
    let raw: Vec<f64> = b.iter().map(|&v| v.abs().powf(power)).collect();
    if raw.iter().all(|&v| v == 0.0) {
        log::warn!("all ridge coefficients are zero; falling back to uniform weights");
        return ImportanceWeights::uniform(s.p());
    }
    ImportanceWeights::from_raw(&raw)
}

/// Importance weights from absolute predictor/response sample correlations.
pub fn weights_from_correlations(s: &StandardizedDataset) -> Result<ImportanceWeights> {
    let n = s.n() as f64;
    let y_norm = s.y.norm();
    if y_norm == 0.0 {
        log::warn!("response is constant after centering; falling back to uniform weights");
        return ImportanceWeights::uniform(s.p());
    }
    // Standardized columns have squared norm n - 1, so the sample correlation
    // reduces to x_j'y / (sqrt(n-1) * ||y||).
    let denom = (n - 1.0).sqrt() * y_norm;
    let raw: Vec<f64> = (0..s.p())
        .map(|j| (s.x.column(j).dot(&s.y) / denom).abs())
        .collect();
    if raw.iter().all(|&v| v == 0.0) {
        log::warn!("all predictor/response correlations are zero; falling back to uniform weights");
        return ImportanceWeights::uniform(s.p());
    }
    ImportanceWeights::from_raw(&raw)
}
