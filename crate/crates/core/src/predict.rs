//! Posterior-mean prediction and chain summaries.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{BvsError, Result};
use crate::sampler::{ChainOutput, RetainedSample};
use crate::set::ActiveSet;

/// Average of `X beta` over the retained draws, with each draw's coefficients
/// gathered onto its own active columns. `x` must already be in the
/// standardized predictor space; the result is on the centered response scale.
pub fn predictive_mean(samples: &[RetainedSample], x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if samples.is_empty() {
        return Err(BvsError::validation("no retained samples to predict from"));
    }
    let mut acc = DVector::zeros(x.nrows());
    for sample in samples {
        let st = &sample.state;
        if let Some(j) = st.active.iter().find(|&j| j >= x.ncols()) {
            return Err(BvsError::validation(format!(
                "sample uses predictor {} but the matrix has {} columns",
                j + 1,
                x.ncols()
            )));
        }
        for (pos, j) in st.active.iter().enumerate() {
            acc.axpy(st.beta[pos], &x.column(j), 1.0);
        }
    }
    Ok(acc / samples.len() as f64)
}

/// Squared and absolute prediction error, averaged over observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mse: f64,
    pub mad: f64,
}

pub fn error_metrics(predicted: &DVector<f64>, actual: &DVector<f64>) -> Result<ErrorMetrics> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return Err(BvsError::validation(format!(
            "prediction and truth must have equal nonzero length ({} vs {})",
            predicted.len(),
            actual.len()
        )));
    }
    let n = predicted.len() as f64;
    let (mut sq, mut ab) = (0.0, 0.0);
    for (p, a) in predicted.iter().zip(actual.iter()) {
        let d = p - a;
        sq += d * d;
        ab += d.abs();
    }
    Ok(ErrorMetrics {
        mse: sq / n,
        mad: ab / n,
    })
}

/// Median of a slice: the mean of the two central order statistics when the
/// length is even. Used to pool per-replicate or per-fold error metrics.
pub fn aggregate_median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(BvsError::validation("cannot take the median of no values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("median of non-finite value"));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        Ok(sorted[mid])
    } else {
        Ok(0.5 * (sorted[mid - 1] + sorted[mid]))
    }
}

/// One frequently-visited active set, reported with one-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSet {
    pub predictors: Vec<usize>,
    pub probability: f64,
}

/// Digest of a finished chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// Marginal probability that each predictor is active (index order).
    pub inclusion_probabilities: Vec<f64>,
    /// Posterior-mean coefficient for each predictor on the standardized
    /// scale; draws that exclude a predictor contribute zero to its mean.
    pub mean_beta: Vec<f64>,
    /// Visit share of each active-set size; index 0 is unused and zero.
    pub size_distribution: Vec<f64>,
    pub mean_size: f64,
    /// The single most-visited set (ties broken by index order).
    pub map_set: RankedSet,
    /// Most-visited sets, largest share first.
    pub top_sets: Vec<RankedSet>,
    pub samples: usize,
    pub acceptance_rate: f64,
    pub numeric_rejections: u64,
}

/// Summarize a chain's retained draws. `max_sets` bounds how many
/// frequently-visited sets are listed.
pub fn summarize(chain: &ChainOutput, max_sets: usize) -> Result<PosteriorSummary> {
    if chain.samples.is_empty() {
        return Err(BvsError::validation("chain retained no samples"));
    }
    let p = chain.p;
    let total = chain.samples.len() as f64;
    let mut inclusion = vec![0.0; p];
    let mut mean_beta = vec![0.0; p];
    let mut size_counts = vec![0usize; p + 1];
    let mut set_counts: HashMap<&ActiveSet, usize> = HashMap::new();
    let mut mean_size = 0.0;
    for sample in &chain.samples {
        let set = &sample.state.active;
        for (pos, i) in set.iter().enumerate() {
            inclusion[i] += 1.0;
            mean_beta[i] += sample.state.beta[pos];
        }
        size_counts[set.k()] += 1;
        mean_size += set.k() as f64;
        *set_counts.entry(set).or_default() += 1;
    }
    for (v, b) in inclusion.iter_mut().zip(mean_beta.iter_mut()) {
        *v /= total;
        *b /= total;
    }
    let size_distribution = size_counts.iter().map(|&c| c as f64 / total).collect();
    let mut ranked: Vec<(&ActiveSet, usize)> = set_counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.as_slice().cmp(b.0.as_slice())));
    let rank_entry = |(set, count): (&ActiveSet, usize)| RankedSet {
        predictors: set.iter().map(|i| i + 1).collect(),
        probability: count as f64 / total,
    };
    let map_set = rank_entry(ranked[0]);
    let top_sets = ranked.into_iter().take(max_sets).map(rank_entry).collect();
    Ok(PosteriorSummary {
        inclusion_probabilities: inclusion,
        mean_beta,
        size_distribution,
        mean_size: mean_size / total,
        map_set,
        top_sets,
        samples: chain.samples.len(),
        acceptance_rate: chain.acceptance_rate,
        numeric_rejections: chain.numeric_rejections,
    })
}
