//! The programmatic fitting entry point: a declarative settings bundle, its
//! resolution against a concrete dataset, and the standardize-then-sample
//! pipeline. The command-line interface and the C bindings both drive fits
//! through this module.

use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::data::{k_fold_split, standardize, Dataset, StandardizedDataset};
use crate::error::{BvsError, Result};
use crate::predict::{aggregate_median, error_metrics, predictive_mean};
use crate::priors::{PriorSpec, SizePrior, WeightMode};
use crate::sampler::{run_chain, ChainConfig, ChainOutput, ProposalConfig};

/// Everything configurable about a fit, independent of the data it will run
/// on. Deserializes from TOML with every field optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSettings {
    pub prior: PriorSection,
    pub proposal: ProposalConfig,
    pub chain: ChainConfig,
}

impl FitSettings {
    pub fn from_toml(text: &str) -> Result<FitSettings> {
        toml::from_str(text)
            .map_err(|e| crate::error::BvsError::validation(format!("settings: {e}")))
    }
}

/// Prior choices that need the data before they become a [`PriorSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    /// How the set-prior importance weights are built.
    pub weights: WeightMode,
    /// Weights steering the proposal's toggle choices. Defaults to the same
    /// construction as `weights`.
    pub proposal_weights: Option<WeightMode>,
    pub size: SizePriorConfig,
    /// Shape of the inverse-gamma prior on the noise variance.
    pub a: f64,
    /// Scale of the inverse-gamma prior on the noise variance.
    pub b: f64,
    /// Sample-size threshold for the ridge correction: the correction applies
    /// while `n <= zeta` and is dropped once `n > zeta`. Absent means the
    /// correction always applies.
    pub zeta: Option<usize>,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection {
            weights: WeightMode::Uniform,
            proposal_weights: None,
            size: SizePriorConfig::default(),
            a: 0.001,
            b: 0.001,
            zeta: None,
        }
    }
}

/// Prior on the number of active predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum SizePriorConfig {
    /// Zero-truncated binomial with the given expected size.
    Binomial { mean: Option<f64> },
    /// The same pmf cubed, concentrating harder on the favored sizes.
    BinomialCubed { mean: Option<f64> },
    /// Equal weight on every size.
    Uniform,
}

impl Default for SizePriorConfig {
    fn default() -> Self {
        SizePriorConfig::Binomial { mean: None }
    }
}

/// Expected active-set size used when none is given: a quarter of the
/// predictors, kept within `[1/2, 10]`.
pub fn default_size_mean(p: usize) -> f64 {
    (p as f64 / 4.0).clamp(0.5, 10.0)
}

impl SizePriorConfig {
    pub fn build(&self, p: usize) -> Result<SizePrior> {
        match self {
            SizePriorConfig::Binomial { mean } => {
                SizePrior::ztb(p, mean.unwrap_or_else(|| default_size_mean(p)))
            }
            SizePriorConfig::BinomialCubed { mean } => {
                SizePrior::ztb_cubed(p, mean.unwrap_or_else(|| default_size_mean(p)))
            }
            SizePriorConfig::Uniform => SizePrior::uniform(p),
        }
    }
}

/// Turn prior choices into a concrete [`PriorSpec`] for this data. `seed`
/// drives cross-validated weight construction when a mode calls for it.
pub fn resolve_prior(
    s: &StandardizedDataset,
    section: &PriorSection,
    seed: u64,
) -> Result<PriorSpec> {
    let weights = section.weights.resolve(s, seed)?;
    let proposal_weights = match &section.proposal_weights {
        Some(mode) => mode.resolve(s, seed.wrapping_add(1))?,
        None => weights.clone(),
    };
    PriorSpec::new(
        weights,
        proposal_weights,
        section.size.build(s.p())?,
        section.a,
        section.b,
        s.n(),
        section.zeta,
    )
}

/// A completed fit: the data as the sampler saw it, the fully resolved prior,
/// and the chain.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub standardized: StandardizedDataset,
    pub spec: PriorSpec,
    pub chain: ChainOutput,
}

/// Standardize, resolve the prior, and run the chain.
pub fn fit_dataset(d: &Dataset, settings: &FitSettings) -> Result<FitOutput> {
    settings.proposal.validate()?;
    settings.chain.validate()?;
    let standardized = standardize(d)?;
    let spec = resolve_prior(&standardized, &settings.prior, settings.chain.seed)?;
    let chain = run_chain(&standardized, &spec, &settings.proposal, &settings.chain)?;
    Ok(FitOutput {
        standardized,
        spec,
        chain,
    })
}

/// Held-out error for one cross-validation fold.
#[derive(Debug, Clone, Serialize)]
pub struct FoldResult {
    /// One-based fold number.
    pub fold: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    /// Zero-based row indices held out in this fold.
    pub test_indices: Vec<usize>,
    pub mse: f64,
    pub mad: f64,
    pub acceptance_rate: f64,
}

/// Per-fold metrics plus their medians.
#[derive(Debug, Clone, Serialize)]
pub struct CrossvalOutput {
    pub folds: Vec<FoldResult>,
    pub median_mse: f64,
    pub median_mad: f64,
}

/// Fit on the training rows, standardize the held-out rows with statistics
/// computed from the training rows only, and score posterior-mean predictions.
fn run_fold(
    d: &Dataset,
    settings: &FitSettings,
    fold: usize,
    train: &[usize],
    test: &[usize],
) -> Result<FoldResult> {
    let train_data = d.subset(train)?;
    let mut fold_settings = settings.clone();
    fold_settings.chain.seed = settings.chain.seed.wrapping_add(fold as u64);
    let fit = fit_dataset(&train_data, &fold_settings)?;
    let x_test = fit.standardized.apply_transform(&d.x.select_rows(test))?;
    let mut predicted = predictive_mean(&fit.chain.samples, &x_test)?;
    for v in predicted.iter_mut() {
        *v = fit.standardized.add_response_mean(*v);
    }
    let m = error_metrics(&predicted, &d.y.select_rows(test))?;
    Ok(FoldResult {
        fold,
        train_rows: train.len(),
        test_rows: test.len(),
        test_indices: test.to_vec(),
        mse: m.mse,
        mad: m.mad,
        acceptance_rate: fit.chain.acceptance_rate,
    })
}

/// K-fold cross-validation of the whole pipeline. The row shuffle uses the
/// settings' chain seed, and fold `i` samples with seed `seed + i`, so a run
/// is fully reproducible from its settings. Each fold standardizes from its
/// own training rows; held-out rows never touch the fitted statistics.
/// `workers` bounds how many folds run concurrently.
pub fn cross_validate(
    d: &Dataset,
    settings: &FitSettings,
    k: usize,
    workers: usize,
) -> Result<CrossvalOutput> {
    if workers == 0 {
        return Err(BvsError::validation("need at least 1 worker"));
    }
    settings.proposal.validate()?;
    settings.chain.validate()?;
    let splits = k_fold_split(d.n(), k, settings.chain.seed)?;
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<FoldResult>>> = Vec::new();
    slots.resize_with(k, || None);
    let slots = Mutex::new(slots);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(k) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= splits.len() {
                    break;
                }
                let (train, test) = &splits[i];
                let out = run_fold(d, settings, i + 1, train, test);
                slots.lock().expect("fold result lock")[i] = Some(out);
            });
        }
    });
    let folds = slots
        .into_inner()
        .expect("fold result lock")
        .into_iter()
        .map(|slot| slot.expect("every fold visited"))
        .collect::<Result<Vec<FoldResult>>>()?;
    let mses: Vec<f64> = folds.iter().map(|f| f.mse).collect();
    let mads: Vec<f64> = folds.iter().map(|f| f.mad).collect();
    Ok(CrossvalOutput {
        folds,
        median_mse: aggregate_median(&mses)?,
        median_mad: aggregate_median(&mads)?,
    })
}
