//! The trans-dimensional random-walk Metropolis-Hastings sampler.
//!
//! Each iteration proposes a full new state in four parts: truncated-uniform
//! walks on the shrinkage factor g and the noise variance, a gated
//! single-index change to the active set, and a fresh coefficient vector from
//! the conditional Gaussian for the proposed set and scalars. The acceptance
//! ratio evaluates the proposal density in both directions — the truncated
//! uniforms lose symmetry at their lower floor, the set move is weighted, and
//! the coefficient block is an independence-style draw — so no term may be
//! assumed to cancel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::data::StandardizedDataset;
use crate::error::{BvsError, Result};
use crate::posterior::{
    conditional_beta_proposal, log_joint, GramCache, ModelState, DEFAULT_GRAM_CACHE_CAPACITY,
};
use crate::priors::{ImportanceWeights, PriorSpec};
use crate::set::ActiveSet;

/// Lower floor of the truncated-uniform scalar proposals. Keeps both scalars
/// strictly positive, at the price of an asymmetric proposal near the floor.
pub const SCALAR_FLOOR: f64 = 1e-8;

/// Name of the generator backing every chain, recorded in chain metadata.
pub const RNG_NAME: &str = "chacha20";

/// Format version written into chain files.
pub const CHAIN_SCHEMA_VERSION: u32 = 1;

/// Tuning constants of the proposal kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalConfig {
    /// Probability of attempting a set change on each iteration.
    #[serde(default = "default_size_change_prob")]
    pub size_change_prob: f64,
    /// Half-width of the variance walk.
    #[serde(default = "default_sigma2_width")]
    pub sigma2_width: f64,
    /// Half-width of the g walk.
    #[serde(default = "default_g_width")]
    pub g_width: f64,
}

fn default_size_change_prob() -> f64 {
    0.5
}

fn default_sigma2_width() -> f64 {
    0.1
}

fn default_g_width() -> f64 {
    60.0
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            size_change_prob: default_size_change_prob(),
            sigma2_width: default_sigma2_width(),
            g_width: default_g_width(),
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.size_change_prob > 0.0 && self.size_change_prob < 1.0) {
            return Err(BvsError::validation(format!(
                "proposal.size_change_prob must lie strictly between 0 and 1, got {}",
                self.size_change_prob
            )));
        }
        for (name, v) in [
            ("proposal.sigma2_width", self.sigma2_width),
            ("proposal.g_width", self.g_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(BvsError::validation(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Chain length and bookkeeping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    #[serde(default = "default_iterations")]
    pub iterations: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    #[serde(default = "default_thin")]
    pub thin: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cache_capacity")]
    pub gram_cache_capacity: usize,
}

fn default_iterations() -> u64 {
    50_000
}

fn default_burn_in() -> u64 {
    10_000
}

fn default_thin() -> u64 {
    10
}

fn default_cache_capacity() -> usize {
    DEFAULT_GRAM_CACHE_CAPACITY
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: default_iterations(),
            burn_in: default_burn_in(),
            thin: default_thin(),
            seed: 0,
            gram_cache_capacity: DEFAULT_GRAM_CACHE_CAPACITY,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(BvsError::validation("chain.iterations must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(BvsError::validation(format!(
                "chain.burn_in ({}) must be smaller than chain.iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(BvsError::validation("chain.thin must be at least 1"));
        }
        Ok(())
    }

    /// Number of samples a full run retains.
    pub fn retained(&self) -> u64 {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Draw from `Uniform(max(floor, x - width), x + width)`.
pub fn propose_scalar<R: Rng + ?Sized>(current: f64, width: f64, rng: &mut R) -> f64 {
    let lo = (current - width).max(SCALAR_FLOOR);
    let hi = current + width;
    rng.random_range(lo..hi)
}

/// Log density of proposing `to` from `from` under the truncated-uniform
/// walk. Not symmetric near the floor: the interval length depends on the
/// starting point.
pub fn scalar_log_density(from: f64, to: f64, width: f64) -> f64 {
    let lo = (from - width).max(SCALAR_FLOOR);
    let hi = from + width;
    if to >= lo && to <= hi {
        -(hi - lo).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Probability that a size-changing move toggles index `alpha`, given the
/// current set and the proposal weights. Additions are drawn by weight;
/// removals inversely by weight; from a singleton only additions (over the
/// complement, renormalized) are possible. Sums to one over all indices for
/// every set.
pub fn toggle_pmf(alpha: usize, set: &ActiveSet, weights: &ImportanceWeights) -> f64 {
    let k = set.k();
    if k > 1 {
        if set.contains(alpha) {
            let s = weights.sum_over(set);
            let t = weights.sum_reciprocal_over(set);
            s / (weights.get(alpha) * t)
        } else {
            weights.get(alpha)
        }
    } else if set.contains(alpha) {
        0.0
    } else {
        weights.get(alpha) / (1.0 - weights.sum_over(set))
    }
}

fn sample_toggle_index<R: Rng + ?Sized>(
    set: &ActiveSet,
    weights: &ImportanceWeights,
    rng: &mut R,
) -> usize {
    let p = weights.len();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for alpha in 0..p {
        let m = toggle_pmf(alpha, set, weights);
        if m > 0.0 {
            last_positive = alpha;
        }
        acc += m;
        if u < acc {
            return alpha;
        }
    }
    // Floating-point shortfall at u close to 1.
    last_positive
}

/// Propose the next active set: with probability `size_change_prob` toggle a
/// weighted index, otherwise keep the set. A problem with a single predictor
/// has only one model, so the set never changes there.
pub fn propose_set<R: Rng + ?Sized>(
    set: &ActiveSet,
    weights: &ImportanceWeights,
    cfg: &ProposalConfig,
    rng: &mut R,
) -> ActiveSet {
    if weights.len() == 1 {
        return set.clone();
    }
    if rng.random::<f64>() < cfg.size_change_prob {
        let alpha = sample_toggle_index(set, weights, rng);
        set.toggled(alpha)
            .expect("toggle pmf never selects the sole member of a singleton")
    } else {
        set.clone()
    }
}

/// Log probability that `propose_set` moves `from` to `to`. Zero mass
/// (negative infinity) for anything other than a stay or a single toggle.
pub fn set_log_mass(
    from: &ActiveSet,
    to: &ActiveSet,
    weights: &ImportanceWeights,
    cfg: &ProposalConfig,
) -> f64 {
    if weights.len() == 1 {
        return if from == to { 0.0 } else { f64::NEG_INFINITY };
    }
    if from == to {
        return (1.0 - cfg.size_change_prob).ln();
    }
    match from.single_toggle_diff(to) {
        Some(alpha) => cfg.size_change_prob.ln() + toggle_pmf(alpha, from, weights).ln(),
        None => f64::NEG_INFINITY,
    }
}

/// Log density of the full four-part proposal `q(to | from)`: both scalar
/// walks, the set move, and the conditional Gaussian for the destination's
/// coefficients given the destination's set and scalars.
pub fn transition_log_density(
    from: &ModelState,
    to: &ModelState,
    s: &StandardizedDataset,
    spec: &PriorSpec,
    cfg: &ProposalConfig,
    cache: &mut GramCache,
) -> Result<f64> {
    let scalars = scalar_log_density(from.g, to.g, cfg.g_width)
        + scalar_log_density(from.sigma2, to.sigma2, cfg.sigma2_width);
    let set_part = set_log_mass(&from.active, &to.active, &spec.proposal_weights, cfg);
    if scalars == f64::NEG_INFINITY || set_part == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let entry = cache.entry(&to.active, s);
    let lambda = spec.ridge_lambda(to.active.k(), s.n());
    let prop = conditional_beta_proposal(&to.active, &entry, to.g, to.sigma2, lambda)?;
    Ok(scalars + set_part + prop.log_density(&to.beta))
}

/// Log acceptance ratio for the move `from -> to`: the joint-density change
/// plus the proposal densities evaluated in both directions. Finite only when
/// `to` is reachable from `from` in a single proposal (and vice versa).
pub fn log_accept_ratio(
    from: &ModelState,
    to: &ModelState,
    s: &StandardizedDataset,
    spec: &PriorSpec,
    cfg: &ProposalConfig,
    cache: &mut GramCache,
) -> Result<f64> {
    let lj_from = log_joint(from, s, spec, cache)?.total;
    let lj_to = log_joint(to, s, spec, cache)?.total;
    let q_fwd = transition_log_density(from, to, s, spec, cfg, cache)?;
    let q_rev = transition_log_density(to, from, s, spec, cfg, cache)?;
    Ok((lj_to - lj_from) + (q_rev - q_fwd))
}

/// Result of one Metropolis-Hastings step.
pub struct StepOutcome {
    pub state: ModelState,
    pub accepted: bool,
    /// The proposal could not be evaluated (factorization failure or a
    /// non-finite ratio) and was treated as a rejection.
    pub numeric_rejection: bool,
}

/// One sampler iteration from `current`. Proposal failures are rejections,
/// never errors: the chain keeps its current state and the event is counted.
pub fn mh_step<R: Rng + ?Sized>(
    current: &ModelState,
    s: &StandardizedDataset,
    spec: &PriorSpec,
    cfg: &ProposalConfig,
    cache: &mut GramCache,
    rng: &mut R,
) -> StepOutcome {
    // Draw order: g, sigma2, set, coefficients.
    let g = propose_scalar(current.g, cfg.g_width, rng);
    let sigma2 = propose_scalar(current.sigma2, cfg.sigma2_width, rng);
    let active = propose_set(&current.active, &spec.proposal_weights, cfg, rng);
    let lambda = spec.ridge_lambda(active.k(), s.n());
    let entry = cache.entry(&active, s);
    let beta = match conditional_beta_proposal(&active, &entry, g, sigma2, lambda) {
        Ok(prop) => prop.sample(rng),
        Err(e) => {
            log::warn!(
                "coefficient proposal failed ({e}); rejecting move to set {{{}}} \
                 with g = {g}, sigma2 = {sigma2}",
                active.format_one_based(",")
            );
            return StepOutcome {
                state: current.clone(),
                accepted: false,
                numeric_rejection: true,
            };
        }
    };
    let proposed = ModelState {
        active,
        beta,
        g,
        sigma2,
    };

    let delta = match log_accept_ratio(current, &proposed, s, spec, cfg, cache) {
        Ok(d) => d,
        Err(e) => {
            log::warn!(
                "acceptance ratio failed ({e}); rejecting move to set {{{}}} \
                 with g = {g}, sigma2 = {sigma2}",
                proposed.active.format_one_based(",")
            );
            return StepOutcome {
                state: current.clone(),
                accepted: false,
                numeric_rejection: true,
            };
        }
    };
    if delta.is_nan() {
        log::warn!(
            "acceptance ratio is NaN at proposal set {{{}}}, g = {g}, sigma2 = {sigma2}; \
             treating as rejection",
            proposed.active.format_one_based(",")
        );
        return StepOutcome {
            state: current.clone(),
            accepted: false,
            numeric_rejection: true,
        };
    }

    let accept = delta >= 0.0 || rng.random::<f64>() < delta.exp();
    StepOutcome {
        state: if accept {
            proposed
        } else {
            current.clone()
        },
        accepted: accept,
        numeric_rejection: false,
    }
}

/// One retained draw with the iteration it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RetainedSample {
    pub iteration: u64,
    pub state: ModelState,
}

/// Everything a finished chain reports.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub samples: Vec<RetainedSample>,
    /// Active-set size after every iteration (empty when the chain was read
    /// back from a file, which stores only retained samples).
    pub size_trace: Vec<usize>,
    pub acceptance_rate: f64,
    pub numeric_rejections: u64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    pub p: usize,
}

/// Deterministic starting point: the singleton with the largest prior weight
/// (smallest index on ties), g at the sample size, variance at the response
/// sample variance, coefficients drawn from their conditional proposal.
pub fn initial_state<R: Rng + ?Sized>(
    s: &StandardizedDataset,
    spec: &PriorSpec,
    cache: &mut GramCache,
    rng: &mut R,
) -> Result<ModelState> {
    let n = s.n();
    let best = (0..spec.p())
        .max_by(|&i, &j| {
            spec.prior_weights
                .get(i)
                .partial_cmp(&spec.prior_weights.get(j))
                .expect("weights are finite")
                .then(j.cmp(&i)) // prefer the smaller index on ties
        })
        .expect("p >= 1");
    let active = ActiveSet::singleton(best);
    let g = n as f64;
    let sigma2 = (s.y.norm_squared() / (n as f64 - 1.0)).max(SCALAR_FLOOR);
    let lambda = spec.ridge_lambda(1, n);
    let entry = cache.entry(&active, s);
    let prop = conditional_beta_proposal(&active, &entry, g, sigma2, lambda)?;
    let beta = prop.sample(rng);
    Ok(ModelState {
        active,
        beta,
        g,
        sigma2,
    })
}

/// Run one chain to completion.
pub fn run_chain(
    s: &StandardizedDataset,
    spec: &PriorSpec,
    prop_cfg: &ProposalConfig,
    chain_cfg: &ChainConfig,
) -> Result<ChainOutput> {
    prop_cfg.validate()?;
    chain_cfg.validate()?;
    if spec.p() != s.p() {
        return Err(BvsError::validation(format!(
            "prior is for {} predictors, data has {}",
            spec.p(),
            s.p()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(chain_cfg.seed);
    let mut cache = GramCache::new(chain_cfg.gram_cache_capacity);
    let mut state = initial_state(s, spec, &mut cache, &mut rng)?;
    let start = log_joint(&state, s, spec, &mut cache)?.total;
    if !start.is_finite() {
        return Err(BvsError::numeric(format!(
            "initial state has log density {start}; check the size prior at k = 1"
        )));
    }

    let mut samples = Vec::with_capacity(chain_cfg.retained() as usize);
    let mut size_trace = Vec::with_capacity(chain_cfg.iterations as usize);
    let mut accepted = 0u64;
    let mut numeric_rejections = 0u64;
    for t in 1..=chain_cfg.iterations {
        let outcome = mh_step(&state, s, spec, prop_cfg, &mut cache, &mut rng);
        state = outcome.state;
        accepted += u64::from(outcome.accepted);
        numeric_rejections += u64::from(outcome.numeric_rejection);
        size_trace.push(state.active.k());
        if t > chain_cfg.burn_in && (t - chain_cfg.burn_in) % chain_cfg.thin == 0 {
            samples.push(RetainedSample {
                iteration: t,
                state: state.clone(),
            });
        }
    }

    Ok(ChainOutput {
        samples,
        size_trace,
        acceptance_rate: accepted as f64 / chain_cfg.iterations as f64,
        numeric_rejections,
        iterations: chain_cfg.iterations,
        burn_in: chain_cfg.burn_in,
        thin: chain_cfg.thin,
        seed: chain_cfg.seed,
        p: s.p(),
    })
}

/// Write a chain to a columnar text file: `#`-prefixed metadata, a header
/// row, then one row per retained sample. Active sets are one-based indices
/// joined by `;`; coefficients are sparse `index:value` pairs joined by
/// spaces. Floats print in shortest round-trip form, so rereading is exact
/// and rewriting is byte-identical.
pub fn write_chain_csv(chain: &ChainOutput, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# schema_version = {CHAIN_SCHEMA_VERSION}");
    let _ = writeln!(out, "# rng = {RNG_NAME}");
    let _ = writeln!(out, "# seed = {}", chain.seed);
    let _ = writeln!(out, "# p = {}", chain.p);
    let _ = writeln!(out, "# iterations = {}", chain.iterations);
    let _ = writeln!(out, "# burn_in = {}", chain.burn_in);
    let _ = writeln!(out, "# thin = {}", chain.thin);
    let _ = writeln!(out, "# acceptance_rate = {}", chain.acceptance_rate);
    let _ = writeln!(out, "# numeric_rejections = {}", chain.numeric_rejections);
    out.push_str("iteration,k,active_set,beta,g,sigma2\n");
    for sample in &chain.samples {
        let st = &sample.state;
        let beta = st
            .active
            .iter()
            .zip(st.beta.iter())
            .map(|(i, b)| format!("{}:{}", i + 1, b))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            sample.iteration,
            st.active.k(),
            st.active.format_one_based(";"),
            beta,
            st.g,
            st.sigma2
        );
    }
    let file = std::fs::File::create(path).map_err(|e| BvsError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(out.as_bytes()).map_err(|e| BvsError::io(path, e))?;
    Ok(())
}

/// Read a chain file written by [`write_chain_csv`]. The per-iteration size
/// trace is not stored in the file, so it comes back empty.
pub fn read_chain_csv(path: &Path) -> Result<ChainOutput> {
    let file = std::fs::File::open(path).map_err(|e| BvsError::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut meta = std::collections::HashMap::new();
    let mut samples = Vec::new();
    let mut saw_header = false;
    for (ln, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| BvsError::io(path, e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once('=') {
                meta.insert(key.trim().to_string(), value.trim().to_string());
            }
            continue;
        }
        if !saw_header {
            if line != "iteration,k,active_set,beta,g,sigma2" {
                return Err(BvsError::io(
                    path,
                    format!("unexpected column header '{line}'"),
                ));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(BvsError::io(
                path,
                format!("line {}: expected 6 fields, got {}", ln + 1, fields.len()),
            ));
        }
        let iteration: u64 = fields[0]
            .parse()
            .map_err(|_| BvsError::io(path, format!("line {}: bad iteration", ln + 1)))?;
        let k: usize = fields[1]
            .parse()
            .map_err(|_| BvsError::io(path, format!("line {}: bad size", ln + 1)))?;
        let active = ActiveSet::parse_one_based(fields[2], ";")
            .map_err(|e| BvsError::io(path, format!("line {}: {e}", ln + 1)))?;
        if active.k() != k {
            return Err(BvsError::io(
                path,
                format!("line {}: size column {k} does not match set", ln + 1),
            ));
        }
        let mut beta = nalgebra::DVector::zeros(k);
        let mut seen = 0usize;
        for pair in fields[3].split_whitespace() {
            let (idx, val) = pair.split_once(':').ok_or_else(|| {
                BvsError::io(path, format!("line {}: bad coefficient '{pair}'", ln + 1))
            })?;
            let idx: usize = idx
                .parse()
                .map_err(|_| BvsError::io(path, format!("line {}: bad index '{idx}'", ln + 1)))?;
            let val: f64 = val
                .parse()
                .map_err(|_| BvsError::io(path, format!("line {}: bad value '{val}'", ln + 1)))?;
            let pos = active.position(idx.wrapping_sub(1)).ok_or_else(|| {
                BvsError::io(
                    path,
                    format!("line {}: coefficient index {idx} not in the active set", ln + 1),
                )
            })?;
            beta[pos] = val;
            seen += 1;
        }
        if seen != k {
            return Err(BvsError::io(
                path,
                format!("line {}: {seen} coefficients for a size-{k} set", ln + 1),
            ));
        }
        let g: f64 = fields[4]
            .parse()
            .map_err(|_| BvsError::io(path, format!("line {}: bad g", ln + 1)))?;
        let sigma2: f64 = fields[5]
            .parse()
            .map_err(|_| BvsError::io(path, format!("line {}: bad sigma2", ln + 1)))?;
        samples.push(RetainedSample {
            iteration,
            state: ModelState {
                active,
                beta,
                g,
                sigma2,
            },
        });
    }

    let get = |key: &str| -> Result<String> {
        meta.get(key)
            .cloned()
            .ok_or_else(|| BvsError::io(path, format!("missing metadata '# {key} = ...'")))
    };
    let schema: u32 = get("schema_version")?
        .parse()
        .map_err(|_| BvsError::io(path, "bad schema_version"))?;
    if schema != CHAIN_SCHEMA_VERSION {
        return Err(BvsError::validation(format!(
            "chain file schema version {schema} is not supported (expected {CHAIN_SCHEMA_VERSION})"
        )));
    }
    let parse_u64 = |key: &str| -> Result<u64> {
        get(key)?
            .parse()
            .map_err(|_| BvsError::io(path, format!("bad metadata value for {key}")))
    };
    Ok(ChainOutput {
        samples,
        size_trace: Vec::new(),
        acceptance_rate: get("acceptance_rate")?
            .parse()
            .map_err(|_| BvsError::io(path, "bad acceptance_rate"))?,
        numeric_rejections: parse_u64("numeric_rejections")?,
        iterations: parse_u64("iterations")?,
        burn_in: parse_u64("burn_in")?,
        thin: parse_u64("thin")?,
        seed: parse_u64("seed")?,
        p: parse_u64("p")? as usize,
    })
}
