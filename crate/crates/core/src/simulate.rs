//! Synthetic regression problems with equicorrelated Gaussian designs.
//!
//! Each specification draws train and test splits from the same population:
//! predictor rows with unit variance and constant pairwise correlation,
//! responses from a sparse linear signal plus Gaussian noise. Optionally both
//! responses are divided by the training-response standard deviation, putting
//! error metrics on a scale where a perfect predictor's mean squared error is
//! the noise share of the response variance.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{sample_sd, Dataset};
use crate::error::{BvsError, Result};
use crate::set::ActiveSet;

/// Complete recipe for one simulated problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub p: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Pairwise correlation of the predictors, in `[0, 1)`.
    pub correlation: f64,
    /// Positions of the nonzero coefficients (0-based, strictly increasing).
    pub true_support: Vec<usize>,
    /// Nonzero coefficient values, aligned with `true_support`.
    pub coefficients: Vec<f64>,
    pub noise_sd: f64,
    /// Divide both responses by the training-response standard deviation.
    pub scale_by_train_sd: bool,
}

/// One realized draw of a [`SimSpec`].
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub train: Dataset,
    pub test: Dataset,
    pub true_set: ActiveSet,
    /// The divisor applied to both responses (1 when scaling is off).
    pub y_scale: f64,
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(BvsError::validation("simulation needs p >= 1"));
        }
        if self.n_train < 2 || self.n_test < 2 {
            return Err(BvsError::validation(format!(
                "simulation needs at least two rows per split, got {} train and {} test",
                self.n_train, self.n_test
            )));
        }
        if !(0.0..1.0).contains(&self.correlation) {
            return Err(BvsError::validation(format!(
                "predictor correlation must lie in [0, 1), got {}",
                self.correlation
            )));
        }
        if self.true_support.len() != self.coefficients.len() {
            return Err(BvsError::validation(format!(
                "{} support positions but {} coefficients",
                self.true_support.len(),
                self.coefficients.len()
            )));
        }
        if self.true_support.is_empty() {
            return Err(BvsError::validation("true support must be nonempty"));
        }
        if !self.true_support.windows(2).all(|w| w[0] < w[1]) {
            return Err(BvsError::validation(
                "true support must be strictly increasing",
            ));
        }
        if let Some(&i) = self.true_support.iter().find(|&&i| i >= self.p) {
            return Err(BvsError::validation(format!(
                "support position {i} out of range for p = {}",
                self.p
            )));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(BvsError::validation(format!(
                "noise standard deviation must be positive, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }

    /// Draw the problem. The same seed always produces the same data.
    pub fn generate(&self, seed: u64) -> Result<SimulatedData> {
        self.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x_train = equicorrelated_normal(self.n_train, self.p, self.correlation, &mut rng);
        let x_test = equicorrelated_normal(self.n_test, self.p, self.correlation, &mut rng);
        let signal = |x: &DMatrix<f64>, i: usize| -> f64 {
            self.true_support
                .iter()
                .zip(&self.coefficients)
                .map(|(&j, &b)| b * x[(i, j)])
                .sum()
        };
        let mut y_train = DVector::from_fn(self.n_train, |i, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            signal(&x_train, i) + self.noise_sd * e
        });
        let mut y_test = DVector::from_fn(self.n_test, |i, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            signal(&x_test, i) + self.noise_sd * e
        });
        let y_scale = if self.scale_by_train_sd {
            let sd = sample_sd(&y_train);
            if !(sd > 0.0) {
                return Err(BvsError::numeric(
                    "training response is constant; cannot scale by its standard deviation",
                ));
            }
            sd
        } else {
            1.0
        };
        y_train /= y_scale;
        y_test /= y_scale;
        Ok(SimulatedData {
            train: Dataset::with_default_names(x_train, y_train)?,
            test: Dataset::with_default_names(x_test, y_test)?,
            true_set: ActiveSet::new(self.true_support.clone())?,
            y_scale,
        })
    }
}

/// `n` rows of `p` unit-variance Gaussians with constant pairwise correlation
/// `rho`: each row is `sqrt(rho) z0 + sqrt(1 - rho) z` for a shared scalar
/// `z0` and independent `z`.
pub fn equicorrelated_normal<R: rand::Rng + ?Sized>(
    n: usize,
    p: usize,
    rho: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let (shared, own) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let z0: f64 = StandardNormal.sample(rng);
        for j in 0..p {
            let z: f64 = StandardNormal.sample(rng);
            x[(i, j)] = shared * z0 + own * z;
        }
    }
    x
}

/// Shared coefficient pattern of the two large studies: six signals of mixed
/// sign and graded strength, scaled so their squared sum is 25/3.
fn graded_coefficients() -> Vec<f64> {
    let s = 3f64.sqrt();
    vec![-2.5 / s, -2.0 / s, -1.5 / s, 1.5 / s, 2.0 / s, 2.5 / s]
}

/// Benchmark: 100 predictors at correlation 0.6, six spread-out signals,
/// 100 training and 200 test rows.
pub fn study_dense_signals() -> SimSpec {
    SimSpec {
        p: 100,
        n_train: 100,
        n_test: 200,
        correlation: 0.6,
        true_support: vec![1, 10, 20, 50, 70, 80],
        coefficients: graded_coefficients(),
        noise_sd: 1.0,
        scale_by_train_sd: true,
    }
}

/// Benchmark: 500 predictors at correlation 0.75, same six signals, with
/// fewer training rows than predictors.
pub fn study_wide() -> SimSpec {
    SimSpec {
        p: 500,
        n_train: 100,
        n_test: 200,
        correlation: 0.75,
        true_support: vec![1, 10, 20, 50, 70, 80],
        coefficients: graded_coefficients(),
        noise_sd: 1.0,
        scale_by_train_sd: true,
    }
}

/// Small problem left enumerable for exact comparison: six predictors, two
/// moderate signals.
pub fn small_enumerable() -> SimSpec {
    SimSpec {
        p: 6,
        n_train: 60,
        n_test: 60,
        correlation: 0.3,
        true_support: vec![0, 2],
        coefficients: vec![0.9, -0.6],
        noise_sd: 1.0,
        scale_by_train_sd: false,
    }
}

/// Small problem with three modest signals, sized so evidence for the truth
/// accumulates visibly as the sample grows.
pub fn small_three_signal(n_train: usize) -> SimSpec {
    let s = 3f64.sqrt();
    SimSpec {
        p: 8,
        n_train,
        n_test: 100,
        correlation: 0.5,
        true_support: vec![0, 2, 4],
        coefficients: vec![-1.25 / s, 1.0 / s, 0.75 / s],
        noise_sd: 1.0,
        scale_by_train_sd: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn equicorrelated_rows_match_target_moments() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let (n, p, rho) = (20_000, 4, 0.6);
        let x = equicorrelated_normal(n, p, rho, &mut rng);
        let means: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
        for m in &means {
            assert!(m.abs() < 0.03, "column mean {m}");
        }
        for a in 0..p {
            for b in 0..p {
                let cov = (0..n)
                    .map(|i| (x[(i, a)] - means[a]) * (x[(i, b)] - means[b]))
                    .sum::<f64>()
                    / (n as f64 - 1.0);
                let target = if a == b { 1.0 } else { rho };
                assert!(
                    (cov - target).abs() < 0.04,
                    "cov[{a},{b}] = {cov}, want {target}"
                );
            }
        }
    }

    #[test]
    fn generation_is_seed_deterministic_with_independent_splits() {
        let spec = small_enumerable();
        let a = spec.generate(5).unwrap();
        let b = spec.generate(5).unwrap();
        assert_eq!(a.train.x, b.train.x);
        assert_eq!(a.train.y, b.train.y);
        assert_eq!(a.test.y, b.test.y);
        let c = spec.generate(6).unwrap();
        assert_ne!(a.train.y, c.train.y);
        // Train and test are different draws from the population.
        assert_ne!(a.train.x.row(0), a.test.x.row(0));
    }

    #[test]
    fn near_noiseless_response_reproduces_the_signal() {
        let spec = SimSpec {
            noise_sd: 1e-8,
            scale_by_train_sd: false,
            ..small_enumerable()
        };
        let data = spec.generate(7).unwrap();
        for i in 0..spec.n_train {
            let fit = 0.9 * data.train.x[(i, 0)] - 0.6 * data.train.x[(i, 2)];
            assert_abs_diff_eq!(data.train.y[i], fit, epsilon = 1e-6);
        }
    }

    #[test]
    fn response_scaling_divides_both_splits_by_train_sd() {
        let base = SimSpec {
            scale_by_train_sd: false,
            ..study_dense_signals()
        };
        let scaled = SimSpec {
            scale_by_train_sd: true,
            ..study_dense_signals()
        };
        let raw = base.generate(9).unwrap();
        let scl = scaled.generate(9).unwrap();
        let sd = sample_sd(&raw.train.y);
        assert_abs_diff_eq!(scl.y_scale, sd, epsilon = 1e-12);
        for i in 0..base.n_train {
            assert_abs_diff_eq!(scl.train.y[i], raw.train.y[i] / sd, epsilon = 1e-12);
        }
        for i in 0..base.n_test {
            assert_abs_diff_eq!(scl.test.y[i], raw.test.y[i] / sd, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(sample_sd(&scl.train.y), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn scaled_response_variance_splits_into_signal_and_noise() {
        // Population response variance is b'Sb + noise^2 with S the
        // equicorrelated covariance; the noise share, which bounds the scaled
        // mean squared error of any predictor from below, follows directly.
        let spec = SimSpec {
            n_train: 50_000,
            ..study_dense_signals()
        };
        let b = &spec.coefficients;
        let sum: f64 = b.iter().sum();
        let sum_sq: f64 = b.iter().map(|v| v * v).sum();
        let signal_var = (1.0 - spec.correlation) * sum_sq + spec.correlation * sum * sum;
        let data = spec.generate(11).unwrap();
        // y was scaled to unit sample variance; the implied population scale
        // is sqrt(signal + noise) up to sampling error.
        let expect = (signal_var + 1.0).sqrt();
        assert!(
            (data.y_scale - expect).abs() < 0.03,
            "scale {} vs population {expect}",
            data.y_scale
        );
        // The noise floor for scaled squared error sits inside the window the
        // benchmark targets.
        let floor = 1.0 / (signal_var + 1.0);
        assert!(floor > 0.18 && floor < 0.28, "noise share {floor}");
    }

    #[test]
    fn presets_are_internally_consistent() {
        for spec in [
            study_dense_signals(),
            study_wide(),
            small_enumerable(),
            small_three_signal(50),
            small_three_signal(800),
        ] {
            spec.validate().unwrap();
        }
        let s = study_dense_signals();
        assert_eq!(s.true_support, vec![1, 10, 20, 50, 70, 80]);
        let sum_sq: f64 = s.coefficients.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(sum_sq, 25.0 / 3.0, epsilon = 1e-12);
        assert_eq!(study_wide().p, 500);
        assert_eq!(small_three_signal(200).n_train, 200);
    }

    #[test]
    fn invalid_specifications_are_rejected() {
        let mut spec = small_enumerable();
        spec.correlation = 1.0;
        assert!(spec.validate().is_err());
        let mut spec = small_enumerable();
        spec.true_support = vec![0, 6];
        assert!(spec.validate().is_err());
        let mut spec = small_enumerable();
        spec.coefficients = vec![1.0];
        assert!(spec.validate().is_err());
        let mut spec = small_enumerable();
        spec.true_support = vec![2, 0];
        assert!(spec.validate().is_err());
    }
}
