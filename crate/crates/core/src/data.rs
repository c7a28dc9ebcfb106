//! Data ingestion, column standardization, and fold splitting.
//!
//! Everything downstream (priors, sampler, oracle) operates on a
//! [`StandardizedDataset`]: predictor columns centered and scaled to unit
//! sample standard deviation, response centered. The transform parameters are
//! kept so that new rows can be mapped into the same space and predictions
//! mapped back.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{BvsError, Result};

/// A design matrix with its response vector and predictor names.
///
/// Construction validates shape (`n >= 2`, `p >= 1`, matching lengths),
/// finiteness, and that no predictor column is constant.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub names: Vec<String>,
}

/// Which column of a delimited file holds the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    /// Zero-based column index into the file.
    Index(usize),
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, names: Vec<String>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(BvsError::validation(format!(
                "need at least 2 rows, got {n}"
            )));
        }
        if p < 1 {
            return Err(BvsError::validation("need at least 1 predictor column"));
        }
        if y.len() != n {
            return Err(BvsError::validation(format!(
                "response length {} does not match row count {n}",
                y.len()
            )));
        }
        if names.len() != p {
            return Err(BvsError::validation(format!(
                "{} predictor names for {p} columns",
                names.len()
            )));
        }
        if let Some(v) = x.iter().chain(y.iter()).find(|v| !v.is_finite()) {
            return Err(BvsError::validation(format!(
                "non-finite value {v} in data"
            )));
        }
        for j in 0..p {
            let col = x.column(j);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &v in col.iter() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo == hi {
                return Err(BvsError::validation(format!(
                    "predictor column '{}' is constant",
                    names[j]
                )));
            }
        }
        Ok(Dataset { x, y, names })
    }

    /// `new` with generated names `x1..xp`.
    pub fn with_default_names(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Dataset::new(x, y, names)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Divide every response by `factor` (used to put train and test responses
    /// on a common scale before fitting).
    pub fn scale_response(&mut self, factor: f64) -> Result<()> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(BvsError::validation(format!(
                "response scale factor must be positive and finite, got {factor}"
            )));
        }
        self.y /= factor;
        Ok(())
    }

    /// New dataset from a subset of rows (used for fold splits). The subset
    /// must itself satisfy the `Dataset` invariants, so a fold that leaves a
    /// predictor constant is rejected here rather than failing later.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(BvsError::validation(format!(
                "row index {r} out of range for {} rows",
                self.n()
            )));
        }
        let x = DMatrix::from_fn(rows.len(), self.p(), |i, j| self.x[(rows[i], j)]);
        let y = DVector::from_fn(rows.len(), |i, _| self.y[rows[i]]);
        Dataset::new(x, y, self.names.clone())
    }
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sample_sd(v: &DVector<f64>) -> f64 {
    let n = v.len();
    let mean = v.mean();
    let ss: f64 = v.iter().map(|&x| (x - mean) * (x - mean)).sum();
    (ss / (n as f64 - 1.0)).sqrt()
}

/// Load a delimited numeric file. With `has_header`, the first line names the
/// columns; otherwise columns are named `x1..xp` and the response is selected
/// by index.
pub fn load_csv(path: &Path, response: &ResponseColumn, has_header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| BvsError::io(path, e))?;

    let header: Option<Vec<String>> = if has_header {
        Some(
            reader
                .headers()
                .map_err(|e| BvsError::io(path, e))?
                .iter()
                .map(str::to_owned)
                .collect(),
        )
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| BvsError::io(path, e))?;
        let mut row = Vec::with_capacity(record.len());
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                let col = header
                    .as_ref()
                    .and_then(|h| h.get(j).cloned())
                    .unwrap_or_else(|| format!("{}", j + 1));
                BvsError::io(
                    path,
                    format!("non-numeric value '{field}' at row {}, column {col}", i + 1),
                )
            })?;
            row.push(v);
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(BvsError::io(path, "no data rows"));
    }
    let width = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(BvsError::io(
            path,
            format!("row {} has {} fields, expected {width}", i + 1, r.len()),
        ));
    }

    let resp_idx = match response {
        ResponseColumn::Index(j) => {
            if *j >= width {
                return Err(BvsError::validation(format!(
                    "response column index {j} out of range for {width} columns"
                )));
            }
            *j
        }
        ResponseColumn::Name(name) => {
            let header = header.as_ref().ok_or_else(|| {
                BvsError::validation(
                    "response selected by name but the file has no header".to_string(),
                )
            })?;
            header.iter().position(|h| h == name).ok_or_else(|| {
                BvsError::validation(format!(
                    "response column '{name}' not found; columns are: {}",
                    header.join(", ")
                ))
            })?
        }
    };

    let n = rows.len();
    let p = width - 1;
    if p == 0 {
        return Err(BvsError::validation(
            "file has only the response column, no predictors",
        ));
    }
    let names: Vec<String> = match &header {
        Some(h) => h
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != resp_idx)
            .map(|(_, name)| name.clone())
            .collect(),
        None => (1..=p).map(|j| format!("x{j}")).collect(),
    };

    let y = DVector::from_fn(n, |i, _| rows[i][resp_idx]);
    let x = DMatrix::from_fn(n, p, |i, j| {
        let jj = if j < resp_idx { j } else { j + 1 };
        rows[i][jj]
    });
    Dataset::new(x, y, names)
}

/// Parameters of a fitted standardization, serialized alongside chain output
/// so predictions can be made on new rows later.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transform {
    pub col_means: Vec<f64>,
    pub col_scales: Vec<f64>,
    pub y_mean: f64,
    /// Factor the raw responses were divided by before fitting (1.0 when no
    /// response scaling was requested).
    pub y_scale: f64,
    pub names: Vec<String>,
}

impl Transform {
    pub fn p(&self) -> usize {
        self.col_means.len()
    }

    /// Map raw predictor rows into the space the model was fitted in.
    pub fn standardize_matrix(&self, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_new.ncols() != self.p() {
            return Err(BvsError::validation(format!(
                "new data has {} columns, transform expects {}",
                x_new.ncols(),
                self.p()
            )));
        }
        if let Some(v) = x_new.iter().find(|v| !v.is_finite()) {
            return Err(BvsError::validation(format!(
                "non-finite value {v} in new data"
            )));
        }
        Ok(DMatrix::from_fn(x_new.nrows(), x_new.ncols(), |i, j| {
            (x_new[(i, j)] - self.col_means[j]) / self.col_scales[j]
        }))
    }

    /// Map a centered, scaled prediction back onto the raw response scale.
    pub fn raw_response(&self, centered: f64) -> f64 {
        (centered + self.y_mean) * self.y_scale
    }

    /// Map a raw response onto the centered, scaled fitting space.
    pub fn model_response(&self, raw: f64) -> f64 {
        raw / self.y_scale - self.y_mean
    }
}

/// A dataset in model space: predictor columns centered with unit sample
/// standard deviation (so each squared column norm is `n - 1`), response
/// centered.
#[derive(Debug, Clone)]
pub struct StandardizedDataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub y_mean: f64,
    pub col_means: DVector<f64>,
    pub col_scales: DVector<f64>,
    pub names: Vec<String>,
}

impl StandardizedDataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Map new raw rows into the standardized predictor space.
    pub fn apply_transform(&self, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_new.ncols() != self.p() {
            return Err(BvsError::validation(format!(
                "new data has {} columns, transform expects {}",
                x_new.ncols(),
                self.p()
            )));
        }
        if let Some(v) = x_new.iter().find(|v| !v.is_finite()) {
            return Err(BvsError::validation(format!(
                "non-finite value {v} in new data"
            )));
        }
        Ok(DMatrix::from_fn(x_new.nrows(), x_new.ncols(), |i, j| {
            (x_new[(i, j)] - self.col_means[j]) / self.col_scales[j]
        }))
    }

    /// Map a centered prediction back to the response scale of the data the
    /// transform was fitted on.
    pub fn add_response_mean(&self, centered: f64) -> f64 {
        centered + self.y_mean
    }

    pub fn transform(&self, y_scale: f64) -> Transform {
        Transform {
            col_means: self.col_means.iter().copied().collect(),
            col_scales: self.col_scales.iter().copied().collect(),
            y_mean: self.y_mean,
            y_scale,
            names: self.names.clone(),
        }
    }
}

/// Center and scale a dataset. Fails if a column has zero variance (already
/// excluded by `Dataset::new`, re-checked here because this is the place the
/// division happens).
pub fn standardize(d: &Dataset) -> Result<StandardizedDataset> {
    let (n, p) = d.x.shape();
    let mut col_means = DVector::zeros(p);
    let mut col_scales = DVector::zeros(p);
    let mut x = d.x.clone();
    for j in 0..p {
        let mean = d.x.column(j).mean();
        let ss: f64 = d.x.column(j).iter().map(|&v| (v - mean) * (v - mean)).sum();
        let scale = (ss / (n as f64 - 1.0)).sqrt();
        if scale == 0.0 {
            return Err(BvsError::validation(format!(
                "predictor column '{}' has zero variance",
                d.names[j]
            )));
        }
        col_means[j] = mean;
        col_scales[j] = scale;
        for i in 0..n {
            x[(i, j)] = (d.x[(i, j)] - mean) / scale;
        }
    }
    let y_mean = d.y.mean();
    let y = DVector::from_fn(n, |i, _| d.y[i] - y_mean);
    Ok(StandardizedDataset {
        x,
        y,
        y_mean,
        col_means,
        col_scales,
        names: d.names.clone(),
    })
}

/// Deterministic k-fold split of `n` rows: a seeded shuffle divided into `k`
/// contiguous chunks whose sizes differ by at most one. Returns
/// `(train_rows, heldout_rows)` per fold, each sorted ascending.
pub fn k_fold_split(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(BvsError::validation(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(BvsError::validation(format!(
            "cannot split {n} rows into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let heldout: Vec<usize> = order[start..start + size].to_vec();
        let train: Vec<usize> = order[..start]
            .iter()
            .chain(order[start + size..].iter())
            .copied()
            .collect();
        let mut heldout = heldout;
        let mut train = train;
        heldout.sort_unstable();
        train.sort_unstable();
        folds.push((train, heldout));
        start += size;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::io::Write;

    fn toy_dataset(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, j| {
            rng.random::<f64>() * (j as f64 + 1.0) + 10.0 * j as f64
        });
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] * 2.0 + rng.random::<f64>());
        Dataset::with_default_names(x, y).unwrap()
    }

    #[test]
    fn standardize_centers_and_scales() {
        let d = toy_dataset(10, 3, 7);
        let s = standardize(&d).unwrap();
        let n = s.n() as f64;
        for j in 0..s.p() {
            let col = s.x.column(j);
            assert_abs_diff_eq!(col.mean(), 0.0, epsilon = 1e-12);
            let norm_sq: f64 = col.iter().map(|v| v * v).sum();
            assert_abs_diff_eq!(norm_sq, n - 1.0, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(s.y.mean(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn transform_maps_training_rows_onto_standardized_matrix() {
        let d = toy_dataset(12, 4, 3);
        let s = standardize(&d).unwrap();
        let mapped = s.apply_transform(&d.x).unwrap();
        assert_abs_diff_eq!((mapped - &s.x).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn transform_matches_manual_formula_on_new_rows() {
        let d = toy_dataset(9, 2, 11);
        let s = standardize(&d).unwrap();
        let row = DMatrix::from_row_slice(1, 2, &[4.2, 17.0]);
        let mapped = s.apply_transform(&row).unwrap();
        for j in 0..2 {
            let expect = (row[(0, j)] - s.col_means[j]) / s.col_scales[j];
            assert_abs_diff_eq!(mapped[(0, j)], expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_column_is_rejected_by_name() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let y = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
        let err = Dataset::new(x, y, vec!["a".into(), "b".into()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("'b'") && msg.contains("constant"), "{msg}");
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = DVector::from_row_slice(&[1.0, 2.0]);
        assert!(Dataset::with_default_names(x, y).is_err());

        let x = DMatrix::from_row_slice(1, 1, &[1.0]);
        let y = DVector::from_row_slice(&[1.0]);
        assert!(Dataset::with_default_names(x, y).is_err());
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        let y = DVector::from_row_slice(&[1.0, 2.0]);
        assert!(Dataset::with_default_names(x, y).is_err());
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_load_by_header_name() {
        let f = write_temp("a,y,b\n1,10,4\n2,20,5\n3,30,7\n");
        let d = load_csv(f.path(), &ResponseColumn::Name("y".into()), true).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.names, vec!["a", "b"]);
        assert_eq!(d.y.as_slice(), &[10.0, 20.0, 30.0]);
        assert_eq!(d.x[(2, 1)], 7.0);
    }

    #[test]
    fn csv_load_by_index_without_header() {
        let f = write_temp("1,10,4\n2,20,5\n3,30,7\n");
        let d = load_csv(f.path(), &ResponseColumn::Index(1), false).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.names, vec!["x1", "x2"]);
        assert_eq!(d.y.as_slice(), &[10.0, 20.0, 30.0]);
    }

    #[test]
    fn csv_load_skips_comment_lines() {
        // Generated data files begin with a '#' version line; it must not be
        // mistaken for the header or a data row.
        let f = write_temp("# schema_version = 1\na,y\n1,10\n# midway note\n2,20\n");
        let d = load_csv(f.path(), &ResponseColumn::Name("y".into()), true).unwrap();
        assert_eq!((d.n(), d.p()), (2, 1));
        assert_eq!(d.y.as_slice(), &[10.0, 20.0]);
    }

    #[test]
    fn csv_parse_error_names_row_and_column() {
        let f = write_temp("a,y\n1,10\nfoo,20\n");
        let err = load_csv(f.path(), &ResponseColumn::Name("y".into()), true).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("column a"), "{msg}");
    }

    #[test]
    fn csv_unknown_response_name_lists_columns() {
        let f = write_temp("a,b\n1,10\n2,20\n");
        let err = load_csv(f.path(), &ResponseColumn::Name("z".into()), true).unwrap_err();
        assert!(err.to_string().contains("a, b"));
    }

    #[test]
    fn subset_extracts_rows() {
        let d = toy_dataset(10, 2, 5);
        let sub = d.subset(&[0, 3, 7]).unwrap();
        assert_eq!(sub.n(), 3);
        assert_eq!(sub.y[1], d.y[3]);
        assert_eq!(sub.x[(2, 1)], d.x[(7, 1)]);
    }

    #[test]
    fn response_scaling_divides() {
        let mut d = toy_dataset(5, 1, 2);
        let before = d.y.clone();
        d.scale_response(2.0).unwrap();
        assert_abs_diff_eq!((d.y * 2.0 - before).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn k_fold_partitions_rows() {
        for (n, k) in [(103usize, 10usize), (20, 5), (10, 10)] {
            let folds = k_fold_split(n, k, 42).unwrap();
            assert_eq!(folds.len(), k);
            let mut seen = vec![0usize; n];
            for (train, heldout) in &folds {
                assert_eq!(train.len() + heldout.len(), n);
                for &i in heldout {
                    seen[i] += 1;
                }
                let mut both = train.clone();
                both.extend_from_slice(heldout);
                both.sort_unstable();
                assert_eq!(both, (0..n).collect::<Vec<_>>());
            }
            assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = folds.iter().map(|(_, h)| h.len()).collect();
            let min = sizes.iter().min().unwrap();
            let max = sizes.iter().max().unwrap();
            assert!(max - min <= 1);
        }
    }

    #[test]
    fn k_fold_is_seed_deterministic() {
        let a = k_fold_split(50, 5, 9).unwrap();
        let b = k_fold_split(50, 5, 9).unwrap();
        let c = k_fold_split(50, 5, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn k_fold_rejects_bad_k() {
        assert!(k_fold_split(10, 1, 0).is_err());
        assert!(k_fold_split(3, 4, 0).is_err());
    }

    #[test]
    fn saved_transform_reproduces_the_fitted_space() {
        let d = toy_dataset(12, 3, 4);
        let s = standardize(&d).unwrap();
        let t = s.transform(2.5);
        // Standardizing the training predictors through the saved transform
        // recovers the fitted matrix exactly.
        let again = t.standardize_matrix(&d.x).unwrap();
        for (a, b) in again.iter().zip(s.x.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(t.standardize_matrix(&DMatrix::zeros(2, 5)).is_err());
        // Response mapping round-trips through both the centering and the
        // scale factor.
        let raw = 7.3;
        assert_abs_diff_eq!(
            t.raw_response(t.model_response(raw)),
            raw,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(t.raw_response(0.0), t.y_mean * 2.5, epsilon = 1e-12);
    }
}
