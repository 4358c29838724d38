//! Gaussian-copula baseline over the flattened `parks × horizon` cells of a
//! day.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::{FarmMeta, ScenarioDataset};
use crate::error::{Error, Result};

pub const COPULA_FORMAT: &str = "renewgan-copula/1";

/// Minimum number of days [`CopulaModel::fit`] accepts.
pub const MIN_FIT_SAMPLES: usize = 10;

/// Empirical distribution of one dimension: sorted observations, inverted
/// by linear interpolation between order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    sorted: Vec<f64>,
}

impl Marginal {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("marginal needs finite values"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Marginal { sorted: values })
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Value at quantile `u`, clamped to the observed range.
    pub fn quantile(&self, u: f64) -> f64 {
        let v = &self.sorted;
        let n = v.len();
        if n == 1 {
            return v[0];
        }
        let pos = u.clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (pos.floor() as usize).min(n - 2);
        let frac = pos - i as f64;
        v[i] + frac * (v[i + 1] - v[i])
    }

    /// Distribution function of [`Marginal::quantile`] applied to a uniform
    /// variable (right-continuous).
    pub fn cdf(&self, x: f64) -> f64 {
        let v = &self.sorted;
        let n = v.len();
        if x < v[0] {
            return 0.0;
        }
        if x >= v[n - 1] {
            return 1.0;
        }
        // Last index with v[i] <= x; v[i + 1] > x.
        let i = v.partition_point(|&s| s <= x) - 1;
        (i as f64 + (x - v[i]) / (v[i + 1] - v[i])) / (n - 1) as f64
    }

    /// Left limit of [`Marginal::cdf`].
    fn cdf_left(&self, x: f64) -> f64 {
        let v = &self.sorted;
        let n = v.len();
        if x <= v[0] {
            return 0.0;
        }
        if x > v[n - 1] {
            return 1.0;
        }
        let j = v.partition_point(|&s| s < x);
        (j as f64 - 1.0 + (x - v[j - 1]) / (v[j] - v[j - 1])) / (n - 1) as f64
    }

    fn is_constant(&self) -> bool {
        self.sorted[0] == self.sorted[self.sorted.len() - 1]
    }
}

/// One-sample Kolmogorov–Smirnov statistic of `values` against `marginal`.
pub fn ks_statistic(values: &[f64], marginal: &Marginal) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < s.len() {
        let x = s[i];
        let mut j = i;
        while j < s.len() && s[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let at = j as f64 / n;
        d = d.max((at - marginal.cdf(x)).abs());
        d = d.max((below - marginal.cdf_left(x)).abs());
        i = j;
    }
    d
}

/// Ranks starting at 1 with ties sharing their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation matrix; constant columns get zero
/// off-diagonal entries.
pub fn spearman_matrix(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let d = columns.len();
    let centered: Vec<Option<Vec<f64>>> = columns
        .iter()
        .map(|c| {
            let r = average_ranks(c);
            let m = r.iter().sum::<f64>() / r.len() as f64;
            let dev: Vec<f64> = r.iter().map(|x| x - m).collect();
            let ss = dev.iter().map(|x| x * x).sum::<f64>();
            (ss > 0.0).then(|| dev.iter().map(|x| x / ss.sqrt()).collect())
        })
        .collect();
    let mut out = DMatrix::identity(d, d);
    for i in 0..d {
        for j in i + 1..d {
            if let (Some(a), Some(b)) = (&centered[i], &centered[j]) {
                let r = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0);
                out[(i, j)] = r;
                out[(j, i)] = r;
            }
        }
    }
    out
}

/// Clips negative eigenvalues to zero and rescales to a unit diagonal.
/// Returns the matrix unchanged when it is already positive semidefinite.
pub fn repair_psd(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return m;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let mut r = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    let d = r.nrows();
    let scale: Vec<f64> = (0..d).map(|i| r[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    for i in 0..d {
        for j in 0..d {
            r[(i, j)] /= scale[i] * scale[j];
        }
    }
    for i in 0..d {
        r[(i, i)] = 1.0;
        for j in i + 1..d {
            let s = 0.5 * (r[(i, j)] + r[(j, i)]);
            r[(i, j)] = s;
            r[(j, i)] = s;
        }
    }
    r
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Empirical marginals coupled through a Gaussian dependence structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaModel {
    pub farms: Vec<FarmMeta>,
    pub horizon: usize,
    pub marginals: Vec<Marginal>,
    /// Row-major `dims × dims` correlation of the latent normals.
    pub correlation: Vec<f64>,
    /// Dimensions that were constant in the training data.
    pub constant_dims: Vec<usize>,
}

impl CopulaModel {
    /// Fits marginals per cell and a latent correlation from Spearman's ρs
    /// mapped through `2·sin(π·ρs/6)`.
    pub fn fit(dataset: &ScenarioDataset) -> Result<Self> {
        if dataset.len() < MIN_FIT_SAMPLES {
            return Err(Error::data(format!(
                "copula fit needs at least {MIN_FIT_SAMPLES} samples, got {}",
                dataset.len()
            )));
        }
        let dims = dataset.dims();
        let columns: Vec<Vec<f64>> = (0..dims)
            .map(|d| dataset.samples().iter().map(|s| s[d]).collect())
            .collect();
        let marginals = columns
            .iter()
            .map(|c| Marginal::new(c.clone()))
            .collect::<Result<Vec<_>>>()?;
        let constant_dims: Vec<usize> = (0..dims).filter(|&d| marginals[d].is_constant()).collect();
        if !constant_dims.is_empty() {
            log::warn!(
                "{} constant dimension(s) have undefined rank correlation; treated as independent",
                constant_dims.len()
            );
        }
        let mut corr = spearman_matrix(&columns);
        corr.iter_mut()
            .for_each(|r| *r = 2.0 * (std::f64::consts::PI * *r / 6.0).sin());
        corr.fill_diagonal(1.0);
        let corr = repair_psd(corr);
        let correlation = (0..dims)
            .flat_map(|i| (0..dims).map(move |j| (i, j)))
            .map(|(i, j)| corr[(i, j)])
            .collect();
        Ok(CopulaModel {
            farms: dataset.farms().to_vec(),
            horizon: dataset.horizon(),
            marginals,
            correlation,
            constant_dims,
        })
    }

    pub fn dims(&self) -> usize {
        self.marginals.len()
    }

    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dims(), self.dims(), &self.correlation)
    }

    /// Draws `n` days: correlated normals → uniforms → empirical quantiles.
    pub fn sample(&self, n: usize, seed: u64) -> Result<ScenarioDataset> {
        if n == 0 {
            return Err(Error::usage("sample count must be positive"));
        }
        let d = self.dims();
        let eig = SymmetricEigen::new(self.correlation_matrix());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        let mut rng = crate::rng::derived(seed, 0xc091);
        let eps = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let z = factor * eps;
        let samples = (0..n)
            .map(|s| {
                (0..d)
                    .map(|k| self.marginals[k].quantile(std_normal_cdf(z[(k, s)])))
                    .collect()
            })
            .collect();
        ScenarioDataset::new(self.farms.clone(), self.horizon, samples)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = serde_json::to_string(&serde_json::json!({
            "format": COPULA_FORMAT,
            "model": self,
        }))
        .map_err(|e| Error::corrupt(path, format!("cannot serialize copula: {e}")))?;
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut v: serde_json::Value =
            serde_json::from_str(&body).map_err(|e| Error::corrupt(path, format!("not valid JSON: {e}")))?;
        match v.get("format").and_then(|f| f.as_str()) {
            Some(COPULA_FORMAT) => {}
            other => {
                return Err(Error::corrupt(
                    path,
                    format!("format tag {other:?}, expected {COPULA_FORMAT:?}"),
                ))
            }
        }
        let model: CopulaModel = serde_json::from_value(v["model"].take())
            .map_err(|e| Error::corrupt(path, format!("malformed copula model: {e}")))?;
        let d = model.farms.len() * model.horizon;
        if model.marginals.len() != d || model.correlation.len() != d * d {
            return Err(Error::corrupt(path, "dimensions do not match farms × horizon"));
        }
        if model.marginals.iter().any(|m| m.sorted.is_empty()) {
            return Err(Error::corrupt(path, "empty marginal"));
        }
        Ok(model)
    }
}
