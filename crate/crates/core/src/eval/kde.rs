use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRID_POINTS: usize = 1024;
pub const GRID_MIN: f64 = -0.05;
pub const GRID_MAX: f64 = 1.05;
/// Bandwidth equal to 1 % of normalized power.
pub const DEFAULT_BANDWIDTH: f64 = 0.01;
/// Floor applied to both densities inside the divergence integrand.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Kernel contributions beyond this many bandwidths are below 1e-22 of the
/// peak and are skipped.
const KERNEL_REACH: f64 = 10.0;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// The fixed evaluation grid: 1024 evenly spaced points over [-0.05, 1.05].
pub fn kde_grid() -> Vec<f64> {
    let step = (GRID_MAX - GRID_MIN) / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS).map(|i| GRID_MIN + i as f64 * step).collect()
}

/// A density tabulated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pdf {
    grid: Vec<f64>,
    densities: Vec<f64>,
    bandwidth: f64,
}

impl Pdf {
    /// Tabulates an arbitrary density on the standard grid.
    pub fn from_density(f: impl Fn(f64) -> f64) -> Self {
        let grid = kde_grid();
        let densities = grid.iter().map(|&x| f(x).max(0.0)).collect();
        Pdf {
            grid,
            densities,
            bandwidth: 0.0,
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.densities)
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Gaussian-kernel density estimate with a fixed bandwidth.
#[derive(Debug, Clone)]
pub struct GaussianKde {
    values: Vec<f64>,
    bandwidth: f64,
}

impl GaussianKde {
    pub fn new(values: &[f64], bandwidth: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::data("kernel density estimate of an empty sample"));
        }
        if !(bandwidth > 0.0) {
            return Err(Error::config(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("kernel density estimate of non-finite values"));
        }
        Ok(GaussianKde {
            values: values.to_vec(),
            bandwidth,
        })
    }

    /// `(1 / (n h)) Σ φ((x - xᵢ) / h)` evaluated exactly.
    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self
            .values
            .iter()
            .map(|&v| {
                let u = (x - v) / h;
                (-0.5 * u * u).exp()
            })
            .sum();
        sum * INV_SQRT_2PI / (self.values.len() as f64 * h)
    }

    /// Tabulates the estimate on the standard grid.
    pub fn to_pdf(&self) -> Pdf {
        let grid = kde_grid();
        let h = self.bandwidth;
        let step = grid[1] - grid[0];
        let mut acc = vec![0.0; grid.len()];
        for &v in &self.values {
            let lo = ((v - KERNEL_REACH * h - GRID_MIN) / step).floor().max(0.0) as usize;
            let hi = (((v + KERNEL_REACH * h - GRID_MIN) / step).ceil().max(0.0) as usize).min(grid.len() - 1);
            for i in lo..=hi {
                let u = (grid[i] - v) / h;
                acc[i] += (-0.5 * u * u).exp();
            }
        }
        let norm = INV_SQRT_2PI / (self.values.len() as f64 * h);
        acc.iter_mut().for_each(|d| *d *= norm);
        Pdf {
            grid,
            densities: acc,
            bandwidth: h,
        }
    }
}

/// Gaussian KDE tabulated on the 1024-point grid over [-0.05, 1.05].
pub fn kde_fit(values: &[f64], bandwidth: f64) -> Result<Pdf> {
    Ok(GaussianKde::new(values, bandwidth)?.to_pdf())
}

/// `D(P‖Q) = ∫ p log(p / q)`, trapezoidal on the shared grid.
pub fn kld(p: &Pdf, q: &Pdf) -> Result<f64> {
    if p.grid != q.grid {
        return Err(Error::config("kld: densities are tabulated on different grids"));
    }
    let integrand: Vec<f64> = p
        .densities
        .iter()
        .zip(&q.densities)
        .map(|(&p, &q)| {
            let (p, q) = (p.max(DENSITY_FLOOR), q.max(DENSITY_FLOOR));
            p * (p / q).ln()
        })
        .collect();
    Ok(trapezoid(&p.grid, &integrand))
}

/// `D(P‖Q) + D(Q‖P)`.
pub fn symmetric_kld(p: &Pdf, q: &Pdf) -> Result<f64> {
    Ok(kld(p, q)? + kld(q, p)?)
}
