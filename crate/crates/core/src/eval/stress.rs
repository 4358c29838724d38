use serde::{Deserialize, Serialize};

use crate::data::ScenarioDataset;

pub const STRESS_BINS: usize = 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins over `[lo, hi]`; `hi` itself falls in the last bin.
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            if v < lo || v > hi {
                continue;
            }
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Daily energy of each farm (sum over the horizon of normalized power) and
/// its histogram over `[0, H]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressIntegrals {
    /// Sample-major: `integrals[sample * parks + farm]`.
    pub integrals: Vec<f64>,
    pub histogram: Histogram,
}

impl StressIntegrals {
    pub fn max(&self) -> f64 {
        self.integrals.iter().copied().fold(0.0, f64::max)
    }
}

pub fn stress_integral(ds: &ScenarioDataset) -> StressIntegrals {
    let integrals: Vec<f64> = (0..ds.len())
        .flat_map(|s| (0..ds.parks()).map(move |f| (s, f)))
        .map(|(s, f)| ds.farm_row(s, f).iter().sum())
        .collect();
    let histogram = Histogram::new(&integrals, STRESS_BINS, 0.0, ds.horizon() as f64);
    StressIntegrals { integrals, histogram }
}
