use serde::{Deserialize, Serialize};

use crate::data::ScenarioDataset;
use crate::error::{Error, Result};

/// Symmetric Pearson correlation matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrMatrix {
    size: usize,
    values: Vec<f64>,
    /// Variables with zero variance; their off-diagonal entries are 0.
    degenerate: Vec<usize>,
}

impl CorrMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn degenerate(&self) -> &[usize] {
        &self.degenerate
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.size)
    }

    pub fn frobenius_distance(&self, other: &CorrMatrix) -> Result<f64> {
        if self.size != other.size {
            return Err(Error::config(format!(
                "correlation matrices of size {} and {} are not comparable",
                self.size, other.size
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt())
    }
}

/// Pearson correlation between columns of equal-length observation vectors.
pub fn pearson_matrix(columns: &[Vec<f64>]) -> CorrMatrix {
    let size = columns.len();
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let norms: Vec<f64> = centered.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let degenerate: Vec<usize> = (0..size).filter(|&i| norms[i] == 0.0).collect();
    let mut values = vec![0.0; size * size];
    for i in 0..size {
        values[i * size + i] = 1.0;
        for j in i + 1..size {
            let r = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            values[i * size + j] = r;
            values[j * size + i] = r;
        }
    }
    CorrMatrix {
        size,
        values,
        degenerate,
    }
}

fn need_two(ds: &ScenarioDataset) -> Result<()> {
    if ds.len() < 2 {
        return Err(Error::data(format!(
            "correlation needs at least 2 samples, got {}",
            ds.len()
        )));
    }
    Ok(())
}

fn warn_degenerate(kind: &str, m: &CorrMatrix) {
    if !m.degenerate.is_empty() {
        log::warn!("{kind} correlation: constant variables {:?} set to zero correlation", m.degenerate);
    }
}

/// `H × H` correlation between time steps, pooling all samples and farms.
pub fn temporal_correlation(ds: &ScenarioDataset) -> Result<CorrMatrix> {
    need_two(ds)?;
    let columns: Vec<Vec<f64>> = (0..ds.horizon())
        .map(|h| {
            (0..ds.len())
                .flat_map(|s| (0..ds.parks()).map(move |f| (s, f)))
                .map(|(s, f)| ds.value(s, f, h))
                .collect()
        })
        .collect();
    let m = pearson_matrix(&columns);
    warn_degenerate("temporal", &m);
    Ok(m)
}

/// `P × P` correlation between farms, pooling all samples and time steps.
pub fn spatial_correlation(ds: &ScenarioDataset) -> Result<CorrMatrix> {
    need_two(ds)?;
    let columns: Vec<Vec<f64>> = (0..ds.parks()).map(|f| ds.pooled_values(&[f])).collect();
    let m = pearson_matrix(&columns);
    warn_degenerate("spatial", &m);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_wind, FarmMeta, SynthConfig, Terrain};

    /// Textbook single-pass Pearson on a pair of vectors.
    fn brute_pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let saa: f64 = a.iter().map(|x| x * x).sum();
        let sbb: f64 = b.iter().map(|y| y * y).sum();
        (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
    }

    fn farms(n: usize) -> Vec<FarmMeta> {
        (0..n)
            .map(|i| FarmMeta {
                farm_id: format!("f{i}"),
                terrain: Terrain::Flatland,
                max_power: 1.0,
            })
            .collect()
    }

    #[test]
    fn matrices_match_brute_force_pairs() {
        let ds = synth_wind(&SynthConfig::desk_wind(60, 4)).unwrap();
        let t = temporal_correlation(&ds).unwrap();
        for i in 0..24 {
            for j in 0..24 {
                let (mut a, mut b) = (Vec::new(), Vec::new());
                for s in 0..ds.len() {
                    for f in 0..ds.parks() {
                        a.push(ds.value(s, f, i));
                        b.push(ds.value(s, f, j));
                    }
                }
                let want = if i == j { 1.0 } else { brute_pearson(&a, &b) };
                assert!((t.get(i, j) - want).abs() < 1e-10);
            }
        }
        let sp = spatial_correlation(&ds).unwrap();
        for a in 0..ds.parks() {
            for b in 0..ds.parks() {
                let want = if a == b {
                    1.0
                } else {
                    brute_pearson(&ds.pooled_values(&[a]), &ds.pooled_values(&[b]))
                };
                assert!((sp.get(a, b) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn constant_daily_levels_give_perfect_temporal_correlation() {
        let samples: Vec<Vec<f64>> = (0..30)
            .map(|s| {
                (0..3)
                    .flat_map(|f| std::iter::repeat(((s * 7 + f * 3) % 11) as f64 / 10.0).take(24))
                    .collect()
            })
            .collect();
        let ds = ScenarioDataset::new(farms(3), 24, samples).unwrap();
        let t = temporal_correlation(&ds).unwrap();
        assert!(t.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn duplicated_farms_are_perfectly_correlated() {
        let samples: Vec<Vec<f64>> = (0..10)
            .map(|s| {
                let row: Vec<f64> = (0..24).map(|h| ((s * 24 + h) as f64 * 0.37).sin().abs()).collect();
                row.iter().chain(&row).copied().collect()
            })
            .collect();
        let ds = ScenarioDataset::new(farms(2), 24, samples).unwrap();
        let sp = spatial_correlation(&ds).unwrap();
        assert!((sp.get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_zeroed_and_flagged() {
        let samples: Vec<Vec<f64>> = (0..10)
            .map(|s| {
                let mut v = vec![0.5; 24];
                v.extend((0..24).map(|h| ((s + h) % 5) as f64 / 5.0));
                v
            })
            .collect();
        let ds = ScenarioDataset::new(farms(2), 24, samples).unwrap();
        let sp = spatial_correlation(&ds).unwrap();
        assert_eq!(sp.degenerate(), &[0]);
        assert_eq!(sp.get(0, 1), 0.0);
        assert_eq!(sp.get(0, 0), 1.0);
    }

    #[test]
    fn independent_regions_are_uncorrelated() {
        let mut cfg = SynthConfig::desk_wind(2000, 8);
        cfg.spatial_coupling = 0.0;
        let ds = synth_wind(&cfg).unwrap();
        let sp = spatial_correlation(&ds).unwrap();
        let flat = ds.farm_indices(Terrain::Flatland);
        let off = ds.farm_indices(Terrain::Offshore);
        for &a in &flat {
            for &b in &off {
                assert!(sp.get(a, b).abs() < 0.06, "{}", sp.get(a, b));
            }
        }
    }

    #[test]
    fn persistence_makes_temporal_correlation_decay_with_lag() {
        let ds = synth_wind(&SynthConfig::desk_wind(1000, 5)).unwrap();
        let t = temporal_correlation(&ds).unwrap();
        let lag = |k: usize| (0..24 - k).map(|i| t.get(i, i + k)).sum::<f64>() / (24 - k) as f64;
        for k in 1..12 {
            assert!(lag(k) > lag(k + 1), "lag {k}");
        }
    }

    #[test]
    fn single_sample_is_rejected() {
        let ds = ScenarioDataset::new(farms(1), 24, vec![vec![0.1; 24]]).unwrap();
        assert!(temporal_correlation(&ds).is_err());
    }
}
