use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{FarmMeta, ScenarioDataset, Terrain};
use crate::error::{Error, Result};
use crate::rng::{derived, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Wind,
    Solar,
}

/// Parameters of the synthetic farm generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub kind: SourceKind,
    pub parks_per_terrain: BTreeMap<Terrain, usize>,
    pub n_days: usize,
    /// AR(1) coefficient of the hourly (wind) or 3-hourly (solar) latent.
    pub temporal_persistence: f64,
    /// Weight of the shared regional latent in each farm's latent.
    pub spatial_coupling: f64,
    /// Mean normalized power per terrain. Wind terrains without an entry use
    /// [`SynthConfig::default_wind_target`].
    #[serde(default)]
    pub terrain_mean_targets: BTreeMap<Terrain, f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SynthConfig {
    /// Mean normalized power reported for German onshore/offshore sites.
    pub fn default_wind_target(terrain: Terrain) -> Option<f64> {
        match terrain {
            Terrain::Flatland => Some(0.201),
            Terrain::Forest => Some(0.263),
            Terrain::Offshore => Some(0.381),
            Terrain::Solar => None,
        }
    }

    /// 8 farms (4 flatland, 2 forest, 2 offshore) × 24 h.
    pub fn desk_wind(n_days: usize, seed: u64) -> Self {
        SynthConfig {
            kind: SourceKind::Wind,
            parks_per_terrain: BTreeMap::from([(Terrain::Flatland, 4), (Terrain::Forest, 2), (Terrain::Offshore, 2)]),
            n_days,
            temporal_persistence: 0.9,
            spatial_coupling: 0.7,
            terrain_mean_targets: BTreeMap::from([
                (Terrain::Flatland, 0.201),
                (Terrain::Forest, 0.263),
                (Terrain::Offshore, 0.381),
            ]),
            seed,
        }
    }

    pub fn desk_solar(n_days: usize, seed: u64) -> Self {
        SynthConfig {
            kind: SourceKind::Solar,
            parks_per_terrain: BTreeMap::from([(Terrain::Solar, 8)]),
            n_days,
            temporal_persistence: 0.7,
            spatial_coupling: 0.7,
            terrain_mean_targets: BTreeMap::new(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| Err(Error::config(format!("synth.{name}: {msg}")));
        if self.parks_per_terrain.values().all(|&n| n == 0) {
            return field("parks_per_terrain", "no parks requested".into());
        }
        if self.n_days == 0 {
            return field("n_days", "must be positive".into());
        }
        if !(0.0..1.0).contains(&self.temporal_persistence) {
            return field(
                "temporal_persistence",
                format!("{} is outside [0, 1)", self.temporal_persistence),
            );
        }
        if !(0.0..=1.0).contains(&self.spatial_coupling) {
            return field("spatial_coupling", format!("{} is outside [0, 1]", self.spatial_coupling));
        }
        let allowed = |t: &Terrain| match self.kind {
            SourceKind::Wind => t.is_wind(),
            SourceKind::Solar => *t == Terrain::Solar,
        };
        for t in self.parks_per_terrain.keys() {
            if !allowed(t) {
                return field("parks_per_terrain", format!("terrain {t} is not valid for {:?}", self.kind));
            }
        }
        for (t, m) in &self.terrain_mean_targets {
            if !allowed(t) {
                return field("terrain_mean_targets", format!("terrain {t} is not valid for {:?}", self.kind));
            }
            if !(*m > 0.0 && *m < 1.0) {
                return field("terrain_mean_targets", format!("{t} target {m} is outside (0, 1)"));
            }
        }
        Ok(())
    }

    fn farms(&self) -> Vec<(Terrain, Vec<FarmMeta>)> {
        self.parks_per_terrain
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(&t, &n)| {
                let farms = (0..n)
                    .map(|k| FarmMeta {
                        farm_id: format!("{t}_{k:02}"),
                        terrain: t,
                        max_power: 1.0,
                    })
                    .collect();
                (t, farms)
            })
            .collect()
    }
}

/// Dispatches on [`SynthConfig::kind`].
pub fn synthesize(config: &SynthConfig) -> Result<ScenarioDataset> {
    match config.kind {
        SourceKind::Wind => synth_wind(config),
        SourceKind::Solar => synth_solar(config),
    }
}

/// Stationary unit-variance AR(1) series.
fn ar1(rng: &mut Rng, len: usize, phi: f64) -> Vec<f64> {
    let innov = (1.0 - phi * phi).sqrt();
    let mut x: f64 = rng.sample(StandardNormal);
    (0..len)
        .map(|_| {
            let out = x;
            let e: f64 = rng.sample(StandardNormal);
            x = phi * x + innov * e;
            out
        })
        .collect()
}

/// Latents of one region: a shared AR(1) mixed into each farm's own AR(1).
fn regional_latents(rng: &mut Rng, farms: usize, len: usize, phi: f64, coupling: f64) -> Vec<Vec<f64>> {
    let shared = ar1(rng, len, phi);
    let (a, b) = (coupling.sqrt(), (1.0 - coupling).sqrt());
    (0..farms)
        .map(|_| {
            ar1(rng, len, phi)
                .into_iter()
                .zip(&shared)
                .map(|(own, s)| a * s + b * own)
                .collect()
        })
        .collect()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const CURVE_SLOPE: f64 = 1.6;

/// Clipped logistic power curve: cut-in below 10 % and rated output above
/// 90 % of the logistic range.
fn power_curve(z: f64, offset: f64) -> f64 {
    ((logistic(CURVE_SLOPE * (z - offset)) - 0.1) / 0.8).clamp(0.0, 1.0)
}

/// Finds `x` in `[lo, hi]` with `f(x) ≈ target` for a decreasing `f`.
fn bisect_decreasing(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn mean_of(latents: &[Vec<f64>], map: impl Fn(f64) -> f64) -> f64 {
    let n: usize = latents.iter().map(Vec::len).sum();
    latents.iter().flatten().map(|&z| map(z)).sum::<f64>() / n as f64
}

fn into_days(series: &[Vec<f64>], horizon: usize, n_days: usize) -> Vec<Vec<f64>> {
    (0..n_days)
        .map(|d| {
            series
                .iter()
                .flat_map(|farm| farm[d * horizon..][..horizon].iter().copied())
                .collect()
        })
        .collect()
}

/// Synthetic hourly wind power with one latent region per terrain.
///
/// Each terrain's curve offset is solved by bisection on the generated
/// latents, so the pooled terrain mean matches its target to numerical
/// precision regardless of `n_days`.
pub fn synth_wind(config: &SynthConfig) -> Result<ScenarioDataset> {
    if config.kind != SourceKind::Wind {
        return Err(Error::config("synth_wind needs kind = wind"));
    }
    config.validate()?;
    let horizon = 24;
    let len = config.n_days * horizon;
    let mut all_farms = Vec::new();
    let mut series = Vec::new();
    for (region, (terrain, farms)) in config.farms().into_iter().enumerate() {
        let mut rng = derived(config.seed, 0x3100 + region as u64);
        let latents = regional_latents(
            &mut rng,
            farms.len(),
            len,
            config.temporal_persistence,
            config.spatial_coupling,
        );
        let target = config
            .terrain_mean_targets
            .get(&terrain)
            .copied()
            .or_else(|| SynthConfig::default_wind_target(terrain))
            .expect("wind terrains have a default target");
        let offset = bisect_decreasing(|b| mean_of(&latents, |z| power_curve(z, b)), target, -20.0, 20.0);
        series.extend(
            latents
                .into_iter()
                .map(|farm| farm.into_iter().map(|z| power_curve(z, offset)).collect::<Vec<_>>()),
        );
        all_farms.extend(farms);
    }
    ScenarioDataset::new(all_farms, horizon, into_days(&series, horizon, config.n_days))
}

/// Relative clear-sky output of the eight 3-hour blocks of a day, starting
/// at midnight. The night blocks are exactly zero.
pub fn clear_sky_profile() -> [f64; 8] {
    [0.0, 0.08, 0.62, 1.0, 0.92, 0.42, 0.03, 0.0]
}

/// Clear-sky envelope scaled by a per-block clearness index in `[0, 1]`.
pub fn solar_day_profile(clearness: &[f64; 8]) -> [f64; 8] {
    let bell = clear_sky_profile();
    std::array::from_fn(|i| bell[i] * clearness[i].clamp(0.0, 1.0))
}

const CLEARNESS_SLOPE: f64 = 1.5;

/// Synthetic 3-hourly photovoltaic power: clear-sky envelope times an AR(1)
/// clearness index shared regionally.
pub fn synth_solar(config: &SynthConfig) -> Result<ScenarioDataset> {
    if config.kind != SourceKind::Solar {
        return Err(Error::config("synth_solar needs kind = solar"));
    }
    config.validate()?;
    let horizon = 8;
    let len = config.n_days * horizon;
    let mut rng = derived(config.seed, 0x5000);
    let (_, farms) = config.farms().into_iter().next().expect("validated non-empty");
    let latents = regional_latents(
        &mut rng,
        farms.len(),
        len,
        config.temporal_persistence,
        config.spatial_coupling,
    );
    let bell = clear_sky_profile();
    let power = |t: usize, z: f64, bias: f64| bell[t % horizon] * logistic(CLEARNESS_SLOPE * z + bias);
    let bias = match config.terrain_mean_targets.get(&Terrain::Solar) {
        Some(&target) => {
            let mean = |bias: f64| {
                let n = latents.len() * len;
                latents
                    .iter()
                    .flat_map(|f| f.iter().enumerate())
                    .map(|(t, &z)| power(t, z, bias))
                    .sum::<f64>()
                    / n as f64
            };
            // Mean increases with the bias.
            -bisect_decreasing(|b| mean(-b), target, -30.0, 30.0)
        }
        None => 0.3,
    };
    let series: Vec<Vec<f64>> = latents
        .iter()
        .map(|farm| farm.iter().enumerate().map(|(t, &z)| power(t, z, bias)).collect())
        .collect();
    ScenarioDataset::new(farms, horizon, into_days(&series, horizon, config.n_days))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::moments;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn terrain_values(ds: &ScenarioDataset, t: Terrain) -> Vec<f64> {
        ds.pooled_values(&ds.farm_indices(t))
    }

    #[test]
    fn wind_terrain_means_hit_targets_in_order() {
        let ds = synth_wind(&SynthConfig::desk_wind(4000, 1)).unwrap();
        let mut stats = Vec::new();
        for (t, target) in [(Terrain::Flatland, 0.201), (Terrain::Forest, 0.263), (Terrain::Offshore, 0.381)] {
            let m = moments(&terrain_values(&ds, t)).unwrap();
            assert!((m.mean - target).abs() < 0.02, "{t}: {}", m.mean);
            stats.push(m);
        }
        assert!(stats[2].mean > stats[1].mean && stats[1].mean > stats[0].mean);
        assert!(stats[0].skewness > stats[1].skewness && stats[1].skewness > stats[2].skewness);
        assert!(stats[2].variance > stats[1].variance && stats[1].variance > stats[0].variance);
    }

    #[test]
    fn wind_has_temporal_and_spatial_dependence_and_saturation() {
        let ds = synth_wind(&SynthConfig::desk_wind(2000, 2)).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for s in 0..ds.len() {
            for f in 0..ds.parks() {
                let row = ds.farm_row(s, f);
                for h in 0..23 {
                    a.push(row[h]);
                    b.push(row[h + 1]);
                }
            }
        }
        assert!(pearson(&a, &b) >= 0.7);
        let flat = ds.farm_indices(Terrain::Flatland);
        let r = pearson(&ds.pooled_values(&flat[..1]), &ds.pooled_values(&flat[1..2]));
        assert!(r >= 0.4, "{r}");
        let all = ds.all_values();
        assert!(all.iter().any(|v| *v < 0.01));
        assert!(all.iter().any(|v| *v > 0.99));
    }

    #[test]
    fn wind_without_persistence_has_no_temporal_correlation() {
        let mut cfg = SynthConfig::desk_wind(2000, 3);
        cfg.temporal_persistence = 0.0;
        let ds = synth_wind(&cfg).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for s in 0..ds.len() {
            let row = ds.farm_row(s, 0);
            for h in 0..23 {
                a.push(row[h]);
                b.push(row[h + 1]);
            }
        }
        // i.i.d. latent: |r| within sampling error of zero for 46k pairs.
        assert!(pearson(&a, &b).abs() < 0.03);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SynthConfig::desk_wind(50, 9);
        assert_eq!(synth_wind(&cfg).unwrap(), synth_wind(&cfg).unwrap());
        let other = SynthConfig { seed: 10, ..cfg };
        assert_ne!(synth_wind(&other).unwrap(), synth_wind(&SynthConfig::desk_wind(50, 9)).unwrap());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = SynthConfig::desk_wind(10, 0);
        cfg.parks_per_terrain.values_mut().for_each(|n| *n = 0);
        assert!(synth_wind(&cfg).is_err());
        let mut cfg = SynthConfig::desk_wind(10, 0);
        cfg.parks_per_terrain.insert(Terrain::Solar, 1);
        assert!(synth_wind(&cfg).is_err());
        assert!(synth_solar(&SynthConfig::desk_wind(10, 0)).is_err());
    }

    #[test]
    fn solar_night_blocks_are_zero() {
        let ds = synth_solar(&SynthConfig::desk_solar(200, 4)).unwrap();
        assert_eq!(ds.horizon(), 8);
        for s in 0..ds.len() {
            for f in 0..ds.parks() {
                let row = ds.farm_row(s, f);
                assert_eq!(row[0], 0.0);
                assert_eq!(row[7], 0.0);
            }
        }
    }

    #[test]
    fn full_clearness_reproduces_clear_sky_envelope() {
        assert_eq!(solar_day_profile(&[1.0; 8]), clear_sky_profile());
    }

    #[test]
    fn solar_daily_energy_stays_below_four() {
        let ds = synth_solar(&SynthConfig::desk_solar(2000, 5)).unwrap();
        let sums: Vec<f64> = (0..ds.len())
            .flat_map(|s| (0..ds.parks()).map(move |f| (s, f)))
            .map(|(s, f)| ds.farm_row(s, f).iter().sum())
            .collect();
        assert!(sums.iter().all(|v| *v <= 4.0));
        let below = sums.iter().filter(|v| **v < 2.5).count() as f64 / sums.len() as f64;
        assert!(below > 0.8, "{below}");
    }

    #[test]
    fn solar_mean_target_is_met() {
        let mut cfg = SynthConfig::desk_solar(500, 6);
        cfg.terrain_mean_targets.insert(Terrain::Solar, 0.15);
        let ds = synth_solar(&cfg).unwrap();
        let all = ds.all_values();
        let m = all.iter().sum::<f64>() / all.len() as f64;
        assert!((m - 0.15).abs() < 1e-6);
    }
}
