//! Distribution-level comparison of generated scenarios with held-out days.

mod correlation;
mod kde;
mod stats;
mod stress;

pub use correlation::{pearson_matrix, spatial_correlation, temporal_correlation, CorrMatrix};
pub use kde::{
    kde_fit, kde_grid, kld, symmetric_kld, GaussianKde, Pdf, DEFAULT_BANDWIDTH, DENSITY_FLOOR, GRID_MAX, GRID_MIN,
    GRID_POINTS,
};
pub use stats::{moments, Moments};
pub use stress::{stress_integral, Histogram, StressIntegrals, STRESS_BINS};

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{ScenarioDataset, Terrain};
use crate::error::{Error, Result};

/// Scenarios of i.i.d. uniform power, shaped like `like`.
pub fn uniform_noise(like: &ScenarioDataset, n: usize, seed: u64) -> Result<ScenarioDataset> {
    let mut rng = crate::rng::derived(seed, 0x0b5e);
    let samples = (0..n)
        .map(|_| (0..like.dims()).map(|_| rng.random::<f64>()).collect())
        .collect();
    like.with_samples(samples)
}

/// Symmetric KLD per model for one group of farms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupKld {
    /// `"all"` or a terrain name.
    pub group: String,
    pub farms: usize,
    /// Aligned with [`EvalReport::models`].
    pub kld: Vec<f64>,
}

/// KDE of one group for the real data and every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPdfs {
    pub group: String,
    /// `real` first, then models in report order.
    pub sources: Vec<(String, Pdf)>,
}

/// Result of [`terrain_group_eval`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainEval {
    pub global: GroupKld,
    pub by_terrain: Vec<GroupKld>,
    pub pdfs: Vec<GroupPdfs>,
    pub notes: Vec<String>,
}

fn check_models(real: &ScenarioDataset, generated: &[(String, ScenarioDataset)]) -> Result<()> {
    for (name, g) in generated {
        real.check_compatible(g)
            .map_err(|e| Error::data(format!("model {name:?}: {e}")))?;
        if g.is_empty() {
            return Err(Error::data(format!("model {name:?} has no samples")));
        }
    }
    Ok(())
}

fn group_eval(
    real: &ScenarioDataset,
    generated: &[(String, ScenarioDataset)],
    group: String,
    farms: &[usize],
) -> Result<(GroupKld, GroupPdfs)> {
    let real_pdf = kde_fit(&real.pooled_values(farms), DEFAULT_BANDWIDTH)?;
    let mut sources = vec![("real".to_string(), real_pdf)];
    let mut kld = Vec::with_capacity(generated.len());
    for (name, g) in generated {
        let pdf = kde_fit(&g.pooled_values(farms), DEFAULT_BANDWIDTH)?;
        kld.push(symmetric_kld(&sources[0].1, &pdf)?);
        sources.push((name.clone(), pdf));
    }
    Ok((
        GroupKld {
            group: group.clone(),
            farms: farms.len(),
            kld,
        },
        GroupPdfs { group, sources },
    ))
}

/// Pools every value of each terrain's farms, estimates densities and
/// compares each model against `real` with the symmetric KLD. The `"all"`
/// group pools every farm.
pub fn terrain_group_eval(real: &ScenarioDataset, generated: &[(String, ScenarioDataset)]) -> Result<TerrainEval> {
    check_models(real, generated)?;
    let all: Vec<usize> = (0..real.parks()).collect();
    let (global, global_pdfs) = group_eval(real, generated, "all".into(), &all)?;
    let mut by_terrain = Vec::new();
    let mut pdfs = vec![global_pdfs];
    let mut notes = Vec::new();
    for t in Terrain::ALL {
        let farms = real.farm_indices(t);
        if farms.is_empty() {
            if t.is_wind() == real.farms()[0].terrain.is_wind() {
                notes.push(format!("terrain {t} has no farms and is omitted"));
            }
            continue;
        }
        let (k, p) = group_eval(real, generated, t.to_string(), &farms)?;
        by_terrain.push(k);
        pdfs.push(p);
    }
    Ok(TerrainEval {
        global,
        by_terrain,
        pdfs,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMoments {
    pub group: String,
    pub source: String,
    pub moments: Moments,
}

/// Everything the evaluation battery computes for one real test set and a
/// list of named models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub models: Vec<String>,
    pub parks: usize,
    pub horizon: usize,
    pub real_samples: usize,
    pub kld_global: GroupKld,
    pub kld_by_terrain: Vec<GroupKld>,
    /// `real` first, then models.
    pub temporal_corr: Vec<(String, CorrMatrix)>,
    pub spatial_corr: Vec<(String, CorrMatrix)>,
    pub stress: Vec<(String, StressIntegrals)>,
    pub moments: Vec<SourceMoments>,
    pub pdfs: Vec<GroupPdfs>,
    pub notes: Vec<String>,
}

/// Published full-scale divergences on GermanWindFarm2017, for context only.
const REFERENCE_NOTE: &str = "reference (GermanWindFarm2017, 50000-epoch training, not reproduced here): \
symmetric KLD all farms GC 0.062 / DC-GAN 0.218 / DC-WGAN 0.027; \
flatland 0.143 / 0.194 / 0.037; forest 0.085 / 0.266 / 0.018; offshore 0.148 / 0.304 / 0.046";

/// Runs the full battery.
pub fn evaluate(real: &ScenarioDataset, generated: &[(String, ScenarioDataset)]) -> Result<EvalReport> {
    check_models(real, generated)?;
    let terrain = terrain_group_eval(real, generated)?;
    let sources: Vec<(&str, &ScenarioDataset)> = std::iter::once(("real", real))
        .chain(generated.iter().map(|(n, d)| (n.as_str(), d)))
        .collect();
    let mut temporal_corr = Vec::new();
    let mut spatial_corr = Vec::new();
    let mut stress = Vec::new();
    let mut all_moments = Vec::new();
    for (name, ds) in &sources {
        temporal_corr.push((name.to_string(), temporal_correlation(ds)?));
        spatial_corr.push((name.to_string(), spatial_correlation(ds)?));
        stress.push((name.to_string(), stress_integral(ds)));
        let groups = std::iter::once(("all".to_string(), (0..ds.parks()).collect::<Vec<_>>())).chain(
            ds.terrains()
                .into_iter()
                .map(|t| (t.to_string(), ds.farm_indices(t))),
        );
        for (group, farms) in groups {
            all_moments.push(SourceMoments {
                group,
                source: name.to_string(),
                moments: moments(&ds.pooled_values(&farms))?,
            });
        }
    }
    let mut notes = terrain.notes;
    notes.push(REFERENCE_NOTE.to_string());
    Ok(EvalReport {
        models: generated.iter().map(|(n, _)| n.clone()).collect(),
        parks: real.parks(),
        horizon: real.horizon(),
        real_samples: real.len(),
        kld_global: terrain.global,
        kld_by_terrain: terrain.by_terrain,
        temporal_corr,
        spatial_corr,
        stress,
        moments: all_moments,
        pdfs: terrain.pdfs,
        notes,
    })
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

impl EvalReport {
    /// Symmetric KLD of `model` over all farms.
    pub fn global_kld(&self, model: &str) -> Option<f64> {
        let i = self.models.iter().position(|m| m == model)?;
        Some(self.kld_global.kld[i])
    }

    fn kld_table(&self, rows: &[&GroupKld]) -> String {
        let mut s = String::from("group,farms");
        for m in &self.models {
            s.push_str(&format!(",kld_{m}"));
        }
        s.push('\n');
        for r in rows {
            s.push_str(&format!("{},{}", r.group, r.farms));
            for k in &r.kld {
                s.push_str(&format!(",{k}"));
            }
            s.push('\n');
        }
        s
    }

    /// Writes `report.json` plus CSV tables into `dir`:
    /// `kld_global.csv`, `kld_terrain.csv`, `moments.csv`,
    /// `temporal_corr_<source>.csv`, `spatial_corr_<source>.csv`,
    /// `stress_<source>.csv` (`bin_left,bin_right,count`) and
    /// `pdf_<group>.csv` (grid column plus one density column per source).
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        write_file(&dir.join("report.json"), &json)?;
        write_file(&dir.join("kld_global.csv"), &self.kld_table(&[&self.kld_global]))?;
        let terrain_rows: Vec<&GroupKld> = self.kld_by_terrain.iter().collect();
        write_file(&dir.join("kld_terrain.csv"), &self.kld_table(&terrain_rows))?;

        let mut m = String::from("group,source,mean,variance,skewness,degenerate\n");
        for sm in &self.moments {
            m.push_str(&format!(
                "{},{},{},{},{},{}\n",
                sm.group, sm.source, sm.moments.mean, sm.moments.variance, sm.moments.skewness, sm.moments.degenerate
            ));
        }
        write_file(&dir.join("moments.csv"), &m)?;

        for (kind, mats) in [("temporal", &self.temporal_corr), ("spatial", &self.spatial_corr)] {
            for (source, mat) in mats {
                let body: String = mat
                    .rows()
                    .map(|row| {
                        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                        cells.join(",") + "\n"
                    })
                    .collect();
                write_file(&dir.join(format!("{kind}_corr_{}.csv", file_safe(source))), &body)?;
            }
        }
        for (source, st) in &self.stress {
            let mut body = String::from("bin_left,bin_right,count\n");
            for (i, c) in st.histogram.counts.iter().enumerate() {
                body.push_str(&format!("{},{},{c}\n", st.histogram.edges[i], st.histogram.edges[i + 1]));
            }
            write_file(&dir.join(format!("stress_{}.csv", file_safe(source))), &body)?;
        }
        for g in &self.pdfs {
            let mut body = String::from("x");
            for (s, _) in &g.sources {
                body.push_str(&format!(",{s}"));
            }
            body.push('\n');
            let grid = g.sources[0].1.grid();
            for (i, x) in grid.iter().enumerate() {
                body.push_str(&x.to_string());
                for (_, p) in &g.sources {
                    body.push_str(&format!(",{}", p.densities()[i]));
                }
                body.push('\n');
            }
            write_file(&dir.join(format!("pdf_{}.csv", file_safe(&g.group))), &body)?;
        }
        Ok(())
    }
}
