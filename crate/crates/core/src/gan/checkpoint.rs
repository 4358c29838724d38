use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::TrainedModel;
use crate::error::{Error, Result};

/// Format tag written into every checkpoint.
pub const CHECKPOINT_FORMAT: &str = "renewgan-checkpoint/1";

#[derive(Serialize)]
struct Envelope<'a> {
    format: &'a str,
    model: &'a TrainedModel,
}

#[derive(Deserialize)]
struct OwnedEnvelope {
    format: String,
    model: TrainedModel,
}

impl TrainedModel {
    /// Writes the model as JSON. Floats use shortest round-trip formatting,
    /// so [`TrainedModel::load`] restores every value bit for bit.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = serde_json::to_string(&Envelope {
            format: CHECKPOINT_FORMAT,
            model: self,
        })
        .map_err(|e| Error::corrupt(path, format!("cannot serialize model: {e}")))?;
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tag: serde_json::Value =
            serde_json::from_str(&body).map_err(|e| Error::corrupt(path, format!("not valid JSON: {e}")))?;
        match tag.get("format").and_then(|f| f.as_str()) {
            Some(CHECKPOINT_FORMAT) => {}
            Some(other) => {
                return Err(Error::corrupt(
                    path,
                    format!("format tag {other:?}, expected {CHECKPOINT_FORMAT:?}"),
                ))
            }
            None => return Err(Error::corrupt(path, "missing format tag")),
        }
        let env: OwnedEnvelope =
            serde_json::from_value(tag).map_err(|e| Error::corrupt(path, format!("malformed checkpoint: {e}")))?;
        debug_assert_eq!(env.format, CHECKPOINT_FORMAT);
        let model = env.model;
        model
            .config
            .check_shape(model.farms.len(), model.horizon)
            .map_err(|e| Error::corrupt(path, e.to_string()))?;
        if !model.generator.is_finite() || !model.discriminator.is_finite() {
            return Err(Error::corrupt(path, "non-finite parameters"));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_wind, SynthConfig};
    use crate::gan::{train, GanConfig, LossKind};

    fn model() -> TrainedModel {
        let ds = synth_wind(&SynthConfig::desk_wind(12, 1)).unwrap();
        let cfg = GanConfig {
            channel_plan: vec![100, 8, 4, 4, 1],
            epochs: 2,
            batch_size: 4,
            ..GanConfig::desk(LossKind::Wasserstein)
        };
        train(&ds, &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ckpt.json");
        m.save(&p).unwrap();
        let back = TrainedModel::load(&p).unwrap();
        let bits = |m: &TrainedModel| -> Vec<u64> {
            m.generator
                .params
                .iter()
                .chain(&m.discriminator.params)
                .flat_map(|p| p.value.data().iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&m), bits(&back));
        assert_eq!(m, back);
        assert_eq!(m.sample(5, 3).unwrap(), back.sample(5, 3).unwrap());
    }

    #[test]
    fn damaged_files_are_reported_as_corrupt() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ckpt.json");
        m.save(&p).unwrap();
        let body = fs::read_to_string(&p).unwrap();

        fs::write(&p, &body[..body.len() / 2]).unwrap();
        assert!(matches!(TrainedModel::load(&p), Err(Error::Corrupt { .. })));

        fs::write(&p, body.replace(CHECKPOINT_FORMAT, "something-else/9")).unwrap();
        assert!(matches!(TrainedModel::load(&p), Err(Error::Corrupt { .. })));

        assert!(matches!(TrainedModel::load(dir.path().join("none.json")), Err(Error::Io { .. })));
    }
}
