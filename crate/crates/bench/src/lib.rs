//! Fixtures shared by the benchmarks.

use renewgan_core::data::{synth_wind, SynthConfig};
use renewgan_core::ScenarioDataset;

/// The 8-farm desk dataset used throughout the benchmarks.
pub fn desk_wind(days: usize) -> ScenarioDataset {
    synth_wind(&SynthConfig::desk_wind(days, 7)).expect("desk config is valid")
}
