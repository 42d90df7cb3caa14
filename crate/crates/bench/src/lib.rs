//! Benchmark fixtures.

use dualcast::channel::generate_channel_set_for_trial;
use dualcast::{
    design_analog, effective_channels, zero_forcing_directions, ChannelSet, EffectiveChannels, ScaModel, SystemConfig,
    UnicastDirections, Variant,
};

/// One default-scenario trial up to the SCA model.
pub struct Fixture {
    pub cfg: SystemConfig,
    pub channels: ChannelSet,
    pub eff: EffectiveChannels,
    pub dirs: UnicastDirections,
    pub model: ScaModel,
}

pub fn default_fixture(snr_db: f64, trial: u64, variant: Variant) -> Fixture {
    let cfg = SystemConfig::default().with_snr_db(snr_db);
    let channels = generate_channel_set_for_trial(&cfg, 1, trial);
    let analog = design_analog(&channels, &cfg).expect("analog design");
    let eff = effective_channels(&channels, &analog).expect("effective channels");
    let dirs = zero_forcing_directions(&eff).expect("zero forcing");
    let model = ScaModel::new(&analog, &eff, &dirs, &cfg, variant).expect("model");
    Fixture { cfg, channels, eff, dirs, model }
}
