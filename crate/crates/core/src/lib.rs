//! Hybrid-beamformed multicast/unicast layered transmission: channel
//! generation, analog and digital beam design, SCA power optimization and
//! link-level evaluation.

pub mod analog;
pub mod channel;
pub mod conic;
pub mod digital;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod link;
pub mod oracle;
pub mod rng;
pub mod sca;

pub use analog::{design_analog, quantize_to_codebook, rf_gain, AnalogConfiguration, PhaseCodebook};
pub use channel::{generate_channel, generate_channel_set, ChannelSet, GeometricChannel, SystemConfig};
pub use conic::{solve, ConicProblem, ConicSolution, SolveStatus};
pub use digital::{effective_channels, zero_forcing_directions, EffectiveChannels, UnicastDirections};
pub use error::{Error, Result};
pub use harness::{
    parse_config_file, parse_config_str, read_results_csv, run_experiment, summarize, write_results, ExperimentConfig,
    ExperimentOutput, FailureMarker, ResultRow, Summary,
};
pub use link::{
    ber_monte_carlo, exact_sinrs, fairness_stats, spectral_efficiency, BerReport, DecodeOrder, LinkMetrics,
};
pub use oracle::{toy_suite, OracleCheck};
pub use sca::{build_subproblem, initialize_feasible, sca_optimize, PowerSolution, ScaModel, ScaSettings, Variant};
