//! Uplink massive-MIMO OFDM link simulation.
//!
//! The crate models a multi-user uplink frame over a frequency-selective
//! Rayleigh channel and implements two receiver families on top of it:
//!
//! * a conventional chain (comb pilots across the band, least-squares
//!   estimation, impulse-response reconstruction, then MRC or MMSE
//!   combining per subcarrier), and
//! * a sliding receiver that trains on a single pilot subcarrier and walks
//!   outward, equalizing each subcarrier with estimates carried over from
//!   its neighbors and refreshing them from its own hard decisions.
//!
//! [`experiment::run_experiment`] drives Monte Carlo sweeps over antenna
//! count, Eb/N0, or detection depth and reports SINR, SIR, and BER per
//! scheme with paired randomness, written as CSV plus a JSON sidecar.

pub mod channel;
pub mod conventional;
pub mod detection;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod pilots;
pub mod rng;
pub mod sliding;
pub mod waveform;

pub use channel::{
    builtin_models, cir_to_cfr, coherence_bandwidth, draw_channel, epa, etu, eva, find_model,
    parse_pdp_table, propagate, sample_pdp, CfrTensor, ChannelRealization, PdpModel, SampledPdp,
};
pub use conventional::{
    ls_estimate, mmse_combine, mmse_weights, mrc_combine, reconstruct_cfr, ChannelEstimate,
    EstimateSource,
};
pub use detection::DetectionResult;
pub use error::{Error, Result};
pub use experiment::{
    csv_string, resolve_model, run_experiment, write_csv, write_outputs, ExperimentSpec,
    MetricRecord, Scheme, SweepVariable, CSV_HEADER,
};
pub use metrics::{
    average_sinr_db, average_sir_db, ebn0_to_noise_var, measure_ber, measure_sinr, measure_sir,
    ErrorAccumulator,
};
pub use pilots::{build_frames, zc_pilot_book, PilotBook, PilotPlacement, PilotScheme};
pub use rng::TrialStreams;
pub use sliding::{alpha_approx, alpha_exact, run_sliding, AlphaMode, AlphaTable};
pub use waveform::{
    hard_decision, map_bits, ofdm_demodulate, ofdm_modulate, Constellation, PropagationPath,
    SpaceTimeGrid, SystemConfig, UserFrame, PILOT_LABEL,
};
