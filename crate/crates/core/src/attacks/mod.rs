//! Attacker tooling: avalanche analysis, CPA on simulated traces and
//! modeling attacks on CRP sets.

mod avalanche;
mod cpa;
mod crps;
mod ml;

pub use avalanche::{
    all_input_bits, avalanche_test, control_lfsr_spec, unique_challenges, AvalancheReport,
    AvalancheSummary, LfsrObfuscator, NlfsrObfuscator, Obfuscator, CONTROL_LFSR_TAPS,
};
pub use cpa::{cpa_attack, ChunkResult, CpaResult, CpaTarget};
pub use crps::{collect_crps, collect_raw_crps, response_uniformity, CrpMode};
pub use ml::{feature_matrix, split_crps, train_ml_attack, MlAttackResult, MlOptions, Mlp, ModelDescriptor};
