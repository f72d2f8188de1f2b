//! Feedback shift register machinery: the cross-coupled NLFSR pair,
//! maximum-length LFSRs, the hybrid CASR, the combined PRNG and the clock
//! randomizer. Everything here is a pure function of its inputs.

mod casr;
mod nlfsr;
mod period;
mod prng;
mod spec;

pub use casr::{casr_step, CasrRule, CellRule};
pub use nlfsr::{concat_state, nlfsr_run, nlfsr_step, Coupling, NlfsrConfig, NlfsrPair};
pub use period::{find_max_length_nlfsr, verify_period, RegisterMap, MAX_WALK_WIDTH};
pub use prng::{
    clock_tick, output_stream_period, prng_seed, prng_step, ClockRandomizer, Prng, PrngConfig,
};
pub use spec::{lfsr_step, FeedbackSpec};


use crate::bits::BitState;

/// One line per state, lowercase hex.
pub fn golden_dump(states: &[BitState]) -> String {
    states.iter().map(|s| format!("{}\n", s.to_hex())).collect()
}

/// Parses a dump written by [`golden_dump`].
pub fn parse_golden(width: u32, text: &str) -> crate::Result<Vec<BitState>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| BitState::from_hex(width, l))
        .collect()
}
