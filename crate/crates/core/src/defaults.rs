//! Shipped register configuration.

use crate::fsr::{CasrRule, ClockRandomizer, Coupling, FeedbackSpec, NlfsrConfig, PrngConfig};

pub fn nlfsr_spec_a() -> FeedbackSpec {
    FeedbackSpec::nonlinear(27, &[0, 19, 25], (4, 20)).unwrap()
}

pub fn nlfsr_spec_b() -> FeedbackSpec {
    FeedbackSpec::nonlinear(29, &[0, 1, 4], (8, 17)).unwrap()
}

pub fn nlfsr_config() -> NlfsrConfig {
    NlfsrConfig::new(nlfsr_spec_a(), nlfsr_spec_b(), Coupling::DroppedBit).unwrap()
}

pub fn prng_lfsr_spec() -> FeedbackSpec {
    FeedbackSpec::linear(8, &[0, 2, 3, 4]).unwrap()
}

pub fn casr_rule() -> CasrRule {
    CasrRule::from_mask(11, 0b1).unwrap()
}

pub fn prng_config() -> PrngConfig {
    PrngConfig {
        lfsr_spec: prng_lfsr_spec(),
        casr_rule: casr_rule(),
        output_taps: [(1, 2), (3, 5), (6, 9)],
    }
}

pub fn clock_randomizer(enabled: bool) -> ClockRandomizer {
    ClockRandomizer::new(enabled, 0)
}
