use serde::{Deserialize, Serialize};

use crate::bits::{mask, BitState, STATE_BITS};
use crate::error::{Error, Result};
use crate::fsr::FeedbackSpec;

/// Which bit of one register is XORed into the next-state logic of the other.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Stage 0, the bit shifted out this cycle.
    #[default]
    DroppedBit,
    /// Stage 1. Keeps the combined 56-bit map a bijection.
    Stage1,
}

impl Coupling {
    #[inline(always)]
    fn stage(self) -> u32 {
        match self {
            Coupling::DroppedBit => 0,
            Coupling::Stage1 => 1,
        }
    }
}

/// Feedback specs and coupling of the cross-coupled register pair.
///
/// Register A occupies bits `0..width_a` of the concatenated state and
/// register B the bits above it.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(try_from = "ConfigRepr", into = "ConfigRepr")]
pub struct NlfsrConfig {
    spec_a: FeedbackSpec,
    spec_b: FeedbackSpec,
    coupling: Coupling,
}

#[derive(Serialize, Deserialize)]
struct ConfigRepr {
    spec_a: FeedbackSpec,
    spec_b: FeedbackSpec,
    #[serde(default)]
    coupling: Coupling,
}

impl TryFrom<ConfigRepr> for NlfsrConfig {
    type Error = Error;
    fn try_from(r: ConfigRepr) -> Result<Self> {
        NlfsrConfig::new(r.spec_a, r.spec_b, r.coupling)
    }
}

impl From<NlfsrConfig> for ConfigRepr {
    fn from(c: NlfsrConfig) -> Self {
        ConfigRepr {
            spec_a: c.spec_a,
            spec_b: c.spec_b,
            coupling: c.coupling,
        }
    }
}

impl NlfsrConfig {
    pub fn new(spec_a: FeedbackSpec, spec_b: FeedbackSpec, coupling: Coupling) -> Result<Self> {
        if spec_a.width() + spec_b.width() != STATE_BITS {
            return Err(Error::InvalidSpec(format!(
                "register widths {} + {} must sum to {STATE_BITS}",
                spec_a.width(),
                spec_b.width()
            )));
        }
        Ok(Self {
            spec_a,
            spec_b,
            coupling,
        })
    }

    pub fn spec_a(&self) -> &FeedbackSpec {
        &self.spec_a
    }

    pub fn spec_b(&self) -> &FeedbackSpec {
        &self.spec_b
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn with_coupling(self, coupling: Coupling) -> Self {
        Self { coupling, ..self }
    }

    #[inline(always)]
    pub fn width_a(&self) -> u32 {
        self.spec_a.width()
    }

    /// Splits a concatenated state into (A, B) raw words.
    #[inline(always)]
    pub fn split(&self, state: u64) -> (u64, u64) {
        (state & mask(self.width_a()), state >> self.width_a())
    }

    #[inline(always)]
    pub fn join(&self, a: u64, b: u64) -> u64 {
        a | (b << self.width_a())
    }

    /// One step on the concatenated 56-bit representation.
    #[inline(always)]
    pub fn step_concat(&self, state: u64) -> u64 {
        let (a, b) = self.split(state);
        let k = self.coupling.stage();
        let fa = self.spec_a.feedback(a) ^ ((b >> k) & 1);
        let fb = self.spec_b.feedback(b) ^ ((a >> k) & 1);
        let wa = self.spec_a.width();
        let wb = self.spec_b.width();
        let na = (a >> 1) | (fa << (wa - 1));
        let nb = (b >> 1) | (fb << (wb - 1));
        na | (nb << wa)
    }

    pub fn run_concat(&self, mut state: u64, cycles: u64) -> u64 {
        for _ in 0..cycles {
            state = self.step_concat(state);
        }
        state
    }

    pub fn pair(&self, state: BitState) -> NlfsrPair {
        NlfsrPair::from_concat(*self, state)
    }
}

/// The 27 + 29 bit cross-coupled NLFSR pair.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NlfsrPair {
    pub a: BitState,
    pub b: BitState,
    pub config: NlfsrConfig,
}

impl NlfsrPair {
    pub fn new(config: NlfsrConfig, a: BitState, b: BitState) -> Result<Self> {
        if a.width() != config.spec_a.width() {
            return Err(Error::WidthMismatch {
                expected: config.spec_a.width(),
                got: a.width(),
            });
        }
        if b.width() != config.spec_b.width() {
            return Err(Error::WidthMismatch {
                expected: config.spec_b.width(),
                got: b.width(),
            });
        }
        Ok(Self { a, b, config })
    }

    pub fn from_concat(config: NlfsrConfig, state: BitState) -> Self {
        assert_eq!(state.width(), STATE_BITS);
        let (a, b) = config.split(state.bits());
        Self {
            a: BitState::from_raw(config.spec_a.width(), a),
            b: BitState::from_raw(config.spec_b.width(), b),
            config,
        }
    }

    /// Bits `0..27` hold register A and bits `27..56` register B.
    pub fn concat_state(&self) -> BitState {
        BitState::from_raw(STATE_BITS, self.config.join(self.a.bits(), self.b.bits()))
    }

    pub fn step(&self) -> Self {
        Self::from_concat(
            self.config,
            BitState::from_raw(STATE_BITS, self.config.step_concat(self.concat_state().bits())),
        )
    }

    pub fn run(&self, cycles: u64) -> Self {
        let s = self.config.run_concat(self.concat_state().bits(), cycles);
        Self::from_concat(self.config, BitState::from_raw(STATE_BITS, s))
    }
}

pub fn nlfsr_step(pair: &NlfsrPair) -> NlfsrPair {
    pair.step()
}

pub fn nlfsr_run(pair: &NlfsrPair, cycles: u64) -> NlfsrPair {
    pair.run(cycles)
}

pub fn concat_state(pair: &NlfsrPair) -> BitState {
    pair.concat_state()
}
