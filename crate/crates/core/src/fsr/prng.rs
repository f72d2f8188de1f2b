use serde::{Deserialize, Serialize};

use crate::bits::BitState;
use crate::error::{Error, Result};
use crate::fsr::{CasrRule, FeedbackSpec};

/// Static description of the LFSR + CASR generator.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct PrngConfig {
    pub lfsr_spec: FeedbackSpec,
    pub casr_rule: CasrRule,
    /// `(lfsr stage, casr stage)` per output. Output 0 and 1 feed the masked
    /// AND gates of registers A and B; output 2 is the serial utility stream.
    pub output_taps: [(u32, u32); 3],
}

impl PrngConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lfsr_spec.is_linear() {
            return Err(Error::InvalidSpec("PRNG LFSR must be linear".into()));
        }
        for (l, c) in self.output_taps {
            if l >= self.lfsr_spec.width() || c >= self.casr_rule.width() {
                return Err(Error::InvalidSpec(format!("PRNG output tap ({l}, {c}) out of range")));
            }
        }
        Ok(())
    }

    pub fn seed_bits(&self) -> usize {
        (self.lfsr_spec.width() + self.casr_rule.width()) as usize
    }
}

/// PRNG state: an LFSR and a CASR stepped together; each output bit is the XOR
/// of one LFSR stage and one CASR stage.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Prng {
    lfsr: BitState,
    casr: BitState,
    config: PrngConfig,
}

impl Prng {
    pub fn new(config: PrngConfig, lfsr: BitState, casr: BitState) -> Result<Self> {
        config.validate()?;
        if lfsr.width() != config.lfsr_spec.width() {
            return Err(Error::WidthMismatch {
                expected: config.lfsr_spec.width(),
                got: lfsr.width(),
            });
        }
        if casr.width() != config.casr_rule.width() {
            return Err(Error::WidthMismatch {
                expected: config.casr_rule.width(),
                got: casr.width(),
            });
        }
        if lfsr.is_zero() {
            return Err(Error::DegenerateSeed("LFSR"));
        }
        if casr.is_zero() {
            return Err(Error::DegenerateSeed("CASR"));
        }
        Ok(Self { lfsr, casr, config })
    }

    /// Serial seeding: the first `lfsr width` bits fill the LFSR (bit k to
    /// stage k), the remaining bits fill the CASR.
    pub fn seed(config: PrngConfig, bits: &[bool]) -> Result<Self> {
        config.validate()?;
        let wl = config.lfsr_spec.width() as usize;
        if bits.len() != config.seed_bits() {
            return Err(Error::InvalidParameter {
                field: "seed_bits",
                reason: format!("expected {} bits, got {}", config.seed_bits(), bits.len()),
            });
        }
        let pack = |bs: &[bool]| bs.iter().rev().fold(0u64, |acc, &b| (acc << 1) | b as u64);
        let lfsr = BitState::from_raw(wl as u32, pack(&bits[..wl]));
        let casr = BitState::from_raw(config.casr_rule.width(), pack(&bits[wl..]));
        Self::new(config, lfsr, casr)
    }

    pub fn lfsr(&self) -> BitState {
        self.lfsr
    }

    pub fn casr(&self) -> BitState {
        self.casr
    }

    pub fn config(&self) -> &PrngConfig {
        &self.config
    }

    #[inline]
    fn outputs(&self) -> [bool; 3] {
        let l = self.lfsr.bits();
        let c = self.casr.bits();
        self.config
            .output_taps
            .map(|(i, j)| ((l >> i) ^ (c >> j)) & 1 == 1)
    }

    /// Steps both registers once and returns the outputs of the new state.
    #[inline]
    pub fn step(&mut self) -> [bool; 3] {
        self.lfsr = BitState::from_raw(
            self.lfsr.width(),
            self.config.lfsr_spec.step_bits(self.lfsr.bits()),
        );
        self.casr = BitState::from_raw(
            self.casr.width(),
            self.config.casr_rule.step_bits(self.casr.bits()),
        );
        self.outputs()
    }
}

/// Value-style wrapper around [`Prng::step`].
pub fn prng_step(p: &Prng) -> ([bool; 3], Prng) {
    let mut next = *p;
    let out = next.step();
    (out, next)
}

pub fn prng_seed(config: PrngConfig, bits: &[bool]) -> Result<Prng> {
    Prng::seed(config, bits)
}

/// Conditional clock divider driven by one stage of the PRNG's LFSR.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ClockRandomizer {
    pub enabled: bool,
    /// LFSR stage whose value 1 skips the clock edge.
    pub skip_stage: u32,
}

impl ClockRandomizer {
    pub fn new(enabled: bool, skip_stage: u32) -> Self {
        Self {
            enabled,
            skip_stage,
        }
    }

    /// Whether the consumer advances on this reference cycle.
    #[inline]
    pub fn tick(&self, lfsr: BitState) -> bool {
        !self.enabled || !lfsr.bit(self.skip_stage)
    }

    /// Enable pattern over `cycles` reference cycles; the PRNG advances once per cycle.
    pub fn pattern(&self, prng: &mut Prng, cycles: usize) -> Vec<bool> {
        (0..cycles)
            .map(|_| {
                let e = self.tick(prng.lfsr());
                prng.step();
                e
            })
            .collect()
    }
}

/// Advances the clock and its PRNG by one reference cycle.
pub fn clock_tick(c: &ClockRandomizer, prng: &Prng) -> (bool, Prng) {
    let enabled = c.tick(prng.lfsr());
    let (_, next) = prng_step(prng);
    (enabled, next)
}

/// Exact period of the three-bit output stream.
///
/// Walks both registers to get the combined state period, then returns the
/// smallest divisor `d` of it for which the output sequence is `d`-periodic.
pub fn output_stream_period(prng: &Prng) -> u64 {
    let orbit = |mut s: u64, f: &dyn Fn(u64) -> u64| {
        let start = s;
        let mut n = 0u64;
        loop {
            s = f(s);
            n += 1;
            if s == start {
                return n;
            }
        }
    };
    let spec = prng.config.lfsr_spec;
    let rule = prng.config.casr_rule;
    let pl = orbit(prng.lfsr.bits(), &|s| spec.step_bits(s));
    let pc = orbit(prng.casr.bits(), &|s| rule.step_bits(s));
    let state_period = lcm(pl, pc);

    let mut p = *prng;
    let stream: Vec<u8> = (0..state_period)
        .map(|_| {
            let o = p.step();
            o[0] as u8 | (o[1] as u8) << 1 | (o[2] as u8) << 2
        })
        .collect();
    let n = stream.len();
    let mut divisors: Vec<u64> = (1..=state_period)
        .take_while(|d| d * d <= state_period)
        .filter(|d| state_period.is_multiple_of(*d))
        .flat_map(|d| [d, state_period / d])
        .collect();
    divisors.sort_unstable();
    divisors.dedup();
    for d in divisors {
        let d = d as usize;
        if (0..n).all(|t| stream[t] == stream[(t + d) % n]) {
            return d as u64;
        }
    }
    state_period
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}
