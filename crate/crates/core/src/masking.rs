//! Two-share Boolean masking of the NLFSR pair.
//!
//! Linear parts (shifts, XOR taps, cross-coupling) act on each share
//! independently. The one AND gate per register is replaced by a
//! domain-oriented masked AND that consumes one fresh PRNG bit per cycle.
//! In hardware both AND inputs come straight from registers, so the gate
//! inputs do not glitch; that property has no software counterpart here.

use crate::bits::{BitState, STATE_BITS};
use crate::fsr::NlfsrConfig;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct SharePair {
    pub s1: bool,
    pub s2: bool,
}

impl SharePair {
    pub fn new(s1: bool, s2: bool) -> Self {
        Self { s1, s2 }
    }

    pub fn value(&self) -> bool {
        self.s1 ^ self.s2
    }
}

/// Domain-oriented masked AND with one fresh bit `r`.
///
/// `r` enters both cross-domain terms, so it refreshes both output shares.
#[inline(always)]
pub fn dom_and(a: SharePair, b: SharePair, r: bool) -> SharePair {
    SharePair {
        s1: (a.s1 & b.s1) ^ ((a.s1 & b.s2) ^ r),
        s2: (a.s2 & b.s2) ^ ((a.s2 & b.s1) ^ r),
    }
}

/// Operand of a masked XOR-load.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LoadOperand {
    /// Public value, XORed into share 1 only (its second share is zero).
    Share1(BitState),
    /// Two-share value, XORed share-wise.
    Both(BitState, BitState),
}

/// Masked NLFSR pair: two 56-bit shares whose XOR is the logical state.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MaskedState {
    pub share1: BitState,
    pub share2: BitState,
    pub config: NlfsrConfig,
}

/// `share1 = value ^ randomness`, `share2 = randomness`.
pub fn mask(config: NlfsrConfig, value: BitState, randomness: BitState) -> MaskedState {
    MaskedState {
        share1: value ^ randomness,
        share2: randomness,
        config,
    }
}

impl MaskedState {
    /// Number of state register bits, twice the unmasked design.
    pub const REGISTER_BITS: u32 = 2 * STATE_BITS;

    /// Recombines the shares. Evaluation flows only call this once warm-up
    /// is over; the XOR is gated before that.
    pub fn unmask(&self) -> BitState {
        self.share1 ^ self.share2
    }

    pub fn xor_load(&self, operand: LoadOperand) -> Self {
        match operand {
            LoadOperand::Share1(v) => Self {
                share1: self.share1 ^ v,
                ..*self
            },
            LoadOperand::Both(v1, v2) => Self {
                share1: self.share1 ^ v1,
                share2: self.share2 ^ v2,
                ..*self
            },
        }
    }

    /// One masked cycle; `r1` refreshes register A's AND gate, `r2` register B's.
    #[inline]
    pub fn step(&self, r1: bool, r2: bool) -> Self {
        let (s1, s2) = step_shares(&self.config, self.share1.bits(), self.share2.bits(), r1, r2);
        Self {
            share1: BitState::from_raw(STATE_BITS, s1),
            share2: BitState::from_raw(STATE_BITS, s2),
            config: self.config,
        }
    }
}

#[inline(always)]
fn bit(x: u64, i: u32) -> bool {
    (x >> i) & 1 == 1
}

#[inline(always)]
pub(crate) fn step_shares(cfg: &NlfsrConfig, x1: u64, x2: u64, r1: bool, r2: bool) -> (u64, u64) {
    let (a1, b1) = cfg.split(x1);
    let (a2, b2) = cfg.split(x2);
    let k = match cfg.coupling() {
        crate::fsr::Coupling::DroppedBit => 0,
        crate::fsr::Coupling::Stage1 => 1,
    };
    let and_share = |spec: &crate::fsr::FeedbackSpec, u1: u64, u2: u64, r: bool| match spec
        .quadratic_tap()
    {
        Some((c, d)) => dom_and(
            SharePair::new(bit(u1, c), bit(u2, c)),
            SharePair::new(bit(u1, d), bit(u2, d)),
            r,
        ),
        None => SharePair::default(),
    };
    let sa = cfg.spec_a();
    let sb = cfg.spec_b();
    let qa = and_share(sa, a1, a2, r1);
    let qb = and_share(sb, b1, b2, r2);

    let fa1 = sa.linear_feedback(a1) ^ qa.s1 as u64 ^ ((b1 >> k) & 1);
    let fa2 = sa.linear_feedback(a2) ^ qa.s2 as u64 ^ ((b2 >> k) & 1);
    let fb1 = sb.linear_feedback(b1) ^ qb.s1 as u64 ^ ((a1 >> k) & 1);
    let fb2 = sb.linear_feedback(b2) ^ qb.s2 as u64 ^ ((a2 >> k) & 1);

    let wa = sa.width();
    let wb = sb.width();
    let na1 = (a1 >> 1) | (fa1 << (wa - 1));
    let na2 = (a2 >> 1) | (fa2 << (wa - 1));
    let nb1 = (b1 >> 1) | (fb1 << (wb - 1));
    let nb2 = (b2 >> 1) | (fb2 << (wb - 1));
    (cfg.join(na1, nb1), cfg.join(na2, nb2))
}

pub fn unmask(m: &MaskedState) -> BitState {
    m.unmask()
}

pub fn masked_nlfsr_step(m: &MaskedState, r1: bool, r2: bool) -> MaskedState {
    m.step(r1, r2)
}

pub fn masked_xor_load(m: &MaskedState, operand: LoadOperand) -> MaskedState {
    m.xor_load(operand)
}

/// Two hex words per line: share 1, share 2.
pub fn golden_dump(states: &[MaskedState]) -> String {
    states
        .iter()
        .map(|m| format!("{} {}\n", m.share1.to_hex(), m.share2.to_hex()))
        .collect()
}
