//! Fixed-width bit vectors used for register states, challenges and keys.

use std::fmt;
use std::ops::BitXor;

use rand::Rng;

use crate::error::{Error, Result};

/// Width of the concatenated NLFSR state, the external challenge and the key.
pub const STATE_BITS: u32 = 56;

/// A bit vector of 1..=64 bits. Bit 0 is stage 0 (least significant).
///
/// Bits at or above `width` are always zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitState {
    width: u8,
    bits: u64,
}

#[inline]
pub(crate) const fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

impl BitState {
    pub fn new(width: u32, bits: u64) -> Result<Self> {
        if width == 0 || width > 64 {
            return Err(Error::InvalidWidth(width));
        }
        if bits & !mask(width) != 0 {
            return Err(Error::ValueTooWide { width, value: bits });
        }
        Ok(Self {
            width: width as u8,
            bits,
        })
    }

    /// Builds a state from the low `width` bits of `bits`, discarding the rest.
    pub fn truncated(width: u32, bits: u64) -> Result<Self> {
        if width == 0 || width > 64 {
            return Err(Error::InvalidWidth(width));
        }
        Ok(Self {
            width: width as u8,
            bits: bits & mask(width),
        })
    }

    /// Internal constructor for callers that already hold a masked value.
    #[inline]
    pub(crate) const fn from_raw(width: u32, bits: u64) -> Self {
        Self {
            width: width as u8,
            bits: bits & mask(width),
        }
    }

    pub fn zero(width: u32) -> Result<Self> {
        Self::new(width, 0)
    }

    pub fn ones(width: u32) -> Result<Self> {
        Self::new(width, mask(width))
    }

    pub fn random<R: Rng + ?Sized>(width: u32, rng: &mut R) -> Result<Self> {
        Self::truncated(width, rng.random::<u64>())
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width as u32
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn bit(&self, index: u32) -> bool {
        debug_assert!(index < self.width());
        (self.bits >> index) & 1 == 1
    }

    pub fn with_bit(self, index: u32, value: bool) -> Self {
        assert!(index < self.width(), "bit {index} out of range");
        let bits = (self.bits & !(1 << index)) | ((value as u64) << index);
        Self { bits, ..self }
    }

    pub fn flip(self, index: u32) -> Self {
        assert!(index < self.width(), "bit {index} out of range");
        Self {
            bits: self.bits ^ (1 << index),
            ..self
        }
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn hamming_distance(&self, other: &Self) -> u32 {
        (self.bits ^ other.bits).count_ones()
    }

    /// Lowercase hex, zero-padded to `ceil(width / 4)` digits.
    pub fn to_hex(&self) -> String {
        let digits = (self.width() as usize).div_ceil(4);
        format!("{:0digits$x}", self.bits)
    }

    pub fn from_hex(width: u32, text: &str) -> Result<Self> {
        let trimmed = text.trim();
        let trimmed = trimmed
            .strip_prefix("0x")
            .or_else(|| trimmed.strip_prefix("0X"))
            .unwrap_or(trimmed);
        let bits = u64::from_str_radix(trimmed, 16)
            .map_err(|e| Error::Parse(format!("bad hex `{text}`: {e}")))?;
        Self::new(width, bits)
    }

    pub fn iter_bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.width()).map(move |i| self.bit(i))
    }

    pub fn checked_xor(self, other: Self) -> Result<Self> {
        if self.width != other.width {
            return Err(Error::WidthMismatch {
                expected: self.width(),
                got: other.width(),
            });
        }
        Ok(Self {
            bits: self.bits ^ other.bits,
            ..self
        })
    }
}

impl BitXor for BitState {
    type Output = BitState;

    /// Panics when widths differ; use [`BitState::checked_xor`] for untrusted input.
    fn bitxor(self, rhs: Self) -> Self {
        assert_eq!(self.width, rhs.width, "xor of states with different widths");
        Self {
            bits: self.bits ^ rhs.bits,
            ..self
        }
    }
}

impl fmt::Debug for BitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitState<{}>({})", self.width, self.to_hex())
    }
}

impl fmt::Display for BitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Parses a 56-bit value given as hex.
pub fn state56_from_hex(text: &str) -> Result<BitState> {
    BitState::from_hex(STATE_BITS, text)
}

/// Serde adapter storing a 56-bit state as a 14-digit hex string.
pub mod serde_hex56 {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::BitState;

    pub fn serialize<S: Serializer>(v: &BitState, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_hex())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BitState, D::Error> {
        let text = String::deserialize(d)?;
        super::state56_from_hex(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_bits() {
        assert!(BitState::new(8, 0x100).is_err());
        assert!(BitState::new(0, 0).is_err());
        assert!(BitState::new(65, 0).is_err());
        assert_eq!(BitState::new(64, u64::MAX).unwrap().count_ones(), 64);
    }

    #[test]
    fn truncation_clears_high_bits() {
        let s = BitState::truncated(27, u64::MAX).unwrap();
        assert_eq!(s.bits(), (1 << 27) - 1);
    }

    #[test]
    fn hex_is_fourteen_digits_for_56_bits() {
        let s = BitState::new(56, 0xab).unwrap();
        assert_eq!(s.to_hex(), "000000000000ab");
        assert_eq!(state56_from_hex("000000000000ab").unwrap(), s);
        assert_eq!(state56_from_hex("0xAB").unwrap(), s);
        assert!(state56_from_hex("1ffffffffffffff").is_err());
    }

    #[test]
    fn bit_access() {
        let s = BitState::zero(8).unwrap().with_bit(3, true);
        assert!(s.bit(3));
        assert_eq!(s.flip(3), BitState::zero(8).unwrap());
    }

    #[test]
    #[should_panic]
    fn xor_width_mismatch_panics() {
        let _ = BitState::zero(8).unwrap() ^ BitState::zero(9).unwrap();
    }
}
