use serde::{Deserialize, Serialize};

use crate::bits::BitState;
use crate::error::{Error, Result};

/// Fibonacci feedback of the form `x0 ^ (linear taps) ^ (optional x_c & x_d)`.
///
/// The register shifts towards stage 0 and the feedback bit enters the top
/// stage. Stage 0 is always a linear tap, so the standalone step is a
/// bijection on the state space.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct FeedbackSpec {
    width: u8,
    linear_mask: u64,
    quadratic: Option<(u8, u8)>,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    width: u32,
    linear_taps: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quadratic_tap: Option<[u32; 2]>,
}

impl TryFrom<SpecRepr> for FeedbackSpec {
    type Error = Error;

    fn try_from(r: SpecRepr) -> Result<Self> {
        FeedbackSpec::build(r.width, &r.linear_taps, r.quadratic_tap.map(|[c, d]| (c, d)))
    }
}

impl From<FeedbackSpec> for SpecRepr {
    fn from(s: FeedbackSpec) -> Self {
        SpecRepr {
            width: s.width(),
            linear_taps: s.linear_taps(),
            quadratic_tap: s.quadratic_tap().map(|(c, d)| [c, d]),
        }
    }
}

impl FeedbackSpec {
    pub fn linear(width: u32, taps: &[u32]) -> Result<Self> {
        Self::build(width, taps, None)
    }

    pub fn nonlinear(width: u32, taps: &[u32], quadratic: (u32, u32)) -> Result<Self> {
        Self::build(width, taps, Some(quadratic))
    }

    fn build(width: u32, taps: &[u32], quadratic: Option<(u32, u32)>) -> Result<Self> {
        if !(2..=64).contains(&width) {
            return Err(Error::InvalidSpec(format!("width {width} outside 2..=64")));
        }
        let mut linear_mask = 0u64;
        for &t in taps {
            if t >= width {
                return Err(Error::InvalidSpec(format!("tap {t} >= width {width}")));
            }
            if linear_mask & (1 << t) != 0 {
                return Err(Error::InvalidSpec(format!("duplicate tap {t}")));
            }
            linear_mask |= 1 << t;
        }
        if linear_mask & 1 == 0 {
            return Err(Error::InvalidSpec("stage 0 must be a linear tap".into()));
        }
        let quadratic = match quadratic {
            None => None,
            Some((c, d)) => {
                if c == d {
                    return Err(Error::InvalidSpec(format!("quadratic tap ({c}, {d}) is linear")));
                }
                if c == 0 || d == 0 {
                    return Err(Error::InvalidSpec(
                        "quadratic tap may not include stage 0".into(),
                    ));
                }
                if c >= width || d >= width {
                    return Err(Error::InvalidSpec(format!(
                        "quadratic tap ({c}, {d}) out of range for width {width}"
                    )));
                }
                Some((c.min(d) as u8, c.max(d) as u8))
            }
        };
        Ok(Self {
            width: width as u8,
            linear_mask,
            quadratic,
        })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width as u32
    }

    pub fn linear_taps(&self) -> Vec<u32> {
        (0..self.width()).filter(|i| self.linear_mask >> i & 1 == 1).collect()
    }

    #[inline]
    pub fn linear_mask(&self) -> u64 {
        self.linear_mask
    }

    pub fn quadratic_tap(&self) -> Option<(u32, u32)> {
        self.quadratic.map(|(c, d)| (c as u32, d as u32))
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic.is_none()
    }

    /// Number of terms in the algebraic normal form, counting `x0`.
    pub fn term_count(&self) -> u32 {
        self.linear_mask.count_ones() + self.quadratic.is_some() as u32
    }

    /// Feedback bit (0 or 1) for a raw state.
    #[inline(always)]
    pub fn feedback(&self, bits: u64) -> u64 {
        let mut f = parity(bits & self.linear_mask);
        if let Some((c, d)) = self.quadratic {
            f ^= (bits >> c) & (bits >> d) & 1;
        }
        f
    }

    /// Linear part only, including `x0`.
    #[inline(always)]
    pub fn linear_feedback(&self, bits: u64) -> u64 {
        parity(bits & self.linear_mask)
    }

    #[inline(always)]
    pub fn step_bits(&self, bits: u64) -> u64 {
        (bits >> 1) | (self.feedback(bits) << (self.width - 1))
    }

    pub fn step(&self, state: BitState) -> BitState {
        assert_eq!(state.width(), self.width(), "state width does not match spec");
        BitState::from_raw(self.width(), self.step_bits(state.bits()))
    }
}

#[inline(always)]
pub(crate) fn parity(mut x: u64) -> u64 {
    x ^= x >> 32;
    x ^= x >> 16;
    x ^= x >> 8;
    x ^= x >> 4;
    x ^= x >> 2;
    x ^= x >> 1;
    x & 1
}

/// One Fibonacci LFSR step; `spec` must be purely linear.
pub fn lfsr_step(state: BitState, spec: &FeedbackSpec) -> BitState {
    assert!(spec.is_linear(), "lfsr_step requires a linear spec");
    spec.step(state)
}
