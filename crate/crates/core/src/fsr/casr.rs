use serde::{Deserialize, Serialize};

use crate::bits::{mask, BitState};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum CellRule {
    #[serde(rename = "90")]
    Rule90,
    #[serde(rename = "150")]
    Rule150,
}

/// Hybrid rule-90/150 cellular automaton with null boundaries.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<CellRule>", into = "Vec<CellRule>")]
pub struct CasrRule {
    width: u8,
    rule150: u64,
}

impl TryFrom<Vec<CellRule>> for CasrRule {
    type Error = Error;
    fn try_from(cells: Vec<CellRule>) -> Result<Self> {
        CasrRule::new(&cells)
    }
}

impl From<CasrRule> for Vec<CellRule> {
    fn from(r: CasrRule) -> Self {
        r.cells()
    }
}

impl CasrRule {
    pub fn new(cells: &[CellRule]) -> Result<Self> {
        if cells.is_empty() || cells.len() > 64 {
            return Err(Error::InvalidWidth(cells.len() as u32));
        }
        let rule150 = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == CellRule::Rule150)
            .fold(0u64, |m, (i, _)| m | 1 << i);
        Ok(Self {
            width: cells.len() as u8,
            rule150,
        })
    }

    /// Bit `i` of `rule150` set means cell `i` follows rule 150.
    pub fn from_mask(width: u32, rule150: u64) -> Result<Self> {
        if width == 0 || width > 64 {
            return Err(Error::InvalidWidth(width));
        }
        if rule150 & !mask(width) != 0 {
            return Err(Error::ValueTooWide {
                width,
                value: rule150,
            });
        }
        Ok(Self {
            width: width as u8,
            rule150,
        })
    }

    pub fn width(&self) -> u32 {
        self.width as u32
    }

    pub fn rule150_mask(&self) -> u64 {
        self.rule150
    }

    pub fn cells(&self) -> Vec<CellRule> {
        (0..self.width())
            .map(|i| {
                if self.rule150 >> i & 1 == 1 {
                    CellRule::Rule150
                } else {
                    CellRule::Rule90
                }
            })
            .collect()
    }

    #[inline(always)]
    pub fn step_bits(&self, s: u64) -> u64 {
        ((s << 1) ^ (s >> 1) ^ (s & self.rule150)) & mask(self.width())
    }
}

pub fn casr_step(state: BitState, rule: &CasrRule) -> BitState {
    assert_eq!(state.width(), rule.width(), "rule vector length must equal state width");
    BitState::from_raw(rule.width(), rule.step_bits(state.bits()))
}
