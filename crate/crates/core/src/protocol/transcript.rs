use serde::{Deserialize, Serialize};

use crate::bits::BitState;

/// Register banks that can appear in a transcript.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bank {
    /// Unmasked 56-bit NLFSR state.
    Nlfsr,
    Share1,
    Share2,
    /// Output of the gated share-recombining XOR.
    Unmask,
    PrngLfsr,
    PrngCasr,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PrngSeed,
    ShareSeed,
    KeyLoad,
    Misalign,
    ChallengeLoad,
    Warmup,
    Flush,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct RegisterWrite {
    pub bank: Bank,
    pub old: u64,
    pub new: u64,
}

impl RegisterWrite {
    pub fn hamming_distance(&self) -> u32 {
        (self.old ^ self.new).count_ones()
    }

    pub fn hamming_weight(&self) -> u32 {
        self.new.count_ones()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
struct CycleSlot {
    ref_cycle: u64,
    phase: Phase,
    first: u32,
    len: u8,
}

/// One entry per enabled cycle.
#[derive(Clone, Copy, Debug)]
pub struct CycleRecord<'a> {
    /// Reference-clock timestamp.
    pub ref_cycle: u64,
    pub phase: Phase,
    pub writes: &'a [RegisterWrite],
}

/// Register writes of one evaluation run, in clock order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalTranscript {
    slots: Vec<CycleSlot>,
    writes: Vec<RegisterWrite>,
    /// Reference cycles elapsed, including skipped ones.
    pub ref_cycles: u64,
    pub responses: Vec<bool>,
    /// Challenge presented to the PUF for each response.
    pub puf_challenges: Vec<BitState>,
}

impl EvalTranscript {
    pub(crate) fn with_capacity(cycles: usize) -> Self {
        Self {
            slots: Vec::with_capacity(cycles),
            writes: Vec::with_capacity(cycles * 2),
            ..Default::default()
        }
    }

    pub(crate) fn begin_cycle(&mut self, ref_cycle: u64, phase: Phase) {
        self.slots.push(CycleSlot {
            ref_cycle,
            phase,
            first: self.writes.len() as u32,
            len: 0,
        });
    }

    pub(crate) fn write(&mut self, bank: Bank, old: u64, new: u64) {
        let slot = self.slots.last_mut().expect("write outside a cycle");
        slot.len += 1;
        self.writes.push(RegisterWrite { bank, old, new });
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn cycles(&self) -> impl Iterator<Item = CycleRecord<'_>> + '_ {
        self.slots.iter().map(move |s| CycleRecord {
            ref_cycle: s.ref_cycle,
            phase: s.phase,
            writes: &self.writes[s.first as usize..s.first as usize + s.len as usize],
        })
    }

    pub fn cycle(&self, index: usize) -> CycleRecord<'_> {
        let s = &self.slots[index];
        CycleRecord {
            ref_cycle: s.ref_cycle,
            phase: s.phase,
            writes: &self.writes[s.first as usize..s.first as usize + s.len as usize],
        }
    }

    pub fn all_writes(&self) -> &[RegisterWrite] {
        &self.writes
    }

    pub fn count_phase(&self, phase: Phase) -> usize {
        self.slots.iter().filter(|s| s.phase == phase).count()
    }

    /// Reference cycle of the first enabled cycle in `phase`.
    pub fn first_ref_cycle(&self, phase: Phase) -> Option<u64> {
        self.slots.iter().find(|s| s.phase == phase).map(|s| s.ref_cycle)
    }
}
