use std::collections::HashSet;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{BitState, STATE_BITS};
use crate::error::{invalid, Result};
use crate::fsr::{FeedbackSpec, NlfsrConfig};
use crate::protocol::{obfuscate_with, Schedule};

const N: usize = STATE_BITS as usize;

/// Feedback taps of the 56-bit linear control register.
pub const CONTROL_LFSR_TAPS: [u32; 4] = [0, 34, 35, 55];

pub fn control_lfsr_spec() -> FeedbackSpec {
    FeedbackSpec::linear(STATE_BITS, &CONTROL_LFSR_TAPS).expect("valid control taps")
}

/// Keyed obfuscation map under test.
pub trait Obfuscator: Sync {
    fn apply(&self, key: BitState, challenge: BitState) -> BitState;
}

impl<F> Obfuscator for F
where
    F: Fn(BitState, BitState) -> BitState + Sync,
{
    fn apply(&self, key: BitState, challenge: BitState) -> BitState {
        self(key, challenge)
    }
}

/// The NLFSR pair: first obfuscated challenge after warm-up and one flush.
#[derive(Clone, Copy, Debug)]
pub struct NlfsrObfuscator {
    pub config: NlfsrConfig,
    pub schedule: Schedule,
}

impl Obfuscator for NlfsrObfuscator {
    fn apply(&self, key: BitState, challenge: BitState) -> BitState {
        obfuscate_with(&self.config, self.schedule, key, challenge, 1)[0]
    }
}

/// A single 56-bit LFSR run for the same number of cycles.
#[derive(Clone, Copy, Debug)]
pub struct LfsrObfuscator {
    pub spec: FeedbackSpec,
    pub cycles: u32,
}

impl LfsrObfuscator {
    pub fn control(schedule: Schedule) -> Self {
        Self {
            spec: control_lfsr_spec(),
            cycles: schedule.warmup + schedule.flush,
        }
    }
}

impl Obfuscator for LfsrObfuscator {
    fn apply(&self, key: BitState, challenge: BitState) -> BitState {
        let mut s = (key ^ challenge).bits();
        for _ in 0..self.cycles {
            s = self.spec.step_bits(s);
        }
        BitState::truncated(STATE_BITS, s).expect("56-bit width")
    }
}

/// Flip probabilities: row `r` belongs to input bit `toggle_bits[r]`,
/// column `j` to output bit `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvalancheReport {
    pub toggle_bits: Vec<u32>,
    pub probabilities: Vec<Vec<f64>>,
    pub n_pairs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvalancheSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub n_pairs: usize,
    pub rows: usize,
}

impl AvalancheReport {
    fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.probabilities.iter().flatten().copied()
    }

    pub fn summary(&self) -> AvalancheSummary {
        let (mut min, mut max, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for v in self.entries() {
            min = min.min(v);
            max = max.max(v);
            sum += v;
            n += 1;
        }
        AvalancheSummary {
            min,
            max,
            mean: sum / n as f64,
            n_pairs: self.n_pairs,
            rows: self.probabilities.len(),
        }
    }

    pub fn all_within(&self, lo: f64, hi: f64) -> bool {
        self.entries().all(|v| (lo..=hi).contains(&v))
    }

    /// Every entry is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.entries().all(|v| v == 0.0 || v == 1.0)
    }

    /// Entries outside `[lo, hi]` as `(input bit, output bit, probability)`.
    pub fn outliers(&self, lo: f64, hi: f64) -> Vec<(u32, usize, f64)> {
        let mut out = Vec::new();
        for (r, row) in self.probabilities.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(lo..=hi).contains(&v) {
                    out.push((self.toggle_bits[r], j, v));
                }
            }
        }
        out
    }

    /// One CSV line per toggled input bit, 56 columns each, no header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for row in &self.probabilities {
            w.write_record(row.iter().map(|v| format!("{v:.6}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `n` distinct uniform 56-bit challenges.
pub fn unique_challenges(n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<BitState>> {
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let c = BitState::random(STATE_BITS, rng)?;
        if seen.insert(c.bits()) {
            out.push(c);
        }
    }
    Ok(out)
}

/// Tallies output-bit flips between `f(key, c)` and `f(key, c ^ e_i)` for
/// `n_challenges` distinct random challenges and every `i` in `toggle_bits`.
/// The key is drawn once from `seed`.
pub fn avalanche_test<O: Obfuscator + ?Sized>(
    obfuscator: &O,
    n_challenges: usize,
    toggle_bits: &[u32],
    seed: u64,
) -> Result<AvalancheReport> {
    if n_challenges < 1000 {
        return Err(invalid("n_challenges", "at least 1000 pairs per input bit"));
    }
    if toggle_bits.is_empty() || toggle_bits.iter().any(|&b| b >= STATE_BITS) {
        return Err(invalid("toggle_bits", "indices must lie in 0..56"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key = BitState::random(STATE_BITS, &mut rng)?;
    let challenges = unique_challenges(n_challenges, &mut rng)?;

    let rows = toggle_bits.len();
    let counts = challenges
        .par_iter()
        .fold(
            || vec![0u32; rows * N],
            |mut acc, &c| {
                let base = obfuscator.apply(key, c).bits();
                for (r, &i) in toggle_bits.iter().enumerate() {
                    let mut d = base ^ obfuscator.apply(key, c.flip(i)).bits();
                    while d != 0 {
                        let j = d.trailing_zeros() as usize;
                        acc[r * N + j] += 1;
                        d &= d - 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u32; rows * N],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let probabilities = counts
        .chunks_exact(N)
        .map(|row| row.iter().map(|&k| k as f64 / n_challenges as f64).collect())
        .collect();
    Ok(AvalancheReport {
        toggle_bits: toggle_bits.to_vec(),
        probabilities,
        n_pairs: n_challenges,
    })
}

pub fn all_input_bits() -> Vec<u32> {
    (0..STATE_BITS).collect()
}
