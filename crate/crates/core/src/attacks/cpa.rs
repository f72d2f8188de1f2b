use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{BitState, STATE_BITS};
use crate::error::{Error, Result};
use crate::leakage::TraceSet;
use crate::stats::{correlation_from_sums, correlation_null_threshold};

/// Which samples enter the correlation.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpaTarget {
    /// The samples that covered the challenge-load cycle in the campaign.
    LoadCycle,
    #[default]
    FullTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkResult {
    /// Key bits `offset..offset + chunk_bits`.
    pub offset: u32,
    pub best_hypothesis: u64,
    /// Highest correlation reached by the best hypothesis.
    pub peak: f64,
    /// Sample index of that peak.
    pub peak_sample: usize,
    /// 1-based rank of the true chunk value, when the key is known.
    pub true_rank: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpaResult {
    #[serde(with = "crate::bits::serde_hex56")]
    pub recovered_key: BitState,
    pub chunk_bits: u32,
    pub chunks: Vec<ChunkResult>,
    pub n_traces: usize,
    pub samples_used: usize,
    /// Bonferroni-corrected 99.9% null threshold over all hypotheses and samples.
    pub null_threshold: f64,
}

impl CpaResult {
    pub fn peaks(&self) -> Vec<f64> {
        self.chunks.iter().map(|c| c.peak).collect()
    }

    pub fn true_ranks(&self) -> Option<Vec<u32>> {
        self.chunks.iter().map(|c| c.true_rank).collect()
    }

    pub fn mean_true_rank(&self) -> Option<f64> {
        let r = self.true_ranks()?;
        Some(r.iter().map(|&v| v as f64).sum::<f64>() / r.len() as f64)
    }

    pub fn full_recovery(&self) -> bool {
        self.true_ranks().is_some_and(|r| r.iter().all(|&v| v == 1))
    }
}

/// First-order CPA under a Hamming-weight model of `key_chunk ^ challenge_chunk`.
///
/// Hypotheses are ranked by their largest signed correlation over the chosen
/// samples. The sign matters: a hypothesis and its bitwise complement predict
/// mirrored leakage, so their absolute correlations coincide.
///
/// `true_key`, when given, is only used to report ranks.
pub fn cpa_attack(
    traces: &TraceSet,
    chunk_bits: u32,
    target: CpaTarget,
    true_key: Option<BitState>,
) -> Result<CpaResult> {
    if chunk_bits == 0 || chunk_bits > 16 || !STATE_BITS.is_multiple_of(chunk_bits) {
        return Err(Error::ChunkMismatch(chunk_bits));
    }
    let (lo, hi) = match target {
        CpaTarget::FullTrace => (0, traces.n_samples()),
        CpaTarget::LoadCycle => traces.meta.load_window.ok_or_else(|| {
            Error::InvalidParameter {
                field: "target",
                reason: "trace set records no load window".into(),
            }
        })?,
    };
    let width = hi - lo;
    let n = traces.n_traces();
    let classes = 1usize << chunk_bits;
    let n_chunks = STATE_BITS / chunk_bits;
    let chunk_mask = (1u64 << chunk_bits) - 1;

    // Per-sample moments shared by all hypotheses.
    let mut sx = vec![0f64; width];
    let mut sxx = vec![0f64; width];
    for row in traces.rows() {
        for (t, &v) in row[lo..hi].iter().enumerate() {
            let v = v as f64;
            sx[t] += v;
            sxx[t] += v * v;
        }
    }

    let weights: Vec<f64> = (0..classes).map(|v| (v as u32).count_ones() as f64).collect();

    let chunks: Vec<ChunkResult> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let offset = chunk * chunk_bits;
            // Sums of the samples grouped by the challenge chunk value.
            let mut count = vec![0f64; classes];
            let mut class_sum = vec![0f64; classes * width];
            for (row, c) in traces.rows().zip(&traces.challenges) {
                let v = ((c.bits() >> offset) & chunk_mask) as usize;
                count[v] += 1.0;
                let dst = &mut class_sum[v * width..(v + 1) * width];
                for (d, &x) in dst.iter_mut().zip(&row[lo..hi]) {
                    *d += x as f64;
                }
            }

            let mut best = Vec::with_capacity(classes);
            let mut sxy = vec![0f64; width];
            for h in 0..classes {
                let (mut sy, mut syy) = (0.0, 0.0);
                sxy.fill(0.0);
                for v in 0..classes {
                    if count[v] == 0.0 {
                        continue;
                    }
                    let p = weights[h ^ v];
                    sy += count[v] * p;
                    syy += count[v] * p * p;
                    if p != 0.0 {
                        let src = &class_sum[v * width..(v + 1) * width];
                        for (a, &s) in sxy.iter_mut().zip(src) {
                            *a += p * s;
                        }
                    }
                }
                let (mut peak, mut at) = (f64::NEG_INFINITY, 0);
                for t in 0..width {
                    let r = correlation_from_sums(n as f64, sx[t], sy, sxx[t], syy, sxy[t]);
                    if r > peak {
                        peak = r;
                        at = t;
                    }
                }
                best.push((peak, at));
            }

            let (best_h, &(peak, at)) = best
                .iter()
                .enumerate()
                .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(b.0.cmp(&a.0)))
                .expect("at least one hypothesis");
            let true_rank = true_key.map(|k| {
                let kv = ((k.bits() >> offset) & chunk_mask) as usize;
                let score = best[kv].0;
                1 + best
                    .iter()
                    .enumerate()
                    .filter(|&(h, &(s, _))| s > score || (s == score && h < kv))
                    .count() as u32
            });
            ChunkResult {
                offset,
                best_hypothesis: best_h as u64,
                peak,
                peak_sample: lo + at,
                true_rank,
            }
        })
        .collect();

    let recovered = chunks
        .iter()
        .fold(0u64, |acc, c| acc | c.best_hypothesis << c.offset);
    Ok(CpaResult {
        recovered_key: BitState::truncated(STATE_BITS, recovered)?,
        chunk_bits,
        chunks,
        n_traces: n,
        samples_used: width,
        null_threshold: correlation_null_threshold(n, 0.001, classes * width.max(1)),
    })
}
