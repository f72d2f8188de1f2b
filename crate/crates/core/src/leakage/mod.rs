//! Simulated power traces from evaluation transcripts.

mod file;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{BitState, STATE_BITS};
use crate::error::{invalid, Result};
use crate::protocol::{evaluate, Countermeasures, Device, EvalTranscript, NoiseStreams, Phase};

pub use file::{read_traces, write_traces, TRACE_MAGIC, TRACE_VERSION};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageModel {
    #[default]
    HammingDistance,
    HammingWeight,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Samples sit at reference-clock positions; skipped cycles leave gaps.
    #[default]
    ReferenceClock,
    /// Samples of enabled cycles only, back to back.
    EnabledCyclesOnly,
}

/// Sample range `[start, start + len)` kept from each trace.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct SampleWindow {
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct LeakageConfig {
    pub model: LeakageModel,
    pub noise_sigma: f64,
    pub samples_per_cycle: usize,
    pub align: Alignment,
    #[serde(default)]
    pub window: Option<SampleWindow>,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        Self {
            model: LeakageModel::HammingDistance,
            noise_sigma: 0.0,
            samples_per_cycle: 1,
            align: Alignment::ReferenceClock,
            window: None,
        }
    }
}

impl LeakageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_cycle == 0 {
            return Err(invalid("samples_per_cycle", "must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("noise_sigma", "must be non-negative"));
        }
        if matches!(self.window, Some(w) if w.len == 0) {
            return Err(invalid("window", "length must be positive"));
        }
        Ok(())
    }

    fn slot(&self, ref_cycle: u64, index: usize) -> usize {
        let c = match self.align {
            Alignment::ReferenceClock => ref_cycle as usize,
            Alignment::EnabledCyclesOnly => index,
        };
        c * self.samples_per_cycle
    }

    fn timeline_len(&self, t: &EvalTranscript) -> usize {
        let cycles = match self.align {
            Alignment::ReferenceClock => t.ref_cycles as usize,
            Alignment::EnabledCyclesOnly => t.len(),
        };
        cycles * self.samples_per_cycle
    }
}

/// Noiseless leakage value of each enabled cycle.
pub fn cycle_leakage(transcript: &EvalTranscript, model: LeakageModel) -> Vec<u32> {
    transcript
        .cycles()
        .map(|rec| {
            rec.writes
                .iter()
                .map(|w| match model {
                    LeakageModel::HammingDistance => w.hamming_distance(),
                    LeakageModel::HammingWeight => w.hamming_weight(),
                })
                .sum()
        })
        .collect()
}

/// Renders one trace. Every sample of an enabled cycle carries that cycle's
/// leakage; skipped cycles carry noise only. A window crops the result and
/// pads with zeros past the end of the timeline.
pub fn simulate_trace<R: Rng + ?Sized>(
    transcript: &EvalTranscript,
    config: &LeakageConfig,
    rng: &mut R,
) -> Vec<f32> {
    let spc = config.samples_per_cycle;
    let full = config.timeline_len(transcript);
    let mut out = vec![0.0f32; full];
    for (i, (rec, v)) in transcript
        .cycles()
        .zip(cycle_leakage(transcript, config.model))
        .enumerate()
    {
        let at = config.slot(rec.ref_cycle, i);
        out[at..at + spc].fill(v as f32);
    }
    if config.noise_sigma > 0.0 {
        for s in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *s += (z * config.noise_sigma) as f32;
        }
    }
    match config.window {
        None => out,
        Some(w) => (w.start..w.start + w.len)
            .map(|i| out.get(i).copied().unwrap_or(0.0))
            .collect(),
    }
}

/// Where the challenge load falls on the sample timeline, before windowing.
fn load_offset(transcript: &EvalTranscript, config: &LeakageConfig) -> Option<usize> {
    transcript
        .cycles()
        .enumerate()
        .find(|(_, r)| r.phase == Phase::ChallengeLoad)
        .map(|(i, r)| config.slot(r.ref_cycle, i))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub leakage: LeakageConfig,
    pub countermeasures: Countermeasures,
    /// Sample range `[start, end)` that covered the challenge-load cycle in
    /// every trace, relative to the stored samples.
    pub load_window: Option<(usize, usize)>,
    pub seed: u64,
}

/// Row-major trace matrix with the challenges that produced each row.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSet {
    n_samples: usize,
    data: Vec<f32>,
    pub challenges: Vec<BitState>,
    pub meta: TraceMeta,
}

impl TraceSet {
    pub fn new(
        n_samples: usize,
        data: Vec<f32>,
        challenges: Vec<BitState>,
        meta: TraceMeta,
    ) -> Result<Self> {
        if n_samples == 0 || data.len() != n_samples * challenges.len() {
            return Err(invalid(
                "traces",
                format!(
                    "{} values do not form {} rows of {n_samples}",
                    data.len(),
                    challenges.len()
                ),
            ));
        }
        Ok(Self {
            n_samples,
            data,
            challenges,
            meta,
        })
    }

    pub fn n_traces(&self) -> usize {
        self.challenges.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.n_samples)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mean over all samples of all traces.
    pub fn mean_amplitude(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChallengeSource {
    /// Uniform challenges drawn from the campaign seed.
    Random,
    /// Replays the list, cycling if `n` exceeds its length.
    Fixed(Vec<BitState>),
}

const LEAKAGE_STREAM: u64 = 0x5eed_7ace;

/// Runs one single-response evaluation per challenge and records its trace.
/// Run `i` uses noise streams derived from `(seed, i)`, so results do not
/// depend on the number of worker threads.
pub fn collect_traces(
    device: &Device,
    n: usize,
    source: &ChallengeSource,
    config: &LeakageConfig,
    seed: u64,
) -> Result<TraceSet> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    config.validate()?;
    let challenges: Vec<BitState> = match source {
        ChallengeSource::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(LEAKAGE_STREAM + 1);
            (0..n)
                .map(|_| BitState::random(STATE_BITS, &mut rng))
                .collect::<Result<_>>()?
        }
        ChallengeSource::Fixed(list) => {
            if list.is_empty() {
                return Err(invalid("challenges", "fixed list is empty"));
            }
            list.iter().cycle().take(n).copied().collect()
        }
    };

    let rows: Vec<(Vec<f32>, Option<usize>)> = challenges
        .par_iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut noise = NoiseStreams::for_run(seed, i as u64);
            let t = evaluate(device, c, 1, &mut noise)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ LEAKAGE_STREAM);
            rng.set_stream(i as u64);
            Ok((simulate_trace(&t, config, &mut rng), load_offset(&t, config)))
        })
        .collect::<Result<_>>()?;

    let n_samples = rows.iter().map(|(r, _)| r.len()).max().unwrap_or(0);
    let mut data = Vec::with_capacity(n_samples * n);
    for (r, _) in &rows {
        data.extend_from_slice(r);
        data.resize(data.len() + n_samples - r.len(), 0.0);
    }

    let spc = config.samples_per_cycle;
    let shift = config.window.map_or(0, |w| w.start);
    let offsets: Vec<usize> = rows.iter().filter_map(|(_, o)| *o).collect();
    let load_window = match (offsets.iter().min(), offsets.iter().max()) {
        (Some(&lo), Some(&hi)) => {
            let lo = lo.saturating_sub(shift).min(n_samples);
            let hi = (hi + spc).saturating_sub(shift).min(n_samples);
            (lo < hi).then_some((lo, hi))
        }
        _ => None,
    };
    TraceSet::new(
        n_samples,
        data,
        challenges,
        TraceMeta {
            leakage: *config,
            countermeasures: device.countermeasures,
            load_window,
            seed,
        },
    )
}
