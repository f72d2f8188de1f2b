use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apuf::{ApufInstance, Crp};
use crate::attacks::avalanche::unique_challenges;
use crate::error::{invalid, Result};
use crate::protocol::{evaluate, Device, NoiseStreams};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrpMode {
    /// External challenge applied straight to the APUF.
    Raw,
    /// Full device flow; the first response bit is recorded.
    Obfuscated,
}

/// Collects `n` CRPs over distinct uniform challenges with voted responses.
/// `Raw` mode uses only the device's APUF and vote count.
pub fn collect_crps(device: &Device, n: usize, mode: CrpMode, seed: u64) -> Result<Vec<Crp>> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let challenges = unique_challenges(n, &mut rng)?;
    challenges
        .par_iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut noise = NoiseStreams::for_run(seed, i as u64);
            let response = match mode {
                CrpMode::Raw => device.apuf.eval_voted(c, device.votes, &mut noise.puf)?,
                CrpMode::Obfuscated => evaluate(device, c, 1, &mut noise)?.responses[0],
            };
            Ok(Crp {
                challenge: c,
                response,
            })
        })
        .collect()
}

/// Raw CRPs of a bare instance.
pub fn collect_raw_crps(apuf: &ApufInstance, votes: u32, n: usize, seed: u64) -> Result<Vec<Crp>> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let challenges = unique_challenges(n, &mut rng)?;
    challenges
        .par_iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut noise = NoiseStreams::for_run(seed, i as u64);
            Ok(Crp {
                challenge: c,
                response: apuf.eval_voted(c, votes, &mut noise.puf)?,
            })
        })
        .collect()
}

/// Fraction of 1-responses.
pub fn response_uniformity(crps: &[Crp]) -> f64 {
    crps.iter().filter(|c| c.response).count() as f64 / crps.len().max(1) as f64
}
