//! Additive-delay model of a 56-stage arbiter PUF.
//!
//! Challenge bit `i` drives stage `i`. The response is the sign of the
//! delay margin `w . phi(c)` plus Gaussian evaluation noise, where `phi` is
//! the parity feature vector and the last weight is the arbiter bias.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bits::{BitState, STATE_BITS};
use crate::error::{invalid, Error, Result};

pub const STAGES: usize = STATE_BITS as usize;
pub const FEATURES: usize = STAGES + 1;
pub const DEFAULT_VOTES: u32 = 7;

/// Noise scale giving the default stability: `0.05 * sigma_weight * sqrt(57)`.
pub fn default_noise_sigma(sigma_weight: f64) -> f64 {
    0.05 * sigma_weight * (FEATURES as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApufInstance {
    weights: [f64; FEATURES],
    noise_sigma: f64,
    sigma_weight: f64,
    seed: u64,
}

/// Parameters that regenerate an instance, as stored in device files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApufParams {
    pub seed: u64,
    pub sigma_weight: f64,
    pub noise_sigma: f64,
}

impl ApufParams {
    pub fn build(&self) -> Result<ApufInstance> {
        apuf_sample(self.seed, self.sigma_weight, self.noise_sigma)
    }
}

pub fn apuf_sample(seed: u64, sigma_weight: f64, noise_sigma: f64) -> Result<ApufInstance> {
    if !(sigma_weight > 0.0 && sigma_weight.is_finite()) {
        return Err(invalid("sigma_weight", "must be positive"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(invalid("noise_sigma", "must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma_weight).expect("positive sigma");
    let mut weights = [0.0; FEATURES];
    for w in weights.iter_mut() {
        *w = normal.sample(&mut rng);
    }
    Ok(ApufInstance {
        weights,
        noise_sigma,
        sigma_weight,
        seed,
    })
}

/// `phi_i = prod_{j >= i} (1 - 2 c_j)` for `i < 56`, and `phi_56 = 1`.
pub fn parity_features(challenge: BitState) -> [f64; FEATURES] {
    assert_eq!(challenge.width(), STATE_BITS);
    let mut out = [1.0; FEATURES];
    let mut prod = 1.0;
    for i in (0..STAGES).rev() {
        if challenge.bit(i as u32) {
            prod = -prod;
        }
        out[i] = prod;
    }
    out
}

impl ApufInstance {
    pub fn from_weights(weights: [f64; FEATURES], noise_sigma: f64) -> Self {
        Self {
            weights,
            noise_sigma,
            sigma_weight: f64::NAN,
            seed: 0,
        }
    }

    pub fn weights(&self) -> &[f64; FEATURES] {
        &self.weights
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn with_noise_sigma(&self, noise_sigma: f64) -> Self {
        Self {
            noise_sigma,
            ..self.clone()
        }
    }

    pub fn params(&self) -> ApufParams {
        ApufParams {
            seed: self.seed,
            sigma_weight: self.sigma_weight,
            noise_sigma: self.noise_sigma,
        }
    }

    /// Noiseless delay margin.
    pub fn margin(&self, challenge: BitState) -> f64 {
        parity_features(challenge)
            .iter()
            .zip(&self.weights)
            .map(|(f, w)| f * w)
            .sum()
    }

    pub fn eval_once(&self, challenge: BitState, noise_draw: f64) -> bool {
        self.margin(challenge) + noise_draw > 0.0
    }

    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.noise_sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        z * self.noise_sigma
    }

    pub fn eval_noisy<R: Rng + ?Sized>(&self, challenge: BitState, rng: &mut R) -> bool {
        let m = self.margin(challenge);
        m + self.draw_noise(rng) > 0.0
    }

    /// Majority of `votes` independent noisy evaluations.
    pub fn eval_voted<R: Rng + ?Sized>(
        &self,
        challenge: BitState,
        votes: u32,
        rng: &mut R,
    ) -> Result<bool> {
        if votes.is_multiple_of(2) {
            return Err(invalid("votes", format!("{votes} is even")));
        }
        let m = self.margin(challenge);
        let ones = (0..votes).filter(|_| m + self.draw_noise(rng) > 0.0).count() as u32;
        Ok(2 * ones > votes)
    }

    /// Fraction of 1-responses over `n` random challenges, voted evaluation.
    pub fn uniformity<R: Rng + ?Sized>(&self, n: usize, votes: u32, rng: &mut R) -> Result<f64> {
        if n < 1000 {
            return Err(invalid("n", "uniformity needs at least 1000 challenges"));
        }
        let mut ones = 0usize;
        for _ in 0..n {
            let c = BitState::random(STATE_BITS, rng)?;
            ones += self.eval_voted(c, votes, rng)? as usize;
        }
        Ok(ones as f64 / n as f64)
    }

    /// Fraction of 1s over `evals` single noisy evaluations of one challenge.
    /// A maximally unstable challenge sits at 0.5.
    pub fn one_rate<R: Rng + ?Sized>(&self, challenge: BitState, evals: usize, rng: &mut R) -> f64 {
        let m = self.margin(challenge);
        let ones = (0..evals).filter(|_| m + self.draw_noise(rng) > 0.0).count();
        ones as f64 / evals as f64
    }

    /// Searches random challenges for one whose single-evaluation response
    /// rate lies in `[0.4, 0.6]`.
    pub fn find_unstable_challenge<R: Rng + ?Sized>(
        &self,
        trials: u64,
        evals_per_trial: usize,
        rng: &mut R,
    ) -> Result<BitState> {
        if evals_per_trial == 0 {
            return Err(invalid("evals_per_trial", "must be positive"));
        }
        if self.noise_sigma == 0.0 {
            return Err(Error::NotFound(trials));
        }
        for _ in 0..trials {
            let c = BitState::random(STATE_BITS, rng)?;
            let p = self.one_rate(c, evals_per_trial, rng);
            if (0.4..=0.6).contains(&p) {
                return Ok(c);
            }
        }
        Err(Error::NotFound(trials))
    }

    /// Raw single evaluations of `challenge`, used as a TRNG source.
    pub fn trng_bits<R: Rng + ?Sized>(&self, challenge: BitState, n: usize, rng: &mut R) -> Vec<bool> {
        let m = self.margin(challenge);
        (0..n).map(|_| m + self.draw_noise(rng) > 0.0).collect()
    }
}

pub fn apuf_eval_once(inst: &ApufInstance, challenge: BitState, noise_draw: f64) -> bool {
    inst.eval_once(challenge, noise_draw)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Crp {
    pub challenge: BitState,
    pub response: bool,
}

#[derive(Serialize, Deserialize)]
struct CrpRow {
    challenge_hex: String,
    response: u8,
}

/// CSV with header `challenge_hex,response`.
pub fn write_crps<W: Write>(writer: W, crps: &[Crp]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for c in crps {
        w.serialize(CrpRow {
            challenge_hex: c.challenge.to_hex(),
            response: c.response as u8,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_crps<R: Read>(reader: R) -> Result<Vec<Crp>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["challenge_hex", "response"] {
        return Err(Error::Parse(format!("unexpected CRP header {headers:?}")));
    }
    r.deserialize::<CrpRow>()
        .map(|row| {
            let row = row?;
            let response = match row.response {
                0 => false,
                1 => true,
                v => return Err(Error::Parse(format!("response must be 0 or 1, got {v}"))),
            };
            Ok(Crp {
                challenge: BitState::from_hex(STATE_BITS, &row.challenge_hex)?,
                response,
            })
        })
        .collect()
}
