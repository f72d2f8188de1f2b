use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fsr::{CasrRule, FeedbackSpec};

/// Largest register width accepted by exhaustive walks.
pub const MAX_WALK_WIDTH: u32 = 29;

/// A register next-state map on raw words.
pub trait RegisterMap {
    fn width(&self) -> u32;
    fn apply(&self, state: u64) -> u64;
}

impl RegisterMap for FeedbackSpec {
    fn width(&self) -> u32 {
        FeedbackSpec::width(self)
    }
    #[inline(always)]
    fn apply(&self, state: u64) -> u64 {
        self.step_bits(state)
    }
}

impl RegisterMap for CasrRule {
    fn width(&self) -> u32 {
        CasrRule::width(self)
    }
    #[inline(always)]
    fn apply(&self, state: u64) -> u64 {
        self.step_bits(state)
    }
}

/// Number of distinct states on the orbit of `00..01`.
///
/// For a bijective map this is the cycle length through state 1, and a
/// maximum-length register returns `2^width - 1`.
pub fn verify_period<M: RegisterMap>(map: &M) -> Result<u64> {
    let width = map.width();
    if width > MAX_WALK_WIDTH {
        return Err(Error::WidthTooLarge(width));
    }
    let bound = 1u64 << width;
    match walk_until_return(map, bound) {
        Some(n) => Ok(n),
        None => Ok(brent_orbit_size(map)),
    }
}

/// Steps from state 1 until it comes back, giving up after `limit` steps.
#[inline]
fn walk_until_return<M: RegisterMap>(map: &M, limit: u64) -> Option<u64> {
    let mut s = map.apply(1);
    let mut n = 1u64;
    while s != 1 {
        if n >= limit {
            return None;
        }
        s = map.apply(s);
        n += 1;
    }
    Some(n)
}

// Tail plus cycle length, for maps whose orbit of 1 never returns to 1.
fn brent_orbit_size<M: RegisterMap>(map: &M) -> u64 {
    let mut power = 1u64;
    let mut lam = 1u64;
    let mut tortoise = 1u64;
    let mut hare = map.apply(1);
    while tortoise != hare {
        if power == lam {
            tortoise = hare;
            power *= 2;
            lam = 0;
        }
        hare = map.apply(hare);
        lam += 1;
    }
    let mut tortoise = 1u64;
    let mut hare = 1u64;
    for _ in 0..lam {
        hare = map.apply(hare);
    }
    let mut mu = 0u64;
    while tortoise != hare {
        tortoise = map.apply(tortoise);
        hare = map.apply(hare);
        mu += 1;
    }
    mu + lam
}

/// Draws one candidate of the form `x0 ^ x_a ^ x_b [^ x_e ^ x_f] ^ x_c x_d`.
///
/// The number of terms is always even: with an odd count the all-ones state
/// maps to itself and the period cannot be maximal.
fn random_candidate<R: Rng>(width: u32, rng: &mut R) -> FeedbackSpec {
    let extra = if width > 6 && rng.random_bool(0.25) { 4 } else { 2 };
    let mut taps: Vec<u32> = sample(rng, width as usize - 1, extra)
        .into_iter()
        .map(|i| i as u32 + 1)
        .collect();
    taps.push(0);
    taps.sort_unstable();
    let pair = sample(rng, width as usize - 1, 2);
    let (c, d) = (pair.index(0) as u32 + 1, pair.index(1) as u32 + 1);
    FeedbackSpec::nonlinear(width, &taps, (c, d)).expect("candidate is well-formed")
}

/// Randomized search for a maximum-length NLFSR of the constrained form.
///
/// Each candidate is walked from state 1 and dropped as soon as it returns
/// early. On failure the error carries the longest orbit observed.
pub fn find_max_length_nlfsr(width: u32, trials: u64, seed: u64) -> Result<FeedbackSpec> {
    if width > MAX_WALK_WIDTH {
        return Err(Error::WidthTooLarge(width));
    }
    if width < 4 {
        return Err(Error::InvalidSpec(format!("width {width} too small for the search form")));
    }
    let full = (1u64 << width) - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(FeedbackSpec, u64)> = None;
    for _ in 0..trials {
        let cand = random_candidate(width, &mut rng);
        let period = walk_until_return(&cand, full).unwrap_or(0);
        if period == full {
            return Ok(cand);
        }
        if best.is_none_or(|(_, p)| period > p) {
            best = Some((cand, period));
        }
    }
    Err(Error::TrialsExhausted { trials, best })
}
