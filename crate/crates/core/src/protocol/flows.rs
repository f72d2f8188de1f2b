use rand::Rng;

use crate::bits::{mask, BitState, STATE_BITS};
use crate::error::{Error, Result};
use crate::fsr::{ClockRandomizer, NlfsrConfig, Prng};
use crate::masking::step_shares;

use super::transcript::{Bank, EvalTranscript, Phase};
use super::{Device, Enrollment, KeyStore, NoiseStreams, Schedule};

/// Obfuscated challenges for `evals` consecutive PUF evaluations under the
/// default schedule: the first after warm-up plus one flush, the rest one
/// flush apart.
pub fn obfuscate(
    config: &NlfsrConfig,
    key: BitState,
    challenge: BitState,
    evals: usize,
) -> Vec<BitState> {
    obfuscate_with(config, Schedule::default(), key, challenge, evals)
}

pub fn obfuscate_with(
    config: &NlfsrConfig,
    schedule: Schedule,
    key: BitState,
    challenge: BitState,
    evals: usize,
) -> Vec<BitState> {
    let mut s = config.run_concat((key ^ challenge).bits(), schedule.warmup as u64);
    (0..evals)
        .map(|_| {
            s = config.run_concat(s, schedule.flush as u64);
            BitState::from_raw(STATE_BITS, s)
        })
        .collect()
}

/// The plain key under which the plain flow reproduces a masked device.
///
/// The masked flow runs the misalignment cycles on the key alone before the
/// challenge is added, so its effective key is the recombined key advanced by
/// that many NLFSR steps. Analysis helper: it recombines the shares.
pub fn equivalent_plain_key(device: &Device) -> Result<BitState> {
    match device.keystore {
        KeyStore::PlainOtp(k) => Ok(k),
        KeyStore::SharedOtp(k1, k2) => Ok(BitState::from_raw(
            STATE_BITS,
            device
                .nlfsr
                .run_concat((k1 ^ k2).bits(), device.schedule.misalign as u64),
        )),
    }
}

/// Reference-clock driver: advances the PRNG every reference cycle and opens a
/// transcript record on each enabled one.
struct Clock<'t> {
    randomizer: ClockRandomizer,
    prng: Option<Prng>,
    ref_cycle: u64,
    transcript: &'t mut EvalTranscript,
}

impl Clock<'_> {
    /// Waits for the next enabled cycle and returns the PRNG outputs of that cycle.
    fn next(&mut self, phase: Phase) -> [bool; 3] {
        loop {
            let (enabled, out) = match self.prng.as_mut() {
                Some(p) => {
                    let e = self.randomizer.tick(p.lfsr());
                    (e, p.step())
                }
                None => (true, [false; 3]),
            };
            let rc = self.ref_cycle;
            self.ref_cycle += 1;
            if enabled {
                self.transcript.begin_cycle(rc, phase);
                return out;
            }
        }
    }

    fn write(&mut self, bank: Bank, old: u64, new: u64) {
        self.transcript.write(bank, old, new);
    }

    fn finish(self) {
        self.transcript.ref_cycles = self.ref_cycle;
    }
}

/// Serially seeds the PRNG from single PUF evaluations of the enrolled
/// unstable challenge. A register left all-zero is re-drawn.
fn seed_prng(device: &Device, clock: &mut Clock<'_>, noise: &mut NoiseStreams) -> Result<Prng> {
    let enrollment = device.enrollment.as_ref().ok_or_else(|| {
        Error::ConfigMismatch("PRNG seeding needs an enrolled unstable challenge".into())
    })?;
    let widths = [
        (Bank::PrngLfsr, device.prng.lfsr_spec.width()),
        (Bank::PrngCasr, device.prng.casr_rule.width()),
    ];
    let mut regs = [0u64; 2];
    for (slot, &(bank, width)) in widths.iter().enumerate() {
        let mut attempts = 0;
        loop {
            let bits = device.apuf.trng_bits(
                enrollment.unstable_challenge,
                width as usize,
                &mut noise.trng,
            );
            let mut value = 0u64;
            for (k, b) in bits.into_iter().enumerate() {
                clock.next(Phase::PrngSeed);
                let next = value | (b as u64) << k;
                clock.write(bank, value, next);
                value = next;
            }
            if value != 0 {
                regs[slot] = value;
                break;
            }
            if attempts == device.seed_redraws {
                return Err(Error::SeedRejected(attempts));
            }
            attempts += 1;
        }
    }
    Prng::new(
        device.prng,
        BitState::from_raw(widths[0].1, regs[0]),
        BitState::from_raw(widths[1].1, regs[1]),
    )
}

fn new_clock<'t>(
    device: &Device,
    transcript: &'t mut EvalTranscript,
    noise: &mut NoiseStreams,
) -> Result<Clock<'t>> {
    let mut clock = Clock {
        randomizer: device.clock,
        prng: None,
        ref_cycle: 0,
        transcript,
    };
    if device.countermeasures.clock_randomization || device.countermeasures.masking {
        clock.prng = Some(seed_prng(device, &mut clock, noise)?);
    }
    Ok(clock)
}

/// Unprotected flow: load `key ^ challenge`, warm up, then one response per
/// flush period. With clock randomization the PRNG is seeded first.
pub fn evaluate_plain(
    device: &Device,
    challenge: BitState,
    n_bits: usize,
    noise: &mut NoiseStreams,
) -> Result<EvalTranscript> {
    device.validate()?;
    if device.countermeasures.masking {
        return Err(Error::ConfigMismatch("plain flow on a masked device".into()));
    }
    let KeyStore::PlainOtp(key) = device.keystore else {
        return Err(Error::ConfigMismatch("plain flow needs a plain_otp key store".into()));
    };
    check_challenge(challenge)?;
    let sched = device.schedule;
    let cfg = &device.nlfsr;
    let mut t = EvalTranscript::with_capacity(
        20 + (1 + sched.warmup + sched.flush * n_bits as u32) as usize,
    );
    let mut clock = new_clock(device, &mut t, noise)?;

    let mut s = (key ^ challenge).bits();
    clock.next(Phase::ChallengeLoad);
    clock.write(Bank::Nlfsr, 0, s);
    for _ in 0..sched.warmup {
        clock.next(Phase::Warmup);
        let n = cfg.step_concat(s);
        clock.write(Bank::Nlfsr, s, n);
        s = n;
    }
    let mut puf_challenges = Vec::with_capacity(n_bits);
    for _ in 0..n_bits {
        for _ in 0..sched.flush {
            clock.next(Phase::Flush);
            let n = cfg.step_concat(s);
            clock.write(Bank::Nlfsr, s, n);
            s = n;
        }
        puf_challenges.push(BitState::from_raw(STATE_BITS, s));
    }
    clock.finish();
    respond(device, &mut t, puf_challenges, noise)?;
    Ok(t)
}

/// Masked flow: PRNG seeding, share seeding with one PRNG stream, key load
/// into both shares, misalignment, challenge load into share 1, warm-up, then
/// per response a flush followed by the gated unmask.
///
/// With no redraws this takes 19 + 56 + misalign + warmup + flush enabled
/// cycles before the first response.
pub fn evaluate_masked(
    device: &Device,
    challenge: BitState,
    n_bits: usize,
    noise: &mut NoiseStreams,
) -> Result<EvalTranscript> {
    device.validate()?;
    if !device.countermeasures.masking {
        return Err(Error::ConfigMismatch("masked flow on an unmasked device".into()));
    }
    let KeyStore::SharedOtp(k1, k2) = device.keystore else {
        return Err(Error::ConfigMismatch("masked flow needs a shared_otp key store".into()));
    };
    check_challenge(challenge)?;
    let sched = device.schedule;
    if sched.misalign == 0 {
        return Err(Error::InvalidParameter {
            field: "misalign",
            reason: "the masked flow needs at least one misalignment cycle".into(),
        });
    }
    let cfg = device.nlfsr;
    let mut t = EvalTranscript::with_capacity(
        (19 + STATE_BITS + sched.misalign + sched.warmup + sched.flush * n_bits as u32)
            as usize,
    );
    let mut clock = new_clock(device, &mut t, noise)?;

    // Loads are XORs on the register inputs, applied on the same clock edge
    // as a shift or step: the key enters with the last share-seed bit and
    // the challenge with the last misalignment step.
    let (mut x1, mut x2) = (0u64, 0u64);
    for i in 0..STATE_BITS {
        let last = i + 1 == STATE_BITS;
        let phase = if last { Phase::KeyLoad } else { Phase::ShareSeed };
        let [_, _, r] = clock.next(phase);
        let shifted = (x1 >> 1) | (r as u64) << (STATE_BITS - 1);
        let (n1, n2) = if last {
            (shifted ^ k1.bits(), shifted ^ k2.bits())
        } else {
            (shifted, shifted)
        };
        clock.write(Bank::Share1, x1, n1);
        clock.write(Bank::Share2, x2, n2);
        x1 = n1;
        x2 = n2;
    }

    let masked_step =
        |clock: &mut Clock<'_>, phase: Phase, load: u64, x1: &mut u64, x2: &mut u64| {
            let [r1, r2, _] = clock.next(phase);
            let (n1, n2) = step_shares(&cfg, *x1, *x2, r1, r2);
            let n1 = n1 ^ load;
            clock.write(Bank::Share1, *x1, n1);
            clock.write(Bank::Share2, *x2, n2);
            *x1 = n1;
            *x2 = n2;
        };

    for _ in 1..sched.misalign {
        masked_step(&mut clock, Phase::Misalign, 0, &mut x1, &mut x2);
    }
    masked_step(&mut clock, Phase::ChallengeLoad, challenge.bits(), &mut x1, &mut x2);

    for _ in 0..sched.warmup {
        masked_step(&mut clock, Phase::Warmup, 0, &mut x1, &mut x2);
    }

    let mut unmasked = 0u64;
    let mut puf_challenges = Vec::with_capacity(n_bits);
    for _ in 0..n_bits {
        for _ in 0..sched.flush {
            masked_step(&mut clock, Phase::Flush, 0, &mut x1, &mut x2);
        }
        let u = (x1 ^ x2) & mask(STATE_BITS);
        clock.write(Bank::Unmask, unmasked, u);
        unmasked = u;
        puf_challenges.push(BitState::from_raw(STATE_BITS, u));
    }
    clock.finish();
    respond(device, &mut t, puf_challenges, noise)?;
    Ok(t)
}

/// Runs the flow selected by the device's countermeasure flags.
pub fn evaluate(
    device: &Device,
    challenge: BitState,
    n_bits: usize,
    noise: &mut NoiseStreams,
) -> Result<EvalTranscript> {
    if device.countermeasures.masking {
        evaluate_masked(device, challenge, n_bits, noise)
    } else {
        evaluate_plain(device, challenge, n_bits, noise)
    }
}

fn check_challenge(challenge: BitState) -> Result<()> {
    if challenge.width() != STATE_BITS {
        return Err(Error::WidthMismatch {
            expected: STATE_BITS,
            got: challenge.width(),
        });
    }
    Ok(())
}

fn respond(
    device: &Device,
    t: &mut EvalTranscript,
    puf_challenges: Vec<BitState>,
    noise: &mut NoiseStreams,
) -> Result<()> {
    t.responses = puf_challenges
        .iter()
        .map(|&c| device.apuf.eval_voted(c, device.votes, &mut noise.puf))
        .collect::<Result<_>>()?;
    t.puf_challenges = puf_challenges;
    Ok(())
}

/// Enrollment search parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnrollOptions {
    pub trials: u64,
    pub evals_per_trial: usize,
    pub uniformity_samples: usize,
}

impl Default for EnrollOptions {
    fn default() -> Self {
        Self {
            trials: 1_000_000,
            evals_per_trial: 101,
            uniformity_samples: 10_000,
        }
    }
}

/// Finds an unstable challenge, measures uniformity and stores both in the device.
pub fn enroll<R: Rng + ?Sized>(
    device: &mut Device,
    options: EnrollOptions,
    rng: &mut R,
) -> Result<Enrollment> {
    if device.apuf.noise_sigma() <= 0.0 {
        return Err(Error::NotFound(0));
    }
    let challenge =
        device
            .apuf
            .find_unstable_challenge(options.trials, options.evals_per_trial, rng)?;
    let one_rate = device.apuf.one_rate(challenge, options.evals_per_trial, rng);
    let uniformity = device
        .apuf
        .uniformity(options.uniformity_samples, device.votes, rng)?;
    let e = Enrollment {
        unstable_challenge: challenge,
        one_rate,
        uniformity,
    };
    device.enrollment = Some(e);
    Ok(e)
}
