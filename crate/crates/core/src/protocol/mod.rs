//! Device model and the plain and masked evaluation flows.

mod file;
mod flows;
mod transcript;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::apuf::{default_noise_sigma, ApufInstance, ApufParams, DEFAULT_VOTES};
use crate::bits::{BitState, STATE_BITS};
use crate::defaults;
use crate::error::{Error, Result};
use crate::fsr::{ClockRandomizer, NlfsrConfig, PrngConfig};

pub use file::DeviceFile;
pub use flows::{
    enroll, equivalent_plain_key, evaluate, evaluate_masked, evaluate_plain, obfuscate,
    obfuscate_with, EnrollOptions,
};
pub use transcript::{Bank, CycleRecord, EvalTranscript, Phase, RegisterWrite};

/// Secret key storage. `SharedOtp` keeps the key as two XOR shares.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum KeyStore {
    PlainOtp(BitState),
    SharedOtp(BitState, BitState),
}

impl KeyStore {
    /// Splits `key` into shares with the given randomness. Provisioning only.
    pub fn shared_from(key: BitState, randomness: BitState) -> Self {
        KeyStore::SharedOtp(key ^ randomness, randomness)
    }

    pub fn is_shared(&self) -> bool {
        matches!(self, KeyStore::SharedOtp(..))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct Countermeasures {
    pub clock_randomization: bool,
    pub masking: bool,
}

impl Countermeasures {
    pub const NONE: Self = Self {
        clock_randomization: false,
        masking: false,
    };
    pub const CLOCK: Self = Self {
        clock_randomization: true,
        masking: false,
    };
    pub const MASKED: Self = Self {
        clock_randomization: false,
        masking: true,
    };
    pub const FULL: Self = Self {
        clock_randomization: true,
        masking: true,
    };

    /// `none`, `clkrnd`, `masked` or `masked+clkrnd`.
    pub fn label(&self) -> &'static str {
        match (self.masking, self.clock_randomization) {
            (false, false) => "none",
            (false, true) => "clkrnd",
            (true, false) => "masked",
            (true, true) => "masked+clkrnd",
        }
    }

    pub fn parse(label: &str) -> Result<Self> {
        match label.trim() {
            "none" => Ok(Self::NONE),
            "clkrnd" => Ok(Self::CLOCK),
            "masked" => Ok(Self::MASKED),
            "masked+clkrnd" | "clkrnd+masked" => Ok(Self::FULL),
            other => Err(Error::Parse(format!("unknown countermeasure set `{other}`"))),
        }
    }
}

/// Cycle counts of the evaluation flows.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Schedule {
    pub warmup: u32,
    pub flush: u32,
    /// Key-only cycles before the challenge is loaded (masked flow).
    pub misalign: u32,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            warmup: 112,
            flush: 56,
            misalign: 128,
        }
    }
}

/// Enrollment data kept in non-volatile memory.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct Enrollment {
    #[serde(with = "crate::bits::serde_hex56")]
    pub unstable_challenge: BitState,
    /// Measured single-evaluation response rate of the unstable challenge.
    pub one_rate: f64,
    /// Fraction of 1-responses over random challenges (voted).
    pub uniformity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Device {
    pub keystore: KeyStore,
    pub nlfsr: NlfsrConfig,
    pub prng: PrngConfig,
    pub clock: ClockRandomizer,
    pub apuf: ApufInstance,
    pub votes: u32,
    pub countermeasures: Countermeasures,
    pub schedule: Schedule,
    pub enrollment: Option<Enrollment>,
    /// Re-draws allowed per PRNG register before the seed is rejected.
    pub seed_redraws: u32,
}

impl Device {
    /// A device with the shipped register configuration, a random key and a
    /// sampled APUF, all derived from `seed`.
    pub fn reference(seed: u64, countermeasures: Countermeasures) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0xde71ce);
        let key = BitState::random(STATE_BITS, &mut rng)?;
        let keystore = if countermeasures.masking {
            KeyStore::shared_from(key, BitState::random(STATE_BITS, &mut rng)?)
        } else {
            KeyStore::PlainOtp(key)
        };
        let apuf_seed = rand::Rng::random::<u64>(&mut rng);
        let apuf = ApufParams {
            seed: apuf_seed,
            sigma_weight: 1.0,
            noise_sigma: default_noise_sigma(1.0),
        }
        .build()?;
        Self::new(keystore, defaults::nlfsr_config(), apuf, countermeasures)
    }

    pub fn new(
        keystore: KeyStore,
        nlfsr: NlfsrConfig,
        apuf: ApufInstance,
        countermeasures: Countermeasures,
    ) -> Result<Self> {
        let d = Self {
            keystore,
            nlfsr,
            prng: defaults::prng_config(),
            clock: defaults::clock_randomizer(countermeasures.clock_randomization),
            apuf,
            votes: DEFAULT_VOTES,
            countermeasures,
            schedule: Schedule::default(),
            enrollment: None,
            seed_redraws: 8,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.countermeasures.masking && !self.keystore.is_shared() {
            return Err(Error::ConfigMismatch(
                "masking requires a shared_otp key store".into(),
            ));
        }
        if self.votes.is_multiple_of(2) {
            return Err(Error::InvalidParameter {
                field: "votes",
                reason: format!("{} is even", self.votes),
            });
        }
        if self.clock.enabled != self.countermeasures.clock_randomization {
            return Err(Error::ConfigMismatch(
                "clock randomizer state disagrees with countermeasure flags".into(),
            ));
        }
        if self.clock.skip_stage >= self.prng.lfsr_spec.width() {
            return Err(Error::InvalidParameter {
                field: "skip_stage",
                reason: "outside the PRNG LFSR".into(),
            });
        }
        self.prng.validate()
    }

    pub fn with_countermeasures(&self, cm: Countermeasures) -> Result<Self> {
        let mut d = self.clone();
        d.countermeasures = cm;
        d.clock.enabled = cm.clock_randomization;
        d.validate()?;
        Ok(d)
    }

    /// True when the NLFSR would be loaded with the all-zero state, which it
    /// never leaves. Simulation diagnostic; it recombines the key.
    pub fn loads_zero_state(&self, challenge: BitState) -> bool {
        let effective = match self.keystore {
            KeyStore::PlainOtp(k) => k,
            KeyStore::SharedOtp(..) => match equivalent_plain_key(self) {
                Ok(k) => k,
                Err(_) => return false,
            },
        };
        (effective ^ challenge).is_zero()
    }
}

/// Independent random streams used by one evaluation: `puf` feeds the voted
/// response noise, `trng` the single evaluations that seed the PRNG.
#[derive(Clone, Debug)]
pub struct NoiseStreams {
    pub puf: ChaCha8Rng,
    pub trng: ChaCha8Rng,
}

impl NoiseStreams {
    pub fn from_seed(seed: u64) -> Self {
        Self::for_run(seed, 0)
    }

    /// Disjoint streams for run `index` of a campaign.
    pub fn for_run(seed: u64, index: u64) -> Self {
        let mut puf = ChaCha8Rng::seed_from_u64(seed);
        puf.set_stream(2 * index);
        let mut trng = ChaCha8Rng::seed_from_u64(seed);
        trng.set_stream(2 * index + 1);
        Self { puf, trng }
    }
}
