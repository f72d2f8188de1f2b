use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::apuf::ApufParams;
use crate::bits::{serde_hex56, BitState};
use crate::error::{Error, Result};
use crate::fsr::{ClockRandomizer, NlfsrConfig, PrngConfig};

use super::{Countermeasures, Device, Enrollment, KeyStore, Schedule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum KeyStoreRepr {
    PlainOtp {
        #[serde(with = "serde_hex56")]
        key: BitState,
    },
    SharedOtp {
        #[serde(with = "serde_hex56")]
        share1: BitState,
        #[serde(with = "serde_hex56")]
        share2: BitState,
    },
}

fn default_redraws() -> u32 {
    8
}

/// On-disk JSON form of a [`Device`]. The APUF is stored as its generating
/// parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceFile {
    keystore: KeyStoreRepr,
    pub nlfsr: NlfsrConfig,
    pub prng: PrngConfig,
    pub clock: ClockRandomizer,
    pub apuf: ApufParams,
    pub votes: u32,
    pub countermeasures: Countermeasures,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub enrollment: Option<Enrollment>,
    #[serde(default = "default_redraws")]
    pub seed_redraws: u32,
}

impl DeviceFile {
    pub fn from_device(device: &Device) -> Result<Self> {
        let apuf = device.apuf.params();
        if !apuf.sigma_weight.is_finite() {
            return Err(Error::ConfigMismatch(
                "APUF built from explicit weights cannot be stored by seed".into(),
            ));
        }
        Ok(Self {
            keystore: match device.keystore {
                KeyStore::PlainOtp(key) => KeyStoreRepr::PlainOtp { key },
                KeyStore::SharedOtp(share1, share2) => KeyStoreRepr::SharedOtp { share1, share2 },
            },
            nlfsr: device.nlfsr,
            prng: device.prng,
            clock: device.clock,
            apuf,
            votes: device.votes,
            countermeasures: device.countermeasures,
            schedule: device.schedule,
            enrollment: device.enrollment,
            seed_redraws: device.seed_redraws,
        })
    }

    pub fn into_device(self) -> Result<Device> {
        let d = Device {
            keystore: match self.keystore {
                KeyStoreRepr::PlainOtp { key } => KeyStore::PlainOtp(key),
                KeyStoreRepr::SharedOtp { share1, share2 } => KeyStore::SharedOtp(share1, share2),
            },
            nlfsr: self.nlfsr,
            prng: self.prng,
            clock: self.clock,
            apuf: self.apuf.build()?,
            votes: self.votes,
            countermeasures: self.countermeasures,
            schedule: self.schedule,
            enrollment: self.enrollment,
            seed_redraws: self.seed_redraws,
        };
        d.validate()?;
        Ok(d)
    }
}

impl Device {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&DeviceFile::from_device(self)?)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<DeviceFile>(text)?.into_device()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
