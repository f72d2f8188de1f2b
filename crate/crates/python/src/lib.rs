//! Python bindings for the keyed NLFSR obfuscation simulator.
//!
//! Challenges, keys and register states cross the boundary as Python ints
//! holding the 56-bit value; structured results come back as dicts.
//!
//! ```python
//! import keyed_nlfsr_py as knl
//! dev = knl.Device.reference(seed=1, countermeasures="none")
//! out = dev.evaluate(0x123456789abc, n_bits=8)
//! print(out["responses"])
//! ```

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use keyed_nlfsr::attacks::{
    all_input_bits, avalanche_test, collect_crps, cpa_attack, split_crps, train_ml_attack, CpaTarget,
    CrpMode, LfsrObfuscator, MlOptions, NlfsrObfuscator,
};
use keyed_nlfsr::apuf::Crp;
use keyed_nlfsr::bits::STATE_BITS;
use keyed_nlfsr::defaults;
use keyed_nlfsr::leakage::{collect_traces, ChallengeSource, LeakageConfig};
use keyed_nlfsr::protocol::{
    self, equivalent_plain_key, Countermeasures, EnrollOptions, KeyStore, NoiseStreams,
    Schedule,
};
use keyed_nlfsr::{BitState, Error};

const ENROLL_STREAM: u64 = 0xe4_0011;
const SHARE_STREAM: u64 = 0x5_4a7e;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::TrialsExhausted { .. }
        | Error::NotFound(_)
        | Error::SeedRejected(_)
        | Error::DegenerateSeed(_)
        | Error::DivergedTraining(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn state(value: u64) -> PyResult<BitState> {
    BitState::new(STATE_BITS, value).map_err(py_err)
}

fn countermeasures(label: &str) -> PyResult<Countermeasures> {
    Countermeasures::parse(label).map_err(py_err)
}

/// Hands a serializable value to Python through `json.loads`.
fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// One simulated device: key store, registers, APUF and countermeasure flags.
#[pyclass(name = "Device", module = "keyed_nlfsr_py", from_py_object)]
#[derive(Clone)]
struct PyDevice {
    inner: protocol::Device,
}

impl PyDevice {
    fn enroll_if_needed(&mut self, seed: u64) -> PyResult<()> {
        let cm = self.inner.countermeasures;
        if (cm.clock_randomization || cm.masking) && self.inner.enrollment.is_none() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ENROLL_STREAM);
            protocol::enroll(&mut self.inner, EnrollOptions::default(), &mut rng).map_err(py_err)?;
        }
        Ok(())
    }

    fn silenced(&self, noiseless: bool) -> PyResult<protocol::Device> {
        let mut d = self.inner.clone();
        if noiseless {
            if d.countermeasures != Countermeasures::NONE {
                return Err(PyValueError::new_err(
                    "a noiseless APUF cannot seed the PRNG; use countermeasures `none`",
                ));
            }
            d.apuf = d.apuf.with_noise_sigma(0.0);
        }
        Ok(d)
    }
}

#[pymethods]
impl PyDevice {
    /// Reference device derived from `seed`. Devices with clock randomization
    /// or masking are enrolled on creation.
    #[staticmethod]
    #[pyo3(signature = (seed=1, countermeasures="none"))]
    fn reference(py: Python<'_>, seed: u64, countermeasures: &str) -> PyResult<Self> {
        let cm = self::countermeasures(countermeasures)?;
        py.detach(|| {
            let mut d = PyDevice {
                inner: protocol::Device::reference(seed, cm).map_err(py_err)?,
            };
            d.enroll_if_needed(seed)?;
            Ok(d)
        })
    }

    /// Parses a device-state JSON document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyDevice {
            inner: protocol::Device::from_json(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    /// Same device under another countermeasure set. The key is re-shared or
    /// recombined as the new set requires.
    #[pyo3(signature = (label, seed=0))]
    fn with_countermeasures(&self, py: Python<'_>, label: &str, seed: u64) -> PyResult<Self> {
        let cm = countermeasures(label)?;
        let mut d = self.inner.clone();
        match (cm.masking, d.keystore) {
            (true, KeyStore::PlainOtp(k)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(SHARE_STREAM);
                let r = BitState::random(STATE_BITS, &mut rng).map_err(py_err)?;
                d.keystore = KeyStore::shared_from(k, r);
            }
            (false, KeyStore::SharedOtp(..)) => {
                d.keystore = KeyStore::PlainOtp(equivalent_plain_key(&d).map_err(py_err)?);
            }
            _ => {}
        }
        let mut out = PyDevice {
            inner: d.with_countermeasures(cm).map_err(py_err)?,
        };
        py.detach(|| out.enroll_if_needed(seed))?;
        Ok(out)
    }

    #[getter]
    fn countermeasures(&self) -> &'static str {
        self.inner.countermeasures.label()
    }

    #[getter]
    fn key_is_shared(&self) -> bool {
        self.inner.keystore.is_shared()
    }

    #[getter]
    fn votes(&self) -> u32 {
        self.inner.votes
    }

    /// Plain key that reproduces this device under the unprotected flow.
    fn equivalent_plain_key(&self) -> PyResult<u64> {
        equivalent_plain_key(&self.inner).map(|k| k.bits()).map_err(py_err)
    }

    fn loads_zero_state(&self, challenge: u64) -> PyResult<bool> {
        Ok(self.inner.loads_zero_state(state(challenge)?))
    }

    /// Runs one evaluation and returns responses, APUF challenges and the
    /// transcript length in cycles.
    #[pyo3(signature = (challenge, n_bits=8, seed=0, noiseless=false))]
    fn evaluate(
        &self,
        py: Python<'_>,
        challenge: u64,
        n_bits: usize,
        seed: u64,
        noiseless: bool,
    ) -> PyResult<Py<PyAny>> {
        let c = state(challenge)?;
        let d = self.silenced(noiseless)?;
        let t = py
            .detach(|| protocol::evaluate(&d, c, n_bits, &mut NoiseStreams::from_seed(seed)))
            .map_err(py_err)?;
        let doc = serde_json::json!({
            "responses": t.responses.iter().map(|&b| b as u8).collect::<Vec<_>>(),
            "puf_challenges": t.puf_challenges.iter().map(|c| c.bits()).collect::<Vec<_>>(),
            "cycles": t.len(),
        });
        to_py(py, &doc)
    }

    /// `n` CRPs over distinct random challenges as `(challenges, responses)`.
    /// `mode` is `raw` or `obfuscated`.
    #[pyo3(signature = (n, mode="raw", seed=0, noiseless=false))]
    fn collect_crps(
        &self,
        py: Python<'_>,
        n: usize,
        mode: &str,
        seed: u64,
        noiseless: bool,
    ) -> PyResult<(Vec<u64>, Vec<u8>)> {
        let mode = match mode {
            "raw" => CrpMode::Raw,
            "obfuscated" => CrpMode::Obfuscated,
            other => return Err(PyValueError::new_err(format!("unknown CRP mode `{other}`"))),
        };
        let d = self.silenced(noiseless)?;
        let crps = py.detach(|| collect_crps(&d, n, mode, seed)).map_err(py_err)?;
        Ok(crps
            .iter()
            .map(|c| (c.challenge.bits(), c.response as u8))
            .unzip())
    }

    /// Simulated power traces of `n` single-response evaluations as
    /// `(challenges, traces)`.
    #[pyo3(signature = (n, noise=0.5, seed=0))]
    fn traces(&self, py: Python<'_>, n: usize, noise: f64, seed: u64) -> PyResult<(Vec<u64>, Vec<Vec<f32>>)> {
        let leak = LeakageConfig {
            noise_sigma: noise,
            ..LeakageConfig::default()
        };
        let set = py
            .detach(|| collect_traces(&self.inner, n, &ChallengeSource::Random, &leak, seed))
            .map_err(py_err)?;
        Ok((
            set.challenges.iter().map(|c| c.bits()).collect(),
            set.rows().map(<[f32]>::to_vec).collect(),
        ))
    }

    /// CPA on freshly simulated traces, ranked against the equivalent plain key.
    #[pyo3(signature = (traces, noise=0.5, chunk_bits=8, seed=0))]
    fn cpa(&self, py: Python<'_>, traces: usize, noise: f64, chunk_bits: u32, seed: u64) -> PyResult<Py<PyAny>> {
        let leak = LeakageConfig {
            noise_sigma: noise,
            ..LeakageConfig::default()
        };
        let r = py
            .detach(|| {
                let key = equivalent_plain_key(&self.inner)?;
                let set = collect_traces(&self.inner, traces, &ChallengeSource::Random, &leak, seed)?;
                cpa_attack(&set, chunk_bits, CpaTarget::FullTrace, Some(key))
            })
            .map_err(py_err)?;
        let mut doc = serde_json::to_value(&r).map_err(|e| PyValueError::new_err(e.to_string()))?;
        doc["full_recovery"] = r.full_recovery().into();
        doc["mean_true_rank"] = r.mean_true_rank().into();
        to_py(py, &doc)
    }

    fn __repr__(&self) -> String {
        format!(
            "Device(countermeasures={:?}, enrolled={})",
            self.inner.countermeasures.label(),
            self.inner.enrollment.is_some()
        )
    }
}

/// Obfuscated challenges of `evals` consecutive evaluations with the shipped
/// registers and default schedule.
#[pyfunction]
#[pyo3(signature = (key, challenge, evals=1))]
fn obfuscate(key: u64, challenge: u64, evals: usize) -> PyResult<Vec<u64>> {
    Ok(
        protocol::obfuscate(&defaults::nlfsr_config(), state(key)?, state(challenge)?, evals)
            .iter()
            .map(BitState::bits)
            .collect(),
    )
}

/// Advances the concatenated 56-bit NLFSR state by `steps` cycles.
#[pyfunction]
fn nlfsr_run(value: u64, steps: u64) -> PyResult<u64> {
    Ok(defaults::nlfsr_config().run_concat(state(value)?.bits(), steps))
}

/// Flip-probability matrix of the obfuscation map, optionally for the linear
/// control register instead.
#[pyfunction]
#[pyo3(signature = (challenges=10_000, seed=0, control=false))]
fn avalanche(py: Python<'_>, challenges: usize, seed: u64, control: bool) -> PyResult<Py<PyAny>> {
    let schedule = Schedule::default();
    let report = py
        .detach(|| {
            if control {
                avalanche_test(&LfsrObfuscator::control(schedule), challenges, &all_input_bits(), seed)
            } else {
                let obf = NlfsrObfuscator {
                    config: defaults::nlfsr_config(),
                    schedule,
                };
                avalanche_test(&obf, challenges, &all_input_bits(), seed)
            }
        })
        .map_err(py_err)?;
    let mut doc = serde_json::to_value(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    doc["summary"] = serde_json::to_value(report.summary()).map_err(|e| PyValueError::new_err(e.to_string()))?;
    doc["binary"] = report.is_binary().into();
    to_py(py, &doc)
}

/// Trains the MLP modeling attack; the last `n_test` pairs are held out.
#[pyfunction]
#[pyo3(signature = (challenges, responses, n_test=10_000, epochs=None, seed=0))]
fn ml_attack(
    py: Python<'_>,
    challenges: Vec<u64>,
    responses: Vec<u8>,
    n_test: usize,
    epochs: Option<usize>,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    if challenges.len() != responses.len() {
        return Err(PyValueError::new_err("challenges and responses differ in length"));
    }
    let crps = challenges
        .iter()
        .zip(&responses)
        .map(|(&c, &r)| Ok(Crp { challenge: state(c)?, response: r != 0 }))
        .collect::<PyResult<Vec<_>>>()?;
    let mut opts = MlOptions {
        seed,
        ..MlOptions::default()
    };
    if let Some(e) = epochs {
        opts.epochs = e;
    }
    let r = py
        .detach(|| {
            let (train, test) = split_crps(&crps, n_test)?;
            train_ml_attack(train, test, &opts)
        })
        .map_err(py_err)?;
    let mut doc = serde_json::to_value(&r).map_err(|e| PyValueError::new_err(e.to_string()))?;
    doc["majority_baseline"] = r.majority_baseline().into();
    to_py(py, &doc)
}

#[pymodule]
pub fn keyed_nlfsr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDevice>()?;
    m.add_function(wrap_pyfunction!(obfuscate, m)?)?;
    m.add_function(wrap_pyfunction!(nlfsr_run, m)?)?;
    m.add_function(wrap_pyfunction!(avalanche, m)?)?;
    m.add_function(wrap_pyfunction!(ml_attack, m)?)?;
    m.add("STATE_BITS", STATE_BITS)?;
    Ok(())
}
