use std::collections::HashSet;

use keyed_nlfsr::apuf::Crp;
use keyed_nlfsr::attacks::{
    all_input_bits, avalanche_test, collect_crps, collect_raw_crps, cpa_attack, response_uniformity,
    split_crps, train_ml_attack, CpaTarget, CrpMode, LfsrObfuscator, MlOptions, NlfsrObfuscator,
};
use keyed_nlfsr::bits::STATE_BITS;
use keyed_nlfsr::defaults;
use keyed_nlfsr::leakage::{
    collect_traces, ChallengeSource, LeakageConfig, TraceMeta, TraceSet,
};
use keyed_nlfsr::protocol::{enroll, Countermeasures, Device, EnrollOptions, KeyStore, Schedule};
use keyed_nlfsr::stats::binomial_sigma;
use keyed_nlfsr::{BitState, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn enrolled(seed: u64, cm: Countermeasures) -> Device {
    let mut d = Device::reference(seed, cm).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe);
    let opts = EnrollOptions {
        uniformity_samples: 2000,
        ..Default::default()
    };
    enroll(&mut d, opts, &mut rng).unwrap();
    d
}

fn plain_key(d: &Device) -> BitState {
    match d.keystore {
        KeyStore::PlainOtp(k) => k,
        KeyStore::SharedOtp(..) => panic!("plain device expected"),
    }
}

fn leak(noise_sigma: f64) -> LeakageConfig {
    LeakageConfig {
        noise_sigma,
        ..Default::default()
    }
}

#[test]
fn identity_map_flips_only_the_toggled_bit() {
    let identity = |_k: BitState, c: BitState| c;
    let r = avalanche_test(&identity, 1000, &all_input_bits(), 1).unwrap();
    assert!(r.is_binary());
    for (i, row) in r.probabilities.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            assert_eq!(p, (i == j) as u8 as f64);
        }
    }
    assert_eq!(r.outliers(0.45, 0.55).len(), 56 * 56);
}

#[test]
fn linear_control_is_binary() {
    let r = avalanche_test(&LfsrObfuscator::control(Schedule::default()), 1000, &[0, 17, 55], 2)
        .unwrap();
    assert!(r.is_binary());
    assert!(!r.all_within(0.45, 0.55));
}

#[test]
fn avalanche_rejects_bad_arguments() {
    let obf = NlfsrObfuscator {
        config: defaults::nlfsr_config(),
        schedule: Schedule::default(),
    };
    assert!(avalanche_test(&obf, 999, &[0], 0).is_err());
    assert!(avalanche_test(&obf, 1000, &[56], 0).is_err());
    assert!(avalanche_test(&obf, 1000, &[], 0).is_err());
}

#[test]
fn avalanche_csv_has_56_columns() {
    let obf = NlfsrObfuscator {
        config: defaults::nlfsr_config(),
        schedule: Schedule::default(),
    };
    let r = avalanche_test(&obf, 1000, &[0, 1], 3).unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.split(',').count() == 56));
    let s = r.summary();
    assert!(s.min <= s.mean && s.mean <= s.max);
}

#[test]
fn cpa_recovers_key_from_noiseless_unprotected_traces() {
    let d = Device::reference(50, Countermeasures::NONE).unwrap();
    let set = collect_traces(&d, 2000, &ChallengeSource::Random, &leak(0.0), 5).unwrap();
    let k = plain_key(&d);
    for target in [CpaTarget::LoadCycle, CpaTarget::FullTrace] {
        let r = cpa_attack(&set, 8, target, Some(k)).unwrap();
        assert_eq!(r.recovered_key, k, "{target:?}");
        assert!(r.full_recovery());
        assert!(r.peaks().iter().all(|&p| p > r.null_threshold));
    }
    let r = cpa_attack(&set, 4, CpaTarget::LoadCycle, Some(k)).unwrap();
    assert_eq!(r.recovered_key, k);
    assert_eq!(r.chunks.len(), 14);
}

#[test]
fn cpa_peaks_on_pure_noise_stay_below_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (n, width) = (5000, 20);
    let data: Vec<f32> = (0..n * width).map(|_| normal.sample(&mut rng) as f32).collect();
    let challenges = (0..n)
        .map(|_| BitState::random(STATE_BITS, &mut rng).unwrap())
        .collect();
    let meta = TraceMeta {
        leakage: leak(1.0),
        countermeasures: Countermeasures::NONE,
        load_window: None,
        seed: 0,
    };
    let set = TraceSet::new(width, data, challenges, meta).unwrap();
    let r = cpa_attack(&set, 8, CpaTarget::FullTrace, None).unwrap();
    assert!(r.peaks().iter().all(|&p| p < r.null_threshold), "{:?}", r.peaks());
    assert!(r.true_ranks().is_none());
    assert!(matches!(
        cpa_attack(&set, 8, CpaTarget::LoadCycle, None),
        Err(Error::InvalidParameter { .. })
    ));
}

#[test]
fn cpa_rejects_chunks_that_do_not_divide_the_key() {
    let d = Device::reference(52, Countermeasures::NONE).unwrap();
    let set = collect_traces(&d, 10, &ChallengeSource::Random, &leak(0.0), 5).unwrap();
    for bits in [0, 3, 5, 28] {
        assert!(matches!(
            cpa_attack(&set, bits, CpaTarget::FullTrace, None),
            Err(Error::ChunkMismatch(b)) if b == bits
        ));
    }
}

#[test]
fn cpa_improves_with_more_traces() {
    let d = Device::reference(53, Countermeasures::NONE).unwrap();
    let k = plain_key(&d);
    let set = collect_traces(&d, 4000, &ChallengeSource::Random, &leak(4.0), 6).unwrap();
    let rank_at = |n: usize| {
        let sub = TraceSet::new(
            set.n_samples(),
            set.data()[..n * set.n_samples()].to_vec(),
            set.challenges[..n].to_vec(),
            set.meta.clone(),
        )
        .unwrap();
        cpa_attack(&sub, 8, CpaTarget::FullTrace, Some(k)).unwrap().mean_true_rank().unwrap()
    };
    let (small, large) = (rank_at(200), rank_at(4000));
    assert!(large < small, "rank {small} at 200 traces, {large} at 4000");
    assert_eq!(large, 1.0);
}

#[test]
fn countermeasures_order_cpa_difficulty() {
    let n = 5000;
    let rank = |cm: Countermeasures| {
        let d = enrolled(54, cm);
        let k = keyed_nlfsr::protocol::equivalent_plain_key(&d).unwrap();
        let set = collect_traces(&d, n, &ChallengeSource::Random, &leak(0.5), 7).unwrap();
        cpa_attack(&set, 8, CpaTarget::FullTrace, Some(k)).unwrap().mean_true_rank().unwrap()
    };
    let none = rank(Countermeasures::NONE);
    let clk = rank(Countermeasures::CLOCK);
    let full = rank(Countermeasures::FULL);
    assert_eq!(none, 1.0);
    assert!(none <= clk && clk < full, "none {none} clkrnd {clk} full {full}");
    assert!(full > 20.0, "masked+clkrnd mean rank {full}");
}

fn coin_crps(n: usize, seed: u64) -> Vec<Crp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let c = BitState::random(STATE_BITS, &mut rng).unwrap();
        if seen.insert(c.bits()) {
            out.push(Crp {
                challenge: c,
                response: rng.random(),
            });
        }
    }
    out
}

fn quick_ml() -> MlOptions {
    MlOptions {
        hidden: vec![32, 32],
        epochs: 8,
        ..Default::default()
    }
}

#[test]
fn ml_on_coin_flips_stays_at_chance() {
    let crps = coin_crps(12_000, 60);
    let (train, test) = split_crps(&crps, 2000).unwrap();
    let r = train_ml_attack(train, test, &quick_ml()).unwrap();
    let bound = 0.5 + 3.0 * binomial_sigma(0.5, test.len());
    assert!(r.test_accuracy <= bound, "accuracy {}", r.test_accuracy);
    assert_eq!((r.train_crps, r.test_crps), (10_000, 2000));
    assert_eq!(r.model.layer_sizes, vec![57, 32, 32, 1]);
}

#[test]
fn ml_rejects_overlapping_sets() {
    let crps = coin_crps(2000, 61);
    let err = train_ml_attack(&crps[..1500], &crps[1000..], &quick_ml());
    assert!(matches!(err, Err(Error::InvalidParameter { .. })));
    assert!(split_crps(&crps, 0).is_err());
    assert!(split_crps(&crps, 2000).is_err());
}

#[test]
fn obfuscation_does_not_help_the_model() {
    let d = Device::reference(62, Countermeasures::NONE).unwrap();
    let quiet = Device {
        apuf: d.apuf.with_noise_sigma(0.0),
        ..d
    };
    let acc = |mode| {
        let crps = collect_crps(&quiet, 20_000, mode, 63).unwrap();
        let (train, test) = split_crps(&crps, 4000).unwrap();
        train_ml_attack(train, test, &quick_ml()).unwrap().test_accuracy
    };
    let raw = acc(CrpMode::Raw);
    let obf = acc(CrpMode::Obfuscated);
    assert!(raw > 0.9, "raw accuracy {raw}");
    assert!(obf < raw - 0.2, "obfuscated {obf} raw {raw}");
}

#[test]
fn crp_collection_properties() {
    let d = Device::reference(64, Countermeasures::NONE).unwrap();
    let raw = collect_crps(&d, 5000, CrpMode::Raw, 9).unwrap();
    let again = collect_crps(&d, 5000, CrpMode::Raw, 9).unwrap();
    assert_eq!(raw, again);
    let unique: HashSet<u64> = raw.iter().map(|c| c.challenge.bits()).collect();
    assert_eq!(unique.len(), 5000);

    let obf = collect_crps(&d, 5000, CrpMode::Obfuscated, 9).unwrap();
    assert!(raw.iter().zip(&obf).all(|(a, b)| a.challenge == b.challenge));
    let differ = raw.iter().zip(&obf).filter(|(a, b)| a.response != b.response).count() as f64;
    assert!((differ / 5000.0 - 0.5).abs() < 0.05, "differ {differ}");

    let bare = collect_raw_crps(&d.apuf, d.votes, 5000, 9).unwrap();
    assert_eq!(bare, raw);
    let u = response_uniformity(&raw);
    assert!((0.0..=1.0).contains(&u));
    assert!(collect_crps(&d, 0, CrpMode::Raw, 9).is_err());
}
