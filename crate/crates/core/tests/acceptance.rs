//! Acceptance criteria. Runs as a plain binary so every criterion prints one
//! result line; the process fails if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{from_bits, naive_casr_step, naive_fsr_step, naive_nlfsr_step, to_bits, two_path_response};
use keyed_nlfsr::apuf::{apuf_eval_once, apuf_sample, default_noise_sigma};
use keyed_nlfsr::attacks::{
    all_input_bits, avalanche_test, collect_crps, control_lfsr_spec, cpa_attack, split_crps,
    train_ml_attack, CpaTarget, CrpMode, LfsrObfuscator, MlOptions, NlfsrObfuscator,
};
use keyed_nlfsr::bits::STATE_BITS;
use keyed_nlfsr::defaults;
use keyed_nlfsr::fsr::{
    casr_step, concat_state, lfsr_step, nlfsr_step, output_stream_period, verify_period, Prng,
};
use keyed_nlfsr::leakage::{collect_traces, ChallengeSource, LeakageConfig};
use keyed_nlfsr::masking::{dom_and, mask, SharePair};
use keyed_nlfsr::protocol::{
    enroll, equivalent_plain_key, evaluate_masked, evaluate_plain, Countermeasures, Device,
    EnrollOptions, KeyStore, NoiseStreams, Schedule,
};
use keyed_nlfsr::stats::mcnemar_one_sided;
use keyed_nlfsr::BitState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = (bool, String);

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

fn avalanche() -> Outcome {
    let schedule = Schedule::default();
    let obf = NlfsrObfuscator {
        config: defaults::nlfsr_config(),
        schedule,
    };
    let r = avalanche_test(&obf, 10_000, &all_input_bits(), 1).unwrap();
    let s = r.summary();
    let control = avalanche_test(&LfsrObfuscator::control(schedule), 10_000, &all_input_bits(), 1)
        .unwrap();
    let outliers = r.outliers(0.48, 0.52).len();
    (
        outliers == 0 && control.is_binary(),
        format!(
            "nlfsr 56x56 min {:.4} max {:.4} mean {:.4} outliers {outliers}; lfsr control binary {}",
            s.min,
            s.max,
            s.mean,
            control.is_binary()
        ),
    )
}

fn prng_periods() -> Outcome {
    let lfsr = verify_period(&defaults::prng_lfsr_spec()).unwrap();
    let casr = verify_period(&defaults::casr_rule()).unwrap();
    let prng = Prng::new(
        defaults::prng_config(),
        BitState::new(8, 1).unwrap(),
        BitState::new(11, 1).unwrap(),
    )
    .unwrap();
    let stream = output_stream_period(&prng);
    (
        lfsr == 255 && casr == 2047 && stream == 521_985,
        format!("lfsr {lfsr} casr {casr} prng stream {stream}"),
    )
}

fn nlfsr_max_length() -> Outcome {
    let a = verify_period(&defaults::nlfsr_spec_a()).unwrap();
    let b = verify_period(&defaults::nlfsr_spec_b()).unwrap();
    let (ea, eb) = ((1u64 << 27) - 1, (1u64 << 29) - 1);
    (
        a == ea && b == eb,
        format!("27-bit orbit {a} (want {ea}), 29-bit orbit {b} (want {eb})"),
    )
}

fn masked_plain_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for i in 0..100u64 {
        let cm = if i % 2 == 0 {
            Countermeasures::MASKED
        } else {
            Countermeasures::FULL
        };
        let d = enrolled(300 + i, cm);
        let key = equivalent_plain_key(&d).unwrap();
        let c = BitState::random(STATE_BITS, &mut rng).unwrap();
        let streams = rng.random::<u64>();

        let mut twin = d.clone();
        twin.keystore = KeyStore::PlainOtp(key);
        let twin = twin
            .with_countermeasures(Countermeasures {
                masking: false,
                ..cm
            })
            .unwrap();
        let m = evaluate_masked(&d, c, 8, &mut NoiseStreams::from_seed(streams)).unwrap();
        let p = evaluate_plain(&twin, c, 8, &mut NoiseStreams::from_seed(streams)).unwrap();

        // Noiseless reference: unprotected flow on a zero-noise instance.
        let mut quiet = twin.with_countermeasures(Countermeasures::NONE).unwrap();
        quiet.apuf = quiet.apuf.with_noise_sigma(0.0);
        let q = evaluate_plain(&quiet, c, 8, &mut NoiseStreams::from_seed(streams)).unwrap();
        let noiseless_masked: Vec<bool> = m
            .puf_challenges
            .iter()
            .map(|&x| apuf_eval_once(&quiet.apuf, x, 0.0))
            .collect();

        if m.puf_challenges != p.puf_challenges
            || m.puf_challenges != q.puf_challenges
            || m.responses != p.responses
            || noiseless_masked != q.responses
        {
            mismatches += 1;
        }
    }
    (
        mismatches == 0,
        format!("100 configurations, {mismatches} mismatching"),
    )
}

fn masking_soundness() -> Outcome {
    let mut table_ok = true;
    for bits in 0u8..32 {
        let b = |i: u8| bits >> i & 1 == 1;
        let (x, y) = (SharePair::new(b(0), b(1)), SharePair::new(b(2), b(3)));
        table_ok &= dom_and(x, y, b(4)).value() == (x.value() && y.value());
    }

    const N: u64 = 100_000;
    const STATES: usize = 169;
    let cfg = defaults::nlfsr_config();
    let value = BitState::new(STATE_BITS, 0x00a5_5a3c_c3f0_0f96).unwrap();
    let counts = (0..N)
        .into_par_iter()
        .fold(
            || vec![0u32; STATES * 112],
            |mut acc, i| {
                let mut rng = ChaCha8Rng::seed_from_u64(4);
                rng.set_stream(i);
                let mut m = mask(cfg, value, BitState::random(STATE_BITS, &mut rng).unwrap());
                for t in 0..STATES {
                    if t > 0 {
                        m = m.step(rng.random(), rng.random());
                    }
                    for (s, share) in [m.share1, m.share2].iter().enumerate() {
                        let mut v = share.bits();
                        while v != 0 {
                            acc[t * 112 + s * 56 + v.trailing_zeros() as usize] += 1;
                            v &= v - 1;
                        }
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u32; STATES * 112],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let rates: Vec<f64> = counts.iter().map(|&c| c as f64 / N as f64).collect();
    let worst = rates.iter().map(|r| (r - 0.5).abs()).fold(0.0, f64::max);
    (
        table_ok && worst <= 0.01,
        format!(
            "dom_and truth table {}; worst share-bit bias |p-0.5| = {worst:.4} over {STATES} states",
            if table_ok { "ok" } else { "wrong" }
        ),
    )
}

fn cpa_differential() -> Outcome {
    let leak = LeakageConfig {
        noise_sigma: 0.5,
        ..Default::default()
    };
    let plain = Device::reference(5, Countermeasures::NONE).unwrap();
    let k = equivalent_plain_key(&plain).unwrap();
    let set = collect_traces(&plain, 10_000, &ChallengeSource::Random, &leak, 5).unwrap();
    let open = cpa_attack(&set, 8, CpaTarget::FullTrace, Some(k)).unwrap();
    drop(set);

    let guarded = enrolled(5, Countermeasures::FULL);
    let k = equivalent_plain_key(&guarded).unwrap();
    let set = collect_traces(&guarded, 100_000, &ChallengeSource::Random, &leak, 5).unwrap();
    let hidden = cpa_attack(&set, 8, CpaTarget::FullTrace, Some(k)).unwrap();
    let mean = hidden.mean_true_rank().unwrap();
    (
        open.full_recovery() && (96.0..=160.0).contains(&mean),
        format!(
            "unprotected ranks {:?} at 1e4; masked+clkrnd ranks {:?} mean {mean:.1} at 1e5",
            open.true_ranks().unwrap(),
            hidden.true_ranks().unwrap()
        ),
    )
}

fn modeling_differential() -> Outcome {
    let d = Device::reference(6, Countermeasures::NONE).unwrap();
    let quiet = Device {
        apuf: d.apuf.with_noise_sigma(0.0),
        ..d
    };
    let opts = MlOptions {
        seed: 6,
        ..Default::default()
    };
    let run = |mode| {
        let crps = collect_crps(&quiet, 110_000, mode, 6).unwrap();
        let (train, test) = split_crps(&crps, 10_000).unwrap();
        train_ml_attack(train, test, &opts).unwrap()
    };
    let raw = run(CrpMode::Raw);
    let obf = run(CrpMode::Obfuscated);
    let bias = obf.majority_baseline();
    (
        raw.test_accuracy >= 0.95 && obf.test_accuracy <= bias + 0.03,
        format!(
            "raw test accuracy {:.4}; obfuscated {:.4} vs uniformity bias {bias:.4} (+0.03)",
            raw.test_accuracy, obf.test_accuracy
        ),
    )
}

fn stability() -> Outcome {
    let inst = apuf_sample(7, 1.0, default_noise_sigma(1.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut single, mut voted, mut only_single, mut only_voted) = (0u64, 0u64, 0u64, 0u64);
    for _ in 0..10_000 {
        let c = BitState::random(STATE_BITS, &mut rng).unwrap();
        let truth = apuf_eval_once(&inst, c, 0.0);
        let s = inst.eval_noisy(c, &mut rng) != truth;
        let v = inst.eval_voted(c, 7, &mut rng).unwrap() != truth;
        single += s as u64;
        voted += v as u64;
        only_single += (s && !v) as u64;
        only_voted += (v && !s) as u64;
    }
    let (z, p) = mcnemar_one_sided(only_voted, only_single);
    (
        voted < single && p < 0.001,
        format!("flips 1-vote {single} 7-vote {voted} of 1e4; McNemar z {z:.2} p {p:.2e}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut bad = [0u32; 4];
    let cfg = defaults::nlfsr_config();
    let lfsrs = [defaults::prng_lfsr_spec(), control_lfsr_spec()];
    let rule = defaults::casr_rule();
    for i in 0..10_000u64 {
        let s = BitState::random(STATE_BITS, &mut rng).unwrap();
        bad[0] += (concat_state(&nlfsr_step(&cfg.pair(s))).bits() != naive_nlfsr_step(s.bits(), &cfg))
            as u32;
        for spec in &lfsrs {
            let x = BitState::random(spec.width(), &mut rng).unwrap();
            let naive = from_bits(&naive_fsr_step(&to_bits(x.bits(), spec.width()), spec));
            bad[1] += (lfsr_step(x, spec).bits() != naive) as u32;
        }
        let x = BitState::random(11, &mut rng).unwrap();
        bad[2] += (casr_step(x, &rule).bits() != from_bits(&naive_casr_step(&to_bits(x.bits(), 11), &rule)))
            as u32;
        let inst = apuf_sample(i, 1.0, default_noise_sigma(1.0)).unwrap();
        let c = BitState::random(STATE_BITS, &mut rng).unwrap();
        let noise = inst.draw_noise(&mut rng);
        bad[3] += (apuf_eval_once(&inst, c, noise) != two_path_response(&inst, c, noise)) as u32;
    }
    (
        bad == [0; 4],
        format!(
            "mismatches nlfsr {} lfsr {} casr {} apuf {} (1e4 each)",
            bad[0], bad[1], bad[2], bad[3]
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 avalanche", avalanche),
        ("2 prng periods", prng_periods),
        ("2 nlfsr maximum length", nlfsr_max_length),
        ("3 masked/plain equivalence", masked_plain_equivalence),
        ("4 masking soundness", masking_soundness),
        ("5 cpa differential", cpa_differential),
        ("6 modeling differential", modeling_differential),
        ("7 stability", stability),
        ("8 oracle equivalence", oracle_equivalence),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| (false, format!("panicked: {e:?}")));
        failed += !ok as u32;
        println!(
            "criterion {name}: {} ({:.1}s) {detail}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
