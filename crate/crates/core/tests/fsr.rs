mod common;

use std::collections::HashSet;
use std::path::PathBuf;

use common::{from_bits, naive_casr_step, naive_fsr_step, naive_nlfsr_step, to_bits};
use keyed_nlfsr::attacks::control_lfsr_spec;
use keyed_nlfsr::bits::STATE_BITS;
use keyed_nlfsr::defaults;
use keyed_nlfsr::fsr::{
    casr_step, clock_tick, concat_state, find_max_length_nlfsr, golden_dump, lfsr_step,
    nlfsr_run, nlfsr_step, output_stream_period, parse_golden, prng_seed, verify_period,
    ClockRandomizer, Coupling, FeedbackSpec, NlfsrConfig, NlfsrPair, Prng,
};
use keyed_nlfsr::BitState;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against a checked-in file; `REGEN_GOLDEN=1` rewrites it.
fn check_golden(name: &str, text: &str) {
    let path = golden_path(name);
    if std::env::var_os("REGEN_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, text).unwrap();
    }
    let stored = std::fs::read_to_string(&path).unwrap();
    assert_eq!(stored, text, "{name} differs from the stored vector");
}

#[test]
fn nlfsr_step_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for coupling in [Coupling::DroppedBit, Coupling::Stage1] {
        let cfg = defaults::nlfsr_config().with_coupling(coupling);
        for _ in 0..10_000 {
            let s: u64 = rng.random::<u64>() & ((1 << 56) - 1);
            let pair = cfg.pair(BitState::new(STATE_BITS, s).unwrap());
            assert_eq!(concat_state(&nlfsr_step(&pair)).bits(), naive_nlfsr_step(s, &cfg));
        }
    }
}

#[test]
fn lfsr_and_casr_steps_match_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for spec in [defaults::prng_lfsr_spec(), control_lfsr_spec()] {
        for _ in 0..10_000 {
            let s = BitState::random(spec.width(), &mut rng).unwrap();
            let expect = from_bits(&naive_fsr_step(&to_bits(s.bits(), spec.width()), &spec));
            assert_eq!(lfsr_step(s, &spec).bits(), expect);
        }
    }
    let rule = defaults::casr_rule();
    for _ in 0..10_000 {
        let s = BitState::random(11, &mut rng).unwrap();
        let expect = from_bits(&naive_casr_step(&to_bits(s.bits(), 11), &rule));
        assert_eq!(casr_step(s, &rule).bits(), expect);
    }
}

#[test]
fn stage1_coupled_linear_pair_composes_lfsr_steps() {
    let a = FeedbackSpec::linear(27, &[0, 4, 9]).unwrap();
    let b = FeedbackSpec::linear(29, &[0, 2, 21]).unwrap();
    let cfg = NlfsrConfig::new(a, b, Coupling::Stage1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let sa = BitState::random(27, &mut rng).unwrap();
        let sb = BitState::random(29, &mut rng).unwrap();
        let next = nlfsr_step(&NlfsrPair::new(cfg, sa, sb).unwrap());
        let la = lfsr_step(sa, &a);
        let lb = lfsr_step(sb, &b);
        let ea = la.bits() ^ (sb.bit(1) as u64) << 26;
        let eb = lb.bits() ^ (sa.bit(1) as u64) << 28;
        assert_eq!((next.a.bits(), next.b.bits()), (ea, eb));
    }
}

#[test]
fn concat_layout_examples() {
    let cfg = defaults::nlfsr_config();
    let p = |a: u64, b: u64| {
        concat_state(
            &NlfsrPair::new(cfg, BitState::new(27, a).unwrap(), BitState::new(29, b).unwrap())
                .unwrap(),
        )
        .bits()
    };
    assert_eq!(p(0, 0), 0);
    assert_eq!(p((1 << 27) - 1, 0), (1 << 27) - 1);
    assert_eq!(p(1, 1), 1 | 1 << 27);
}

#[test]
fn zero_is_fixed_for_all_registers() {
    let cfg = defaults::nlfsr_config();
    let zero = cfg.pair(BitState::zero(56).unwrap());
    assert!(concat_state(&nlfsr_run(&zero, 168)).is_zero());
    assert!(lfsr_step(BitState::zero(56).unwrap(), &control_lfsr_spec()).is_zero());
    assert!(casr_step(BitState::zero(11).unwrap(), &defaults::casr_rule()).is_zero());
}

#[test]
fn prng_register_periods() {
    assert_eq!(verify_period(&defaults::prng_lfsr_spec()).unwrap(), 255);
    assert_eq!(verify_period(&defaults::casr_rule()).unwrap(), 2047);
}

#[test]
fn casr_orbit_is_2047_from_every_nonzero_state() {
    let rule = defaults::casr_rule();
    let mut seen = HashSet::new();
    let mut s = 1u64;
    for _ in 0..2047 {
        assert!(seen.insert(s));
        s = rule.step_bits(s);
    }
    assert_eq!(s, 1);
    assert_eq!(seen.len(), 2047);
}

#[test]
fn prng_output_period_for_several_seeds() {
    for (l, c) in [(0x01, 0x001), (0xa5, 0x3c3), (0xff, 0x7ff)] {
        let p = Prng::new(
            defaults::prng_config(),
            BitState::new(8, l).unwrap(),
            BitState::new(11, c).unwrap(),
        )
        .unwrap();
        assert_eq!(output_stream_period(&p), 521_985);
    }
}

/// Outputs after each step: XOR of the configured (LFSR, CASR) stage pairs.
fn naive_prng_stream(lfsr: u64, casr: u64, n: usize) -> Vec<[bool; 3]> {
    let cfg = defaults::prng_config();
    let mut l = to_bits(lfsr, 8);
    let mut c = to_bits(casr, 11);
    (0..n)
        .map(|_| {
            l = naive_fsr_step(&l, &cfg.lfsr_spec);
            c = naive_casr_step(&c, &cfg.casr_rule);
            cfg.output_taps.map(|(i, j)| l[i as usize] ^ c[j as usize])
        })
        .collect()
}

#[test]
fn prng_golden_stream() {
    let naive = naive_prng_stream(0x01, 0x001, 32);
    let text: String = naive
        .iter()
        .map(|o| format!("{}{}{}\n", o[0] as u8, o[1] as u8, o[2] as u8))
        .collect();
    check_golden("prng_l01_c001.txt", &text);

    let mut p = Prng::new(
        defaults::prng_config(),
        BitState::new(8, 1).unwrap(),
        BitState::new(11, 1).unwrap(),
    )
    .unwrap();
    let fast: Vec<[bool; 3]> = (0..32).map(|_| p.step()).collect();
    assert_eq!(fast, naive);
}

#[test]
fn nlfsr_golden_trajectory() {
    let cfg = defaults::nlfsr_config();
    let mut s = 0x00c0_ffee_1234_5678u64;
    let mut naive = vec![BitState::new(56, s).unwrap()];
    for _ in 0..168 {
        s = naive_nlfsr_step(s, &cfg);
        naive.push(BitState::new(56, s).unwrap());
    }
    let text = golden_dump(&naive);
    check_golden("nlfsr_168.txt", &text);
    assert_eq!(parse_golden(56, &text).unwrap(), naive);

    let mut pair = cfg.pair(naive[0]);
    for expected in &naive[1..] {
        pair = nlfsr_step(&pair);
        assert_eq!(concat_state(&pair), *expected);
    }
}

#[test]
fn prng_seeding_examples() {
    let cfg = defaults::prng_config();
    let p = prng_seed(cfg, &[true; 19]).unwrap();
    assert_eq!((p.lfsr().bits(), p.casr().bits()), (0xff, 0x7ff));
    let mut bits = vec![false; 19];
    bits[10] = true;
    assert!(prng_seed(cfg, &bits).is_err());
    bits[3] = true;
    assert_eq!(prng_seed(cfg, &bits).unwrap(), prng_seed(cfg, &bits).unwrap());
}

#[test]
fn clock_randomizer_pattern() {
    let p0 = prng_seed(defaults::prng_config(), &[true; 19]).unwrap();
    let off = ClockRandomizer::new(false, 0);
    let mut p = p0;
    let mut enabled = 0;
    for _ in 0..100 {
        let (e, next) = clock_tick(&off, &p);
        enabled += e as u32;
        p = next;
    }
    assert_eq!(enabled, 100);

    let on = defaults::clock_randomizer(true);
    let mut p = p0;
    let pattern = on.pattern(&mut p, 255 * 3);
    assert_eq!(pattern[..255], pattern[255..510]);
    assert_eq!(pattern[..255], pattern[510..]);
    assert_eq!(pattern[..255].iter().filter(|e| !**e).count(), 128);
    // Shorter windows do not repeat.
    assert!((1..255).all(|d| pattern[..255] != pattern[d..d + 255]));
}

#[test]
fn search_is_reproducible() {
    let a = find_max_length_nlfsr(7, 500, 11).unwrap();
    let b = find_max_length_nlfsr(7, 500, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(verify_period(&a).unwrap(), 127);
}

/// `x^(2^56 - 1) = 1` and no maximal proper divisor of the order works, in
/// GF(2)[x] modulo the characteristic polynomial.
#[test]
fn control_lfsr_polynomial_is_primitive() {
    const FACTORS: [u64; 8] = [3, 5, 17, 29, 43, 113, 127, 15_790_321];
    let order = (1u64 << 56) - 1;
    assert_eq!(FACTORS.iter().product::<u64>(), order);

    let spec = control_lfsr_spec();
    let poly: u64 = spec.linear_taps().iter().fold(0, |m, &t| m | 1 << t);
    let reduce = |mut a: u64| {
        if a >> 56 & 1 == 1 {
            a ^= (1 << 56) | poly;
        }
        a
    };
    let mul = |mut a: u64, mut b: u64| {
        let mut r = 0u64;
        while b != 0 {
            if b & 1 == 1 {
                r ^= a;
            }
            b >>= 1;
            a = reduce(a << 1);
        }
        r
    };
    let pow_x = |mut e: u64| {
        let (mut r, mut a) = (1u64, 2u64);
        while e != 0 {
            if e & 1 == 1 {
                r = mul(r, a);
            }
            a = mul(a, a);
            e >>= 1;
        }
        r
    };
    assert_eq!(pow_x(order), 1);
    for q in FACTORS {
        assert_ne!(pow_x(order / q), 1, "order divides (2^56-1)/{q}");
    }
}

fn exhaustive_injective(width: u32, step: impl Fn(u64) -> u64) -> bool {
    let mut seen = vec![false; 1 << width];
    (0..1u64 << width).all(|s| !std::mem::replace(&mut seen[step(s) as usize], true))
}

proptest! {
    #[test]
    fn standalone_steps_are_bijections(
        width in 6u32..=12,
        taps in proptest::collection::btree_set(1u32..12, 0..4),
        quad in (1u32..12, 1u32..12),
        rule in 0u64..4096,
    ) {
        let mut t: Vec<u32> = taps.into_iter().filter(|&x| x < width).collect();
        t.insert(0, 0);
        let lin = FeedbackSpec::linear(width, &t).unwrap();
        prop_assert!(exhaustive_injective(width, |s| lin.step_bits(s)));
        let (c, d) = (quad.0 % width, quad.1 % width);
        if c != 0 && d != 0 && c != d {
            let nl = FeedbackSpec::nonlinear(width, &t, (c, d)).unwrap();
            prop_assert!(exhaustive_injective(width, |s| nl.step_bits(s)));
        }
        let _ = rule;
    }

    #[test]
    fn lfsr_step_is_linear(x in 0u64..(1 << 56), y in 0u64..(1 << 56)) {
        let spec = control_lfsr_spec();
        let bx = BitState::new(56, x).unwrap();
        let by = BitState::new(56, y).unwrap();
        prop_assert_eq!(lfsr_step(bx ^ by, &spec), lfsr_step(bx, &spec) ^ lfsr_step(by, &spec));
    }

    #[test]
    fn casr_step_is_linear(x in 0u64..2048, y in 0u64..2048) {
        let rule = defaults::casr_rule();
        prop_assert_eq!(rule.step_bits(x ^ y), rule.step_bits(x) ^ rule.step_bits(y));
    }

    #[test]
    fn run_is_repeated_step(s in 0u64..(1 << 56), n in 0u64..300) {
        let cfg = defaults::nlfsr_config();
        let mut t = s;
        for _ in 0..n {
            t = cfg.step_concat(t);
        }
        prop_assert_eq!(cfg.run_concat(s, n), t);
        prop_assert_eq!(
            concat_state(&nlfsr_run(&cfg.pair(BitState::new(56, s).unwrap()), n)).bits(),
            t
        );
    }

    #[test]
    fn bits_above_width_stay_clear(w in 1u32..=64, v: u64) {
        let s = BitState::truncated(w, v).unwrap();
        prop_assert_eq!(s.bits() >> (w % 64), if w == 64 { v } else { 0 });
        prop_assert_eq!(BitState::from_hex(w, &s.to_hex()).unwrap(), s);
    }
}
