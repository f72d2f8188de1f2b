//! Naive reference models shared by the integration tests. They work on
//! `Vec<bool>` registers and recompute everything bit by bit.
#![allow(dead_code)]

use keyed_nlfsr::apuf::{ApufInstance, FEATURES, STAGES};
use keyed_nlfsr::fsr::{CasrRule, CellRule, Coupling, FeedbackSpec, NlfsrConfig};
use keyed_nlfsr::BitState;

pub fn to_bits(value: u64, width: u32) -> Vec<bool> {
    (0..width).map(|i| (value >> i) & 1 == 1).collect()
}

pub fn from_bits(bits: &[bool]) -> u64 {
    bits.iter()
        .enumerate()
        .map(|(i, &b)| (b as u64) << i)
        .sum()
}

fn feedback(reg: &[bool], spec: &FeedbackSpec) -> bool {
    let mut f = false;
    for t in spec.linear_taps() {
        f ^= reg[t as usize];
    }
    if let Some((c, d)) = spec.quadratic_tap() {
        f ^= reg[c as usize] && reg[d as usize];
    }
    f
}

fn shift_in(reg: &[bool], top: bool) -> Vec<bool> {
    let mut next: Vec<bool> = reg[1..].to_vec();
    next.push(top);
    next
}

pub fn naive_fsr_step(reg: &[bool], spec: &FeedbackSpec) -> Vec<bool> {
    shift_in(reg, feedback(reg, spec))
}

pub fn naive_nlfsr_step(state: u64, config: &NlfsrConfig) -> u64 {
    let wa = config.spec_a().width();
    let wb = config.spec_b().width();
    let all = to_bits(state, wa + wb);
    let (a, b) = all.split_at(wa as usize);
    let k = match config.coupling() {
        Coupling::DroppedBit => 0,
        Coupling::Stage1 => 1,
    };
    let fa = feedback(a, config.spec_a()) ^ b[k];
    let fb = feedback(b, config.spec_b()) ^ a[k];
    let mut next = shift_in(a, fa);
    next.extend(shift_in(b, fb));
    from_bits(&next)
}

pub fn naive_nlfsr_run(mut state: u64, config: &NlfsrConfig, cycles: usize) -> u64 {
    for _ in 0..cycles {
        state = naive_nlfsr_step(state, config);
    }
    state
}

pub fn naive_casr_step(reg: &[bool], rule: &CasrRule) -> Vec<bool> {
    let n = reg.len();
    let cells = rule.cells();
    (0..n)
        .map(|i| {
            let left = if i > 0 { reg[i - 1] } else { false };
            let right = if i + 1 < n { reg[i + 1] } else { false };
            let own = cells[i] == CellRule::Rule150 && reg[i];
            left ^ right ^ own
        })
        .collect()
}

/// Two-path delay accumulation: each stage adds its delays to the top and
/// bottom paths and swaps them when its challenge bit is set.
pub fn two_path_response(inst: &ApufInstance, challenge: BitState, noise: f64) -> bool {
    let w = inst.weights();
    let (mut top, mut bottom) = (0.0f64, 0.0f64);
    for (i, wi) in w.iter().enumerate().take(STAGES) {
        let base = 10.0 + i as f64;
        let mut t = top + base + wi / 2.0;
        let mut b = bottom + base - wi / 2.0;
        if challenge.bit(i as u32) {
            std::mem::swap(&mut t, &mut b);
        }
        top = t;
        bottom = b;
    }
    // Swaps after stage i invert every later difference, so the accumulated
    // difference equals the parity-weighted sum.
    top - bottom + w[FEATURES - 1] + noise > 0.0
}
