//! Convolutional encoder and SOVA decoder against independent oracles.

mod common;

use idd_core::decoder::{Sova, SovaConfig};
use idd_core::tx::{conv_encode, CodeConfig};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Shift-register encoder written out tap by tap: A = x ⊕ d2 ⊕ d3 ⊕ d5 ⊕ d6,
/// B = x ⊕ d1 ⊕ d2 ⊕ d3 ⊕ d6.
fn register_encode(info: &[u8]) -> Vec<u8> {
    let mut d = [0u8; 7];
    let mut out = Vec::new();
    for &x in info.iter().chain([0u8; 6].iter()) {
        d[0] = x;
        out.push(d[0] ^ d[2] ^ d[3] ^ d[5] ^ d[6]);
        out.push(d[0] ^ d[1] ^ d[2] ^ d[3] ^ d[6]);
        for i in (1..7).rev() {
            d[i] = d[i - 1];
        }
    }
    out
}

/// Viterbi with a correlation metric over an explicit 6-bit register.
fn viterbi_oracle(llr: &[f64]) -> Vec<u8> {
    let steps = llr.len() / 2;
    let mut metric = vec![f64::NEG_INFINITY; 64];
    metric[0] = 0.0;
    let mut back: Vec<Vec<(usize, u8)>> = Vec::with_capacity(steps);
    for j in 0..steps {
        let mut next = vec![f64::NEG_INFINITY; 64];
        let mut from = vec![(0usize, 0u8); 64];
        for (reg, &m) in metric.iter().enumerate() {
            if m == f64::NEG_INFINITY {
                continue;
            }
            // reg bit i holds d_{i+1}
            let d = |i: usize| ((reg >> (i - 1)) & 1) as u8;
            for x in 0..2u8 {
                let a = x ^ d(2) ^ d(3) ^ d(5) ^ d(6);
                let b = x ^ d(1) ^ d(2) ^ d(3) ^ d(6);
                let bm = (2.0 * a as f64 - 1.0) * llr[2 * j] + (2.0 * b as f64 - 1.0) * llr[2 * j + 1];
                let nreg = ((reg << 1) | x as usize) & 63;
                if m + bm > next[nreg] {
                    next[nreg] = m + bm;
                    from[nreg] = (reg, x);
                }
            }
        }
        metric = next;
        back.push(from);
    }
    let mut reg = 0usize;
    let mut bits = vec![0u8; steps];
    for j in (0..steps).rev() {
        let (prev, x) = back[j][reg];
        bits[j] = x;
        reg = prev;
    }
    bits.truncate(steps - 6);
    bits
}

fn sova() -> Sova {
    let c = CodeConfig::ieee80211();
    Sova::new(&c, SovaConfig::for_code(&c)).unwrap()
}

fn noisy_llrs<R: Rng>(coded: &[u8], sigma: f64, rng: &mut R) -> Vec<f64> {
    let n = Normal::new(0.0, sigma).unwrap();
    coded
        .iter()
        .map(|&c| {
            let y = 2.0 * c as f64 - 1.0 + n.sample(rng);
            2.0 * y / (sigma * sigma)
        })
        .collect()
}

#[test]
fn impulse_response_is_the_generator_pair() {
    let mut info = vec![0u8; 10];
    info[0] = 1;
    let out = conv_encode(&info, &CodeConfig::ieee80211()).unwrap();
    let a: Vec<u8> = out.iter().step_by(2).take(7).copied().collect();
    let b: Vec<u8> = out.iter().skip(1).step_by(2).take(7).copied().collect();
    assert_eq!(a, vec![1, 0, 1, 1, 0, 1, 1]);
    assert_eq!(b, vec![1, 1, 1, 1, 0, 0, 1]);
    assert!(out[14..].iter().all(|&v| v == 0));
}

#[test]
fn rejects_empty_and_non_binary_input() {
    let c = CodeConfig::ieee80211();
    assert!(conv_encode(&[], &c).is_err());
    assert!(conv_encode(&[0, 2, 1], &c).is_err());
    assert!(sova().decode(&[0.0f64; 13]).is_err());
}

#[test]
fn sova_matches_viterbi_oracle_on_noisy_frames() {
    let mut rng = common::rng(11);
    let dec = sova();
    for frame in 0..1000 {
        let info: Vec<u8> = (0..100).map(|_| rng.random_range(0..2)).collect();
        let coded = register_encode(&info);
        let sigma = if frame % 2 == 0 { 0.9 } else { 1.2 };
        let llr = noisy_llrs(&coded, sigma, &mut rng);
        let out = dec.decode(&llr).unwrap();
        assert_eq!(out.info_bits, viterbi_oracle(&llr), "frame {frame}");
    }
}

#[test]
fn erroneous_bits_are_less_reliable() {
    // Eb/N0 = 3 dB at rate 1/2: Es/N0 = 0 dB, σ² = 1/2 per real dimension.
    let mut rng = common::rng(5);
    let dec = sova();
    let sigma = 0.5f64.sqrt();
    let (mut good, mut bad) = ((0.0, 0usize), (0.0, 0usize));
    while good.1 + bad.1 < 10_000 {
        let info: Vec<u8> = (0..200).map(|_| rng.random_range(0..2)).collect();
        let llr = noisy_llrs(&register_encode(&info), sigma, &mut rng);
        let out = dec.decode(&llr).unwrap();
        for ((&u, &d), &l) in info.iter().zip(&out.info_bits).zip(&out.info_llr) {
            let slot = if u == d { &mut good } else { &mut bad };
            slot.0 += l.abs();
            slot.1 += 1;
        }
    }
    assert!(bad.1 > 0, "no errors at 3 dB");
    assert!(bad.0 / (bad.1 as f64) < good.0 / good.1 as f64);
}

#[test]
fn extrinsic_sign_follows_decisions_at_high_snr() {
    let mut rng = common::rng(8);
    let info: Vec<u8> = (0..120).map(|_| rng.random_range(0..2)).collect();
    let coded = register_encode(&info);
    let llr = noisy_llrs(&coded, 0.3, &mut rng);
    let out = sova().decode(&llr).unwrap();
    assert_eq!(out.info_bits, info);
    for (&c, &e) in coded.iter().zip(&out.posterior) {
        assert_eq!(c == 1, e > 0.0);
        assert!(e.abs() <= 30.0);
    }
    assert!(out.extrinsic.iter().all(|e| e.abs() <= 30.0));
}

#[test]
fn decoding_commutes_with_codeword_translation() {
    // Flipping the LLR signs on a codeword's support shifts the ML path by
    // that codeword and flips the matching output signs.
    let mut rng = common::rng(21);
    let dec = sova();
    for _ in 0..50 {
        let u: Vec<u8> = (0..80).map(|_| rng.random_range(0..2)).collect();
        let v: Vec<u8> = (0..80).map(|_| rng.random_range(0..2)).collect();
        let llr = noisy_llrs(&register_encode(&u), 1.0, &mut rng);
        let cv = register_encode(&v);
        let flipped: Vec<f64> = llr.iter().zip(&cv).map(|(&l, &c)| if c == 1 { -l } else { l }).collect();
        let a = dec.decode(&llr).unwrap();
        let b = dec.decode(&flipped).unwrap();
        let shifted: Vec<u8> = a.info_bits.iter().zip(&v).map(|(x, y)| x ^ y).collect();
        assert_eq!(b.info_bits, shifted);
        for ((ea, eb), &c) in a.extrinsic.iter().zip(&b.extrinsic).zip(&cv) {
            let expect = if c == 1 { -ea } else { *ea };
            assert!((expect - eb).abs() < 1e-9);
        }
    }
}

proptest! {
    #[test]
    fn encoder_matches_register_and_is_linear(a in proptest::collection::vec(0u8..2, 1..200), seed in any::<u64>()) {
        let c = CodeConfig::ieee80211();
        let ea = conv_encode(&a, &c).unwrap();
        prop_assert_eq!(&ea, &register_encode(&a));
        let mut rng = common::rng(seed);
        let b: Vec<u8> = (0..a.len()).map(|_| rng.random_range(0..2)).collect();
        let ab: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
        let eb = conv_encode(&b, &c).unwrap();
        let sum: Vec<u8> = ea.iter().zip(&eb).map(|(x, y)| x ^ y).collect();
        prop_assert_eq!(conv_encode(&ab, &c).unwrap(), sum);
    }

    #[test]
    fn noiseless_llrs_decode_exactly(info in proptest::collection::vec(0u8..2, 1..150)) {
        let coded = conv_encode(&info, &CodeConfig::ieee80211()).unwrap();
        let llr: Vec<f64> = coded.iter().map(|&c| if c == 1 { 8.0 } else { -8.0 }).collect();
        prop_assert_eq!(sova().decode(&llr).unwrap().info_bits, info);
    }
}
