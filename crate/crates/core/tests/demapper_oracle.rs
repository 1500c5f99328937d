//! MAP demapper against exhaustive enumeration written from first principles.

mod common;

use idd_core::demapper::{map_demap, mmse_demap};
use idd_core::tx::ModulationConfig;
use idd_core::{cx, CMatrix, Cx};
use proptest::prelude::*;
use rand::Rng;

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Posterior LLRs by summing over every transmit vector.
fn oracle(z: &[Cx<f64>], h: &CMatrix<f64>, noise: &[f64], priors: &[f64], m: &ModulationConfig<f64>) -> Vec<f64> {
    let (nr, nt) = (h.rows(), h.cols());
    let q = m.bits_per_symbol;
    let hyps = m.order.pow(nt as u32);
    let mut terms: Vec<(Vec<u8>, f64)> = Vec::with_capacity(hyps);
    for idx in 0..hyps {
        let labels: Vec<usize> = (0..nt).map(|t| (idx / m.order.pow(t as u32)) % m.order).collect();
        let bits: Vec<u8> = labels.iter().flat_map(|&l| m.bits_of(l)).collect();
        let mut lp = 0.0;
        for r in 0..nr {
            let mut y = z[r];
            for t in 0..nt {
                y -= h[(r, t)] * m.points[labels[t]];
            }
            lp -= y.norm_sqr() / noise[r];
        }
        for (&b, &l) in bits.iter().zip(priors) {
            // ln P(b) with P(1) = 1/(1+e^{-L})
            lp += if b == 1 { -(-l).exp().ln_1p() } else { -l.exp().ln_1p() };
        }
        terms.push((bits, lp));
    }
    (0..q * nt)
        .map(|i| {
            let one: Vec<f64> = terms.iter().filter(|(b, _)| b[i] == 1).map(|(_, v)| *v).collect();
            let zero: Vec<f64> = terms.iter().filter(|(b, _)| b[i] == 0).map(|(_, v)| *v).collect();
            log_sum_exp(&one) - log_sum_exp(&zero)
        })
        .collect()
}

fn random_case<R: Rng>(rng: &mut R, nt: usize, nr: usize, prior_scale: f64) -> (Vec<Cx<f64>>, CMatrix<f64>, Vec<f64>, Vec<f64>) {
    let m = ModulationConfig::<f64>::qam16();
    let g = |rng: &mut R| cx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let h = CMatrix::from_fn(nr, nt, |_, _| g(rng));
    let s: Vec<Cx<f64>> = (0..nt).map(|_| m.points[rng.random_range(0..16)]).collect();
    let noise: Vec<f64> = (0..nr).map(|_| rng.random_range(0.05..0.6)).collect();
    let z: Vec<Cx<f64>> = h
        .mul_vec(&s)
        .unwrap()
        .into_iter()
        .zip(&noise)
        .map(|(v, &n)| v + g(rng) * n.sqrt())
        .collect();
    let priors: Vec<f64> = (0..4 * nt)
        .map(|_| if prior_scale > 0.0 { rng.random_range(-prior_scale..prior_scale) } else { 0.0 })
        .collect();
    (z, h, noise, priors)
}

#[test]
fn two_by_two_matches_256_hypothesis_sum() {
    let m = ModulationConfig::<f64>::qam16();
    let mut rng = common::rng(3);
    for case in 0..200 {
        let (z, h, noise, priors) = random_case(&mut rng, 2, 2, if case % 2 == 0 { 0.0 } else { 4.0 });
        let out = map_demap(&z, &h, &noise, &priors, &m, 30.0).unwrap();
        let want = oracle(&z, &h, &noise, &priors, &m);
        for i in 0..8 {
            if want[i].abs() < 29.0 {
                assert!((out.posterior[i] - want[i]).abs() < 1e-8, "case {case} bit {i}: {} vs {}", out.posterior[i], want[i]);
                assert!((out.extrinsic[i] - (want[i] - priors[i])).abs() < 1e-8);
            } else {
                assert_eq!(out.posterior[i].signum(), want[i].signum());
            }
        }
    }
}

#[test]
fn single_stream_matches_enumeration_for_qpsk_and_64qam() {
    let mut rng = common::rng(4);
    for order in [4, 64] {
        let m = ModulationConfig::<f64>::qam(order).unwrap();
        let q = m.bits_per_symbol;
        for _ in 0..50 {
            let h = CMatrix::from_fn(2, 1, |_, _| cx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let s = m.points[rng.random_range(0..order)];
            let z: Vec<Cx<f64>> = (0..2).map(|r| h[(r, 0)] * s + cx(rng.random_range(-0.2..0.2), 0.1)).collect();
            let noise = vec![0.2, 0.3];
            let priors: Vec<f64> = (0..q).map(|_| rng.random_range(-2.0..2.0)).collect();
            let out = map_demap(&z, &h, &noise, &priors, &m, 30.0).unwrap();
            let want = oracle(&z, &h, &noise, &priors, &m);
            for i in 0..q {
                if want[i].abs() < 29.0 {
                    assert!((out.posterior[i] - want[i]).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn mmse_equals_map_sign_for_a_clean_scalar_channel() {
    let m = ModulationConfig::<f64>::qam16();
    let h = CMatrix::from_fn(1, 1, |_, _| cx(0.8, -0.3));
    for label in 0..16 {
        let z = vec![h[(0, 0)] * m.points[label]];
        let out = mmse_demap(&z, &h, &[1e-3], &[0.0; 4], &m, 30.0).unwrap();
        for (i, &l) in out.posterior.iter().enumerate() {
            assert_eq!(l > 0.0, m.label_bit(label, i) == 1, "label {label} bit {i}");
        }
    }
}

proptest! {
    #[test]
    fn outputs_are_clipped_and_finite(seed in any::<u64>(), scale in 0.0f64..30.0) {
        let m = ModulationConfig::<f64>::qam16();
        let mut rng = common::rng(seed);
        let (z, h, noise, priors) = random_case(&mut rng, 2, 2, scale);
        let out = map_demap(&z, &h, &noise, &priors, &m, 30.0).unwrap();
        for v in out.posterior.iter().chain(&out.extrinsic) {
            prop_assert!(v.is_finite() && v.abs() <= 30.0);
        }
    }
}
