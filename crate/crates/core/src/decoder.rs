//! Soft-output Viterbi decoding of the terminated convolutional code.

use crate::demapper::clip;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tx::{CodeConfig, Trellis};

#[derive(Debug, Clone, PartialEq)]
pub struct SovaConfig {
    /// Depth over which competitor paths update reliabilities.
    pub window: usize,
    /// Scaling applied to the extrinsic output.
    pub extrinsic_scale: f64,
    pub l_max: f64,
}

impl SovaConfig {
    /// Window `5·K`, scaling 0.75, saturation ±30.
    pub fn for_code(code: &CodeConfig) -> Self {
        Self {
            window: 5 * code.constraint_length,
            extrinsic_scale: 0.75,
            l_max: crate::demapper::L_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SovaOutput<T> {
    /// `scale·(L_out − L_in)` per coded bit with the unsaturated `L_out`,
    /// clipped.
    pub extrinsic: Vec<T>,
    /// Output LLR per coded bit, clipped.
    pub posterior: Vec<T>,
    /// Maximum-likelihood information bits (tail removed).
    pub info_bits: Vec<u8>,
    /// Signed reliability of each information bit.
    pub info_llr: Vec<T>,
}

/// Decoder with a prebuilt trellis.
#[derive(Debug, Clone)]
pub struct Sova {
    trellis: Trellis,
    code: CodeConfig,
    cfg: SovaConfig,
}

impl Sova {
    pub fn new(code: &CodeConfig, cfg: SovaConfig) -> Result<Self> {
        if !(cfg.l_max > 0.0) || !(cfg.extrinsic_scale >= 0.0) {
            return Err(Error::InvalidConfig("SOVA clip must be > 0 and scale >= 0".into()));
        }
        Ok(Self {
            trellis: Trellis::new(code)?,
            code: code.clone(),
            cfg,
        })
    }

    pub fn config(&self) -> &SovaConfig {
        &self.cfg
    }

    /// Decodes one terminated block. `coded` holds one LLR per coded bit.
    pub fn decode<T: Real>(&self, coded: &[T]) -> Result<SovaOutput<T>> {
        let tr = &self.trellis;
        let n_out = tr.outputs;
        let info_len = self
            .code
            .info_len(coded.len())
            .ok_or_else(|| Error::InvalidInput(format!("{} LLRs do not form a terminated block", coded.len())))?;
        let steps = coded.len() / n_out;
        let ns = tr.states;
        let half = T::lit(0.5);

        let branch = |word: u32, llr: &[T]| -> T {
            (0..n_out)
                .map(|o| if (word >> o) & 1 == 1 { half * llr[o] } else { -half * llr[o] })
                .sum()
        };

        let mut metric = vec![T::neg_infinity(); ns];
        metric[0] = T::zero();
        let mut choice = vec![0u8; steps * ns];
        let mut delta = vec![T::infinity(); steps * ns];
        let mut next = vec![T::neg_infinity(); ns];
        for j in 0..steps {
            let llr = &coded[j * n_out..(j + 1) * n_out];
            for (s, nm) in next.iter_mut().enumerate() {
                let [(p0, u), (p1, _)] = tr.predecessors(s);
                let c0 = metric[p0] + branch(tr.output[p0][u], llr);
                let c1 = metric[p1] + branch(tr.output[p1][u], llr);
                let (best, other, pick) = if c1 > c0 { (c1, c0, 1) } else { (c0, c1, 0) };
                *nm = best;
                choice[j * ns + s] = pick;
                delta[j * ns + s] = if other == T::neg_infinity() { T::infinity() } else { best - other };
            }
            std::mem::swap(&mut metric, &mut next);
        }

        // ML path, terminated in state 0
        let mut path = vec![0usize; steps + 1];
        for j in (0..steps).rev() {
            let s = path[j + 1];
            path[j] = tr.predecessors(s)[choice[j * ns + s] as usize].0;
        }
        let input_of = |s: usize| s / (ns / 2);

        let mut rel_info = vec![T::infinity(); steps];
        let mut rel_coded = vec![T::infinity(); steps * n_out];
        for t in 1..=steps {
            let s = path[t];
            let d = delta[(t - 1) * ns + s];
            if d == T::infinity() {
                continue;
            }
            let alt = tr.predecessors(s)[1 - choice[(t - 1) * ns + s] as usize].0;
            // branch entering s from the competitor
            let mut c_state = alt;
            let mut c_next = s;
            let mut j = t - 1;
            let lo = t.saturating_sub(self.cfg.window);
            loop {
                let u_ml = input_of(path[j + 1]);
                let u_c = input_of(c_next);
                if u_ml != u_c {
                    rel_info[j] = rel_info[j].min(d);
                }
                let diff = tr.output[path[j]][u_ml] ^ tr.output[c_state][u_c];
                for o in 0..n_out {
                    if (diff >> o) & 1 == 1 {
                        rel_coded[j * n_out + o] = rel_coded[j * n_out + o].min(d);
                    }
                }
                if j == lo || j == 0 || c_state == path[j] {
                    break;
                }
                let prev = tr.predecessors(c_state)[choice[(j - 1) * ns + c_state] as usize].0;
                c_next = c_state;
                c_state = prev;
                j -= 1;
            }
        }

        let l_max = T::lit(self.cfg.l_max);
        let scale = T::lit(self.cfg.extrinsic_scale);
        let mut posterior = Vec::with_capacity(coded.len());
        let mut extrinsic = Vec::with_capacity(coded.len());
        for j in 0..steps {
            let word = tr.output[path[j]][input_of(path[j + 1])];
            for o in 0..n_out {
                // The difference is taken before saturation so that strong
                // inputs keep a meaningful extrinsic value.
                let r = rel_coded[j * n_out + o];
                let sign = if (word >> o) & 1 == 1 { T::one() } else { -T::one() };
                posterior.push(sign * r.min(l_max));
                let e = if r.is_finite() {
                    clip(scale * (sign * r - coded[j * n_out + o]), l_max)
                } else if scale > T::zero() {
                    sign * l_max
                } else {
                    T::zero()
                };
                extrinsic.push(e);
            }
        }
        let info_bits: Vec<u8> = (0..info_len).map(|j| input_of(path[j + 1]) as u8).collect();
        let info_llr = info_bits
            .iter()
            .zip(&rel_info)
            .map(|(&b, &r)| {
                let r = r.min(l_max);
                if b == 1 { r } else { -r }
            })
            .collect();
        Ok(SovaOutput {
            extrinsic,
            posterior,
            info_bits,
            info_llr,
        })
    }
}

/// One-shot convenience wrapper around [`Sova`].
pub fn sova_decode<T: Real>(coded: &[T], code: &CodeConfig, cfg: &SovaConfig) -> Result<SovaOutput<T>> {
    Sova::new(code, cfg.clone())?.decode(coded)
}
