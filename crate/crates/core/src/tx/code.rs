//! Binary convolutional code and its trellis.

use crate::error::{Error, Result};

/// Feed-forward convolutional code description.
///
/// Generators are written in octal with the most significant tap applied to
/// the newest input bit, the usual convention for the 802.11 `133/171` pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeConfig {
    pub constraint_length: usize,
    pub generators: Vec<u32>,
    /// Zero bits appended to drive the encoder back to state 0.
    pub tail_bits: usize,
}

impl Default for CodeConfig {
    fn default() -> Self {
        Self::ieee80211()
    }
}

impl CodeConfig {
    /// K = 7, rate 1/2, g₀ = 133₈, g₁ = 171₈, zero-tail terminated.
    pub fn ieee80211() -> Self {
        Self {
            constraint_length: 7,
            generators: vec![0o133, 0o171],
            tail_bits: 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.constraint_length;
        if !(2..=16).contains(&k) {
            return Err(Error::InvalidConfig(format!("constraint length {k} outside 2..=16")));
        }
        if self.generators.is_empty() {
            return Err(Error::InvalidConfig("no generator polynomials".into()));
        }
        for &g in &self.generators {
            if g == 0 || g >> k != 0 {
                return Err(Error::InvalidConfig(format!(
                    "generator {g:o} is zero or wider than the constraint length {k}"
                )));
            }
        }
        if self.tail_bits != k - 1 {
            return Err(Error::InvalidConfig(format!(
                "zero-tail termination needs {} tail bits, got {}",
                k - 1,
                self.tail_bits
            )));
        }
        Ok(())
    }

    /// Coded bits per input bit (rate denominator).
    pub fn outputs(&self) -> usize {
        self.generators.len()
    }

    /// Rate as `(numerator, denominator)`.
    pub fn rate(&self) -> (usize, usize) {
        (1, self.outputs())
    }

    pub fn states(&self) -> usize {
        1 << (self.constraint_length - 1)
    }

    pub fn coded_len(&self, info_len: usize) -> usize {
        self.outputs() * (info_len + self.tail_bits)
    }

    /// Number of information bits carried by a terminated block of
    /// `coded_len` bits, if that length is admissible.
    pub fn info_len(&self, coded_len: usize) -> Option<usize> {
        let n = self.outputs();
        if coded_len % n != 0 {
            return None;
        }
        (coded_len / n).checked_sub(self.tail_bits).filter(|&k| k > 0)
    }
}

/// State-transition tables. A state holds the previous `K-1` inputs with
/// the most recent one in the most significant position.
#[derive(Debug, Clone)]
pub struct Trellis {
    pub states: usize,
    pub outputs: usize,
    /// `next[state][input]`
    pub next: Vec<[usize; 2]>,
    /// Coded output word for `(state, input)`; bit `i` is generator `i`.
    pub output: Vec<[u32; 2]>,
}

impl Trellis {
    pub fn new(cfg: &CodeConfig) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.constraint_length;
        let states = cfg.states();
        let mut next = Vec::with_capacity(states);
        let mut output = Vec::with_capacity(states);
        for s in 0..states {
            let mut nx = [0; 2];
            let mut out = [0; 2];
            for u in 0..2usize {
                let reg = (u << (k - 1)) | s;
                nx[u] = reg >> 1;
                out[u] = cfg
                    .generators
                    .iter()
                    .enumerate()
                    .fold(0u32, |w, (i, &g)| w | ((((reg as u32) & g).count_ones() & 1) << i));
            }
            next.push(nx);
            output.push(out);
        }
        Ok(Self {
            states,
            outputs: cfg.outputs(),
            next,
            output,
        })
    }

    /// Predecessors of `state` as `(previous_state, input)`. The input bit is
    /// the same for both and equals the state's most significant bit.
    #[inline]
    pub fn predecessors(&self, state: usize) -> [(usize, usize); 2] {
        let input = state / (self.states / 2);
        let base = (state << 1) & (self.states - 1);
        [(base, input), (base | 1, input)]
    }
}

/// Encodes `info` and appends the zero tail.
pub fn conv_encode(info: &[u8], cfg: &CodeConfig) -> Result<Vec<u8>> {
    if info.is_empty() {
        return Err(Error::InvalidInput("empty information block".into()));
    }
    if let Some(b) = info.iter().find(|&&b| b > 1) {
        return Err(Error::InvalidInput(format!("non-binary input value {b}")));
    }
    let trellis = Trellis::new(cfg)?;
    let mut out = Vec::with_capacity(cfg.coded_len(info.len()));
    let mut state = 0usize;
    for &u in info.iter().chain(std::iter::repeat_n(&0u8, cfg.tail_bits)) {
        let word = trellis.output[state][u as usize];
        out.extend((0..trellis.outputs).map(|i| ((word >> i) & 1) as u8));
        state = trellis.next[state][u as usize];
    }
    debug_assert_eq!(state, 0);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_generators() {
        let mut c = CodeConfig::ieee80211();
        c.generators = vec![0o133, 0];
        assert!(c.validate().is_err());
        c.generators = vec![0o333];
        assert!(c.validate().is_err());
    }

    #[test]
    fn predecessors_lead_to_state() {
        let t = Trellis::new(&CodeConfig::ieee80211()).unwrap();
        for s in 0..t.states {
            for (p, u) in t.predecessors(s) {
                assert_eq!(t.next[p][u], s);
            }
        }
    }

    #[test]
    fn info_len_roundtrip() {
        let c = CodeConfig::ieee80211();
        assert_eq!(c.info_len(c.coded_len(100)), Some(100));
        assert_eq!(c.info_len(13), None);
        assert_eq!(c.info_len(12), None);
    }
}
