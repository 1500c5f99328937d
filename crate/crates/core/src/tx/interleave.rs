use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Fixed permutation applied to one spatial stream.
///
/// `interleave` produces `out[i] = x[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
}

impl Interleaver {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidInput("permutation is not a bijection".into()));
            }
        }
        Ok(Self { perm })
    }

    pub fn identity(len: usize) -> Self {
        Self {
            perm: (0..len).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..len).collect();
        perm.shuffle(rng);
        Self { perm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn interleave<B: Copy>(&self, x: &[B]) -> Result<Vec<B>> {
        self.check(x.len())?;
        Ok(self.perm.iter().map(|&p| x[p]).collect())
    }

    pub fn deinterleave<B: Copy>(&self, y: &[B]) -> Result<Vec<B>> {
        self.check(y.len())?;
        let mut out = y.to_vec();
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = y[i];
        }
        Ok(out)
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.perm.len() {
            return Err(Error::LengthMismatch {
                expected: self.perm.len(),
                actual: len,
            });
        }
        Ok(())
    }
}
