use num_traits::Zero;

use crate::scalar::{Cx, Real};

/// Complex samples indexed by `(OFDM symbol, tone, antenna)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub n_sym: usize,
    pub n_sc: usize,
    pub width: usize,
    data: Vec<Cx<T>>,
}

impl<T: Real> Grid<T> {
    pub fn zeros(n_sym: usize, n_sc: usize, width: usize) -> Self {
        Self {
            n_sym,
            n_sc,
            width,
            data: vec![Cx::zero(); n_sym * n_sc * width],
        }
    }

    /// Antenna vector at `(symbol, tone)`.
    #[inline]
    pub fn at(&self, sym: usize, tone: usize) -> &[Cx<T>] {
        let o = (sym * self.n_sc + tone) * self.width;
        &self.data[o..o + self.width]
    }

    #[inline]
    pub fn at_mut(&mut self, sym: usize, tone: usize) -> &mut [Cx<T>] {
        let o = (sym * self.n_sc + tone) * self.width;
        &mut self.data[o..o + self.width]
    }

    pub fn as_slice(&self) -> &[Cx<T>] {
        &self.data
    }
}
