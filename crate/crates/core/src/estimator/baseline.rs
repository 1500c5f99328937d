//! Decision-directed least-squares baseline blended with the preamble
//! estimate.


use super::FeedbackRow;
use crate::error::{ensure_len, Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::{Cx, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct EmDdState<T> {
    /// Preamble estimate, kept for blending.
    pub h_pre: Vec<Cx<T>>,
    pub h: Vec<Cx<T>>,
    /// Noise estimate handed to the demappers.
    pub noise: T,
    /// Mean residual power of the blended estimate over the last window.
    pub resid: T,
    pub n0: T,
    /// Error variance of the preamble estimate, `N_t·N₀/N_tr`.
    pub sigma_p: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmDdReport<T> {
    pub n_d: usize,
    /// LS estimate from the window, if it was determined.
    pub h_ls: Option<Vec<Cx<T>>>,
    /// Per-stream weight on the preamble estimate.
    pub a: Vec<T>,
}

impl<T: Real> EmDdState<T> {
    pub fn new(h_pre: Vec<Cx<T>>, n0: T, sigma_p: T) -> Self {
        Self {
            h: h_pre.clone(),
            h_pre,
            noise: n0,
            resid: n0,
            n0,
            sigma_p,
        }
    }

    fn fall_back(&mut self, n_d: usize) -> EmDdReport<T> {
        self.h = self.h_pre.clone();
        self.noise = self.n0;
        self.resid = self.n0;
        EmDdReport {
            n_d,
            h_ls: None,
            a: vec![T::one(); self.h.len()],
        }
    }

    /// Recomputes the estimate from the current window. The LS error
    /// variance uses the unbiased residual variance, so the window must hold
    /// more rows than streams.
    pub fn step(&mut self, rows: &[FeedbackRow<T>], z: &[Cx<T>]) -> Result<EmDdReport<T>> {
        ensure_len(rows.len(), z.len())?;
        let nt = self.h.len();
        let n_d = rows.len();
        if n_d <= nt {
            return Ok(self.fall_back(n_d));
        }
        let s = CMatrix::from_fn(n_d, nt, |d, t| rows[d].mean[t]);
        let sh = s.adjoint();
        let gram = &sh * &s;
        let inv = match gram.hpd_inverse() {
            Ok(v) if !v.regularized => v.inverse,
            Ok(_) | Err(Error::Singular) => return Ok(self.fall_back(n_d)),
            Err(e) => return Err(e),
        };
        let h_ls = inv.mul_vec(&sh.mul_vec(z)?)?;
        let fit = s.mul_vec(&h_ls)?;
        let var: T = z.iter().zip(&fit).map(|(a, b)| (a - b).norm_sqr()).sum::<T>() / T::lit((n_d - nt) as f64);
        let var = var.max(self.n0);
        let mut a = Vec::with_capacity(nt);
        for t in 0..nt {
            let so = var * inv[(t, t)].re;
            let denom = self.sigma_p + so;
            let (wa, wb) = if denom > T::zero() {
                (so / denom, self.sigma_p / denom)
            } else {
                (T::zero(), T::one())
            };
            self.h[t] = self.h_pre[t] * wa + h_ls[t] * wb;
            a.push(wa);
        }
        let fit = s.mul_vec(&self.h)?;
        self.resid = z.iter().zip(&fit).map(|(a, b)| (a - b).norm_sqr()).sum::<T>() / T::lit(n_d as f64);
        self.noise = self.resid.max(self.n0);
        Ok(EmDdReport {
            n_d,
            h_ls: Some(h_ls),
            a,
        })
    }
}

/// `(S̃ᴴS̃)⁻¹S̃ᴴz`, or `None` if the window does not determine it.
pub fn least_squares<T: Real>(s: &CMatrix<T>, z: &[Cx<T>]) -> Option<Vec<Cx<T>>> {
    if s.rows() < s.cols() {
        return None;
    }
    let sh = s.adjoint();
    let inv = (&sh * s).hpd_inverse().ok().filter(|v| !v.regularized)?;
    inv.inverse.mul_vec(&sh.mul_vec(z).ok()?).ok()
}
