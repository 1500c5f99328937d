//! Soft-input soft-output MIMO demappers and LLR/soft-symbol conversions.
//!
//! LLRs are `ln P(b=1)/P(b=0)`. Per-tone bit vectors are ordered
//! `[stream][bit]`, first bit most significant in the constellation label.

use num_traits::Zero;

use crate::error::{ensure_len, Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::{Cx, Real};
use crate::tx::ModulationConfig;

/// Default LLR saturation.
pub const L_MAX: f64 = 30.0;

/// `P(b = 1)` for an LLR.
#[inline]
pub fn prob_one<T: Real>(l: T) -> T {
    if l >= T::zero() {
        T::one() / (T::one() + (-l).exp())
    } else {
        let e = l.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn clip<T: Real>(l: T, l_max: T) -> T {
    l.max(-l_max).min(l_max)
}

/// `ln(e^a + e^b)` without overflow.
#[inline]
fn log_add<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// LLRs for every `(tone, stream, bit)` of one OFDM symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrFrame<T> {
    pub n_sc: usize,
    /// Bits per tone, `Q·N_t`.
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> LlrFrame<T> {
    pub fn zeros(n_sc: usize, width: usize) -> Self {
        Self {
            n_sc,
            width,
            data: vec![T::zero(); n_sc * width],
        }
    }

    pub fn from_vec(n_sc: usize, width: usize, data: Vec<T>) -> Result<Self> {
        ensure_len(n_sc * width, data.len())?;
        Ok(Self { n_sc, width, data })
    }

    #[inline]
    pub fn tone(&self, k: usize) -> &[T] {
        &self.data[k * self.width..(k + 1) * self.width]
    }

    #[inline]
    pub fn tone_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.data[k * self.width..(k + 1) * self.width]
    }
}

/// Soft symbol mean and decision-error variance per `(tone, stream)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSymbolFrame<T> {
    pub n_sc: usize,
    pub n_tx: usize,
    pub mean: Vec<Cx<T>>,
    pub var: Vec<T>,
}

impl<T: Real> SoftSymbolFrame<T> {
    pub fn from_llrs(llrs: &LlrFrame<T>, modulation: &ModulationConfig<T>) -> Result<Self> {
        let q = modulation.bits_per_symbol;
        if llrs.width % q != 0 {
            return Err(Error::Dimension(format!("{} bits per tone is not a multiple of Q={q}", llrs.width)));
        }
        let n_tx = llrs.width / q;
        let mut mean = Vec::with_capacity(llrs.n_sc * n_tx);
        let mut var = Vec::with_capacity(llrs.n_sc * n_tx);
        for chunk in llrs.data.chunks(q) {
            let (m, v) = soft_symbol_stats(chunk, modulation)?;
            mean.push(m);
            var.push(v);
        }
        Ok(Self {
            n_sc: llrs.n_sc,
            n_tx,
            mean,
            var,
        })
    }

    #[inline]
    pub fn mean_at(&self, k: usize) -> &[Cx<T>] {
        &self.mean[k * self.n_tx..(k + 1) * self.n_tx]
    }

    #[inline]
    pub fn var_at(&self, k: usize) -> &[T] {
        &self.var[k * self.n_tx..(k + 1) * self.n_tx]
    }
}

/// Per receive antenna noise-plus-estimation-error variance `N̂₀^(r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveNoise<T>(pub Vec<T>);

impl<T: Real> EffectiveNoise<T> {
    pub fn uniform(n_rx: usize, n0: T) -> Self {
        Self(vec![n0; n_rx])
    }
}

/// Prior probability of every label (stream 0 label most significant in
/// the joint index) under independent bits.
pub fn bit_probs_from_llr<T: Real>(llrs: &[T]) -> Vec<T> {
    let n = llrs.len();
    let p1: Vec<T> = llrs.iter().map(|&l| prob_one(l)).collect();
    (0..1usize << n)
        .map(|idx| {
            (0..n)
                .map(|i| if (idx >> (n - 1 - i)) & 1 == 1 { p1[i] } else { T::one() - p1[i] })
                .fold(T::one(), |a, b| a * b)
        })
        .collect()
}

/// Soft symbol `s̃ = Σ s P(s)` and `σ_s² = Σ |s − s̃|² P(s)` for one stream.
pub fn soft_symbol_stats<T: Real>(llrs: &[T], modulation: &ModulationConfig<T>) -> Result<(Cx<T>, T)> {
    ensure_len(modulation.bits_per_symbol, llrs.len())?;
    let probs = bit_probs_from_llr(llrs);
    let mean = modulation
        .points
        .iter()
        .zip(&probs)
        .fold(Cx::zero(), |acc, (s, &p)| acc + s * p);
    let var = modulation
        .points
        .iter()
        .zip(&probs)
        .map(|(s, &p)| (s - mean).norm_sqr() * p)
        .sum::<T>();
    Ok((mean, var))
}

/// Posterior and extrinsic LLRs for one tone.
#[derive(Debug, Clone, PartialEq)]
pub struct DemapOutput<T> {
    pub posterior: Vec<T>,
    pub extrinsic: Vec<T>,
}

fn check_tone<T: Real>(z: &[Cx<T>], h: &CMatrix<T>, noise: &[T], priors: &[T], q: usize) -> Result<()> {
    ensure_len(h.rows(), z.len())?;
    ensure_len(h.rows(), noise.len())?;
    ensure_len(h.cols() * q, priors.len())?;
    if noise.iter().any(|&v| !(v > T::zero())) {
        return Err(Error::InvalidInput("effective noise must be positive".into()));
    }
    Ok(())
}

/// Exact a-posteriori demapper over all `M^{N_t}` hypotheses.
///
/// The likelihood uses a separate variance per receive antenna. The
/// extrinsic value of bit `i` excludes that bit's own prior.
pub fn map_demap<T: Real>(
    z: &[Cx<T>],
    h: &CMatrix<T>,
    noise: &[T],
    priors: &[T],
    modulation: &ModulationConfig<T>,
    l_max: T,
) -> Result<DemapOutput<T>> {
    let q = modulation.bits_per_symbol;
    check_tone(z, h, noise, priors, q)?;
    let (nr, nt) = (h.rows(), h.cols());
    let nbits = q * nt;
    let m = modulation.order;
    let n_hyp = m.pow(nt as u32);
    let half = T::lit(0.5);
    let inv_noise: Vec<T> = noise.iter().map(|&v| T::one() / v).collect();

    let mut metric = vec![T::zero(); n_hyp];
    let mut labels = vec![0usize; nt];
    let mut s = vec![Cx::<T>::zero(); nt];
    for (idx, met) in metric.iter_mut().enumerate() {
        let mut rest = idx;
        for t in (0..nt).rev() {
            labels[t] = rest % m;
            rest /= m;
            s[t] = modulation.points[labels[t]];
        }
        let mut d = T::zero();
        for r in 0..nr {
            let mut e = z[r];
            for t in 0..nt {
                e -= h[(r, t)] * s[t];
            }
            d += e.norm_sqr() * inv_noise[r];
        }
        let mut prior = T::zero();
        for t in 0..nt {
            for b in 0..q {
                let bit = modulation.label_bit(labels[t], b);
                let l = priors[t * q + b];
                prior += if bit == 1 { half * l } else { -half * l };
            }
        }
        *met = prior - d;
    }

    // Excluding bit i's own prior from both halves removes exactly L_A(i),
    // so the extrinsic value is the posterior minus the prior.
    let top = metric.iter().copied().fold(T::neg_infinity(), T::max);
    let weight: Vec<T> = metric.iter().map(|&m| (m - top).exp()).collect();
    let mut extrinsic = Vec::with_capacity(nbits);
    for i in 0..nbits {
        let shift = nbits - 1 - i;
        let (mut num, mut den) = (T::zero(), T::zero());
        for (idx, &w) in weight.iter().enumerate() {
            // the joint index is the concatenation of the Q-bit labels
            if (idx >> shift) & 1 == 1 {
                num += w;
            } else {
                den += w;
            }
        }
        extrinsic.push(clip(num.ln() - den.ln() - priors[i], l_max));
    }
    let posterior = extrinsic.iter().zip(priors).map(|(&e, &a)| clip(e + a, l_max)).collect();
    Ok(DemapOutput { posterior, extrinsic })
}

/// Output of the soft-interference-cancelling MMSE demapper for one tone.
#[derive(Debug, Clone, PartialEq)]
pub struct MmseOutput<T> {
    /// `E[s] + Σ_s Ĥᴴ(ĤΣ_sĤᴴ + N̂₀)⁻¹(z − ĤE[s])` using every prior.
    pub estimate: Vec<Cx<T>>,
    /// Per-stream filter gain `μ_t` used for the LLR conversion.
    pub gain: Vec<T>,
    pub posterior: Vec<T>,
    pub extrinsic: Vec<T>,
    /// Whether any inner matrix needed diagonal loading.
    pub regularized: bool,
}

/// Linear MMSE demapper with soft interference cancellation.
///
/// For stream `t` the interference of the other streams is cancelled with
/// their prior means, stream `t` itself is treated as unknown with energy
/// `E_s`, and the filter output is modelled as `μ_t s_t + η` with
/// `var(η) = μ_t(1 − μ_t)E_s`.
pub fn mmse_demap<T: Real>(
    z: &[Cx<T>],
    h: &CMatrix<T>,
    noise: &[T],
    priors: &[T],
    modulation: &ModulationConfig<T>,
    l_max: T,
) -> Result<MmseOutput<T>> {
    let q = modulation.bits_per_symbol;
    check_tone(z, h, noise, priors, q)?;
    let (nr, nt) = (h.rows(), h.cols());
    let es = modulation.symbol_energy();
    let mut means = Vec::with_capacity(nt);
    let mut vars = Vec::with_capacity(nt);
    for t in 0..nt {
        let (m, v) = soft_symbol_stats(&priors[t * q..(t + 1) * q], modulation)?;
        means.push(m);
        vars.push(v);
    }
    let hs = h.mul_vec(&means)?;
    let resid: Vec<Cx<T>> = z.iter().zip(&hs).map(|(a, b)| a - b).collect();
    let cov = |var: &[T]| {
        CMatrix::from_fn(nr, nr, |a, b| {
            let mut acc = Cx::zero();
            for t in 0..nt {
                acc += h[(a, t)] * h[(b, t)].conj() * var[t];
            }
            if a == b {
                acc += Cx::new(noise[a], T::zero());
            }
            acc
        })
    };

    let mut regularized = false;
    let full = cov(&vars).hpd_inverse()?;
    regularized |= full.regularized;
    let cr = full.inverse.mul_vec(&resid)?;
    let estimate = (0..nt)
        .map(|t| {
            let mut acc = Cx::zero();
            for r in 0..nr {
                acc += h[(r, t)].conj() * cr[r];
            }
            means[t] + acc * vars[t]
        })
        .collect();

    let floor = T::epsilon() * es;
    let mut gain = Vec::with_capacity(nt);
    let mut extrinsic = Vec::with_capacity(nt * q);
    for t in 0..nt {
        let mut v = vars.clone();
        v[t] = es;
        let inv = cov(&v).hpd_inverse()?;
        regularized |= inv.regularized;
        let col: Vec<Cx<T>> = (0..nr).map(|r| h[(r, t)]).collect();
        let w = inv.inverse.mul_vec(&col)?;
        // residual with stream t's own mean added back
        let mut y = Cx::zero();
        let mut mu = T::zero();
        for r in 0..nr {
            y += w[r].conj() * (resid[r] + h[(r, t)] * means[t]);
            mu += (w[r].conj() * h[(r, t)]).re;
        }
        let mu_s = mu * es;
        let y = y * es;
        let nu = (mu_s * (T::one() - mu_s) * es).max(floor);
        gain.push(mu_s);
        let own = &priors[t * q..(t + 1) * q];
        let metric: Vec<T> = modulation
            .points
            .iter()
            .enumerate()
            .map(|(label, &a)| {
                let d = (y - a * mu_s).norm_sqr() / nu;
                let p: T = (0..q)
                    .map(|b| {
                        let l = own[b] * T::lit(0.5);
                        if modulation.label_bit(label, b) == 1 { l } else { -l }
                    })
                    .sum();
                p - d
            })
            .collect();
        for b in 0..q {
            let (mut num, mut den) = (T::neg_infinity(), T::neg_infinity());
            let half_own = own[b] * T::lit(0.5);
            for (label, &met) in metric.iter().enumerate() {
                if modulation.label_bit(label, b) == 1 {
                    num = log_add(num, met - half_own);
                } else {
                    den = log_add(den, met + half_own);
                }
            }
            extrinsic.push(clip(num - den, l_max));
        }
    }
    let posterior = extrinsic.iter().zip(priors).map(|(&e, &a)| clip(e + a, l_max)).collect();
    Ok(MmseOutput {
        estimate,
        gain,
        posterior,
        extrinsic,
        regularized,
    })
}
