//! Building blocks of one estimator step for a single `(RX antenna, tone)`.

use num_traits::Zero;

use crate::error::{ensure_len, Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::{Cx, Real};
use crate::tx::Preamble;

/// Identifies an observation row: which OFDM symbol it came from and how
/// many receiver modules had completed on that symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag {
    pub symbol: usize,
    pub stage: usize,
}

/// `⟨a, b⟩ = Re a·Re b + Im a·Im b`.
#[inline]
pub fn inner<T: Real>(a: Cx<T>, b: Cx<T>) -> T {
    a.re * b.re + a.im * b.im
}

/// Least-squares preamble estimate and its diagonal error covariance
/// `|ĥ_t|²/(γ|ĥ_t|² + 1)`.
pub fn init<T: Real>(z_preamble: &[Cx<T>], preamble: &Preamble, gamma: T) -> Result<(Vec<Cx<T>>, CMatrix<T>)> {
    ensure_len(preamble.n_tr, z_preamble.len())?;
    if !preamble.is_orthogonal() {
        return Err(Error::InvalidInput("training matrix is not orthogonal".into()));
    }
    let scale = T::one() / T::lit(preamble.n_tr as f64);
    let h: Vec<Cx<T>> = (0..preamble.n_tx)
        .map(|t| {
            z_preamble
                .iter()
                .enumerate()
                .fold(Cx::zero(), |acc, (i, &z)| acc + z * T::lit(preamble.get(i, t) as f64))
                * scale
        })
        .collect();
    let p: Vec<T> = h
        .iter()
        .map(|v| {
            let a = v.norm_sqr();
            a / (gamma * a + T::one())
        })
        .collect();
    Ok((h, CMatrix::from_diag(&p)))
}

/// `x = z − S̃ ĥ`.
pub fn residual<T: Real>(z: &[Cx<T>], s: &CMatrix<T>, h: &[Cx<T>]) -> Result<Vec<Cx<T>>> {
    ensure_len(s.rows(), z.len())?;
    let sh = s.mul_vec(h)?;
    Ok(z.iter().zip(sh).map(|(a, b)| a - b).collect())
}

/// `β(f) = ⟨x_{n−2}[f−2], x_n[f]⟩` located by tag; `None` when the row has no
/// predecessor two steps back.
pub fn correlation_measure<T: Real>(
    now: &[(Tag, Cx<T>)],
    prev: &[(Tag, Cx<T>)],
) -> Vec<Option<T>> {
    now.iter()
        .map(|(tag, x)| {
            let want = tag.stage.checked_sub(2)?;
            prev.iter()
                .find(|(t, _)| t.symbol == tag.symbol && t.stage == want)
                .map(|(_, xp)| inner(*xp, *x))
        })
        .collect()
}

/// Row selection `G_n`: which rows of the window enter the update.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Puncturer {
    pub n_f: usize,
    pub kept: Vec<usize>,
}

impl Puncturer {
    pub fn all(n_f: usize) -> Self {
        Self {
            n_f,
            kept: (0..n_f).collect(),
        }
    }

    pub fn n_d(&self) -> usize {
        self.kept.len()
    }

    pub fn punctured(&self) -> Vec<usize> {
        (0..self.n_f).filter(|f| !self.kept.contains(f)).collect()
    }

    /// The `N_d × N_f` 0/1 matrix.
    pub fn matrix<T: Real>(&self) -> CMatrix<T> {
        let mut g = CMatrix::zeros(self.kept.len(), self.n_f);
        for (d, &f) in self.kept.iter().enumerate() {
            g[(d, f)] = Cx::new(T::one(), T::zero());
        }
        g
    }

    pub fn apply<V: Copy>(&self, x: &[V]) -> Vec<V> {
        self.kept.iter().map(|&f| x[f]).collect()
    }
}

/// Keeps row `f` iff `f < 2`, `β(f)` is undefined, or `|β(f)| ≤ threshold`.
/// A `None` threshold disables puncturing.
pub fn build_puncturer<T: Real>(beta: &[Option<T>], threshold: Option<T>) -> Puncturer {
    let kept = beta
        .iter()
        .enumerate()
        .filter(|&(f, b)| match (threshold, b) {
            (Some(th), Some(b)) if f >= 2 => b.abs() <= th,
            _ => true,
        })
        .map(|(f, _)| f)
        .collect();
    Puncturer { n_f: beta.len(), kept }
}

/// Diagonal of `Q`: `Σ_t (p_tt + |ĥ_t|²)·σ²_{d,t}` per row.
pub fn q_matrix<T: Real>(p: &CMatrix<T>, h: &[Cx<T>], var: &[Vec<T>]) -> Result<Vec<T>> {
    let w: Vec<T> = (0..h.len()).map(|t| p[(t, t)].re + h[t].norm_sqr()).collect();
    var.iter()
        .map(|row| {
            ensure_len(h.len(), row.len())?;
            if row.iter().any(|&v| v < T::zero()) {
                return Err(Error::InvalidInput("negative decision-error variance".into()));
            }
            Ok(row.iter().zip(&w).map(|(&v, &w)| v * w).sum())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainForm {
    /// `(S̃ᴴR⁻¹S̃ + P⁻¹)⁻¹ S̃ᴴR⁻¹` with `R = Q + N₀I`.
    #[default]
    Information,
    /// `P S̃ᴴ (S̃ P S̃ᴴ + R)⁻¹`.
    Covariance,
}

/// Kalman gain for the kept rows. Returns the gain and whether any inverse
/// needed diagonal loading.
pub fn gain<T: Real>(s: &CMatrix<T>, q: &[T], p: &CMatrix<T>, n0: T, form: GainForm) -> Result<(CMatrix<T>, bool)> {
    ensure_len(s.rows(), q.len())?;
    ensure_len(s.cols(), p.rows())?;
    let r: Vec<T> = q.iter().map(|&v| v + n0).collect();
    if r.iter().any(|&v| !(v > T::zero())) {
        return Err(Error::Singular);
    }
    let sh = s.adjoint();
    match form {
        GainForm::Information => {
            // S̃ᴴ R⁻¹, column d scaled by 1/r_d
            let shr = CMatrix::from_fn(sh.rows(), sh.cols(), |t, d| sh[(t, d)] / r[d]);
            let pinv = p.hpd_inverse()?;
            let info = &(&shr * s) + &pinv.inverse;
            let inv = info.hpd_inverse()?;
            Ok((&inv.inverse * &shr, pinv.regularized || inv.regularized))
        }
        GainForm::Covariance => {
            let psh = p * &sh;
            let inner = (s * &psh).add_diag(&r);
            let inv = inner.hpd_inverse()?;
            Ok((&psh * &inv.inverse, inv.regularized))
        }
    }
}

/// Raw diagonal statistics of an updated covariance before cleanup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagCheck<T> {
    pub max_abs_imag: T,
    pub min_real: T,
}

/// `ĥ ← ĥ + A y`, `P ← (I − A S̃) P`. The returned covariance is made
/// Hermitian with a real non-negative diagonal; the check reports the raw
/// diagonal before that cleanup.
pub fn update<T: Real>(
    h: &[Cx<T>],
    p: &CMatrix<T>,
    a: &CMatrix<T>,
    y: &[Cx<T>],
    s: &CMatrix<T>,
) -> Result<(Vec<Cx<T>>, CMatrix<T>, DiagCheck<T>)> {
    let ay = a.mul_vec(y)?;
    let h_new = h.iter().zip(ay).map(|(a, b)| a + b).collect();
    let n = p.rows();
    let ias = &CMatrix::identity(n) - &(a * s);
    let raw = ias.matmul(p)?;
    let diag = raw.diag();
    let check = DiagCheck {
        max_abs_imag: diag.iter().map(|d| d.im.abs()).fold(T::zero(), T::max),
        min_real: diag.iter().map(|d| d.re).fold(T::infinity(), T::min),
    };
    let mut p_new = raw.hermitian_part();
    for t in 0..n {
        p_new[(t, t)] = Cx::new(p_new[(t, t)].re.max(T::zero()), T::zero());
    }
    Ok((h_new, p_new, check))
}

/// `Σ_t p_tt |s̃_t|² + N₀`.
pub fn noise_cov<T: Real>(p: &CMatrix<T>, mean: &[Cx<T>], n0: T) -> T {
    mean.iter()
        .enumerate()
        .map(|(t, s)| p[(t, t)].re * s.norm_sqr())
        .sum::<T>()
        + n0
}
