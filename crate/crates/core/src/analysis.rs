//! Closed-form MSE expressions, Monte Carlo harnesses that check them, and
//! mutual-information measurement.

use num_traits::Zero;
use rand::Rng;

use crate::channel::{complex_normal, gamma, snr_to_n0};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorState, FeedbackRow, KalmanConfig, Tag};
use crate::linalg::CMatrix;
use crate::scalar::{Cx, Real};
use crate::tx::{gen_preamble, ModulationConfig};

/// Batch LMMSE estimate `(S̃ᴴS̃ + v R_h⁻¹)⁻¹ S̃ᴴ z`. The flag reports diagonal
/// loading.
pub fn lmmse_batch<T: Real>(s: &CMatrix<T>, z: &[Cx<T>], r_h: &CMatrix<T>, v: T) -> Result<(Vec<Cx<T>>, bool)> {
    if !(v > T::zero()) {
        return Err(Error::InvalidInput("noise weight must be positive".into()));
    }
    let sh = s.adjoint();
    let rinv = r_h.hpd_inverse()?;
    let psi = &(&sh * s) + &rinv.inverse.scale(v);
    let inv = psi.hpd_inverse()?;
    Ok((inv.inverse.mul_vec(&sh.mul_vec(z)?)?, rinv.regularized || inv.regularized))
}

/// Covariance form `R_h S̃ᴴ (S̃ R_h S̃ᴴ + v I)⁻¹ z` of the same estimator.
pub fn lmmse_batch_covariance<T: Real>(s: &CMatrix<T>, z: &[Cx<T>], r_h: &CMatrix<T>, v: T) -> Result<Vec<Cx<T>>> {
    let rsh = r_h * &s.adjoint();
    let inner = (s * &rsh).add_scalar_diag(v);
    let inv = inner.hpd_inverse()?;
    rsh.mul_vec(&inv.inverse.mul_vec(z)?)
}

/// LMMSE that ignores the decision-error variance (weight `N₀`).
pub fn mismatched_lmmse<T: Real>(s: &CMatrix<T>, z: &[Cx<T>], r_h: &CMatrix<T>, n0: T) -> Result<(Vec<Cx<T>>, bool)> {
    lmmse_batch(s, z, r_h, n0)
}

/// Large-`N_d` MSE of the matched LMMSE estimator,
/// `Σ_r Σ_t 1/(N_d(E_s + σ_s²)/v^(r) + 1/ρ^(r,t))`.
pub fn eps_opt<T: Real>(n_d: f64, es: T, sigma2: T, v: &[T], rho: &[Vec<T>]) -> Result<T> {
    if v.len() != rho.len() {
        return Err(Error::LengthMismatch {
            expected: v.len(),
            actual: rho.len(),
        });
    }
    let nd = T::lit(n_d);
    let mut acc = T::zero();
    for (&vr, row) in v.iter().zip(rho) {
        if !(vr > T::zero()) {
            return Err(Error::InvalidInput("v must be positive".into()));
        }
        for &p in row {
            if p > T::zero() {
                acc += T::one() / (nd * (es + sigma2) / vr + T::one() / p);
            }
        }
    }
    Ok(acc)
}

/// Decision errors `e = m + q` with a common complex bias `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasedErrorModel<T> {
    pub m: Cx<T>,
    pub sigma_q2: T,
}

impl<T: Real> BiasedErrorModel<T> {
    /// Bias of power `m2` with the total error power held at `sigma2`.
    pub fn with_total(m2: T, sigma2: T) -> Result<Self> {
        if m2 < T::zero() || sigma2 < m2 {
            return Err(Error::InvalidInput("need 0 <= |m|^2 <= sigma_s^2".into()));
        }
        Ok(Self {
            m: Cx::new(m2.sqrt(), T::zero()),
            sigma_q2: sigma2 - m2,
        })
    }

    pub fn sigma_s2(&self) -> T {
        self.m.norm_sqr() + self.sigma_q2
    }

    /// Zero diagonal, `|m|²` elsewhere.
    pub fn phi(&self, n_t: usize) -> CMatrix<T> {
        let m2 = self.m.norm_sqr();
        CMatrix::from_fn(n_t, n_t, |a, b| if a == b { Cx::zero() } else { Cx::new(m2, T::zero()) })
    }
}

/// `Λ = Ψ⁻¹((1/N_d)Φ⁻¹ + Ψ⁻¹)⁻¹Ψ⁻¹` with `Ψ = N_d(E_s + σ_s²)I + v R_h⁻¹`.
/// Returns `(Ψ, Λ)`; `Λ = 0` when `Φ` is singular (no bias or `N_t = 1`).
pub fn bias_lambda<T: Real>(
    model: &BiasedErrorModel<T>,
    n_d: f64,
    es: T,
    v: T,
    r_h: &CMatrix<T>,
) -> Result<(CMatrix<T>, CMatrix<T>)> {
    let n_t = r_h.rows();
    let nd = T::lit(n_d);
    let psi = r_h.hpd_inverse()?.inverse.scale(v).add_scalar_diag(nd * (es + model.sigma_s2()));
    let psi_inv = psi.hpd_inverse()?.inverse;
    let lambda = match model.phi(n_t).inverse() {
        Ok(phi_inv) => {
            let mid = (&phi_inv.scale(T::one() / nd) + &psi_inv).inverse()?;
            &(&psi_inv * &mid) * &psi_inv
        }
        Err(Error::Singular) => CMatrix::zeros(n_t, n_t),
        Err(e) => return Err(e),
    };
    Ok((psi, lambda))
}

/// `ε²_unbiased + Σ_r tr(N_d(E_s + σ_s²) Λ^(r) R_h^(r))`, with the unbiased
/// term in its large-`N_d` form `Σ_r tr((N_d(E_s+σ_s²)/v I + R_h⁻¹)⁻¹)`.
pub fn eps_biased<T: Real>(model: &BiasedErrorModel<T>, n_d: f64, es: T, v: &[T], r_h: &[CMatrix<T>]) -> Result<T> {
    if v.len() != r_h.len() {
        return Err(Error::LengthMismatch {
            expected: v.len(),
            actual: r_h.len(),
        });
    }
    let nd = T::lit(n_d);
    let load = nd * (es + model.sigma_s2());
    let mut total = T::zero();
    for (&vr, r) in v.iter().zip(r_h) {
        let unbiased = r.hpd_inverse()?.inverse.add_scalar_diag(load / vr).hpd_inverse()?.inverse;
        let (_, lambda) = bias_lambda(model, n_d, es, vr, r)?;
        total += unbiased.trace().re + (&lambda * r).trace().re * load;
    }
    Ok(total)
}

/// Large-`N_d` MSE of the mismatched estimator:
/// `ε_opt² + Σ_r ρ_Σ^(r) E_s/(E_s+σ_s²) (1 − E_s/(E_s+σ_s²))`.
pub fn eps_mismatch_limit<T: Real>(eps_opt: T, es: T, sigma2: T, rho_sum: &[T]) -> T {
    let x = es / (es + sigma2);
    eps_opt + rho_sum.iter().map(|&r| r * x * (T::one() - x)).sum::<T>()
}

/// How artificial decision errors are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecisionErrors<T> {
    /// `e ~ CN(0, σ²)` independently per row and stream.
    White(T),
    /// One bias of fixed power and uniformly random phase per trial plus
    /// white noise.
    Biased(BiasedErrorModel<T>),
}

impl<T: Real> DecisionErrors<T> {
    pub fn sigma_s2(&self) -> T {
        match self {
            DecisionErrors::White(s) => *s,
            DecisionErrors::Biased(m) => m.sigma_s2(),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, n_d: usize, n_t: usize, rng: &mut R) -> Vec<Cx<T>> {
        match *self {
            DecisionErrors::White(s) => (0..n_d * n_t).map(|_| complex_normal(rng, s.as_f64())).collect(),
            DecisionErrors::Biased(m) => {
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let bias = Cx::from_polar(T::lit(m.m.norm().as_f64()), T::lit(phase));
                (0..n_d * n_t)
                    .map(|_| bias + complex_normal(rng, m.sigma_q2.as_f64()))
                    .collect()
            }
        }
    }
}

/// Setting for the batch Monte Carlo experiments: `h ~ CN(0, I)`,
/// random constellation symbols, `z = S h + n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchTrial {
    pub n_t: usize,
    pub n_d: usize,
    pub n0: f64,
    pub trials: usize,
}

/// Mean `‖h − ĥ‖²` of the batch LMMSE estimator with weight `v` fed soft
/// decisions `s̃ = s + e`.
pub fn batch_mse_mc<T: Real, R: Rng + ?Sized>(
    trial: &BatchTrial,
    errors: &DecisionErrors<T>,
    v: T,
    modulation: &ModulationConfig<T>,
    rng: &mut R,
) -> Result<f64> {
    if trial.trials == 0 || trial.n_d == 0 {
        return Err(Error::InvalidInput("need at least one trial and one row".into()));
    }
    let (nt, nd) = (trial.n_t, trial.n_d);
    let r_h = CMatrix::identity(nt);
    let mut acc = 0.0;
    for _ in 0..trial.trials {
        let h: Vec<Cx<T>> = (0..nt).map(|_| complex_normal(rng, 1.0)).collect();
        let s = CMatrix::from_fn(nd, nt, |_, _| modulation.points[rng.random_range(0..modulation.order)]);
        let e = errors.draw(nd, nt, rng);
        let st = CMatrix::from_fn(nd, nt, |d, t| s[(d, t)] + e[d * nt + t]);
        let z: Vec<Cx<T>> = s
            .mul_vec(&h)?
            .into_iter()
            .map(|v| v + complex_normal(rng, trial.n0))
            .collect();
        let (est, _) = lmmse_batch(&st, &z, &r_h, v)?;
        acc += h.iter().zip(&est).map(|(a, b)| (a - b).norm_sqr().as_f64()).sum::<f64>();
    }
    Ok(acc / trial.trials as f64)
}

/// Open-loop setting: the sequential estimator is fed artificial unbiased
/// soft decisions instead of receiver feedback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenLoopConfig {
    pub n_t: usize,
    pub n_r: usize,
    /// Fresh observation rows per step.
    pub n_d: usize,
    pub sigma2: f64,
    pub snr_db: f64,
    pub steps: usize,
    pub trials: usize,
}

/// `E Σ_r ‖h^(r) − ĥ_n^(r)‖²` for `n = 0..=steps`, where index 0 is the
/// preamble estimate. Each step consumes `N_d` new rows
/// `s̃ = s + e`, `e ~ CN(0, σ_s²)`, without puncturing.
pub fn open_loop_mse<T: Real, R: Rng + ?Sized>(
    cfg: &OpenLoopConfig,
    modulation: &ModulationConfig<T>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if cfg.trials == 0 {
        return Err(Error::InvalidInput("open-loop run needs at least one trial".into()));
    }
    let es = modulation.symbol_energy();
    let n0 = snr_to_n0(cfg.snr_db, cfg.n_t, es.as_f64());
    let g = T::lit(gamma(es.as_f64(), cfg.n_t, n0));
    let preamble = gen_preamble(cfg.n_t, cfg.n_t.next_power_of_two())?;
    let kcfg = KalmanConfig::unpunctured();
    let var = T::lit(cfg.sigma2);
    let mut trace = vec![0.0; cfg.steps + 1];
    for _ in 0..cfg.trials {
        let h: Vec<Vec<Cx<T>>> = (0..cfg.n_r)
            .map(|_| (0..cfg.n_t).map(|_| complex_normal(rng, 1.0)).collect())
            .collect();
        let mut states = h
            .iter()
            .map(|hr| {
                let zp: Vec<Cx<T>> = (0..preamble.n_tr)
                    .map(|i| {
                        let clean = hr
                            .iter()
                            .enumerate()
                            .fold(Cx::<T>::zero(), |a, (t, &v)| a + v * T::lit(preamble.get(i, t) as f64));
                        clean + complex_normal(rng, n0)
                    })
                    .collect();
                EstimatorState::from_preamble(&zp, &preamble, T::lit(n0), g)
            })
            .collect::<Result<Vec<_>>>()?;
        let err = |states: &[EstimatorState<T>]| -> f64 {
            states
                .iter()
                .zip(&h)
                .map(|(st, hr)| hr.iter().zip(&st.h).map(|(a, b)| (a - b).norm_sqr().as_f64()).sum::<f64>())
                .sum()
        };
        trace[0] += err(&states);
        for n in 1..=cfg.steps {
            let symbols: Vec<Vec<Cx<T>>> = (0..cfg.n_d)
                .map(|_| (0..cfg.n_t).map(|_| modulation.points[rng.random_range(0..modulation.order)]).collect())
                .collect();
            let rows: Vec<FeedbackRow<T>> = symbols
                .iter()
                .enumerate()
                .map(|(d, s)| FeedbackRow {
                    tag: Tag { symbol: d, stage: 2 },
                    mean: s.iter().map(|&v| v + complex_normal(rng, cfg.sigma2)).collect(),
                    var: vec![var; cfg.n_t],
                })
                .collect();
            for (st, hr) in states.iter_mut().zip(&h) {
                let z: Vec<Cx<T>> = symbols
                    .iter()
                    .map(|s| {
                        s.iter().zip(hr).fold(Cx::<T>::zero(), |a, (x, y)| a + x * y) + complex_normal(rng, n0)
                    })
                    .collect();
                st.step(n, &rows, &z, &kcfg)?;
            }
            trace[n] += err(&states);
        }
    }
    Ok(trace.into_iter().map(|v| v / cfg.trials as f64).collect())
}

/// Mean over the second half of a trace.
pub fn steady_state(trace: &[f64]) -> f64 {
    let tail = &trace[trace.len() / 2..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

#[inline]
fn mi_term(l: f64, bit: u8) -> f64 {
    // log2(1 + e^{-x}) with x = ±L, stable for large |x|
    let x = if bit == 1 { l } else { -l };
    if x > 0.0 {
        (-x).exp().ln_1p() / std::f64::consts::LN_2
    } else {
        (-x + x.exp().ln_1p()) / std::f64::consts::LN_2
    }
}

/// `1 − mean log₂(1 + e^{−(2b−1)L})` over `(LLR, bit)` pairs.
pub fn measure_mi<T: Real>(samples: &[(T, u8)]) -> Result<f64> {
    let mut acc = MiAccumulator::default();
    for &(l, b) in samples {
        acc.push(l.as_f64(), b);
    }
    acc.value().ok_or_else(|| Error::InvalidInput("no samples for mutual information".into()))
}

/// Running form of [`measure_mi`], mergeable across packets.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MiAccumulator {
    pub sum: f64,
    pub count: u64,
}

impl MiAccumulator {
    #[inline]
    pub fn push(&mut self, l: f64, bit: u8) {
        self.sum += mi_term(l, bit);
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.sum += other.sum;
        self.count += other.count;
    }

    pub fn value(&self) -> Option<f64> {
        (self.count > 0).then(|| 1.0 - self.sum / self.count as f64)
    }
}

/// MI of a consistent Gaussian LLR, `L ~ N(±σ²/2, σ²)`, by Simpson's rule.
pub fn j_function(sigma: f64) -> f64 {
    if !(sigma > 1e-6) {
        return 0.0;
    }
    let mean = sigma * sigma / 2.0;
    let (lo, hi) = (mean - 12.0 * sigma, mean + 12.0 * sigma);
    let n = 4000;
    let h = (hi - lo) / n as f64;
    let norm = 1.0 / (sigma * std::f64::consts::TAU.sqrt());
    let f = |y: f64| {
        let d = (y - mean) / sigma;
        norm * (-0.5 * d * d).exp() * mi_term(y, 1)
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    (1.0 - acc * h / 3.0).clamp(0.0, 1.0)
}

/// Inverse of [`j_function`] by bisection; `mi` is clamped to `[0, 0.9999]`.
pub fn j_inverse(mi: f64) -> f64 {
    let target = mi.clamp(0.0, 0.9999);
    if target == 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while j_function(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if j_function(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Consistent Gaussian a-priori LLR for `bit` with spread `sigma`.
pub fn gaussian_llr<R: Rng + ?Sized>(bit: u8, sigma: f64, rng: &mut R) -> f64 {
    let sign = if bit == 1 { 1.0 } else { -1.0 };
    let n: f64 = rng.sample(rand_distr::StandardNormal);
    sign * sigma * sigma / 2.0 + sigma * n
}
