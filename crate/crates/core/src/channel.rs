//! Quasi-static frequency-selective MIMO channel and AWGN.

use num_traits::Zero;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::CMatrix;
use crate::scalar::{Cx, Real};
use crate::tx::Preamble;

/// Exponential power-delay profile sampled at the tap spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    pub tap_spacing: f64,
    pub rms_delay: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub fft_size: usize,
}

impl ChannelProfile {
    /// 50 ns RMS delay spread sampled every 50 ns, 64-point FFT.
    pub fn exponential(n_tx: usize, n_rx: usize) -> Self {
        Self {
            tap_spacing: 50e-9,
            rms_delay: 50e-9,
            n_tx,
            n_rx,
            fft_size: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rms_delay >= 0.0) || !(self.tap_spacing > 0.0) {
            return Err(Error::InvalidConfig("delay spread must be >= 0 and tap spacing > 0".into()));
        }
        if self.n_tx == 0 || self.n_rx == 0 || self.fft_size < 2 {
            return Err(Error::InvalidConfig("empty antenna array or FFT".into()));
        }
        Ok(())
    }

    /// `ceil(6·T_rms/T_s) + 1`.
    pub fn tap_count(&self) -> usize {
        (6.0 * self.rms_delay / self.tap_spacing).ceil() as usize + 1
    }

    /// Tap powers normalised to unit sum.
    pub fn tap_powers(&self) -> Vec<f64> {
        let l = self.tap_count();
        let raw: Vec<f64> = if self.rms_delay == 0.0 {
            (0..l).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect()
        } else {
            (0..l)
                .map(|i| (-(i as f64) * self.tap_spacing / self.rms_delay).exp())
                .collect()
        };
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }

    /// FFT bin of each data tone: symmetric around DC, DC skipped.
    pub fn tone_bins(&self, n_sc: usize) -> Result<Vec<i64>> {
        if n_sc == 0 || n_sc >= self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "{n_sc} data tones do not fit a {}-point FFT",
                self.fft_size
            )));
        }
        let lo = (n_sc / 2) as i64;
        Ok((-lo..0).chain(1..=(n_sc as i64 - lo)).collect())
    }
}

/// Per-tone `N_r × N_t` channel matrices and the noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T> {
    pub h: Vec<CMatrix<T>>,
    pub n0: T,
}

impl<T: Real> ChannelRealization<T> {
    pub fn n_sc(&self) -> usize {
        self.h.len()
    }

    pub fn n_rx(&self) -> usize {
        self.h.first().map_or(0, CMatrix::rows)
    }

    pub fn n_tx(&self) -> usize {
        self.h.first().map_or(0, CMatrix::cols)
    }

    /// Same channel with a different noise variance.
    pub fn with_n0(mut self, n0: T) -> Self {
        self.n0 = n0;
        self
    }

    /// MISO row `h^(r)` at `tone`.
    pub fn miso(&self, tone: usize, r: usize) -> Vec<Cx<T>> {
        self.h[tone].row(r).to_vec()
    }
}

pub(crate) fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Cx<T> {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Cx::new(T::lit(re * s), T::lit(im * s))
}

/// Draws i.i.d. Rayleigh taps per link and transforms them to the data tones.
pub fn draw_channel<T: Real, R: Rng + ?Sized>(
    profile: &ChannelProfile,
    n_sc: usize,
    n0: T,
    rng: &mut R,
) -> Result<ChannelRealization<T>> {
    profile.validate()?;
    let bins = profile.tone_bins(n_sc)?;
    let powers = profile.tap_powers();
    let (nr, nt) = (profile.n_rx, profile.n_tx);
    let taps: Vec<Vec<Cx<f64>>> = (0..nr * nt)
        .map(|_| powers.iter().map(|&p| complex_normal::<f64, _>(rng, p)).collect())
        .collect();
    let n = profile.fft_size as f64;
    let h = bins
        .iter()
        .map(|&k| {
            CMatrix::from_fn(nr, nt, |r, t| {
                let v = taps[r * nt + t]
                    .iter()
                    .enumerate()
                    .fold(Cx::<f64>::zero(), |acc, (l, &g)| {
                        acc + g * Cx::from_polar(1.0, -2.0 * std::f64::consts::PI * (k * l as i64) as f64 / n)
                    });
                Cx::new(T::lit(v.re), T::lit(v.im))
            })
        })
        .collect();
    Ok(ChannelRealization { h, n0 })
}

/// Noise variance for a per-receive-antenna SNR in dB.
///
/// Every stream carries symbols of energy `E_s` and every link has unit
/// average gain, so the received signal power per antenna is `N_t·E_s`.
pub fn snr_to_n0(snr_db: f64, n_tx: usize, es: f64) -> f64 {
    n_tx as f64 * es / 10f64.powf(snr_db / 10.0)
}

/// `γ = E_s / (N_t·N₀)`.
pub fn gamma(es: f64, n_tx: usize, n0: f64) -> f64 {
    es / (n_tx as f64 * n0)
}

/// Received grid `z = H s + n` for every OFDM symbol and tone.
pub fn transmit<T: Real, R: Rng + ?Sized>(
    real: &ChannelRealization<T>,
    grid: &Grid<T>,
    rng: &mut R,
) -> Result<Grid<T>> {
    if grid.n_sc != real.n_sc() || grid.width != real.n_tx() {
        return Err(Error::Dimension(format!(
            "grid {}x{} against channel {}x{}",
            grid.n_sc,
            grid.width,
            real.n_sc(),
            real.n_tx()
        )));
    }
    let nr = real.n_rx();
    let n0 = real.n0.as_f64();
    let mut z = Grid::zeros(grid.n_sym, grid.n_sc, nr);
    for j in 0..grid.n_sym {
        for k in 0..grid.n_sc {
            let hs = real.h[k].mul_vec(grid.at(j, k))?;
            for (dst, v) in z.at_mut(j, k).iter_mut().zip(hs) {
                *dst = v + if n0 > 0.0 { complex_normal(rng, n0) } else { Cx::zero() };
            }
        }
    }
    Ok(z)
}

/// Received preamble: `N_tr` training symbols on every tone, laid out as a
/// grid with one "symbol" per training row.
pub fn transmit_preamble<T: Real, R: Rng + ?Sized>(
    real: &ChannelRealization<T>,
    preamble: &Preamble,
    rng: &mut R,
) -> Result<Grid<T>> {
    if preamble.n_tx != real.n_tx() {
        return Err(Error::Dimension("preamble and channel disagree on N_t".into()));
    }
    let mut g = Grid::zeros(preamble.n_tr, real.n_sc(), preamble.n_tx);
    for i in 0..preamble.n_tr {
        for k in 0..real.n_sc() {
            for (dst, &v) in g.at_mut(i, k).iter_mut().zip(preamble.row(i)) {
                *dst = Cx::new(T::lit(v as f64), T::zero());
            }
        }
    }
    transmit(real, &g, rng)
}
