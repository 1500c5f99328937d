//! Sequential channel estimation from pipeline soft decisions.
//!
//! One [`EstimatorState`] tracks the MISO channel `h^(r)` seen by receive
//! antenna `r` on one tone. [`ChannelEstimator`] holds the states for a whole
//! packet and exposes the estimates and effective noise variances that the
//! demappers consume.

pub mod baseline;
pub mod ops;

use std::collections::VecDeque;


use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::CMatrix;
use crate::scalar::{Cx, Real};
use crate::tx::Preamble;

pub use baseline::{EmDdReport, EmDdState};
pub use ops::{
    build_puncturer, correlation_measure, gain, inner, noise_cov, q_matrix, residual, update, DiagCheck, GainForm,
    Puncturer, Tag,
};

/// Soft decision for one symbol in the feedback window, shared by every
/// receive antenna on the tone. The matching received sample is looked up
/// by `tag.symbol`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRow<T> {
    pub tag: Tag,
    pub mean: Vec<Cx<T>>,
    pub var: Vec<T>,
}

impl<T> FeedbackRow<T> {
    /// Decoder outputs sit at even completed-module counts.
    pub fn from_decoder(&self) -> bool {
        self.tag.stage % 2 == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// True channel, `N̂₀ = N₀`.
    Perfect,
    /// Preamble estimate for the whole packet.
    InitialOnly,
    /// Punctured Kalman recursion on every pipeline output.
    Proposed,
    /// Kalman recursion on decoder outputs only, no puncturing.
    Song,
    /// Least squares on the window, blended with the preamble estimate.
    EmDd,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Perfect,
        EstimatorKind::InitialOnly,
        EstimatorKind::Proposed,
        EstimatorKind::Song,
        EstimatorKind::EmDd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Perfect => "perfect",
            EstimatorKind::InitialOnly => "initial",
            EstimatorKind::Proposed => "proposed",
            EstimatorKind::Song => "song",
            EstimatorKind::EmDd => "emdd",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator '{s}'")))
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Kalman recursion options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    /// Puncturing constant `c`; rows with `|β| > c·N₀` are dropped. `None`
    /// keeps every row.
    pub c: Option<f64>,
    /// Use only decoder outputs (even stages).
    pub decoder_only: bool,
    pub form: GainForm,
}

impl KalmanConfig {
    pub fn proposed(c: f64) -> Self {
        Self {
            c: Some(c),
            decoder_only: false,
            form: GainForm::Information,
        }
    }

    pub fn song() -> Self {
        Self {
            c: None,
            decoder_only: true,
            form: GainForm::Information,
        }
    }

    pub fn unpunctured() -> Self {
        Self {
            c: None,
            decoder_only: false,
            form: GainForm::Information,
        }
    }
}

/// What happened during one step of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<T> {
    pub n: usize,
    pub n_f: usize,
    pub n_d: usize,
    /// Window rows used, as indices into the (filtered) window.
    pub kept: Vec<usize>,
    /// Residual of every window row before puncturing.
    pub x: Vec<(Tag, Cx<T>)>,
    pub trace_p: T,
    /// Raw diagonal of the updated covariance, if an update happened.
    pub diag: Option<DiagCheck<T>>,
    pub regularized: bool,
    /// The gain could not be formed and the update was skipped.
    pub skipped: bool,
}

/// Kalman state for one `(RX antenna, tone)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState<T> {
    pub h: Vec<Cx<T>>,
    pub p: CMatrix<T>,
    pub n0: T,
    history: VecDeque<(usize, Vec<(Tag, Cx<T>)>)>,
}

impl<T: Real> EstimatorState<T> {
    pub fn new(h: Vec<Cx<T>>, p: CMatrix<T>, n0: T) -> Result<Self> {
        if p.rows() != h.len() || p.cols() != h.len() {
            return Err(Error::Dimension("covariance does not match the estimate".into()));
        }
        Ok(Self {
            h,
            p,
            n0,
            history: VecDeque::new(),
        })
    }

    pub fn from_preamble(z_preamble: &[Cx<T>], preamble: &Preamble, n0: T, gamma: T) -> Result<Self> {
        let (h, p) = ops::init(z_preamble, preamble, gamma)?;
        Self::new(h, p, n0)
    }

    /// Effective noise for a demapper whose prior soft symbols are `mean`.
    pub fn noise(&self, mean: &[Cx<T>]) -> T {
        noise_cov(&self.p, mean, self.n0)
    }

    fn residuals_at(&self, n: usize) -> &[(Tag, Cx<T>)] {
        self.history
            .iter()
            .find(|(m, _)| *m == n)
            .map_or(&[][..], |(_, v)| v.as_slice())
    }

    /// One time step: residual, correlation test, puncturing, gain, update.
    /// `z[d]` is the received sample for `rows[d]`.
    pub fn step(&mut self, n: usize, rows: &[FeedbackRow<T>], z: &[Cx<T>], cfg: &KalmanConfig) -> Result<StepReport<T>> {
        crate::error::ensure_len(rows.len(), z.len())?;
        let (rows, z): (Vec<&FeedbackRow<T>>, Vec<Cx<T>>) = rows
            .iter()
            .zip(z)
            .filter(|(r, _)| !cfg.decoder_only || r.from_decoder())
            .map(|(r, &z)| (r, z))
            .unzip();
        let n_f = rows.len();
        let nt = self.h.len();
        let s = CMatrix::from_fn(n_f, nt, |f, t| rows[f].mean[t]);
        let x = residual(&z, &s, &self.h)?;
        let tagged: Vec<(Tag, Cx<T>)> = rows.iter().map(|r| r.tag).zip(x.iter().copied()).collect();

        let threshold = cfg.c.map(|c| T::lit(c) * self.n0);
        let g = match threshold {
            Some(_) => {
                let beta = correlation_measure(&tagged, self.residuals_at(n.wrapping_sub(2)));
                build_puncturer(&beta, threshold)
            }
            None => Puncturer::all(n_f),
        };
        self.history.retain(|(m, _)| m + 1 >= n);
        self.history.push_back((n, tagged.clone()));

        let mut report = StepReport {
            n,
            n_f,
            n_d: g.n_d(),
            kept: g.kept.clone(),
            x: tagged,
            trace_p: self.p.trace().re,
            diag: None,
            regularized: false,
            skipped: false,
        };
        if n_f == 0 {
            return Ok(report);
        }
        let s_kept = CMatrix::from_fn(g.n_d(), nt, |d, t| s[(g.kept[d], t)]);
        let var: Vec<Vec<T>> = g.kept.iter().map(|&f| rows[f].var.clone()).collect();
        let q = q_matrix(&self.p, &self.h, &var)?;
        let (a, reg) = match gain(&s_kept, &q, &self.p, self.n0, cfg.form) {
            Ok(v) => v,
            Err(Error::Singular) => {
                report.skipped = true;
                return Ok(report);
            }
            Err(e) => return Err(e),
        };
        let y = g.apply(&x);
        let (h, p, chk) = update(&self.h, &self.p, &a, &y, &s_kept)?;
        self.h = h;
        self.p = p;
        report.trace_p = self.p.trace().re;
        report.diag = Some(chk);
        report.regularized = reg;
        Ok(report)
    }
}

#[derive(Debug, Clone)]
enum Cells<T> {
    Perfect(Vec<CMatrix<T>>),
    Fixed(Vec<EstimatorState<T>>),
    Kalman(Vec<EstimatorState<T>>, KalmanConfig),
    EmDd(Vec<EmDdState<T>>),
}

/// Estimates for every `(tone, RX antenna)` of a packet.
#[derive(Debug, Clone)]
pub struct ChannelEstimator<T> {
    pub kind: EstimatorKind,
    pub n_sc: usize,
    pub n_rx: usize,
    pub n_tx: usize,
    pub n0: T,
    cells: Cells<T>,
}

impl<T: Real> ChannelEstimator<T> {
    /// `z_preamble` is laid out `(training row, tone, RX antenna)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: EstimatorKind,
        c: f64,
        form: GainForm,
        channel: &ChannelRealization<T>,
        z_preamble: &Grid<T>,
        preamble: &Preamble,
        es: T,
    ) -> Result<Self> {
        let (n_sc, n_rx, n_tx) = (channel.n_sc(), channel.n_rx(), channel.n_tx());
        let n0 = channel.n0;
        if z_preamble.n_sym != preamble.n_tr || z_preamble.n_sc != n_sc || z_preamble.width != n_rx {
            return Err(Error::Dimension("preamble observations do not match the channel".into()));
        }
        let gamma = es / (T::lit(n_tx as f64) * n0);
        let per_cell = |k: usize, r: usize| -> Vec<Cx<T>> { (0..preamble.n_tr).map(|i| z_preamble.at(i, k)[r]).collect() };
        let kalman = || -> Result<Vec<EstimatorState<T>>> {
            let mut v = Vec::with_capacity(n_sc * n_rx);
            for k in 0..n_sc {
                for r in 0..n_rx {
                    v.push(EstimatorState::from_preamble(&per_cell(k, r), preamble, n0, gamma)?);
                }
            }
            Ok(v)
        };
        let cells = match kind {
            EstimatorKind::Perfect => Cells::Perfect(channel.h.clone()),
            EstimatorKind::InitialOnly => Cells::Fixed(kalman()?),
            EstimatorKind::Proposed => Cells::Kalman(kalman()?, KalmanConfig { form, ..KalmanConfig::proposed(c) }),
            EstimatorKind::Song => Cells::Kalman(kalman()?, KalmanConfig { form, ..KalmanConfig::song() }),
            EstimatorKind::EmDd => {
                let sigma_p = T::lit(n_tx as f64) * n0 / T::lit(preamble.n_tr as f64);
                Cells::EmDd(
                    kalman()?
                        .into_iter()
                        .map(|s| EmDdState::new(s.h, n0, sigma_p))
                        .collect(),
                )
            }
        };
        Ok(Self {
            kind,
            n_sc,
            n_rx,
            n_tx,
            n0,
            cells,
        })
    }

    /// Advances every state by one time step. `rows[k]` is the feedback
    /// window of tone `k`; samples are read from `received` by symbol.
    /// Returns the Kalman step reports in `(tone, RX antenna)` order when
    /// the variant produces them.
    pub fn step(&mut self, n: usize, rows: &[Vec<FeedbackRow<T>>], received: &Grid<T>) -> Result<Vec<StepReport<T>>> {
        crate::error::ensure_len(self.n_sc, rows.len())?;
        let n_rx = self.n_rx;
        let z_of = |k: usize, r: usize| -> Vec<Cx<T>> { rows[k].iter().map(|row| received.at(row.tag.symbol, k)[r]).collect() };
        match &mut self.cells {
            Cells::Perfect(_) | Cells::Fixed(_) => Ok(Vec::new()),
            Cells::Kalman(states, cfg) => {
                let mut out = Vec::with_capacity(states.len());
                for (i, st) in states.iter_mut().enumerate() {
                    let (k, r) = (i / n_rx, i % n_rx);
                    out.push(st.step(n, &rows[k], &z_of(k, r), cfg)?);
                }
                Ok(out)
            }
            Cells::EmDd(states) => {
                // Noise is pooled over the RX antennas of a tone.
                for (k, tone) in states.chunks_mut(n_rx).enumerate() {
                    for (r, st) in tone.iter_mut().enumerate() {
                        st.step(&rows[k], &z_of(k, r))?;
                    }
                    let pooled = tone.iter().map(|s| s.resid).sum::<T>() / T::lit(n_rx as f64);
                    for st in tone.iter_mut() {
                        st.noise = pooled.max(self.n0);
                    }
                }
                Ok(Vec::new())
            }
        }
    }

    /// `N_r × N_t` estimate on tone `k`.
    pub fn estimate(&self, k: usize) -> CMatrix<T> {
        let n_rx = self.n_rx;
        match &self.cells {
            Cells::Perfect(h) => h[k].clone(),
            Cells::Fixed(s) | Cells::Kalman(s, _) => CMatrix::from_fn(n_rx, self.n_tx, |r, t| s[k * n_rx + r].h[t]),
            Cells::EmDd(s) => CMatrix::from_fn(n_rx, self.n_tx, |r, t| s[k * n_rx + r].h[t]),
        }
    }

    /// Per-antenna effective noise on tone `k` for a demapper whose prior
    /// soft symbols are `mean`.
    pub fn noise(&self, k: usize, mean: &[Cx<T>]) -> Vec<T> {
        let n_rx = self.n_rx;
        match &self.cells {
            Cells::Perfect(_) => vec![self.n0; n_rx],
            Cells::Fixed(s) | Cells::Kalman(s, _) => (0..n_rx).map(|r| s[k * n_rx + r].noise(mean)).collect(),
            Cells::EmDd(s) => (0..n_rx).map(|r| s[k * n_rx + r].noise).collect(),
        }
    }

    /// Kalman state of `(tone, RX antenna)`, for the Kalman-based variants.
    pub fn state(&self, k: usize, r: usize) -> Option<&EstimatorState<T>> {
        match &self.cells {
            Cells::Fixed(s) | Cells::Kalman(s, _) => s.get(k * self.n_rx + r),
            _ => None,
        }
    }

    /// `‖H − Ĥ‖_F²` averaged over tones.
    pub fn mse(&self, truth: &ChannelRealization<T>) -> T {
        let total = (0..self.n_sc)
            .map(|k| {
                let e = self.estimate(k);
                let h = &truth.h[k];
                let mut acc = T::zero();
                for r in 0..self.n_rx {
                    for t in 0..self.n_tx {
                        acc += (h[(r, t)] - e[(r, t)]).norm_sqr();
                    }
                }
                acc
            })
            .sum::<T>();
        total / T::lit(self.n_sc as f64)
    }
}
