//! Pipelined iterative detection and decoding.
//!
//! The receiver is a chain of `2·N_itr` modules alternating demapper and
//! decoder. One module runs per symbol per time step, so OFDM symbol `j`
//! (0-based) enters at `n = j + 1` and has completed `k = n − 1 − j`
//! modules when step `n` begins. The channel estimator runs first in every
//! step, on the outputs of modules `k ∈ [2, 2N_itr − 1]`.

use std::collections::VecDeque;

use crate::analysis::MiAccumulator;
use crate::channel::ChannelRealization;
use crate::decoder::{Sova, SovaConfig};
use crate::demapper::{map_demap, mmse_demap, LlrFrame, SoftSymbolFrame};
use crate::error::{Error, Result};
use crate::estimator::{ChannelEstimator, DiagCheck, FeedbackRow, StepReport, Tag};
use crate::grid::Grid;
use crate::scalar::Real;
use crate::tx::{CodeConfig, ModulationConfig, Packet, PacketLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemapperKind {
    Map,
    Mmse,
}

impl DemapperKind {
    /// Exact MAP up to two streams, MMSE beyond.
    pub fn for_streams(n_t: usize) -> Self {
        if n_t <= 2 {
            DemapperKind::Map
        } else {
            DemapperKind::Mmse
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverConfig {
    pub n_itr: usize,
    pub demapper: DemapperKind,
    pub sova: SovaConfig,
}

/// `N_f = max(0, min(n − 2, N_sym, 2N_itr − 2, N_sym + 2N_itr − n))`.
///
/// The `N_sym` bound only matters for packets shorter than the window.
pub fn window_len(n: usize, n_itr: usize, n_sym: usize) -> usize {
    let n = n as i64;
    let (i, s) = (n_itr as i64, n_sym as i64);
    (n - 2).min(s).min(2 * i - 2).min(s + 2 * i - n).max(0) as usize
}

/// Symbols in the feedback window at step `n` as `(symbol, completed
/// modules)`, newest symbol first.
pub fn feedback_window(n: usize, n_itr: usize, n_sym: usize) -> Vec<(usize, usize)> {
    let hi = n as i64 - 3;
    let lo = (n as i64 - 2 * n_itr as i64).max(0);
    (lo..=hi)
        .rev()
        .filter(|&j| (j as usize) < n_sym)
        .map(|j| (j as usize, n - 1 - j as usize))
        .collect()
}

/// Stateless per-symbol modules shared by every packet of a run.
#[derive(Debug, Clone)]
pub struct Receiver<T> {
    layout: PacketLayout,
    modulation: ModulationConfig<T>,
    sova: Sova,
    cfg: ReceiverConfig,
    filler: Vec<Vec<bool>>,
}

impl<T: Real> Receiver<T> {
    pub fn new(layout: PacketLayout, modulation: ModulationConfig<T>, code: &CodeConfig, cfg: ReceiverConfig) -> Result<Self> {
        if cfg.n_itr == 0 {
            return Err(Error::InvalidConfig("at least one iteration is required".into()));
        }
        if modulation.bits_per_symbol != layout.bits_per_symbol {
            return Err(Error::InvalidConfig("layout and modulation disagree on bits per symbol".into()));
        }
        let filler = (0..layout.n_sym).map(|j| layout.filler_mask(j)).collect();
        Ok(Self {
            sova: Sova::new(code, cfg.sova.clone())?,
            layout,
            modulation,
            cfg,
            filler,
        })
    }

    pub fn layout(&self) -> &PacketLayout {
        &self.layout
    }

    pub fn modulation(&self) -> &ModulationConfig<T> {
        &self.modulation
    }

    pub fn config(&self) -> &ReceiverConfig {
        &self.cfg
    }

    /// Frame-order mask of known filler bits in symbol `j`.
    pub fn filler(&self, j: usize) -> &[bool] {
        &self.filler[j]
    }

    fn l_max(&self) -> T {
        T::lit(self.cfg.sova.l_max)
    }

    fn width(&self) -> usize {
        self.layout.bits_per_symbol * self.layout.n_tx
    }

    fn pin_filler(&self, j: usize, frame: &mut LlrFrame<T>) {
        let known = -self.l_max();
        for (l, &f) in frame.data.iter_mut().zip(&self.filler[j]) {
            if f {
                *l = known;
            }
        }
    }

    /// Priors of the first demapper: flat except for the filler bits.
    pub fn initial_prior(&self, j: usize) -> LlrFrame<T> {
        let mut f = LlrFrame::zeros(self.layout.n_sc, self.width());
        self.pin_filler(j, &mut f);
        f
    }

    /// Soft symbols from an LLR frame with the filler bits pinned.
    pub fn soft(&self, j: usize, llrs: &LlrFrame<T>) -> Result<SoftSymbolFrame<T>> {
        let mut f = llrs.clone();
        self.pin_filler(j, &mut f);
        SoftSymbolFrame::from_llrs(&f, &self.modulation)
    }

    /// Demapper extrinsic LLRs for symbol `j`.
    pub fn demap(&self, j: usize, prior: &LlrFrame<T>, est: &ChannelEstimator<T>, received: &Grid<T>) -> Result<LlrFrame<T>> {
        let prior_soft = self.soft(j, prior)?;
        let mut out = LlrFrame::zeros(self.layout.n_sc, self.width());
        let l_max = self.l_max();
        for k in 0..self.layout.n_sc {
            let h = est.estimate(k);
            let noise = est.noise(k, prior_soft.mean_at(k));
            let z = received.at(j, k);
            let pri = prior.tone(k);
            let ext = match self.cfg.demapper {
                DemapperKind::Map => map_demap(z, &h, &noise, pri, &self.modulation, l_max)?.extrinsic,
                DemapperKind::Mmse => mmse_demap(z, &h, &noise, pri, &self.modulation, l_max)?.extrinsic,
            };
            out.tone_mut(k).copy_from_slice(&ext);
        }
        Ok(out)
    }

    /// Decoder extrinsic LLRs (frame order, filler pinned) and the hard
    /// information bits of symbol `j`.
    pub fn decode(&self, j: usize, demap_ext: &LlrFrame<T>) -> Result<(LlrFrame<T>, Vec<u8>)> {
        let coded = self.layout.coded_from_frame(&demap_ext.data)?;
        let used = self.layout.coded_len(j);
        let out = self.sova.decode(&coded[..used])?;
        let mut full = out.extrinsic;
        full.resize(self.layout.capacity(), -self.l_max());
        let frame = LlrFrame::from_vec(self.layout.n_sc, self.width(), self.layout.frame_from_coded(&full)?)?;
        Ok((frame, out.info_bits))
    }
}

/// Mutual information per iteration at the demapper input, demapper
/// output and decoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMi {
    pub demap_in: Vec<MiAccumulator>,
    pub demap_out: Vec<MiAccumulator>,
    pub decode_out: Vec<MiAccumulator>,
}

impl StageMi {
    pub fn new(n_itr: usize) -> Self {
        Self {
            demap_in: vec![MiAccumulator::default(); n_itr],
            demap_out: vec![MiAccumulator::default(); n_itr],
            decode_out: vec![MiAccumulator::default(); n_itr],
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in [
            (&mut self.demap_in, &other.demap_in),
            (&mut self.demap_out, &other.demap_out),
            (&mut self.decode_out, &other.decode_out),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
    }
}

fn accumulate<T: Real>(acc: &mut MiAccumulator, llrs: &LlrFrame<T>, bits: &[u8], filler: &[bool]) {
    for ((&l, &b), &f) in llrs.data.iter().zip(bits).zip(filler) {
        if !f {
            acc.push(l.as_f64(), b);
        }
    }
}

/// Worst raw covariance diagonal seen over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagSummary {
    pub max_abs_imag: f64,
    pub min_real: f64,
    pub updates: u64,
    pub regularized: u64,
    pub skipped: u64,
}

impl Default for DiagSummary {
    fn default() -> Self {
        Self {
            max_abs_imag: 0.0,
            min_real: f64::INFINITY,
            updates: 0,
            regularized: 0,
            skipped: 0,
        }
    }
}

impl DiagSummary {
    pub fn absorb<T: Real>(&mut self, r: &StepReport<T>) {
        if let Some(DiagCheck { max_abs_imag, min_real }) = r.diag {
            self.max_abs_imag = self.max_abs_imag.max(max_abs_imag.as_f64());
            self.min_real = self.min_real.min(min_real.as_f64());
            self.updates += 1;
        }
        self.regularized += r.regularized as u64;
        self.skipped += r.skipped as u64;
    }

    pub fn merge(&mut self, o: &Self) {
        self.max_abs_imag = self.max_abs_imag.max(o.max_abs_imag);
        self.min_real = self.min_real.min(o.min_real);
        self.updates += o.updates;
        self.regularized += o.regularized;
        self.skipped += o.skipped;
    }
}

#[derive(Debug, Clone)]
struct Slot<T> {
    symbol: usize,
    done: usize,
    prior: LlrFrame<T>,
    demap_ext: Option<LlrFrame<T>>,
    soft: Option<SoftSymbolFrame<T>>,
}

/// Stage registers of one packet in flight.
#[derive(Debug)]
pub struct PipelineState<'a, T> {
    rx: &'a Receiver<T>,
    n: usize,
    slots: VecDeque<Slot<T>>,
    decisions: Vec<Option<Vec<u8>>>,
    pub mi: StageMi,
    pub diag: DiagSummary,
}

impl<'a, T: Real> PipelineState<'a, T> {
    pub fn new(rx: &'a Receiver<T>) -> Self {
        Self {
            rx,
            n: 0,
            slots: VecDeque::new(),
            decisions: vec![None; rx.layout.n_sym],
            mi: StageMi::new(rx.cfg.n_itr),
            diag: DiagSummary::default(),
        }
    }

    /// Current time step (0 before the first advance).
    pub fn time(&self) -> usize {
        self.n
    }

    /// `(symbol, completed modules)` for every symbol in flight, newest first.
    pub fn occupancy(&self) -> Vec<(usize, usize)> {
        self.slots.iter().rev().map(|s| (s.symbol, s.done)).collect()
    }

    pub fn total_steps(&self) -> usize {
        self.rx.layout.n_sym + 2 * self.rx.cfg.n_itr
    }

    pub fn finished(&self) -> bool {
        self.n >= self.total_steps()
    }

    /// Feedback rows for every tone at the current step.
    fn rows(&self, n: usize) -> Result<Vec<Vec<FeedbackRow<T>>>> {
        let layout = &self.rx.layout;
        let window = feedback_window(n, self.rx.cfg.n_itr, layout.n_sym);
        let mut frames = Vec::with_capacity(window.len());
        for &(j, k) in &window {
            let slot = self
                .slots
                .iter()
                .find(|s| s.symbol == j)
                .ok_or_else(|| Error::InvalidInput(format!("symbol {j} missing from the pipeline")))?;
            debug_assert_eq!(slot.done, k);
            let soft = slot.soft.as_ref().expect("completed module leaves soft output");
            frames.push((Tag { symbol: j, stage: k }, soft));
        }
        Ok((0..layout.n_sc)
            .map(|tone| {
                frames
                    .iter()
                    .map(|(tag, f)| FeedbackRow {
                        tag: *tag,
                        mean: f.mean_at(tone).to_vec(),
                        var: f.var_at(tone).to_vec(),
                    })
                    .collect()
            })
            .collect())
    }

    /// One time step: estimator update, then one module on every symbol in
    /// flight. `truth` supplies frame bits for MI bookkeeping.
    pub fn advance(
        &mut self,
        est: &mut ChannelEstimator<T>,
        received: &Grid<T>,
        truth: Option<&[Vec<u8>]>,
    ) -> Result<Vec<StepReport<T>>> {
        self.n += 1;
        let n = self.n;
        let rows = self.rows(n)?;
        let reports = est.step(n, &rows, received)?;
        for r in &reports {
            self.diag.absorb(r);
        }
        let rx = self.rx;
        let n_sym = rx.layout.n_sym;
        if n <= n_sym {
            self.slots.push_back(Slot {
                symbol: n - 1,
                done: 0,
                prior: rx.initial_prior(n - 1),
                demap_ext: None,
                soft: None,
            });
        }
        let last = 2 * rx.cfg.n_itr;
        for slot in self.slots.iter_mut() {
            let j = slot.symbol;
            let module = slot.done + 1;
            let it = (module - 1) / 2;
            if module % 2 == 1 {
                let ext = rx.demap(j, &slot.prior, est, received)?;
                if let Some(bits) = truth {
                    accumulate(&mut self.mi.demap_in[it], &slot.prior, &bits[j], &rx.filler[j]);
                    accumulate(&mut self.mi.demap_out[it], &ext, &bits[j], &rx.filler[j]);
                }
                slot.soft = Some(rx.soft(j, &ext)?);
                slot.demap_ext = Some(ext);
            } else {
                let ext = slot.demap_ext.as_ref().expect("decoder follows a demapper");
                let (dec, info) = rx.decode(j, ext)?;
                if let Some(bits) = truth {
                    accumulate(&mut self.mi.decode_out[it], &dec, &bits[j], &rx.filler[j]);
                }
                slot.soft = Some(rx.soft(j, &dec)?);
                slot.prior = dec;
                if module == last {
                    self.decisions[j] = Some(info);
                }
            }
            slot.done = module;
        }
        self.slots.retain(|s| s.done < last);
        Ok(reports)
    }

    /// Decoded information bits once every symbol has left the pipeline.
    pub fn decisions(&self) -> Option<Vec<u8>> {
        self.decisions.iter().try_fold(Vec::new(), |mut acc, d| {
            acc.extend_from_slice(d.as_ref()?);
            Some(acc)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketOutcome {
    pub info_bits: Vec<u8>,
    pub bit_errors: usize,
    pub packet_error: bool,
    /// `‖H − Ĥ‖_F²` averaged over tones after each estimator step.
    pub mse_trace: Vec<f64>,
    pub mi: StageMi,
    pub diag: DiagSummary,
}

/// Receives one packet through the pipeline. `observer` sees the estimator
/// reports of every step.
pub fn run_packet<T: Real>(
    rx: &Receiver<T>,
    est: &mut ChannelEstimator<T>,
    received: &Grid<T>,
    packet: &Packet<T>,
    channel: &ChannelRealization<T>,
    observer: &mut dyn FnMut(usize, &[StepReport<T>]),
) -> Result<PacketOutcome> {
    let mut state = PipelineState::new(rx);
    let mut mse_trace = Vec::with_capacity(state.total_steps());
    while !state.finished() {
        let reports = state.advance(est, received, Some(&packet.frame_bits))?;
        observer(state.time(), &reports);
        mse_trace.push(est.mse(channel).as_f64());
    }
    let info_bits = state.decisions().ok_or_else(|| Error::InvalidInput("pipeline did not drain".into()))?;
    let bit_errors = info_bits.iter().zip(&packet.info_bits).filter(|(a, b)| a != b).count();
    Ok(PacketOutcome {
        bit_errors,
        packet_error: bit_errors > 0,
        info_bits,
        mse_trace,
        mi: state.mi,
        diag: state.diag,
    })
}

/// Conventional IDD: every symbol runs all `N_itr` iterations on its own
/// before the next one starts. The estimator is not updated.
pub fn run_sequential<T: Real>(rx: &Receiver<T>, est: &ChannelEstimator<T>, received: &Grid<T>) -> Result<Vec<u8>> {
    let mut bits = Vec::with_capacity(rx.layout.total_info_bits());
    for j in 0..rx.layout.n_sym {
        let mut prior = rx.initial_prior(j);
        let mut info = Vec::new();
        for _ in 0..rx.cfg.n_itr {
            let ext = rx.demap(j, &prior, est, received)?;
            let (dec, b) = rx.decode(j, &ext)?;
            prior = dec;
            info = b;
        }
        bits.extend(info);
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn window_examples() {
        assert_eq!(window_len(2, 7, 100), 0);
        assert_eq!(window_len(14, 7, 100), 12);
        assert_eq!(window_len(50, 7, 100), 12);
        assert_eq!(window_len(106, 7, 100), 8);
        assert_eq!(feedback_window(5, 7, 100), vec![(2, 2), (1, 3), (0, 4)]);
    }

    proptest! {
        #[test]
        fn window_matches_count(n_itr in 1usize..10, n_sym in 1usize..40, n in 1usize..70) {
            prop_assume!(n <= n_sym + 2 * n_itr);
            let w = feedback_window(n, n_itr, n_sym);
            prop_assert_eq!(w.len(), window_len(n, n_itr, n_sym));
            for (f, &(j, k)) in w.iter().enumerate() {
                prop_assert!((2..2 * n_itr).contains(&k));
                prop_assert_eq!(j + k + 1, n);
                if f > 0 {
                    prop_assert_eq!(k, w[f - 1].1 + 1);
                }
                // two steps earlier the same symbol was two modules behind
                if k >= 4 {
                    prop_assert!(feedback_window(n - 2, n_itr, n_sym).contains(&(j, k - 2)));
                }
            }
        }
    }
}
