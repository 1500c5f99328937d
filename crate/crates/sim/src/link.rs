//! One simulated link: transmitter, channel and receiver sharing a fixed
//! interleaver set, plus deterministic per-packet realizations.

use idd_core::channel::{draw_channel, snr_to_n0, transmit, transmit_preamble, ChannelProfile};
use idd_core::decoder::SovaConfig;
use idd_core::estimator::{ChannelEstimator, EstimatorKind, GainForm, StepReport};
use idd_core::pipeline::{run_packet, DemapperKind, PacketOutcome, Receiver, ReceiverConfig};
use idd_core::tx::{build_packet, gen_preamble, CodeConfig, ModulationConfig, Packet, PacketLayout, Preamble};
use idd_core::{ChannelRealization, Grid, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::LinkConfig;

/// Random stream reserved for the interleavers.
const INTERLEAVER_STREAM: u64 = u64::MAX;

/// Generator for packet `index` of SNR point `point`. Every estimator sees
/// the same draw, so comparisons are paired.
pub fn packet_rng(seed: u64, point: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | index as u64);
    rng
}

/// Everything drawn for one packet.
#[derive(Debug, Clone)]
pub struct Realization {
    pub snr_db: f64,
    pub packet: Packet<f64>,
    pub channel: ChannelRealization<f64>,
    pub received: Grid<f64>,
    pub preamble_rx: Grid<f64>,
}

#[derive(Debug, Clone)]
pub struct Link {
    pub cfg: LinkConfig,
    pub code: CodeConfig,
    pub modulation: ModulationConfig<f64>,
    pub preamble: Preamble,
    pub profile: ChannelProfile,
    pub receiver: Receiver<f64>,
}

impl Link {
    pub fn new(cfg: &LinkConfig, seed: u64) -> Result<Self> {
        let code = CodeConfig::ieee80211();
        let modulation = ModulationConfig::qam(cfg.modulation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INTERLEAVER_STREAM);
        let layout = PacketLayout::new(
            cfg.info_bytes,
            cfg.n_tx,
            cfg.n_sc,
            modulation.bits_per_symbol,
            &code,
            &mut rng,
        )?;
        let preamble = gen_preamble(cfg.n_tx, cfg.training_len())?;
        let profile = ChannelProfile {
            tap_spacing: cfg.tap_spacing_ns * 1e-9,
            rms_delay: cfg.rms_delay_ns * 1e-9,
            n_tx: cfg.n_tx,
            n_rx: cfg.n_rx,
            fft_size: cfg.fft_size,
        };
        profile.validate()?;
        let rx_cfg = ReceiverConfig {
            n_itr: cfg.n_itr,
            demapper: DemapperKind::for_streams(cfg.n_tx),
            sova: SovaConfig::for_code(&code),
        };
        let receiver = Receiver::new(layout, modulation.clone(), &code, rx_cfg)?;
        Ok(Self {
            cfg: cfg.clone(),
            code,
            modulation,
            preamble,
            profile,
            receiver,
        })
    }

    pub fn layout(&self) -> &PacketLayout {
        self.receiver.layout()
    }

    pub fn n0(&self, snr_db: f64) -> f64 {
        snr_to_n0(snr_db, self.cfg.n_tx, self.modulation.symbol_energy())
    }

    /// Draws payload, channel and noise for one packet.
    pub fn draw<R: Rng>(&self, snr_db: f64, rng: &mut R) -> Result<Realization> {
        let payload: Vec<u8> = (0..self.cfg.info_bytes).map(|_| rng.random()).collect();
        let packet = build_packet(&payload, self.layout(), &self.code, &self.modulation)?;
        let channel = draw_channel(&self.profile, self.cfg.n_sc, self.n0(snr_db), rng)?;
        let preamble_rx = transmit_preamble(&channel, &self.preamble, rng)?;
        let received = transmit(&channel, &packet.grid, rng)?;
        Ok(Realization {
            snr_db,
            packet,
            channel,
            received,
            preamble_rx,
        })
    }

    pub fn estimator(&self, real: &Realization, kind: EstimatorKind, c: f64, form: GainForm) -> Result<ChannelEstimator<f64>> {
        ChannelEstimator::new(
            kind,
            c,
            form,
            &real.channel,
            &real.preamble_rx,
            &self.preamble,
            self.modulation.symbol_energy(),
        )
    }

    /// Runs the pipelined receiver on a realization.
    pub fn receive(
        &self,
        real: &Realization,
        kind: EstimatorKind,
        c: f64,
        form: GainForm,
        observer: &mut dyn FnMut(usize, &[StepReport<f64>]),
    ) -> Result<PacketOutcome> {
        let mut est = self.estimator(real, kind, c, form)?;
        run_packet(&self.receiver, &mut est, &real.received, &real.packet, &real.channel, observer)
    }
}
