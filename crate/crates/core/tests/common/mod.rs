#![allow(dead_code)]

use idd_core::channel::{draw_channel, snr_to_n0, transmit, transmit_preamble, ChannelProfile};
use idd_core::decoder::SovaConfig;
use idd_core::pipeline::{DemapperKind, Receiver, ReceiverConfig};
use idd_core::tx::{build_packet, gen_preamble, CodeConfig, ModulationConfig, Packet, PacketLayout, Preamble};
use idd_core::{ChannelRealization, Grid, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct Setup<T> {
    pub code: CodeConfig,
    pub modulation: ModulationConfig<T>,
    pub preamble: Preamble,
    pub profile: ChannelProfile,
    pub rx: Receiver<T>,
    pub n_sc: usize,
}

pub struct Draw<T> {
    pub packet: Packet<T>,
    pub channel: ChannelRealization<T>,
    pub preamble_rx: Grid<T>,
    pub received: Grid<T>,
}

pub fn setup<T: Real>(n_tx: usize, n_rx: usize, bytes: usize, n_itr: usize, seed: u64) -> Setup<T> {
    let code = CodeConfig::ieee80211();
    let modulation = ModulationConfig::<T>::qam16();
    let n_sc = 52;
    let layout = PacketLayout::new(bytes, n_tx, n_sc, 4, &code, &mut rng(seed ^ 0xabcd)).unwrap();
    let cfg = ReceiverConfig {
        n_itr,
        demapper: DemapperKind::for_streams(n_tx),
        sova: SovaConfig::for_code(&code),
    };
    Setup {
        rx: Receiver::new(layout, modulation.clone(), &code, cfg).unwrap(),
        preamble: gen_preamble(n_tx, n_tx.next_power_of_two()).unwrap(),
        profile: ChannelProfile::exponential(n_tx, n_rx),
        code,
        modulation,
        n_sc,
    }
}

impl<T: Real> Setup<T> {
    pub fn draw<R: Rng>(&self, snr_db: f64, rng: &mut R) -> Draw<T> {
        let layout = self.rx.layout();
        let payload: Vec<u8> = (0..layout.info_bytes).map(|_| rng.random()).collect();
        let packet = build_packet(&payload, layout, &self.code, &self.modulation).unwrap();
        let n0 = snr_to_n0(snr_db, layout.n_tx, 1.0);
        let channel = draw_channel(&self.profile, self.n_sc, T::lit(n0), rng).unwrap();
        let preamble_rx = transmit_preamble(&channel, &self.preamble, rng).unwrap();
        let received = transmit(&channel, &packet.grid, rng).unwrap();
        Draw {
            packet,
            channel,
            preamble_rx,
            received,
        }
    }
}
