use super::code::{conv_encode, CodeConfig};
use super::layout::PacketLayout;
use super::modulation::ModulationConfig;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;

/// A transmitted packet and the ground truth needed for scoring.
#[derive(Debug, Clone)]
pub struct Packet<T> {
    /// Symbols indexed `(OFDM symbol, tone, TX stream)`.
    pub grid: Grid<T>,
    pub info_bits: Vec<u8>,
    /// Per OFDM symbol: terminated code block padded with zeros to capacity.
    pub coded_blocks: Vec<Vec<u8>>,
    /// Per OFDM symbol: the same bits in frame order.
    pub frame_bits: Vec<Vec<u8>>,
    /// Per OFDM symbol and tone, the constellation label on each stream.
    pub labels: Vec<Vec<usize>>,
}

/// Unpacks bytes MSB first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect()
}

pub fn build_packet<T: Real>(
    info: &[u8],
    layout: &PacketLayout,
    code: &CodeConfig,
    modulation: &ModulationConfig<T>,
) -> Result<Packet<T>> {
    if info.is_empty() {
        return Err(Error::InvalidInput("empty payload".into()));
    }
    if info.len() != layout.info_bytes {
        return Err(Error::LengthMismatch {
            expected: layout.info_bytes,
            actual: info.len(),
        });
    }
    if modulation.bits_per_symbol != layout.bits_per_symbol {
        return Err(Error::InvalidConfig("layout and modulation disagree on bits per symbol".into()));
    }
    let info_bits = bytes_to_bits(info);
    let q = layout.bits_per_symbol;
    let mut grid = Grid::zeros(layout.n_sym, layout.n_sc, layout.n_tx);
    let mut coded_blocks = Vec::with_capacity(layout.n_sym);
    let mut frame_bits = Vec::with_capacity(layout.n_sym);
    let mut labels = Vec::with_capacity(layout.n_sym);
    for j in 0..layout.n_sym {
        let off = layout.info_offset(j);
        let mut coded = conv_encode(&info_bits[off..off + layout.block_info_bits[j]], code)?;
        coded.resize(layout.capacity(), 0);
        let frame = layout.frame_from_coded(&coded)?;
        let mut sym_labels = Vec::with_capacity(layout.n_sc * layout.n_tx);
        for k in 0..layout.n_sc {
            let slot = grid.at_mut(j, k);
            for (t, s) in slot.iter_mut().enumerate() {
                let o = (k * layout.n_tx + t) * q;
                let label = modulation.label(&frame[o..o + q])?;
                *s = modulation.points[label];
                sym_labels.push(label);
            }
        }
        coded_blocks.push(coded);
        frame_bits.push(frame);
        labels.push(sym_labels);
    }
    Ok(Packet {
        grid,
        info_bits,
        coded_blocks,
        frame_bits,
        labels,
    })
}
