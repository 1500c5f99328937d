//! Packet geometry and the mapping between coded-bit order and the
//! per-tone frame order used by the demapper.
//!
//! Each OFDM symbol carries one terminated code block. The block's coded
//! bits (padded with known zero filler up to the symbol capacity) are split
//! round-robin over the `N_t` streams; each stream segment is interleaved
//! with that stream's permutation and then cut into `Q`-bit labels, one per
//! data tone. Frame order is `[tone][stream][bit]`.

use rand::Rng;

use super::code::CodeConfig;
use super::interleave::Interleaver;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PacketLayout {
    pub info_bytes: usize,
    pub n_tx: usize,
    pub n_sc: usize,
    pub bits_per_symbol: usize,
    pub n_sym: usize,
    /// Information bits carried by each OFDM symbol's code block.
    pub block_info_bits: Vec<usize>,
    code_outputs: usize,
    tail_bits: usize,
    interleavers: Vec<Interleaver>,
}

impl PacketLayout {
    /// Lays out `info_bytes` of payload; interleavers are drawn from `rng`.
    pub fn new<R: Rng + ?Sized>(
        info_bytes: usize,
        n_tx: usize,
        n_sc: usize,
        bits_per_symbol: usize,
        code: &CodeConfig,
        rng: &mut R,
    ) -> Result<Self> {
        code.validate()?;
        if info_bytes == 0 {
            return Err(Error::InvalidInput("empty payload".into()));
        }
        if n_tx == 0 || n_sc == 0 || bits_per_symbol == 0 {
            return Err(Error::InvalidConfig("zero-sized packet dimension".into()));
        }
        let capacity = bits_per_symbol * n_tx * n_sc;
        let per_block = code
            .info_len(capacity - capacity % code.outputs())
            .ok_or_else(|| Error::InvalidConfig(format!("{capacity} coded bits per symbol cannot hold a code block")))?;
        let total = 8 * info_bytes;
        let n_sym = total.div_ceil(per_block);
        let mut block_info_bits = vec![per_block; n_sym];
        block_info_bits[n_sym - 1] = total - per_block * (n_sym - 1);
        let stream_len = bits_per_symbol * n_sc;
        let interleavers = (0..n_tx).map(|_| Interleaver::random(stream_len, rng)).collect();
        Ok(Self {
            info_bytes,
            n_tx,
            n_sc,
            bits_per_symbol,
            n_sym,
            block_info_bits,
            code_outputs: code.outputs(),
            tail_bits: code.tail_bits,
            interleavers,
        })
    }

    /// Same geometry with caller-supplied interleavers.
    pub fn with_interleavers(mut self, interleavers: Vec<Interleaver>) -> Result<Self> {
        if interleavers.len() != self.n_tx || interleavers.iter().any(|il| il.len() != self.stream_len()) {
            return Err(Error::InvalidConfig("one interleaver of stream length per stream required".into()));
        }
        self.interleavers = interleavers;
        Ok(self)
    }

    /// Coded bits per OFDM symbol, `Q·N_t·N_sc`.
    pub fn capacity(&self) -> usize {
        self.bits_per_symbol * self.n_tx * self.n_sc
    }

    /// Bits per stream per OFDM symbol, `Q·N_sc`.
    pub fn stream_len(&self) -> usize {
        self.bits_per_symbol * self.n_sc
    }

    /// Length of the terminated code block in symbol `j`.
    pub fn coded_len(&self, j: usize) -> usize {
        self.code_outputs * (self.block_info_bits[j] + self.tail_bits)
    }

    pub fn total_info_bits(&self) -> usize {
        8 * self.info_bytes
    }

    /// Offset of symbol `j`'s block within the information bit sequence.
    pub fn info_offset(&self, j: usize) -> usize {
        self.block_info_bits[..j].iter().sum()
    }

    pub fn interleaver(&self, stream: usize) -> &Interleaver {
        &self.interleavers[stream]
    }

    pub fn interleave<B: Copy>(&self, stream: usize, bits: &[B]) -> Result<Vec<B>> {
        self.stream_interleaver(stream)?.interleave(bits)
    }

    pub fn deinterleave<B: Copy>(&self, stream: usize, bits: &[B]) -> Result<Vec<B>> {
        self.stream_interleaver(stream)?.deinterleave(bits)
    }

    fn stream_interleaver(&self, stream: usize) -> Result<&Interleaver> {
        self.interleavers
            .get(stream)
            .ok_or_else(|| Error::InvalidInput(format!("stream {stream} out of range")))
    }

    /// Coded order (length `capacity`) to frame order.
    pub fn frame_from_coded<B: Copy + Default>(&self, coded: &[B]) -> Result<Vec<B>> {
        crate::error::ensure_len(self.capacity(), coded.len())?;
        let q = self.bits_per_symbol;
        let mut frame = vec![B::default(); coded.len()];
        for (t, stream) in spatial_demux(coded, self.n_tx)?.into_iter().enumerate() {
            let il = self.interleavers[t].interleave(&stream)?;
            for k in 0..self.n_sc {
                let dst = (k * self.n_tx + t) * q;
                frame[dst..dst + q].copy_from_slice(&il[k * q..(k + 1) * q]);
            }
        }
        Ok(frame)
    }

    /// Frame order back to coded order.
    pub fn coded_from_frame<B: Copy + Default>(&self, frame: &[B]) -> Result<Vec<B>> {
        crate::error::ensure_len(self.capacity(), frame.len())?;
        let q = self.bits_per_symbol;
        let streams = (0..self.n_tx)
            .map(|t| {
                let mut il = Vec::with_capacity(self.stream_len());
                for k in 0..self.n_sc {
                    let src = (k * self.n_tx + t) * q;
                    il.extend_from_slice(&frame[src..src + q]);
                }
                self.interleavers[t].deinterleave(&il)
            })
            .collect::<Result<Vec<_>>>()?;
        spatial_remux(&streams)
    }

    /// Frame-order mask of known filler bits for symbol `j`.
    pub fn filler_mask(&self, j: usize) -> Vec<bool> {
        let used = self.coded_len(j);
        let coded: Vec<bool> = (0..self.capacity()).map(|i| i >= used).collect();
        self.frame_from_coded(&coded).expect("capacity-sized input")
    }
}

/// Round-robin split of `bits` over `n_tx` streams.
pub fn spatial_demux<B: Copy>(bits: &[B], n_tx: usize) -> Result<Vec<Vec<B>>> {
    if n_tx == 0 || bits.len() % n_tx != 0 {
        return Err(Error::InvalidInput(format!(
            "{} bits cannot be split evenly over {n_tx} streams",
            bits.len()
        )));
    }
    Ok((0..n_tx)
        .map(|t| bits.iter().skip(t).step_by(n_tx).copied().collect())
        .collect())
}

/// Inverse of [`spatial_demux`].
pub fn spatial_remux<B: Copy>(streams: &[Vec<B>]) -> Result<Vec<B>> {
    let len = streams.first().map_or(0, Vec::len);
    if streams.iter().any(|s| s.len() != len) {
        return Err(Error::InvalidInput("streams of unequal length".into()));
    }
    Ok((0..len).flat_map(|i| streams.iter().map(move |s| s[i])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn layout(bytes: usize, n_tx: usize) -> PacketLayout {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        PacketLayout::new(bytes, n_tx, 52, 4, &CodeConfig::ieee80211(), &mut rng).unwrap()
    }

    #[test]
    fn demux_examples() {
        assert_eq!(spatial_demux(&[1, 2, 3], 1).unwrap(), vec![vec![1, 2, 3]]);
        assert_eq!(spatial_demux(&[0, 1, 2, 3], 2).unwrap(), vec![vec![0, 2], vec![1, 3]]);
        assert!(spatial_demux(&[0, 1, 2], 2).is_err());
    }

    #[test]
    fn block_sizes_fill_the_grid() {
        let l = layout(200, 2);
        // 416 coded bits per symbol -> 202 information bits per block
        assert_eq!(l.capacity(), 416);
        assert_eq!(l.block_info_bits[0], 202);
        assert_eq!(l.n_sym, 8);
        assert_eq!(l.block_info_bits.iter().sum::<usize>(), 1600);
        assert!((0..l.n_sym).all(|j| l.coded_len(j) <= l.capacity()));
        assert_eq!(l.filler_mask(7).iter().filter(|&&b| b).count(), 416 - 2 * (186 + 6));
    }

    #[test]
    fn every_coded_bit_has_one_slot() {
        let l = layout(50, 3);
        let idx: Vec<usize> = (0..l.capacity()).collect();
        let frame = l.frame_from_coded(&idx).unwrap();
        let mut seen = vec![false; l.capacity()];
        for &i in &frame {
            assert!(!std::mem::replace(&mut seen[i], true));
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn rejects_empty_payload() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert!(PacketLayout::new(0, 2, 52, 4, &CodeConfig::ieee80211(), &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn remux_inverts_demux(n_tx in 1usize..5, chunks in 1usize..40, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let bits: Vec<u8> = (0..n_tx * chunks).map(|_| rng.random_range(0..2)).collect();
            prop_assert_eq!(spatial_remux(&spatial_demux(&bits, n_tx).unwrap()).unwrap(), bits);
        }

        #[test]
        fn frame_order_roundtrip(n_tx in 1usize..5, seed in any::<u64>()) {
            let l = layout(20, n_tx);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            use rand::Rng;
            let bits: Vec<u8> = (0..l.capacity()).map(|_| rng.random_range(0..2)).collect();
            let f = l.frame_from_coded(&bits).unwrap();
            prop_assert_eq!(l.coded_from_frame(&f).unwrap(), bits);
        }
    }
}
