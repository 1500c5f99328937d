//! Transmitter: coding, stream split, interleaving, mapping and training.

pub mod code;
pub mod interleave;
pub mod layout;
pub mod modulation;
pub mod packet;
pub mod preamble;

pub use code::{conv_encode, CodeConfig, Trellis};
pub use interleave::Interleaver;
pub use layout::{spatial_demux, spatial_remux, PacketLayout};
pub use modulation::{qam_map, ModulationConfig};
pub use packet::{build_packet, bytes_to_bits, Packet};
pub use preamble::{default_training_len, gen_preamble, Preamble};
