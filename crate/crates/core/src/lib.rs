//! Pipelined MIMO-OFDM iterative detection and decoding with a
//! soft-decision-directed Kalman channel estimator.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the bottom fix the scalar to `f64`.

pub mod analysis;
pub mod channel;
pub mod decoder;
pub mod demapper;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod linalg;
pub mod pipeline;
pub mod scalar;
pub mod tx;

pub use analysis::{
    batch_mse_mc, eps_biased, eps_mismatch_limit, eps_opt, gaussian_llr, j_function, j_inverse, lmmse_batch, measure_mi,
    mismatched_lmmse, open_loop_mse,
    BiasedErrorModel, DecisionErrors, MiAccumulator, OpenLoopConfig,
};
pub use channel::{draw_channel, snr_to_n0, transmit, transmit_preamble, ChannelProfile, ChannelRealization};
pub use decoder::{sova_decode, Sova, SovaConfig, SovaOutput};
pub use demapper::{map_demap, mmse_demap, EffectiveNoise, LlrFrame, SoftSymbolFrame, L_MAX};
pub use error::{Error, Result};
pub use estimator::{ChannelEstimator, EstimatorKind, EstimatorState, FeedbackRow, GainForm, KalmanConfig};
pub use grid::Grid;
pub use linalg::CMatrix;
pub use pipeline::{run_packet, run_sequential, DemapperKind, PacketOutcome, PipelineState, Receiver, ReceiverConfig};
pub use scalar::{cx, Cx, Real};
pub use tx::{build_packet, CodeConfig, ModulationConfig, Packet, PacketLayout, Preamble};

pub type C64 = Cx<f64>;
pub type Matrix = CMatrix<f64>;
pub type SampleGrid = Grid<f64>;
pub type Modulation = ModulationConfig<f64>;
pub type Channel = ChannelRealization<f64>;
pub type Estimator = ChannelEstimator<f64>;
pub type Kalman = EstimatorState<f64>;
pub type Rx = Receiver<f64>;
pub type Llrs = LlrFrame<f64>;
pub type SoftSymbols = SoftSymbolFrame<f64>;
