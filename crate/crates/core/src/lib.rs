//! Link-level simulation of a full-duplex phase-coded FMCW (PC-FMCW)
//! integrated sensing and communication node.
//!
//! The node transmits a chirp train whose pulses carry data symbols and
//! receives, in the same band, its own radar echoes plus uplink signals from
//! other users. Receiver structures separate the two by successive
//! interference cancellation.

pub mod analysis;
pub mod cancellation;
pub mod channel;
pub mod coding;
pub mod comm_rx;
pub mod dsp;
pub mod error;
pub mod harness;
pub mod link;
pub mod radar_rx;
pub mod waveform;

pub use error::{IsacError, Result};
