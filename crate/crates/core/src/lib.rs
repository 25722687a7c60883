//! Link-level simulation of a 3-user downlink power-domain NOMA OFDM system
//! serving vehicles that first park and then approach the base station.
//!
//! The chain is: [`frame`] (QAM and OFDM framing) -> [`noma`] (superposition
//! and SIC) -> [`channel`] (Rician fading, Doppler, offsets, noise) ->
//! [`receiver`] (synchronization, LS estimation, ZF, EVM SNR) ->
//! [`scenario`] (two-stage replay and BER sweeps) -> [`cli`].

pub mod channel;
pub mod cli;
pub mod error;
pub mod frame;
pub mod noma;
pub mod receiver;
pub mod scenario;

pub use error::{Error, Result};
