//! Securely precoded OFDM (SP-OFDM) link simulation.
//!
//! The transmitter rotates every subcarrier and the first part of the cyclic
//! prefix by phases drawn from an AES keystream shared with the receiver. The
//! receiver uses the key to synchronize and decode while a jammer that mimics
//! the waveform but lacks the key cannot steer the receiver onto itself.

pub mod avc;
pub mod channel;
pub mod dsp;
pub mod error;
pub mod harness;
pub mod jammer;
pub mod keystream;
pub mod registry;
pub mod rxchain;
pub mod stats;
pub mod sync;
pub mod txchain;

pub use error::{Error, Result};
