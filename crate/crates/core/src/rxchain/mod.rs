//! Receiver after synchronization: prefix removal, FFT, secure decoding,
//! QPSK soft demapping and LDPC decoding.

pub mod ldpc;

pub use ldpc::{ldpc_bp_decode, BpOutcome, Encoder, ParityCheckCode};

use num_complex::Complex64;

use crate::dsp;
use crate::error::{input_err, Result};
use crate::keystream::PhasePlan;
use crate::txchain::{ComplexSignal, OfdmConfig};

/// Secure-decoded symbols of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedBlock {
    pub block_index: u64,
    pub symbols: Vec<Complex64>,
}

/// FFT of the body of the block whose CP1 starts at sample `block_start`.
pub fn crop_and_fft(r: &ComplexSignal, block_start: usize, config: &OfdmConfig) -> Result<Vec<Complex64>> {
    let s = block_start + config.cp_samples();
    let n = config.n_carriers;
    if s + n > r.len() {
        return input_err(format!("block body [{s}, {}) leaves the record", s + n));
    }
    let mut spec = r.samples[s..s + n].to_vec();
    dsp::dft(&mut spec);
    Ok(spec)
}

/// `R_{k,i} = e^{jΘ_{k,i}} R̃_{k,i}`.
pub fn secure_decode(rx: &[Complex64], plan: &PhasePlan) -> Result<DecodedBlock> {
    if rx.len() != plan.len() {
        return input_err(format!("{} symbols for a plan of {}", rx.len(), plan.len()));
    }
    Ok(DecodedBlock {
        block_index: plan.block_index,
        symbols: rx.iter().enumerate().map(|(i, z)| z * plan.rotation(i)).collect(),
    })
}

/// Gray QPSK, `((1-2b0) + j(1-2b1)) / √2`.
pub fn map_qpsk(bits: &[u8]) -> Result<Vec<Complex64>> {
    if !bits.len().is_multiple_of(2) {
        return input_err("QPSK needs an even number of bits");
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Ok(bits
        .chunks_exact(2)
        .map(|b| Complex64::new(h * (1.0 - 2.0 * b[0] as f64), h * (1.0 - 2.0 * b[1] as f64)))
        .collect())
}

/// Per-bit LLRs (`log P(0)/P(1)`) under a Gaussian model of total variance
/// `noise_power` per complex symbol.
pub fn llr_qpsk(symbols: &[Complex64], noise_power: f64) -> Vec<f64> {
    let g = 2.0 * std::f64::consts::SQRT_2 / noise_power;
    symbols.iter().flat_map(|z| [g * z.re, g * z.im]).collect()
}

pub fn hard_qpsk(symbols: &[Complex64]) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|z| [u8::from(z.re < 0.0), u8::from(z.im < 0.0)])
        .collect()
}

#[cfg(test)]
mod tests;
