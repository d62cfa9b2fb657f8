//! Per-user link metrics and the CSV row they are reported in.

use jcesd_core::linalg::{fro_norm_sq, CMat};
use serde::{Deserialize, Serialize};

use crate::config::ReceiverKind;
use crate::error::{Result, SimError};

/// Reported in place of `-inf` when an estimate is exact.
pub const NMSE_SENTINEL_DB: f64 = -300.0;

/// Default raw-BER decoding threshold factor.
pub const DECODE_THRESHOLD: f64 = 0.55;

/// Exact CSV header, in field order of [`MetricsRow`].
pub const CSV_HEADER: &str =
    "snr_db,seed,user,receiver,nmse_db,ser,ber,throughput_bits,mcs_index,blocks_failed,runtime_ms,opt_iters";

/// One user's results for one `(snr, seed)` trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub snr_db: f64,
    pub seed: u64,
    pub user: usize,
    pub receiver: ReceiverKind,
    pub nmse_db: f64,
    pub ser: f64,
    pub ber: f64,
    pub throughput_bits: f64,
    /// `-1` when no table entry uses the modulation (uncoded 4-QAM).
    pub mcs_index: i32,
    pub blocks_failed: usize,
    /// Receiver wall-clock time; excluded from the determinism contract.
    pub runtime_ms: f64,
    /// Optimizer iterations summed over all blocks of the TTIs whose
    /// reception completed; a failed reception reports no work.
    pub opt_iters: u64,
}

/// Mean over subcarriers of `||H_est - H||_F^2 / ||H||_F^2`.
pub fn nmse_ratio(estimate: &[CMat], truth: &[CMat]) -> Result<f64> {
    if estimate.len() != truth.len() || truth.is_empty() {
        return Err(SimError::InvalidArgument("estimate and truth must cover the same non-empty band".into()));
    }
    let mut total = 0.0;
    for (e, h) in estimate.iter().zip(truth) {
        if e.shape() != h.shape() {
            return Err(SimError::InvalidArgument("estimate and truth shapes differ".into()));
        }
        let power = fro_norm_sq(h);
        if power == 0.0 {
            return Err(jcesd_core::Error::UndefinedMetric("true channel has zero norm").into());
        }
        total += fro_norm_sq(&(e - h)) / power;
    }
    Ok(total / truth.len() as f64)
}

/// Ratio in dB, floored at the sentinel.
pub fn to_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (10.0 * ratio.log10()).max(NMSE_SENTINEL_DB)
    } else {
        NMSE_SENTINEL_DB
    }
}

pub fn nmse_db(estimate: &[CMat], truth: &[CMat]) -> Result<f64> {
    nmse_ratio(estimate, truth).map(to_db)
}

/// Symbol errors between two label sequences.
pub fn symbol_errors(detected: &[usize], truth: &[usize]) -> usize {
    detected.iter().zip(truth).filter(|(a, b)| a != b).count()
}

/// Bit errors between two label sequences; labels are the bit patterns.
pub fn bit_errors(detected: &[usize], truth: &[usize]) -> usize {
    detected.iter().zip(truth).map(|(a, b)| (a ^ b).count_ones() as usize).sum()
}

pub fn ser(detected: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    symbol_errors(detected, truth) as f64 / truth.len() as f64
}

pub fn ber(detected: &[usize], truth: &[usize], bits_per_symbol: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    bit_errors(detected, truth) as f64 / (truth.len() * bits_per_symbol) as f64
}

/// Idealised decoder: a block decodes iff its raw BER is at most
/// `threshold * (1 - code_rate)`. Uncoded transmission (rate 1) therefore
/// needs an error-free block.
pub fn block_decodes(raw_ber: f64, code_rate: f64, threshold: f64) -> bool {
    raw_ber <= threshold * (1.0 - code_rate)
}

/// Bits credited for one block of `block_size` channel bits.
pub fn credited_bits(raw_ber: f64, code_rate: f64, overhead: f64, block_size: usize, threshold: f64) -> f64 {
    if block_decodes(raw_ber, code_rate, threshold) {
        block_size as f64 * code_rate * (1.0 - overhead)
    } else {
        0.0
    }
}

/// Correctly received information bits over aligned bit streams cut into
/// blocks of `block_size` (the last block may be shorter).
pub fn throughput(detected: &[u8], truth: &[u8], code_rate: f64, overhead: f64, block_size: usize, threshold: f64) -> f64 {
    if block_size == 0 {
        return 0.0;
    }
    detected
        .chunks(block_size)
        .zip(truth.chunks(block_size))
        .map(|(d, t)| {
            let errors = d.iter().zip(t).filter(|(a, b)| a != b).count();
            credited_bits(errors as f64 / t.len() as f64, code_rate, overhead, t.len(), threshold)
        })
        .sum()
}
