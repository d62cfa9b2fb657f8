//! Simulation configuration, read from a flat TOML file whose keys are
//! exactly the field names below. Unknown keys are rejected.

use std::fmt;
use std::path::Path;

use jcesd_core::baseline::{Interpolation, PatternKind};
use jcesd_core::channel::ArrayShape;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::mcs;

/// Which receiver processes the combined grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverKind {
    /// Semi-blind constellation fitting with iterative refinement.
    Semiblind,
    /// Pilot-aided estimation with per-user disjoint pilot REs.
    PilotOrthogonal,
    /// Pilot-aided estimation with pilot REs shared by all users.
    PilotNonorthogonal,
}

impl ReceiverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReceiverKind::Semiblind => "semiblind",
            ReceiverKind::PilotOrthogonal => "pilot_orthogonal",
            ReceiverKind::PilotNonorthogonal => "pilot_nonorthogonal",
        }
    }

    /// Pilot layout of the pilot-aided baselines.
    pub fn pattern_kind(self) -> Option<PatternKind> {
        match self {
            ReceiverKind::Semiblind => None,
            ReceiverKind::PilotOrthogonal => Some(PatternKind::Orthogonal),
            ReceiverKind::PilotNonorthogonal => Some(PatternKind::NonOrthogonal),
        }
    }
}

impl fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Subcarrier interpolation used by the pilot-aided baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationKind {
    Linear,
    /// Delay-domain least squares with `n_c` taps.
    Delay,
}

/// One experiment. Defaults are a desk-sized version of the reference
/// system: 48 subcarriers, 14 symbols, 2 streams, 8 blocks, 5 refinement
/// rounds, LLR threshold 15, 64 transmit antennas with 16 RF chains, 8 receive
/// antennas with 4 RF chains, 4 users.
///
/// SNR is the post-combining signal-to-noise ratio per stream, averaged over
/// users: the noise variance per receive antenna is chosen so that
/// `mean_k (||H_eff,k||_F^2 / N_s) / (noise_var * ||W_k||_F^2 / N_s)` equals
/// the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Users.
    pub k: usize,
    /// Streams per user.
    pub n_s: usize,
    pub n_t: usize,
    pub n_r: usize,
    pub n_t_rf: usize,
    pub n_r_rf: usize,
    /// Subcarriers.
    pub j: usize,
    /// OFDM symbols per TTI.
    pub t: usize,
    /// Channel taps.
    pub n_c: usize,
    /// Propagation paths per user.
    pub num_paths: usize,
    /// Frequency blocks of the semi-blind receiver.
    pub n_f: usize,
    /// Refinement rounds of the semi-blind receiver.
    pub n_iter: usize,
    pub kappa_max: f64,
    pub llr_threshold: f64,
    /// QAM order; ignored when `mcs_index` is set.
    pub modulation: usize,
    /// Fixes the modulation and code rate instead of adapting them.
    pub mcs_index: Option<u32>,
    pub snr_db: Vec<f64>,
    pub seeds: Vec<u64>,
    pub receiver: ReceiverKind,
    pub strict_fail: bool,
    /// Fit the four rotated copies of each block as well.
    pub augment: bool,
    /// TTIs per trial, each with a fresh channel.
    pub ttis: usize,
    /// A block decodes iff its raw BER is at most
    /// `decode_threshold * (1 - code_rate)`.
    pub decode_threshold: f64,
    pub interpolation: InterpolationKind,
    pub rolloff: f64,
    /// Largest path delay in sample periods; unset spans all `n_c` taps.
    pub max_delay: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            k: 4,
            n_s: 2,
            n_t: 64,
            n_r: 8,
            n_t_rf: 16,
            n_r_rf: 4,
            j: 48,
            t: 14,
            n_c: 4,
            num_paths: 8,
            n_f: 8,
            n_iter: 5,
            kappa_max: 1e4,
            llr_threshold: 15.0,
            modulation: 16,
            mcs_index: None,
            snr_db: vec![10.0, 20.0],
            seeds: vec![0],
            receiver: ReceiverKind::Semiblind,
            strict_fail: false,
            augment: true,
            ttis: 20,
            decode_threshold: 0.55,
            interpolation: InterpolationKind::Linear,
            rolloff: 0.3,
            max_delay: None,
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Read, parse and validate a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        let cfg = Self::from_toml_str(&text).map_err(|source| SimError::ConfigParse { path: path.to_path_buf(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// QAM order in effect: the MCS entry's when one is fixed.
    pub fn modulation_order(&self) -> Result<usize> {
        match self.mcs_index {
            Some(index) => {
                let entry = mcs::lookup(index).ok_or_else(|| SimError::Config(format!("unknown MCS index {index}")))?;
                Ok(1usize << entry.modulation_order)
            }
            None => Ok(self.modulation),
        }
    }

    pub fn interpolation(&self) -> Interpolation {
        match self.interpolation {
            InterpolationKind::Linear => Interpolation::Linear,
            InterpolationKind::Delay => Interpolation::DelayDomain { taps: self.n_c },
        }
    }

    /// Transmit and receive UPA shapes: the most nearly square factorisation
    /// of each antenna count.
    pub fn array_shapes(&self) -> (ArrayShape, ArrayShape) {
        (square_factor(self.n_t), square_factor(self.n_r))
    }

    /// Sizes beyond desk scale run, but slowly.
    pub fn is_slow(&self) -> bool {
        self.n_t > 256 || self.k > 8 || self.j * self.t > 4096
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SimError::Config(msg.to_string()));
        if [self.k, self.n_s, self.n_t, self.n_r, self.n_t_rf, self.n_r_rf, self.j, self.t, self.n_c, self.num_paths, self.n_f, self.ttis]
            .contains(&0)
        {
            return bad("all sizes and counts must be positive");
        }
        if !self.n_t.is_multiple_of(self.n_t_rf) {
            return bad("n_t must be a multiple of n_t_rf");
        }
        if self.n_t_rf > self.n_t || self.n_r_rf > self.n_r {
            return bad("RF chains cannot outnumber antennas");
        }
        if self.k * self.n_s > self.n_t_rf {
            return bad("k * n_s streams need at least as many transmit RF chains");
        }
        if self.n_s > self.n_r_rf {
            return bad("n_s cannot exceed n_r_rf");
        }
        if self.n_c > self.j {
            return bad("n_c cannot exceed the number of subcarriers");
        }
        if !self.j.is_multiple_of(self.n_f) {
            return bad("n_f must divide j");
        }
        if self.j / 2 + self.n_s > self.j {
            return bad("the semi-blind pilots do not fit in the band");
        }
        if !(self.kappa_max > 1.0) {
            return bad("kappa_max must exceed 1");
        }
        if !(self.llr_threshold.is_finite()) {
            return bad("llr_threshold must be finite");
        }
        if !(self.decode_threshold >= 0.0 && self.decode_threshold <= 1.0) {
            return bad("decode_threshold must lie in [0, 1]");
        }
        if !(self.rolloff >= 0.0 && self.rolloff <= 1.0) {
            return bad("rolloff must lie in [0, 1]");
        }
        if self.max_delay.is_some_and(|d| !(d >= 0.0 && d.is_finite())) {
            return bad("max_delay must be finite and non-negative");
        }
        let order = self.modulation_order()?;
        if ![4, 16, 64, 256].contains(&order) {
            return bad("modulation must be one of 4, 16, 64, 256");
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db values must be finite");
        }
        Ok(())
    }
}

fn square_factor(n: usize) -> ArrayShape {
    let mut rows = n.isqrt();
    while rows > 1 && !n.is_multiple_of(rows) {
        rows -= 1;
    }
    ArrayShape::new(rows.max(1), n / rows.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        assert_eq!((cfg.j, cfg.t, cfg.n_s, cfg.n_f, cfg.n_iter), (48, 14, 2, 8, 5));
        assert_eq!(cfg.llr_threshold, 15.0);
        assert!(!cfg.is_slow());
    }

    #[test]
    fn parses_flat_keys_and_keeps_defaults() {
        let cfg = SimConfig::from_toml_str("k = 2\nreceiver = \"pilot_nonorthogonal\"\nsnr_db = [0.0, 5.5]\nmcs_index = 20\n").unwrap();
        assert_eq!(cfg.k, 2);
        assert_eq!(cfg.receiver, ReceiverKind::PilotNonorthogonal);
        assert_eq!(cfg.snr_db, vec![0.0, 5.5]);
        assert_eq!(cfg.modulation_order().unwrap(), 256);
        assert_eq!(cfg.n_t, 64);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(SimConfig::from_toml_str("k = 2\nbogus = 1\n").is_err());
        assert!(SimConfig::from_toml_str("Y = 14\n").is_err());
    }

    #[test]
    fn rejects_inconsistent_sizes() {
        let mut cfg = SimConfig { n_f: 5, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
        cfg.n_f = 8;
        cfg.k = 9;
        assert!(cfg.validate().is_err());
        let cfg = SimConfig { modulation: 8, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = SimConfig { mcs_index: Some(7), ..SimConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn full_scale_is_flagged_slow() {
        let cfg = SimConfig { n_t: 1536, n_t_rf: 96, k: 24, ..SimConfig::default() };
        cfg.validate().unwrap();
        assert!(cfg.is_slow());
    }

    #[test]
    fn square_factorisation() {
        assert_eq!(square_factor(64), ArrayShape::new(8, 8));
        assert_eq!(square_factor(8), ArrayShape::new(2, 4));
        assert_eq!(square_factor(7), ArrayShape::new(1, 7));
        assert_eq!(square_factor(1536), ArrayShape::new(32, 48));
    }
}
