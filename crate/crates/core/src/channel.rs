//! Frequency-selective geometric MIMO channels.
//!
//! Each user sees `L` propagation paths. A path contributes a rank-one
//! outer product of receive and transmit UPA steering vectors, weighted by a
//! complex gain and by a raised-cosine pulse sampled at the tap delay. The
//! per-subcarrier response is the DFT of the tap sequence.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{check_shape, CMat};
use crate::precoding::PrecoderSet;
use crate::rng::{complex_normal, complex_normal_matrix, derive_seed, seeded, uniform_phase};

const TAG_NOISE: u64 = 0x006e_6f69_7365;

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub gain: Complex64,
    /// Seconds.
    pub delay: f64,
    pub aoa_elevation: f64,
    pub aoa_azimuth: f64,
    pub aod_elevation: f64,
    pub aod_azimuth: f64,
}

/// Uniform planar array: `rows x cols` elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayShape {
    pub rows: usize,
    pub cols: usize,
}

impl ArrayShape {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub num_paths: usize,
    pub num_taps: usize,
    pub sample_period: f64,
    pub path_loss: f64,
    pub rolloff: f64,
    /// Largest path delay; `None` uses the tap span `(N_c - 1) Ts`. A
    /// shorter spread keeps the delay-tap model but narrows the channel's
    /// variation across the band.
    pub max_delay: Option<f64>,
    pub tx_array: ArrayShape,
    pub rx_array: ArrayShape,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
}

impl ChannelParams {
    pub fn new(tx_array: ArrayShape, rx_array: ArrayShape, num_paths: usize, num_taps: usize) -> Self {
        Self {
            num_paths,
            num_taps,
            sample_period: 1.0,
            path_loss: 1.0,
            rolloff: 0.3,
            max_delay: None,
            tx_array,
            rx_array,
            element_spacing: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_paths == 0 || self.num_taps == 0 {
            return Err(Error::InvalidArgument("channel needs at least one path and one tap".into()));
        }
        if !(self.sample_period > 0.0) || !(self.path_loss > 0.0) {
            return Err(Error::InvalidArgument("sample period and path loss must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::InvalidArgument("rolloff must lie in [0, 1]".into()));
        }
        if self.max_delay.is_some_and(|d| !(d >= 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument("maximum delay must be finite and non-negative".into()));
        }
        if self.tx_array.is_empty() || self.rx_array.is_empty() {
            return Err(Error::InvalidArgument("zero-size antenna array".into()));
        }
        Ok(())
    }
}

/// Time-domain taps, each `N_r x N_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayTapChannel {
    pub taps: Vec<CMat>,
}

/// Per-subcarrier response, each `N_r x N_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqChannel {
    pub per_subcarrier: Vec<CMat>,
}

impl FreqChannel {
    pub fn num_subcarriers(&self) -> usize {
        self.per_subcarrier.len()
    }
}

/// UPA steering vector. Element `(m, n)` (flattened as `m * cols + n`) has
/// phase `2*pi*spacing*(m*u + n*v)` with `u = sin(el)cos(az)` and
/// `v = sin(el)sin(az)`; all entries have modulus `1/sqrt(rows*cols)`.
pub fn steering_vector(array: ArrayShape, elevation: f64, azimuth: f64, spacing: f64) -> Result<Vec<Complex64>> {
    if array.is_empty() {
        return Err(Error::InvalidArgument("zero-size antenna array".into()));
    }
    let u = libm::sin(elevation) * libm::cos(azimuth);
    let v = libm::sin(elevation) * libm::sin(azimuth);
    let amp = 1.0 / libm::sqrt(array.len() as f64);
    let mut out = Vec::with_capacity(array.len());
    for m in 0..array.rows {
        for n in 0..array.cols {
            let phase = 2.0 * PI * spacing * (m as f64 * u + n as f64 * v);
            out.push(Complex64::from_polar(amp, phase));
        }
    }
    Ok(out)
}

/// Raised-cosine pulse `sinc(t/Ts) cos(pi b t/Ts) / (1 - (2 b t/Ts)^2)`.
pub fn raised_cosine(t: f64, sample_period: f64, rolloff: f64) -> f64 {
    let x = t / sample_period;
    if rolloff > 0.0 {
        let edge = 1.0 / (2.0 * rolloff);
        if (x.abs() - edge).abs() < 1e-10 {
            return PI / 4.0 * sinc(edge);
        }
    }
    let denom = 1.0 - (2.0 * rolloff * x) * (2.0 * rolloff * x);
    sinc(x) * libm::cos(PI * rolloff * x) / denom
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        libm::sin(PI * x) / (PI * x)
    }
}

/// Draw the `L` paths: unit complex Gaussian gains, delays uniform on
/// `[0, (N_c - 1) Ts]` (or `[0, max_delay]`), angles uniform on `[0, 2pi)`.
pub fn draw_paths<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> Vec<PathComponent> {
    let max_delay = params.max_delay.unwrap_or((params.num_taps - 1) as f64 * params.sample_period);
    (0..params.num_paths)
        .map(|_| {
            let gain = complex_normal(rng, 1.0);
            let delay = if max_delay > 0.0 { rng.random_range(0.0..=max_delay) } else { 0.0 };
            PathComponent {
                gain,
                delay,
                aoa_elevation: uniform_phase(rng),
                aoa_azimuth: uniform_phase(rng),
                aod_elevation: uniform_phase(rng),
                aod_azimuth: uniform_phase(rng),
            }
        })
        .collect()
}

/// Assemble the delay taps from an explicit path list.
pub fn taps_from_paths(params: &ChannelParams, paths: &[PathComponent]) -> Result<DelayTapChannel> {
    params.validate()?;
    let nt = params.tx_array.len();
    let nr = params.rx_array.len();
    let scale = libm::sqrt((nt * nr) as f64 / (paths.len().max(1) as f64 * params.path_loss));
    let mut taps = alloc::vec![CMat::zeros(nr, nt); params.num_taps];
    for path in paths {
        let a_r = steering_vector(params.rx_array, path.aoa_elevation, path.aoa_azimuth, params.element_spacing)?;
        let a_t = steering_vector(params.tx_array, path.aod_elevation, path.aod_azimuth, params.element_spacing)?;
        for (d, tap) in taps.iter_mut().enumerate() {
            let p = raised_cosine(d as f64 * params.sample_period - path.delay, params.sample_period, params.rolloff);
            if p == 0.0 {
                continue;
            }
            let w = path.gain * (scale * p);
            for r in 0..nr {
                let wr = w * a_r[r];
                for t in 0..nt {
                    tap[(r, t)] += wr * a_t[t].conj();
                }
            }
        }
    }
    Ok(DelayTapChannel { taps })
}

/// Deterministic geometric channel for one user.
pub fn gen_channel(params: &ChannelParams, seed: u64) -> Result<DelayTapChannel> {
    params.validate()?;
    let mut rng = seeded(seed);
    let paths = draw_paths(params, &mut rng);
    taps_from_paths(params, &paths)
}

/// `H[j] = sum_d H[d] exp(-i 2 pi j d / J)`.
pub fn to_frequency(taps: &DelayTapChannel, num_subcarriers: usize) -> Result<FreqChannel> {
    if num_subcarriers == 0 {
        return Err(Error::InvalidArgument("need at least one subcarrier".into()));
    }
    let first = taps.taps.first().ok_or_else(|| Error::InvalidArgument("empty tap list".into()))?;
    let (nr, nt) = first.shape();
    let per_subcarrier = (0..num_subcarriers)
        .map(|j| {
            let mut h = CMat::zeros(nr, nt);
            for (d, tap) in taps.taps.iter().enumerate() {
                let angle = -2.0 * PI * ((j * d) % num_subcarriers) as f64 / num_subcarriers as f64;
                h += tap * Complex64::from_polar(1.0, angle);
            }
            h
        })
        .collect();
    Ok(FreqChannel { per_subcarrier })
}

/// Antenna-domain downlink reception for every user.
///
/// `symbols[m][j]` is user `m`'s `N_s x T` grid on subcarrier `j`. Returns
/// `out[k][j]` (`N_r x T`), the sum over all users' precoded streams seen
/// through `H_k[j]`, plus circular Gaussian noise of per-entry variance
/// `noise_var`.
pub fn transmit(
    channels: &[FreqChannel],
    precoders: &PrecoderSet,
    symbols: &[Vec<CMat>],
    noise_var: f64,
    seed: u64,
) -> Result<Vec<Vec<CMat>>> {
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidArgument("noise variance must be non-negative".into()));
    }
    let users = precoders.f_bb.len();
    if symbols.len() != users {
        return Err(Error::InvalidArgument("one symbol grid per precoded user is required".into()));
    }
    let j_count = symbols.first().map_or(0, |g| g.len());
    let ns = precoders.num_streams();
    let nt = precoders.f_rf.nrows();
    let t_count = symbols.first().and_then(|g| g.first()).map_or(0, |x| x.ncols());
    for grid in symbols {
        if grid.len() != j_count {
            return Err(Error::InvalidArgument("symbol grids differ in subcarrier count".into()));
        }
        for x in grid {
            check_shape("transmit symbols", x, ns, t_count)?;
        }
    }
    // Frequency-flat per-user transmit beams lambda * F_RF * F_BB,m.
    let beams: Vec<CMat> = precoders.f_bb.iter().map(|f| (&precoders.f_rf * f) * crate::linalg::c(precoders.power_factor, 0.0)).collect();
    let tx: Vec<CMat> = (0..j_count)
        .map(|j| {
            let mut s = CMat::zeros(nt, t_count);
            for (m, beam) in beams.iter().enumerate() {
                s += beam * &symbols[m][j];
            }
            s
        })
        .collect();
    channels
        .iter()
        .enumerate()
        .map(|(k, h)| {
            if h.num_subcarriers() != j_count {
                return Err(Error::InvalidArgument("channel and symbol grid subcarrier counts differ".into()));
            }
            let nr = h.per_subcarrier[0].nrows();
            let mut rng = seeded(derive_seed(seed, TAG_NOISE, k as u64));
            h.per_subcarrier
                .iter()
                .zip(&tx)
                .map(|(hj, sj)| {
                    check_shape("transmit channel", hj, nr, nt)?;
                    let mut y = hj * sj;
                    if noise_var > 0.0 {
                        y += complex_normal_matrix(&mut rng, nr, t_count, noise_var);
                    }
                    Ok(y)
                })
                .collect()
        })
        .collect()
}
