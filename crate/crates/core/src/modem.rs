//! Square Gray-mapped M-QAM with unit average power.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hconcat, CMat, I};

/// Lower bound applied to the symbol-domain noise variance used in LLRs.
pub const NOISE_VAR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct QamConstellation {
    order: usize,
    bits_per_symbol: usize,
    /// Indexed by the Gray-coded bit label.
    points: Vec<Complex64>,
    boundary: f64,
}

impl QamConstellation {
    pub fn new(order: usize) -> Result<Self> {
        make_constellation(order)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Largest per-axis coordinate.
    pub fn boundary(&self) -> f64 {
        self.boundary
    }

    /// Bottom-left corner point `-b - ib`.
    pub fn corner(&self) -> Complex64 {
        Complex64::new(-self.boundary, -self.boundary)
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    /// Bits of `index`, most significant first.
    pub fn bits_of(&self, index: usize) -> impl Iterator<Item = u8> + '_ {
        (0..self.bits_per_symbol).rev().map(move |b| ((index >> b) & 1) as u8)
    }

    /// Inverse of [`Self::bits_of`]; `bits` must hold `bits_per_symbol` entries.
    pub fn index_of_bits(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as usize)
    }

    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        if !bits.len().is_multiple_of(self.bits_per_symbol) {
            return Err(Error::InvalidArgument("bit count is not a multiple of bits per symbol".into()));
        }
        Ok(bits.chunks(self.bits_per_symbol).map(|c| self.points[self.index_of_bits(c)]).collect())
    }

    /// Hard-decide every entry of `soft`.
    pub fn slice(&self, soft: &CMat) -> CMat {
        soft.map(|z| nearest(z, self).0)
    }
}

fn gray_to_binary(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// Gray-mapped square QAM, `M in {4, 16, 64, 256}`.
///
/// The label's high half selects the in-phase level and the low half the
/// quadrature level, each through a Gray code.
pub fn make_constellation(order: usize) -> Result<QamConstellation> {
    let bits = match order {
        4 => 2,
        16 => 4,
        64 => 6,
        256 => 8,
        _ => return Err(Error::InvalidArgument(alloc::format!("unsupported QAM order {order}"))),
    };
    let half = bits / 2;
    let side = 1usize << half;
    let scale = 1.0 / libm::sqrt(2.0 * (order as f64 - 1.0) / 3.0);
    let level = |g: usize| (2.0 * gray_to_binary(g) as f64 - (side as f64 - 1.0)) * scale;
    let points: Vec<Complex64> = (0..order)
        .map(|idx| Complex64::new(level(idx >> half), level(idx & (side - 1))))
        .collect();
    let boundary = points.iter().fold(0.0f64, |m, p| m.max(p.re.abs()).max(p.im.abs()));
    Ok(QamConstellation { order, bits_per_symbol: bits, points, boundary })
}

/// Closest constellation point; ties go to the smaller index.
pub fn nearest(y: Complex64, c: &QamConstellation) -> (Complex64, usize) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in c.points.iter().enumerate() {
        let d = (y - p).norm_sqr();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (c.points[best], best)
}

/// Four smallest squared distances from `y` to the constellation, ascending.
pub fn four_smallest_distances(y: Complex64, c: &QamConstellation) -> [f64; 4] {
    let mut d = [f64::INFINITY; 4];
    for p in &c.points {
        let v = (y - p).norm_sqr();
        if v < d[3] {
            let mut k = 3;
            while k > 0 && d[k - 1] > v {
                d[k] = d[k - 1];
                k -= 1;
            }
            d[k] = v;
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlrParams {
    noise_var: f64,
    floor: f64,
}

impl LlrParams {
    /// Noise variance clamped to `max(floor, noise_var)`.
    pub fn new(noise_var: f64, floor: f64) -> Result<Self> {
        if !(floor > 0.0) || noise_var.is_nan() {
            return Err(Error::InvalidArgument("LLR floor must be positive".into()));
        }
        Ok(Self { noise_var: noise_var.max(floor), floor })
    }

    /// `max(1e-3, 1/snr)` for a linear SNR.
    pub fn from_snr(snr: f64) -> Self {
        let nv = if snr > 0.0 { 1.0 / snr } else { f64::INFINITY };
        Self { noise_var: nv.max(NOISE_VAR_FLOOR), floor: NOISE_VAR_FLOOR }
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }
}

/// Reliability of a hard decision: log of the nearest point's Gaussian
/// weight over the summed weights of the next three, with squared distances.
pub fn llr(sample: Complex64, c: &QamConstellation, p: LlrParams) -> Result<f64> {
    if c.points.len() < 4 {
        return Err(Error::InvalidArgument("LLR needs at least four constellation points".into()));
    }
    let d = four_smallest_distances(sample, c);
    let s = 2.0 * p.noise_var;
    let e: [f64; 3] = [-d[1] / s, -d[2] / s, -d[3] / s];
    let m = e[0].max(e[1]).max(e[2]);
    let lse = m + libm::log(e.iter().map(|x| libm::exp(x - m)).sum::<f64>());
    Ok(-d[0] / s - lse)
}

/// `[Y, -Y, iY, -iY]`.
pub fn augment(y: &CMat) -> CMat {
    let neg = -y;
    let rot = y * I;
    let rot_neg = y * (-I);
    hconcat(&[y, &neg, &rot, &rot_neg])
}

/// Transmitted pilot block: stream `s` sends the bottom-left corner point at
/// pilot position `s` and zero at the other `N_s - 1` positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBlock {
    pub symbol: Complex64,
    /// `N_s x N_s`; column = pilot position, row = stream.
    pub matrix: CMat,
}

pub fn corner_pilot(c: &QamConstellation, ns: usize) -> Result<PilotBlock> {
    if ns == 0 {
        return Err(Error::InvalidArgument("need at least one stream".into()));
    }
    let symbol = c.corner();
    Ok(PilotBlock { symbol, matrix: CMat::identity(ns, ns) * symbol })
}
