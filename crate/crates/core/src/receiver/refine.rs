//! Decision-directed refinement: reliability gating, LS re-estimation and
//! LMMSE detection.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{condition_number, CMat};
use crate::modem::{llr, LlrParams, QamConstellation};

/// Columns of `soft` whose every entry has reliability `>= threshold`.
pub fn llr_filter(soft: &CMat, c: &QamConstellation, params: LlrParams, threshold: f64) -> Result<Vec<usize>> {
    let mut keep = Vec::with_capacity(soft.ncols());
    for col in 0..soft.ncols() {
        let mut ok = true;
        for z in soft.column(col).iter() {
            if llr(*z, c, params)? < threshold {
                ok = false;
                break;
            }
        }
        if ok {
            keep.push(col);
        }
    }
    if keep.is_empty() {
        return Err(Error::InsufficientSamples { retained: 0, required: soft.nrows() });
    }
    Ok(keep)
}

/// Least-squares channel `Y X^H (X X^H)^-1` so that `Y ~ H X`.
pub fn ls_refine(x: &CMat, y: &CMat) -> Result<CMat> {
    let ns = x.nrows();
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch { context: "ls_refine", expected: x.shape(), found: y.shape() });
    }
    if x.ncols() < ns {
        return Err(Error::InsufficientSamples { retained: x.ncols(), required: ns });
    }
    let gram = x * x.adjoint();
    if !(condition_number(&gram) < 1e12) {
        return Err(Error::SingularEstimate);
    }
    let inv = gram.try_inverse().ok_or(Error::SingularEstimate)?;
    Ok(y * x.adjoint() * inv)
}

/// Bias-normalised LMMSE estimate `diag(G H)^-1 G Y` with
/// `G = H^H (H H^H + noise_var I)^-1`.
pub fn lmmse_detect(h: &CMat, y: &CMat, noise_var: f64) -> Result<CMat> {
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidArgument("noise variance must be non-negative".into()));
    }
    let nr = h.nrows();
    let reg = h * h.adjoint() + CMat::identity(nr, nr) * Complex64::new(noise_var, 0.0);
    let inv = crate::linalg::inverse(&reg, "lmmse_detect")?;
    let g = h.adjoint() * inv;
    let gh = &g * h;
    let mut out = &g * y;
    for s in 0..out.nrows() {
        let d = gh[(s, s)];
        if !(d.norm() > 1e-300) {
            return Err(Error::DetectionFailure { stream: s });
        }
        let mut row = out.row_mut(s);
        row /= d;
    }
    Ok(out)
}
