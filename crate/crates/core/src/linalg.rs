//! Small dense linear-algebra helpers over `nalgebra` dynamic matrices.

use alloc::vec::Vec;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn check_shape(context: &'static str, m: &CMat, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::DimensionMismatch {
            context,
            expected: (rows, cols),
            found: (m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

pub fn fro_norm_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn inverse(m: &CMat, context: &'static str) -> Result<CMat> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context,
            expected: (m.nrows(), m.nrows()),
            found: (m.nrows(), m.ncols()),
        });
    }
    let inv = m.clone().try_inverse().ok_or(Error::SingularMatrix(context))?;
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SingularMatrix(context));
    }
    Ok(inv)
}

pub fn real_inverse(m: &RMat, context: &'static str) -> Result<RMat> {
    let inv = m.clone().try_inverse().ok_or(Error::SingularMatrix(context))?;
    if inv.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularMatrix(context));
    }
    Ok(inv)
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    // Eigenvalues of the smaller Gram matrix; cheaper and robust enough for
    // the small matrices handled here.
    let gram = if m.nrows() <= m.ncols() { m * m.adjoint() } else { m.adjoint() * m };
    let eig = SymmetricEigen::new(gram);
    let mut s: Vec<f64> = eig.eigenvalues.iter().map(|&l| libm::sqrt(l.max(0.0))).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    s
}

pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Ratio of largest to smallest singular value; infinite when rank deficient.
pub fn condition_number(m: &CMat) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 && hi.is_finite() => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Eigenvectors of a Hermitian matrix, sorted by descending eigenvalue, each
/// normalised so its first non-negligible entry is real and positive.
pub fn hermitian_eigen_sorted(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut vecs = CMat::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let scale = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let pivot = col.iter().find(|z| z.norm() > 1e-9 * scale).copied();
        let phase = match pivot {
            Some(p) if p.norm() > 0.0 => p.conj() / p.norm(),
            _ => Complex64::new(1.0, 0.0),
        };
        for r in 0..n {
            vecs[(r, dst)] = col[r] * phase;
        }
    }
    (vals, vecs)
}

/// Largest absolute real or imaginary part over all entries: the infinity
/// norm of the real-stacked matrix.
pub fn real_stack_inf_norm(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.re.abs()).max(z.im.abs()))
}

/// Columns `cols` of `m`, in order.
pub fn select_columns(m: &CMat, cols: &[usize]) -> CMat {
    CMat::from_fn(m.nrows(), cols.len(), |r, k| m[(r, cols[k])])
}

/// Horizontal concatenation of equally tall matrices.
pub fn hconcat(parts: &[&CMat]) -> CMat {
    let rows = parts.first().map_or(0, |p| p.nrows());
    let total: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = CMat::zeros(rows, total);
    let mut off = 0;
    for p in parts {
        out.view_mut((0, off), (rows, p.ncols())).copy_from(*p);
        off += p.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_descending_with_phase_convention() {
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let (vals, vecs) = hermitian_eigen_sorted(&m);
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        for k in 0..2 {
            let first = vecs[(0, k)];
            assert!(first.im.abs() < 1e-12 && first.re > 0.0);
            let mv = &m * vecs.column(k);
            let lv = vecs.column(k) * c(vals[k], 0.0);
            assert!((mv - lv).norm() < 1e-12);
        }
    }

    #[test]
    fn condition_number_of_rank_deficient_is_infinite_or_huge() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(condition_number(&m) > 1e7);
        assert!((condition_number(&CMat::identity(3, 3)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inf_norm_takes_parts_separately() {
        let m = CMat::from_row_slice(1, 2, &[c(0.5, -2.0), c(1.0, 1.0)]);
        assert_eq!(real_stack_inf_norm(&m), 2.0);
    }
}
