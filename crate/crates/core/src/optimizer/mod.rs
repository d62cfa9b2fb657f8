//! Constellation fitting: maximise `log|det U|` over complex-structured real
//! matrices `U` subject to `|(U y_i)_r| <= b` for every real-stacked sample.
//!
//! The structure `U11 = U22 = A`, `U21 = -U12 = B` is enforced by
//! parameterisation: the free vector holds `A` then `B`, each row-major, so
//! `U` always corresponds to the complex matrix `A + iB`. The program is
//! solved with a feasible-direction SQP: every iteration solves a convex QP
//! in a natural metric over the near-active constraints, then takes a
//! ratio-tested, Armijo-backtracked step that keeps every sample feasible.

mod qp;

use alloc::vec::Vec;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat};

/// Stopping and feasibility controls for [`solve`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub constraint_tol: f64,
    pub step_tol: f64,
    pub max_iterations: usize,
    /// Only constraints whose value is within this fraction of the bound enter
    /// the QP; `None` passes every constraint.
    pub active_window: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { constraint_tol: 1e-8, step_tol: 1e-9, max_iterations: 500, active_window: Some(0.05) }
    }
}

#[derive(Clone, Debug)]
pub struct FittingProblem {
    samples: RMat,
    bound: f64,
    dim: usize,
    tolerances: Tolerances,
}

impl FittingProblem {
    /// `samples` is the `2n x m` real stack `[Re Y; Im Y]`.
    pub fn new(samples: RMat, bound: f64, tolerances: Tolerances) -> Result<Self> {
        if samples.nrows() == 0 || !samples.nrows().is_multiple_of(2) {
            return Err(Error::InvalidArgument(alloc::format!(
                "real-stacked samples need an even, positive row count, got {}",
                samples.nrows()
            )));
        }
        let dim = samples.nrows() / 2;
        if samples.ncols() < 2 * dim {
            return Err(Error::InsufficientSamples { retained: samples.ncols(), required: 2 * dim });
        }
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!("bound must be positive and finite, got {bound}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite sample"));
        }
        Ok(Self { samples, bound, dim, tolerances })
    }

    pub fn from_complex(samples: &CMat, bound: f64, tolerances: Tolerances) -> Result<Self> {
        Self::new(real_stack(samples), bound, tolerances)
    }

    pub fn samples(&self) -> &RMat {
        &self.samples
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tolerances
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    InfeasibleStart,
}

#[derive(Clone, Debug)]
pub struct FittingSolution {
    pub u: RMat,
    pub objective: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Number of scalar constraint evaluations performed, for complexity
    /// accounting.
    pub constraint_evaluations: u64,
}

impl FittingSolution {
    /// The complex matrix `A + iB` represented by `u`.
    pub fn complex(&self) -> CMat {
        let n = self.u.nrows() / 2;
        CMat::from_fn(n, n, |r, c| Complex64::new(self.u[(r, c)], self.u[(n + r, c)]))
    }
}

/// Real stack `[Re Y; Im Y]` of a complex matrix.
pub fn real_stack(y: &CMat) -> RMat {
    let n = y.nrows();
    RMat::from_fn(2 * n, y.ncols(), |r, c| if r < n { y[(r, c)].re } else { y[(r - n, c)].im })
}

/// `[[Re, -Im], [Im, Re]]` embedding of a complex matrix.
pub fn real_embed(a: &CMat) -> RMat {
    let (r, c) = a.shape();
    RMat::from_fn(2 * r, 2 * c, |i, j| {
        let z = a[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Largest deviation of a square real matrix from the complex structure.
pub fn structure_residual(u: &RMat) -> f64 {
    let n = u.nrows() / 2;
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            worst = worst.max((u[(r, c)] - u[(n + r, n + c)]).abs());
            worst = worst.max((u[(n + r, c)] + u[(r, n + c)]).abs());
        }
    }
    worst
}

/// Complex matrix represented by a structured real matrix, reading the
/// averaged blocks `(U11 + U22)/2 + i (U21 - U12)/2`.
pub fn complex_extract(u: &RMat, tol: f64) -> Result<CMat> {
    if u.nrows() != u.ncols() || !u.nrows().is_multiple_of(2) {
        return Err(Error::DimensionMismatch {
            context: "complex_extract",
            expected: (u.nrows() & !1, u.nrows() & !1),
            found: u.shape(),
        });
    }
    let residual = structure_residual(u);
    if residual > tol {
        return Err(Error::StructureViolation { residual });
    }
    let n = u.nrows() / 2;
    Ok(CMat::from_fn(n, n, |r, c| {
        Complex64::new(
            0.5 * (u[(r, c)] + u[(n + r, n + c)]),
            0.5 * (u[(n + r, c)] - u[(r, n + c)]),
        )
    }))
}

/// Structured real matrix from the free parameter vector `[A; B]`.
pub fn params_to_matrix(params: &[f64], n: usize) -> Result<RMat> {
    if params.len() != 2 * n * n {
        return Err(Error::DimensionMismatch { context: "params_to_matrix", expected: (2 * n * n, 1), found: (params.len(), 1) });
    }
    let (a, b) = params.split_at(n * n);
    let z = CMat::from_fn(n, n, |r, c| Complex64::new(a[r * n + c], b[r * n + c]));
    Ok(real_embed(&z))
}

/// Free parameter vector `[A; B]` of a structured real matrix (blocks U11, U21).
pub fn matrix_to_params(u: &RMat) -> Vec<f64> {
    let n = u.nrows() / 2;
    let mut out = Vec::with_capacity(2 * n * n);
    for r in 0..n {
        for c in 0..n {
            out.push(u[(r, c)]);
        }
    }
    for r in 0..n {
        for c in 0..n {
            out.push(u[(n + r, c)]);
        }
    }
    out
}

fn log_abs_det(u: &RMat) -> f64 {
    let lu = u.clone().lu();
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        let d = lu.u()[(i, i)];
        if d == 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += libm::log(d.abs());
    }
    acc
}

/// `log|det U|` and its gradient with respect to the free parameters.
pub fn objective_and_gradient(params: &[f64], n: usize) -> Result<(f64, Vec<f64>)> {
    let u = params_to_matrix(params, n)?;
    let inv = crate::linalg::real_inverse(&u, "objective_and_gradient")?;
    let value = log_abs_det(&u);
    if !value.is_finite() {
        return Err(Error::SingularMatrix("objective_and_gradient"));
    }
    Ok((value, structured_gradient(&inv, n)))
}

/// Chain rule of `(U^-1)^T` through the structure parameterisation.
fn structured_gradient(inv: &RMat, n: usize) -> Vec<f64> {
    // G = inv^T, so G[i][j] = inv[j][i].
    let g = |i: usize, j: usize| inv[(j, i)];
    let mut grad = Vec::with_capacity(2 * n * n);
    for r in 0..n {
        for c in 0..n {
            grad.push(g(r, c) + g(n + r, n + c));
        }
    }
    for r in 0..n {
        for c in 0..n {
            grad.push(g(n + r, c) - g(r, n + c));
        }
    }
    grad
}

/// Positive-definite metric `<d, e> = tr((U^-1 D)^T (U^-1 E))` on the
/// structured directions.
fn natural_metric(inv: &RMat, n: usize) -> RMat {
    let p = 2 * n * n;
    // Each basis direction places two (signed) columns of U^-1 into two
    // columns of the product; store them as (target column, source column, sign).
    let basis = |k: usize| -> [(usize, usize, f64); 2] {
        let (blk, idx) = (k / (n * n), k % (n * n));
        let (r, c) = (idx / n, idx % n);
        if blk == 0 {
            [(c, r, 1.0), (n + c, n + r, 1.0)]
        } else {
            [(c, n + r, 1.0), (n + c, r, -1.0)]
        }
    };
    let col_dot = |a: usize, b: usize| inv.column(a).dot(&inv.column(b));
    let mut m = RMat::zeros(p, p);
    for i in 0..p {
        let bi = basis(i);
        for j in i..p {
            let bj = basis(j);
            let mut acc = 0.0;
            for &(ti, si, gi) in &bi {
                for &(tj, sj, gj) in &bj {
                    if ti == tj {
                        acc += gi * gj * col_dot(si, sj);
                    }
                }
            }
            m[(i, j)] = acc;
            m[(j, i)] = acc;
        }
    }
    m
}

fn rank(samples: &RMat) -> usize {
    let gram = samples * samples.transpose();
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    if top <= 0.0 {
        return 0;
    }
    eig.eigenvalues.iter().filter(|&&v| v > 1e-20 * top).count()
}

/// Gradient of the constraint `(U y)_q` with respect to the free parameters.
fn constraint_row(y: &[f64], q: usize, n: usize, sign: f64) -> Vec<f64> {
    let mut row = alloc::vec![0.0; 2 * n * n];
    let (re, im) = y.split_at(n);
    for c in 0..n {
        // Row q < n reads Re(z) = A_q Re(y) - B_q Im(y); row n + r reads
        // Im(z) = B_r Re(y) + A_r Im(y).
        let (r, a, b) = if q < n { (q, re[c], -im[c]) } else { (q - n, im[c], re[c]) };
        row[r * n + c] = sign * a;
        row[n * n + r * n + c] = sign * b;
    }
    row
}

/// Maximise `log|det U|` subject to `|U samples|_inf <= bound`, starting from
/// the feasible complex matrix `start`.
pub fn solve(problem: &FittingProblem, start: &CMat) -> Result<FittingSolution> {
    let n = problem.dim;
    crate::linalg::check_shape("solve start", start, n, n)?;
    let s = &problem.samples;
    let b = problem.bound;
    let tol = problem.tolerances;
    if rank(s) < 2 * n {
        return Err(Error::InvalidArgument(alloc::format!("samples have rank below {}", 2 * n)));
    }

    let mut u = real_embed(start);
    let mut evaluations: u64 = 0;
    let mut values = &u * s;
    evaluations += values.len() as u64;
    let excess = values.amax() - b;
    if excess > tol.constraint_tol {
        return Err(Error::InfeasibleStart { excess });
    }
    let mut x = matrix_to_params(&u);
    let mut inv = crate::linalg::real_inverse(&u, "solve start")?;
    let mut f = log_abs_det(&u);
    if !f.is_finite() {
        return Err(Error::SingularMatrix("solve start"));
    }

    let sample_scale = 2.0 * n as f64 * s.amax();
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let qp_limit = 20 * (2 * n * n) + 50;
    while iterations < tol.max_iterations {
        iterations += 1;
        let grad = structured_gradient(&inv, n);
        let metric = natural_metric(&inv, n);

        let threshold = match tol.active_window {
            Some(w) => (1.0 - w) * b,
            None => f64::NEG_INFINITY,
        };
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..s.ncols() {
            let y = s.column(i);
            let y = y.as_slice();
            for q in 0..2 * n {
                let v = values[(q, i)];
                if v.abs() >= threshold {
                    let sign = if v >= 0.0 { 1.0 } else { -1.0 };
                    rows.push(constraint_row(y, q, n, sign));
                    rhs.push((b - v.abs()).max(0.0));
                }
            }
        }
        let outcome = qp::Qp { metric: &metric, gradient: &grad, rows: &rows, rhs: &rhs }.solve(qp_limit);
        let d = outcome.step;
        let d_norm = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let x_scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if outcome.optimal && d_norm <= tol.step_tol * x_scale {
            status = SolveStatus::Converged;
            break;
        }

        // Ratio test against every constraint, not only the QP's candidates.
        let du = params_to_matrix(&d, n)?;
        let rates = &du * s;
        evaluations += rates.len() as u64;
        // Rates at rounding level come from constraints the QP holds on the
        // boundary; they cannot move the iterate measurably and are skipped.
        let negligible = 1e-12 * d_norm * sample_scale;
        let mut reach = f64::INFINITY;
        for (v, r) in values.iter().zip(rates.iter()) {
            if r.abs() <= negligible {
                continue;
            }
            let room = (b - v * r.signum()).max(0.0);
            reach = reach.min(room / r.abs());
        }

        let slope: f64 = grad.iter().zip(&d).map(|(g, di)| g * di).sum();
        let evaluate = |alpha: f64| -> Result<(Vec<f64>, RMat, f64)> {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            let tu = params_to_matrix(&trial, n)?;
            let tf = log_abs_det(&tu);
            if tf.is_nan() {
                return Err(Error::NumericalFailure("objective became NaN"));
            }
            Ok((trial, tu, tf))
        };
        let mut alpha = reach.min(1.0);
        let mut accepted = None;
        for _ in 0..60 {
            if alpha * d_norm <= 1e-3 * tol.step_tol * x_scale {
                break;
            }
            let (trial, tu, tf) = evaluate(alpha)?;
            if tf.is_finite() && tf >= f + 1e-4 * alpha * slope.max(0.0) {
                accepted = Some((trial, tu, tf));
                break;
            }
            alpha *= 0.5;
        }
        // The metric model underestimates curvature along directions where
        // the log-determinant is convex; extend a full step while it pays.
        if alpha == 1.0 {
            while let Some((_, _, best)) = &accepted {
                let next = (2.0 * alpha).min(reach);
                if next <= alpha * (1.0 + 1e-12) {
                    break;
                }
                let cand = evaluate(next)?;
                if !(cand.2.is_finite() && cand.2 > *best) {
                    break;
                }
                alpha = next;
                accepted = Some(cand);
            }
        }
        let Some((trial, tu, tf)) = accepted else {
            // No measurable progress along the model direction: the point is
            // stationary to working precision.
            status = SolveStatus::Converged;
            break;
        };
        let Ok(tinv) = crate::linalg::real_inverse(&tu, "solve iterate") else {
            return Err(Error::NumericalFailure("iterate became singular"));
        };
        let step_size = alpha * d_norm;
        x = trial;
        u = tu;
        inv = tinv;
        let gain = tf - f;
        f = tf;
        values = &u * s;
        evaluations += values.len() as u64;
        if step_size <= tol.step_tol * x_scale && gain <= tol.step_tol {
            status = SolveStatus::Converged;
            break;
        }
    }

    Ok(FittingSolution { u, objective: f, iterations, status, constraint_evaluations: evaluations })
}

/// Left-multiply each column of `samples` by the structured `u` and report
/// the largest absolute entry.
pub fn max_constraint_value(u: &RMat, samples: &RMat) -> f64 {
    (u * samples).amax()
}

#[cfg(test)]
mod tests;
