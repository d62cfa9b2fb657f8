//! Primal active-set solver for the strictly convex QP
//! `min 0.5 d'Md - g'd  s.t.  C d <= h`, started from the feasible point `d = 0`.

use alloc::vec::Vec;

use crate::linalg::RMat;

pub(crate) struct QpOutcome {
    pub step: Vec<f64>,
    /// Working set at exit with its multipliers.
    #[cfg_attr(not(test), allow(dead_code))]
    pub active: Vec<(usize, f64)>,
    /// True when the KKT conditions of the QP hold at `step`.
    pub optimal: bool,
}

pub(crate) struct Qp<'a> {
    pub metric: &'a RMat,
    pub gradient: &'a [f64],
    pub rows: &'a [Vec<f64>],
    pub rhs: &'a [f64],
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Qp<'_> {
    pub fn solve(&self, max_iterations: usize) -> QpOutcome {
        let p = self.gradient.len();
        let mut d = alloc::vec![0.0; p];
        let mut working: Vec<usize> = Vec::new();
        let mut last_multipliers: Vec<f64> = Vec::new();
        for _ in 0..max_iterations {
            let Some((s, mu)) = self.equality_step(&d, &working) else {
                break;
            };
            let s_norm = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let d_norm = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if s_norm <= 1e-13 * (1.0 + d_norm) {
                last_multipliers = mu.clone();
                let worst = mu
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m < -1e-12)
                    .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(core::cmp::Ordering::Equal));
                match worst {
                    None => {
                        return QpOutcome {
                            step: d,
                            active: working.iter().copied().zip(mu).collect(),
                            optimal: true,
                        }
                    }
                    Some((pos, _)) => {
                        working.remove(pos);
                        continue;
                    }
                }
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for (j, row) in self.rows.iter().enumerate() {
                if working.contains(&j) {
                    continue;
                }
                let rate = dot(row, &s);
                if rate <= 1e-14 {
                    continue;
                }
                let room = (self.rhs[j] - dot(row, &d)).max(0.0);
                let ratio = room / rate;
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(j);
                }
            }
            for (di, si) in d.iter_mut().zip(&s) {
                *di += alpha * si;
            }
            if let Some(j) = blocking {
                working.push(j);
            }
        }
        let active = working.iter().copied().zip(last_multipliers.into_iter().chain(core::iter::repeat(0.0))).collect();
        QpOutcome { step: d, active, optimal: false }
    }

    /// Solve the KKT system for the step `s` that minimises the model with
    /// the working set held as equalities.
    fn equality_step(&self, d: &[f64], working: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
        let p = d.len();
        let w = working.len();
        let n = p + w;
        let mut kkt = RMat::zeros(n, n);
        let mut rhs = nalgebra::DVector::<f64>::zeros(n);
        kkt.view_mut((0, 0), (p, p)).copy_from(self.metric);
        for (k, &j) in working.iter().enumerate() {
            for (i, &v) in self.rows[j].iter().enumerate() {
                kkt[(p + k, i)] = v;
                kkt[(i, p + k)] = v;
            }
        }
        let md = self.metric * nalgebra::DVector::from_column_slice(d);
        for i in 0..p {
            rhs[i] = self.gradient[i] - md[i];
        }
        let sol = kkt.lu().solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((sol.rows(0, p).iter().copied().collect(), sol.rows(p, w).iter().copied().collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_newton_step() {
        let m = RMat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let qp = Qp { metric: &m, gradient: &[2.0, 4.0], rows: &[], rhs: &[] };
        let out = qp.solve(10);
        assert!(out.optimal);
        assert!((out.step[0] - 1.0).abs() < 1e-12 && (out.step[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_constraint_binds() {
        let m = RMat::identity(2, 2);
        let rows = alloc::vec![alloc::vec![1.0, 0.0], alloc::vec![0.0, 1.0]];
        let qp = Qp { metric: &m, gradient: &[3.0, -1.0], rows: &rows, rhs: &[0.5, 0.5] };
        let out = qp.solve(10);
        assert!(out.optimal);
        assert!((out.step[0] - 0.5).abs() < 1e-12);
        assert!((out.step[1] + 1.0).abs() < 1e-12);
        let (j, mu) = out.active[0];
        assert_eq!(j, 0);
        assert!((mu - 2.5).abs() < 1e-12);
    }

    #[test]
    fn releases_constraint_with_negative_multiplier() {
        // Start on x <= 0 with the unconstrained optimum pulling away from it.
        let m = RMat::identity(1, 1);
        let rows = alloc::vec![alloc::vec![1.0], alloc::vec![-1.0]];
        let qp = Qp { metric: &m, gradient: &[-2.0], rows: &rows, rhs: &[0.0, 1.0] };
        let out = qp.solve(10);
        assert!(out.optimal);
        assert!((out.step[0] + 1.0).abs() < 1e-12);
    }
}
