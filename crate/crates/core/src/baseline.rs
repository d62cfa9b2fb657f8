//! Pilot-based channel estimation baselines and pilot-overhead accounting.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Subcarriers per resource block of the orthogonal pattern.
pub const RB_SUBCARRIERS: usize = 12;
/// Fraction of the grid occupied by the shared non-orthogonal comb.
pub const NON_ORTHOGONAL_FRACTION: f64 = 0.17;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    /// Every stream of every user owns its pilot REs; all other streams are
    /// silent there.
    Orthogonal,
    /// One comb shared by all users: stream `s` of every user transmits on the
    /// same REs, so users contaminate each other's estimates.
    NonOrthogonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotPattern {
    pub kind: PatternKind,
    /// `pilot_res[k][s]`: `(subcarrier, symbol)` positions of user `k`, stream `s`.
    pub pilot_res: Vec<Vec<Vec<(usize, usize)>>>,
    /// Every RE carrying any pilot, sorted and distinct.
    pub occupied: Vec<(usize, usize)>,
    pub subcarriers: usize,
    pub symbols: usize,
}

impl PilotPattern {
    /// `|pilot REs| / (J T)`.
    pub fn overhead_fraction(&self) -> f64 {
        self.occupied.len() as f64 / (self.subcarriers * self.symbols) as f64
    }

    pub fn is_pilot(&self, subcarrier: usize, symbol: usize) -> bool {
        self.occupied.binary_search(&(subcarrier, symbol)).is_ok()
    }

    /// Pilot value each stream of `user` sends at `(subcarrier, symbol)`:
    /// `Some(s)` if stream `s` owns it, `None` if the RE is silent for this
    /// user (or carries data when it is not a pilot RE at all).
    pub fn owner(&self, user: usize, subcarrier: usize, symbol: usize) -> Option<usize> {
        self.pilot_res[user].iter().position(|res| res.contains(&(subcarrier, symbol)))
    }
}

/// Build a baseline pilot layout on a `J x T` grid.
///
/// Orthogonal: within every resource block of [`RB_SUBCARRIERS`] subcarriers,
/// global stream `g = k N_s + s` takes one RE at subcarrier `g mod 12`,
/// symbol `g / 12`, so 96 streams fill 96 of a block's 144 REs.
/// Non-orthogonal: the first `round(0.17 J T)` REs in symbol-major order,
/// dealt to streams by `(j + t) mod N_s` and reused by every user.
pub fn make_pattern(kind: PatternKind, users: usize, ns: usize, subcarriers: usize, symbols: usize) -> Result<PilotPattern> {
    if users == 0 || ns == 0 || subcarriers == 0 || symbols == 0 {
        return Err(Error::InvalidArgument("pattern dimensions must be positive".into()));
    }
    let streams = users * ns;
    let mut pilot_res = alloc::vec![alloc::vec![Vec::new(); ns]; users];
    match kind {
        PatternKind::Orthogonal => {
            let rb = RB_SUBCARRIERS.min(subcarriers);
            if streams > rb * symbols {
                return Err(Error::CapacityExceeded { requested: streams, available: rb * symbols });
            }
            for start in (0..subcarriers).step_by(rb) {
                let width = rb.min(subcarriers - start);
                for g in 0..streams {
                    let (offset, symbol) = (g % rb, g / rb);
                    if offset < width {
                        pilot_res[g / ns][g % ns].push((start + offset, symbol));
                    }
                }
            }
        }
        PatternKind::NonOrthogonal => {
            if streams > subcarriers * symbols {
                return Err(Error::CapacityExceeded { requested: streams, available: subcarriers * symbols });
            }
            let count = libm::round(NON_ORTHOGONAL_FRACTION * (subcarriers * symbols) as f64) as usize;
            let count = count.max(ns);
            for idx in 0..count {
                let (t, j) = (idx / subcarriers, idx % subcarriers);
                let s = (j + t) % ns;
                for user in pilot_res.iter_mut() {
                    user[s].push((j, t));
                }
            }
        }
    }
    let mut occupied: Vec<(usize, usize)> = pilot_res.iter().flatten().flatten().copied().collect();
    occupied.sort_unstable();
    occupied.dedup();
    Ok(PilotPattern { kind, pilot_res, occupied, subcarriers, symbols })
}

/// Pilot REs of the semi-blind scheme: `N_s` adjacent subcarriers starting
/// at `J/2`, first OFDM symbol, shared by all users.
pub fn semiblind_pilot_positions(ns: usize, subcarriers: usize) -> Result<Vec<(usize, usize)>> {
    let start = subcarriers / 2;
    if ns == 0 || start + ns > subcarriers {
        return Err(Error::CapacityExceeded { requested: ns, available: subcarriers - start });
    }
    Ok((0..ns).map(|s| (start + s, 0)).collect())
}

/// Relative throughput gain `(1 - o_proposed) / (1 - o_baseline) - 1`.
pub fn theoretical_gain(overhead_baseline: f64, overhead_proposed: f64) -> f64 {
    (1.0 - overhead_proposed) / (1.0 - overhead_baseline) - 1.0
}

/// How per-pilot estimates are spread to every subcarrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Piecewise-linear between pilot subcarriers, held constant past the ends.
    Linear,
    /// Least-squares fit of a `taps`-long delay profile to the pilot
    /// subcarriers, evaluated on the whole band. Falls back to linear when
    /// there are fewer distinct pilot subcarriers than taps.
    DelayDomain { taps: usize },
}

/// Pilot-aided estimate of user `user`'s equivalent channel on every
/// subcarrier from its combined received grid `y[j]` (`N_s x T`).
///
/// Column `s` of `H[j]` is read off as `y[j][:, t] / p_t` at stream `s`'s
/// pilot REs (averaged over symbols on the same subcarrier), then
/// interpolated across subcarriers.
pub fn pilot_ce(
    y: &[CMat],
    pattern: &PilotPattern,
    user: usize,
    p_t: Complex64,
    interpolation: Interpolation,
) -> Result<Vec<CMat>> {
    let jn = y.len();
    if jn != pattern.subcarriers || user >= pattern.pilot_res.len() {
        return Err(Error::InvalidArgument("grid does not match the pilot pattern".into()));
    }
    if p_t.norm() == 0.0 {
        return Err(Error::SingularPilot);
    }
    let streams = pattern.pilot_res[user].len();
    let nr = y[0].nrows();
    let mut out = alloc::vec![CMat::zeros(nr, streams); jn];
    for (s, res) in pattern.pilot_res[user].iter().enumerate() {
        // Per-subcarrier LS estimates of column s.
        let mut sums: Vec<(usize, Vec<Complex64>, usize)> = Vec::new();
        for &(j, t) in res {
            let col: Vec<Complex64> = y[j].column(t).iter().map(|z| z / p_t).collect();
            match sums.iter_mut().find(|e| e.0 == j) {
                Some(e) => {
                    for (a, b) in e.1.iter_mut().zip(&col) {
                        *a += b;
                    }
                    e.2 += 1;
                }
                None => sums.push((j, col, 1)),
            }
        }
        if sums.is_empty() {
            return Err(Error::EstimationImpossible);
        }
        sums.sort_by_key(|e| e.0);
        let points: Vec<(usize, Vec<Complex64>)> = sums
            .into_iter()
            .map(|(j, v, n)| (j, v.into_iter().map(|z| z / n as f64).collect()))
            .collect();
        let columns = match interpolation {
            Interpolation::DelayDomain { taps } if taps > 0 && points.len() >= taps => delay_fit(&points, taps, jn, nr)?,
            _ => linear(&points, jn, nr),
        };
        for (j, col) in columns.into_iter().enumerate() {
            for r in 0..nr {
                out[j][(r, s)] = col[r];
            }
        }
    }
    Ok(out)
}

fn linear(points: &[(usize, Vec<Complex64>)], jn: usize, nr: usize) -> Vec<Vec<Complex64>> {
    (0..jn)
        .map(|j| {
            let after = points.iter().position(|p| p.0 >= j);
            match after {
                Some(0) => points[0].1.clone(),
                None => points[points.len() - 1].1.clone(),
                Some(i) if points[i].0 == j => points[i].1.clone(),
                Some(i) => {
                    let (j0, a) = (&points[i - 1].0, &points[i - 1].1);
                    let (j1, b) = (&points[i].0, &points[i].1);
                    let w = (j - j0) as f64 / (j1 - j0) as f64;
                    (0..nr).map(|r| a[r] * (1.0 - w) + b[r] * w).collect()
                }
            }
        })
        .collect()
}

fn delay_fit(points: &[(usize, Vec<Complex64>)], taps: usize, jn: usize, nr: usize) -> Result<Vec<Vec<Complex64>>> {
    let basis = |j: usize, d: usize| {
        let angle = -2.0 * core::f64::consts::PI * ((j * d) % jn) as f64 / jn as f64;
        Complex64::from_polar(1.0, angle)
    };
    let a = CMat::from_fn(points.len(), taps, |i, d| basis(points[i].0, d));
    let b = CMat::from_fn(points.len(), nr, |i, r| points[i].1[r]);
    let gram = a.adjoint() * &a;
    let inv = crate::linalg::inverse(&gram, "delay-domain interpolation").map_err(|_| Error::EstimationImpossible)?;
    let coeffs = inv * a.adjoint() * b;
    Ok((0..jn)
        .map(|j| (0..nr).map(|r| (0..taps).map(|d| basis(j, d) * coeffs[(d, r)]).sum()).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c as cx;
    use crate::rng::{complex_normal_matrix, seeded};

    #[test]
    fn ninety_six_streams_fill_two_thirds_of_a_block() {
        let p = make_pattern(PatternKind::Orthogonal, 48, 2, 12, 12).unwrap();
        assert_eq!(p.occupied.len(), 96);
        assert!((p.overhead_fraction() - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.overhead_fraction() - 0.667).abs() < 1e-3);
    }

    #[test]
    fn single_stream_uses_one_re() {
        let p = make_pattern(PatternKind::Orthogonal, 1, 1, 12, 14).unwrap();
        assert_eq!(p.occupied, vec![(0, 0)]);
        assert!((p.overhead_fraction() - 1.0 / 168.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_streams_are_disjoint() {
        let p = make_pattern(PatternKind::Orthogonal, 4, 2, 48, 14).unwrap();
        let all: Vec<_> = p.pilot_res.iter().flatten().flatten().collect();
        let mut dedup = all.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(all.len(), dedup.len());
        assert_eq!(all.len(), 4 * 8);
        for res in p.pilot_res.iter().flatten() {
            assert_eq!(res.len(), 4);
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let r = make_pattern(PatternKind::Orthogonal, 100, 2, 12, 8);
        assert!(matches!(r, Err(Error::CapacityExceeded { requested: 200, available: 96 })));
    }

    #[test]
    fn non_orthogonal_comb_is_shared() {
        let p = make_pattern(PatternKind::NonOrthogonal, 3, 2, 48, 14).unwrap();
        assert_eq!(p.occupied.len(), 114);
        assert!((p.overhead_fraction() - 114.0 / 672.0).abs() < 1e-15);
        assert_eq!(p.pilot_res[0], p.pilot_res[2]);
        assert!(p.pilot_res[0][0].iter().all(|&(j, t)| (j + t) % 2 == 0));
    }

    #[test]
    fn semiblind_pilots_are_two_res() {
        assert_eq!(semiblind_pilot_positions(2, 48).unwrap(), vec![(24, 0), (25, 0)]);
        assert!(semiblind_pilot_positions(2, 1).is_err());
    }

    #[test]
    fn published_gain_figures() {
        let g = theoretical_gain(96.0 / 144.0, 2.0 / 144.0);
        assert!((g - 1.96).abs() < 0.02, "{g}");
        let g = theoretical_gain(0.17, 2.0 / 144.0);
        assert!((g - 0.20).abs() < 0.02, "{g}");
        assert_eq!(theoretical_gain(0.3, 0.3), 0.0);
    }

    fn pilot_grid(h: &[CMat], p: &PilotPattern, user: usize, pt: Complex64) -> Vec<CMat> {
        (0..p.subcarriers)
            .map(|j| {
                let ns = h[j].ncols();
                let x = CMat::from_fn(ns, p.symbols, |s, t| {
                    if p.pilot_res[user][s].contains(&(j, t)) {
                        pt
                    } else {
                        cx(0.0, 0.0)
                    }
                });
                &h[j] * x
            })
            .collect()
    }

    #[test]
    fn flat_channel_is_exact_everywhere() {
        let mut rng = seeded(1);
        let h = complex_normal_matrix(&mut rng, 2, 2, 1.0);
        let p = make_pattern(PatternKind::Orthogonal, 2, 2, 24, 4).unwrap();
        let pt = cx(-0.7, -0.7);
        let hs = vec![h.clone(); 24];
        for user in 0..2 {
            let y = pilot_grid(&hs, &p, user, pt);
            for interp in [Interpolation::Linear, Interpolation::DelayDomain { taps: 1 }] {
                let est = pilot_ce(&y, &p, user, pt, interp).unwrap();
                for e in &est {
                    assert!((e - &h).norm_squared() / h.norm_squared() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn linear_variation_is_recovered_between_pilots() {
        let mut rng = seeded(2);
        let a = complex_normal_matrix(&mut rng, 2, 1, 1.0);
        let b = complex_normal_matrix(&mut rng, 2, 1, 0.1);
        let hs: Vec<CMat> = (0..16).map(|j| &a + &b * cx(j as f64, 0.0)).collect();
        // Pilots on even subcarriers only.
        let res: Vec<(usize, usize)> = (0..16).step_by(2).map(|j| (j, 0)).collect();
        let p = PilotPattern {
            kind: PatternKind::Orthogonal,
            pilot_res: vec![vec![res.clone()]],
            occupied: res,
            subcarriers: 16,
            symbols: 1,
        };
        let pt = cx(1.0, 0.0);
        let y = pilot_grid(&hs, &p, 0, pt);
        let est = pilot_ce(&y, &p, 0, pt, Interpolation::Linear).unwrap();
        for j in 0..15 {
            assert!((&est[j] - &hs[j]).norm() < 1e-12, "j={j}");
        }
        // Past the last pilot the estimate is held, off by one slope step.
        assert!(((&est[15] - &hs[15]).norm() - b.norm()).abs() < 1e-12);
    }

    #[test]
    fn delay_fit_recovers_short_channels() {
        let mut rng = seeded(3);
        let taps: Vec<CMat> = (0..3).map(|_| complex_normal_matrix(&mut rng, 2, 2, 1.0)).collect();
        let hs = crate::channel::to_frequency(&crate::channel::DelayTapChannel { taps }, 48).unwrap().per_subcarrier;
        let p = make_pattern(PatternKind::NonOrthogonal, 1, 2, 48, 14).unwrap();
        let pt = cx(-0.7, -0.7);
        let y = pilot_grid(&hs, &p, 0, pt);
        let est = pilot_ce(&y, &p, 0, pt, Interpolation::DelayDomain { taps: 3 }).unwrap();
        for j in 0..48 {
            assert!((&est[j] - &hs[j]).norm() < 1e-10);
        }
    }

    #[test]
    fn no_pilots_is_an_error() {
        let p = PilotPattern {
            kind: PatternKind::Orthogonal,
            pilot_res: vec![vec![vec![]]],
            occupied: vec![],
            subcarriers: 4,
            symbols: 2,
        };
        let y = vec![CMat::zeros(1, 2); 4];
        assert!(matches!(pilot_ce(&y, &p, 0, cx(1.0, 0.0), Interpolation::Linear), Err(Error::EstimationImpossible)));
    }
}
