//! Single-block semi-blind estimation: normalisation, pilot initialisation,
//! constellation fitting and ambiguity removal.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{condition_number, fro_norm_sq, hconcat, inverse, CMat};
use crate::modem::{augment, PilotBlock, QamConstellation};
use crate::optimizer::{self, FittingProblem, SolveStatus, Tolerances};

/// Upper limit reported by [`estimate_sinr`] when the pilot residual vanishes.
pub const SINR_CAP: f64 = 1e12;

/// Scale a stream so its largest modulus equals `a`; returns the scaled
/// stream and the factor applied.
pub fn normalize(stream: &[Complex64], a: f64) -> Result<(Vec<Complex64>, f64)> {
    let peak = stream.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::DegenerateStream { stream: 0 });
    }
    let scale = a / peak;
    Ok((stream.iter().map(|z| z * scale).collect(), scale))
}

/// Least-squares channel from received pilots `P_r = H P_t + N`:
/// `H = P_r P_t^H (P_t P_t^H)^-1`.
pub fn ls_init(p_r: &CMat, p_t: &PilotBlock) -> Result<CMat> {
    let pt = &p_t.matrix;
    let gram = pt * pt.adjoint();
    let inv = gram.try_inverse().ok_or(Error::SingularPilot)?;
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SingularPilot);
    }
    Ok(p_r * pt.adjoint() * inv)
}

/// Pilot SINR `||P_t||^2 / ||H^-1 P_r - P_t||^2`, capped at [`SINR_CAP`].
pub fn estimate_sinr(p_r: &CMat, p_t: &PilotBlock, h: &CMat) -> Result<f64> {
    let hinv = inverse(h, "estimate_sinr").map_err(|_| Error::SingularEstimate)?;
    let residual = fro_norm_sq(&(hinv * p_r - &p_t.matrix));
    let signal = fro_norm_sq(&p_t.matrix);
    if residual <= signal / SINR_CAP {
        return Ok(SINR_CAP);
    }
    Ok(signal / residual)
}

/// Halve `u0` until `|u0 samples|_inf <= bound` on the real stack.
pub fn feasible_start(u0: &CMat, samples: &CMat, bound: f64) -> CMat {
    let mut u = u0.clone();
    let mut peak = crate::linalg::real_stack_inf_norm(&(&u * samples));
    // 2^-1100 underflows every finite entry, so the loop always ends.
    for _ in 0..1100 {
        if peak <= bound {
            break;
        }
        u /= Complex64::new(2.0, 0.0);
        peak *= 0.5;
    }
    u
}

/// Per-stream permutation and rotation applied by [`resolve_ambiguity`].
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityLog {
    /// `permutation[s]` is the detected stream moved to output stream `s`.
    pub permutation: Vec<usize>,
    /// Rotation in `{1, -1, i, -i}` applied to output stream `s`.
    pub rotation: Vec<Complex64>,
}

impl AmbiguityLog {
    pub fn identity(ns: usize) -> Self {
        Self { permutation: (0..ns).collect(), rotation: alloc::vec![Complex64::new(1.0, 0.0); ns] }
    }

    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(s, &p)| s == p)
            && self.rotation.iter().all(|r| *r == Complex64::new(1.0, 0.0))
    }

    /// The log of applying `self` first and `then` second.
    pub fn then(&self, then: &AmbiguityLog) -> AmbiguityLog {
        AmbiguityLog {
            permutation: then.permutation.iter().map(|&p| self.permutation[p]).collect(),
            rotation: then.permutation.iter().zip(&then.rotation).map(|(&p, &r)| r * self.rotation[p]).collect(),
        }
    }

    /// The correcting transform `R` with `X <- R X`, `H <- H R^-1`.
    pub fn matrix(&self) -> CMat {
        let ns = self.permutation.len();
        let mut r = CMat::zeros(ns, ns);
        for (s, (&src, &rot)) in self.permutation.iter().zip(&self.rotation).enumerate() {
            r[(s, src)] = rot;
        }
        r
    }
}

const ROTATIONS: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(-1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(0.0, -1.0),
];

/// Undo the permutation and quarter-turn ambiguity of a blind fit using the
/// detected pilot columns of `x_hat`.
///
/// `pilot_columns[s]` is the column where stream `s` sent `p_t` (all other
/// streams sent zero there). Each detected stream is assigned to the pilot
/// column where it is strongest, then rotated so its pilot lands in `p_t`'s
/// quadrant. Returns `(R X, H R^-1, log)`.
pub fn resolve_ambiguity(
    x_hat: &CMat,
    h_hat: &CMat,
    pilot_columns: &[usize],
    p_t: Complex64,
) -> Result<(CMat, CMat, AmbiguityLog)> {
    let ns = x_hat.nrows();
    if pilot_columns.len() != ns || h_hat.ncols() != ns {
        return Err(Error::DimensionMismatch {
            context: "resolve_ambiguity",
            expected: (ns, ns),
            found: (h_hat.ncols(), pilot_columns.len()),
        });
    }
    let mut permutation = alloc::vec![usize::MAX; ns];
    for r in 0..ns {
        let mut best = 0;
        let mut best_mag = -1.0;
        for (s, &col) in pilot_columns.iter().enumerate() {
            let mag = x_hat[(r, col)].norm();
            if mag > best_mag {
                best_mag = mag;
                best = s;
            }
        }
        if permutation[best] != usize::MAX {
            return Err(Error::AmbiguityUnresolvable { position: best });
        }
        permutation[best] = r;
    }
    let rotation: Vec<Complex64> = permutation
        .iter()
        .zip(pilot_columns)
        .map(|(&src, &col)| {
            let z = x_hat[(src, col)] * p_t.conj();
            // The quarter turn closest to p_t's phase; ties go to the
            // earlier entry of ROTATIONS.
            let mut best = ROTATIONS[0];
            let mut score = f64::NEG_INFINITY;
            for rho in ROTATIONS {
                let v = (rho * z).re;
                if v > score + 1e-15 {
                    score = v;
                    best = rho;
                }
            }
            best
        })
        .collect();
    let log = AmbiguityLog { permutation, rotation };
    let r = log.matrix();
    // R is unitary, so R^-1 = R^H.
    Ok((&r * x_hat, h_hat * r.adjoint(), log))
}

/// Controls for [`semiblind_block`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockOptions {
    pub kappa_max: f64,
    pub augment: bool,
    /// Half-width of the fit box, `lambda_M + sqrt(1 / SINR)`.
    pub bound: f64,
    pub tolerances: Tolerances,
}

/// Output of [`semiblind_block`] in the (normalised) domain it was given.
#[derive(Debug, Clone)]
pub struct BlockEstimate {
    /// Equivalent channel shared by the block, `U^-1` after disambiguation.
    pub h: CMat,
    /// Disambiguated soft symbols `R U Y`.
    pub soft: CMat,
    /// Hard decisions of `soft`.
    pub hard: CMat,
    pub ambiguity: AmbiguityLog,
    pub iterations: usize,
    pub status: SolveStatus,
    pub constraint_evaluations: u64,
}

/// Semi-blind estimate of one block: condition gate, pilot LS start, box
/// halving, constellation fit, `H = U^-1`, slicing and disambiguation.
///
/// `y` holds the block's received symbols as columns; `p_r` the received
/// pilot block (same scaling as `y`).
pub fn semiblind_block(
    y: &CMat,
    p_r: &CMat,
    pilot: &PilotBlock,
    c: &QamConstellation,
    opts: &BlockOptions,
) -> Result<BlockEstimate> {
    let ns = y.nrows();
    let samples = if opts.augment { augment(y) } else { y.clone() };
    if samples.ncols() < 2 * ns {
        return Err(Error::InsufficientSamples { retained: samples.ncols(), required: 2 * ns });
    }
    let kappa = condition_number(&samples);
    if !(kappa <= opts.kappa_max) {
        return Err(Error::ConditionGate { kappa, kappa_max: opts.kappa_max });
    }
    let h0 = ls_init(p_r, pilot)?;
    let u0 = inverse(&h0, "pilot initialisation").map_err(|_| Error::SingularEstimate)?;
    let u0 = feasible_start(&u0, &samples, opts.bound);
    let problem = FittingProblem::from_complex(&samples, opts.bound, opts.tolerances)?;
    let sol = optimizer::solve(&problem, &u0)?;
    let u = sol.complex();
    let h = inverse(&u, "fitted transform").map_err(|_| Error::SingularEstimate)?;
    let soft = &u * y;
    let detected_pilots = &u * p_r;
    let joined = hconcat(&[&soft, &detected_pilots]);
    let columns: Vec<usize> = (soft.ncols()..joined.ncols()).collect();
    let (fixed, h, ambiguity) = resolve_ambiguity(&joined, &h, &columns, pilot.symbol)?;
    let soft = fixed.columns(0, y.ncols()).into_owned();
    let hard = c.slice(&soft);
    Ok(BlockEstimate {
        h,
        soft,
        hard,
        ambiguity,
        iterations: sol.iterations,
        status: sol.status,
        constraint_evaluations: sol.constraint_evaluations,
    })
}

/// Re-disambiguate a fitted block against a reference channel `h_ref` known
/// to hold at one of the block's subcarriers.
///
/// `edge` is the offset of that subcarrier's `y_edge.ncols()` columns inside
/// the block. The block's hard decisions there give a local LS channel
/// `H_e`; the reference then predicts the detected pilots `H_e^-1 H_ref P_t`,
/// which settle any permutation or quarter turn left between the two.
pub fn align_to_reference(
    est: BlockEstimate,
    y_edge: &CMat,
    edge: usize,
    h_ref: &CMat,
    pilot: &PilotBlock,
    c: &QamConstellation,
) -> Result<BlockEstimate> {
    let x_edge = est.hard.columns(edge, y_edge.ncols()).into_owned();
    let h_edge = super::refine::ls_refine(&x_edge, y_edge)?;
    let predicted = inverse(&h_edge, "edge estimate").map_err(|_| Error::SingularEstimate)? * h_ref * &pilot.matrix;
    let joined = hconcat(&[&est.soft, &predicted]);
    let columns: Vec<usize> = (est.soft.ncols()..joined.ncols()).collect();
    let (fixed, h, correction) = resolve_ambiguity(&joined, &est.h, &columns, pilot.symbol)?;
    if correction.is_identity() {
        return Ok(est);
    }
    let soft = fixed.columns(0, est.soft.ncols()).into_owned();
    let hard = c.slice(&soft);
    Ok(BlockEstimate { h, soft, hard, ambiguity: est.ambiguity.then(&correction), ..est })
}
