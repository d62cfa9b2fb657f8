//! Hybrid precoding: sub-connected analog stage, shared random-phase digital
//! combiner, and a frequency-flat joint-transceiver eigen zero-forcing
//! digital precoder.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::channel::FreqChannel;
use crate::error::{Error, Result};
use crate::linalg::{check_shape, condition_number, hermitian_eigen_sorted, inverse, CMat};
use crate::rng::{derive_seed, seeded, uniform_phase};

const TAG_ANALOG_TX: u64 = 0x46_5246;
const TAG_ANALOG_RX: u64 = 0x57_5246;

/// Largest tolerated condition number of the stacked eigenvector Gram.
pub const MAX_PRECODER_CONDITION: f64 = 1e12;

/// Everything the transmitter and receivers share for one TTI.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    /// `N_t x N_t^RF`, block diagonal.
    pub f_rf: CMat,
    /// Per user, `N_r x N_r^RF`.
    pub w_rf: Vec<CMat>,
    /// `N_r^RF x N_s`, shared by all users.
    pub w_bb: CMat,
    /// Per user, `N_t^RF x N_s`.
    pub f_bb: Vec<CMat>,
    pub power_factor: f64,
}

impl PrecoderSet {
    pub fn num_streams(&self) -> usize {
        self.w_bb.ncols()
    }

    pub fn num_users(&self) -> usize {
        self.f_bb.len()
    }

    /// Full combiner `W_RF,k W_BB` of user `k` (`N_r x N_s`).
    pub fn combiner(&self, user: usize) -> CMat {
        &self.w_rf[user] * &self.w_bb
    }

    /// Apply user `k`'s combiner to antenna-domain grids: `W_BB^H W_RF^H y`.
    pub fn combine(&self, user: usize, raw: &[CMat]) -> Vec<CMat> {
        let w = self.combiner(user).adjoint();
        raw.iter().map(|y| &w * y).collect()
    }
}

/// Sizes of the hybrid architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HybridDims {
    pub nt: usize,
    pub nt_rf: usize,
    pub nr: usize,
    pub nr_rf: usize,
    pub ns: usize,
    pub users: usize,
}

/// Sub-connected `F_RF` and a fully-connected `W_RF` identical for all users.
/// Phases are i.i.d. uniform.
pub fn build_analog(nt: usize, nt_rf: usize, nr: usize, nr_rf: usize, users: usize, seed: u64) -> Result<(CMat, Vec<CMat>)> {
    if nt_rf == 0 || nt == 0 || !nt.is_multiple_of(nt_rf) {
        return Err(Error::InvalidArgument("N_t must be a positive multiple of N_t^RF".into()));
    }
    if nr == 0 || nr_rf == 0 {
        return Err(Error::InvalidArgument("receive array and RF chain counts must be positive".into()));
    }
    let block = nt / nt_rf;
    let amp = 1.0 / libm::sqrt(block as f64);
    let mut rng = seeded(derive_seed(seed, TAG_ANALOG_TX, 0));
    let mut f_rf = CMat::zeros(nt, nt_rf);
    for chain in 0..nt_rf {
        for e in 0..block {
            f_rf[(chain * block + e, chain)] = Complex64::from_polar(amp, uniform_phase(&mut rng));
        }
    }
    let mut rng = seeded(derive_seed(seed, TAG_ANALOG_RX, 0));
    let amp = 1.0 / libm::sqrt(nr as f64);
    let w = CMat::from_fn(nr, nr_rf, |_, _| Complex64::from_polar(amp, uniform_phase(&mut rng)));
    Ok((f_rf, alloc::vec![w; users]))
}

/// `W_BB = exp(i Theta) / sqrt(N_r^RF N_s)`, Theta i.i.d. uniform, fixed by the seed.
pub fn build_digital_combiner(nr_rf: usize, ns: usize, seed: u64) -> Result<CMat> {
    if nr_rf == 0 || ns == 0 {
        return Err(Error::InvalidArgument("combiner dimensions must be positive".into()));
    }
    let amp = 1.0 / libm::sqrt((nr_rf * ns) as f64);
    let mut rng = seeded(seed);
    Ok(CMat::from_fn(nr_rf, ns, |_, _| Complex64::from_polar(amp, uniform_phase(&mut rng))))
}

/// `W_RF^H H[j] F_RF` for every subcarrier.
pub fn equivalent_rf_channel(h: &FreqChannel, f_rf: &CMat, w_rf: &CMat) -> Result<Vec<CMat>> {
    let w_h = w_rf.adjoint();
    h.per_subcarrier
        .iter()
        .map(|hj| {
            check_shape("equivalent_rf_channel", hj, w_rf.nrows(), f_rf.nrows())?;
            Ok(&w_h * hj * f_rf)
        })
        .collect()
}

/// Mean Gram matrix of the combined channel: `(1/J) sum_j (W_BB^H Ht[j])^H (W_BB^H Ht[j])`.
pub fn mean_combined_gram(h_tilde: &[CMat], w_bb: &CMat) -> Result<CMat> {
    let first = h_tilde.first().ok_or_else(|| Error::InvalidArgument("no subcarriers".into()))?;
    let n = first.ncols();
    let w_h = w_bb.adjoint();
    let mut g = CMat::zeros(n, n);
    for ht in h_tilde {
        check_shape("mean_combined_gram", ht, w_bb.nrows(), n)?;
        let a = &w_h * ht;
        g += a.adjoint() * a;
    }
    Ok(g / Complex64::new(h_tilde.len() as f64, 0.0))
}

/// Zero-forcing across the stacked per-user eigenvector blocks:
/// `F = V (V^H V)^{-1}` split back into `N_s`-column blocks.
pub fn zero_force(v_blocks: &[CMat]) -> Result<Vec<CMat>> {
    let ns = v_blocks.first().map_or(0, |v| v.ncols());
    let rows = v_blocks.first().map_or(0, |v| v.nrows());
    let refs: Vec<&CMat> = v_blocks.iter().collect();
    let v = crate::linalg::hconcat(&refs);
    let gram = v.adjoint() * &v;
    let condition = condition_number(&gram);
    if !(condition < MAX_PRECODER_CONDITION) {
        return Err(Error::IllConditionedPrecoder { condition });
    }
    let f = &v * inverse(&gram, "zero_force")?;
    Ok((0..v_blocks.len()).map(|k| f.view((0, k * ns), (rows, ns)).into_owned()).collect())
}

/// Joint-transceiver EZF: top-`N_s` eigenvectors of each user's mean
/// combined Gram, zero-forced jointly, with `lambda = sqrt(P / Tr(F F^H))`.
pub fn ezf_precoder(h_tilde: &[Vec<CMat>], w_bb: &CMat, ns: usize, total_power: f64) -> Result<(Vec<CMat>, f64)> {
    let users = h_tilde.len();
    let nt_rf = h_tilde.first().and_then(|h| h.first()).map_or(0, |h| h.ncols());
    if users * ns > nt_rf {
        return Err(Error::InvalidArgument("K * N_s must not exceed N_t^RF".into()));
    }
    if !(total_power > 0.0) {
        return Err(Error::InvalidArgument("total power must be positive".into()));
    }
    let mut v_blocks = Vec::with_capacity(users);
    for h in h_tilde {
        let g = mean_combined_gram(h, w_bb)?;
        let (_, vecs) = hermitian_eigen_sorted(&g);
        v_blocks.push(vecs.columns(0, ns).into_owned());
    }
    let f_bb = zero_force(&v_blocks)?;
    let trace: f64 = f_bb.iter().map(crate::linalg::fro_norm_sq).sum();
    let power_factor = libm::sqrt(total_power / trace);
    Ok((f_bb, power_factor))
}

/// Build the whole chain for one TTI. `P` defaults to `K * N_s` when `None`.
pub fn design(channels: &[FreqChannel], dims: HybridDims, total_power: Option<f64>, seed: u64) -> Result<PrecoderSet> {
    if channels.len() != dims.users {
        return Err(Error::InvalidArgument("one channel per user is required".into()));
    }
    let (f_rf, w_rf) = build_analog(dims.nt, dims.nt_rf, dims.nr, dims.nr_rf, dims.users, seed)?;
    let w_bb = build_digital_combiner(dims.nr_rf, dims.ns, derive_seed(seed, 0x5742_4242, 0))?;
    let h_tilde: Vec<Vec<CMat>> = channels
        .iter()
        .zip(&w_rf)
        .map(|(h, w)| equivalent_rf_channel(h, &f_rf, w))
        .collect::<Result<_>>()?;
    let power = total_power.unwrap_or((dims.users * dims.ns) as f64);
    let (f_bb, power_factor) = ezf_precoder(&h_tilde, &w_bb, dims.ns, power)?;
    Ok(PrecoderSet { f_rf, w_rf, w_bb, f_bb, power_factor })
}

/// Per-subcarrier equivalent channels of one user (`N_s x N_s` each).
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalentChannel {
    pub per_subcarrier: Vec<CMat>,
}

/// `lambda W_BB^H W_RF,k^H H_k[j] F_RF F_BB,k`.
pub fn effective_channel(h: &FreqChannel, set: &PrecoderSet, user: usize) -> Result<EquivalentChannel> {
    cross_channel(h, set, user, user)
}

/// Gain from user `source`'s streams into user `user`'s combiner output.
pub fn cross_channel(h: &FreqChannel, set: &PrecoderSet, user: usize, source: usize) -> Result<EquivalentChannel> {
    if user >= set.w_rf.len() || source >= set.f_bb.len() {
        return Err(Error::InvalidArgument("user index out of range".into()));
    }
    let left = set.combiner(user).adjoint();
    let right = (&set.f_rf * &set.f_bb[source]) * Complex64::new(set.power_factor, 0.0);
    let per_subcarrier = h
        .per_subcarrier
        .iter()
        .map(|hj| {
            check_shape("effective_channel", hj, left.ncols(), right.nrows())?;
            Ok(&left * hj * &right)
        })
        .collect::<Result<_>>()?;
    Ok(EquivalentChannel { per_subcarrier })
}

/// Mean (over subcarriers) ratio of interference power from all other users
/// to desired power at user `k`'s combiner output.
pub fn residual_iui_ratio(h: &FreqChannel, set: &PrecoderSet, user: usize) -> Result<f64> {
    let desired = cross_channel(h, set, user, user)?;
    let mut ratio = 0.0;
    let mut interference = alloc::vec![0.0; h.num_subcarriers()];
    for m in (0..set.num_users()).filter(|&m| m != user) {
        let cross = cross_channel(h, set, user, m)?;
        for (acc, c) in interference.iter_mut().zip(&cross.per_subcarrier) {
            *acc += crate::linalg::fro_norm_sq(c);
        }
    }
    for (i, d) in interference.iter().zip(&desired.per_subcarrier) {
        ratio += i / crate::linalg::fro_norm_sq(d);
    }
    Ok(ratio / h.num_subcarriers() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_channel, to_frequency, ArrayShape, ChannelParams};
    use crate::linalg::fro_norm_sq;

    #[test]
    fn analog_one_antenna_per_chain_is_diagonal_unit_modulus() {
        let (f, _) = build_analog(4, 4, 2, 2, 1, 3).unwrap();
        for r in 0..4 {
            for col in 0..4 {
                if r == col {
                    assert!((f[(r, col)].norm() - 1.0).abs() < 1e-15);
                } else {
                    assert_eq!(f[(r, col)].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn analog_blocks_and_column_norms() {
        let (f, w) = build_analog(4, 2, 4, 2, 3, 9).unwrap();
        let amp = 1.0 / 2f64.sqrt();
        for col in 0..2 {
            for r in 0..4 {
                let inside = r / 2 == col;
                let m = f[(r, col)].norm();
                assert!(if inside { (m - amp).abs() < 1e-15 } else { m == 0.0 });
            }
            assert!((f.column(col).norm() - 1.0).abs() < 1e-14);
        }
        assert!(w.iter().all(|x| x == &w[0]));
        assert!(w[0].iter().all(|z| (z.norm() - 0.5).abs() < 1e-15));
    }

    #[test]
    fn analog_rejects_indivisible() {
        assert!(build_analog(6, 4, 2, 2, 1, 0).is_err());
    }

    #[test]
    fn digital_combiner_modulus_seed_and_norm() {
        let a = build_digital_combiner(16, 2, 7).unwrap();
        let b = build_digital_combiner(16, 2, 7).unwrap();
        assert_eq!(a, b);
        let amp = 1.0 / 32f64.sqrt();
        assert!(a.iter().all(|z| (z.norm() - amp).abs() < 1e-15));
        assert!((a.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn equivalent_rf_channel_identity_and_zero() {
        let h = FreqChannel { per_subcarrier: alloc::vec![CMat::from_fn(3, 3, |r, c| Complex64::new(r as f64, c as f64))] };
        let eye = CMat::identity(3, 3);
        assert_eq!(equivalent_rf_channel(&h, &eye, &eye).unwrap()[0], h.per_subcarrier[0]);
        let z = FreqChannel { per_subcarrier: alloc::vec![CMat::zeros(3, 3)] };
        assert!(equivalent_rf_channel(&z, &eye, &eye).unwrap()[0].iter().all(|v| v.norm() == 0.0));
        assert!(equivalent_rf_channel(&h, &CMat::identity(2, 2), &eye).is_err());
    }

    #[test]
    fn single_user_orthonormal_basis_gives_unit_zf() {
        // Flat channel whose combined Gram has orthonormal top eigenvectors:
        // F_BB = V and lambda = sqrt(P / N_s).
        let w_bb = build_digital_combiner(4, 2, 1).unwrap();
        let ht = CMat::from_fn(4, 6, |r, c| Complex64::new((r * 7 + c * 3) as f64 % 5.0 - 2.0, (r + 2 * c) as f64 % 3.0));
        let (f, lambda) = ezf_precoder(&[alloc::vec![ht.clone()]], &w_bb, 2, 5.0).unwrap();
        let (_, vecs) = hermitian_eigen_sorted(&mean_combined_gram(&[ht], &w_bb).unwrap());
        let v = vecs.columns(0, 2).into_owned();
        assert!((&f[0] - &v).norm() < 1e-10);
        assert!((lambda - (5.0f64 / 2.0).sqrt()).abs() < 1e-10);
    }

    fn flat_setup(seed: u64, users: usize, taps: usize) -> (Vec<FreqChannel>, PrecoderSet) {
        let dims = HybridDims { nt: 32, nt_rf: 8, nr: 4, nr_rf: 4, ns: 2, users };
        let params = ChannelParams::new(ArrayShape::new(4, 8), ArrayShape::new(2, 2), 6, taps);
        let chans: Vec<FreqChannel> = (0..users)
            .map(|k| to_frequency(&gen_channel(&params, seed * 31 + k as u64).unwrap(), 4).unwrap())
            .collect();
        let set = design(&chans, dims, None, seed).unwrap();
        (chans, set)
    }

    #[test]
    fn flat_channel_zero_forcing_is_exact() {
        let (chans, set) = flat_setup(3, 2, 1);
        for (k, chan) in chans.iter().enumerate() {
            let ht = equivalent_rf_channel(chan, &set.f_rf, &set.w_rf[k]).unwrap();
            let (_, vecs) = hermitian_eigen_sorted(&mean_combined_gram(&ht, &set.w_bb).unwrap());
            let vk = vecs.columns(0, 2).into_owned();
            for m in 0..2 {
                let prod = vk.adjoint() * &set.f_bb[m];
                let target = if m == k { CMat::identity(2, 2) } else { CMat::zeros(2, 2) };
                assert!((prod - target).norm() < 1e-9);
            }
            assert!(residual_iui_ratio(chan, &set, k).unwrap() < 1e-8);
        }
    }

    #[test]
    fn power_control_hits_target() {
        let (_, set) = flat_setup(8, 2, 3);
        let p: f64 = set.f_bb.iter().map(|f| fro_norm_sq(f) * set.power_factor.powi(2)).sum();
        assert!((p - 4.0).abs() < 1e-10);
    }

    #[test]
    fn effective_channel_zero_precoder() {
        let (chans, mut set) = flat_setup(4, 1, 2);
        set.f_bb[0] = CMat::zeros(8, 2);
        let h = effective_channel(&chans[0], &set, 0).unwrap();
        assert!(h.per_subcarrier.iter().all(|m| m.norm() == 0.0));
    }

    #[test]
    fn too_many_streams_rejected() {
        let w_bb = build_digital_combiner(2, 2, 0).unwrap();
        let ht = alloc::vec![alloc::vec![CMat::identity(2, 3)]; 2];
        assert!(ezf_precoder(&ht, &w_bb, 2, 1.0).is_err());
    }

    #[test]
    fn collinear_users_trigger_condition_error() {
        let v = CMat::from_fn(4, 1, |r, _| Complex64::new(r as f64 + 1.0, 0.0));
        match zero_force(&[v.clone(), v]) {
            Err(Error::IllConditionedPrecoder { condition }) => assert!(condition > 1e12),
            other => panic!("unexpected {other:?}"),
        }
    }
}
