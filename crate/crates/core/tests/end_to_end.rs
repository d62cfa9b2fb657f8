//! Whole downlink chains built from the public API: channel generation,
//! hybrid precoding, transmission, combining and reception.

use jcesd_core::baseline::{make_pattern, pilot_ce, semiblind_pilot_positions, Interpolation, PatternKind};
use jcesd_core::channel::{gen_channel, to_frequency, transmit, ArrayShape, ChannelParams, FreqChannel};
use jcesd_core::linalg::{fro_norm_sq, CMat};
use jcesd_core::modem::{corner_pilot, make_constellation, QamConstellation};
use jcesd_core::precoding::{design, effective_channel, HybridDims, PrecoderSet};
use jcesd_core::receiver::{jcesd, JcesdConfig, ReceivedGrid};
use jcesd_core::rng::seeded;
use num_complex::Complex64;
use rand::Rng;

const J: usize = 16;
const T: usize = 8;

fn dims(users: usize) -> HybridDims {
    HybridDims { nt: 16, nt_rf: 8, nr: 4, nr_rf: 2, ns: 2, users }
}

fn channels(users: usize, taps: usize, seed: u64) -> Vec<FreqChannel> {
    let mut params = ChannelParams::new(ArrayShape::new(4, 4), ArrayShape::new(2, 2), 6, taps);
    // Short delay spread: the channel varies little across a block.
    params.max_delay = Some(0.2);
    (0..users)
        .map(|k| to_frequency(&gen_channel(&params, seed * 31 + k as u64).unwrap(), J).unwrap())
        .collect()
}

/// Random data with the semi-blind pilots written over their REs.
fn grids(c: &QamConstellation, users: usize, seed: u64) -> Vec<Vec<CMat>> {
    let mut rng = seeded(seed);
    let pilot = corner_pilot(c, 2).unwrap();
    let positions = semiblind_pilot_positions(2, J).unwrap();
    (0..users)
        .map(|_| {
            (0..J)
                .map(|j| {
                    let mut x = CMat::from_fn(2, T, |_, _| c.point(rng.random_range(0..c.order())));
                    for (p, &(pj, pt)) in positions.iter().enumerate() {
                        if pj == j {
                            x.set_column(pt, &pilot.matrix.column(p));
                        }
                    }
                    x
                })
                .collect()
        })
        .collect()
}

fn combined(set: &PrecoderSet, chans: &[FreqChannel], x: &[Vec<CMat>], noise: f64, user: usize) -> Vec<CMat> {
    let raw = transmit(chans, set, x, noise, 99).unwrap();
    set.combine(user, &raw[user])
}

fn nmse(est: &[CMat], truth: &[CMat]) -> f64 {
    est.iter().zip(truth).map(|(e, h)| fro_norm_sq(&(e - h)) / fro_norm_sq(h)).sum::<f64>() / truth.len() as f64
}

#[test]
fn flat_noiseless_semiblind_chain_recovers_channel_and_symbols() {
    let c = make_constellation(4).unwrap();
    let cfg = JcesdConfig { num_blocks: 1, ..JcesdConfig::default() };
    let mut exact = 0;
    for seed in 0..10 {
        let chans = channels(2, 1, seed);
        let set = design(&chans, dims(2), None, seed).unwrap();
        let x = grids(&c, 2, seed + 100);
        for user in 0..2 {
            let y = combined(&set, &chans, &x, 0.0, user);
            let grid = ReceivedGrid::new(y, semiblind_pilot_positions(2, J).unwrap(), corner_pilot(&c, 2).unwrap()).unwrap();
            let truth = effective_channel(&chans[user], &set, user).unwrap().per_subcarrier;
            let Ok(res) = jcesd(&grid, &c, &cfg) else { continue };
            if 10.0 * nmse(&res.h_hat, &truth).log10() <= -40.0 && res.x_hat.iter().zip(&x[user]).all(|(a, b)| (a - b).norm() < 1e-6) {
                exact += 1;
            }
        }
    }
    // A flat channel with zero-forcing precoding leaves each user an
    // interference-free square MIMO link; only badly conditioned draws may
    // miss.
    assert!(exact >= 18, "{exact}/20 exact recoveries");
}

#[test]
fn orthogonal_pilots_are_exact_without_noise_on_a_flat_channel() {
    let c = make_constellation(16).unwrap();
    let chans = channels(2, 1, 3);
    let set = design(&chans, dims(2), None, 3).unwrap();
    let pattern = make_pattern(PatternKind::Orthogonal, 2, 2, J, T).unwrap();
    let p = c.corner();
    let mut rng = seeded(5);
    let x: Vec<Vec<CMat>> = (0..2)
        .map(|user| {
            (0..J)
                .map(|j| {
                    CMat::from_fn(2, T, |s, t| {
                        let mine = pattern.pilot_res[user][s].contains(&(j, t));
                        if mine {
                            p
                        } else if pattern.occupied.contains(&(j, t)) {
                            Complex64::new(0.0, 0.0)
                        } else {
                            c.point(rng.random_range(0..16))
                        }
                    })
                })
                .collect()
        })
        .collect();
    for user in 0..2 {
        let y = combined(&set, &chans, &x, 0.0, user);
        let est = pilot_ce(&y, &pattern, user, p, Interpolation::Linear).unwrap();
        let truth = effective_channel(&chans[user], &set, user).unwrap().per_subcarrier;
        assert!(nmse(&est, &truth) < 1e-20, "user {user}");
    }
}

#[test]
fn noise_degrades_the_semiblind_estimate_gracefully() {
    let c = make_constellation(4).unwrap();
    let cfg = JcesdConfig { num_blocks: 2, ..JcesdConfig::default() };
    let chans = channels(1, 2, 7);
    let set = design(&chans, dims(1), None, 7).unwrap();
    let x = grids(&c, 1, 8);
    let truth = effective_channel(&chans[0], &set, 0).unwrap().per_subcarrier;
    let signal = truth.iter().map(fro_norm_sq).sum::<f64>() / (2 * J) as f64;
    let noise_gain = fro_norm_sq(&set.combiner(0)) / 2.0;
    let mut last = f64::INFINITY;
    for snr_db in [10.0, 30.0] {
        let noise = signal / noise_gain / 10f64.powf(snr_db / 10.0);
        let y = combined(&set, &chans, &x, noise, 0);
        let grid = ReceivedGrid::new(y, semiblind_pilot_positions(2, J).unwrap(), corner_pilot(&c, 2).unwrap()).unwrap();
        let res = jcesd(&grid, &c, &cfg).unwrap();
        let e = nmse(&res.h_hat, &truth);
        assert!(e.is_finite() && e < last, "NMSE {e} at {snr_db} dB");
        last = e;
    }
    assert!(10.0 * last.log10() < -25.0);
}

#[test]
fn relabelling_users_permutes_the_results() {
    let c = make_constellation(4).unwrap();
    let cfg = JcesdConfig { num_blocks: 2, ..JcesdConfig::default() };
    let chans = channels(3, 2, 11);
    let x = grids(&c, 3, 12);
    let order = [2usize, 0, 1];
    let permuted_chans: Vec<FreqChannel> = order.iter().map(|&k| chans[k].clone()).collect();
    let permuted_x: Vec<Vec<CMat>> = order.iter().map(|&k| x[k].clone()).collect();
    let dims3 = dims(3);
    let set = design(&chans, dims3, None, 4).unwrap();
    let permuted_set = design(&permuted_chans, dims3, None, 4).unwrap();
    let error = |set: &PrecoderSet, chans: &[FreqChannel], x: &[Vec<CMat>], user: usize| {
        let y = combined(set, chans, x, 0.0, user);
        let grid = ReceivedGrid::new(y, semiblind_pilot_positions(2, J).unwrap(), corner_pilot(&c, 2).unwrap()).unwrap();
        let truth = effective_channel(&chans[user], set, user).unwrap().per_subcarrier;
        nmse(&jcesd(&grid, &c, &cfg).unwrap().h_hat, &truth)
    };
    for (new, &old) in order.iter().enumerate() {
        let (a, b) = (error(&set, &chans, &x, old), error(&permuted_set, &permuted_chans, &permuted_x, new));
        assert!((a - b).abs() <= 1e-6 * a.max(1e-12), "user {old}: {a} vs {b}");
    }
}
