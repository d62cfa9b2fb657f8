//! One Monte-Carlo trial: `ttis` independent channel draws, each pushed
//! through precoding, transmission, the selected receiver and the metrics.

use std::time::Instant;

use jcesd_core::baseline::{make_pattern, pilot_ce, semiblind_pilot_positions, PilotPattern};
use jcesd_core::channel::{gen_channel, to_frequency, transmit, ChannelParams, FreqChannel};
use jcesd_core::linalg::{fro_norm_sq, CMat};
use jcesd_core::modem::{corner_pilot, make_constellation, nearest, PilotBlock, QamConstellation};
use jcesd_core::precoding::{design, effective_channel, residual_iui_ratio, HybridDims, PrecoderSet};
use jcesd_core::receiver::{jcesd, lmmse_detect, JcesdConfig, OpCounts, ReceivedGrid};
use jcesd_core::rng::{complex_normal_matrix, derive_seed, seeded};
use num_complex::Complex64;
use rand::Rng;

use crate::config::{ReceiverKind, SimConfig};
use crate::error::Result;
use crate::mcs::{self, McsEntry};
use crate::metrics::{self, MetricsRow};

const TAG_TTI: u64 = 0x0074_7469;
const TAG_CHANNEL: u64 = 0x6368_616e;
const TAG_PRECODER: u64 = 0x7072_6563;
const TAG_USER: u64 = 0x7573_6572;
const TAG_DATA: u64 = 0x6461_7461;
const TAG_NOISE: u64 = 0x6e6f_6973;

/// Everything about a configuration that does not change between TTIs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: SimConfig,
    pub constellation: QamConstellation,
    pub pilot: PilotBlock,
    pub dims: HybridDims,
    pub channel: ChannelParams,
    pub receiver: JcesdConfig,
    /// Pilot layout of the pilot-aided baselines.
    pub pattern: Option<PilotPattern>,
    /// Pilot REs of the semi-blind receiver, `(subcarrier, symbol)`.
    pub semiblind_positions: Vec<(usize, usize)>,
    /// Schemes link adaptation chooses from; empty means uncoded.
    pub mcs_candidates: Vec<McsEntry>,
}

impl Scenario {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let constellation = make_constellation(cfg.modulation_order()?)?;
        let pilot = corner_pilot(&constellation, cfg.n_s)?;
        let (tx, rx) = cfg.array_shapes();
        let mut channel = ChannelParams::new(tx, rx, cfg.num_paths, cfg.n_c);
        channel.rolloff = cfg.rolloff;
        channel.max_delay = cfg.max_delay.map(|d| d * channel.sample_period);
        channel.validate()?;
        let dims = HybridDims { nt: cfg.n_t, nt_rf: cfg.n_t_rf, nr: cfg.n_r, nr_rf: cfg.n_r_rf, ns: cfg.n_s, users: cfg.k };
        let receiver = JcesdConfig {
            num_blocks: cfg.n_f,
            num_iterations: cfg.n_iter,
            llr_threshold: cfg.llr_threshold,
            kappa_max: cfg.kappa_max,
            augment: cfg.augment,
            strict: cfg.strict_fail,
            ..JcesdConfig::default()
        };
        let pattern = match cfg.receiver.pattern_kind() {
            Some(kind) => Some(make_pattern(kind, cfg.k, cfg.n_s, cfg.j, cfg.t)?),
            None => None,
        };
        let semiblind_positions = semiblind_pilot_positions(cfg.n_s, cfg.j)?;
        let mcs_candidates = match cfg.mcs_index {
            Some(index) => mcs::lookup(index).into_iter().collect(),
            None => mcs::entries_for_bits(constellation.bits_per_symbol() as u32).collect(),
        };
        Ok(Self { cfg: cfg.clone(), constellation, pilot, dims, channel, receiver, pattern, semiblind_positions, mcs_candidates })
    }

    /// Fraction of the grid spent on pilots, as seen by every user.
    pub fn overhead(&self) -> f64 {
        match &self.pattern {
            Some(p) => p.overhead_fraction(),
            None => self.semiblind_positions.len() as f64 / (self.cfg.j * self.cfg.t) as f64,
        }
    }

    pub fn is_pilot(&self, j: usize, t: usize) -> bool {
        match &self.pattern {
            Some(p) => p.is_pilot(j, t),
            None => self.semiblind_positions.contains(&(j, t)),
        }
    }

    /// Transmitted value of `user`'s stream `s` at a pilot RE.
    fn pilot_value(&self, user: usize, s: usize, j: usize, t: usize) -> Complex64 {
        match &self.pattern {
            Some(p) => {
                if p.owner(user, j, t) == Some(s) {
                    self.pilot.symbol
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            None => {
                let position = self.semiblind_positions.iter().position(|&re| re == (j, t)).expect("pilot RE");
                self.pilot.matrix[(s, position)]
            }
        }
    }
}

/// One user's outcome in one TTI.
#[derive(Debug, Clone)]
pub struct UserTti {
    /// Mean over subcarriers of the normalised squared estimation error.
    pub nmse_ratio: f64,
    /// Same ratio after every refinement round (semi-blind receiver only).
    pub history_ratio: Vec<f64>,
    pub symbol_errors: usize,
    pub bit_errors: usize,
    pub data_symbols: usize,
    /// Raw BER of each stream's data, one code block per stream.
    pub block_ber: Vec<f64>,
    pub blocks_failed: usize,
    pub runtime_ms: f64,
    pub op_counts: OpCounts,
    /// Residual inter-user interference over desired power.
    pub iui_ratio: f64,
}

/// Per-user data labels `labels[j][(s, t)]`; pilot REs hold an unused label.
fn draw_labels(sc: &Scenario, seed: u64) -> Vec<Vec<usize>> {
    let cfg = &sc.cfg;
    let order = sc.constellation.order();
    let mut rng = seeded(derive_seed(seed, TAG_DATA, 0));
    (0..cfg.j).map(|_| (0..cfg.n_s * cfg.t).map(|_| rng.random_range(0..order)).collect()).collect()
}

fn symbol_grid(sc: &Scenario, user: usize, labels: &[Vec<usize>]) -> Vec<CMat> {
    let cfg = &sc.cfg;
    (0..cfg.j)
        .map(|j| {
            CMat::from_fn(cfg.n_s, cfg.t, |s, t| {
                if sc.is_pilot(j, t) {
                    sc.pilot_value(user, s, j, t)
                } else {
                    sc.constellation.point(labels[j][s * cfg.t + t])
                }
            })
        })
        .collect()
}

/// Channels of one TTI, drawn independently per user.
pub fn draw_channels(sc: &Scenario, tti_seed: u64) -> Result<Vec<FreqChannel>> {
    (0..sc.cfg.k)
        .map(|k| {
            let taps = gen_channel(&sc.channel, derive_seed(tti_seed, TAG_CHANNEL, k as u64))?;
            Ok(to_frequency(&taps, sc.cfg.j)?)
        })
        .collect()
}

/// Per-antenna noise variance that puts the user-averaged post-combining
/// per-stream SNR at `snr_linear`.
pub fn noise_variance(set: &PrecoderSet, effective: &[Vec<CMat>], snr_linear: f64) -> f64 {
    let ns = set.num_streams() as f64;
    let per_user: f64 = effective
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let signal = h.iter().map(fro_norm_sq).sum::<f64>() / (h.len() as f64 * ns);
            let gain = fro_norm_sq(&set.combiner(k)) / ns;
            signal / gain
        })
        .sum();
    per_user / effective.len() as f64 / snr_linear
}

/// Run one TTI on given channels. `user_seeds[k]` drives user `k`'s data
/// and noise, so relabelling users together with their seeds relabels the
/// outcomes.
pub fn run_tti(sc: &Scenario, channels: &[FreqChannel], precoder_seed: u64, user_seeds: &[u64], snr_linear: f64) -> Result<Vec<UserTti>> {
    let cfg = &sc.cfg;
    let labels: Vec<Vec<Vec<usize>>> = user_seeds.iter().map(|&s| draw_labels(sc, s)).collect();
    let symbols: Vec<Vec<CMat>> = labels.iter().enumerate().map(|(m, l)| symbol_grid(sc, m, l)).collect();

    let set = match design(channels, sc.dims, None, precoder_seed) {
        Ok(set) => set,
        // A degenerate draw is scored as a lost TTI for everyone.
        Err(_) => return Ok((0..cfg.k).map(|k| failed_tti(sc, &labels[k])).collect()),
    };
    let effective: Vec<Vec<CMat>> =
        channels.iter().enumerate().map(|(k, h)| Ok(effective_channel(h, &set, k)?.per_subcarrier)).collect::<Result<_>>()?;
    let noise_var = noise_variance(&set, &effective, snr_linear);
    let clean = transmit(channels, &set, &symbols, 0.0, 0)?;

    let mut out = Vec::with_capacity(cfg.k);
    for k in 0..cfg.k {
        let mut rng = seeded(derive_seed(user_seeds[k], TAG_NOISE, 0));
        let raw: Vec<CMat> = clean[k].iter().map(|y| y + complex_normal_matrix(&mut rng, cfg.n_r, cfg.t, noise_var)).collect();
        let y = set.combine(k, &raw);
        let combined_noise = noise_var * fro_norm_sq(&set.combiner(k)) / cfg.n_s as f64;
        let iui_ratio = residual_iui_ratio(&channels[k], &set, k)?;
        let mut user = receive(sc, k, y, &effective[k], &labels[k], combined_noise)?;
        user.iui_ratio = iui_ratio;
        out.push(user);
    }
    Ok(out)
}

/// Decode one user's combined grid. The pilot-aided baselines are given the
/// per-stream noise level, as a real receiver measures it on idle REs; the
/// semi-blind receiver estimates its own.
fn receive(sc: &Scenario, user: usize, y: Vec<CMat>, truth: &[CMat], labels: &[Vec<usize>], combined_noise: f64) -> Result<UserTti> {
    let start = Instant::now();
    let mut op_counts = OpCounts::default();
    let mut blocks_failed = 0;
    let mut history = Vec::new();
    let detected: Option<(Vec<CMat>, Vec<CMat>)> = match sc.cfg.receiver {
        ReceiverKind::Semiblind => {
            let grid = ReceivedGrid::new(y, sc.semiblind_positions.clone(), sc.pilot.clone())?;
            match jcesd(&grid, &sc.constellation, &sc.receiver) {
                Ok(res) => {
                    op_counts = res.op_counts;
                    blocks_failed = res.failed_blocks.len();
                    history = res.history;
                    Some((res.h_hat, res.x_hat))
                }
                Err(_) => None,
            }
        }
        ReceiverKind::PilotOrthogonal | ReceiverKind::PilotNonorthogonal => {
            let pattern = sc.pattern.as_ref().expect("baseline pattern");
            pilot_ce(&y, pattern, user, sc.pilot.symbol, sc.cfg.interpolation())
                .and_then(|h| {
                    let x = h
                        .iter()
                        .zip(&y)
                        .map(|(hj, yj)| lmmse_detect(hj, yj, combined_noise).map(|s| sc.constellation.slice(&s)))
                        .collect::<jcesd_core::Result<Vec<CMat>>>()?;
                    op_counts.lmmse_detections += x.len() as u64;
                    Ok((h, x))
                })
                .ok()
        }
    };
    let runtime_ms = (start.elapsed().as_secs_f64() * 1e6).round() / 1e3;
    let Some((h_hat, x_hat)) = detected else {
        let mut failed = failed_tti(sc, labels);
        failed.runtime_ms = runtime_ms;
        return Ok(failed);
    };
    let history_ratio = history.iter().map(|h| metrics::nmse_ratio(h, truth)).collect::<Result<_>>()?;
    let mut user_tti = score(sc, labels, |j, s, t| nearest(x_hat[j][(s, t)], &sc.constellation).1);
    user_tti.nmse_ratio = metrics::nmse_ratio(&h_hat, truth)?;
    user_tti.history_ratio = history_ratio;
    user_tti.blocks_failed = blocks_failed;
    user_tti.runtime_ms = runtime_ms;
    user_tti.op_counts = op_counts;
    Ok(user_tti)
}

/// A TTI whose receiver produced nothing: zero channel estimate, every
/// symbol decided as label 0, every block failed.
fn failed_tti(sc: &Scenario, labels: &[Vec<usize>]) -> UserTti {
    let mut user = score(sc, labels, |_, _, _| 0);
    user.nmse_ratio = 1.0;
    user.blocks_failed = sc.cfg.n_f;
    user
}

fn score(sc: &Scenario, labels: &[Vec<usize>], decided: impl Fn(usize, usize, usize) -> usize) -> UserTti {
    let cfg = &sc.cfg;
    let bits = sc.constellation.bits_per_symbol();
    let mut per_stream = vec![(0usize, 0usize); cfg.n_s];
    let (mut symbol_errors, mut bit_errors, mut data_symbols) = (0, 0, 0);
    for (j, row) in labels.iter().enumerate() {
        for t in (0..cfg.t).filter(|&t| !sc.is_pilot(j, t)) {
            for (s, stream) in per_stream.iter_mut().enumerate() {
                let truth = row[s * cfg.t + t];
                let got = decided(j, s, t);
                let errors = (truth ^ got).count_ones() as usize;
                symbol_errors += usize::from(truth != got);
                bit_errors += errors;
                data_symbols += 1;
                stream.0 += errors;
                stream.1 += bits;
            }
        }
    }
    UserTti {
        nmse_ratio: 0.0,
        history_ratio: Vec::new(),
        symbol_errors,
        bit_errors,
        data_symbols,
        block_ber: per_stream.iter().map(|&(e, n)| if n == 0 { 0.0 } else { e as f64 / n as f64 }).collect(),
        blocks_failed: 0,
        runtime_ms: 0.0,
        op_counts: OpCounts::default(),
        iui_ratio: 0.0,
    }
}

/// Per-user results of a trial with the diagnostics the CSV leaves out.
#[derive(Debug, Clone)]
pub struct TrialDetail {
    pub rows: Vec<MetricsRow>,
    /// `nmse_history_db[k][t]`: NMSE after refinement round `t` (empty for
    /// the pilot-aided baselines).
    pub nmse_history_db: Vec<Vec<f64>>,
    pub op_counts: Vec<OpCounts>,
    /// Mean residual inter-user interference ratio in dB, per user.
    pub iui_db: Vec<f64>,
}

pub fn run_trial(cfg: &SimConfig, snr_db: f64, seed: u64) -> Result<Vec<MetricsRow>> {
    Ok(run_trial_detailed(cfg, snr_db, seed)?.rows)
}

pub fn run_trial_detailed(cfg: &SimConfig, snr_db: f64, seed: u64) -> Result<TrialDetail> {
    let sc = Scenario::new(cfg)?;
    let snr_linear = 10f64.powf(snr_db / 10.0);
    let mut per_user: Vec<Vec<UserTti>> = vec![Vec::with_capacity(cfg.ttis); cfg.k];
    for tti in 0..cfg.ttis {
        let tti_seed = derive_seed(seed, TAG_TTI, tti as u64);
        let channels = draw_channels(&sc, tti_seed)?;
        let user_seeds: Vec<u64> = (0..cfg.k).map(|k| derive_seed(tti_seed, TAG_USER, k as u64)).collect();
        let outcome = run_tti(&sc, &channels, derive_seed(tti_seed, TAG_PRECODER, 0), &user_seeds, snr_linear)?;
        for (acc, u) in per_user.iter_mut().zip(outcome) {
            acc.push(u);
        }
    }
    let mut detail = TrialDetail { rows: Vec::new(), nmse_history_db: Vec::new(), op_counts: Vec::new(), iui_db: Vec::new() };
    for (k, ttis) in per_user.iter().enumerate() {
        let (row, history, counts, iui) = aggregate(&sc, snr_db, seed, k, ttis);
        detail.rows.push(row);
        detail.nmse_history_db.push(history);
        detail.op_counts.push(counts);
        detail.iui_db.push(iui);
    }
    Ok(detail)
}

fn aggregate(sc: &Scenario, snr_db: f64, seed: u64, user: usize, ttis: &[UserTti]) -> (MetricsRow, Vec<f64>, OpCounts, f64) {
    let cfg = &sc.cfg;
    let n = ttis.len() as f64;
    let bits = sc.constellation.bits_per_symbol();
    let symbols: usize = ttis.iter().map(|u| u.data_symbols).sum();
    let symbol_errors: usize = ttis.iter().map(|u| u.symbol_errors).sum();
    let bit_errors: usize = ttis.iter().map(|u| u.bit_errors).sum();
    let mut counts = OpCounts::default();
    for u in ttis {
        counts.add(&u.op_counts);
    }

    // One code block per stream per TTI, sized to the whole grid so that the
    // overhead factor removes the pilot share.
    let block_size = cfg.j * cfg.t * bits;
    let overhead = sc.overhead();
    let blocks: Vec<f64> = ttis.iter().flat_map(|u| u.block_ber.iter().copied()).collect();
    let credited = |rate: f64| -> f64 {
        blocks.iter().map(|&b| metrics::credited_bits(b, rate, overhead, block_size, cfg.decode_threshold)).sum()
    };
    let (mcs_index, throughput_bits) = if sc.mcs_candidates.is_empty() {
        (-1, credited(1.0))
    } else {
        let history: Vec<(u32, f64)> = sc
            .mcs_candidates
            .iter()
            .map(|e| {
                let failures = blocks.iter().filter(|&&b| !metrics::block_decodes(b, e.code_rate, cfg.decode_threshold)).count();
                (e.index, failures as f64 / blocks.len().max(1) as f64)
            })
            .collect();
        let chosen = mcs::link_adapt(&history).and_then(mcs::lookup).expect("non-empty candidate list");
        (chosen.index as i32, credited(chosen.code_rate))
    };

    let rounds = ttis.iter().map(|u| u.history_ratio.len()).min().unwrap_or(0);
    let history = (0..rounds).map(|t| metrics::to_db(ttis.iter().map(|u| u.history_ratio[t]).sum::<f64>() / n)).collect();
    let row = MetricsRow {
        snr_db,
        seed,
        user,
        receiver: cfg.receiver,
        nmse_db: metrics::to_db(ttis.iter().map(|u| u.nmse_ratio).sum::<f64>() / n),
        ser: if symbols == 0 { 0.0 } else { symbol_errors as f64 / symbols as f64 },
        ber: if symbols == 0 { 0.0 } else { bit_errors as f64 / (symbols * bits) as f64 },
        throughput_bits: credited_round(throughput_bits),
        mcs_index,
        blocks_failed: ttis.iter().map(|u| u.blocks_failed).sum(),
        runtime_ms: (ttis.iter().map(|u| u.runtime_ms).sum::<f64>() * 1e3).round() / 1e3,
        opt_iters: counts.optimizer_iterations,
    };
    let iui = metrics::to_db(ttis.iter().map(|u| u.iui_ratio).sum::<f64>() / n);
    (row, history, counts, iui)
}

/// Credited bits are sums of products with three-decimal code rates; round
/// away the accumulated floating-point noise.
fn credited_round(bits: f64) -> f64 {
    (bits * 1e6).round() / 1e6
}
