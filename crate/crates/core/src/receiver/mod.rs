//! The semi-blind receiver: per-block constellation fitting followed by
//! reliability-gated LS / LMMSE refinement across the whole grid.

mod appendix;
mod block;
mod refine;

pub use appendix::{init_bound_check, random_init_exceedance};
pub use block::{
    align_to_reference, estimate_sinr, feasible_start, ls_init, normalize, resolve_ambiguity, semiblind_block, AmbiguityLog,
    BlockEstimate, BlockOptions, SINR_CAP,
};
pub use refine::{llr_filter, lmmse_detect, ls_refine};

use alloc::vec::Vec;
use core::ops::Range;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{fro_norm_sq, hconcat, inverse, CMat};
use crate::modem::{LlrParams, PilotBlock, QamConstellation, NOISE_VAR_FLOOR};
use crate::optimizer::Tolerances;

/// Received symbols of one user after combining, with its pilot layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedGrid {
    /// Per subcarrier, `N_s x T`.
    pub y: Vec<CMat>,
    /// `(subcarrier, symbol)` of pilot column `s` of the pilot block.
    pub pilot_positions: Vec<(usize, usize)>,
    pub pilot: PilotBlock,
}

impl ReceivedGrid {
    pub fn new(y: Vec<CMat>, pilot_positions: Vec<(usize, usize)>, pilot: PilotBlock) -> Result<Self> {
        let ns = pilot.matrix.nrows();
        let t = y.first().map_or(0, |m| m.ncols());
        if y.is_empty() || t == 0 {
            return Err(Error::InvalidArgument("received grid is empty".into()));
        }
        for m in &y {
            crate::linalg::check_shape("received grid", m, ns, t)?;
        }
        if pilot_positions.len() != ns || pilot.matrix.ncols() != ns {
            return Err(Error::InvalidArgument("need one pilot position per stream".into()));
        }
        for (i, &(j, s)) in pilot_positions.iter().enumerate() {
            if j >= y.len() || s >= t {
                return Err(Error::InvalidArgument("pilot position outside the grid".into()));
            }
            if pilot_positions[..i].contains(&(j, s)) {
                return Err(Error::InvalidArgument("pilot positions must be distinct".into()));
            }
        }
        Ok(Self { y, pilot_positions, pilot })
    }

    pub fn num_streams(&self) -> usize {
        self.pilot.matrix.nrows()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.y.len()
    }

    pub fn num_symbols(&self) -> usize {
        self.y[0].ncols()
    }

    /// Received pilot block `P_r` (`N_s x N_s`).
    pub fn received_pilots(&self) -> CMat {
        let ns = self.num_streams();
        CMat::from_fn(ns, ns, |r, s| {
            let (j, t) = self.pilot_positions[s];
            self.y[j][(r, t)]
        })
    }

    fn is_pilot(&self, j: usize, t: usize) -> Option<usize> {
        self.pilot_positions.iter().position(|&p| p == (j, t))
    }
}

/// Split of `J` subcarriers into `N_f` equal blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockPartition {
    pub num_blocks: usize,
    pub block_width: usize,
    pub symbols_per_block: usize,
}

impl BlockPartition {
    pub fn new(subcarriers: usize, symbols: usize, num_blocks: usize) -> Result<Self> {
        if num_blocks == 0 || subcarriers == 0 || !subcarriers.is_multiple_of(num_blocks) {
            return Err(Error::InvalidArgument(alloc::format!(
                "{num_blocks} blocks do not divide {subcarriers} subcarriers"
            )));
        }
        let block_width = subcarriers / num_blocks;
        Ok(Self { num_blocks, block_width, symbols_per_block: block_width * symbols })
    }

    pub fn subcarriers(&self, block: usize) -> Range<usize> {
        block * self.block_width..(block + 1) * self.block_width
    }

    pub fn block_of(&self, subcarrier: usize) -> usize {
        subcarrier / self.block_width
    }
}

/// Receiver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JcesdConfig {
    pub num_blocks: usize,
    pub num_iterations: usize,
    pub llr_threshold: f64,
    pub kappa_max: f64,
    pub augment: bool,
    /// Return the first block failure instead of borrowing a neighbour's
    /// estimate.
    pub strict: bool,
    /// Peak modulus after normalisation; `None` uses the constellation's
    /// corner radius `sqrt(2) lambda_M`.
    pub normalization_target: Option<f64>,
    pub tolerances: Tolerances,
}

impl Default for JcesdConfig {
    fn default() -> Self {
        Self {
            num_blocks: 8,
            num_iterations: 5,
            llr_threshold: 15.0,
            kappa_max: 1e4,
            augment: true,
            strict: false,
            normalization_target: None,
            tolerances: Tolerances::default(),
        }
    }
}

/// Work counters, reported instead of wall-clock time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub optimizer_solves: u64,
    pub optimizer_iterations: u64,
    pub constraint_evaluations: u64,
    pub ls_refinements: u64,
    pub lmmse_detections: u64,
}

impl OpCounts {
    pub fn add(&mut self, other: &OpCounts) {
        self.optimizer_solves += other.optimizer_solves;
        self.optimizer_iterations += other.optimizer_iterations;
        self.constraint_evaluations += other.constraint_evaluations;
        self.ls_refinements += other.ls_refinements;
        self.lmmse_detections += other.lmmse_detections;
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    /// Final per-subcarrier channel estimates.
    pub h_hat: Vec<CMat>,
    /// Final per-subcarrier hard decisions, pilots restored.
    pub x_hat: Vec<CMat>,
    /// Per block; `None` for blocks whose fit failed.
    pub ambiguity_log: Vec<Option<AmbiguityLog>>,
    /// Pilot-based SINR, which sets the first-pass fit box.
    pub sinr_estimate: f64,
    /// Data SINR of the block-stage decisions against per-subcarrier LS
    /// channels; sets the LLR noise level `max(1e-3, 1/SINR)`.
    pub data_sinr: f64,
    pub iterations_used: usize,
    /// `history[t]` holds the channel estimates after refinement round `t`
    /// (`t = 0` is the block-stage output).
    pub history: Vec<Vec<CMat>>,
    pub failed_blocks: Vec<usize>,
    /// Per-stream normalisation factors.
    pub scale: Vec<f64>,
    pub op_counts: OpCounts,
}

/// Full receiver: normalise, fit each block, then refine iteratively.
#[allow(clippy::needless_range_loop)] // several per-subcarrier arrays share the index
pub fn jcesd(grid: &ReceivedGrid, c: &QamConstellation, cfg: &JcesdConfig) -> Result<EstimationResult> {
    let ns = grid.num_streams();
    let jn = grid.num_subcarriers();
    let tn = grid.num_symbols();
    let partition = BlockPartition::new(jn, tn, cfg.num_blocks)?;
    let mut counts = OpCounts::default();

    // Per-stream normalisation over the whole grid.
    let target = cfg.normalization_target.unwrap_or(core::f64::consts::SQRT_2 * c.boundary());
    let mut scale = Vec::with_capacity(ns);
    for s in 0..ns {
        let stream: Vec<Complex64> = grid.y.iter().flat_map(|m| m.row(s).iter().copied().collect::<Vec<_>>()).collect();
        let (_, k) = normalize(&stream, target).map_err(|_| Error::DegenerateStream { stream: s })?;
        scale.push(k);
    }
    let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(ns, scale.iter().map(|&k| Complex64::new(k, 0.0))));
    let d_inv = CMat::from_diagonal(&nalgebra::DVector::from_iterator(ns, scale.iter().map(|&k| Complex64::new(1.0 / k, 0.0))));
    let yn: Vec<CMat> = grid.y.iter().map(|m| &d * m).collect();
    let p_r = &d * grid.received_pilots();

    let h_pilot = ls_init(&p_r, &grid.pilot)?;
    let sinr = estimate_sinr(&p_r, &grid.pilot, &h_pilot)?;
    let stage = BlockStage { grid, yn: &yn, p_r: &p_r, h_pilot: &h_pilot, partition: &partition, c, cfg };

    // With exactly N_s pilots the pilot LS fit is exact, so the pilot SINR
    // saturates and the box collapses to lambda_M. Each block's own
    // decisions give an LS channel and hence a data SINR; when that moves
    // the box noticeably the chain is fitted again with per-block boxes.
    let pilot_bound = c.boundary() + libm::sqrt(1.0 / sinr);
    let mut chain = stage.fit(&alloc::vec![pilot_bound; partition.num_blocks])?;
    counts.add(&chain.counts);
    let (block_sinr, pooled) = stage.data_sinr(&chain.blocks);
    let bounds: Vec<f64> = block_sinr.iter().map(|s| c.boundary() + libm::sqrt(1.0 / s.unwrap_or(pooled))).collect();
    if bounds.iter().any(|&b| libm::fabs(b - pilot_bound) > REFIT_TOLERANCE * pilot_bound) {
        chain = stage.fit(&bounds)?;
        counts.add(&chain.counts);
    }
    let BlockChain { blocks, failed, .. } = chain;

    // Block channels in the received (un-normalised) domain, failed blocks
    // borrowing from the nearest successful one.
    let block_h: Vec<CMat> = (0..partition.num_blocks)
        .map(|b| {
            let source = nearest_success(&blocks, b);
            let h = source.map_or(&h_pilot, |s| &blocks[s].as_ref().expect("successful block").h);
            &d_inv * h
        })
        .collect();

    let mut h_cur: Vec<CMat> = (0..jn).map(|j| block_h[partition.block_of(j)].clone()).collect();
    let mut soft: Vec<CMat> = Vec::with_capacity(jn);
    for j in 0..jn {
        let b = partition.block_of(j);
        match &blocks[b] {
            Some(est) => {
                let off = (j - partition.subcarriers(b).start) * tn;
                soft.push(est.soft.columns(off, tn).into_owned());
            }
            None => {
                let u = inverse(&h_cur[j], "borrowed block estimate").map_err(|_| Error::SingularEstimate)?;
                soft.push(u * &grid.y[j]);
            }
        }
    }
    let mut hard: Vec<CMat> = soft.iter().map(|s| c.slice(s)).collect();
    for (j, x) in hard.iter_mut().enumerate() {
        restore_pilots(grid, j, x);
    }

    // The LLR noise level comes from per-subcarrier LS fits of the block
    // decisions, so block-constant model error does not count as noise.
    let data_sinr = subcarrier_sinr(grid, &hard).unwrap_or(sinr);
    let llr_params = LlrParams::new(1.0 / data_sinr, NOISE_VAR_FLOOR)?;
    let symbol_noise = llr_params.noise_var();

    let mut history = Vec::with_capacity(cfg.num_iterations + 1);
    history.push(h_cur.clone());
    for _ in 0..cfg.num_iterations {
        for j in 0..jn {
            let pilots: Vec<usize> = (0..tn).filter(|&t| grid.is_pilot(j, t).is_some()).collect();
            let data_cols: Vec<usize> = (0..tn).filter(|t| !pilots.contains(t)).collect();
            let data_soft = crate::linalg::select_columns(&soft[j], &data_cols);
            let mut keep: Vec<usize> = match llr_filter(&data_soft, c, llr_params, cfg.llr_threshold) {
                Ok(k) => k.into_iter().map(|i| data_cols[i]).collect(),
                Err(_) => Vec::new(),
            };
            keep.extend_from_slice(&pilots);
            keep.sort_unstable();
            if keep.len() >= ns {
                let x = crate::linalg::select_columns(&hard[j], &keep);
                let y = crate::linalg::select_columns(&grid.y[j], &keep);
                if let Ok(h) = ls_refine(&x, &y) {
                    counts.ls_refinements += 1;
                    h_cur[j] = h;
                }
            }
            let noise = symbol_noise * fro_norm_sq(&h_cur[j]) / ns as f64;
            if let Ok(s) = lmmse_detect(&h_cur[j], &grid.y[j], noise) {
                counts.lmmse_detections += 1;
                hard[j] = c.slice(&s);
                restore_pilots(grid, j, &mut hard[j]);
                soft[j] = s;
            }
        }
        history.push(h_cur.clone());
    }

    Ok(EstimationResult {
        h_hat: h_cur,
        x_hat: hard,
        ambiguity_log: blocks.iter().map(|b| b.as_ref().map(|e| e.ambiguity.clone())).collect(),
        sinr_estimate: sinr,
        data_sinr,
        iterations_used: cfg.num_iterations,
        history,
        failed_blocks: failed,
        scale,
        op_counts: counts,
    })
}

/// Relative change of a block's box that triggers the second fitting pass.
const REFIT_TOLERANCE: f64 = 0.01;

/// Outcome of fitting every block along the pilot-anchored chain.
struct BlockChain {
    blocks: Vec<Option<BlockEstimate>>,
    failed: Vec<usize>,
    counts: OpCounts,
}

/// Shared inputs of the block stage, in the normalised domain.
struct BlockStage<'a> {
    grid: &'a ReceivedGrid,
    yn: &'a [CMat],
    p_r: &'a CMat,
    h_pilot: &'a CMat,
    partition: &'a BlockPartition,
    c: &'a QamConstellation,
    cfg: &'a JcesdConfig,
}

impl BlockStage<'_> {
    /// Fit all blocks with per-block box half-widths `bounds`.
    ///
    /// The pilots sit in one block. Blocks are fitted outwards from it; every
    /// other block starts from its resolved neighbour on the pilot side and
    /// is then disambiguated against that neighbour's LS channel at the
    /// shared edge, where the channel has barely moved.
    fn fit(&self, bounds: &[f64]) -> Result<BlockChain> {
        let (grid, yn, partition) = (self.grid, self.yn, self.partition);
        let tn = grid.num_symbols();
        let mut counts = OpCounts::default();
        let pilot_block = partition.block_of(grid.pilot_positions[0].0);
        let mut order: Vec<usize> = (0..partition.num_blocks).collect();
        order.sort_by_key(|&b| (b.abs_diff(pilot_block), b));
        let mut blocks: Vec<Option<BlockEstimate>> = alloc::vec![None; partition.num_blocks];
        let mut failed = Vec::new();
        for b in order {
            let own = partition.subcarriers(b);
            let parts: Vec<&CMat> = own.clone().map(|j| &yn[j]).collect();
            let y_block = hconcat(&parts);
            // Nearest successful block between this one and the pilots, with
            // the facing edge subcarriers of both.
            let neighbour = if b > pilot_block {
                (pilot_block..b).rev().find(|&i| blocks[i].is_some()).map(|i| (i, partition.subcarriers(i).end - 1, own.start))
            } else {
                (b + 1..=pilot_block).find(|&i| blocks[i].is_some()).map(|i| (i, partition.subcarriers(i).start, own.end - 1))
            };
            let h_ref = match (b == pilot_block, neighbour) {
                (true, _) | (false, None) => None,
                (false, Some((i, j_ref, _))) => {
                    let est = blocks[i].as_ref().expect("successful block");
                    let off = (j_ref - partition.subcarriers(i).start) * tn;
                    let x = est.hard.columns(off, tn).into_owned();
                    Some(ls_refine(&x, &yn[j_ref]).unwrap_or_else(|_| est.h.clone()))
                }
            };
            let reference = match &h_ref {
                Some(h) => h * &grid.pilot.matrix,
                None if b == pilot_block => self.p_r.clone(),
                None => self.h_pilot * &grid.pilot.matrix,
            };
            let opts = BlockOptions {
                kappa_max: self.cfg.kappa_max,
                augment: self.cfg.augment,
                bound: bounds[b],
                tolerances: self.cfg.tolerances,
            };
            let fitted = semiblind_block(&y_block, &reference, &grid.pilot, self.c, &opts).and_then(|est| match (&h_ref, neighbour) {
                (Some(h), Some((_, _, j_own))) => align_to_reference(est, &yn[j_own], (j_own - own.start) * tn, h, &grid.pilot, self.c),
                _ => Ok(est),
            });
            match fitted {
                Ok(est) => {
                    counts.optimizer_solves += 1;
                    counts.optimizer_iterations += est.iterations as u64;
                    counts.constraint_evaluations += est.constraint_evaluations;
                    blocks[b] = Some(est);
                }
                Err(e) if self.cfg.strict => return Err(e),
                Err(_) => failed.push(b),
            }
        }
        failed.sort_unstable();
        Ok(BlockChain { blocks, failed, counts })
    }

    /// Per-block data SINR `||X||^2 / ||H_LS^-1 Y - X||^2` over the data
    /// symbols, with `H_LS` the least-squares channel of the block's hard
    /// decisions; also the SINR pooled over all successful blocks (the
    /// pilot SINR when none succeeded).
    fn data_sinr(&self, blocks: &[Option<BlockEstimate>]) -> (Vec<Option<f64>>, f64) {
        let tn = self.grid.num_symbols();
        let ratio = |signal: f64, error: f64| if error <= signal / SINR_CAP { SINR_CAP } else { signal / error };
        let (mut signal, mut error) = (0.0, 0.0);
        let per_block = blocks
            .iter()
            .enumerate()
            .map(|(b, est)| {
                let est = est.as_ref()?;
                let own = self.partition.subcarriers(b);
                let cols: Vec<usize> = own
                    .clone()
                    .enumerate()
                    .flat_map(|(i, j)| (0..tn).filter(move |&t| self.grid.is_pilot(j, t).is_none()).map(move |t| i * tn + t))
                    .collect();
                let parts: Vec<&CMat> = own.map(|j| &self.yn[j]).collect();
                let y = crate::linalg::select_columns(&hconcat(&parts), &cols);
                let x = crate::linalg::select_columns(&est.hard, &cols);
                let h = ls_refine(&x, &y).ok()?;
                let u = inverse(&h, "block data SINR").ok()?;
                let (s, e) = (fro_norm_sq(&x), fro_norm_sq(&(u * y - &x)));
                signal += s;
                error += e;
                Some(ratio(s, e))
            })
            .collect();
        let pooled = if signal > 0.0 { ratio(signal, error) } else { estimate_sinr(self.p_r, &self.grid.pilot, self.h_pilot).unwrap_or(SINR_CAP) };
        (per_block, pooled)
    }
}

/// Data SINR `sum ||X||^2 / sum ||H_j^-1 Y_j - X_j||^2` with `H_j` the LS
/// channel of subcarrier `j`'s decisions. Residuals are scaled by
/// `T' / (T' - N_s)` for the degrees of freedom the fit absorbs. `None` when
/// no subcarrier has more data symbols than streams.
fn subcarrier_sinr(grid: &ReceivedGrid, hard: &[CMat]) -> Option<f64> {
    let ns = grid.num_streams();
    let (mut signal, mut error) = (0.0, 0.0);
    for (j, x_all) in hard.iter().enumerate() {
        let cols: Vec<usize> = (0..grid.num_symbols()).filter(|&t| grid.is_pilot(j, t).is_none()).collect();
        if cols.len() <= ns {
            continue;
        }
        let x = crate::linalg::select_columns(x_all, &cols);
        let y = crate::linalg::select_columns(&grid.y[j], &cols);
        let Some(u) = ls_refine(&x, &y).ok().and_then(|h| inverse(&h, "subcarrier SINR").ok()) else {
            continue;
        };
        signal += fro_norm_sq(&x);
        error += fro_norm_sq(&(u * y - &x)) * cols.len() as f64 / (cols.len() - ns) as f64;
    }
    if !(signal > 0.0) {
        return None;
    }
    Some(if error <= signal / SINR_CAP { SINR_CAP } else { signal / error })
}

fn nearest_success(blocks: &[Option<BlockEstimate>], b: usize) -> Option<usize> {
    (0..blocks.len())
        .filter(|&i| blocks[i].is_some())
        .min_by_key(|&i| (i.abs_diff(b), i))
}

fn restore_pilots(grid: &ReceivedGrid, j: usize, x: &mut CMat) {
    for (s, &(pj, pt)) in grid.pilot_positions.iter().enumerate() {
        if pj == j {
            x.set_column(pt, &grid.pilot.matrix.column(s));
        }
    }
}
