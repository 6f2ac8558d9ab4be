//! Low-rank Hankel matrix completion of virtual even/odd k-space by ADMM
//! over a factorized nuclear-norm surrogate: minimize
//! (1/2)(|U|_F^2 + |V|_F^2) subject to H(Z) = U V^H and data consistency
//! on the measured lines, alternating U, V, the Hankel-consistent grids,
//! and a scaled dual.
//!
//! Iterates start from the truncated SVD of the parity-filled block (the
//! measured interleave copied into both channels). The zero-filled start
//! sits exactly midway between the true completion and its half-FOV
//! parity twin, which shares every singular value and satisfies the same
//! constraints, so a solver started there has no reason to prefer the
//! correct one; parity filling biases the iteration toward the object at
//! its measured position.

use ndarray::{Array2, Axis};
use num_complex::Complex64;

use crate::error::{GhostError, Result};
use crate::fft::{fft_axis_centered, ifft_axis_centered};
use crate::hankel::{build_block, hankel_adjoint2, hankel_weights2, HankelBlock, Pencil};
use crate::linalg::{cgemm, frobenius_norm, solve_regularized_gram, svd_exact, svd_randomized, Op};
use crate::metrics::{gsr, recon_sos, RoiSpec};
use crate::sim::parity_filled_pair;
use crate::volume::VirtualEchoPair;

#[derive(Debug, Clone)]
pub struct AlohaConfig {
    /// Hankel window; the product dx*dy is the per-channel pencil size.
    pub pencil: Pencil,
    /// Optional explicit rank estimate; otherwise measured from the
    /// parity-filled block at `rank_energy`.
    pub target_rank_est: Option<usize>,
    /// Columns of the factor matrices; defaults to twice the rank estimate.
    pub factor_rank: Option<usize>,
    /// ADMM penalty weight, applied after max-magnitude normalization.
    pub mu: f64,
    pub max_iters: usize,
    /// Relative iterate-change stopping threshold.
    pub tol: f64,
    /// Energy fraction used when estimating the rank.
    pub rank_energy: f64,
    /// Seed for the randomized range finder in the initialization.
    pub seed: u64,
    /// Cadzow warm-up rounds before the ADMM iterations.
    pub warmup_iters: usize,
}

impl Default for AlohaConfig {
    fn default() -> Self {
        AlohaConfig {
            pencil: Pencil::new(1, 32),
            target_rank_est: None,
            factor_rank: None,
            mu: 1.0,
            max_iters: 150,
            tol: 1e-6,
            rank_energy: 0.995,
            seed: 0,
            warmup_iters: 10,
        }
    }
}

impl AlohaConfig {
    fn validate(&self) -> Result<()> {
        if self.mu <= 0.0 || self.tol <= 0.0 {
            return Err(GhostError::InvalidConfig(
                "mu and tol must be positive".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(GhostError::InvalidConfig("max_iters must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.rank_energy) || self.rank_energy == 0.0 {
            return Err(GhostError::InvalidConfig(
                "rank_energy must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CompletionResult {
    pub completed: VirtualEchoPair,
    pub iters_used: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Augmented-Lagrangian value at the start of each iteration, before
    /// the primal updates, at that iteration's dual variable.
    pub objective_pre: Vec<f64>,
    /// Augmented-Lagrangian value after each iteration's primal updates at
    /// the same dual variable; never above the matching `objective_pre`.
    pub objective: Vec<f64>,
}

/// Smallest q with the top-q singular values holding `energy` of the
/// squared spectrum.
pub fn estimate_rank(block: &HankelBlock, energy: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&energy) || energy == 0.0 {
        return Err(GhostError::InvalidConfig(
            "energy fraction must lie in (0, 1)".into(),
        ));
    }
    let (m, n) = block.matrix.dim();
    if m == 0 || n == 0 {
        return Err(GhostError::ShapeMismatch("empty Hankel block".into()));
    }
    let total: f64 = block.matrix.iter().map(|c| c.norm_sqr()).sum();
    if total == 0.0 {
        return Ok(0);
    }
    let svals: Vec<f64> = if n.min(m) <= 256 {
        svd_exact(&block.matrix).1
    } else {
        svd_randomized(&block.matrix, 192.min(n).min(m), 8, 2, 1).1
    };
    let mut acc = 0.0;
    for (q, s) in svals.iter().enumerate() {
        acc += s * s;
        if acc >= energy * total {
            return Ok(q + 1);
        }
    }
    Ok(svals.len())
}

struct ChannelView {
    grids: Vec<Array2<Complex64>>,
}

/// Columns of Z as per-channel grids in block order [g+ c0, g- c0, ...].
fn channels_of(pair: &VirtualEchoPair) -> ChannelView {
    let mut grids = Vec::with_capacity(2 * pair.coils());
    for c in 0..pair.coils() {
        grids.push(pair.g_plus[c].clone());
        grids.push(pair.g_minus[c].clone());
    }
    ChannelView { grids }
}

fn pair_from_channels(view: &ChannelView, template: &VirtualEchoPair) -> VirtualEchoPair {
    let coils = template.coils();
    let mut out = template.clone();
    for c in 0..coils {
        out.g_plus[c] = view.grids[2 * c].clone();
        out.g_minus[c] = view.grids[2 * c + 1].clone();
    }
    out
}

fn block_of(view: &ChannelView, template: &VirtualEchoPair, pencil: Pencil) -> Result<Array2<Complex64>> {
    let pair = pair_from_channels(view, template);
    Ok(build_block(&pair, pencil)?.matrix)
}

/// Overwrite measured entries: even lines of g+ channels, odd lines of g-
/// channels, scaled by `scale`.
fn project_data(view: &mut ChannelView, measured: &VirtualEchoPair, scale: f64) {
    let (nx, ny) = measured.shape();
    for c in 0..measured.coils() {
        for ky in 0..ny {
            if measured.mask_even.lines[ky] {
                for kx in 0..nx {
                    view.grids[2 * c][[kx, ky]] = measured.g_plus[c][[kx, ky]] * scale;
                }
            }
            if measured.mask_odd.lines[ky] {
                for kx in 0..nx {
                    view.grids[2 * c + 1][[kx, ky]] = measured.g_minus[c][[kx, ky]] * scale;
                }
            }
        }
    }
}

/// Complete the missing virtual k-space lines of a measured pair.
///
/// With a `(1, dy)` pencil (the default) the problem is solved in the
/// hybrid domain: after an inverse transform along readout, each readout
/// position carries an independent small completion along the
/// phase-encode axis, which is where the even/odd channels are related by
/// a single phase and the background margins keep the per-position
/// spectra low rank. A `(dx > 1, dy)` pencil instead lifts the full 2-D
/// grid into one block.
pub fn aloha_complete(pair: &VirtualEchoPair, cfg: &AlohaConfig) -> Result<CompletionResult> {
    cfg.validate()?;
    let (nx, ny) = pair.shape();
    cfg.pencil.check(nx, ny)?;

    // A pair marked fully filled is pinned everywhere by data consistency.
    if pair.filled {
        return Ok(CompletionResult {
            completed: pair.clone(),
            iters_used: 0,
            final_residual: 0.0,
            converged: true,
            objective_pre: Vec::new(),
            objective: Vec::new(),
        });
    }
    if pair.mask_even.is_empty() {
        return Err(GhostError::EmptyMask("even"));
    }
    if pair.mask_odd.is_empty() {
        return Err(GhostError::EmptyMask("odd"));
    }

    if cfg.pencil.dx == 1 && nx > 1 {
        return complete_hybrid(pair, cfg);
    }
    admm_pair(pair, cfg)
}

/// Hybrid-domain driver: transform along readout, complete each readout
/// position independently, transform back, and restore the measured
/// k-space samples bit-exactly.
fn complete_hybrid(pair: &VirtualEchoPair, cfg: &AlohaConfig) -> Result<CompletionResult> {
    let (nx, ny) = pair.shape();
    let coils = pair.coils();

    let mut hybrid_plus = Vec::with_capacity(coils);
    let mut hybrid_minus = Vec::with_capacity(coils);
    for c in 0..coils {
        hybrid_plus.push(ifft_axis_centered(&pair.g_plus[c], Axis(0))?);
        hybrid_minus.push(ifft_axis_centered(&pair.g_minus[c], Axis(0))?);
    }

    // Skip readout positions carrying effectively no signal.
    let mut slice_energy = vec![0.0f64; nx];
    let mut max_energy = 0.0f64;
    for x in 0..nx {
        let mut e = 0.0;
        for c in 0..coils {
            for ky in 0..ny {
                if pair.mask_even.lines[ky] {
                    e += hybrid_plus[c][[x, ky]].norm_sqr();
                }
                if pair.mask_odd.lines[ky] {
                    e += hybrid_minus[c][[x, ky]].norm_sqr();
                }
            }
        }
        slice_energy[x] = e;
        max_energy = max_energy.max(e);
    }

    let mut iters_used = 0usize;
    let mut final_residual = 0.0f64;
    let mut converged = true;
    let mut objective = Vec::new();
    let mut objective_pre = Vec::new();

    for x in 0..nx {
        let mut slice = VirtualEchoPair::zeros(
            1,
            ny,
            coils,
            pair.mask_even.clone(),
            pair.mask_odd.clone(),
        );
        for c in 0..coils {
            for ky in 0..ny {
                slice.g_plus[c][[0, ky]] = hybrid_plus[c][[x, ky]];
                slice.g_minus[c][[0, ky]] = hybrid_minus[c][[x, ky]];
            }
        }
        if slice_energy[x] <= 1e-18 * max_energy {
            let filled = parity_filled_pair(&slice);
            for c in 0..coils {
                for ky in 0..ny {
                    hybrid_plus[c][[x, ky]] = filled.g_plus[c][[0, ky]];
                    hybrid_minus[c][[x, ky]] = filled.g_minus[c][[0, ky]];
                }
            }
            continue;
        }
        let res = admm_pair(&slice, cfg)?;
        iters_used = iters_used.max(res.iters_used);
        final_residual = final_residual.max(res.final_residual);
        converged &= res.converged;
        if res.objective.len() > objective.len() {
            objective = res.objective;
            objective_pre = res.objective_pre;
        }
        for c in 0..coils {
            for ky in 0..ny {
                hybrid_plus[c][[x, ky]] = res.completed.g_plus[c][[0, ky]];
                hybrid_minus[c][[x, ky]] = res.completed.g_minus[c][[0, ky]];
            }
        }
    }

    let mut completed = pair.clone();
    for c in 0..coils {
        completed.g_plus[c] = fft_axis_centered(&hybrid_plus[c], Axis(0))?;
        completed.g_minus[c] = fft_axis_centered(&hybrid_minus[c], Axis(0))?;
    }
    let mut view = channels_of(&completed);
    project_data(&mut view, pair, 1.0);
    completed = pair_from_channels(&view, &completed);
    completed.filled = true;
    if completed
        .g_plus
        .iter()
        .chain(completed.g_minus.iter())
        .any(|g| g.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()))
    {
        return Err(GhostError::Diverged("non-finite completion".into()));
    }

    Ok(CompletionResult {
        completed,
        iters_used,
        final_residual,
        converged,
        objective_pre,
        objective,
    })
}

/// One ADMM completion over the full grid with the configured pencil.
fn admm_pair(pair: &VirtualEchoPair, cfg: &AlohaConfig) -> Result<CompletionResult> {
    let (nx, ny) = pair.shape();

    let max_mag = pair
        .g_plus
        .iter()
        .chain(pair.g_minus.iter())
        .flat_map(|g| g.iter())
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    if max_mag == 0.0 {
        return Err(GhostError::InvalidConfig(
            "measured data is identically zero".into(),
        ));
    }
    let scale = 1.0 / max_mag;
    let mu = cfg.mu;

    // Parity-filled start, normalized to unit max magnitude.
    let mut z = channels_of(&parity_filled_pair(pair));
    for g in &mut z.grids {
        g.mapv_inplace(|v| v * scale);
    }

    let mut h_z = block_of(&z, pair, cfg.pencil)?;
    let (m_rows, n_cols) = h_z.dim();
    let weights = hankel_weights2(cfg.pencil, nx, ny);

    let rank_est = match cfg.target_rank_est {
        Some(r) => r,
        None => {
            let blk = HankelBlock {
                matrix: h_z.clone(),
                pencil: cfg.pencil,
                coils: pair.coils(),
            };
            estimate_rank(&blk, cfg.rank_energy)?.max(1)
        }
    };
    let r = cfg
        .factor_rank
        .unwrap_or(2 * rank_est)
        .clamp(2, m_rows.min(n_cols));

    // Cadzow warm-up: a few rounds of rank truncation, adjoint averaging,
    // and data consistency pull the start into the basin of the consistent
    // low-rank completion before the ADMM iterations begin.
    for _ in 0..cfg.warmup_iters {
        let (uw, sw, vw) = if m_rows.min(n_cols) <= 128 {
            svd_exact(&h_z)
        } else {
            svd_randomized(&h_z, r, 8, 2, cfg.seed)
        };
        let kk = r.min(sw.len());
        let mut us = Array2::zeros((m_rows, kk));
        for j in 0..kk {
            for i in 0..m_rows {
                us[[i, j]] = uw[[i, j]] * sw[j];
            }
        }
        let vk = vw.slice(ndarray::s![.., ..kk]).to_owned();
        let low = cgemm(Op::N, &us, Op::H, &vk);
        let d = cfg.pencil.d();
        for ch in 0..2 * pair.coils() {
            let sub = low.slice(ndarray::s![.., ch * d..(ch + 1) * d]).to_owned();
            let mut grid = hankel_adjoint2(&sub, cfg.pencil, nx, ny)?;
            for ((x, y), val) in grid.indexed_iter_mut() {
                *val /= weights[[x, y]];
            }
            z.grids[ch] = grid;
        }
        project_data(&mut z, pair, scale);
        h_z = block_of(&z, pair, cfg.pencil)?;
    }

    let (u0, s0, v0) = if m_rows.min(n_cols) <= 128 {
        svd_exact(&h_z)
    } else {
        svd_randomized(&h_z, r, 8, 2, cfg.seed)
    };
    let k = r.min(s0.len());
    let mut u = Array2::zeros((m_rows, r));
    let mut v = Array2::zeros((n_cols, r));
    for j in 0..k {
        let s_sqrt = s0[j].max(0.0).sqrt();
        for i in 0..m_rows {
            u[[i, j]] = u0[[i, j]] * s_sqrt;
        }
        for i in 0..n_cols {
            v[[i, j]] = v0[[i, j]] * s_sqrt;
        }
    }

    let mut gamma: Array2<Complex64> = Array2::zeros((m_rows, n_cols));
    let mut objective_pre = Vec::with_capacity(cfg.max_iters);
    let mut objective = Vec::with_capacity(cfg.max_iters);
    let mut prev_residual = f64::INFINITY;
    let mut growth_streak = 0usize;
    let mut converged = false;
    let mut iters_used = 0;
    let mut final_residual = f64::NAN;
    let h_scale = frobenius_norm(&h_z).max(1e-300);

    // Augmented Lagrangian at fixed dual (scaled form).
    let al_value = |u: &Array2<Complex64>,
                    v: &Array2<Complex64>,
                    h_z: &Array2<Complex64>,
                    p: &Array2<Complex64>,
                    gamma: &Array2<Complex64>| {
        let fro_u = frobenius_norm(u);
        let fro_v = frobenius_norm(v);
        let aug = frobenius_norm(&(&(h_z - p) + gamma));
        let gam = frobenius_norm(gamma);
        0.5 * (fro_u * fro_u + fro_v * fro_v) + 0.5 * mu * (aug * aug - gam * gam)
    };

    let mut p = cgemm(Op::N, &u, Op::H, &v);

    for iter in 0..cfg.max_iters {
        iters_used = iter + 1;
        objective_pre.push(al_value(&u, &v, &h_z, &p, &gamma));

        // Factor updates against B = H(Z) + Gamma.
        let b = &h_z + &gamma;
        let gram_v = cgemm(Op::H, &v, Op::N, &v);
        let bv = cgemm(Op::N, &b, Op::N, &v);
        u = solve_regularized_gram(&bv.mapv(|c| c * mu), &gram_v, mu);
        let gram_u = cgemm(Op::H, &u, Op::N, &u);
        let bhu = cgemm(Op::H, &b, Op::N, &u);
        v = solve_regularized_gram(&bhu.mapv(|c| c * mu), &gram_u, mu);

        // Hankel-consistent grids via weighted adjoint averaging, then the
        // hard data-consistency overwrite.
        p = cgemm(Op::N, &u, Op::H, &v);
        let target = &p - &gamma;
        let mut znew = ChannelView {
            grids: Vec::with_capacity(2 * pair.coils()),
        };
        let d = cfg.pencil.d();
        for ch in 0..2 * pair.coils() {
            let sub = target.slice(ndarray::s![.., ch * d..(ch + 1) * d]).to_owned();
            let mut grid = hankel_adjoint2(&sub, cfg.pencil, nx, ny)?;
            for ((x, y), val) in grid.indexed_iter_mut() {
                *val /= weights[[x, y]];
            }
            znew.grids.push(grid);
        }
        project_data(&mut znew, pair, scale);

        // Relative iterate change for the stopping rule.
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, bgrid) in znew.grids.iter().zip(&z.grids) {
            for (p_new, p_old) in a.iter().zip(bgrid.iter()) {
                num += (p_new - p_old).norm_sqr();
                den += p_old.norm_sqr();
            }
        }
        let rel_change = (num / den.max(1e-300)).sqrt();

        z = znew;
        h_z = block_of(&z, pair, cfg.pencil)?;
        let mismatch = &h_z - &p;
        let residual = frobenius_norm(&mismatch) / h_scale;
        final_residual = residual;

        // Primal sweep complete: the AL at the still-current dual must not
        // have increased.
        objective.push(al_value(&u, &v, &h_z, &p, &gamma));

        // Dual ascent.
        gamma = &gamma + &mismatch;

        if !residual.is_finite() {
            return Err(GhostError::Diverged(format!(
                "non-finite residual at iteration {iters_used}"
            )));
        }
        if residual > prev_residual * (1.0 + 1e-3) {
            growth_streak += 1;
            if growth_streak >= 10 {
                return Err(GhostError::Diverged(format!(
                    "primal residual grew for {growth_streak} consecutive iterations \
                     (residual {residual:.3e})"
                )));
            }
        } else {
            growth_streak = 0;
        }
        prev_residual = residual;

        if rel_change < cfg.tol {
            converged = true;
            break;
        }
    }

    // Rescale and restore the measured samples bit-exactly.
    let inv = max_mag;
    for g in &mut z.grids {
        g.mapv_inplace(|v| v * inv);
    }
    project_data(&mut z, pair, 1.0);
    let mut completed = pair_from_channels(&z, pair);
    completed.filled = true;
    if completed
        .g_plus
        .iter()
        .chain(completed.g_minus.iter())
        .any(|g| g.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()))
    {
        return Err(GhostError::Diverged("non-finite completion".into()));
    }

    Ok(CompletionResult {
        completed,
        iters_used,
        final_residual,
        converged,
        objective_pre,
        objective,
    })
}

/// Gate thresholds standing in for the visual inspection of completions.
#[derive(Debug, Clone, Copy)]
pub struct GateThresholds {
    pub gsr_max: f64,
    pub res_max: f64,
}

impl Default for GateThresholds {
    fn default() -> Self {
        GateThresholds {
            gsr_max: 0.05,
            res_max: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    Accept,
    Reject,
}

/// Accept a completion for the training corpus only if it converged, its
/// ghost level is low, and the factorization residual is small.
pub fn label_quality_gate(
    result: &CompletionResult,
    roi: &RoiSpec,
    thresholds: &GateThresholds,
) -> Result<GateDecision> {
    if !result.converged {
        return Ok(GateDecision::Reject);
    }
    if !result.final_residual.is_finite() || result.final_residual >= thresholds.res_max {
        return Ok(GateDecision::Reject);
    }
    let sos = recon_sos(&result.completed)?;
    let g = gsr(&sos, roi)?;
    Ok(if g < thresholds.gsr_max {
        GateDecision::Accept
    } else {
        GateDecision::Reject
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{sampling_schedule, VirtualEchoPair};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Pair of coupled 4-exponential signals measured on alternating lines:
    /// the even channel on even samples, the odd channel on odd samples.
    /// Frequencies are drawn from a jittered grid and redrawn until no
    /// mode sits within 0.04 cycles of another mode's half-rate alias,
    /// which would make the completion problem itself degenerate.
    pub(crate) fn exponential_pair_trial(
        seed: u64,
        l: usize,
    ) -> (VirtualEchoPair, Vec<Complex64>, Vec<Complex64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = 4;
        let freqs = loop {
            let cand: Vec<f64> = (0..modes)
                .map(|k| (k as f64 + 0.2 + 0.6 * rng.gen_range(0.0..1.0)) / modes as f64)
                .collect();
            let alias_ok = (0..modes).all(|j| {
                (0..modes).all(|k| {
                    let d = (cand[j] + 0.5 - cand[k]).rem_euclid(1.0);
                    d.min(1.0 - d) >= 0.04
                })
            });
            if alias_ok {
                break cand;
            }
        };
        let amps_plus: Vec<Complex64> = (0..modes)
            .map(|_| {
                Complex64::from_polar(
                    rng.gen_range(0.7..1.3),
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                )
            })
            .collect();
        let amps_minus: Vec<Complex64> = amps_plus
            .iter()
            .map(|a| {
                let twist = rng.gen_range(0.3..0.7)
                    * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                a * Complex64::from_polar(1.0, twist)
            })
            .collect();
        let eval = |amps: &[Complex64], n: usize| -> Complex64 {
            (0..modes)
                .map(|k| {
                    amps[k]
                        * Complex64::from_polar(
                            1.0,
                            2.0 * std::f64::consts::PI * freqs[k] * n as f64,
                        )
                })
                .sum()
        };
        let truth_plus: Vec<Complex64> = (0..l).map(|n| eval(&amps_plus, n)).collect();
        let truth_minus: Vec<Complex64> = (0..l).map(|n| eval(&amps_minus, n)).collect();

        let (mask_even, mask_odd) = sampling_schedule(l, 1);
        let mut g_plus = Array2::zeros((1, l));
        let mut g_minus = Array2::zeros((1, l));
        for n in 0..l {
            if n % 2 == 0 {
                g_plus[[0, n]] = truth_plus[n];
            } else {
                g_minus[[0, n]] = truth_minus[n];
            }
        }
        (
            VirtualEchoPair {
                g_plus: vec![g_plus],
                g_minus: vec![g_minus],
                mask_even,
                mask_odd,
                filled: false,
            },
            truth_plus,
            truth_minus,
        )
    }

    fn recovery_error(result: &CompletionResult, tp: &[Complex64], tm: &[Complex64]) -> f64 {
        let l = tp.len();
        let mut num = 0.0;
        let mut den = 0.0;
        for n in 0..l {
            num += (result.completed.g_plus[0][[0, n]] - tp[n]).norm_sqr();
            num += (result.completed.g_minus[0][[0, n]] - tm[n]).norm_sqr();
            den += tp[n].norm_sqr() + tm[n].norm_sqr();
        }
        (num / den).sqrt()
    }

    fn trial_config() -> AlohaConfig {
        AlohaConfig {
            pencil: Pencil::new(1, 16),
            factor_rank: Some(4),
            mu: 3.0,
            max_iters: 2500,
            tol: 1e-11,
            ..AlohaConfig::default()
        }
    }

    #[test]
    fn recovers_exponential_pair_from_alternating_erasure() {
        let (pair, tp, tm) = exponential_pair_trial(3, 64);
        let result = aloha_complete(&pair, &trial_config()).unwrap();
        let err = recovery_error(&result, &tp, &tm);
        assert!(err < 1e-5, "recovery error {err}");
    }

    #[test]
    fn fully_filled_input_returns_immediately() {
        let (mut pair, _, _) = exponential_pair_trial(4, 32);
        pair.filled = true;
        let cfg = trial_config();
        let result = aloha_complete(&pair, &cfg).unwrap();
        assert!(result.iters_used <= 1);
        assert!(result.converged);
        for c in 0..1 {
            assert_eq!(result.completed.g_plus[c], pair.g_plus[c]);
            assert_eq!(result.completed.g_minus[c], pair.g_minus[c]);
        }
    }

    #[test]
    fn empty_parity_mask_rejected() {
        let (mut pair, _, _) = exponential_pair_trial(5, 32);
        for b in pair.mask_odd.lines.iter_mut() {
            *b = false;
        }
        assert!(matches!(
            aloha_complete(&pair, &trial_config()),
            Err(GhostError::EmptyMask("odd"))
        ));
    }

    #[test]
    fn data_consistency_is_bit_exact() {
        let (pair, _, _) = exponential_pair_trial(6, 64);
        let result = aloha_complete(&pair, &trial_config()).unwrap();
        for n in 0..64 {
            if n % 2 == 0 {
                assert_eq!(result.completed.g_plus[0][[0, n]], pair.g_plus[0][[0, n]]);
            } else {
                assert_eq!(result.completed.g_minus[0][[0, n]], pair.g_minus[0][[0, n]]);
            }
        }
    }

    #[test]
    fn objective_is_monotone_within_slack() {
        let (pair, _, _) = exponential_pair_trial(7, 64);
        let result = aloha_complete(&pair, &trial_config()).unwrap();
        assert_eq!(result.objective.len(), result.objective_pre.len());
        assert!(!result.objective.is_empty());
        // Every primal sweep lowers the augmented Lagrangian at its dual.
        for (pre, post) in result.objective_pre.iter().zip(&result.objective) {
            assert!(
                post <= &(pre + 1e-8 * pre.abs().max(1.0)),
                "objective rose within an iteration: {pre} -> {post}"
            );
        }
    }

    #[test]
    fn scaling_equivariance() {
        let (pair, _, _) = exponential_pair_trial(8, 64);
        let base = aloha_complete(&pair, &trial_config()).unwrap();
        let c = Complex64::new(2.0, -1.5);
        let mut scaled = pair.clone();
        for g in scaled.g_plus.iter_mut().chain(scaled.g_minus.iter_mut()) {
            g.mapv_inplace(|v| v * c);
        }
        let out = aloha_complete(&scaled, &trial_config()).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for ch in 0..1 {
            for n in 0..64 {
                num += (out.completed.g_plus[ch][[0, n]]
                    - base.completed.g_plus[ch][[0, n]] * c)
                    .norm_sqr();
                num += (out.completed.g_minus[ch][[0, n]]
                    - base.completed.g_minus[ch][[0, n]] * c)
                    .norm_sqr();
                den += (base.completed.g_plus[ch][[0, n]] * c).norm_sqr()
                    + (base.completed.g_minus[ch][[0, n]] * c).norm_sqr();
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-8, "scaling equivariance violated: {rel}");
    }

    #[test]
    fn rank_estimates_match_oracles() {
        // Rank-1 single-exponential block.
        let l = 32;
        let v: Vec<Complex64> = (0..l)
            .map(|n| Complex64::from_polar(1.0, 0.31 * n as f64))
            .collect();
        let (me, mo) = sampling_schedule(l, 1);
        let pair = VirtualEchoPair {
            g_plus: vec![Array2::from_shape_vec((1, l), v.clone()).unwrap()],
            g_minus: vec![Array2::from_shape_vec((1, l), v.clone()).unwrap()],
            mask_even: me.clone(),
            mask_odd: mo.clone(),
            filled: true,
        };
        // Single-channel block: lift just g+ by building a one-coil pair
        // with both channels equal; [H | H] has the rank of H.
        let block = build_block(&pair, Pencil::new(1, 8)).unwrap();
        assert_eq!(estimate_rank(&block, 0.99).unwrap(), 1);
        assert_eq!(estimate_rank(&block, 0.999).unwrap(), 1);

        // Zero matrix.
        let zero_pair = VirtualEchoPair {
            g_plus: vec![Array2::zeros((1, l))],
            g_minus: vec![Array2::zeros((1, l))],
            mask_even: me,
            mask_odd: mo,
            filled: true,
        };
        let zero_block = build_block(&zero_pair, Pencil::new(1, 8)).unwrap();
        assert_eq!(estimate_rank(&zero_block, 0.9).unwrap(), 0);
    }

    #[test]
    fn duplicated_channels_add_no_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = 48;
        let v: Vec<Complex64> = (0..l)
            .map(|n| {
                (0..3)
                    .map(|k| {
                        Complex64::from_polar(
                            1.0 + k as f64 * 0.3,
                            (0.2 + 0.25 * k as f64) * n as f64 + rng.gen_range(0.0..1e-9),
                        )
                    })
                    .sum()
            })
            .collect();
        let (me, mo) = sampling_schedule(l, 1);
        let pair = VirtualEchoPair {
            g_plus: vec![Array2::from_shape_vec((1, l), v.clone()).unwrap()],
            g_minus: vec![Array2::from_shape_vec((1, l), v).unwrap()],
            mask_even: me,
            mask_odd: mo,
            filled: true,
        };
        let block = build_block(&pair, Pencil::new(1, 12)).unwrap();
        // [H | H] and H alone share the same rank.
        let single = crate::hankel::hankel_lift2(&pair.g_plus[0], Pencil::new(1, 12)).unwrap();
        let single_block = HankelBlock {
            matrix: single,
            pencil: Pencil::new(1, 12),
            coils: 1,
        };
        assert_eq!(
            estimate_rank(&block, 0.999).unwrap(),
            estimate_rank(&single_block, 0.999).unwrap()
        );
    }
}

