//! GRAPPA k-space interpolation for the accelerated hybrid correction
//! path: kernels are calibrated on a fully sampled ACS band and fill the
//! ky lines the acceleration schedule skipped.
//!
//! Besides the centered kernels, one-sided variants are fitted for the
//! grid edges, where the symmetric source footprint would leave the FOV.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{GhostError, Result};
use crate::volume::{sampling_schedule, KSpaceVolume};

/// Kernel tap geometry. Defaults to 4 source ky lines x 5 kx taps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrappaGeometry {
    pub src_lines: usize,
    pub kx_taps: usize,
}

impl Default for GrappaGeometry {
    fn default() -> Self {
        GrappaGeometry {
            src_lines: 4,
            kx_taps: 5,
        }
    }
}

/// Which side of the missing line the source lines may come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelSide {
    Both,
    Low,
    High,
}

/// Fitted weights for one missing-line offset class and side.
#[derive(Debug, Clone)]
pub struct OffsetKernel {
    /// Missing ky offset within the sampling period.
    pub offset: usize,
    pub side: KernelSide,
    /// Source line offsets relative to the missing line.
    pub src_dky: Vec<isize>,
    /// (target coil) x (source coil * src_line * kx_tap) weights.
    pub weights: Array2<Complex64>,
}

#[derive(Debug, Clone)]
pub struct GrappaKernel {
    pub kernels: Vec<OffsetKernel>,
    pub geometry: GrappaGeometry,
    pub accel: usize,
    pub coils: usize,
    /// Set when the calibration needed extra regularization or has too few
    /// coils to disambiguate the interpolation.
    pub ill_posed: bool,
}

/// ky sampling period of the parity-aligned schedule.
fn period(accel: usize) -> usize {
    2 * accel
}

fn acquired_offset(off: usize) -> bool {
    off <= 1
}

/// Nearest acquired line offsets for a missing offset, deterministic order.
fn source_offsets(missing: usize, accel: usize, count: usize, side: KernelSide) -> Vec<isize> {
    let t = period(accel) as isize;
    let m = missing as isize;
    let mut cands: Vec<isize> = Vec::new();
    for k in -4..=4i64 {
        for base in [0i64, 1] {
            let d = base as isize + k as isize * t - m;
            match side {
                KernelSide::Both => cands.push(d),
                KernelSide::Low if d < 0 => cands.push(d),
                KernelSide::High if d > 0 => cands.push(d),
                _ => {}
            }
        }
    }
    cands.sort_by_key(|&d| (d.abs(), d));
    cands.dedup();
    cands.truncate(count);
    cands.sort();
    cands
}

struct FitOutcome {
    weights: Array2<Complex64>,
    ill_posed: bool,
}

/// Least-squares fit of one kernel over the ACS band with a
/// trace-normalized ridge.
fn fit_kernel(
    acs: &KSpaceVolume,
    src_dky: &[isize],
    geometry: &GrappaGeometry,
) -> Result<FitOutcome> {
    let (nx, ny, coils, _frames) = acs.data.dim();
    let tap_half = geometry.kx_taps / 2;
    let n_src = coils * src_dky.len() * geometry.kx_taps;
    let span_lo = (-src_dky.iter().min().unwrap()).max(0);
    let span_hi = (*src_dky.iter().max().unwrap()).max(0);
    if (ny as isize) < span_hi + span_lo + 1 {
        return Err(GhostError::InvalidConfig(format!(
            "ACS has {ny} lines; kernel footprint needs {}",
            span_hi + span_lo + 1
        )));
    }

    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    let mut targets: Vec<Vec<Complex64>> = vec![Vec::new(); coils];
    for ky in 0..ny as isize {
        if !src_dky.iter().all(|&d| ky + d >= 0 && ky + d < ny as isize) {
            continue;
        }
        for kx in tap_half..nx - tap_half {
            let mut row = Vec::with_capacity(n_src);
            for cs in 0..coils {
                for &d in src_dky {
                    for tap in 0..geometry.kx_taps {
                        let xx = kx + tap - tap_half;
                        row.push(acs.data[[xx, (ky + d) as usize, cs, 0]]);
                    }
                }
            }
            rows.push(row);
            for (ct, tgt) in targets.iter_mut().enumerate() {
                tgt.push(acs.data[[kx, ky as usize, ct, 0]]);
            }
        }
    }
    let mut ill_posed = rows.len() < n_src;

    let n_eq = rows.len();
    let a = DMatrix::from_fn(n_eq, n_src, |i, j| rows[i][j]);
    let ah = a.adjoint();
    let gram = &ah * &a;
    let trace: f64 = (0..n_src).map(|i| gram[(i, i)].re).sum();
    if trace <= 0.0 {
        return Err(GhostError::IllPosed(
            "ACS carries no signal for calibration".into(),
        ));
    }
    let mut lambda = 1e-4 * trace / n_src as f64;
    let chol = loop {
        let mut reg = gram.clone();
        for i in 0..n_src {
            reg[(i, i)] += Complex64::new(lambda, 0.0);
        }
        match Cholesky::new(reg) {
            Some(c) => break c,
            None => {
                ill_posed = true;
                lambda *= 100.0;
                if lambda > trace {
                    return Err(GhostError::IllPosed(
                        "calibration Gram matrix is not positive definite".into(),
                    ));
                }
            }
        }
    };

    let mut weights = Array2::zeros((coils, n_src));
    for ct in 0..coils {
        let b = DVector::from_fn(n_eq, |i, _| targets[ct][i]);
        let rhs = &ah * b;
        let w = chol.solve(&rhs);
        for j in 0..n_src {
            weights[[ct, j]] = w[j];
        }
    }
    Ok(FitOutcome { weights, ill_posed })
}

/// Fit GRAPPA weights from a fully sampled ACS volume: a centered kernel
/// per missing offset class plus one-sided edge variants.
pub fn grappa_calibrate(
    acs: &KSpaceVolume,
    accel: usize,
    geometry: GrappaGeometry,
) -> Result<GrappaKernel> {
    if accel < 1 {
        return Err(GhostError::InvalidConfig("accel must be >= 1".into()));
    }
    let coils = acs.data.dim().2;
    let t = period(accel);
    let mut ill_posed = coils == 1 && accel > 1;
    let mut kernels = Vec::new();
    if accel == 1 {
        return Ok(GrappaKernel {
            kernels,
            geometry,
            accel,
            coils,
            ill_posed: false,
        });
    }

    for missing in 0..t {
        if acquired_offset(missing) {
            continue;
        }
        for side in [KernelSide::Both, KernelSide::Low, KernelSide::High] {
            let src_dky = source_offsets(missing, accel, geometry.src_lines, side);
            if src_dky.len() < geometry.src_lines {
                continue;
            }
            let fit = fit_kernel(acs, &src_dky, &geometry)?;
            ill_posed |= fit.ill_posed;
            kernels.push(OffsetKernel {
                offset: missing,
                side,
                src_dky,
                weights: fit.weights,
            });
        }
    }

    Ok(GrappaKernel {
        kernels,
        geometry,
        accel,
        coils,
        ill_posed,
    })
}

fn footprint_fits(src_dky: &[isize], ky: usize, ny: usize) -> bool {
    src_dky
        .iter()
        .all(|&d| ky as isize + d >= 0 && ky as isize + d < ny as isize)
}

/// Fill every missing ky line of an accelerated volume. Acquired lines are
/// preserved bit-exactly. Near the grid edges the one-sided kernels take
/// over; kx taps outside the grid read as zero.
pub fn grappa_apply(vol: &KSpaceVolume, kernel: &GrappaKernel) -> Result<KSpaceVolume> {
    let (nx, ny, coils, frames) = vol.data.dim();
    if coils != kernel.coils {
        return Err(GhostError::ShapeMismatch(format!(
            "kernel fitted for {} coils, volume has {coils}",
            kernel.coils
        )));
    }
    if kernel.accel == 1 {
        return Ok(vol.clone());
    }
    let t = period(kernel.accel);
    let tap_half = kernel.geometry.kx_taps / 2;
    let (mask_even, mask_odd) = sampling_schedule(ny, kernel.accel);
    let mut out = vol.clone();
    out.meta.accel = 1;
    for f in 0..frames {
        for ky in 0..ny {
            if mask_even.lines[ky] || mask_odd.lines[ky] {
                continue;
            }
            let class = ky % t;
            let for_class = |side: KernelSide| {
                kernel
                    .kernels
                    .iter()
                    .find(|k| k.offset == class && k.side == side)
            };
            // Prefer the centered kernel, fall back to a one-sided one when
            // the footprint leaves the grid.
            let picked = [KernelSide::Both, KernelSide::Low, KernelSide::High]
                .into_iter()
                .filter_map(for_class)
                .find(|k| footprint_fits(&k.src_dky, ky, ny))
                .or_else(|| for_class(KernelSide::Both))
                .ok_or_else(|| {
                    GhostError::InvalidConfig(format!("no kernel for offset {class}"))
                })?;
            for kx in 0..nx {
                for ct in 0..coils {
                    let mut acc = Complex64::new(0.0, 0.0);
                    let mut j = 0;
                    for cs in 0..coils {
                        for &d in &picked.src_dky {
                            let yy = ky as isize + d;
                            for tap in 0..kernel.geometry.kx_taps {
                                let xx = kx as isize + tap as isize - tap_half as isize;
                                if yy >= 0
                                    && (yy as usize) < ny
                                    && xx >= 0
                                    && (xx as usize) < nx
                                {
                                    acc += picked.weights[[ct, j]]
                                        * vol.data[[xx as usize, yy as usize, cs, f]];
                                }
                                j += 1;
                            }
                        }
                    }
                    out.data[[kx, ky, ct, f]] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Extract a centered, fully sampled ACS band of `lines` ky lines from a
/// fully sampled volume, aligned to the sampling period of `accel`.
pub fn central_acs(full: &KSpaceVolume, lines: usize, accel: usize) -> Result<KSpaceVolume> {
    let (nx, ny, coils, frames) = full.data.dim();
    if full.meta.accel != 1 {
        return Err(GhostError::InvalidConfig(
            "ACS extraction needs a fully sampled volume".into(),
        ));
    }
    if lines < 4 || lines > ny {
        return Err(GhostError::InvalidConfig(format!(
            "ACS band of {lines} lines out of range"
        )));
    }
    let t = period(accel);
    let start = ((ny - lines) / 2 / t) * t;
    let mut data = ndarray::Array4::zeros((nx, lines, coils, frames));
    for f in 0..frames {
        for c in 0..coils {
            for ky in 0..lines {
                for kx in 0..nx {
                    data[[kx, ky, c, f]] = full.data[[kx, start + ky, c, f]];
                }
            }
        }
    }
    KSpaceVolume::new(data, full.meta.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::sos_of_volume;
    use crate::metrics::nrmse;
    use crate::phantom::{make_coils, make_phantom, PhantomKind};
    use crate::sim::{simulate_epi, PhaseErrorModel, SimOptions};
    use crate::volume::AcqMeta;

    fn ghost_free(accel: usize, coils: usize) -> KSpaceVolume {
        let phantom = make_phantom(PhantomKind::SheppLogan, 64, 64, 0).unwrap();
        let cs = make_coils(64, 64, coils, 0.6, 1).unwrap();
        simulate_epi(
            &phantom,
            &cs,
            &PhaseErrorModel::zero(),
            &AcqMeta {
                accel,
                ..AcqMeta::default()
            },
            &SimOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn r1_apply_is_identity() {
        let vol = ghost_free(1, 2);
        let acs = central_acs(&vol, 24, 1).unwrap();
        let kernel = grappa_calibrate(&acs, 1, GrappaGeometry::default()).unwrap();
        let out = grappa_apply(&vol, &kernel).unwrap();
        assert_eq!(out.data, vol.data);
    }

    #[test]
    fn source_offsets_bracket_missing_lines() {
        // Period-4 pattern acquires offsets {0, 1}; missing 2 sees 0,1,4,5.
        assert_eq!(
            source_offsets(2, 2, 4, KernelSide::Both),
            vec![-2, -1, 2, 3]
        );
        assert_eq!(
            source_offsets(3, 2, 4, KernelSide::Both),
            vec![-3, -2, 1, 2]
        );
        assert_eq!(
            source_offsets(2, 2, 4, KernelSide::Low),
            vec![-6, -5, -2, -1]
        );
        assert_eq!(
            source_offsets(3, 2, 4, KernelSide::High),
            vec![1, 2, 5, 6]
        );
    }

    #[test]
    fn r2_interpolation_is_accurate_with_eight_coils() {
        let full = ghost_free(1, 8);
        let fast = ghost_free(2, 8);
        let acs = central_acs(&full, 24, 2).unwrap();
        let kernel = grappa_calibrate(&acs, 2, GrappaGeometry::default()).unwrap();
        assert!(!kernel.ill_posed);
        let filled = grappa_apply(&fast, &kernel).unwrap();

        // Acquired lines preserved bit-exactly.
        let (me, mo) = sampling_schedule(64, 2);
        for ky in 0..64 {
            if me.lines[ky] || mo.lines[ky] {
                for kx in 0..64 {
                    for c in 0..8 {
                        assert_eq!(filled.data[[kx, ky, c, 0]], fast.data[[kx, ky, c, 0]]);
                    }
                }
            }
        }

        let got = sos_of_volume(&filled, 0).unwrap();
        let want = sos_of_volume(&full, 0).unwrap();
        let err = nrmse(&got, &want).unwrap();
        assert!(err < 0.05, "GRAPPA NRMSE = {err}");
    }

    #[test]
    fn single_coil_r2_is_flagged_ill_posed() {
        let full = ghost_free(1, 1);
        let acs = central_acs(&full, 24, 2).unwrap();
        let kernel = grappa_calibrate(&acs, 2, GrappaGeometry::default()).unwrap();
        assert!(kernel.ill_posed);
    }
}
