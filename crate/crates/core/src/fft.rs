//! Centered, orthonormal Fourier transforms on 2-D complex grids.
//!
//! The DC sample sits at `(nx/2, ny/2)` and both directions carry a
//! `1/sqrt(n)` scale, so `ifft2_centered(fft2_centered(x)) == x` and
//! Parseval holds exactly up to rounding.

use std::sync::Mutex;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{GhostError, Result};

/// Process-wide plan cache; rustfft plans are cheap to share and reuse.
static PLANS: Mutex<Option<PlanCache>> = Mutex::new(None);

struct PlanCache {
    planner: FftPlanner<f64>,
    fwd: HashMap<usize, Arc<dyn Fft<f64>>>,
    inv: HashMap<usize, Arc<dyn Fft<f64>>>,
}

fn with_plan<R>(n: usize, inverse: bool, f: impl FnOnce(&Arc<dyn Fft<f64>>) -> R) -> R {
    let mut guard = PLANS.lock().unwrap();
    let cache = guard.get_or_insert_with(|| PlanCache {
        planner: FftPlanner::new(),
        fwd: HashMap::new(),
        inv: HashMap::new(),
    });
    let cache = &mut *cache;
    let map = if inverse { &mut cache.inv } else { &mut cache.fwd };
    let plan = map
        .entry(n)
        .or_insert_with(|| {
            if inverse {
                cache.planner.plan_fft_inverse(n)
            } else {
                cache.planner.plan_fft_forward(n)
            }
        })
        .clone();
    drop(guard);
    f(&plan)
}

fn check_finite(grid: &Array2<Complex64>, ctx: &'static str) -> Result<()> {
    if grid.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(GhostError::NonFinite(ctx))
    }
}

/// In-place 1-D transform of every lane along `axis`, centered and orthonormal.
fn transform_axis(grid: &mut Array2<Complex64>, axis: Axis, inverse: bool) {
    let n = grid.len_of(axis);
    if n <= 1 {
        return;
    }
    let scale = 1.0 / (n as f64).sqrt();
    let half = n / 2;
    with_plan(n, inverse, |plan| {
        let mut buf = vec![Complex64::default(); n];
        for mut lane in grid.lanes_mut(axis) {
            // ifftshift: move the centered DC to index 0.
            for (i, b) in buf.iter_mut().enumerate() {
                *b = lane[(i + half) % n];
            }
            plan.process(&mut buf);
            // fftshift back and scale.
            for (i, b) in buf.iter().enumerate() {
                lane[(i + half) % n] = *b * scale;
            }
        }
    });
}

/// Centered orthonormal 2-D FFT (image -> k-space).
pub fn fft2_centered(img: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    check_finite(img, "fft2_centered input")?;
    let mut out = img.clone();
    transform_axis(&mut out, Axis(0), false);
    transform_axis(&mut out, Axis(1), false);
    Ok(out)
}

/// Centered orthonormal 2-D inverse FFT (k-space -> image).
pub fn ifft2_centered(k: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    check_finite(k, "ifft2_centered input")?;
    let mut out = k.clone();
    transform_axis(&mut out, Axis(0), true);
    transform_axis(&mut out, Axis(1), true);
    Ok(out)
}

/// Centered orthonormal 1-D FFT along the given axis only.
pub fn fft_axis_centered(grid: &Array2<Complex64>, axis: Axis) -> Result<Array2<Complex64>> {
    check_finite(grid, "fft_axis_centered input")?;
    let mut out = grid.clone();
    transform_axis(&mut out, axis, false);
    Ok(out)
}

/// Centered orthonormal 1-D inverse FFT along the given axis only.
pub fn ifft_axis_centered(grid: &Array2<Complex64>, axis: Axis) -> Result<Array2<Complex64>> {
    check_finite(grid, "ifft_axis_centered input")?;
    let mut out = grid.clone();
    transform_axis(&mut out, axis, true);
    Ok(out)
}

/// Squared Frobenius norm of a complex grid.
pub fn norm_sqr(grid: &Array2<Complex64>) -> f64 {
    grid.iter().map(|c| c.norm_sqr()).sum()
}
