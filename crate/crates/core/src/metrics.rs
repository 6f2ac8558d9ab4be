//! Image reconstruction from completed virtual pairs and the quantitative
//! evaluation used throughout: ghost-to-signal ratio (GSR), its temporal
//! variant, and NRMSE.
//!
//! GSR uses mean magnitudes over the two ROI boxes (robust to single-pixel
//! outliers); every report records that convention.

use ndarray::Array2;

use crate::error::{GhostError, Result};
use crate::fft::ifft2_centered;
use crate::phantom::Phantom;
use crate::volume::VirtualEchoPair;

/// Axis-aligned ROI box. `row` indexes the phase-encode axis (the ghost
/// displacement direction), `col` the readout axis. Boxes may wrap around
/// the phase-encode axis, since the half-FOV ghost replica is periodic;
/// they never wrap along readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoiBox {
    pub row: usize,
    pub col: usize,
    pub h: usize,
    pub w: usize,
}

impl RoiBox {
    /// Phase-encode indices covered, wrapped modulo ny.
    fn rows(&self, ny: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.h).map(move |dy| (self.row + dy) % ny)
    }

    fn inside(&self, ny: usize, nx: usize) -> bool {
        self.h > 0 && self.w > 0 && self.h <= ny && self.row < ny && self.col + self.w <= nx
    }

    fn overlaps(&self, other: &RoiBox, ny: usize) -> bool {
        let cols = self.col < other.col + other.w && other.col < self.col + self.w;
        if !cols {
            return false;
        }
        let mine: std::collections::HashSet<usize> = self.rows(ny).collect();
        other.rows(ny).any(|r| mine.contains(&r))
    }
}

/// Signal box inside the object, ghost box in background at half-FOV offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoiSpec {
    pub signal_box: RoiBox,
    pub ghost_box: RoiBox,
}

/// The GSR statistic convention recorded in every report.
pub const GSR_STATISTIC: &str = "mean-magnitude";

#[derive(Debug, Clone)]
pub struct GsrReport {
    pub values: Vec<f64>,
    pub method: String,
    pub roi: RoiSpec,
    pub statistic: &'static str,
}

/// Default ROI placement: signal box covers the central 25% (half extent
/// per axis) of the phantom support, and the ghost box is the same box
/// shifted by half the FOV along the phase-encode axis (wrapping), which
/// the support margins guarantee to be background.
pub fn default_roi(phantom: &Phantom) -> Result<RoiSpec> {
    let sup = phantom.support();
    let (nx, ny) = sup.dim();
    let mut x_lo = nx;
    let mut x_hi = 0;
    let mut y_lo = ny;
    let mut y_hi = 0;
    for ((x, y), &s) in sup.indexed_iter() {
        if s {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
    }
    if x_lo > x_hi {
        return Err(GhostError::InvalidConfig("phantom support is empty".into()));
    }
    let w_sup = x_hi + 1 - x_lo;
    let h_sup = y_hi + 1 - y_lo;
    let h = (h_sup / 2).max(1);
    let w = (w_sup / 2).max(1);
    let row = y_lo + (h_sup - h) / 2;
    let col = x_lo + (w_sup - w) / 2;
    let signal_box = RoiBox { row, col, h, w };
    let ghost_box = RoiBox {
        row: (row + ny / 2) % ny,
        ..signal_box
    };
    if signal_box.overlaps(&ghost_box, ny) {
        return Err(GhostError::InvalidConfig(
            "signal and ghost boxes overlap".into(),
        ));
    }
    for y in ghost_box.rows(ny) {
        for x in ghost_box.col..ghost_box.col + ghost_box.w {
            if sup[[x, y]] {
                return Err(GhostError::InvalidConfig(
                    "ghost box intersects phantom support".into(),
                ));
            }
        }
    }
    Ok(RoiSpec {
        signal_box,
        ghost_box,
    })
}

/// Sum-of-squares combine of a fully interpolated pair: inverse FT per
/// coil and parity, then the pointwise root of summed squared magnitudes.
pub fn recon_sos(pair: &VirtualEchoPair) -> Result<Array2<f64>> {
    if !pair.filled {
        return Err(GhostError::InvalidConfig(
            "recon_sos requires a fully filled pair".into(),
        ));
    }
    let (nx, ny) = pair.shape();
    let mut acc = Array2::<f64>::zeros((nx, ny));
    for grid in pair.g_plus.iter().chain(pair.g_minus.iter()) {
        let img = ifft2_centered(grid)?;
        for ((x, y), v) in img.indexed_iter() {
            acc[[x, y]] += v.norm_sqr();
        }
    }
    Ok(acc.mapv(f64::sqrt))
}

fn box_mean(image: &Array2<f64>, b: &RoiBox) -> f64 {
    let ny = image.dim().1;
    let mut sum = 0.0;
    for y in b.rows(ny) {
        for x in b.col..b.col + b.w {
            sum += image[[x, y]].abs();
        }
    }
    sum / (b.h * b.w) as f64
}

/// Ghost-to-signal ratio: mean ghost-box magnitude over mean signal-box
/// magnitude.
pub fn gsr(image: &Array2<f64>, roi: &RoiSpec) -> Result<f64> {
    let (nx, ny) = image.dim();
    if !roi.signal_box.inside(ny, nx) || !roi.ghost_box.inside(ny, nx) {
        return Err(GhostError::ShapeMismatch(
            "ROI box extends outside the image".into(),
        ));
    }
    let signal = box_mean(image, &roi.signal_box);
    if signal <= 0.0 {
        return Err(GhostError::InvalidConfig(
            "signal box mean is zero".into(),
        ));
    }
    Ok(box_mean(image, &roi.ghost_box) / signal)
}

/// GSR per frame.
pub fn temporal_gsr(images: &[Array2<f64>], roi: &RoiSpec, method: &str) -> Result<GsrReport> {
    let values = images
        .iter()
        .map(|img| gsr(img, roi))
        .collect::<Result<Vec<_>>>()?;
    Ok(GsrReport {
        values,
        method: method.to_string(),
        roi: *roi,
        statistic: GSR_STATISTIC,
    })
}

/// Normalized root-mean-square error ||a - b|| / ||b||.
pub fn nrmse(image: &Array2<f64>, reference: &Array2<f64>) -> Result<f64> {
    if image.dim() != reference.dim() {
        return Err(GhostError::ShapeMismatch(format!(
            "nrmse: {:?} vs {:?}",
            image.dim(),
            reference.dim()
        )));
    }
    let den: f64 = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(GhostError::InvalidConfig("reference norm is zero".into()));
    }
    let num: f64 = image
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / den)
}

/// One row of a method comparison table.
#[derive(Debug, Clone)]
pub struct MethodRow {
    pub method: String,
    pub gsr: f64,
    pub nrmse: f64,
    pub wall_ms: f64,
}

/// Render the comparison table as CSV, one row per method, with a header
/// baking in the GSR convention.
pub fn method_table_csv(rows: &[MethodRow]) -> String {
    let mut out = format!("# gsr_statistic: {GSR_STATISTIC}\nmethod,gsr,nrmse,wall_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.9e},{:.9e},{:.3}\n",
            r.method, r.gsr, r.nrmse, r.wall_ms
        ));
    }
    out
}
