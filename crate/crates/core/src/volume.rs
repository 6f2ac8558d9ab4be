//! The k-space container shared by every stage of the pipeline, plus the
//! virtual even/odd splitting that turns one interleaved EPI acquisition
//! into a pair of half-sampled virtual acquisitions.

use ndarray::{Array2, Array4};
use num_complex::Complex64;

use crate::error::{GhostError, Result};

/// Echo parity. Even lines are the ones read under positive gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// How phase-encode lines map onto echo parity. `EvenPositive` is the
/// standard labeling: even ky index <=> positive-readout echo.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParityLabeling {
    EvenPositive,
    Unknown,
}

/// Acquisition metadata carried alongside the raw samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AcqMeta {
    pub te_ms: f64,
    pub esp_ms: f64,
    /// Readout gradient scale in Hz per k-unit.
    pub gamma_gx: f64,
    pub fov_mm: (f64, f64),
    /// Acceleration factor R >= 1.
    pub accel: usize,
    pub parity: ParityLabeling,
}

impl Default for AcqMeta {
    fn default() -> Self {
        AcqMeta {
            te_ms: 30.0,
            esp_ms: 0.5,
            gamma_gx: 1.0,
            fov_mm: (240.0, 240.0),
            accel: 1,
            parity: ParityLabeling::EvenPositive,
        }
    }
}

/// Complex 4-D sample grid (readout x phase-encode x coil x frame).
#[derive(Debug, Clone)]
pub struct KSpaceVolume {
    pub data: Array4<Complex64>,
    pub meta: AcqMeta,
}

impl KSpaceVolume {
    pub fn new(data: Array4<Complex64>, meta: AcqMeta) -> Result<Self> {
        let (nx, ny, _, _) = data.dim();
        if nx < 4 || ny < 4 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(GhostError::ShapeMismatch(format!(
                "grid {nx}x{ny} must be even-sized and at least 4x4"
            )));
        }
        if meta.accel < 1 {
            return Err(GhostError::InvalidConfig("accel must be >= 1".into()));
        }
        if !data.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(GhostError::NonFinite("KSpaceVolume"));
        }
        Ok(KSpaceVolume { data, meta })
    }

    pub fn nx(&self) -> usize {
        self.data.dim().0
    }
    pub fn ny(&self) -> usize {
        self.data.dim().1
    }
    pub fn coils(&self) -> usize {
        self.data.dim().2
    }
    pub fn frames(&self) -> usize {
        self.data.dim().3
    }

    /// One coil/frame slice as an owned 2-D grid.
    pub fn slice(&self, coil: usize, frame: usize) -> Array2<Complex64> {
        self.data
            .index_axis(ndarray::Axis(3), frame)
            .index_axis(ndarray::Axis(2), coil)
            .to_owned()
    }
}

/// Boolean line mask for one parity class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    pub lines: Vec<bool>,
    pub parity: Parity,
}

impl SamplingMask {
    pub fn count(&self) -> usize {
        self.lines.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Indices of the acquired lines.
    pub fn indices(&self) -> Vec<usize> {
        self.lines
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let want_rem = match self.parity {
            Parity::Even => 0,
            Parity::Odd => 1,
        };
        for (i, &b) in self.lines.iter().enumerate() {
            if b && i % 2 != want_rem {
                return Err(GhostError::InvalidConfig(format!(
                    "{:?}-parity mask set on ky index {i}",
                    self.parity
                )));
            }
        }
        Ok(())
    }
}

/// Acquired-line schedule for a given grid height and acceleration.
///
/// At R = 1 every line is acquired; at R > 1 every R-th line of each
/// parity class is retained, so even-parity lines sit at ky = 0 mod 2R
/// and odd-parity lines at ky = 1 mod 2R. The R = 2 schedule is a
/// bit-exact subset of the R = 1 schedule.
pub fn sampling_schedule(ny: usize, accel: usize) -> (SamplingMask, SamplingMask) {
    let mut even = vec![false; ny];
    let mut odd = vec![false; ny];
    for ky in 0..ny {
        if ky % 2 == 0 && (ky / 2) % accel == 0 {
            even[ky] = true;
        }
        if ky % 2 == 1 && ((ky - 1) / 2) % accel == 0 {
            odd[ky] = true;
        }
    }
    (
        SamplingMask {
            lines: even,
            parity: Parity::Even,
        },
        SamplingMask {
            lines: odd,
            parity: Parity::Odd,
        },
    )
}

/// Per-frame pair of virtual even/odd k-space grids, one grid per coil.
///
/// `filled` records whether every entry is meaningful (a completed pair)
/// or only the masked lines carry data (a freshly split acquisition).
#[derive(Debug, Clone)]
pub struct VirtualEchoPair {
    pub g_plus: Vec<Array2<Complex64>>,
    pub g_minus: Vec<Array2<Complex64>>,
    pub mask_even: SamplingMask,
    pub mask_odd: SamplingMask,
    pub filled: bool,
}

impl VirtualEchoPair {
    pub fn coils(&self) -> usize {
        self.g_plus.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.g_plus[0].dim()
    }

    /// Zero-filled pair with the given masks.
    pub fn zeros(nx: usize, ny: usize, coils: usize, mask_even: SamplingMask, mask_odd: SamplingMask) -> Self {
        VirtualEchoPair {
            g_plus: vec![Array2::zeros((nx, ny)); coils],
            g_minus: vec![Array2::zeros((nx, ny)); coils],
            mask_even,
            mask_odd,
            filled: false,
        }
    }

    /// Interleave the measured lines of both parities back into a single
    /// k-space grid per coil (the inverse of `split_virtual` on the
    /// acquired index set).
    pub fn recombine(&self) -> Vec<Array2<Complex64>> {
        let (nx, ny) = self.shape();
        (0..self.coils())
            .map(|c| {
                let mut out = Array2::zeros((nx, ny));
                for ky in 0..ny {
                    if self.mask_even.lines[ky] {
                        for kx in 0..nx {
                            out[[kx, ky]] = self.g_plus[c][[kx, ky]];
                        }
                    } else if self.mask_odd.lines[ky] {
                        for kx in 0..nx {
                            out[[kx, ky]] = self.g_minus[c][[kx, ky]];
                        }
                    }
                }
                out
            })
            .collect()
    }

    /// Difference signal g_plus - g_minus per coil.
    pub fn delta(&self) -> Vec<Array2<Complex64>> {
        self.g_plus
            .iter()
            .zip(&self.g_minus)
            .map(|(p, m)| p - m)
            .collect()
    }
}

/// Split an interleaved volume into virtual even/odd pairs, one per frame.
///
/// Even-acquired lines are copied into `g_plus` on the even mask, odd lines
/// into `g_minus` on the odd mask; everything unmeasured stays zero.
pub fn split_virtual(vol: &KSpaceVolume) -> Result<Vec<VirtualEchoPair>> {
    if vol.meta.parity != ParityLabeling::EvenPositive {
        return Err(GhostError::MissingParity);
    }
    let (nx, ny, coils, frames) = vol.data.dim();
    let (mask_even, mask_odd) = sampling_schedule(ny, vol.meta.accel);
    mask_even.validate()?;
    mask_odd.validate()?;

    let mut pairs = Vec::with_capacity(frames);
    for f in 0..frames {
        let mut pair = VirtualEchoPair::zeros(nx, ny, coils, mask_even.clone(), mask_odd.clone());
        for c in 0..coils {
            for ky in 0..ny {
                if mask_even.lines[ky] {
                    for kx in 0..nx {
                        pair.g_plus[c][[kx, ky]] = vol.data[[kx, ky, c, f]];
                    }
                } else if mask_odd.lines[ky] {
                    for kx in 0..nx {
                        pair.g_minus[c][[kx, ky]] = vol.data[[kx, ky, c, f]];
                    }
                }
            }
        }
        pairs.push(pair);
    }
    Ok(pairs)
}
