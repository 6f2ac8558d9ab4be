//! EPI forward simulation with even/odd phase mismatch.
//!
//! The phase error model holds the *total* even-minus-odd phase difference
//! as a polynomial over the normalized readout coordinate; the simulator
//! splits it symmetrically, multiplying even-parity lines by
//! `exp(+i*phi(x)/2)` and odd-parity lines by `exp(-i*phi(x)/2)` in the
//! hybrid (ky-x) domain, between the phase-encode and readout transforms.

use ndarray::{Array2, Array4, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{GhostError, Result};
use crate::fft::{fft_axis_centered, ifft2_centered};
use crate::phantom::{CoilSet, Phantom};
use crate::volume::{
    sampling_schedule, AcqMeta, KSpaceVolume, VirtualEchoPair,
};

/// Polynomial phase-error coefficients over normalized readout coordinate
/// x in [-1, 1): total parity difference c0 + c1*x + c2*x^2 + c3*x^3 (rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseErrorModel {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl PhaseErrorModel {
    pub fn zero() -> Self {
        PhaseErrorModel {
            c0: 0.0,
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
        }
    }

    pub fn linear(c0: f64, c1: f64) -> Self {
        PhaseErrorModel {
            c0,
            c1,
            c2: 0.0,
            c3: 0.0,
        }
    }

    pub fn new(c0: f64, c1: f64, c2: f64, c3: f64) -> Self {
        PhaseErrorModel { c0, c1, c2, c3 }
    }

    /// Total even-odd phase difference at normalized coordinate x.
    pub fn eval(&self, x: f64) -> f64 {
        self.c0 + self.c1 * x + self.c2 * x * x + self.c3 * x * x * x
    }

    pub fn negate(&self) -> Self {
        PhaseErrorModel {
            c0: -self.c0,
            c1: -self.c1,
            c2: -self.c2,
            c3: -self.c3,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.c0 == 0.0 && self.c1 == 0.0 && self.c2 == 0.0 && self.c3 == 0.0
    }
}

/// Normalized readout coordinate of pixel `x`, centered on the FFT origin.
pub fn readout_coord(nx: usize, x: usize) -> f64 {
    (x as f64 - nx as f64 / 2.0) / (nx as f64 / 2.0)
}

/// Optional simulation extras beyond the physics.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub frames: usize,
    /// Complex white Gaussian noise at the given SNR in dB; `None` = off.
    pub noise_snr_db: Option<f64>,
    pub seed: u64,
    /// Swap which ky parity receives the positive half of the phase split.
    pub swap_parity: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            frames: 1,
            noise_snr_db: None,
            seed: 0,
            swap_parity: false,
        }
    }
}

fn check_sim_shapes(phantom: &Phantom, coils: &CoilSet) -> Result<(usize, usize)> {
    let (nx, ny) = phantom.magnetization.dim();
    for m in &coils.maps {
        if m.dim() != (nx, ny) {
            return Err(GhostError::ShapeMismatch(
                "coil maps do not match phantom grid".into(),
            ));
        }
    }
    if phantom.offres_map.dim() != (nx, ny) {
        return Err(GhostError::ShapeMismatch(
            "off-resonance map does not match phantom grid".into(),
        ));
    }
    Ok((nx, ny))
}

fn parity_sign(ky: usize, swap: bool) -> f64 {
    let s = if ky % 2 == 0 { 1.0 } else { -1.0 };
    if swap {
        -s
    } else {
        s
    }
}

/// Full k-space of one coil image with a *uniform* half-phase applied:
/// `sign = +1` gives the virtual even acquisition, `-1` the odd one.
fn virtual_kspace(
    img: &Array2<Complex64>,
    err: &PhaseErrorModel,
    sign: f64,
) -> Result<Array2<Complex64>> {
    let (nx, _ny) = img.dim();
    let mut hybrid = fft_axis_centered(img, Axis(1))?;
    for x in 0..nx {
        let phi = 0.5 * sign * err.eval(readout_coord(nx, x));
        let p = Complex64::from_polar(1.0, phi);
        for v in hybrid.row_mut(x).iter_mut() {
            *v *= p;
        }
    }
    fft_axis_centered(&hybrid, Axis(0))
}

/// Simulate the interleaved EPI acquisition.
pub fn simulate_epi(
    phantom: &Phantom,
    coils: &CoilSet,
    err: &PhaseErrorModel,
    meta: &AcqMeta,
    opts: &SimOptions,
) -> Result<KSpaceVolume> {
    let (nx, ny) = check_sim_shapes(phantom, coils)?;
    if meta.accel == 0 || meta.accel > 2 {
        return Err(GhostError::InvalidConfig(format!(
            "unsupported acceleration R = {}",
            meta.accel
        )));
    }
    let p = coils.coils();
    let (mask_even, mask_odd) = sampling_schedule(ny, meta.accel);
    let has_offres = phantom.offres_map.iter().any(|&v| v != 0.0);

    let mut data = Array4::zeros((nx, ny, p, opts.frames));
    for c in 0..p {
        let img = &phantom.magnetization * &coils.maps[c];
        let k = if !has_offres {
            // One hybrid transform serves every line.
            let mut hybrid = fft_axis_centered(&img, Axis(1))?;
            for x in 0..nx {
                let half = 0.5 * err.eval(readout_coord(nx, x));
                for (ky, v) in hybrid.row_mut(x).iter_mut().enumerate() {
                    let phi = parity_sign(ky, opts.swap_parity) * half;
                    *v *= Complex64::from_polar(1.0, phi);
                }
            }
            fft_axis_centered(&hybrid, Axis(0))?
        } else {
            // Off-resonance evolves with the echo time of each line, so the
            // hybrid signal is rebuilt per line from a re-modulated image.
            let mut k = Array2::<Complex64>::zeros((nx, ny));
            for ky in 0..ny {
                let t_s = (meta.te_ms + (ky as f64 - ny as f64 / 2.0) * meta.esp_ms) * 1e-3;
                let modulated = Array2::from_shape_fn((nx, ny), |(x, y)| {
                    img[[x, y]]
                        * Complex64::from_polar(
                            1.0,
                            2.0 * std::f64::consts::PI * phantom.offres_map[[x, y]] * t_s,
                        )
                });
                let mut hybrid = fft_axis_centered(&modulated, Axis(1))?;
                for x in 0..nx {
                    let phi = parity_sign(ky, opts.swap_parity)
                        * 0.5
                        * err.eval(readout_coord(nx, x));
                    hybrid[[x, ky]] *= Complex64::from_polar(1.0, phi);
                }
                let line = fft_axis_centered(&hybrid, Axis(0))?;
                for x in 0..nx {
                    k[[x, ky]] = line[[x, ky]];
                }
            }
            k
        };
        for f in 0..opts.frames {
            for ky in 0..ny {
                if mask_even.lines[ky] || mask_odd.lines[ky] {
                    for kx in 0..nx {
                        data[[kx, ky, c, f]] = k[[kx, ky]];
                    }
                }
            }
        }
    }

    if let Some(snr_db) = opts.noise_snr_db {
        let rms = {
            let sum: f64 = data.iter().map(|v| v.norm_sqr()).sum();
            let count = data.iter().filter(|v| v.norm_sqr() > 0.0).count().max(1);
            (sum / count as f64).sqrt()
        };
        let snr = 10f64.powf(snr_db / 20.0);
        let sigma = rms / snr / std::f64::consts::SQRT_2;
        let normal = Normal::new(0.0, sigma).map_err(|e| {
            GhostError::InvalidConfig(format!("bad noise level: {e}"))
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for f in 0..opts.frames {
            for c in 0..p {
                for ky in 0..ny {
                    if mask_even.lines[ky] || mask_odd.lines[ky] {
                        for kx in 0..nx {
                            data[[kx, ky, c, f]] += Complex64::new(
                                normal.sample(&mut rng),
                                normal.sample(&mut rng),
                            );
                        }
                    }
                }
            }
        }
    }

    let mut meta = meta.clone();
    meta.parity = crate::volume::ParityLabeling::EvenPositive;
    KSpaceVolume::new(data, meta)
}

/// Ground-truth fully sampled virtual pair for every coil.
pub fn simulate_virtual_pair(
    phantom: &Phantom,
    coils: &CoilSet,
    err: &PhaseErrorModel,
    accel: usize,
) -> Result<VirtualEchoPair> {
    let (nx, ny) = check_sim_shapes(phantom, coils)?;
    let (mask_even, mask_odd) = sampling_schedule(ny, accel);
    let mut g_plus = Vec::with_capacity(coils.coils());
    let mut g_minus = Vec::with_capacity(coils.coils());
    for c in 0..coils.coils() {
        let img = &phantom.magnetization * &coils.maps[c];
        g_plus.push(virtual_kspace(&img, err, 1.0)?);
        g_minus.push(virtual_kspace(&img, err, -1.0)?);
    }
    let _ = nx;
    Ok(VirtualEchoPair {
        g_plus,
        g_minus,
        mask_even,
        mask_odd,
        filled: true,
    })
}

/// Three navigator echoes (no phase encoding) per coil, in the hybrid
/// (readout-space) domain, with alternating parity +,-,+.
pub fn simulate_navigator(
    phantom: &Phantom,
    coils: &CoilSet,
    err: &PhaseErrorModel,
    meta: &AcqMeta,
) -> Result<Vec<[Vec<Complex64>; 3]>> {
    let (nx, ny) = check_sim_shapes(phantom, coils)?;
    let has_offres = phantom.offres_map.iter().any(|&v| v != 0.0);
    let scale = 1.0 / (ny as f64).sqrt();
    let mut out = Vec::with_capacity(coils.coils());
    for c in 0..coils.coils() {
        let img = &phantom.magnetization * &coils.maps[c];
        let mut echoes: [Vec<Complex64>; 3] =
            [vec![Complex64::default(); nx], vec![Complex64::default(); nx], vec![
                Complex64::default();
                nx
            ]];
        for (j, echo) in echoes.iter_mut().enumerate() {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let t_s = (meta.te_ms + (j as f64 - 1.0) * meta.esp_ms) * 1e-3;
            for x in 0..nx {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..ny {
                    let mut v = img[[x, y]];
                    if has_offres {
                        v *= Complex64::from_polar(
                            1.0,
                            2.0 * std::f64::consts::PI * phantom.offres_map[[x, y]] * t_s,
                        );
                    }
                    acc += v;
                }
                let phi = 0.5 * sign * err.eval(readout_coord(nx, x));
                echo[x] = acc * scale * Complex64::from_polar(1.0, phi);
            }
        }
        out.push(echoes);
    }
    Ok(out)
}

/// Plain per-coil inverse-FFT reconstruction of an interleaved volume.
pub fn recon_coil_images(vol: &KSpaceVolume, frame: usize) -> Result<Vec<Array2<Complex64>>> {
    (0..vol.coils())
        .map(|c| ifft2_centered(&vol.slice(c, frame)))
        .collect()
}

/// The measured interleave copied into both parity channels; missing
/// acceleration gaps stay zero. This is the "uncorrected" completion and
/// also the standard network input.
pub fn parity_filled_pair(pair: &VirtualEchoPair) -> VirtualEchoPair {
    let (nx, ny) = pair.shape();
    let mut out = pair.clone();
    for c in 0..pair.coils() {
        for ky in 0..ny {
            if pair.mask_even.lines[ky] {
                for kx in 0..nx {
                    out.g_minus[c][[kx, ky]] = pair.g_plus[c][[kx, ky]];
                }
            } else if pair.mask_odd.lines[ky] {
                for kx in 0..nx {
                    out.g_plus[c][[kx, ky]] = pair.g_minus[c][[kx, ky]];
                }
            }
        }
    }
    out.filled = true;
    out
}
