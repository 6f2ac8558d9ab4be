//! Navigator-based linear phase correction.
//!
//! The estimate holds the total even-odd phase difference (phi0, phi1)
//! over the normalized readout coordinate; applying it multiplies each
//! parity by the conjugate half-phase in the hybrid domain.

use ndarray::Axis;
use num_complex::Complex64;

use crate::error::{GhostError, Result};
use crate::fft::{fft_axis_centered, ifft_axis_centered};
use crate::sim::readout_coord;
use crate::volume::KSpaceVolume;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPhaseEstimate {
    /// Constant term of the total parity phase difference, rad.
    pub phi0: f64,
    /// Linear term, rad per normalized readout coordinate.
    pub phi1: f64,
}

impl LinearPhaseEstimate {
    pub fn zero() -> Self {
        LinearPhaseEstimate { phi0: 0.0, phi1: 0.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.phi0 + self.phi1 * x
    }
}

fn wrap_pi(v: f64) -> f64 {
    (v + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI
}

/// Fit (phi0, phi1) from navigator echoes by weighted least squares on the
/// unwrapped adjacent-echo phase difference over high-magnitude samples.
pub fn estimate_linear_phase(
    navigator: &[[Vec<Complex64>; 3]],
) -> Result<LinearPhaseEstimate> {
    if navigator.is_empty() {
        return Err(GhostError::InvalidConfig("empty navigator".into()));
    }
    let nx = navigator[0][0].len();
    // Accumulate even * conj(odd) products across coils and echo pairs; the
    // phase of the sum is the parity difference at each readout position.
    let mut prod = vec![Complex64::new(0.0, 0.0); nx];
    for echoes in navigator {
        for x in 0..nx {
            prod[x] += echoes[0][x] * echoes[1][x].conj();
            prod[x] += echoes[2][x] * echoes[1][x].conj();
        }
    }
    let max_w = prod.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if max_w <= 0.0 {
        return Err(GhostError::InvalidConfig(
            "all-zero navigator; cannot estimate phase".into(),
        ));
    }
    let threshold = 0.05 * max_w;

    // Unwrap along readout within the high-magnitude band.
    let mut samples: Vec<(f64, f64, f64)> = Vec::new(); // (x_hat, theta, weight)
    let mut prev: Option<f64> = None;
    for x in 0..nx {
        let w = prod[x].norm();
        if w < threshold {
            continue;
        }
        let mut theta = prod[x].arg();
        if let Some(p) = prev {
            while theta - p > std::f64::consts::PI {
                theta -= 2.0 * std::f64::consts::PI;
            }
            while theta - p < -std::f64::consts::PI {
                theta += 2.0 * std::f64::consts::PI;
            }
        }
        prev = Some(theta);
        samples.push((readout_coord(nx, x), theta, w));
    }
    if samples.len() < 2 {
        return Err(GhostError::InvalidConfig(
            "navigator support too small for a linear fit".into(),
        ));
    }

    // Weighted least squares for theta ~ phi0 + phi1 * x.
    let (mut sw, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, w) in &samples {
        sw += w;
        sx += w * x;
        sxx += w * x * x;
        sy += w * y;
        sxy += w * x * y;
    }
    let det = sw * sxx - sx * sx;
    if det.abs() < 1e-12 * sw * sw {
        return Err(GhostError::IllPosed("degenerate navigator fit".into()));
    }
    let phi0 = (sxx * sy - sx * sxy) / det;
    let phi1 = (sw * sxy - sx * sy) / det;
    Ok(LinearPhaseEstimate {
        phi0: wrap_pi(phi0),
        phi1,
    })
}

/// Compensate the parity phase difference: hybrid-domain multiplication of
/// even lines by exp(-i*phi/2) and odd lines by exp(+i*phi/2). The measured
/// line set is untouched and a zero estimate is an exact identity.
pub fn apply_phase_correction(
    vol: &KSpaceVolume,
    est: &LinearPhaseEstimate,
) -> Result<KSpaceVolume> {
    if !est.phi0.is_finite() || !est.phi1.is_finite() {
        return Err(GhostError::NonFinite("phase estimate"));
    }
    if est.phi0 == 0.0 && est.phi1 == 0.0 {
        return Ok(vol.clone());
    }
    let (nx, ny, coils, frames) = vol.data.dim();
    let mut out = vol.clone();
    for f in 0..frames {
        for c in 0..coils {
            let k = vol.slice(c, f);
            let mut hybrid = ifft_axis_centered(&k, Axis(0))?;
            for x in 0..nx {
                let half = 0.5 * est.eval(readout_coord(nx, x));
                for ky in 0..ny {
                    let sign = if ky % 2 == 0 { -1.0 } else { 1.0 };
                    hybrid[[x, ky]] *= Complex64::from_polar(1.0, sign * half);
                }
            }
            let corrected = fft_axis_centered(&hybrid, Axis(0))?;
            for ky in 0..ny {
                for kx in 0..nx {
                    out.data[[kx, ky, c, f]] = corrected[[kx, ky]];
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{default_roi, gsr, recon_sos};
    use crate::phantom::{make_coils, make_phantom, PhantomKind};
    use crate::sim::{
        parity_filled_pair, simulate_epi, simulate_navigator, PhaseErrorModel, SimOptions,
    };
    use crate::volume::{split_virtual, AcqMeta};

    fn setup() -> (crate::phantom::Phantom, crate::phantom::CoilSet) {
        let p = make_phantom(PhantomKind::SheppLogan, 64, 64, 0).unwrap();
        let c = make_coils(64, 64, 4, 0.9, 1).unwrap();
        (p, c)
    }

    fn corrected_gsr(err: &PhaseErrorModel, est: &LinearPhaseEstimate) -> f64 {
        let (phantom, coils) = setup();
        let vol = simulate_epi(&phantom, &coils, err, &AcqMeta::default(), &SimOptions::default())
            .unwrap();
        let corrected = apply_phase_correction(&vol, est).unwrap();
        let pair = parity_filled_pair(&split_virtual(&corrected).unwrap()[0]);
        let sos = recon_sos(&pair).unwrap();
        gsr(&sos, &default_roi(&phantom).unwrap()).unwrap()
    }

    #[test]
    fn linear_error_estimate_recovers_truth() {
        let (phantom, coils) = setup();
        let err = PhaseErrorModel::linear(0.3, 0.5);
        let nav = simulate_navigator(&phantom, &coils, &err, &AcqMeta::default()).unwrap();
        let est = estimate_linear_phase(&nav).unwrap();
        assert!(
            (est.phi0 - 0.3).abs() < 1e-3,
            "phi0 = {} (want 0.3)",
            est.phi0
        );
        assert!(
            (est.phi1 - 0.5).abs() < 1e-3,
            "phi1 = {} (want 0.5)",
            est.phi1
        );
    }

    #[test]
    fn zero_error_estimate_is_zero() {
        let (phantom, coils) = setup();
        let nav = simulate_navigator(
            &phantom,
            &coils,
            &PhaseErrorModel::zero(),
            &AcqMeta::default(),
        )
        .unwrap();
        let est = estimate_linear_phase(&nav).unwrap();
        assert!(est.phi0.abs() < 1e-6 && est.phi1.abs() < 1e-6);
    }

    #[test]
    fn estimate_is_shift_equivariant() {
        let (phantom, coils) = setup();
        let base = PhaseErrorModel::linear(0.2, 0.4);
        let shifted = PhaseErrorModel::linear(0.2 + 0.15, 0.4 + 0.1);
        let meta = AcqMeta::default();
        let e0 = estimate_linear_phase(
            &simulate_navigator(&phantom, &coils, &base, &meta).unwrap(),
        )
        .unwrap();
        let e1 = estimate_linear_phase(
            &simulate_navigator(&phantom, &coils, &shifted, &meta).unwrap(),
        )
        .unwrap();
        assert!((e1.phi0 - e0.phi0 - 0.15).abs() < 1e-6);
        assert!((e1.phi1 - e0.phi1 - 0.1).abs() < 1e-6);
    }

    #[test]
    fn cubic_error_leaves_residual_ghost() {
        let (phantom, coils) = setup();
        let err = PhaseErrorModel::new(0.2, 0.0, 0.0, 0.9);
        let nav = simulate_navigator(&phantom, &coils, &err, &AcqMeta::default()).unwrap();
        let est = estimate_linear_phase(&nav).unwrap();
        let residual = corrected_gsr(&err, &est);
        let floor = corrected_gsr(&PhaseErrorModel::zero(), &LinearPhaseEstimate::zero());
        assert!(
            residual > 10.0 * floor.max(1e-9),
            "cubic residual {residual} vs floor {floor}"
        );
    }

    #[test]
    fn exact_linear_estimate_removes_ghost() {
        let err = PhaseErrorModel::linear(0.3, 0.5);
        let est = LinearPhaseEstimate {
            phi0: 0.3,
            phi1: 0.5,
        };
        let g = corrected_gsr(&err, &est);
        assert!(g <= 1e-6, "corrected GSR = {g}");
    }

    #[test]
    fn zero_estimate_is_bit_identical() {
        let (phantom, coils) = setup();
        let vol = simulate_epi(
            &phantom,
            &coils,
            &PhaseErrorModel::linear(0.2, 0.1),
            &AcqMeta::default(),
            &SimOptions::default(),
        )
        .unwrap();
        let out = apply_phase_correction(&vol, &LinearPhaseEstimate::zero()).unwrap();
        assert_eq!(out.data, vol.data);
    }

    #[test]
    fn apply_then_unapply_round_trips() {
        let (phantom, coils) = setup();
        let vol = simulate_epi(
            &phantom,
            &coils,
            &PhaseErrorModel::linear(0.4, -0.2),
            &AcqMeta::default(),
            &SimOptions::default(),
        )
        .unwrap();
        let est = LinearPhaseEstimate {
            phi0: 0.7,
            phi1: -0.3,
        };
        let inv = LinearPhaseEstimate {
            phi0: -0.7,
            phi1: 0.3,
        };
        let back = apply_phase_correction(&apply_phase_correction(&vol, &est).unwrap(), &inv)
            .unwrap();
        let num: f64 = back
            .data
            .iter()
            .zip(vol.data.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = vol.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(num / den < 1e-12);
    }

    #[test]
    fn phase_correction_preserves_line_norms() {
        let (phantom, coils) = setup();
        let vol = simulate_epi(
            &phantom,
            &coils,
            &PhaseErrorModel::linear(0.3, 0.6),
            &AcqMeta::default(),
            &SimOptions::default(),
        )
        .unwrap();
        let out = apply_phase_correction(
            &vol,
            &LinearPhaseEstimate {
                phi0: 0.5,
                phi1: 0.2,
            },
        )
        .unwrap();
        for c in 0..4 {
            for ky in 0..64 {
                let a: f64 = (0..64)
                    .map(|kx| vol.data[[kx, ky, c, 0]].norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                let b: f64 = (0..64)
                    .map(|kx| out.data[[kx, ky, c, 0]].norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!((a - b).abs() <= 1e-10 * (1.0 + a));
            }
        }
    }

    #[test]
    fn all_zero_navigator_rejected() {
        let nav = vec![[
            vec![Complex64::new(0.0, 0.0); 32],
            vec![Complex64::new(0.0, 0.0); 32],
            vec![Complex64::new(0.0, 0.0); 32],
        ]];
        assert!(estimate_linear_phase(&nav).is_err());
    }
}
