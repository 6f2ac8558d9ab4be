//! Reference-free correction by entropy minimization over a linear phase
//! model, after Skare's method: grid search over (phi0, phi1) followed by
//! Nelder-Mead refinement of the Shannon entropy of the sum-of-squares
//! image magnitude histogram (256 bins).

use ndarray::{Array2, Axis};
use num_complex::Complex64;

use crate::error::{GhostError, Result};
use crate::fft::{ifft_axis_centered, ifft2_centered};
use crate::reference::{apply_phase_correction, LinearPhaseEstimate};
use crate::sim::readout_coord;
use crate::volume::KSpaceVolume;

pub const ENTROPY_BINS: usize = 256;
const COARSE_GRID: usize = 64;
const NM_MAX_ITERS: usize = 120;
const NM_TOL: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct EntropyResult {
    pub volume: KSpaceVolume,
    pub estimate: LinearPhaseEstimate,
    pub entropy: f64,
    pub converged: bool,
}

/// Shannon entropy of the 256-bin magnitude histogram, normalized to unit
/// sum. Lower is sharper.
pub fn image_entropy(image: &Array2<f64>) -> f64 {
    let max = image.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0.0;
    }
    let mut counts = [0usize; ENTROPY_BINS];
    for &v in image.iter() {
        let b = ((v / max) * (ENTROPY_BINS as f64 - 1.0)).round() as usize;
        counts[b.min(ENTROPY_BINS - 1)] += 1;
    }
    let n = image.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Precomputed per-coil even/odd image components. Because the candidate
/// phase depends on the readout coordinate only, it commutes with the
/// phase-encode transform, and each candidate image is just
/// `q(x) * even + conj(q(x)) * odd` per coil.
struct CandidateEngine {
    even: Vec<Array2<Complex64>>,
    odd: Vec<Array2<Complex64>>,
    nx: usize,
    ny: usize,
}

impl CandidateEngine {
    fn new(vol: &KSpaceVolume, frame: usize) -> Result<Self> {
        let (nx, ny) = (vol.nx(), vol.ny());
        let mut even = Vec::with_capacity(vol.coils());
        let mut odd = Vec::with_capacity(vol.coils());
        for c in 0..vol.coils() {
            let hybrid = ifft_axis_centered(&vol.slice(c, frame), Axis(0))?;
            let mut he = hybrid.clone();
            let mut ho = hybrid;
            for ky in 0..ny {
                if ky % 2 == 0 {
                    for x in 0..nx {
                        ho[[x, ky]] = Complex64::new(0.0, 0.0);
                    }
                } else {
                    for x in 0..nx {
                        he[[x, ky]] = Complex64::new(0.0, 0.0);
                    }
                }
            }
            even.push(ifft_axis_centered(&he, Axis(1))?);
            odd.push(ifft_axis_centered(&ho, Axis(1))?);
        }
        Ok(CandidateEngine { even, odd, nx, ny })
    }

    /// Entropy of the SoS image under candidate correction (phi0, phi1).
    fn eval(&self, phi0: f64, phi1: f64) -> f64 {
        let mut sos = Array2::<f64>::zeros((self.nx, self.ny));
        let q: Vec<Complex64> = (0..self.nx)
            .map(|x| {
                Complex64::from_polar(
                    1.0,
                    -0.5 * (phi0 + phi1 * readout_coord(self.nx, x)),
                )
            })
            .collect();
        for (e, o) in self.even.iter().zip(&self.odd) {
            for x in 0..self.nx {
                let qe = q[x];
                let qo = qe.conj();
                for y in 0..self.ny {
                    let v = qe * e[[x, y]] + qo * o[[x, y]];
                    sos[[x, y]] += v.norm_sqr();
                }
            }
        }
        sos.mapv_inplace(f64::sqrt);
        image_entropy(&sos)
    }
}

/// Nelder-Mead on a 2-D objective. Deterministic.
fn nelder_mead(
    f: &dyn Fn(f64, f64) -> f64,
    start: (f64, f64),
    step: f64,
) -> ((f64, f64), f64, bool) {
    let mut simplex = [
        (start, f(start.0, start.1)),
        ((start.0 + step, start.1), f(start.0 + step, start.1)),
        ((start.0, start.1 + step), f(start.0, start.1 + step)),
    ];
    let mut converged = false;
    for _ in 0..NM_MAX_ITERS {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let spread = ((simplex[0].0 .0 - simplex[2].0 .0).abs())
            .max((simplex[0].0 .1 - simplex[2].0 .1).abs());
        if spread < NM_TOL {
            converged = true;
            break;
        }
        let best = simplex[0];
        let worst = simplex[2];
        let centroid = (
            (simplex[0].0 .0 + simplex[1].0 .0) / 2.0,
            (simplex[0].0 .1 + simplex[1].0 .1) / 2.0,
        );
        let refl = (
            centroid.0 + (centroid.0 - worst.0 .0),
            centroid.1 + (centroid.1 - worst.0 .1),
        );
        let fr = f(refl.0, refl.1);
        if fr < best.1 {
            let exp = (
                centroid.0 + 2.0 * (centroid.0 - worst.0 .0),
                centroid.1 + 2.0 * (centroid.1 - worst.0 .1),
            );
            let fe = f(exp.0, exp.1);
            simplex[2] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[1].1 {
            simplex[2] = (refl, fr);
        } else {
            let con = (
                centroid.0 + 0.5 * (worst.0 .0 - centroid.0),
                centroid.1 + 0.5 * (worst.0 .1 - centroid.1),
            );
            let fc = f(con.0, con.1);
            if fc < worst.1 {
                simplex[2] = (con, fc);
            } else {
                for i in 1..3 {
                    let shrunk = (
                        best.0 .0 + 0.5 * (simplex[i].0 .0 - best.0 .0),
                        best.0 .1 + 0.5 * (simplex[i].0 .1 - best.0 .1),
                    );
                    simplex[i] = (shrunk, f(shrunk.0, shrunk.1));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    (simplex[0].0, simplex[0].1, converged)
}

/// Shifting phi0 by pi turns the corrected image into its half-FOV
/// circular shift, which has an identical magnitude histogram, so the
/// entropy landscape carries an exact twin of every minimum. A vanishing
/// quadratic penalty breaks those ties toward the small-phase solution
/// without moving genuine minima.
const TIE_BREAK: f64 = 1e-9;

fn penalized(e: f64, phi0: f64, phi1: f64) -> f64 {
    e + TIE_BREAK * (phi0 * phi0 + phi1 * phi1)
}

/// Find the linear phase correction minimizing image entropy; the search
/// box is |phi0| <= pi, |phi1| <= pi, coarse 64x64 grid plus Nelder-Mead.
pub fn entropy_correct(vol: &KSpaceVolume) -> Result<EntropyResult> {
    let engine = CandidateEngine::new(vol, 0)?;
    let pi = std::f64::consts::PI;

    // Identity is always a candidate, so the result never has higher
    // entropy than the uncorrected image.
    let mut best = ((0.0f64, 0.0f64), penalized(engine.eval(0.0, 0.0), 0.0, 0.0));
    let n = COARSE_GRID;
    for i in 0..n {
        let phi0 = -pi + (2.0 * pi) * (i as f64 + 0.5) / n as f64;
        for j in 0..n {
            let phi1 = -pi + (2.0 * pi) * (j as f64 + 0.5) / n as f64;
            let e = penalized(engine.eval(phi0, phi1), phi0, phi1);
            if e < best.1 {
                best = ((phi0, phi1), e);
            }
        }
    }

    let step = 2.0 * pi / n as f64;
    let f = |a: f64, b: f64| penalized(engine.eval(a, b), a, b);
    let (refined, e_refined, converged) = nelder_mead(&f, best.0, step);
    if e_refined < best.1 {
        best = (refined, e_refined);
    }

    let estimate = LinearPhaseEstimate {
        phi0: best.0 .0,
        phi1: best.0 .1,
    };
    let volume = apply_phase_correction(vol, &estimate)?;
    Ok(EntropyResult {
        volume,
        estimate,
        entropy: engine.eval(best.0 .0, best.0 .1),
        converged,
    })
}

/// Brute-force entropy minimization over an explicit grid; the slow oracle
/// used by tests to validate the landscape claims.
pub fn entropy_grid_argmin(
    vol: &KSpaceVolume,
    phi0_range: (f64, f64),
    phi1_range: (f64, f64),
    steps: usize,
) -> Result<((f64, f64), f64)> {
    let engine = CandidateEngine::new(vol, 0)?;
    let mut best = ((phi0_range.0, phi1_range.0), f64::INFINITY);
    for i in 0..steps {
        let phi0 = phi0_range.0
            + (phi0_range.1 - phi0_range.0) * i as f64 / (steps - 1) as f64;
        for j in 0..steps {
            let phi1 = phi1_range.0
                + (phi1_range.1 - phi1_range.0) * j as f64 / (steps - 1) as f64;
            let e = penalized(engine.eval(phi0, phi1), phi0, phi1);
            if e < best.1 {
                best = ((phi0, phi1), e);
            }
        }
    }
    Ok(best)
}

/// SoS image straight from an interleaved volume (no correction), used to
/// compare entropies.
pub fn sos_of_volume(vol: &KSpaceVolume, frame: usize) -> Result<Array2<f64>> {
    let (nx, ny) = (vol.nx(), vol.ny());
    let mut acc = Array2::<f64>::zeros((nx, ny));
    for c in 0..vol.coils() {
        let img = ifft2_centered(&vol.slice(c, frame))?;
        for ((x, y), v) in img.indexed_iter() {
            acc[[x, y]] += v.norm_sqr();
        }
    }
    Ok(acc.mapv(f64::sqrt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{make_coils, make_phantom, PhantomKind};
    use crate::sim::{simulate_epi, PhaseErrorModel, SimOptions};
    use crate::volume::AcqMeta;

    fn ghosted(err: &PhaseErrorModel) -> KSpaceVolume {
        let phantom = make_phantom(PhantomKind::SheppLogan, 64, 64, 0).unwrap();
        let coils = make_coils(64, 64, 4, 0.9, 1).unwrap();
        simulate_epi(&phantom, &coils, err, &AcqMeta::default(), &SimOptions::default()).unwrap()
    }

    #[test]
    fn recovers_linear_error() {
        let err = PhaseErrorModel::linear(0.35, -0.55);
        let vol = ghosted(&err);
        let result = entropy_correct(&vol).unwrap();
        assert!(
            (result.estimate.phi0 - 0.35).abs() < 2e-2,
            "phi0 = {}",
            result.estimate.phi0
        );
        assert!(
            (result.estimate.phi1 + 0.55).abs() < 2e-2,
            "phi1 = {}",
            result.estimate.phi1
        );
        // Fine local grid agrees that the minimum sits at the truth.
        let ((g0, g1), _) = entropy_grid_argmin(
            &vol,
            (0.35 - 0.2, 0.35 + 0.2),
            (-0.55 - 0.2, -0.55 + 0.2),
            41,
        )
        .unwrap();
        assert!((g0 - 0.35).abs() < 2e-2 && (g1 + 0.55).abs() < 2e-2);
    }

    #[test]
    fn ghost_free_input_has_minimum_at_zero() {
        let vol = ghosted(&PhaseErrorModel::zero());
        let ((g0, g1), _) = entropy_grid_argmin(
            &vol,
            (-std::f64::consts::PI, std::f64::consts::PI),
            (-std::f64::consts::PI, std::f64::consts::PI),
            21,
        )
        .unwrap();
        // The coarse oracle grid includes no exact zero; nearest cells win.
        let spacing = 2.0 * std::f64::consts::PI / 20.0;
        assert!(g0.abs() <= spacing && g1.abs() <= spacing, "({g0}, {g1})");
        let result = entropy_correct(&vol).unwrap();
        assert!(result.estimate.phi0.abs() < 2e-2 && result.estimate.phi1.abs() < 2e-2);
    }

    #[test]
    fn never_increases_entropy_vs_identity() {
        for err in [
            PhaseErrorModel::zero(),
            PhaseErrorModel::linear(0.4, 0.3),
            PhaseErrorModel::new(0.2, 0.1, 0.4, 0.6),
        ] {
            let vol = ghosted(&err);
            let identity = image_entropy(&sos_of_volume(&vol, 0).unwrap());
            let result = entropy_correct(&vol).unwrap();
            assert!(
                result.entropy <= identity + 1e-12,
                "entropy {} > identity {}",
                result.entropy,
                identity
            );
        }
    }
}
