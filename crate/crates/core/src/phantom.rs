//! Ground-truth phantoms and coil sensitivity maps for the simulator.
//!
//! Phantom support always leaves a background margin of at least 15% of
//! the grid at the top and bottom of the phase-encode axis, so the
//! half-FOV ghost of the object lands on empty background and ghost ROIs
//! can be placed deterministically.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GhostError, Result};

/// Complex transverse magnetization plus an off-resonance map in Hz.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub magnetization: Array2<Complex64>,
    pub offres_map: Array2<f64>,
}

impl Phantom {
    pub fn nx(&self) -> usize {
        self.magnetization.dim().0
    }
    pub fn ny(&self) -> usize {
        self.magnetization.dim().1
    }

    /// Support mask of the magnetization.
    pub fn support(&self) -> Array2<bool> {
        self.magnetization.map(|c| c.norm() > 1e-12)
    }

    /// Inclusive phase-encode index range of the support, if any.
    pub fn support_phase_range(&self) -> Option<(usize, usize)> {
        let sup = self.support();
        let (nx, ny) = sup.dim();
        let mut lo = None;
        let mut hi = None;
        for y in 0..ny {
            if (0..nx).any(|x| sup[[x, y]]) {
                if lo.is_none() {
                    lo = Some(y);
                }
                hi = Some(y);
            }
        }
        lo.zip(hi)
    }

    pub fn has_phase_margin(&self, fraction: f64) -> bool {
        let ny = self.ny();
        match self.support_phase_range() {
            None => true,
            Some((lo, hi)) => {
                let margin = (ny as f64 * fraction).floor() as usize;
                lo >= margin && hi < ny - margin
            }
        }
    }
}

/// Phantom family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    SheppLogan,
    Disks,
}

/// Set of complex coil sensitivity images.
#[derive(Debug, Clone)]
pub struct CoilSet {
    pub maps: Vec<Array2<Complex64>>,
}

impl CoilSet {
    pub fn coils(&self) -> usize {
        self.maps.len()
    }

    pub fn sos(&self) -> Array2<f64> {
        let (nx, ny) = self.maps[0].dim();
        let mut out = Array2::zeros((nx, ny));
        for m in &self.maps {
            for ((i, j), v) in m.indexed_iter() {
                out[[i, j]] += v.norm_sqr();
            }
        }
        out.mapv(f64::sqrt)
    }
}

// Modified Shepp-Logan ellipse table: (intensity, a, b, x0, y0, phi_deg)
// with a the readout semi-axis and b the phase-encode semi-axis.
const SHEPP_ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
];

/// Scale applied to the unit-disc phantom geometry so the support keeps a
/// >= 15% phase-encode margin (0.92 * 0.68 = 0.63 < 0.7).
const FOV_SCALE: f64 = 0.68;

fn normalized_coords(n: usize, i: usize) -> f64 {
    (i as f64 + 0.5 - n as f64 / 2.0) / (n as f64 / 2.0)
}

fn shepp_logan(nx: usize, ny: usize, seed: u64) -> Array2<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Per-ellipse intensity jitter keeps the family diverse across seeds.
    let jitter: Vec<f64> = (0..SHEPP_ELLIPSES.len())
        .map(|_| rng.gen_range(0.88..1.12))
        .collect();
    let phase_a = rng.gen_range(-0.6..0.6);
    let phase_b = rng.gen_range(-0.6..0.6);
    Array2::from_shape_fn((nx, ny), |(x, y)| {
        let u = normalized_coords(nx, x);
        let v = normalized_coords(ny, y);
        let mut val = 0.0;
        for (k, &(int, a, b, x0, y0, phi)) in SHEPP_ELLIPSES.iter().enumerate() {
            let (a, b) = (a * FOV_SCALE, b * FOV_SCALE);
            let (x0, y0) = (x0 * FOV_SCALE, y0 * FOV_SCALE);
            let th = phi.to_radians();
            let du = u - x0;
            let dv = v - y0;
            let p = du * th.cos() + dv * th.sin();
            let q = -du * th.sin() + dv * th.cos();
            if (p / a).powi(2) + (q / b).powi(2) <= 1.0 {
                val += int * jitter[k];
            }
        }
        if val.abs() < 1e-12 {
            Complex64::new(0.0, 0.0)
        } else {
            let ph = phase_a * u + phase_b * v * v;
            Complex64::from_polar(val.max(0.0), ph)
        }
    })
}

fn disks(nx: usize, ny: usize, seed: u64) -> Array2<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_disks = rng.gen_range(4..=7);
    let mut params = Vec::with_capacity(n_disks);
    for _ in 0..n_disks {
        let r = rng.gen_range(0.08..0.26);
        // Keep center + radius inside the margin-safe band on the phase axis.
        let cv = rng.gen_range(-(0.62 - r)..(0.62 - r));
        let cu = rng.gen_range(-(0.85 - r)..(0.85 - r));
        let amp = rng.gen_range(0.35..1.1);
        let ph = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        params.push((cu, cv, r, amp, ph));
    }
    let roll_u = rng.gen_range(-0.8..0.8);
    let roll_v = rng.gen_range(-0.8..0.8);
    Array2::from_shape_fn((nx, ny), |(x, y)| {
        let u = normalized_coords(nx, x);
        let v = normalized_coords(ny, y);
        let mut acc = Complex64::new(0.0, 0.0);
        for &(cu, cv, r, amp, ph) in &params {
            let d2 = (u - cu).powi(2) + (v - cv).powi(2);
            if d2 <= r * r {
                acc += Complex64::from_polar(amp, ph + roll_u * u + roll_v * v);
            }
        }
        acc
    })
}

/// Deterministic phantom of the requested family.
pub fn make_phantom(kind: PhantomKind, nx: usize, ny: usize, seed: u64) -> Result<Phantom> {
    if nx < 16 || ny < 16 {
        return Err(GhostError::InvalidConfig(format!(
            "phantom grid {nx}x{ny} too small (need >= 16)"
        )));
    }
    let magnetization = match kind {
        PhantomKind::SheppLogan => shepp_logan(nx, ny, seed),
        PhantomKind::Disks => disks(nx, ny, seed),
    };
    Ok(Phantom {
        magnetization,
        offres_map: Array2::zeros((nx, ny)),
    })
}

/// Ring of Gaussian-lobe sensitivities with mild per-coil phase ramps.
/// Maps are strictly positive in magnitude, so the coil sum-of-squares
/// never vanishes on the support.
pub fn make_coils(nx: usize, ny: usize, coils: usize, smoothness: f64, seed: u64) -> Result<CoilSet> {
    if coils < 1 {
        return Err(GhostError::InvalidConfig("need at least one coil".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = smoothness.max(0.2);
    let mut maps = Vec::with_capacity(coils);
    for c in 0..coils {
        let angle = 2.0 * std::f64::consts::PI * c as f64 / coils as f64
            + rng.gen_range(-0.1..0.1);
        let (cu, cv) = (0.95 * angle.cos(), 0.95 * angle.sin());
        let p0 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let pu = rng.gen_range(-0.5..0.5);
        let pv = rng.gen_range(-0.5..0.5);
        maps.push(Array2::from_shape_fn((nx, ny), |(x, y)| {
            let u = normalized_coords(nx, x);
            let v = normalized_coords(ny, y);
            let d2 = (u - cu).powi(2) + (v - cv).powi(2);
            let mag = (-d2 / (2.0 * sigma * sigma)).exp();
            Complex64::from_polar(mag, p0 + pu * u + pv * v)
        }));
    }
    Ok(CoilSet { maps })
}
