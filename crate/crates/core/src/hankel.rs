//! Hankel lifting and its adjoint, in one and two dimensions, plus the
//! coil-concatenated block matrix used by the low-rank completion solver.
//!
//! Conventions: valid (non-wrapped) windows, so a length-L vector with
//! pencil d lifts to an (L-d+1) x d matrix with entry (i, j) = v[i+j].
//! The 2-D lift slides a dx x dy window over the grid; rows enumerate
//! window positions, columns enumerate window elements, both row-major.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{GhostError, Result};
use crate::volume::VirtualEchoPair;

/// Separable 2-D pencil. Use `dy = 1` for plain 1-D lifting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pencil {
    pub dx: usize,
    pub dy: usize,
}

impl Pencil {
    pub fn new(dx: usize, dy: usize) -> Self {
        Pencil { dx, dy }
    }

    /// Total window size d = dx * dy.
    pub fn d(&self) -> usize {
        self.dx * self.dy
    }

    pub fn rows_for(&self, nx: usize, ny: usize) -> usize {
        (nx - self.dx + 1) * (ny - self.dy + 1)
    }

    pub fn check(&self, nx: usize, ny: usize) -> Result<()> {
        if self.dx == 0 || self.dy == 0 || self.dx > nx || self.dy > ny {
            return Err(GhostError::PencilOutOfRange {
                d: self.d(),
                len: nx * ny,
            });
        }
        Ok(())
    }
}

/// Lift a vector to its (L-d+1) x d Hankel matrix.
pub fn hankel_lift(v: &[Complex64], d: usize) -> Result<Array2<Complex64>> {
    let l = v.len();
    if d == 0 || d > l {
        return Err(GhostError::PencilOutOfRange { d, len: l });
    }
    let m = l - d + 1;
    Ok(Array2::from_shape_fn((m, d), |(i, j)| v[i + j]))
}

/// Adjoint of `hankel_lift`: anti-diagonal sums back to a length-L vector.
pub fn hankel_adjoint(mat: &Array2<Complex64>, d: usize, l: usize) -> Result<Vec<Complex64>> {
    let (m, dd) = mat.dim();
    if dd != d || m != l.saturating_sub(d) + 1 || d == 0 || d > l {
        return Err(GhostError::ShapeMismatch(format!(
            "hankel_adjoint: matrix {m}x{dd} does not match L={l}, d={d}"
        )));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); l];
    for i in 0..m {
        for j in 0..d {
            out[i + j] += mat[[i, j]];
        }
    }
    Ok(out)
}

/// Anti-diagonal multiplicities: hankel_adjoint(hankel_lift(v)) = w .* v.
pub fn hankel_weights(l: usize, d: usize) -> Vec<f64> {
    let m = l - d + 1;
    let mut w = vec![0.0; l];
    for n in 0..l {
        let lo = n.saturating_sub(d - 1);
        let hi = n.min(m - 1);
        w[n] = (hi + 1 - lo) as f64;
    }
    w
}

/// Lift a 2-D grid with a separable window.
pub fn hankel_lift2(g: &Array2<Complex64>, pencil: Pencil) -> Result<Array2<Complex64>> {
    let (nx, ny) = g.dim();
    pencil.check(nx, ny)?;
    let my = ny - pencil.dy + 1;
    let rows = pencil.rows_for(nx, ny);
    let mut out = Array2::zeros((rows, pencil.d()));
    for r in 0..rows {
        let ix = r / my;
        let iy = r % my;
        for jx in 0..pencil.dx {
            for jy in 0..pencil.dy {
                out[[r, jx * pencil.dy + jy]] = g[[ix + jx, iy + jy]];
            }
        }
    }
    Ok(out)
}

/// Adjoint of `hankel_lift2`.
pub fn hankel_adjoint2(
    mat: &Array2<Complex64>,
    pencil: Pencil,
    nx: usize,
    ny: usize,
) -> Result<Array2<Complex64>> {
    pencil.check(nx, ny)?;
    let my = ny - pencil.dy + 1;
    let rows = pencil.rows_for(nx, ny);
    if mat.dim() != (rows, pencil.d()) {
        return Err(GhostError::ShapeMismatch(format!(
            "hankel_adjoint2: matrix {:?} does not match grid {nx}x{ny} with pencil {:?}",
            mat.dim(),
            pencil
        )));
    }
    let mut out = Array2::zeros((nx, ny));
    for r in 0..rows {
        let ix = r / my;
        let iy = r % my;
        for jx in 0..pencil.dx {
            for jy in 0..pencil.dy {
                out[[ix + jx, iy + jy]] += mat[[r, jx * pencil.dy + jy]];
            }
        }
    }
    Ok(out)
}

/// Separable multiplicity weights for the 2-D lift.
pub fn hankel_weights2(pencil: Pencil, nx: usize, ny: usize) -> Array2<f64> {
    let wx = hankel_weights(nx, pencil.dx);
    let wy = hankel_weights(ny, pencil.dy);
    Array2::from_shape_fn((nx, ny), |(x, y)| wx[x] * wy[y])
}

/// Concatenated Hankel matrix over both parities of all coils, with
/// column blocks ordered [g+ coil0 | g- coil0 | g+ coil1 | ...].
#[derive(Debug, Clone)]
pub struct HankelBlock {
    pub matrix: Array2<Complex64>,
    pub pencil: Pencil,
    pub coils: usize,
}

impl HankelBlock {
    pub fn rows(&self) -> usize {
        self.matrix.dim().0
    }

    pub fn cols(&self) -> usize {
        self.matrix.dim().1
    }
}

/// Build the concatenated block from a virtual echo pair.
pub fn build_block(pair: &VirtualEchoPair, pencil: Pencil) -> Result<HankelBlock> {
    let coils = pair.coils();
    if coils == 0 {
        return Err(GhostError::ShapeMismatch("pair has no coils".into()));
    }
    let (nx, ny) = pair.shape();
    for grid in pair.g_plus.iter().chain(pair.g_minus.iter()) {
        if grid.dim() != (nx, ny) {
            return Err(GhostError::ShapeMismatch(
                "coil grids disagree in shape".into(),
            ));
        }
    }
    pencil.check(nx, ny)?;
    let rows = pencil.rows_for(nx, ny);
    let d = pencil.d();
    let mut matrix = Array2::zeros((rows, 2 * d * coils));
    for c in 0..coils {
        let hp = hankel_lift2(&pair.g_plus[c], pencil)?;
        let hm = hankel_lift2(&pair.g_minus[c], pencil)?;
        let base = 2 * d * c;
        for r in 0..rows {
            for j in 0..d {
                matrix[[r, base + j]] = hp[[r, j]];
                matrix[[r, base + d + j]] = hm[[r, j]];
            }
        }
    }
    Ok(HankelBlock {
        matrix,
        pencil,
        coils,
    })
}
