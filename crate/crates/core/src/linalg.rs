//! Small dense complex linear-algebra helpers shared by the stages.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// `a^H b` for complex vectors.
pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(v: &CVector) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Dominant singular triplet `(sigma, left, right)` of a complex matrix.
#[derive(Debug, Clone)]
pub struct SingularTriplet {
    pub sigma: f64,
    pub left: CVector,
    pub right: CVector,
}

const SQUARING_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 500;

/// Computes the dominant singular triplet by power iteration on the smaller
/// Gram matrix.
///
/// The Gram matrix is repeatedly squared and renormalized, which amounts to
/// power iteration with `2^s` steps after `s` squarings, so even clustered
/// leading singular values separate quickly. The dominant eigenvector is
/// read off the largest column and polished with plain power steps. The
/// returned triplet satisfies `matrix * right == sigma * left` up to
/// rounding, with both vectors of unit norm.
pub fn dominant_singular_triplet(matrix: &CMatrix) -> SingularTriplet {
    let (rows, cols) = matrix.shape();
    let wide = rows <= cols;
    let gram = if wide { matrix * matrix.adjoint() } else { matrix.adjoint() * matrix };
    let n = gram.nrows();
    let scale = gram.norm();
    if scale == 0.0 || !scale.is_finite() {
        let mut left = CVector::zeros(rows);
        let mut right = CVector::zeros(cols);
        left[0] = Complex64::new(1.0, 0.0);
        right[0] = Complex64::new(1.0, 0.0);
        return SingularTriplet { sigma: 0.0, left, right };
    }

    let mut g = &gram / Complex64::new(scale, 0.0);
    for _ in 0..64 {
        let sq = &g * &g;
        let nrm = sq.norm();
        if nrm == 0.0 {
            break;
        }
        let next = sq / Complex64::new(nrm, 0.0);
        let change = (&next - &g).norm();
        g = next;
        if change < SQUARING_TOL {
            break;
        }
    }

    let best = (0..n)
        .max_by(|&a, &b| g.column(a).norm().partial_cmp(&g.column(b).norm()).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    let mut x: CVector = g.column(best).into_owned();
    x /= Complex64::new(x.norm(), 0.0);

    for _ in 0..MAX_ITERATIONS {
        let mut y = &gram * &x;
        let ny = y.norm();
        if ny == 0.0 {
            break;
        }
        y /= Complex64::new(ny, 0.0);
        // Align the phase with the previous iterate before comparing.
        let phase = inner(&y, &x);
        let rot = if phase.norm() > 0.0 { phase / phase.norm() } else { Complex64::new(1.0, 0.0) };
        y *= rot;
        let change = (&y - &x).norm();
        x = y;
        if change < SQUARING_TOL {
            break;
        }
    }

    let (left, right) = if wide {
        let r = matrix.adjoint() * &x;
        (x, r)
    } else {
        let l = matrix * &x;
        (l, x)
    };
    finish_triplet(matrix, left, right, wide)
}

fn finish_triplet(matrix: &CMatrix, left: CVector, right: CVector, wide: bool) -> SingularTriplet {
    let mut right = right;
    let mut left = left;
    if wide {
        let nr = right.norm();
        right /= Complex64::new(nr, 0.0);
        left = matrix * &right;
        let sigma = left.norm();
        left /= Complex64::new(sigma, 0.0);
        SingularTriplet { sigma, left, right }
    } else {
        let nl = left.norm();
        left /= Complex64::new(nl, 0.0);
        right = matrix.adjoint() * &left;
        let sr = right.norm();
        right /= Complex64::new(sr, 0.0);
        left = matrix * &right;
        let sigma = left.norm();
        left /= Complex64::new(sigma, 0.0);
        SingularTriplet { sigma, left, right }
    }
}
