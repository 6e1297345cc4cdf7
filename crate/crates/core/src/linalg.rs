//! Small dense linear algebra helpers on top of nalgebra's SVD.

use nalgebra::{DMatrix, DVector, Dyn, SVD};

/// nalgebra's default stopping rule (`eps = f64::EPSILON` relative to the
/// neighbouring diagonal) can stop with errors far above rounding when two
/// singular values nearly coincide, e.g. `||U S V^T - A|| ~ 1e-5` for some
/// 9 x 8 jet matrices. Iterating until the off-diagonal is negligible fixes
/// that; the default rule is only a fallback.
const SVD_EPS: f64 = 1e-20;
const SVD_MAX_ITER: usize = 100_000;

pub fn svd(a: &DMatrix<f64>, u: bool, v: bool) -> SVD<f64, Dyn, Dyn> {
    a.clone()
        .try_svd(u, v, SVD_EPS, SVD_MAX_ITER)
        .unwrap_or_else(|| a.clone().svd(u, v))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = svd(a, false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// `sigma_min / sigma_max` over the `min(rows, cols)` singular values; 0 for
/// the zero matrix.
pub fn singular_ratio(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&max), Some(&min)) if max > 0.0 => min / max,
        _ => 0.0,
    }
}

/// Unit vector spanning (approximately) the left null space of an `N x (N-1)`
/// matrix, together with `sigma_{N-1} / sigma_1` of that matrix.
///
/// `A^T` is padded with a zero row to a square `N x N` matrix so that the SVD
/// returns a full set of right singular vectors; the one belonging to the
/// smallest singular value annihilates every column of `A`.
pub fn left_null_vector(a: &DMatrix<f64>) -> (Vec<f64>, f64) {
    let (n, q) = a.shape();
    debug_assert_eq!(n, q + 1);
    let mut padded = DMatrix::zeros(n, n);
    padded.view_mut((0, 0), (q, n)).copy_from(&a.transpose());
    let dec = svd(&padded, false, true);
    let v_t = dec.v_t.expect("requested V^T");
    let s = &dec.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let ratio = if s[order[0]] > 0.0 {
        s[order[q - 1]] / s[order[0]]
    } else {
        0.0
    };
    let kernel_row = order[n - 1];
    let mut kappa: Vec<f64> = v_t.row(kernel_row).iter().copied().collect();
    let nrm = norm(&kappa);
    kappa.iter_mut().for_each(|k| *k /= nrm);
    (kappa, ratio)
}

/// Least-squares / minimum-norm solution of `A x = b` via SVD, treating
/// singular values below `cutoff` as zero. Returns `(x, ||A x - b||_2)`.
pub fn lstsq(a: &DMatrix<f64>, b: &[f64], cutoff: f64) -> (Vec<f64>, f64) {
    let dec = svd(a, true, true);
    let rhs = DVector::from_column_slice(b);
    let x = dec.solve(&rhs, cutoff).expect("U and V^T were computed");
    let r = a * &x - &rhs;
    (x.iter().copied().collect(), r.norm())
}
