//! Small dense helpers on top of `nalgebra` for complex matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Frobenius inner product `<a, b> = trace(a^* b)`.
pub fn inner(a: &CMat, b: &CMat) -> C64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `Re <a, b>`, the real inner product on complex matrices viewed as real vectors.
pub fn re_inner(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn norm_sq(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn is_real(a: &CMat) -> bool {
    a.iter().all(|z| z.im == 0.0)
}

pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Real part and, when any entry has a nonzero imaginary part, the imaginary part.
pub fn split(a: &CMat) -> (RMat, Option<RMat>) {
    let re = a.map(|z| z.re);
    if is_real(a) {
        (re, None)
    } else {
        (re, Some(a.map(|z| z.im)))
    }
}

pub fn join(re: &RMat, im: Option<&RMat>) -> CMat {
    match im {
        Some(im) => re.zip_map(im, C64::new),
        None => re.map(|x| C64::new(x, 0.0)),
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
/// Real symmetric input is decomposed in real arithmetic so the
/// eigenvectors come back exactly real.
pub fn hermitian_eigh(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
    let (vals, vecs) = if is_real(&sym) {
        let e = SymmetricEigen::new(sym.map(|z| z.re));
        (e.eigenvalues.iter().copied().collect::<Vec<_>>(), e.eigenvectors.map(|x| C64::new(x, 0.0)))
    } else {
        let e = SymmetricEigen::new(sym);
        (e.eigenvalues.iter().copied().collect::<Vec<_>>(), e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let sorted_vals = order.iter().map(|&i| vals[i]).collect();
    let sorted_vecs = CMat::from_fn(n, n, |r, c| vecs[(r, order[c])]);
    (sorted_vals, sorted_vecs)
}

/// Rotates the global phase of `v` so that it is as real as possible, then
/// drops the imaginary part. Used for eigenvectors of real symmetric operators.
pub fn realify(v: &mut CVec) {
    let s: C64 = v.iter().map(|z| z * z).sum();
    if s.norm() > 0.0 {
        let phase = (s / s.norm()).sqrt();
        for z in v.iter_mut() {
            *z = C64::new((*z * phase.conj()).re, 0.0);
        }
    } else {
        for z in v.iter_mut() {
            z.im = 0.0;
        }
    }
    let nrm = v.norm();
    if nrm > 0.0 {
        *v /= C64::new(nrm, 0.0);
    }
}

/// Singular values of `a`, descending.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Leading singular triple `(sigma1, u1)` of `a`.
pub fn top_singular(a: &CMat) -> (f64, CVec) {
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let (k, s) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap_or((0, 0.0));
    (s, u.column(k).into_owned())
}

/// Modified Gram–Schmidt (two passes) of `w` against the first `k` columns of `basis`.
/// Returns the norm of the remainder before normalization.
pub fn orthogonalize_against(basis: &[CVec], w: &mut CVec) -> f64 {
    for _ in 0..2 {
        for q in basis {
            let c = q.dotc(w);
            w.axpy(-c, q, C64::new(1.0, 0.0));
        }
    }
    w.norm()
}
