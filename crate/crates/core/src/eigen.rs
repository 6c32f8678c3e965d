//! Smallest eigenpair of a matrix-free Hermitian operator.
//!
//! Restarted Rayleigh–Ritz on a Krylov-type subspace: each step appends the
//! residual of the current smallest Ritz pair, which spans the same space as
//! Lanczos in exact arithmetic. When the basis is full it is compressed to the
//! lowest Ritz vectors (a thick restart).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64, ZERO};
use crate::rng::{complex_normal, rng_from_seed, standard_normal};

pub trait HermitianOperator {
    fn dim(&self) -> usize;

    /// True if the operator maps real vectors to real vectors; the solver
    /// then works in real arithmetic and returns a real eigenvector.
    fn is_real(&self) -> bool;

    /// Applies the operator to each column of `x`.
    fn apply(&self, x: &CMat) -> CMat;
}

/// Explicit Hermitian matrix as an operator.
#[derive(Debug, Clone)]
pub struct DenseHermitian {
    h: CMat,
    real: bool,
}

impl DenseHermitian {
    pub fn new(h: CMat) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::dim("operator matrix must be square"));
        }
        let asym = (&h - h.adjoint()).norm();
        if asym > 1e-10 * h.norm().max(1.0) {
            return Err(Error::arg(format!("matrix is not Hermitian (||H - H*|| = {asym:e})")));
        }
        let real = linalg::is_real(&h);
        Ok(DenseHermitian { h, real })
    }
}

impl HermitianOperator for DenseHermitian {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn is_real(&self) -> bool {
        self.real
    }

    fn apply(&self, x: &CMat) -> CMat {
        &self.h * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenConfig {
    /// Residual bound `||S v - nu v|| <= tol * max(1, |nu|)`.
    pub tol: f64,
    /// Operator applications beyond the start block.
    pub max_iters: usize,
    pub seed: u64,
    pub block: usize,
    pub max_basis: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig { tol: 1e-6, max_iters: 500, seed: 0x5eed_e16e, block: 3, max_basis: 40 }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// Unit-norm eigenvector.
    pub vector: CVec,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn random_vector(n: usize, real: bool, rng: &mut crate::rng::SeededRng) -> CVec {
    CVec::from_fn(n, |_, _| if real { C64::new(standard_normal(rng), 0.0) } else { complex_normal(rng) })
}

fn apply_vec<O: HermitianOperator + ?Sized>(op: &O, v: &CVec) -> CVec {
    let x = CMat::from_column_slice(v.len(), 1, v.as_slice());
    let y = op.apply(&x);
    CVec::from_column_slice(y.as_slice())
}

/// Smallest eigenvalue and eigenvector of `op` with the default settings
/// except for the tolerance, iteration cap and seed.
pub fn smallest_eigpair<O: HermitianOperator + ?Sized>(op: &O, tol: f64, max_iters: usize, seed: u64) -> Result<EigenPair> {
    smallest_eigpair_with(op, &EigenConfig { tol, max_iters, seed, ..EigenConfig::default() })
}

pub fn smallest_eigpair_with<O: HermitianOperator + ?Sized>(op: &O, cfg: &EigenConfig) -> Result<EigenPair> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::dim("operator has dimension 0"));
    }
    if !(cfg.tol > 0.0) || cfg.block == 0 {
        return Err(Error::arg("eigensolver needs tol > 0 and a nonempty start block"));
    }
    let real = op.is_real();
    let cap = cfg.max_basis.max(cfg.block + 1).min(n);
    let keep = (cap / 4).max(cfg.block).min(cap.saturating_sub(1)).max(1);
    let mut rng = rng_from_seed(cfg.seed);

    let mut basis: Vec<CVec> = Vec::with_capacity(cap);
    let mut images: Vec<CVec> = Vec::with_capacity(cap);
    let mut start = Vec::new();
    for _ in 0..cfg.block.min(n) {
        let mut v = random_vector(n, real, &mut rng);
        let nv = linalg::orthogonalize_against(&start, &mut v);
        if nv > 1e-10 {
            start.push(v.unscale(nv));
        }
    }
    if start.is_empty() {
        return Err(Error::arg("could not form a start block"));
    }
    let block = CMat::from_columns(&start);
    let ab = op.apply(&block);
    for (j, v) in start.into_iter().enumerate() {
        images.push(ab.column(j).into_owned());
        basis.push(v);
    }

    let mut iterations = 0usize;
    loop {
        let k = basis.len();
        let mut h = CMat::from_fn(k, k, |i, j| basis[i].dotc(&images[j]));
        h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let (vals, vecs) = linalg::hermitian_eigh(&h);
        let combine = |src: &[CVec], j: usize| -> CVec {
            let mut out = CVec::from_element(n, ZERO);
            for (i, s) in src.iter().enumerate() {
                out.axpy(vecs[(i, j)], s, C64::new(1.0, 0.0));
            }
            out
        };
        let theta = vals[0];
        let x = combine(&basis, 0);
        let ax = combine(&images, 0);
        let r = &ax - &x * C64::new(theta, 0.0);
        let scale = theta.abs().max(1.0);

        let budget_spent = iterations >= cfg.max_iters;
        if r.norm() <= cfg.tol * scale || k == n || budget_spent {
            // Explicit residual, independent of the accumulated images.
            let mut v = x.unscale(x.norm());
            if real {
                v.iter_mut().for_each(|z| z.im = 0.0);
                v.unscale_mut(v.norm());
            }
            let av = apply_vec(op, &v);
            let nu = v.dotc(&av).re;
            let residual = (&av - &v * C64::new(nu, 0.0)).norm();
            let converged = residual <= cfg.tol * nu.abs().max(1.0);
            if converged || budget_spent {
                return Ok(EigenPair { value: nu, vector: v, residual, converged, iterations });
            }
        }

        if k >= cap {
            let mut new_basis = Vec::with_capacity(keep + 1);
            let mut new_images = Vec::with_capacity(keep + 1);
            for j in 0..keep.min(k) {
                new_basis.push(combine(&basis, j));
                new_images.push(combine(&images, j));
            }
            // Re-orthonormalize to stop drift, transforming images alike.
            let mut ortho: Vec<CVec> = Vec::with_capacity(new_basis.len());
            let mut ortho_img: Vec<CVec> = Vec::with_capacity(new_basis.len());
            for (v, av) in new_basis.into_iter().zip(new_images) {
                let mut w = v.clone();
                let nw = linalg::orthogonalize_against(&ortho, &mut w);
                if nw > 1e-8 {
                    // Nearly orthonormal already, so the combined image stays accurate.
                    let coef = 1.0 / nw;
                    let mut img = av;
                    for (q, aq) in ortho.iter().zip(&ortho_img) {
                        img.axpy(-q.dotc(&v), aq, C64::new(1.0, 0.0));
                    }
                    ortho.push(w.unscale(nw));
                    ortho_img.push(img * C64::new(coef, 0.0));
                }
            }
            basis = ortho;
            images = ortho_img;
        }

        let mut w = r;
        let mut nw = linalg::orthogonalize_against(&basis, &mut w);
        if !(nw > 1e-12 * scale) {
            // Residual already inside the basis; expand with a fresh vector.
            w = random_vector(n, real, &mut rng);
            nw = linalg::orthogonalize_against(&basis, &mut w);
            if !(nw > 1e-12) {
                iterations = iterations.max(cfg.max_iters);
                continue;
            }
        }
        let w = w.unscale(nw);
        images.push(apply_vec(op, &w));
        basis.push(w);
        iterations += 1;
    }
}
