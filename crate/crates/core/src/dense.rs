//! Reference solver for the lifted convex problem
//! `min_{X >= 0} F0(A(X)) + lambda trace(X)` on the full `n x n` Hermitian
//! variable. Cost is `O(n^3)` per iteration, so it is only meant for small
//! instances used to audit certificates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::measurement::MeasurementEnsemble;
use crate::objective::ObjectiveSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseConfig {
    /// Stop when the projected-gradient step `L ||X - P(X - grad / L)||`
    /// falls below this value.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for DenseConfig {
    fn default() -> Self {
        DenseConfig { tol: 1e-10, max_iters: 200_000 }
    }
}

#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub x: CMat,
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

struct Lifted<'a> {
    spec: &'a ObjectiveSpec,
    b: &'a [f64],
    /// Row `i` is `a_i^*`.
    p: CMat,
    real: bool,
}

impl Lifted<'_> {
    fn intensities(&self, x: &CMat) -> Vec<f64> {
        let px = &self.p * x;
        px.row_iter().zip(self.p.row_iter()).map(|(r, a)| r.iter().zip(a.iter()).map(|(u, v)| u * v.conj()).sum::<C64>().re).collect()
    }

    fn value(&self, x: &CMat) -> f64 {
        match self.spec.data_value(self.b, &self.intensities(x)) {
            Ok(v) => v + self.spec.lambda * x.trace().re,
            Err(_) => f64::INFINITY,
        }
    }

    fn gradient(&self, x: &CMat) -> CMat {
        let w = self.spec.weights(self.b, &self.intensities(x));
        let mut wp = self.p.clone();
        for (mut row, wi) in wp.row_iter_mut().zip(&w) {
            row *= C64::new(*wi, 0.0);
        }
        let n = self.p.ncols();
        let g = self.p.adjoint() * wp + CMat::identity(n, n) * C64::new(self.spec.lambda, 0.0);
        let g = (&g + g.adjoint()) * C64::new(0.5, 0.0);
        if self.real {
            g.map(|z| C64::new(z.re, 0.0))
        } else {
            g
        }
    }
}

/// Projection onto the PSD cone by clipping negative eigenvalues.
pub fn psd_project(h: &CMat) -> CMat {
    let (vals, vecs) = linalg::hermitian_eigh(h);
    let n = h.nrows();
    let mut scaled = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        let s = v.max(0.0);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    let x = &scaled * vecs.adjoint();
    (&x + x.adjoint()) * C64::new(0.5, 0.0)
}

/// Accelerated projected gradient with backtracking and adaptive restarts,
/// started from `X = 0`.
pub fn solve_lifted(spec: &ObjectiveSpec, ens: &MeasurementEnsemble, cfg: &DenseConfig) -> Result<DenseSolution> {
    let n = ens.n();
    if n > 256 {
        return Err(Error::arg(format!("dense reference solver is limited to n <= 256, got {n}")));
    }
    let p = ens.dense_rows().map(|z| z.conj());
    let lifted = Lifted { spec, b: ens.b(), p, real: ens.field().is_real() };

    let mut x = CMat::zeros(n, n);
    let mut fx = lifted.value(&x);
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut lip = 1.0f64;
    let mut residual = f64::INFINITY;
    for it in 1..=cfg.max_iters {
        let fz = lifted.value(&z);
        let gz = lifted.gradient(&z);
        let (x_new, f_new) = loop {
            let cand = psd_project(&(&z - &gz * C64::new(1.0 / lip, 0.0)));
            let d = &cand - &z;
            let f_cand = lifted.value(&cand);
            let model = fz + linalg::re_inner(&gz, &d) + 0.5 * lip * linalg::norm_sq(&d);
            if f_cand <= model + 1e-15 * fz.abs() || lip > 1e300 {
                break (cand, f_cand);
            }
            lip *= 2.0;
        };
        residual = lip * (&x_new - &z).norm();
        if f_new > fx {
            // Restart the momentum from the last iterate.
            z = x.clone();
            t = 1.0;
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &x_new + (&x_new - &x) * C64::new((t - 1.0) / t_new, 0.0);
        t = t_new;
        x = x_new;
        fx = f_new;
        lip *= 0.95;
        if residual <= cfg.tol {
            return Ok(DenseSolution { x, value: fx, iterations: it, residual, converged: true });
        }
    }
    Ok(DenseSolution { x, value: fx, iterations: cfg.max_iters, residual, converged: false })
}
