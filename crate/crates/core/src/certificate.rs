//! Global-optimality certificate for a stationary factor: the lifted point
//! `Y Y^*` is optimal iff `S_Y = grad_X f0(Y Y^*) + lambda I` is PSD.

use crate::eigen::{smallest_eigpair_with, EigenConfig, HermitianOperator};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64};
use crate::measurement::{row_norms_sq, scale_rows, MeasurementEnsemble};
use crate::objective::ObjectiveSpec;

/// Matrix-free `S_Y = A^*(w) + lambda I`, with `w = dF0/dt` at `t = A(Y Y^*)`.
#[derive(Debug, Clone)]
pub struct CertificateOperator<'a> {
    ens: &'a MeasurementEnsemble,
    weights: Vec<f64>,
    lambda: f64,
}

impl<'a> CertificateOperator<'a> {
    pub fn new(spec: &ObjectiveSpec, ens: &'a MeasurementEnsemble, y: &CMat) -> Result<Self> {
        ens.check_factor(y, "factor")?;
        Ok(Self::from_intensities(spec, ens, &row_norms_sq(&ens.project(y))))
    }

    pub(crate) fn from_intensities(spec: &ObjectiveSpec, ens: &'a MeasurementEnsemble, t: &[f64]) -> Self {
        CertificateOperator { ens, weights: spec.weights(ens.b(), t), lambda: spec.lambda }
    }
}

impl HermitianOperator for CertificateOperator<'_> {
    fn dim(&self) -> usize {
        self.ens.n()
    }

    fn is_real(&self) -> bool {
        self.ens.field().is_real()
    }

    fn apply(&self, x: &CMat) -> CMat {
        let mut u = self.ens.project(x);
        scale_rows(&mut u, &self.weights);
        self.ens.back_project(&u) + x * C64::new(self.lambda, 0.0)
    }
}

/// `S_Y v` for a single vector.
pub fn s_apply(spec: &ObjectiveSpec, ens: &MeasurementEnsemble, y: &CMat, v: &[C64]) -> Result<Vec<C64>> {
    if v.len() != ens.n() {
        return Err(Error::dim(format!("vector has length {}, ensemble has n = {}", v.len(), ens.n())));
    }
    let op = CertificateOperator::new(spec, ens, y)?;
    let x = CMat::from_column_slice(v.len(), 1, v);
    if op.is_real() && !linalg::is_real(&x) {
        return Err(Error::arg("real-field certificate operator acts on real vectors"));
    }
    Ok(op.apply(&x).as_slice().to_vec())
}

#[derive(Debug, Clone)]
pub struct CertificateResult {
    pub nu_min: f64,
    /// Unit eigenvector for `nu_min`.
    pub v: CVec,
    pub psd_within: f64,
    /// `converged && nu_min >= -psd_within`.
    pub is_certified: bool,
    /// False when the eigensolver hit its iteration cap; never certified then.
    pub converged: bool,
    pub residual: f64,
}

pub fn check_certificate(spec: &ObjectiveSpec, ens: &MeasurementEnsemble, y: &CMat, epsilon: f64) -> Result<CertificateResult> {
    check_certificate_with(spec, ens, y, epsilon, &EigenConfig::default())
}

pub fn check_certificate_with(
    spec: &ObjectiveSpec,
    ens: &MeasurementEnsemble,
    y: &CMat,
    epsilon: f64,
    eig: &EigenConfig,
) -> Result<CertificateResult> {
    let op = CertificateOperator::new(spec, ens, y)?;
    certify(&op, epsilon, eig)
}

pub(crate) fn certify(op: &CertificateOperator<'_>, epsilon: f64, eig: &EigenConfig) -> Result<CertificateResult> {
    if !(epsilon >= 0.0) {
        return Err(Error::arg(format!("certificate tolerance must be >= 0, got {epsilon}")));
    }
    let pair = smallest_eigpair_with(op, eig)?;
    Ok(CertificateResult {
        nu_min: pair.value,
        is_certified: pair.converged && pair.value >= -epsilon,
        v: pair.vector,
        psd_within: epsilon,
        converged: pair.converged,
        residual: pair.residual,
    })
}
