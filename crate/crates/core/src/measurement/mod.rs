//! Measurement ensembles `{a_i}` with intensities `b_i = |a_i^* x|^2`, and the
//! matrix-free lifted operator `A(X)_i = trace(a_i a_i^* X)` with its adjoint.
//!
//! Every operation works on the factor `Y` of `X = Y Y^*` and never forms an
//! `n x n` matrix. For [`ScalarField::Real`] ensembles the lifted variable is
//! real symmetric; factors passed to them must be real.

mod file;
pub mod fourier;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg::{self, CMat, RMat, C64};
use crate::rng::{complex_normal, rng_from_seed, standard_normal};
pub use fourier::Fft2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarField {
    Real,
    Complex,
}

impl ScalarField {
    pub fn is_real(self) -> bool {
        matches!(self, ScalarField::Real)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScalarField::Real => "real",
            ScalarField::Complex => "complex",
        }
    }
}

impl std::str::FromStr for ScalarField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(ScalarField::Real),
            "complex" => Ok(ScalarField::Complex),
            other => Err(Error::arg(format!("unknown field `{other}` (expected real|complex)"))),
        }
    }
}

/// The `n x p` factor `Y`; the lifted variable is `Y Y^*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFactor(CMat);

impl ComplexFactor {
    pub fn new(y: CMat) -> Result<Self> {
        let (n, p) = y.shape();
        if n == 0 || p == 0 || p > n {
            return Err(Error::dim(format!("factor must satisfy 1 <= p <= n, got {n}x{p}")));
        }
        if !linalg::all_finite(&y) {
            return Err(Error::arg("factor has non-finite entries"));
        }
        Ok(ComplexFactor(y))
    }

    pub fn from_vector(x: &[C64]) -> Result<Self> {
        Self::new(CMat::from_column_slice(x.len(), 1, x))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn p(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        self.0.column(j).iter().copied().collect()
    }

    /// `[Y | 0]`.
    pub fn pad_zero_column(&self) -> Result<Self> {
        Self::new(self.0.clone().resize_horizontally(self.p() + 1, linalg::ZERO))
    }
}

/// Dense measurement vectors stored one per row (`m x n`), split into real
/// and imaginary parts so real ensembles run in real arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRows {
    re: RMat,
    im: Option<RMat>,
}

impl DenseRows {
    pub fn from_complex(rows: &CMat) -> Self {
        let (re, im) = linalg::split(rows);
        DenseRows { re, im }
    }

    pub fn rows(&self) -> CMat {
        linalg::join(&self.re, self.im.as_ref())
    }

    /// `U_ij = a_i^* y_j`, i.e. `conj(A) Y`.
    fn project(&self, y: &CMat) -> CMat {
        let (yr, yi) = linalg::split(y);
        match (&self.im, yi) {
            (None, None) => linalg::join(&(&self.re * &yr), None),
            (None, Some(yi)) => linalg::join(&(&self.re * &yr), Some(&(&self.re * &yi))),
            (Some(ai), None) => linalg::join(&(&self.re * &yr), Some(&(-(ai * &yr)))),
            (Some(ai), Some(yi)) => {
                let re = &self.re * &yr + ai * &yi;
                let im = &self.re * &yi - ai * &yr;
                linalg::join(&re, Some(&im))
            }
        }
    }

    /// `sum_i a_i W_i`, i.e. `A^T W`.
    fn back_project(&self, w: &CMat) -> CMat {
        let (wr, wi) = linalg::split(w);
        match (&self.im, wi) {
            (None, None) => linalg::join(&self.re.tr_mul(&wr), None),
            (None, Some(wi)) => linalg::join(&self.re.tr_mul(&wr), Some(&self.re.tr_mul(&wi))),
            (Some(ai), None) => linalg::join(&self.re.tr_mul(&wr), Some(&ai.tr_mul(&wr))),
            (Some(ai), Some(wi)) => {
                let re = self.re.tr_mul(&wr) - ai.tr_mul(&wi);
                let im = self.re.tr_mul(&wi) + ai.tr_mul(&wr);
                linalg::join(&re, Some(&im))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum Backend {
    DenseRows(DenseRows),
    FourierOversampled(Fft2),
}

/// Measurement vectors plus the (possibly noisy) intensity data `b`.
/// Immutable after construction apart from replacing `b`.
#[derive(Debug, Clone)]
pub struct MeasurementEnsemble {
    field: ScalarField,
    n: usize,
    m: usize,
    backend: Backend,
    b: Vec<f64>,
}

impl MeasurementEnsemble {
    pub fn from_rows(rows: &CMat, field: ScalarField, b: Vec<f64>) -> Result<Self> {
        let (m, n) = rows.shape();
        if m == 0 || n == 0 {
            return Err(Error::dim("ensemble needs m >= 1 and n >= 1"));
        }
        if field.is_real() && !linalg::is_real(rows) {
            return Err(Error::arg("real-field ensemble with complex measurement vectors"));
        }
        let ens = MeasurementEnsemble {
            field,
            n,
            m,
            backend: Backend::DenseRows(DenseRows::from_complex(rows)),
            b: vec![0.0; m],
        };
        ens.with_intensities(b)
    }

    /// Replaces the intensity vector.
    pub fn with_intensities(mut self, b: Vec<f64>) -> Result<Self> {
        if b.len() != self.m {
            return Err(Error::dim(format!("b has length {}, expected m = {}", b.len(), self.m)));
        }
        if let Some(i) = b.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "intensity".into(), index: i });
        }
        if let Some(i) = b.iter().position(|&v| v < 0.0) {
            return Err(Error::arg(format!("negative intensity b[{i}] = {}", b[i])));
        }
        self.b = b;
        Ok(self)
    }

    /// Like [`MeasurementEnsemble::with_intensities`] but accepts negative
    /// entries, which unclamped additive noise produces under least squares.
    pub fn with_noisy_intensities(mut self, b: Vec<f64>) -> Result<Self> {
        if b.len() != self.m {
            return Err(Error::dim(format!("b has length {}, expected m = {}", b.len(), self.m)));
        }
        if let Some(i) = b.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "intensity".into(), index: i });
        }
        self.b = b;
        Ok(self)
    }

    /// Sets `b = A(x x^*)` for a planted signal `x`.
    pub fn with_planted(self, x: &[C64]) -> Result<Self> {
        let b = self.forward_intensity(&CMat::from_column_slice(x.len(), 1, x))?;
        self.with_intensities(b)
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn mean_b(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.m as f64
    }

    pub(crate) fn check_factor(&self, y: &CMat, what: &str) -> Result<()> {
        if y.nrows() != self.n {
            return Err(Error::dim(format!("{what} has {} rows, ensemble has n = {}", y.nrows(), self.n)));
        }
        if self.field.is_real() && !linalg::is_real(y) {
            return Err(Error::arg(format!("{what} must be real for a real-field ensemble")));
        }
        Ok(())
    }

    /// `U = [a_i^* y_j]`, shape `m x p`.
    pub(crate) fn project(&self, y: &CMat) -> CMat {
        match &self.backend {
            Backend::DenseRows(d) => d.project(y),
            Backend::FourierOversampled(f) => f.project(y),
        }
    }

    /// `sum_i a_i W_i`, shape `n x q`. For real ensembles the result is the
    /// real part, which is the adjoint on real symmetric lifted variables.
    pub(crate) fn back_project(&self, w: &CMat) -> CMat {
        let out = match &self.backend {
            Backend::DenseRows(d) => d.back_project(w),
            Backend::FourierOversampled(f) => f.back_project(w),
        };
        if self.field.is_real() {
            out.map(|z| C64::new(z.re, 0.0))
        } else {
            out
        }
    }

    /// `A(Y Y^*)_i = sum_j |a_i^* y_j|^2`.
    pub fn forward_intensity(&self, y: &CMat) -> Result<Vec<f64>> {
        self.check_factor(y, "factor")?;
        Ok(row_norms_sq(&self.project(y)))
    }

    /// `A^*(w) V = sum_i w_i a_i (a_i^* V)`.
    pub fn adjoint_weighted_apply(&self, w: &[f64], v: &CMat) -> Result<CMat> {
        if w.len() != self.m {
            return Err(Error::dim(format!("weights have length {}, expected m = {}", w.len(), self.m)));
        }
        if let Some(i) = w.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what: "weight".into(), index: i });
        }
        self.check_factor(v, "block")?;
        let mut u = self.project(v);
        scale_rows(&mut u, w);
        Ok(self.back_project(&u))
    }

    /// Dense copy of the measurement vectors as rows (`m x n`). Materializes
    /// the Fourier matrix, so only meant for small reference computations.
    pub fn dense_rows(&self) -> CMat {
        match &self.backend {
            Backend::DenseRows(d) => d.rows(),
            Backend::FourierOversampled(f) => {
                // Row i of the result is a_i, and project(e_k)_i = conj(a_i[k]).
                let eye = CMat::identity(self.n, self.n);
                f.project(&eye).map(|z| z.conj())
            }
        }
    }
}

pub(crate) fn row_norms_sq(u: &CMat) -> Vec<f64> {
    let mut t = vec![0.0; u.nrows()];
    for col in u.column_iter() {
        for (ti, z) in t.iter_mut().zip(col.iter()) {
            *ti += z.norm_sqr();
        }
    }
    t
}

pub(crate) fn scale_rows(u: &mut CMat, w: &[f64]) {
    for mut col in u.column_iter_mut() {
        for (z, &wi) in col.iter_mut().zip(w) {
            *z *= wi;
        }
    }
}

/// Gaussian ensemble with i.i.d. entries: `N(0,1)` (real) or
/// `N(0,1/2) + i N(0,1/2)` (complex), drawn row by row from the seeded stream.
/// Intensities are left at zero.
pub fn make_gaussian_ensemble(n: usize, m: usize, field: ScalarField, seed: u64) -> Result<MeasurementEnsemble> {
    if n == 0 || m == 0 {
        return Err(Error::dim(format!("gaussian ensemble needs n, m >= 1 (got n = {n}, m = {m})")));
    }
    let mut rng = rng_from_seed(seed);
    let mut data = Vec::with_capacity(m * n);
    for _ in 0..m * n {
        data.push(match field {
            ScalarField::Real => C64::new(standard_normal(&mut rng), 0.0),
            ScalarField::Complex => complex_normal(&mut rng),
        });
    }
    MeasurementEnsemble::from_rows(&CMat::from_row_slice(m, n, &data), field, vec![0.0; m])
}

/// Oversampled Fourier ensemble of a nonnegative real image; `b` holds the
/// squared moduli of the unitary DFT of the `2n1 x 2n2` zero-padded image.
pub fn make_fourier_ensemble(image: &Image) -> Result<MeasurementEnsemble> {
    let (n1, n2) = (image.rows, image.cols);
    if n1 < 2 || n2 < 2 {
        return Err(Error::dim(format!("fourier ensemble needs an image of at least 2x2, got {n1}x{n2}")));
    }
    if let Some(i) = image.data.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::arg(format!("pixel {i} is negative or not a number: {}", image.data[i])));
    }
    let fft = Fft2::new(n1, n2);
    let ens = MeasurementEnsemble {
        field: ScalarField::Real,
        n: fft.n(),
        m: fft.m(),
        backend: Backend::FourierOversampled(fft),
        b: vec![0.0; 4 * n1 * n2],
    };
    let x: Vec<C64> = image.data.iter().map(|&v| C64::new(v, 0.0)).collect();
    ens.with_planted(&x)
}

/// Planted signal with i.i.d. standard (complex) normal entries.
pub fn random_signal(n: usize, field: ScalarField, seed: u64) -> Vec<C64> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| match field {
            ScalarField::Real => C64::new(standard_normal(&mut rng), 0.0),
            ScalarField::Complex => complex_normal(&mut rng),
        })
        .collect()
}

/// Random `n x p` factor with i.i.d. Gaussian entries in the given field.
pub fn random_factor(n: usize, p: usize, field: ScalarField, seed: u64) -> Result<ComplexFactor> {
    let v = random_signal(n * p, field, seed);
    ComplexFactor::new(DMatrix::from_column_slice(n, p, &v))
}

pub use file::{load_dense_ensemble, load_factor, save_dense_ensemble, save_factor};
