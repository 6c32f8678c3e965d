//! Factorized objectives `f(Y) = f0(A(Y Y^*)) + lambda ||Y||_F^2` for the
//! least-squares and Poisson data fidelities.
//!
//! Gradients are real gradients: the directional derivative along `D` is
//! `Re <G, D>`. With `w = dF0/dt` evaluated at `t = A(Y Y^*)`, the lifted
//! gradient is `A^*(w) + lambda I` and `G = 2 (A^*(w) + lambda I) Y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::measurement::{row_norms_sq, scale_rows, MeasurementEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    LeastSquares,
    Poisson,
}

impl std::str::FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ls" | "least-squares" | "least_squares" => Ok(Fidelity::LeastSquares),
            "poisson" => Ok(Fidelity::Poisson),
            other => Err(Error::arg(format!("unknown fidelity `{other}` (expected ls|poisson)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub fidelity: Fidelity,
    pub lambda: f64,
    /// Lower clamp for `A(Y Y^*)` inside the Poisson log and division.
    pub poisson_floor: f64,
}

impl ObjectiveSpec {
    pub fn new(fidelity: Fidelity, lambda: f64, poisson_floor: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::arg(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if !(poisson_floor > 0.0) {
            return Err(Error::arg(format!("poisson_floor must be > 0, got {poisson_floor}")));
        }
        Ok(ObjectiveSpec { fidelity, lambda, poisson_floor })
    }

    /// Floor `1e-12 * max(1, mean(b))`.
    pub fn default_floor(ens: &MeasurementEnsemble) -> f64 {
        1e-12 * ens.mean_b().max(1.0)
    }

    pub fn least_squares(lambda: f64) -> Self {
        ObjectiveSpec { fidelity: Fidelity::LeastSquares, lambda, poisson_floor: 1e-12 }
    }

    pub fn poisson(lambda: f64, ens: &MeasurementEnsemble) -> Self {
        ObjectiveSpec { fidelity: Fidelity::Poisson, lambda, poisson_floor: Self::default_floor(ens) }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        ObjectiveSpec { lambda, ..self }
    }

    /// Data term `F0(t)` for intensities `t`.
    pub(crate) fn data_value(&self, b: &[f64], t: &[f64]) -> Result<f64> {
        let m = b.len() as f64;
        let mut acc = 0.0;
        for (i, (&ti, &bi)) in t.iter().zip(b).enumerate() {
            let term = match self.fidelity {
                Fidelity::LeastSquares => (ti - bi).powi(2) / (2.0 * m),
                Fidelity::Poisson => {
                    if bi == 0.0 {
                        ti
                    } else {
                        ti - bi * ti.max(self.poisson_floor).ln()
                    }
                }
            };
            if !term.is_finite() {
                return Err(Error::NonFinite { what: "objective term".into(), index: i });
            }
            acc += term;
        }
        Ok(acc)
    }

    /// `dF0/dt_i`.
    pub(crate) fn weight(&self, b: f64, t: f64, m: usize) -> f64 {
        match self.fidelity {
            Fidelity::LeastSquares => (t - b) / m as f64,
            Fidelity::Poisson => 1.0 - b / t.max(self.poisson_floor),
        }
    }

    /// `d^2 F0 / dt_i^2`.
    fn weight_slope(&self, b: f64, t: f64, m: usize) -> f64 {
        match self.fidelity {
            Fidelity::LeastSquares => 1.0 / m as f64,
            Fidelity::Poisson => {
                if t >= self.poisson_floor {
                    b / (t * t)
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn weights(&self, b: &[f64], t: &[f64]) -> Vec<f64> {
        let m = b.len();
        b.iter().zip(t).map(|(&bi, &ti)| self.weight(bi, ti, m)).collect()
    }
}

/// Cached evaluation at one factor: projections `U = [a_i^* y_j]`,
/// intensities and objective value.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub u: CMat,
    pub t: Vec<f64>,
    pub value: f64,
}

impl Evaluation {
    pub fn new(spec: &ObjectiveSpec, ens: &MeasurementEnsemble, y: &CMat) -> Result<Self> {
        Self::from_projection(spec, ens, y, ens.project(y))
    }

    pub fn from_projection(spec: &ObjectiveSpec, ens: &MeasurementEnsemble, y: &CMat, u: CMat) -> Result<Self> {
        let t = row_norms_sq(&u);
        let value = spec.data_value(ens.b(), &t)? + spec.lambda * linalg::norm_sq(y);
        if !value.is_finite() {
            return Err(Error::NonFinite { what: "objective value".into(), index: 0 });
        }
        Ok(Evaluation { u, t, value })
    }

    pub fn gradient(&self, spec: &ObjectiveSpec, ens: &MeasurementEnsemble, y: &CMat) -> CMat {
        let w = spec.weights(ens.b(), &self.t);
        let mut wu = self.u.clone();
        scale_rows(&mut wu, &w);
        let mut g = ens.back_project(&wu);
        g += y * C64::new(spec.lambda, 0.0);
        g * C64::new(2.0, 0.0)
    }
}

fn check(ens: &MeasurementEnsemble, y: &CMat) -> Result<()> {
    if y.nrows() != ens.n() {
        return Err(Error::dim(format!("factor has {} rows, ensemble has n = {}", y.nrows(), ens.n())));
    }
    if ens.field().is_real() && !linalg::is_real(y) {
        return Err(Error::arg("real-field ensemble requires a real factor"));
    }
    Ok(())
}

/// `f0(A(Y Y^*)) + lambda ||Y||_F^2`.
pub fn value(spec: &ObjectiveSpec, ens: &MeasurementEnsemble, y: &CMat) -> Result<f64> {
    check(ens, y)?;
    Ok(Evaluation::new(spec, ens, y)?.value)
}

/// Least squares: `(2/m) A^*(A(YY^*) - b) Y + 2 lambda Y`;
/// Poisson: `2 A^*(1 - b / A(YY^*)) Y + 2 lambda Y`.
pub fn gradient(spec: &ObjectiveSpec, ens: &MeasurementEnsemble, y: &CMat) -> Result<CMat> {
    check(ens, y)?;
    let ev = Evaluation::new(spec, ens, y)?;
    Ok(ev.gradient(spec, ens, y))
}

/// Directional derivative of [`gradient`] along `xi`:
/// `2 A^*(w) xi + 2 A^*(w' o A(Y xi^* + xi Y^*)) Y + 2 lambda xi`.
pub fn hessian_vec(spec: &ObjectiveSpec, ens: &MeasurementEnsemble, y: &CMat, xi: &CMat) -> Result<CMat> {
    check(ens, y)?;
    check(ens, xi)?;
    if xi.shape() != y.shape() {
        return Err(Error::dim(format!("direction is {:?}, factor is {:?}", xi.shape(), y.shape())));
    }
    let m = ens.m();
    let b = ens.b();
    let u = ens.project(y);
    let v = ens.project(xi);
    let t = row_norms_sq(&u);
    let cross = polarization(&u, &v);

    let w: Vec<f64> = b.iter().zip(&t).map(|(&bi, &ti)| spec.weight(bi, ti, m)).collect();
    let dw: Vec<f64> = b
        .iter()
        .zip(&t)
        .zip(&cross)
        .map(|((&bi, &ti), &ci)| spec.weight_slope(bi, ti, m) * ci)
        .collect();
    let mut wv = v;
    scale_rows(&mut wv, &w);
    let mut du = u;
    scale_rows(&mut du, &dw);
    let mut h = ens.back_project(&wv) + ens.back_project(&du);
    h += xi * C64::new(spec.lambda, 0.0);
    Ok(h * C64::new(2.0, 0.0))
}

/// `A(Y D^* + D Y^*)_i = 2 Re sum_j conj(a_i^* y_j) (a_i^* d_j)`.
pub(crate) fn polarization(u: &CMat, v: &CMat) -> Vec<f64> {
    let mut out = vec![0.0; u.nrows()];
    for (cu, cv) in u.column_iter().zip(v.column_iter()) {
        for ((o, a), b) in out.iter_mut().zip(cu.iter()).zip(cv.iter()) {
            *o += 2.0 * (a.re * b.re + a.im * b.im);
        }
    }
    out
}

/// Exact restriction `phi(alpha) = f(Y + alpha D)`. Each intensity is a
/// quadratic in `alpha`, `t_i(alpha) = c0 + c1 alpha + c2 alpha^2`, so the
/// restriction costs `O(m)` per evaluation once `U` and `V = A D` are known.
#[derive(Debug, Clone)]
pub struct LineModel<'a> {
    spec: ObjectiveSpec,
    b: &'a [f64],
    c0: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,
    q: [f64; 3],
}

impl<'a> LineModel<'a> {
    pub(crate) fn new(spec: &ObjectiveSpec, b: &'a [f64], u: &CMat, v: &CMat, y: &CMat, d: &CMat) -> Self {
        LineModel {
            spec: *spec,
            b,
            c0: row_norms_sq(u),
            c1: polarization(u, v),
            c2: row_norms_sq(v),
            q: [linalg::norm_sq(y), 2.0 * linalg::re_inner(y, d), linalg::norm_sq(d)],
        }
    }

    /// Restriction along a direction orthogonal to the factor, where only the
    /// second-order terms are present (used for zero-column escapes).
    pub(crate) fn orthogonal(spec: &ObjectiveSpec, b: &'a [f64], t0: &[f64], v: &CMat, y_sq: f64, d_sq: f64) -> Self {
        LineModel {
            spec: *spec,
            b,
            c0: t0.to_vec(),
            c1: vec![0.0; t0.len()],
            c2: row_norms_sq(v),
            q: [y_sq, 0.0, d_sq],
        }
    }

    fn t(&self, i: usize, a: f64) -> f64 {
        self.c0[i] + a * (self.c1[i] + a * self.c2[i])
    }

    pub fn phi(&self, a: f64) -> f64 {
        let t: Vec<f64> = (0..self.b.len()).map(|i| self.t(i, a)).collect();
        let trace = self.q[0] + a * (self.q[1] + a * self.q[2]);
        match self.spec.data_value(self.b, &t) {
            Ok(v) => v + self.spec.lambda * trace,
            Err(_) => f64::INFINITY,
        }
    }

    /// `phi(a) - phi(0)`, summed from per-measurement differences so that
    /// small decreases survive when `phi` itself is large.
    pub fn drop_at(&self, a: f64) -> f64 {
        let m = self.b.len();
        let floor = self.spec.poisson_floor;
        let mut acc = 0.0;
        for i in 0..m {
            let dt = a * (self.c1[i] + a * self.c2[i]);
            let (b, t0) = (self.b[i], self.c0[i]);
            acc += match self.spec.fidelity {
                Fidelity::LeastSquares => dt * (2.0 * (t0 - b) + dt) / (2.0 * m as f64),
                Fidelity::Poisson => {
                    let t1 = t0 + dt;
                    if b == 0.0 {
                        dt
                    } else if t0 >= floor && t1 >= floor {
                        dt - b * (dt / t0).ln_1p()
                    } else {
                        t1 - t0 - b * (t1.max(floor).ln() - t0.max(floor).ln())
                    }
                }
            };
        }
        if !acc.is_finite() {
            return f64::INFINITY;
        }
        acc + self.spec.lambda * a * (self.q[1] + a * self.q[2])
    }

    pub fn dphi(&self, a: f64) -> f64 {
        let m = self.b.len();
        let mut acc = 0.0;
        for i in 0..m {
            acc += self.spec.weight(self.b[i], self.t(i, a), m) * (self.c1[i] + 2.0 * a * self.c2[i]);
        }
        acc + self.spec.lambda * (self.q[1] + 2.0 * a * self.q[2])
    }

    /// Coefficients `[e0..e4]` of the least-squares quartic `phi(alpha)`.
    pub fn quartic(&self) -> [f64; 5] {
        let m = self.b.len() as f64;
        let mut e = [0.0; 5];
        for i in 0..self.b.len() {
            let r0 = self.c0[i] - self.b[i];
            let (c1, c2) = (self.c1[i], self.c2[i]);
            e[0] += r0 * r0;
            e[1] += 2.0 * r0 * c1;
            e[2] += c1 * c1 + 2.0 * r0 * c2;
            e[3] += 2.0 * c1 * c2;
            e[4] += c2 * c2;
        }
        for c in e.iter_mut() {
            *c /= 2.0 * m;
        }
        let lam = self.spec.lambda;
        e[0] += lam * self.q[0];
        e[1] += lam * self.q[1];
        e[2] += lam * self.q[2];
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{make_gaussian_ensemble, random_factor, random_signal, ScalarField};

    fn lifted_value(spec: &ObjectiveSpec, ens: &MeasurementEnsemble, y: &CMat) -> f64 {
        // Materialize X = YY^* and apply trace(a_i a_i^* X) literally.
        let x = y * y.adjoint();
        let rows = ens.dense_rows();
        let m = ens.m();
        let mut data = 0.0;
        for i in 0..m {
            let a = rows.row(i).transpose();
            let ai = &a * a.adjoint();
            let ti = (ai * &x).trace().re;
            let bi = ens.b()[i];
            data += match spec.fidelity {
                Fidelity::LeastSquares => (ti - bi).powi(2) / (2.0 * m as f64),
                Fidelity::Poisson => ti - bi * ti.max(spec.poisson_floor).ln(),
            };
        }
        data + spec.lambda * x.trace().re
    }

    #[test]
    fn zero_residual_least_squares_is_zero() {
        let x = random_signal(4, ScalarField::Complex, 1);
        let ens = make_gaussian_ensemble(4, 10, ScalarField::Complex, 2).unwrap().with_planted(&x).unwrap();
        let y = CMat::from_column_slice(4, 1, &x);
        assert!(value(&ObjectiveSpec::least_squares(0.0), &ens, &y).unwrap().abs() < 1e-20);
        for spec in [ObjectiveSpec::least_squares(0.0), ObjectiveSpec::poisson(0.0, &ens)] {
            let g = gradient(&spec, &ens, &y).unwrap();
            assert!(g.norm() < 1e-10 * y.norm(), "{:?}", spec.fidelity);
        }
    }

    #[test]
    fn poisson_with_zero_data_is_total_intensity() {
        let ens = make_gaussian_ensemble(4, 10, ScalarField::Real, 3).unwrap();
        let y = random_factor(4, 2, ScalarField::Real, 4).unwrap();
        let t: f64 = ens.forward_intensity(y.matrix()).unwrap().iter().sum();
        let v = value(&ObjectiveSpec::poisson(0.0, &ens), &ens, y.matrix()).unwrap();
        assert!((v - t).abs() < 1e-12 * t);
    }

    #[test]
    fn value_matches_dense_lift() {
        let x = random_signal(4, ScalarField::Complex, 5);
        let ens = make_gaussian_ensemble(4, 10, ScalarField::Complex, 6).unwrap().with_planted(&x).unwrap();
        let y = random_factor(4, 2, ScalarField::Complex, 7).unwrap();
        for spec in [ObjectiveSpec::least_squares(0.7), ObjectiveSpec::poisson(0.7, &ens)] {
            let a = value(&spec, &ens, y.matrix()).unwrap();
            let b = lifted_value(&spec, &ens, y.matrix());
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn real_factor_gives_real_gradient() {
        let x = random_signal(5, ScalarField::Real, 1);
        let ens = make_gaussian_ensemble(5, 12, ScalarField::Real, 2).unwrap().with_planted(&x).unwrap();
        let y = random_factor(5, 2, ScalarField::Real, 3).unwrap();
        for spec in [ObjectiveSpec::least_squares(0.3), ObjectiveSpec::poisson(0.3, &ens)] {
            assert!(linalg::is_real(&gradient(&spec, &ens, y.matrix()).unwrap()));
        }
    }

    #[test]
    fn hessian_of_zero_direction_is_zero_and_linear() {
        let x = random_signal(4, ScalarField::Complex, 1);
        let ens = make_gaussian_ensemble(4, 9, ScalarField::Complex, 2).unwrap().with_planted(&x).unwrap();
        let y = random_factor(4, 2, ScalarField::Complex, 3).unwrap();
        let xi = random_factor(4, 2, ScalarField::Complex, 4).unwrap();
        let spec = ObjectiveSpec::least_squares(0.2);
        let h0 = hessian_vec(&spec, &ens, y.matrix(), &CMat::zeros(4, 2)).unwrap();
        assert_eq!(h0.norm(), 0.0);
        let h1 = hessian_vec(&spec, &ens, y.matrix(), xi.matrix()).unwrap();
        let h3 = hessian_vec(&spec, &ens, y.matrix(), &(xi.matrix() * C64::new(-2.5, 0.0))).unwrap();
        assert!((&h3 - &h1 * C64::new(-2.5, 0.0)).norm() < 1e-12 * (1.0 + h3.norm()));
    }

    #[test]
    fn line_model_matches_direct_evaluation() {
        let x = random_signal(5, ScalarField::Complex, 1);
        let ens = make_gaussian_ensemble(5, 14, ScalarField::Complex, 2).unwrap().with_planted(&x).unwrap();
        let y = random_factor(5, 2, ScalarField::Complex, 3).unwrap();
        let d = random_factor(5, 2, ScalarField::Complex, 4).unwrap();
        for spec in [ObjectiveSpec::least_squares(0.4), ObjectiveSpec::poisson(0.4, &ens)] {
            let (u, v) = (ens.project(y.matrix()), ens.project(d.matrix()));
            let model = LineModel::new(&spec, ens.b(), &u, &v, y.matrix(), d.matrix());
            for a in [0.0, 0.1, 0.37, 1.3] {
                let direct = value(&spec, &ens, &(y.matrix() + d.matrix() * C64::new(a, 0.0))).unwrap();
                assert!((model.phi(a) - direct).abs() < 1e-10 * direct.abs().max(1.0));
                let drop = model.drop_at(a) - (model.phi(a) - model.phi(0.0));
                assert!(drop.abs() < 1e-10 * direct.abs().max(1.0));
            }
            let g = gradient(&spec, &ens, y.matrix()).unwrap();
            assert!((model.dphi(0.0) - linalg::re_inner(&g, d.matrix())).abs() < 1e-9 * g.norm() * d.matrix().norm());
            if spec.fidelity == Fidelity::LeastSquares {
                let e = model.quartic();
                for a in [0.2f64, 0.9] {
                    let poly = e[0] + a * (e[1] + a * (e[2] + a * (e[3] + a * e[4])));
                    assert!((poly - model.phi(a)).abs() < 1e-10 * poly.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn drop_resolves_decreases_below_value_rounding() {
        // intensities near 1e8 put phi far above the size of a tiny step's effect
        let x: Vec<C64> = random_signal(6, ScalarField::Real, 5).iter().map(|z| z * 1e4).collect();
        let ens = make_gaussian_ensemble(6, 30, ScalarField::Real, 6).unwrap().with_planted(&x).unwrap();
        let spec = ObjectiveSpec::poisson(0.0, &ens);
        let y = CMat::from_column_slice(6, 1, &x) * C64::new(1.001, 0.0);
        let g = gradient(&spec, &ens, &y).unwrap();
        let d = -&g;
        let model = LineModel::new(&spec, ens.b(), &ens.project(&y), &ens.project(&d), &y, &d);
        let a = 1e-9 / g.norm();
        let predicted = a * model.dphi(0.0);
        assert!(predicted < 0.0);
        assert!((model.drop_at(a) - predicted).abs() < 1e-3 * predicted.abs());
    }

    #[test]
    fn spec_validation() {
        assert!(ObjectiveSpec::new(Fidelity::Poisson, -1.0, 1e-12).is_err());
        assert!(ObjectiveSpec::new(Fidelity::Poisson, 1.0, 0.0).is_err());
        assert!(ObjectiveSpec::new(Fidelity::LeastSquares, 0.0, 1e-12).is_ok());
    }
}
