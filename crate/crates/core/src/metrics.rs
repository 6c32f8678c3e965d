//! Reconstruction errors modulo the trivial ambiguities, noise injection and
//! recovery-rate aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg::C64;
use crate::measurement::Fft2;
use crate::rng::{rng_from_seed, standard_normal};

/// Relative error below which a trial counts as exact recovery.
pub const SUCCESS_THRESHOLD: f64 = 1e-5;

/// `min_{|c| = 1} ||c x - x_true|| / ||x_true||`, attained at
/// `c = <x, x_true> / |<x, x_true>|`.
pub fn relerr_phase(x: &[C64], x_true: &[C64]) -> Result<f64> {
    if x.len() != x_true.len() {
        return Err(Error::dim(format!("signals have lengths {} and {}", x.len(), x_true.len())));
    }
    let nt: f64 = x_true.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if nt == 0.0 {
        return Err(Error::arg("reference signal is zero"));
    }
    let ip: C64 = x.iter().zip(x_true).map(|(a, b)| a.conj() * b).sum();
    let c = if ip.norm() > 0.0 { ip / ip.norm() } else { C64::new(1.0, 0.0) };
    let diff: f64 = x.iter().zip(x_true).map(|(a, b)| (c * a - b).norm_sqr()).sum::<f64>().sqrt();
    Ok(diff / nt)
}

/// Best alignment of `img` to `truth` over cyclic translations of the
/// `2n1 x 2n2` zero-padded frame, the 180-degree flip and the global sign.
#[derive(Debug, Clone)]
pub struct FourierAlignment {
    pub relerr: f64,
    pub shift: (usize, usize),
    pub flipped: bool,
    pub sign: f64,
    /// Aligned image restricted to the `n1 x n2` support.
    pub aligned: Image,
}

pub fn relerr_fourier(img: &Image, truth: &Image) -> Result<f64> {
    Ok(align_fourier(img, truth)?.relerr)
}

pub fn align_fourier(img: &Image, truth: &Image) -> Result<FourierAlignment> {
    if (img.rows, img.cols) != (truth.rows, truth.cols) {
        return Err(Error::dim(format!(
            "images are {}x{} and {}x{}",
            img.rows, img.cols, truth.rows, truth.cols
        )));
    }
    let h_sq = truth.frobenius_sq();
    if h_sq == 0.0 {
        return Err(Error::arg("reference image is zero"));
    }
    let (n1, n2) = (img.rows, img.cols);
    let fft = Fft2::new(n1, n2);
    let to_c = |im: &Image| im.data.iter().map(|&v| C64::new(v, 0.0)).collect::<Vec<_>>();
    let g_hat = fft.forward(&to_c(img));
    let h_hat = fft.forward(&to_c(truth));
    let root_m = (fft.m() as f64).sqrt();

    // <g(. - s), h> = sqrt(M) IDFT(conj(G) H)(s); for the flip g(-k), G -> conj(G).
    let mut best = (f64::NEG_INFINITY, 0usize, false);
    for flipped in [false, true] {
        let mut prod: Vec<C64> = g_hat
            .iter()
            .zip(&h_hat)
            .map(|(g, h)| if flipped { g * h } else { g.conj() * h })
            .collect();
        fft.transform(&mut prod, true);
        for (k, c) in prod.iter().enumerate() {
            let corr = c.re * root_m;
            if corr.abs() > best.0 {
                best = (corr.abs(), k, flipped);
            }
        }
    }
    let (_, k, flipped) = best;
    let (rows, cols) = (2 * n1, 2 * n2);
    let shift = (k / cols, k % cols);

    // The correlation only picks the alignment; the error is evaluated
    // directly to avoid cancellation.
    let source = |r: usize, c: usize| -> f64 {
        let (sr, sc) = ((r + rows - shift.0) % rows, (c + cols - shift.1) % cols);
        let (sr, sc) = if flipped { ((rows - sr) % rows, (cols - sc) % cols) } else { (sr, sc) };
        if sr < n1 && sc < n2 {
            img.get(sr, sc)
        } else {
            0.0
        }
    };
    let mut aligned = Image::zeros(n1, n2);
    let mut dot = 0.0;
    for r in 0..n1 {
        for c in 0..n2 {
            let v = source(r, c);
            aligned.set(r, c, v);
            dot += v * truth.get(r, c);
        }
    }
    let sign = if dot < 0.0 { -1.0 } else { 1.0 };
    aligned.data.iter_mut().for_each(|v| *v *= sign);
    let mut err_sq = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let t = if r < n1 && c < n2 { truth.get(r, c) } else { 0.0 };
            err_sq += (sign * source(r, c) - t).powi(2);
        }
    }
    Ok(FourierAlignment { relerr: err_sq.sqrt() / h_sq.sqrt(), shift, flipped, sign, aligned })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub relerr: f64,
    pub success: bool,
    pub seed: u64,
    pub m_over_n: f64,
}

impl TrialOutcome {
    pub fn new(relerr: f64, seed: u64, m_over_n: f64) -> Self {
        Self::with_threshold(relerr, SUCCESS_THRESHOLD, seed, m_over_n)
    }

    pub fn with_threshold(relerr: f64, threshold: f64, seed: u64, m_over_n: f64) -> Self {
        TrialOutcome { relerr, success: relerr < threshold, seed, m_over_n }
    }
}

pub fn recovery_rate(outcomes: &[TrialOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::arg("recovery rate of an empty set of trials"));
    }
    Ok(outcomes.iter().filter(|o| o.success).count() as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyIntensities {
    pub b: Vec<f64>,
    /// Entries raised to zero (only when clamping was requested).
    pub clamped: usize,
}

/// `b + eta` with i.i.d. Gaussian `eta` rescaled so that
/// `10 log10(||b||^2 / ||eta||^2) = snr_db` exactly (before clamping).
pub fn add_gaussian_noise(b: &[f64], snr_db: f64, seed: u64, clamp_nonnegative: bool) -> Result<NoisyIntensities> {
    if let Some(i) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "intensity".into(), index: i });
    }
    if snr_db.is_nan() {
        return Err(Error::arg("SNR is not a number"));
    }
    let mut rng = rng_from_seed(seed);
    let eta: Vec<f64> = (0..b.len()).map(|_| standard_normal(&mut rng)).collect();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let eta_norm = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target = b_norm * 10f64.powf(-snr_db / 20.0);
    let scale = if eta_norm > 0.0 { target / eta_norm } else { 0.0 };
    let mut clamped = 0;
    let noisy = b
        .iter()
        .zip(&eta)
        .map(|(&bi, &e)| {
            let v = bi + scale * e;
            if clamp_nonnegative && v < 0.0 {
                clamped += 1;
                0.0
            } else {
                v
            }
        })
        .collect();
    Ok(NoisyIntensities { b: noisy, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;
    use crate::measurement::{random_signal, ScalarField};

    #[test]
    fn phase_invariance() {
        let x = random_signal(12, ScalarField::Complex, 1);
        for theta in [0.0, 0.7, 2.0, -3.0] {
            let rot: Vec<C64> = x.iter().map(|z| z * C64::from_polar(1.0, theta)).collect();
            assert!(relerr_phase(&rot, &x).unwrap() < 1e-14);
        }
        let neg: Vec<C64> = random_signal(5, ScalarField::Real, 2).iter().map(|z| -z).collect();
        let pos: Vec<C64> = neg.iter().map(|z| -z).collect();
        assert!(relerr_phase(&neg, &pos).unwrap() < 1e-15);
    }

    #[test]
    fn orthogonal_unit_vectors_and_phase_grid() {
        let a = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let b = [C64::new(0.0, 0.0), C64::new(0.0, 1.0)];
        assert!((relerr_phase(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let x = random_signal(6, ScalarField::Complex, 3);
        let t = random_signal(6, ScalarField::Complex, 4);
        let nt: f64 = t.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let grid = (0..20000)
            .map(|k| {
                let c = C64::from_polar(1.0, k as f64 * std::f64::consts::TAU / 20000.0);
                x.iter().zip(&t).map(|(a, b)| (c * a - b).norm_sqr()).sum::<f64>().sqrt() / nt
            })
            .fold(f64::INFINITY, f64::min);
        let closed = relerr_phase(&x, &t).unwrap();
        assert!(closed <= grid + 1e-12 && grid - closed < 1e-6);
    }

    #[test]
    fn zero_reference_rejected() {
        assert!(relerr_phase(&[C64::new(1.0, 0.0)], &[ZERO]).is_err());
        assert!(relerr_fourier(&Image::zeros(2, 2), &Image::zeros(2, 2)).is_err());
    }

    fn test_image(n1: usize, n2: usize, seed: u64) -> Image {
        let v = random_signal(n1 * n2, ScalarField::Real, seed);
        Image::new(n1, n2, v.iter().map(|z| z.re.abs() * 10.0).collect()).unwrap()
    }

    fn place(img: &Image, shift: (usize, usize), flip: bool) -> Vec<f64> {
        let (rows, cols) = (2 * img.rows, 2 * img.cols);
        let mut frame = vec![0.0; rows * cols];
        for r in 0..img.rows {
            for c in 0..img.cols {
                let (fr, fc) = if flip { ((rows - r) % rows, (cols - c) % cols) } else { (r, c) };
                frame[((fr + shift.0) % rows) * cols + (fc + shift.1) % cols] = img.get(r, c);
            }
        }
        frame
    }

    fn exhaustive(img: &Image, truth: &Image) -> f64 {
        let h = place(truth, (0, 0), false);
        let hn: f64 = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut best = f64::INFINITY;
        for flip in [false, true] {
            for s0 in 0..2 * img.rows {
                for s1 in 0..2 * img.cols {
                    let g = place(img, (s0, s1), flip);
                    for sign in [1.0, -1.0] {
                        let e: f64 = g.iter().zip(&h).map(|(a, b)| (sign * a - b).powi(2)).sum::<f64>().sqrt();
                        best = best.min(e / hn);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn translation_and_flip_invariance() {
        let truth = test_image(8, 8, 5);
        // A copy shifted by (3, 5) inside the padded frame, cropped back to
        // the support it still fits in.
        let mut shifted = Image::zeros(8, 8);
        let small = truth.crop(5, 3).unwrap();
        for r in 0..5 {
            for c in 0..3 {
                shifted.set(r + 3, c + 5, small.get(r, c));
            }
        }
        let mut truth_small = Image::zeros(8, 8);
        for r in 0..5 {
            for c in 0..3 {
                truth_small.set(r, c, small.get(r, c));
            }
        }
        assert!(relerr_fourier(&shifted, &truth_small).unwrap() < 1e-12);
        let mut rot = Image::zeros(8, 8);
        for r in 0..8 {
            for c in 0..8 {
                rot.set(7 - r, 7 - c, truth.get(r, c));
            }
        }
        let al = align_fourier(&rot, &truth).unwrap();
        assert!(al.relerr < 1e-12 && al.flipped);
        let diff: f64 = al.aligned.data.iter().zip(&truth.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
        let neg = Image::new(8, 8, truth.data.iter().map(|v| -v).collect()).unwrap();
        let e = relerr_fourier(&neg, &truth).unwrap();
        assert!(e < 1e-12, "{e}");
    }

    #[test]
    fn matches_exhaustive_alignment() {
        let truth = test_image(8, 8, 6);
        for (k, delta) in [0.01, 0.1, 0.5].into_iter().enumerate() {
            let pert = test_image(8, 8, 10 + k as u64);
            let pn = pert.frobenius_sq().sqrt();
            let tn = truth.frobenius_sq().sqrt();
            let img = Image::new(8, 8, truth.data.iter().zip(&pert.data).map(|(t, p)| t + delta * tn / pn * p).collect()).unwrap();
            let fast = relerr_fourier(&img, &truth).unwrap();
            let slow = exhaustive(&img, &truth);
            assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
            assert!(fast <= delta + 1e-12);
        }
    }

    #[test]
    fn rates() {
        let mk = |k: usize, total: usize| -> Vec<TrialOutcome> {
            (0..total).map(|i| TrialOutcome::new(if i < k { 0.0 } else { 1.0 }, i as u64, 2.0)).collect()
        };
        assert_eq!(recovery_rate(&mk(50, 50)).unwrap(), 1.0);
        assert_eq!(recovery_rate(&mk(0, 50)).unwrap(), 0.0);
        assert!((recovery_rate(&mk(37, 50)).unwrap() - 0.74).abs() < 1e-15);
        assert!(recovery_rate(&[]).is_err());
        assert!(!TrialOutcome::new(SUCCESS_THRESHOLD, 0, 1.0).success);
    }

    #[test]
    fn noise_level_is_exact() {
        let b: Vec<f64> = (0..10_000).map(|i| 1.0 + (i % 17) as f64).collect();
        for snr in [10.0, 25.0, 50.0] {
            let out = add_gaussian_noise(&b, snr, 7, false).unwrap();
            let sig: f64 = b.iter().map(|v| v * v).sum();
            let noise: f64 = out.b.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
            assert!((10.0 * (sig / noise).log10() - snr).abs() < 0.1);
        }
        let out = add_gaussian_noise(&b, 300.0, 7, false).unwrap();
        let rel = out.b.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
            / b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(rel <= 1e-14);
        assert_eq!(add_gaussian_noise(&b, 20.0, 9, false).unwrap(), add_gaussian_noise(&b, 20.0, 9, false).unwrap());
    }

    #[test]
    fn clamping_only_when_requested() {
        let b = vec![0.0; 100];
        let b2: Vec<f64> = (0..100).map(|i| (i % 3) as f64).collect();
        let out = add_gaussian_noise(&b2, 0.0, 1, true).unwrap();
        assert!(out.clamped > 0 && out.b.iter().all(|v| *v >= 0.0));
        let out = add_gaussian_noise(&b2, 0.0, 1, false).unwrap();
        assert_eq!(out.clamped, 0);
        assert_eq!(add_gaussian_noise(&b, 10.0, 1, true).unwrap().b, b);
        assert!(add_gaussian_noise(&[f64::NAN], 10.0, 1, false).is_err());
    }
}
