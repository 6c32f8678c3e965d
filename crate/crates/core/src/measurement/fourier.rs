//! Oversampled 2-D Fourier backend. An `n1 x n2` image is zero-padded to
//! `2n1 x 2n2` and transformed with the unitary DFT (scale `1/sqrt(4 n1 n2)`),
//! so that the sum of all intensities equals the squared norm of the image.
//! Images and spectra are flattened row-major.

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::linalg::{CMat, C64, ZERO};

#[derive(Clone)]
pub struct Fft2 {
    pub(crate) n1: usize,
    pub(crate) n2: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2").field("n1", &self.n1).field("n2", &self.n2).finish()
    }
}

impl Fft2 {
    pub fn new(n1: usize, n2: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n1,
            n2,
            row_fwd: planner.plan_fft_forward(2 * n2),
            row_inv: planner.plan_fft_inverse(2 * n2),
            col_fwd: planner.plan_fft_forward(2 * n1),
            col_inv: planner.plan_fft_inverse(2 * n1),
        }
    }

    /// Image pixel count `n1 * n2`.
    pub fn n(&self) -> usize {
        self.n1 * self.n2
    }

    /// Padded frame size `4 * n1 * n2`.
    pub fn m(&self) -> usize {
        4 * self.n1 * self.n2
    }

    fn scale(&self) -> f64 {
        1.0 / (self.m() as f64).sqrt()
    }

    fn scratch(&self) -> Vec<C64> {
        let len = [&self.row_fwd, &self.row_inv, &self.col_fwd, &self.col_inv]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        vec![ZERO; len]
    }

    /// In-place unitary DFT (or its inverse) of a full `2n1 x 2n2` row-major frame.
    pub(crate) fn transform(&self, buf: &mut [C64], inverse: bool) {
        let (rows, cols) = (2 * self.n1, 2 * self.n2);
        let (row_plan, col_plan) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        let mut scratch = self.scratch();
        row_plan.process_with_scratch(buf, &mut scratch);
        let mut t = vec![ZERO; buf.len()];
        transpose(buf, &mut t, rows, cols);
        col_plan.process_with_scratch(&mut t, &mut scratch);
        let s = self.scale();
        for r in 0..rows {
            for c in 0..cols {
                buf[r * cols + c] = t[c * rows + r] * s;
            }
        }
    }

    fn forward_with(&self, x: &[C64], out: &mut [C64], t: &mut [C64], scratch: &mut [C64]) {
        let (rows, cols) = (2 * self.n1, 2 * self.n2);
        // only the first n1 rows of the padded frame are nonzero
        out.fill(ZERO);
        for r in 0..self.n1 {
            out[r * cols..r * cols + self.n2].copy_from_slice(&x[r * self.n2..(r + 1) * self.n2]);
        }
        self.row_fwd.process_with_scratch(&mut out[..self.n1 * cols], scratch);
        t.fill(ZERO);
        for r in 0..self.n1 {
            for c in 0..cols {
                t[c * rows + r] = out[r * cols + c];
            }
        }
        self.col_fwd.process_with_scratch(t, scratch);
        let s = self.scale();
        for r in 0..rows {
            for c in 0..cols {
                out[r * cols + c] = t[c * rows + r] * s;
            }
        }
    }

    fn adjoint_with(&self, spectrum: &[C64], out: &mut [C64], t: &mut [C64], scratch: &mut [C64]) {
        let (rows, cols) = (2 * self.n1, 2 * self.n2);
        transpose(spectrum, t, rows, cols);
        self.col_inv.process_with_scratch(t, scratch);
        // cropping keeps n1 rows, so only those need the row pass
        let mut band = vec![ZERO; self.n1 * cols];
        for r in 0..self.n1 {
            for c in 0..cols {
                band[r * cols + c] = t[c * rows + r];
            }
        }
        self.row_inv.process_with_scratch(&mut band, scratch);
        let s = self.scale();
        for r in 0..self.n1 {
            for c in 0..self.n2 {
                out[r * self.n2 + c] = band[r * cols + c] * s;
            }
        }
    }

    /// Unitary DFT of the zero-padded image `x` (length `n`), length `m`.
    pub fn forward(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.m()];
        let mut t = vec![ZERO; self.m()];
        self.forward_with(x, &mut out, &mut t, &mut self.scratch());
        out
    }

    /// Adjoint of [`Fft2::forward`]: unitary inverse DFT followed by cropping.
    pub fn adjoint(&self, spectrum: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.n()];
        let mut t = vec![ZERO; self.m()];
        self.adjoint_with(spectrum, &mut out, &mut t, &mut self.scratch());
        out
    }

    /// Column-wise forward transform of an `n x q` matrix into an `m x q` matrix.
    pub fn project(&self, y: &CMat) -> CMat {
        let mut out = CMat::zeros(self.m(), y.ncols());
        let (mut t, mut scratch) = (vec![ZERO; self.m()], self.scratch());
        for j in 0..y.ncols() {
            // nalgebra storage is column-major, so columns are contiguous
            let src = y.column(j);
            let src = src.as_slice();
            let mut dst = out.column_mut(j);
            self.forward_with(src, dst.as_mut_slice(), &mut t, &mut scratch);
        }
        out
    }

    /// Column-wise adjoint of an `m x q` matrix into an `n x q` matrix.
    pub fn back_project(&self, w: &CMat) -> CMat {
        let mut out = CMat::zeros(self.n(), w.ncols());
        let (mut t, mut scratch) = (vec![ZERO; self.m()], self.scratch());
        for j in 0..w.ncols() {
            let src = w.column(j);
            let src = src.as_slice();
            let mut dst = out.column_mut(j);
            self.adjoint_with(src, dst.as_mut_slice(), &mut t, &mut scratch);
        }
        out
    }
}

fn transpose(src: &[C64], dst: &mut [C64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}
