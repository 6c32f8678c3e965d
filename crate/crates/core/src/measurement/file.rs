//! Portable text formats for dense ensembles and factors.
//!
//! Ensemble (`PRMAT`):
//! ```text
//! PRMAT v1 <real|complex> <m> <n>
//! <m rows: n floats (real) or 2n floats, re/im interleaved (complex)>
//! B
//! <m lines: one intensity each>
//! ```
//! Factor (`PRFAC`) has the same row layout with header
//! `PRFAC v1 <real|complex> <n> <p>` and `n` rows of `p` (or `2p`) floats.
//! Floats are written in shortest round-trip form, so save/load is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Backend, ComplexFactor, MeasurementEnsemble, ScalarField};
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};

struct Lines<'a> {
    path: &'a Path,
    it: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_path_buf(), line, msg: msg.into() }
    }

    fn next_nonempty(&mut self, what: &str) -> Result<(usize, &'a str)> {
        for (i, l) in self.it.by_ref() {
            if !l.trim().is_empty() {
                return Ok((i + 1, l));
            }
        }
        Err(Error::Parse { path: self.path.to_path_buf(), line: 0, msg: format!("unexpected end of file: missing {what}") })
    }
}

fn parse_header<'a>(lines: &mut Lines<'a>, magic: &str) -> Result<(ScalarField, usize, usize)> {
    let (ln, line) = lines.next_nonempty("header")?;
    let tok: Vec<&str> = line.split_whitespace().collect();
    if tok.len() != 5 || tok[0] != magic || tok[1] != "v1" {
        return Err(lines.err(ln, format!("malformed header, expected `{magic} v1 <field> <rows> <cols>`")));
    }
    let field: ScalarField = tok[2].parse().map_err(|_| lines.err(ln, format!("bad field `{}`", tok[2])))?;
    let a: usize = tok[3].parse().map_err(|_| lines.err(ln, "bad row count"))?;
    let b: usize = tok[4].parse().map_err(|_| lines.err(ln, "bad column count"))?;
    if a == 0 || b == 0 {
        return Err(lines.err(ln, "dimensions must be positive"));
    }
    Ok((field, a, b))
}

fn parse_rows(lines: &mut Lines<'_>, field: ScalarField, rows: usize, cols: usize) -> Result<CMat> {
    let width = if field.is_real() { cols } else { 2 * cols };
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (ln, line) = lines.next_nonempty(&format!("row {r}"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| lines.err(ln, format!("row {r}: bad float")))?;
        if vals.len() != width {
            return Err(lines.err(ln, format!("row {r}: expected {width} values, found {}", vals.len())));
        }
        if field.is_real() {
            data.extend(vals.iter().map(|&v| C64::new(v, 0.0)));
        } else {
            data.extend(vals.chunks(2).map(|c| C64::new(c[0], c[1])));
        }
    }
    Ok(CMat::from_row_slice(rows, cols, &data))
}

fn write_rows(out: &mut String, field: ScalarField, mat: &CMat) {
    for r in 0..mat.nrows() {
        let mut first = true;
        for z in mat.row(r).iter() {
            if !first {
                out.push(' ');
            }
            first = false;
            match field {
                ScalarField::Real => write!(out, "{}", z.re).unwrap(),
                ScalarField::Complex => write!(out, "{} {}", z.re, z.im).unwrap(),
            }
        }
        out.push('\n');
    }
}

pub fn load_dense_ensemble(path: &Path) -> Result<MeasurementEnsemble> {
    let text = fs::read_to_string(path)?;
    let mut lines = Lines { path, it: text.lines().enumerate() };
    let (field, m, n) = parse_header(&mut lines, "PRMAT")?;
    let rows = parse_rows(&mut lines, field, m, n)?;
    let (ln, marker) = lines.next_nonempty("`B` marker")?;
    if marker.trim() != "B" {
        return Err(lines.err(ln, "expected `B` marker after the measurement rows"));
    }
    let mut b = Vec::with_capacity(m);
    for i in 0..m {
        let (ln, line) = lines.next_nonempty(&format!("intensity {i}"))?;
        let v: f64 = line.trim().parse().map_err(|_| lines.err(ln, format!("intensity {i}: bad float")))?;
        if v < 0.0 {
            return Err(lines.err(ln, format!("intensity {i} is negative")));
        }
        b.push(v);
    }
    MeasurementEnsemble::from_rows(&rows, field, b)
}

pub fn save_dense_ensemble(ens: &MeasurementEnsemble, path: &Path) -> Result<()> {
    let rows = match ens.backend() {
        Backend::DenseRows(d) => d.rows(),
        Backend::FourierOversampled(_) => {
            return Err(Error::arg("only dense ensembles can be saved; regenerate Fourier ensembles from the image"))
        }
    };
    let mut out = format!("PRMAT v1 {} {} {}\n", ens.field().as_str(), ens.m(), ens.n());
    write_rows(&mut out, ens.field(), &rows);
    out.push_str("B\n");
    for v in ens.b() {
        writeln!(out, "{v}").unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_factor(path: &Path) -> Result<(ScalarField, ComplexFactor)> {
    let text = fs::read_to_string(path)?;
    let mut lines = Lines { path, it: text.lines().enumerate() };
    let (field, n, p) = parse_header(&mut lines, "PRFAC")?;
    let y = parse_rows(&mut lines, field, n, p)?;
    Ok((field, ComplexFactor::new(y)?))
}

pub fn save_factor(y: &CMat, field: ScalarField, path: &Path) -> Result<()> {
    let mut out = format!("PRFAC v1 {} {} {}\n", field.as_str(), y.nrows(), y.ncols());
    write_rows(&mut out, field, y);
    fs::write(path, out)?;
    Ok(())
}
