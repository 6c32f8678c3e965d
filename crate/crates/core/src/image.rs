//! Grayscale images and plain PGM (P2) I/O.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major grayscale image with `f64` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "image data has {} pixels, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Image { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Image { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Top-left `rows x cols` crop.
    pub fn crop(&self, rows: usize, cols: usize) -> Result<Image> {
        if rows > self.rows || cols > self.cols {
            return Err(Error::dim(format!(
                "cannot crop {}x{} image to {rows}x{cols}",
                self.rows, self.cols
            )));
        }
        let mut out = Image::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                out.set(r, c, self.get(r, c));
            }
        }
        Ok(out)
    }

    /// A deterministic smooth test scene: a shaded background with an
    /// off-center disc, a bar and a soft blob. No symmetry, full support.
    pub fn synthetic_scene(rows: usize, cols: usize) -> Image {
        let mut img = Image::zeros(rows, cols);
        let (h, w) = (rows as f64, cols as f64);
        for r in 0..rows {
            for c in 0..cols {
                let (y, x) = (r as f64 / h, c as f64 / w);
                let mut v = 40.0 + 60.0 * x + 30.0 * y * y;
                if (x - 0.3).powi(2) + (y - 0.35).powi(2) < 0.04 {
                    v += 110.0;
                }
                if (0.6..0.85).contains(&x) && (0.15..0.8).contains(&y) {
                    v += 70.0 * (1.0 - y);
                }
                v += 50.0 * (-((x - 0.7).powi(2) + (y - 0.8).powi(2)) / 0.01).exp();
                img.set(r, c, v.round().clamp(0.0, 255.0));
            }
        }
        img
    }

    pub fn read_pgm(path: &Path) -> Result<Image> {
        let text = fs::read_to_string(path)?;
        let parse_err = |line: usize, msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.to_string(),
        };
        let mut tokens = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("");
            tokens.extend(content.split_whitespace().map(|t| (ln + 1, t)));
        }
        let mut it = tokens.into_iter();
        match it.next() {
            Some((_, "P2")) => {}
            Some((ln, _)) => return Err(parse_err(ln, "expected plain PGM magic `P2`")),
            None => return Err(parse_err(1, "empty file")),
        }
        let mut header = [0usize; 3];
        for h in header.iter_mut() {
            let (ln, tok) = it.next().ok_or_else(|| parse_err(1, "truncated header"))?;
            *h = tok.parse().map_err(|_| parse_err(ln, "bad header integer"))?;
        }
        let [cols, rows, maxval] = header;
        if rows == 0 || cols == 0 || maxval == 0 {
            return Err(parse_err(1, "zero-sized image or maxval"));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for k in 0..rows * cols {
            let (ln, tok) = it
                .next()
                .ok_or_else(|| parse_err(text.lines().count(), &format!("missing pixel {k}")))?;
            let v: u64 = tok.parse().map_err(|_| parse_err(ln, "bad pixel value"))?;
            if v > maxval as u64 {
                return Err(parse_err(ln, "pixel exceeds maxval"));
            }
            data.push(v as f64);
        }
        Image::new(rows, cols, data)
    }

    /// Writes the image as plain PGM, rounding and clamping pixels to `0..=maxval`.
    pub fn write_pgm(&self, path: &Path, maxval: u32) -> Result<()> {
        let mut out = format!("P2\n{} {}\n{}\n", self.cols, self.rows, maxval);
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| (self.get(r, c).round().clamp(0.0, maxval as f64) as u32).to_string())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let img = Image::synthetic_scene(6, 5);
        img.write_pgm(&p, 255).unwrap();
        assert_eq!(Image::read_pgm(&p).unwrap(), img);
    }

    #[test]
    fn pgm_rejects_truncated_data() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.pgm");
        fs::write(&p, "P2\n# c\n2 2\n255\n1 2 3\n").unwrap();
        assert!(matches!(Image::read_pgm(&p), Err(Error::Parse { .. })));
    }
}
