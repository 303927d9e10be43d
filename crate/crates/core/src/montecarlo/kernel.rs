//! SINR evaluation on split real/imaginary column-major buffers.
//!
//! Only the lower triangle of `Y Y* + rho I` is formed and factored in
//! place. Inner loops run down contiguous columns so they vectorize.

use crate::{Error, Result};

/// Reusable buffers for one `N x (K+1)` channel draw.
#[derive(Debug, Clone)]
pub struct SinrWorkspace {
    n: usize,
    cols: usize,
    /// Channel, column-major: entry `(r, c)` at `c * n + r`.
    pub(crate) ch_re: Vec<f64>,
    pub(crate) ch_im: Vec<f64>,
    g_re: Vec<f64>,
    g_im: Vec<f64>,
    x_re: Vec<f64>,
    x_im: Vec<f64>,
}

impl SinrWorkspace {
    pub fn new(n: usize, cols: usize) -> Self {
        Self {
            n,
            cols,
            ch_re: vec![0.0; n * cols],
            ch_im: vec![0.0; n * cols],
            g_re: vec![0.0; n * n],
            g_im: vec![0.0; n * n],
            x_re: vec![0.0; n],
            x_im: vec![0.0; n],
        }
    }

    /// Sets entry `(r, c)` of the channel.
    #[inline]
    pub(crate) fn set(&mut self, r: usize, c: usize, re: f64, im: f64) {
        self.ch_re[c * self.n + r] = re;
        self.ch_im[c * self.n + r] = im;
    }

    /// `y* (Y Y* + rho I)^-1 y` with `y` the first channel column.
    pub fn sinr(&mut self, rho: f64) -> Result<f64> {
        let n = self.n;
        self.gram(rho);
        self.cholesky()?;

        let (y_re, y_im) = (&self.ch_re[..n], &self.ch_im[..n]);
        let (g_re, g_im) = (&self.g_re, &self.g_im);
        let (x_re, x_im) = (&mut self.x_re, &mut self.x_im);
        x_re.copy_from_slice(y_re);
        x_im.copy_from_slice(y_im);

        // L z = y
        for j in 0..n {
            let d = g_re[j * n + j];
            let (zr, zi) = (x_re[j] / d, x_im[j] / d);
            x_re[j] = zr;
            x_im[j] = zi;
            let col_re = &g_re[j * n + j + 1..(j + 1) * n];
            let col_im = &g_im[j * n + j + 1..(j + 1) * n];
            let tail_re = &mut x_re[j + 1..];
            let tail_im = &mut x_im[j + 1..];
            for i in 0..col_re.len() {
                tail_re[i] -= col_re[i] * zr - col_im[i] * zi;
                tail_im[i] -= col_re[i] * zi + col_im[i] * zr;
            }
        }
        // L* x = z
        for j in (0..n).rev() {
            let col_re = &g_re[j * n + j + 1..(j + 1) * n];
            let col_im = &g_im[j * n + j + 1..(j + 1) * n];
            let (mut sr, mut si) = (0.0, 0.0);
            for i in 0..col_re.len() {
                let (xr, xi) = (x_re[j + 1 + i], x_im[j + 1 + i]);
                // conj(L[i, j]) * x[i]
                sr += col_re[i] * xr + col_im[i] * xi;
                si += col_re[i] * xi - col_im[i] * xr;
            }
            let d = g_re[j * n + j];
            x_re[j] = (x_re[j] - sr) / d;
            x_im[j] = (x_im[j] - si) / d;
        }

        // y* x
        let (mut qr, mut qi) = (0.0, 0.0);
        for i in 0..n {
            qr += y_re[i] * x_re[i] + y_im[i] * x_im[i];
            qi += y_re[i] * x_im[i] - y_im[i] * x_re[i];
        }
        if !qr.is_finite() || qi.abs() > 1e-10 * qr.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "quadratic form is not real: {qr} + {qi}i"
            )));
        }
        Ok(qr.max(0.0))
    }

    /// `||y||^2`.
    pub fn user_energy(&self) -> f64 {
        let n = self.n;
        self.ch_re[..n]
            .iter()
            .zip(&self.ch_im[..n])
            .map(|(r, i)| r * r + i * i)
            .sum()
    }

    /// Lower triangle of `Y Y* + rho I`.
    fn gram(&mut self, rho: f64) {
        let n = self.n;
        self.g_re.fill(0.0);
        self.g_im.fill(0.0);
        for c in 1..self.cols {
            let y_re = &self.ch_re[c * n..(c + 1) * n];
            let y_im = &self.ch_im[c * n..(c + 1) * n];
            for j in 0..n {
                // column j gets Y[i, c] * conj(Y[j, c]) for i >= j
                let (ar, ai) = (y_re[j], -y_im[j]);
                let g_re = &mut self.g_re[j * n + j..(j + 1) * n];
                let g_im = &mut self.g_im[j * n + j..(j + 1) * n];
                let (src_re, src_im) = (&y_re[j..], &y_im[j..]);
                for i in 0..g_re.len() {
                    g_re[i] += src_re[i] * ar - src_im[i] * ai;
                    g_im[i] += src_re[i] * ai + src_im[i] * ar;
                }
            }
        }
        for j in 0..n {
            self.g_re[j * n + j] += rho;
            self.g_im[j * n + j] = 0.0;
        }
    }

    /// In-place lower Cholesky factor of the Gram buffer.
    fn cholesky(&mut self) -> Result<()> {
        let n = self.n;
        let (g_re, g_im) = (&mut self.g_re, &mut self.g_im);
        for j in 0..n {
            let d = g_re[j * n + j];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "Y Y* + rho I is not positive definite (pivot {j} = {d})"
                )));
            }
            let l = d.sqrt();
            g_re[j * n + j] = l;
            for i in j + 1..n {
                g_re[j * n + i] /= l;
                g_im[j * n + i] /= l;
            }
            let (head_re, rest_re) = g_re.split_at_mut((j + 1) * n);
            let (head_im, rest_im) = g_im.split_at_mut((j + 1) * n);
            let lj_re = &head_re[j * n..];
            let lj_im = &head_im[j * n..];
            for k in j + 1..n {
                // column k -= L[:, j] * conj(L[k, j]) for rows i >= k
                let (ar, ai) = (lj_re[k], -lj_im[k]);
                let off = (k - j - 1) * n;
                let dst_re = &mut rest_re[off + k..off + n];
                let dst_im = &mut rest_im[off + k..off + n];
                let (src_re, src_im) = (&lj_re[k..n], &lj_im[k..n]);
                for i in 0..dst_re.len() {
                    dst_re[i] -= src_re[i] * ar - src_im[i] * ai;
                    dst_im[i] -= src_re[i] * ai + src_im[i] * ar;
                }
            }
        }
        Ok(())
    }
}
