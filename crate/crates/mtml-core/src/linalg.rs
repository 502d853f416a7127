//! Minimal dense linear algebra for tall-skinny systems.
//!
//! The optimization state lives in `d×l` matrices with small `l`, so a plain
//! row-major `Vec<f64>` store with a Householder thin-QR covers everything
//! the crate needs while staying `no_std`.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::math;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds from a row-major slice; `data.len()` must equal `rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length");
        Mat {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    /// First `cols` columns of the identity.
    pub fn eye(rows: usize, cols: usize) -> Self {
        Mat::from_fn(rows, cols, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `selfᵀ · x` for a length-`rows` vector; the workhorse of embedding.
    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "transpose_mul_vec length");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            let row = self.row(i);
            for j in 0..self.cols {
                out[j] += row[j] * xi;
            }
        }
        out
    }

    /// `self · v` for a length-`cols` vector.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "mul_vec length");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            out[i] = dot(self.row(i), v);
        }
        out
    }

    /// `selfᵀ · other` (cols_self × cols_other).
    pub fn transpose_mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "transpose_mul rows");
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = other.row(k);
            for i in 0..self.cols {
                let aki = a[i];
                for j in 0..other.cols {
                    out[(i, j)] += aki * b[j];
                }
            }
        }
        out
    }

    /// `self · other`.
    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "mul inner dim");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                let b = other.row(k);
                for j in 0..other.cols {
                    out[(i, j)] += aik * b[j];
                }
            }
        }
        out
    }

    /// `self += c · other`, elementwise.
    pub fn add_scaled(&mut self, other: &Mat, c: f64) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    /// Rank-one update `self += c · u wᵀ` (u over rows, w over cols).
    pub fn add_outer(&mut self, c: f64, u: &[f64], w: &[f64]) {
        assert_eq!(u.len(), self.rows);
        assert_eq!(w.len(), self.cols);
        for i in 0..self.rows {
            let cu = c * u[i];
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for j in 0..w.len() {
                row[j] += cu * w[j];
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn frob_norm(&self) -> f64 {
        math::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    /// `‖selfᵀ·self − I‖_F`, the orthonormality residual.
    pub fn ortho_residual(&self) -> f64 {
        let g = self.transpose_mul(self);
        let mut acc = 0.0;
        for i in 0..g.rows {
            for j in 0..g.cols {
                let target = if i == j { 1.0 } else { 0.0 };
                let e = g[(i, j)] - target;
                acc += e * e;
            }
        }
        math::sqrt(acc)
    }

    /// Thin QR via Householder reflections, returning the `rows×cols` Q
    /// factor with the sign convention that R has a positive diagonal.
    ///
    /// A column whose remaining norm underflows relative to the input is
    /// reported as rank-deficient.
    pub fn thin_qr_q(&self) -> Result<Mat, CoreError> {
        let (d, l) = (self.rows, self.cols);
        assert!(d >= l, "thin QR needs rows >= cols");
        let mut a = self.clone();
        // Householder vectors, one per column, each of length d - k.
        let mut hh: Vec<Vec<f64>> = Vec::with_capacity(l);
        let mut diag_sign = vec![1.0f64; l];
        let scale = self.frob_norm().max(1.0);
        for k in 0..l {
            let mut norm_sq = 0.0;
            for i in k..d {
                let v = a[(i, k)];
                norm_sq += v * v;
            }
            let norm = math::sqrt(norm_sq);
            if norm <= scale * 1e-13 {
                return Err(CoreError::RankDeficient {
                    column: k,
                    step_norm: 0.0,
                });
            }
            let akk = a[(k, k)];
            let alpha = if akk >= 0.0 { -norm } else { norm };
            diag_sign[k] = if alpha >= 0.0 { 1.0 } else { -1.0 };
            let mut v = vec![0.0; d - k];
            for i in k..d {
                v[i - k] = a[(i, k)];
            }
            v[0] -= alpha;
            let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
            if vnorm_sq > 0.0 {
                for j in k..l {
                    let mut proj = 0.0;
                    for i in k..d {
                        proj += v[i - k] * a[(i, j)];
                    }
                    let coef = 2.0 * proj / vnorm_sq;
                    for i in k..d {
                        a[(i, j)] -= coef * v[i - k];
                    }
                }
            }
            hh.push(v);
        }
        // Accumulate Q = H_0 · … · H_{l-1} · I_{d×l} by applying reflectors
        // in reverse to the thin identity.
        let mut q = Mat::eye(d, l);
        for k in (0..l).rev() {
            let v = &hh[k];
            let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
            if vnorm_sq == 0.0 {
                continue;
            }
            for j in 0..l {
                let mut proj = 0.0;
                for i in k..d {
                    proj += v[i - k] * q[(i, j)];
                }
                let coef = 2.0 * proj / vnorm_sq;
                for i in k..d {
                    q[(i, j)] -= coef * v[i - k];
                }
            }
        }
        // Flip columns where R's diagonal came out negative.
        for j in 0..l {
            if diag_sign[j] < 0.0 {
                for i in 0..d {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        Ok(q)
    }
}

impl core::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dot product of equal-length slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Squared Euclidean distance between equal-length slices.
#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// `a − b` as a new vector.
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
}
