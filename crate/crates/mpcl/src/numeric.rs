//! Dense `f64` matrices, numerically stable kernels, and a deterministic RNG.
//!
//! Everything downstream (the autodiff tape, the retrieval operators, the
//! training loop) is built on this module, so the contracts here are strict:
//! shapes are validated on every operation, inverse temperatures must be
//! positive, and the softmax / log-sum-exp kernels subtract the running
//! maximum so that large scores cannot overflow.
//!
//! The RNG is xoshiro256++ seeded through SplitMix64. It is implemented here
//! (rather than pulled from a crate) because its 256-bit state is serialized
//! verbatim into training checkpoints, and the stream must stay bit-identical
//! across versions for resumed runs to reproduce uninterrupted ones.

use crate::error::{Error, Result};

/// Floor applied inside logarithms so that `ln` never sees zero.
pub const LOG_FLOOR: f64 = 1e-12;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Matrix of zeros.
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Build from a flat row-major buffer. The buffer length must equal
    /// `rows * cols` and every entry must be finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::parameter(
                "from_vec",
                format!("buffer of length {} cannot fill {rows}x{cols}", data.len()),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::parameter("from_vec", "non-finite entry"));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Build from row slices; all rows must have equal, nonzero length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::parameter("from_rows", "empty matrix"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::parameter("from_rows", "ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    /// Single-row matrix from a slice.
    pub fn row_vector(v: &[f64]) -> Result<Matrix> {
        Matrix::from_vec(1, v.len(), v.to_vec())
    }

    /// Identity matrix.
    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Total number of entries.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    /// Borrow one row as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Flat row-major view of the data.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// New matrix with rows and columns exchanged.
    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Same buffer reinterpreted with a new shape; total size must match.
    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Matrix> {
        if rows * cols != self.data.len() {
            return Err(Error::parameter(
                "reshape",
                format!("{}x{} cannot be viewed as {rows}x{cols}", self.rows, self.cols),
            ));
        }
        Ok(Matrix { rows, cols, data: self.data.clone() })
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        check_same_shape("add_assign", self, other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    /// In-place `self += k * other`.
    pub fn add_scaled_assign(&mut self, k: f64, other: &Matrix) -> Result<()> {
        check_same_shape("add_scaled_assign", self, other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * *b;
        }
        Ok(())
    }

    /// In-place `self *= k`.
    pub fn scale_assign(&mut self, k: f64) {
        for a in self.data.iter_mut() {
            *a *= k;
        }
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::Dimension {
            op,
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: b.rows,
            right_cols: b.cols,
        });
    }
    Ok(())
}

/// `a * b` for `[n x k] * [k x m]`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Dimension {
            op: "matmul",
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: b.rows,
            right_cols: b.cols,
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aik * *bv;
            }
        }
    }
    Ok(out)
}

/// `a * b^T` for `[n x d] * [m x d]^T -> [n x m]`.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::Dimension {
            op: "matmul_nt",
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: b.rows,
            right_cols: b.cols,
        });
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        for j in 0..b.rows {
            let brow = b.row(j);
            let mut s = 0.0;
            for (av, bv) in arow.iter().zip(brow) {
                s += av * bv;
            }
            out.data[i * b.rows + j] = s;
        }
    }
    Ok(out)
}

/// `a^T * b` for `[k x n]^T * [k x m] -> [n x m]`.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::Dimension {
            op: "matmul_tn",
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: b.rows,
            right_cols: b.cols,
        });
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        for i in 0..a.cols {
            let aki = a.data[k * a.cols + i];
            if aki == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aki * *bv;
            }
        }
    }
    Ok(out)
}

/// Elementwise sum.
pub fn add(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_same_shape("add", a, b)?;
    let mut out = a.clone();
    out.add_assign(b)?;
    Ok(out)
}

/// Scalar multiple.
pub fn scale(a: &Matrix, k: f64) -> Matrix {
    let mut out = a.clone();
    out.scale_assign(k);
    out
}

/// Row-wise softmax of `beta * m`, max-shifted for stability.
///
/// Rows sum to exactly the floating-point sum of their entries' normalized
/// values; entries are strictly positive.
pub fn softmax_rows(m: &Matrix, beta: f64) -> Result<Matrix> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::parameter(
            "softmax_rows",
            format!("inverse temperature must be positive and finite, got {beta}"),
        ));
    }
    if m.is_empty() {
        return Err(Error::parameter("softmax_rows", "empty input"));
    }
    let mut out = m.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let mut max = f64::NEG_INFINITY;
        for v in row.iter() {
            let s = beta * *v;
            if s > max {
                max = s;
            }
        }
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (beta * *v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Tempered log-sum-exp: `(1/beta) * ln(sum_j exp(beta * v_j))`, max-shifted.
pub fn log_sum_exp(v: &[f64], beta: f64) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Dimension {
            op: "log_sum_exp",
            left_rows: 1,
            left_cols: 0,
            right_rows: 0,
            right_cols: 0,
        });
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::parameter(
            "log_sum_exp",
            format!("inverse temperature must be positive and finite, got {beta}"),
        ));
    }
    let max = v.iter().fold(f64::NEG_INFINITY, |m, x| m.max(beta * x));
    let mut sum = 0.0;
    for x in v {
        sum += (beta * x - max).exp();
    }
    Ok((max + sum.ln()) / beta)
}

/// Result of [`normalize_rows`]: the normalized matrix plus the indices of
/// rows whose norm was zero (those rows pass through unchanged).
#[derive(Debug, Clone)]
pub struct NormalizedRows {
    pub matrix: Matrix,
    pub zero_rows: Vec<usize>,
}

/// L2-normalize each row; zero rows are left unchanged and flagged.
pub fn normalize_rows(m: &Matrix) -> NormalizedRows {
    let mut out = m.clone();
    let mut zero_rows = Vec::new();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero_rows.push(r);
        } else {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
    NormalizedRows { matrix: out, zero_rows }
}

/// Column means as a `1 x cols` matrix.
pub fn mean_rows(m: &Matrix) -> Result<Matrix> {
    if m.rows == 0 {
        return Err(Error::parameter("mean_rows", "no rows"));
    }
    let mut out = Matrix::zeros(1, m.cols);
    for r in 0..m.rows {
        for c in 0..m.cols {
            out.data[c] += m.data[r * m.cols + c];
        }
    }
    out.scale_assign(1.0 / m.rows as f64);
    Ok(out)
}

/// Stack matrices vertically; all must share a column count.
pub fn concat_rows(parts: &[&Matrix]) -> Result<Matrix> {
    if parts.is_empty() {
        return Err(Error::parameter("concat_rows", "no parts"));
    }
    let cols = parts[0].cols;
    let mut data = Vec::new();
    let mut rows = 0;
    for p in parts {
        if p.cols != cols {
            return Err(Error::Dimension {
                op: "concat_rows",
                left_rows: rows,
                left_cols: cols,
                right_rows: p.rows,
                right_cols: p.cols,
            });
        }
        rows += p.rows;
        data.extend_from_slice(&p.data);
    }
    Ok(Matrix { rows, cols, data })
}

/// Stack matrices horizontally; all must share a row count.
pub fn concat_cols(parts: &[&Matrix]) -> Result<Matrix> {
    if parts.is_empty() {
        return Err(Error::parameter("concat_cols", "no parts"));
    }
    let rows = parts[0].rows;
    let cols: usize = parts.iter().map(|p| p.cols).sum();
    for p in parts {
        if p.rows != rows {
            return Err(Error::Dimension {
                op: "concat_cols",
                left_rows: rows,
                left_cols: parts[0].cols,
                right_rows: p.rows,
                right_cols: p.cols,
            });
        }
    }
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let orow = &mut out.data[r * cols..(r + 1) * cols];
        let mut off = 0;
        for p in parts {
            orow[off..off + p.cols].copy_from_slice(p.row(r));
            off += p.cols;
        }
    }
    Ok(out)
}

/// Copy of rows `[start, start + len)`.
pub fn slice_rows(m: &Matrix, start: usize, len: usize) -> Result<Matrix> {
    if start + len > m.rows || len == 0 {
        return Err(Error::parameter(
            "slice_rows",
            format!("rows [{start}, {}) out of range for {} rows", start + len, m.rows),
        ));
    }
    Ok(Matrix {
        rows: len,
        cols: m.cols,
        data: m.data[start * m.cols..(start + len) * m.cols].to_vec(),
    })
}

/// Copy of columns `[start, start + len)`.
pub fn slice_cols(m: &Matrix, start: usize, len: usize) -> Result<Matrix> {
    if start + len > m.cols || len == 0 {
        return Err(Error::parameter(
            "slice_cols",
            format!("cols [{start}, {}) out of range for {} cols", start + len, m.cols),
        ));
    }
    let mut out = Matrix::zeros(m.rows, len);
    for r in 0..m.rows {
        out.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
    }
    Ok(out)
}

/// Elementwise `tanh`.
pub fn tanh(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for v in out.data.iter_mut() {
        *v = v.tanh();
    }
    out
}

/// Elementwise `ln(max(v, LOG_FLOOR))`.
pub fn log_floored(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for v in out.data.iter_mut() {
        *v = v.max(LOG_FLOOR).ln();
    }
    out
}

/// xoshiro256++ pseudo-random generator with SplitMix64 seeding.
///
/// The identity of the stream is part of the crate's stability contract: the
/// 256-bit state round-trips through checkpoints, so the same seed always
/// yields the same initialization, shuffles, and synthetic data, on every
/// platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    /// Seed via four rounds of SplitMix64, per the reference construction.
    pub fn seed_from(seed: u64) -> Rng {
        let mut x = seed;
        let mut next = move || {
            x = x.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = x;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^ (z >> 31)
        };
        Rng { s: [next(), next(), next(), next()] }
    }

    /// Raw 256-bit state, for checkpoint serialization.
    pub fn state(&self) -> [u64; 4] {
        self.s
    }

    /// Restore from a checkpointed state.
    pub fn from_state(s: [u64; 4]) -> Rng {
        Rng { s }
    }

    /// Next 64 raw bits (the xoshiro256++ update).
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0].wrapping_add(self.s[3]).rotate_left(23).wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller; consumes two raw draws per call.
    pub fn normal(&mut self) -> f64 {
        // Shift into (0, 1] so the logarithm is always finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `[0, n)` via Lemire's multiply-shift reduction.
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }

    /// Matrix with i.i.d. `N(0, scale^2)` entries.
    pub fn normal_matrix(&mut self, rows: usize, cols: usize, scale: f64) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.as_mut_slice().iter_mut() {
            *v = scale * self.normal();
        }
        m
    }
}
