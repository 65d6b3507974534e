//! Row-major `f64` matrices with the handful of GEMM shapes the stack needs.

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        Self { rows, cols, data }
    }

    /// 1 x n matrix borrowing a vector's contents.
    pub fn from_row(row: &[f64]) -> Self {
        Self { rows: 1, cols: row.len(), data: row.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stack rows of `parts` vertically; all parts must share a column count.
    pub fn vstack(parts: &[&Tensor2]) -> Self {
        let cols = parts.first().map_or(0, |p| p.cols);
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            assert_eq!(p.cols, cols);
            data.extend_from_slice(&p.data);
        }
        Self { rows, cols, data }
    }

    /// Join matrices side by side; all parts must share a row count.
    pub fn hcat(parts: &[&Tensor2]) -> Self {
        let rows = parts.first().map_or(0, |p| p.rows);
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols);
        for r in 0..rows {
            let dst = out.row_mut(r);
            let mut off = 0;
            for p in parts {
                assert_eq!(p.rows, rows);
                dst[off..off + p.cols].copy_from_slice(p.row(r));
                off += p.cols;
            }
        }
        out
    }

    /// Split columns at `at`, returning (left, right).
    pub fn hsplit(&self, at: usize) -> (Tensor2, Tensor2) {
        assert!(at <= self.cols);
        let mut left = Tensor2::zeros(self.rows, at);
        let mut right = Tensor2::zeros(self.rows, self.cols - at);
        for r in 0..self.rows {
            let src = self.row(r);
            left.row_mut(r).copy_from_slice(&src[..at]);
            right.row_mut(r).copy_from_slice(&src[at..]);
        }
        (left, right)
    }

    pub fn add_assign(&mut self, other: &Tensor2) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }
}

/// c = a . b  (m x k) . (k x n)
pub fn matmul(a: &Tensor2, b: &Tensor2) -> Tensor2 {
    assert_eq!(a.cols, b.rows, "matmul shape mismatch");
    let mut c = Tensor2::zeros(a.rows, b.cols);
    gemm(
        a.rows, a.cols, b.cols,
        &a.data, a.cols as isize, 1,
        &b.data, b.cols as isize, 1,
        &mut c.data, b.cols as isize, 1,
    );
    c
}

/// c = a . b^T  (m x k) . (n x k)^T
pub fn matmul_transb(a: &Tensor2, b: &Tensor2) -> Tensor2 {
    assert_eq!(a.cols, b.cols, "matmul_transb shape mismatch");
    let mut c = Tensor2::zeros(a.rows, b.rows);
    gemm(
        a.rows, a.cols, b.rows,
        &a.data, a.cols as isize, 1,
        &b.data, 1, b.cols as isize,
        &mut c.data, b.rows as isize, 1,
    );
    c
}

/// c = a^T . b  (m x k)^T . (m x n)
pub fn matmul_transa(a: &Tensor2, b: &Tensor2) -> Tensor2 {
    assert_eq!(a.rows, b.rows, "matmul_transa shape mismatch");
    let mut c = Tensor2::zeros(a.cols, b.cols);
    gemm(
        a.cols, a.rows, b.cols,
        &a.data, 1, a.cols as isize,
        &b.data, b.cols as isize, 1,
        &mut c.data, b.cols as isize, 1,
    );
    c
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize, k: usize, n: usize,
    a: &[f64], rsa: isize, csa: isize,
    b: &[f64], rsb: isize, csb: isize,
    c: &mut [f64], rsc: isize, csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(0.0);
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m, k, n,
            1.0, a.as_ptr(), rsa, csa,
            b.as_ptr(), rsb, csb,
            0.0, c.as_mut_ptr(), rsc, csc,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Tensor2, b: &Tensor2) -> Tensor2 {
        let mut c = Tensor2::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for l in 0..a.cols() {
                    s += a.get(i, l) * b.get(l, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    fn random_mat(rows: usize, cols: usize, seed: u64) -> Tensor2 {
        // xorshift, good enough for test data
        let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s as f64 / u64::MAX as f64) * 2.0 - 1.0
        };
        Tensor2::from_vec(rows, cols, (0..rows * cols).map(|_| next()).collect())
    }

    fn assert_close(a: &Tensor2, b: &Tensor2) {
        assert_eq!(a.rows(), b.rows());
        assert_eq!(a.cols(), b.cols());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn gemm_matches_naive() {
        let a = random_mat(7, 5, 1);
        let b = random_mat(5, 9, 2);
        assert_close(&matmul(&a, &b), &naive_matmul(&a, &b));
    }

    #[test]
    fn gemm_transb_matches_naive() {
        let a = random_mat(6, 4, 3);
        let b = random_mat(8, 4, 4);
        let mut bt = Tensor2::zeros(4, 8);
        for i in 0..8 {
            for j in 0..4 {
                bt.set(j, i, b.get(i, j));
            }
        }
        assert_close(&matmul_transb(&a, &b), &naive_matmul(&a, &bt));
    }

    #[test]
    fn gemm_transa_matches_naive() {
        let a = random_mat(5, 6, 5);
        let b = random_mat(5, 7, 6);
        let mut at = Tensor2::zeros(6, 5);
        for i in 0..5 {
            for j in 0..6 {
                at.set(j, i, a.get(i, j));
            }
        }
        assert_close(&matmul_transa(&a, &b), &naive_matmul(&at, &b));
    }

    #[test]
    fn empty_inner_dim_yields_zeros() {
        let a = Tensor2::zeros(3, 0);
        let b = Tensor2::zeros(0, 4);
        let c = matmul(&a, &b);
        assert_eq!(c.rows(), 3);
        assert_eq!(c.cols(), 4);
        assert!(c.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hcat_hsplit_roundtrip() {
        let a = random_mat(3, 4, 7);
        let b = random_mat(3, 2, 8);
        let joined = Tensor2::hcat(&[&a, &b]);
        let (l, r) = joined.hsplit(4);
        assert_close(&l, &a);
        assert_close(&r, &b);
    }
}
