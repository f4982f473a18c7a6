//! Dense vectors, matrices and three-way tensors with the mode-n product
//! and Tucker reconstruction.
//!
//! Indices are 0-based throughout the API. Mode numbers follow the usual
//! mathematical convention: [`Mode::First`] contracts the first index
//! (`i`), [`Mode::Second`] the second (`j`) and [`Mode::Third`] the last
//! (`k`), so `x_{ijk}` in 1-based notation lives at `(i-1, j-1, k-1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = Vec<f64>;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix {}x{} needs {} values, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged matrix rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
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
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// `v^T * self` for a row vector `v` of length `rows`.
    pub fn left_mul_vec(&self, v: &[f64]) -> Result<Vector> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} times {}x{} matrix",
                v.len(),
                self.rows,
                self.cols
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(r)) {
                *o += vr * m;
            }
        }
        Ok(out)
    }

    /// `self * v` for a column vector `v` of length `cols`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vector> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Three-way tensor stored row-major with the last index fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

/// Which index of a three-way tensor a product contracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    First,
    Second,
    Third,
}

impl Mode {
    pub fn index(self) -> usize {
        match self {
            Mode::First => 0,
            Mode::Second => 1,
            Mode::Third => 2,
        }
    }

    /// Mode from its 1-based mathematical number.
    pub fn from_number(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Mode::First),
            2 => Ok(Mode::Second),
            3 => Ok(Mode::Third),
            _ => Err(Error::InvalidArgument(format!("mode must be 1, 2 or 3, got {n}"))),
        }
    }
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self { dims, data: vec![0.0; dims[0] * dims[1] * dims[2]] })
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "tensor {:?} needs {} values, got {}",
                dims,
                n,
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidArgument(format!("tensor dims must be positive, got {dims:?}")));
    }
    Ok(())
}

/// Rank-one tensor `a ∘ b ∘ c`.
pub fn outer_product3(a: &[f64], b: &[f64], c: &[f64]) -> Result<Tensor3> {
    let mut t = Tensor3::zeros([a.len(), b.len(), c.len()])?;
    let mut o = 0;
    for &ai in a {
        for &bj in b {
            let ab = ai * bj;
            for &ck in c {
                t.data[o] = ab * ck;
                o += 1;
            }
        }
    }
    Ok(t)
}

/// `X ×_mode U`: contracts index `mode` of `x` with the columns of `u`,
/// replacing that dimension by `u.rows()`.
pub fn mode_n_product(x: &Tensor3, u: &Matrix, mode: Mode) -> Result<Tensor3> {
    let m = mode.index();
    if u.cols() != x.dims[m] {
        return Err(Error::DimensionMismatch(format!(
            "mode-{} product needs {} matrix columns, got {}",
            m + 1,
            x.dims[m],
            u.cols()
        )));
    }
    let mut dims = x.dims;
    dims[m] = u.rows();
    let mut y = Tensor3::zeros(dims)?;
    let [d0, d1, d2] = x.dims;
    match mode {
        Mode::First => {
            for j in 0..u.rows() {
                let urow = u.row(j);
                for (i, &uji) in urow.iter().enumerate() {
                    let src = &x.data[i * d1 * d2..(i + 1) * d1 * d2];
                    let dst = &mut y.data[j * d1 * d2..(j + 1) * d1 * d2];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += uji * s;
                    }
                }
            }
        }
        Mode::Second => {
            let rows = u.rows();
            for i in 0..d0 {
                for j in 0..rows {
                    let urow = u.row(j);
                    let dst_off = (i * rows + j) * d2;
                    for (q, &ujq) in urow.iter().enumerate() {
                        let src_off = (i * d1 + q) * d2;
                        for k in 0..d2 {
                            y.data[dst_off + k] += ujq * x.data[src_off + k];
                        }
                    }
                }
            }
        }
        Mode::Third => {
            let rows = u.rows();
            for i in 0..d0 {
                for q in 0..d1 {
                    let src = &x.data[(i * d1 + q) * d2..(i * d1 + q + 1) * d2];
                    let dst_off = (i * d1 + q) * rows;
                    for j in 0..rows {
                        y.data[dst_off + j] = dot(u.row(j), src);
                    }
                }
            }
        }
    }
    Ok(y)
}

/// `G ×₁ A ×₂ B ×₃ C`.
pub fn tucker_reconstruct(g: &Tensor3, a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Tensor3> {
    let y = mode_n_product(g, a, Mode::First)?;
    let y = mode_n_product(&y, b, Mode::Second)?;
    mode_n_product(&y, c, Mode::Third)
}

/// Single reconstructed entry `Σ_pqr g_pqr a_ip b_jq c_kr`.
pub fn tucker_entry(
    g: &Tensor3,
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
    i: usize,
    j: usize,
    k: usize,
) -> Result<f64> {
    let [p, q, r] = g.dims;
    if a.cols() != p || b.cols() != q || c.cols() != r {
        return Err(Error::DimensionMismatch(format!(
            "factor columns ({}, {}, {}) do not match core {:?}",
            a.cols(),
            b.cols(),
            c.cols(),
            g.dims
        )));
    }
    if i >= a.rows() || j >= b.rows() || k >= c.rows() {
        return Err(Error::IndexOutOfRange(format!(
            "({i}, {j}, {k}) outside ({}, {}, {})",
            a.rows(),
            b.rows(),
            c.rows()
        )));
    }
    contract_vectors(g, a.row(i), b.row(j), c.row(k))
}

/// Full contraction `G ×₁ u ×₂ v ×₃ w` of a core with three vectors.
pub fn contract_vectors(g: &Tensor3, u: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
    if [u.len(), v.len(), w.len()] != g.dims {
        return Err(Error::DimensionMismatch(format!(
            "vectors ({}, {}, {}) against core {:?}",
            u.len(),
            v.len(),
            w.len(),
            g.dims
        )));
    }
    let mut total = 0.0;
    let mut o = 0;
    for &up in u {
        for &vq in v {
            let s = dot(&g.data[o..o + w.len()], w);
            total += up * vq * s;
            o += w.len();
        }
    }
    Ok(total)
}

/// `G ×₂ w` collapsed to a `dims[0] × dims[2]` matrix.
pub fn contract_second_mode(g: &Tensor3, w: &[f64]) -> Result<Matrix> {
    let [d0, d1, d2] = g.dims;
    if w.len() != d1 {
        return Err(Error::DimensionMismatch(format!(
            "mode-2 vector of length {} against core {:?}",
            w.len(),
            g.dims
        )));
    }
    let mut m = Matrix::zeros(d0, d2);
    for p in 0..d0 {
        let dst = m.row_mut(p);
        for (q, &wq) in w.iter().enumerate() {
            if wq == 0.0 {
                continue;
            }
            let src = &g.data[(p * d1 + q) * d2..(p * d1 + q + 1) * d2];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += wq * s;
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    fn example_tensor() -> Tensor3 {
        // x111=1,x121=2,x211=3,x221=4,x112=5,x122=6,x212=7,x222=8 (1-based)
        let mut x = Tensor3::zeros([2, 2, 2]).unwrap();
        let vals = [
            ((0, 0, 0), 1.0),
            ((0, 1, 0), 2.0),
            ((1, 0, 0), 3.0),
            ((1, 1, 0), 4.0),
            ((0, 0, 1), 5.0),
            ((0, 1, 1), 6.0),
            ((1, 0, 1), 7.0),
            ((1, 1, 1), 8.0),
        ];
        for ((i, j, k), v) in vals {
            x.set(i, j, k, v);
        }
        x
    }

    #[test]
    fn outer_product_basis() {
        let t = outer_product3(&[1.0, 0.0], &[1.0], &[1.0, 0.0]).unwrap();
        assert_eq!(t.dims(), [2, 1, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 0.0]);
        let s = outer_product3(&[2.0], &[3.0], &[4.0]).unwrap();
        assert_eq!(s.data(), &[24.0]);
    }

    #[test]
    fn outer_product_matches_loop() {
        let (a, b, c) = ([1.0, 2.0], [1.0, 1.0], [1.0, -1.0]);
        let t = outer_product3(&a, &b, &c).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    assert_eq!(t.get(i, j, k), a[i] * b[j] * c[k]);
                }
            }
        }
        assert!(outer_product3(&[], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn mode_one_sum_rows() {
        let x = example_tensor();
        let u = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let y = mode_n_product(&x, &u, Mode::First).unwrap();
        assert_eq!(y.dims(), [1, 2, 2]);
        assert_eq!(y.get(0, 0, 0), 4.0);
        assert_eq!(y.get(0, 1, 0), 6.0);
        assert_eq!(y.get(0, 0, 1), 12.0);
        assert_eq!(y.get(0, 1, 1), 14.0);
    }

    #[test]
    fn identity_and_zero() {
        let x = example_tensor();
        for n in 1..=3 {
            let mode = Mode::from_number(n).unwrap();
            assert_eq!(mode_n_product(&x, &Matrix::identity(2), mode).unwrap(), x);
            let z = mode_n_product(&x, &Matrix::zeros(3, 2), mode).unwrap();
            let mut dims = [2, 2, 2];
            dims[n - 1] = 3;
            assert_eq!(z.dims(), dims);
            assert!(z.data().iter().all(|&v| v == 0.0));
        }
        assert!(Mode::from_number(4).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let x = example_tensor();
        assert!(matches!(
            mode_n_product(&x, &Matrix::zeros(2, 3), Mode::Second),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn tucker_scalar_and_identity() {
        let g = Tensor3::from_vec([1, 1, 1], vec![1.0]).unwrap();
        let a = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        let b = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        let c = Matrix::from_vec(1, 1, vec![4.0]).unwrap();
        assert_eq!(tucker_reconstruct(&g, &a, &b, &c).unwrap().data(), &[24.0]);

        let x = example_tensor();
        let i2 = Matrix::identity(2);
        assert_eq!(tucker_reconstruct(&x, &i2, &i2, &i2).unwrap(), x);
        assert_eq!(tucker_entry(&x, &i2, &i2, &i2, 1, 0, 1).unwrap(), 7.0);

        let zero = Tensor3::zeros([2, 2, 2]).unwrap();
        assert_eq!(tucker_entry(&zero, &i2, &i2, &i2, 1, 1, 1).unwrap(), 0.0);
        assert!(matches!(
            tucker_entry(&x, &i2, &i2, &i2, 2, 0, 0),
            Err(Error::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn second_mode_contraction_matches_product() {
        let x = example_tensor();
        let w = [0.5, -2.0];
        let m = contract_second_mode(&x, &w).unwrap();
        let y = mode_n_product(&x, &Matrix::from_vec(1, 2, w.to_vec()).unwrap(), Mode::Second)
            .unwrap();
        for p in 0..2 {
            for s in 0..2 {
                assert_eq!(m.get(p, s), y.get(p, 0, s));
            }
        }
    }
}
