//! Minimal internal sparse-operator support for time-evolution right-hand
//! sides. The Hamiltonians and collapse operators in this crate are banded
//! (a few nonzeros per row), so master-equation products L·ρ and ρ·L run in
//! O(nnz·dim) instead of O(dim³), and Taylor propagation applies H·v in
//! O(nnz). Entries are stored redundantly by row and by column so both
//! multiplication sides stream through memory in column-major order.

use nalgebra::{Complex, DMatrix, DVector};

use crate::Real;

#[derive(Debug, Clone)]
pub(crate) struct SparseOp<T: Real> {
    dim: usize,
    /// rows[i] = [(j, v)] with M[i, j] = v.
    rows: Vec<Vec<(usize, Complex<T>)>>,
    /// cols[j] = [(i, v)] with M[i, j] = v.
    cols: Vec<Vec<(usize, Complex<T>)>>,
    /// Maximum column absolute sum ‖M‖₁ (an upper bound on the spectral
    /// radius for Hermitian M).
    norm_one: T,
}

impl<T: Real> SparseOp<T> {
    pub fn from_dense(m: &DMatrix<Complex<T>>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operator must be square");
        let dim = m.nrows();
        let mut rows = vec![Vec::new(); dim];
        let mut cols = vec![Vec::new(); dim];
        let mut norm_one = T::zero();
        for j in 0..dim {
            let mut col_sum = T::zero();
            for i in 0..dim {
                let v = m[(i, j)];
                if v.re != T::zero() || v.im != T::zero() {
                    rows[i].push((j, v));
                    cols[j].push((i, v));
                    col_sum += v.norm_sqr().sqrt();
                }
            }
            norm_one = norm_one.max(col_sum);
        }
        Self { dim, rows, cols, norm_one }
    }

    pub fn norm_one(&self) -> T {
        self.norm_one
    }

    pub fn dagger(&self) -> Self {
        let mut rows = vec![Vec::new(); self.dim];
        let mut cols = vec![Vec::new(); self.dim];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                rows[j].push((i, v.conj()));
                cols[i].push((j, v.conj()));
            }
        }
        let mut norm_one = T::zero();
        for col in &cols {
            let mut s = T::zero();
            for &(_, v) in col {
                s += v.norm_sqr().sqrt();
            }
            norm_one = norm_one.max(s);
        }
        Self { dim: self.dim, rows, cols, norm_one }
    }

    /// out += scale · M · v
    pub fn apply_add(&self, v: &DVector<Complex<T>>, out: &mut DVector<Complex<T>>, scale: Complex<T>) {
        for (i, row) in self.rows.iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            let mut acc = Complex::new(T::zero(), T::zero());
            for &(j, w) in row {
                acc += w * v[j];
            }
            out[i] += scale * acc;
        }
    }

    /// out += scale · M · rho
    pub fn left_mul_add(&self, rho: &DMatrix<Complex<T>>, out: &mut DMatrix<Complex<T>>, scale: Complex<T>) {
        let n = rho.ncols();
        for c in 0..n {
            let col_in = rho.column(c);
            let mut col_out = out.column_mut(c);
            for (i, row) in self.rows.iter().enumerate() {
                if row.is_empty() {
                    continue;
                }
                let mut acc = Complex::new(T::zero(), T::zero());
                for &(j, w) in row {
                    acc += w * col_in[j];
                }
                col_out[i] += scale * acc;
            }
        }
    }

    /// out += scale · rho · M
    pub fn right_mul_add(&self, rho: &DMatrix<Complex<T>>, out: &mut DMatrix<Complex<T>>, scale: Complex<T>) {
        let n = rho.nrows();
        for (j, col) in self.cols.iter().enumerate() {
            if col.is_empty() {
                continue;
            }
            let mut col_out = out.column_mut(j);
            for &(c, w) in col {
                let sv = scale * w;
                let col_in = rho.column(c);
                for r in 0..n {
                    col_out[r] += sv * col_in[r];
                }
            }
        }
    }

    /// Dense reconstruction (diagnostics and tests).
    pub fn to_dense(&self) -> DMatrix<Complex<T>> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] += v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    type C64 = Complex<f64>;

    fn sample() -> DMatrix<C64> {
        DMatrix::from_row_slice(3, 3, &[
            C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.5, -0.2),
            C64::new(0.0, 1.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0),
            C64::new(0.0, 0.0), C64::new(-2.0, 0.3), C64::new(0.0, 0.0),
        ])
    }

    fn dense_rho() -> DMatrix<C64> {
        DMatrix::from_row_slice(3, 3, &[
            C64::new(0.5, 0.0), C64::new(0.1, 0.2), C64::new(0.0, -0.3),
            C64::new(0.1, -0.2), C64::new(0.3, 0.0), C64::new(0.2, 0.0),
            C64::new(0.0, 0.3), C64::new(0.2, 0.0), C64::new(0.2, 0.0),
        ])
    }

    #[test]
    fn products_match_dense_reference() {
        let m = sample();
        let s = SparseOp::from_dense(&m);
        let rho = dense_rho();
        let scale = C64::new(0.7, -0.4);

        let mut left = DMatrix::<C64>::zeros(3, 3);
        s.left_mul_add(&rho, &mut left, scale);
        let left_ref = &m * &rho * scale;
        assert!((left - left_ref).iter().all(|x| x.norm() < 1e-14));

        let mut right = DMatrix::<C64>::zeros(3, 3);
        s.right_mul_add(&rho, &mut right, scale);
        let right_ref = &rho * &m * scale;
        assert!((right - right_ref).iter().all(|x| x.norm() < 1e-14));

        let v = DVector::from_vec(vec![C64::new(1.0, 0.5), C64::new(-0.3, 0.0), C64::new(0.0, 2.0)]);
        let mut out = DVector::<C64>::zeros(3);
        s.apply_add(&v, &mut out, scale);
        let out_ref = &m * &v * scale;
        assert!((out - out_ref).iter().all(|x| x.norm() < 1e-14));
    }

    #[test]
    fn dagger_and_norms() {
        let m = sample();
        let s = SparseOp::from_dense(&m);
        let sd = s.dagger();
        assert!((sd.to_dense() - m.adjoint()).iter().all(|x| x.norm() < 1e-15));
        // ‖M‖₁ of the sample: max column abs sum. Col 0 sums |1| + |i| = 2,
        // col 1 sums |−2+0.3i| = √4.09 ≈ 2.022, col 2 sums √0.29.
        let expect = (4.0 + 0.09_f64).sqrt();
        assert!((s.norm_one() - expect).abs() < 1e-12);
    }
}
