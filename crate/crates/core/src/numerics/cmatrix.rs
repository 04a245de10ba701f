use num_complex::Complex;

use super::{tol, Matrix, Real};
use crate::error::{Error, Result};

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "CMatrix::from_vec",
                format!("{} entries", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn from_real(m: &Matrix<T>) -> Self {
        Self::from_fn(m.rows(), m.cols(), |i, j| Complex::new(m[(i, j)], T::zero()))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.cols + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, z: Complex<T>) {
        self.data[i * self.cols + j] = z;
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::dim("CMatrix::matmul", format!("rhs.rows == {}", self.cols), format!("{}", other.rows)));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = T::one().max(self.data.iter().fold(T::zero(), |m, z| m.max(z.norm())));
        (0..self.rows).all(|i| (0..=i).all(|j| (self.get(i, j) - self.get(j, i).conj()).norm() <= tol * scale))
    }

    /// Solve `G X = B` by complex Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &Self) -> Result<Self> {
        let n = self.rows;
        if self.cols != n || b.rows != n {
            return Err(Error::dim("CMatrix::solve", format!("square G and b with {n} rows"), format!("{}x{}, b rows {}", self.rows, self.cols, b.rows)));
        }
        let floor = T::tol(tol::PIVOT_FLOOR) * self.frobenius_norm().max(T::min_positive_value());
        let mut a = self.clone();
        let mut x = b.clone();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&r, &s| a.get(r, col).norm().partial_cmp(&a.get(s, col).norm()).expect("finite"))
                .expect("nonempty pivot range");
            let pabs = a.get(piv, col).norm();
            if pabs <= floor {
                return Err(Error::Singular {
                    op: "CMatrix::solve",
                    pivot: pabs.to_f64_lossy(),
                    floor: floor.to_f64_lossy(),
                });
            }
            if piv != col {
                for j in 0..n {
                    let t = a.get(col, j);
                    a.set(col, j, a.get(piv, j));
                    a.set(piv, j, t);
                }
                for j in 0..x.cols {
                    let t = x.get(col, j);
                    x.set(col, j, x.get(piv, j));
                    x.set(piv, j, t);
                }
            }
            let d = a.get(col, col);
            for r in col + 1..n {
                let f = a.get(r, col) / d;
                for j in col..n {
                    let v = a.get(r, j) - f * a.get(col, j);
                    a.set(r, j, v);
                }
                for j in 0..x.cols {
                    let v = x.get(r, j) - f * x.get(col, j);
                    x.set(r, j, v);
                }
            }
        }
        for col in (0..n).rev() {
            let d = a.get(col, col);
            for j in 0..x.cols {
                let mut s = x.get(col, j);
                for k in col + 1..n {
                    s -= a.get(col, k) * x.get(k, j);
                }
                x.set(col, j, s / d);
            }
        }
        Ok(x)
    }
}

/// Largest eigenvalue of a Hermitian matrix by shifted complex power
/// iteration with a real Rayleigh quotient.
pub fn hermitian_lambda_max<T: Real>(h: &CMatrix<T>) -> Result<T> {
    hermitian_top_eigenpair(h).map(|(lambda, _)| lambda)
}

/// Largest eigenvalue with a unit eigenvector. Within a repeated top
/// eigenvalue the returned vector is some element of the eigenspace.
pub fn hermitian_top_eigenpair<T: Real>(h: &CMatrix<T>) -> Result<(T, Vec<Complex<T>>)> {
    if !h.is_hermitian(T::tol(tol::STRUCTURAL)) {
        return Err(Error::Contract("hermitian_lambda_max: matrix is not Hermitian".into()));
    }
    let n = h.rows();
    if n == 0 {
        return Err(Error::Contract("hermitian_lambda_max: empty matrix".into()));
    }
    let shift = h.frobenius_norm();
    if shift == T::zero() {
        let mut e = vec![Complex::new(T::zero(), T::zero()); n];
        e[0] = Complex::new(T::one(), T::zero());
        return Ok((T::zero(), e));
    }
    let zero = Complex::new(T::zero(), T::zero());
    let mut v: Vec<Complex<T>> = (0..n)
        .map(|i| Complex::new(T::one() + T::lit(0.01 * i as f64), T::lit(0.1 * ((i * 5 + 1) % 7) as f64 / 7.0)))
        .collect();
    let nrm = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
    v.iter_mut().for_each(|z| *z /= nrm);
    let conv = T::tol(tol::STRUCTURAL) * shift;
    let mut rq = T::zero();
    for it in 0..200_000 {
        let w: Vec<Complex<T>> = (0..n)
            .map(|i| {
                (0..n).fold(zero, |acc, j| acc + h.get(i, j) * v[j]) + v[i] * shift
            })
            .collect();
        rq = v.iter().zip(&w).fold(zero, |acc, (a, b)| acc + a.conj() * b).re;
        let resid = w.iter().zip(&v).map(|(a, b)| (a - b * rq).norm_sqr()).sum::<T>().sqrt();
        let nrm = w.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if nrm == T::zero() {
            break;
        }
        v = w.into_iter().map(|z| z / nrm).collect();
        if resid <= conv && it > 2 {
            break;
        }
    }
    Ok((rq - shift, v))
}
