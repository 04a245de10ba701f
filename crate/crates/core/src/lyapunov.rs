//! Discrete Lyapunov map `L(A, Q)`: the unique `P` with `P = A P Aᵀ + Q`
//! when `A` is Schur stable, its differential, and the trace identity
//! `tr(L(Aᵀ, Q) Σ) = tr(L(A, Σ) Q)`.

use crate::error::{Error, Result};
use crate::numerics::{solve_linear, spectral_radius, tol, Matrix, Real};

/// Largest dimension the Kronecker oracle accepts (it is O(n⁶)).
pub const KRON_ORACLE_MAX_DIM: usize = 12;

const SMITH_MAX_DOUBLINGS: usize = 64;
const SMITH_STOP: f64 = 1e-13;
const DIVERGENCE_FACTOR: f64 = 1e8;

#[derive(Clone, Debug)]
pub struct LyapSolution<T: Real> {
    pub p: Matrix<T>,
    pub iterations: usize,
    /// ‖P − A P Aᵀ − Q‖_F
    pub residual: T,
}

fn check_pair<T: Real>(op: &'static str, a: &Matrix<T>, q: &Matrix<T>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::dim(op, "square A", format!("{}x{}", a.rows(), a.cols())));
    }
    if q.shape() != a.shape() {
        return Err(Error::dim(op, format!("Q {}x{}", a.rows(), a.cols()), format!("{}x{}", q.rows(), q.cols())));
    }
    Ok(())
}

/// Solve `P = A P Aᵀ + Q` by Smith doubling.
///
/// `P₀ = Q, M₀ = A`, `P_{k+1} = P_k + M_k P_k M_kᵀ`, `M_{k+1} = M_k²`.
pub fn dlyap<T: Real>(a: &Matrix<T>, q: &Matrix<T>) -> Result<LyapSolution<T>> {
    check_pair("dlyap", a, q)?;
    let rho = spectral_radius(a)?;
    if rho >= T::one() - T::tol(tol::STABILITY_MARGIN) {
        return Err(Error::NotSchurStable { rho: rho.to_f64_lossy() });
    }
    let mut p = q.clone();
    let mut m = a.clone();
    let p0 = q.frobenius_norm();
    let stop = T::tol(SMITH_STOP);
    let mut iterations = 0;
    for k in 0..SMITH_MAX_DOUBLINGS {
        iterations = k + 1;
        let mt = m.transpose();
        p = &p + &(&(&m * &p) * &mt);
        m = &m * &m;
        let pn = p.frobenius_norm();
        if !p.is_finite() || (p0 > T::zero() && pn > T::lit(DIVERGENCE_FACTOR) * p0) {
            return Err(Error::NotSchurStable { rho: rho.to_f64_lossy() });
        }
        let mn = m.frobenius_norm();
        if mn * mn <= stop {
            break;
        }
    }
    // L(A, Q) is symmetric exactly when Q is; only then clean rounding drift.
    let p = if q.is_symmetric(T::zero()) { p.symmetrize() } else { p };
    let residual = (&(&p - &(&(a * &p) * &a.transpose())) - q).frobenius_norm();
    Ok(LyapSolution { p, iterations, residual })
}

/// Convenience: `L(A, Q)` without the diagnostics.
pub fn lyap<T: Real>(a: &Matrix<T>, q: &Matrix<T>) -> Result<Matrix<T>> {
    Ok(dlyap(a, q)?.p)
}

/// Independent oracle: `vec(P) = (I − A⊗A)⁻¹ vec(Q)` by a dense solve.
pub fn dlyap_kron_oracle<T: Real>(a: &Matrix<T>, q: &Matrix<T>) -> Result<Matrix<T>> {
    check_pair("dlyap_kron_oracle", a, q)?;
    let n = a.rows();
    if n > KRON_ORACLE_MAX_DIM {
        return Err(Error::Refused(format!(
            "Kronecker oracle limited to n <= {KRON_ORACLE_MAX_DIM}, got {n}"
        )));
    }
    let rho = spectral_radius(a)?;
    if rho >= T::one() {
        return Err(Error::NotSchurStable { rho: rho.to_f64_lossy() });
    }
    let lhs = &Matrix::identity(n * n) - &a.kron(a);
    let x = solve_linear(&lhs, &Matrix::column(&q.vec_cols()))?;
    Ok(Matrix::from_fn(n, n, |i, j| x[(j * n + i, 0)]))
}

/// Differential `dL_{(A,Q)}[E, F] = L(A, E P Aᵀ + A P Eᵀ + F)` with `P = L(A, Q)`.
pub fn dlyap_diff<T: Real>(a: &Matrix<T>, q: &Matrix<T>, e: &Matrix<T>, f: &Matrix<T>) -> Result<Matrix<T>> {
    check_pair("dlyap_diff", a, q)?;
    check_pair("dlyap_diff", a, e)?;
    check_pair("dlyap_diff", a, f)?;
    let p = lyap(a, q)?;
    let epa = &(e * &p) * &a.transpose();
    let ape = &(a * &p) * &e.transpose();
    lyap(a, &(&(&epa + &ape) + f))
}

/// Relative residual of the trace identity
/// `|tr(L(Aᵀ,Q)Σ) − tr(L(A,Σ)Q)| / (1 + |tr(L(A,Σ)Q)|)`.
pub fn lyap_trace_check<T: Real>(a: &Matrix<T>, q: &Matrix<T>, sigma: &Matrix<T>) -> Result<T> {
    let lhs = (&lyap(&a.transpose(), q)? * sigma).trace();
    let rhs = (&lyap(a, sigma)? * q).trace();
    Ok((lhs - rhs).abs() / (T::one() + rhs.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64) -> Matrix<f64> {
        Matrix::scalar(x)
    }

    #[test]
    fn zero_dynamics_returns_q() {
        assert_eq!(dlyap(&s(0.0), &s(2.5)).unwrap().p, s(2.5));
        let q = Matrix::from_rows(&[[1.0, 0.2], [0.2, 3.0]]).unwrap();
        assert_eq!(dlyap_kron_oracle(&Matrix::zeros(2, 2), &q).unwrap(), q);
    }

    #[test]
    fn scalar_geometric_series() {
        let sol = dlyap(&s(0.5), &s(1.0)).unwrap();
        assert!((sol.p[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
        assert!(sol.residual < 1e-14);
        assert!((dlyap_kron_oracle(&s(0.5), &s(1.0)).unwrap()[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn unstable_rejected() {
        assert!(matches!(dlyap(&s(1.0), &s(1.0)), Err(Error::NotSchurStable { .. })));
        assert!(matches!(dlyap(&s(-1.2), &s(1.0)), Err(Error::NotSchurStable { .. })));
    }

    #[test]
    fn oracle_refuses_large() {
        let a = Matrix::<f64>::zeros(13, 13);
        assert!(matches!(dlyap_kron_oracle(&a, &a), Err(Error::Refused(_))));
    }

    #[test]
    fn diff_trivial_cases() {
        let a = Matrix::from_rows(&[[0.5, 0.2], [-0.1, 0.3]]).unwrap();
        let q = Matrix::identity(2);
        let z = Matrix::zeros(2, 2);
        assert_eq!(dlyap_diff(&a, &q, &z, &z).unwrap(), z);
        let f = Matrix::from_rows(&[[0.4, 0.1], [0.1, 0.9]]).unwrap();
        assert!(dlyap_diff(&a, &q, &z, &f).unwrap().approx_eq(&lyap(&a, &f).unwrap(), 1e-14));
    }

    #[test]
    fn diff_scalar_matches_central_difference() {
        let h = 1e-6;
        let fd = (lyap(&s(0.5 + h), &s(1.0)).unwrap()[(0, 0)] - lyap(&s(0.5 - h), &s(1.0)).unwrap()[(0, 0)]) / (2.0 * h);
        let an = dlyap_diff(&s(0.5), &s(1.0), &s(1.0), &s(0.0)).unwrap()[(0, 0)];
        // closed form: d/da 1/(1-a²) = 2a/(1-a²)² = 16/9
        assert!((an - 16.0 / 9.0).abs() < 1e-12);
        assert!((fd - an).abs() / an < 1e-6);
    }

    #[test]
    fn trace_identity_scalar() {
        // both sides 2·3/0.75 = 8
        let lhs = (&lyap(&s(0.5), &s(2.0)).unwrap() * &s(3.0)).trace();
        assert!((lhs - 8.0).abs() < 1e-13);
        assert!(lyap_trace_check(&s(0.5), &s(2.0), &s(3.0)).unwrap() < 1e-14);
        assert_eq!(lyap_trace_check(&s(0.0), &s(2.0), &s(3.0)).unwrap(), 0.0);
    }

    #[test]
    fn generic_f32() {
        let p = lyap(&Matrix::<f32>::scalar(0.5), &Matrix::scalar(1.0)).unwrap();
        assert!((p[(0, 0)] - 4.0 / 3.0).abs() < 1e-5);
    }
}
