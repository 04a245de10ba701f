use super::{tol, Matrix, Real};
use crate::error::{Error, Result};

/// Solve `G X = B` by Gaussian elimination with partial pivoting.
///
/// `B` may carry several right-hand-side columns.
pub fn solve_linear<T: Real>(g: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if !g.is_square() {
        return Err(Error::dim("solve_linear", "square G", format!("{}x{}", g.rows(), g.cols())));
    }
    let n = g.rows();
    if b.rows() != n {
        return Err(Error::dim("solve_linear", format!("b with {n} rows"), format!("{} rows", b.rows())));
    }
    let floor = T::tol(tol::PIVOT_FLOOR) * g.frobenius_norm().max(T::min_positive_value());
    let mut a = g.clone();
    let mut x = b.clone();
    let nrhs = b.cols();

    for col in 0..n {
        let (piv, piv_abs) = (col..n)
            .map(|r| (r, a[(r, col)].abs()))
            .fold((col, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_abs <= floor {
            return Err(Error::Singular {
                op: "solve_linear",
                pivot: piv_abs.to_f64_lossy(),
                floor: floor.to_f64_lossy(),
            });
        }
        if piv != col {
            for j in 0..n {
                let t = a[(col, j)];
                a[(col, j)] = a[(piv, j)];
                a[(piv, j)] = t;
            }
            for j in 0..nrhs {
                let t = x[(col, j)];
                x[(col, j)] = x[(piv, j)];
                x[(piv, j)] = t;
            }
        }
        let d = a[(col, col)];
        for r in col + 1..n {
            let f = a[(r, col)] / d;
            if f == T::zero() {
                continue;
            }
            a[(r, col)] = T::zero();
            for j in col + 1..n {
                let v = a[(col, j)];
                a[(r, j)] -= f * v;
            }
            for j in 0..nrhs {
                let v = x[(col, j)];
                x[(r, j)] -= f * v;
            }
        }
    }
    for col in (0..n).rev() {
        let d = a[(col, col)];
        for j in 0..nrhs {
            let mut s = x[(col, j)];
            for k in col + 1..n {
                s -= a[(col, k)] * x[(k, j)];
            }
            x[(col, j)] = s / d;
        }
    }
    Ok(x)
}

pub fn inverse<T: Real>(g: &Matrix<T>) -> Result<Matrix<T>> {
    solve_linear(g, &Matrix::identity(g.rows()))
}

/// Lower-triangular `L` with `L Lᵀ = S` for symmetric positive definite `S`.
pub fn cholesky<T: Real>(s: &Matrix<T>) -> Result<Matrix<T>> {
    if !s.is_square() {
        return Err(Error::dim("cholesky", "square", format!("{}x{}", s.rows(), s.cols())));
    }
    let n = s.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return Err(Error::Singular {
                op: "cholesky",
                pivot: d.to_f64_lossy(),
                floor: 0.0,
            });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut x = s[(i, j)];
            for k in 0..j {
                x -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = x / d;
        }
    }
    Ok(l)
}

/// Error-free `a + b = s + e`.
fn two_sum<T: Real>(a: T, b: T) -> (T, T) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Error-free `a·b = p + e` via fused multiply-add.
fn two_prod<T: Real>(a: T, b: T) -> (T, T) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Unevaluated sum `hi + lo` carrying about twice the working precision.
#[derive(Clone, Copy)]
struct Dd<T> {
    hi: T,
    lo: T,
}

impl<T: Real> Dd<T> {
    fn renorm(hi: T, lo: T) -> Self {
        let s = hi + lo;
        Dd { hi: s, lo: lo - (s - hi) }
    }

    fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        Self::renorm(s, e + self.lo + o.lo)
    }

    fn mul(self, o: Self) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        Self::renorm(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    fn scale(self, s: T) -> Self {
        let (p, e) = two_prod(self.hi, s);
        Self::renorm(p, e + self.lo * s)
    }
}

/// Square of an `n×n` matrix in extended precision. Working-precision
/// rounding here would smear defective eigenvalues (a Jordan block loses its
/// nilpotent part after a few dozen squarings) and stall the estimate near
/// `sqrt(eps)` relative accuracy.
fn dd_square<T: Real>(x: &[Dd<T>], n: usize) -> Vec<Dd<T>> {
    let zero = Dd { hi: T::zero(), lo: T::zero() };
    let mut out = vec![zero; n * n];
    for i in 0..n {
        for k in 0..n {
            let a = x[i * n + k];
            if a.hi == T::zero() {
                continue;
            }
            for j in 0..n {
                out[i * n + j] = out[i * n + j].add(a.mul(x[k * n + j]));
            }
        }
    }
    out
}

/// Spectral radius by normalized repeated squaring:
/// `r_k = ‖M^(2^k)‖_F^(1/2^k)`, tracked in log space so it never overflows.
/// Powers are kept in double-word arithmetic.
///
/// The estimate is an upper bound on ρ(M) up to rounding.
pub fn spectral_radius<T: Real>(m: &Matrix<T>) -> Result<T> {
    if !m.is_square() {
        return Err(Error::dim("spectral_radius", "square matrix", format!("{}x{}", m.rows(), m.cols())));
    }
    let n = m.rows();
    let norm = m.frobenius_norm();
    if norm == T::zero() {
        return Ok(T::zero());
    }
    let inv = norm.recip();
    let mut x: Vec<Dd<T>> = m.as_slice().iter().map(|&v| Dd { hi: v, lo: T::zero() }.scale(inv)).collect();
    // log ‖M^(2^k)‖_F = log_norm, estimate = log_norm / 2^k
    let mut log_norm = norm.ln();
    let mut power = T::one();
    let mut est = log_norm;
    let gap = T::tol(tol::RADIUS_LOG_GAP);
    for _ in 0..tol::RADIUS_MAX_DOUBLINGS {
        let sq = dd_square(&x, n);
        let big = sq.iter().fold(T::zero(), |acc, d| acc.max(d.hi.abs()));
        if big == T::zero() {
            return Ok(T::zero());
        }
        let nu = big * sq.iter().map(|d| (d.hi / big) * (d.hi / big)).sum::<T>().sqrt();
        log_norm = log_norm + log_norm + nu.ln();
        power = power + power;
        let inv = nu.recip();
        x = sq.into_iter().map(|d| d.scale(inv)).collect();
        let next = log_norm / power;
        let done = (next - est).abs() < gap;
        est = next;
        if done {
            break;
        }
    }
    Ok(est.exp())
}

fn check_symmetric<T: Real>(s: &Matrix<T>, op: &str) -> Result<()> {
    if !s.is_square() {
        return Err(Error::Contract(format!("{op}: matrix is not square")));
    }
    if !s.is_symmetric(T::tol(tol::STRUCTURAL)) {
        return Err(Error::Contract(format!("{op}: matrix is not symmetric within {}", tol::STRUCTURAL)));
    }
    Ok(())
}

fn start_vector<T: Real>(n: usize) -> Vec<T> {
    let v: Vec<T> = (0..n).map(|i| T::one() + T::lit(0.1 * ((i * 7 + 3) % 11) as f64 / 11.0)).collect();
    let nrm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    v.into_iter().map(|x| x / nrm).collect()
}

/// Largest eigenvalue of a symmetric matrix by shifted power iteration with
/// a Rayleigh-quotient estimate. The shift ‖S‖_F makes every eigenvalue of
/// the shifted matrix nonnegative so the top one dominates.
pub fn sym_lambda_max<T: Real>(s: &Matrix<T>) -> Result<T> {
    check_symmetric(s, "sym_lambda_max")?;
    let n = s.rows();
    if n == 0 {
        return Err(Error::Contract("sym_lambda_max: empty matrix".into()));
    }
    let shift = s.frobenius_norm();
    if shift == T::zero() {
        return Ok(T::zero());
    }
    let shifted = &s.symmetrize() + &Matrix::identity(n).scale(shift);
    let mut v = start_vector::<T>(n);
    let conv = T::tol(tol::STRUCTURAL) * shift;
    let mut rq = T::zero();
    for it in 0..200_000 {
        let w: Vec<T> = (0..n).map(|i| (0..n).map(|j| shifted[(i, j)] * v[j]).sum()).collect();
        rq = v.iter().zip(&w).map(|(&a, &b)| a * b).sum();
        let resid = w.iter().zip(&v).map(|(&a, &b)| (a - rq * b).powi(2)).sum::<T>().sqrt();
        let nrm = w.iter().map(|&x| x * x).sum::<T>().sqrt();
        if nrm == T::zero() {
            break;
        }
        v = w.into_iter().map(|x| x / nrm).collect();
        if resid <= conv && it > 2 {
            break;
        }
    }
    Ok(rq - shift)
}

/// Largest singular value, `sqrt(λ_max(MᵀM))`.
pub fn spectral_norm<T: Real>(m: &Matrix<T>) -> T {
    if m.rows() == 0 || m.cols() == 0 {
        return T::zero();
    }
    let gram = (&m.transpose() * m).symmetrize();
    sym_lambda_max(&gram).expect("Gram matrix is symmetric").max(T::zero()).sqrt()
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.
pub fn sym_eigenvalues<T: Real>(s: &Matrix<T>) -> Result<Vec<T>> {
    check_symmetric(s, "sym_eigenvalues")?;
    let n = s.rows();
    let mut a = s.symmetrize();
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let off: T = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off.sqrt() <= eps * a.frobenius_norm() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = (t * t + T::one()).sqrt().recip();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<T> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Ok(ev)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_lambda_min<T: Real>(s: &Matrix<T>) -> Result<T> {
    Ok(sym_eigenvalues(s)?.first().copied().unwrap_or(T::zero()))
}

/// Singular values, descending, by one-sided Jacobi on the columns.
pub fn singular_values<T: Real>(m: &Matrix<T>) -> Vec<T> {
    // Work with the wider-than-tall orientation flipped so columns ≤ rows.
    let a = if m.cols() > m.rows() { m.transpose() } else { m.clone() };
    let (rows, cols) = a.shape();
    let mut u = a;
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..rows {
                    alpha += u[(i, p)] * u[(i, p)];
                    beta += u[(i, q)] * u[(i, q)];
                    gamma += u[(i, p)] * u[(i, q)];
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == T::zero() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = (T::one() + t * t).sqrt().recip();
                let s = c * t;
                for i in 0..rows {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> = (0..cols)
        .map(|j| (0..rows).map(|i| u[(i, j)] * u[(i, j)]).sum::<T>().sqrt())
        .collect();
    sv.sort_by(|x, y| y.partial_cmp(x).expect("finite singular values"));
    sv
}

/// Numerical rank with threshold σ > rel_tol · σ_max.
pub fn rank<T: Real>(m: &Matrix<T>, rel_tol: T) -> usize {
    let sv = singular_values(m);
    let smax = sv.first().copied().unwrap_or(T::zero());
    if smax == T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}
