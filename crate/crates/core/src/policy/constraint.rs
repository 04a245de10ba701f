use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::rank;
use crate::numerics::tol;
use crate::Mat;

#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintKind {
    /// Entries where `mask[i][j]` is false are pinned to zero.
    Sparsity(Vec<Vec<bool>>),
    /// Gains of the form `K = L·C_out` for a full-row-rank `C_out`.
    OutputFeedback(Mat),
}

/// Linear subspace of `m×n` gain space, carried as an explicit basis.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSubspace {
    kind: ConstraintKind,
    rows: usize,
    cols: usize,
    basis: Vec<Mat>,
    /// Orthonormalized rows of `C_out` (output feedback only).
    row_basis: Option<Mat>,
}

impl ConstraintSubspace {
    /// Whole `m×n` space as the unit-matrix basis.
    pub fn full(m: usize, n: usize) -> Self {
        Self::sparsity(vec![vec![true; n]; m]).expect("full mask is a valid sparsity pattern")
    }

    pub fn sparsity(mask: Vec<Vec<bool>>) -> Result<Self> {
        let rows = mask.len();
        let cols = mask.first().map_or(0, Vec::len);
        if mask.iter().any(|r| r.len() != cols) {
            return Err(Error::Contract("sparsity mask rows have different lengths".into()));
        }
        let mut basis = Vec::new();
        for (i, row) in mask.iter().enumerate() {
            for (j, &allowed) in row.iter().enumerate() {
                if allowed {
                    let mut e = Mat::zeros(rows, cols);
                    e[(i, j)] = 1.0;
                    basis.push(e);
                }
            }
        }
        if basis.is_empty() {
            return Err(Error::Contract("sparsity mask allows no entries".into()));
        }
        Ok(ConstraintSubspace {
            kind: ConstraintKind::Sparsity(mask),
            rows,
            cols,
            basis,
            row_basis: None,
        })
    }

    /// `{ L·C_out }` for `m` inputs; basis `e_i f_jᵀ U` over the
    /// Gram-Schmidt orthonormalized rows `U` of `C_out`.
    pub fn output_feedback(c_out: Mat, m: usize) -> Result<Self> {
        let (d, n) = c_out.shape();
        if d == 0 || rank(&c_out, tol::RANK) != d {
            return Err(Error::Contract("output-feedback C_out must have full row rank".into()));
        }
        let mut u = Mat::zeros(d, n);
        for i in 0..d {
            let mut row: Vec<f64> = (0..n).map(|j| c_out[(i, j)]).collect();
            // modified Gram-Schmidt, applied twice for stability
            for _ in 0..2 {
                for k in 0..i {
                    let proj: f64 = (0..n).map(|j| row[j] * u[(k, j)]).sum();
                    for (j, r) in row.iter_mut().enumerate() {
                        *r -= proj * u[(k, j)];
                    }
                }
            }
            let nrm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (j, r) in row.iter().enumerate() {
                u[(i, j)] = r / nrm;
            }
        }
        let mut basis = Vec::with_capacity(m * d);
        for i in 0..m {
            for jd in 0..d {
                let mut e = Mat::zeros(m, n);
                for col in 0..n {
                    e[(i, col)] = u[(jd, col)];
                }
                basis.push(e);
            }
        }
        Ok(ConstraintSubspace {
            kind: ConstraintKind::OutputFeedback(c_out),
            rows: m,
            cols: n,
            basis,
            row_basis: Some(u),
        })
    }

    pub fn kind(&self) -> &ConstraintKind {
        &self.kind
    }

    pub fn basis(&self) -> &[Mat] {
        &self.basis
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Membership within `tol` (absolute, scaled by `1 + ‖K‖`).
    pub fn contains(&self, k: &Mat, tol: f64) -> bool {
        if k.shape() != (self.rows, self.cols) {
            return false;
        }
        match (&self.kind, &self.row_basis) {
            (ConstraintKind::Sparsity(mask), _) => (0..self.rows)
                .all(|i| (0..self.cols).all(|j| mask[i][j] || k[(i, j)].abs() <= tol)),
            (ConstraintKind::OutputFeedback(_), Some(u)) => {
                // K (I − UᵀU) = 0
                let resid = k - &(&(k * &u.transpose()) * u);
                resid.frobenius_norm() <= tol * (1.0 + k.frobenius_norm())
            }
            (ConstraintKind::OutputFeedback(_), None) => unreachable!("output feedback always carries its row basis"),
        }
    }

    /// `Σ c_i E_i`
    pub fn combine(&self, coeffs: &[f64]) -> Mat {
        assert_eq!(coeffs.len(), self.basis.len(), "combine: coefficient count");
        let mut out = Mat::zeros(self.rows, self.cols);
        for (c, e) in coeffs.iter().zip(&self.basis) {
            if *c != 0.0 {
                out += &e.scale(*c);
            }
        }
        out
    }
}

/// Inner product used for projections and gradients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricChoice {
    /// `tr(Xᵀ Y)`
    Frobenius,
    /// `tr(Xᵀ Y Y_K)` with `Y_K = L(A + BK, Σ)`.
    Lyapunov,
    /// Similarity-invariant metric on minimal dynamic controllers.
    Km { w1: f64, w2: f64, w3: f64 },
}

impl MetricChoice {
    pub const KM_DEFAULT: MetricChoice = MetricChoice::Km {
        w1: 1.0,
        w2: 1.0,
        w3: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        match *self {
            MetricChoice::Km { w1, w2, w3 } if !(w1 > 0.0 && w2 >= 0.0 && w3 >= 0.0) => Err(Error::Contract(
                format!("KM weights need w1 > 0, w2 >= 0, w3 >= 0; got ({w1}, {w2}, {w3})"),
            )),
            _ => Ok(()),
        }
    }
}
