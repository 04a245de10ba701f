use crate::error::{Error, Result};
use crate::numerics::{sym_lambda_min, tol};
use crate::Mat;

/// LTI plant `x⁺ = Ax + Bu + w`, `y = Cx + v` together with its noise
/// covariances and quadratic cost weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Plant {
    a: Mat,
    b: Mat,
    c: Mat,
    sigma: Mat,
    w: Mat,
    v: Mat,
    q: Mat,
    r: Mat,
}

impl Plant {
    /// Start a builder; every unset matrix defaults to the identity of the
    /// matching size (`C = I_n`, so `p = n` unless `C` is given).
    pub fn builder(a: Mat, b: Mat) -> PlantBuilder {
        PlantBuilder {
            a,
            b,
            c: None,
            sigma: None,
            w: None,
            v: None,
            q: None,
            r: None,
        }
    }

    /// Scalar plant with unit weights and covariances.
    pub fn scalar(a: f64, b: f64, c: f64) -> Self {
        Self::builder(Mat::scalar(a), Mat::scalar(b))
            .c(Mat::scalar(c))
            .build()
            .expect("scalar plant with unit weights is valid")
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn sigma(&self) -> &Mat {
        &self.sigma
    }
    pub fn w(&self) -> &Mat {
        &self.w
    }
    pub fn v(&self) -> &Mat {
        &self.v
    }
    pub fn q(&self) -> &Mat {
        &self.q
    }
    pub fn r(&self) -> &Mat {
        &self.r
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.rows()
    }
    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.cols()
    }
    /// Output dimension.
    pub fn p(&self) -> usize {
        self.c.rows()
    }

    pub fn with_a(&self, a: Mat) -> Result<Self> {
        self.rebuild(|b| b.a = a)
    }

    fn rebuild(&self, f: impl FnOnce(&mut PlantBuilder)) -> Result<Self> {
        let mut b = PlantBuilder {
            a: self.a.clone(),
            b: self.b.clone(),
            c: Some(self.c.clone()),
            sigma: Some(self.sigma.clone()),
            w: Some(self.w.clone()),
            v: Some(self.v.clone()),
            q: Some(self.q.clone()),
            r: Some(self.r.clone()),
        };
        f(&mut b);
        b.build()
    }
}

/// A single failed plant requirement, keyed by field name.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct PlantBuilder {
    a: Mat,
    b: Mat,
    c: Option<Mat>,
    sigma: Option<Mat>,
    w: Option<Mat>,
    v: Option<Mat>,
    q: Option<Mat>,
    r: Option<Mat>,
}

impl PlantBuilder {
    pub fn c(mut self, c: Mat) -> Self {
        self.c = Some(c);
        self
    }
    pub fn sigma(mut self, sigma: Mat) -> Self {
        self.sigma = Some(sigma);
        self
    }
    pub fn w(mut self, w: Mat) -> Self {
        self.w = Some(w);
        self
    }
    pub fn v(mut self, v: Mat) -> Self {
        self.v = Some(v);
        self
    }
    pub fn q(mut self, q: Mat) -> Self {
        self.q = Some(q);
        self
    }
    pub fn r(mut self, r: Mat) -> Self {
        self.r = Some(r);
        self
    }

    /// Every violated shape or definiteness requirement.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |field: &str, message: String| {
            out.push(Violation {
                field: field.to_string(),
                message,
            })
        };
        let n = self.a.rows();
        if !self.a.is_square() {
            bad("A", format!("must be square, got {}x{}", self.a.rows(), self.a.cols()));
        }
        if self.b.rows() != n {
            bad("B", format!("must have {n} rows, got {}", self.b.rows()));
        }
        let m = self.b.cols();
        let p = self.c.as_ref().map_or(n, |c| c.rows());
        if let Some(c) = &self.c {
            if c.cols() != n {
                bad("C", format!("must have {n} columns, got {}", c.cols()));
            }
        }
        let checks: [(&str, &Option<Mat>, usize, bool); 5] = [
            ("Sigma", &self.sigma, n, true),
            ("W", &self.w, n, false),
            ("V", &self.v, p, true),
            ("Q", &self.q, n, false),
            ("R", &self.r, m, true),
        ];
        for (field, mat, dim, definite) in checks {
            let Some(x) = mat else { continue };
            if x.shape() != (dim, dim) {
                bad(field, format!("must be {dim}x{dim}, got {}x{}", x.rows(), x.cols()));
                continue;
            }
            if !x.is_symmetric(tol::STRUCTURAL) {
                bad(field, "must be symmetric".to_string());
                continue;
            }
            let lmin = sym_lambda_min(x).unwrap_or(f64::NAN);
            let scale = 1.0f64.max(x.max_abs());
            if definite && !(lmin > 0.0) {
                bad(field, format!("must be positive definite, smallest eigenvalue is {lmin:e}"));
            } else if !definite && !(lmin >= -tol::STRUCTURAL * scale) {
                bad(field, format!("must be positive semidefinite, smallest eigenvalue is {lmin:e}"));
            }
        }
        out
    }

    pub fn build(self) -> Result<Plant> {
        let v = self.violations();
        if !v.is_empty() {
            let msg: Vec<String> = v.iter().map(|x| format!("{}: {}", x.field, x.message)).collect();
            return Err(Error::Contract(format!("invalid plant: {}", msg.join("; "))));
        }
        let n = self.a.rows();
        let m = self.b.cols();
        let c = self.c.unwrap_or_else(|| Mat::identity(n));
        let p = c.rows();
        Ok(Plant {
            sigma: self.sigma.unwrap_or_else(|| Mat::identity(n)).symmetrize(),
            w: self.w.unwrap_or_else(|| Mat::identity(n)).symmetrize(),
            v: self.v.unwrap_or_else(|| Mat::identity(p)).symmetrize(),
            q: self.q.unwrap_or_else(|| Mat::identity(n)).symmetrize(),
            r: self.r.unwrap_or_else(|| Mat::identity(m)).symmetrize(),
            a: self.a,
            b: self.b,
            c,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_identity() {
        let p = Plant::builder(Mat::identity(3), Mat::zeros(3, 2)).build().unwrap();
        assert_eq!((p.n(), p.m(), p.p()), (3, 2, 3));
        assert_eq!(p.r(), &Mat::identity(2));
    }

    #[test]
    fn reports_every_violation() {
        let b = Plant::builder(Mat::identity(2), Mat::zeros(3, 1))
            .q(Mat::diag(&[1.0, -0.5]))
            .r(Mat::scalar(0.0));
        let fields: Vec<String> = b.violations().into_iter().map(|v| v.field).collect();
        assert_eq!(fields, ["B", "Q", "R"]);
        let msg = b.build().unwrap_err().to_string();
        assert!(msg.contains("-5e-1"), "{msg}");
    }
}
