use serde::{Deserialize, Serialize};

use super::{is_stabilizing_static, Plant};
use crate::error::{Error, Result};
use crate::Mat;

/// Static state-feedback gain `u = Kx`.
///
/// The `certified` flag is only ever set after `ρ(A + BK) < 1` has been
/// verified against a plant.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticGain {
    k: Mat,
    certified: bool,
}

impl StaticGain {
    /// Verify stability against `plant` and tag the gain as certified.
    pub fn certify(plant: &Plant, k: Mat) -> Result<Self> {
        if k.shape() != (plant.m(), plant.n()) {
            return Err(Error::dim(
                "StaticGain::certify",
                format!("{}x{}", plant.m(), plant.n()),
                format!("{}x{}", k.rows(), k.cols()),
            ));
        }
        if !is_stabilizing_static(plant, &k) {
            return Err(Error::Infeasible("gain is not stabilizing".into()));
        }
        Ok(StaticGain { k, certified: true })
    }

    pub fn uncertified(k: Mat) -> Self {
        StaticGain { k, certified: false }
    }

    pub fn k(&self) -> &Mat {
        &self.k
    }

    pub fn into_inner(self) -> Mat {
        self.k
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    pub(crate) fn require_certified(&self) -> Result<()> {
        if self.certified {
            Ok(())
        } else {
            Err(Error::Infeasible("gain has not been certified as stabilizing".into()))
        }
    }

    /// `A + BK`
    pub fn closed_loop(&self, plant: &Plant) -> Mat {
        plant.a() + &(plant.b() * &self.k)
    }
}

/// Dynamic output-feedback controller `ξ⁺ = A_K ξ + B_K y`, `u = C_K ξ`.
///
/// The same triple type doubles as a tangent vector `(E, F, G)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicPolicy {
    #[serde(rename = "A_K")]
    a_k: Mat,
    #[serde(rename = "B_K")]
    b_k: Mat,
    #[serde(rename = "C_K")]
    c_k: Mat,
}

/// Tangent vectors to the controller manifold share the controller layout.
pub type PolicyTangent = DynamicPolicy;

impl DynamicPolicy {
    pub fn new(a_k: Mat, b_k: Mat, c_k: Mat) -> Result<Self> {
        let q = a_k.rows();
        if !a_k.is_square() {
            return Err(Error::dim("DynamicPolicy", "square A_K", format!("{}x{}", a_k.rows(), a_k.cols())));
        }
        if b_k.rows() != q {
            return Err(Error::dim("DynamicPolicy", format!("B_K with {q} rows"), format!("{}", b_k.rows())));
        }
        if c_k.cols() != q {
            return Err(Error::dim("DynamicPolicy", format!("C_K with {q} columns"), format!("{}", c_k.cols())));
        }
        Ok(DynamicPolicy { a_k, b_k, c_k })
    }

    pub fn zeros(q: usize, p: usize, m: usize) -> Self {
        DynamicPolicy {
            a_k: Mat::zeros(q, q),
            b_k: Mat::zeros(q, p),
            c_k: Mat::zeros(m, q),
        }
    }

    pub fn a_k(&self) -> &Mat {
        &self.a_k
    }
    pub fn b_k(&self) -> &Mat {
        &self.b_k
    }
    pub fn c_k(&self) -> &Mat {
        &self.c_k
    }

    pub fn order(&self) -> usize {
        self.a_k.rows()
    }

    /// Shape check against a plant: `B_K` consumes `p` outputs, `C_K` drives `m` inputs.
    pub fn check_plant(&self, plant: &Plant) -> Result<()> {
        if self.b_k.cols() != plant.p() || self.c_k.rows() != plant.m() {
            return Err(Error::dim(
                "DynamicPolicy::check_plant",
                format!("B_K q x {}, C_K {} x q", plant.p(), plant.m()),
                format!("B_K {}x{}, C_K {}x{}", self.b_k.rows(), self.b_k.cols(), self.c_k.rows(), self.c_k.cols()),
            ));
        }
        Ok(())
    }

    /// Number of free parameters `q² + qp + mq`.
    pub fn dim(&self) -> usize {
        self.a_k.as_slice().len() + self.b_k.as_slice().len() + self.c_k.as_slice().len()
    }

    /// `(A_K, B_K, C_K)` flattened row-major, in that order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(self.a_k.as_slice());
        v.extend_from_slice(self.b_k.as_slice());
        v.extend_from_slice(self.c_k.as_slice());
        v
    }

    /// Inverse of [`DynamicPolicy::to_flat`] for a template of the same shape.
    pub fn from_flat_like(&self, v: &[f64]) -> Result<Self> {
        if v.len() != self.dim() {
            return Err(Error::dim("DynamicPolicy::from_flat_like", format!("{}", self.dim()), format!("{}", v.len())));
        }
        let na = self.a_k.as_slice().len();
        let nb = self.b_k.as_slice().len();
        Ok(DynamicPolicy {
            a_k: Mat::from_vec(self.a_k.rows(), self.a_k.cols(), v[..na].to_vec())?,
            b_k: Mat::from_vec(self.b_k.rows(), self.b_k.cols(), v[na..na + nb].to_vec())?,
            c_k: Mat::from_vec(self.c_k.rows(), self.c_k.cols(), v[na + nb..].to_vec())?,
        })
    }

    /// `self + alpha·other`
    pub fn axpy(&self, alpha: f64, other: &Self) -> Self {
        DynamicPolicy {
            a_k: &self.a_k + &other.a_k.scale(alpha),
            b_k: &self.b_k + &other.b_k.scale(alpha),
            c_k: &self.c_k + &other.c_k.scale(alpha),
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        DynamicPolicy {
            a_k: self.a_k.scale(alpha),
            b_k: self.b_k.scale(alpha),
            c_k: self.c_k.scale(alpha),
        }
    }

    /// Euclidean (Frobenius) pairing of two triples.
    pub fn dot(&self, other: &Self) -> f64 {
        self.a_k.dot(&other.a_k) + self.b_k.dot(&other.b_k) + self.c_k.dot(&other.c_k)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Points that can be moved along straight lines and flattened, so grid
/// scanners work for static gains and dynamic controllers alike.
pub trait PolicyVector: Clone {
    fn axpy(&self, alpha: f64, other: &Self) -> Self;
    fn to_flat(&self) -> Vec<f64>;
}

impl PolicyVector for Mat {
    fn axpy(&self, alpha: f64, other: &Self) -> Self {
        self + &other.scale(alpha)
    }
    fn to_flat(&self) -> Vec<f64> {
        self.as_slice().to_vec()
    }
}

impl PolicyVector for DynamicPolicy {
    fn axpy(&self, alpha: f64, other: &Self) -> Self {
        DynamicPolicy::axpy(self, alpha, other)
    }
    fn to_flat(&self) -> Vec<f64> {
        DynamicPolicy::to_flat(self)
    }
}
