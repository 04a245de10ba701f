use super::{DynamicPolicy, Plant, StaticGain};
use crate::error::{Error, Result};
use crate::lqg::closed_loop;
use crate::lyapunov::lyap;
use crate::numerics::{spectral_norm, spectral_radius, sym_lambda_max, tol};
use crate::Mat;

/// `ρ(M) < 1 − margin`
pub fn is_schur(m: &Mat) -> bool {
    spectral_radius(m).is_ok_and(|rho| rho < 1.0 - tol::STABILITY_MARGIN)
}

/// Membership in the set of stabilizing static gains.
pub fn is_stabilizing_static(plant: &Plant, k: &Mat) -> bool {
    if k.shape() != (plant.m(), plant.n()) {
        return false;
    }
    is_schur(&(plant.a() + &(plant.b() * k)))
}

/// Membership in the set of stabilizing dynamic controllers: the closed-loop
/// matrix `[[A, B C_K], [B_K C, A_K]]` is Schur.
pub fn is_stabilizing_dynamic(plant: &Plant, kd: &DynamicPolicy) -> bool {
    kd.check_plant(plant).is_ok() && is_schur(&closed_loop(plant, kd).acl)
}

/// Closed-form safe step along `V` from a certified gain:
/// `s = 1 / (2 λ_max(L(A_clᵀ, I)) ‖B V‖₂)`. Every `η ∈ [0, s]` keeps
/// `K + ηV` stabilizing. Returns `+∞` when `BV = 0`.
pub fn stability_certificate(plant: &Plant, k: &StaticGain, v: &Mat) -> Result<f64> {
    k.require_certified()?;
    if v.shape() != k.k().shape() {
        return Err(Error::dim("stability_certificate", format!("{:?}", k.k().shape()), format!("{:?}", v.shape())));
    }
    let bv = spectral_norm(&(plant.b() * v));
    if bv == 0.0 {
        return Ok(f64::INFINITY);
    }
    let acl = k.closed_loop(plant);
    let ly = lyap(&acl.transpose(), &Mat::identity(plant.n()))?;
    let lmax = sym_lambda_max(&ly)?;
    Ok(1.0 / (2.0 * lmax * bv))
}

/// `K + min(η_cap, s_K(V))·V`, re-verified.
pub fn certified_step(plant: &Plant, k: &StaticGain, v: &Mat, eta_cap: f64) -> Result<StaticGain> {
    let s = stability_certificate(plant, k, v)?;
    let eta = eta_cap.min(s);
    if eta == 0.0 || v.max_abs() == 0.0 {
        return Ok(k.clone());
    }
    if !eta.is_finite() {
        return Err(Error::Contract("certified_step needs a finite step cap when B V = 0".into()));
    }
    let next = k.k() + &v.scale(eta);
    StaticGain::certify(plant, next)
        .map_err(|_| Error::Internal(format!("certified step of size {eta} left the stabilizing set")))
}
