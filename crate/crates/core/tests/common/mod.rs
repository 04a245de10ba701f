#![allow(dead_code)]

use polgeo::lqg::{lqg_cost, lqg_optimal_policy};
use polgeo::lqr::{dare_solve, lqr_cost, lqr_grad_riemannian};
use polgeo::numerics::spectral_radius;
use polgeo::policy::{is_stabilizing_dynamic, is_stabilizing_static, DynamicPolicy, Plant, StaticGain};
use polgeo::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `G Gᵀ + floor·I`
pub fn spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Mat {
    let g = gaussian(rng, n, n);
    &(&g * &g.transpose()).scale(1.0 / n as f64) + &Mat::identity(n).scale(floor)
}

/// Random matrix rescaled to spectral radius `rho`.
pub fn with_radius(rng: &mut ChaCha8Rng, n: usize, rho: f64) -> Mat {
    loop {
        let m = gaussian(rng, n, n);
        let r = spectral_radius(&m).unwrap();
        if r > 1e-3 {
            return m.scale(rho / r);
        }
    }
}

/// Relative distance `‖a − b‖ / ‖b‖`.
pub fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).frobenius_norm() / b.frobenius_norm()
}

/// Random plant with dims `n ∈ [1,4]`, `m ∈ [1,3]`, `p ∈ [1,3]` and random
/// definite weights; retried until the DARE converges.
pub fn random_plant(rng: &mut ChaCha8Rng) -> Plant {
    loop {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=3);
        let p = rng.random_range(1..=3);
        let a = gaussian(rng, n, n).scale(0.7);
        let plant = Plant::builder(a, gaussian(rng, n, m))
            .c(gaussian(rng, p, n))
            .sigma(spd(rng, n, 0.5))
            .w(spd(rng, n, 0.5))
            .v(spd(rng, p, 0.5))
            .q(spd(rng, n, 0.2))
            .r(spd(rng, m, 0.5))
            .build()
            .unwrap();
        if dare_solve(&plant).is_ok() {
            return plant;
        }
    }
}

/// The optimal gain plus a random perturbation, kept well inside the
/// stabilizing set and away from the optimum.
pub fn random_gain(rng: &mut ChaCha8Rng, plant: &Plant) -> StaticGain {
    let (_, kstar) = dare_solve(plant).unwrap();
    let mut scale = 0.5;
    loop {
        let d = gaussian(rng, plant.m(), plant.n());
        let k = kstar.k() + &d.scale(scale / d.frobenius_norm().max(1e-12));
        let rho = spectral_radius(&(plant.a() + &(plant.b() * &k))).unwrap();
        if rho < 0.97 && is_stabilizing_static(plant, &k) {
            return StaticGain::certify(plant, k).unwrap();
        }
        scale *= 0.7;
    }
}

/// Perturbed full-order LQG optimum.
pub fn random_controller(rng: &mut ChaCha8Rng, plant: &Plant) -> DynamicPolicy {
    let opt = lqg_optimal_policy(plant).unwrap();
    let mut scale = 0.3;
    loop {
        let d = opt.from_flat_like(&(0..opt.dim()).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>()).unwrap();
        let kd = opt.axpy(scale / d.frobenius_norm(), &d);
        if is_stabilizing_dynamic(plant, &kd) {
            return kd;
        }
        scale *= 0.7;
    }
}

/// Random invertible matrix with 2-norm condition number at most `cond`.
pub fn well_conditioned(rng: &mut ChaCha8Rng, n: usize, cond: f64) -> Mat {
    loop {
        let t = gaussian(rng, n, n);
        let sv = polgeo::numerics::singular_values(&t);
        let (hi, lo) = (sv[0], sv[sv.len() - 1]);
        if lo > 0.0 && hi / lo <= cond {
            return t;
        }
    }
}

/// Central differences of `K ↦ J(K)`, entrywise.
pub fn fd_lqr_grad(plant: &Plant, k: &Mat, h: f64) -> Mat {
    Mat::from_fn(k.rows(), k.cols(), |i, j| {
        let mut kp = k.clone();
        let mut km = k.clone();
        kp[(i, j)] += h;
        km[(i, j)] -= h;
        (lqr_cost(plant, &kp).unwrap() - lqr_cost(plant, &km).unwrap()) / (2.0 * h)
    })
}

/// Central difference of the Riemannian gradient along `v`.
pub fn fd_riemannian_along(plant: &Plant, k: &Mat, v: &Mat, h: f64) -> Mat {
    let g = |x: Mat| lqr_grad_riemannian(plant, &StaticGain::certify(plant, x).unwrap()).unwrap();
    (&g(k + &v.scale(h)) - &g(k - &v.scale(h))).scale(0.5 / h)
}

/// Central difference of the Euclidean gradient along `v`.
pub fn fd_euclidean_along(plant: &Plant, k: &Mat, v: &Mat, h: f64) -> Mat {
    let g = |x: Mat| polgeo::lqr::lqr_grad_euclidean(plant, &StaticGain::certify(plant, x).unwrap()).unwrap();
    (&g(k + &v.scale(h)) - &g(k - &v.scale(h))).scale(0.5 / h)
}

/// Central differences of the LQG cost over the flattened controller.
pub fn fd_lqg_grad(plant: &Plant, kd: &DynamicPolicy, h: f64) -> Vec<f64> {
    let x = kd.to_flat();
    (0..x.len())
        .map(|i| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let jp = lqg_cost(plant, &kd.from_flat_like(&xp).unwrap()).unwrap();
            let jm = lqg_cost(plant, &kd.from_flat_like(&xm).unwrap()).unwrap();
            (jp - jm) / (2.0 * h)
        })
        .collect()
}

pub fn rel_vec(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}
