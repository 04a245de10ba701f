//! Invariants checked over generated inputs.

mod common;

use common::*;
use polgeo::descent::{StepRule, StopRule};
use polgeo::hinf::{hinf_cost, hinf_freq_response, hinf_value, DEFAULT_GRID, DEFAULT_REFINE_TOL};
use polgeo::lqg::{lqg_cost, lqg_eval, similarity_transform};
use polgeo::lqr::{dare_solve, gd_run, hewer_step, lqr_cost, lqr_eval, lqr_grad_euclidean, Direction};
use polgeo::lyapunov::{dlyap, dlyap_diff, lyap};
use polgeo::numerics::{solve_linear, spectral_norm, spectral_radius, sym_lambda_max, sym_lambda_min};
use polgeo::policy::{stability_certificate, ConstraintSubspace, MetricChoice, Plant, StaticGain};
use polgeo::structured::{structured_gd_run, tangential_project};
use polgeo::zeroth::{zo_grad_two_point, Estimator, ZoConfig};
use polgeo::Mat;
use proptest::prelude::*;
use rand::Rng;

fn config() -> ProptestConfig {
    ProptestConfig { failure_persistence: None, rng_seed: proptest::test_runner::RngSeed::Fixed(0x5eed), ..ProptestConfig::with_cases(64) }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn radius_is_absolutely_homogeneous(seed in any::<u64>(), n in 1usize..6, c in -5.0f64..5.0) {
        let m = gaussian(&mut rng(seed), n, n);
        let r = spectral_radius(&m).unwrap();
        let rc = spectral_radius(&m.scale(c)).unwrap();
        prop_assert!((rc - c.abs() * r).abs() <= 1e-8 * (1.0 + c.abs() * r));
    }

    #[test]
    fn norm_dominates_radius(seed in any::<u64>(), n in 1usize..6) {
        let m = gaussian(&mut rng(seed), n, n);
        prop_assert!(spectral_norm(&m) >= spectral_radius(&m).unwrap() * (1.0 - 1e-10));
    }

    #[test]
    fn solve_reproduces_rhs(seed in any::<u64>(), n in 1usize..8) {
        let mut r = rng(seed);
        let a = &gaussian(&mut r, n, n) + &Mat::identity(n).scale(3.0 * n as f64);
        let b = gaussian(&mut r, n, 2);
        let x = solve_linear(&a, &b).unwrap();
        prop_assert!((&(&a * &x) - &b).frobenius_norm() <= 1e-10 * (1.0 + b.frobenius_norm()));
    }

    #[test]
    fn lambda_max_bounds_rayleigh_quotients(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let g = gaussian(&mut r, n, n);
        let s = &g + &g.transpose();
        let top = sym_lambda_max(&s).unwrap();
        for _ in 0..50 {
            let v = gaussian(&mut r, n, 1);
            let q = (&(&v.transpose() * &s) * &v)[(0, 0)] / v.dot(&v);
            prop_assert!(q <= top + 1e-10 * (1.0 + top.abs()));
        }
    }

    #[test]
    fn lyapunov_solution_is_symmetric_psd_and_linear(seed in any::<u64>(), n in 1usize..6, rho in 0.0f64..0.95) {
        let mut r = rng(seed);
        let a = with_radius(&mut r, n, rho);
        let g1 = gaussian(&mut r, n, n);
        let g2 = gaussian(&mut r, n, n);
        let q1 = &g1 * &g1.transpose();
        let q2 = &g2 * &g2.transpose();
        let p1 = dlyap(&a, &q1).unwrap().p;
        let p2 = dlyap(&a, &q2).unwrap().p;
        prop_assert!(p1.is_symmetric(1e-12 * (1.0 + p1.max_abs())));
        prop_assert!(sym_lambda_min(&p1).unwrap() >= -1e-10 * (1.0 + p1.max_abs()));
        let sum = dlyap(&a, &(&q1 + &q2)).unwrap().p;
        prop_assert!((&sum - &(&p1 + &p2)).frobenius_norm() <= 1e-9 * (1.0 + sum.frobenius_norm()));
    }

    #[test]
    fn lyapunov_differential_matches_differences(seed in any::<u64>(), n in 1usize..5) {
        let mut r = rng(seed);
        let a = with_radius(&mut r, n, 0.8);
        let q = spd(&mut r, n, 0.5);
        let e = gaussian(&mut r, n, n);
        let f = gaussian(&mut r, n, n);
        let f = &f + &f.transpose();
        let h = 1e-6;
        let p = |x: &Mat, y: &Mat| dlyap(x, y).unwrap().p;
        let fd = (&p(&(&a + &e.scale(h)), &(&q + &f.scale(h))) - &p(&(&a - &e.scale(h)), &(&q - &f.scale(h)))).scale(0.5 / h);
        let d = dlyap_diff(&a, &q, &e, &f).unwrap();
        prop_assert!(rel(&fd, &d) <= 1e-5, "rel err {:e}", rel(&fd, &d));
    }

    #[test]
    fn certificate_is_homogeneous(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let plant = random_plant(&mut r);
        let k = random_gain(&mut r, &plant);
        let v = gaussian(&mut r, plant.m(), plant.n());
        let s = stability_certificate(&plant, &k, &v).unwrap();
        let sc = stability_certificate(&plant, &k, &v.scale(c)).unwrap();
        prop_assert!((sc * c - s).abs() <= 1e-12 * s);
    }

    #[test]
    fn lqr_cost_expressions_agree(seed in any::<u64>()) {
        let mut r = rng(seed);
        let plant = random_plant(&mut r);
        let k = random_gain(&mut r, &plant);
        let ev = lqr_eval(&plant, &k).unwrap();
        prop_assert!((ev.j - ev.j_dual).abs() <= 1e-10 * ev.j);
    }

    #[test]
    fn projection_is_idempotent_and_self_adjoint(seed in any::<u64>(), lyap in any::<bool>()) {
        let mut r = rng(seed);
        let plant = random_plant(&mut r);
        let (m, n) = (plant.m(), plant.n());
        let mask: Vec<Vec<bool>> = (0..m).map(|_| (0..n).map(|_| r.random_bool(0.6)).collect()).collect();
        prop_assume!(mask.iter().flatten().any(|&b| b));
        let sub = ConstraintSubspace::sparsity(mask.clone()).unwrap();
        let k = StaticGain::certify(&plant, Mat::zeros(m, n));
        prop_assume!(k.is_ok());
        let k = k.unwrap();
        let metric = if lyap { MetricChoice::Lyapunov } else { MetricChoice::Frobenius };
        let y = lqr_eval(&plant, &k).unwrap().y_k;
        let inner = |a: &Mat, b: &Mat| if lyap { (&(&a.transpose() * b) * &y).trace() } else { a.dot(b) };
        let x = gaussian(&mut r, m, n);
        let w = gaussian(&mut r, m, n);
        let px = tangential_project(&plant, &k, &x, &sub, metric).unwrap();
        let pw = tangential_project(&plant, &k, &w, &sub, metric).unwrap();
        let ppx = tangential_project(&plant, &k, &px, &sub, metric).unwrap();
        prop_assert!((&ppx - &px).frobenius_norm() <= 1e-10 * (1.0 + px.frobenius_norm()));
        let lhs = inner(&px, &w);
        let rhs = inner(&x, &pw);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        for i in 0..m {
            for j in 0..n {
                if !mask[i][j] {
                    prop_assert_eq!(px[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn lqg_cost_is_similarity_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let plant = random_plant(&mut r);
        let kd = random_controller(&mut r, &plant);
        let t = well_conditioned(&mut r, plant.n(), 1e3);
        let j = lqg_cost(&plant, &kd).unwrap();
        let jt = lqg_cost(&plant, &similarity_transform(&kd, &t).unwrap()).unwrap();
        let ev = lqg_eval(&plant, &kd).unwrap();
        // rounding in both Lyapunov solves grows with ‖L(A_cl, I)‖
        let kappa = spectral_norm(&lyap(&ev.acl, &Mat::identity(ev.acl.rows())).unwrap());
        let tol = (100.0 * f64::EPSILON * kappa).max(1e-10);
        prop_assert!((jt - j).abs() <= tol.max(1e-8) * j);
        prop_assert!((ev.j - ev.j_dual).abs() <= tol * ev.j, "gap {:e}, kappa {kappa:e}", (ev.j - ev.j_dual).abs() / ev.j);
    }

    #[test]
    fn hinf_dominates_sampled_frequencies(seed in any::<u64>()) {
        let mut r = rng(seed);
        let plant = random_plant(&mut r);
        let k = random_gain(&mut r, &plant);
        let j = hinf_cost(&plant, &k, DEFAULT_GRID, DEFAULT_REFINE_TOL).unwrap().j;
        for _ in 0..64 {
            let w = r.random_range(0.0..std::f64::consts::TAU);
            prop_assert!(hinf_freq_response(&plant, &k, w).unwrap() <= j * (1.0 + 1e-12));
        }
    }

    #[test]
    fn two_point_estimates_are_additive(seed in any::<u64>()) {
        let f = |t: &[f64]| Some(t.iter().map(|x| x * x * x).sum::<f64>());
        let g = |t: &[f64]| Some(t.iter().enumerate().map(|(i, x)| (i as f64 + 1.0) * x).sum::<f64>());
        let fg = |t: &[f64]| Some(f(t)? + g(t)?);
        let theta = [0.3, -0.7, 1.1];
        let cfg = ZoConfig::new(Estimator::TwoPoint, 1e-3, 10, seed);
        let a = zo_grad_two_point(f, &theta, &cfg).unwrap();
        let b = zo_grad_two_point(g, &theta, &cfg).unwrap();
        let c = zo_grad_two_point(fg, &theta, &cfg).unwrap();
        for i in 0..3 {
            prop_assert!((c[i] - a[i] - b[i]).abs() <= 1e-9 * (1.0 + c[i].abs()));
        }
    }
}

#[test]
fn two_point_cosine_on_quadratics() {
    let mut r = rng(30);
    for d in 1..=6 {
        let g = gaussian(&mut r, d, d);
        let h = &(&g * &g.transpose()) + &Mat::identity(d);
        let f = |t: &[f64]| {
            let x = Mat::column(t);
            Some(0.5 * (&(&x.transpose() * &h) * &x)[(0, 0)])
        };
        let theta: Vec<f64> = (0..d).map(|i| 1.0 - 0.3 * i as f64).collect();
        let exact = (&h * &Mat::column(&theta)).into_vec();
        let est = zo_grad_two_point(f, &theta, &ZoConfig::new(Estimator::TwoPoint, 1e-3, 200, 42)).unwrap();
        let cos = est.iter().zip(&exact).map(|(a, b)| a * b).sum::<f64>()
            / (est.iter().map(|a| a * a).sum::<f64>().sqrt() * exact.iter().map(|b| b * b).sum::<f64>().sqrt());
        assert!(cos >= 0.9, "d = {d}: cosine {cos}");
    }
}

#[test]
fn lqr_cost_is_coercive_along_rays() {
    let mut r = rng(31);
    for _ in 0..20 {
        let plant = random_plant(&mut r);
        let (_, kstar) = dare_solve(&plant).unwrap();
        let v = gaussian(&mut r, plant.m(), plant.n());
        let mut last = lqr_cost(&plant, kstar.k()).unwrap();
        let mut t = 1e-3;
        let mut exceeded = false;
        while t < 1e6 {
            let k = kstar.k() + &v.scale(t);
            match lqr_cost(&plant, &k) {
                Some(j) => {
                    assert!(j >= last * (1.0 - 1e-9), "cost fell along the ray at t = {t}");
                    last = j;
                    if j > 1e6 {
                        exceeded = true;
                        break;
                    }
                }
                None => break,
            }
            t *= 1.05;
        }
        // leaving the stabilizing set means ρ crossed 1; refine toward the crossing
        if !exceeded {
            let (mut lo, mut hi) = (t / 1.05, t);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if lqr_cost(&plant, &(kstar.k() + &v.scale(mid))).is_some() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let j = lqr_cost(&plant, &(kstar.k() + &v.scale(lo))).unwrap();
            assert!(j > 1e6, "J only reached {j:e} at the boundary");
        }
    }
}

#[test]
fn gradient_dominance_and_linear_rate() {
    let a = Mat::from_rows(&[[1.0, 0.5], [0.0, 0.9]]).unwrap();
    let plant = Plant::builder(a, Mat::from_rows(&[[0.0], [1.0]]).unwrap()).build().unwrap();
    let (_, kstar) = dare_solve(&plant).unwrap();
    let jstar = lqr_cost(&plant, kstar.k()).unwrap();
    let mut r = rng(32);
    let mut worst: f64 = 0.0;
    let mut sampled = 0;
    while sampled < 500 {
        let k = kstar.k() + &gaussian(&mut r, 1, 2).scale(0.3);
        let Some(j) = lqr_cost(&plant, &k) else { continue };
        if j > 2.0 * jstar {
            continue;
        }
        let g = lqr_grad_euclidean(&plant, &StaticGain::certify(&plant, k).unwrap()).unwrap();
        worst = worst.max((j - jstar) / g.dot(&g));
        sampled += 1;
    }
    assert!(worst.is_finite() && worst < 1e3, "dominance constant {worst}");

    // descent trace on the scalar benchmark a = b = q = r = 1 from k₀ = −1
    let plant = Plant::builder(Mat::from_rows(&[[1.0]]).unwrap(), Mat::from_rows(&[[1.0]]).unwrap()).build().unwrap();
    let (_, kstar) = dare_solve(&plant).unwrap();
    let jstar = lqr_cost(&plant, kstar.k()).unwrap();
    let k0 = StaticGain::certify(&plant, Mat::from_rows(&[[-1.0]]).unwrap()).unwrap();
    let run = gd_run(&plant, &k0, Direction::Euclidean, StepRule::default(), StopRule { tol: 1e-9, max_iter: 500 }).unwrap();
    // strict decrease wherever the first-order decrease η‖g‖² is resolvable in J
    for w in run.trace.windows(2) {
        assert!(w[1].j <= w[0].j);
        if w[0].step * w[0].grad_norm.powi(2) > 1e-13 * w[0].j {
            assert!(w[1].j < w[0].j, "no decrease at iteration {}", w[0].iter);
        }
    }
    // least squares of log(J − J*) against iteration over the pre-saturation range
    let pts: Vec<(f64, f64)> = run
        .trace
        .iter()
        .map(|t| (t.iter as f64, (t.j - jstar).ln()))
        .filter(|(_, y)| y.is_finite() && *y > (1e-12f64).ln())
        .collect();
    let nf = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    assert!(sxy < 0.0 && r2 >= 0.98, "R² = {r2}");
}

#[test]
fn hewer_fixed_point_is_dare() {
    let mut r = rng(33);
    for _ in 0..10 {
        let plant = random_plant(&mut r);
        let (_, kstar) = dare_solve(&plant).unwrap();
        let mut k = random_gain(&mut r, &plant);
        for _ in 0..30 {
            k = hewer_step(&plant, &k).unwrap();
        }
        assert!((k.k() - kstar.k()).max_abs() <= 1e-8);
    }
}

#[test]
fn structured_iterates_keep_masked_entries_zero() {
    let a = Mat::from_rows(&[[0.8, 1.0], [0.0, 0.8]]).unwrap();
    let b = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
    let plant = Plant::builder(a, b).build().unwrap();
    let sub = ConstraintSubspace::sparsity(vec![vec![true, false], vec![false, true]]).unwrap();
    let k0 = StaticGain::certify(&plant, Mat::diag(&[-0.5, -0.5])).unwrap();
    for metric in [MetricChoice::Frobenius, MetricChoice::Lyapunov] {
        let mut k = k0.clone();
        for _ in 0..50 {
            let run = structured_gd_run(&plant, &k, &sub, metric, StepRule::default(), StopRule { tol: 1e-9, max_iter: 1 }).unwrap();
            k = run.policy;
            assert!(k.is_certified());
            assert_eq!((k.k()[(0, 1)], k.k()[(1, 0)]), (0.0, 0.0));
        }
    }
}

#[test]
fn lqg_cost_is_constant_on_scaled_orbits() {
    let plant = Plant::scalar(0.9, 1.0, 1.0);
    let kd = polgeo::policy::DynamicPolicy::new(Mat::scalar(0.3), Mat::scalar(0.4), Mat::scalar(-0.5)).unwrap();
    let j = lqg_cost(&plant, &kd).unwrap();
    for t in [1.0, 10.0, 1e3, 1e5] {
        let moved = similarity_transform(&kd, &Mat::scalar(t)).unwrap();
        println!("t = {t:e}: ‖K‖ = {:.3e}", moved.frobenius_norm());
        assert!((lqg_cost(&plant, &moved).unwrap() - j).abs() <= 1e-9 * j);
    }
}

#[test]
fn hinf_sublevel_sets_are_intervals() {
    let plant = Plant::scalar(0.9, 1.0, 1.0);
    let ks: Vec<f64> = (1..2000).map(|i| -1.9 + 0.001 * i as f64).collect();
    let js: Vec<f64> = ks.iter().map(|&k| hinf_value(&plant, &Mat::scalar(k)).unwrap()).collect();
    let jmin = js.iter().copied().fold(f64::INFINITY, f64::min);
    for gamma in [jmin * 1.001, 2.0, 5.0, 20.0, 100.0, 1e4] {
        let inside: Vec<usize> = (0..js.len()).filter(|&i| js[i] <= gamma).collect();
        let contiguous = inside.windows(2).all(|w| w[1] == w[0] + 1);
        assert!(!inside.is_empty() && contiguous, "γ = {gamma}");
    }
}

#[test]
fn hinf_is_locally_lipschitz() {
    let mut r = rng(34);
    for _ in 0..10 {
        let plant = random_plant(&mut r);
        let k = random_gain(&mut r, &plant);
        let v = gaussian(&mut r, plant.m(), plant.n());
        let v = v.scale(1.0 / v.frobenius_norm());
        let j0 = hinf_value(&plant, k.k()).unwrap();
        let ratios: Vec<f64> = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2]
            .iter()
            .filter_map(|&h| hinf_value(&plant, &(k.k() + &v.scale(h))).map(|j| (j - j0).abs() / h))
            .collect();
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(hi.is_finite() && hi <= 10.0 * lo.max(1e-3 * hi), "ratios {ratios:?}");
    }
}
