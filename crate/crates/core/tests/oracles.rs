//! Independent oracles: finite differences, Kronecker solves, simulation,
//! rasters and Monte-Carlo statistics.

mod common;

use common::*;
use polgeo::descent::{StepRule, StopRule};
use polgeo::hinf::{hinf_cost, hinf_descent_run, SamplingConfig};
use polgeo::lqg::{
    closed_loop, gramians, is_minimal, km_inner, lqg_cost, lqg_eval, lqg_gd_run, lqg_grad, saddle_policy,
    similarity_transform, LqgMode,
};
use polgeo::lqr::{
    dare_solve, lqr_eval, lqr_grad_euclidean, lqr_grad_riemannian, lqr_hvp_euclidean, lqr_hvp_pseudo, s_map,
};
use polgeo::lyapunov::{dlyap, dlyap_kron_oracle};
use polgeo::numerics::{solve_linear, spectral_radius};
use polgeo::policy::{
    is_stabilizing_dynamic, is_stabilizing_static, landscape_slice, ConstraintSubspace, DynamicPolicy, MetricChoice,
    Plant, StaticGain,
};
use polgeo::structured::structured_grad;
use polgeo::zeroth::{sample_rng, sample_sphere, zo_gd_run, zo_grad_baseline, zo_grad_one_point, zo_grad_two_point, Estimator, ZoConfig};
use polgeo::Mat;
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn s_map_is_derivative_of_p() {
    let mut rng = rng(10);
    for _ in 0..30 {
        let plant = random_plant(&mut rng);
        let k = random_gain(&mut rng, &plant);
        let v = gaussian(&mut rng, plant.m(), plant.n());
        let h = 1e-6;
        let p = |x: Mat| lqr_eval(&plant, &StaticGain::certify(&plant, x).unwrap()).unwrap().p_k;
        let fd = (&p(k.k() + &v.scale(h)) - &p(k.k() - &v.scale(h))).scale(0.5 / h);
        let s = s_map(&plant, &k, &v).unwrap();
        assert!(rel(&fd, &s) <= 1e-5, "S_K off by {:e}", rel(&fd, &s));
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = rng(11);
    for _ in 0..20 {
        let plant = random_plant(&mut rng);
        let k = random_gain(&mut rng, &plant);
        let h = 1e-6 * (1.0 + k.k().frobenius_norm());
        let g = lqr_grad_euclidean(&plant, &k).unwrap();
        assert!(rel(&fd_lqr_grad(&plant, k.k(), h), &g) <= 1e-5);
        let v = gaussian(&mut rng, plant.m(), plant.n());
        let hp = lqr_hvp_pseudo(&plant, &k, &v).unwrap();
        assert!(rel(&fd_riemannian_along(&plant, k.k(), &v, 1e-6), &hp) <= 1e-5);
        let he = lqr_hvp_euclidean(&plant, &k, &v).unwrap();
        assert!(rel(&fd_euclidean_along(&plant, k.k(), &v, 1e-6), &he) <= 1e-5);
    }
}

#[test]
fn euclidean_hvp_at_optimum_is_pseudo_times_y() {
    let mut rng = rng(12);
    let plant = random_plant(&mut rng);
    let (_, kstar) = dare_solve(&plant).unwrap();
    let v = gaussian(&mut rng, plant.m(), plant.n());
    let y = lqr_eval(&plant, &kstar).unwrap().y_k;
    let expect = &lqr_hvp_pseudo(&plant, &kstar, &v).unwrap() * &y;
    assert!(rel(&lqr_hvp_euclidean(&plant, &kstar, &v).unwrap(), &expect) <= 1e-7);
}

#[test]
fn dare_gain_is_stationary() {
    let mut rng = rng(13);
    for _ in 0..10 {
        let a = gaussian(&mut rng, 4, 4).scale(0.6);
        let plant = Plant::builder(a, gaussian(&mut rng, 4, 2)).build().unwrap();
        let (_, kstar) = dare_solve(&plant).unwrap();
        let g = lqr_grad_riemannian(&plant, &kstar).unwrap();
        assert!(g.frobenius_norm() <= 1e-8, "grad at K* = {:e}", g.frobenius_norm());
    }
}

#[test]
fn slqr_projected_gradient_matches_restricted_differences() {
    let a = Mat::from_rows(&[[0.8, 1.0], [0.0, 0.8]]).unwrap();
    let b = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
    let plant = Plant::builder(a, b).build().unwrap();
    let sub = ConstraintSubspace::sparsity(vec![vec![true, false], vec![false, true]]).unwrap();
    let k = StaticGain::certify(&plant, Mat::diag(&[-0.5, -0.3])).unwrap();
    let g = structured_grad(&plant, &k, &sub, MetricChoice::Frobenius).unwrap();
    let fd = fd_lqr_grad(&plant, k.k(), 1e-6);
    let restricted = Mat::diag(&[fd[(0, 0)], fd[(1, 1)]]);
    assert!(rel(&g, &restricted) <= 1e-5);
}

#[test]
fn membership_agrees_with_trajectory_decay() {
    let mut rng = rng(14);
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=2);
        let plant = Plant::builder(gaussian(&mut rng, n, n).scale(0.6), gaussian(&mut rng, n, m)).build().unwrap();
        let k = gaussian(&mut rng, m, n).scale(0.3);
        let acl = plant.a() + &(plant.b() * &k);
        let rho = spectral_radius(&acl).unwrap();
        if (rho - 1.0).abs() < 0.05 {
            continue;
        }
        let x0 = Mat::column(&vec![1.0; n]);
        let x200 = &acl.powi(200) * &x0;
        assert_eq!(is_stabilizing_static(&plant, &k), x200.frobenius_norm() < x0.frobenius_norm());
        checked += 1;
    }
}

#[test]
fn lqg_closed_loop_conjugates_under_similarity() {
    let mut rng = rng(15);
    for _ in 0..20 {
        let plant = random_plant(&mut rng);
        let kd = random_controller(&mut rng, &plant);
        let n = plant.n();
        let t = well_conditioned(&mut rng, n, 50.0);
        let tt = similarity_transform(&kd, &t).unwrap();
        let s = Mat::block_diag(&Mat::identity(n), &t);
        let s_inv = Mat::block_diag(&Mat::identity(n), &polgeo::numerics::inverse(&t).unwrap());
        let expect = &(&s * &closed_loop(&plant, &kd).acl) * &s_inv;
        assert!(rel(&closed_loop(&plant, &tt).acl, &expect) <= 1e-10);
        assert_eq!(is_stabilizing_dynamic(&plant, &tt), is_stabilizing_dynamic(&plant, &kd));
    }
}

#[test]
fn lqg_cost_matches_simulation() {
    let plant = Plant::scalar(0.9, 1.0, 1.0);
    let kd = DynamicPolicy::new(Mat::scalar(0.3), Mat::scalar(0.4), Mat::scalar(-0.5)).unwrap();
    let j = lqg_cost(&plant, &kd).unwrap();
    let mut rng = rng(16);
    let (mut x, mut xi) = (0.0f64, 0.0f64);
    // burn in, then 100 batches of 1000 steps
    for _ in 0..1000 {
        let u = -0.5 * xi;
        let y = x + rng.sample::<f64, _>(StandardNormal);
        x = 0.9 * x + u + rng.sample::<f64, _>(StandardNormal);
        xi = 0.3 * xi + 0.4 * y;
    }
    let mut batches = Vec::new();
    for _ in 0..100 {
        let mut sum = 0.0;
        for _ in 0..1000 {
            let u = -0.5 * xi;
            sum += x * x + u * u;
            let y = x + rng.sample::<f64, _>(StandardNormal);
            x = 0.9 * x + u + rng.sample::<f64, _>(StandardNormal);
            xi = 0.3 * xi + 0.4 * y;
        }
        batches.push(sum / 1000.0);
    }
    let mean = batches.iter().sum::<f64>() / 100.0;
    let var = batches.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / 99.0;
    let se = (var / 100.0).sqrt();
    assert!((mean - j).abs() <= 3.0 * se, "simulated {mean} ± {se}, exact {j}");
}

#[test]
fn lqg_gradient_matches_differences_full_order() {
    let mut rng = rng(17);
    for _ in 0..10 {
        let plant = Plant::builder(gaussian(&mut rng, 2, 2).scale(0.6), gaussian(&mut rng, 2, 1))
            .c(gaussian(&mut rng, 1, 2))
            .build()
            .unwrap();
        if dare_solve(&plant).is_err() {
            continue;
        }
        let kd = random_controller(&mut rng, &plant);
        let g = lqg_grad(&plant, &kd).unwrap();
        assert!(rel_vec(&fd_lqg_grad(&plant, &kd, 1e-6), &g.to_flat()) <= 1e-5);
    }
}

#[test]
fn euclidean_gradient_is_not_equivariant() {
    let mut rng = rng(18);
    let plant = Plant::builder(Mat::from_rows(&[[0.9, 0.2], [0.0, 0.7]]).unwrap(), Mat::from_rows(&[[0.0], [1.0]]).unwrap())
        .c(Mat::from_rows(&[[1.0, 0.0]]).unwrap())
        .build()
        .unwrap();
    let kd = random_controller(&mut rng, &plant);
    let t = Mat::from_rows(&[[10.0, 1.0], [0.0, 0.5]]).unwrap();
    let moved = similarity_transform(&lqg_grad(&plant, &kd).unwrap(), &t).unwrap();
    let at_moved = lqg_grad(&plant, &similarity_transform(&kd, &t).unwrap()).unwrap();
    let gap = rel_vec(&at_moved.to_flat(), &moved.to_flat());
    println!("Euclidean gradient equivariance gap for ‖T‖ = 10: {gap:.3e}");
    assert!(gap > 1e-3);
}

#[test]
fn minimality_lost_when_output_map_vanishes() {
    let mut rng = rng(19);
    let plant = Plant::builder(Mat::from_rows(&[[0.9, 0.2], [0.0, 0.7]]).unwrap(), Mat::from_rows(&[[0.0], [1.0]]).unwrap())
        .c(Mat::from_rows(&[[1.0, 0.0]]).unwrap())
        .build()
        .unwrap();
    let kd = random_controller(&mut rng, &plant);
    assert!(is_minimal(&kd));
    let cut = DynamicPolicy::new(kd.a_k().clone(), kd.b_k().clone(), Mat::zeros(1, 2)).unwrap();
    assert!(!is_minimal(&cut));
}

#[test]
fn gramians_match_kronecker_oracle() {
    let plant = Plant::scalar(0.9, 1.0, 1.0);
    let kd = DynamicPolicy::new(Mat::scalar(0.3), Mat::scalar(0.4), Mat::scalar(-0.5)).unwrap();
    let (wc, wo) = gramians(&plant, &kd).unwrap();
    let cl = closed_loop(&plant, &kd);
    let wc_o = dlyap_kron_oracle(&cl.acl, &(&cl.bcl * &cl.bcl.transpose())).unwrap();
    let wo_o = dlyap_kron_oracle(&cl.acl.transpose(), &(&cl.ccl.transpose() * &cl.ccl)).unwrap();
    assert!(rel(&wc, &wc_o) <= 1e-9 && rel(&wo, &wo_o) <= 1e-9);
}

#[test]
fn km_inner_is_similarity_invariant() {
    let mut rng = rng(20);
    let plant = Plant::builder(Mat::from_rows(&[[0.9, 0.2], [0.0, 0.7]]).unwrap(), Mat::from_rows(&[[0.0], [1.0]]).unwrap())
        .c(Mat::from_rows(&[[1.0, 0.0]]).unwrap())
        .build()
        .unwrap();
    let kd = random_controller(&mut rng, &plant);
    let metric = MetricChoice::Km { w1: 1.0, w2: 0.5, w3: 2.0 };
    for _ in 0..50 {
        let v1 = kd.from_flat_like(gaussian(&mut rng, 1, kd.dim()).as_slice()).unwrap();
        let v2 = kd.from_flat_like(gaussian(&mut rng, 1, kd.dim()).as_slice()).unwrap();
        let t = well_conditioned(&mut rng, 2, 1e2);
        let base = km_inner(&plant, &kd, &v1, &v2, metric).unwrap();
        let moved = km_inner(
            &plant,
            &similarity_transform(&kd, &t).unwrap(),
            &similarity_transform(&v1, &t).unwrap(),
            &similarity_transform(&v2, &t).unwrap(),
            metric,
        )
        .unwrap();
        assert!((moved - base).abs() <= 1e-8 * base.abs().max(1e-12), "{moved} vs {base}");
    }
}

#[test]
fn euclidean_descent_escapes_the_saddle() {
    let plant = Plant::scalar(0.9, 1.0, 1.0);
    let saddle = saddle_policy(&plant, &Mat::scalar(-0.1753)).unwrap();
    let j_saddle = lqg_cost(&plant, &saddle).unwrap();
    let mut rng = rng(21);
    let start = DynamicPolicy::new(
        Mat::scalar(-0.1753),
        Mat::scalar(1e-3 * rng.sample::<f64, _>(StandardNormal)),
        Mat::scalar(1e-3 * rng.sample::<f64, _>(StandardNormal)),
    )
    .unwrap();
    let run = lqg_gd_run(
        &plant,
        &start,
        LqgMode::Euclidean,
        StepRule::Fixed { eta: Some(0.05) },
        StopRule { tol: 1e-6, max_iter: 20_000 },
    )
    .unwrap();
    let end = run.descent.final_record().j;
    assert!(end < j_saddle - 1e-3, "stuck at {end}");
}

#[test]
fn lqg_slice_is_flat_at_the_saddle() {
    let plant = Plant::scalar(0.9, 1.0, 1.0);
    let origin = saddle_policy(&plant, &Mat::scalar(-0.1753)).unwrap();
    let db = DynamicPolicy::new(Mat::scalar(0.0), Mat::scalar(1.0), Mat::scalar(0.0)).unwrap();
    let dc = DynamicPolicy::new(Mat::scalar(0.0), Mat::scalar(0.0), Mat::scalar(1.0)).unwrap();
    let grid = landscape_slice(|kd: &DynamicPolicy| lqg_cost(&plant, kd), &origin, &db, &dc, (-1e-3, 1e-3), (-1e-3, 1e-3), 3)
        .unwrap();
    let centre = grid.get(1, 1).unwrap();
    // first-order flat: axis neighbours differ from the centre only at second order
    for (i, j) in [(0, 1), (2, 1), (1, 0), (1, 2)] {
        assert!((grid.get(i, j).unwrap() - centre).abs() <= 1e-5);
    }
    assert!(lqg_eval(&plant, &origin).is_ok());
}

#[test]
fn hinf_grid_doubling_is_stable() {
    let mut rng = rng(22);
    for _ in 0..10 {
        let plant = random_plant(&mut rng);
        let k = random_gain(&mut rng, &plant);
        let coarse = hinf_cost(&plant, &k, 2048, 1e-10).unwrap().j;
        let fine = hinf_cost(&plant, &k, 4096, 1e-10).unwrap().j;
        assert!((coarse - fine).abs() <= 1e-8 * fine, "{coarse} vs {fine}");
    }
}

#[test]
fn hinf_descent_decreases_monotonically() {
    let plant = Plant::scalar(0.9, 1.0, 1.0);
    let k0 = StaticGain::certify(&plant, Mat::scalar(-0.5)).unwrap();
    let run = hinf_descent_run(&plant, &k0, SamplingConfig::default(), StepRule::default(), StopRule { tol: 1e-8, max_iter: 500 })
        .unwrap();
    assert!(run.trace.windows(2).all(|w| w[1].j <= w[0].j));
    assert!(run.trace[1].j < run.trace[0].j);
}

#[test]
fn sphere_samples_average_to_zero() {
    let mut mean = [0.0; 5];
    for i in 0..100_000 {
        let u = sample_sphere(5, &mut sample_rng(1, 0, i));
        for (m, x) in mean.iter_mut().zip(&u) {
            *m += x / 100_000.0;
        }
    }
    let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm <= 0.02, "{norm}");
}

#[test]
fn one_point_estimates() {
    // at θ = 0 each sample is exactly d·(aᵀU)U
    let a = [1.0, -2.0, 0.5, 3.0];
    let linear = |t: &[f64]| Some(t.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>());
    let est = zo_grad_one_point(linear, &[0.0; 4], &ZoConfig::new(Estimator::OnePoint, 1e-2, 500, 5)).unwrap();
    let err = est.iter().zip(&a).map(|(e, x)| (e - x).powi(2)).sum::<f64>().sqrt();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(err <= 0.15 * norm, "{err}");

    // quadratic at θ = (1, 0), ε = 0.05, N = 5000: E‖est − ∇f‖² ≈ (f·d/ε)²/N = 0.08
    let quad = |t: &[f64]| Some(0.5 * t.iter().map(|x| x * x).sum::<f64>());
    let errs: Vec<f64> = (0..20)
        .map(|seed| {
            let est = zo_grad_one_point(quad, &[1.0, 0.0], &ZoConfig::new(Estimator::OnePoint, 0.05, 5000, seed)).unwrap();
            (est[0] - 1.0).powi(2) + est[1].powi(2)
        })
        .collect();
    let mse = errs.iter().sum::<f64>() / errs.len() as f64;
    println!("one-point quadratic: mse {mse:.4}, {} of 20 seeds within 0.25", errs.iter().filter(|e| e.sqrt() <= 0.25).count());
    assert!((0.04..0.16).contains(&mse), "{mse}");
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn estimator_quality_ordering() {
    let quad = |t: &[f64]| Some(0.5 * t.iter().map(|x| x * x).sum::<f64>());
    let theta = [1.0, -0.5, 2.0, 0.3, -1.2];
    let (mut one, mut two, mut base) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..50 {
        let cfg = |e| ZoConfig::new(e, 1e-2, 20, seed);
        one.push(zo_grad_one_point(quad, &theta, &cfg(Estimator::OnePoint)).unwrap());
        two.push(zo_grad_two_point(quad, &theta, &cfg(Estimator::TwoPoint)).unwrap());
        base.push(zo_grad_baseline(quad, quad, &theta, &cfg(Estimator::Baseline)).unwrap());
    }
    let mean_cos = |ests: &[Vec<f64>]| ests.iter().map(|e| cosine(e, &theta)).sum::<f64>() / ests.len() as f64;
    let spread = |ests: &[Vec<f64>]| {
        ests.iter()
            .map(|e| e.iter().zip(&theta).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
            .sum::<f64>()
            / ests.len() as f64
    };
    println!(
        "cosine one-point {:.3}, two-point {:.3}; mean squared error one-point {:.3e}, baseline {:.3e}",
        mean_cos(&one),
        mean_cos(&two),
        spread(&one),
        spread(&base)
    );
    assert!(mean_cos(&one) < mean_cos(&two));
    assert!(spread(&base) < spread(&one));
}

#[test]
fn zeroth_order_descent_on_quadratic() {
    let quad = |t: &[f64]| Some(0.5 * t.iter().map(|x| x * x).sum::<f64>());
    let run = zo_gd_run(
        quad,
        |_| 0.0,
        &[1.0, -1.0, 0.5, 2.0, -0.3],
        &ZoConfig::new(Estimator::TwoPoint, 1e-3, 20, 3),
        StepRule::Fixed { eta: Some(0.1) },
        StopRule { tol: 1e-4, max_iter: 3000 },
    )
    .unwrap();
    let norm = run.policy.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm <= 1e-2, "{norm}");
}

#[test]
fn smith_agrees_with_kronecker_on_larger_systems() {
    let mut rng = rng(23);
    for _ in 0..20 {
        let a = with_radius(&mut rng, 5, 0.9);
        let q = spd(&mut rng, 5, 0.1);
        let p = dlyap(&a, &q).unwrap().p;
        assert!(rel(&p, &dlyap_kron_oracle(&a, &q).unwrap()) <= 1e-9);
        // residual of the fixed-point equation itself
        let resid = &(&(&(&a * &p) * &a.transpose()) + &q) - &p;
        assert!(resid.frobenius_norm() <= 1e-10 * p.frobenius_norm());
    }
    let spd8 = spd(&mut rng, 8, 0.5);
    let b = gaussian(&mut rng, 8, 1);
    let x = solve_linear(&spd8, &b).unwrap();
    assert!((&(&spd8 * &x) - &b).frobenius_norm() <= 1e-10);
}
