use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spdeflow::coeffs::{Coeff, CoefficientSet, Sampling};
use spdeflow::diagnostics::{
    ellipticity_ratio_field, empirical_kc_constant, ito_wentzell_residual, lambda_tail_probability,
    parabolicity_report,
};
use spdeflow::flow::{evolve_flow, FlowConfig, FlowPoint, FlowState, JacobianScheme};
use spdeflow::grid::{MatrixField, PeriodicGrid, ScalarField};
use spdeflow::noise::{derive_path_seed, sample_brownian_increments, NoiseFamily, Order, SinCos2d, ZeroNoise};
use spdeflow::pde::{solve_spde_direct, SolverConfig};
use spdeflow::small::{self, Mat2};
use spdeflow::transform::transformed_diffusion;

fn min_quadratic_form(a: &Mat2) -> f64 {
    // Dense scan of the unit circle, then golden-section refinement.
    let q = |th: f64| {
        let (s, c) = th.sin_cos();
        a[0][0] * c * c + (a[0][1] + a[1][0]) * s * c + a[1][1] * s * s
    };
    let samples = 4096;
    let step = PI / samples as f64;
    let best = (0..samples)
        .map(|k| k as f64 * step)
        .min_by(|x, y| q(*x).total_cmp(&q(*y)))
        .unwrap();
    let (mut lo, mut hi) = (best - step, best + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if q(m1) < q(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    q(0.5 * (lo + hi))
}

#[test]
fn parabolicity_matches_dense_eta_scan() {
    let grid = PeriodicGrid::new(2, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let values: Vec<Mat2> = (0..grid.len())
        .map(|_| {
            let p = 0.5 + rng.random::<f64>();
            let r = 0.5 + rng.random::<f64>();
            let q = 0.4 * (rng.random::<f64>() - 0.5);
            [[p, q], [q, r]]
        })
        .collect();
    let oracle = values.iter().map(min_quadratic_form).fold(f64::INFINITY, f64::min);
    let field = MatrixField { grid, values };
    let coeffs = CoefficientSet::diffusion_only(
        2,
        Coeff::Grid {
            field,
            sampling: Sampling::NearestCell,
        },
        0.0,
        100.0,
    );
    let rep = parabolicity_report(&coeffs, &ZeroNoise { dim: 2 }, grid, &[0.0]);
    assert!((rep.nu_hat - oracle).abs() <= 1e-9, "{} vs {oracle}", rep.nu_hat);
}

#[test]
fn sincos_parabolicity_is_min_diagonal_minus_half() {
    let grid = PeriodicGrid::new(2, 16).unwrap();
    let coeffs = CoefficientSet::diffusion_only(2, Coeff::Constant([[1.1, 0.0], [0.0, 0.7]]), 0.2, 10.0);
    let rep = parabolicity_report(&coeffs, &SinCos2d, grid, &[0.0, 0.5]);
    assert!((rep.nu_hat - 0.2).abs() <= 1e-15);
    assert!(rep.pass);
}

#[test]
fn diagonal_ratio() {
    let grid = PeriodicGrid::new(2, 8).unwrap();
    let l = ellipticity_ratio_field(&MatrixField::constant(grid, [[3.0, 0.0], [0.0, 0.5]]));
    assert!(l.values.iter().all(|&v| (v - 6.0).abs() <= 1e-15));
    let l = ellipticity_ratio_field(&MatrixField::constant(grid, small::identity(2)));
    assert!(l.values.iter().all(|&v| v == 1.0));
    let l = ellipticity_ratio_field(&MatrixField::constant(grid, [[1.0, 0.0], [0.0, 0.0]]));
    assert!(l.values.iter().all(|&v| v == f64::INFINITY));
}

#[test]
fn sincos_ratio_follows_driver_difference() {
    const T: f64 = 0.25;
    const DT: f64 = 1e-4;
    const REL_TOL: f64 = 0.10;
    let steps = (T / DT).round() as usize;
    let grid = PeriodicGrid::new(2, 8).unwrap();
    let c = 0.9;
    for p in 0..20 {
        let path = sample_brownian_increments(derive_path_seed(44, p), steps, 4, DT);
        let mut pt = FlowPoint::new([0.3, 0.6], 2);
        let mut w = [0.0; 2];
        let mut scratch = Vec::new();
        for k in 0..steps {
            let x = pt.position();
            let dw = path.step(k);
            for axis in 0..2 {
                let (s, co) = (2.0 * PI * x[axis]).sin_cos();
                w[axis] += co * dw[2 * axis] - s * dw[2 * axis + 1];
            }
            pt.step(&SinCos2d, k as f64 * DT, dw, DT, 2, JacobianScheme::default(), &mut scratch).unwrap();
        }
        let modes = SinCos2d.eval_vec(T, pt.position(), Order::Value);
        let alpha = transformed_diffusion(&small::scale(&small::identity(2), c), &modes, &pt.inv_jacobian);
        let lambda = ellipticity_ratio_field(&MatrixField::constant(grid, alpha)).values[0];
        let expect = (4.0 * PI * (w[0] - w[1]).abs()).exp();
        assert!((lambda / expect - 1.0).abs() <= REL_TOL, "path {p}: {lambda} vs {expect}");
    }
}

#[test]
fn tail_probability_decreases_to_zero() {
    let mut prev = lambda_tail_probability(1.0, 0.5);
    assert_eq!(prev, 1.0);
    for k in [1.5, 3.0, 10.0, 100.0, 1e4, 1e16, 1e64] {
        let p = lambda_tail_probability(k, 0.5);
        assert!(p < prev);
        prev = p;
    }
    assert!(prev < 1e-3);
}

#[test]
fn ito_wentzell_collapses_without_noise() {
    let grid = PeriodicGrid::new(2, 16).unwrap();
    let path = sample_brownian_increments(1, 40, 0, 1e-3);
    let coeffs = CoefficientSet::diffusion_only(2, Coeff::Constant(small::identity(2)), 1.0, 5.0);
    let u0 = ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).cos() + (2.0 * PI * x[1]).sin());
    let fam = ZeroNoise { dim: 2 };
    let sol = solve_spde_direct(&coeffs, &fam, &u0, &path, &SolverConfig::default(), 1).unwrap();
    let flows: Vec<FlowState> = (0..=path.steps).map(|k| FlowState::identity(grid, k as f64 * path.dt)).collect();
    let r = ito_wentzell_residual(&sol.fields, &flows, &fam, &coeffs, &path, |x| (2.0 * PI * x[0]).cos());
    assert!(r <= 1e-12, "residual {r}");
}

#[test]
fn ito_wentzell_of_constant_solution() {
    let grid = PeriodicGrid::new(2, 16).unwrap();
    let path = sample_brownian_increments(2, 40, 4, 1e-3);
    let coeffs = CoefficientSet::diffusion_only(2, Coeff::Constant(small::identity(2)), 0.5, 5.0);
    let u0 = ScalarField::constant(grid, 1.25);
    let sol = solve_spde_direct(&coeffs, &SinCos2d, &u0, &path, &SolverConfig::default(), 1).unwrap();
    let traj = evolve_flow(&SinCos2d, &path, grid, &FlowConfig::default()).unwrap();
    let r = ito_wentzell_residual(&sol.fields, &traj.states, &SinCos2d, &coeffs, &path, |x| (2.0 * PI * x[0]).cos());
    assert!(r <= 1e-10, "residual {r}");
}

#[test]
fn kc_constant_of_brownian_paths_is_stable() {
    const BATCHES: usize = 10;
    const BATCH: usize = 500;
    const POINTS: usize = 17;
    const REL_TOL: f64 = 0.2;
    let dt = 1.0 / (POINTS - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let estimates: Vec<f64> = (0..BATCHES)
        .map(|_| {
            let samples: Vec<Vec<f64>> = (0..BATCH)
                .map(|_| {
                    let mut w = 0.0;
                    let mut v = vec![0.0];
                    for _ in 1..POINTS {
                        let z: f64 = rng.sample(StandardNormal);
                        w += dt.sqrt() * z;
                        v.push(w);
                    }
                    v
                })
                .collect();
            empirical_kc_constant(&samples, |i, j| ((i as f64 - j as f64).abs() * dt).sqrt(), 8.0, 0.9)
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / BATCHES as f64;
    for e in &estimates {
        assert!((e / mean - 1.0).abs() <= REL_TOL, "{estimates:?}");
    }
}
