use std::f64::consts::PI;

use proptest::prelude::*;
use spdeflow::coeffs::{Coeff, CoefficientSet};
use spdeflow::diagnostics::{
    ellipticity_ratio_field, hoelder_estimate_series, parabolicity_report, stopping_time_from_series,
};
use spdeflow::grid::{wrap_index, MatrixField, PeriodicGrid, ScalarField};
use spdeflow::noise::{derive_path_seed, sample_brownian_increments, SinCos2d};
use spdeflow::small::{self, Mat2};

fn mat() -> impl Strategy<Value = Mat2> {
    prop::array::uniform2(prop::array::uniform2(-3.0..3.0f64))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wrap_index_lands_in_range(i in -10_000i64..10_000, n in 1usize..300) {
        let w = wrap_index(i, n);
        prop_assert!(w < n);
        prop_assert_eq!((w as i64 - i).rem_euclid(n as i64), 0);
    }

    #[test]
    fn interpolation_is_periodic(x in 0.0..1.0f64, y in 0.0..1.0f64, sx in -3i32..3, sy in -3i32..3) {
        let grid = PeriodicGrid::new(2, 16).unwrap();
        let f = ScalarField::from_fn(grid, |p| (2.0 * PI * p[0]).sin() + (4.0 * PI * p[1]).cos() * p[0]);
        let a = f.interpolate([x, y]);
        let b = f.interpolate([x + sx as f64, y + sy as f64]);
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn constants_interpolate_to_themselves(c in -1e3..1e3f64, x in -5.0..5.0f64, y in -5.0..5.0f64) {
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let f = ScalarField::constant(grid, c);
        prop_assert!((f.interpolate([x, y]) - c).abs() <= 1e-12 * c.abs().max(1.0));
    }

    #[test]
    fn ratio_is_scale_invariant(a in mat(), s in prop_oneof![1e-3..1e3f64, -1e3..-1e-3f64]) {
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let sa = small::sym(&a);
        prop_assume!(small::det(&sa, 2).abs() > 1e-6);
        let l1 = ellipticity_ratio_field(&MatrixField::constant(grid, a)).values[0];
        let l2 = ellipticity_ratio_field(&MatrixField::constant(grid, small::scale(&a, s))).values[0];
        prop_assert!(l1 >= 1.0);
        prop_assert!((l1 / l2 - 1.0).abs() <= 1e-10, "{} vs {}", l1, l2);
    }

    #[test]
    fn skew_part_does_not_change_parabolicity(p in 0.6..2.0f64, r in 0.6..2.0f64, q in -0.5..0.5f64, k in -5.0..5.0f64) {
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let sym = [[p, q], [q, r]];
        let skew = [[p, q + k], [q - k, r]];
        let rep = |a: Mat2| parabolicity_report(&CoefficientSet::diffusion_only(2, Coeff::Constant(a), 0.0, 100.0), &SinCos2d, grid, &[0.0]);
        prop_assert!((rep(sym).nu_hat - rep(skew).nu_hat).abs() <= 1e-12);
    }

    #[test]
    fn stopping_time_is_monotone_in_m(d in prop::collection::vec(1.0..20.0f64, 2..60), m1 in 1.0..25.0f64, m2 in 1.0..25.0f64) {
        let times: Vec<f64> = (0..d.len()).map(|k| k as f64 * 0.01).collect();
        let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
        let a = stopping_time_from_series(&times, &d, lo);
        let b = stopping_time_from_series(&times, &d, hi);
        prop_assert!(a.tau <= b.tau);
    }

    #[test]
    fn hoelder_fit_is_affine_invariant(seed in any::<u64>(), scale in prop_oneof![0.1..10.0f64, -10.0..-0.1f64], shift in -5.0..5.0f64) {
        let path = sample_brownian_increments(seed, 1024, 1, 1.0 / 1024.0);
        let w = path.cumulative(0);
        let v: Vec<f64> = w.iter().map(|x| scale * x + shift).collect();
        let a = hoelder_estimate_series(&w, 1.0 / 1024.0).unwrap();
        let b = hoelder_estimate_series(&v, 1.0 / 1024.0).unwrap();
        prop_assert!((a.exponent - b.exponent).abs() <= 1e-9);
        prop_assert!((b.seminorm / (a.seminorm * scale.abs()) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn symmetric_eigenvalues_match_quadratic_form_extremes(a in mat()) {
        let (lo, hi) = small::sym_eigs(&a, 2);
        let mut qmin = f64::INFINITY;
        let mut qmax = f64::NEG_INFINITY;
        for k in 0..2000 {
            let th = PI * k as f64 / 2000.0;
            let (s, c) = th.sin_cos();
            let q = a[0][0] * c * c + (a[0][1] + a[1][0]) * s * c + a[1][1] * s * s;
            qmin = qmin.min(q);
            qmax = qmax.max(q);
        }
        // The scan overestimates the minimum by at most spread · (π/2000)².
        let slack = (hi - lo) * 3e-6 + 1e-12;
        prop_assert!(lo <= qmin + 1e-12 && qmin <= lo + slack, "{} {}", lo, qmin);
        prop_assert!(hi >= qmax - 1e-12 && qmax >= hi - slack, "{} {}", hi, qmax);
        prop_assert!((lo + hi - a[0][0] - a[1][1]).abs() <= 1e-12);
    }

    #[test]
    fn coarsening_preserves_the_driver(seed in any::<u64>(), factor in prop::sample::select(vec![1usize, 2, 4, 5])) {
        let fine = sample_brownian_increments(seed, 40, 3, 1e-3);
        let coarse = fine.coarsen(factor);
        prop_assert!((coarse.dt - fine.dt * factor as f64).abs() <= 1e-18);
        for m in 0..3 {
            let wf = fine.cumulative(m);
            let wc = coarse.cumulative(m);
            for (k, w) in wc.iter().enumerate() {
                prop_assert!((w - wf[k * factor]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn path_seeds_are_deterministic(master in any::<u64>(), idx in 0u64..1_000_000) {
        prop_assert_eq!(derive_path_seed(master, idx), derive_path_seed(master, idx));
        prop_assert_ne!(derive_path_seed(master, idx), derive_path_seed(master, idx + 1));
        let a = sample_brownian_increments(derive_path_seed(master, idx), 5, 2, 0.1);
        let b = sample_brownian_increments(derive_path_seed(master, idx), 5, 2, 0.1);
        prop_assert_eq!(a, b);
    }
}
