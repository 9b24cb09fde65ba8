//! Jacobian of the sine/cosine flow at one point versus the geometric
//! Brownian motion built from the same increments.

use std::f64::consts::PI;

use spdeflow::flow::{FlowPoint, JacobianScheme};
use spdeflow::noise::{derive_path_seed, sample_brownian_increments, SinCos2d};

fn main() {
    let (t, dt) = (0.25, 1e-4);
    let steps = (t / dt) as usize;
    for p in 0..5 {
        let path = sample_brownian_increments(derive_path_seed(1, p), steps, 4, dt);
        let mut pt = FlowPoint::new([0.3, 0.7], 2);
        let mut w = 0.0;
        let mut scratch = Vec::new();
        for k in 0..steps {
            let (s, c) = (2.0 * PI * pt.position()[0]).sin_cos();
            let dw = path.step(k);
            w += c * dw[0] - s * dw[1];
            pt.step(&SinCos2d, k as f64 * dt, dw, dt, 2, JacobianScheme::default(), &mut scratch)
                .expect("flow stays nondegenerate");
        }
        let gbm = (2.0 * PI * w - 2.0 * PI * PI * t).exp();
        let d = pt.jacobian[0][0];
        println!("path {p}: d1 xi1 = {d:.5}, exp(2 pi W - 2 pi^2 t) = {gbm:.5}, rel err {:.2e}", (d / gbm - 1.0).abs());
    }
}
