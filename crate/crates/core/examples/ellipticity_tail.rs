//! Monte Carlo tail of the ellipticity ratio at one point against the closed form.

use spdeflow::diagnostics::lambda_tail_probability;
use spdeflow::flow::{evolve_point, JacobianScheme};
use spdeflow::noise::{derive_path_seed, sample_brownian_increments, NoiseFamily, Order, SinCos2d};
use spdeflow::small;
use spdeflow::transform::transformed_diffusion;

fn main() -> spdeflow::Result<()> {
    let (t, dt, paths) = (0.5, 1e-3, 400u64);
    let ks = [3.0, 10.0, 100.0];
    let a = small::identity(2);
    let mut hits = [0usize; 3];
    for p in 0..paths {
        let path = sample_brownian_increments(derive_path_seed(6, p), (t / dt) as usize, 4, dt);
        let pt = evolve_point(&SinCos2d, &path, [0.25, 0.75], 2, JacobianScheme::default())?;
        let modes = SinCos2d.eval_vec(t, pt.position(), Order::Value);
        let alpha = transformed_diffusion(&a, &modes, &pt.inv_jacobian);
        let (lo, hi) = small::sym_eigs(&alpha, 2);
        let ratio = hi.abs().max(lo.abs()) / hi.abs().min(lo.abs());
        for (h, k) in hits.iter_mut().zip(ks) {
            if ratio > k {
                *h += 1;
            }
        }
    }
    for (h, k) in hits.iter().zip(ks) {
        let f = *h as f64 / paths as f64;
        let se = (f * (1.0 - f) / paths as f64).sqrt();
        println!("k = {k:>5}: frequency {f:.3} +- {se:.3}, closed form {:.3}", lambda_tail_probability(k, t));
    }
    Ok(())
}
