//! Truncated Bergman kernel of the Hartogs ball and the Hessian of its logarithm.
//!
//! `cargo run --release --example bergman_kernel`

use std::f64::consts::PI;

use bergcurv::bergman::{bergman_kernel, bergman_kernel_log_hessian, FiberSpace, SectionBasis};
use bergcurv::family::hartogs_ball;
use bergcurv::jets::Dims;
use bergcurv::linalg::c;
use bergcurv::metric::flat;
use bergcurv::quadrature::Resolution;

fn main() -> bergcurv::error::Result<()> {
    let d = Dims::new(1, 1);
    let fam = hartogs_ball(d);
    let metric = flat(d, 1);
    let basis = SectionBasis::new(1, 1, 8);
    let res = Resolution::new(64, 16, 2);
    let space = FiberSpace::new(&fam, &[c(0.0, 0.0)], &basis, &metric, res)?;
    println!("K(0, 0) = {:.10}  (1/π = {:.10})", bergman_kernel(&space, &[c(0.0, 0.0)])?, 1.0 / PI);
    for (t, z) in [(c(0.0, 0.0), c(0.3, 0.0)), (c(0.4, 0.2), c(-0.2, 0.3)), (c(-0.5, 0.0), c(0.1, -0.4))] {
        let kh = bergman_kernel_log_hessian(&fam, &[t], &[z], &basis, &metric, res, 1e-3)?;
        println!("t = {t}, z = {z}: K = {:.6}, min eig of ∂∂̄ log K = {:.6}", kh.kernel, kh.min_eig);
    }
    Ok(())
}
