//! Flatness detection: a product family is flat, the Hartogs ball is not.
//!
//! `cargo run --release --example flatness_scan`

use bergcurv::bergman::SectionBasis;
use bergcurv::curvature::{flatness_report, DEFAULT_STENCIL};
use bergcurv::family::{hartogs_ball, product_disk};
use bergcurv::jets::Dims;
use bergcurv::linalg::{c, C};
use bergcurv::metric::flat;
use bergcurv::quadrature::Resolution;

fn main() -> bergcurv::error::Result<()> {
    let d = Dims::new(1, 1);
    let grid: Vec<Vec<C>> = (0..9).map(|i| vec![c(-0.3 + 0.3 * (i % 3) as f64, -0.3 + 0.3 * (i / 3) as f64)]).collect();
    let basis = SectionBasis::new(1, 1, 3);
    let res = Resolution::new(64, 16, 2);
    for fam in [product_disk(d, 1.0), hartogs_ball(d)] {
        let rep = flatness_report(&fam, &flat(d, 1), &grid, &basis, res, DEFAULT_STENCIL, 16, 1e-8, 0)?;
        println!(
            "{:<13} formula {:.2e}  fd {:.2e}  metric {:.2e}  -> {}",
            fam.name,
            rep.max_formula,
            rep.max_fd,
            rep.max_theta_f,
            if rep.flat { "flat" } else { "curved" }
        );
    }
    Ok(())
}
