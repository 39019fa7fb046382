//! Nakano minimum eigenvalue of the curvature and the explicit lower bound.
//!
//! `cargo run --release --example positivity_certify`

use bergcurv::bergman::SectionBasis;
use bergcurv::family::{hartogs_ball, validate_family};
use bergcurv::jets::Dims;
use bergcurv::linalg::c;
use bergcurv::metric::flat;
use bergcurv::quadrature::Resolution;
use bergcurv::positivity::strict_lower_bound;

fn main() -> bergcurv::error::Result<()> {
    let d = Dims::new(1, 1);
    let fam = hartogs_ball(d);
    let validation = validate_family(&fam, 500, 0);
    println!("strict: {}  min Hessian eigenvalue {:.4}", validation.strict(), validation.full_hessian_min);
    let basis = SectionBasis::new(1, 1, 3);
    for t in [c(0.0, 0.0), c(0.4, 0.1)] {
        let sb = strict_lower_bound(&fam, &[t], &basis, &flat(d, 1), Resolution::default_for(1), &validation)?;
        println!(
            "t = {t}: δ1 {:.4}  δ2 {:.4}  δ3 {:.4}  bound {:.6} ≤ λ_min {:.6}: {}",
            sb.delta1, sb.delta2, sb.delta3, sb.bound, sb.lambda_min, sb.holds
        );
    }
    Ok(())
}
