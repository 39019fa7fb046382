//! Four-term curvature formula against finite differences of the Gram matrix.
//!
//! `cargo run --release --example curvature_compare`

use bergcurv::bergman::SectionBasis;
use bergcurv::curvature::{compare_engines, curvature_matrix_fd, FormulaEngine, Section, Tolerances, DEFAULT_STENCIL, TERM_NAMES};
use bergcurv::family::egg;
use bergcurv::jets::Dims;
use bergcurv::linalg::c;
use bergcurv::metric::gaussian_weight;
use bergcurv::quadrature::Resolution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bergcurv::error::Result<()> {
    let d = Dims::new(1, 1);
    let fam = egg(d);
    let metric = gaussian_weight(d, 1, 1.0, 1.0, 0.3);
    let basis = SectionBasis::new(1, 1, 4);
    let res = Resolution::default_for(1);
    let t = [c(0.2, -0.1)];

    let eng = FormulaEngine::build(&fam, &metric, &t, &basis, res)?;
    let fd = curvature_matrix_fd(&fam, &t, &basis, &metric, res, DEFAULT_STENCIL)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..3 {
        let u = vec![Section::random(&basis, 4, &mut rng)];
        let cmp = compare_engines(&eng.pairing(&u)?, &fd, &u, Tolerances::default())?;
        let r = &cmp.report.records[0];
        println!("tuple {i}");
        for (name, term) in TERM_NAMES.iter().zip(r.terms) {
            println!("  {name:<10} {:+.10}", term.re);
        }
        println!("  formula    {:+.10}\n  fd         {:+.10}\n  |err|      {:.2e}  {}", r.total.re, r.fd.unwrap().re, r.abs_err, if cmp.pass { "PASS" } else { "FAIL" });
    }
    Ok(())
}
