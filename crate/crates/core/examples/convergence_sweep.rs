//! Quadrature refinement on a non-Reinhardt fiber, where the rule is not exact.
//!
//! `cargo run --release --example convergence_sweep`

use bergcurv::bergman::SectionBasis;
use bergcurv::cli::run::decay_ok;
use bergcurv::curvature::{FormulaEngine, Section};
use bergcurv::family::ellipse;
use bergcurv::jets::Dims;
use bergcurv::linalg::c;
use bergcurv::metric::flat;
use bergcurv::quadrature::Resolution;

fn main() -> bergcurv::error::Result<()> {
    let d = Dims::new(1, 1);
    let fam = ellipse(d, 0.3, 0.5)?;
    let basis = SectionBasis::new(1, 1, 2);
    let u = Section::monomial(&basis, &[1], 0)?;
    let t = [c(0.3, 0.2)];
    let angular = [8, 16, 32, 64, 128, 256];
    let mut vals = Vec::new();
    for a in angular {
        let eng = FormulaEngine::build(&fam, &flat(d, 1), &t, &basis, Resolution::new(a, a / 4, 2))?;
        vals.push(eng.pairing(std::slice::from_ref(&u))?.nakano_pairing().re);
    }
    let best = *vals.last().unwrap();
    let errors: Vec<f64> = vals[..vals.len() - 1].iter().map(|v| (v - best).abs()).collect();
    for (a, e) in angular.iter().zip(&errors) {
        println!("angular {a:>4}: error {e:.3e}");
    }
    println!("value {best:.12}, decay ok: {}", decay_ok(&errors, 1e-13 * best.abs().max(1.0)));
    Ok(())
}
