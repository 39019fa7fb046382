//! Pointwise Schur reduction of the metric curvature and the interior inequality.
//!
//! `cargo run --release --example schur_reduction`

use bergcurv::bergman::SectionBasis;
use bergcurv::curvature::{FormulaEngine, Section};
use bergcurv::family::hartogs_ball;
use bergcurv::jets::Dims;
use bergcurv::linalg::c;
use bergcurv::metric::{curvature_blocks, gaussian_weight};
use bergcurv::positivity::{interior_bound_check, reduced_form, schur_complement, solve_b, BlockForm};
use bergcurv::quadrature::Resolution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bergcurv::error::Result<()> {
    let d = Dims::new(1, 1);
    let fam = hartogs_ball(d);
    let metric = gaussian_weight(d, 1, 1.0, 1.0, 0.5);
    let (t, z) = ([c(0.3, 0.1)], [c(0.2, -0.3)]);

    let blocks = curvature_blocks(&metric.jet(&t, &z)?)?;
    let full = blocks.full_matrix();
    let schur = schur_complement(&BlockForm::split(&full, d.n))?;
    let b = solve_b(&blocks.fiber_matrix(), d.m, metric.r())?;
    println!("Schur complement min eig {:.6} ({:?}), B residual {:.1e}", schur.min_eig, schur.verdict, b.residual);
    println!("reduced form {:.6}", reduced_form(&blocks)?[(0, 0)].re);

    let basis = SectionBasis::new(1, 1, 4);
    let eng = FormulaEngine::build(&fam, &metric, &t, &basis, Resolution::default_for(1))?;
    let u = Section::random(&basis, 4, &mut ChaCha8Rng::seed_from_u64(0));
    let bc = interior_bound_check(&eng, &fam, &metric, &[u])?;
    println!("lhs {:.6} ≥ rhs {:.6}: margin {:.3e} = Schur gap {:.3e} + T2+T3 {:.3e}", bc.lhs, bc.rhs, bc.margin, bc.schur_gap, bc.t2_t3);
    Ok(())
}
