//! Formula engine against the finite-difference oracle across the catalog.

use std::collections::BTreeMap;

use bergcurv::bergman::SectionBasis;
use bergcurv::curvature::{compare_engines, curvature_matrix_fd, fd_extended_pairing, FormulaEngine, Section, Tolerances, DEFAULT_STENCIL};
use bergcurv::family::{family_by_name, Family};
use bergcurv::jets::Dims;
use bergcurv::linalg::{c, C};
use bergcurv::metric::{gaussian_weight, reinhardt_invariant, Metric};
use bergcurv::positivity::{formula_pairings, nakano_min_eig};
use bergcurv::quadrature::Resolution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn agree(fam: &Family, metric: &Metric, t: &[C], degree: usize, res: Resolution, tuples: u64) {
    let d = fam.dims;
    let basis = SectionBasis::new(d.m, metric.r(), degree);
    let eng = FormulaEngine::build(fam, metric, t, &basis, res).unwrap();
    let fd = curvature_matrix_fd(fam, t, &basis, metric, res, DEFAULT_STENCIL).unwrap();
    for seed in 0..tuples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<Section> = (0..d.n).map(|_| Section::random(&basis, degree, &mut rng)).collect();
        let cmp = compare_engines(&eng.pairing(&u).unwrap(), &fd, &u, Tolerances::default()).unwrap();
        assert!(cmp.pass, "{} seed {seed}: max abs err {:.3e}", fam.name, cmp.max_abs_err);
        assert!(cmp.report.hermitian_residual() < 1e-8);
    }
}

fn named(name: &str, dims: Dims) -> Family {
    family_by_name(name, dims, &BTreeMap::new()).unwrap()
}

#[test]
fn one_dimensional_catalog_agrees() {
    let d = Dims::new(1, 1);
    let metric = gaussian_weight(d, 1, 1.0, 0.5, 0.3);
    for name in ["hartogs_ball", "egg", "annulus_reinhardt", "ellipse", "shifted_disk"] {
        agree(&named(name, d), &metric, &[c(0.1, 0.05)], 3, Resolution::new(128, 32, 2), 2);
    }
}

#[test]
fn two_parameter_base() {
    let d = Dims::new(2, 1);
    agree(&named("egg", d), &gaussian_weight(d, 1, 1.0, 1.0, 0.4), &[c(0.1, 0.0), c(-0.05, 0.1)], 2, Resolution::new(96, 24, 2), 2);
}

#[test]
fn two_dimensional_fibers() {
    let d = Dims::new(1, 2);
    agree(&named("hartogs_ball", d), &gaussian_weight(d, 1, 1.0, 1.0, 0.0), &[c(0.2, 0.1)], 2, Resolution::default_for(2), 2);
}

#[test]
fn rank_two_metric() {
    let d = Dims::new(1, 1);
    agree(&named("hartogs_ball", d), &reinhardt_invariant(d, 1.0, 0.5, 0.3).unwrap(), &[c(0.15, -0.1)], 2, Resolution::new(96, 24, 2), 2);
}

// The curvature pairing depends only on the values of the sections at `t`,
// not on how they are extended holomorphically in `t`.
#[test]
fn pairing_is_pointwise_in_t() {
    let d = Dims::new(1, 1);
    let fam = named("hartogs_ball", d);
    let metric = gaussian_weight(d, 1, 1.0, 1.0, 0.2);
    let basis = SectionBasis::new(1, 1, 3);
    let res = Resolution::new(96, 24, 2);
    let t = [c(0.25, -0.1)];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u0 = Section::random(&basis, 3, &mut rng);
    let u1 = Section::random(&basis, 3, &mut rng);
    let eng = FormulaEngine::build(&fam, &metric, &t, &basis, res).unwrap();
    let formula = eng.pairing(std::slice::from_ref(&u0)).unwrap().nakano_pairing();
    let ext = fd_extended_pairing(&fam, &t, &basis, &metric, res, DEFAULT_STENCIL, std::slice::from_ref(&u0), &[vec![u1]]).unwrap();
    assert!((formula - ext).norm() < 1e-5 * (1.0 + formula.norm()), "{formula} vs {ext}");
}

// Weighting by e^{-|t|²} adds exactly the identity to the curvature.
#[test]
fn base_weight_shifts_the_spectrum() {
    let d = Dims::new(1, 1);
    let fam = named("ellipse", d);
    let basis = SectionBasis::new(1, 1, 3);
    let res = Resolution::new(128, 32, 2);
    let t = [c(0.1, 0.2)];
    let lam = |beta: f64| {
        let eng = FormulaEngine::build(&fam, &gaussian_weight(d, 1, 1.0, beta, 0.0), &t, &basis, res).unwrap();
        nakano_min_eig(&formula_pairings(&eng), &eng.space.gram.matrix).unwrap()
    };
    assert!((lam(1.0) - lam(0.0) - 1.0).abs() < 1e-9);
}
