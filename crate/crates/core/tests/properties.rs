//! Randomized invariants of the linear algebra and the curvature engines.

use std::sync::OnceLock;

use bergcurv::bergman::{perp_pairing, FiberSpace, SectionBasis};
use bergcurv::cli::run::decay_ok;
use bergcurv::curvature::{FormulaEngine, Section};
use bergcurv::family::{egg, hartogs_ball};
use bergcurv::jets::Dims;
use bergcurv::linalg::{self, c, CMat, C};
use bergcurv::metric::gaussian_weight;
use bergcurv::positivity::{schur_complement, solve_b, trace_constant, BlockForm, Definiteness};
use bergcurv::quadrature::Resolution;
use proptest::prelude::*;

fn herm(k: usize, entries: &[f64], shift: f64) -> CMat {
    let a = CMat::from_fn(k, k, |i, j| c(entries[2 * (i * k + j)], entries[2 * (i * k + j) + 1]));
    &a * a.adjoint() + CMat::identity(k, k) * c(shift, 0.0)
}

fn engine() -> &'static (FormulaEngine, SectionBasis) {
    static E: OnceLock<(FormulaEngine, SectionBasis)> = OnceLock::new();
    E.get_or_init(|| {
        let d = Dims::new(1, 1);
        let basis = SectionBasis::new(1, 1, 3);
        let fam = hartogs_ball(d);
        let metric = gaussian_weight(d, 1, 1.0, 1.0, 0.3);
        let eng = FormulaEngine::build(&fam, &metric, &[c(0.2, 0.1)], &basis, Resolution::new(64, 16, 2)).unwrap();
        (eng, basis)
    })
}

fn section(basis: &SectionBasis, xs: &[f64]) -> Section {
    Section::new(basis, (0..basis.dim()).map(|i| c(xs[2 * i], xs[2 * i + 1])).collect()).unwrap()
}

fn q(eng: &FormulaEngine, u: &Section) -> C {
    eng.pairing(std::slice::from_ref(u)).unwrap().nakano_pairing()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // With a positive (1,1) block, the full form is positive iff the complement is.
    #[test]
    fn schur_verdict_matches_full_spectrum(entries in prop::collection::vec(-1.0f64..1.0, 2 * 16), shift in -0.6f64..0.5, u in 1usize..4) {
        let m = herm(4, &entries, shift);
        let bf = BlockForm::split(&m, u);
        prop_assume!(linalg::min_eig(&bf.t1) > 1e-6);
        let s = schur_complement(&bf).unwrap();
        let full = linalg::min_eig(&m);
        prop_assume!(full.abs() > 1e-8 && s.min_eig.abs() > 1e-8);
        prop_assert_eq!(s.verdict == Definiteness::PositiveDefinite, full > 0.0);
    }

    #[test]
    fn block_split_roundtrip(entries in prop::collection::vec(-1.0f64..1.0, 2 * 9), u in 0usize..4) {
        let m = herm(3, &entries, 0.0);
        prop_assert!(linalg::max_abs(&(BlockForm::split(&m, u).assemble() - &m)) == 0.0);
    }

    #[test]
    fn fiber_tensor_residual(entries in prop::collection::vec(-1.0f64..1.0, 2 * 16), m in 1usize..3, r in 1usize..3) {
        let k = m * r;
        let a = herm(k, &entries[..2 * k * k], 0.05);
        let b = solve_b(&a, m, r).unwrap();
        prop_assert!(b.residual < 1e-9);
    }

    // Q(u) = ⟨Θu, u⟩ is a real quadratic form: Q(λu) = |λ|²Q(u) and the parallelogram law.
    #[test]
    fn pairing_is_hermitian_quadratic(xs in prop::collection::vec(-1.0f64..1.0, 8), ys in prop::collection::vec(-1.0f64..1.0, 8), lr in -2.0f64..2.0, li in -2.0f64..2.0) {
        let (eng, basis) = engine();
        let (u, v) = (section(basis, &xs), section(basis, &ys));
        let qu = q(eng, &u);
        let scale = (qu.norm() + 1.0) * 1e-10;
        prop_assert!(qu.im.abs() < scale);
        let lam = c(lr, li);
        let lu = Section { coeffs: &u.coeffs * lam };
        prop_assert!((q(eng, &lu) - qu * lam.norm_sqr()).norm() < scale * (1.0 + lam.norm_sqr()));
        let plus = Section { coeffs: &u.coeffs + &v.coeffs };
        let minus = Section { coeffs: &u.coeffs - &v.coeffs };
        let lhs = q(eng, &plus) + q(eng, &minus);
        let rhs = (qu + q(eng, &v)) * 2.0;
        prop_assert!((lhs - rhs).norm() < 10.0 * scale * (1.0 + rhs.norm()));
    }

    // `L u` leaves the truncated span; its orthogonal part is a contraction of it.
    #[test]
    fn perp_pairing_between_zero_and_norm(xs in prop::collection::vec(-1.0f64..1.0, 8)) {
        let (eng, basis) = engine();
        let g = eng.l_op(&section(basis, &xs)).remove(0);
        let p = perp_pairing(&eng.space, &g, &g).unwrap();
        let norm = eng.space.inner_matrix(std::slice::from_ref(&g), std::slice::from_ref(&g)).unwrap()[(0, 0)].re;
        prop_assert!(p.re >= 0.0 && p.im == 0.0);
        prop_assert!(p.re <= norm * (1.0 + 1e-12));
    }

    // A polynomial of the truncated space has no orthogonal component.
    #[test]
    fn perp_vanishes_on_the_span(xs in prop::collection::vec(-1.0f64..1.0, 8)) {
        let (eng, basis) = engine();
        let g = eng.space.section_samples(&section(basis, &xs).coeffs);
        prop_assert!(perp_pairing(&eng.space, &g, &g).unwrap().re < 1e-10);
    }

    #[test]
    fn basis_index_roundtrip(m in 1usize..3, r in 1usize..3, d in 0usize..6) {
        let b = SectionBasis::new(m, r, d);
        for idx in 0..b.dim() {
            let (ai, lam) = b.split(idx);
            prop_assert_eq!(b.index(ai, lam), idx);
            prop_assert_eq!(b.position(&b.alphas[ai]), Some(ai));
            prop_assert!(b.total_degree(idx) <= d);
        }
    }

    #[test]
    fn decay_rule_accepts_geometric_sequences(e0 in 1e-6f64..1.0, ratio in 4.0f64..100.0, len in 2usize..6) {
        let errs: Vec<f64> = (0..len).map(|i| e0 / ratio.powi(i as i32)).collect();
        prop_assert!(decay_ok(&errs, 0.0));
        let stalled: Vec<f64> = errs.iter().map(|_| e0).collect();
        prop_assert!(!decay_ok(&stalled, 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gram_is_hermitian_positive(tr in -0.6f64..0.6, ti in -0.6f64..0.6) {
        let d = Dims::new(1, 1);
        let basis = SectionBasis::new(1, 1, 4);
        let space = FiberSpace::new(&egg(d), &[c(tr, ti)], &basis, &gaussian_weight(d, 1, 1.0, 0.5, 0.2), Resolution::new(48, 12, 2)).unwrap();
        prop_assert!(linalg::hermitian_residual(&space.gram.matrix) < 1e-14 * linalg::max_abs(&space.gram.matrix));
        prop_assert!(space.gram.min_eig > 0.0);
    }

    // The trace constant is a minimum over nested spaces.
    #[test]
    fn trace_constant_nonincreasing(tr in -0.5f64..0.5, ti in -0.5f64..0.5) {
        let fam = egg(Dims::new(1, 1));
        let res = Resolution::new(64, 16, 2);
        let ds: Vec<f64> = (0..5).map(|d| trace_constant(&fam, &[c(tr, ti)], d, res).unwrap().delta).collect();
        for w in ds.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-10));
        }
    }
}
