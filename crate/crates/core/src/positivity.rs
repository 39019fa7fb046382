//! Positivity certification on the truncated bundle: Nakano minimum eigenvalues,
//! the Schur-complement lemma, the `B`-tensor and the interior inequality, the
//! boundary trace constant, and the strict-positivity lower bound.

use rayon::prelude::*;

use crate::bergman::{accumulate, gram_boundary, FiberSpace, SectionBasis};
use crate::curvature::{block_matrix, FormulaEngine, Section};
use crate::error::{Error, Result};
use crate::family::{geometry_fields, h0_rho, Family, ValidationReport};
use crate::linalg::{self, CMat, C};
use crate::metric::{curvature_blocks, flat, Metric};
use crate::quadrature::{boundary_rule, Resolution};

/// Eigenvalues above `-CLIP` count as nonnegative (finite-difference and quadrature noise).
pub const CLIP: f64 = 1e-10;

/// Definiteness verdict of a Hermitian matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefinite,
    PositiveSemidefinite,
    Indefinite,
}

impl Definiteness {
    pub fn of_min_eig(e: f64) -> Self {
        if e > CLIP {
            Definiteness::PositiveDefinite
        } else if e >= -CLIP {
            Definiteness::PositiveSemidefinite
        } else {
            Definiteness::Indefinite
        }
    }
}

/// `T = [[T1, T2], [T3, T4]]` on `U ⊕ V`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockForm {
    pub t1: CMat,
    pub t2: CMat,
    pub t3: CMat,
    pub t4: CMat,
}

impl BlockForm {
    /// Split a square matrix after the first `u` coordinates.
    pub fn split(m: &CMat, u: usize) -> Self {
        let v = m.nrows() - u;
        BlockForm {
            t1: m.view((0, 0), (u, u)).into_owned(),
            t2: m.view((0, u), (u, v)).into_owned(),
            t3: m.view((u, 0), (v, u)).into_owned(),
            t4: m.view((u, u), (v, v)).into_owned(),
        }
    }

    pub fn assemble(&self) -> CMat {
        let (u, v) = (self.t1.nrows(), self.t4.nrows());
        let mut m = CMat::zeros(u + v, u + v);
        m.view_mut((0, 0), (u, u)).copy_from(&self.t1);
        m.view_mut((0, u), (u, v)).copy_from(&self.t2);
        m.view_mut((u, 0), (v, u)).copy_from(&self.t3);
        m.view_mut((u, u), (v, v)).copy_from(&self.t4);
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchurResult {
    pub complement: CMat,
    pub min_eig: f64,
    pub verdict: Definiteness,
}

/// `T4 - T3 T1⁻¹ T2`.
pub fn schur_complement(bf: &BlockForm) -> Result<SchurResult> {
    let (u, v) = (bf.t1.nrows(), bf.t4.nrows());
    if bf.t1.ncols() != u || bf.t4.ncols() != v || bf.t2.shape() != (u, v) || bf.t3.shape() != (v, u) {
        return Err(Error::Dimension("inconsistent block shapes".into()));
    }
    let x = bf.t1.clone().lu().solve(&bf.t2).ok_or(Error::Singular("Schur block T1"))?;
    let s = &bf.t4 - &bf.t3 * x;
    let e = linalg::min_eig(&s);
    Ok(SchurResult { complement: s, min_eig: e, verdict: Definiteness::of_min_eig(e) })
}

/// `B_{pqλμ}` with `Σ_{q,β} A_{pqλβ} B_{sqαβ} = δ_{ps} δ_{λα}`, stored as the `mr x mr`
/// matrix `b[(p,λ),(q,μ)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BTensor {
    pub m: usize,
    pub r: usize,
    pub b: CMat,
    /// `max |contraction - δ|`.
    pub residual: f64,
}

impl BTensor {
    pub fn get(&self, p: usize, q: usize, lambda: usize, mu: usize) -> C {
        self.b[(p * self.r + lambda, q * self.r + mu)]
    }
}

/// Solve for `B` from the fiber view `A[(p,λ),(q,β)] = A_{pqλβ}`.
pub fn solve_b(a_fiber: &CMat, m: usize, r: usize) -> Result<BTensor> {
    if a_fiber.nrows() != m * r || a_fiber.ncols() != m * r {
        return Err(Error::Dimension(format!("fiber form is {}x{}, expected {}", a_fiber.nrows(), a_fiber.ncols(), m * r)));
    }
    let e = linalg::min_eig(a_fiber);
    if e <= 1e-12 * (1.0 + linalg::max_abs(a_fiber)) {
        return Err(Error::NotFiberPositive { min_eig: e });
    }
    let inv = linalg::inverse(a_fiber, "fiber curvature form").map_err(|_| Error::NotFiberPositive { min_eig: e })?;
    let b = inv.transpose();
    let residual = linalg::max_abs(&(a_fiber * b.transpose() - CMat::identity(m * r, m * r)));
    Ok(BTensor { m, r, b, residual })
}

/// `A_{jk} - Σ B_{pqλμ} A_{jqβμ} A_{pkλγ}` as an `nr x nr` matrix `[(j,β),(k,γ)]`.
pub fn reduced_form(blocks: &crate::metric::CurvatureBlocks) -> Result<CMat> {
    let d = blocks.dims;
    let (n, m, r) = (d.n, d.m, blocks.r);
    let bt = solve_b(&blocks.fiber_matrix(), m, r)?;
    let mut out = blocks.matrix_over(&(0..n).collect::<Vec<_>>());
    for j in 0..n {
        for k in 0..n {
            for beta in 0..r {
                for gamma in 0..r {
                    let mut s = C::from(0.0);
                    for p in 0..m {
                        for q in 0..m {
                            let (ajq, apk) = (blocks.tz(j, q), blocks.zt(p, k));
                            for lambda in 0..r {
                                for mu in 0..r {
                                    s += bt.get(p, q, lambda, mu) * ajq[(beta, mu)] * apk[(lambda, gamma)];
                                }
                            }
                        }
                    }
                    out[(j * r + beta, k * r + gamma)] -= s;
                }
            }
        }
    }
    Ok(out)
}

/// Both sides of the interior inequality for a section tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    /// `Σ_{jk} (T1 + T2 + T3)`.
    pub lhs: f64,
    /// `∫ Σ (A_{jk} - B A A) u_j ū_k`.
    pub rhs: f64,
    pub margin: f64,
    /// `∫ Σ (H(h^F)_{jk} - reduced_{jk}) u_j ū_k`: the pointwise Schur gap.
    pub schur_gap: f64,
    /// `Σ_{jk} (T2 + T3)`, so that `margin = schur_gap + t2_t3`.
    pub t2_t3: f64,
}

/// Interior inequality on the engine's interior rule.
pub fn interior_bound_check(engine: &FormulaEngine, family: &Family, metric: &Metric, sections: &[Section]) -> Result<BoundCheck> {
    let rep = engine.pairing(sections)?;
    let sum = |idx: &[usize]| -> f64 { rep.records.iter().map(|r| idx.iter().map(|&i| r.terms[i].re).sum::<f64>()).sum() };
    let lhs = sum(&[0, 1, 2]);
    let t2_t3 = sum(&[1, 2]);

    let d = family.dims;
    let (n, r) = (d.n, engine.basis.r);
    let basis = &engine.basis;
    let rule = &engine.space.rule;
    let t = &engine.t;
    let reduced: Vec<(CMat, CMat)> = rule
        .nodes
        .par_iter()
        .map(|z| -> Result<(CMat, CMat)> {
            let blocks = curvature_blocks(&metric.jet(t, z)?)?;
            let red = reduced_form(&blocks)?;
            let g = geometry_fields(d, &family.rho_jet(t, z, 2)?)?;
            let hhf = crate::metric::assemble_h_hf(&blocks, &g)?;
            Ok((red, block_matrix(&hhf, n)))
        })
        .collect::<Result<_>>()?;
    // Pointwise values u_{jβ}(z) = Σ_α u_{j,(α,β)} z^α.
    let point_vals = |i: usize| -> Vec<C> {
        let mono = &engine.space.mono[i];
        let mut v = vec![C::from(0.0); n * r];
        for (j, s) in sections.iter().enumerate() {
            for (a, &ua) in s.coeffs.iter().enumerate() {
                let (ai, lam) = basis.split(a);
                v[j * r + lam] += ua * mono[ai];
            }
        }
        v
    };
    let acc = accumulate(rule.len(), 1, 2, |i, acc| {
        let v = linalg::CVec::from_vec(point_vals(i));
        let q = |m: &CMat| (v.transpose() * m * v.map(|x| x.conj()))[(0, 0)];
        let (red, hh) = &reduced[i];
        let w = rule.weights[i];
        acc[(0, 0)] += q(red) * w;
        acc[(0, 1)] += q(&(hh - red)) * w;
    });
    let rhs = acc[(0, 0)].re;
    Ok(BoundCheck { lhs, rhs, margin: lhs - rhs, schur_gap: acc[(0, 1)].re, t2_t3 })
}

/// Smallest eigenvalue of the pencil `(M, I_n ⊗ G)` with `M_{(j,a),(k,b)}` the pairing of `e_a`, `e_b`.
pub fn nakano_min_eig(pairings: &[CMat], gram: &CMat) -> Result<f64> {
    let n = (pairings.len() as f64).sqrt().round() as usize;
    if n * n != pairings.len() || n == 0 {
        return Err(Error::Dimension(format!("{} pairing blocks is not a square count", pairings.len())));
    }
    let ge = linalg::min_eig(gram);
    if ge <= 0.0 {
        return Err(Error::IndefiniteGram { min_eig: ge });
    }
    Ok(linalg::pencil_eigenvalues(&block_matrix(pairings, n), &linalg::kron_identity(n, gram))?[0])
}

/// Formula-engine pairing blocks `total(j, k)`.
pub fn formula_pairings(engine: &FormulaEngine) -> Vec<CMat> {
    let n = engine.dims.n;
    (0..n * n).map(|jk| engine.total(jk / n, jk % n)).collect()
}

/// Variational trace constant of the truncated span.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceConstant {
    pub t: Vec<C>,
    pub degree: usize,
    /// Smallest generalized eigenvalue: `min ∫_{∂Ω_t}|f|² dS / ∫_{Ω_t}|f|² dλ`.
    pub delta: f64,
    pub eigenvalues: Vec<f64>,
}

/// `δ_d` from the pencil (unweighted boundary Gram, unweighted interior Gram) on polynomials of degree `≤ d`.
pub fn trace_constant(family: &Family, t: &[C], degree: usize, res: Resolution) -> Result<TraceConstant> {
    let basis = SectionBasis::new(family.dims.m, 1, degree);
    let metric = flat(family.dims, 1);
    let space = FiberSpace::new(family, t, &basis, &metric, res)?;
    let rule = boundary_rule(family, t, res)?;
    let one = |_: &crate::family::GeometryFields| Ok(CMat::identity(1, 1));
    let bd = gram_boundary(family, t, &basis, &metric, &rule, one, false)?.remove(0);
    let eigenvalues = linalg::pencil_eigenvalues(&bd, &space.gram.matrix)?;
    Ok(TraceConstant { t: t.to_vec(), degree, delta: eigenvalues[0], eigenvalues })
}

/// The lower-bound chain for strictly pseudoconvex families.
#[derive(Clone, Debug, PartialEq)]
pub struct StrictBound {
    /// `min_{∂Ω_t} λ_min(H₀(ρ)) / |∇_z ρ|`, sampled on the boundary nodes (not certified).
    pub delta1: f64,
    /// `δ₁ · min_{∂Ω_t} λ_min(h^F)`.
    pub delta2: f64,
    /// Trace constant of the truncated span.
    pub delta3: f64,
    /// `max_{Ω_t} λ_max(h^F)` over interior nodes.
    pub h_interior_max: f64,
    /// `δ₂ δ₃ / h_interior_max`.
    pub bound: f64,
    /// Nakano minimum eigenvalue of the formula engine.
    pub lambda_min: f64,
    /// `bound ≤ λ_min` up to `1e-9` quadrature slack.
    pub holds: bool,
}

/// Lower bound for `λ_min` at `t` assembled from `δ₁`, `δ₂`, `δ₃`.
pub fn strict_lower_bound(
    family: &Family,
    t: &[C],
    basis: &SectionBasis,
    metric: &Metric,
    res: Resolution,
    validation: &ValidationReport,
) -> Result<StrictBound> {
    if !validation.strict() {
        return Err(Error::Precondition(format!(
            "family `{}` did not pass strict validation (min full Hessian eigenvalue {:.3e})",
            validation.family, validation.full_hessian_min
        )));
    }
    let engine = FormulaEngine::build(family, metric, t, basis, res)?;
    let lambda_min = nakano_min_eig(&formula_pairings(&engine), &engine.space.gram.matrix)?;
    let d = family.dims;
    let per_node: Vec<(f64, f64)> = engine
        .boundary
        .nodes
        .par_iter()
        .map(|z| -> Result<(f64, f64)> {
            let g = geometry_fields(d, &family.rho_jet(t, z, 2)?)?;
            let h0 = linalg::min_eig(&h0_rho(&g)) / g.grad_fiber;
            Ok((h0, linalg::min_eig(&metric.value(t, z)?)))
        })
        .collect::<Result<_>>()?;
    let delta1 = per_node.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let h_bd_min = per_node.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let delta2 = delta1 * h_bd_min;
    let delta3 = trace_constant(family, t, basis.degree, res)?.delta;
    let h_interior_max = engine.space.h.iter().map(linalg::max_eig).fold(0.0, f64::max);
    let bound = delta2 * delta3 / h_interior_max;
    Ok(StrictBound { delta1, delta2, delta3, h_interior_max, bound, lambda_min, holds: bound <= lambda_min + 1e-9 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{hartogs_ball, product_disk, validate_family};
    use crate::jets::Dims;
    use crate::linalg::c;
    use crate::metric::gaussian_weight;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d11() -> Dims {
        Dims::new(1, 1)
    }

    #[test]
    fn schur_examples() {
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
        let s = schur_complement(&BlockForm::split(&m, 1)).unwrap();
        assert!((s.complement[(0, 0)].re - 1.5).abs() < 1e-15);
        assert_eq!(s.verdict, Definiteness::PositiveDefinite);
        let t4 = CMat::from_row_slice(1, 1, &[c(-3.0, 0.0)]);
        let bf = BlockForm { t1: CMat::identity(2, 2), t2: CMat::zeros(2, 1), t3: CMat::zeros(1, 2), t4: t4.clone() };
        assert_eq!(schur_complement(&bf).unwrap().complement, t4);
        let z = BlockForm { t1: CMat::zeros(2, 2), ..bf.clone() };
        assert!(matches!(schur_complement(&BlockForm { t1: CMat::zeros(1, 1), ..bf }), Err(Error::Dimension(_))));
        assert!(matches!(schur_complement(&z), Err(Error::Singular(_))));
    }

    #[test]
    fn b_tensor_examples() {
        let b = solve_b(&CMat::identity(4, 4), 2, 2).unwrap();
        assert!(linalg::max_abs(&(b.b.clone() - CMat::identity(4, 4))) < 1e-15);
        let b = solve_b(&(CMat::identity(2, 2) * c(2.0, 0.0)), 2, 1).unwrap();
        assert!((b.get(1, 1, 0, 0).re - 0.5).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = CMat::from_fn(4, 4, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let a = &x * x.adjoint() + CMat::identity(4, 4) * c(0.1, 0.0);
        assert!(solve_b(&a, 2, 2).unwrap().residual < 1e-10);
        assert!(matches!(solve_b(&CMat::zeros(2, 2), 2, 1), Err(Error::NotFiberPositive { .. })));
    }

    #[test]
    fn trace_constants() {
        let disk = product_disk(d11(), 1.0);
        let res = Resolution::default_for(1);
        for d in [0, 3] {
            assert!((trace_constant(&disk, &[c(0.0, 0.0)], d, res).unwrap().delta - 2.0).abs() < 1e-8);
        }
        let big = product_disk(d11(), 2.0);
        assert!((trace_constant(&big, &[c(0.0, 0.0)], 2, res).unwrap().delta - 1.0).abs() < 1e-8);
        let h = hartogs_ball(d11());
        let tc = trace_constant(&h, &[c(0.5, 0.0)], 2, res).unwrap();
        assert!((tc.delta - 2.0 / 0.75f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn hartogs_strict_bound_is_tight() {
        let h = hartogs_ball(d11());
        let basis = SectionBasis::new(1, 1, 3);
        let v = validate_family(&h, 200, 1);
        let sb = strict_lower_bound(&h, &[c(0.0, 0.0)], &basis, &flat(d11(), 1), Resolution::new(128, 32, 2), &v).unwrap();
        assert!((sb.delta1 - 0.5).abs() < 1e-12 && (sb.delta3 - 2.0).abs() < 1e-8, "{sb:?}");
        assert!((sb.lambda_min - 1.0).abs() < 1e-8 && (sb.bound - 1.0).abs() < 1e-8 && sb.holds);
        let p = product_disk(d11(), 1.0);
        let vp = validate_family(&p, 50, 1);
        assert!(matches!(
            strict_lower_bound(&p, &[c(0.0, 0.0)], &basis, &flat(d11(), 1), Resolution::new(64, 16, 2), &vp),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn interior_inequality() {
        let h = hartogs_ball(d11());
        let w = gaussian_weight(d11(), 1, 1.0, 1.0, 0.0);
        let basis = SectionBasis::new(1, 1, 3);
        let res = Resolution::new(128, 32, 2);
        let eng = FormulaEngine::build(&h, &w, &[c(0.3, 0.1)], &basis, res).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = [Section::random(&basis, 3, &mut rng)];
        let bc = interior_bound_check(&eng, &h, &w, &u).unwrap();
        assert!(bc.margin >= -1e-8, "{bc:?}");
        assert!((bc.margin - (bc.schur_gap + bc.t2_t3)).abs() < 1e-9);
        let flat_eng = FormulaEngine::build(&h, &flat(d11(), 1), &[c(0.3, 0.1)], &basis, res).unwrap();
        assert!(matches!(interior_bound_check(&flat_eng, &h, &flat(d11(), 1), &u), Err(Error::NotFiberPositive { .. })));
    }
}
