//! Chern curvature of the truncated direct-image bundle, computed two ways:
//! the four-term formula evaluated on one fiber, and finite differences of the
//! Gram matrix in `t`. Also the comparator and the flatness detector.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::bergman::{accumulate, gram_boundary, FiberSpace, Sampled, SectionBasis};
use crate::error::{Error, Result};
use crate::family::{geometry_fields, h_rho_boundary, h_rho_direct, Family, GeometryFields};
use crate::jets::{fd_jets, Dims, FdSteps, Point};
use crate::linalg::{self, CMat, CVec, C, ZERO};
use crate::metric::{assemble_h_hf, connection_coeffs, curvature_blocks, Metric};
use crate::quadrature::{boundary_rule, QuadratureRule, Resolution};

/// A boundary weight field `g ↦ W(g)`.
pub type WeightFn = Arc<dyn Fn(&GeometryFields) -> Result<CMat> + Send + Sync>;

/// Default finite-difference step in `t` (scaled by `1 + |t|`).
pub const DEFAULT_STENCIL: f64 = 1e-3;

/// Coefficients `u_{(α,λ)}` of `u = Σ u_{αλ} z^α ⊗ e_λ`, constant in `t` in the trivialization.
#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub coeffs: CVec,
}

impl Section {
    pub fn new(basis: &SectionBasis, coeffs: Vec<C>) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return Err(Error::LengthMismatch { expected: basis.dim(), got: coeffs.len() });
        }
        Ok(Section { coeffs: CVec::from_vec(coeffs) })
    }

    pub fn zero(basis: &SectionBasis) -> Self {
        Section { coeffs: CVec::zeros(basis.dim()) }
    }

    /// The frame element with flat index `a`.
    pub fn frame(basis: &SectionBasis, a: usize) -> Self {
        let mut s = Self::zero(basis);
        s.coeffs[a] = C::from(1.0);
        s
    }

    /// `z^α ⊗ e_λ`.
    pub fn monomial(basis: &SectionBasis, alpha: &[usize], lambda: usize) -> Result<Self> {
        let ai = basis
            .position(alpha)
            .filter(|_| lambda < basis.r)
            .ok_or_else(|| Error::Dimension(format!("z^{alpha:?} e_{lambda} is not in the degree-{} basis", basis.degree)))?;
        Ok(Self::frame(basis, basis.index(ai, lambda)))
    }

    /// Uniform random coefficients in the unit square on every frame element of degree `≤ max_degree`.
    pub fn random(basis: &SectionBasis, max_degree: usize, rng: &mut impl Rng) -> Self {
        let mut s = Self::zero(basis);
        for a in 0..basis.dim() {
            if basis.total_degree(a) <= max_degree {
                s.coeffs[a] = C::new(2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0);
            }
        }
        s
    }

    /// `uᵀ M v̄`.
    pub fn pair(&self, m: &CMat, other: &Section) -> C {
        (self.coeffs.transpose() * m * other.coeffs.map(|x| x.conj()))[(0, 0)]
    }
}

/// Boundary weight used by the fourth term.
#[derive(Clone)]
pub enum BoundaryWeight {
    /// `H(ρ)` from `H₀(ρ)` plus the rank-one correction.
    Standard,
    /// The `ν`-contracted Levi form of `ρ`, equal to `H(ρ)` on the boundary.
    Direct,
    /// Any other `n x n` field (used for fault injection).
    Custom(WeightFn),
}

impl BoundaryWeight {
    fn eval(&self, g: &GeometryFields) -> Result<CMat> {
        match self {
            BoundaryWeight::Standard => h_rho_boundary(g),
            BoundaryWeight::Direct => Ok(h_rho_direct(g)),
            BoundaryWeight::Custom(f) => f(g),
        }
    }
}

/// Names of the four terms.
pub const TERM_NAMES: [&str; 4] = ["T1", "T2", "T3", "T4"];

struct NodeData {
    hhf: Vec<CMat>,
    t3: Vec<C>,
    /// `(L_j e_a)` at this node, `[j][a][μ]`.
    l_frame: Vec<Vec<Vec<C>>>,
}

fn node_data(family: &Family, metric: &Metric, basis: &SectionBasis, t: &[C], z: &[C]) -> Result<NodeData> {
    let d = family.dims;
    let (n, m, r) = (d.n, d.m, basis.r);
    let g = geometry_fields(d, &family.rho_jet(t, z, 3)?)?;
    let mj = metric.jet(t, z)?;
    let blocks = curvature_blocks(&mj)?;
    let hhf = assemble_h_hf(&blocks, &g)?;
    let gam = connection_coeffs(&mj)?;
    let mut t3 = vec![ZERO; n * n];
    for j in 0..n {
        for k in 0..n {
            for p in 0..m {
                for q in 0..m {
                    t3[j * n + k] += g.dnu(j, p, d.zb(q)) * g.dnu(k, q, d.zb(p)).conj();
                }
            }
        }
    }
    let mono = basis.monomials(z);
    let dmono: Vec<Vec<C>> = (0..m).map(|p| basis.monomial_derivs(z, p)).collect();
    let mut l_frame = vec![vec![vec![ZERO; r]; basis.dim()]; n];
    for (j, lj) in l_frame.iter_mut().enumerate() {
        let div: C = (0..m).map(|p| g.dnu(j, p, d.z(p))).sum();
        for (a, la) in lj.iter_mut().enumerate() {
            let (ai, lam) = basis.split(a);
            let za = mono[ai];
            for (mu, v) in la.iter_mut().enumerate() {
                let mut x = za * gam[j][(lam, mu)];
                for p in 0..m {
                    x += g.nu[(j, p)] * za * gam[n + p][(lam, mu)];
                }
                if mu == lam {
                    x += div * za;
                    for p in 0..m {
                        x += g.nu[(j, p)] * dmono[p][ai];
                    }
                }
                *v = x;
            }
        }
    }
    Ok(NodeData { hhf, t3, l_frame })
}

/// The four-term curvature formula assembled on the truncated frame at one `t`:
/// `T_i[j*n+k][a][b]` is the term's pairing of `e_a` (slot `j`) with `e_b` (slot `k`).
pub struct FormulaEngine {
    pub t: Vec<C>,
    pub dims: Dims,
    pub basis: SectionBasis,
    pub space: FiberSpace,
    pub boundary: QuadratureRule,
    /// `L_j e_a` sampled on the interior nodes, `[j][a]`.
    pub l_frame: Vec<Vec<Sampled>>,
    pub terms: [Vec<CMat>; 4],
}

impl FormulaEngine {
    /// Interior and boundary rules at `res`, standard boundary weight.
    pub fn build(family: &Family, metric: &Metric, t: &[C], basis: &SectionBasis, res: Resolution) -> Result<Self> {
        let space = FiberSpace::new(family, t, basis, metric, res)?;
        let boundary = boundary_rule(family, t, res)?;
        Self::new(family, metric, space, boundary, BoundaryWeight::Standard)
    }

    pub fn new(family: &Family, metric: &Metric, space: FiberSpace, boundary: QuadratureRule, weight: BoundaryWeight) -> Result<Self> {
        if space.rule.resolution != boundary.resolution {
            return Err(Error::TierMismatch);
        }
        let t = space.t.clone();
        let basis = space.basis.clone();
        let d = family.dims;
        let (n, rr) = (d.n, basis.dim());
        let nodes: Vec<NodeData> = space
            .rule
            .nodes
            .par_iter()
            .map(|z| node_data(family, metric, &basis, &t, z))
            .collect::<Result<_>>()?;

        // Σ_i w_i z^α z̄^β K_i[λ][μ] for a per-node r x r kernel K_i of each slot pair.
        let interior = |pick: &(dyn Fn(usize, usize) -> CMat + Sync)| -> Vec<CMat> {
            let big = accumulate(nodes.len(), n * n * rr, rr, |i, acc| {
                let w = space.rule.weights[i];
                let mono = &space.mono[i];
                for jk in 0..n * n {
                    let km = pick(i, jk);
                    for a in 0..rr {
                        let (ai, la) = basis.split(a);
                        let za = mono[ai] * w;
                        for b in 0..rr {
                            let (bi, lb) = basis.split(b);
                            acc[(jk * rr + a, b)] += za * mono[bi].conj() * km[(la, lb)];
                        }
                    }
                }
            });
            (0..n * n).map(|jk| big.rows(jk * rr, rr).into_owned()).collect()
        };
        let t1 = interior(&|i, jk| nodes[i].hhf[jk].clone());
        let t3 = interior(&|i, jk| &space.h[i] * nodes[i].t3[jk]);

        let mut l_frame: Vec<Vec<Sampled>> = vec![vec![Vec::with_capacity(nodes.len()); rr]; n];
        for nd in &nodes {
            for j in 0..n {
                for a in 0..rr {
                    l_frame[j][a].push(nd.l_frame[j][a].clone());
                }
            }
        }
        let flat: Vec<Sampled> = l_frame.iter().flatten().cloned().collect();
        let perp = space.perp_matrix(&flat, &flat)?;
        let t2: Vec<CMat> = (0..n * n).map(|jk| -perp.view((jk / n * rr, jk % n * rr), (rr, rr)).into_owned()).collect();

        let t4 = gram_boundary(family, &t, &basis, metric, &boundary, |g| weight.eval(g), true)?;
        Ok(FormulaEngine { t, dims: d, basis, space, boundary, l_frame, terms: [t1, t2, t3, t4] })
    }

    pub fn term(&self, i: usize, j: usize, k: usize) -> &CMat {
        &self.terms[i][j * self.dims.n + k]
    }

    /// `T1 + T2 + T3 + T4` for slot pair `(j, k)`.
    pub fn total(&self, j: usize, k: usize) -> CMat {
        (0..4).fold(CMat::zeros(self.basis.dim(), self.basis.dim()), |acc, i| acc + self.term(i, j, k))
    }

    /// `L_j u` for every `j`, sampled on the interior nodes.
    pub fn l_op(&self, u: &Section) -> Vec<Sampled> {
        let r = self.basis.r;
        self.l_frame
            .iter()
            .map(|lj| {
                (0..self.space.rule.len())
                    .map(|i| {
                        let mut v = vec![ZERO; r];
                        for (a, &ua) in u.coeffs.iter().enumerate() {
                            if ua != ZERO {
                                for (mu, x) in v.iter_mut().enumerate() {
                                    *x += ua * lj[a][i][mu];
                                }
                            }
                        }
                        v
                    })
                    .collect()
            })
            .collect()
    }

    /// Per-slot-pair breakdown for a section tuple `(u_1, ..., u_n)`.
    pub fn pairing(&self, sections: &[Section]) -> Result<CurvatureReport> {
        let n = self.dims.n;
        check_tuple(sections, n, self.basis.dim())?;
        let mut records = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                let terms: [C; 4] = std::array::from_fn(|i| sections[j].pair(self.term(i, j, k), &sections[k]));
                records.push(PairingRecord::new(j, k, terms));
            }
        }
        Ok(CurvatureReport {
            t: self.t.clone(),
            degree: self.basis.degree,
            resolution: self.space.rule.resolution,
            stencil_h: None,
            records,
        })
    }

    /// Nakano matrix `M_{(j,a),(k,b)}` of the formula.
    pub fn nakano_matrix(&self) -> CMat {
        let mats: Vec<CMat> = (0..self.dims.n * self.dims.n).map(|jk| self.total(jk / self.dims.n, jk % self.dims.n)).collect();
        block_matrix(&mats, self.dims.n)
    }
}

fn check_tuple(sections: &[Section], n: usize, rr: usize) -> Result<()> {
    if sections.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: sections.len() });
    }
    for s in sections {
        if s.coeffs.len() != rr {
            return Err(Error::LengthMismatch { expected: rr, got: s.coeffs.len() });
        }
    }
    Ok(())
}

/// Assemble `n²` blocks (index `j*n + k`) into one square matrix.
pub fn block_matrix(mats: &[CMat], n: usize) -> CMat {
    let rr = mats[0].nrows();
    CMat::from_fn(n * rr, n * rr, |x, y| mats[(x / rr) * n + y / rr][(x % rr, y % rr)])
}

/// Formula side of the curvature report for a section tuple.
pub fn curvature_pairing_formula(engine: &FormulaEngine, sections: &[Section]) -> Result<CurvatureReport> {
    engine.pairing(sections)
}

/// One `(j, k)` entry of a curvature report.
#[derive(Clone, Debug, PartialEq)]
pub struct PairingRecord {
    pub j: usize,
    pub k: usize,
    pub terms: [C; 4],
    pub total: C,
    pub fd: Option<C>,
    pub abs_err: f64,
    pub rel_err: f64,
}

impl PairingRecord {
    pub fn new(j: usize, k: usize, terms: [C; 4]) -> Self {
        let total = terms[0] + terms[1] + terms[2] + terms[3];
        PairingRecord { j, k, terms, total, fd: None, abs_err: f64::NAN, rel_err: f64::NAN }
    }

    /// Index of the term with the largest modulus.
    pub fn dominant(&self) -> usize {
        (0..4).fold(0, |best, i| if self.terms[i].norm() > self.terms[best].norm() { i } else { best })
    }
}

/// Formula breakdown, oracle values and discrepancies at one base point.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureReport {
    pub t: Vec<C>,
    pub degree: usize,
    pub resolution: Resolution,
    pub stencil_h: Option<f64>,
    pub records: Vec<PairingRecord>,
}

impl CurvatureReport {
    /// `Σ_{jk}` of the totals: the Nakano pairing of the tuple.
    pub fn nakano_pairing(&self) -> C {
        self.records.iter().map(|r| r.total).sum()
    }

    pub fn record(&self, j: usize, k: usize) -> Option<&PairingRecord> {
        self.records.iter().find(|r| r.j == j && r.k == k)
    }

    /// `max |total(j,k) - conj(total(k,j))|`.
    pub fn hermitian_residual(&self) -> f64 {
        self.records
            .iter()
            .filter_map(|r| self.record(r.k, r.j).map(|s| (r.total - s.total.conj()).norm()))
            .fold(0.0, f64::max)
    }
}

/// Frame curvature from finite differences of the Gram matrix in `t`.
#[derive(Clone, Debug)]
pub struct FdCurvature {
    pub t: Vec<C>,
    pub h: f64,
    pub gram: CMat,
    /// `∂_{t_j} G`.
    pub dgram: Vec<CMat>,
    /// `P_{jk} = -∂_j ∂̄_k G + ∂_j G · G⁻¹ · ∂̄_k G`, so that `h^E(Θ_{jk} u, v) = uᵀ P_{jk} v̄`.
    pub p: Vec<CMat>,
}

impl FdCurvature {
    pub fn n(&self) -> usize {
        self.dgram.len()
    }

    /// `Σ_{jk} h^E(Θ_{jk} u_j, u_k)` restricted to one slot pair.
    pub fn pairing(&self, j: usize, k: usize, uj: &Section, uk: &Section) -> C {
        uj.pair(&self.p[j * self.n() + k], uk)
    }

    /// `Θ_{jk} = P_{jk} G⁻¹`, acting on coefficient rows (`u ↦ uᵀ Θ_{jk}`).
    pub fn theta(&self, j: usize, k: usize) -> Result<CMat> {
        Ok(&self.p[j * self.n() + k] * linalg::inverse(&self.gram, "Gram matrix")?)
    }

    pub fn nakano_matrix(&self) -> CMat {
        block_matrix(&self.p, self.n())
    }
}

fn t_point(t: &[C]) -> Point {
    Point::new(t.to_vec(), Vec::new())
}

fn gram_at(family: &Family, metric: &Metric, basis: &SectionBasis, res: Resolution, q: &Point) -> Result<CMat> {
    if !family.contains_t(&q.t) {
        return Err(Error::StencilOutside(format!("{q}")));
    }
    Ok(FiberSpace::new(family, &q.t, basis, metric, res)?.gram.matrix)
}

fn unflatten(jets: &[crate::jets::Jet], rr: usize, f: impl Fn(&crate::jets::Jet) -> C) -> CMat {
    CMat::from_fn(rr, rr, |a, b| f(&jets[a * rr + b]))
}

/// Frame curvature at `t` from central differences (step `h`, one Richardson level) of `G(t)`.
pub fn curvature_matrix_fd(family: &Family, t: &[C], basis: &SectionBasis, metric: &Metric, res: Resolution, h: f64) -> Result<FdCurvature> {
    let n = family.dims.n;
    let rr = basis.dim();
    let td = Dims::new(n, 0);
    let jets = fd_jets(&t_point(t), 2, &FdSteps::uniform(h), |q| {
        Ok(gram_at(family, metric, basis, res, q)?.iter().copied().collect())
    })?;
    // nalgebra iterates column-major: entry (a, b) sits at b*rr + a.
    let jets: Vec<_> = (0..rr * rr).map(|i| jets[(i % rr) * rr + i / rr].clone()).collect();
    let gram = linalg::symmetrize(&unflatten(&jets, rr, |x| x.value()));
    let ginv = linalg::inverse(&gram, "Gram matrix")?;
    let dgram: Vec<CMat> = (0..n).map(|j| unflatten(&jets, rr, |x| x.d1(td.t(j)))).collect();
    let dbar: Vec<CMat> = (0..n).map(|k| unflatten(&jets, rr, |x| x.d1(td.tb(k)))).collect();
    let mut p = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in 0..n {
            let ddb = unflatten(&jets, rr, |x| x.d2(td.t(j), td.tb(k)));
            p.push(-ddb + &dgram[j] * &ginv * &dbar[k]);
        }
    }
    Ok(FdCurvature { t: t.to_vec(), h, gram, dgram, p })
}

/// Curvature pairing of `t`-dependent sections `u_j(t) = c0_j + Σ_i (t_i - t0_i) c1_{j,i}`,
/// computed from `h^E(Θ_{jk} u_j, u_k) = -∂_j∂̄_k h^E(u_j, u_k) + h^E(D_j u_j, D_k u_k)`
/// with every derivative taken by finite differences.
#[allow(clippy::too_many_arguments)]
pub fn fd_extended_pairing(
    family: &Family,
    t0: &[C],
    basis: &SectionBasis,
    metric: &Metric,
    res: Resolution,
    h: f64,
    c0: &[Section],
    c1: &[Vec<Section>],
) -> Result<C> {
    let n = family.dims.n;
    let rr = basis.dim();
    check_tuple(c0, n, rr)?;
    if c1.len() != n || c1.iter().any(|v| v.len() != n) {
        return Err(Error::LengthMismatch { expected: n, got: c1.len() });
    }
    let td = Dims::new(n, 0);
    let coeffs = |j: usize, t: &[C]| -> CVec {
        let mut c = c0[j].coeffs.clone();
        for i in 0..n {
            c += &c1[j][i].coeffs * (t[i] - t0[i]);
        }
        c
    };
    let jets = fd_jets(&t_point(t0), 2, &FdSteps::uniform(h), |q| {
        let g = gram_at(family, metric, basis, res, q)?;
        let mut out: Vec<C> = g.iter().copied().collect();
        for j in 0..n {
            for k in 0..n {
                let uj = Section { coeffs: coeffs(j, &q.t) };
                let uk = Section { coeffs: coeffs(k, &q.t) };
                out.push(uj.pair(&g, &uk));
            }
        }
        Ok(out)
    })?;
    let gj: Vec<_> = (0..rr * rr).map(|i| jets[(i % rr) * rr + i / rr].clone()).collect();
    let g = linalg::symmetrize(&unflatten(&gj, rr, |x| x.value()));
    let ginv = linalg::inverse(&g, "Gram matrix")?;
    // D_j u has coefficients ∂_j c + Γ_jᵀ c with Γ_j = ∂_j G · G⁻¹.
    let du: Vec<CVec> = (0..n)
        .map(|j| {
            let gam = unflatten(&gj, rr, |x| x.d1(td.t(j))) * &ginv;
            &c1[j][j].coeffs + gam.transpose() * &c0[j].coeffs
        })
        .collect();
    let mut total = ZERO;
    for j in 0..n {
        for k in 0..n {
            let ddb = jets[rr * rr + j * n + k].d2(td.t(j), td.tb(k));
            let dd = Section { coeffs: du[j].clone() }.pair(&g, &Section { coeffs: du[k].clone() });
            total += -ddb + dd;
        }
    }
    Ok(total)
}

/// Acceptance tolerances for engine agreement: `|formula - fd| ≤ max(abs, rel·|fd|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { abs: 1e-5, rel: 1e-4 }
    }
}

impl Tolerances {
    pub fn accepts(&self, err: f64, reference: f64) -> bool {
        err <= self.abs.max(self.rel * reference.abs())
    }
}

/// Result of comparing the two engines on one section tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub report: CurvatureReport,
    pub pass: bool,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Dominant formula term (0..4) per record.
    pub dominant: Vec<usize>,
}

/// Fill the oracle columns of `formula` from `fd` and decide agreement.
pub fn compare_engines(formula: &CurvatureReport, fd: &FdCurvature, sections: &[Section], tol: Tolerances) -> Result<Comparison> {
    let n = fd.n();
    check_tuple(sections, n, fd.gram.nrows())?;
    if formula.t != fd.t {
        return Err(Error::Precondition("engines evaluated at different base points".into()));
    }
    let mut report = formula.clone();
    report.stencil_h = Some(fd.h);
    let mut pass = true;
    let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
    for r in &mut report.records {
        let v = fd.pairing(r.j, r.k, &sections[r.j], &sections[r.k]);
        r.fd = Some(v);
        r.abs_err = (r.total - v).norm();
        r.rel_err = if v.norm() > 0.0 { r.abs_err / v.norm() } else if r.abs_err == 0.0 { 0.0 } else { f64::INFINITY };
        pass &= tol.accepts(r.abs_err, v.norm());
        max_abs = max_abs.max(r.abs_err);
        max_rel = max_rel.max(r.rel_err);
    }
    let dominant = report.records.iter().map(|r| r.dominant()).collect();
    Ok(Comparison { report, pass, max_abs_err: max_abs, max_rel_err: max_rel, dominant })
}

/// Evidence for or against flatness over a grid of base points.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatnessReport {
    pub points: usize,
    /// Max entry modulus of the formula's pairing matrices.
    pub max_formula: f64,
    /// Max entry modulus of the finite-difference pairing matrices.
    pub max_fd: f64,
    /// Max `|A_{JK}|` of `h^F` over interior samples.
    pub max_theta_f: f64,
    pub tol: f64,
    pub flat: bool,
}

/// Scan the curvature of the truncated bundle and of `h^F` over `t_grid`.
/// A flat verdict is numeric evidence only.
#[allow(clippy::too_many_arguments)]
pub fn flatness_report(
    family: &Family,
    metric: &Metric,
    t_grid: &[Vec<C>],
    basis: &SectionBasis,
    res: Resolution,
    h: f64,
    samples_per_t: usize,
    tol: f64,
    seed: u64,
) -> Result<FlatnessReport> {
    let per_t: Vec<(f64, f64, f64)> = t_grid
        .par_iter()
        .enumerate()
        .map(|(i, t)| -> Result<(f64, f64, f64)> {
            let eng = FormulaEngine::build(family, metric, t, basis, res)?;
            let n = family.dims.n;
            let f = (0..n * n).map(|jk| linalg::max_abs(&eng.total(jk / n, jk % n))).fold(0.0, f64::max);
            let fd = curvature_matrix_fd(family, t, basis, metric, res, h)?;
            let g = fd.p.iter().map(linalg::max_abs).fold(0.0, f64::max);
            let mut a: f64 = 0.0;
            for z in family.interior_samples(t, samples_per_t, seed.wrapping_add(i as u64))? {
                a = a.max(curvature_blocks(&metric.jet(t, &z)?)?.max_abs());
            }
            Ok((f, g, a))
        })
        .collect::<Result<_>>()?;
    let max = |sel: fn(&(f64, f64, f64)) -> f64| per_t.iter().map(sel).fold(0.0, f64::max);
    let (mf, mg, ma) = (max(|x| x.0), max(|x| x.1), max(|x| x.2));
    Ok(FlatnessReport {
        points: t_grid.len(),
        max_formula: mf,
        max_fd: mg,
        max_theta_f: ma,
        tol,
        flat: mf < tol && mg < tol && ma < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{hartogs_ball, product_disk};
    use crate::linalg::c;
    use crate::metric::{flat, gaussian_weight};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn d11() -> Dims {
        Dims::new(1, 1)
    }
    fn res() -> Resolution {
        Resolution::new(64, 24, 2)
    }

    #[test]
    fn l_op_on_hartogs() {
        let f = hartogs_ball(d11());
        let basis = SectionBasis::new(1, 1, 2);
        let eng = FormulaEngine::build(&f, &flat(d11(), 1), &[c(0.5, 0.0)], &basis, res()).unwrap();
        let l = eng.l_op(&Section::frame(&basis, 0));
        for v in &l[0] {
            assert!((v[0] - c(-2.0 / 3.0, 0.0)).norm() < 1e-12);
        }
        let perp = eng.space.perp_matrix(&l, &l).unwrap();
        assert!(perp[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn hartogs_closed_form() {
        let f = hartogs_ball(d11());
        let m = flat(d11(), 1);
        let basis = SectionBasis::new(1, 1, 2);
        for t in [c(0.0, 0.0), c(0.3, 0.2), c(0.5, 0.0)] {
            let eng = FormulaEngine::build(&f, &m, &[t], &basis, res()).unwrap();
            let fd = curvature_matrix_fd(&f, &[t], &basis, &m, res(), DEFAULT_STENCIL).unwrap();
            for a in 0..3 {
                let u = [Section::frame(&basis, a)];
                let want = PI * (1.0 - t.norm_sqr()).powi(a as i32 - 1);
                let rep = eng.pairing(&u).unwrap();
                assert!((rep.nakano_pairing().re - want).abs() < 1e-9, "{t} {a} {rep:?}");
                assert_eq!(rep.records[0].dominant(), 3);
                let cmp = compare_engines(&rep, &fd, &u, Tolerances { abs: 1e-6, rel: 0.0 }).unwrap();
                assert!(cmp.pass, "{cmp:?}");
            }
        }
    }

    #[test]
    fn product_family_is_flat() {
        let f = product_disk(d11(), 1.0);
        let m = flat(d11(), 1);
        let basis = SectionBasis::new(1, 1, 2);
        let grid = vec![vec![c(0.1, -0.2)], vec![c(-0.3, 0.0)]];
        let rep = flatness_report(&f, &m, &grid, &basis, res(), DEFAULT_STENCIL, 16, 1e-8, 1).unwrap();
        assert!(rep.flat, "{rep:?}");
        let h = hartogs_ball(d11());
        assert!(!flatness_report(&h, &m, &grid[..1], &basis, res(), DEFAULT_STENCIL, 4, 1e-8, 1).unwrap().flat);
        let w = gaussian_weight(d11(), 1, 1.0, 1.0, 0.0);
        let rep = flatness_report(&f, &w, &grid[..1], &basis, res(), DEFAULT_STENCIL, 4, 1e-8, 1).unwrap();
        assert!(!rep.flat && rep.max_theta_f > 0.5);
    }

    #[test]
    fn weighted_engines_agree_and_pointwise() {
        let f = hartogs_ball(d11());
        let w = gaussian_weight(d11(), 1, 1.0, 1.0, 0.0);
        let basis = SectionBasis::new(1, 1, 3);
        let t = [c(0.2, -0.1)];
        let eng = FormulaEngine::build(&f, &w, &t, &basis, Resolution::new(128, 32, 2)).unwrap();
        let fd = curvature_matrix_fd(&f, &t, &basis, &w, Resolution::new(128, 32, 2), DEFAULT_STENCIL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = [Section::random(&basis, 3, &mut rng)];
        let rep = eng.pairing(&u).unwrap();
        let cmp = compare_engines(&rep, &fd, &u, Tolerances::default()).unwrap();
        assert!(cmp.pass, "{cmp:?}");
        let r = &rep.records[0];
        assert!(r.terms[1].re <= 1e-12);
        let base = fd_extended_pairing(&f, &t, &basis, &w, Resolution::new(128, 32, 2), DEFAULT_STENCIL, &u, &[vec![Section::zero(&basis)]]).unwrap();
        let ext = [vec![Section::random(&basis, 3, &mut rng)]];
        let moved = fd_extended_pairing(&f, &t, &basis, &w, Resolution::new(128, 32, 2), DEFAULT_STENCIL, &u, &ext).unwrap();
        assert!((base - moved).norm() < 1e-6 * (1.0 + base.norm()), "{base} {moved}");
        assert!((base - r.total).norm() < 1e-5 * (1.0 + base.norm()));
    }

    #[test]
    fn direct_boundary_form_and_fault_injection() {
        let f = hartogs_ball(d11());
        let m = flat(d11(), 1);
        let basis = SectionBasis::new(1, 1, 2);
        let t = [c(0.3, 0.2)];
        let std_eng = FormulaEngine::build(&f, &m, &t, &basis, res()).unwrap();
        let space = std_eng.space.clone();
        let b = std_eng.boundary.clone();
        let direct = FormulaEngine::new(&f, &m, space.clone(), b.clone(), BoundaryWeight::Direct).unwrap();
        assert!(linalg::max_abs(&(direct.term(3, 0, 0) - std_eng.term(3, 0, 0))) < 1e-8);
        let broken = BoundaryWeight::Custom(Arc::new(|g| Ok(h_rho_boundary(g)? * C::from(1.1))));
        let bad = FormulaEngine::new(&f, &m, space.clone(), b, broken).unwrap();
        let fd = curvature_matrix_fd(&f, &t, &basis, &m, res(), DEFAULT_STENCIL).unwrap();
        let u = [Section::frame(&basis, 1)];
        let cmp = compare_engines(&bad.pairing(&u).unwrap(), &fd, &u, Tolerances::default()).unwrap();
        assert!(!cmp.pass && cmp.dominant == vec![3]);
        let other = boundary_rule(&f, &t, Resolution::new(32, 24, 2)).unwrap();
        assert!(matches!(FormulaEngine::new(&f, &m, space, other, BoundaryWeight::Standard), Err(Error::TierMismatch)));
    }

    #[test]
    fn fd_pairing_is_sesquilinear() {
        let f = hartogs_ball(d11());
        let m = flat(d11(), 1);
        let basis = SectionBasis::new(1, 1, 2);
        let fd = curvature_matrix_fd(&f, &[c(0.1, 0.1)], &basis, &m, res(), DEFAULT_STENCIL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (u, v, w) = (Section::random(&basis, 2, &mut rng), Section::random(&basis, 2, &mut rng), Section::random(&basis, 2, &mut rng));
        let s = c(0.3, -1.2);
        let uv = Section { coeffs: &u.coeffs + &v.coeffs * s };
        let lhs = fd.pairing(0, 0, &uv, &w);
        let rhs = fd.pairing(0, 0, &u, &w) + fd.pairing(0, 0, &v, &w) * s;
        assert!((lhs - rhs).norm() < 1e-12);
        let th = fd.theta(0, 0).unwrap();
        // Diagonal Gram at small t: Θ is nearly diagonal with entries a+1 up to O(|t|²).
        assert!((th[(2, 2)].re - 3.0).abs() < 0.2);
    }
}
