//! Truncated weighted Bergman spaces on the fibers: monomial frames, Gram
//! matrices of `h^E`, the orthogonal-projection defect `π_⊥`, and the weighted
//! Bergman kernel of the truncated space with its log-Hessian.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::family::{geometry_fields, Family, GeometryFields};
use crate::jets::{fd_jets, FdSteps, Point};
use crate::linalg::{self, CMat, CVec, C, ZERO};
use crate::metric::Metric;
use crate::quadrature::{boundary_rule, interior_rule, QuadratureRule, Resolution, RuleKind};

/// Largest condition number accepted for solves against a Gram matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Frame `z^α ⊗ e_λ` of the truncated space, `|α| ≤ d`, graded lexicographic in `α`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectionBasis {
    pub m: usize,
    pub r: usize,
    pub degree: usize,
    pub alphas: Vec<Vec<usize>>,
}

impl SectionBasis {
    pub fn new(m: usize, r: usize, degree: usize) -> Self {
        let mut alphas = Vec::new();
        for total in 0..=degree {
            if m == 1 {
                alphas.push(vec![total]);
            } else {
                // Lexicographic descending in α₁ within each total degree.
                fn rec(m: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
                    if cur.len() == m - 1 {
                        cur.push(left);
                        out.push(cur.clone());
                        cur.pop();
                        return;
                    }
                    for a in (0..=left).rev() {
                        cur.push(a);
                        rec(m, left - a, cur, out);
                        cur.pop();
                    }
                }
                rec(m, total, &mut Vec::new(), &mut alphas);
            }
        }
        SectionBasis { m, r, degree, alphas }
    }

    /// Number of monomials.
    pub fn monomial_count(&self) -> usize {
        self.alphas.len()
    }
    /// Total dimension `R = r · C(m+d, d)`.
    pub fn dim(&self) -> usize {
        self.r * self.alphas.len()
    }
    /// Flat position of `z^{α_i} ⊗ e_λ`.
    pub fn index(&self, alpha_idx: usize, lambda: usize) -> usize {
        alpha_idx * self.r + lambda
    }
    /// Inverse of [`SectionBasis::index`].
    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx / self.r, idx % self.r)
    }
    pub fn position(&self, alpha: &[usize]) -> Option<usize> {
        self.alphas.iter().position(|a| a == alpha)
    }
    pub fn total_degree(&self, idx: usize) -> usize {
        self.alphas[self.split(idx).0].iter().sum()
    }

    /// `z^α` for every multi-index.
    pub fn monomials(&self, z: &[C]) -> Vec<C> {
        self.alphas.iter().map(|a| a.iter().zip(z).map(|(&e, x)| x.powu(e as u32)).product()).collect()
    }

    /// `∂_{z_p} z^α` for every multi-index.
    pub fn monomial_derivs(&self, z: &[C], p: usize) -> Vec<C> {
        self.alphas
            .iter()
            .map(|a| {
                if a[p] == 0 {
                    return ZERO;
                }
                a.iter()
                    .zip(z)
                    .enumerate()
                    .map(|(q, (&e, x))| if q == p { x.powu(e as u32 - 1) * e as f64 } else { x.powu(e as u32) })
                    .product()
            })
            .collect()
    }
}

/// Hermitian Gram matrix `G_{(α,λ),(β,μ)} = ∫ z^α z̄^β h^F_{λμ̄} dλ` at one base point.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub t: Vec<C>,
    pub matrix: CMat,
    pub min_eig: f64,
    pub max_eig: f64,
    pub condition: f64,
}

impl GramMatrix {
    /// Symmetrize, check positivity and record the spectral condition number.
    pub fn new(t: &[C], m: CMat) -> Result<Self> {
        let m = linalg::symmetrize(&m);
        let e = linalg::herm_eigenvalues(&m);
        let (lo, hi) = (e[0], *e.last().unwrap());
        if lo <= 0.0 {
            return Err(Error::IndefiniteGram { min_eig: lo });
        }
        Ok(GramMatrix { t: t.to_vec(), matrix: m, min_eig: lo, max_eig: hi, condition: hi / lo })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn check_condition(&self) -> Result<()> {
        if self.condition > MAX_CONDITION {
            return Err(Error::IllConditioned { condition: self.condition });
        }
        Ok(())
    }

    /// `h^E(u, v) = uᵀ G v̄` for coefficient vectors.
    pub fn inner(&self, u: &CVec, v: &CVec) -> C {
        (u.transpose() * &self.matrix * v.map(|x| x.conj()))[(0, 0)]
    }
}

/// Deterministic parallel accumulation of per-node contributions into a matrix.
pub(crate) fn accumulate(len: usize, rows: usize, cols: usize, f: impl Fn(usize, &mut CMat) + Sync) -> CMat {
    const CHUNK: usize = 256;
    let parts: Vec<CMat> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = CMat::zeros(rows, cols);
            for i in c * CHUNK..len.min((c + 1) * CHUNK) {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    linalg::pairwise_sum_mats(&parts).unwrap_or_else(|| CMat::zeros(rows, cols))
}

fn check_rule(rule: &QuadratureRule, kind: RuleKind, t: &[C]) -> Result<()> {
    if rule.kind != kind {
        return Err(Error::Precondition(format!("expected a {kind:?} rule")));
    }
    if rule.t.as_slice() != t {
        return Err(Error::Precondition("quadrature rule built for a different base point".into()));
    }
    Ok(())
}

fn check_basis(basis: &SectionBasis, family: &Family, metric: &Metric) -> Result<()> {
    if basis.m != family.dims.m || basis.r != metric.r() || metric.dims() != family.dims {
        return Err(Error::Dimension(format!(
            "basis (m={}, r={}), family (n={}, m={}), metric (r={})",
            basis.m,
            basis.r,
            family.dims.n,
            family.dims.m,
            metric.r()
        )));
    }
    Ok(())
}

/// Interior Gram matrix on an interior rule at `t`.
pub fn gram_interior(family: &Family, t: &[C], basis: &SectionBasis, metric: &Metric, rule: &QuadratureRule) -> Result<GramMatrix> {
    Ok(FiberSpace::from_rule(family, t, basis, metric, rule.clone())?.gram)
}

/// `∫_{∂Ω_t} W_{jk̄} z^α z̄^β h^F_{λμ̄} dS / |∇ρ|` for every `(j, k)` (index `j*w + k` for a
/// `w x w` weight). With `divide_by_gradient = false` the `1/|∇ρ|` factor is omitted.
pub fn gram_boundary(
    family: &Family,
    t: &[C],
    basis: &SectionBasis,
    metric: &Metric,
    rule: &QuadratureRule,
    weight: impl Fn(&GeometryFields) -> Result<CMat> + Sync,
    divide_by_gradient: bool,
) -> Result<Vec<CMat>> {
    check_rule(rule, RuleKind::Boundary, t)?;
    check_basis(basis, family, metric)?;
    let d = family.dims;
    let nodes: Vec<Result<(CMat, CMat, Vec<C>)>> = rule
        .nodes
        .par_iter()
        .map(|z| {
            let g = geometry_fields(d, &family.rho_jet(t, z, 2)?)?;
            if g.grad_fiber < 1e-12 {
                return Err(Error::BoundaryDegenerate { value: g.grad_fiber });
            }
            let mut w = weight(&g)?;
            if divide_by_gradient {
                w /= C::from(g.grad_fiber);
            }
            Ok((w, metric.value(t, z)?, basis.monomials(z)))
        })
        .collect();
    let nodes: Vec<(CMat, CMat, Vec<C>)> = nodes.into_iter().collect::<Result<_>>()?;
    let ww = nodes.first().map(|n| n.0.nrows()).unwrap_or(0);
    let rr = basis.dim();
    let big = accumulate(nodes.len(), ww * ww * rr, rr, |i, acc| {
        let (w, h, mono) = &nodes[i];
        let wt = rule.weights[i];
        for jk in 0..ww * ww {
            let wjk = w[(jk / ww, jk % ww)] * wt;
            if wjk == ZERO {
                continue;
            }
            for a in 0..rr {
                let (ai, la) = basis.split(a);
                for b in 0..rr {
                    let (bi, lb) = basis.split(b);
                    acc[(jk * rr + a, b)] += wjk * mono[ai] * mono[bi].conj() * h[(la, lb)];
                }
            }
        }
    });
    Ok((0..ww * ww).map(|jk| big.rows(jk * rr, rr).into_owned()).collect())
}

/// Node-sampled `F`-valued fiber function: `values[node][λ]`.
pub type Sampled = Vec<Vec<C>>;

/// Interior rule, metric samples, monomial samples and the Gram matrix at one `t`.
#[derive(Clone, Debug)]
pub struct FiberSpace {
    pub t: Vec<C>,
    pub basis: SectionBasis,
    pub rule: QuadratureRule,
    /// `h^F` at each node.
    pub h: Vec<CMat>,
    /// `z^α` at each node.
    pub mono: Vec<Vec<C>>,
    pub gram: GramMatrix,
}

impl FiberSpace {
    pub fn new(family: &Family, t: &[C], basis: &SectionBasis, metric: &Metric, res: Resolution) -> Result<Self> {
        Self::from_rule(family, t, basis, metric, interior_rule(family, t, res)?)
    }

    pub fn from_rule(family: &Family, t: &[C], basis: &SectionBasis, metric: &Metric, rule: QuadratureRule) -> Result<Self> {
        check_rule(&rule, RuleKind::Interior, t)?;
        check_basis(basis, family, metric)?;
        let h: Vec<CMat> = rule.nodes.par_iter().map(|z| metric.value(t, z)).collect::<Result<_>>()?;
        let mono: Vec<Vec<C>> = rule.nodes.iter().map(|z| basis.monomials(z)).collect();
        let rr = basis.dim();
        let g = accumulate(rule.len(), rr, rr, |i, acc| {
            let w = rule.weights[i];
            for a in 0..rr {
                let (ai, la) = basis.split(a);
                let za = mono[i][ai] * w;
                for b in 0..rr {
                    let (bi, lb) = basis.split(b);
                    acc[(a, b)] += za * mono[i][bi].conj() * h[i][(la, lb)];
                }
            }
        });
        let gram = GramMatrix::new(t, g)?;
        Ok(FiberSpace { t: t.to_vec(), basis: basis.clone(), rule, h, mono, gram })
    }

    /// Samples of the frame element `e_a = z^α ⊗ e_λ`.
    pub fn frame_samples(&self, a: usize) -> Sampled {
        let (ai, la) = self.basis.split(a);
        self.mono
            .iter()
            .map(|m| {
                let mut v = vec![ZERO; self.basis.r];
                v[la] = m[ai];
                v
            })
            .collect()
    }

    /// Samples of `Σ_a u_a e_a`.
    pub fn section_samples(&self, u: &CVec) -> Sampled {
        let r = self.basis.r;
        self.mono
            .iter()
            .map(|m| {
                let mut v = vec![ZERO; r];
                for (a, &ua) in u.iter().enumerate() {
                    let (ai, la) = self.basis.split(a);
                    v[la] += ua * m[ai];
                }
                v
            })
            .collect()
    }

    fn check_len(&self, g: &Sampled) -> Result<()> {
        if g.len() != self.rule.len() {
            return Err(Error::LengthMismatch { expected: self.rule.len(), got: g.len() });
        }
        Ok(())
    }

    /// Matrix of `⟨f_a, g_b⟩ = ∫ Σ f_λ ḡ_μ h_{λμ̄}` over two families of sampled functions.
    pub fn inner_matrix(&self, fs: &[Sampled], gs: &[Sampled]) -> Result<CMat> {
        for f in fs.iter().chain(gs) {
            self.check_len(f)?;
        }
        let r = self.basis.r;
        Ok(accumulate(self.rule.len(), fs.len(), gs.len(), |i, acc| {
            let w = self.rule.weights[i];
            let h = &self.h[i];
            // hg_b[λ] = Σ_μ h_{λμ} conj(g_{b,μ}).
            let hg: Vec<Vec<C>> = gs
                .iter()
                .map(|g| (0..r).map(|l| (0..r).map(|mu| h[(l, mu)] * g[i][mu].conj()).sum()).collect())
                .collect();
            for (a, f) in fs.iter().enumerate() {
                for (b, hgb) in hg.iter().enumerate() {
                    let s: C = (0..r).map(|l| f[i][l] * hgb[l]).sum();
                    acc[(a, b)] += s * w;
                }
            }
        }))
    }

    /// Moments `b_{a,c} = ⟨f_a, e_c⟩` against the frame.
    pub fn moments(&self, fs: &[Sampled]) -> Result<CMat> {
        for f in fs {
            self.check_len(f)?;
        }
        let (r, rr) = (self.basis.r, self.basis.dim());
        Ok(accumulate(self.rule.len(), fs.len(), rr, |i, acc| {
            let w = self.rule.weights[i];
            let h = &self.h[i];
            for (a, f) in fs.iter().enumerate() {
                for c in 0..rr {
                    let (ci, lc) = self.basis.split(c);
                    let ec = self.mono[i][ci].conj();
                    let s: C = (0..r).map(|l| f[i][l] * h[(l, lc)]).sum();
                    acc[(a, c)] += s * ec * w;
                }
            }
        }))
    }

    /// `[⟨π_⊥ f_a, π_⊥ g_b⟩]` with `π_⊥` the defect of the orthogonal projection onto the frame span.
    pub fn perp_matrix(&self, fs: &[Sampled], gs: &[Sampled]) -> Result<CMat> {
        self.gram.check_condition()?;
        let full = self.inner_matrix(fs, gs)?;
        let bf = self.moments(fs)?;
        let bg = self.moments(gs)?;
        // ⟨πf, πg⟩ = Σ_c b^f_c conj(c^g_c) with Gᵀ c^g = b^g.
        let gt = self.gram.matrix.transpose();
        let cg = gt.lu().solve(&bg.transpose()).ok_or(Error::Singular("Gram solve"))?;
        Ok(full - bf * cg.map(|x| x.conj()))
    }
}

/// `⟨π_⊥ g₁, π_⊥ g₂⟩`; for `g₁ = g₂` tiny negative round-off (≥ -1e-12 relative) is clipped to 0.
pub fn perp_pairing(space: &FiberSpace, g1: &Sampled, g2: &Sampled) -> Result<C> {
    let v = space.perp_matrix(std::slice::from_ref(g1), std::slice::from_ref(g2))?[(0, 0)];
    if std::ptr::eq(g1, g2) || g1 == g2 {
        let norm = space.inner_matrix(std::slice::from_ref(g1), std::slice::from_ref(g1))?[(0, 0)].re;
        if v.re < 0.0 && v.re >= -1e-12 * (1.0 + norm) {
            return Ok(ZERO);
        }
        return Ok(C::from(v.re));
    }
    Ok(v)
}

/// Reproducing kernel `K(z, z) = v^* G⁻¹ v`, `v_a = z^α`, of the truncated space (`r = 1`).
pub fn bergman_kernel(space: &FiberSpace, z: &[C]) -> Result<f64> {
    if space.basis.r != 1 {
        return Err(Error::Unsupported("Bergman kernel for r >= 2".into()));
    }
    space.gram.check_condition()?;
    let v = CVec::from_vec(space.basis.monomials(z));
    let ch = linalg::cholesky(&space.gram.matrix, "Gram matrix")?;
    let k = (v.adjoint() * ch.solve(&v))[(0, 0)].re;
    if k.is_nan() || k < 1e-300 {
        return Err(Error::KernelFloor(k));
    }
    Ok(k)
}

/// `∂∂̄ log K` over `(t, z)` with its spectrum.
#[derive(Clone, Debug)]
pub struct KernelHessian {
    pub kernel: f64,
    /// `(n+m) x (n+m)` Hermitian matrix `∂_I ∂_{J̄} log K`.
    pub matrix: CMat,
    pub min_eig: f64,
    /// `∂_{z_p} log K`.
    pub grad_z: Vec<C>,
}

/// Cache of fiber spaces keyed by the bit pattern of `t`.
#[derive(Default)]
pub struct SpaceCache {
    map: Mutex<HashMap<Vec<u64>, std::sync::Arc<FiberSpace>>>,
}

impl SpaceCache {
    pub fn get(&self, family: &Family, t: &[C], basis: &SectionBasis, metric: &Metric, res: Resolution) -> Result<std::sync::Arc<FiberSpace>> {
        let key: Vec<u64> = t.iter().flat_map(|c| [c.re.to_bits(), c.im.to_bits()]).collect();
        if let Some(s) = self.map.lock().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let s = std::sync::Arc::new(FiberSpace::new(family, t, basis, metric, res)?);
        self.map.lock().unwrap().insert(key, s.clone());
        Ok(s)
    }
}

/// Finite-difference log-Hessian of the truncated weighted Bergman kernel at `(t, z) ∈ Ω`.
pub fn bergman_kernel_log_hessian(
    family: &Family,
    t: &[C],
    z: &[C],
    basis: &SectionBasis,
    metric: &Metric,
    res: Resolution,
    h: f64,
) -> Result<KernelHessian> {
    if basis.r != 1 {
        return Err(Error::Unsupported("Bergman kernel for r >= 2".into()));
    }
    let cache = SpaceCache::default();
    let p = Point::new(t.to_vec(), z.to_vec());
    let logk = |q: &Point| -> Result<Vec<C>> {
        if !family.contains_t(&q.t) || family.rho_value(&q.t, &q.z)? >= 0.0 {
            return Err(Error::StencilOutside(format!("{q}")));
        }
        let s = cache.get(family, &q.t, basis, metric, res)?;
        Ok(vec![C::from(bergman_kernel(&s, &q.z)?.ln())])
    };
    let kernel = logk(&p)?[0].re.exp();
    let jet = fd_jets(&p, 2, &FdSteps::uniform(h), logk)?.remove(0);
    let d = family.dims;
    let matrix = linalg::symmetrize(&CMat::from_fn(d.nv(), d.nv(), |i, j| jet.d2(d.hol(i), d.anti(j))));
    let min_eig = linalg::min_eig(&matrix);
    let grad_z = (0..d.m).map(|q| jet.d1(d.z(q))).collect();
    Ok(KernelHessian { kernel, matrix, min_eig, grad_z })
}

/// Boundary rule with the same resolution tier as `space`.
pub fn matching_boundary_rule(family: &Family, space: &FiberSpace) -> Result<QuadratureRule> {
    boundary_rule(family, &space.t, space.rule.resolution)
}
