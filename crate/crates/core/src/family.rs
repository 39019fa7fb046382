//! Families of bounded domains `Ω = {ρ < 0}` fibered over a base `U` and the
//! geometric fields built from the defining function: inverse fiber Hessian,
//! `ρ^p`, `|∂ρ|²`, the horizontal-lift coefficients `ν_j^p`, the boundary forms
//! `H(ρ)`, `H₀(ρ)` and validity diagnostics.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jets::{Dims, FunctionCatalog, Jet, Point, ScalarFunction};
use crate::linalg::{self, c, CMat, C, ZERO};

type TMap = Arc<dyn Fn(&[C]) -> Vec<C> + Send + Sync>;
type TPred = Arc<dyn Fn(&[C]) -> bool + Send + Sync>;

/// Root tolerance in `ρ` for boundary points found along rays.
pub const ROOT_TOL: f64 = 1e-13;
/// Boundary points with `|∂ρ|²` below this are rejected.
pub const BOUNDARY_DEGENERACY_TOL: f64 = 1e-12;
/// Sample classification tolerance for "on the boundary".
pub const ON_BOUNDARY_TOL: f64 = 1e-10;

/// A family of bounded domains described by a defining function.
#[derive(Clone)]
pub struct Family {
    pub name: String,
    pub dims: Dims,
    pub rho: ScalarFunction,
    /// Center used for the ray parametrization of `Ω_t`.
    pub star_center: TMap,
    /// Every fiber must lie in the ball of this radius about the center.
    pub bounding_radius: f64,
    /// Membership test for the base domain `U`.
    pub t_domain: TPred,
    /// Radius of the polydisk that random base samples are drawn from.
    pub t_sample_radius: f64,
    /// `ρ(t, ·)` depends only on `(|z_1|, …, |z_m|)` and the center is the origin.
    pub reinhardt: bool,
    pub params: BTreeMap<String, f64>,
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Family({}, n={}, m={}, {:?})", self.name, self.dims.n, self.dims.m, self.params)
    }
}

impl Family {
    pub fn point(&self, t: &[C], z: &[C]) -> Point {
        Point::new(t.to_vec(), z.to_vec())
    }

    pub fn rho_value(&self, t: &[C], z: &[C]) -> Result<f64> {
        Ok(self.rho.eval(&self.point(t, z))?.re)
    }

    pub fn rho_jet(&self, t: &[C], z: &[C], order: usize) -> Result<Jet> {
        self.rho.jet(&self.point(t, z), order)
    }

    pub fn contains_t(&self, t: &[C]) -> bool {
        t.len() == self.dims.n && (self.t_domain)(t)
    }

    pub fn center(&self, t: &[C]) -> Vec<C> {
        (self.star_center)(t)
    }

    fn check_t(&self, t: &[C]) -> Result<()> {
        if !self.contains_t(t) {
            return Err(Error::OutsideDomain(format!("{} base point {:?}", self.name, t)));
        }
        Ok(())
    }

    /// Maximal parameter intervals `[a, b]` with `ρ(t, center + s·dir) < 0`, `s ∈ [0, R]`.
    ///
    /// Sign changes are located on a sampling grid, bracketed by bisection and
    /// polished by Newton steps until `|ρ| < ROOT_TOL`.
    pub fn ray_intervals(&self, t: &[C], center: &[C], dir: &[C]) -> Result<Vec<(f64, f64)>> {
        self.check_t(t)?;
        let rb = self.bounding_radius;
        let g = |s: f64| -> Result<f64> {
            let z: Vec<C> = center.iter().zip(dir).map(|(c, d)| c + d * s).collect();
            self.rho_value(t, &z)
        };
        const SAMPLES: usize = 256;
        let mut prev = g(0.0)?;
        if prev.abs() < ROOT_TOL {
            return Err(Error::RootFinding("ray center lies on the boundary".into()));
        }
        if g(rb)? < 0.0 {
            return Err(Error::RootFinding(format!(
                "{}: fiber reaches the bounding radius {rb} (unbounded or bound too small)",
                self.name
            )));
        }
        let mut roots = Vec::new();
        let mut s_prev = 0.0;
        for i in 1..=SAMPLES {
            let s = rb * i as f64 / SAMPLES as f64;
            let cur = g(s)?;
            if (prev < 0.0) != (cur < 0.0) {
                roots.push(self.polish_root(t, center, dir, s_prev, s, prev < 0.0)?);
            }
            prev = cur;
            s_prev = s;
        }
        let mut intervals = Vec::new();
        let mut start = if g(0.0)? < 0.0 { Some(0.0) } else { None };
        for r in roots {
            match start.take() {
                Some(a) => intervals.push((a, r)),
                None => start = Some(r),
            }
        }
        if start.is_some() {
            return Err(Error::RootFinding("unterminated ray interval".into()));
        }
        Ok(intervals)
    }

    fn polish_root(&self, t: &[C], center: &[C], dir: &[C], mut lo: f64, mut hi: f64, neg_at_lo: bool) -> Result<f64> {
        let eval = |s: f64| -> Result<Jet> {
            let z: Vec<C> = center.iter().zip(dir).map(|(c, d)| c + d * s).collect();
            self.rho_jet(t, &z, 1)
        };
        let d = self.dims;
        let slope = |j: &Jet| -> f64 {
            (0..d.m).map(|p| 2.0 * (j.d1(d.z(p)) * dir[p]).re).sum()
        };
        for _ in 0..200 {
            if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let v = eval(mid)?.value().re;
            if (v < 0.0) == neg_at_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut s = 0.5 * (lo + hi);
        for _ in 0..4 {
            let j = eval(s)?;
            let v = j.value().re;
            if v.abs() < ROOT_TOL {
                return Ok(s);
            }
            let dv = slope(&j);
            if dv == 0.0 {
                break;
            }
            s -= v / dv;
        }
        let v = eval(s)?.value().re;
        if v.abs() < ROOT_TOL * 10.0 {
            Ok(s)
        } else {
            Err(Error::RootFinding(format!("root polishing stalled at |ρ| = {:.3e}", v.abs())))
        }
    }

    /// Random base point inside `U` (rejection from a polydisk).
    pub fn sample_t(&self, rng: &mut impl Rng) -> Vec<C> {
        loop {
            let t: Vec<C> = (0..self.dims.n)
                .map(|_| {
                    let r = self.t_sample_radius * rng.random::<f64>().sqrt();
                    let a = 2.0 * PI * rng.random::<f64>();
                    C::from_polar(r, a)
                })
                .collect();
            if self.contains_t(&t) {
                return t;
            }
        }
    }

    /// Random unit direction in `C^m`.
    pub fn sample_dir(&self, rng: &mut impl Rng) -> Vec<C> {
        let m = self.dims.m;
        if m == 1 {
            return vec![C::from_polar(1.0, 2.0 * PI * rng.random::<f64>())];
        }
        let psi = 0.5 * PI * rng.random::<f64>();
        (0..m)
            .map(|p| {
                let r = if p == 0 { psi.cos() } else { psi.sin() };
                C::from_polar(r, 2.0 * PI * rng.random::<f64>())
            })
            .collect()
    }

    /// `count` points of `∂Ω_t` on random rays (all boundary components in turn).
    pub fn boundary_samples(&self, t: &[C], count: usize, seed: u64) -> Result<Vec<Vec<C>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = self.center(t);
        let mut out = Vec::with_capacity(count);
        let mut k = 0usize;
        while out.len() < count {
            let dir = self.sample_dir(&mut rng);
            let iv = self.ray_intervals(t, &center, &dir)?;
            let ends: Vec<f64> = iv.iter().flat_map(|&(a, b)| [a, b]).filter(|&s| s > 0.0).collect();
            let s = ends[k % ends.len()];
            k += 1;
            out.push(center.iter().zip(&dir).map(|(c, d)| c + d * s).collect());
        }
        Ok(out)
    }

    /// `count` random points of `Ω_t`.
    pub fn interior_samples(&self, t: &[C], count: usize, seed: u64) -> Result<Vec<Vec<C>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = self.center(t);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let dir = self.sample_dir(&mut rng);
            let iv = self.ray_intervals(t, &center, &dir)?;
            let (a, b) = iv[rng.random_range(0..iv.len())];
            let s = a + (b - a) * (0.02 + 0.96 * rng.random::<f64>());
            out.push(center.iter().zip(&dir).map(|(c, d)| c + d * s).collect());
        }
        Ok(out)
    }
}

/// Derived fields of the defining function at one point.
#[derive(Clone, Debug)]
pub struct GeometryFields {
    pub dims: Dims,
    pub rho: f64,
    /// `ρ_j = ∂ρ/∂t_j`.
    pub rho_t: Vec<C>,
    /// `ρ_p = ∂ρ/∂z_p`.
    pub rho_z: Vec<C>,
    /// `ρ_{jk̄}` (n×n).
    pub hess_tt: CMat,
    /// `ρ_{jq̄}` (n×m).
    pub hess_tz: CMat,
    /// `ρ_{pq̄}` (m×m).
    pub hess_zz: CMat,
    /// `ρ^{pq̄}`, the inverse of `hess_zz`.
    pub inv_hessian: CMat,
    /// `ρ^p = Σ_q ρ^{pq̄} ρ_q`.
    pub rho_up: Vec<C>,
    /// `|∂ρ|² = Σ_p ρ_{p̄} ρ^p`.
    pub del_rho2: f64,
    /// `ρ - |∂ρ|²`.
    pub denominator: f64,
    /// `ν_j^p` values (n×m).
    pub nu: CMat,
    /// `ν_j^p` as jets one order below the input, stored at `j*m + p`.
    pub nu_jets: Vec<Jet>,
    /// Fiber real-gradient norm `|∇_z ρ| = 2 (Σ_p |ρ_p|²)^{1/2}`.
    pub grad_fiber: f64,
}

impl GeometryFields {
    /// `∂ν_j^p` along the Wirtinger direction `dir` (needs a third-order input jet).
    pub fn dnu(&self, j: usize, p: usize, dir: usize) -> C {
        self.nu_jets[j * self.dims.m + p].d1(dir)
    }
    /// `ρ^{p̄}`.
    pub fn rho_up_bar(&self, p: usize) -> C {
        self.rho_up[p].conj()
    }
}

/// Gauss-Jordan inverse of a small matrix of jets (no pivoting; the input is positive definite).
fn jet_inverse(a: &[Vec<Jet>]) -> Vec<Vec<Jet>> {
    let m = a.len();
    let dims = a[0][0].dims();
    let order = a[0][0].order();
    let mut a: Vec<Vec<Jet>> = a.to_vec();
    let mut inv: Vec<Vec<Jet>> = (0..m)
        .map(|i| (0..m).map(|j| Jet::constant(dims, order, if i == j { C::from(1.0) } else { ZERO })).collect())
        .collect();
    for col in 0..m {
        let piv = a[col][col].recip();
        for k in 0..m {
            a[col][k] = &a[col][k] * &piv;
            inv[col][k] = &inv[col][k] * &piv;
        }
        for row in 0..m {
            if row != col {
                let f = a[row][col].clone();
                for k in 0..m {
                    a[row][k] = &a[row][k] - &(&f * &a[col][k]);
                    inv[row][k] = &inv[row][k] - &(&f * &inv[col][k]);
                }
            }
        }
    }
    inv
}

/// Geometric fields from a jet of `ρ` (order 2 gives values, order 3 adds `∂ν`).
pub fn geometry_fields(dims: Dims, jet: &Jet) -> Result<GeometryFields> {
    let (n, m) = (dims.n, dims.m);
    assert!(jet.order() >= 2, "geometry needs at least second derivatives");
    let o = jet.order() - 2;
    let rho = jet.truncate(o);
    let rt: Vec<Jet> = (0..n).map(|j| jet.shift(dims.t(j)).truncate(o)).collect();
    let rz: Vec<Jet> = (0..m).map(|p| jet.shift(dims.z(p)).truncate(o)).collect();
    let rzb: Vec<Jet> = (0..m).map(|p| jet.shift(dims.zb(p)).truncate(o)).collect();
    let hzz: Vec<Vec<Jet>> = (0..m).map(|p| (0..m).map(|q| jet.shift(dims.z(p)).shift(dims.zb(q))).collect()).collect();
    let htz: Vec<Vec<Jet>> = (0..n).map(|j| (0..m).map(|q| jet.shift(dims.t(j)).shift(dims.zb(q))).collect()).collect();

    let hess_zz = CMat::from_fn(m, m, |p, q| hzz[p][q].value());
    let hess_tz = CMat::from_fn(n, m, |j, q| htz[j][q].value());
    let hess_tt = CMat::from_fn(n, n, |j, k| jet.d2(dims.t(j), dims.tb(k)));
    let me = linalg::min_eig(&hess_zz);
    if me <= 0.0 {
        return Err(Error::NotStrictlyPsh { min_eig: me });
    }
    let inv = jet_inverse(&hzz);
    let up: Vec<Jet> = (0..m).map(|p| (0..m).fold(&rho * 0.0, |acc, q| acc + &inv[p][q] * &rz[q])).collect();
    let up_bar: Vec<Jet> = up.iter().map(|u| u.conj()).collect();
    let del2 = (0..m).fold(&rho * 0.0, |acc, p| acc + &rzb[p] * &up[p]);
    let den = &rho - &del2;
    if den.value().re >= 0.0 {
        return Err(Error::Denominator { value: den.value().re });
    }
    let rden = den.recip();
    let mut nu_jets = Vec::with_capacity(n * m);
    for j in 0..n {
        // Σ_q ρ_{jq̄} ρ^q, shared by every p.
        let hup = (0..m).fold(&rho * 0.0, |acc, q| acc + &htz[j][q] * &up[q]);
        for p in 0..m {
            let mut nu = &(&rt[j] * &up_bar[p]) * &rden;
            for q in 0..m {
                nu = nu - &htz[j][q] * &inv[q][p];
            }
            nu = nu - &(&(&hup * &up_bar[p]) * &rden);
            nu_jets.push(nu);
        }
    }
    let rho_z: Vec<C> = rz.iter().map(|j| j.value()).collect();
    let grad_fiber = 2.0 * rho_z.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(GeometryFields {
        dims,
        rho: rho.value().re,
        rho_t: rt.iter().map(|j| j.value()).collect(),
        rho_z,
        hess_tt,
        hess_tz,
        hess_zz,
        inv_hessian: CMat::from_fn(m, m, |p, q| inv[p][q].value()),
        rho_up: up.iter().map(|j| j.value()).collect(),
        del_rho2: del2.value().re,
        denominator: den.value().re,
        nu: CMat::from_fn(n, m, |j, p| nu_jets[j * m + p].value()),
        nu_jets,
        grad_fiber,
    })
}

/// `H₀(ρ)_{jk̄} = ρ_{jk̄} - Σ ρ_{js̄} ρ^{sp̄} conj(ρ_{kp̄})`, symmetrized.
pub fn h0_rho(g: &GeometryFields) -> CMat {
    let h = &g.hess_tt - &g.hess_tz * &g.inv_hessian * g.hess_tz.adjoint();
    linalg::symmetrize(&h)
}

/// The boundary form `H(ρ)`: `H₀(ρ)` plus the rank-one term `ξ ξ^* / |∂ρ|²`,
/// `ξ_j = ρ_j - Σ_s ρ_{js̄} ρ^s`.
pub fn h_rho_boundary(g: &GeometryFields) -> Result<CMat> {
    if g.del_rho2 <= BOUNDARY_DEGENERACY_TOL {
        return Err(Error::BoundaryDegenerate { value: g.del_rho2 });
    }
    let n = g.dims.n;
    let xi: Vec<C> = (0..n)
        .map(|j| g.rho_t[j] - (0..g.dims.m).map(|s| g.hess_tz[(j, s)] * g.rho_up[s]).sum::<C>())
        .collect();
    let rank1 = CMat::from_fn(n, n, |j, k| xi[j] * xi[k].conj() / g.del_rho2);
    Ok(linalg::symmetrize(&(h0_rho(g) + rank1)))
}

/// `ρ_{jk̄} + Σ ν_j^p ρ_{pk̄} + Σ ν̄_k^q ρ_{jq̄} + Σ ν_j^p ν̄_k^q ρ_{pq̄}`; equals `H(ρ)` on `∂Ω_t`.
pub fn h_rho_direct(g: &GeometryFields) -> CMat {
    let nu = &g.nu;
    let h = &g.hess_tt + nu * g.hess_tz.adjoint() + &g.hess_tz * nu.adjoint() + nu * &g.hess_zz * nu.adjoint();
    linalg::symmetrize(&h)
}

/// Boundary residuals of the lift fields.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VResidual {
    /// `max |V_j(ρ)|`.
    pub v: f64,
    /// `max |V_k̄(V_j(ρ))|`.
    pub vv: f64,
    pub samples: usize,
}

/// `V_j(ρ)` and `V_k̄(V_j(ρ))` at boundary samples of `Ω_t`.
pub fn v_field_residual(family: &Family, t: &[C], samples: &[Vec<C>]) -> Result<VResidual> {
    let d = family.dims;
    let mut out = VResidual { samples: samples.len(), ..Default::default() };
    for z in samples {
        let jet = family.rho_jet(t, z, 3)?;
        if jet.value().re.abs() > ON_BOUNDARY_TOL {
            return Err(Error::NotOnBoundary { value: jet.value().re.abs() });
        }
        let g = geometry_fields(d, &jet)?;
        for j in 0..d.n {
            // W = V_j(ρ) as a first-order jet.
            let mut w = jet.shift(d.t(j)).truncate(1);
            for p in 0..d.m {
                w = w + &g.nu_jets[j * d.m + p] * &jet.shift(d.z(p)).truncate(1);
            }
            out.v = out.v.max(w.value().norm());
            for k in 0..d.n {
                let mut vv = w.d1(d.tb(k));
                for q in 0..d.m {
                    vv += g.nu[(k, q)].conj() * w.d1(d.zb(q));
                }
                out.vv = out.vv.max(vv.norm());
            }
        }
    }
    Ok(out)
}

/// Sampled diagnostics of a family.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub family: String,
    pub samples: usize,
    pub fiber_hessian_min: f64,
    /// Minimum eigenvalue of the full complex Hessian of `ρ` over `Ω̄` samples.
    pub full_hessian_min: f64,
    pub h0_min: f64,
    pub boundary_grad_min: f64,
    pub boundary_del_rho2_min: f64,
    pub denominator_max: f64,
    pub star_shaped: bool,
    pub bounded: bool,
    pub max_ray_components: usize,
    pub messages: Vec<String>,
}

impl ValidationReport {
    /// Defining-function validity: bounded fibers, nonvanishing fiber gradient on the
    /// boundary, strictly psh fibers and a negative denominator.
    pub fn valid(&self) -> bool {
        self.bounded && self.fiber_hessian_min > 0.0 && self.boundary_grad_min > 0.0 && self.denominator_max < 0.0
    }
    /// Valid and `ρ` strictly psh in all variables on the samples.
    pub fn strict(&self) -> bool {
        self.valid() && self.full_hessian_min > 0.0
    }
}

/// Sample `budget` rays over random base points and collect diagnostics.
pub fn validate_family(family: &Family, budget: usize, seed: u64) -> ValidationReport {
    let d = family.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = ValidationReport {
        family: family.name.clone(),
        samples: 0,
        fiber_hessian_min: f64::INFINITY,
        full_hessian_min: f64::INFINITY,
        h0_min: f64::INFINITY,
        boundary_grad_min: f64::INFINITY,
        boundary_del_rho2_min: f64::INFINITY,
        denominator_max: f64::NEG_INFINITY,
        star_shaped: true,
        bounded: true,
        max_ray_components: 0,
        messages: Vec::new(),
    };
    for _ in 0..budget {
        let t = family.sample_t(&mut rng);
        let center = family.center(&t);
        let dir = family.sample_dir(&mut rng);
        let iv = match family.ray_intervals(&t, &center, &dir) {
            Ok(iv) => iv,
            Err(e) => {
                rep.bounded = false;
                if rep.messages.len() < 8 {
                    rep.messages.push(e.to_string());
                }
                continue;
            }
        };
        rep.max_ray_components = rep.max_ray_components.max(iv.len());
        if iv.len() != 1 || iv[0].0 != 0.0 {
            rep.star_shaped = false;
        }
        let Some(&(a, b)) = iv.first() else {
            rep.messages.push("empty fiber along a ray".into());
            continue;
        };
        let at = |s: f64| -> Vec<C> { center.iter().zip(&dir).map(|(c, d)| c + d * s).collect() };
        let s_in = a + (b - a) * rng.random::<f64>();
        for (z, boundary) in [(at(s_in), false), (at(b), true)] {
            rep.samples += 1;
            let jet = match family.rho_jet(&t, &z, 2) {
                Ok(j) => j,
                Err(e) => {
                    rep.messages.push(e.to_string());
                    continue;
                }
            };
            let full = CMat::from_fn(d.nv(), d.nv(), |i, k| jet.d2(d.hol(i), d.anti(k)));
            rep.full_hessian_min = rep.full_hessian_min.min(linalg::min_eig(&full));
            let hzz = CMat::from_fn(d.m, d.m, |p, q| jet.d2(d.z(p), d.zb(q)));
            rep.fiber_hessian_min = rep.fiber_hessian_min.min(linalg::min_eig(&hzz));
            match geometry_fields(d, &jet) {
                Ok(g) => {
                    rep.denominator_max = rep.denominator_max.max(g.denominator);
                    rep.h0_min = rep.h0_min.min(linalg::min_eig(&h0_rho(&g)));
                    if boundary {
                        rep.boundary_grad_min = rep.boundary_grad_min.min(g.grad_fiber);
                        rep.boundary_del_rho2_min = rep.boundary_del_rho2_min.min(g.del_rho2);
                    }
                }
                Err(e) => {
                    if let Error::Denominator { value } = e {
                        rep.denominator_max = rep.denominator_max.max(value);
                    }
                    if rep.messages.len() < 8 {
                        rep.messages.push(e.to_string());
                    }
                }
            }
        }
    }
    rep
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn check_params(name: &str, params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::Config(format!("family `{name}` has no parameter `{k}`")));
        }
    }
    Ok(())
}

fn origin(m: usize) -> TMap {
    Arc::new(move |_| vec![ZERO; m])
}

fn ball_domain() -> TPred {
    Arc::new(|t| t.iter().map(|x| x.norm_sqr()).sum::<f64>() < 1.0)
}

fn polydisk_domain() -> TPred {
    Arc::new(|t| t.iter().all(|x| x.norm() < 1.0))
}

/// Names accepted by [`family_by_name`].
pub const FAMILY_NAMES: [&str; 6] = ["hartogs_ball", "product_disk", "egg", "annulus_reinhardt", "ellipse", "shifted_disk"];

/// `ρ = |t|² + |z|² - 1` over the unit ball; fibers are balls of radius `(1-|t|²)^{1/2}`.
pub fn hartogs_ball(dims: Dims) -> Family {
    let rho = ScalarFunction::analytic("hartogs_ball", dims, |v| v.t_norm2() + v.z_norm2() - 1.0);
    Family {
        name: "hartogs_ball".into(),
        dims,
        rho,
        star_center: origin(dims.m),
        bounding_radius: 1.5,
        t_domain: ball_domain(),
        t_sample_radius: 0.9,
        reinhardt: true,
        params: BTreeMap::new(),
    }
}

/// `ρ = |z|² - R²`: the same ball of radius `R` over every point of the unit polydisk.
pub fn product_disk(dims: Dims, radius: f64) -> Family {
    let r2 = radius * radius;
    let rho = ScalarFunction::analytic("product_disk", dims, move |v| v.z_norm2() - r2);
    Family {
        name: "product_disk".into(),
        dims,
        rho,
        star_center: origin(dims.m),
        bounding_radius: 1.5 * radius,
        t_domain: polydisk_domain(),
        t_sample_radius: 0.9,
        reinhardt: true,
        params: BTreeMap::from([("radius".to_string(), radius)]),
    }
}

/// `ρ = |t|² + |z|² + |z|⁴ - 1`.
pub fn egg(dims: Dims) -> Family {
    let rho = ScalarFunction::analytic("egg", dims, |v| {
        let s = v.z_norm2();
        v.t_norm2() + &s + &s * &s - 1.0
    });
    Family {
        name: "egg".into(),
        dims,
        rho,
        star_center: origin(dims.m),
        bounding_radius: 1.5,
        t_domain: ball_domain(),
        t_sample_radius: 0.9,
        reinhardt: true,
        params: BTreeMap::new(),
    }
}

/// `ρ = (|w|² - 1)(|w|² - R²)` with `w = z·exp(c Σ_j t_j)`: annuli
/// `e^{-Re(cΣt)} < |z| < R e^{-Re(cΣt)}`. Requires `1 < R² < 3` so the fibers are
/// strictly subharmonic up to the inner circle.
pub fn annulus_reinhardt(dims: Dims, c_shift: f64, outer2: f64) -> Result<Family> {
    if dims.m != 1 {
        return Err(Error::Unsupported("annulus_reinhardt is defined for m = 1".into()));
    }
    if !(outer2 > 1.0 && outer2 < 3.0) {
        return Err(Error::Config("annulus_reinhardt needs 1 < outer2 < 3".into()));
    }
    let n = dims.n;
    let rho = ScalarFunction::analytic("annulus_reinhardt", dims, move |v| {
        let sum_t = (0..n).fold(v.constant(0.0), |a, j| a + v.t(j));
        let e = (sum_t * c_shift).exp();
        let w2 = v.z_norm2() * &e * e.conj();
        (&w2 - 1.0) * (&w2 - outer2)
    });
    Ok(Family {
        name: "annulus_reinhardt".into(),
        dims,
        rho,
        star_center: origin(1),
        bounding_radius: 1.2 * outer2.sqrt() * (c_shift.abs() * n as f64).exp(),
        t_domain: polydisk_domain(),
        t_sample_radius: 0.9,
        reinhardt: true,
        params: BTreeMap::from([("c".to_string(), c_shift), ("outer2".to_string(), outer2)]),
    })
}

/// `ρ = |t|² + |z|² + a·Re(z²) + b·Re(t̄z) - 1` (n = m = 1): ellipses whose center
/// moves with `t`. Requires `|a| < 1` and `|b| < 2`.
pub fn ellipse(dims: Dims, a: f64, b: f64) -> Result<Family> {
    if dims.n != 1 || dims.m != 1 {
        return Err(Error::Unsupported("ellipse is defined for n = m = 1".into()));
    }
    if a.abs() >= 1.0 || b.abs() >= 2.0 {
        return Err(Error::Config("ellipse needs |a| < 1 and |b| < 2".into()));
    }
    let rho = ScalarFunction::analytic("ellipse", dims, move |v| {
        v.t_norm2() + v.z_norm2() + (v.z(0) * v.z(0)).re() * a + (v.tb(0) * v.z(0)).re() * b - 1.0
    });
    let center: TMap = Arc::new(move |t: &[C]| {
        vec![c(-b * t[0].re / (2.0 * (1.0 + a)), -b * t[0].im / (2.0 * (1.0 - a)))]
    });
    Ok(Family {
        name: "ellipse".into(),
        dims,
        rho,
        star_center: center,
        bounding_radius: 3.0,
        t_domain: ball_domain(),
        t_sample_radius: 0.9,
        reinhardt: false,
        params: BTreeMap::from([("a".to_string(), a), ("b".to_string(), b)]),
    })
}

/// `ρ = |z - c Σ_j t_j|² - 1` (m = 1): unit disks translated holomorphically in `t`.
pub fn shifted_disk(dims: Dims, shift: f64) -> Result<Family> {
    if dims.m != 1 {
        return Err(Error::Unsupported("shifted_disk is defined for m = 1".into()));
    }
    let n = dims.n;
    let rho = ScalarFunction::analytic("shifted_disk", dims, move |v| {
        let sum_t = (0..n).fold(v.constant(0.0), |a, j| a + v.t(j));
        let w = v.z(0) - sum_t * shift;
        w.abs2() - 1.0
    });
    let center: TMap = Arc::new(move |t: &[C]| vec![t.iter().sum::<C>() * shift]);
    Ok(Family {
        name: "shifted_disk".into(),
        dims,
        rho,
        star_center: center,
        bounding_radius: 1.5 + shift.abs() * n as f64,
        t_domain: polydisk_domain(),
        t_sample_radius: 0.9,
        reinhardt: false,
        params: BTreeMap::from([("c".to_string(), shift)]),
    })
}

/// Construct a catalog family from its identifier and parameters.
pub fn family_by_name(name: &str, dims: Dims, params: &BTreeMap<String, f64>) -> Result<Family> {
    if dims.n == 0 || dims.m == 0 || dims.n > 2 || dims.m > 2 {
        return Err(Error::Config(format!("unsupported dimensions n={}, m={}", dims.n, dims.m)));
    }
    match name {
        "hartogs_ball" => {
            check_params(name, params, &[])?;
            Ok(hartogs_ball(dims))
        }
        "product_disk" => {
            check_params(name, params, &["radius"])?;
            let r = param(params, "radius", 1.0);
            if r <= 0.0 {
                return Err(Error::Config("product_disk radius must be positive".into()));
            }
            Ok(product_disk(dims, r))
        }
        "egg" => {
            check_params(name, params, &[])?;
            Ok(egg(dims))
        }
        "annulus_reinhardt" => {
            check_params(name, params, &["c", "outer2"])?;
            annulus_reinhardt(dims, param(params, "c", 0.5), param(params, "outer2", 2.0))
        }
        "ellipse" => {
            check_params(name, params, &["a", "b"])?;
            ellipse(dims, param(params, "a", 0.3), param(params, "b", 0.5))
        }
        "shifted_disk" => {
            check_params(name, params, &["c"])?;
            shifted_disk(dims, param(params, "c", 0.5))
        }
        other => Err(Error::Unregistered(other.into())),
    }
}

/// Register the defining functions of every catalog family (default parameters) that
/// exists in dimension `dims`.
pub fn register_families(cat: &mut FunctionCatalog, dims: Dims) {
    for name in FAMILY_NAMES {
        if let Ok(f) = family_by_name(name, dims, &BTreeMap::new()) {
            cat.register_scalar(f.rho);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d11() -> Dims {
        Dims::new(1, 1)
    }

    #[test]
    fn hartogs_nu_and_del_rho() {
        let f = hartogs_ball(d11());
        let jet = f.rho_jet(&[c(0.5, 0.0)], &[c(0.6, 0.0)], 3).unwrap();
        let g = geometry_fields(d11(), &jet).unwrap();
        assert!((g.nu[(0, 0)] - c(-0.4, 0.0)).norm() < 1e-14);
        assert!((g.del_rho2 - 0.36).abs() < 1e-14);
        assert!((g.grad_fiber - 1.2).abs() < 1e-14);
        let g0 = geometry_fields(d11(), &f.rho_jet(&[ZERO], &[c(0.3, 0.2)], 3).unwrap()).unwrap();
        assert!(g0.nu[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn product_family_has_no_lift() {
        let f = product_disk(d11(), 1.0);
        let g = geometry_fields(d11(), &f.rho_jet(&[c(0.3, -0.4)], &[c(0.1, 0.5)], 3).unwrap()).unwrap();
        assert_eq!(g.nu[(0, 0)], ZERO);
        assert!(linalg::max_abs(&h0_rho(&g)) == 0.0);
    }

    #[test]
    fn hartogs_boundary_form() {
        let f = hartogs_ball(d11());
        let t = [c(0.5, 0.0)];
        let z = [c(0.75f64.sqrt(), 0.0)];
        let g = geometry_fields(d11(), &f.rho_jet(&t, &z, 3).unwrap()).unwrap();
        let h = h_rho_boundary(&g).unwrap();
        assert!((h[(0, 0)].re - 4.0 / 3.0).abs() < 1e-12);
        assert!((h0_rho(&g)[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((h_rho_direct(&g) - h).norm() < 1e-12);
    }

    #[test]
    fn degenerate_boundary_and_denominator_errors() {
        let f = hartogs_ball(d11());
        let g = geometry_fields(d11(), &f.rho_jet(&[ZERO], &[ZERO], 3).unwrap()).unwrap();
        assert!(matches!(h_rho_boundary(&g), Err(Error::BoundaryDegenerate { .. })));
        // Outside Ω with large ρ the denominator turns positive.
        let bad = ScalarFunction::analytic("bad", d11(), |v| v.z_norm2() * 0.01 + 5.0);
        let jet = bad.jet(&Point::new(vec![ZERO], vec![c(0.1, 0.0)]), 3).unwrap();
        assert!(matches!(geometry_fields(d11(), &jet), Err(Error::Denominator { .. })));
        let flat = ScalarFunction::analytic("flat", d11(), |v| v.t_norm2() - 1.0);
        let jet = flat.jet(&Point::new(vec![ZERO], vec![ZERO]), 3).unwrap();
        assert!(matches!(geometry_fields(d11(), &jet), Err(Error::NotStrictlyPsh { .. })));
    }

    #[test]
    fn rays_and_boundary_samples() {
        let f = hartogs_ball(d11());
        let t = [c(0.5, 0.0)];
        let iv = f.ray_intervals(&t, &[ZERO], &[c(0.0, 1.0)]).unwrap();
        assert_eq!(iv.len(), 1);
        assert!((iv[0].1 - 0.75f64.sqrt()).abs() < 1e-13);
        let a = annulus_reinhardt(d11(), 0.5, 2.0).unwrap();
        let iv = a.ray_intervals(&[ZERO], &[ZERO], &[c(1.0, 0.0)]).unwrap();
        assert_eq!(iv.len(), 1);
        assert!((iv[0].0 - 1.0).abs() < 1e-13 && (iv[0].1 - 2f64.sqrt()).abs() < 1e-13);
        for z in f.boundary_samples(&t, 50, 3).unwrap() {
            assert!(f.rho_value(&t, &z).unwrap().abs() < ROOT_TOL * 10.0);
        }
    }

    #[test]
    fn v_fields_vanish_on_boundary() {
        for f in [hartogs_ball(d11()), egg(d11()), ellipse(d11(), 0.3, 0.5).unwrap(), hartogs_ball(Dims::new(2, 2))] {
            let t: Vec<C> = (0..f.dims.n).map(|j| c(0.3 - 0.1 * j as f64, 0.2)).collect();
            let s = f.boundary_samples(&t, 100, 11).unwrap();
            let r = v_field_residual(&f, &t, &s).unwrap();
            assert!(r.v < 1e-9 && r.vv < 1e-9, "{}: {:?}", f.name, r);
        }
        let f = product_disk(d11(), 1.0);
        let s = f.boundary_samples(&[c(0.5, 0.0)], 20, 1).unwrap();
        let r = v_field_residual(&f, &[c(0.5, 0.0)], &s).unwrap();
        assert_eq!((r.v, r.vv), (0.0, 0.0));
        let inside = vec![vec![c(0.1, 0.0)]];
        assert!(matches!(v_field_residual(&f, &[ZERO], &inside), Err(Error::NotOnBoundary { .. })));
    }

    #[test]
    fn fiber_gradient_matches_real_fd() {
        let f = egg(d11());
        let t = [c(0.2, 0.1)];
        let z = [c(0.3, -0.4)];
        let g = geometry_fields(d11(), &f.rho_jet(&t, &z, 3).unwrap()).unwrap();
        let h = 1e-6;
        let dx = (f.rho_value(&t, &[z[0] + h]).unwrap() - f.rho_value(&t, &[z[0] - h]).unwrap()) / (2.0 * h);
        let dy = (f.rho_value(&t, &[z[0] + c(0.0, h)]).unwrap() - f.rho_value(&t, &[z[0] - c(0.0, h)]).unwrap()) / (2.0 * h);
        assert!((g.grad_fiber - (dx * dx + dy * dy).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn validation_modes() {
        let r = validate_family(&hartogs_ball(d11()), 100, 1);
        assert!(r.valid() && r.strict() && r.star_shaped, "{r:?}");
        assert!((r.full_hessian_min - 1.0).abs() < 1e-12);
        let r = validate_family(&product_disk(d11(), 1.0), 100, 1);
        assert!(r.valid() && !r.strict());
        let unbounded = Family {
            rho: ScalarFunction::analytic("tilted", d11(), |v| v.z_norm2() - 1.0 - v.t(0).re() * 1000.0),
            name: "tilted".into(),
            ..product_disk(d11(), 1.0)
        };
        let r = validate_family(&unbounded, 50, 2);
        assert!(!r.bounded && !r.valid());
        let r = validate_family(&annulus_reinhardt(d11(), 0.5, 2.0).unwrap(), 100, 1);
        assert!(r.valid() && !r.star_shaped && r.max_ray_components == 1);
    }

    #[test]
    fn catalog_lookup() {
        assert!(matches!(family_by_name("nope", d11(), &BTreeMap::new()), Err(Error::Unregistered(_))));
        let bad = BTreeMap::from([("radius".to_string(), 2.0)]);
        assert!(matches!(family_by_name("egg", d11(), &bad), Err(Error::Config(_))));
        let mut cat = FunctionCatalog::new();
        register_families(&mut cat, d11());
        let j = cat.scalar_jet("hartogs_ball", &Point::new(vec![c(0.5, 0.0)], vec![c(0.6, 0.0)])).unwrap();
        assert!((j.jet.d1(0) - c(0.5, 0.0)).norm() < 1e-15);
    }
}
