//! Hermitian metrics `h^F` on the trivial bundle `F = Ω × C^r`: Chern
//! connection coefficients, the curvature tensor over all `n + m` directions,
//! its `ν`-contraction `H(h^F)` and the pointwise Nakano test.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::family::GeometryFields;
use crate::jets::{Dims, FunctionCatalog, Jet, MatrixFunction, MatrixJet2, Point, Vars};
use crate::linalg::{self, CMat, C};

/// A named metric on `F` with its parameters.
#[derive(Clone)]
pub struct Metric {
    pub name: String,
    pub func: MatrixFunction,
    pub params: BTreeMap<String, f64>,
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Metric({}, r={}, {:?})", self.name, self.func.r, self.params)
    }
}

impl Metric {
    pub fn r(&self) -> usize {
        self.func.r
    }
    pub fn dims(&self) -> Dims {
        self.func.dims
    }
    pub fn value(&self, t: &[C], z: &[C]) -> Result<CMat> {
        self.func.value(&Point::new(t.to_vec(), z.to_vec()))
    }
    pub fn jet(&self, t: &[C], z: &[C]) -> Result<MatrixJet2> {
        self.func.jet(&Point::new(t.to_vec(), z.to_vec()))
    }
    /// True when the metric does not depend on the point.
    pub fn is_flat(&self) -> bool {
        self.name == "flat"
    }
}

/// Names accepted by [`metric_by_name`].
pub const METRIC_NAMES: [&str; 4] = ["flat", "gaussian_weight", "diag_weights", "reinhardt_invariant"];

/// `φ = α|z|² + β|t|² + γ·Re(Σ_j t̄_j Σ_p z_p)`.
fn weight_phi(v: &Vars, alpha: f64, beta: f64, gamma: f64) -> Jet {
    let mut phi = v.z_norm2() * alpha + v.t_norm2() * beta;
    if gamma != 0.0 {
        let st = (0..v.dims.n).fold(v.constant(0.0), |a, j| a + v.tb(j));
        let sz = (0..v.dims.m).fold(v.constant(0.0), |a, p| a + v.z(p));
        phi = phi + (st * sz).re() * gamma;
    }
    phi
}

/// `h^F = I_r`.
pub fn flat(dims: Dims, r: usize) -> Metric {
    let func = MatrixFunction::analytic("flat", dims, r, move |v| {
        (0..r * r).map(|i| v.constant(if i / r == i % r { 1.0 } else { 0.0 })).collect()
    });
    Metric { name: "flat".into(), func, params: BTreeMap::new() }
}

/// `h^F = e^{-φ} I_r` for an arbitrary real weight `φ` given as a jet closure.
pub fn scalar_weight(name: &str, dims: Dims, r: usize, phi: impl Fn(&Vars) -> Jet + Send + Sync + 'static) -> Metric {
    let func = MatrixFunction::analytic(name, dims, r, move |v| {
        let w = (-phi(v)).exp();
        let zero = v.constant(0.0);
        (0..r * r).map(|i| if i / r == i % r { w.clone() } else { zero.clone() }).collect()
    });
    Metric { name: name.into(), func, params: BTreeMap::new() }
}

/// `h^F = e^{-φ} I_r` with `φ = α|z|² + β|t|² + γ Re(t̄ z)`.
pub fn gaussian_weight(dims: Dims, r: usize, alpha: f64, beta: f64, gamma: f64) -> Metric {
    let mut m = scalar_weight("gaussian_weight", dims, r, move |v| weight_phi(v, alpha, beta, gamma));
    m.params = BTreeMap::from([("alpha".into(), alpha), ("beta".into(), beta), ("gamma".into(), gamma)]);
    m
}

/// `h^F = diag(e^{-φ}, e^{-2φ})`.
pub fn diag_weights(dims: Dims, alpha: f64, beta: f64, gamma: f64) -> Metric {
    let func = MatrixFunction::analytic("diag_weights", dims, 2, move |v| {
        let phi = weight_phi(v, alpha, beta, gamma);
        let w1 = (-&phi).exp();
        let w2 = (phi * -2.0).exp();
        let z = v.constant(0.0);
        vec![w1, z.clone(), z, w2]
    });
    Metric {
        name: "diag_weights".into(),
        func,
        params: BTreeMap::from([("alpha".into(), alpha), ("beta".into(), beta), ("gamma".into(), gamma)]),
    }
}

/// `h^F = e^{-φ} [[1 + |z|², κ], [κ, 1 + 2|z|²]]`, invariant under the torus action on `z`.
pub fn reinhardt_invariant(dims: Dims, alpha: f64, beta: f64, kappa: f64) -> Result<Metric> {
    if kappa.abs() >= 1.0 {
        return Err(Error::Config("reinhardt_invariant needs |kappa| < 1".into()));
    }
    let func = MatrixFunction::analytic("reinhardt_invariant", dims, 2, move |v| {
        let w = (-weight_phi(v, alpha, beta, 0.0)).exp();
        let s = v.z_norm2();
        vec![&w * (&s + 1.0), &w * kappa, &w * kappa, &w * (s * 2.0 + 1.0)]
    });
    Ok(Metric {
        name: "reinhardt_invariant".into(),
        func,
        params: BTreeMap::from([("alpha".into(), alpha), ("beta".into(), beta), ("kappa".into(), kappa)]),
    })
}

fn check_params(name: &str, params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::Config(format!("metric `{name}` has no parameter `{k}`"))),
        None => Ok(()),
    }
}

/// Construct a catalog metric from its identifier, rank and parameters.
pub fn metric_by_name(name: &str, dims: Dims, r: usize, params: &BTreeMap<String, f64>) -> Result<Metric> {
    let p = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
    if r == 0 {
        return Err(Error::Config("metric rank must be at least 1".into()));
    }
    let need_r2 = |r: usize| {
        if r == 2 {
            Ok(())
        } else {
            Err(Error::Config(format!("metric `{name}` has rank 2, config says r = {r}")))
        }
    };
    match name {
        "flat" => {
            check_params(name, params, &[])?;
            Ok(flat(dims, r))
        }
        "gaussian_weight" => {
            check_params(name, params, &["alpha", "beta", "gamma"])?;
            Ok(gaussian_weight(dims, r, p("alpha", 1.0), p("beta", 1.0), p("gamma", 0.0)))
        }
        "diag_weights" => {
            check_params(name, params, &["alpha", "beta", "gamma"])?;
            need_r2(r)?;
            Ok(diag_weights(dims, p("alpha", 1.0), p("beta", 1.0), p("gamma", 0.0)))
        }
        "reinhardt_invariant" => {
            check_params(name, params, &["alpha", "beta", "kappa"])?;
            need_r2(r)?;
            reinhardt_invariant(dims, p("alpha", 1.0), p("beta", 1.0), p("kappa", 0.3))
        }
        other => Err(Error::Unregistered(other.into())),
    }
}

/// Register every catalog metric (default parameters, `r = 1` where allowed).
pub fn register_metrics(cat: &mut FunctionCatalog, dims: Dims) {
    for name in METRIC_NAMES {
        let r = if name == "diag_weights" || name == "reinhardt_invariant" { 2 } else { 1 };
        if let Ok(m) = metric_by_name(name, dims, r, &BTreeMap::new()) {
            cat.register_matrix(m.func);
        }
    }
}

/// `Γ_J = (∂_J H) H⁻¹` for every holomorphic direction `J` (t's first, then z's), so
/// that `(∂_J H)_{λμ̄} = Σ_γ Γ_{Jλ}^γ H_{γμ̄}`.
pub fn connection_coeffs(mj: &MatrixJet2) -> Result<Vec<CMat>> {
    let d = mj.dims();
    let hinv = linalg::inverse(&mj.value(), "metric value")?;
    Ok((0..d.nv()).map(|j| mj.deriv(&[d.hol(j)]) * &hinv).collect())
}

/// Curvature tensor `A_{JKλμ}` of `h^F` over all `n + m` directions.
#[derive(Clone, Debug)]
pub struct CurvatureBlocks {
    pub dims: Dims,
    pub r: usize,
    /// `A_{JK}` as an `r x r` matrix at index `J*(n+m) + K`.
    pub a: Vec<CMat>,
    /// `max |A_{JK} - A_{KJ}^*|` before symmetrization.
    pub hermitian_residual: f64,
}

impl CurvatureBlocks {
    pub fn get(&self, j: usize, k: usize) -> &CMat {
        &self.a[j * self.dims.nv() + k]
    }
    /// Base-base block `A_{jk}`.
    pub fn tt(&self, j: usize, k: usize) -> &CMat {
        self.get(j, k)
    }
    /// Mixed block `A_{jq}`.
    pub fn tz(&self, j: usize, q: usize) -> &CMat {
        self.get(j, self.dims.n + q)
    }
    /// Mixed block `A_{pk}`.
    pub fn zt(&self, p: usize, k: usize) -> &CMat {
        self.get(self.dims.n + p, k)
    }
    /// Fiber-fiber block `A_{pq}`.
    pub fn zz(&self, p: usize, q: usize) -> &CMat {
        self.get(self.dims.n + p, self.dims.n + q)
    }

    /// `M_{(J,λ),(K,μ)} = A_{JKλμ}` restricted to the given directions.
    pub fn matrix_over(&self, dirs: &[usize]) -> CMat {
        let r = self.r;
        CMat::from_fn(dirs.len() * r, dirs.len() * r, |a, b| self.get(dirs[a / r], dirs[b / r])[(a % r, b % r)])
    }

    /// Full `(n+m)r` square form.
    pub fn full_matrix(&self) -> CMat {
        self.matrix_over(&(0..self.dims.nv()).collect::<Vec<_>>())
    }

    /// Fiber-fiber `m r` square form.
    pub fn fiber_matrix(&self) -> CMat {
        let n = self.dims.n;
        self.matrix_over(&(n..self.dims.nv()).collect::<Vec<_>>())
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().map(linalg::max_abs).fold(0.0, f64::max)
    }
}

/// `A_{JK} = -(H_{JK̄} - H_J H⁻¹ H_{K̄})`, i.e. `A_{JKλ}^α = -∂_{K̄}Γ_{Jλ}^α` lowered with `h^F`.
pub fn curvature_blocks(mj: &MatrixJet2) -> Result<CurvatureBlocks> {
    let d = mj.dims();
    let nv = d.nv();
    let hinv = linalg::inverse(&mj.value(), "metric value")?;
    let hj: Vec<CMat> = (0..nv).map(|j| mj.deriv(&[d.hol(j)])).collect();
    let hk: Vec<CMat> = (0..nv).map(|k| mj.deriv(&[d.anti(k)])).collect();
    let mut a = Vec::with_capacity(nv * nv);
    for j in 0..nv {
        for k in 0..nv {
            let hjk = mj.deriv(&[d.hol(j), d.anti(k)]);
            a.push(-(hjk - &hj[j] * &hinv * &hk[k]));
        }
    }
    let mut res: f64 = 0.0;
    for j in 0..nv {
        for k in 0..nv {
            res = res.max(linalg::max_abs(&(&a[j * nv + k] - a[k * nv + j].adjoint())));
        }
    }
    // Enforce A_{JK} = A_{KJ}^* exactly.
    let sym: Vec<CMat> = (0..nv * nv)
        .map(|i| {
            let (j, k) = (i / nv, i % nv);
            (&a[i] + a[k * nv + j].adjoint()) * C::from(0.5)
        })
        .collect();
    Ok(CurvatureBlocks { dims: d, r: mj.r, a: sym, hermitian_residual: res })
}

/// `H(h^F)_{jk} = A_{jk} + Σ_p ν_j^p A_{pk} + Σ_q ν̄_k^q A_{jq} + Σ_{p,q} ν_j^p ν̄_k^q A_{pq}`,
/// returned at index `j*n + k`.
pub fn assemble_h_hf(blocks: &CurvatureBlocks, g: &GeometryFields) -> Result<Vec<CMat>> {
    let d = blocks.dims;
    if g.dims != d {
        return Err(Error::Dimension("metric blocks and geometry fields disagree".into()));
    }
    let (n, m) = (d.n, d.m);
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in 0..n {
            let mut h = blocks.tt(j, k).clone();
            for p in 0..m {
                h += blocks.zt(p, k) * g.nu[(j, p)];
                h += blocks.tz(j, p) * g.nu[(k, p)].conj();
                for q in 0..m {
                    h += blocks.zz(p, q) * (g.nu[(j, p)] * g.nu[(k, q)].conj());
                }
            }
            out.push(h);
        }
    }
    Ok(out)
}

/// Minimum eigenvalue of the `(n+m)r` form `A_{JKλμ}`: `≥ 0` Nakano positive, `> 0` strictly.
pub fn nakano_test_f(blocks: &CurvatureBlocks) -> f64 {
    linalg::min_eig(&blocks.full_matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{geometry_fields, hartogs_ball};
    use crate::linalg::c;

    fn d11() -> Dims {
        Dims::new(1, 1)
    }
    fn at(t: f64, z: f64) -> (Vec<C>, Vec<C>) {
        (vec![c(t, 0.0)], vec![c(z, 0.0)])
    }

    #[test]
    fn scalar_connection_is_minus_dphi() {
        let m = gaussian_weight(d11(), 1, 1.0, 1.0, 0.0);
        let (t, z) = (vec![c(0.2, 0.3)], vec![c(-0.4, 0.1)]);
        let g = connection_coeffs(&m.jet(&t, &z).unwrap()).unwrap();
        // φ_t = t̄, φ_z = z̄.
        assert!((g[0][(0, 0)] + t[0].conj()).norm() < 1e-14);
        assert!((g[1][(0, 0)] + z[0].conj()).norm() < 1e-14);
        let f = flat(d11(), 2);
        assert!(connection_coeffs(&f.jet(&t, &z).unwrap()).unwrap().iter().all(|x| x.norm() == 0.0));
        let dw = diag_weights(d11(), 1.0, 1.0, 0.0);
        let g = connection_coeffs(&dw.jet(&t, &z).unwrap()).unwrap();
        assert!((g[1][(0, 0)] + z[0].conj()).norm() < 1e-14);
        assert!((g[1][(1, 1)] + 2.0 * z[0].conj()).norm() < 1e-14);
        assert!(g[1][(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn curvature_of_scalar_weight() {
        let m = gaussian_weight(d11(), 1, 1.0, 1.0, 0.0);
        let (t, z) = at(0.0, 0.0);
        let b = curvature_blocks(&m.jet(&t, &z).unwrap()).unwrap();
        assert!((b.tt(0, 0)[(0, 0)] - 1.0).norm() < 1e-14);
        assert!((b.zz(0, 0)[(0, 0)] - 1.0).norm() < 1e-14);
        assert!(b.tz(0, 0).norm() < 1e-15);
        assert!((nakano_test_f(&b) - 1.0).abs() < 1e-14);
        let fb = curvature_blocks(&flat(d11(), 3).jet(&t, &z).unwrap()).unwrap();
        assert_eq!(fb.max_abs(), 0.0);
        assert_eq!(nakano_test_f(&fb), 0.0);
        let g2 = gaussian_weight(d11(), 2, 1.0, 0.0, 0.0);
        let b2 = curvature_blocks(&g2.jet(&t, &z).unwrap()).unwrap();
        assert!((b2.zz(0, 0) - CMat::identity(2, 2)).norm() < 1e-14);
        assert!(nakano_test_f(&b2).abs() < 1e-14);
    }

    #[test]
    fn blocks_match_scalar_closed_form_off_origin() {
        let m = gaussian_weight(d11(), 2, 0.7, 1.3, 0.4);
        let (t, z) = (vec![c(0.3, -0.2)], vec![c(0.1, 0.5)]);
        let b = curvature_blocks(&m.jet(&t, &z).unwrap()).unwrap();
        // φ = 0.7|z|² + 1.3|t|² + 0.4 Re(t̄ z): φ_{tt̄}=1.3, φ_{zz̄}=0.7, φ_{tz̄}=φ_{zt̄}=0.2.
        let phi = 0.7 * z[0].norm_sqr() + 1.3 * t[0].norm_sqr() + 0.4 * (t[0].conj() * z[0]).re;
        let w = (-phi).exp();
        let expect = [[1.3, 0.2], [0.2, 0.7]];
        for (j, row) in expect.iter().enumerate() {
            for (k, &e) in row.iter().enumerate() {
                assert!((b.get(j, k) - CMat::identity(2, 2) * C::from(e * w)).norm() < 1e-12, "{j}{k}");
            }
        }
        assert!(b.hermitian_residual < 1e-12);
    }

    #[test]
    fn reinhardt_metric_is_hermitian_and_positive() {
        let m = reinhardt_invariant(Dims::new(1, 2), 1.0, 1.0, 0.3).unwrap();
        let (t, z) = (vec![c(0.1, 0.2)], vec![c(0.3, 0.1), c(-0.2, 0.4)]);
        let mj = m.jet(&t, &z).unwrap();
        let b = curvature_blocks(&mj).unwrap();
        assert!(b.hermitian_residual < 1e-12);
        assert!(linalg::min_eig(&mj.value()) > 0.0);
        assert!(matches!(reinhardt_invariant(d11(), 1.0, 1.0, 1.5), Err(Error::Config(_))));
    }

    #[test]
    fn contracted_tensor() {
        let m = gaussian_weight(d11(), 1, 1.0, 1.0, 0.0);
        let (t, z) = at(0.5, 0.6);
        let b = curvature_blocks(&m.jet(&t, &z).unwrap()).unwrap();
        let g = geometry_fields(d11(), &hartogs_ball(d11()).rho_jet(&t, &z, 3).unwrap()).unwrap();
        let h = assemble_h_hf(&b, &g).unwrap();
        let w = (-(0.25f64 + 0.36)).exp();
        assert!((h[0][(0, 0)] - 1.16 * w).norm() < 1e-13);
        let fb = curvature_blocks(&flat(d11(), 1).jet(&t, &z).unwrap()).unwrap();
        assert_eq!(assemble_h_hf(&fb, &g).unwrap()[0].norm(), 0.0);
    }

    #[test]
    fn catalog() {
        let none = BTreeMap::new();
        assert!(matches!(metric_by_name("diag_weights", d11(), 1, &none), Err(Error::Config(_))));
        assert!(matches!(metric_by_name("nope", d11(), 1, &none), Err(Error::Unregistered(_))));
        let mut cat = FunctionCatalog::new();
        register_metrics(&mut cat, d11());
        assert_eq!(cat.matrix_names().len(), 4);
        let p = Point::new(vec![c(0.0, 0.0)], vec![c(0.6, 0.0)]);
        let g = metric_by_name("gaussian_weight", d11(), 1, &BTreeMap::from([("beta".into(), 0.0)])).unwrap();
        assert!((g.func.value(&p).unwrap()[(0, 0)].re - (-0.36f64).exp()).abs() < 1e-15);
        assert!(cat.matrix_jet("flat", &p).is_ok());
    }
}
