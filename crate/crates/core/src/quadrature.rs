//! Interior (Lebesgue) and boundary (surface) quadrature on the fibers `Ω_t`.
//!
//! For `m = 1` the fiber is swept by rays from the family's center: trapezoid
//! in the angle, Gauss-Legendre in the radius between ray crossings. Boundary
//! nodes are the crossings themselves with arclength weights `√(r² + r'²) dθ`,
//! `r'` by spectral differentiation. For `m = 2` Reinhardt fibers the profile
//! in `(|z₁|, |z₂|) = s(cos ψ, sin ψ)` is integrated with Gauss-Legendre in `s`
//! and `ψ` and trapezoid rules in both rotation angles.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex as FftComplex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::family::Family;
use crate::linalg::{self, gauss_legendre, C, ZERO};

/// A quadrature node with its weight.
type Node = (Vec<C>, f64);

/// Resolution tier shared by the interior and boundary rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Resolution {
    /// Trapezoid nodes per rotation angle.
    pub angular: usize,
    /// Gauss-Legendre nodes along each ray segment.
    pub radial: usize,
    /// Gauss-Legendre nodes in the profile angle `ψ` (`m = 2` only).
    pub profile: usize,
}

impl Resolution {
    pub fn new(angular: usize, radial: usize, profile: usize) -> Self {
        Resolution { angular, radial, profile }
    }

    /// Defaults: 256 x 64 for `m = 1`; 16 x 12 with 12 profile nodes for `m = 2`.
    pub fn default_for(m: usize) -> Self {
        if m == 1 {
            Resolution::new(256, 64, 16)
        } else {
            Resolution::new(16, 12, 12)
        }
    }

    fn check(&self, m: usize) -> Result<()> {
        if self.angular < 4 || self.radial < 1 || (m == 2 && self.profile < 2) {
            return Err(Error::Resolution(format!(
                "need angular >= 4, radial >= 1{}; got {:?}",
                if m == 2 { ", profile >= 2" } else { "" },
                self
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleKind {
    Interior,
    Boundary,
}

/// Weighted nodes on `Ω_t` or `∂Ω_t`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub kind: RuleKind,
    pub t: Vec<C>,
    pub nodes: Vec<Vec<C>>,
    pub weights: Vec<f64>,
    pub resolution: Resolution,
    /// Expected algebraic order of the rule for smooth integrands on smooth
    /// fibers (the angular part converges spectrally).
    pub order_estimate: u32,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    /// `Σ w_i`: volume of `Ω_t` or area of `∂Ω_t`.
    pub fn total_weight(&self) -> f64 {
        linalg::pairwise_sum_f64(&self.weights)
    }
    /// `∫ f` for a closure evaluated at the nodes.
    pub fn integrate_fn(&self, f: impl Fn(&[C]) -> C + Sync) -> C {
        let terms: Vec<C> = self.nodes.par_iter().zip(&self.weights).map(|(z, &w)| f(z) * w).collect();
        linalg::pairwise_sum(&terms)
    }
}

/// `Σ w_i f_i` with a fixed summation tree.
pub fn integrate(rule: &QuadratureRule, values: &[C]) -> Result<C> {
    if values.len() != rule.len() {
        return Err(Error::LengthMismatch { expected: rule.len(), got: values.len() });
    }
    let terms: Vec<C> = values.iter().zip(&rule.weights).map(|(f, &w)| f * w).collect();
    Ok(linalg::pairwise_sum(&terms))
}

fn check_support(family: &Family) -> Result<()> {
    match family.dims.m {
        1 => Ok(()),
        2 if family.reinhardt => Ok(()),
        2 => Err(Error::Unsupported(format!("`{}`: m = 2 quadrature needs a Reinhardt-profile fiber", family.name))),
        m => Err(Error::Unsupported(format!("fiber dimension m = {m}"))),
    }
}

fn angles(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
}

/// Quadrature for `∫_{Ω_t} f dλ`.
pub fn interior_rule(family: &Family, t: &[C], res: Resolution) -> Result<QuadratureRule> {
    check_support(family)?;
    res.check(family.dims.m)?;
    let (gx, gw) = gauss_legendre(res.radial);
    let segment = |a: f64, b: f64| -> Vec<(f64, f64)> {
        gx.iter().zip(&gw).map(|(x, w)| (0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w)).collect()
    };
    let dth = 2.0 * PI / res.angular as f64;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    if family.dims.m == 1 {
        let c0 = family.center(t);
        let per_ray: Vec<Result<Vec<Node>>> = angles(res.angular)
            .par_iter()
            .map(|&th| {
                let dir = [C::from_polar(1.0, th)];
                let mut out = Vec::new();
                for (a, b) in family.ray_intervals(t, &c0, &dir)? {
                    for (s, w) in segment(a, b) {
                        out.push((vec![c0[0] + dir[0] * s], w * s * dth));
                    }
                }
                Ok(out)
            })
            .collect();
        for ray in per_ray {
            for (z, w) in ray? {
                nodes.push(z);
                weights.push(w);
            }
        }
    } else {
        let (px, pw) = gauss_legendre(res.profile);
        let profile: Vec<Result<Vec<(f64, f64, f64)>>> = px
            .par_iter()
            .zip(&pw)
            .map(|(x, w)| {
                let psi = 0.25 * PI * (1.0 + x);
                let wpsi = 0.25 * PI * w;
                let dir = [C::from(psi.cos()), C::from(psi.sin())];
                let mut out = Vec::new();
                for (a, b) in family.ray_intervals(t, &[ZERO, ZERO], &dir)? {
                    for (s, ws) in segment(a, b) {
                        out.push((s * psi.cos(), s * psi.sin(), ws * wpsi * s.powi(3) * psi.cos() * psi.sin()));
                    }
                }
                Ok(out)
            })
            .collect();
        let th = angles(res.angular);
        for pts in profile {
            for (r1, r2, w) in pts? {
                for &a1 in &th {
                    for &a2 in &th {
                        nodes.push(vec![C::from_polar(r1, a1), C::from_polar(r2, a2)]);
                        weights.push(w * dth * dth);
                    }
                }
            }
        }
    }
    if nodes.is_empty() {
        return Err(Error::Resolution("empty interior rule (empty fiber?)".into()));
    }
    Ok(QuadratureRule { kind: RuleKind::Interior, t: t.to_vec(), nodes, weights, resolution: res, order_estimate: 2 * res.radial as u32 })
}

/// Spectral derivative of periodic samples on a uniform grid over `[0, 2π)`.
pub fn spectral_derivative(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<FftComplex<f64>> = samples.iter().map(|&x| FftComplex::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let freq = if 2 * k < n {
            k as f64
        } else if 2 * k == n {
            0.0
        } else {
            k as f64 - n as f64
        };
        *v *= FftComplex::new(0.0, freq);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|v| v.re / n as f64).collect()
}

/// Ray crossings (excluding the center) along one direction.
fn crossings(family: &Family, t: &[C], center: &[C], dir: &[C]) -> Result<Vec<f64>> {
    Ok(family
        .ray_intervals(t, center, dir)?
        .into_iter()
        .flat_map(|(a, b)| [a, b])
        .filter(|&s| s > 0.0)
        .collect())
}

/// Quadrature for `∫_{∂Ω_t} f dS`.
pub fn boundary_rule(family: &Family, t: &[C], res: Resolution) -> Result<QuadratureRule> {
    check_support(family)?;
    res.check(family.dims.m)?;
    let dth = 2.0 * PI / res.angular as f64;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    if family.dims.m == 1 {
        let c0 = family.center(t);
        let th = angles(res.angular);
        let radii: Vec<Result<Vec<f64>>> =
            th.par_iter().map(|&a| crossings(family, t, &c0, &[C::from_polar(1.0, a)])).collect();
        let radii: Vec<Vec<f64>> = radii.into_iter().collect::<Result<_>>()?;
        let curves = radii[0].len();
        if radii.iter().any(|r| r.len() != curves) {
            return Err(Error::Unsupported("boundary crossing count varies with the angle".into()));
        }
        for curve in 0..curves {
            let r: Vec<f64> = radii.iter().map(|v| v[curve]).collect();
            let dr = spectral_derivative(&r);
            for k in 0..res.angular {
                nodes.push(vec![c0[0] + C::from_polar(r[k], th[k])]);
                weights.push((r[k] * r[k] + dr[k] * dr[k]).sqrt() * dth);
            }
        }
    } else {
        let d = family.dims;
        let (px, pw) = gauss_legendre(res.profile);
        let profile: Vec<Result<Vec<(f64, f64, f64)>>> = px
            .par_iter()
            .zip(&pw)
            .map(|(x, w)| {
                let psi = 0.25 * PI * (1.0 + x);
                let wpsi = 0.25 * PI * w;
                let (cs, sn) = (psi.cos(), psi.sin());
                let mut out = Vec::new();
                for s in crossings(family, t, &[ZERO, ZERO], &[C::from(cs), C::from(sn)])? {
                    // S'(ψ) by implicit differentiation of ρ(S cos ψ, S sin ψ) = 0.
                    let (r1, r2) = (s * cs, s * sn);
                    let jet = family.rho_jet(t, &[C::from(r1), C::from(r2)], 1)?;
                    let gx1 = 2.0 * jet.d1(d.z(0)).re;
                    let gx2 = 2.0 * jet.d1(d.z(1)).re;
                    let g_s = gx1 * cs + gx2 * sn;
                    let g_psi = s * (-gx1 * sn + gx2 * cs);
                    if g_s.abs() < 1e-14 {
                        return Err(Error::BoundaryDegenerate { value: g_s.abs() });
                    }
                    let ds = -g_psi / g_s;
                    out.push((r1, r2, wpsi * r1 * r2 * (s * s + ds * ds).sqrt()));
                }
                Ok(out)
            })
            .collect();
        let th = angles(res.angular);
        for pts in profile {
            for (r1, r2, w) in pts? {
                for &a1 in &th {
                    for &a2 in &th {
                        nodes.push(vec![C::from_polar(r1, a1), C::from_polar(r2, a2)]);
                        weights.push(w * dth * dth);
                    }
                }
            }
        }
    }
    if nodes.is_empty() {
        return Err(Error::Resolution("empty boundary rule".into()));
    }
    Ok(QuadratureRule { kind: RuleKind::Boundary, t: t.to_vec(), nodes, weights, resolution: res, order_estimate: res.angular as u32 })
}
