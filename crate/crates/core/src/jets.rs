//! Wirtinger jets of scalar and matrix-valued functions of `(t, z)`.
//!
//! A [`Jet`] stores a value together with every Wirtinger partial up to a
//! fixed order (at most 3) as dense symmetric tensors over the `2(n+m)`
//! directions `t_1..t_n, z_1..z_m, t̄_1..t̄_n, z̄_1..z̄_m`. Direction indices are
//! produced by [`Dims`]. Jets compose by truncated Taylor arithmetic, so model
//! functions are written once as closures over [`Vars`] and yield exact
//! derivatives. A finite-difference route ([`fd_jets`]) serves sampled
//! functions and cross-checks the analytic route.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C, ZERO};

/// Dimensions of the base (`n`) and fiber (`m`) and the direction numbering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize) -> Self {
        Dims { n, m }
    }
    /// Number of complex variables.
    pub fn nv(&self) -> usize {
        self.n + self.m
    }
    /// Number of Wirtinger directions.
    pub fn k(&self) -> usize {
        2 * self.nv()
    }
    pub fn t(&self, j: usize) -> usize {
        j
    }
    pub fn tb(&self, j: usize) -> usize {
        self.nv() + j
    }
    pub fn z(&self, p: usize) -> usize {
        self.n + p
    }
    pub fn zb(&self, p: usize) -> usize {
        self.nv() + self.n + p
    }
    /// Holomorphic direction of complex variable `i` (`t` first, then `z`).
    pub fn hol(&self, i: usize) -> usize {
        i
    }
    pub fn anti(&self, i: usize) -> usize {
        self.nv() + i
    }
    /// Direction of the conjugate derivative.
    pub fn bar(&self, a: usize) -> usize {
        let nv = self.nv();
        if a < nv {
            a + nv
        } else {
            a - nv
        }
    }
}

/// A point `(t, z)` of `C^n x C^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub t: Vec<C>,
    pub z: Vec<C>,
}

impl Point {
    pub fn new(t: Vec<C>, z: Vec<C>) -> Self {
        Point { t, z }
    }
    pub fn dims(&self) -> Dims {
        Dims::new(self.t.len(), self.z.len())
    }
    /// Complex coordinate `i`, numbering `t` before `z`.
    pub fn coord(&self, i: usize) -> C {
        if i < self.t.len() {
            self.t[i]
        } else {
            self.z[i - self.t.len()]
        }
    }
    pub fn coord_mut(&mut self, i: usize) -> &mut C {
        let n = self.t.len();
        if i < n {
            &mut self.t[i]
        } else {
            &mut self.z[i - n]
        }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: &[C]| {
            v.iter()
                .map(|c| format!("{:+.6}{:+.6}i", c.re, c.im))
                .collect::<Vec<_>>()
                .join(", ")
        };
        write!(f, "(t=[{}], z=[{}])", show(&self.t), show(&self.z))
    }
}

/// Truncated Wirtinger Taylor data of a function at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    dims: Dims,
    order: usize,
    v: C,
    d1: Vec<C>,
    d2: Vec<C>,
    d3: Vec<C>,
}

impl Jet {
    pub fn constant(dims: Dims, order: usize, v: C) -> Self {
        assert!(order <= 3, "jets carry at most third derivatives");
        let k = dims.k();
        let len = |o: usize| if order >= o { k.pow(o as u32) } else { 0 };
        Jet { dims, order, v, d1: vec![ZERO; len(1)], d2: vec![ZERO; len(2)], d3: vec![ZERO; len(3)] }
    }

    /// The coordinate function whose derivative along `dir` is one.
    pub fn variable(dims: Dims, order: usize, v: C, dir: usize) -> Self {
        let mut j = Jet::constant(dims, order, v);
        if order >= 1 {
            j.d1[dir] = C::from(1.0);
        }
        j
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn value(&self) -> C {
        self.v
    }
    pub fn d1(&self, a: usize) -> C {
        self.d1[a]
    }
    pub fn d2(&self, a: usize, b: usize) -> C {
        self.d2[a * self.dims.k() + b]
    }
    pub fn d3(&self, a: usize, b: usize, c: usize) -> C {
        let k = self.dims.k();
        self.d3[(a * k + b) * k + c]
    }
    /// Derivative along the multi-direction `dirs` (length up to the order).
    pub fn d(&self, dirs: &[usize]) -> C {
        match dirs {
            [] => self.v,
            [a] => self.d1(*a),
            [a, b] => self.d2(*a, *b),
            [a, b, c] => self.d3(*a, *b, *c),
            _ => panic!("derivative order above 3"),
        }
    }

    pub fn set_value(&mut self, v: C) {
        self.v = v;
    }
    fn set2(&mut self, a: usize, b: usize, x: C) {
        let k = self.dims.k();
        self.d2[a * k + b] = x;
    }
    fn set3(&mut self, a: usize, b: usize, c: usize, x: C) {
        let k = self.dims.k();
        self.d3[(a * k + b) * k + c] = x;
    }

    /// Drop derivatives above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order {
            return self.clone();
        }
        let mut j = Jet::constant(self.dims, order, self.v);
        if order >= 1 {
            j.d1.copy_from_slice(&self.d1);
        }
        if order >= 2 {
            j.d2.copy_from_slice(&self.d2);
        }
        j
    }

    /// The jet of `∂_dir f`, one order lower.
    pub fn shift(&self, dir: usize) -> Jet {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let k = self.dims.k();
        let mut j = Jet::constant(self.dims, self.order - 1, self.d1[dir]);
        if self.order >= 2 {
            j.d1.copy_from_slice(&self.d2[dir * k..(dir + 1) * k]);
        }
        if self.order >= 3 {
            j.d2.copy_from_slice(&self.d3[dir * k * k..(dir + 1) * k * k]);
        }
        j
    }

    /// Jet of the complex conjugate function.
    pub fn conj(&self) -> Jet {
        let d = self.dims;
        let k = d.k();
        let mut j = Jet::constant(d, self.order, self.v.conj());
        for a in 0..j.d1.len() {
            j.d1[a] = self.d1[d.bar(a)].conj();
        }
        if self.order >= 2 {
            for a in 0..k {
                for b in 0..k {
                    j.set2(a, b, self.d2(d.bar(a), d.bar(b)).conj());
                }
            }
        }
        if self.order >= 3 {
            for a in 0..k {
                for b in 0..k {
                    for c in 0..k {
                        j.set3(a, b, c, self.d3(d.bar(a), d.bar(b), d.bar(c)).conj());
                    }
                }
            }
        }
        j
    }

    /// Real part, `(f + conj f)/2`.
    pub fn re(&self) -> Jet {
        (self + &self.conj()).scale(C::from(0.5))
    }

    /// `|f|^2 = f * conj(f)`.
    pub fn abs2(&self) -> Jet {
        self * &self.conj()
    }

    pub fn scale(&self, s: C) -> Jet {
        let mut j = self.clone();
        j.v *= s;
        j.d1.iter_mut().chain(j.d2.iter_mut()).chain(j.d3.iter_mut()).for_each(|x| *x *= s);
        j
    }

    pub fn add_const(&self, s: C) -> Jet {
        let mut j = self.clone();
        j.v += s;
        j
    }

    /// `g(f)` for a univariate `g` given its derivatives `[g, g', g'', g''']` at `f`'s value.
    pub fn compose(&self, g: [C; 4]) -> Jet {
        let k = self.dims.k();
        let mut j = Jet::constant(self.dims, self.order, g[0]);
        for a in 0..j.d1.len() {
            j.d1[a] = g[1] * self.d1[a];
        }
        if self.order >= 2 {
            for a in 0..k {
                for b in 0..k {
                    j.set2(a, b, g[2] * self.d1[a] * self.d1[b] + g[1] * self.d2(a, b));
                }
            }
        }
        if self.order >= 3 {
            for a in 0..k {
                for b in 0..k {
                    for c in 0..k {
                        let (ua, ub, uc) = (self.d1[a], self.d1[b], self.d1[c]);
                        let x = g[3] * ua * ub * uc
                            + g[2] * (self.d2(a, b) * uc + self.d2(a, c) * ub + self.d2(b, c) * ua)
                            + g[1] * self.d3(a, b, c);
                        j.set3(a, b, c, x);
                    }
                }
            }
        }
        j
    }

    pub fn exp(&self) -> Jet {
        let e = self.v.exp();
        self.compose([e; 4])
    }

    pub fn ln(&self) -> Jet {
        let x = self.v;
        let r = x.inv();
        self.compose([x.ln(), r, -r * r, 2.0 * r * r * r])
    }

    pub fn recip(&self) -> Jet {
        let r = self.v.inv();
        self.compose([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    pub fn sqrt(&self) -> Jet {
        let s = self.v.sqrt();
        let r = s.inv();
        let x = self.v.inv();
        self.compose([s, 0.5 * r, -0.25 * r * x, 0.375 * r * x * x])
    }

    pub fn powi(&self, p: i32) -> Jet {
        let x = self.v;
        let pf = p as f64;
        let pw = |e: i32| if e < 0 && x == ZERO { ZERO } else { x.powi(e) };
        self.compose([
            pw(p),
            pf * pw(p - 1),
            pf * (pf - 1.0) * pw(p - 2),
            pf * (pf - 1.0) * (pf - 2.0) * pw(p - 3),
        ])
    }

    pub fn div(&self, other: &Jet) -> Jet {
        self * &other.recip()
    }

    fn zip(&self, o: &Jet, f: impl Fn(C, C) -> C) -> Jet {
        assert_eq!(self.dims, o.dims, "jets over different variables");
        let order = self.order.min(o.order);
        let mut j = Jet::constant(self.dims, order, f(self.v, o.v));
        for (i, x) in j.d1.iter_mut().enumerate() {
            *x = f(self.d1[i], o.d1[i]);
        }
        for (i, x) in j.d2.iter_mut().enumerate() {
            *x = f(self.d2[i], o.d2[i]);
        }
        for (i, x) in j.d3.iter_mut().enumerate() {
            *x = f(self.d3[i], o.d3[i]);
        }
        j
    }

    fn product(&self, o: &Jet) -> Jet {
        assert_eq!(self.dims, o.dims, "jets over different variables");
        let k = self.dims.k();
        let order = self.order.min(o.order);
        let (u, v) = (self, o);
        let mut j = Jet::constant(self.dims, order, u.v * v.v);
        for a in 0..j.d1.len() {
            j.d1[a] = u.d1[a] * v.v + u.v * v.d1[a];
        }
        if order >= 2 {
            for a in 0..k {
                for b in 0..k {
                    let x = u.d2(a, b) * v.v + u.d1[a] * v.d1[b] + u.d1[b] * v.d1[a] + u.v * v.d2(a, b);
                    j.set2(a, b, x);
                }
            }
        }
        if order >= 3 {
            for a in 0..k {
                for b in 0..k {
                    for c in 0..k {
                        let x = u.d3(a, b, c) * v.v
                            + u.d2(a, b) * v.d1[c]
                            + u.d2(a, c) * v.d1[b]
                            + u.d2(b, c) * v.d1[a]
                            + u.d1[a] * v.d2(b, c)
                            + u.d1[b] * v.d2(a, c)
                            + u.d1[c] * v.d2(a, b)
                            + u.v * v.d3(a, b, c);
                        j.set3(a, b, c, x);
                    }
                }
            }
        }
        j
    }

    /// Largest deviation between the stored derivatives of two jets (common order).
    pub fn max_diff(&self, o: &Jet) -> f64 {
        let d = self - o;
        std::iter::once(&d.v)
            .chain(&d.d1)
            .chain(&d.d2)
            .chain(&d.d3)
            .map(|x| x.norm())
            .fold(0.0, f64::max)
    }
}

macro_rules! jet_binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl $tr<&Jet> for &Jet {
            type Output = Jet;
            fn $m(self, o: &Jet) -> Jet {
                $body(self, o)
            }
        }
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, o: Jet) -> Jet {
                $body(&self, &o)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, o: &Jet) -> Jet {
                $body(&self, o)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, o: Jet) -> Jet {
                $body(self, &o)
            }
        }
    };
}

jet_binop!(Add, add, |a: &Jet, b: &Jet| a.zip(b, |x, y| x + y));
jet_binop!(Sub, sub, |a: &Jet, b: &Jet| a.zip(b, |x, y| x - y));
jet_binop!(Mul, mul, |a: &Jet, b: &Jet| a.product(b));

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(C::from(-1.0))
    }
}
impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(C::from(-1.0))
    }
}

macro_rules! jet_scalar {
    ($s:ty, $conv:expr) => {
        impl Add<$s> for &Jet {
            type Output = Jet;
            fn add(self, s: $s) -> Jet {
                self.add_const($conv(s))
            }
        }
        impl Add<$s> for Jet {
            type Output = Jet;
            fn add(self, s: $s) -> Jet {
                self.add_const($conv(s))
            }
        }
        impl Sub<$s> for &Jet {
            type Output = Jet;
            fn sub(self, s: $s) -> Jet {
                self.add_const(-$conv(s))
            }
        }
        impl Sub<$s> for Jet {
            type Output = Jet;
            fn sub(self, s: $s) -> Jet {
                self.add_const(-$conv(s))
            }
        }
        impl Mul<$s> for &Jet {
            type Output = Jet;
            fn mul(self, s: $s) -> Jet {
                self.scale($conv(s))
            }
        }
        impl Mul<$s> for Jet {
            type Output = Jet;
            fn mul(self, s: $s) -> Jet {
                self.scale($conv(s))
            }
        }
    };
}

jet_scalar!(f64, C::from);
jet_scalar!(C, |c: C| c);

/// Independent coordinate jets at a point; model functions are closures over this.
#[derive(Clone, Debug)]
pub struct Vars {
    pub point: Point,
    pub dims: Dims,
    pub order: usize,
}

impl Vars {
    pub fn new(point: &Point, order: usize) -> Self {
        Vars { dims: point.dims(), point: point.clone(), order }
    }
    pub fn t(&self, j: usize) -> Jet {
        Jet::variable(self.dims, self.order, self.point.t[j], self.dims.t(j))
    }
    pub fn tb(&self, j: usize) -> Jet {
        Jet::variable(self.dims, self.order, self.point.t[j].conj(), self.dims.tb(j))
    }
    pub fn z(&self, p: usize) -> Jet {
        Jet::variable(self.dims, self.order, self.point.z[p], self.dims.z(p))
    }
    pub fn zb(&self, p: usize) -> Jet {
        Jet::variable(self.dims, self.order, self.point.z[p].conj(), self.dims.zb(p))
    }
    pub fn constant(&self, v: f64) -> Jet {
        Jet::constant(self.dims, self.order, C::from(v))
    }
    pub fn constant_c(&self, v: C) -> Jet {
        Jet::constant(self.dims, self.order, v)
    }
    /// `Σ_j |t_j|^2`.
    pub fn t_norm2(&self) -> Jet {
        (0..self.dims.n).fold(self.constant(0.0), |acc, j| acc + self.t(j) * self.tb(j))
    }
    /// `Σ_p |z_p|^2`.
    pub fn z_norm2(&self) -> Jet {
        (0..self.dims.m).fold(self.constant(0.0), |acc, p| acc + self.z(p) * self.zb(p))
    }
}

/// Per-order base steps of the finite-difference route; each is scaled by `1 + |coordinate|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdSteps {
    pub h: [f64; 3],
}

impl FdSteps {
    pub fn uniform(h: f64) -> Self {
        FdSteps { h: [h; 3] }
    }
}

impl Default for FdSteps {
    fn default() -> Self {
        FdSteps { h: [1e-4, 1e-3, 5e-3] }
    }
}

fn sorted_multi_indices(k: usize, s: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, s: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == s {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            cur.push(i);
            rec(k, s, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, s, 0, &mut Vec::new(), &mut out);
    out
}

/// Jets of a vector-valued function by nested real central differences with one
/// Richardson level, converted to Wirtinger derivatives via `∂_w = (∂_x - i∂_y)/2`.
///
/// Every stencil point is evaluated once (in parallel); `f` reports points outside
/// its domain through its error.
pub fn fd_jets<F>(p: &Point, order: usize, steps: &FdSteps, f: F) -> Result<Vec<Jet>>
where
    F: Fn(&Point) -> Result<Vec<C>> + Sync,
{
    assert!(order <= 3);
    let dims = p.dims();
    let nv = dims.nv();
    let kr = 2 * nv;
    let scale: Vec<f64> = (0..kr).map(|r| 1.0 + p.coord(r / 2).norm()).collect();

    // Stencil keys: (order, level, integer offsets per real coordinate).
    type Key = (usize, usize, Vec<i8>);
    let mut keys: BTreeMap<Key, ()> = BTreeMap::new();
    let zero_key: Key = (0, 0, vec![0; kr]);
    keys.insert(zero_key.clone(), ());
    let mut plan: Vec<(usize, Vec<usize>)> = Vec::new();
    for s in 1..=order {
        for mi in sorted_multi_indices(kr, s) {
            for level in 0..2 {
                for signs in 0..(1u32 << s) {
                    keys.insert((s, level, offsets(&mi, signs, kr)), ());
                }
            }
            plan.push((s, mi));
        }
    }
    let key_list: Vec<Key> = keys.into_keys().collect();
    let values: Vec<Result<Vec<C>>> = key_list
        .par_iter()
        .map(|(s, level, off)| {
            let mut q = p.clone();
            if *s > 0 {
                let h = steps.h[s - 1] / (1 << level) as f64;
                for (r, &o) in off.iter().enumerate() {
                    if o != 0 {
                        let dx = o as f64 * h * scale[r];
                        let c = q.coord_mut(r / 2);
                        if r % 2 == 0 {
                            c.re += dx;
                        } else {
                            c.im += dx;
                        }
                    }
                }
            }
            f(&q)
        })
        .collect();
    let mut table: BTreeMap<Key, Vec<C>> = BTreeMap::new();
    for (k, v) in key_list.into_iter().zip(values) {
        table.insert(k, v?);
    }
    let comps = table[&zero_key].len();

    // Real derivatives for sorted multi-indices.
    let mut real: BTreeMap<Vec<usize>, Vec<C>> = BTreeMap::new();
    for (s, mi) in plan {
        let mut lv = [vec![ZERO; comps], vec![ZERO; comps]];
        for (level, acc) in lv.iter_mut().enumerate() {
            let h = steps.h[s - 1] / (1 << level) as f64;
            let denom: f64 = mi.iter().map(|&r| 2.0 * h * scale[r]).product();
            for signs in 0..(1u32 << s) {
                let sign = if signs.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                let vals = &table[&(s, level, offsets(&mi, signs, kr))];
                for (a, v) in acc.iter_mut().zip(vals) {
                    *a += v * (sign / denom);
                }
            }
        }
        let rich: Vec<C> = lv[0].iter().zip(&lv[1]).map(|(d1, d2)| (4.0 * d2 - d1) / 3.0).collect();
        real.insert(mi, rich);
    }

    let k = dims.k();
    let mut jets: Vec<Jet> = table[&zero_key].iter().map(|&v| Jet::constant(dims, order, v)).collect();
    let wirt = |dirs: &[usize], comp: usize| -> C {
        // Each Wirtinger direction is ½(∂_x ∓ i∂_y); expand over real choices.
        let s = dirs.len();
        let mut acc = ZERO;
        for choice in 0..(1u32 << s) {
            let mut coef = C::from(1.0);
            let mut idx = Vec::with_capacity(s);
            for (slot, &a) in dirs.iter().enumerate() {
                let var = a % nv;
                let anti = a >= nv;
                if choice >> slot & 1 == 0 {
                    coef *= 0.5;
                    idx.push(2 * var);
                } else {
                    coef *= C::new(0.0, if anti { 0.5 } else { -0.5 });
                    idx.push(2 * var + 1);
                }
            }
            idx.sort_unstable();
            acc += coef * real[&idx][comp];
        }
        acc
    };
    for (comp, jet) in jets.iter_mut().enumerate() {
        for a in 0..jet.d1.len() {
            jet.d1[a] = wirt(&[a], comp);
        }
        if order >= 2 {
            for a in 0..k {
                for b in a..k {
                    let x = wirt(&[a, b], comp);
                    jet.set2(a, b, x);
                    jet.set2(b, a, x);
                }
            }
        }
        if order >= 3 {
            for a in 0..k {
                for b in a..k {
                    for c in b..k {
                        let x = wirt(&[a, b, c], comp);
                        for (i, j2, l) in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)] {
                            jet.set3(i, j2, l, x);
                        }
                    }
                }
            }
        }
    }
    Ok(jets)
}

fn offsets(mi: &[usize], signs: u32, kr: usize) -> Vec<i8> {
    let mut off = vec![0i8; kr];
    for (slot, &r) in mi.iter().enumerate() {
        off[r] += if signs >> slot & 1 == 0 { 1 } else { -1 };
    }
    off
}

type ScalarClosure = Arc<dyn Fn(&Vars) -> Jet + Send + Sync>;
type SampledClosure = Arc<dyn Fn(&Point) -> C + Send + Sync>;
type DomainClosure = Arc<dyn Fn(&Point) -> bool + Send + Sync>;
type MatrixClosure = Arc<dyn Fn(&Vars) -> Vec<Jet> + Send + Sync>;
type SampledMatrixClosure = Arc<dyn Fn(&Point) -> CMat + Send + Sync>;

/// How a registered function produces its jets.
#[derive(Clone)]
pub enum ScalarSource {
    /// Exact jets from truncated Taylor arithmetic.
    Analytic(ScalarClosure),
    /// Point evaluations only; jets come from finite differences.
    Sampled(SampledClosure),
}

/// Which route produced a [`ScalarJet3`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JetRoute {
    Analytic,
    FiniteDifference(FdSteps),
}

/// Third-order jet of a scalar function together with its provenance.
#[derive(Clone, Debug)]
pub struct ScalarJet3 {
    pub jet: Jet,
    pub route: JetRoute,
}

/// A named scalar function of `(t, z)`.
#[derive(Clone)]
pub struct ScalarFunction {
    pub name: String,
    pub dims: Dims,
    pub source: ScalarSource,
    pub domain: Option<DomainClosure>,
    pub fd_steps: FdSteps,
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.source {
            ScalarSource::Analytic(_) => "analytic",
            ScalarSource::Sampled(_) => "sampled",
        };
        write!(f, "ScalarFunction({}, {kind}, n={}, m={})", self.name, self.dims.n, self.dims.m)
    }
}

impl ScalarFunction {
    pub fn analytic(name: &str, dims: Dims, f: impl Fn(&Vars) -> Jet + Send + Sync + 'static) -> Self {
        ScalarFunction {
            name: name.into(),
            dims,
            source: ScalarSource::Analytic(Arc::new(f)),
            domain: None,
            fd_steps: FdSteps::default(),
        }
    }

    pub fn sampled(name: &str, dims: Dims, f: impl Fn(&Point) -> C + Send + Sync + 'static) -> Self {
        ScalarFunction {
            name: name.into(),
            dims,
            source: ScalarSource::Sampled(Arc::new(f)),
            domain: None,
            fd_steps: FdSteps::default(),
        }
    }

    /// Restrict the declared domain of smoothness.
    pub fn with_domain(mut self, d: impl Fn(&Point) -> bool + Send + Sync + 'static) -> Self {
        self.domain = Some(Arc::new(d));
        self
    }

    fn check(&self, p: &Point) -> Result<()> {
        if p.dims() != self.dims {
            return Err(Error::Dimension(format!(
                "`{}` expects n={}, m={}, got n={}, m={}",
                self.name,
                self.dims.n,
                self.dims.m,
                p.t.len(),
                p.z.len()
            )));
        }
        if let Some(d) = &self.domain {
            if !d(p) {
                return Err(Error::OutsideDomain(self.name.clone()));
            }
        }
        Ok(())
    }

    pub fn eval(&self, p: &Point) -> Result<C> {
        self.check(p)?;
        Ok(match &self.source {
            ScalarSource::Analytic(f) => f(&Vars::new(p, 0)).value(),
            ScalarSource::Sampled(f) => f(p),
        })
    }

    /// Jet of the requested order by the function's own route.
    pub fn jet(&self, p: &Point, order: usize) -> Result<Jet> {
        self.check(p)?;
        match &self.source {
            ScalarSource::Analytic(f) => Ok(f(&Vars::new(p, order))),
            ScalarSource::Sampled(_) => self.fd_jet(p, order, &self.fd_steps),
        }
    }

    /// Jet by finite differences regardless of the source.
    pub fn fd_jet(&self, p: &Point, order: usize, steps: &FdSteps) -> Result<Jet> {
        self.check(p)?;
        let jets = fd_jets(p, order, steps, |q| {
            if let Some(d) = &self.domain {
                if !d(q) {
                    return Err(Error::OutsideDomain(self.name.clone()));
                }
            }
            Ok(vec![match &self.source {
                ScalarSource::Analytic(f) => f(&Vars::new(q, 0)).value(),
                ScalarSource::Sampled(f) => f(q),
            }])
        })?;
        Ok(jets.into_iter().next().unwrap())
    }
}

/// How a registered matrix function produces its jets.
#[derive(Clone)]
pub enum MatrixSource {
    /// Row-major `r x r` entry jets.
    Analytic(MatrixClosure),
    Sampled(SampledMatrixClosure),
}

/// A named `r x r` Hermitian matrix function of `(t, z)` (a metric on a trivial bundle).
#[derive(Clone)]
pub struct MatrixFunction {
    pub name: String,
    pub dims: Dims,
    pub r: usize,
    pub source: MatrixSource,
    pub fd_steps: FdSteps,
}

impl fmt::Debug for MatrixFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MatrixFunction({}, r={})", self.name, self.r)
    }
}

/// Entry-wise second-order jet of an `r x r` Hermitian matrix.
#[derive(Clone, Debug)]
pub struct MatrixJet2 {
    pub r: usize,
    pub entries: Vec<Jet>,
}

impl MatrixJet2 {
    pub fn dims(&self) -> Dims {
        self.entries[0].dims()
    }
    pub fn value(&self) -> CMat {
        CMat::from_fn(self.r, self.r, |i, j| self.entries[i * self.r + j].value())
    }
    /// Matrix of one partial derivative of every entry.
    pub fn deriv(&self, dirs: &[usize]) -> CMat {
        CMat::from_fn(self.r, self.r, |i, j| self.entries[i * self.r + j].d(dirs))
    }
}

/// Relative Hermitian-symmetry tolerance for registered metrics.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Positive-definiteness floor for metric values.
pub const DEGENERATE_TOL: f64 = 1e-12;

impl MatrixFunction {
    pub fn analytic(name: &str, dims: Dims, r: usize, f: impl Fn(&Vars) -> Vec<Jet> + Send + Sync + 'static) -> Self {
        MatrixFunction { name: name.into(), dims, r, source: MatrixSource::Analytic(Arc::new(f)), fd_steps: FdSteps::default() }
    }

    pub fn sampled(name: &str, dims: Dims, r: usize, f: impl Fn(&Point) -> CMat + Send + Sync + 'static) -> Self {
        MatrixFunction { name: name.into(), dims, r, source: MatrixSource::Sampled(Arc::new(f)), fd_steps: FdSteps::default() }
    }

    fn check_dims(&self, p: &Point) -> Result<()> {
        if p.dims() != self.dims {
            return Err(Error::Dimension(format!("metric `{}` has n={}, m={}", self.name, self.dims.n, self.dims.m)));
        }
        Ok(())
    }

    /// Value only, without positivity checks.
    pub fn value(&self, p: &Point) -> Result<CMat> {
        self.check_dims(p)?;
        Ok(match &self.source {
            MatrixSource::Analytic(f) => {
                let e = f(&Vars::new(p, 0));
                CMat::from_fn(self.r, self.r, |i, j| e[i * self.r + j].value())
            }
            MatrixSource::Sampled(f) => f(p),
        })
    }

    /// Second-order matrix jet with Hermitian and positive-definiteness checks.
    pub fn jet(&self, p: &Point) -> Result<MatrixJet2> {
        self.check_dims(p)?;
        let entries = match &self.source {
            MatrixSource::Analytic(f) => f(&Vars::new(p, 2)),
            MatrixSource::Sampled(f) => {
                let r = self.r;
                fd_jets(p, 2, &self.fd_steps, |q| {
                    let v = f(q);
                    Ok((0..r * r).map(|i| v[(i / r, i % r)]).collect())
                })?
            }
        };
        if entries.len() != self.r * self.r {
            return Err(Error::LengthMismatch { expected: self.r * self.r, got: entries.len() });
        }
        let mj = MatrixJet2 { r: self.r, entries };
        let v = mj.value();
        let res = linalg::hermitian_residual(&v);
        if res > HERMITIAN_TOL * (1.0 + linalg::max_abs(&v)) {
            return Err(Error::NonHermitian { name: self.name.clone(), residual: res });
        }
        let me = linalg::min_eig(&v);
        if me < DEGENERATE_TOL {
            return Err(Error::DegenerateMetric { min_eig: me });
        }
        Ok(mj)
    }
}

/// String-keyed registry of scalar and matrix functions.
#[derive(Clone, Debug, Default)]
pub struct FunctionCatalog {
    scalars: BTreeMap<String, ScalarFunction>,
    matrices: BTreeMap<String, MatrixFunction>,
}

impl FunctionCatalog {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn register_scalar(&mut self, f: ScalarFunction) {
        self.scalars.insert(f.name.clone(), f);
    }
    pub fn register_matrix(&mut self, f: MatrixFunction) {
        self.matrices.insert(f.name.clone(), f);
    }
    pub fn scalar(&self, id: &str) -> Result<&ScalarFunction> {
        self.scalars.get(id).ok_or_else(|| Error::Unregistered(id.into()))
    }
    pub fn matrix(&self, id: &str) -> Result<&MatrixFunction> {
        self.matrices.get(id).ok_or_else(|| Error::Unregistered(id.into()))
    }
    pub fn scalar_names(&self) -> Vec<&str> {
        self.scalars.keys().map(|s| s.as_str()).collect()
    }
    pub fn matrix_names(&self) -> Vec<&str> {
        self.matrices.keys().map(|s| s.as_str()).collect()
    }

    /// All partials to order 3 of a registered scalar function.
    pub fn scalar_jet(&self, id: &str, p: &Point) -> Result<ScalarJet3> {
        let f = self.scalar(id)?;
        let route = match f.source {
            ScalarSource::Analytic(_) => JetRoute::Analytic,
            ScalarSource::Sampled(_) => JetRoute::FiniteDifference(f.fd_steps),
        };
        Ok(ScalarJet3 { jet: f.jet(p, 3)?, route })
    }

    /// Checked second-order jet of a registered matrix function.
    pub fn matrix_jet(&self, id: &str, p: &Point) -> Result<MatrixJet2> {
        self.matrix(id)?.jet(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn pt(t: f64, z: f64) -> Point {
        Point::new(vec![c(t, 0.0)], vec![c(z, 0.0)])
    }

    fn hartogs(v: &Vars) -> Jet {
        v.t_norm2() + v.z_norm2() - 1.0
    }

    #[test]
    fn hartogs_jet_entries() {
        let p = pt(0.5, 0.6);
        let d = p.dims();
        let j = hartogs(&Vars::new(&p, 3));
        assert!((j.d1(d.t(0)) - c(0.5, 0.0)).norm() < 1e-15);
        assert!((j.d2(d.t(0), d.tb(0)) - c(1.0, 0.0)).norm() < 1e-15);
        assert!(j.d2(d.t(0), d.zb(0)).norm() < 1e-15);
        assert!((j.value() - c(-0.39, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn constant_has_no_derivatives() {
        let p = pt(0.3, -0.2);
        let j = Vars::new(&p, 3).constant(1.0);
        assert_eq!(j.value(), c(1.0, 0.0));
        assert_eq!(j.max_diff(&Jet::constant(p.dims(), 3, c(1.0, 0.0))), 0.0);
    }

    #[test]
    fn quartic_is_flat_at_origin() {
        let p = pt(0.0, 0.0);
        let v = Vars::new(&p, 3);
        let j = v.z_norm2() * v.z_norm2() + v.z(0).re() * 0.0;
        assert_eq!(j.max_diff(&Jet::constant(p.dims(), 3, c(0.0, 0.0))), 0.0);
    }

    #[test]
    fn conjugation_symmetry_of_real_function() {
        let p = Point::new(vec![c(0.2, 0.1)], vec![c(-0.3, 0.4)]);
        let v = Vars::new(&p, 3);
        let f = (v.z_norm2() * v.t(0) * v.zb(0)).re().exp();
        let d = p.dims();
        let fc = f.conj();
        assert!(f.max_diff(&fc) < 1e-14);
        assert!((f.d1(d.zb(0)) - f.d1(d.z(0)).conj()).norm() < 1e-14);
        assert!((f.d2(d.z(0), d.tb(0)) - f.d2(d.t(0), d.zb(0)).conj()).norm() < 1e-14);
    }

    #[test]
    fn shift_matches_product_rule() {
        let p = Point::new(vec![c(0.2, 0.1)], vec![c(-0.3, 0.4)]);
        let v = Vars::new(&p, 3);
        let d = p.dims();
        // f = z^2 zbar; ∂_z f = 2 z zbar.
        let f = v.z(0) * v.z(0) * v.zb(0);
        let g = (v.z(0) * v.zb(0) * 2.0).truncate(2);
        assert!(f.shift(d.z(0)).max_diff(&g) < 1e-15);
    }

    #[test]
    fn univariate_compositions() {
        let p = Point::new(vec![c(0.1, 0.0)], vec![c(0.4, 0.2)]);
        let v = Vars::new(&p, 3);
        let x = v.z_norm2() + 1.0;
        assert!((x.sqrt() * x.sqrt()).max_diff(&x) < 1e-14);
        assert!((x.recip() * &x).max_diff(&v.constant(1.0)) < 1e-14);
        assert!(x.ln().exp().max_diff(&x) < 1e-14);
        assert!(x.powi(3).max_diff(&(&x * &x * &x)) < 1e-13);
    }

    #[test]
    fn fd_route_matches_analytic() {
        let p = Point::new(vec![c(0.2, -0.1)], vec![c(0.3, 0.25)]);
        let f = ScalarFunction::analytic("egg", p.dims(), |v| {
            let s = v.z_norm2();
            v.t_norm2() + &s + &s * &s - 1.0
        });
        let a = f.jet(&p, 3).unwrap();
        let n = f.fd_jet(&p, 3, &FdSteps::default()).unwrap();
        let d = p.dims();
        for x in 0..d.k() {
            assert!((a.d1(x) - n.d1(x)).norm() < 1e-9);
            for y in 0..d.k() {
                assert!((a.d2(x, y) - n.d2(x, y)).norm() < 1e-8);
                for z in 0..d.k() {
                    assert!((a.d3(x, y, z) - n.d3(x, y, z)).norm() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn gaussian_metric_jet() {
        let p = Point::new(vec![c(0.0, 0.0)], vec![c(0.0, 0.0)]);
        let d = p.dims();
        let h = MatrixFunction::analytic("g2", d, 2, |v| {
            let w = (-(v.z_norm2() + v.t_norm2())).exp();
            let z = v.constant(0.0);
            vec![w.clone(), z.clone(), z, w]
        });
        let mj = h.jet(&p).unwrap();
        assert!((mj.value() - CMat::identity(2, 2)).norm() < 1e-15);
        assert!(mj.deriv(&[d.t(0)]).norm() < 1e-15);
        assert!((mj.deriv(&[d.t(0), d.tb(0)]) + CMat::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn scalar_weight_value() {
        let p = pt(0.0, 0.6);
        let h = MatrixFunction::analytic("w", p.dims(), 1, |v| vec![(-v.z_norm2()).exp()]);
        let val = h.value(&p).unwrap()[(0, 0)];
        assert!((val.re - 0.697_676_326_071_031).abs() < 1e-12);
    }

    #[test]
    fn metric_checks() {
        let p = pt(0.0, 0.0);
        let d = p.dims();
        let bad = MatrixFunction::sampled("bad", d, 2, |_| {
            CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])
        });
        assert!(matches!(bad.jet(&p), Err(Error::NonHermitian { .. })));
        let sing = MatrixFunction::sampled("sing", d, 1, |_| CMat::zeros(1, 1));
        assert!(matches!(sing.jet(&p), Err(Error::DegenerateMetric { .. })));
        let mut cat = FunctionCatalog::new();
        assert!(matches!(cat.scalar_jet("nope", &p), Err(Error::Unregistered(_))));
        cat.register_scalar(ScalarFunction::sampled("s", d, |q| q.z[0]).with_domain(|q| q.z[0].norm() < 1.0));
        assert!(matches!(cat.scalar_jet("s", &pt(0.0, 2.0)), Err(Error::OutsideDomain(_))));
        let j = cat.scalar_jet("s", &p).unwrap();
        assert!(matches!(j.route, JetRoute::FiniteDifference(_)));
        assert!((j.jet.d1(d.z(0)) - c(1.0, 0.0)).norm() < 1e-9);
        assert!(j.jet.d1(d.zb(0)).norm() < 1e-9);
    }
}
