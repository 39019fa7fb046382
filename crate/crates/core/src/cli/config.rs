//! Run configuration: a versioned TOML document, parsed with `serde` and validated
//! completely before any task runs or any file is written.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::bergman::SectionBasis;
use crate::curvature::{Section, Tolerances, DEFAULT_STENCIL};
use crate::error::{Error, Result};
use crate::family::{family_by_name, Family};
use crate::jets::Dims;
use crate::linalg::{c, C};
use crate::metric::{metric_by_name, Metric};
use crate::quadrature::Resolution;

/// The only schema version understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Degree caps keeping the Gram matrices well conditioned.
pub const MAX_DEGREE_M1: usize = 10;
pub const MAX_DEGREE_M2: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    CurvatureCompare,
    PositivityCertify,
    TraceConstant,
    FlatnessScan,
    ConvergenceSweep,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::CurvatureCompare, Task::PositivityCertify, Task::TraceConstant, Task::FlatnessScan, Task::ConvergenceSweep];

    pub fn name(self) -> &'static str {
        match self {
            Task::CurvatureCompare => "curvature-compare",
            Task::PositivityCertify => "positivity-certify",
            Task::TraceConstant => "trace-constant",
            Task::FlatnessScan => "flatness-scan",
            Task::ConvergenceSweep => "convergence-sweep",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}` (expected one of {})", Task::ALL.map(|t| t.name()).join(", "))))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    Degree,
    Resolution,
    Stencil,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlatExpectation {
    Flat,
    NonFlat,
}

// Raw document, mirrors the TOML layout.

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema: u32,
    task: Option<String>,
    seed: Option<u64>,
    family: RawFamily,
    metric: Option<RawMetric>,
    basis: Option<RawBasis>,
    quadrature: Option<RawQuadrature>,
    stencil: Option<RawStencil>,
    tgrid: Option<RawGrid>,
    sections: Option<RawSections>,
    tolerances: Option<RawTolerances>,
    flatness: Option<RawFlatness>,
    output: Option<RawOutput>,
    sweep: Option<RawSweep>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    name: String,
    n: Option<usize>,
    m: Option<usize>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    name: String,
    r: Option<usize>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawBasis {
    degree: usize,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    angular: Option<usize>,
    radial: Option<usize>,
    profile: Option<usize>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawStencil {
    h: f64,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    points: Option<Vec<Vec<f64>>>,
    center: Option<Vec<f64>>,
    half_width: Option<f64>,
    count: Option<usize>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawSections {
    kind: String,
    exponents: Option<Vec<Vec<usize>>>,
    lambda: Option<usize>,
    count: Option<usize>,
    max_degree: Option<usize>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    abs: Option<f64>,
    rel: Option<f64>,
    flat: Option<f64>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawFlatness {
    expect: String,
    samples: Option<usize>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    #[serde(default)]
    gram: bool,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: String,
    values: Vec<f64>,
}

/// How the section tuples of a run are chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum SectionSpec {
    /// One tuple per multi-index: `z^α ⊗ e_λ` in every slot.
    Monomials { exponents: Vec<Vec<usize>>, lambda: usize },
    /// `count` seeded tuples with random coefficients up to `max_degree`.
    Random { count: usize, max_degree: usize },
}

/// Validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub family: Family,
    pub metric: Metric,
    pub dims: Dims,
    pub basis: SectionBasis,
    pub resolution: Resolution,
    pub stencil_h: f64,
    pub t_grid: Vec<Vec<C>>,
    pub sections: SectionSpec,
    pub tolerances: Tolerances,
    pub flat_tol: f64,
    pub flat_expect: FlatExpectation,
    pub flat_samples: usize,
    pub out_dir: PathBuf,
    pub export_gram: bool,
    pub sweep: Option<(SweepParameter, Vec<f64>)>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub task: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn cfg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl RunConfig {
    pub fn from_file(path: &Path, ov: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_with(&text, ov)
    }

    /// Parse and validate; every failure is an [`Error::Config`].
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &Overrides::default())
    }

    /// Parse, apply command-line overrides, then validate.
    pub fn from_toml_with(text: &str, ov: &Overrides) -> Result<Self> {
        let mut raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(t) = &ov.task {
            raw.task = Some(t.clone());
        }
        if let Some(s) = ov.seed {
            raw.seed = Some(s);
        }
        if let Some(o) = &ov.out {
            let gram = raw.output.as_ref().is_some_and(|x| x.gram);
            raw.output = Some(RawOutput { dir: Some(o.to_string_lossy().into_owned()), gram });
        }
        Self::validate(raw).map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })
    }

    fn validate(raw: RawConfig) -> Result<Self> {
        if raw.schema != SCHEMA_VERSION {
            return cfg(format!("schema {} is not supported (expected {SCHEMA_VERSION})", raw.schema));
        }
        let task: Task = raw.task.as_deref().unwrap_or("curvature-compare").parse()?;
        let dims = Dims::new(raw.family.n.unwrap_or(1), raw.family.m.unwrap_or(1));
        let family = family_by_name(&raw.family.name, dims, &raw.family.params)?;

        let rm = raw.metric.unwrap_or(RawMetric { name: "flat".into(), r: None, params: BTreeMap::new() });
        let r = rm.r.unwrap_or(1);
        let metric = metric_by_name(&rm.name, dims, r, &rm.params)?;

        let degree = raw.basis.map(|b| b.degree).unwrap_or(3);
        let cap = if dims.m == 1 { MAX_DEGREE_M1 } else { MAX_DEGREE_M2 };
        if degree > cap {
            return cfg(format!("degree {degree} exceeds the cap {cap} for m = {}", dims.m));
        }
        let basis = SectionBasis::new(dims.m, r, degree);

        let def = Resolution::default_for(dims.m);
        let resolution = match raw.quadrature {
            Some(q) => Resolution::new(q.angular.unwrap_or(def.angular), q.radial.unwrap_or(def.radial), q.profile.unwrap_or(def.profile)),
            None => def,
        };
        if resolution.angular < 4 || resolution.radial < 1 || (dims.m == 2 && resolution.profile < 2) {
            return cfg(format!("quadrature resolution too low: {resolution:?}"));
        }

        let stencil_h = raw.stencil.map(|s| s.h).unwrap_or(DEFAULT_STENCIL);
        if !(stencil_h > 0.0 && stencil_h < 0.1) {
            return cfg(format!("stencil h = {stencil_h} must lie in (0, 0.1)"));
        }

        let t_grid = parse_grid(raw.tgrid, dims.n)?;
        for t in &t_grid {
            if !family.contains_t(t) {
                return cfg(format!("grid point {t:?} lies outside the base domain"));
            }
        }

        let sections = match raw.sections {
            None => SectionSpec::Monomials { exponents: vec![vec![0; dims.m]], lambda: 0 },
            Some(s) => match s.kind.as_str() {
                "monomials" => {
                    let exponents = s.exponents.unwrap_or_else(|| vec![vec![0; dims.m]]);
                    let lambda = s.lambda.unwrap_or(0);
                    if lambda >= r {
                        return cfg(format!("section component {lambda} but r = {r}"));
                    }
                    for e in &exponents {
                        if e.len() != dims.m {
                            return cfg(format!("exponent {e:?} must have m = {} entries", dims.m));
                        }
                        if e.iter().sum::<usize>() > degree {
                            return cfg(format!("section z^{e:?} exceeds basis degree {degree}"));
                        }
                    }
                    SectionSpec::Monomials { exponents, lambda }
                }
                "random" => {
                    let count = s.count.unwrap_or(10);
                    let max_degree = s.max_degree.unwrap_or(degree);
                    if count == 0 || max_degree > degree {
                        return cfg("random sections need count >= 1 and max_degree <= basis degree");
                    }
                    SectionSpec::Random { count, max_degree }
                }
                other => return cfg(format!("unknown section kind `{other}` (monomials | random)")),
            },
        };

        let tl = raw.tolerances.unwrap_or(RawTolerances { abs: None, rel: None, flat: None });
        let d = Tolerances::default();
        let tolerances = Tolerances { abs: tl.abs.unwrap_or(d.abs), rel: tl.rel.unwrap_or(d.rel) };
        let flat_tol = tl.flat.unwrap_or(1e-8);
        if tolerances.abs < 0.0 || tolerances.rel < 0.0 || flat_tol <= 0.0 {
            return cfg("tolerances must be nonnegative (flat > 0)");
        }

        let (flat_expect, flat_samples) = match raw.flatness {
            None => (FlatExpectation::Flat, 64),
            Some(f) => (
                match f.expect.as_str() {
                    "flat" => FlatExpectation::Flat,
                    "non-flat" => FlatExpectation::NonFlat,
                    o => return cfg(format!("flatness.expect must be `flat` or `non-flat`, got `{o}`")),
                },
                f.samples.unwrap_or(64),
            ),
        };

        let (out_dir, export_gram) = match raw.output {
            Some(o) => (PathBuf::from(o.dir.unwrap_or_else(|| "bergcurv-out".into())), o.gram),
            None => (PathBuf::from("bergcurv-out"), false),
        };

        let sweep = match raw.sweep {
            None => None,
            Some(s) => {
                let p = match s.parameter.as_str() {
                    "degree" => SweepParameter::Degree,
                    "resolution" => SweepParameter::Resolution,
                    "stencil" => SweepParameter::Stencil,
                    o => return cfg(format!("sweep parameter `{o}` (degree | resolution | stencil)")),
                };
                if s.values.len() < 2 {
                    return cfg("a sweep needs at least two values");
                }
                for &v in &s.values {
                    let ok = match p {
                        SweepParameter::Degree => v >= 0.0 && v.fract() == 0.0 && (v as usize) <= cap,
                        SweepParameter::Resolution => v >= 4.0 && v.fract() == 0.0,
                        SweepParameter::Stencil => v > 0.0 && v < 0.1,
                    };
                    if !ok {
                        return cfg(format!("invalid {} sweep value {v}", s.parameter));
                    }
                }
                if p == SweepParameter::Degree {
                    let min = s.values.iter().cloned().fold(f64::INFINITY, f64::min) as usize;
                    let sec_deg = match &sections {
                        SectionSpec::Monomials { exponents, .. } => exponents.iter().map(|e| e.iter().sum()).max().unwrap_or(0),
                        SectionSpec::Random { max_degree, .. } => *max_degree,
                    };
                    if sec_deg > min {
                        return cfg(format!("sections of degree {sec_deg} do not fit the smallest swept degree {min}"));
                    }
                }
                Some((p, s.values))
            }
        };
        if task == Task::ConvergenceSweep && sweep.is_none() {
            return cfg("task convergence-sweep needs a [sweep] section");
        }

        Ok(RunConfig {
            task,
            seed: raw.seed.unwrap_or(0),
            family,
            metric,
            dims,
            basis,
            resolution,
            stencil_h,
            t_grid,
            sections,
            tolerances,
            flat_tol,
            flat_expect,
            flat_samples,
            out_dir,
            export_gram,
            sweep,
        })
    }

    /// Section tuples for the run (deterministic in the seed).
    pub fn section_tuples(&self) -> Vec<Vec<Section>> {
        self.section_tuples_for(&self.basis)
    }

    /// Same tuples expressed in another basis of at least the section degree.
    pub fn section_tuples_for(&self, basis: &SectionBasis) -> Vec<Vec<Section>> {
        use rand::SeedableRng;
        let n = self.dims.n;
        match &self.sections {
            SectionSpec::Monomials { exponents, lambda } => exponents
                .iter()
                .map(|e| {
                    let s = Section::monomial(basis, e, *lambda).expect("validated exponent");
                    vec![s; n]
                })
                .collect(),
            SectionSpec::Random { count, max_degree } => {
                // Draw in the smallest basis holding the sections, then embed, so the
                // coefficients do not depend on the basis degree.
                let small = SectionBasis::new(self.dims.m, basis.r, *max_degree);
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
                (0..*count)
                    .map(|_| {
                        (0..n)
                            .map(|_| {
                                let s = Section::random(&small, *max_degree, &mut rng);
                                embed(&s, &small, basis)
                            })
                            .collect()
                    })
                    .collect()
            }
        }
    }
}

/// Re-express a section in a larger basis.
pub fn embed(s: &Section, from: &SectionBasis, to: &SectionBasis) -> Section {
    let mut out = Section::zero(to);
    for (a, &v) in s.coeffs.iter().enumerate() {
        let (ai, lam) = from.split(a);
        let bi = to.position(&from.alphas[ai]).expect("target basis contains the source");
        out.coeffs[to.index(bi, lam)] = v;
    }
    out
}

fn parse_grid(g: Option<RawGrid>, n: usize) -> Result<Vec<Vec<C>>> {
    let Some(g) = g else {
        return Ok(vec![vec![C::from(0.0); n]]);
    };
    let to_c = |v: &[f64]| -> Result<Vec<C>> {
        if v.len() != 2 * n {
            return cfg(format!("grid point {v:?} needs 2n = {} real entries", 2 * n));
        }
        Ok(v.chunks(2).map(|p| c(p[0], p[1])).collect())
    };
    match (g.points, g.half_width, g.count) {
        (Some(p), None, None) => {
            if p.is_empty() {
                return cfg("tgrid.points is empty");
            }
            p.iter().map(|v| to_c(v)).collect()
        }
        (None, Some(w), Some(cnt)) => {
            if w.is_nan() || w < 0.0 || cnt == 0 {
                return cfg("tgrid box needs half_width >= 0 and count >= 1");
            }
            let center = to_c(&g.center.unwrap_or_else(|| vec![0.0; 2 * n]))?;
            let axis: Vec<f64> = (0..cnt).map(|i| if cnt == 1 { 0.0 } else { -w + 2.0 * w * i as f64 / (cnt - 1) as f64 }).collect();
            let total = cnt.pow(2 * n as u32);
            Ok((0..total)
                .map(|mut idx| {
                    let mut re = vec![0.0; 2 * n];
                    for x in re.iter_mut() {
                        *x = axis[idx % cnt];
                        idx /= cnt;
                    }
                    re.chunks(2).zip(&center).map(|(p, c0)| c0 + c(p[0], p[1])).collect()
                })
                .collect())
        }
        _ => cfg("tgrid needs either `points` or both `half_width` and `count`"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema = 1
task = "curvature-compare"
[family]
name = "hartogs_ball"
"#;

    #[test]
    fn defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.task, Task::CurvatureCompare);
        assert_eq!(c.basis.degree, 3);
        assert_eq!(c.t_grid.len(), 1);
        assert_eq!(c.resolution, Resolution::default_for(1));
    }

    #[test]
    fn box_grid() {
        let text = format!("{MINIMAL}[tgrid]\nhalf_width = 0.4\ncount = 5\n");
        let c = RunConfig::from_toml(&text).unwrap();
        assert_eq!(c.t_grid.len(), 25);
        assert!(c.t_grid.iter().any(|t| (t[0] - crate::linalg::c(-0.4, 0.4)).norm() < 1e-15));
    }

    #[test]
    fn rejections() {
        let bad = [
            "schema = 2\n[family]\nname = \"hartogs_ball\"\n",
            "schema = 1\n[family]\nname = \"teapot\"\n",
            "schema = 1\ntask = \"dance\"\n[family]\nname = \"hartogs_ball\"\n",
            "schema = 1\n[family]\nname = \"hartogs_ball\"\nbogus = 3\n",
            "schema = 1\n[family]\nname = \"hartogs_ball\"\n[tgrid]\npoints = [[1.5, 0.0]]\n",
            "schema = 1\n[family]\nname = \"hartogs_ball\"\n[basis]\ndegree = 2\n[sections]\nkind = \"monomials\"\nexponents = [[3]]\n",
            "schema = 1\n[family]\nname = \"hartogs_ball\"\n[metric]\nname = \"diag_weights\"\nr = 1\n",
            "schema = 1\ntask = \"convergence-sweep\"\n[family]\nname = \"hartogs_ball\"\n",
            "not toml at all [",
        ];
        for b in bad {
            assert!(matches!(RunConfig::from_toml(b), Err(Error::Config(_))), "{b}");
        }
    }

    #[test]
    fn random_sections_do_not_depend_on_basis_degree() {
        let text = format!("{MINIMAL}seed = 4\n[sections]\nkind = \"random\"\ncount = 2\nmax_degree = 2\n");
        // `seed` after a table header belongs to the table; put it first instead.
        assert!(RunConfig::from_toml(&text).is_err());
        let text = "schema = 1\nseed = 4\n[family]\nname = \"hartogs_ball\"\n[sections]\nkind = \"random\"\ncount = 2\nmax_degree = 2\n";
        let c = RunConfig::from_toml(text).unwrap();
        let a = c.section_tuples_for(&SectionBasis::new(1, 1, 2));
        let b = c.section_tuples_for(&SectionBasis::new(1, 1, 5));
        for (x, y) in a.iter().zip(&b) {
            for k in 0..3 {
                assert_eq!(x[0].coeffs[k], y[0].coeffs[k]);
            }
            assert!(y[0].coeffs.iter().skip(3).all(|v| v.norm() == 0.0));
        }
    }
}
