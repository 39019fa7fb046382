//! Task execution and report writing.
//!
//! Every task produces `summary.txt` (human-readable) and `records.tsv`
//! (tab-separated, one record per line, preceded by a versioned `#` header and
//! a column line). Records are byte-identical for a fixed config and seed.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::config::{FlatExpectation, RunConfig, SweepParameter, Task};
use crate::bergman::{FiberSpace, SectionBasis};
use crate::curvature::{compare_engines, curvature_matrix_fd, flatness_report, FormulaEngine, Section, TERM_NAMES};
use crate::error::{Error, Result};
use crate::family::validate_family;
use crate::linalg::C;
use crate::positivity::{formula_pairings, nakano_min_eig, strict_lower_bound, trace_constant, CLIP};
use crate::quadrature::Resolution;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERDICT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Version tag written in the first line of every records file.
pub const RECORDS_VERSION: u32 = 1;

/// Samples used to validate the family before positivity certification.
const VALIDATION_BUDGET: usize = 500;

/// Result of one task run, before anything is written.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub task: Task,
    pub pass: bool,
    pub summary: String,
    pub records: String,
    /// `(file name, contents)` of exported Gram matrices.
    pub extra_files: Vec<(String, String)>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            EXIT_PASS
        } else {
            EXIT_VERDICT_FAIL
        }
    }
}

/// Exit code for an error raised before or during a run.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

fn e(x: f64) -> String {
    format!("{x:.12e}")
}

fn t_field(t: &[C]) -> String {
    t.iter().map(|z| format!("{},{}", e(z.re), e(z.im))).collect::<Vec<_>>().join(",")
}

fn t_short(t: &[C]) -> String {
    t.iter().map(|z| format!("{:+.4}{:+.4}i", z.re, z.im)).collect::<Vec<_>>().join(", ")
}

fn pass_str(p: bool) -> &'static str {
    if p {
        "PASS"
    } else {
        "FAIL"
    }
}

fn header(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "bergcurv report");
    let _ = writeln!(s, "task        {}", cfg.task);
    let _ = writeln!(
        s,
        "family      {} (n = {}, m = {}) {:?}",
        cfg.family.name, cfg.dims.n, cfg.dims.m, cfg.family.params
    );
    let _ = writeln!(s, "metric      {} (r = {}) {:?}", cfg.metric.name, cfg.metric.r(), cfg.metric.params);
    let _ = writeln!(s, "basis       degree {} (R = {})", cfg.basis.degree, cfg.basis.dim());
    let r = cfg.resolution;
    let _ = writeln!(s, "quadrature  angular {}, radial {}, profile {}", r.angular, r.radial, r.profile);
    let _ = writeln!(s, "stencil h   {:.3e}", cfg.stencil_h);
    let _ = writeln!(s, "t-grid      {} point(s)", cfg.t_grid.len());
    let _ = writeln!(s, "seed        {}", cfg.seed);
    let _ = writeln!(s);
    s
}

fn records_header(task: Task, columns: &[&str]) -> String {
    format!("# bergcurv-records v{RECORDS_VERSION} task={task}\n{}\n", columns.join("\t"))
}

/// Run the configured task without touching the filesystem.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    let mut out = match cfg.task {
        Task::CurvatureCompare => curvature_compare(cfg)?,
        Task::PositivityCertify => positivity_certify(cfg)?,
        Task::TraceConstant => trace_constant_task(cfg)?,
        Task::FlatnessScan => flatness_scan(cfg)?,
        Task::ConvergenceSweep => convergence_sweep(cfg)?,
    };
    if cfg.export_gram {
        out.extra_files = export_grams(cfg)?;
    }
    Ok(out)
}

/// Write `summary.txt`, `records.tsv` and any extra files into `dir`.
pub fn write_outputs(out: &RunOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("summary.txt"), &out.summary)?;
    std::fs::write(dir.join("records.tsv"), &out.records)?;
    for (name, body) in &out.extra_files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

fn curvature_compare(cfg: &RunConfig) -> Result<RunOutcome> {
    let tuples = cfg.section_tuples();
    let per_t: Vec<Vec<crate::curvature::Comparison>> = cfg
        .t_grid
        .par_iter()
        .map(|t| -> Result<_> {
            let eng = FormulaEngine::build(&cfg.family, &cfg.metric, t, &cfg.basis, cfg.resolution)?;
            let fd = curvature_matrix_fd(&cfg.family, t, &cfg.basis, &cfg.metric, cfg.resolution, cfg.stencil_h)?;
            tuples.iter().map(|u| compare_engines(&eng.pairing(u)?, &fd, u, cfg.tolerances)).collect()
        })
        .collect::<Result<_>>()?;

    let mut cols = vec!["t_index", "t", "tuple", "jk"];
    let term_cols: Vec<String> = TERM_NAMES.iter().flat_map(|n| [format!("{n}_re"), format!("{n}_im")]).collect();
    cols.extend(term_cols.iter().map(String::as_str));
    cols.extend(["total_re", "total_im", "fd_re", "fd_im", "abs_err", "rel_err", "pass"]);
    let mut rec = records_header(cfg.task, &cols);
    let mut sum = header(cfg);
    let _ = writeln!(sum, "{:>4}  {:<22} {:>5}  {:>20} {:>20} {:>10}  {:<4} verdict", "t#", "t", "tuple", "formula", "fd", "abs err", "dom");
    let mut all = true;
    for (ti, (t, comps)) in cfg.t_grid.iter().zip(&per_t).enumerate() {
        for (ui, cmp) in comps.iter().enumerate() {
            all &= cmp.pass;
            for r in &cmp.report.records {
                let fd = r.fd.unwrap_or_default();
                let mut line = format!("{ti}\t{}\t{ui}\t{},{}", t_field(t), r.j + 1, r.k + 1);
                for term in r.terms {
                    let _ = write!(line, "\t{}\t{}", e(term.re), e(term.im));
                }
                let tol_ok = cfg.tolerances.accepts(r.abs_err, fd.norm());
                let _ = writeln!(
                    line,
                    "\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    e(r.total.re),
                    e(r.total.im),
                    e(fd.re),
                    e(fd.im),
                    e(r.abs_err),
                    e(r.rel_err),
                    pass_str(tol_ok)
                );
                rec.push_str(&line);
            }
            let total = cmp.report.nakano_pairing();
            let fd: C = cmp.report.records.iter().filter_map(|r| r.fd).sum();
            let dom = cmp.dominant.iter().map(|&i| TERM_NAMES[i]).collect::<Vec<_>>().join("/");
            let _ = writeln!(
                sum,
                "{ti:>4}  {:<22} {ui:>5}  {:>20.12e} {:>20.12e} {:>10.3e}  {dom:<4} {}",
                t_short(t),
                total.re,
                fd.re,
                cmp.max_abs_err,
                pass_str(cmp.pass)
            );
        }
    }
    let _ = writeln!(sum, "\ntolerance   |formula - fd| <= max({:.1e}, {:.1e} |fd|)", cfg.tolerances.abs, cfg.tolerances.rel);
    let _ = writeln!(sum, "verdict     {}", pass_str(all));
    Ok(RunOutcome { task: cfg.task, pass: all, summary: sum, records: rec, extra_files: vec![] })
}

struct PosRow {
    lambda: f64,
    lambda_fd: f64,
    strict: Option<crate::positivity::StrictBound>,
    pass: bool,
}

fn positivity_certify(cfg: &RunConfig) -> Result<RunOutcome> {
    let validation = validate_family(&cfg.family, VALIDATION_BUDGET, cfg.seed);
    let strict = validation.strict();
    let rows: Vec<PosRow> = cfg
        .t_grid
        .par_iter()
        .map(|t| -> Result<PosRow> {
            let eng = FormulaEngine::build(&cfg.family, &cfg.metric, t, &cfg.basis, cfg.resolution)?;
            let lambda = nakano_min_eig(&formula_pairings(&eng), &eng.space.gram.matrix)?;
            let fd = curvature_matrix_fd(&cfg.family, t, &cfg.basis, &cfg.metric, cfg.resolution, cfg.stencil_h)?;
            let lambda_fd = nakano_min_eig(&fd.p, &fd.gram)?;
            let sb = if strict {
                Some(strict_lower_bound(&cfg.family, t, &cfg.basis, &cfg.metric, cfg.resolution, &validation)?)
            } else {
                None
            };
            let agree = cfg.tolerances.accepts((lambda - lambda_fd).abs(), lambda_fd);
            let pass = lambda >= -CLIP && agree && sb.as_ref().is_none_or(|s| s.holds && s.bound > 0.0);
            Ok(PosRow { lambda, lambda_fd, strict: sb, pass })
        })
        .collect::<Result<_>>()?;

    let cols = ["t_index", "t", "lambda_min", "lambda_min_fd", "delta1", "delta2", "delta3", "bound", "verdict"];
    let mut rec = records_header(cfg.task, &cols);
    let mut sum = header(cfg);
    let _ = writeln!(
        sum,
        "validation  {} samples, strict = {}, min Hessian eig {:.4e}, min H0 eig {:.4e}",
        validation.samples, strict, validation.full_hessian_min, validation.h0_min
    );
    let _ = writeln!(sum, "delta1 is sampled on boundary quadrature nodes, not certified\n");
    let _ = writeln!(sum, "{:>4}  {:<22} {:>16} {:>16} {:>12} {:>12} {:>16}  verdict", "t#", "t", "lambda_min", "lambda_min fd", "delta1", "delta3", "bound");
    let na = || "NA".to_string();
    let mut all = true;
    for (ti, (t, r)) in cfg.t_grid.iter().zip(&rows).enumerate() {
        all &= r.pass;
        let (d1, d2, d3, b) = match &r.strict {
            Some(s) => (e(s.delta1), e(s.delta2), e(s.delta3), e(s.bound)),
            None => (na(), na(), na(), na()),
        };
        let _ = writeln!(rec, "{ti}\t{}\t{}\t{}\t{d1}\t{d2}\t{d3}\t{b}\t{}", t_field(t), e(r.lambda), e(r.lambda_fd), pass_str(r.pass));
        let sf = |x: Option<f64>| x.map(|v| format!("{v:.6e}")).unwrap_or_else(na);
        let _ = writeln!(
            sum,
            "{ti:>4}  {:<22} {:>16.9e} {:>16.9e} {:>12} {:>12} {:>16}  {}",
            t_short(t),
            r.lambda,
            r.lambda_fd,
            sf(r.strict.as_ref().map(|s| s.delta1)),
            sf(r.strict.as_ref().map(|s| s.delta3)),
            sf(r.strict.as_ref().map(|s| s.bound)),
            pass_str(r.pass)
        );
    }
    let _ = writeln!(sum, "\nverdict     {}", pass_str(all));
    Ok(RunOutcome { task: cfg.task, pass: all, summary: sum, records: rec, extra_files: vec![] })
}

fn trace_constant_task(cfg: &RunConfig) -> Result<RunOutcome> {
    let rows: Vec<Vec<f64>> = cfg
        .t_grid
        .par_iter()
        .map(|t| (0..=cfg.basis.degree).map(|d| Ok(trace_constant(&cfg.family, t, d, cfg.resolution)?.delta)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let mut rec = records_header(cfg.task, &["t_index", "t", "degree", "delta"]);
    let mut sum = header(cfg);
    let _ = writeln!(sum, "delta_d = min over polynomials of degree <= d of boundary / interior L2 norms (unweighted)\n");
    let mut all = true;
    for (ti, (t, ds)) in cfg.t_grid.iter().zip(&rows).enumerate() {
        let monotone = ds.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10) + 1e-12);
        let positive = ds.iter().all(|&d| d > 0.0);
        all &= monotone && positive;
        for (d, v) in ds.iter().enumerate() {
            let _ = writeln!(rec, "{ti}\t{}\t{d}\t{}", t_field(t), e(*v));
        }
        let list = ds.iter().map(|v| format!("{v:.10}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(sum, "t# {ti} ({}): {list}  nonincreasing = {monotone}", t_short(t));
    }
    let _ = writeln!(sum, "\nverdict     {}", pass_str(all));
    Ok(RunOutcome { task: cfg.task, pass: all, summary: sum, records: rec, extra_files: vec![] })
}

fn flatness_scan(cfg: &RunConfig) -> Result<RunOutcome> {
    let reps: Vec<_> = cfg
        .t_grid
        .iter()
        .enumerate()
        .map(|(i, t)| {
            flatness_report(
                &cfg.family,
                &cfg.metric,
                std::slice::from_ref(t),
                &cfg.basis,
                cfg.resolution,
                cfg.stencil_h,
                cfg.flat_samples,
                cfg.flat_tol,
                cfg.seed.wrapping_add(i as u64),
            )
        })
        .collect::<Result<_>>()?;
    let mut rec = records_header(cfg.task, &["t_index", "t", "max_formula", "max_fd", "max_theta_f", "flat"]);
    let mut sum = header(cfg);
    let mut flat = true;
    let (mut mf, mut mg, mut ma) = (0.0f64, 0.0f64, 0.0f64);
    for (ti, (t, r)) in cfg.t_grid.iter().zip(&reps).enumerate() {
        flat &= r.flat;
        mf = mf.max(r.max_formula);
        mg = mg.max(r.max_fd);
        ma = ma.max(r.max_theta_f);
        let _ = writeln!(rec, "{ti}\t{}\t{}\t{}\t{}\t{}", t_field(t), e(r.max_formula), e(r.max_fd), e(r.max_theta_f), r.flat);
    }
    let expect_flat = cfg.flat_expect == FlatExpectation::Flat;
    let pass = flat == expect_flat;
    let _ = writeln!(sum, "max |formula pairing|   {mf:.3e}");
    let _ = writeln!(sum, "max |fd pairing|        {mg:.3e}");
    let _ = writeln!(sum, "max |curvature of h^F|  {ma:.3e}");
    let _ = writeln!(sum, "tolerance               {:.1e}", cfg.flat_tol);
    let _ = writeln!(sum, "result      {} (numeric evidence only)", if flat { "FLAT" } else { "NON-FLAT" });
    let _ = writeln!(sum, "expected    {}", if expect_flat { "FLAT" } else { "NON-FLAT" });
    let _ = writeln!(sum, "verdict     {}", pass_str(pass));
    Ok(RunOutcome { task: cfg.task, pass, summary: sum, records: rec, extra_files: vec![] })
}

/// Resolution tier for a swept angular count: other counts scale with it.
pub fn swept_resolution(m: usize, angular: usize) -> Resolution {
    if m == 1 {
        Resolution::new(angular, (angular / 4).max(2), 2)
    } else {
        Resolution::new(angular, (angular * 3 / 4).max(2), (angular * 3 / 4).max(2))
    }
}

/// Pass rule for a Cauchy sequence of errors against the finest value: each successive
/// error either sits at the round-off floor or drops by at least 4.
pub fn decay_ok(errors: &[f64], floor: f64) -> bool {
    errors.windows(2).all(|w| w[1] <= floor || w[1] * 4.0 <= w[0])
}

fn convergence_sweep(cfg: &RunConfig) -> Result<RunOutcome> {
    let (param, values) = cfg.sweep.clone().expect("validated");
    let t = &cfg.t_grid[0];
    let u0 = |basis: &SectionBasis| -> Vec<Section> { cfg.section_tuples_for(basis).remove(0) };
    // (formula, fd) Nakano pairing per swept value.
    let eval = |v: f64| -> Result<(f64, f64)> {
        let (basis, res, h) = match param {
            SweepParameter::Degree => (SectionBasis::new(cfg.dims.m, cfg.basis.r, v as usize), cfg.resolution, cfg.stencil_h),
            SweepParameter::Resolution => (cfg.basis.clone(), swept_resolution(cfg.dims.m, v as usize), cfg.stencil_h),
            SweepParameter::Stencil => (cfg.basis.clone(), cfg.resolution, v),
        };
        let u = u0(&basis);
        let eng = FormulaEngine::build(&cfg.family, &cfg.metric, t, &basis, res)?;
        let fd = curvature_matrix_fd(&cfg.family, t, &basis, &cfg.metric, res, h)?;
        let cmp = compare_engines(&eng.pairing(&u)?, &fd, &u, cfg.tolerances)?;
        let f = cmp.report.nakano_pairing().re;
        let g: f64 = cmp.report.records.iter().filter_map(|r| r.fd).map(|x| x.re).sum();
        Ok((f, g))
    };
    let vals: Vec<(f64, f64)> = values.iter().map(|&v| eval(v)).collect::<Result<_>>()?;
    let pname = match param {
        SweepParameter::Degree => "degree",
        SweepParameter::Resolution => "angular",
        SweepParameter::Stencil => "stencil_h",
    };
    let mut rec = records_header(cfg.task, &[pname, "formula", "fd", "error"]);
    let mut sum = header(cfg);
    let _ = writeln!(sum, "sweep over {pname} at t = {}, first section tuple\n", t_short(t));
    let (errors, pass, note): (Vec<f64>, bool, String) = match param {
        SweepParameter::Resolution => {
            let finest = vals.last().unwrap().0;
            let errs: Vec<f64> = vals.iter().map(|v| (v.0 - finest).abs()).collect();
            let floor = 1e-13 * finest.abs().max(1.0);
            let head = &errs[..errs.len() - 1];
            let ok = decay_ok(head, floor);
            (errs, ok, format!("Cauchy error against the finest tier; pass iff each step drops by 4 or reaches {floor:.1e}"))
        }
        SweepParameter::Degree => {
            let errs: Vec<f64> = std::iter::once(0.0).chain(vals.windows(2).map(|w| (w[1].0 - w[0].0).abs())).collect();
            let ok = errs.iter().all(|&x| x < 1e-6);
            (errs, ok, "successive difference; pass iff every difference is below 1e-6".into())
        }
        SweepParameter::Stencil => {
            let errs: Vec<f64> = vals.iter().map(|v| (v.0 - v.1).abs()).collect();
            let (best, _) = errs.iter().enumerate().fold((0, f64::INFINITY), |b, (i, &x)| if x < b.1 { (i, x) } else { b });
            let ok = cfg.tolerances.accepts(errs[best], vals[best].1);
            (errs, ok, format!("|formula - fd|; smallest at {pname} = {:.1e}", values[best]))
        }
    };
    for ((v, (f, g)), err) in values.iter().zip(&vals).zip(&errors) {
        let _ = writeln!(rec, "{}\t{}\t{}\t{}", e(*v), e(*f), e(*g), e(*err));
        let _ = writeln!(sum, "{pname} {v:>10.3e}   formula {f:>20.12e}   fd {g:>20.12e}   error {err:.3e}");
    }
    let _ = writeln!(sum, "\n{note}");
    let _ = writeln!(sum, "verdict     {}", pass_str(pass));
    Ok(RunOutcome { task: cfg.task, pass, summary: sum, records: rec, extra_files: vec![] })
}

fn export_grams(cfg: &RunConfig) -> Result<Vec<(String, String)>> {
    cfg.t_grid
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let s = FiberSpace::new(&cfg.family, t, &cfg.basis, &cfg.metric, cfg.resolution)?;
            let mut body = format!("# bergcurv-gram v{RECORDS_VERSION} t={} R={} condition={}\nrow\tcol\tre\tim\n", t_field(t), s.basis.dim(), e(s.gram.condition));
            for a in 0..s.basis.dim() {
                for b in 0..s.basis.dim() {
                    let g = s.gram.matrix[(a, b)];
                    let _ = writeln!(body, "{a}\t{b}\t{}\t{}", e(g.re), e(g.im));
                }
            }
            Ok((format!("gram_t{i}.tsv"), body))
        })
        .collect()
}
