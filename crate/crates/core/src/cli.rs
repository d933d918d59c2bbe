//! Command-line front end.
//!
//! Option values resolve as flag, then `--config` file entry, then default.
//! Config keys are the long flag names (`level`, `eps`, `max-level`, ...).

use crate::approx::{nonlinear_rate, uniform_rate, RateReport};
use crate::error::{Error, Result};
use crate::field::SampledField;
use crate::geometry::{rasterize, DomainGeometry, WeightMode};
use crate::io::{fmt_f64, load_geometry, parse_angle, parse_kv, parse_point, RunManifest, Snapshot};
use crate::norms::{
    besov_norm_modulus, besov_norm_wavelet, kondratiev_norm_with, refinement_stability, BesovSpec, FaultHook,
    KondratievOptions, KondratievSpec, NormReport,
};
use crate::parabolic::{
    defect_norm, linear_solve, picard_semilinear, snapshot_analysis, Forcing, Ramp, SnapshotOptions, SolverConfig,
    Trajectory,
};
use crate::pencil::{
    admissible_weight_range, cap_lb_eigenvalues, gamma_m, pencil_eigenvalues_from_lb, wedge_delta, PencilSpec,
};
use crate::testfns::{bump, cut_corner_singular, BoxProfile};
use crate::verify::{run_suite, Suite, VerifyConfig};
use crate::wavelet::{dwt_forward, synthesize_atom, CoeffTree, WaveletIndex, WaveletSystem};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "besovlab", version, about = "Besov and Kondratiev regularity toolkit")]
pub struct Cli {
    /// Output directory; nothing is written outside it.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// key=value file supplying defaults for unset flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a test field as a PSNP snapshot.
    Gen(GenArgs),
    /// Besov and Kondratiev norms of a snapshot.
    Norms(NormsArgs),
    /// Nonlinear and uniform approximation rates of a snapshot.
    Rates(RatesArgs),
    /// Pencil eigenvalues and admissible weight ranges.
    Pencil(PencilArgs),
    /// Heat or semilinear solve, writing snapshots.
    Solve(SolveArgs),
    /// Run acceptance check suites.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Singular,
    Bump,
    WaveletAtom,
    Manufactured,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: GenKind,
    #[arg(long)]
    pub level: Option<u32>,
    /// Geometry file (defaults to the unit square).
    #[arg(long)]
    pub geom: Option<PathBuf>,
    /// Exponent of `φ r^λ sin(λφ)`.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Bump center `x,y`.
    #[arg(long)]
    pub center: Option<String>,
    #[arg(long)]
    pub radius: Option<f64>,
    /// Atom level.
    #[arg(long)]
    pub j: Option<u32>,
    #[arg(long)]
    pub k1: Option<u32>,
    #[arg(long)]
    pub k2: Option<u32>,
    /// Atom type, 1..=3.
    #[arg(long = "type")]
    pub ty: Option<u8>,
    #[arg(long)]
    pub order: Option<usize>,
    /// Manufactured solution time.
    #[arg(long)]
    pub t: Option<f64>,
    /// Manufactured solution period `T` in `sin(πt/T)`.
    #[arg(long = "T")]
    pub t_end: Option<f64>,
}

#[derive(Args, Debug)]
pub struct NormsArgs {
    #[arg(long)]
    pub field: PathBuf,
    /// Semicolon-separated list, e.g.
    /// `besov:s=1.5,p=2,q=2;kondratiev:m=1,p=2,a=0.5;modulus:s=1,p=2,q=2,r=2`.
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub geom: Option<PathBuf>,
    #[arg(long)]
    pub order: Option<usize>,
    /// Coarser levels used for the Kondratiev stability flag.
    #[arg(long)]
    pub stability_levels: Option<u32>,
}

#[derive(Args, Debug)]
pub struct RatesArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub geom: Option<PathBuf>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub max_level: Option<u32>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Fit window `lo,hi` in N (defaults to the trimmed dyadic window).
    #[arg(long)]
    pub window: Option<String>,
}

#[derive(Args, Debug)]
pub struct PencilArgs {
    /// Cap half-angle, e.g. `90deg`.
    #[arg(long)]
    pub cap: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Edge openings, comma separated, e.g. `270deg`.
    #[arg(long)]
    pub wedge: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Smoothness γ; `γ_m = ⌊(γ-1)/2m⌋`.
    #[arg(long)]
    pub gamma: Option<usize>,
    /// Overrides the `γ_m` derived from `--gamma`.
    #[arg(long)]
    pub gamma_m: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long)]
    pub geom: Option<PathBuf>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long = "M")]
    pub power: Option<u32>,
    #[arg(long = "T")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub level: Option<u32>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Forcing expression in `x`, `y`, `t`.
    #[arg(long)]
    pub forcing: Option<String>,
    /// Ramp time for incompatible forcing; `0` disables the ramp.
    #[arg(long)]
    pub ramp: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Write every k-th time node (defaults to at most 17 snapshots).
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    /// Besov and Kondratiev sweep of the snapshot at `T/2`.
    #[arg(long)]
    pub analyze: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    MisscaledWeight,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// norms | pencil | rates | picard | all
    pub suite: String,
    /// Deliberately break an invariant to exercise failure reporting.
    #[arg(long, value_enum)]
    pub fault_hook: Option<FaultArg>,
    /// Grid level of the L-shape heat solve.
    #[arg(long)]
    pub heat_level: Option<u32>,
}

/// Flag > config file > default resolution, recording every value.
struct Params {
    config: BTreeMap<String, String>,
    manifest: RunManifest,
}

impl Params {
    fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + ToString,
    {
        let value = match flag {
            Some(v) => v,
            None => match self.config.get(key) {
                Some(s) => s
                    .parse::<T>()
                    .map_err(|_| Error::Parse(format!("config `{key}`: cannot parse `{s}`")))?,
                None => default,
            },
        };
        self.manifest.param(key, value.to_string());
        Ok(value)
    }

    fn get_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + ToString,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => self
                .config
                .get(key)
                .map(|s| {
                    s.parse::<T>()
                        .map_err(|_| Error::Parse(format!("config `{key}`: cannot parse `{s}`")))
                })
                .transpose()?,
        };
        if let Some(v) = &value {
            self.manifest.param(key, v.to_string());
        }
        Ok(value)
    }

    fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        let p = flag.or_else(|| self.config.get(key).map(PathBuf::from));
        if let Some(p) = &p {
            self.manifest.param(key, p.display());
            self.manifest.input(p)?;
        }
        Ok(p)
    }
}

/// Output directory plus the manifest, which is written before any output.
struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    fn begin(dir: &Path, manifest: &mut RunManifest, files: &[String]) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        manifest.outputs = files.iter().map(|f| dir.join(f)).collect();
        manifest.write(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn csv(&self, name: &str) -> Result<csv::Writer<std::fs::File>> {
        Ok(csv::WriterBuilder::new().flexible(true).from_path(self.file(name))?)
    }
}

fn geometry_or_square(path: Option<&Path>) -> Result<DomainGeometry> {
    match path {
        Some(p) => load_geometry(p),
        None => Ok(DomainGeometry::unit_square()),
    }
}

fn load_field(path: &Path, geom: &DomainGeometry) -> Result<SampledField> {
    Snapshot::load(path)?.to_field(geom.bbox)
}

/// Parses `kind:key=value,...` entries separated by `;`.
fn parse_norm_specs(s: &str) -> Result<Vec<(String, BTreeMap<String, f64>)>> {
    s.split(';')
        .map(str::trim)
        .filter(|e| !e.is_empty())
        .map(|entry| {
            let (kind, rest) = entry.split_once(':').unwrap_or((entry, ""));
            let mut kv = BTreeMap::new();
            for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("norm spec `{entry}`: expected key=value in `{part}`")))?;
                let v = match v.trim().to_ascii_lowercase().as_str() {
                    "inf" | "infinity" => f64::INFINITY,
                    other => other
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("norm spec `{entry}`: `{v}` is not a number")))?,
                };
                kv.insert(k.trim().to_ascii_lowercase(), v);
            }
            Ok((kind.trim().to_ascii_lowercase(), kv))
        })
        .collect()
}

fn need(kv: &BTreeMap<String, f64>, key: &str, kind: &str) -> Result<f64> {
    kv.get(key)
        .copied()
        .ok_or_else(|| Error::Parse(format!("{kind} spec needs `{key}`")))
}

fn write_norm_row<W: std::io::Write>(w: &mut csv::Writer<W>, r: &NormReport) -> Result<()> {
    w.write_record([
        r.method.tag().to_string(),
        fmt_f64(r.s_or_m),
        fmt_f64(r.p),
        fmt_f64(r.q_or_a),
        fmt_f64(r.value),
        r.flag.tag(),
        r.level.to_string(),
    ])?;
    Ok(())
}

fn cmd_gen(a: GenArgs, p: &mut Params, out: &Path) -> Result<()> {
    let geom_path = p.path("geom", a.geom)?;
    let geom = geometry_or_square(geom_path.as_deref())?;
    let level = p.get("level", a.level, 6)?;
    let files = vec!["field.psnp".to_string()];
    let (field, t) = match a.kind {
        GenKind::Singular => {
            let lambda = p.get("lambda", a.lambda, 2.0 / 3.0)?;
            let mask = rasterize(&geom, level)?;
            (SampledField::from_fn(&mask, cut_corner_singular(&geom, lambda)?), 0.0)
        }
        GenKind::Bump => {
            let default_center = [
                geom.bbox.min[0] + 0.5 * geom.bbox.side,
                geom.bbox.min[1] + 0.5 * geom.bbox.side,
            ];
            let center = match p.get_opt::<String>("center", a.center)? {
                Some(s) => parse_point(&s)?,
                None => default_center,
            };
            let radius = p.get("radius", a.radius, 0.3 * geom.bbox.side)?;
            if !(radius > 0.0) {
                return Err(Error::InvalidParameter(format!("bump radius {radius} must be positive")));
            }
            let mask = rasterize(&geom, level)?;
            (SampledField::from_fn(&mask, bump(center, radius)), 0.0)
        }
        GenKind::WaveletAtom => {
            let order = p.get("order", a.order, 4)?;
            let j = p.get("j", a.j, 4)?;
            let k1 = p.get("k1", a.k1, 0)?;
            let k2 = p.get("k2", a.k2, 0)?;
            let ty = p.get("type", a.ty, 1)?;
            let sys = WaveletSystem::new(order)?;
            let shape = CoeffTree::empty(order, 2, geom.bbox, 1usize << level, 0)?;
            let idx = WaveletIndex::new(j, k1, k2, ty);
            if !shape.is_valid(&idx) {
                return Err(Error::InvalidParameter(format!(
                    "atom (j={j}, k=({k1},{k2}), type={ty}) is not an index of a level-{level} tree"
                )));
            }
            (synthesize_atom(&shape, &idx, &sys)?, 0.0)
        }
        GenKind::Manufactured => {
            let t_end = p.get("T", a.t_end, 0.25)?;
            let t = p.get("t", a.t, 0.5 * t_end)?;
            let w = BoxProfile {
                min: geom.bbox.min,
                side: geom.bbox.side,
            };
            let mask = rasterize(&geom, level)?;
            let s = (PI * t / t_end).sin();
            (SampledField::from_fn(&mask, |x| s * w.value(x)), t)
        }
    };
    p.manifest.param("kind", format!("{:?}", a.kind).to_ascii_lowercase());
    let dirs = Outputs::begin(out, &mut p.manifest, &files)?;
    Snapshot::from_field(&field, t).save(&dirs.file("field.psnp"))?;
    println!("wrote {} (level {level}, max |u| = {})", dirs.file("field.psnp").display(), fmt_f64(field.max_abs()));
    Ok(())
}

fn cmd_norms(a: NormsArgs, p: &mut Params, out: &Path) -> Result<()> {
    p.manifest.input(&a.field)?;
    p.manifest.param("field", a.field.display());
    let geom_path = p.path("geom", a.geom)?;
    let geom = geometry_or_square(geom_path.as_deref())?;
    let spec = p.get("spec", a.spec, "besov:s=1,p=2,q=2".to_string())?;
    let order = p.get("order", a.order, 4)?;
    let extra = p.get("stability-levels", a.stability_levels, 3)?;
    let specs = parse_norm_specs(&spec)?;
    let mut field = load_field(&a.field, &geom)?;
    let level = field.grid.level;
    let sys = WaveletSystem::new(order)?;
    let dirs = Outputs::begin(out, &mut p.manifest, &["norms.csv".into(), "norm_levels.csv".into()])?;
    let tree = dwt_forward(&field, &sys, level)?;
    let mut rows = csv::Writer::from_path(dirs.file("norms.csv"))?;
    rows.write_record(["method", "s_or_m", "p", "q_or_a", "value", "flag", "level"])?;
    let mut levels = csv::Writer::from_path(dirs.file("norm_levels.csv"))?;
    levels.write_record(["entry", "method", "level", "sum_p", "term"])?;
    if !geom.is_metadata_only() {
        field.mask = rasterize(&geom, level)?.inside;
    }
    for (i, (kind, kv)) in specs.iter().enumerate() {
        let report = match kind.as_str() {
            "besov" | "modulus" => {
                let s = need(kv, "s", kind)?;
                let pp = kv.get("p").copied().unwrap_or(2.0);
                let q = kv.get("q").copied().unwrap_or(pp);
                let bspec = BesovSpec::new(s, pp, q, 2)?;
                if kind == "besov" {
                    besov_norm_wavelet(&tree, &bspec)?
                } else {
                    let r = kv.get("r").copied().unwrap_or(s.floor() + 1.0) as usize;
                    besov_norm_modulus(&Snapshot::load(&a.field)?.to_field(geom.bbox)?, &bspec, r)?
                }
            }
            "kondratiev" => {
                let m = need(kv, "m", kind)? as usize;
                let pp = kv.get("p").copied().unwrap_or(2.0);
                let aw = need(kv, "a", kind)?;
                let kspec = KondratievSpec::new(m, pp, aw)?;
                let opts = KondratievOptions {
                    mode: if kv.get("boundary").copied().unwrap_or(0.0) != 0.0 {
                        WeightMode::FullBoundary
                    } else {
                        WeightMode::SingularSet
                    },
                    ..KondratievOptions::default()
                };
                let mut report = kondratiev_norm_with(&field, &geom, &kspec, &opts)?;
                // refinement stability over restrictions of the input
                let mut coarse = vec![report.value];
                let mut f = field.clone();
                for _ in 0..extra.min(level.saturating_sub(2)) {
                    f = f.restrict()?;
                    f.mask = rasterize(&geom, f.grid.level)?.inside;
                    coarse.push(kondratiev_norm_with(&f, &geom, &kspec, &opts)?.value);
                }
                coarse.reverse();
                report.flag = refinement_stability(&coarse).flag();
                report
            }
            other => return Err(Error::Parse(format!("unknown norm kind `{other}`"))),
        };
        write_norm_row(&mut rows, &report)?;
        for t in &report.per_level {
            levels.write_record([
                i.to_string(),
                report.method.tag().to_string(),
                t.level.to_string(),
                fmt_f64(t.sum_p),
                fmt_f64(t.term),
            ])?;
        }
        println!(
            "{} s_or_m={} p={} q_or_a={}: {} [{}]",
            report.method.tag(),
            report.s_or_m,
            report.p,
            report.q_or_a,
            fmt_f64(report.value),
            report.flag.tag()
        );
    }
    rows.flush()?;
    levels.flush()?;
    Ok(())
}

fn write_rates(dirs: &Outputs, name: &str, r: &RateReport) -> Result<()> {
    let mut w = dirs.csv(name)?;
    w.write_record(["method", "N", "error"])?;
    for (n, e) in &r.pairs {
        w.write_record([r.method.tag().to_string(), n.to_string(), fmt_f64(*e)])?;
    }
    w.write_record(["alpha", "residual"])?;
    w.write_record([fmt_f64(r.alpha), fmt_f64(r.residual)])?;
    w.flush()?;
    Ok(())
}

fn cmd_rates(a: RatesArgs, p: &mut Params, out: &Path) -> Result<()> {
    p.manifest.input(&a.field)?;
    p.manifest.param("field", a.field.display());
    let geom_path = p.path("geom", a.geom)?;
    let geom = geometry_or_square(geom_path.as_deref())?;
    let order = p.get("order", a.order, 4)?;
    let max_level = p.get("max-level", a.max_level, 10)?;
    let pp = p.get("p", a.p, 2.0)?;
    let window = match p.get_opt::<String>("window", a.window)? {
        Some(s) => {
            let (lo, hi) = s
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("window `{s}` must be lo,hi")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("window bound `{v}` is not an integer")))
            };
            Some((parse(lo)?, parse(hi)?))
        }
        None => None,
    };
    let field = load_field(&a.field, &geom)?;
    let depth = field.grid.level.min(max_level);
    let dirs = Outputs::begin(
        out,
        &mut p.manifest,
        &["rates_nonlinear.csv".into(), "rates_uniform.csv".into()],
    )?;
    let tree = dwt_forward(&field, &WaveletSystem::new(order)?, depth)?;
    let nl = nonlinear_rate(&tree, pp, window)?;
    let un = uniform_rate(&tree, pp, window)?;
    write_rates(&dirs, "rates_nonlinear.csv", &nl)?;
    write_rates(&dirs, "rates_uniform.csv", &un)?;
    println!(
        "nonlinear alpha = {} (window {:?}), uniform alpha = {} (window {:?})",
        fmt_f64(nl.alpha),
        nl.window,
        fmt_f64(un.alpha),
        un.window
    );
    Ok(())
}

fn cmd_pencil(a: PencilArgs, p: &mut Params, out: &Path) -> Result<()> {
    let cap = p.get_opt::<String>("cap", a.cap)?;
    let wedge = p.get_opt::<String>("wedge", a.wedge)?;
    let count = p.get("count", a.count, 5)?;
    let gamma = p.get_opt::<usize>("gamma", a.gamma)?;
    let gm_override = p.get_opt::<usize>("gamma-m", a.gamma_m)?;
    if cap.is_none() && wedge.is_none() {
        return Err(Error::InvalidParameter("pencil needs --cap or --wedge".into()));
    }
    let with_range = gamma.is_some() || gm_override.is_some();
    let m = if with_range { p.get("m", a.m, 1)? } else { 1 };
    let mut files = Vec::new();
    if cap.is_some() {
        files.push("pencil_cap.csv".to_string());
    }
    if wedge.is_some() {
        files.push("pencil_wedge.csv".to_string());
    }
    if with_range {
        files.push("weight_range.csv".to_string());
    }
    let cap_angle = cap.as_deref().map(parse_angle).transpose()?;
    let thetas: Vec<f64> = match &wedge {
        Some(s) => s.split(',').map(parse_angle).collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let dirs = Outputs::begin(out, &mut p.manifest, &files)?;
    let mut vertex = None;
    if let Some(theta0) = cap_angle {
        let mut w = dirs.csv("pencil_cap.csv")?;
        w.write_record(["index", "lb_eigenvalue", "lambda_minus", "lambda_plus"])?;
        for (i, lb) in cap_lb_eigenvalues(theta0, count)?.into_iter().enumerate() {
            let (lm, lp) = pencil_eigenvalues_from_lb(lb);
            w.write_record([(i + 1).to_string(), fmt_f64(lb), fmt_f64(lm), fmt_f64(lp)])?;
            println!("k={} Lambda={} lambda-={} lambda+={}", i + 1, fmt_f64(lb), fmt_f64(lm), fmt_f64(lp));
        }
        w.flush()?;
        vertex = Some(PencilSpec::cap(theta0, count)?);
    }
    if !thetas.is_empty() {
        let mut w = dirs.csv("pencil_wedge.csv")?;
        w.write_record(["theta", "delta_minus", "delta_plus"])?;
        for &t in &thetas {
            let (dm, dp) = wedge_delta(t)?;
            w.write_record([fmt_f64(t), fmt_f64(dm), fmt_f64(dp)])?;
            println!("theta={} delta-={} delta+={}", fmt_f64(t), fmt_f64(dm), fmt_f64(dp));
        }
        w.flush()?;
    }
    if with_range {
        let gm = match gm_override {
            Some(g) => g,
            None => gamma_m(gamma.expect("gamma set"), m)?,
        };
        let r = admissible_weight_range(m, gm, &thetas, vertex.as_ref())?;
        let mut w = dirs.csv("weight_range.csv")?;
        w.write_record([
            "m",
            "gamma",
            "gamma_m",
            "lower",
            "lower_closed",
            "lower_constraint",
            "upper",
            "upper_closed",
            "upper_constraint",
            "feasible",
            "interval",
        ])?;
        w.write_record([
            m.to_string(),
            gamma.map_or(String::new(), |g| g.to_string()),
            gm.to_string(),
            fmt_f64(r.lower.value),
            r.lower.closed.to_string(),
            r.lower.constraint.tag().to_string(),
            fmt_f64(r.upper.value),
            r.upper.closed.to_string(),
            r.upper.constraint.tag().to_string(),
            r.feasible.to_string(),
            r.notation(),
        ])?;
        w.flush()?;
        println!("admissible a: {}", r.notation());
    }
    Ok(())
}

fn cmd_solve(a: SolveArgs, p: &mut Params, out: &Path) -> Result<()> {
    let geom_path = p.path("geom", a.geom)?;
    let geom = geometry_or_square(geom_path.as_deref())?;
    let eps = p.get("eps", a.eps, 0.0)?;
    let power = p.get("M", a.power, 2)?;
    let t_end = p.get("T", a.t_end, 1.0)?;
    let level = p.get("level", a.level, 8)?;
    let h = geom.bbox.side / (1u64 << level) as f64;
    let default_dt = t_end / (t_end / (4.0 * h)).ceil().max(1.0);
    let dt = p.get("dt", a.dt, default_dt)?;
    let forcing_src = p.get("forcing", a.forcing, "t".to_string())?;
    let ramp = p.get("ramp", a.ramp, 0.1 * t_end)?;
    let tol = p.get("tol", a.tol, 1e-10)?;
    let max_iter = p.get("max-iter", a.max_iter, 200)?;
    let mut cfg = SolverConfig::new(geom.clone(), level, dt, t_end);
    cfg.forcing = Forcing::expression(&forcing_src)?;
    cfg.eps = eps;
    cfg.power = power;
    cfg.picard_tol = tol;
    cfg.picard_max_iter = max_iter;
    cfg.ramp = if ramp > 0.0 { Ramp::Auto { t_ramp: ramp } } else { Ramp::Off };
    cfg.validate()?;
    let steps = cfg.steps();
    let every = p.get("snapshot-every", a.snapshot_every, steps.div_ceil(16).max(1))?.max(1);
    p.manifest.param("analyze", a.analyze);
    let nodes: Vec<usize> = (0..=steps).filter(|n| n % every == 0 || *n == steps).collect();
    let mut files: Vec<String> = nodes.iter().map(|n| format!("snap_{n:05}.psnp")).collect();
    files.push("summary.csv".into());
    if eps > 0.0 {
        files.push("picard.csv".into());
    }
    if a.analyze {
        files.push("analysis.csv".into());
    }
    let dirs = Outputs::begin(out, &mut p.manifest, &files)?;
    let mut summary: Vec<(String, String)> = Vec::new();
    let traj: Trajectory = if eps > 0.0 {
        let (traj, trace) = picard_semilinear(&cfg)?;
        let mut w = dirs.csv("picard.csv")?;
        w.write_record(["iteration", "residual"])?;
        for (i, r) in trace.residuals.iter().enumerate() {
            w.write_record([(i + 1).to_string(), fmt_f64(*r)])?;
        }
        w.flush()?;
        summary.extend([
            ("eta".into(), fmt_f64(trace.eta)),
            ("inverse_norm".into(), fmt_f64(trace.inverse_norm)),
            ("max_epsilon".into(), fmt_f64(trace.eps_bound.value)),
            ("eps_branch".into(), format!("{:?}", trace.eps_bound.branch).to_ascii_lowercase()),
            ("q".into(), fmt_f64(trace.q)),
            ("radius".into(), fmt_f64(trace.radius)),
            ("max_distance".into(), fmt_f64(trace.max_distance)),
            ("iterations".into(), trace.residuals.len().to_string()),
        ]);
        if eps > trace.eps_bound.value {
            log::warn!(
                "eps = {eps} exceeds the sufficient bound {}; contraction was verified empirically",
                trace.eps_bound.value
            );
        }
        traj
    } else {
        linear_solve(&cfg)?
    };
    summary.push(("defect".into(), fmt_f64(defect_norm(&cfg, &traj)?)));
    summary.push(("l2_kt_norm".into(), fmt_f64(traj.l2_norm())));
    summary.push(("steps".into(), steps.to_string()));
    summary.push(("dt".into(), fmt_f64(dt)));
    for n in &nodes {
        Snapshot::from_field(&traj.field(*n), *n as f64 * dt).save(&dirs.file(&format!("snap_{n:05}.psnp")))?;
    }
    let mut w = dirs.csv("summary.csv")?;
    w.write_record(["key", "value"])?;
    for (k, v) in &summary {
        w.write_record([k, v])?;
    }
    w.flush()?;
    if a.analyze {
        let lo = 3.min(level.saturating_sub(3));
        let opts = SnapshotOptions::new(lo..=level.saturating_sub(2).max(lo + 1));
        let t_half = (steps / 2) as f64 * dt;
        let rep = snapshot_analysis(&traj, t_half, &geom, &opts)?;
        let mut w = dirs.csv("analysis.csv")?;
        w.write_record(["method", "s_or_m", "p", "q_or_a", "value", "flag", "level"])?;
        for r in rep.besov.iter().chain(&rep.kondratiev) {
            write_norm_row(&mut w, r)?;
        }
        w.write_record(["s_hat", &fmt_f64(rep.s_hat.value), "", "", "", "", ""])?;
        w.write_record(["eta_hat", &fmt_f64(rep.eta_hat.value), "", "", "", "", ""])?;
        w.flush()?;
        println!("t={}: s_hat={} eta_hat={}", fmt_f64(rep.time), fmt_f64(rep.s_hat.value), fmt_f64(rep.eta_hat.value));
    }
    for (k, v) in &summary {
        println!("{k} = {v}");
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs, p: &mut Params, out: &Path) -> Result<i32> {
    let suite: Suite = a.suite.parse()?;
    p.manifest.param("suite", a.suite.to_ascii_lowercase());
    let heat_level = p.get("heat-level", a.heat_level, VerifyConfig::default().heat_level)?;
    let fault = a.fault_hook.map(|FaultArg::MisscaledWeight| FaultHook::MisscaledWeight);
    if fault.is_some() {
        p.manifest.param("fault-hook", "misscaled-weight");
    }
    let dirs = Outputs::begin(out, &mut p.manifest, &["verify.csv".into()])?;
    let results = run_suite(suite, &VerifyConfig { heat_level, fault });
    let mut w = dirs.csv("verify.csv")?;
    w.write_record(["id", "name", "passed", "seconds", "detail"])?;
    for r in &results {
        println!("{}", r.line());
        w.write_record([
            r.id.clone(),
            r.name.clone(),
            r.passed.to_string(),
            format!("{:.3}", r.seconds),
            r.detail.clone(),
        ])?;
    }
    w.flush()?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.id.as_str()).collect();
    if failed.is_empty() {
        println!("{} checks passed", results.len());
        Ok(EXIT_OK)
    } else {
        for r in results.iter().filter(|r| !r.passed) {
            println!("failed: {} ({})", r.id, r.name);
        }
        Ok(EXIT_CHECK_FAILED)
    }
}

/// Applies `BESOVLAB_THREADS` to the global thread pool.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("BESOVLAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("BESOVLAB_THREADS=`{v}` is not a positive integer")))?;
        if n == 0 {
            return Err(Error::Parse("BESOVLAB_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::InvalidParameter(_) | Error::InvalidGeometry(_) | Error::Io(_) => EXIT_USAGE,
        _ => EXIT_COMPUTE,
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = (|| -> Result<i32> {
        let config = match &cli.config {
            Some(path) => parse_kv(&std::fs::read_to_string(path)?)?,
            None => BTreeMap::new(),
        };
        let name = match &cli.command {
            Command::Gen(_) => "gen",
            Command::Norms(_) => "norms",
            Command::Rates(_) => "rates",
            Command::Pencil(_) => "pencil",
            Command::Solve(_) => "solve",
            Command::Verify(_) => "verify",
        };
        let mut params = Params {
            config,
            manifest: RunManifest::new(name),
        };
        if let Some(path) = &cli.config {
            params.manifest.input(path)?;
        }
        let out = cli.out.clone();
        match cli.command {
            Command::Gen(a) => cmd_gen(a, &mut params, &out).map(|_| EXIT_OK),
            Command::Norms(a) => cmd_norms(a, &mut params, &out).map(|_| EXIT_OK),
            Command::Rates(a) => cmd_rates(a, &mut params, &out).map(|_| EXIT_OK),
            Command::Pencil(a) => cmd_pencil(a, &mut params, &out).map(|_| EXIT_OK),
            Command::Solve(a) => cmd_solve(a, &mut params, &out).map(|_| EXIT_OK),
            Command::Verify(a) => cmd_verify(a, &mut params, &out),
        }
    })();
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_spec_parsing() {
        let s = parse_norm_specs("besov:s=1.5,p=2,q=inf; kondratiev:m=1,p=2,a=0.5").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].0, "besov");
        assert_eq!(s[0].1["q"], f64::INFINITY);
        assert_eq!(s[1].1["a"], 0.5);
        assert!(parse_norm_specs("besov:s").is_err());
    }

    #[test]
    fn precedence_flag_config_default() {
        let mut p = Params {
            config: [("level".to_string(), "7".to_string()), ("eps".to_string(), "0.5".to_string())].into(),
            manifest: RunManifest::new("solve"),
        };
        assert_eq!(p.get("level", Some(9u32), 8).unwrap(), 9);
        assert_eq!(p.get("level", None, 8u32).unwrap(), 7);
        assert_eq!(p.get("T", None, 1.0).unwrap(), 1.0);
        assert_eq!(p.get("eps", None, 0.0).unwrap(), 0.5);
        assert_eq!(p.manifest.params["level"], "7");
        p.config.insert("order".into(), "four".into());
        assert!(p.get("order", None, 4usize).is_err());
    }

    #[test]
    fn command_line_parses() {
        let cli = Cli::try_parse_from([
            "besovlab", "solve", "--geom", "g.txt", "--eps", "0.01", "--M", "2", "--T", "1.0", "--level", "8", "--out", "d",
        ])
        .unwrap();
        assert_eq!(cli.out, PathBuf::from("d"));
        match cli.command {
            Command::Solve(a) => {
                assert_eq!(a.power, Some(2));
                assert_eq!(a.t_end, Some(1.0));
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["besovlab", "pencil", "--cap", "90deg", "--count", "5"]).is_ok());
        assert!(Cli::try_parse_from(["besovlab", "gen", "--kind", "wavelet-atom"]).is_ok());
        assert!(Cli::try_parse_from(["besovlab", "verify", "norms", "--fault-hook", "misscaled-weight"]).is_ok());
    }
}
