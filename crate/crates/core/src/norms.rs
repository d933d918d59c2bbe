//! Besov, Sobolev and Kondratiev norms of sampled fields.
//!
//! Wavelet Besov norms read the coefficient tree directly. Level weights use
//! box-relative levels, `2^{j(s + d(1/2 - 1/p))}`, which differ from the
//! absolute-scale weights by a fixed factor only.
//!
//! Derivatives for the Sobolev and Kondratiev quadratures come from
//! Fornberg weights on windows that stay inside the mask: centered where
//! possible, otherwise shifted by one extra node. Cells where no window fits
//! are skipped.

use crate::error::{Error, Result};
use crate::field::{Point, SampledField};
use crate::geometry::{DomainGeometry, WeightMode};
use crate::numerics::{abs_pow, binomial, fd_weights, linear_fit, pairwise_sum};
use crate::wavelet::CoeffTree;
use rayon::prelude::*;

/// Relative growth per level above which a refinement sequence counts as growing.
pub const GROWTH_TOLERANCE: f64 = 0.05;
/// Number of consecutive growing levels that flags divergence.
pub const GROWTH_RUN: usize = 3;
/// Largest derivative order supported by the quadratures.
pub const MAX_DERIVATIVE_ORDER: usize = 4;
/// Coefficients below this fraction of the largest one are treated as
/// round-off in quasi-norms with `p < 1`.
pub const COEFF_NOISE_FLOOR: f64 = 1e-14;

/// `τ` with `1/τ = r/d + 1/p`.
pub fn adaptivity_tau(r: f64, d: usize, p: f64) -> f64 {
    1.0 / (r / d as f64 + 1.0 / p)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptivityPoint {
    pub r: f64,
    pub d: usize,
    pub p: f64,
    pub tau: f64,
}

impl AdaptivityPoint {
    pub fn new(r: f64, d: usize, p: f64) -> Result<Self> {
        if d == 0 || p <= 0.0 || r < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "adaptivity point needs r >= 0, d >= 1, p > 0 (r={r}, d={d}, p={p})"
            )));
        }
        Ok(Self {
            r,
            d,
            p,
            tau: adaptivity_tau(r, d, p),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BesovSpec {
    pub s: f64,
    pub p: f64,
    /// `f64::INFINITY` selects the supremum over levels.
    pub q: f64,
    pub d: usize,
}

impl BesovSpec {
    pub fn new(s: f64, p: f64, q: f64, d: usize) -> Result<Self> {
        let spec = Self { s, p, q, d };
        spec.validate()?;
        Ok(spec)
    }

    /// Member of the adaptivity scale `B^s_{τ,τ}` over `L_p`.
    pub fn adaptivity(s: f64, p: f64, d: usize) -> Result<Self> {
        let tau = adaptivity_tau(s, d, p);
        Self::new(s, tau, tau, d)
    }

    pub fn validate(&self) -> Result<()> {
        let lower = (self.d as f64 * (1.0 / self.p - 1.0)).max(0.0);
        if !(self.p > 0.0 && self.p.is_finite() && self.q > 0.0 && (self.d == 1 || self.d == 2)) {
            return Err(Error::InvalidParameter(format!(
                "Besov spec needs p in (0, inf), q in (0, inf], d in {{1, 2}}: {self:?}"
            )));
        }
        if !(self.s > lower) {
            return Err(Error::InvalidParameter(format!(
                "smoothness {} must exceed max(0, d(1/p - 1)) = {lower}",
                self.s
            )));
        }
        Ok(())
    }

    /// Exponent of the level weight `2^{j(s + d(1/2 - 1/p))}`.
    pub fn level_exponent(&self) -> f64 {
        self.s + self.d as f64 * (0.5 - 1.0 / self.p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KondratievSpec {
    pub m: usize,
    pub p: f64,
    pub a: f64,
}

impl KondratievSpec {
    pub fn new(m: usize, p: f64, a: f64) -> Result<Self> {
        if m > MAX_DERIVATIVE_ORDER {
            return Err(Error::InvalidParameter(format!(
                "derivative order {m} exceeds {MAX_DERIVATIVE_ORDER}"
            )));
        }
        if !(p > 1.0 && p.is_finite()) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Kondratiev spec needs p in (1, inf) and finite a (p={p}, a={a})"
            )));
        }
        Ok(Self { m, p, a })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMethod {
    Wavelet,
    Modulus,
    Quadrature,
}

impl NormMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            NormMethod::Wavelet => "wavelet",
            NormMethod::Modulus => "modulus",
            NormMethod::Quadrature => "quadrature",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormFlag {
    Finite,
    /// Fails the refinement-stability test; `exponent` is the fitted log2
    /// growth rate of the increments per level.
    Divergent { exponent: f64 },
}

impl NormFlag {
    pub fn is_divergent(&self) -> bool {
        matches!(self, NormFlag::Divergent { .. })
    }

    pub fn tag(&self) -> String {
        match self {
            NormFlag::Finite => "finite".to_string(),
            NormFlag::Divergent { exponent } => format!("divergent({exponent:.6})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelTerm {
    pub level: u32,
    /// `Σ |c|^p` over the level.
    pub sum_p: f64,
    /// Weighted level term entering the outer `ℓ_q` sum.
    pub term: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormReport {
    pub value: f64,
    pub method: NormMethod,
    pub s_or_m: f64,
    pub p: f64,
    pub q_or_a: f64,
    /// Father (coarse scaling) block, reported separately.
    pub father: f64,
    pub per_level: Vec<LevelTerm>,
    /// Quadrature contributions `∫ ρ^{p(k-a)} Σ_{|α|=k} |D^α u|^p` by order `k`.
    pub per_order: Vec<f64>,
    /// Grid level of the source field.
    pub level: u32,
    pub flag: NormFlag,
}

/// Outcome of a refinement (or level-accumulation) stability test.
#[derive(Clone, Debug, PartialEq)]
pub struct Stability {
    /// Relative growth `v_i / v_{i-1} - 1`.
    pub growth: Vec<f64>,
    /// Least-squares slope of `log2 |v_i - v_{i-1}|`.
    pub exponent: f64,
    pub divergent: bool,
}

impl Stability {
    pub fn flag(&self) -> NormFlag {
        if self.divergent {
            NormFlag::Divergent {
                exponent: self.exponent,
            }
        } else {
            NormFlag::Finite
        }
    }
}

/// Refinement-stability test on a sequence indexed by consecutive levels.
/// Divergent when the last [`GROWTH_RUN`] relative growths all exceed
/// [`GROWTH_TOLERANCE`], or when the increments stop shrinking while the
/// sequence still grows.
pub fn refinement_stability(values: &[f64]) -> Stability {
    let growth: Vec<f64> = values
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] - 1.0 } else if w[1] > 0.0 { f64::INFINITY } else { 0.0 })
        .collect();
    let incs: Vec<(f64, f64)> = values
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| {
            let d = (w[1] - w[0]).abs();
            (d > 0.0).then(|| (i as f64, d.log2()))
        })
        .collect();
    let exponent = if incs.len() >= 2 {
        let xs: Vec<f64> = incs.iter().map(|e| e.0).collect();
        let ys: Vec<f64> = incs.iter().map(|e| e.1).collect();
        linear_fit(&xs, &ys).0
    } else {
        growth.last().map(|g| (1.0 + g.max(-0.999)).log2()).unwrap_or(0.0)
    };
    let run = growth.len() >= GROWTH_RUN
        && growth[growth.len() - GROWTH_RUN..]
            .iter()
            .all(|g| *g > GROWTH_TOLERANCE);
    let stalled = incs.len() >= GROWTH_RUN
        && exponent >= 0.0
        && growth.last().copied().unwrap_or(0.0) > 1e-3;
    Stability {
        growth,
        exponent,
        divergent: run || stalled,
    }
}

fn lp_sum_floored(values: &[f64], p: f64, floor: f64) -> f64 {
    let terms: Vec<f64> = values
        .iter()
        .filter(|c| c.abs() > floor)
        .map(|c| abs_pow(*c, p))
        .collect();
    pairwise_sum(&terms)
}

fn max_abs_coeff(tree: &CoeffTree) -> f64 {
    tree.entries().iter().fold(0.0f64, |m, e| m.max(e.1.abs()))
}

fn combine_levels(terms: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        terms.iter().fold(0.0f64, |m, t| m.max(*t))
    } else {
        let powered: Vec<f64> = terms.iter().map(|t| abs_pow(*t, q)).collect();
        pairwise_sum(&powered).powf(1.0 / q)
    }
}

/// Wavelet-coefficient Besov (quasi-)norm: father `ℓ_p` block plus the
/// `ℓ_q` sum of weighted level `ℓ_p` norms.
pub fn besov_norm_wavelet(tree: &CoeffTree, spec: &BesovSpec) -> Result<NormReport> {
    if tree.order as f64 <= spec.s {
        return Err(Error::InsufficientVanishingMoments {
            order: tree.order,
            smoothness: spec.s,
        });
    }
    spec.validate()?;
    if spec.d != tree.dim {
        return Err(Error::InvalidParameter(format!(
            "spec dimension {} does not match tree dimension {}",
            spec.d, tree.dim
        )));
    }
    let p = spec.p;
    let floor = if p < 1.0 {
        COEFF_NOISE_FLOOR * max_abs_coeff(tree)
    } else {
        0.0
    };
    let d = spec.d as f64;
    let father_vals = tree.father_values();
    let father_weight = 2f64.powf(tree.coarsest as f64 * d * (0.5 - 1.0 / p));
    let father = father_weight * lp_sum_floored(&father_vals, p, floor).powf(1.0 / p);
    let e = spec.level_exponent();
    let per_level: Vec<LevelTerm> = tree
        .detail_levels()
        .map(|j| {
            let sum_p = lp_sum_floored(&tree.level_values(j), p, floor);
            let term = 2f64.powf(j as f64 * e) * sum_p.powf(1.0 / p);
            LevelTerm {
                level: j,
                sum_p,
                term,
            }
        })
        .collect();
    let terms: Vec<f64> = per_level.iter().map(|t| t.term).collect();
    let partials: Vec<f64> = (1..=terms.len())
        .map(|k| father + combine_levels(&terms[..k], spec.q))
        .collect();
    let value = father + combine_levels(&terms, spec.q);
    let flag = refinement_stability(&partials).flag();
    Ok(NormReport {
        value,
        method: NormMethod::Wavelet,
        s_or_m: spec.s,
        p,
        q_or_a: spec.q,
        father,
        per_level,
        per_order: Vec::new(),
        level: tree.finest,
        flag,
    })
}

/// Slope in `j` of `log2` of the level terms over `levels`.
pub fn level_term_slope(tree: &CoeffTree, spec: &BesovSpec, levels: std::ops::RangeInclusive<u32>) -> Result<f64> {
    let floor = if spec.p < 1.0 {
        COEFF_NOISE_FLOOR * max_abs_coeff(tree)
    } else {
        0.0
    };
    let e = spec.level_exponent();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in levels {
        if j < tree.coarsest || j >= tree.finest {
            return Err(Error::InsufficientResolution {
                requested: j,
                available: tree.finest,
            });
        }
        let sum_p = lp_sum_floored(&tree.level_values(j), spec.p, floor);
        if sum_p > 0.0 {
            xs.push(j as f64);
            ys.push(j as f64 * e + sum_p.log2() / spec.p);
        }
    }
    if xs.len() < 2 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(linear_fit(&xs, &ys).0)
}

/// Which smoothness scale the critical-smoothness estimate sweeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SmoothnessScale {
    /// `B^s_{p,p}` for fixed `p` (Sobolev scale when `p = 2`).
    Fixed { p: f64 },
    /// Adaptivity scale `B^s_{τ,τ}`, `1/τ = s/d + 1/p`.
    Adaptivity { p: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalSmoothness {
    /// Largest `s` with decaying level terms (capped just below the wavelet order).
    pub value: f64,
    pub saturated: bool,
    /// `(s, slope)` samples from the scan.
    pub scan: Vec<(f64, f64)>,
}

/// `sup { s : level terms decay over the fit window }`, located by a scan
/// followed by bisection.
pub fn critical_smoothness(
    tree: &CoeffTree,
    scale: SmoothnessScale,
    levels: std::ops::RangeInclusive<u32>,
) -> Result<CriticalSmoothness> {
    let d = tree.dim;
    let s_max = tree.order as f64 - 1e-6;
    let spec_at = |s: f64| -> BesovSpec {
        match scale {
            SmoothnessScale::Fixed { p } => BesovSpec { s, p, q: p, d },
            SmoothnessScale::Adaptivity { p } => {
                let tau = adaptivity_tau(s, d, p);
                BesovSpec { s, p: tau, q: tau, d }
            }
        }
    };
    let slope = |s: f64| level_term_slope(tree, &spec_at(s), levels.clone());
    let step = 0.05;
    let mut scan = Vec::new();
    let mut lo = 1e-6;
    let s0 = slope(lo)?;
    scan.push((lo, s0));
    if s0 >= 0.0 {
        return Ok(CriticalSmoothness {
            value: 0.0,
            saturated: false,
            scan,
        });
    }
    let mut hi = None;
    let mut s = step;
    while s <= s_max {
        let v = slope(s)?;
        scan.push((s, v));
        if v >= 0.0 {
            hi = Some(s);
            break;
        }
        lo = s;
        s += step;
    }
    let Some(mut hi) = hi else {
        return Ok(CriticalSmoothness {
            value: s_max,
            saturated: true,
            scan,
        });
    };
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if slope(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalSmoothness {
        value: 0.5 * (lo + hi),
        saturated: false,
        scan,
    })
}

/// Difference directions: axes and diagonals, both signs.
const DIRECTIONS: [(i64, i64); 8] = [
    (1, 0),
    (0, 1),
    (1, 1),
    (1, -1),
    (-1, 0),
    (0, -1),
    (-1, -1),
    (-1, 1),
];

/// `‖Δ_h^r f‖_{L_p}` for a grid step `h = (hx, hy)` (in cells), over points
/// whose whole difference chain stays inside the mask.
fn difference_norm(field: &SampledField, r: usize, hx: i64, hy: i64, p: f64) -> f64 {
    let n = field.grid.n as i64;
    let coef: Vec<f64> = (0..=r)
        .map(|i| {
            let sign = if (r - i) % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(r, i)
        })
        .collect();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|iy| {
            let mut acc = 0.0f64;
            for ix in 0..n {
                let mut delta = 0.0;
                let mut ok = true;
                for (i, c) in coef.iter().enumerate() {
                    let x = ix + i as i64 * hx;
                    let y = iy + i as i64 * hy;
                    if x < 0 || y < 0 || x >= n || y >= n || !field.inside(x as usize, y as usize) {
                        ok = false;
                        break;
                    }
                    delta += c * field.at(x as usize, y as usize);
                }
                if ok {
                    if p.is_infinite() {
                        acc = acc.max(delta.abs());
                    } else {
                        acc += abs_pow(delta, p);
                    }
                }
            }
            acc
        })
        .collect();
    if p.is_infinite() {
        rows.into_iter().fold(0.0, f64::max)
    } else {
        (pairwise_sum(&rows) * field.grid.cell_area()).powf(1.0 / p)
    }
}

/// Sampled steps `(|h|, hx, hy)` in 8 directions with dyadic magnitudes.
fn sampled_steps(field: &SampledField) -> Vec<(f64, i64, i64)> {
    let h = field.grid.spacing();
    let n = field.grid.n as i64;
    let mut out = Vec::new();
    let mut mag = 1i64;
    while mag < n {
        for (dx, dy) in DIRECTIONS {
            let len = h * mag as f64 * ((dx * dx + dy * dy) as f64).sqrt();
            out.push((len, dx * mag, dy * mag));
        }
        mag *= 2;
    }
    out
}

/// `ω_r(f, t)_p`: sup of `‖Δ_h^r f‖_p` over sampled steps with `|h| ≤ t`.
pub fn modulus_of_smoothness(field: &SampledField, r: usize, t: f64, p: f64) -> f64 {
    assert!(r >= 1, "modulus order must be at least 1");
    sampled_steps(field)
        .into_iter()
        .filter(|(len, _, _)| *len <= t * (1.0 + 1e-12))
        .map(|(_, hx, hy)| difference_norm(field, r, hx, hy, p))
        .fold(0.0, f64::max)
}

/// Modulus-of-smoothness Besov norm: `‖f‖_p` plus the dyadic Riemann sum
/// `(Σ_j ln2 · (2^{js} ω_r(f, 2^-j)_p)^q)^{1/q}` over `t = 2^-j ≥ h`.
pub fn besov_norm_modulus(field: &SampledField, spec: &BesovSpec, r: usize) -> Result<NormReport> {
    if r as f64 <= spec.s {
        return Err(Error::InsufficientVanishingMoments {
            order: r,
            smoothness: spec.s,
        });
    }
    spec.validate()?;
    let p = spec.p;
    let steps = sampled_steps(field);
    let diffs: Vec<(f64, f64)> = steps
        .par_iter()
        .map(|(len, hx, hy)| (*len, difference_norm(field, r, *hx, *hy, p)))
        .collect();
    let h = field.grid.spacing();
    let mut per_level = Vec::new();
    let mut j = 0u32;
    loop {
        let t = 2f64.powi(-(j as i32));
        if t < h * (1.0 - 1e-12) {
            break;
        }
        let omega = diffs
            .iter()
            .filter(|(len, _)| *len <= t * (1.0 + 1e-12))
            .map(|e| e.1)
            .fold(0.0, f64::max);
        per_level.push(LevelTerm {
            level: j,
            sum_p: omega,
            term: 2f64.powf(j as f64 * spec.s) * omega,
        });
        j += 1;
    }
    let scale = if spec.q.is_infinite() {
        1.0
    } else {
        std::f64::consts::LN_2.powf(1.0 / spec.q)
    };
    let terms: Vec<f64> = per_level.iter().map(|t| t.term).collect();
    let base = field.lp_norm(p);
    let partials: Vec<f64> = (1..=terms.len())
        .map(|k| base + scale * combine_levels(&terms[..k], spec.q))
        .collect();
    let value = base + scale * combine_levels(&terms, spec.q);
    Ok(NormReport {
        value,
        method: NormMethod::Modulus,
        s_or_m: spec.s,
        p,
        q_or_a: spec.q,
        father: base,
        per_level,
        per_order: Vec::new(),
        level: field.grid.level,
        flag: refinement_stability(&partials).flag(),
    })
}

/// A 1D finite-difference window: node offsets and weights for unit spacing.
#[derive(Clone, Debug)]
struct Window {
    offsets: Vec<i64>,
    weights: Vec<f64>,
}

/// Candidate windows for derivative order `k`, preferred first.
fn windows_for(k: usize) -> Vec<Window> {
    if k == 0 {
        return vec![Window {
            offsets: vec![0],
            weights: vec![1.0],
        }];
    }
    let w = 2 * ((k + 1) / 2) + 1;
    let half = (w / 2) as i64;
    let mut cands: Vec<(f64, Vec<i64>)> = vec![(0.0, (-half..=half).collect())];
    // shifted windows with one extra node, all containing 0
    let size = w as i64 + 1;
    for start in (1 - size)..=0 {
        let offs: Vec<i64> = (start..start + size).collect();
        let center = (offs[0] + offs[offs.len() - 1]) as f64 / 2.0;
        cands.push((center.abs(), offs));
    }
    cands[1..].sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1[0].cmp(&b.1[0])));
    cands
        .into_iter()
        .map(|(_, offsets)| {
            let xs: Vec<f64> = offsets.iter().map(|o| *o as f64).collect();
            Window {
                weights: fd_weights(0.0, &xs, k),
                offsets,
            }
        })
        .collect()
}

/// Precomputed stencil candidates for every multi-index of order ≤ m.
struct DerivativeEngine {
    /// `(order, candidate pairs (x window, y window))` per multi-index.
    multi: Vec<(usize, Vec<(Window, Window)>)>,
}

impl DerivativeEngine {
    fn new(m: usize) -> Self {
        let mut multi = Vec::new();
        for order in 0..=m {
            for a1 in 0..=order {
                let a2 = order - a1;
                let wx = windows_for(a1);
                let wy = windows_for(a2);
                let mut pairs: Vec<(usize, Window, Window)> = Vec::new();
                for (ix, x) in wx.iter().enumerate() {
                    for (iy, y) in wy.iter().enumerate() {
                        pairs.push((ix + iy, x.clone(), y.clone()));
                    }
                }
                pairs.sort_by_key(|p| p.0);
                multi.push((order, pairs.into_iter().map(|p| (p.1, p.2)).collect()));
            }
        }
        Self { multi }
    }

    /// `D^α u` at cell `(ix, iy)` for multi-index number `which`, if a window fits.
    fn eval(&self, field: &SampledField, which: usize, ix: usize, iy: usize) -> Option<f64> {
        let n = field.grid.n as i64;
        let h = field.grid.spacing();
        let (order, pairs) = &self.multi[which];
        'cand: for (wx, wy) in pairs {
            for oy in &wy.offsets {
                for ox in &wx.offsets {
                    let x = ix as i64 + ox;
                    let y = iy as i64 + oy;
                    if x < 0 || y < 0 || x >= n || y >= n || !field.inside(x as usize, y as usize) {
                        continue 'cand;
                    }
                }
            }
            let mut acc = 0.0;
            for (oy, cy) in wy.offsets.iter().zip(&wy.weights) {
                let y = (iy as i64 + oy) as usize;
                let mut row = 0.0;
                for (ox, cx) in wx.offsets.iter().zip(&wx.weights) {
                    row += cx * field.at((ix as i64 + ox) as usize, y);
                }
                acc += cy * row;
            }
            return Some(acc / h.powi(*order as i32));
        }
        None
    }
}

/// Test hook for the verification suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultHook {
    /// Multiplies the Kondratiev weight by `max |u|`, breaking homogeneity.
    MisscaledWeight,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KondratievOptions {
    pub mode: WeightMode,
    /// Depth of graded subdivision for cells touching a singular vertex.
    pub grading_depth: u32,
    pub fault: Option<FaultHook>,
}

impl Default for KondratievOptions {
    fn default() -> Self {
        Self {
            mode: WeightMode::SingularSet,
            grading_depth: 4,
            fault: None,
        }
    }
}

/// Average of `w(x)` over the square `[c - s/2, c + s/2]^2`, refining
/// towards `v` by halving `depth` times; other subcells use their midpoint.
fn graded_average<F: Fn(Point) -> f64>(c: Point, side: f64, v: Point, depth: u32, w: &F) -> f64 {
    if depth == 0 {
        return w(c);
    }
    let q = 0.25 * side;
    let mut acc = 0.0;
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let cc = [c[0] + sx * q, c[1] + sy * q];
        let tol = 1e-12 * side;
        let touches = (v[0] - cc[0]).abs() <= 2.0 * q + tol && (v[1] - cc[1]).abs() <= 2.0 * q + tol;
        acc += if touches {
            graded_average(cc, 0.5 * side, v, depth - 1, w)
        } else {
            w(cc)
        };
    }
    0.25 * acc
}

struct QuadratureOut {
    per_order: Vec<f64>,
}

fn weighted_quadrature<W>(field: &SampledField, m: usize, p: f64, weight: W) -> QuadratureOut
where
    W: Fn(usize, usize, usize) -> f64 + Sync,
{
    let engine = DerivativeEngine::new(m);
    let n = field.grid.n;
    let area = field.grid.cell_area();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|iy| {
            let mut acc = vec![0.0; m + 1];
            for ix in 0..n {
                if !field.inside(ix, iy) {
                    continue;
                }
                for (which, (order, _)) in engine.multi.iter().enumerate() {
                    if let Some(d) = engine.eval(field, which, ix, iy) {
                        if d != 0.0 {
                            acc[*order] += weight(ix, iy, *order) * abs_pow(d, p);
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let per_order = (0..=m)
        .map(|o| {
            let col: Vec<f64> = rows.iter().map(|r| r[o]).collect();
            pairwise_sum(&col) * area
        })
        .collect();
    QuadratureOut { per_order }
}

/// Per-cell `Σ_{|α|=m} |D^α u|^p`; zero outside the mask and where no
/// stencil fits.
pub fn seminorm_density(field: &SampledField, m: usize, p: f64) -> Vec<f64> {
    assert!(m <= MAX_DERIVATIVE_ORDER, "derivative order above {MAX_DERIVATIVE_ORDER}");
    let engine = DerivativeEngine::new(m);
    let n = field.grid.n;
    let top: Vec<usize> = (0..engine.multi.len()).filter(|w| engine.multi[*w].0 == m).collect();
    (0..n * n)
        .into_par_iter()
        .map(|c| {
            let (ix, iy) = (c % n, c / n);
            if !field.inside(ix, iy) {
                return 0.0;
            }
            top.iter()
                .filter_map(|w| engine.eval(field, *w, ix, iy))
                .map(|d| abs_pow(d, p))
                .sum()
        })
        .collect()
}

/// Discrete `W^m_p` norm over the mask (midpoint rule, finite differences).
pub fn sobolev_norm(field: &SampledField, m: usize, p: f64) -> f64 {
    assert!(m <= MAX_DERIVATIVE_ORDER, "derivative order above {MAX_DERIVATIVE_ORDER}");
    let out = weighted_quadrature(field, m, p, |_, _, _| 1.0);
    out.per_order.iter().sum::<f64>().powf(1.0 / p)
}

pub fn kondratiev_norm(field: &SampledField, geom: &DomainGeometry, spec: &KondratievSpec) -> Result<NormReport> {
    kondratiev_norm_with(field, geom, spec, &KondratievOptions::default())
}

/// `(Σ_{|α|≤m} ∫ ρ^{p(|α|-a)} |D^α u|^p)^{1/p}` by weighted midpoint
/// quadrature. With [`WeightMode::SingularSet`], cells whose closure holds a
/// singular vertex use graded subcells for the weight.
pub fn kondratiev_norm_with(
    field: &SampledField,
    geom: &DomainGeometry,
    spec: &KondratievSpec,
    opts: &KondratievOptions,
) -> Result<NormReport> {
    if geom.is_metadata_only() {
        return Err(Error::MetadataOnly("cap cones carry no planar grid"));
    }
    let spec = KondratievSpec::new(spec.m, spec.p, spec.a)?;
    let grid = field.grid;
    let h = grid.spacing();
    let exps: Vec<f64> = (0..=spec.m).map(|k| spec.p * (k as f64 - spec.a)).collect();
    let fault_scale = match opts.fault {
        Some(FaultHook::MisscaledWeight) => field.max_abs(),
        None => 1.0,
    };
    let singular = geom.singular.clone();
    let mode = opts.mode;
    let weight = |ix: usize, iy: usize, order: usize| -> f64 {
        let c = grid.center(ix, iy);
        let e = exps[order];
        let w = |x: Point| geom.weight_unchecked(x, mode).powf(e);
        let base = if mode == WeightMode::SingularSet {
            let near = singular.iter().find(|v| {
                (v[0] - c[0]).abs() <= 0.5 * h * (1.0 + 1e-9) && (v[1] - c[1]).abs() <= 0.5 * h * (1.0 + 1e-9)
            });
            match near {
                Some(v) => graded_average(c, h, *v, opts.grading_depth, &w),
                None => w(c),
            }
        } else {
            w(c)
        };
        base * fault_scale
    };
    let out = weighted_quadrature(field, spec.m, spec.p, weight);
    let total: f64 = out.per_order.iter().sum();
    Ok(NormReport {
        value: total.powf(1.0 / spec.p),
        method: NormMethod::Quadrature,
        s_or_m: spec.m as f64,
        p: spec.p,
        q_or_a: spec.a,
        father: 0.0,
        per_level: Vec::new(),
        per_order: out.per_order,
        level: grid.level,
        flag: NormFlag::Finite,
    })
}

/// Norm values over a refinement sequence with the stability verdict.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementStudy {
    pub levels: Vec<u32>,
    pub values: Vec<f64>,
    pub stability: Stability,
}

/// Evaluates `norm(level)` on consecutive levels and runs the stability test.
pub fn refinement_study<F>(levels: std::ops::RangeInclusive<u32>, norm: F) -> Result<RefinementStudy>
where
    F: Fn(u32) -> Result<f64>,
{
    let levels: Vec<u32> = levels.collect();
    let values = levels.iter().map(|j| norm(*j)).collect::<Result<Vec<f64>>>()?;
    let stability = refinement_stability(&values);
    Ok(RefinementStudy {
        levels,
        values,
        stability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{BoundingBox, Grid, Mask};
    use crate::geometry::rasterize;
    use crate::wavelet::{dwt_forward, WaveletIndex, WaveletSystem};
    use std::f64::consts::PI;

    fn unit_field<F: Fn(Point) -> f64 + Sync>(level: u32, f: F) -> SampledField {
        SampledField::from_fn(&Mask::full(Grid::new(BoundingBox::unit(), level).unwrap()), f)
    }

    #[test]
    fn adaptivity_tau_values() {
        assert_eq!(adaptivity_tau(0.0, 2, 2.0), 2.0);
        assert!((adaptivity_tau(3.0, 3, 2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((adaptivity_tau(2.0, 2, 2.0) - 2.0 / 3.0).abs() < 1e-15);
        let pt = AdaptivityPoint::new(1.0, 2, 2.0).unwrap();
        assert!(pt.tau <= pt.p);
    }

    #[test]
    fn single_coefficient_norm() {
        let mut t = CoeffTree::empty(4, 2, BoundingBox::unit(), 64, 0).unwrap();
        t.set(&WaveletIndex::new(3, 1, 2, 1), 1.0).unwrap();
        for (s, p) in [(1.0, 2.0), (2.5, 1.5), (0.5, 1.0)] {
            let r = besov_norm_wavelet(&t, &BesovSpec::new(s, p, p, 2).unwrap()).unwrap();
            let want = 2f64.powf(3.0 * (s + 2.0 * (0.5 - 1.0 / p)));
            assert!((r.value - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn zero_tree_norm_and_order_check() {
        let t = CoeffTree::empty(3, 2, BoundingBox::unit(), 16, 0).unwrap();
        let r = besov_norm_wavelet(&t, &BesovSpec::new(1.0, 2.0, f64::INFINITY, 2).unwrap()).unwrap();
        assert_eq!(r.value, 0.0);
        let err = besov_norm_wavelet(&t, &BesovSpec::new(3.0, 2.0, 2.0, 2).unwrap()).unwrap_err();
        assert!(matches!(err, Error::InsufficientVanishingMoments { .. }));
    }

    #[test]
    fn modulus_examples() {
        let c = unit_field(5, |_| 2.0);
        assert_eq!(modulus_of_smoothness(&c, 1, 0.5, 2.0), 0.0);
        let aff = unit_field(5, |x| 3.0 * x[0] - x[1] + 0.5);
        assert!(modulus_of_smoothness(&aff, 2, 0.5, 2.0) < 1e-12);
        let g = Grid::new(BoundingBox::centered(1.0), 6).unwrap();
        let absx = SampledField::from_fn(&Mask::full(g), |x| x[0].abs());
        // cell centers reach the extreme pair only up to one cell
        let h = absx.grid.spacing();
        for t in [0.125, 0.5, 1.0] {
            let w = modulus_of_smoothness(&absx, 1, t, f64::INFINITY);
            assert!(w <= t + 1e-12 && w >= t - h, "t={t}: {w}");
        }
    }

    #[test]
    fn modulus_norm_of_constant() {
        let c = unit_field(5, |_| 3.0);
        let r = besov_norm_modulus(&c, &BesovSpec::new(1.0, 2.0, 2.0, 2).unwrap(), 2).unwrap();
        assert!((r.value - 3.0).abs() < 1e-12);
        let z = unit_field(5, |_| 0.0);
        assert_eq!(besov_norm_modulus(&z, &BesovSpec::new(1.0, 2.0, 2.0, 2).unwrap(), 2).unwrap().value, 0.0);
    }

    #[test]
    fn sobolev_linear_on_unit_square() {
        let u = unit_field(6, |x| x[0]);
        let got = sobolev_norm(&u, 1, 2.0);
        let h = 1.0 / 64.0;
        // midpoint rule on x² loses h²/12
        let want = (1.0 / 3.0 - h * h / 12.0 + 1.0f64).sqrt();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!((got - (4.0f64 / 3.0).sqrt()).abs() < h * h);
    }

    #[test]
    fn windows_are_exact_for_polynomials() {
        for k in 1..=4 {
            for w in windows_for(k) {
                // derivative of x^k at 0 is k!
                let got: f64 = w.offsets.iter().zip(&w.weights).map(|(o, c)| c * (*o as f64).powi(k as i32)).sum();
                let fact: f64 = (1..=k).map(|i| i as f64).product();
                assert!((got - fact).abs() < 1e-9, "k={k}");
            }
        }
    }

    #[test]
    fn kondratiev_constant_with_unit_weight() {
        let sq = DomainGeometry::unit_square();
        let sq = DomainGeometry { singular: vec![[-5.0, -5.0]], ..sq };
        let mask = rasterize(&sq, 5).unwrap();
        let u = SampledField::from_fn(&mask, |_| 1.0);
        let r = kondratiev_norm(&u, &sq, &KondratievSpec::new(0, 2.0, 0.0).unwrap()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kondratiev_homogeneous_and_fault_breaks_it() {
        let g = DomainGeometry::wedge(1.5 * PI, BoundingBox::centered(1.0)).unwrap();
        let mask = rasterize(&g, 5).unwrap();
        let u = SampledField::from_fn(&mask, |x| x[0] * x[0] + x[1]);
        let spec = KondratievSpec::new(2, 2.0, 1.0).unwrap();
        let a = kondratiev_norm(&u, &g, &spec).unwrap().value;
        let b = kondratiev_norm(&u.scaled(-3.0), &g, &spec).unwrap().value;
        assert!((b - 3.0 * a).abs() < 1e-10 * b);
        let opts = KondratievOptions {
            fault: Some(FaultHook::MisscaledWeight),
            ..Default::default()
        };
        let a = kondratiev_norm_with(&u, &g, &spec, &opts).unwrap().value;
        let b = kondratiev_norm_with(&u.scaled(-3.0), &g, &spec, &opts).unwrap().value;
        assert!((b - 3.0 * a).abs() > 1e-3 * b);
    }

    #[test]
    fn graded_average_matches_integral_for_smooth_weight() {
        let w = |x: Point| 1.0 + x[0] + 2.0 * x[1];
        let avg = graded_average([0.5, 0.5], 1.0, [0.0, 0.0], 4, &w);
        assert!((avg - 2.5).abs() < 1e-12);
    }

    #[test]
    fn stability_classifies_sequences() {
        let conv: Vec<f64> = (0..6).map(|j| 2.0 - 0.5f64.powi(j)).collect();
        assert!(!refinement_stability(&conv).divergent);
        let div: Vec<f64> = (0..6).map(|j| 1.2f64.powi(j)).collect();
        let s = refinement_stability(&div);
        assert!(s.divergent && s.exponent > 0.0);
        let log: Vec<f64> = (1..7).map(|j| j as f64).collect();
        assert!(refinement_stability(&log).divergent);
    }

    #[test]
    fn critical_smoothness_of_synthetic_decay() {
        // level sums Σ|c|² = 2^{-2j·1.5}: per-level term 2^{j(s - 1.5)}
        let mut t = CoeffTree::empty(4, 2, BoundingBox::unit(), 256, 0).unwrap();
        for j in 0..8u32 {
            t.set(&WaveletIndex::new(j, 0, 0, 3), 2f64.powf(-1.5 * j as f64)).unwrap();
        }
        let c = critical_smoothness(&t, SmoothnessScale::Fixed { p: 2.0 }, 2..=7).unwrap();
        assert!((c.value - 1.5).abs() < 1e-3, "{}", c.value);
    }

    #[test]
    fn smooth_bump_besov_monotone_in_s() {
        let sys = WaveletSystem::new(4).unwrap();
        let u = unit_field(7, |x| (-((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)) / 0.02).exp());
        let t = dwt_forward(&u, &sys, 7).unwrap();
        let mut last = 0.0;
        for s in [0.5, 1.0, 1.5, 2.0, 3.0] {
            let v = besov_norm_wavelet(&t, &BesovSpec::new(s, 2.0, 2.0, 2).unwrap()).unwrap().value;
            assert!(v >= last);
            last = v;
        }
    }
}
