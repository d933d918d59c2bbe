//! N-term and uniform approximation errors, rate fits, ring buckets and the
//! embedding verifiers.

use crate::error::{Error, Result};
use crate::field::{Mask, SampledField};
use crate::geometry::{rasterize, DomainGeometry, WeightMode};
use crate::norms::{
    adaptivity_tau, besov_norm_wavelet, critical_smoothness, kondratiev_norm_with, seminorm_density, BesovSpec,
    KondratievOptions, KondratievSpec, NormReport, SmoothnessScale,
};
use crate::numerics::{abs_pow, linear_fit};
use crate::wavelet::{dwt_forward, dwt_inverse, support_cube, CoeffTree, WaveletIndex, WaveletSystem};
use rayon::prelude::*;

/// Dyadic points dropped at each end of a default fit window.
pub const WINDOW_TRIM: usize = 8;
/// Minimum number of points in a rate fit.
pub const MIN_FIT_POINTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateMethod {
    Nonlinear,
    Uniform,
}

impl RateMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            RateMethod::Nonlinear => "nonlinear",
            RateMethod::Uniform => "uniform",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub alpha: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub method: RateMethod,
    pub pairs: Vec<(usize, f64)>,
    pub alpha: f64,
    pub residual: f64,
    /// Inclusive `N` range of the fitted pairs.
    pub window: (usize, usize),
}

/// Least-squares decay exponent of `error ~ N^{-α}`.
pub fn fit_rate(pairs: &[(usize, f64)]) -> Result<RateFit> {
    if pairs.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidParameter(format!(
            "rate fit needs at least {MIN_FIT_POINTS} pairs, got {}",
            pairs.len()
        )));
    }
    if let Some((_, e)) = pairs.iter().find(|(_, e)| !(*e > 0.0)) {
        return Err(Error::NonPositiveError(*e));
    }
    if pairs.iter().any(|(n, _)| *n == 0) {
        return Err(Error::InvalidParameter("rate fit needs N >= 1".into()));
    }
    let xs: Vec<f64> = pairs.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, e)| e.ln()).collect();
    let (slope, _, rms) = linear_fit(&xs, &ys);
    Ok(RateFit {
        alpha: -slope,
        residual: rms,
    })
}

/// Sorted squared magnitudes for repeated `ℓ_2` tail queries.
///
/// Tails are accumulated sequentially in ascending order. Floating-point
/// addition is monotone in each operand, so the tail of the smallest `k`
/// squares never exceeds the same-order sum of any other `k` squares.
#[derive(Clone, Debug)]
pub struct TailProfile {
    /// Prefix sums of the ascending squares; `prefix[k]` is the sum of the `k` smallest.
    prefix: Vec<f64>,
    /// Basis functions without a stored entry (implicit zeros).
    implicit_zeros: usize,
    total: usize,
}

impl TailProfile {
    pub fn new(tree: &CoeffTree) -> Self {
        let entries = tree.entries();
        let implicit_zeros = tree.basis_size() - entries.len();
        Self::from_squares(entries.iter().map(|e| e.1 * e.1).collect(), implicit_zeros)
    }

    fn from_squares(mut sq: Vec<f64>, implicit_zeros: usize) -> Self {
        sq.par_sort_unstable_by(|a, b| a.total_cmp(b));
        let mut prefix = Vec::with_capacity(sq.len() + 1);
        let mut acc = 0.0;
        prefix.push(acc);
        for s in &sq {
            acc += s;
            prefix.push(acc);
        }
        let total = sq.len() + implicit_zeros;
        Self {
            prefix,
            implicit_zeros,
            total,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Sum of the `k` smallest squares.
    pub fn smallest_sum(&self, k: usize) -> f64 {
        let k = k.min(self.total).saturating_sub(self.implicit_zeros);
        self.prefix[k]
    }

    /// `σ_N` in `ℓ_2`.
    pub fn sigma(&self, n: usize) -> f64 {
        self.smallest_sum(self.total.saturating_sub(n)).sqrt()
    }
}

/// Keeps the `n` largest magnitudes; ties go to the earlier entry (lower
/// level, then lexicographic `k`, then type).
fn keep_largest(tree: &CoeffTree, n: usize) -> CoeffTree {
    let entries = tree.entries();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|a, b| entries[*b].1.abs().total_cmp(&entries[*a].1.abs()).then(a.cmp(b)));
    let mut keep = vec![false; entries.len()];
    for i in order.into_iter().take(n) {
        keep[i] = true;
    }
    let mut out = tree.clone();
    for (i, (idx, c)) in entries.iter().enumerate() {
        if !keep[i] && *c != 0.0 {
            out.set(idx, 0.0).expect("index came from this tree");
        }
    }
    out
}

fn synthesized_lp(tree: &CoeffTree, p: f64) -> Result<f64> {
    let sys = WaveletSystem::new(tree.order)?;
    Ok(dwt_inverse(tree, &sys)?.lp_norm(p))
}

fn difference_tree(a: &CoeffTree, b: &CoeffTree) -> CoeffTree {
    let mut out = a.clone();
    for (idx, c) in b.entries() {
        if c != 0.0 {
            let v = a.get(&idx).expect("same shape") - c;
            out.set(&idx, v).expect("same shape");
        }
    }
    out
}

/// Best-`N`-term error. For `p = 2` this is the exact `ℓ_2` tail; otherwise
/// the grid `L_p` norm of the synthesized residual of the `N` largest terms.
pub fn sigma_n(tree: &CoeffTree, n: usize, p: f64) -> Result<f64> {
    if p == 2.0 {
        return Ok(TailProfile::new(tree).sigma(n));
    }
    if n >= tree.basis_size() {
        return Ok(0.0);
    }
    let kept = keep_largest(tree, n);
    synthesized_lp(&difference_tree(tree, &kept), p)
}

/// Number of basis functions with level below `j` (fathers included).
fn kept_count(tree: &CoeffTree, j: u32) -> usize {
    let per_level = |l: u32| if tree.dim == 2 { 1usize << (2 * l) } else { 1usize << l };
    let mut n = per_level(tree.coarsest);
    for l in tree.coarsest..j.min(tree.finest) {
        n += per_level(l) * if tree.dim == 2 { 3 } else { 1 };
    }
    n
}

/// Error of keeping every coefficient of level below `j`, and the count kept.
pub fn uniform_error(tree: &CoeffTree, j: u32, p: f64) -> Result<(usize, f64)> {
    if j > tree.finest {
        return Err(Error::InvalidParameter(format!(
            "level {j} exceeds the finest level {}",
            tree.finest
        )));
    }
    let n = kept_count(tree, j);
    let dropped: Vec<(WaveletIndex, f64)> = (j.max(tree.coarsest)..tree.finest)
        .flat_map(|l| tree.level_entries_at(l))
        .collect();
    if p == 2.0 {
        let sq: Vec<f64> = dropped.iter().map(|e| e.1 * e.1).collect();
        return Ok((n, TailProfile::from_squares(sq, 0).smallest_sum(usize::MAX).sqrt()));
    }
    let kept = tree.filtered(|idx, _| idx.is_father() || idx.level < j);
    Ok((n, synthesized_lp(&difference_tree(tree, &kept), p)?))
}

/// Drops up to [`WINDOW_TRIM`] points at each end, keeping at least
/// [`MIN_FIT_POINTS`] when possible.
fn trim<T: Clone>(points: &[T]) -> Vec<T> {
    let spare = points.len().saturating_sub(MIN_FIT_POINTS) / 2;
    let t = WINDOW_TRIM.min(spare);
    points[t..points.len() - t].to_vec()
}

/// Default `N` window: dyadic `N = 2^i` up to the basis size, trimmed.
pub fn default_window(tree: &CoeffTree) -> (usize, usize) {
    let top = tree.basis_size().ilog2();
    let pts: Vec<usize> = (0..=top).map(|i| 1usize << i).collect();
    let t = trim(&pts);
    (t[0], t[t.len() - 1])
}

/// `σ_N` at dyadic `N` inside `window` and its fitted exponent.
pub fn nonlinear_rate(tree: &CoeffTree, p: f64, window: Option<(usize, usize)>) -> Result<RateReport> {
    let (lo, hi) = window.unwrap_or_else(|| default_window(tree));
    let ns: Vec<usize> = (0..usize::BITS)
        .map(|i| 1usize << i)
        .take_while(|n| *n <= hi)
        .filter(|n| *n >= lo)
        .collect();
    let pairs: Vec<(usize, f64)> = if p == 2.0 {
        let tail = TailProfile::new(tree);
        ns.iter().map(|n| (*n, tail.sigma(*n))).collect()
    } else {
        ns.iter().map(|n| Ok((*n, sigma_n(tree, *n, p)?))).collect::<Result<_>>()?
    };
    let fit = fit_rate(&pairs)?;
    Ok(RateReport {
        method: RateMethod::Nonlinear,
        pairs,
        alpha: fit.alpha,
        residual: fit.residual,
        window: (lo, hi),
    })
}

/// Uniform (level-truncation) errors with `N_j` inside `window`, and their
/// fitted exponent. Without a window the level sequence is trimmed.
pub fn uniform_rate(tree: &CoeffTree, p: f64, window: Option<(usize, usize)>) -> Result<RateReport> {
    let all: Vec<(usize, f64)> = (tree.coarsest + 1..tree.finest)
        .map(|j| uniform_error(tree, j, p))
        .collect::<Result<_>>()?;
    let pairs: Vec<(usize, f64)> = match window {
        Some((lo, hi)) => all.into_iter().filter(|(n, _)| *n >= lo && *n <= hi).collect(),
        None => trim(&all),
    };
    let fit = fit_rate(&pairs)?;
    let window = (pairs[0].0, pairs[pairs.len() - 1].0);
    Ok(RateReport {
        method: RateMethod::Uniform,
        pairs,
        alpha: fit.alpha,
        residual: fit.residual,
        window,
    })
}

/// Joint check of `B^m_{τ,τ}` finiteness and the best-N-term exponent `m/d`.
#[derive(Clone, Debug, PartialEq)]
pub struct DjpReport {
    pub m: f64,
    pub tau: f64,
    pub norm: NormReport,
    /// `f64::INFINITY` when the tree is represented exactly inside the window.
    pub alpha: f64,
    pub norm_finite: bool,
    pub rate_reached: bool,
    pub consistent: bool,
}

/// Slack on the exponent comparison `α ≥ m/d`.
pub const DJP_RATE_TOLERANCE: f64 = 0.1;

pub fn djp_consistency(tree: &CoeffTree, m: f64, p: f64) -> Result<DjpReport> {
    let spec = BesovSpec::adaptivity(m, p, tree.dim)?;
    let norm = besov_norm_wavelet(tree, &spec)?;
    let (lo, hi) = default_window(tree);
    let tail = (p == 2.0).then(|| TailProfile::new(tree));
    let sigma = |n: usize| -> Result<f64> {
        match &tail {
            Some(t) => Ok(t.sigma(n)),
            None => sigma_n(tree, n, p),
        }
    };
    let alpha = if sigma(lo)? == 0.0 {
        f64::INFINITY
    } else {
        let mut pairs = Vec::new();
        let mut n = lo;
        while n <= hi {
            let e = sigma(n)?;
            if e == 0.0 {
                break;
            }
            pairs.push((n, e));
            n *= 2;
        }
        if pairs.len() < MIN_FIT_POINTS {
            f64::INFINITY
        } else {
            fit_rate(&pairs)?.alpha
        }
    };
    let norm_finite = !norm.flag.is_divergent();
    let rate_reached = alpha >= m / tree.dim as f64 - DJP_RATE_TOLERANCE;
    Ok(DjpReport {
        m,
        tau: spec.p,
        norm,
        alpha,
        norm_finite,
        rate_reached,
        consistent: norm_finite == rate_reached,
    })
}

/// Bucket structure of the detail indices of one level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelRings {
    pub level: u32,
    /// `buckets[k]` holds the indices with `k ℓ_j ≤ ρ_I < (k+1) ℓ_j`.
    pub buckets: Vec<Vec<WaveletIndex>>,
    /// Indices whose cube `Q(I)` wraps around the periodic box.
    pub wrapped: Vec<WaveletIndex>,
}

impl LevelRings {
    pub fn count(&self, k: usize) -> usize {
        self.buckets.get(k).map_or(0, Vec::len)
    }

    pub fn total(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum::<usize>() + self.wrapped.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RingDecomposition {
    pub levels: Vec<LevelRings>,
}

impl RingDecomposition {
    pub fn level(&self, j: u32) -> Option<&LevelRings> {
        self.levels.iter().find(|l| l.level == j)
    }
}

/// Samples per axis of `Q(I)` for `ρ_I`.
pub const RING_SAMPLES: usize = 4;

enum Placement {
    Ring { k: usize, rho: f64, interior: bool },
    Wrapped,
}

fn place(idx: &WaveletIndex, sys: &WaveletSystem, geom: &DomainGeometry, mode: WeightMode) -> Placement {
    let bbox = geom.bbox;
    let cube = support_cube(idx, sys, &bbox);
    let top = cube.max();
    let in_box = top[0] <= bbox.min[0] + bbox.side + 1e-12 && top[1] <= bbox.min[1] + bbox.side + 1e-12;
    if !in_box {
        return Placement::Wrapped;
    }
    let touches_singular = mode == WeightMode::SingularSet && geom.singular.iter().any(|v| cube.contains(*v));
    let rho = if touches_singular {
        0.0
    } else {
        cube.samples(RING_SAMPLES)
            .into_iter()
            .map(|x| geom.weight_unchecked(x, mode))
            .fold(f64::INFINITY, f64::min)
    };
    let l = bbox.side / (1u64 << idx.level) as f64;
    Placement::Ring {
        k: (rho / l).floor() as usize,
        rho,
        interior: geom.cube_inside(&cube),
    }
}

/// Buckets every detail index of every level by its distance ring.
pub fn ring_decompose(tree: &CoeffTree, geom: &DomainGeometry) -> Result<RingDecomposition> {
    ring_decompose_levels(tree, geom, tree.detail_levels())
}

pub fn ring_decompose_levels(
    tree: &CoeffTree,
    geom: &DomainGeometry,
    levels: impl IntoIterator<Item = u32>,
) -> Result<RingDecomposition> {
    if geom.is_metadata_only() {
        return Err(Error::MetadataOnly("cap cones carry no planar grid"));
    }
    if tree.dim != 2 {
        return Err(Error::InvalidParameter("ring decomposition needs a 2D tree".into()));
    }
    let sys = WaveletSystem::new(tree.order)?;
    let geom = geom.clone().with_bbox(tree.bbox);
    let mut out = Vec::new();
    for j in levels {
        let idxs: Vec<WaveletIndex> = tree.level_entries_at(j).into_iter().map(|e| e.0).collect();
        let placed: Vec<Placement> = idxs
            .par_iter()
            .map(|i| place(i, &sys, &geom, WeightMode::SingularSet))
            .collect();
        let mut rings = LevelRings {
            level: j,
            buckets: Vec::new(),
            wrapped: Vec::new(),
        };
        for (idx, p) in idxs.into_iter().zip(placed) {
            match p {
                Placement::Wrapped => rings.wrapped.push(idx),
                Placement::Ring { k, .. } => {
                    if rings.buckets.len() <= k {
                        rings.buckets.resize_with(k + 1, Vec::new);
                    }
                    rings.buckets[k].push(idx);
                }
            }
        }
        out.push(rings);
    }
    Ok(RingDecomposition { levels: out })
}

/// Per-level outcome of the Whitney-type coefficient bound.
#[derive(Clone, Debug, PartialEq)]
pub struct WhitneyLevel {
    pub level: u32,
    pub max_ratio: f64,
    /// Interior indices (`k ≥ 1`, `Q(I)` inside the domain) examined.
    pub checked: usize,
    /// Nonzero coefficients with `μ_I = 0`.
    pub breaches: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WhitneyReport {
    pub m: usize,
    pub a: f64,
    pub p: f64,
    pub levels: Vec<WhitneyLevel>,
    /// Largest over smallest positive per-level maximum.
    pub variation: f64,
    pub breaches: usize,
}

/// Summed-area table over an `n × n` row-major array.
struct AreaTable {
    n: usize,
    s: Vec<f64>,
}

impl AreaTable {
    fn new(values: &[f64], n: usize) -> Self {
        let mut s = vec![0.0; (n + 1) * (n + 1)];
        for iy in 0..n {
            let mut row = 0.0;
            for ix in 0..n {
                row += values[iy * n + ix];
                s[(iy + 1) * (n + 1) + ix + 1] = s[iy * (n + 1) + ix + 1] + row;
            }
        }
        Self { n, s }
    }

    /// Sum over cells `x0..=x1`, `y0..=y1`.
    fn sum(&self, x0: usize, x1: usize, y0: usize, y1: usize) -> f64 {
        let w = self.n + 1;
        let v = self.s[(y1 + 1) * w + x1 + 1] - self.s[y0 * w + x1 + 1] - self.s[(y1 + 1) * w + x0]
            + self.s[y0 * w + x0];
        v.max(0.0)
    }
}

/// Compares each interior coefficient with `|I|^{m/d+1/2-1/p} ρ_I^{a-m} μ_I`,
/// `μ_I^p = Σ_{|α|=m} ∫_{Q(I)} |ρ^{m-a} D^α u|^p`, on the given levels.
pub fn whitney_ring_check(
    tree: &CoeffTree,
    geom: &DomainGeometry,
    m: usize,
    a: f64,
    p: f64,
    levels: impl IntoIterator<Item = u32>,
) -> Result<WhitneyReport> {
    if tree.order < m {
        return Err(Error::InsufficientVanishingMoments {
            order: tree.order,
            smoothness: m as f64,
        });
    }
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("Whitney check needs p > 1, got {p}")));
    }
    let sys = WaveletSystem::new(tree.order)?;
    let geom = geom.clone().with_bbox(tree.bbox);
    let mut field = dwt_inverse(tree, &sys)?;
    let k = tree.finest;
    let mask = rasterize(&geom, k)?;
    field.mask = mask.inside.clone();
    let grid = field.grid;
    let n = grid.n;
    let h = grid.spacing();
    let mut density = seminorm_density(&field, m, p);
    // finite differences of a polynomial of degree < m are pure rounding
    let umax = field.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let floor = (m as f64 + 1.0) * abs_pow(64.0 * f64::EPSILON * umax / h.powi(m as i32), p);
    density.iter_mut().filter(|d| **d <= floor).for_each(|d| *d = 0.0);
    let weighted: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|c| {
            if density[c] == 0.0 {
                return 0.0;
            }
            let x = grid.center(c % n, c / n);
            abs_pow(geom.weight_unchecked(x, WeightMode::SingularSet), (m as f64 - a) * p) * density[c] * h * h
        })
        .collect();
    let table = AreaTable::new(&weighted, n);
    let d = tree.dim as f64;
    let mut out = Vec::new();
    for j in levels {
        let entries = tree.level_entries_at(j);
        let l = tree.cell_side(j);
        let size_factor = l.powf(d * (m as f64 / d + 0.5 - 1.0 / p));
        let level_max = entries.iter().fold(0.0f64, |acc, e| acc.max(e.1.abs()));
        let results: Vec<Option<(f64, bool)>> = entries
            .par_iter()
            .map(|(idx, c)| {
                let Placement::Ring { k, rho, interior } = place(idx, &sys, &geom, WeightMode::SingularSet) else {
                    return None;
                };
                if k == 0 || !interior {
                    return None;
                }
                let cube = support_cube(idx, &sys, &geom.bbox);
                let top = cube.max();
                let lo_x = ((cube.min[0] - grid.bbox.min[0]) / h - 0.5).ceil().max(0.0) as usize;
                let lo_y = ((cube.min[1] - grid.bbox.min[1]) / h - 0.5).ceil().max(0.0) as usize;
                let hi_x = (((top[0] - grid.bbox.min[0]) / h - 0.5).floor() as usize).min(n - 1);
                let hi_y = (((top[1] - grid.bbox.min[1]) / h - 0.5).floor() as usize).min(n - 1);
                let mu = table.sum(lo_x, hi_x, lo_y, hi_y).powf(1.0 / p);
                if mu == 0.0 {
                    let breach = c.abs() > 1e-10 * level_max.max(f64::MIN_POSITIVE);
                    return Some((0.0, breach));
                }
                Some((c.abs() / (size_factor * rho.powf(a - m as f64) * mu), false))
            })
            .collect();
        let checked = results.iter().flatten().count();
        let breaches = results.iter().flatten().filter(|r| r.1).count();
        let max_ratio = results.iter().flatten().fold(0.0f64, |acc, r| acc.max(r.0));
        out.push(WhitneyLevel {
            level: j,
            max_ratio,
            checked,
            breaches,
        });
    }
    let positive: Vec<f64> = out.iter().map(|l| l.max_ratio).filter(|r| *r > 0.0).collect();
    let variation = if positive.is_empty() {
        1.0
    } else {
        positive.iter().cloned().fold(0.0, f64::max) / positive.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let breaches = out.iter().map(|l| l.breaches).sum();
    Ok(WhitneyReport {
        m,
        a,
        p,
        levels: out,
        variation,
        breaches,
    })
}

/// Which embedding theorem is being checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingMode {
    /// `K^γ_{p,a} ∩ B^s_{p,∞} ↪ B^γ_{τ,∞}` on polygons.
    Polyhedral,
    /// `K^γ_{p,a} ↪ B^α_{τ,τ}` for `α < min(γ, a d/(d-1))` on Lipschitz domains.
    Lipschitz,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSample {
    pub member: usize,
    pub tau: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingReport {
    pub mode: EmbeddingMode,
    /// Polyhedral mode: two-sided evaluations per member and `τ`.
    pub samples: Vec<EmbeddingSample>,
    /// Polyhedral mode: `(τ, largest over smallest ratio across the family)`.
    /// Growth with `τ` marks where the embedding degrades.
    pub spreads: Vec<(f64, f64)>,
    /// Lipschitz mode: predicted threshold `min(γ, a d/(d-1))`.
    pub threshold: f64,
    /// Lipschitz mode: measured adaptivity-scale flip per member.
    pub flips: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EmbeddingParams {
    pub gamma: usize,
    pub a: f64,
    pub s: f64,
    pub p: f64,
    pub wavelet_order: usize,
    /// Levels for the flip fit (Lipschitz mode).
    pub fit_levels: std::ops::RangeInclusive<u32>,
    /// Interior `τ` fractions of `(τ*, p)` (polyhedral mode).
    pub tau_fractions: Vec<f64>,
}

impl EmbeddingReport {
    /// Worst spread over the sampled `τ` (polyhedral mode).
    pub fn max_spread(&self) -> f64 {
        self.spreads.iter().fold(1.0, |m, s| m.max(s.1))
    }
}

impl EmbeddingParams {
    pub fn new(gamma: usize, a: f64, s: f64, p: f64) -> Self {
        Self {
            gamma,
            a,
            s,
            p,
            wavelet_order: 4,
            fit_levels: 2..=6,
            tau_fractions: vec![0.1, 0.25, 0.5, 0.75],
        }
    }
}

/// Two-sided embedding verification over a family of fields.
pub fn embedding_check(
    fields: &[SampledField],
    geom: &DomainGeometry,
    mode: EmbeddingMode,
    params: &EmbeddingParams,
) -> Result<EmbeddingReport> {
    let EmbeddingParams { gamma, a, s, p, .. } = *params;
    let d = 2.0;
    if fields.is_empty() {
        return Err(Error::InvalidParameter("embedding check needs at least one field".into()));
    }
    let sys = WaveletSystem::new(params.wavelet_order)?;
    let tree_of = |f: &SampledField| -> Result<CoeffTree> {
        let k = f
            .grid
            .resolution_log2()
            .ok_or_else(|| Error::InvalidParameter("field grid is not dyadic".into()))?;
        dwt_forward(f, &sys, k)
    };
    match mode {
        EmbeddingMode::Polyhedral => {
            // planar polygons: only vertex singularities
            let delta = 0.0;
            let bound = delta / d * gamma as f64;
            if !(s.min(a) > bound) {
                return Err(Error::HypothesisViolated(format!(
                    "min(s, a) = {} must exceed (δ/d)γ = {bound}",
                    s.min(a)
                )));
            }
            if gamma as f64 >= params.wavelet_order as f64 {
                return Err(Error::InsufficientVanishingMoments {
                    order: params.wavelet_order,
                    smoothness: gamma as f64,
                });
            }
            let tau_star = 1.0 / (gamma as f64 / d + 1.0 / p);
            let taus: Vec<f64> = params
                .tau_fractions
                .iter()
                .map(|t| tau_star + t.clamp(1e-6, 1.0 - 1e-6) * (p - tau_star))
                .collect();
            let mut samples = Vec::new();
            for (member, f) in fields.iter().enumerate() {
                let tree = tree_of(f)?;
                let kond = kondratiev_norm_with(
                    f,
                    geom,
                    &KondratievSpec::new(gamma, p, a)?,
                    &KondratievOptions::default(),
                )?
                .value;
                let besov = besov_norm_wavelet(&tree, &BesovSpec::new(s, p, f64::INFINITY, 2)?)?.value;
                let rhs = kond.max(besov);
                for tau in &taus {
                    let lhs = besov_norm_wavelet(&tree, &BesovSpec::new(gamma as f64, *tau, f64::INFINITY, 2)?)?.value;
                    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
                    samples.push(EmbeddingSample {
                        member,
                        tau: *tau,
                        lhs,
                        rhs,
                        ratio,
                    });
                }
            }
            let spreads: Vec<(f64, f64)> = taus
                .iter()
                .map(|tau| {
                    let r: Vec<f64> = samples
                        .iter()
                        .filter(|x| x.tau == *tau && x.ratio > 0.0)
                        .map(|x| x.ratio)
                        .collect();
                    let hi = r.iter().cloned().fold(0.0, f64::max);
                    let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
                    (*tau, if r.is_empty() { 1.0 } else { hi / lo })
                })
                .collect();
            Ok(EmbeddingReport {
                mode,
                samples,
                spreads,
                threshold: f64::NAN,
                flips: Vec::new(),
            })
        }
        EmbeddingMode::Lipschitz => {
            if !(p >= 2.0 && p.is_finite()) || gamma == 0 || !(a > 0.0) {
                return Err(Error::HypothesisViolated(format!(
                    "Lipschitz embedding needs p in [2, inf), γ > 0, a > 0 (p={p}, γ={gamma}, a={a})"
                )));
            }
            let threshold = (gamma as f64).min(a * d / (d - 1.0));
            let flips = fields
                .iter()
                .map(|f| {
                    let tree = tree_of(f)?;
                    Ok(critical_smoothness(&tree, SmoothnessScale::Adaptivity { p }, params.fit_levels.clone())?.value)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(EmbeddingReport {
                mode,
                samples: Vec::new(),
                spreads: Vec::new(),
                threshold,
                flips,
            })
        }
    }
}

/// Adaptivity-scale membership verdict of `B^α_{τ,τ}` at each `α`.
pub fn membership_sweep(tree: &CoeffTree, p: f64, alphas: &[f64]) -> Result<Vec<(f64, f64, bool)>> {
    alphas
        .iter()
        .map(|al| {
            let tau = adaptivity_tau(*al, tree.dim, p);
            let r = besov_norm_wavelet(tree, &BesovSpec::new(*al, tau, tau, tree.dim)?)?;
            Ok((*al, tau, !r.flag.is_divergent()))
        })
        .collect()
}

/// Field on the full box from a closure, convenience for test families.
pub fn full_box_field<F: Fn(crate::field::Point) -> f64 + Sync>(geom: &DomainGeometry, level: u32, f: F) -> Result<SampledField> {
    let grid = crate::field::Grid::new(geom.bbox, level)?;
    Ok(SampledField::from_fn(&Mask::full(grid), f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{BoundingBox, Grid};
    use std::f64::consts::PI;

    fn tree_from(values: &[(WaveletIndex, f64)], level: u32) -> CoeffTree {
        let mut t = CoeffTree::empty(4, 2, BoundingBox::unit(), 1 << level, 0).unwrap();
        for (i, c) in values {
            t.set(i, *c).unwrap();
        }
        t
    }

    #[test]
    fn sigma_tail_example() {
        let t = tree_from(
            &[
                (WaveletIndex::new(1, 0, 0, 1), 3.0),
                (WaveletIndex::new(1, 1, 0, 2), 2.0),
                (WaveletIndex::new(2, 0, 0, 3), 1.0),
            ],
            3,
        );
        assert!((sigma_n(&t, 1, 2.0).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(sigma_n(&t, 3, 2.0).unwrap(), 0.0);
        assert_eq!(sigma_n(&t, 1000, 2.0).unwrap(), 0.0);
        assert!((sigma_n(&t, 0, 2.0).unwrap() - 14f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn uniform_single_coefficient() {
        let t = tree_from(&[(WaveletIndex::new(5, 3, 4, 2), 0.7)], 7);
        assert_eq!(uniform_error(&t, 6, 2.0).unwrap().1, 0.0);
        assert!((uniform_error(&t, 5, 2.0).unwrap().1 - 0.7).abs() < 1e-15);
        assert_eq!(uniform_error(&t, 7, 2.0).unwrap(), (1 << 14, 0.0));
        assert_eq!(uniform_error(&t, 3, 2.0).unwrap().0, 64);
    }

    #[test]
    fn fit_rate_exact_laws() {
        let pairs: Vec<(usize, f64)> = (1..=6).map(|i| (1usize << i, 1.0 / (1u64 << i) as f64)).collect();
        assert!((fit_rate(&pairs).unwrap().alpha - 1.0).abs() < 1e-10);
        let pairs: Vec<(usize, f64)> = (1..=6)
            .map(|i| {
                let n = 1usize << i;
                (n, 5.0 * (n as f64).powf(-2.0 / 3.0))
            })
            .collect();
        assert!((fit_rate(&pairs).unwrap().alpha - 2.0 / 3.0).abs() < 1e-10);
        let noisy: Vec<(usize, f64)> = (2..=64).map(|n| (n, (1.0 + 0.05 * (n as f64).sin()) / n as f64)).collect();
        let a = fit_rate(&noisy).unwrap().alpha;
        assert!((0.9..=1.1).contains(&a));
        assert!(matches!(fit_rate(&[(1, 1.0), (2, 0.0), (4, 1.0), (8, 1.0)]), Err(Error::NonPositiveError(_))));
    }

    #[test]
    fn nonlinear_never_worse_than_uniform() {
        let grid = Grid::new(BoundingBox::unit(), 6).unwrap();
        let f = SampledField::from_fn(&Mask::full(grid), |x| ((x[0] - 0.3).hypot(x[1] - 0.6)).powf(0.7));
        let sys = WaveletSystem::new(4).unwrap();
        let tree = dwt_forward(&f, &sys, 6).unwrap();
        let tail = TailProfile::new(&tree);
        for j in 0..=6 {
            let (n, e) = uniform_error(&tree, j, 2.0).unwrap();
            assert!(tail.sigma(n) <= e);
        }
        assert!((tail.sigma(0) - f.l2_norm()).abs() < 1e-10 * f.l2_norm());
    }

    #[test]
    fn sigma_for_other_p_is_synthesized() {
        let t = tree_from(&[(WaveletIndex::new(2, 1, 1, 3), 1.0), (WaveletIndex::new(3, 1, 1, 1), 0.5)], 5);
        assert_eq!(sigma_n(&t, 2, 1.5).unwrap(), 0.0);
        let sys = WaveletSystem::new(4).unwrap();
        let atom = crate::wavelet::synthesize_atom(&t, &WaveletIndex::new(3, 1, 1, 1), &sys).unwrap();
        let want = atom.scaled(0.5).lp_norm(1.5);
        assert!((sigma_n(&t, 1, 1.5).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn ring_bucket_for_far_index() {
        let geom = DomainGeometry::wedge(1.5 * PI, BoundingBox::centered(0.5)).unwrap();
        let t = CoeffTree::empty(4, 2, geom.bbox, 64, 0).unwrap();
        let rings = ring_decompose_levels(&t, &geom, [4]).unwrap();
        let lvl = rings.level(4).unwrap();
        assert_eq!(lvl.total(), 3 * 256);
        // index with Q(I) = [-0.5, -0.0625] x [0.0625, 0.5]: its closest point
        // to the vertex is (-0.0625, 0.0625)
        let idx = WaveletIndex::new(4, 0, 9, 1);
        let k = lvl.buckets.iter().position(|b| b.contains(&idx)).unwrap();
        let rho = (0.0625f64).hypot(0.0625);
        assert_eq!(k, (rho * 16.0).floor() as usize);
        // Q(I) = [-0.1875, 0.25]^2 holds the vertex
        assert!(lvl.buckets[0].contains(&WaveletIndex::new(4, 5, 5, 2)));
        for b in &lvl.buckets {
            assert!(lvl.buckets.len() <= 17, "{}", b.len());
        }
    }

    #[test]
    fn whitney_zero_field_and_polynomial() {
        let geom = DomainGeometry::wedge(1.5 * PI, BoundingBox::centered(0.5)).unwrap();
        let grid = Grid::new(geom.bbox, 7).unwrap();
        let sys = WaveletSystem::new(4).unwrap();
        let zero = SampledField::zeros(&Mask::full(grid));
        let t = dwt_forward(&zero, &sys, 7).unwrap();
        let r = whitney_ring_check(&t, &geom, 2, 1.0, 2.0, 3..=5).unwrap();
        assert!(r.levels.iter().all(|l| l.max_ratio == 0.0));
        let lin = SampledField::from_fn(&Mask::full(grid), |x| 1.0 + x[0] - 2.0 * x[1]);
        let t = dwt_forward(&lin, &sys, 7).unwrap();
        let r = whitney_ring_check(&t, &geom, 2, 1.0, 2.0, 4..=5).unwrap();
        assert!(r.levels.iter().all(|l| l.checked > 0));
        assert!(r.levels.iter().all(|l| l.max_ratio == 0.0));
        assert_eq!(r.breaches, 0);
    }

    #[test]
    fn embedding_hypothesis() {
        let geom = DomainGeometry::wedge(1.5 * PI, BoundingBox::centered(0.5)).unwrap();
        let f = full_box_field(&geom, 5, |_| 1.0).unwrap();
        let p = EmbeddingParams::new(2, -0.5, 1.0, 2.0);
        assert!(matches!(
            embedding_check(&[f.clone()], &geom, EmbeddingMode::Polyhedral, &p),
            Err(Error::HypothesisViolated(_))
        ));
        let p = EmbeddingParams::new(2, 1.0, 1.0, 1.5);
        assert!(matches!(
            embedding_check(&[f], &geom, EmbeddingMode::Lipschitz, &p),
            Err(Error::HypothesisViolated(_))
        ));
    }
}
