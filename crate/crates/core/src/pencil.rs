//! Operator-pencil data for the heat equation on wedges and spherical-cap
//! cones, eigenvalue-strip checks and admissible Kondratiev weight ranges.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Scan window and step for Legendre-degree roots.
pub const NU_SCAN_MIN: f64 = 0.01;
pub const NU_SCAN_MAX: f64 = 400.0;
pub const NU_SCAN_STEP: f64 = 0.05;
/// Distance to an eigenvalue below which a strip check is reported as borderline.
pub const BORDERLINE_TOL: f64 = 1e-8;

/// Edge strip half-widths `(δ⁻, δ⁺) = (π/θ, π/θ)` for the heat equation.
pub fn wedge_delta(theta: f64) -> Result<(f64, f64)> {
    if !(theta > 0.0 && theta <= 2.0 * PI) {
        return Err(Error::InvalidParameter(format!(
            "opening angle {theta} outside (0, 2π]"
        )));
    }
    let d = PI / theta;
    Ok((d, d))
}

/// `2F1(-μ, μ+1; 1; z)`, the Legendre function `P_μ(1 - 2z)`.
fn legendre_series(mu: f64, z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        term *= (k - mu) * (k + mu + 1.0) / ((k + 1.0) * (k + 1.0)) * z;
        sum += term;
        k += 1.0;
        if term.abs() <= 1e-14 * sum.abs().max(1e-300) && k > mu + 1.0 {
            break;
        }
        if term == 0.0 || k > 1e7 {
            break;
        }
    }
    sum
}

/// Legendre function `P_ν(cos θ)` for real `ν ≥ 0` and `θ ∈ (0, π)`.
///
/// The fractional degrees `μ` and `μ + 1` come from the hypergeometric
/// series about `x = 1`; integer steps use the three-term recurrence.
pub fn legendre_p(nu: f64, theta: f64) -> f64 {
    let x = theta.cos();
    let z = (0.5 * theta).sin().powi(2);
    let mu = nu.fract();
    let steps = nu.trunc() as usize;
    let p0 = legendre_series(mu, z);
    if steps == 0 {
        return p0;
    }
    let mut prev = p0;
    let mut cur = legendre_series(mu + 1.0, z);
    for k in 1..steps {
        let v = mu + k as f64;
        let next = ((2.0 * v + 1.0) * x * cur - v * prev) / (v + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

fn refine_root<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        if b - a < 1e-9 {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fa < 0.0) == (fm < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    // secant polish inside the bracket
    let (mut x0, mut x1) = (a, b);
    let (mut f0, mut f1) = (f(x0), f(x1));
    for _ in 0..50 {
        if f1 == f0 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if !(x2 >= a - 1e-9 && x2 <= b + 1e-9) {
            break;
        }
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f(x1);
        if (x1 - x0).abs() < 1e-15 * x1.abs().max(1.0) || f1 == 0.0 {
            break;
        }
    }
    x1
}

/// Degrees `ν` of the first `count` zeros of `ν ↦ P_ν(cos θ0)`.
pub fn cap_degrees(theta0: f64, count: usize) -> Result<Vec<f64>> {
    if !(theta0 > 0.0 && theta0 < PI) {
        return Err(Error::InvalidParameter(format!(
            "cap half-angle {theta0} outside (0, π)"
        )));
    }
    if count == 0 {
        return Err(Error::InvalidParameter("count must be at least 1".into()));
    }
    let f = |nu: f64| legendre_p(nu, theta0);
    let mut roots = Vec::with_capacity(count);
    let mut a = NU_SCAN_MIN;
    let mut fa = f(a);
    while roots.len() < count && a < NU_SCAN_MAX {
        let b = (a + NU_SCAN_STEP).min(NU_SCAN_MAX);
        let fb = f(b);
        if fa == 0.0 {
            roots.push(a);
        } else if (fa < 0.0) != (fb < 0.0) {
            roots.push(refine_root(&f, a, b));
        }
        a = b;
        fa = fb;
    }
    if roots.len() < count {
        return Err(Error::BracketingFailed {
            found: roots.len(),
            wanted: count,
            lo: NU_SCAN_MIN,
            hi: NU_SCAN_MAX,
        });
    }
    Ok(roots)
}

/// First `count` axisymmetric Dirichlet eigenvalues `Λ = ν(ν+1)` of the
/// Laplace–Beltrami operator on the spherical cap of half-angle `θ0`.
pub fn cap_lb_eigenvalues(theta0: f64, count: usize) -> Result<Vec<f64>> {
    Ok(cap_degrees(theta0, count)?
        .into_iter()
        .map(|nu| nu * (nu + 1.0))
        .collect())
}

/// `λ± = -1/2 ± √(Λ + 1/4)`, returned as `(λ⁻, λ⁺)`.
pub fn pencil_eigenvalues_from_lb(lb: f64) -> (f64, f64) {
    let r = (lb + 0.25).sqrt();
    (-0.5 - r, -0.5 + r)
}

#[derive(Clone, Debug, PartialEq)]
pub enum PencilGeometry {
    Wedge { openings: Vec<f64> },
    Cap { half_angle: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PencilSpec {
    pub geometry: PencilGeometry,
    pub m: usize,
    /// Real eigenvalues, sorted ascending.
    pub eigenvalues: Vec<f64>,
    /// `(δ⁻, δ⁺)` per edge (wedges only).
    pub deltas: Vec<(f64, f64)>,
    pub time_independent: bool,
}

impl PencilSpec {
    /// Heat pencil on a spherical-cap cone: pairs `λ±` from the first
    /// `count` cap eigenvalues.
    pub fn cap(theta0: f64, count: usize) -> Result<Self> {
        let mut eigenvalues = Vec::with_capacity(2 * count);
        for lb in cap_lb_eigenvalues(theta0, count)? {
            let (lo, hi) = pencil_eigenvalues_from_lb(lb);
            eigenvalues.push(lo);
            eigenvalues.push(hi);
        }
        eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self {
            geometry: PencilGeometry::Cap { half_angle: theta0 },
            m: 1,
            eigenvalues,
            deltas: Vec::new(),
            time_independent: true,
        })
    }

    /// Heat pencil on planar wedges: eigenvalues `±kπ/θ`, `k = 1..=count`.
    pub fn wedge(openings: &[f64], count: usize) -> Result<Self> {
        let mut eigenvalues = Vec::new();
        let mut deltas = Vec::new();
        for &theta in openings {
            deltas.push(wedge_delta(theta)?);
            for k in 1..=count {
                let l = k as f64 * PI / theta;
                eigenvalues.push(l);
                eigenvalues.push(-l);
            }
        }
        eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self {
            geometry: PencilGeometry::Wedge {
                openings: openings.to_vec(),
            },
            m: 1,
            eigenvalues,
            deltas,
            time_independent: true,
        })
    }

    pub fn empty(m: usize) -> Self {
        Self {
            geometry: PencilGeometry::Wedge { openings: Vec::new() },
            m,
            eigenvalues: Vec::new(),
            deltas: Vec::new(),
            time_independent: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StripCheck {
    pub free: bool,
    /// Some eigenvalue lies within [`BORDERLINE_TOL`] of the strip.
    pub borderline: bool,
}

/// Closed-strip test `[lo, hi]` against the stored eigenvalues.
pub fn strip_check(spec: &PencilSpec, lo: f64, hi: f64) -> StripCheck {
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let free = !spec.eigenvalues.iter().any(|l| *l >= lo && *l <= hi);
    let borderline = spec
        .eigenvalues
        .iter()
        .any(|l| (*l - lo).abs() <= BORDERLINE_TOL || (*l - hi).abs() <= BORDERLINE_TOL);
    StripCheck { free, borderline }
}

pub fn strip_free(spec: &PencilSpec, lo: f64, hi: f64) -> bool {
    strip_check(spec, lo, hi).free
}

/// Strip between `Re λ = b + 2m - 3/2` and `Re λ = b' + 2m - 3/2`.
pub fn weight_strip_free(spec: &PencilSpec, b: f64, b_prime: f64) -> StripCheck {
    let shift = 2.0 * spec.m as f64 - 1.5;
    strip_check(spec, b + shift, b_prime + shift)
}

/// `γ_m = ⌊(γ - 1) / 2m⌋`.
pub fn gamma_m(gamma: usize, m: usize) -> Result<usize> {
    if m == 0 || gamma < 2 * m {
        return Err(Error::InvalidParameter(format!(
            "need γ >= 2m >= 2, got γ={gamma}, m={m}"
        )));
    }
    Ok((gamma - 1) / (2 * m))
}

/// `min(γ, 3m)`, the supremum of admissible spatial Besov smoothness.
pub fn besov_eta_bound(gamma: usize, m: usize) -> Result<f64> {
    if m == 0 || gamma < 2 * m {
        return Err(Error::InvalidParameter(format!(
            "need γ >= 2m >= 2, got γ={gamma}, m={m}"
        )));
    }
    Ok(gamma.min(3 * m) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    EdgeStrip,
    ABox,
    VertexStrip,
}

impl Constraint {
    pub fn tag(&self) -> &'static str {
        match self {
            Constraint::EdgeStrip => "edge-strip",
            Constraint::ABox => "a-box",
            Constraint::VertexStrip => "vertex-strip",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound {
    pub value: f64,
    pub closed: bool,
    pub constraint: Constraint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightRange {
    pub lower: Bound,
    pub upper: Bound,
    pub feasible: bool,
}

impl WeightRange {
    pub fn contains(&self, a: f64) -> bool {
        let lo_ok = if self.lower.closed { a >= self.lower.value } else { a > self.lower.value };
        let hi_ok = if self.upper.closed { a <= self.upper.value } else { a < self.upper.value };
        self.feasible && lo_ok && hi_ok
    }

    /// Interval in bracket notation, e.g. `[-1, -0.5)`.
    pub fn notation(&self) -> String {
        if !self.feasible {
            return "empty".into();
        }
        format!(
            "{}{}, {}{}",
            if self.lower.closed { '[' } else { '(' },
            self.lower.value,
            self.upper.value,
            if self.upper.closed { ']' } else { ')' }
        )
    }
}

fn tighten_lower(cur: &mut Bound, cand: Bound) {
    if cand.value > cur.value || (cand.value == cur.value && !cand.closed && cur.closed) {
        *cur = cand;
    }
}

fn tighten_upper(cur: &mut Bound, cand: Bound) {
    if cand.value < cur.value || (cand.value == cur.value && !cand.closed && cur.closed) {
        *cur = cand;
    }
}

/// Admissible `a`: the open edge strips
/// `-δ⁻ < a + 2m(γ_m - i) + m < δ⁺` for `i = 0..=γ_m` and every edge,
/// intersected with the closed box `-m ≤ a ≤ m`. Optional vertex
/// eigenvalues add the strip condition with `b = a + 2mγ_m`, `b' = -m`.
pub fn admissible_weight_range(m: usize, gamma_m: usize, thetas: &[f64], vertex: Option<&PencilSpec>) -> Result<WeightRange> {
    if m == 0 {
        return Err(Error::InvalidParameter("operator order m must be at least 1".into()));
    }
    let mf = m as f64;
    let mut lower = Bound {
        value: -mf,
        closed: true,
        constraint: Constraint::ABox,
    };
    let mut upper = Bound {
        value: mf,
        closed: true,
        constraint: Constraint::ABox,
    };
    let mut feasible = true;
    for &theta in thetas {
        let (dm, dp) = wedge_delta(theta)?;
        for i in 0..=gamma_m {
            let shift = 2.0 * mf * (gamma_m - i) as f64 + mf;
            tighten_lower(
                &mut lower,
                Bound {
                    value: -dm - shift,
                    closed: false,
                    constraint: Constraint::EdgeStrip,
                },
            );
            tighten_upper(
                &mut upper,
                Bound {
                    value: dp - shift,
                    closed: false,
                    constraint: Constraint::EdgeStrip,
                },
            );
        }
    }
    if let Some(spec) = vertex {
        let base = mf - 1.5;
        let c = 2.0 * mf * (gamma_m as f64 + 1.0) - 1.5;
        for &l in &spec.eigenvalues {
            if l > base {
                tighten_upper(
                    &mut upper,
                    Bound {
                        value: l - c,
                        closed: false,
                        constraint: Constraint::VertexStrip,
                    },
                );
            } else if l < base {
                tighten_lower(
                    &mut lower,
                    Bound {
                        value: l - c,
                        closed: false,
                        constraint: Constraint::VertexStrip,
                    },
                );
            } else {
                feasible = false;
            }
        }
    }
    if lower.value > upper.value || (lower.value == upper.value && !(lower.closed && upper.closed)) {
        feasible = false;
    }
    Ok(WeightRange {
        lower,
        upper,
        feasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_matches_polynomials() {
        for theta in [0.3f64, 1.0, 2.0, 2.9] {
            let x: f64 = theta.cos();
            assert!((legendre_p(0.0, theta) - 1.0).abs() < 1e-13);
            assert!((legendre_p(1.0, theta) - x).abs() < 1e-13);
            assert!((legendre_p(2.0, theta) - 0.5 * (3.0 * x * x - 1.0)).abs() < 1e-12);
            let p5 = (63.0 * x.powi(5) - 70.0 * x.powi(3) + 15.0 * x) / 8.0;
            assert!((legendre_p(5.0, theta) - p5).abs() < 1e-12);
        }
    }

    #[test]
    fn legendre_fractional_continuity() {
        // recurrence and series agree at a fractional degree above 1
        let theta = 1.1;
        let direct = legendre_series(2.3, (0.5f64 * theta).sin().powi(2));
        assert!((direct - legendre_p(2.3, theta)).abs() < 1e-12);
    }

    #[test]
    fn hemisphere_anchor() {
        let lb = cap_lb_eigenvalues(PI / 2.0, 3).unwrap();
        assert!((lb[0] - 2.0).abs() < 1e-9);
        // odd Legendre polynomials vanish at 0: ν = 1, 3, 5
        assert!((lb[1] - 12.0).abs() < 1e-8);
        assert!((lb[2] - 30.0).abs() < 1e-8);
        let (lm, lp) = pencil_eigenvalues_from_lb(lb[0]);
        assert!((lp - 1.0).abs() < 1e-9 && (lm + 2.0).abs() < 1e-9);
    }

    #[test]
    fn small_cap_anchor() {
        let lb = cap_lb_eigenvalues(5f64.to_radians(), 1).unwrap();
        assert!(pencil_eigenvalues_from_lb(lb[0]).1 > 27.0);
    }

    #[test]
    fn tiny_cap_fails_bracketing() {
        assert!(matches!(
            cap_lb_eigenvalues(0.2f64.to_radians(), 1),
            Err(Error::BracketingFailed { found: 0, wanted: 1, .. })
        ));
    }

    #[test]
    fn pencil_pairs() {
        assert_eq!(pencil_eigenvalues_from_lb(0.0), (-1.0, 0.0));
        assert_eq!(pencil_eigenvalues_from_lb(6.0), (-3.0, 2.0));
        let (a, b) = pencil_eigenvalues_from_lb(2.0);
        assert!((a + 2.0).abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn strips() {
        let spec = PencilSpec::cap(PI / 2.0, 3).unwrap();
        assert!(strip_free(&spec, -0.9, -0.1));
        assert!(!strip_free(&spec, 0.5, 1.5));
        assert!(strip_free(&PencilSpec::empty(1), -10.0, 10.0));
        let c = strip_check(&spec, 1.0 + 1e-10, 2.0);
        assert!(c.free && c.borderline);
    }

    #[test]
    fn gamma_and_eta() {
        assert_eq!(gamma_m(2, 1).unwrap(), 0);
        assert_eq!(gamma_m(4, 2).unwrap(), 0);
        assert_eq!(gamma_m(4, 1).unwrap(), 1);
        assert_eq!(gamma_m(9, 2).unwrap(), 2);
        assert!(gamma_m(3, 2).is_err());
        assert_eq!(besov_eta_bound(6, 1).unwrap(), 3.0);
        assert_eq!(besov_eta_bound(4, 2).unwrap(), 4.0);
        assert_eq!(besov_eta_bound(2, 1).unwrap(), 2.0);
    }

    #[test]
    fn weight_ranges() {
        let r = admissible_weight_range(1, 0, &[2.0 * PI], None).unwrap();
        assert!(r.feasible);
        assert_eq!((r.lower.value, r.upper.value), (-1.0, -0.5));
        assert_eq!(r.upper.constraint, Constraint::EdgeStrip);
        let r = admissible_weight_range(1, 1, &[PI / 4.0], None).unwrap();
        assert_eq!((r.lower.value, r.upper.value), (-1.0, 1.0));
        assert!(!r.upper.closed);
        let r = admissible_weight_range(1, 1, &[2.0 * PI], None).unwrap();
        assert!(!r.feasible);
    }

    #[test]
    fn vertex_strip_restricts_range() {
        let cap = PencilSpec::cap(PI / 2.0, 2).unwrap();
        let r = admissible_weight_range(1, 0, &[], Some(&cap)).unwrap();
        // γ_m = 0: a < 1 - (2 - 3/2) = 0.5; λ⁻ = -2 < -1/2 gives a > -2.5
        assert!((r.upper.value - 0.5).abs() < 1e-9);
        assert_eq!(r.upper.constraint, Constraint::VertexStrip);
        assert_eq!(r.lower.constraint, Constraint::ABox);
        let r = admissible_weight_range(1, 1, &[], Some(&cap)).unwrap();
        assert!(!r.feasible);
    }
}
