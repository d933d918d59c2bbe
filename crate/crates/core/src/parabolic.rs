//! Heat equation `∂_t u - Δu + ε u^M = f` on masked dyadic grids with zero
//! initial data and homogeneous Dirichlet conditions.
//!
//! Space: cell-centered 5-point Laplacian; a neighbor outside the mask is a
//! ghost cell holding `-u`, which puts the zero boundary value on the cell
//! face and keeps the matrix symmetric positive definite. Time:
//! Crank–Nicolson, each step solved by Jacobi-preconditioned CG.

use crate::error::{Error, Result};
use crate::field::{Mask, Point, SampledField};
use crate::geometry::{rasterize, CutoffProfile, DomainGeometry};
use crate::norms::{
    besov_norm_wavelet, critical_smoothness, kondratiev_norm, BesovSpec, CriticalSmoothness, KondratievSpec,
    NormReport, SmoothnessScale,
};
use crate::numerics::pairwise_sum;
use crate::wavelet::{dwt_forward, WaveletSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;
use std::sync::Arc;

const NONE: u32 = u32::MAX;
const DOT_CHUNK: usize = 4096;

/// Forcing `f(x, t)`.
#[derive(Clone, Default)]
pub enum Forcing {
    #[default]
    Zero,
    Function(Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>),
    /// One full-grid (row-major) vector per time node.
    Series(Vec<Vec<f64>>),
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Zero => write!(f, "Zero"),
            Forcing::Function(_) => write!(f, "Function(..)"),
            Forcing::Series(v) => write!(f, "Series({} nodes)", v.len()),
        }
    }
}

impl Forcing {
    pub fn function<F: Fn(Point, f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Forcing::Function(Arc::new(f))
    }

    /// Parses an expression in `x`, `y`, `t` (e.g. `t * sin(x)`).
    pub fn expression(src: &str) -> Result<Self> {
        use evalexpr::{build_operator_tree, ContextWithMutableVariables, HashMapContext, Value};
        let tree = build_operator_tree(src).map_err(|e| Error::Parse(format!("forcing `{src}`: {e}")))?;
        // validate once so evaluation errors surface at parse time
        let mut ctx = HashMapContext::new();
        for (k, v) in [("x", 0.25), ("y", 0.25), ("t", 0.0)] {
            ctx.set_value(k.into(), Value::Float(v)).expect("fresh context");
        }
        tree.eval_number_with_context(&ctx)
            .map_err(|e| Error::Parse(format!("forcing `{src}`: {e}")))?;
        Ok(Forcing::function(move |x: Point, t: f64| {
            let mut ctx = HashMapContext::new();
            ctx.set_value("x".into(), Value::Float(x[0])).expect("fresh context");
            ctx.set_value("y".into(), Value::Float(x[1])).expect("fresh context");
            ctx.set_value("t".into(), Value::Float(t)).expect("fresh context");
            tree.eval_number_with_context(&ctx).unwrap_or(f64::NAN)
        }))
    }
}

/// Treatment of forcing that does not vanish at `t = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ramp {
    Off,
    /// Multiply by `min(t / t_ramp, 1)^2` when `f(·, 0) ≠ 0`.
    Auto { t_ramp: f64 },
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub geom: DomainGeometry,
    pub level: u32,
    pub dt: f64,
    pub t_end: f64,
    pub forcing: Forcing,
    pub eps: f64,
    pub power: u32,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Ball parameter `r0 > 1`.
    pub r0: f64,
    /// Constant in the contraction conditions.
    pub c: f64,
    pub ramp: Ramp,
    pub cg_tol: f64,
    pub seed: u64,
    pub power_iterations: usize,
}

impl SolverConfig {
    pub fn new(geom: DomainGeometry, level: u32, dt: f64, t_end: f64) -> Self {
        Self {
            geom,
            level,
            dt,
            t_end,
            forcing: Forcing::Zero,
            eps: 0.0,
            power: 2,
            picard_tol: 1e-10,
            picard_max_iter: 200,
            r0: 2.0,
            c: 1.0,
            ramp: Ramp::Auto { t_ramp: 0.1 * t_end },
            cg_tol: 1e-12,
            seed: 0x5eed,
            power_iterations: 20,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_end > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need dt > 0 and T > 0 (dt={}, T={})",
                self.dt, self.t_end
            )));
        }
        let n = self.t_end / self.dt;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "T = {} is not a multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        if self.eps < 0.0 || self.power == 0 || !(self.r0 > 1.0) || !(self.c > 0.0) {
            return Err(Error::InvalidParameter(
                "need eps >= 0, M >= 1, r0 > 1 and c > 0".into(),
            ));
        }
        if self.geom.is_metadata_only() {
            return Err(Error::MetadataOnly("cap cones carry no planar grid"));
        }
        Ok(())
    }
}

/// Unknown numbering and the Dirichlet Laplacian on a masked grid.
#[derive(Debug)]
pub struct Discretization {
    pub mask: Mask,
    /// Grid cell of each unknown.
    pub cells: Vec<usize>,
    neighbors: Vec<[u32; 4]>,
    /// `4 + #outside neighbors`.
    diag: Vec<f64>,
}

impl Discretization {
    pub fn new(mask: Mask) -> Self {
        let n = mask.grid.n;
        let mut unknown = vec![NONE; n * n];
        let mut cells = Vec::new();
        for (c, inside) in mask.inside.iter().enumerate() {
            if *inside {
                unknown[c] = cells.len() as u32;
                cells.push(c);
            }
        }
        let mut neighbors = Vec::with_capacity(cells.len());
        let mut diag = Vec::with_capacity(cells.len());
        for &c in &cells {
            let (ix, iy) = (c % n, c / n);
            let nb = [
                (ix > 0).then(|| c - 1),
                (ix + 1 < n).then(|| c + 1),
                (iy > 0).then(|| c - n),
                (iy + 1 < n).then(|| c + n),
            ]
            .map(|o| o.map(|k| unknown[k]).unwrap_or(NONE));
            let outside = nb.iter().filter(|k| **k == NONE).count();
            neighbors.push(nb);
            diag.push(4.0 + outside as f64);
        }
        Self {
            mask,
            cells,
            neighbors,
            diag,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.mask.grid.spacing()
    }

    /// `out = (I + s A) u` with `A = -Δ_h`; `s = 0` gives `u`.
    pub fn apply_shifted(&self, s: f64, u: &[f64], out: &mut [f64]) {
        let h = self.spacing();
        let k = s / (h * h);
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let mut acc = self.diag[i] * u[i];
            for nb in self.neighbors[i] {
                if nb != NONE {
                    acc -= u[nb as usize];
                }
            }
            *o = u[i] + k * acc;
        });
    }

    pub fn apply_laplacian(&self, u: &[f64], out: &mut [f64]) {
        let h = self.spacing();
        let k = 1.0 / (h * h);
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let mut acc = self.diag[i] * u[i];
            for nb in self.neighbors[i] {
                if nb != NONE {
                    acc -= u[nb as usize];
                }
            }
            *o = k * acc;
        });
    }

    pub fn sample<F: Fn(Point) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        let grid = self.mask.grid;
        self.cells
            .par_iter()
            .map(|&c| f(grid.center(c % grid.n, c / grid.n)))
            .collect()
    }

    pub fn from_grid(&self, full: &[f64]) -> Vec<f64> {
        self.cells.iter().map(|&c| full[c]).collect()
    }

    pub fn to_field(&self, u: &[f64]) -> SampledField {
        let mut values = vec![0.0; self.mask.grid.len()];
        for (v, &c) in u.iter().zip(&self.cells) {
            values[c] = *v;
        }
        SampledField {
            grid: self.mask.grid,
            values,
            mask: self.mask.inside.clone(),
        }
    }

    /// Grid `L2` inner product.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let h = self.spacing();
        dot(a, b) * h * h
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(DOT_CHUNK)
        .zip(b.par_chunks(DOT_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    pairwise_sum(&parts)
}

/// Solves `(I + s A) x = b` by Jacobi-preconditioned CG from the initial `x`.
fn cg_solve(disc: &Discretization, s: f64, b: &[f64], x: &mut [f64], tol: f64) -> Result<usize> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let h = disc.spacing();
    let k = s / (h * h);
    let inv_diag: Vec<f64> = disc.diag.iter().map(|d| 1.0 / (1.0 + k * d)).collect();
    let mut r = vec![0.0; n];
    disc.apply_shifted(s, x, &mut r);
    r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let max_iter = 20 * n + 100;
    for it in 0..max_iter {
        let rnorm = dot(&r, &r).sqrt();
        if rnorm <= tol * bnorm {
            return Ok(it);
        }
        disc.apply_shifted(s, &p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolveFailed(format!("CG breakdown, p·Ap = {pap}")));
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        z.par_iter_mut()
            .zip(&r)
            .zip(&inv_diag)
            .for_each(|((zi, ri), d)| *zi = ri * d);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(Error::SolveFailed(format!("CG did not reach {tol:e} in {max_iter} iterations")))
}

/// Solution states at the time nodes `t_n = n·dt`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub disc: Arc<Discretization>,
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|n| n as f64 * self.dt).collect()
    }

    pub fn node_at(&self, t: f64) -> Option<usize> {
        let n = t / self.dt;
        let r = n.round();
        ((n - r).abs() < 1e-9 * n.max(1.0) && r >= 0.0 && (r as usize) < self.states.len()).then_some(r as usize)
    }

    pub fn field(&self, node: usize) -> SampledField {
        self.disc.to_field(&self.states[node])
    }

    /// Discrete `L2(K_T)` norm with trapezoid weights in time.
    pub fn l2_norm(&self) -> f64 {
        kt_norm(&self.disc, self.dt, &self.states)
    }
}

fn trapezoid_weight(n: usize, last: usize) -> f64 {
    if n == 0 || n == last {
        0.5
    } else {
        1.0
    }
}

fn kt_dot(disc: &Discretization, dt: f64, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let last = a.len() - 1;
    let terms: Vec<f64> = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(n, (x, y))| trapezoid_weight(n, last) * dt * disc.dot(x, y))
        .collect();
    pairwise_sum(&terms)
}

fn kt_norm(disc: &Discretization, dt: f64, a: &[Vec<f64>]) -> f64 {
    kt_dot(disc, dt, a, a).max(0.0).sqrt()
}

fn kt_dist(disc: &Discretization, dt: f64, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let d: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect();
    kt_norm(disc, dt, &d)
}

/// Linear Crank–Nicolson propagator for a fixed configuration.
#[derive(Clone, Debug)]
pub struct HeatSolver {
    pub disc: Arc<Discretization>,
    pub dt: f64,
    pub steps: usize,
    pub cg_tol: f64,
}

impl HeatSolver {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.geom.bbox.side / (1u64 << cfg.level) as f64;
        if cfg.dt > 4.0 * h {
            log::warn!("time step {} exceeds 4h = {}; expect reduced accuracy", cfg.dt, 4.0 * h);
        }
        let mask = rasterize(&cfg.geom, cfg.level)?;
        Ok(Self {
            disc: Arc::new(Discretization::new(mask)),
            dt: cfg.dt,
            steps: cfg.steps(),
            cg_tol: cfg.cg_tol,
        })
    }

    /// Forcing vectors at every time node, ramped per `cfg.ramp`.
    pub fn forcing_nodes(&self, cfg: &SolverConfig) -> Result<Vec<Vec<f64>>> {
        let m = self.disc.len();
        let mut nodes: Vec<Vec<f64>> = match &cfg.forcing {
            Forcing::Zero => vec![vec![0.0; m]; self.steps + 1],
            Forcing::Function(f) => (0..=self.steps)
                .map(|n| {
                    let t = n as f64 * self.dt;
                    self.disc.sample(|x| f(x, t))
                })
                .collect(),
            Forcing::Series(series) => {
                if series.len() != self.steps + 1 {
                    return Err(Error::InvalidParameter(format!(
                        "forcing series has {} nodes, expected {}",
                        series.len(),
                        self.steps + 1
                    )));
                }
                series
                    .iter()
                    .map(|v| {
                        if v.len() != self.disc.mask.grid.len() {
                            Err(Error::InvalidParameter("forcing node has wrong grid size".into()))
                        } else {
                            Ok(self.disc.from_grid(v))
                        }
                    })
                    .collect::<Result<_>>()?
            }
        };
        if nodes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("forcing evaluates to a non-finite value".into()));
        }
        let incompatible = nodes[0].iter().any(|v| *v != 0.0);
        if incompatible {
            match cfg.ramp {
                Ramp::Off => log::warn!("forcing does not vanish at t = 0; data are incompatible"),
                Ramp::Auto { t_ramp } => {
                    log::warn!("forcing does not vanish at t = 0; ramping over t_ramp = {t_ramp}");
                    for (n, v) in nodes.iter_mut().enumerate() {
                        let t = n as f64 * self.dt;
                        let w = (t / t_ramp).min(1.0).powi(2);
                        v.iter_mut().for_each(|x| *x *= w);
                    }
                }
            }
        }
        Ok(nodes)
    }

    /// `u = L̃^{-1} g` for sources at the time nodes (zero initial state).
    pub fn propagate(&self, g: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let m = self.disc.len();
        let half = 0.5 * self.dt;
        let mut states = Vec::with_capacity(self.steps + 1);
        states.push(vec![0.0; m]);
        let mut cu = vec![0.0; m];
        for n in 0..self.steps {
            let u = &states[n];
            self.disc.apply_shifted(-half, u, &mut cu);
            let rhs: Vec<f64> = (0..m).map(|i| cu[i] + half * (g[n][i] + g[n + 1][i])).collect();
            let mut next = u.clone();
            cg_solve(&self.disc, half, &rhs, &mut next, self.cg_tol)?;
            states.push(next);
        }
        Ok(states)
    }

    /// Adjoint of [`propagate`] in the trapezoid-weighted `L2(K_T)` inner product.
    pub fn propagate_adjoint(&self, v: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let m = self.disc.len();
        let nn = self.steps;
        let half = 0.5 * self.dt;
        let h2 = self.disc.spacing().powi(2);
        let omega = |n: usize| trapezoid_weight(n, nn) * self.dt * h2;
        // z[n] for n = 1..=N, z[0] = z[N+1] = 0
        let mut z = vec![vec![0.0; m]; nn + 2];
        let mut cz = vec![0.0; m];
        for n in (1..=nn).rev() {
            let mut rhs: Vec<f64> = v[n].iter().map(|x| omega(n) * x).collect();
            if n < nn {
                self.disc.apply_shifted(-half, &z[n + 1], &mut cz);
                rhs.iter_mut().zip(&cz).for_each(|(r, c)| *r += c);
            }
            let mut zn = z[n + 1].clone();
            cg_solve(&self.disc, half, &rhs, &mut zn, self.cg_tol)?;
            z[n] = zn;
        }
        Ok((0..=nn)
            .map(|n| {
                let w = omega(n);
                (0..m).map(|i| half * (z[n][i] + z[n + 1][i]) / w).collect()
            })
            .collect())
    }
}

/// Crank–Nicolson trajectory of the linear problem `∂_t u - Δu = f`.
pub fn linear_solve(cfg: &SolverConfig) -> Result<Trajectory> {
    let solver = HeatSolver::new(cfg)?;
    let f = solver.forcing_nodes(cfg)?;
    let states = solver.propagate(&f)?;
    Ok(Trajectory {
        disc: solver.disc.clone(),
        dt: solver.dt,
        states,
    })
}

/// Power-iteration estimate of the discrete `L2(K_T) → L2(K_T)` norm of
/// `f ↦ L̃^{-1} f`.
pub fn estimate_inverse_norm(cfg: &SolverConfig) -> Result<f64> {
    let solver = HeatSolver::new(cfg)?;
    estimate_with(&solver, cfg.seed, cfg.power_iterations)
}

fn estimate_with(solver: &HeatSolver, seed: u64, iterations: usize) -> Result<f64> {
    let m = solver.disc.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<Vec<f64>> = (0..=solver.steps)
        .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let disc = &solver.disc;
    let norm = kt_norm(disc, solver.dt, &x);
    x.iter_mut().flatten().for_each(|v| *v /= norm);
    let mut best = 0.0f64;
    for _ in 0..iterations.max(1) {
        let tx = solver.propagate(&x)?;
        let gain = kt_norm(disc, solver.dt, &tx);
        best = best.max(gain);
        let y = solver.propagate_adjoint(&tx)?;
        let ny = kt_norm(disc, solver.dt, &y);
        if ny == 0.0 {
            break;
        }
        x = y.into_iter().map(|v| v.into_iter().map(|e| e / ny).collect()).collect();
    }
    Ok(best)
}

/// Which contraction condition produced an ε bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpsBranch {
    /// `r0 ‖L̃^{-1}‖ η > 1`: the ball-invariance condition binds.
    Large,
    /// `r0 ‖L̃^{-1}‖ η ≤ 1`.
    Small,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsBound {
    pub value: f64,
    pub branch: EpsBranch,
}

/// Largest `ε` allowed by the contraction conditions.
pub fn max_epsilon(eta: f64, invnorm: f64, m: u32, r0: f64, c: f64) -> Result<EpsBound> {
    if !(eta > 0.0 && invnorm > 0.0 && c > 0.0 && r0 > 1.0 && m >= 1) {
        return Err(Error::InvalidParameter(format!(
            "max_epsilon needs positive inputs, r0 > 1, M >= 1 (eta={eta}, invnorm={invnorm}, M={m}, r0={r0}, c={c})"
        )));
    }
    let mf = m as f64;
    if r0 * invnorm * eta > 1.0 {
        let e = 2 * m as i32 - 1;
        let value = (r0 - 1.0) * (1.0 / r0).powi(e) / (c * mf * eta.powi(2 * (m as i32 - 1)) * invnorm.powi(e));
        Ok(EpsBound {
            value,
            branch: EpsBranch::Large,
        })
    } else {
        Ok(EpsBound {
            value: (r0 - 1.0) / (r0 * c * mf * invnorm),
            branch: EpsBranch::Small,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PicardTrace {
    /// `‖u_{k+1} - u_k‖` in discrete `L2(K_T)`.
    pub residuals: Vec<f64>,
    /// Measured contraction factor (largest residual ratio above the noise floor).
    pub q: f64,
    pub inverse_norm: f64,
    pub eta: f64,
    pub eps_bound: EpsBound,
    /// Ball radius `R = (r0 - 1) η ‖L̃^{-1}‖`.
    pub radius: f64,
    /// Largest distance of an iterate from the linear solution.
    pub max_distance: f64,
    pub converged: bool,
}

/// Runs `u ← L̃^{-1}(f - ε u^M)` from the linear solution.
pub fn picard_semilinear(cfg: &SolverConfig) -> Result<(Trajectory, PicardTrace)> {
    picard_from(cfg, None)
}

/// Picard iteration from `start` (defaults to the linear solution).
pub fn picard_from(cfg: &SolverConfig, start: Option<Vec<Vec<f64>>>) -> Result<(Trajectory, PicardTrace)> {
    let solver = HeatSolver::new(cfg)?;
    let f = solver.forcing_nodes(cfg)?;
    let disc = solver.disc.clone();
    let dt = solver.dt;
    let linear = solver.propagate(&f)?;
    let eta = kt_norm(&disc, dt, &f);
    let inverse_norm = estimate_with(&solver, cfg.seed, cfg.power_iterations)?;
    let eps_bound = if eta > 0.0 {
        max_epsilon(eta, inverse_norm, cfg.power, cfg.r0, cfg.c)?
    } else {
        EpsBound {
            value: f64::INFINITY,
            branch: EpsBranch::Small,
        }
    };
    let radius = (cfg.r0 - 1.0) * eta * inverse_norm;
    let scale = kt_norm(&disc, dt, &linear).max(f64::MIN_POSITIVE);
    let mut u = start.unwrap_or_else(|| linear.clone());
    if u.len() != linear.len() || u.iter().any(|v| v.len() != disc.len()) {
        return Err(Error::InvalidParameter("start iterate has the wrong shape".into()));
    }
    let mut residuals = Vec::new();
    let mut q = 0.0f64;
    let mut growing = 0usize;
    let mut max_distance = kt_dist(&disc, dt, &u, &linear);
    let mut converged = false;
    for _ in 0..cfg.picard_max_iter {
        let g: Vec<Vec<f64>> = f
            .iter()
            .zip(&u)
            .map(|(fv, uv)| fv.iter().zip(uv).map(|(a, b)| a - cfg.eps * b.powi(cfg.power as i32)).collect())
            .collect();
        let next = solver.propagate(&g)?;
        let res = kt_dist(&disc, dt, &next, &u);
        u = next;
        max_distance = max_distance.max(kt_dist(&disc, dt, &u, &linear));
        if !res.is_finite() {
            return Err(Error::ContractionFailed { q: f64::INFINITY });
        }
        if let Some(prev) = residuals.last().copied() {
            let prev: f64 = prev;
            if prev > 1e-13 * scale {
                let ratio = res / prev;
                q = q.max(ratio);
                if ratio > 1.0 {
                    growing += 1;
                    if growing >= 5 {
                        return Err(Error::ContractionFailed { q });
                    }
                } else {
                    growing = 0;
                }
            }
        }
        residuals.push(res);
        if res <= cfg.picard_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations: residuals.len(),
            residual: residuals.last().copied().unwrap_or(f64::NAN),
        });
    }
    let trace = PicardTrace {
        residuals,
        q,
        inverse_norm,
        eta,
        eps_bound,
        radius,
        max_distance,
        converged,
    };
    Ok((
        Trajectory {
            disc,
            dt,
            states: u,
        },
        trace,
    ))
}

/// Discrete residual `‖∂_t u - Δu + ε u^M - f‖` of the Crank–Nicolson scheme.
pub fn defect_norm(cfg: &SolverConfig, traj: &Trajectory) -> Result<f64> {
    let solver = HeatSolver::new(cfg)?;
    let f = solver.forcing_nodes(cfg)?;
    let disc = &traj.disc;
    let m = disc.len();
    let dt = traj.dt;
    let nl = |v: f64| cfg.eps * v.powi(cfg.power as i32);
    let mut au = vec![0.0; m];
    let mut au_next = vec![0.0; m];
    let mut total = Vec::new();
    for n in 0..traj.states.len() - 1 {
        let (u0, u1) = (&traj.states[n], &traj.states[n + 1]);
        disc.apply_laplacian(u0, &mut au);
        disc.apply_laplacian(u1, &mut au_next);
        let r: Vec<f64> = (0..m)
            .map(|i| {
                (u1[i] - u0[i]) / dt + 0.5 * (au[i] + au_next[i]) + 0.5 * (nl(u0[i]) + nl(u1[i]))
                    - 0.5 * (f[n][i] + f[n + 1][i])
            })
            .collect();
        total.push(dt * disc.dot(&r, &r));
    }
    Ok(pairwise_sum(&total).sqrt())
}

#[derive(Clone, Debug)]
pub struct SnapshotOptions {
    pub wavelet_order: usize,
    /// Levels used for the decay fits.
    pub fit_levels: std::ops::RangeInclusive<u32>,
    pub s_grid: Vec<f64>,
    pub a_grid: Vec<f64>,
    pub kondratiev_m: usize,
    pub p: f64,
    pub cutoff: Option<CutoffProfile>,
}

impl SnapshotOptions {
    pub fn new(fit_levels: std::ops::RangeInclusive<u32>) -> Self {
        Self {
            wavelet_order: 4,
            fit_levels,
            s_grid: vec![0.5, 1.0, 1.5, 2.0, 2.5],
            a_grid: vec![0.0, 0.5, 1.0, 1.5],
            kondratiev_m: 1,
            p: 2.0,
            cutoff: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SnapshotReport {
    pub time: f64,
    pub besov: Vec<NormReport>,
    pub kondratiev: Vec<NormReport>,
    /// Largest Sobolev smoothness (`B^s_{p,p}`) with decaying level terms.
    pub s_hat: CriticalSmoothness,
    /// Largest adaptivity-scale smoothness (`B^s_{τ,τ}`) with decaying level terms.
    pub eta_hat: CriticalSmoothness,
}

/// `φ·u(t)` on the full box (zero outside the domain).
pub fn cut_snapshot(traj: &Trajectory, node: usize, cutoff: Option<&CutoffProfile>) -> SampledField {
    let field = traj.field(node);
    let full = Mask::full(field.grid);
    let grid = field.grid;
    let n = grid.n;
    let values: Vec<f64> = (0..grid.len())
        .map(|c| {
            let v = field.values[c];
            match cutoff {
                Some(p) if v != 0.0 => v * p.eval(grid.center(c % n, c / n)),
                _ => v,
            }
        })
        .collect();
    SampledField::from_values(&full, values).expect("same grid")
}

/// Besov and Kondratiev sweeps of the cut-off snapshot at time `t`.
pub fn snapshot_analysis(traj: &Trajectory, t: f64, geom: &DomainGeometry, opts: &SnapshotOptions) -> Result<SnapshotReport> {
    let node = traj
        .node_at(t)
        .ok_or_else(|| Error::InvalidParameter(format!("time {t} is not on the time grid")))?;
    let cutoff = opts.cutoff.unwrap_or_else(|| geom.cutoff());
    let field = cut_snapshot(traj, node, Some(&cutoff));
    let sys = WaveletSystem::new(opts.wavelet_order)?;
    let k = field
        .grid
        .resolution_log2()
        .ok_or_else(|| Error::InvalidParameter("snapshot grid is not dyadic".into()))?;
    let tree = dwt_forward(&field, &sys, k)?;
    let besov = opts
        .s_grid
        .iter()
        .filter(|s| **s < opts.wavelet_order as f64)
        .map(|s| besov_norm_wavelet(&tree, &BesovSpec::new(*s, opts.p, opts.p, 2)?))
        .collect::<Result<Vec<_>>>()?;
    let mut inside = field.clone();
    inside.mask = traj.disc.mask.inside.clone();
    let kondratiev = opts
        .a_grid
        .iter()
        .map(|a| kondratiev_norm(&inside, geom, &KondratievSpec::new(opts.kondratiev_m, opts.p, *a)?))
        .collect::<Result<Vec<_>>>()?;
    let s_hat = critical_smoothness(&tree, SmoothnessScale::Fixed { p: opts.p }, opts.fit_levels.clone())?;
    let eta_hat = critical_smoothness(&tree, SmoothnessScale::Adaptivity { p: opts.p }, opts.fit_levels.clone())?;
    Ok(SnapshotReport {
        time: node as f64 * traj.dt,
        besov,
        kondratiev,
        s_hat,
        eta_hat,
    })
}

/// `sup_{t≠s} ‖N(φu(t)) - N(φu(s))‖_B / |t - s|^{1/2}` over snapshot pairs,
/// with `N(v) = v` or `ε v^M`, the norm being the wavelet `B^s_{2,2}` norm.
pub fn holder_time_quotient(
    traj: &Trajectory,
    cutoff: &CutoffProfile,
    s: f64,
    nonlinearity: Option<(f64, u32)>,
    stride: usize,
) -> Result<f64> {
    let sys = WaveletSystem::new(4)?;
    let nodes: Vec<usize> = (0..traj.states.len()).step_by(stride.max(1)).collect();
    let apply = |f: SampledField| -> SampledField {
        match nonlinearity {
            Some((eps, m)) => f.map(|_, v| eps * v.powi(m as i32)),
            None => f,
        }
    };
    let fields: Vec<SampledField> = nodes.iter().map(|n| apply(cut_snapshot(traj, *n, Some(cutoff)))).collect();
    let k = fields[0].grid.resolution_log2().unwrap_or(0);
    let spec = BesovSpec::new(s, 2.0, 2.0, 2)?;
    let mut best = 0.0f64;
    for i in 0..fields.len() {
        for j in (i + 1)..fields.len() {
            let diff = fields[j].sub(&fields[i])?;
            let tree = dwt_forward(&diff, &sys, k)?;
            let v = besov_norm_wavelet(&tree, &spec)?.value;
            let dt = (nodes[j] - nodes[i]) as f64 * traj.dt;
            best = best.max(v / dt.sqrt());
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::BoundingBox;

    fn square_cfg(level: u32, dt: f64, t_end: f64) -> SolverConfig {
        SolverConfig::new(DomainGeometry::unit_square(), level, dt, t_end)
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let traj = linear_solve(&square_cfg(4, 0.05, 0.2)).unwrap();
        assert!(traj.states.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn adjoint_identity() {
        let mut cfg = square_cfg(3, 0.05, 0.2);
        cfg.ramp = Ramp::Off;
        let solver = HeatSolver::new(&cfg).unwrap();
        let m = solver.disc.len();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rand_series = || -> Vec<Vec<f64>> {
            (0..=solver.steps).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
        };
        let f = rand_series();
        let v = rand_series();
        let tf = solver.propagate(&f).unwrap();
        let tv = solver.propagate_adjoint(&v).unwrap();
        let lhs = kt_dot(&solver.disc, solver.dt, &v, &tf);
        let rhs = kt_dot(&solver.disc, solver.dt, &tv, &f);
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1e-12), "{lhs} vs {rhs}");
    }

    #[test]
    fn epsilon_bound_examples() {
        let b = max_epsilon(1.0, 1.0, 2, 2.0, 1.0).unwrap();
        assert!((b.value - 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(b.branch, EpsBranch::Large);
        let b = max_epsilon(0.1, 1.0, 1, 2.0, 1.0).unwrap();
        assert!((b.value - 0.5).abs() < 1e-15);
        let b = max_epsilon(3.0, 1.0, 1, 2.0, 1.0).unwrap();
        assert!((b.value - 0.5).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for m in 2..6 {
            let v = max_epsilon(2.0, 1.0, m, 2.0, 1.0).unwrap().value;
            assert!(v < last);
            last = v;
        }
        assert!(max_epsilon(1.0, 1.0, 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn picard_with_zero_eps_is_linear() {
        let mut cfg = square_cfg(4, 0.05, 0.2);
        cfg.forcing = Forcing::function(|x, t| t * x[0]);
        cfg.power_iterations = 3;
        let (traj, trace) = picard_semilinear(&cfg).unwrap();
        assert_eq!(trace.residuals, vec![0.0]);
        let lin = linear_solve(&cfg).unwrap();
        assert_eq!(traj.states, lin.states);
    }

    #[test]
    fn energy_decays_without_forcing() {
        let mut cfg = square_cfg(5, 0.01, 0.3);
        cfg.ramp = Ramp::Off;
        cfg.forcing = Forcing::function(|_, t| if t <= 0.1 { 1.0 } else { 0.0 });
        let traj = linear_solve(&cfg).unwrap();
        let norms: Vec<f64> = traj.states.iter().map(|u| traj.disc.dot(u, u)).collect();
        for n in 11..norms.len() - 1 {
            assert!(norms[n + 1] <= norms[n] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn expression_forcing() {
        let f = Forcing::expression("t * (x + 2 * y)").unwrap();
        let Forcing::Function(g) = f else { panic!() };
        assert!((g([0.5, 0.25], 2.0) - 2.0).abs() < 1e-15);
        assert!(Forcing::expression("t * (").is_err());
    }

    #[test]
    fn symmetric_data_give_symmetric_solution() {
        let geom = DomainGeometry::unit_square().with_bbox(BoundingBox::unit());
        let mut cfg = SolverConfig::new(geom, 5, 0.02, 0.1);
        cfg.forcing = Forcing::function(|x, t| t * ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)));
        let traj = linear_solve(&cfg).unwrap();
        let f = traj.field(traj.states.len() - 1);
        let n = f.grid.n;
        for iy in 0..n {
            for ix in 0..n {
                assert!((f.at(ix, iy) - f.at(n - 1 - ix, iy)).abs() < 1e-10);
                assert!((f.at(ix, iy) - f.at(iy, ix)).abs() < 1e-10);
            }
        }
    }
}
