//! Periodic orthonormal Daubechies transforms on dyadic grids.
//!
//! Levels are counted relative to the bounding box: at level `j` the box is
//! split into `2^j` cells per side of length `ℓ_j = side · 2^-j`. Finest
//! scaling coefficients are `h^{d/2} f(center)`, so the transform is an exact
//! isometry between the grid `L2` norm and `ℓ2` of the coefficients.
//!
//! Wavelet types in 2D: `0` father, `1` = (hi x, lo y), `2` = (lo x, hi y),
//! `3` = (hi x, hi y). In 1D only `0` and `1` occur.

use crate::error::{Error, Result};
use crate::field::{BoundingBox, Grid, Mask, SampledField};
use crate::geometry::Cube;
use rayon::prelude::*;
use std::collections::HashMap;

/// Levels with at most this many entries are stored densely.
pub const DENSE_LIMIT: usize = 1 << 20;

const DB_FILTERS: [&[f64]; 9] = [
    &[0.48296291314453416, 0.8365163037378079, 0.2241438680420134, -0.12940952255126037],
    &[0.33267055295008263, 0.8068915093110925, 0.45987750211849154, -0.13501102001025458, -0.08544127388202666, 0.03522629188570953],
    &[0.2303778133088965, 0.7148465705529157, 0.6308807679298589, -0.027983769416859854, -0.18703481171909309, 0.030841381835560764, 0.0328830116668852, -0.010597401785069032],
    &[0.16010239797419293, 0.6038292697971896, 0.7243085284377729, 0.13842814590132074, -0.24229488706638203, -0.032244869584638375, 0.07757149384004572, -0.006241490212798274, -0.012580751999081999, 0.0033357252854737712],
    &[0.11154074335010947, 0.49462389039845306, 0.7511339080210954, 0.31525035170919763, -0.22626469396543983, -0.12976686756726194, 0.09750160558732304, 0.027522865530305727, -0.03158203931748603, 0.0005538422011614961, 0.004777257510945511, -0.0010773010853084796],
    &[0.07785205408500918, 0.3965393194819173, 0.7291320908462351, 0.4697822874051931, -0.14390600392856498, -0.22403618499387498, 0.07130921926683026, 0.08061260915108308, -0.03802993693501441, -0.01657454163066688, 0.01255099855609984, 0.0004295779729213665, -0.0018016407040474908, 0.00035371379997452024],
    &[0.05441584224310401, 0.31287159091429995, 0.6756307362972898, 0.5853546836542067, -0.015829105256349306, -0.2840155429615469, 0.0004724845739132828, 0.12874742662047847, -0.017369301001807547, -0.044088253930794755, 0.013981027917398282, 0.008746094047405777, -0.004870352993451574, -0.00039174037337694705, 0.0006754494064505693, -0.00011747678412476953],
    &[0.038077947363878345, 0.24383467461259034, 0.6048231236901112, 0.6572880780513005, 0.13319738582500756, -0.2932737832791749, -0.09684078322297646, 0.14854074933810638, 0.03072568147933338, -0.06763282906132997, 0.00025094711483145197, 0.022361662123679096, -0.004723204757751397, -0.00428150368246343, 0.0018476468830562265, 0.00023038576352319597, -0.0002519631889427101, 3.93473203162716e-05],
    &[0.026670057900555554, 0.1881768000776915, 0.5272011889317256, 0.6884590394536035, 0.2811723436605775, -0.24984642432731538, -0.19594627437737705, 0.12736934033579325, 0.09305736460357235, -0.07139414716639708, -0.029457536821875813, 0.033212674059341, 0.0036065535669561697, -0.010733175483330575, 0.001395351747052901, 0.001992405295185056, -0.0006858566949597116, -0.00011646685512928545, 9.358867032006959e-05, -1.3264202894521244e-05],
];

#[derive(Clone, Debug, PartialEq)]
pub struct WaveletSystem {
    pub order: usize,
    pub father: Vec<f64>,
    pub mother: Vec<f64>,
}

impl WaveletSystem {
    pub const DEFAULT_ORDER: usize = 4;

    pub fn new(order: usize) -> Result<Self> {
        if !(2..=10).contains(&order) {
            return Err(Error::InvalidParameter(format!(
                "wavelet order {order} outside 2..=10"
            )));
        }
        let father = DB_FILTERS[order - 2].to_vec();
        let len = father.len();
        let mother = (0..len)
            .map(|m| {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                sign * father[len - 1 - m]
            })
            .collect();
        Ok(Self {
            order,
            father,
            mother,
        })
    }

    pub fn filter_len(&self) -> usize {
        self.father.len()
    }

    /// `N` with `2N + 1 = L - 1`; supports fit in cubes of `2N + 1` cells.
    pub fn support_radius(&self) -> usize {
        self.order - 1
    }

    /// Largest deviation from the quadrature-mirror relations
    /// `Σ h_i h_{i+2l} = δ_l`, `Σ g_i h_{i+2l} = 0`.
    pub fn qmf_defect(&self) -> f64 {
        let (h, g) = (&self.father, &self.mother);
        let len = h.len() as isize;
        let mut worst = 0.0f64;
        for l in -(len / 2)..=(len / 2) {
            let shift = 2 * l;
            let mut hh = 0.0;
            let mut gg = 0.0;
            let mut gh = 0.0;
            for i in 0..len {
                let j = i + shift;
                if (0..len).contains(&j) {
                    hh += h[i as usize] * h[j as usize];
                    gg += g[i as usize] * g[j as usize];
                    gh += g[i as usize] * h[j as usize];
                }
            }
            let target = if l == 0 { 1.0 } else { 0.0 };
            worst = worst.max((hh - target).abs()).max((gg - target).abs()).max(gh.abs());
        }
        worst
    }

    /// Largest normalized discrete moment `|Σ g_m t_m^α| / Σ |g_m t_m^α|`
    /// over `α < r`, with `t_m` the centered tap position.
    pub fn moment_defect(&self) -> f64 {
        let c = 0.5 * (self.filter_len() as f64 - 1.0);
        (0..self.order)
            .map(|alpha| {
                let mut s = 0.0;
                let mut a = 0.0;
                for (m, g) in self.mother.iter().enumerate() {
                    let t = (m as f64 - c).powi(alpha as i32);
                    s += g * t;
                    a += (g * t).abs();
                }
                if a > 0.0 {
                    s.abs() / a
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WaveletIndex {
    pub level: u32,
    pub k: [u32; 2],
    /// `0` for the father function, `1..=3` for the mother types.
    pub ty: u8,
}

impl WaveletIndex {
    pub fn new(level: u32, k1: u32, k2: u32, ty: u8) -> Self {
        Self {
            level,
            k: [k1, k2],
            ty,
        }
    }

    pub fn is_father(&self) -> bool {
        self.ty == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
enum LevelStore {
    /// `n × n × types`, indexed `(k1 * n + k2) * types + (ty - first)`.
    Dense(Vec<f64>),
    Sparse(HashMap<(u32, u32, u8), f64>),
}

#[derive(Clone, Debug, PartialEq)]
struct Level {
    level: u32,
    n: usize,
    first_ty: u8,
    types: usize,
    store: LevelStore,
}

impl Level {
    fn new(level: u32, n: usize, first_ty: u8, types: usize, rows: usize) -> Self {
        let entries = rows * n * types;
        let store = if entries <= DENSE_LIMIT {
            LevelStore::Dense(vec![0.0; entries])
        } else {
            LevelStore::Sparse(HashMap::new())
        };
        Self {
            level,
            n,
            first_ty,
            types,
            store,
        }
    }

    #[inline]
    fn slot(&self, k1: u32, k2: u32, ty: u8) -> usize {
        (k1 as usize * self.n + k2 as usize) * self.types + (ty - self.first_ty) as usize
    }

    fn get(&self, k1: u32, k2: u32, ty: u8) -> f64 {
        match &self.store {
            LevelStore::Dense(v) => v[self.slot(k1, k2, ty)],
            LevelStore::Sparse(m) => m.get(&(k1, k2, ty)).copied().unwrap_or(0.0),
        }
    }

    fn set(&mut self, k1: u32, k2: u32, ty: u8, c: f64) {
        let slot = self.slot(k1, k2, ty);
        match &mut self.store {
            LevelStore::Dense(v) => v[slot] = c,
            LevelStore::Sparse(m) => {
                if c == 0.0 {
                    m.remove(&(k1, k2, ty));
                } else {
                    m.insert((k1, k2, ty), c);
                }
            }
        }
    }

    /// Entries in deterministic order (k1, k2, type).
    fn entries(&self, rows: usize) -> Vec<((u32, u32, u8), f64)> {
        match &self.store {
            LevelStore::Dense(v) => {
                let mut out = Vec::with_capacity(v.len());
                for k1 in 0..rows {
                    for k2 in 0..self.n {
                        for t in 0..self.types {
                            let ty = self.first_ty + t as u8;
                            let c = v[(k1 * self.n + k2) * self.types + t];
                            out.push(((k1 as u32, k2 as u32, ty), c));
                        }
                    }
                }
                out
            }
            LevelStore::Sparse(m) => {
                let mut out: Vec<_> = m.iter().map(|(k, v)| (*k, *v)).collect();
                out.sort_unstable_by_key(|e| e.0);
                out
            }
        }
    }
}

/// Wavelet coefficients of a field on a square box.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffTree {
    pub order: usize,
    pub dim: usize,
    pub bbox: BoundingBox,
    /// Source grid cells per side (`2^finest`).
    pub n: usize,
    pub mask: Option<Vec<bool>>,
    /// Level of the father coefficients.
    pub coarsest: u32,
    /// Source grid level; details live on `coarsest..finest`.
    pub finest: u32,
    father: Level,
    details: Vec<Level>,
}

impl CoeffTree {
    pub fn empty(order: usize, dim: usize, bbox: BoundingBox, n: usize, coarsest: u32) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidParameter(format!("dimension {dim} not in {{1, 2}}")));
        }
        if !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "grid side {n} is not a power of two"
            )));
        }
        let finest = n.trailing_zeros();
        if coarsest > finest {
            return Err(Error::InsufficientResolution {
                requested: coarsest,
                available: finest,
            });
        }
        let rows = |j: u32| if dim == 2 { 1usize << j } else { 1 };
        let detail_types = if dim == 2 { 3 } else { 1 };
        let father = Level::new(coarsest, 1 << coarsest, 0, 1, rows(coarsest));
        let details = (coarsest..finest)
            .map(|j| Level::new(j, 1 << j, 1, detail_types, rows(j)))
            .collect();
        Ok(Self {
            order,
            dim,
            bbox,
            n,
            mask: None,
            coarsest,
            finest,
            father,
            details,
        })
    }

    /// Number of decomposition levels `J`.
    pub fn depth(&self) -> u32 {
        self.finest - self.coarsest
    }

    fn rows(&self, j: u32) -> usize {
        if self.dim == 2 {
            1 << j
        } else {
            1
        }
    }

    /// Cell length `ℓ_j` of level `j`.
    pub fn cell_side(&self, j: u32) -> f64 {
        self.bbox.side / (1u64 << j) as f64
    }

    pub fn is_valid(&self, idx: &WaveletIndex) -> bool {
        let side = 1u64 << idx.level.min(63);
        let k_ok = (idx.k[0] as u64) < side
            && if self.dim == 2 {
                (idx.k[1] as u64) < side
            } else {
                idx.k[1] == 0
            };
        if idx.ty == 0 {
            idx.level == self.coarsest && k_ok
        } else {
            let max_ty = if self.dim == 2 { 3 } else { 1 };
            idx.ty <= max_ty && idx.level >= self.coarsest && idx.level < self.finest && k_ok
        }
    }

    fn level_ref(&self, idx: &WaveletIndex) -> Option<&Level> {
        if !self.is_valid(idx) {
            return None;
        }
        Some(if idx.ty == 0 {
            &self.father
        } else {
            &self.details[(idx.level - self.coarsest) as usize]
        })
    }

    /// Stored coefficient; `0` for valid but unset indices.
    pub fn get(&self, idx: &WaveletIndex) -> Result<f64> {
        let lvl = self
            .level_ref(idx)
            .ok_or_else(|| Error::InvalidParameter(format!("invalid wavelet index {idx:?}")))?;
        Ok(lvl.get(idx.k[1], idx.k[0], idx.ty))
    }

    pub fn set(&mut self, idx: &WaveletIndex, c: f64) -> Result<()> {
        if !self.is_valid(idx) {
            return Err(Error::InvalidParameter(format!("invalid wavelet index {idx:?}")));
        }
        let lvl = if idx.ty == 0 {
            &mut self.father
        } else {
            &mut self.details[(idx.level - self.coarsest) as usize]
        };
        // row-major storage: k2 (y) selects the row
        lvl.set(idx.k[1], idx.k[0], idx.ty, c);
        Ok(())
    }

    fn level_entries(&self, lvl: &Level) -> Vec<(WaveletIndex, f64)> {
        let mut out: Vec<(WaveletIndex, f64)> = lvl
            .entries(self.rows(lvl.level))
            .into_iter()
            .map(|((row, col, ty), c)| (WaveletIndex::new(lvl.level, col, row, ty), c))
            .collect();
        out.sort_by_key(|(i, _)| (i.k, i.ty));
        out
    }

    /// All stored entries: father block first, then detail levels ascending,
    /// each in lexicographic `k` then type order. Dense levels include zeros.
    pub fn entries(&self) -> Vec<(WaveletIndex, f64)> {
        let mut out = self.level_entries(&self.father);
        for lvl in &self.details {
            out.extend(self.level_entries(lvl));
        }
        out
    }

    pub fn father_entries(&self) -> Vec<(WaveletIndex, f64)> {
        self.level_entries(&self.father)
    }

    /// Detail entries of level `j` (empty outside `coarsest..finest`).
    pub fn level_entries_at(&self, j: u32) -> Vec<(WaveletIndex, f64)> {
        if j < self.coarsest || j >= self.finest {
            return Vec::new();
        }
        self.level_entries(&self.details[(j - self.coarsest) as usize])
    }

    /// Detail coefficient values of level `j`, in entry order.
    pub fn level_values(&self, j: u32) -> Vec<f64> {
        self.level_entries_at(j).into_iter().map(|e| e.1).collect()
    }

    pub fn father_values(&self) -> Vec<f64> {
        self.father_entries().into_iter().map(|e| e.1).collect()
    }

    pub fn detail_levels(&self) -> std::ops::Range<u32> {
        self.coarsest..self.finest
    }

    /// Total number of basis functions (equals the number of grid cells).
    pub fn basis_size(&self) -> usize {
        if self.dim == 2 {
            self.n * self.n
        } else {
            self.n
        }
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries().iter().filter(|e| e.1 != 0.0).count()
    }

    pub fn sum_of_squares(&self) -> f64 {
        let sq: Vec<f64> = self.entries().iter().map(|e| e.1 * e.1).collect();
        crate::numerics::pairwise_sum(&sq)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for lvl in std::iter::once(&mut out.father).chain(out.details.iter_mut()) {
            match &mut lvl.store {
                LevelStore::Dense(v) => v.iter_mut().for_each(|x| *x *= c),
                LevelStore::Sparse(m) => m.values_mut().for_each(|x| *x *= c),
            }
        }
        out
    }

    /// Copy keeping only the entries selected by `keep`.
    pub fn filtered<F: Fn(&WaveletIndex, f64) -> bool>(&self, keep: F) -> Self {
        let mut out = self.clone();
        for (idx, c) in self.entries() {
            if c != 0.0 && !keep(&idx, c) {
                out.set(&idx, 0.0).expect("index came from this tree");
            }
        }
        out
    }
}

#[inline]
fn analyze_periodic(s: &[f64], h: &[f64], g: &[f64], lo: &mut [f64], hi: &mut [f64]) {
    let m = s.len();
    for k in 0..m / 2 {
        let mut a = 0.0;
        let mut d = 0.0;
        for (i, (hv, gv)) in h.iter().zip(g).enumerate() {
            let v = s[(2 * k + i) % m];
            a += hv * v;
            d += gv * v;
        }
        lo[k] = a;
        hi[k] = d;
    }
}

#[inline]
fn synthesize_periodic(lo: &[f64], hi: &[f64], h: &[f64], g: &[f64], s: &mut [f64]) {
    let m = 2 * lo.len();
    s.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..lo.len() {
        let (a, d) = (lo[k], hi[k]);
        for (i, (hv, gv)) in h.iter().zip(g).enumerate() {
            s[(2 * k + i) % m] += hv * a + gv * d;
        }
    }
}

/// One analysis step on the leading `m × m` block of a row-major `n × n` array.
fn analyze_block(data: &mut [f64], n: usize, m: usize, sys: &WaveletSystem) {
    let (h, g) = (&sys.father, &sys.mother);
    let half = m / 2;
    // rows (x direction)
    data.par_chunks_mut(n).take(m).for_each(|row| {
        let src = row[..m].to_vec();
        let (lo, hi) = row[..m].split_at_mut(half);
        analyze_periodic(&src, h, g, lo, hi);
    });
    // columns (y direction)
    let cols: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|x| {
            let col: Vec<f64> = (0..m).map(|y| data[y * n + x]).collect();
            let mut out = vec![0.0; m];
            let (lo, hi) = out.split_at_mut(half);
            analyze_periodic(&col, h, g, lo, hi);
            out
        })
        .collect();
    for (x, col) in cols.iter().enumerate() {
        for (y, v) in col.iter().enumerate() {
            data[y * n + x] = *v;
        }
    }
}

fn synthesize_block(data: &mut [f64], n: usize, m: usize, sys: &WaveletSystem) {
    let (h, g) = (&sys.father, &sys.mother);
    let half = m / 2;
    let cols: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|x| {
            let col: Vec<f64> = (0..m).map(|y| data[y * n + x]).collect();
            let mut out = vec![0.0; m];
            synthesize_periodic(&col[..half], &col[half..], h, g, &mut out);
            out
        })
        .collect();
    for (x, col) in cols.iter().enumerate() {
        for (y, v) in col.iter().enumerate() {
            data[y * n + x] = *v;
        }
    }
    data.par_chunks_mut(n).take(m).for_each(|row| {
        let src = row[..m].to_vec();
        synthesize_periodic(&src[..half], &src[half..], h, g, &mut row[..m]);
    });
}

fn grid_log2(grid: &Grid) -> Result<u32> {
    grid.resolution_log2().ok_or_else(|| {
        Error::InvalidParameter(format!("grid side {} is not a power of two", grid.n))
    })
}

/// Forward transform with `depth` decomposition levels.
pub fn dwt_forward(field: &SampledField, sys: &WaveletSystem, depth: u32) -> Result<CoeffTree> {
    let k = grid_log2(&field.grid)?;
    if depth > k {
        return Err(Error::InsufficientResolution {
            requested: depth,
            available: k,
        });
    }
    let n = field.grid.n;
    let scale = field.grid.spacing();
    let mut data: Vec<f64> = field
        .values
        .iter()
        .zip(&field.mask)
        .map(|(v, inside)| if *inside { v * scale } else { 0.0 })
        .collect();
    let mut tree = CoeffTree::empty(sys.order, 2, field.grid.bbox, n, k - depth)?;
    tree.mask = Some(field.mask.clone());
    let mut m = n;
    for lvl in (tree.coarsest..k).rev() {
        analyze_block(&mut data, n, m, sys);
        let half = m / 2;
        let store = &mut tree.details[(lvl - tree.coarsest) as usize];
        for y in 0..half {
            for x in 0..half {
                store.set(y as u32, x as u32, 1, data[y * n + x + half]);
                store.set(y as u32, x as u32, 2, data[(y + half) * n + x]);
                store.set(y as u32, x as u32, 3, data[(y + half) * n + x + half]);
            }
        }
        m = half;
    }
    for y in 0..m {
        for x in 0..m {
            tree.father.set(y as u32, x as u32, 0, data[y * n + x]);
        }
    }
    Ok(tree)
}

/// Inverse transform; returns samples on the source grid (full mask).
pub fn dwt_inverse(tree: &CoeffTree, sys: &WaveletSystem) -> Result<SampledField> {
    if tree.dim != 2 {
        return Err(Error::InvalidParameter("dwt_inverse expects a 2D tree".into()));
    }
    let n = tree.n;
    let grid = Grid {
        bbox: tree.bbox,
        level: tree.finest,
        n,
    };
    let mut data = vec![0.0; n * n];
    let m0 = 1usize << tree.coarsest;
    for ((y, x, _), c) in tree.father.entries(m0) {
        data[y as usize * n + x as usize] = c;
    }
    let mut m = m0;
    for lvl in tree.coarsest..tree.finest {
        let half = m;
        let store = &tree.details[(lvl - tree.coarsest) as usize];
        for ((y, x, ty), c) in store.entries(half) {
            let (y, x) = (y as usize, x as usize);
            let slot = match ty {
                1 => y * n + x + half,
                2 => (y + half) * n + x,
                _ => (y + half) * n + x + half,
            };
            data[slot] = c;
        }
        m = 2 * half;
        synthesize_block(&mut data, n, m, sys);
    }
    let inv = 1.0 / grid.spacing();
    data.iter_mut().for_each(|v| *v *= inv);
    let mask = Mask::full(grid);
    SampledField::from_values(&mask, data)
}

/// 1D forward transform of samples on `[x0, x0 + side]`.
pub fn dwt_forward_1d(values: &[f64], side: f64, sys: &WaveletSystem, depth: u32) -> Result<CoeffTree> {
    let n = values.len();
    if !n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("length {n} is not a power of two")));
    }
    let k = n.trailing_zeros();
    if depth > k {
        return Err(Error::InsufficientResolution {
            requested: depth,
            available: k,
        });
    }
    let scale = (side / n as f64).sqrt();
    let mut s: Vec<f64> = values.iter().map(|v| v * scale).collect();
    let mut tree = CoeffTree::empty(sys.order, 1, BoundingBox::new([0.0, 0.0], side), n, k - depth)?;
    for lvl in (tree.coarsest..k).rev() {
        let m = 1usize << (lvl + 1);
        let mut lo = vec![0.0; m / 2];
        let mut hi = vec![0.0; m / 2];
        analyze_periodic(&s[..m], &sys.father, &sys.mother, &mut lo, &mut hi);
        for (i, d) in hi.iter().enumerate() {
            tree.set(&WaveletIndex::new(lvl, i as u32, 0, 1), *d)?;
        }
        s[..m / 2].copy_from_slice(&lo);
    }
    for i in 0..(1usize << tree.coarsest) {
        tree.set(&WaveletIndex::new(tree.coarsest, i as u32, 0, 0), s[i])?;
    }
    Ok(tree)
}

pub fn dwt_inverse_1d(tree: &CoeffTree, sys: &WaveletSystem) -> Result<Vec<f64>> {
    if tree.dim != 1 {
        return Err(Error::InvalidParameter("dwt_inverse_1d expects a 1D tree".into()));
    }
    let n = tree.n;
    let mut s = vec![0.0; n];
    for (idx, c) in tree.father_entries() {
        s[idx.k[0] as usize] = c;
    }
    for lvl in tree.detail_levels() {
        let half = 1usize << lvl;
        let lo = s[..half].to_vec();
        let mut hi = vec![0.0; half];
        for (idx, c) in tree.level_entries_at(lvl) {
            hi[idx.k[0] as usize] = c;
        }
        synthesize_periodic(&lo, &hi, &sys.father, &sys.mother, &mut s[..2 * half]);
    }
    let scale = (n as f64 / tree.bbox.side).sqrt();
    Ok(s.into_iter().map(|v| v * scale).collect())
}

/// Cube `Q(I) = box.min + ℓ_j (k + [0, 2N+1]^2)` containing `supp ψ_I`
/// (before periodic wrapping).
pub fn support_cube(idx: &WaveletIndex, sys: &WaveletSystem, bbox: &BoundingBox) -> Cube {
    let l = bbox.side / (1u64 << idx.level) as f64;
    Cube {
        min: [
            bbox.min[0] + l * idx.k[0] as f64,
            bbox.min[1] + l * idx.k[1] as f64,
        ],
        side: l * (2 * sys.support_radius() + 1) as f64,
    }
}

/// Samples of a single basis function on the tree's grid.
pub fn synthesize_atom(tree_shape: &CoeffTree, idx: &WaveletIndex, sys: &WaveletSystem) -> Result<SampledField> {
    let mut t = CoeffTree::empty(tree_shape.order, 2, tree_shape.bbox, tree_shape.n, tree_shape.coarsest)?;
    t.set(idx, 1.0)?;
    dwt_inverse(&t, sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::BoundingBox;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full_grid(level: u32) -> Mask {
        Mask::full(Grid::new(BoundingBox::unit(), level).unwrap())
    }

    #[test]
    fn filters_are_orthonormal_with_vanishing_moments() {
        for r in 2..=10 {
            let sys = WaveletSystem::new(r).unwrap();
            assert_eq!(sys.filter_len(), 2 * r);
            assert!(sys.qmf_defect() < 1e-12, "r={r}: {}", sys.qmf_defect());
            assert!(sys.moment_defect() < 1e-10, "r={r}: {}", sys.moment_defect());
            let s: f64 = sys.father.iter().sum();
            assert!((s - 2f64.sqrt()).abs() < 1e-12);
        }
        assert!(WaveletSystem::new(1).is_err());
        assert!(WaveletSystem::new(11).is_err());
    }

    #[test]
    fn zero_field_gives_zero_tree() {
        let sys = WaveletSystem::new(4).unwrap();
        let f = SampledField::zeros(&full_grid(5));
        let t = dwt_forward(&f, &sys, 5).unwrap();
        assert!(t.entries().iter().all(|e| e.1 == 0.0));
        assert_eq!(t.entries().len(), 32 * 32);
    }

    #[test]
    fn round_trip_and_parseval_random() {
        let sys = WaveletSystem::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mask = full_grid(6);
        let vals: Vec<f64> = (0..mask.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = SampledField::from_values(&mask, vals).unwrap();
        for depth in [1, 3, 6] {
            let t = dwt_forward(&f, &sys, depth).unwrap();
            let rel = (t.sum_of_squares() - f.l2_norm().powi(2)).abs() / f.l2_norm().powi(2);
            assert!(rel < 1e-12);
            let g = dwt_inverse(&t, &sys).unwrap();
            let err = g.sub(&f).unwrap().max_abs();
            assert!(err < 1e-12, "{err}");
        }
    }

    #[test]
    fn too_many_levels_rejected() {
        let sys = WaveletSystem::new(2).unwrap();
        let f = SampledField::zeros(&full_grid(3));
        assert!(matches!(
            dwt_forward(&f, &sys, 4),
            Err(Error::InsufficientResolution { requested: 4, available: 3 })
        ));
    }

    #[test]
    fn atom_analyzes_to_unit_coefficient() {
        let sys = WaveletSystem::new(4).unwrap();
        let shape = CoeffTree::empty(4, 2, BoundingBox::unit(), 64, 1).unwrap();
        let idx = WaveletIndex::new(3, 2, 5, 2);
        let atom = synthesize_atom(&shape, &idx, &sys).unwrap();
        let t = dwt_forward(&atom, &sys, 5).unwrap();
        for (i, c) in t.entries() {
            let want = if i == idx { 1.0 } else { 0.0 };
            assert!((c - want).abs() < 1e-12, "{i:?}: {c}");
        }
    }

    #[test]
    fn empty_tree_inverts_to_zero() {
        let sys = WaveletSystem::new(4).unwrap();
        let t = CoeffTree::empty(4, 2, BoundingBox::unit(), 16, 0).unwrap();
        assert_eq!(dwt_inverse(&t, &sys).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn polynomials_annihilated_away_from_wrap() {
        for r in [2usize, 4] {
            let sys = WaveletSystem::new(r).unwrap();
            let mask = full_grid(7);
            let f = SampledField::from_fn(&mask, |x| {
                let mut v = 0.0;
                for a in 0..r {
                    for b in 0..(r - a) {
                        v += x[0].powi(a as i32) * x[1].powi(b as i32) * (1.0 + a as f64 - b as f64);
                    }
                }
                v
            });
            let t = dwt_forward(&f, &sys, 4).unwrap();
            let bbox = BoundingBox::unit();
            for j in t.detail_levels() {
                for (idx, c) in t.level_entries_at(j) {
                    let q = support_cube(&idx, &sys, &bbox);
                    if q.max()[0] <= 1.0 && q.max()[1] <= 1.0 {
                        assert!(c.abs() < 1e-8, "r={r} {idx:?}: {c}");
                    }
                }
            }
        }
    }

    #[test]
    fn support_cube_contains_atom() {
        let sys = WaveletSystem::new(3).unwrap();
        let shape = CoeffTree::empty(3, 2, BoundingBox::unit(), 128, 0).unwrap();
        let idx = WaveletIndex::new(3, 1, 2, 3);
        let q = support_cube(&idx, &sys, &BoundingBox::unit());
        assert!((q.side - 5.0 / 8.0).abs() < 1e-15);
        let atom = synthesize_atom(&shape, &idx, &sys).unwrap();
        let n = atom.grid.n;
        for iy in 0..n {
            for ix in 0..n {
                if atom.at(ix, iy).abs() > 1e-12 {
                    assert!(q.contains(atom.grid.center(ix, iy)));
                }
            }
        }
    }

    #[test]
    fn one_dimensional_round_trip() {
        let sys = WaveletSystem::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = dwt_forward_1d(&v, 2.0, &sys, 8).unwrap();
        let l2: f64 = v.iter().map(|x| x * x).sum::<f64>() * 2.0 / 256.0;
        assert!((t.sum_of_squares() - l2).abs() < 1e-12 * l2);
        let w = dwt_inverse_1d(&t, &sys).unwrap();
        let err = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn sparse_levels_behave_like_dense() {
        let sys = WaveletSystem::new(2).unwrap();
        let mask = full_grid(11);
        let f = SampledField::from_fn(&mask, |x| (-(x[0] - 0.3).powi(2) / 0.01).exp() * x[1]);
        let t = dwt_forward(&f, &sys, 2).unwrap();
        assert!(matches!(t.details[1].store, LevelStore::Sparse(_)));
        let g = dwt_inverse(&t, &sys).unwrap();
        assert!(g.sub(&f).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn entries_are_ordered() {
        let mut t = CoeffTree::empty(2, 2, BoundingBox::unit(), 8, 1).unwrap();
        t.set(&WaveletIndex::new(2, 1, 0, 3), 1.0).unwrap();
        t.set(&WaveletIndex::new(1, 1, 1, 0), 2.0).unwrap();
        let e = t.entries();
        assert!(e[0].0.is_father());
        let idx: Vec<_> = e.iter().map(|x| (x.0.level, x.0.ty == 0)).collect();
        let mut sorted = idx.clone();
        sorted.sort_by_key(|x| (!x.1, x.0));
        assert_eq!(idx, sorted);
        assert!(t.set(&WaveletIndex::new(3, 0, 0, 1), 1.0).is_err());
        assert!(t.set(&WaveletIndex::new(2, 0, 0, 0), 1.0).is_err());
    }
}
