//! Dyadic grids and sampled fields.
//!
//! A grid of level `j` has spacing `2^-j` and covers a square bounding box
//! whose side is an integer multiple of the spacing. Samples live at cell
//! centers, stored row-major (`iy * n + ix`). Values outside the domain mask
//! are held at zero, which is the zero extension every analysis assumes.

use crate::error::{Error, Result};
use crate::numerics::{abs_pow, pairwise_sum};
use rayon::prelude::*;

pub type Point = [f64; 2];

/// Hard ceiling on the number of cells in one grid (512 MiB of `f64`).
pub const MAX_CELLS: u64 = 1 << 26;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub min: Point,
    pub side: f64,
}

impl BoundingBox {
    pub fn new(min: Point, side: f64) -> Self {
        Self { min, side }
    }

    pub fn unit() -> Self {
        Self::new([0.0, 0.0], 1.0)
    }

    /// The box `[-h, h]^2`.
    pub fn centered(half: f64) -> Self {
        Self::new([-half, -half], 2.0 * half)
    }

    pub fn contains(&self, x: Point) -> bool {
        x[0] >= self.min[0]
            && x[0] <= self.min[0] + self.side
            && x[1] >= self.min[1]
            && x[1] <= self.min[1] + self.side
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub bbox: BoundingBox,
    pub level: u32,
    pub n: usize,
}

impl Grid {
    pub fn new(bbox: BoundingBox, level: u32) -> Result<Self> {
        if level > 40 {
            return Err(Error::GridTooLarge {
                cells: u64::MAX,
                budget: MAX_CELLS,
            });
        }
        let cells_per_side = bbox.side * (1u64 << level) as f64;
        if cells_per_side < 1.0 || (cells_per_side - cells_per_side.round()).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "box side {} is not a multiple of the level-{} spacing",
                bbox.side, level
            )));
        }
        let n = cells_per_side.round() as u64;
        let cells = n.saturating_mul(n);
        if cells > MAX_CELLS {
            return Err(Error::GridTooLarge {
                cells,
                budget: MAX_CELLS,
            });
        }
        Ok(Self {
            bbox,
            level,
            n: n as usize,
        })
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.bbox.side / self.n as f64
    }

    #[inline]
    pub fn center(&self, ix: usize, iy: usize) -> Point {
        let h = self.spacing();
        [
            self.bbox.min[0] + (ix as f64 + 0.5) * h,
            self.bbox.min[1] + (iy as f64 + 0.5) * h,
        ]
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `log2(n)` when `n` is a power of two.
    pub fn resolution_log2(&self) -> Option<u32> {
        self.n
            .is_power_of_two()
            .then(|| self.n.trailing_zeros())
    }

    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }
}

/// Inside/outside flags on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub grid: Grid,
    pub inside: Vec<bool>,
}

impl Mask {
    pub fn full(grid: Grid) -> Self {
        Self {
            inside: vec![true; grid.len()],
            grid,
        }
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|b| **b).count()
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> bool {
        self.inside[iy * self.grid.n + ix]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl SampledField {
    pub fn zeros(mask: &Mask) -> Self {
        Self {
            grid: mask.grid,
            values: vec![0.0; mask.grid.len()],
            mask: mask.inside.clone(),
        }
    }

    /// Samples `f` at the centers of inside cells; outside cells hold zero.
    pub fn from_fn<F>(mask: &Mask, f: F) -> Self
    where
        F: Fn(Point) -> f64 + Sync,
    {
        let grid = mask.grid;
        let n = grid.n;
        let mut values = vec![0.0; grid.len()];
        values
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(iy, row)| {
                for (ix, v) in row.iter_mut().enumerate() {
                    if mask.inside[iy * n + ix] {
                        *v = f(grid.center(ix, iy));
                    }
                }
            });
        Self {
            grid,
            values,
            mask: mask.inside.clone(),
        }
    }

    /// Wraps raw values; entries outside `mask` are forced to zero.
    pub fn from_values(mask: &Mask, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != mask.grid.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                mask.grid.len(),
                values.len()
            )));
        }
        for (v, inside) in values.iter_mut().zip(&mask.inside) {
            if !inside {
                *v = 0.0;
            }
        }
        Ok(Self {
            grid: mask.grid,
            values,
            mask: mask.inside.clone(),
        })
    }

    pub fn mask(&self) -> Mask {
        Mask {
            grid: self.grid,
            inside: self.mask.clone(),
        }
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.n + ix]
    }

    #[inline]
    pub fn inside(&self, ix: usize, iy: usize) -> bool {
        self.mask[iy * self.grid.n + ix]
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn map<F: Fn(Point, f64) -> f64 + Sync>(&self, f: F) -> Self {
        let n = self.grid.n;
        let grid = self.grid;
        let mut out = self.clone();
        out.values
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(iy, row)| {
                for (ix, v) in row.iter_mut().enumerate() {
                    if self.mask[iy * n + ix] {
                        *v = f(grid.center(ix, iy), *v);
                    }
                }
            });
        out
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidParameter("grid mismatch".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a -= b;
        }
        Ok(out)
    }

    /// Grid `L_p` norm over the whole box (`p = ∞` allowed).
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        }
        let n = self.grid.n;
        let rows: Vec<f64> = self
            .values
            .par_chunks(n)
            .map(|row| row.iter().map(|v| abs_pow(*v, p)).sum::<f64>())
            .collect();
        (pairwise_sum(&rows) * self.grid.cell_area()).powf(1.0 / p)
    }

    pub fn l2_norm(&self) -> f64 {
        self.lp_norm(2.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.lp_norm(f64::INFINITY)
    }

    /// Averages 2×2 blocks onto the next coarser grid. A coarse cell is inside
    /// when any of its children is.
    pub fn restrict(&self) -> Result<Self> {
        if self.grid.n % 2 != 0 || self.grid.level == 0 {
            return Err(Error::InsufficientResolution {
                requested: 1,
                available: 0,
            });
        }
        let n = self.grid.n;
        let m = n / 2;
        let grid = Grid {
            bbox: self.grid.bbox,
            level: self.grid.level - 1,
            n: m,
        };
        let mut values = vec![0.0; m * m];
        let mut mask = vec![false; m * m];
        for iy in 0..m {
            for ix in 0..m {
                let mut acc = 0.0;
                let mut any = false;
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let k = (2 * iy + dy) * n + 2 * ix + dx;
                    acc += self.values[k];
                    any |= self.mask[k];
                }
                values[iy * m + ix] = 0.25 * acc;
                mask[iy * m + ix] = any;
            }
        }
        Ok(Self { grid, values, mask })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts_cells() {
        let g = Grid::new(BoundingBox::unit(), 3).unwrap();
        assert_eq!(g.n, 8);
        assert_eq!(g.spacing(), 0.125);
        let g = Grid::new(BoundingBox::centered(1.0), 3).unwrap();
        assert_eq!(g.n, 16);
    }

    #[test]
    fn grid_budget_enforced() {
        let err = Grid::new(BoundingBox::unit(), 14).unwrap_err();
        assert!(matches!(err, Error::GridTooLarge { .. }));
    }

    #[test]
    fn constant_l2_norm_is_sqrt_area() {
        let g = Grid::new(BoundingBox::centered(1.0), 4).unwrap();
        let f = SampledField::from_fn(&Mask::full(g), |_| 3.0);
        assert!((f.l2_norm() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn restriction_preserves_mean() {
        let g = Grid::new(BoundingBox::unit(), 4).unwrap();
        let f = SampledField::from_fn(&Mask::full(g), |x| x[0] + 2.0 * x[1]);
        let c = f.restrict().unwrap();
        let fine: f64 = f.values.iter().sum::<f64>() / f.values.len() as f64;
        let coarse: f64 = c.values.iter().sum::<f64>() / c.values.len() as f64;
        assert!((fine - coarse).abs() < 1e-12);
    }
}
