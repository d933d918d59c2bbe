//! Desk-scale domains: planar wedges and polygons, plus spherical-cap cones
//! carried as metadata for the pencil module.

use crate::error::{Error, Result};
use crate::field::{BoundingBox, Grid, Mask, Point};
use std::f64::consts::PI;

/// Width of the quadratic smooth-min used to mollify the distance weight.
pub const WEIGHT_BLEND_WIDTH: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub enum DomainKind {
    /// Infinite sector `{v + r(cos φ, sin φ) : r > 0, start < φ < start + opening}`.
    /// The bounding box is only the sampling window, not part of the boundary.
    Wedge {
        vertex: Point,
        start: f64,
        opening: f64,
    },
    /// Simple closed polygon, vertices in order (no repeated closing vertex).
    Polygon { vertices: Vec<Point> },
    /// Cone over a spherical cap of half-angle `half_angle` in R³. Metadata only.
    CapCone { half_angle: f64 },
}

/// Which set the distance weight measures distance to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightMode {
    /// Distance to the singular vertices.
    SingularSet,
    /// Distance to the whole boundary (Lipschitz-domain weight).
    FullBoundary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainGeometry {
    pub kind: DomainKind,
    pub singular: Vec<Point>,
    pub bbox: BoundingBox,
    pub r0: f64,
    pub eps: f64,
}

/// Axis-aligned closed square.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cube {
    pub min: Point,
    pub side: f64,
}

impl Cube {
    pub fn max(&self) -> Point {
        [self.min[0] + self.side, self.min[1] + self.side]
    }

    pub fn corners(&self) -> [Point; 4] {
        let [x0, y0] = self.min;
        let [x1, y1] = self.max();
        [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
    }

    pub fn contains(&self, x: Point) -> bool {
        let m = self.max();
        x[0] >= self.min[0] && x[0] <= m[0] && x[1] >= self.min[1] && x[1] <= m[1]
    }

    /// `k × k` tensor sample including the corners.
    pub fn samples(&self, k: usize) -> Vec<Point> {
        let mut out = Vec::with_capacity(k * k);
        let step = if k > 1 { self.side / (k - 1) as f64 } else { 0.0 };
        for iy in 0..k {
            for ix in 0..k {
                out.push([self.min[0] + ix as f64 * step, self.min[1] + iy as f64 * step]);
            }
        }
        out
    }
}

/// Radial cutoff: 1 on `|x - c| <= r0 - eps`, 0 on `|x - c| >= r0 - eps/2`,
/// quintic smoothstep (C²) in between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffProfile {
    pub center: Point,
    pub r0: f64,
    pub eps: f64,
}

impl CutoffProfile {
    /// Polynomial degree of the transition blend.
    pub const BLEND_DEGREE: u32 = 5;

    pub fn new(center: Point, r0: f64, eps: f64) -> Result<Self> {
        if !(r0 > 0.0 && eps > 0.0 && eps < r0) {
            return Err(Error::InvalidParameter(format!(
                "cutoff needs 0 < eps < r0, got r0={r0}, eps={eps}"
            )));
        }
        Ok(Self { center, r0, eps })
    }

    pub fn eval(&self, x: Point) -> f64 {
        let r = dist(x, self.center);
        self.eval_radius(r)
    }

    pub fn eval_radius(&self, r: f64) -> f64 {
        let inner = self.r0 - self.eps;
        let outer = self.r0 - 0.5 * self.eps;
        if r <= inner {
            1.0
        } else if r >= outer {
            0.0
        } else {
            let s = (r - inner) / (outer - inner);
            1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
        }
    }
}

/// Free-function form of [`CutoffProfile::eval`].
pub fn cutoff_eval(profile: &CutoffProfile, x: Point) -> f64 {
    profile.eval(x)
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Quadratic smooth minimum; exact when `|a - b| >= k`.
#[inline]
fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * k * 0.25
}

fn normalize_angle(a: f64) -> f64 {
    let t = a.rem_euclid(2.0 * PI);
    if t.is_nan() {
        0.0
    } else {
        t
    }
}

fn point_segment_distance(x: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 == 0.0 {
        return dist(x, a);
    }
    let t = (((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
    dist(x, [a[0] + t * d[0], a[1] + t * d[1]])
}

/// Liang–Barsky test: does the closed segment meet the closed cube?
fn segment_meets_cube(a: Point, b: Point, cube: &Cube) -> bool {
    let m = cube.max();
    let d = [b[0] - a[0], b[1] - a[1]];
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    let checks = [
        (-d[0], a[0] - cube.min[0]),
        (d[0], m[0] - a[0]),
        (-d[1], a[1] - cube.min[1]),
        (d[1], m[1] - a[1]),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

impl DomainGeometry {
    /// Wedge with vertex at the origin, first edge along the positive x-axis.
    pub fn wedge(opening: f64, bbox: BoundingBox) -> Result<Self> {
        Self::wedge_at([0.0, 0.0], 0.0, opening, bbox)
    }

    pub fn wedge_at(vertex: Point, start: f64, opening: f64, bbox: BoundingBox) -> Result<Self> {
        if !(opening > 0.0 && opening <= 2.0 * PI + 1e-12) {
            return Err(Error::InvalidGeometry(format!(
                "wedge opening {opening} outside (0, 2π]"
            )));
        }
        let r0 = 0.5 * bbox.side;
        Ok(Self {
            kind: DomainKind::Wedge {
                vertex,
                start,
                opening: opening.min(2.0 * PI),
            },
            singular: vec![vertex],
            bbox,
            r0,
            eps: 0.5 * r0,
        })
    }

    /// Simple polygon. `singular` lists the singular vertices; `None` marks
    /// every vertex singular.
    pub fn polygon(vertices: Vec<Point>, singular: Option<Vec<Point>>, bbox: BoundingBox) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidGeometry("polygon needs at least 3 vertices".into()));
        }
        let n = vertices.len();
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            if a == b {
                return Err(Error::InvalidGeometry("repeated polygon vertex".into()));
            }
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_cross(a, b, c, d) {
                    return Err(Error::InvalidGeometry(format!(
                        "polygon edges {i} and {j} intersect"
                    )));
                }
            }
        }
        let singular = singular.unwrap_or_else(|| vertices.clone());
        let geom = Self {
            kind: DomainKind::Polygon { vertices },
            singular,
            bbox,
            r0: 0.5 * bbox.side,
            eps: 0.25 * bbox.side,
        };
        for v in &geom.singular {
            if !geom.on_boundary(*v, 1e-12) {
                return Err(Error::InvalidGeometry(format!(
                    "singular vertex ({}, {}) is not on the boundary",
                    v[0], v[1]
                )));
            }
        }
        Ok(geom)
    }

    pub fn cap_cone(half_angle: f64) -> Result<Self> {
        if !(half_angle > 0.0 && half_angle < PI) {
            return Err(Error::InvalidGeometry(format!(
                "cap half-angle {half_angle} outside (0, π)"
            )));
        }
        Ok(Self {
            kind: DomainKind::CapCone { half_angle },
            singular: vec![[0.0, 0.0]],
            bbox: BoundingBox::centered(1.0),
            r0: 1.0,
            eps: 0.5,
        })
    }

    /// L-shape covering three quarters of the unit square, re-entrant corner
    /// at (1/2, 1/2). All six vertices are singular.
    pub fn l_shape_unit() -> Self {
        let v = vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 0.5],
            [0.5, 0.5],
            [0.5, 1.0],
            [0.0, 1.0],
        ];
        Self::polygon(v, None, BoundingBox::unit())
            .expect("static L-shape is valid")
            .with_cutoff(0.9, 0.6)
            .expect("static cutoff is valid")
    }

    /// Unit square `[0,1]^2` with its four corners singular.
    pub fn unit_square() -> Self {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        Self::polygon(v, None, BoundingBox::unit()).expect("static square is valid")
    }

    pub fn with_cutoff(mut self, r0: f64, eps: f64) -> Result<Self> {
        if !(r0 > 0.0 && eps > 0.0 && eps < r0) {
            return Err(Error::InvalidGeometry(format!(
                "need 0 < eps < r0, got r0={r0}, eps={eps}"
            )));
        }
        self.r0 = r0;
        self.eps = eps;
        Ok(self)
    }

    pub fn with_bbox(mut self, bbox: BoundingBox) -> Self {
        self.bbox = bbox;
        self
    }

    pub fn is_metadata_only(&self) -> bool {
        matches!(self.kind, DomainKind::CapCone { .. })
    }

    /// Cutoff centered at the first singular vertex (the wedge vertex, or the
    /// re-entrant corner for the L-shape presets).
    pub fn cutoff(&self) -> CutoffProfile {
        let center = match &self.kind {
            DomainKind::Wedge { vertex, .. } => *vertex,
            _ => self.reentrant_corner().unwrap_or(self.singular[0]),
        };
        CutoffProfile {
            center,
            r0: self.r0,
            eps: self.eps,
        }
    }

    /// First polygon vertex with interior angle larger than π.
    pub fn reentrant_corner(&self) -> Option<Point> {
        let DomainKind::Polygon { vertices } = &self.kind else {
            return None;
        };
        let n = vertices.len();
        let area2: f64 = (0..n)
            .map(|i| {
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                a[0] * b[1] - a[1] * b[0]
            })
            .sum();
        let ccw = area2 > 0.0;
        (0..n).find_map(|i| {
            let prev = vertices[(i + n - 1) % n];
            let cur = vertices[i];
            let next = vertices[(i + 1) % n];
            let turn = orient(prev, cur, next);
            let reflex = if ccw { turn < 0.0 } else { turn > 0.0 };
            reflex.then_some(cur)
        })
    }

    /// Interior angle at a point of the singular set (π/θ-type pencil data).
    pub fn opening_at(&self, v: Point) -> Option<f64> {
        match &self.kind {
            DomainKind::Wedge { opening, .. } => Some(*opening),
            DomainKind::Polygon { vertices } => {
                let n = vertices.len();
                let i = vertices.iter().position(|p| dist(*p, v) < 1e-12)?;
                let area2: f64 = (0..n)
                    .map(|k| {
                        let (a, b) = (vertices[k], vertices[(k + 1) % n]);
                        a[0] * b[1] - a[1] * b[0]
                    })
                    .sum();
                let (prev, next) = (vertices[(i + n - 1) % n], vertices[(i + 1) % n]);
                let a1 = (prev[1] - v[1]).atan2(prev[0] - v[0]);
                let a2 = (next[1] - v[1]).atan2(next[0] - v[0]);
                let sweep = normalize_angle(if area2 > 0.0 { a1 - a2 } else { a2 - a1 });
                Some(sweep)
            }
            DomainKind::CapCone { .. } => None,
        }
    }

    /// Open-domain membership.
    pub fn contains(&self, x: Point) -> bool {
        match &self.kind {
            DomainKind::Wedge {
                vertex,
                start,
                opening,
            } => {
                let dx = x[0] - vertex[0];
                let dy = x[1] - vertex[1];
                if dx == 0.0 && dy == 0.0 {
                    return false;
                }
                let phi = normalize_angle(dy.atan2(dx) - start);
                phi > 0.0 && phi < *opening
            }
            DomainKind::Polygon { vertices } => {
                if self.on_boundary(x, 0.0) {
                    return false;
                }
                let n = vertices.len();
                let mut inside = false;
                let mut j = n - 1;
                for i in 0..n {
                    let (a, b) = (vertices[i], vertices[j]);
                    if (a[1] > x[1]) != (b[1] > x[1]) {
                        let xc = (b[0] - a[0]) * (x[1] - a[1]) / (b[1] - a[1]) + a[0];
                        if x[0] < xc {
                            inside = !inside;
                        }
                    }
                    j = i;
                }
                inside
            }
            DomainKind::CapCone { .. } => false,
        }
    }

    /// Boundary pieces as segments. Wedge rays are truncated far outside the box.
    pub fn boundary_segments(&self) -> Vec<(Point, Point)> {
        match &self.kind {
            DomainKind::Wedge {
                vertex,
                start,
                opening,
            } => {
                let reach = 1e3 * (self.bbox.side + vertex[0].abs() + vertex[1].abs() + 1.0);
                let ray = |phi: f64| {
                    (
                        *vertex,
                        [vertex[0] + reach * phi.cos(), vertex[1] + reach * phi.sin()],
                    )
                };
                vec![ray(*start), ray(start + opening)]
            }
            DomainKind::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).map(|i| (vertices[i], vertices[(i + 1) % n])).collect()
            }
            DomainKind::CapCone { .. } => Vec::new(),
        }
    }

    pub fn on_boundary(&self, x: Point, tol: f64) -> bool {
        self.boundary_segments()
            .iter()
            .any(|(a, b)| point_segment_distance(x, *a, *b) <= tol)
    }

    pub fn contains_closed(&self, x: Point) -> bool {
        self.contains(x) || self.on_boundary(x, 1e-12)
    }

    /// Raw distance to the singular set or to the whole boundary.
    pub fn raw_distance(&self, x: Point, mode: WeightMode) -> f64 {
        match mode {
            WeightMode::SingularSet => self
                .singular
                .iter()
                .map(|v| dist(x, *v))
                .fold(f64::INFINITY, f64::min),
            WeightMode::FullBoundary => self
                .boundary_segments()
                .iter()
                .map(|(a, b)| point_segment_distance(x, *a, *b))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Smoothed, capped distance weight without the domain check. Distances
    /// to the individual pieces are folded with a quadratic smooth-min and
    /// the result is blended into the cap at 1.
    pub fn weight_unchecked(&self, x: Point, mode: WeightMode) -> f64 {
        let w = WEIGHT_BLEND_WIDTH;
        let rho = match mode {
            WeightMode::SingularSet => {
                let mut it = self.singular.iter().map(|v| dist(x, *v));
                match it.next() {
                    None => return 1.0,
                    Some(first) => it.fold(first, |acc, d| smooth_min(acc, d, w)),
                }
            }
            WeightMode::FullBoundary => {
                let segs = self.boundary_segments();
                let mut it = segs.iter().map(|(a, b)| point_segment_distance(x, *a, *b));
                match it.next() {
                    None => return 1.0,
                    Some(first) => it.fold(first, |acc, d| smooth_min(acc, d, w)),
                }
            }
        };
        smooth_min(rho, 1.0, w).clamp(0.0, 1.0)
    }

    /// Per-cube inclusion in the open domain: every corner inside and no
    /// boundary piece touching the closed cube.
    pub fn cube_inside(&self, cube: &Cube) -> bool {
        if self.is_metadata_only() {
            return false;
        }
        if !cube.corners().iter().all(|c| self.contains(*c)) {
            return false;
        }
        !self
            .boundary_segments()
            .iter()
            .any(|(a, b)| segment_meets_cube(*a, *b, cube))
    }
}

/// Smooth distance weight `ρ(x) ∈ [0, 1]` to the singular set.
pub fn distance_weight(geom: &DomainGeometry, x: Point) -> Result<f64> {
    if geom.is_metadata_only() {
        return Err(Error::MetadataOnly("cap cones carry no planar grid"));
    }
    if !geom.contains_closed(x) {
        return Err(Error::OutsideDomain(x[0], x[1]));
    }
    Ok(geom.weight_unchecked(x, WeightMode::SingularSet))
}

/// Inside/outside mask on the level-`j` grid over the bounding box; a cell is
/// inside when its center is.
pub fn rasterize(geom: &DomainGeometry, level: u32) -> Result<Mask> {
    if geom.is_metadata_only() {
        return Err(Error::MetadataOnly("cap cones carry no planar grid"));
    }
    let grid = Grid::new(geom.bbox, level)?;
    let n = grid.n;
    let mut inside = vec![false; grid.len()];
    for iy in 0..n {
        for ix in 0..n {
            inside[iy * n + ix] = geom.contains(grid.center(ix, iy));
        }
    }
    Ok(Mask { grid, inside })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wedge_270() -> DomainGeometry {
        DomainGeometry::wedge(1.5 * PI, BoundingBox::centered(1.0)).unwrap()
    }

    #[test]
    fn weight_zero_at_vertex() {
        assert_eq!(distance_weight(&wedge_270(), [0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn weight_capped_far_away() {
        let g = wedge_270();
        assert_eq!(distance_weight(&g, [-3.0, 2.0]).unwrap(), 1.0);
        assert_eq!(distance_weight(&g, [-0.9, 1.5]).unwrap(), 1.0);
    }

    #[test]
    fn weight_matches_raw_distance_near_vertex() {
        let g = wedge_270();
        let x = [0.25, 0.0];
        let raw = g.raw_distance(x, WeightMode::SingularSet);
        let rho = distance_weight(&g, x).unwrap();
        assert_eq!(raw, 0.25);
        assert!(rho <= raw && rho >= 0.5 * raw);
    }

    #[test]
    fn weight_rejects_outside() {
        let err = distance_weight(&wedge_270(), [0.5, -0.5]).unwrap_err();
        assert!(matches!(err, Error::OutsideDomain(..)));
    }

    #[test]
    fn cutoff_plateau_and_zero() {
        let c = CutoffProfile::new([0.0, 0.0], 0.5, 0.2).unwrap();
        assert_eq!(cutoff_eval(&c, [0.0, 0.0]), 1.0);
        assert_eq!(cutoff_eval(&c, [0.5, 0.0]), 0.0);
        let mid = cutoff_eval(&c, [0.35, 0.0]);
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn cutoff_is_monotone_and_c2_along_ray() {
        let c = CutoffProfile::new([0.0, 0.0], 1.0, 0.4).unwrap();
        let n = 4000;
        let h = 1.2 / n as f64;
        let vals: Vec<f64> = (0..=n).map(|i| c.eval_radius(i as f64 * h)).collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0]);
        }
        // quintic smoothstep: |φ''| ≤ (10/√3)/w² with w the band width,
        // and no jump in φ'' at the band edges
        let w = 0.5 * c.eps;
        let d2: Vec<f64> = vals
            .windows(3)
            .map(|v| (v[0] - 2.0 * v[1] + v[2]) / (h * h))
            .collect();
        let max_d2 = d2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_d2 <= 1.01 * (10.0 / 3f64.sqrt()) / (w * w), "{max_d2}");
        let max_jump = d2.windows(2).map(|v| (v[1] - v[0]).abs()).fold(0.0, f64::max);
        // the third derivative is at most 60/w³, which bounds the step-to-step
        // change of the second difference
        assert!(max_jump <= 2.0 * 60.0 / (w * w * w) * h, "{max_jump}");
    }

    #[test]
    fn rasterize_unit_square() {
        let sq = DomainGeometry::unit_square();
        assert_eq!(rasterize(&sq, 0).unwrap().count(), 1);
        assert_eq!(rasterize(&sq, 3).unwrap().count(), 64);
    }

    #[test]
    fn rasterize_l_shape_matches_point_in_polygon_oracle() {
        let l = DomainGeometry::l_shape_unit();
        let mask = rasterize(&l, 4).unwrap();
        // oracle: a center is inside unless it sits in the removed quadrant
        let mut count = 0;
        for iy in 0..16 {
            for ix in 0..16 {
                let x = (ix as f64 + 0.5) / 16.0;
                let y = (iy as f64 + 0.5) / 16.0;
                if !(x > 0.5 && y > 0.5) {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 192);
        assert_eq!(mask.count(), 192);
    }

    #[test]
    fn rasterize_too_large() {
        let err = rasterize(&DomainGeometry::unit_square(), 20).unwrap_err();
        assert!(matches!(err, Error::GridTooLarge { .. }));
    }

    #[test]
    fn masks_nest_across_levels() {
        let l = DomainGeometry::l_shape_unit();
        for j in 1..7 {
            let fine = rasterize(&l, j).unwrap();
            let coarse = rasterize(&l, j - 1).unwrap();
            let n = fine.grid.n;
            for iy in 0..n {
                for ix in 0..n {
                    if fine.at(ix, iy) {
                        let h = coarse.grid.spacing();
                        let cube = Cube {
                            min: [(ix / 2) as f64 * h, (iy / 2) as f64 * h],
                            side: h,
                        };
                        assert!(cube.samples(5).iter().any(|p| l.contains(*p)) || coarse.at(ix / 2, iy / 2));
                    }
                }
            }
        }
    }

    #[test]
    fn polygon_validation() {
        let bowtie = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(DomainGeometry::polygon(bowtie, None, BoundingBox::unit()).is_err());
        let sq = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(DomainGeometry::polygon(sq, Some(vec![[0.5, 0.5]]), BoundingBox::unit()).is_err());
    }

    #[test]
    fn wedge_opening_validated() {
        assert!(DomainGeometry::wedge(0.0, BoundingBox::unit()).is_err());
        assert!(DomainGeometry::wedge(7.0, BoundingBox::unit()).is_err());
        assert!(DomainGeometry::wedge(2.0 * PI, BoundingBox::unit()).is_ok());
        assert!(DomainGeometry::unit_square().with_cutoff(0.5, 0.6).is_err());
    }

    #[test]
    fn l_shape_reentrant_corner_and_angle() {
        let l = DomainGeometry::l_shape_unit();
        assert_eq!(l.reentrant_corner(), Some([0.5, 0.5]));
        let th = l.opening_at([0.5, 0.5]).unwrap();
        assert!((th - 1.5 * PI).abs() < 1e-12);
        let th = l.opening_at([0.0, 0.0]).unwrap();
        assert!((th - 0.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn cube_inside_respects_boundary_contact() {
        let g = wedge_270();
        assert!(g.cube_inside(&Cube { min: [-0.5, 0.1], side: 0.3 }));
        // touches the ray along the negative y-axis
        assert!(!g.cube_inside(&Cube { min: [-0.3, -0.5], side: 0.3 }));
        // contains the vertex
        assert!(!g.cube_inside(&Cube { min: [-0.1, -0.1], side: 0.2 }));
        // fully in the excluded quadrant
        assert!(!g.cube_inside(&Cube { min: [0.2, -0.5], side: 0.2 }));
    }

    #[test]
    fn full_boundary_weight_on_square() {
        let sq = DomainGeometry::unit_square();
        let r = sq.weight_unchecked([0.1, 0.5], WeightMode::FullBoundary);
        assert!((r - 0.1).abs() < 1e-12);
    }
}
