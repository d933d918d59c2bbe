//! Closed-form test functions shared by the CLI generators and the test suites.

use crate::error::{Error, Result};
use crate::field::Point;
use crate::geometry::{dist, CutoffProfile, DomainGeometry, DomainKind};
use std::f64::consts::PI;

/// Interior sector `(vertex, start, opening)` at a wedge vertex or at a
/// polygon's re-entrant corner.
pub fn corner_sector(geom: &DomainGeometry) -> Result<(Point, f64, f64)> {
    match &geom.kind {
        DomainKind::Wedge {
            vertex,
            start,
            opening,
        } => Ok((*vertex, *start, *opening)),
        DomainKind::Polygon { vertices } => {
            let v = geom
                .reentrant_corner()
                .ok_or_else(|| Error::InvalidGeometry("polygon has no re-entrant corner".into()))?;
            let n = vertices.len();
            let i = vertices.iter().position(|p| *p == v).expect("corner is a vertex");
            let area2: f64 = (0..n)
                .map(|k| {
                    let (a, b) = (vertices[k], vertices[(k + 1) % n]);
                    a[0] * b[1] - a[1] * b[0]
                })
                .sum();
            // counter-clockwise: the interior sweeps from the next edge to the previous one
            let first = if area2 > 0.0 {
                vertices[(i + 1) % n]
            } else {
                vertices[(i + n - 1) % n]
            };
            let start = (first[1] - v[1]).atan2(first[0] - v[0]);
            let opening = geom.opening_at(v).expect("corner is a vertex");
            Ok((v, start, opening))
        }
        DomainKind::CapCone { .. } => Err(Error::MetadataOnly("cap cones carry no planar grid")),
    }
}

/// `r^λ sin(λ φ)` in polar coordinates about the corner, `φ` measured from
/// the first edge; vanishes on both edges when `λ = π/θ`.
pub fn corner_singular(geom: &DomainGeometry, lambda: f64) -> Result<impl Fn(Point) -> f64 + Sync + Clone> {
    let (v, start, _) = corner_sector(geom)?;
    Ok(move |x: Point| {
        let dx = x[0] - v[0];
        let dy = x[1] - v[1];
        let r = dx.hypot(dy);
        if r == 0.0 {
            return 0.0;
        }
        let phi = (dy.atan2(dx) - start).rem_euclid(2.0 * PI);
        r.powf(lambda) * (lambda * phi).sin()
    })
}

/// `φ(x) r^λ sin(λ φ)` with the domain's cutoff centered at the corner.
pub fn cut_corner_singular(geom: &DomainGeometry, lambda: f64) -> Result<impl Fn(Point) -> f64 + Sync + Clone> {
    let u = corner_singular(geom, lambda)?;
    let (v, _, _) = corner_sector(geom)?;
    let cut = CutoffProfile::new(v, geom.r0, geom.eps)?;
    Ok(move |x: Point| {
        let c = cut.eval(x);
        if c == 0.0 {
            0.0
        } else {
            c * u(x)
        }
    })
}

/// Radial point singularity `φ(|x - v|) |x - v|^λ`, smooth away from `v`.
pub fn point_singular(center: Point, lambda: f64, cutoff: CutoffProfile) -> impl Fn(Point) -> f64 + Sync + Clone {
    move |x: Point| {
        let r = dist(x, center);
        let c = cutoff.eval_radius(r);
        if c == 0.0 || r == 0.0 {
            0.0
        } else {
            c * r.powf(lambda)
        }
    }
}

/// `C^∞` bump with maximum 1 at `center`, support radius `radius`.
pub fn bump(center: Point, radius: f64) -> impl Fn(Point) -> f64 + Sync + Clone {
    move |x: Point| {
        let t = dist(x, center) / radius;
        if t >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - t * t)).exp()
        }
    }
}

/// Smooth compactly supported profile `w(x) = (16 (x-x0)(x1-x)(y-y0)(y1-y) / L^4)^3`
/// on a square `[x0, x1] × [y0, y1]`, with its Laplacian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxProfile {
    pub min: Point,
    pub side: f64,
}

impl BoxProfile {
    fn parts(&self, x: Point) -> Option<[f64; 2]> {
        let a = (x[0] - self.min[0]) / self.side;
        let b = (x[1] - self.min[1]) / self.side;
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
            return None;
        }
        Some([a, b])
    }

    pub fn value(&self, x: Point) -> f64 {
        match self.parts(x) {
            None => 0.0,
            Some([a, b]) => (16.0 * a * (1.0 - a) * b * (1.0 - b)).powi(3),
        }
    }

    pub fn laplacian(&self, x: Point) -> f64 {
        let Some([a, b]) = self.parts(x) else {
            return 0.0;
        };
        // w = P(a)^3 P(b)^3 with P(t) = 4t(1-t)
        let p = |t: f64| 4.0 * t * (1.0 - t);
        let dp = |t: f64| 4.0 - 8.0 * t;
        let ddp = -8.0;
        let (pa, pb) = (p(a), p(b));
        let g2 = |pt: f64, dpt: f64| 6.0 * pt * dpt * dpt + 3.0 * pt * pt * ddp;
        let s2 = self.side * self.side;
        (g2(pa, dp(a)) * pb.powi(3) + pa.powi(3) * g2(pb, dp(b))) / s2
    }
}
