//! Property tests for invariants that hold for arbitrary inputs.

use besovlab::approx::{fit_rate, ring_decompose, sigma_n, uniform_error, TailProfile};
use besovlab::io::{parse_angle, Snapshot};
use besovlab::norms::{besov_norm_wavelet, BesovSpec};
use besovlab::pencil::{admissible_weight_range, pencil_eigenvalues_from_lb};
use besovlab::wavelet::{CoeffTree, WaveletIndex};
use besovlab::{BoundingBox, DomainGeometry};
use proptest::prelude::*;
use std::f64::consts::PI;

/// Level-4 tree (coarsest 1) filled from `vals`, cycling as needed.
fn tree_from(vals: &[f64]) -> CoeffTree {
    let mut t = CoeffTree::empty(2, 2, BoundingBox::unit(), 16, 1).unwrap();
    let idxs: Vec<WaveletIndex> = t.entries().into_iter().map(|e| e.0).collect();
    for (i, idx) in idxs.iter().enumerate() {
        t.set(idx, vals[i % vals.len()] * (1.0 + (i % 7) as f64) / 2f64.powi(idx.level as i32)).unwrap();
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sigma_nonincreasing_and_below_uniform(vals in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        let t = tree_from(&vals);
        let tail = TailProfile::new(&t);
        let total = tail.total();
        let mut prev = f64::INFINITY;
        for n in 0..=total {
            let s = tail.sigma(n);
            prop_assert!(s <= prev);
            prev = s;
        }
        prop_assert!((tail.sigma(0) - t.sum_of_squares().sqrt()).abs() <= 1e-12 * t.sum_of_squares().sqrt().max(1.0));
        for j in t.coarsest..=t.depth() {
            let (n, err) = uniform_error(&t, j, 2.0).unwrap();
            prop_assert!(tail.sigma(n) <= err);
            prop_assert_eq!(sigma_n(&t, n, 2.0).unwrap(), tail.sigma(n));
        }
    }

    #[test]
    fn fit_rate_ignores_scaling(alpha in 0.1f64..3.0, c in 1e-3f64..1e3, noise in prop::collection::vec(-0.1f64..0.1, 8)) {
        let pairs: Vec<(usize, f64)> = (0..8).map(|i| {
            let n = 1usize << (i + 2);
            (n, (n as f64).powf(-alpha) * noise[i].exp())
        }).collect();
        let base = fit_rate(&pairs).unwrap();
        let scaled: Vec<(usize, f64)> = pairs.iter().map(|(n, e)| (n * 4, e * c)).collect();
        let other = fit_rate(&scaled).unwrap();
        prop_assert!((base.alpha - other.alpha).abs() < 1e-9);
        prop_assert!((base.residual - other.residual).abs() < 1e-9);
    }

    #[test]
    fn besov_norm_homogeneous(vals in prop::collection::vec(-5.0f64..5.0, 1..20), c in -100.0f64..100.0, s in 0.0f64..1.9) {
        let t = tree_from(&vals);
        let spec = BesovSpec::new(s, 2.0, 2.0, 2).unwrap();
        let n = besov_norm_wavelet(&t, &spec).unwrap().value;
        let m = besov_norm_wavelet(&t.scaled(c), &spec).unwrap().value;
        prop_assert!((m - c.abs() * n).abs() <= 1e-10 * (c.abs() * n).max(1e-300));
    }

    #[test]
    fn rings_partition_levels(opening in 0.3f64..6.2) {
        let geom = DomainGeometry::wedge(opening, BoundingBox::centered(0.5)).unwrap();
        let t = CoeffTree::empty(3, 2, geom.bbox, 64, 2).unwrap();
        let rings = ring_decompose(&t, &geom).unwrap();
        for l in &rings.levels {
            prop_assert_eq!(l.total(), t.level_entries_at(l.level).len());
        }
    }

    #[test]
    fn pencil_pairs(lb in 0.0f64..1e4) {
        let (lm, lp) = pencil_eigenvalues_from_lb(lb);
        prop_assert!((lm + lp + 1.0).abs() <= 1e-12 * (1.0 + lb.sqrt()));
        prop_assert!((lm * lp + lb).abs() <= 1e-12 * (1.0 + lb));
        if lb > 0.0 {
            prop_assert!(!(lp > -1.0 && lp < 0.0) && !(lm > -1.0 && lm < 0.0));
        }
    }

    #[test]
    fn weight_range_antitone_in_gamma_m(theta in 0.2f64..(2.0 * PI), g in 0usize..4) {
        let a = admissible_weight_range(1, g, &[theta], None).unwrap();
        let b = admissible_weight_range(1, g + 1, &[theta], None).unwrap();
        if b.feasible {
            prop_assert!(a.feasible);
            prop_assert!(b.lower.value >= a.lower.value && b.upper.value <= a.upper.value);
        }
    }

    #[test]
    fn snapshot_bytes_round_trip(level in 0u32..5, t in -1e3f64..1e3, seed in any::<u64>()) {
        let n = 1usize << (2 * level);
        let values: Vec<f64> = (0..n).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 7.0).collect();
        let s = Snapshot { level, t, values };
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        prop_assert_eq!(Snapshot::read_from(&buf[..]).unwrap(), s);
    }

    #[test]
    fn degrees_parse(deg in 0.0f64..720.0) {
        let r = parse_angle(&format!("{deg}deg")).unwrap();
        prop_assert!((r - deg.to_radians()).abs() < 1e-12);
    }
}
