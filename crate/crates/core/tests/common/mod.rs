#![allow(dead_code)]

use std::f64::consts::PI;

use d2dspread::epidemic::ThreatParams;
use d2dspread::optimizer::{cost, LayerBounds, MissionSpec, NetworkDesign, Thresholds};
use rand::Rng;

/// Brute-force minimum of a two-layer mission: a grid over (λ₁, λ₂, r₁²)
/// with the cheapest admissible r₂² in closed form, then two zoomed grids
/// around the best cell. Returns `None` when no grid point is feasible.
pub fn grid_oracle(m: &MissionSpec, n: usize) -> Option<(f64, NetworkDesign)> {
    assert_eq!(m.layers.len(), 2);
    let alpha = m.alpha();
    let need = |t: f64| {
        if t > 0.0 {
            1.0 / (alpha * (1.0 - t))
        } else {
            0.0
        }
    };
    let th = &m.thresholds;
    let (c1, c2, c12, c21, co) = (
        need(th.intra[0]),
        need(th.intra[1]),
        need(th.inter[0][1]),
        need(th.inter[1][0]),
        need(th.global),
    );
    let (b1, b2) = (m.layers[0], m.layers[1]);
    let s2_box = (b2.range_km.0.powi(2), b2.range_km.1.powi(2));

    let eval = |l1: f64, l2: f64, s1: f64| -> Option<(f64, NetworkDesign)> {
        if l1 * PI * s1 < c1 * (1.0 - 1e-12) || (l1 + l2) * PI * s1 < c12 * (1.0 - 1e-12) {
            return None;
        }
        let mut s2 = s2_box.0;
        let mut lift = |req: f64, coef: f64| -> bool {
            if req <= 0.0 {
                return true;
            }
            if coef <= 0.0 {
                return false;
            }
            s2 = s2.max(req / coef);
            true
        };
        if !(lift(c2, l2 * PI) && lift(c21, (l1 + l2) * PI) && lift(co - l1 * PI * s1, l2 * PI)) {
            return None;
        }
        if s2 > s2_box.1 * (1.0 + 1e-12) {
            return None;
        }
        let d = NetworkDesign {
            density: vec![l1, l2],
            range_km: vec![s1.sqrt(), s2.min(s2_box.1).sqrt()],
        };
        Some((cost(&d, m), d))
    };

    let mut box_ = [
        b1.density,
        b2.density,
        (b1.range_km.0.powi(2), b1.range_km.1.powi(2)),
    ];
    let mut best: Option<(f64, NetworkDesign)> = None;
    for _ in 0..3 {
        let axis = |k: usize, i: usize| {
            let (a, b) = box_[k];
            if n == 0 || a == b {
                a
            } else {
                a + (b - a) * i as f64 / n as f64
            }
        };
        let mut best_idx = None;
        for i in 0..=n {
            let l1 = axis(0, i);
            for j in 0..=n {
                let l2 = axis(1, j);
                for k in 0..=n {
                    let s1 = axis(2, k);
                    if let Some((c, d)) = eval(l1, l2, s1) {
                        if best.as_ref().map_or(true, |(b, _)| c < *b) {
                            best = Some((c, d));
                            best_idx = Some((l1, l2, s1));
                        }
                    }
                }
            }
        }
        // zoom: two grid steps around the best point, clipped to the box
        let Some((l1, l2, s1)) = best_idx.or_else(|| {
            best.as_ref()
                .map(|(_, d)| (d.density[0], d.density[1], d.range_km[0].powi(2)))
        }) else {
            return None;
        };
        let full = [
            b1.density,
            b2.density,
            (b1.range_km.0.powi(2), b1.range_km.1.powi(2)),
        ];
        for (k, centre) in [l1, l2, s1].into_iter().enumerate() {
            let step = 2.0 * (box_[k].1 - box_[k].0) / n as f64;
            box_[k] = (
                (centre - step).max(full[k].0),
                (centre + step).min(full[k].1),
            );
        }
    }
    best
}

/// A random desk-scale two-layer mission.
pub fn random_mission<R: Rng>(rng: &mut R) -> MissionSpec {
    let layer = |rng: &mut R| {
        let lmin = rng.gen_range(0.1..3.0);
        let rmin = rng.gen_range(0.01..0.2);
        LayerBounds {
            density: (lmin, lmin + rng.gen_range(5.0..40.0)),
            range_km: (rmin, rmin + rng.gen_range(0.3..1.0)),
        }
    };
    let t = |rng: &mut R| {
        if rng.gen_bool(0.5) {
            rng.gen_range(0.3..0.85)
        } else {
            0.0
        }
    };
    let thresholds = Thresholds {
        intra: vec![t(rng), t(rng)],
        inter: vec![vec![0.0, t(rng)], vec![t(rng), 0.0]],
        global: t(rng),
    };
    let w1 = rng.gen_range(0.05..0.95);
    MissionSpec {
        name: "random".into(),
        layers: vec![layer(rng), layer(rng)],
        thresholds,
        verify_thresholds: None,
        weights: vec![w1, 1.0 - w1],
        power_price: rng.gen_range(1.0..50.0),
        path_loss: [2.0, 3.0, 4.0, 5.0][rng.gen_range(0..4)],
        area_km2: 1.0,
        threat: ThreatParams::new(1.0, rng.gen_range(0.0..0.7)).unwrap(),
    }
}
