//! Minimum-cost choice of per-layer density and range subject to
//! mean-degree requirements derived from the spreading thresholds.
//!
//! With `s_m = r_m²` every requirement is a covering constraint
//!
//! ```text
//! intra m      λ_m π s_m                ≥ 1/(α(1 − T'_m))
//! inter (m,n)  (λ_m + λ_n) π s_m        ≥ 1/(α(1 − T'_mn))
//! combined     Σ_m λ_m π s_m            ≥ 1/(α(1 − T'_o))
//! ```
//!
//! and the cost `Σ λ_m (w_m + p s_m^{η/2})` is linear in `λ` for fixed `s`
//! and convex in `s` for fixed `λ`. The solver alternates exact block
//! minimizations (alternate convex search) from several starts.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degree::{strand_model, LayerSpec, StrandId};
use crate::epidemic::{solve_theta_exact, SolveOptions, ThreatParams};
use crate::error::{invalid, Error, Result};
use crate::lp::{self, LpError, Row};

/// Tunable interval of one layer's density (per km²) and range (km).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerBounds {
    pub density: (f64, f64),
    pub range_km: (f64, f64),
}

/// Spreading thresholds per strand. `inter[m][n]` belongs to the ordered
/// pair `(m, n)`; the diagonal is unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub intra: Vec<f64>,
    pub inter: Vec<Vec<f64>>,
    pub global: f64,
}

impl Thresholds {
    pub fn zeros(layers: usize) -> Self {
        Thresholds {
            intra: vec![0.0; layers],
            inter: vec![vec![0.0; layers]; layers],
            global: 0.0,
        }
    }

    pub fn get(&self, strand: StrandId) -> f64 {
        match strand {
            StrandId::Intra(m) => self.intra[m],
            StrandId::Inter(m, n) => self.inter[m][n],
            StrandId::Combined => self.global,
        }
    }

    fn validate(&self, layers: usize, field: &str) -> Result<()> {
        if self.intra.len() != layers
            || self.inter.len() != layers
            || self.inter.iter().any(|row| row.len() != layers)
        {
            return Err(invalid(format!(
                "{field}: expected {layers} intra values and a {layers}x{layers} inter matrix"
            )));
        }
        for s in StrandId::all(layers) {
            let t = self.get(s);
            if !(0.0..1.0).contains(&t) {
                return Err(invalid(format!(
                    "{field}: threshold {t} for {s} outside [0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Everything the design problem needs about a mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSpec {
    pub name: String,
    pub layers: Vec<LayerBounds>,
    /// Surrogate thresholds `T'` fed to the design constraints.
    pub thresholds: Thresholds,
    /// Thresholds `T` for the post-hoc check; `thresholds` when absent.
    pub verify_thresholds: Option<Thresholds>,
    pub weights: Vec<f64>,
    pub power_price: f64,
    pub path_loss: f64,
    /// Reporting only: the cost is per km².
    pub area_km2: f64,
    pub threat: ThreatParams,
}

impl MissionSpec {
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn alpha(&self) -> f64 {
        self.threat.alpha()
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let mut m = self.clone();
        m.threat = ThreatParams::new(self.threat.gamma, delta)?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.layers.len();
        if n == 0 {
            return Err(invalid("mission needs at least one layer"));
        }
        if self.weights.len() != n {
            return Err(invalid(format!(
                "{} weights for {n} layers",
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("weights must be non-negative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::WeightSum(total));
        }
        for (m, l) in self.layers.iter().enumerate() {
            let (a, b) = l.density;
            let (c, d) = l.range_km;
            if !(0.0 <= a && a <= b && b.is_finite()) || !(0.0 <= c && c <= d && d.is_finite()) {
                return Err(invalid(format!(
                    "layer {}: bounds must satisfy 0 <= min <= max",
                    m + 1
                )));
            }
        }
        self.thresholds.validate(n, "thresholds")?;
        if let Some(t) = &self.verify_thresholds {
            t.validate(n, "verify_thresholds")?;
        }
        if !(self.power_price >= 0.0 && self.power_price.is_finite()) {
            return Err(invalid("power price must be non-negative"));
        }
        if !(self.path_loss >= 2.0 && self.path_loss.is_finite()) {
            return Err(invalid(format!(
                "path-loss exponent {} must be at least 2",
                self.path_loss
            )));
        }
        if !(self.area_km2 > 0.0) {
            return Err(invalid("area must be positive"));
        }
        ThreatParams::new(self.threat.gamma, self.threat.delta)?;
        Ok(())
    }
}

/// Per-layer densities (per km²) and ranges (km).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDesign {
    pub density: Vec<f64>,
    pub range_km: Vec<f64>,
}

impl NetworkDesign {
    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>> {
        self.density
            .iter()
            .zip(&self.range_km)
            .map(|(&l, &r)| LayerSpec::fixed(l, r))
            .collect()
    }

    pub fn within_bounds(&self, mission: &MissionSpec, tol: f64) -> bool {
        mission.layers.iter().enumerate().all(|(m, b)| {
            let (l, r) = (self.density[m], self.range_km[m]);
            l >= b.density.0 - tol
                && l <= b.density.1 + tol
                && r >= b.range_km.0 - tol
                && r <= b.range_km.1 + tol
        })
    }
}

/// Cost per unit area: `Σ λ_m (w_m + p r_m^η)`, ranges in km.
pub fn cost(design: &NetworkDesign, mission: &MissionSpec) -> f64 {
    design
        .density
        .iter()
        .zip(&design.range_km)
        .zip(&mission.weights)
        .map(|((l, r), w)| l * (w + mission.power_price * r.powf(mission.path_loss)))
        .sum()
}

/// Required mean degree of one strand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub strand: StrandId,
    pub rhs: f64,
}

/// Constraints with a positive threshold; `T' = 0` imposes nothing.
pub fn active_constraints(mission: &MissionSpec) -> Result<Vec<Constraint>> {
    let alpha = mission.alpha();
    let mut out = Vec::new();
    for strand in StrandId::all(mission.layer_count()) {
        let t = mission.thresholds.get(strand);
        if t <= 0.0 {
            continue;
        }
        if alpha <= 0.0 {
            return Err(Error::InfeasibleByThreat(strand.to_string()));
        }
        out.push(Constraint {
            strand,
            rhs: 1.0 / (alpha * (1.0 - t)),
        });
    }
    Ok(out)
}

/// Mean degree of a strand under the design.
pub fn strand_mean_degree(design: &NetworkDesign, strand: StrandId) -> f64 {
    let (l, r) = (&design.density, &design.range_km);
    match strand {
        StrandId::Intra(m) => l[m] * PI * r[m] * r[m],
        StrandId::Inter(m, n) => (l[m] + l[n]) * PI * r[m] * r[m],
        StrandId::Combined => l.iter().zip(r).map(|(l, r)| l * PI * r * r).sum(),
    }
}

/// `(strand, mean degree − required)` for every active constraint.
pub fn surrogate_residuals(
    design: &NetworkDesign,
    mission: &MissionSpec,
) -> Result<Vec<(StrandId, f64)>> {
    Ok(active_constraints(mission)?
        .into_iter()
        .map(|c| (c.strand, strand_mean_degree(design, c.strand) - c.rhs))
        .collect())
}

fn names(strands: impl IntoIterator<Item = StrandId>) -> Vec<String> {
    strands.into_iter().map(|s| s.to_string()).collect()
}

/// Cheapest densities for fixed ranges: a linear program.
pub fn solve_density_block(ranges_km: &[f64], mission: &MissionSpec) -> Result<Vec<f64>> {
    let cons = active_constraints(mission)?;
    density_block(ranges_km, mission, &cons)
}

fn density_block(
    ranges_km: &[f64],
    mission: &MissionSpec,
    cons: &[Constraint],
) -> Result<Vec<f64>> {
    let n = mission.layer_count();
    let area: Vec<f64> = ranges_km.iter().map(|r| PI * r * r).collect();
    let cost: Vec<f64> = (0..n)
        .map(|m| mission.weights[m] + mission.power_price * ranges_km[m].powf(mission.path_loss))
        .collect();
    let rows: Vec<Row> = cons
        .iter()
        .map(|c| {
            let mut coeffs = vec![0.0; n];
            match c.strand {
                StrandId::Intra(m) => coeffs[m] = area[m],
                StrandId::Inter(m, k) => {
                    coeffs[m] += area[m];
                    coeffs[k] += area[m];
                }
                StrandId::Combined => coeffs.copy_from_slice(&area),
            }
            Row { coeffs, rhs: c.rhs }
        })
        .collect();
    let lower: Vec<f64> = mission.layers.iter().map(|b| b.density.0).collect();
    let upper: Vec<f64> = mission.layers.iter().map(|b| b.density.1).collect();
    match lp::solve(&cost, &rows, &lower, &upper) {
        Ok(sol) => Ok(sol.x),
        Err(LpError::Infeasible { rows, bounds }) => {
            let mut v = names(rows.iter().map(|&i| cons[i].strand));
            v.extend(bounds.iter().map(|m| format!("bounds:lambda_{}", m + 1)));
            Err(Error::Infeasible(v))
        }
        Err(e) => Err(invalid(format!("density block: {e:?}"))),
    }
}

/// Cheapest ranges for fixed densities.
///
/// Per-layer constraints become lower bounds on `s_m = r_m²`. If the
/// combined constraint still binds, the deficit is covered by raising a
/// common level `t` with `s_m = clamp(t, lb_m, ub_m)`: the marginal cost of
/// combined degree bought through layer `m` is `p(η/2)s_m^{η/2−1}/π`, which
/// depends on `s_m` alone, so equal marginal cost means equal `s`.
pub fn solve_range_block(densities: &[f64], mission: &MissionSpec) -> Result<Vec<f64>> {
    let cons = active_constraints(mission)?;
    range_block(densities, mission, &cons)
}

fn range_block(densities: &[f64], mission: &MissionSpec, cons: &[Constraint]) -> Result<Vec<f64>> {
    let n = mission.layer_count();
    let mut lb: Vec<f64> = mission
        .layers
        .iter()
        .map(|b| b.range_km.0.powi(2))
        .collect();
    let ub: Vec<f64> = mission
        .layers
        .iter()
        .map(|b| b.range_km.1.powi(2))
        .collect();
    let mut violated = Vec::new();
    let mut global = None;
    for c in cons {
        let (m, reach) = match c.strand {
            StrandId::Intra(m) => (m, densities[m]),
            StrandId::Inter(m, k) => (m, densities[m] + densities[k]),
            StrandId::Combined => {
                global = Some(c.rhs);
                continue;
            }
        };
        if reach <= 0.0 {
            violated.push(c.strand);
            continue;
        }
        lb[m] = lb[m].max(c.rhs / (PI * reach));
    }
    for m in 0..n {
        if lb[m] > ub[m] * (1.0 + 1e-12) {
            violated.extend(
                cons.iter()
                    .filter(|c| match c.strand {
                        StrandId::Intra(k) | StrandId::Inter(k, _) => k == m,
                        StrandId::Combined => false,
                    })
                    .map(|c| c.strand),
            );
        }
    }
    if !violated.is_empty() {
        violated.sort();
        violated.dedup();
        return Err(Error::Infeasible(names(violated)));
    }
    let lb: Vec<f64> = lb.iter().zip(&ub).map(|(l, u)| l.min(*u)).collect();
    let mut s = lb.clone();
    if let Some(rhs) = global {
        let supply = |t: f64| -> f64 {
            (0..n)
                .map(|m| PI * densities[m] * t.clamp(lb[m], ub[m]))
                .sum()
        };
        if supply(0.0) < rhs {
            let top = ub.iter().copied().fold(0.0, f64::max);
            if supply(top) < rhs * (1.0 - 1e-12) {
                return Err(Error::Infeasible(names([StrandId::Combined])));
            }
            let level = water_level(&lb, &ub, densities, rhs);
            for m in 0..n {
                s[m] = level.clamp(lb[m], ub[m]);
            }
        }
    }
    Ok(s.iter().map(|v| v.sqrt()).collect())
}

/// Solves `Σ π λ_m clamp(t, lb_m, ub_m) = rhs` for `t`; the left side is
/// piecewise linear and non-decreasing with kinks at the bounds.
fn water_level(lb: &[f64], ub: &[f64], densities: &[f64], rhs: f64) -> f64 {
    let mut kinks: Vec<f64> = lb.iter().chain(ub).copied().collect();
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();
    let supply = |t: f64| -> f64 {
        (0..lb.len())
            .map(|m| PI * densities[m] * t.clamp(lb[m], ub[m]))
            .sum()
    };
    let mut prev = kinks[0];
    for &k in &kinks {
        if supply(k) >= rhs {
            // linear on [prev, k]
            let (a, b) = (supply(prev), supply(k));
            if b <= a {
                return k;
            }
            return prev + (rhs - a) / (b - a) * (k - prev);
        }
        prev = k;
    }
    prev
}

/// Re-balances each layer's density at fixed mean-degree contribution
/// `q_m = λ_m π s_m`, one layer at a time. With `q` fixed the cost of layer
/// `m` is `w_m λ + p (q_m/π)^{η/2} λ^{1−η/2}`, convex in `λ`, and every
/// constraint turns into an interval for `λ_m`.
fn rebalance_density(
    design: &NetworkDesign,
    mission: &MissionSpec,
    cons: &[Constraint],
) -> NetworkDesign {
    let n = mission.layer_count();
    let half = mission.path_loss / 2.0;
    let p = mission.power_price;
    let mut d = design.clone();
    for m in 0..n {
        let lam = d.density[m];
        let s = d.range_km[m] * d.range_km[m];
        let q = lam * PI * s;
        if lam <= 0.0 || q <= 0.0 {
            continue;
        }
        let b = mission.layers[m];
        let (smin, smax) = (b.range_km.0.powi(2), b.range_km.1.powi(2));
        let mut lo = b.density.0.max(q / (PI * smax));
        let mut hi = if smin > 0.0 {
            b.density.1.min(q / (PI * smin))
        } else {
            b.density.1
        };
        for c in cons {
            if let StrandId::Inter(a, k) = c.strand {
                if a == m && c.rhs > q {
                    hi = hi.min(d.density[k] * q / (c.rhs - q));
                } else if k == m {
                    let sa = d.range_km[a] * d.range_km[a];
                    if sa > 0.0 {
                        lo = lo.max(c.rhs / (PI * sa) - d.density[a]);
                    }
                }
            }
        }
        if lo > hi {
            continue;
        }
        let w = mission.weights[m];
        let target = if half > 1.0 && p > 0.0 {
            if w > 0.0 {
                ((half - 1.0) * p * (q / PI).powf(half) / w).powf(1.0 / half)
            } else {
                hi
            }
        } else if w > 0.0 {
            lo
        } else {
            lam
        };
        let new_lam = target.clamp(lo, hi);
        let mut cand = d.clone();
        cand.density[m] = new_lam;
        cand.range_km[m] = (q / (PI * new_lam))
            .sqrt()
            .clamp(b.range_km.0, b.range_km.1);
        if cost(&cand, mission) <= cost(&d, mission) && feasible(&cand, mission, cons, FEAS_TOL) {
            d = cand;
        }
    }
    d
}

/// Smallest `λ_m` meeting every constraint and the density floor once the
/// other variables are fixed; infinite when no `λ_m` works.
fn density_floor(
    design: &NetworkDesign,
    m: usize,
    mission: &MissionSpec,
    cons: &[Constraint],
) -> f64 {
    let mut floor = mission.layers[m].density.0;
    let mut probe = design.clone();
    for c in cons {
        probe.density[m] = 0.0;
        let b = strand_mean_degree(&probe, c.strand);
        probe.density[m] = 1.0;
        let a = strand_mean_degree(&probe, c.strand) - b;
        if a > 0.0 {
            floor = floor.max((c.rhs - b) / a);
        } else if b < c.rhs * (1.0 - 1e-12) {
            return f64::INFINITY;
        }
    }
    floor
}

/// Joint move on `(λ_m, s_n)`: for every `s_n` the best `λ_m` is its floor,
/// which leaves a one-dimensional search. For `m ≠ n` the reduced cost is
/// convex in `s_n` (the floor is a maximum of terms `c − d/s_n`, each convex
/// and non-increasing), so golden-section search finds the block optimum.
/// This is the step that lets one layer trade density for another layer's
/// range, which the λ/r alternation cannot do.
fn cross_move(
    design: &NetworkDesign,
    m: usize,
    n: usize,
    mission: &MissionSpec,
    cons: &[Constraint],
) -> NetworkDesign {
    let (bl, br) = (mission.layers[m].density, mission.layers[n].range_km);
    let (s_lo, s_hi) = (br.0 * br.0, br.1 * br.1);
    if bl.0 == bl.1 || s_lo == s_hi {
        return design.clone();
    }
    let at = |s: f64| -> (NetworkDesign, f64) {
        let mut d = design.clone();
        d.range_km[n] = s.sqrt();
        let floor = density_floor(&d, m, mission, cons);
        if floor > bl.1 * (1.0 + 1e-12) {
            return (d, f64::INFINITY);
        }
        d.density[m] = floor.min(bl.1);
        let c = cost(&d, mission);
        (d, c)
    };
    let Some(s) = search_1d(|s| at(s).1, s_lo, s_hi) else {
        return design.clone();
    };
    let (d, c) = at(s);
    if c < cost(design, mission) && feasible(&d, mission, cons, FEAS_TOL) {
        d
    } else {
        design.clone()
    }
}

/// Minimizes `f` on `[lo, hi]` where `f` is infinite exactly on an initial
/// segment `[lo, t*)`: bisects for `t*`, samples the rest, then refines the
/// best sample's bracket by golden section.
fn search_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Option<f64> {
    let mut lo = lo;
    if !f(lo).is_finite() {
        if !f(hi).is_finite() {
            return None;
        }
        let mut top = hi;
        for _ in 0..100 {
            let mid = 0.5 * (lo + top);
            if f(mid).is_finite() {
                top = mid
            } else {
                lo = mid
            }
        }
        lo = top;
    }
    if hi <= lo {
        return Some(lo);
    }
    const SAMPLES: usize = 16;
    let xs: Vec<f64> = (0..=SAMPLES)
        .map(|i| lo + (hi - lo) * i as f64 / SAMPLES as f64)
        .collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let i = (0..=SAMPLES)
        .min_by(|&a, &b| fs[a].total_cmp(&fs[b]))
        .unwrap();
    let (mut a, mut b) = (xs[i.saturating_sub(1)], xs[(i + 1).min(SAMPLES)]);
    let (mut best_x, mut best_f) = (xs[i], fs[i]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..100 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
        if b - a <= 1e-13 * b.abs().max(1e-300) {
            break;
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v < best_f {
            best_x = x;
            best_f = v;
        }
    }
    Some(best_x)
}

/// Moves one density with every range re-optimized (exact range block).
fn reduced_density_move(
    design: &NetworkDesign,
    m: usize,
    mission: &MissionSpec,
    cons: &[Constraint],
) -> NetworkDesign {
    let (lo, hi) = mission.layers[m].density;
    if lo == hi {
        return design.clone();
    }
    let at = |t: f64| -> Option<NetworkDesign> {
        let mut density = design.density.clone();
        density[m] = t;
        let range_km = range_block(&density, mission, cons).ok()?;
        Some(NetworkDesign { density, range_km })
    };
    let f = |t: f64| at(t).map_or(f64::INFINITY, |d| cost(&d, mission));
    accept_if_better(design, search_1d(f, lo, hi).and_then(at), mission, cons)
}

/// Moves one range with every density re-optimized (exact density block).
fn reduced_range_move(
    design: &NetworkDesign,
    n: usize,
    mission: &MissionSpec,
    cons: &[Constraint],
) -> NetworkDesign {
    let (lo, hi) = mission.layers[n].range_km;
    if lo == hi {
        return design.clone();
    }
    let at = |r: f64| -> Option<NetworkDesign> {
        let mut range_km = design.range_km.clone();
        range_km[n] = r;
        let density = density_block(&range_km, mission, cons).ok()?;
        Some(NetworkDesign { density, range_km })
    };
    let f = |r: f64| at(r).map_or(f64::INFINITY, |d| cost(&d, mission));
    accept_if_better(design, search_1d(f, lo, hi).and_then(at), mission, cons)
}

/// Scales every free density by a common factor with the ranges
/// re-optimized. The switch between two per-layer range floors (say
/// `R_a/λ_m` versus `R_b/(λ_m + λ_n)`) happens on a ray through the origin
/// in density space, so coordinate moves stall there while this one slides
/// along it.
fn scale_density_move(
    design: &NetworkDesign,
    mission: &MissionSpec,
    cons: &[Constraint],
) -> NetworkDesign {
    let free: Vec<usize> = (0..mission.layer_count())
        .filter(|&m| {
            mission.layers[m].density.0 < mission.layers[m].density.1 && design.density[m] > 0.0
        })
        .collect();
    if free.is_empty() {
        return design.clone();
    }
    let lo = free
        .iter()
        .map(|&m| mission.layers[m].density.0 / design.density[m])
        .fold(0.0, f64::max);
    let hi = free
        .iter()
        .map(|&m| mission.layers[m].density.1 / design.density[m])
        .fold(f64::INFINITY, f64::min);
    let at = |t: f64| -> Option<NetworkDesign> {
        let mut density = design.density.clone();
        for &m in &free {
            density[m] = (design.density[m] * t)
                .clamp(mission.layers[m].density.0, mission.layers[m].density.1);
        }
        let range_km = range_block(&density, mission, cons).ok()?;
        Some(NetworkDesign { density, range_km })
    };
    let f = |t: f64| at(t).map_or(f64::INFINITY, |d| cost(&d, mission));
    accept_if_better(design, search_1d(f, lo, hi).and_then(at), mission, cons)
}

/// Range counterpart of [`scale_density_move`].
fn scale_range_move(
    design: &NetworkDesign,
    mission: &MissionSpec,
    cons: &[Constraint],
) -> NetworkDesign {
    let free: Vec<usize> = (0..mission.layer_count())
        .filter(|&m| {
            mission.layers[m].range_km.0 < mission.layers[m].range_km.1 && design.range_km[m] > 0.0
        })
        .collect();
    if free.is_empty() {
        return design.clone();
    }
    let lo = free
        .iter()
        .map(|&m| mission.layers[m].range_km.0 / design.range_km[m])
        .fold(0.0, f64::max);
    let hi = free
        .iter()
        .map(|&m| mission.layers[m].range_km.1 / design.range_km[m])
        .fold(f64::INFINITY, f64::min);
    let at = |t: f64| -> Option<NetworkDesign> {
        let mut range_km = design.range_km.clone();
        for &m in &free {
            range_km[m] = (design.range_km[m] * t)
                .clamp(mission.layers[m].range_km.0, mission.layers[m].range_km.1);
        }
        let density = density_block(&range_km, mission, cons).ok()?;
        Some(NetworkDesign { density, range_km })
    };
    let f = |t: f64| at(t).map_or(f64::INFINITY, |d| cost(&d, mission));
    accept_if_better(design, search_1d(f, lo, hi).and_then(at), mission, cons)
}

fn accept_if_better(
    design: &NetworkDesign,
    candidate: Option<NetworkDesign>,
    mission: &MissionSpec,
    cons: &[Constraint],
) -> NetworkDesign {
    match candidate {
        Some(d)
            if cost(&d, mission) < cost(design, mission)
                && feasible(&d, mission, cons, FEAS_TOL) =>
        {
            d
        }
        _ => design.clone(),
    }
}

const FEAS_TOL: f64 = 1e-6;

fn feasible(design: &NetworkDesign, mission: &MissionSpec, cons: &[Constraint], tol: f64) -> bool {
    design.within_bounds(mission, 1e-12)
        && cons
            .iter()
            .all(|c| strand_mean_degree(design, c.strand) - c.rhs >= -tol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub max_iter: usize,
    pub rel_tol: f64,
    /// Halton starts added to the corner and center starts.
    pub scattered_starts: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            max_iter: 200,
            rel_tol: 1e-6,
            scattered_starts: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub design: NetworkDesign,
    pub cost: f64,
    pub feasible_surrogate: bool,
    pub residuals: Vec<(StrandId, f64)>,
    pub acs_iterations: usize,
    /// Cost after each alternation round, starting with the first feasible point.
    pub cost_trace: Vec<f64>,
    /// Which start produced the design.
    pub start_index: usize,
}

struct AcsRun {
    design: NetworkDesign,
    trace: Vec<f64>,
    iterations: usize,
}

/// Deterministic starts: box center, all-min, all-max, then the two mixed corners.
pub fn default_starts(mission: &MissionSpec) -> Vec<NetworkDesign> {
    let pick = |lam: fn((f64, f64)) -> f64, rng: fn((f64, f64)) -> f64| NetworkDesign {
        density: mission.layers.iter().map(|b| lam(b.density)).collect(),
        range_km: mission.layers.iter().map(|b| rng(b.range_km)).collect(),
    };
    let mid = |(a, b): (f64, f64)| 0.5 * (a + b);
    let lo = |(a, _): (f64, f64)| a;
    let hi = |(_, b): (f64, f64)| b;
    vec![
        pick(mid, mid),
        pick(lo, lo),
        pick(hi, hi),
        pick(lo, hi),
        pick(hi, lo),
    ]
}

const PRIMES: [u64; 20] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
];

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let (mut x, mut f) = (0.0, 1.0 / b as f64);
    while i > 0 {
        x += (i % b) as f64 * f;
        i /= b;
        f /= b as f64;
    }
    x
}

/// Space-filling starts: a Halton sequence over the `(λ, r)` box. Starts
/// beyond the corners matter because the alternation stalls at partial
/// optima where one layer is parked at its density floor and the degree is
/// bought with the other layer's range.
pub fn scattered_starts(mission: &MissionSpec, count: usize) -> Vec<NetworkDesign> {
    let n = mission.layer_count();
    (1..=count as u64)
        .map(|i| {
            let u = |dim: usize| radical_inverse(i, PRIMES[dim % PRIMES.len()]);
            let lerp = |(a, b): (f64, f64), t: f64| a + (b - a) * t;
            NetworkDesign {
                density: (0..n)
                    .map(|m| lerp(mission.layers[m].density, u(m)))
                    .collect(),
                range_km: (0..n)
                    .map(|m| lerp(mission.layers[m].range_km, u(n + m)))
                    .collect(),
            }
        })
        .collect()
}

fn clamp_to_box(design: &NetworkDesign, mission: &MissionSpec) -> NetworkDesign {
    NetworkDesign {
        density: design
            .density
            .iter()
            .zip(&mission.layers)
            .map(|(v, b)| v.clamp(b.density.0, b.density.1))
            .collect(),
        range_km: design
            .range_km
            .iter()
            .zip(&mission.layers)
            .map(|(v, b)| v.clamp(b.range_km.0, b.range_km.1))
            .collect(),
    }
}

fn run_acs(
    mission: &MissionSpec,
    cons: &[Constraint],
    start: &NetworkDesign,
    range_first: bool,
    opts: &OptimizeOptions,
) -> Result<AcsRun> {
    let mut d = clamp_to_box(start, mission);
    // First feasible point. Density-first keeps the start ranges and buys
    // degree with the cheapest devices at those ranges; range-first keeps
    // the start densities, which steers the search into the basin where
    // those densities are cheap.
    let ranges_then_densities = |d: &mut NetworkDesign| -> Result<()> {
        d.range_km = range_block(&d.density, mission, cons)?;
        d.density = density_block(&d.range_km, mission, cons)?;
        Ok(())
    };
    if range_first && ranges_then_densities(&mut d).is_ok() {
    } else {
        d = clamp_to_box(start, mission);
        match density_block(&d.range_km, mission, cons) {
            Ok(l) => d.density = l,
            Err(first) => ranges_then_densities(&mut d).map_err(|_| first)?,
        }
    }
    if let Ok(r) = range_block(&d.density, mission, cons) {
        let cand = NetworkDesign {
            density: d.density.clone(),
            range_km: r,
        };
        if cost(&cand, mission) <= cost(&d, mission) {
            d = cand;
        }
    }
    let mut current = cost(&d, mission);
    let mut trace = vec![current];
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        if let Ok(l) = density_block(&d.range_km, mission, cons) {
            let cand = NetworkDesign {
                density: l,
                range_km: d.range_km.clone(),
            };
            if cost(&cand, mission) <= current {
                d = cand;
            }
        }
        if let Ok(r) = range_block(&d.density, mission, cons) {
            let cand = NetworkDesign {
                density: d.density.clone(),
                range_km: r,
            };
            if cost(&cand, mission) <= cost(&d, mission) {
                d = cand;
            }
        }
        d = rebalance_density(&d, mission, cons);
        let n = mission.layer_count();
        for m in 0..n {
            for k in 0..n {
                if m != k {
                    d = cross_move(&d, m, k, mission, cons);
                }
            }
        }
        for m in 0..n {
            d = reduced_density_move(&d, m, mission, cons);
            d = reduced_range_move(&d, m, mission, cons);
        }
        d = scale_density_move(&d, mission, cons);
        d = scale_range_move(&d, mission, cons);
        let next = cost(&d, mission);
        trace.push(next);
        let drop = current - next;
        current = next;
        if drop <= opts.rel_tol * current.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(AcsRun {
        design: d,
        trace,
        iterations,
    })
}

/// Alternate convex search from `start` (if given) and the default starts;
/// returns the cheapest feasible outcome.
pub fn optimize(
    mission: &MissionSpec,
    start: Option<&NetworkDesign>,
) -> Result<OptimizationResult> {
    optimize_with(mission, start, &OptimizeOptions::default())
}

pub fn optimize_with(
    mission: &MissionSpec,
    start: Option<&NetworkDesign>,
    opts: &OptimizeOptions,
) -> Result<OptimizationResult> {
    mission.validate()?;
    let cons = active_constraints(mission)?;
    let mut starts: Vec<NetworkDesign> = start.into_iter().cloned().collect();
    starts.extend(default_starts(mission));
    starts.extend(scattered_starts(mission, opts.scattered_starts));

    let mut best: Option<(usize, AcsRun, f64)> = None;
    let mut failures: Vec<String> = Vec::new();
    let runs = starts
        .iter()
        .enumerate()
        .flat_map(|(i, s)| [(i, s, false), (i, s, true)]);
    for (i, s, range_first) in runs {
        match run_acs(mission, &cons, s, range_first, opts) {
            Ok(run) => {
                if !feasible(&run.design, mission, &cons, FEAS_TOL) {
                    continue;
                }
                let c = cost(&run.design, mission);
                if best.as_ref().map_or(true, |(_, _, b)| c < *b) {
                    best = Some((i, run, c));
                }
            }
            Err(Error::Infeasible(v)) => failures.extend(v),
            Err(e) => return Err(e),
        }
    }
    let Some((start_index, run, cost)) = best else {
        failures.sort();
        failures.dedup();
        return Err(Error::Infeasible(failures));
    };
    let residuals = surrogate_residuals(&run.design, mission)?;
    Ok(OptimizationResult {
        feasible_surrogate: residuals.iter().all(|(_, r)| *r >= -FEAS_TOL),
        design: run.design,
        cost,
        residuals,
        acs_iterations: run.iterations,
        cost_trace: run.trace,
        start_index,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRow {
    pub strand: StrandId,
    pub threshold: f64,
    pub theta: f64,
    pub avg_informed: f64,
    pub pass: bool,
}

/// Post-hoc check of a design against the original thresholds on the
/// average informed density of every strand.
pub fn verify_original(
    result: &OptimizationResult,
    mission: &MissionSpec,
    thresholds: &Thresholds,
) -> Vec<VerificationRow> {
    verify_design(&result.design, mission.alpha(), thresholds)
}

pub fn verify_design(
    design: &NetworkDesign,
    alpha: f64,
    thresholds: &Thresholds,
) -> Vec<VerificationRow> {
    let layers = design.layer_specs().unwrap_or_default();
    StrandId::all(design.density.len())
        .into_iter()
        .map(|strand| {
            let threshold = thresholds.get(strand);
            let eq = strand_model(&layers, strand)
                .and_then(|m| solve_theta_exact(&m, alpha, SolveOptions::default()));
            let (theta, avg_informed) = match eq {
                Ok(e) => (e.theta, e.average_informed),
                Err(_) => (f64::NAN, f64::NAN),
            };
            VerificationRow {
                strand,
                threshold,
                theta,
                avg_informed,
                pass: avg_informed >= threshold,
            }
        })
        .collect()
}

/// CSV `strand,threshold,theta,avg_informed,pass`.
pub fn write_verification_csv<W: Write>(
    rows: &[VerificationRow],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "strand,threshold,theta,avg_informed,pass")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.strand, r.threshold, r.theta, r.avg_informed, r.pass
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub alpha: f64,
    pub outcome: Result<OptimizationResult>,
}

impl SweepRow {
    pub fn feasible(&self) -> bool {
        matches!(&self.outcome, Ok(r) if r.feasible_surrogate)
    }
}

/// Optimizes the mission at each threat level. Rows are independent and are
/// computed on up to `jobs` threads; output order follows `deltas`.
pub fn sweep_threat(mission: &MissionSpec, deltas: &[f64], jobs: usize) -> Result<Vec<SweepRow>> {
    if let Some(d) = deltas.iter().find(|d| !(0.0..1.0).contains(*d)) {
        return Err(invalid(format!("threat level {d} outside [0, 1)")));
    }
    let row = |&delta: &f64| -> SweepRow {
        let outcome = mission.with_delta(delta).and_then(|m| optimize(&m, None));
        SweepRow {
            delta,
            alpha: mission.threat.gamma * (1.0 - delta),
            outcome,
        }
    };
    if jobs <= 1 {
        return Ok(deltas.iter().map(row).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(|| deltas.par_iter().map(row).collect()))
}

/// CSV `delta,alpha,lambda_1..M,r_1_km..r_M_km,cost,feasible,iterations`.
/// Infeasible rows leave the design and cost fields empty.
pub fn write_sweep_csv<W: Write>(
    rows: &[SweepRow],
    layers: usize,
    mut out: W,
) -> std::io::Result<()> {
    let mut header = vec!["delta".to_string(), "alpha".to_string()];
    header.extend((1..=layers).map(|m| format!("lambda_{m}")));
    header.extend((1..=layers).map(|m| format!("r_{m}_km")));
    header.extend(["cost", "feasible", "iterations"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let mut fields = vec![row.delta.to_string(), row.alpha.to_string()];
        match &row.outcome {
            Ok(r) if r.feasible_surrogate => {
                fields.extend(r.design.density.iter().map(f64::to_string));
                fields.extend(r.design.range_km.iter().map(f64::to_string));
                fields.push(r.cost.to_string());
                fields.push("true".into());
                fields.push(r.acs_iterations.to_string());
            }
            _ => {
                fields.extend(std::iter::repeat(String::new()).take(2 * layers + 1));
                fields.push("false".into());
                fields.push(String::new());
            }
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_layer(thresholds: Thresholds, p: f64, delta: f64) -> MissionSpec {
        MissionSpec {
            name: "test".into(),
            layers: vec![
                LayerBounds {
                    density: (0.1, 10.0),
                    range_km: (0.1, 1.0),
                },
                LayerBounds {
                    density: (1.0, 40.0),
                    range_km: (0.01, 0.5),
                },
            ],
            thresholds,
            verify_thresholds: None,
            weights: vec![0.8, 0.2],
            power_price: p,
            path_loss: 4.0,
            area_km2: 1.0,
            threat: ThreatParams::new(1.0, delta).unwrap(),
        }
    }

    fn one_layer(t: f64, alpha: f64) -> MissionSpec {
        MissionSpec {
            name: "single".into(),
            layers: vec![LayerBounds {
                density: (0.0, 100.0),
                range_km: (0.0, 2.0),
            }],
            thresholds: Thresholds {
                intra: vec![t],
                inter: vec![vec![0.0]],
                global: 0.0,
            },
            verify_thresholds: None,
            weights: vec![1.0],
            power_price: 10.0,
            path_loss: 4.0,
            area_km2: 1.0,
            threat: ThreatParams::new(1.0, 1.0 - alpha).unwrap(),
        }
    }

    #[test]
    fn cost_examples() {
        let m = two_layer(Thresholds::zeros(2), 40.0, 0.0);
        let d = NetworkDesign {
            density: vec![5.0, 20.0],
            range_km: vec![0.5, 0.1],
        };
        assert!((cost(&d, &m) - 20.58).abs() < 1e-12);
        let zero = NetworkDesign {
            density: vec![0.0, 0.0],
            range_km: vec![0.5, 0.1],
        };
        assert_eq!(cost(&zero, &m), 0.0);
        let mut free = m.clone();
        free.power_price = 0.0;
        let wide = NetworkDesign {
            density: vec![5.0, 20.0],
            range_km: vec![0.9, 0.4],
        };
        assert_eq!(cost(&d, &free), cost(&wide, &free));
    }

    #[test]
    fn residual_examples() {
        let mut t = Thresholds::zeros(2);
        t.intra[1] = 0.7;
        let m = two_layer(t, 40.0, 0.1);
        let cons = active_constraints(&m).unwrap();
        assert_eq!(cons.len(), 1);
        assert!((cons[0].rhs - 1.0 / (0.9 * 0.3)).abs() < 1e-12);
        assert!((cons[0].rhs - 3.7037).abs() < 1e-4);
        // on the boundary
        let r = (cons[0].rhs / (PI * 20.0)).sqrt();
        let d = NetworkDesign {
            density: vec![1.0, 20.0],
            range_km: vec![0.2, r],
        };
        let res = surrogate_residuals(&d, &m).unwrap();
        assert!(res[0].1.abs() < 1e-12);
        // nothing active
        let m0 = two_layer(Thresholds::zeros(2), 40.0, 0.1);
        assert!(surrogate_residuals(&d, &m0).unwrap().is_empty());
    }

    #[test]
    fn zero_rate_with_requirement_is_infeasible_by_threat() {
        let mut t = Thresholds::zeros(2);
        t.global = 0.5;
        let m = two_layer(t, 40.0, 1.0);
        assert!(matches!(
            active_constraints(&m),
            Err(Error::InfeasibleByThreat(_))
        ));
        assert!(
            active_constraints(&two_layer(Thresholds::zeros(2), 1.0, 1.0))
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn density_block_without_constraints_sits_at_minimum() {
        let m = two_layer(Thresholds::zeros(2), 40.0, 0.0);
        assert_eq!(
            solve_density_block(&[0.3, 0.2], &m).unwrap(),
            vec![0.1, 1.0]
        );
    }

    #[test]
    fn density_block_single_constraint() {
        let m = one_layer(0.7, 0.5);
        let c = 1.0 / (0.5 * 0.3);
        for r in [0.2, 0.5, 1.0] {
            let l = solve_density_block(&[r], &m).unwrap();
            let want = c / (PI * r * r);
            assert!(
                (l[0] - want).abs() < 1e-9 * want.max(1.0),
                "{} vs {want}",
                l[0]
            );
        }
        assert!(matches!(
            solve_density_block(&[0.05], &m),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn range_block_examples() {
        let m = two_layer(Thresholds::zeros(2), 40.0, 0.0);
        assert_eq!(
            solve_range_block(&[2.0, 10.0], &m).unwrap(),
            vec![0.1, 0.01]
        );
        let single = one_layer(0.7, 0.5);
        let r = solve_range_block(&[25.0], &single).unwrap();
        let want = (1.0 / (0.5 * 0.3 * 25.0 * PI)).sqrt();
        assert!((r[0] - want).abs() < 1e-12);
        assert!((r[0] - 0.2913).abs() < 5e-5);
    }

    #[test]
    fn range_block_water_fill_matches_grid() {
        // Only the combined constraint binds; compare the level fill with a
        // dense search over s1 (s2 then follows from the constraint).
        for (p, eta, lam, t) in [
            (40.0, 4.0, [3.0, 20.0], 0.8),
            (5.0, 3.0, [8.0, 2.0], 0.6),
            (20.0, 6.0, [1.0, 30.0], 0.9),
        ] {
            let mut th = Thresholds::zeros(2);
            th.global = t;
            let mut m = two_layer(th, p, 0.2);
            m.path_loss = eta;
            let r = solve_range_block(&lam, &m).unwrap();
            let d = NetworkDesign {
                density: lam.to_vec(),
                range_km: r,
            };
            let got = cost(&d, &m);
            let rhs = 1.0 / (0.8 * (1.0 - t));
            let (s1lo, s1hi) = (0.01, 1.0);
            let mut best = f64::INFINITY;
            for i in 0..=20_000 {
                let s1 = s1lo + (s1hi - s1lo) * i as f64 / 20_000.0;
                let need = (rhs - PI * lam[0] * s1) / (PI * lam[1]);
                let s2 = need.max(0.0001);
                if s2 > 0.25 {
                    continue;
                }
                let trial = NetworkDesign {
                    density: lam.to_vec(),
                    range_km: vec![s1.sqrt(), s2.sqrt()],
                };
                best = best.min(cost(&trial, &m));
            }
            assert!(got <= best * (1.0 + 1e-9), "{got} vs grid {best}");
            assert!((got - best).abs() / best < 1e-3);
        }
    }

    #[test]
    fn range_block_infeasible_certificate() {
        let mut th = Thresholds::zeros(2);
        th.intra[1] = 0.9;
        let m = two_layer(th, 40.0, 0.5);
        match solve_range_block(&[1.0, 1.0], &m) {
            Err(Error::Infeasible(v)) => assert_eq!(v, vec!["intra:2".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unconstrained_optimum_is_minimum_corner() {
        let m = two_layer(Thresholds::zeros(2), 40.0, 0.0);
        let r = optimize(&m, None).unwrap();
        assert_eq!(r.design.density, vec![0.1, 1.0]);
        assert_eq!(r.design.range_km, vec![0.1, 0.01]);
        let want = 0.1 * (0.8 + 40.0 * 0.1f64.powi(4)) + 1.0 * (0.2 + 40.0 * 0.01f64.powi(4));
        assert!((r.cost - want).abs() < 1e-12);
    }

    #[test]
    fn trace_never_increases_and_result_feasible() {
        let th = Thresholds {
            intra: vec![0.0, 0.7],
            inter: vec![vec![0.0, 0.8], vec![0.0, 0.0]],
            global: 0.7,
        };
        for delta in [0.0, 0.3, 0.6] {
            let m = two_layer(th.clone(), 40.0, delta);
            let r = optimize(&m, None).unwrap();
            assert!(r.feasible_surrogate);
            assert!(r.design.within_bounds(&m, 1e-12));
            for w in r.cost_trace.windows(2) {
                assert!(w[1] <= w[0]);
            }
            assert!(r.residuals.iter().all(|(_, v)| *v >= -1e-6));
        }
    }

    #[test]
    fn infeasible_mission_reported() {
        let mut th = Thresholds::zeros(2);
        th.global = 0.95;
        let m = two_layer(th, 40.0, 0.9);
        assert!(matches!(optimize(&m, None), Err(Error::Infeasible(_))));
    }

    #[test]
    fn validation() {
        let mut m = two_layer(Thresholds::zeros(2), 40.0, 0.0);
        m.weights = vec![0.5, 0.6];
        assert!(matches!(m.validate(), Err(Error::WeightSum(_))));
        let mut m = two_layer(Thresholds::zeros(2), 40.0, 0.0);
        m.thresholds.global = 1.0;
        assert!(m.validate().is_err());
        let mut m = two_layer(Thresholds::zeros(2), 40.0, 0.0);
        m.path_loss = 1.5;
        assert!(m.validate().is_err());
    }

    #[test]
    fn sweep_rows_and_csv() {
        let m = two_layer(Thresholds::zeros(2), 40.0, 0.0);
        let rows = sweep_threat(&m, &[0.0], 1).unwrap();
        assert!(rows[0].feasible());
        let mut buf = Vec::new();
        write_sweep_csv(&rows, 2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "delta,alpha,lambda_1,lambda_2,r_1_km,r_2_km,cost,feasible,iterations"
        );
        assert!(lines.next().unwrap().starts_with("0,1,0.1,1,0.1,0.01,"));
        assert!(sweep_threat(&m, &[1.0], 1).is_err());

        let mut th = Thresholds::zeros(2);
        th.global = 0.95;
        let hard = two_layer(th, 40.0, 0.0);
        let rows = sweep_threat(&hard, &[0.0, 0.9], 2).unwrap();
        assert!(rows[0].feasible() && !rows[1].feasible());
        let mut buf = Vec::new();
        write_sweep_csv(&rows, 2, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .lines()
            .nth(2)
            .unwrap()
            .starts_with("0.9,0.09999999999999998,,,,,,false,"));
    }

    #[test]
    fn verification_reports_subcritical_strand() {
        let th = Thresholds {
            intra: vec![0.5, 0.0],
            inter: vec![vec![0.0; 2]; 2],
            global: 0.0,
        };
        let d = NetworkDesign {
            density: vec![0.1, 10.0],
            range_km: vec![0.1, 0.3],
        };
        let rows = verify_design(&d, 0.5, &th);
        let intra1 = rows
            .iter()
            .find(|r| r.strand == StrandId::Intra(0))
            .unwrap();
        assert!(!intra1.pass);
        assert_eq!(intra1.avg_informed, 0.0);
        let all_zero = verify_design(&d, 0.5, &Thresholds::zeros(2));
        assert!(all_zero.iter().all(|r| r.pass));
    }
}
