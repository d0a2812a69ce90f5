//! Analytic degree laws for the intra-layer, inter-layer and combined
//! strands of a multi-layer Poisson deployment.
//!
//! Every law is a finite Poisson mixture: intra- and inter-layer degrees are
//! a single component, the combined degree has one component per layer.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tail mass left out by [`DegreeDistribution::k_max`].
pub const TAIL_MASS: f64 = 1e-12;

/// One device type: current density/range and their tunable bounds.
///
/// Densities are per km², ranges in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub density: f64,
    pub range_km: f64,
    pub density_bounds: (f64, f64),
    pub range_bounds: (f64, f64),
}

impl LayerSpec {
    pub fn new(
        density: f64,
        range_km: f64,
        density_bounds: (f64, f64),
        range_bounds: (f64, f64),
    ) -> Result<Self> {
        let spec = LayerSpec {
            density,
            range_km,
            density_bounds,
            range_bounds,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A layer whose bounds collapse onto the given values.
    pub fn fixed(density: f64, range_km: f64) -> Result<Self> {
        Self::new(density, range_km, (density, density), (range_km, range_km))
    }

    pub fn validate(&self) -> Result<()> {
        let (lmin, lmax) = self.density_bounds;
        let (rmin, rmax) = self.range_bounds;
        let finite = [self.density, self.range_km, lmin, lmax, rmin, rmax]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("layer values must be finite"));
        }
        if !(0.0 <= lmin && lmin <= self.density && self.density <= lmax) {
            return Err(invalid(format!(
                "density {} outside bounds [{lmin}, {lmax}] or negative",
                self.density
            )));
        }
        if !(0.0 <= rmin && rmin <= self.range_km && self.range_km <= rmax) {
            return Err(invalid(format!(
                "range {} km outside bounds [{rmin}, {rmax}] or negative",
                self.range_km
            )));
        }
        Ok(())
    }

    /// Mean number of same-layer devices inside the disk of radius `range_km`.
    pub fn disk_mean(&self) -> f64 {
        self.density * PI * self.range_km * self.range_km
    }
}

/// Which class of message a degree law (or simulation) refers to.
///
/// Layer indices are zero-based; [`fmt::Display`] and [`FromStr`] use the
/// one-based form `intra:1`, `inter:1:2`, `combined`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrandId {
    Intra(usize),
    /// Ordered pair: the range of the first layer sets the neighborhood.
    Inter(usize, usize),
    Combined,
}

impl StrandId {
    pub fn check(&self, layers: usize) -> Result<()> {
        let ok = match *self {
            StrandId::Intra(m) => m < layers,
            StrandId::Inter(m, n) => m < layers && n < layers,
            StrandId::Combined => layers > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!(
                "strand {self} does not exist in a {layers}-layer network"
            )))
        }
    }

    /// All strands of an `layers`-layer network: intra, ordered inter pairs, combined.
    pub fn all(layers: usize) -> Vec<StrandId> {
        let mut out: Vec<StrandId> = (0..layers).map(StrandId::Intra).collect();
        for m in 0..layers {
            for n in 0..layers {
                if m != n {
                    out.push(StrandId::Inter(m, n));
                }
            }
        }
        out.push(StrandId::Combined);
        out
    }
}

impl fmt::Display for StrandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            StrandId::Intra(m) => write!(f, "intra:{}", m + 1),
            StrandId::Inter(m, n) => write!(f, "inter:{}:{}", m + 1, n + 1),
            StrandId::Combined => write!(f, "combined"),
        }
    }
}

impl FromStr for StrandId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "combined" || s == "o" || s == "global" {
            return Ok(StrandId::Combined);
        }
        let index = |v: &str| -> Result<usize> {
            let i: usize = v
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad layer index `{v}` in strand `{s}`")))?;
            if i == 0 {
                return Err(invalid(format!("layer indices are 1-based (strand `{s}`)")));
            }
            Ok(i - 1)
        };
        if let Some(rest) = s.strip_prefix("intra:") {
            return Ok(StrandId::Intra(index(rest)?));
        }
        if let Some(rest) = s.strip_prefix("inter:") {
            let parts: Vec<&str> = rest.split([':', ',']).collect();
            if parts.len() == 2 {
                return Ok(StrandId::Inter(index(parts[0])?, index(parts[1])?));
            }
        }
        Err(invalid(format!(
            "unknown strand `{s}` (expected intra:M, inter:M:N or combined)"
        )))
    }
}

/// Minimal interface the mean-field solver needs from a degree law.
pub trait DegreeDistribution {
    fn strand(&self) -> Option<StrandId> {
        None
    }
    fn mean(&self) -> f64;
    fn second_moment(&self) -> f64;
    fn pmf(&self, k: u64) -> f64;
    /// Largest degree kept in truncated series.
    fn k_max(&self) -> u64;

    fn pmf_table(&self) -> Vec<f64> {
        (0..=self.k_max()).map(|k| self.pmf(k)).collect()
    }
}

/// One mixture component: a Poisson law with the given mean, taken with the given weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonComponent {
    pub weight: f64,
    pub mean: f64,
}

/// Poisson-mixture degree law of one strand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeModel {
    pub strand: StrandId,
    components: Vec<PoissonComponent>,
}

impl DegreeModel {
    pub fn from_components(strand: StrandId, components: Vec<PoissonComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("a degree model needs at least one component"));
        }
        let mut total = 0.0;
        for c in &components {
            if !(c.weight >= 0.0 && c.weight.is_finite()) || !(c.mean >= 0.0 && c.mean.is_finite())
            {
                return Err(invalid(format!("bad mixture component {c:?}")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("mixture weights sum to {total}")));
        }
        Ok(DegreeModel { strand, components })
    }

    pub fn poisson(strand: StrandId, mean: f64) -> Result<Self> {
        Self::from_components(strand, vec![PoissonComponent { weight: 1.0, mean }])
    }

    pub fn components(&self) -> &[PoissonComponent] {
        &self.components
    }

    /// `(E[K], E[K²])`, exact.
    pub fn moments(&self) -> (f64, f64) {
        (self.mean(), self.second_moment())
    }

    /// Checked pmf for external (signed) input.
    pub fn try_pmf(&self, k: i64) -> Result<f64> {
        if k < 0 {
            return Err(invalid(format!("degree k = {k} is negative")));
        }
        Ok(self.pmf(k as u64))
    }

    fn max_component_mean(&self) -> f64 {
        self.components.iter().map(|c| c.mean).fold(0.0, f64::max)
    }
}

impl DegreeDistribution for DegreeModel {
    fn strand(&self) -> Option<StrandId> {
        Some(self.strand)
    }

    fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    fn second_moment(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * (c.mean + c.mean * c.mean))
            .sum()
    }

    fn pmf(&self, k: u64) -> f64 {
        let lf = ln_factorial(k);
        self.components
            .iter()
            .map(|c| c.weight * poisson_pmf_ln(c.mean, k, lf))
            .sum()
    }

    fn k_max(&self) -> u64 {
        truncation_point(self.max_component_mean())
    }

    fn pmf_table(&self) -> Vec<f64> {
        let kmax = self.k_max() as usize;
        let mut table = vec![0.0; kmax + 1];
        for c in &self.components {
            for (slot, p) in table.iter_mut().zip(poisson_table(c.mean, kmax)) {
                *slot += c.weight * p;
            }
        }
        table
    }
}

/// Degenerate law concentrated on a single degree. Useful for checks where
/// `E[K²] = E[K]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass(pub u64);

impl DegreeDistribution for PointMass {
    fn mean(&self) -> f64 {
        self.0 as f64
    }
    fn second_moment(&self) -> f64 {
        (self.0 * self.0) as f64
    }
    fn pmf(&self, k: u64) -> f64 {
        if k == self.0 {
            1.0
        } else {
            0.0
        }
    }
    fn k_max(&self) -> u64 {
        self.0
    }
}

/// `ceil(μ + 12√μ + 20)`: the Poisson(μ) mass beyond it is below [`TAIL_MASS`].
pub fn truncation_point(mu: f64) -> u64 {
    (mu + 12.0 * mu.sqrt() + 20.0).ceil() as u64
}

/// `ln k!`: exact product up to 170, Stirling series beyond.
fn ln_factorial(k: u64) -> f64 {
    if k <= 170 {
        return (2..=k).map(|i| i as f64).product::<f64>().ln();
    }
    let n = k as f64;
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    n * n.ln() - n + 0.5 * (2.0 * PI * n).ln() + inv / 12.0 - inv * inv2 / 360.0
        + inv * inv2 * inv2 / 1260.0
}

fn poisson_pmf_ln(mu: f64, k: u64, ln_k_factorial: f64) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (-mu + k as f64 * mu.ln() - ln_k_factorial).exp()
}

/// Poisson(μ) probabilities for `k = 0..=kmax`, built by the ratio
/// recurrence outward from the mode and normalized over the range (the
/// mass beyond `kmax` is far below double precision).
fn poisson_table(mu: f64, kmax: usize) -> Vec<f64> {
    let mut table = vec![0.0; kmax + 1];
    if mu == 0.0 {
        table[0] = 1.0;
        return table;
    }
    let mode = (mu.floor() as usize).min(kmax);
    table[mode] = 1.0;
    for k in (0..mode).rev() {
        table[k] = table[k + 1] * (k + 1) as f64 / mu;
    }
    for k in mode + 1..=kmax {
        table[k] = table[k - 1] * mu / k as f64;
    }
    let total: f64 = table.iter().sum();
    table.iter_mut().for_each(|p| *p /= total);
    table
}

/// Same-layer neighbors within the layer's own range.
pub fn intra_model(layer: &LayerSpec) -> DegreeModel {
    intra_model_for(0, layer)
}

pub(crate) fn intra_model_for(m: usize, layer: &LayerSpec) -> DegreeModel {
    DegreeModel {
        strand: StrandId::Intra(m),
        components: vec![PoissonComponent {
            weight: 1.0,
            mean: layer.disk_mean(),
        }],
    }
}

/// Devices of either layer within the range of the *first* layer.
pub fn inter_model(layer_m: &LayerSpec, layer_n: &LayerSpec) -> DegreeModel {
    inter_model_for(0, 1, layer_m, layer_n)
}

pub(crate) fn inter_model_for(m: usize, n: usize, a: &LayerSpec, b: &LayerSpec) -> DegreeModel {
    let mean = (a.density + b.density) * PI * a.range_km * a.range_km;
    DegreeModel {
        strand: StrandId::Inter(m, n),
        components: vec![PoissonComponent { weight: 1.0, mean }],
    }
}

/// Degree of a typical device of unknown type: the device is of type `m`
/// with probability `λ_m/Λ` and then sees `Poisson(Λπr_m²)` neighbors.
pub fn combined_model(layers: &[LayerSpec]) -> Result<DegreeModel> {
    let total: f64 = layers.iter().map(|l| l.density).sum();
    if layers.is_empty() || total <= 0.0 {
        return Err(invalid(
            "combined degree needs at least one layer with positive density",
        ));
    }
    let components = layers
        .iter()
        .map(|l| PoissonComponent {
            weight: l.density / total,
            mean: total * PI * l.range_km * l.range_km,
        })
        .collect();
    Ok(DegreeModel {
        strand: StrandId::Combined,
        components,
    })
}

/// Degree law of any strand of the given network.
pub fn strand_model(layers: &[LayerSpec], strand: StrandId) -> Result<DegreeModel> {
    strand.check(layers.len())?;
    Ok(match strand {
        StrandId::Intra(m) => intra_model_for(m, &layers[m]),
        StrandId::Inter(m, n) => inter_model_for(m, n, &layers[m], &layers[n]),
        StrandId::Combined => combined_model(layers)?,
    })
}
