//! Multi-layer Poisson deployments in a finite window and the random
//! geometric graph they induce.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::degree::{DegreeDistribution, StrandId};
use crate::error::{invalid, Result};

/// Rectangular observation window in km. With `wraparound` the window is a
/// torus and distances are measured along the shorter way round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub width: f64,
    pub height: f64,
    pub wraparound: bool,
}

impl Window {
    pub fn new(width: f64, height: f64, wraparound: bool) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(invalid(format!(
                "window {width} x {height} km must have positive size"
            )));
        }
        Ok(Window {
            width,
            height,
            wraparound,
        })
    }

    /// Torus with the given side length.
    pub fn torus(side: f64) -> Result<Self> {
        Self::new(side, side, true)
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        (0.0..self.width).contains(&x) && (0.0..self.height).contains(&y)
    }

    pub fn distance(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let mut dx = (a.0 - b.0).abs();
        let mut dy = (a.1 - b.1).abs();
        if self.wraparound {
            dx = dx.min(self.width - dx);
            dy = dy.min(self.height - dy);
        }
        dx.hypot(dy)
    }
}

/// Realization of one layer's point process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub layer: usize,
    pub points: Vec<(f64, f64)>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Deterministic generator for `(seed, layer)`: the layer selects an
/// independent ChaCha stream.
pub fn layer_rng(seed: u64, layer: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(layer as u64);
    rng
}

/// Homogeneous PPP of the given intensity (per km²) in `window`.
pub fn sample_ppp(intensity: f64, window: &Window, seed: u64) -> Result<PointSet> {
    sample_layer(0, intensity, window, seed)
}

/// As [`sample_ppp`] but drawing from the stream of layer `layer`.
pub fn sample_layer(layer: usize, intensity: f64, window: &Window, seed: u64) -> Result<PointSet> {
    if !(intensity >= 0.0 && intensity.is_finite()) {
        return Err(invalid(format!(
            "intensity {intensity} must be finite and non-negative"
        )));
    }
    let mut rng = layer_rng(seed, layer);
    let expected = intensity * window.area();
    let count = if expected > 0.0 {
        Poisson::new(expected)
            .map_err(|e| invalid(format!("poisson mean {expected}: {e}")))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    let points = (0..count)
        .map(|_| {
            (
                rng.gen::<f64>() * window.width,
                rng.gen::<f64>() * window.height,
            )
        })
        .collect();
    Ok(PointSet { layer, points })
}

/// One independent layer per intensity.
pub fn sample_network(intensities: &[f64], window: &Window, seed: u64) -> Result<Vec<PointSet>> {
    intensities
        .iter()
        .enumerate()
        .map(|(m, &l)| sample_layer(m, l, window, seed))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Global node index.
    pub node: u32,
    pub dist: f64,
}

/// Multi-layer random geometric graph with reciprocal links: two nodes are
/// linked when their distance is within the range of either endpoint.
#[derive(Debug, Clone)]
pub struct MultiLayerGraph {
    window: Window,
    ranges: Vec<f64>,
    layers: Vec<PointSet>,
    /// `offsets[m]` is the global index of the first node of layer `m`;
    /// the final entry is the node count.
    offsets: Vec<usize>,
    adjacency: Vec<Vec<Neighbor>>,
}

/// How a link came about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkRule {
    /// Both endpoints reach each other.
    Both,
    /// Only the first endpoint's range covers the distance.
    First,
    Second,
}

impl MultiLayerGraph {
    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn layers(&self) -> &[PointSet] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn node_count(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn layer_len(&self, m: usize) -> usize {
        self.offsets[m + 1] - self.offsets[m]
    }

    pub fn layer_nodes(&self, m: usize) -> std::ops::Range<usize> {
        self.offsets[m]..self.offsets[m + 1]
    }

    pub fn global_index(&self, layer: usize, index: usize) -> usize {
        self.offsets[layer] + index
    }

    /// `(layer, index within layer)` of a global node.
    pub fn locate(&self, node: usize) -> (usize, usize) {
        let m = self.offsets.partition_point(|&o| o <= node) - 1;
        (m, node - self.offsets[m])
    }

    pub fn layer_of(&self, node: usize) -> usize {
        self.locate(node).0
    }

    pub fn neighbors(&self, node: usize) -> &[Neighbor] {
        &self.adjacency[node]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Which range(s) justify the link between nodes `a` and `b`, if any.
    pub fn link_rule(&self, a: usize, b: usize) -> Option<LinkRule> {
        let d = self.adjacency[a]
            .iter()
            .find(|n| n.node as usize == b)?
            .dist;
        let ra = self.ranges[self.layer_of(a)];
        let rb = self.ranges[self.layer_of(b)];
        Some(match (d <= ra, d <= rb) {
            (true, true) => LinkRule::Both,
            (true, false) => LinkRule::First,
            _ => LinkRule::Second,
        })
    }

    /// Points as CSV `layer,x_km,y_km` (layers 1-based).
    pub fn write_points_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "layer,x_km,y_km")?;
        for set in &self.layers {
            for (x, y) in &set.points {
                writeln!(out, "{},{},{}", set.layer + 1, x, y)?;
            }
        }
        Ok(())
    }

    /// Undirected edges once each as CSV `layer_a,idx_a,layer_b,idx_b`
    /// (layers 1-based, indices 0-based within the layer).
    pub fn write_edges_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "layer_a,idx_a,layer_b,idx_b")?;
        for a in 0..self.node_count() {
            let (la, ia) = self.locate(a);
            for nb in &self.adjacency[a] {
                let b = nb.node as usize;
                if b > a {
                    let (lb, ib) = self.locate(b);
                    writeln!(out, "{},{},{},{}", la + 1, ia, lb + 1, ib)?;
                }
            }
        }
        Ok(())
    }
}

/// Links every pair of nodes whose distance is within either endpoint's range.
///
/// Neighbor search buckets nodes into a uniform grid with cell side at least
/// the largest range.
pub fn build_graph(
    point_sets: &[PointSet],
    ranges: &[f64],
    window: &Window,
) -> Result<MultiLayerGraph> {
    if point_sets.len() != ranges.len() {
        return Err(invalid(format!(
            "{} point sets but {} ranges",
            point_sets.len(),
            ranges.len()
        )));
    }
    if let Some(r) = ranges.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(invalid(format!(
            "range {r} must be finite and non-negative"
        )));
    }
    let mut offsets = Vec::with_capacity(point_sets.len() + 1);
    let mut coords = Vec::new();
    let mut node_range = Vec::new();
    offsets.push(0);
    for (m, set) in point_sets.iter().enumerate() {
        if let Some(p) = set.points.iter().find(|p| !window.contains(**p)) {
            return Err(invalid(format!(
                "point {p:?} of layer {} lies outside the window",
                m + 1
            )));
        }
        coords.extend_from_slice(&set.points);
        node_range.extend(std::iter::repeat(ranges[m]).take(set.len()));
        offsets.push(coords.len());
    }
    let n = coords.len();
    let mut layers = point_sets.to_vec();
    for (m, set) in layers.iter_mut().enumerate() {
        set.layer = m;
    }

    let r_max = ranges.iter().copied().fold(0.0, f64::max);
    let cell = if r_max > 0.0 {
        r_max
    } else {
        window.width.max(window.height)
    };
    let nx = ((window.width / cell).floor() as usize).max(1);
    let ny = ((window.height / cell).floor() as usize).max(1);
    let (cw, ch) = (window.width / nx as f64, window.height / ny as f64);
    let cell_of = |(x, y): (f64, f64)| -> (usize, usize) {
        (
            ((x / cw) as usize).min(nx - 1),
            ((y / ch) as usize).min(ny - 1),
        )
    };

    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); nx * ny];
    for (i, &p) in coords.iter().enumerate() {
        let (cx, cy) = cell_of(p);
        buckets[cy * nx + cx].push(i as u32);
    }

    let mut adjacency: Vec<Vec<Neighbor>> = vec![Vec::new(); n];
    let mut cells = Vec::with_capacity(9);
    for cy in 0..ny {
        for cx in 0..nx {
            neighbor_cells(cx, cy, nx, ny, window.wraparound, &mut cells);
            for &i in &buckets[cy * nx + cx] {
                let pi = coords[i as usize];
                let ri = node_range[i as usize];
                for &c in &cells {
                    for &j in &buckets[c] {
                        if j <= i {
                            continue;
                        }
                        let d = window.distance(pi, coords[j as usize]);
                        if d <= ri || d <= node_range[j as usize] {
                            adjacency[i as usize].push(Neighbor { node: j, dist: d });
                            adjacency[j as usize].push(Neighbor { node: i, dist: d });
                        }
                    }
                }
            }
        }
    }
    for list in &mut adjacency {
        list.sort_by_key(|nb| nb.node);
    }

    Ok(MultiLayerGraph {
        window: *window,
        ranges: ranges.to_vec(),
        layers,
        offsets,
        adjacency,
    })
}

fn neighbor_cells(cx: usize, cy: usize, nx: usize, ny: usize, wrap: bool, out: &mut Vec<usize>) {
    out.clear();
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let (x, y) = (cx as i64 + dx, cy as i64 + dy);
            let (x, y) = if wrap {
                (x.rem_euclid(nx as i64), y.rem_euclid(ny as i64))
            } else if x < 0 || y < 0 || x >= nx as i64 || y >= ny as i64 {
                continue;
            } else {
                (x, y)
            };
            out.push(y as usize * nx + x as usize);
        }
    }
    out.sort_unstable();
    out.dedup();
}

/// Counts of nodes by degree for one strand.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DegreeHistogram {
    pub counts: Vec<u64>,
}

impl DegreeHistogram {
    /// Adds another sample's counts (e.g. an independent realization).
    pub fn merge(&mut self, other: &DegreeHistogram) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let s: u64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(k, c)| k as u64 * c)
            .sum();
        s as f64 / total as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let total = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Total-variation distance to an analytic law; mass beyond the
    /// compared range counts in full.
    pub fn total_variation<D: DegreeDistribution + ?Sized>(&self, law: &D) -> f64 {
        let freq = self.frequencies();
        let kmax = (law.k_max() as usize).max(freq.len().saturating_sub(1));
        let mut covered = 0.0;
        let mut tv = 0.0;
        for k in 0..=kmax {
            let p = law.pmf(k as u64);
            covered += p;
            tv += (freq.get(k).copied().unwrap_or(0.0) - p).abs();
        }
        0.5 * (tv + (1.0 - covered).max(0.0))
    }
}

/// Empirical degree counts of one strand, measured by distance:
/// - `Intra(m)`: layer-`m` nodes, same-layer neighbors within `r_m`;
/// - `Inter(m, n)`: layer-`m` nodes, neighbors from layers `m` or `n` within `r_m`;
/// - `Combined`: all nodes, all neighbors within the node's own range.
pub fn empirical_degree_histogram(
    graph: &MultiLayerGraph,
    strand: StrandId,
) -> Result<DegreeHistogram> {
    strand.check(graph.layer_count())?;
    let mut counts: Vec<u64> = Vec::new();
    let mut bump = |k: usize| {
        if counts.len() <= k {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    };
    match strand {
        StrandId::Intra(m) => {
            let r = graph.ranges[m];
            for node in graph.layer_nodes(m) {
                let k = graph.adjacency[node]
                    .iter()
                    .filter(|nb| nb.dist <= r && graph.layer_of(nb.node as usize) == m)
                    .count();
                bump(k);
            }
        }
        StrandId::Inter(m, n) => {
            let r = graph.ranges[m];
            for node in graph.layer_nodes(m) {
                let k = graph.adjacency[node]
                    .iter()
                    .filter(|nb| {
                        let l = graph.layer_of(nb.node as usize);
                        nb.dist <= r && (l == m || l == n)
                    })
                    .count();
                bump(k);
            }
        }
        StrandId::Combined => {
            for node in 0..graph.node_count() {
                let r = graph.ranges[graph.layer_of(node)];
                let k = graph.adjacency[node]
                    .iter()
                    .filter(|nb| nb.dist <= r)
                    .count();
                bump(k);
            }
        }
    }
    if counts.is_empty() {
        counts.push(0);
    }
    Ok(DegreeHistogram { counts })
}
