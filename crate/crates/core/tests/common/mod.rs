//! Test helpers: random inputs and slow, obviously-correct reference
//! implementations that the library results are compared against.
#![allow(dead_code)]

use georegion::geo_grid::GeoPoint;
use georegion::{haversine_km, GridRaster};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random grid of up to `max_side`² cells near Jacksonville, with roughly
/// `holes` of the cells masked out (at least one stays active).
pub fn random_grid(rng: &mut ChaCha8Rng, max_side: usize, features: usize, holes: f64) -> GridRaster {
    let rows = rng.random_range(1..=max_side);
    let cols = rng.random_range(1..=max_side);
    let mut mask: Vec<bool> = (0..rows * cols).map(|_| !rng.random_bool(holes)).collect();
    if !mask.iter().any(|&m| m) {
        mask[rng.random_range(0..rows * cols)] = true;
    }
    let active = mask.iter().filter(|&&m| m).count();
    let values = (0..active)
        .map(|_| (0..features).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let names = (0..features).map(|f| format!("f{f}")).collect();
    let origin = GeoPoint {
        lat: rng.random_range(29.0..31.0),
        lon: rng.random_range(-82.5..-81.0),
    };
    let cell = rng.random_range(0.005..0.05);
    GridRaster::new(rows, cols, origin, cell, mask, names, values).unwrap()
}

/// Rook neighbors derived straight from row/column positions.
pub fn rook_neighbors(grid: &GridRaster) -> Vec<Vec<usize>> {
    (0..grid.n_active())
        .map(|id| {
            let (r, c) = grid.cell_position(id);
            let mut out = Vec::new();
            let probes = [
                (r.wrapping_sub(1), c),
                (r + 1, c),
                (r, c.wrapping_sub(1)),
                (r, c + 1),
            ];
            for (pr, pc) in probes {
                if pr < grid.rows() && pc < grid.cols() {
                    if let Some(j) = grid.cell_id(pr, pc) {
                        out.push(j);
                    }
                }
            }
            out
        })
        .collect()
}

/// Flood fill of equal-label cells; components numbered by first cell.
pub fn flood_fill(labels: &[usize], neighbors: &[Vec<usize>]) -> Vec<usize> {
    let mut comp = vec![usize::MAX; labels.len()];
    let mut next = 0;
    for start in 0..labels.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = next;
        while let Some(i) = stack.pop() {
            for &j in &neighbors[i] {
                if comp[j] == usize::MAX && labels[j] == labels[i] {
                    comp[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    comp
}

pub fn count_distinct(labels: &[usize]) -> usize {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Sum of squared deviations from each group's mean.
pub fn sse(labels: &[usize], x: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut groups = labels.to_vec();
    groups.sort_unstable();
    groups.dedup();
    for g in groups {
        let rows: Vec<&Vec<f64>> = x.iter().zip(labels).filter(|(_, &l)| l == g).map(|(r, _)| r).collect();
        let dim = rows[0].len();
        for f in 0..dim {
            let mean = rows.iter().map(|r| r[f]).sum::<f64>() / rows.len() as f64;
            total += rows.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>();
        }
    }
    total
}

pub struct BruteVariogram {
    pub edges: Vec<f64>,
    pub gamma: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Double loop over ordered pairs, bins located by linear search.
pub fn brute_semivariogram(values: &[f64], pts: &[GeoPoint], bins: usize) -> BruteVariogram {
    let n = values.len();
    let mut max_d: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            max_d = max_d.max(haversine_km(pts[i], pts[j]));
        }
    }
    let h_max = max_d / 2.0;
    let edges: Vec<f64> = (0..=bins).map(|i| h_max * i as f64 / bins as f64).collect();
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0u64; bins];
    for i in 0..n {
        for j in 0..n {
            if i >= j {
                continue;
            }
            let d = haversine_km(pts[i], pts[j]);
            let found = (0..bins).find(|&b| {
                if b == bins - 1 {
                    d >= edges[b] && d <= edges[b + 1]
                } else {
                    d >= edges[b] && d < edges[b + 1]
                }
            });
            if let Some(b) = found {
                sums[b] += (values[i] - values[j]).powi(2);
                counts[b] += 1;
            }
        }
    }
    let gamma = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / (2.0 * c as f64) })
        .collect();
    BruteVariogram { edges, gamma, counts }
}

/// Two-stage BMU by exhaustive search: anchors within the threshold,
/// then the latent nearest (lowest index on ties); geographic nearest as
/// a flagged fallback.
pub fn brute_bmu(anchors: &[GeoPoint], weights: &[Vec<f64>], threshold: f64, z: &[f64], p: GeoPoint) -> (usize, bool) {
    let dist2 = |w: &Vec<f64>| w.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let candidates: Vec<usize> = (0..anchors.len()).filter(|&j| haversine_km(anchors[j], p) <= threshold).collect();
    if candidates.is_empty() {
        let mut best = 0;
        for j in 1..anchors.len() {
            if haversine_km(anchors[j], p) < haversine_km(anchors[best], p) {
                best = j;
            }
        }
        return (best, true);
    }
    let mut best = candidates[0];
    for &j in &candidates[1..] {
        if dist2(&weights[j]) < dist2(&weights[best]) {
            best = j;
        }
    }
    (best, false)
}

/// One greedy step as the reference sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMerge {
    pub a: usize,
    pub b: usize,
    pub cost: f64,
    pub dissolution: bool,
}

/// Greedy merging recomputed from scratch at every step: regions are
/// re-derived from labels, costs from member vectors, adjacency from
/// cell neighbors.
pub fn greedy_oracle(
    mut labels: Vec<usize>,
    vectors: &[Vec<f64>],
    neighbors: &[Vec<usize>],
    k: usize,
    min_size: usize,
) -> (Vec<OracleMerge>, Vec<usize>) {
    let mut events = Vec::new();
    loop {
        labels = dense_by_first(&labels);
        let count = count_distinct(&labels);
        if count <= k {
            return (events, labels);
        }
        let members: Vec<Vec<usize>> = (0..count)
            .map(|r| (0..labels.len()).filter(|&i| labels[i] == r).collect())
            .collect();
        let mut pairs = Vec::new();
        for i in 0..labels.len() {
            for &j in &neighbors[i] {
                let (a, b) = (labels[i], labels[j]);
                if a < b {
                    pairs.push((a, b));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let cost = |a: usize, b: usize| {
            let union: Vec<usize> = members[a].iter().chain(&members[b]).copied().collect();
            sse_of(&union, vectors) - sse_of(&members[a], vectors) - sse_of(&members[b], vectors)
        };
        let undersized = (0..count)
            .filter(|&r| members[r].len() < min_size && pairs.iter().any(|&(a, b)| a == r || b == r))
            .min_by_key(|&r| (members[r].len(), r));
        let (a, b, c, dissolution) = if let Some(r) = undersized {
            let mut best: Option<(usize, f64)> = None;
            for &(a, b) in &pairs {
                let other = if a == r { b } else if b == r { a } else { continue };
                let c = cost(a, b);
                let better = match best {
                    None => true,
                    Some((bo, bc)) => c < bc - 1e-12 || ((c - bc).abs() <= 1e-12 && other < bo),
                };
                if better {
                    best = Some((other, c));
                }
            }
            let (o, c) = best.unwrap();
            (r.min(o), r.max(o), c, true)
        } else {
            let mut best: Option<(usize, usize, f64)> = None;
            for &(a, b) in &pairs {
                let c = cost(a, b);
                if best.is_none_or(|(_, _, bc)| c < bc - 1e-12) {
                    best = Some((a, b, c));
                }
            }
            let (a, b, c) = best.unwrap();
            (a, b, c, false)
        };
        events.push(OracleMerge { a, b, cost: c, dissolution });
        for l in labels.iter_mut() {
            if *l == b {
                *l = a;
            }
        }
    }
}

fn sse_of(members: &[usize], vectors: &[Vec<f64>]) -> f64 {
    let dim = vectors[members[0]].len();
    let n = members.len() as f64;
    (0..dim)
        .map(|f| {
            let mean = members.iter().map(|&m| vectors[m][f]).sum::<f64>() / n;
            members.iter().map(|&m| (vectors[m][f] - mean).powi(2)).sum::<f64>()
        })
        .sum()
}

pub fn dense_by_first(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}
