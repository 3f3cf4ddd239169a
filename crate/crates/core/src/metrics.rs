//! Partition quality measures and a random contiguous baseline.

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_grid::{AdjacencyIndex, GridRaster};
use crate::refine::renumber_by_first_member;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionMetrics {
    pub region_count: usize,
    pub within_region_sse: f64,
    pub compactness: Vec<f64>,
    pub mean_compactness: f64,
    pub fragmentation: usize,
}

impl PartitionMetrics {
    /// `labels` must be dense `0..k`; `x` are the vectors SSE is measured on.
    pub fn compute(labels: &[usize], x: &[Vec<f64>], grid: &GridRaster, adjacency: &AdjacencyIndex) -> Result<Self> {
        let compactness = compactness(labels, grid)?;
        let mean_compactness = compactness.iter().sum::<f64>() / compactness.len() as f64;
        Ok(Self {
            region_count: compactness.len(),
            within_region_sse: within_region_sse(labels, x)?,
            compactness,
            mean_compactness,
            fragmentation: fragmentation(labels, adjacency)?,
        })
    }
}

fn region_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

/// Sum over regions of squared distances to the region mean.
pub fn within_region_sse(labels: &[usize], x: &[Vec<f64>]) -> Result<f64> {
    if labels.len() != x.len() {
        return Err(Error::contract(format!("{} labels for {} rows", labels.len(), x.len())));
    }
    let k = region_count(labels);
    let dim = x.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in x.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    Ok(x.iter()
        .zip(labels)
        .map(|(row, &l)| row.iter().zip(&sums[l]).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
        .sum())
}

/// Discrete isoperimetric ratio `16 a / p^2` per region, where `a` is the
/// cell count and `p` the number of cell edges not shared with a cell of
/// the same region. A square block scores 1.
pub fn compactness(labels: &[usize], grid: &GridRaster) -> Result<Vec<f64>> {
    if labels.len() != grid.n_active() {
        return Err(Error::contract("labels do not cover the grid"));
    }
    let k = region_count(labels);
    let mut area = vec![0usize; k];
    let mut perimeter = vec![0usize; k];
    for (id, &l) in labels.iter().enumerate() {
        area[l] += 1;
        let (r, c) = grid.cell_position(id);
        let around = [
            r.checked_sub(1).map(|rr| (rr, c)),
            Some((r + 1, c)),
            c.checked_sub(1).map(|cc| (r, cc)),
            Some((r, c + 1)),
        ];
        for pos in around {
            let same = pos
                .and_then(|(rr, cc)| grid.cell_id(rr, cc))
                .is_some_and(|n| labels[n] == l);
            if !same {
                perimeter[l] += 1;
            }
        }
    }
    Ok(area
        .iter()
        .zip(&perimeter)
        .map(|(&a, &p)| 16.0 * a as f64 / (p * p) as f64)
        .collect())
}

/// Connected equal-label components minus distinct labels.
pub fn fragmentation(labels: &[usize], adjacency: &AdjacencyIndex) -> Result<usize> {
    if labels.len() != adjacency.len() {
        return Err(Error::contract("labels do not cover the adjacency"));
    }
    let (_, components) = adjacency.components_where(|i, j| labels[i] == labels[j]);
    let distinct = labels.iter().collect::<BTreeSet<_>>().len();
    Ok(components - distinct)
}

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index from the pair-counting contingency table.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::contract(format!("label lengths differ: {} vs {}", a.len(), b.len())));
    }
    let n = a.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // both partitions trivial in the same way
        return Ok(if index == max { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Balanced random growth from `k` seeded cells.
///
/// Each step extends the currently smallest region (ties: lowest region
/// id) by its lowest-id unassigned frontier cell. Output labels are dense
/// and ordered by first member.
pub fn random_contiguous_partition(adjacency: &AdjacencyIndex, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = adjacency.len();
    if k == 0 || k > n {
        return Err(Error::contract(format!("k = {k} infeasible for {n} cells")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = rand::seq::index::sample(&mut rng, n, k).into_vec();
    let mut label = vec![usize::MAX; n];
    let mut size = vec![1usize; k];
    let mut frontier: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k];
    for (r, &s) in seeds.iter().enumerate() {
        label[s] = r;
    }
    for (r, &s) in seeds.iter().enumerate() {
        frontier[r].extend(adjacency.neighbors(s).iter().filter(|&&j| label[j] == usize::MAX));
    }
    let mut open: BTreeSet<(usize, usize)> = (0..k).map(|r| (1, r)).collect();
    let mut assigned = k;
    while assigned < n {
        let Some(&(sz, r)) = open.first() else {
            return Err(Error::contract("grid is not connected"));
        };
        let next = loop {
            match frontier[r].pop_first() {
                Some(c) if label[c] == usize::MAX => break Some(c),
                Some(_) => continue,
                None => break None,
            }
        };
        open.remove(&(sz, r));
        let Some(cell) = next else { continue };
        label[cell] = r;
        size[r] += 1;
        assigned += 1;
        frontier[r].extend(adjacency.neighbors(cell).iter().filter(|&&j| label[j] == usize::MAX));
        open.insert((size[r], r));
    }
    Ok(renumber_by_first_member(&label))
}
