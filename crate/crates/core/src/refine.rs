//! Region growing: connected components of SOM labels, dissolution of
//! undersized regions, then greedy Ward-linkage merges of adjacent regions
//! until the requested count is reached.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_grid::{haversine_km, AdjacencyIndex, BoundingBox, GeoPoint, GridRaster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Regions smaller than this are dissolved first.
    pub min_size: usize,
    /// Weight of the squared centroid distance (km^2) in the merge cost.
    pub lambda_geo: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            min_size: 4,
            lambda_geo: 0.0,
        }
    }
}

/// Per-cell vectors and locations that region summaries are computed from.
#[derive(Debug, Clone, Copy)]
pub struct CellData<'a> {
    pub vectors: &'a [Vec<f64>],
    pub centroids: &'a [GeoPoint],
}

impl<'a> CellData<'a> {
    pub fn new(vectors: &'a [Vec<f64>], centroids: &'a [GeoPoint]) -> Result<Self> {
        if vectors.len() != centroids.len() {
            return Err(Error::contract("vector and centroid counts differ"));
        }
        Ok(Self { vectors, centroids })
    }

    fn len(&self) -> usize {
        self.vectors.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// Sorted cell ids.
    pub members: Vec<usize>,
    pub mean: Vec<f64>,
    pub size: usize,
    pub centroid: GeoPoint,
}

impl Region {
    fn from_members(members: Vec<usize>, cells: CellData<'_>) -> Self {
        let size = members.len();
        let dim = cells.vectors[members[0]].len();
        let mut mean = vec![0.0; dim];
        let (mut lat, mut lon) = (0.0, 0.0);
        for &m in &members {
            for (acc, v) in mean.iter_mut().zip(&cells.vectors[m]) {
                *acc += v;
            }
            lat += cells.centroids[m].lat;
            lon += cells.centroids[m].lon;
        }
        let n = size as f64;
        mean.iter_mut().for_each(|v| *v /= n);
        Region {
            members,
            mean,
            size,
            centroid: GeoPoint { lat: lat / n, lon: lon / n },
        }
    }

    fn first_cell(&self) -> usize {
        self.members[0]
    }
}

/// Assignment of every cell to a region, ids dense and ordered by each
/// region's first (lowest) member cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub labels: Vec<usize>,
    pub regions: Vec<Region>,
}

impl RegionPartition {
    /// Builds a partition from arbitrary labels, renumbering densely by
    /// first member. Label values only need to be distinct per region.
    pub fn from_labels(labels: &[usize], cells: CellData<'_>) -> Result<Self> {
        if labels.len() != cells.len() {
            return Err(Error::contract(format!(
                "{} labels for {} cells",
                labels.len(),
                cells.len()
            )));
        }
        let dense = renumber_by_first_member(labels);
        let k = dense.iter().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); k];
        for (cell, &r) in dense.iter().enumerate() {
            members[r].push(cell);
        }
        let regions = members.into_iter().map(|m| Region::from_members(m, cells)).collect();
        Ok(Self { labels: dense, regions })
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    /// Checks coverage, dense numbering, contiguity and summary values.
    pub fn validate(&self, adjacency: &AdjacencyIndex, cells: CellData<'_>) -> Result<()> {
        if self.labels.len() != cells.len() || adjacency.len() != cells.len() {
            return Err(Error::contract("partition does not cover the cells"));
        }
        let mut total = 0;
        for (id, r) in self.regions.iter().enumerate() {
            if r.members.is_empty() || r.members.len() != r.size {
                return Err(Error::contract(format!("region {id} has inconsistent size")));
            }
            if r.members.iter().any(|&m| self.labels[m] != id) {
                return Err(Error::contract(format!("region {id} members disagree with labels")));
            }
            if id > 0 && self.regions[id - 1].first_cell() >= r.first_cell() {
                return Err(Error::contract("region ids are not ordered by first member"));
            }
            if !is_connected(&r.members, adjacency) {
                return Err(Error::contract(format!("region {id} is not connected")));
            }
            let fresh = Region::from_members(r.members.clone(), cells);
            if fresh.mean.iter().zip(&r.mean).any(|(a, b)| (a - b).abs() > 1e-9) {
                return Err(Error::contract(format!("region {id} mean is stale")));
            }
            total += r.size;
        }
        if total != cells.len() {
            return Err(Error::contract("regions do not partition the cells"));
        }
        Ok(())
    }
}

/// Maps labels to `0..k` in order of each label's first occurrence.
pub fn renumber_by_first_member(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Whether `members` (sorted) induce a connected subgraph.
pub fn is_connected(members: &[usize], adjacency: &AdjacencyIndex) -> bool {
    if members.is_empty() {
        return false;
    }
    let mut seen = BTreeSet::from([members[0]]);
    let mut stack = vec![members[0]];
    while let Some(i) = stack.pop() {
        for &j in adjacency.neighbors(i) {
            if members.binary_search(&j).is_ok() && seen.insert(j) {
                stack.push(j);
            }
        }
    }
    seen.len() == members.len()
}

/// Connected components of equal-label cells.
pub fn initial_regions(labels: &[usize], adjacency: &AdjacencyIndex, cells: CellData<'_>) -> Result<RegionPartition> {
    if labels.len() != adjacency.len() {
        return Err(Error::contract(format!(
            "{} labels for {} cells",
            labels.len(),
            adjacency.len()
        )));
    }
    let (components, _) = adjacency.components_where(|i, j| labels[i] == labels[j]);
    RegionPartition::from_labels(&components, cells)
}

/// Ward linkage plus an optional centroid-distance penalty.
pub fn merge_cost(a: &Region, b: &Region, lambda_geo: f64) -> f64 {
    let (na, nb) = (a.size as f64, b.size as f64);
    let d2: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let mut cost = na * nb / (na + nb) * d2;
    if lambda_geo != 0.0 {
        cost += lambda_geo * haversine_km(a.centroid, b.centroid).powi(2);
    }
    cost
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    /// Smaller of the two merged region ids, numbered before the merge.
    pub a: usize,
    pub b: usize,
    pub cost: f64,
    /// Id of the merged region after renumbering.
    pub result: usize,
    /// True for merges made while dissolving undersized regions.
    pub dissolution: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeTrace {
    pub initial_count: usize,
    pub final_count: usize,
    pub events: Vec<MergeEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Mutable working state. Regions are keyed by their first member cell,
/// which orders them exactly as dense ids do.
struct Grower<'a> {
    cells: CellData<'a>,
    lambda_geo: f64,
    regions: BTreeMap<usize, Region>,
    neighbors: BTreeMap<usize, BTreeSet<usize>>,
    queue: BTreeSet<(Cost, usize, usize)>,
    pair_cost: BTreeMap<(usize, usize), f64>,
}

impl<'a> Grower<'a> {
    fn new(partition: &RegionPartition, adjacency: &AdjacencyIndex, cells: CellData<'a>, lambda_geo: f64) -> Self {
        let keys: Vec<usize> = partition.regions.iter().map(Region::first_cell).collect();
        let regions: BTreeMap<usize, Region> = partition
            .regions
            .iter()
            .map(|r| (r.first_cell(), Region::from_members(r.members.clone(), cells)))
            .collect();
        let mut neighbors: BTreeMap<usize, BTreeSet<usize>> = keys.iter().map(|&k| (k, BTreeSet::new())).collect();
        for (i, &ri) in partition.labels.iter().enumerate() {
            for &j in adjacency.neighbors(i) {
                let rj = partition.labels[j];
                if ri != rj {
                    neighbors.get_mut(&keys[ri]).unwrap().insert(keys[rj]);
                }
            }
        }
        let mut g = Grower {
            cells,
            lambda_geo,
            regions,
            neighbors,
            queue: BTreeSet::new(),
            pair_cost: BTreeMap::new(),
        };
        let pairs: Vec<(usize, usize)> = g
            .neighbors
            .iter()
            .flat_map(|(&a, ns)| ns.range(a + 1..).map(move |&b| (a, b)))
            .collect();
        for (a, b) in pairs {
            g.push_pair(a, b);
        }
        g
    }

    fn count(&self) -> usize {
        self.regions.len()
    }

    fn cost(&self, a: usize, b: usize) -> f64 {
        merge_cost(&self.regions[&a], &self.regions[&b], self.lambda_geo)
    }

    fn push_pair(&mut self, a: usize, b: usize) {
        let (a, b) = (a.min(b), a.max(b));
        let c = self.cost(a, b);
        self.queue.insert((Cost(c), a, b));
        self.pair_cost.insert((a, b), c);
    }

    fn drop_pair(&mut self, a: usize, b: usize) {
        let (a, b) = (a.min(b), a.max(b));
        if let Some(c) = self.pair_cost.remove(&(a, b)) {
            self.queue.remove(&(Cost(c), a, b));
        }
    }

    fn dense_id(&self, key: usize) -> usize {
        self.regions.range(..key).count()
    }

    /// Smallest undersized region that has a neighbor to merge into.
    fn smallest_undersized(&self, min_size: usize) -> Option<usize> {
        self.regions
            .iter()
            .filter(|(k, r)| r.size < min_size && !self.neighbors[k].is_empty())
            .min_by_key(|(k, r)| (r.size, **k))
            .map(|(k, _)| *k)
    }

    fn cheapest_neighbor(&self, key: usize) -> usize {
        let mut best: Option<(f64, usize)> = None;
        for &n in &self.neighbors[&key] {
            let (a, b) = (key.min(n), key.max(n));
            let c = self.pair_cost[&(a, b)];
            if best.is_none_or(|(bc, _)| c < bc) {
                best = Some((c, n));
            }
        }
        best.expect("region has a neighbor").1
    }

    fn merge(&mut self, a: usize, b: usize, dissolution: bool) -> MergeEvent {
        let (a, b) = (a.min(b), a.max(b));
        let cost = self.pair_cost[&(a, b)];
        let event_a = self.dense_id(a);
        let event_b = self.dense_id(b);

        let na = self.neighbors.remove(&a).unwrap();
        let nb = self.neighbors.remove(&b).unwrap();
        for &n in na.iter().chain(&nb) {
            self.drop_pair(a, n);
            self.drop_pair(b, n);
        }
        let ra = self.regions.remove(&a).unwrap();
        let rb = self.regions.remove(&b).unwrap();
        let mut members = ra.members;
        members.extend(rb.members);
        members.sort_unstable();
        self.regions.insert(a, Region::from_members(members, self.cells));

        let merged: BTreeSet<usize> = na.union(&nb).copied().filter(|&n| n != a && n != b).collect();
        for &n in &merged {
            let set = self.neighbors.get_mut(&n).unwrap();
            set.remove(&b);
            set.insert(a);
        }
        self.neighbors.insert(a, merged.clone());
        for n in merged {
            self.push_pair(a, n);
        }
        MergeEvent {
            a: event_a,
            b: event_b,
            cost,
            result: self.dense_id(a),
            dissolution,
        }
    }

    fn into_partition(self) -> RegionPartition {
        let mut labels = vec![0; self.cells.len()];
        let regions: Vec<Region> = self.regions.into_values().collect();
        for (id, r) in regions.iter().enumerate() {
            for &m in &r.members {
                labels[m] = id;
            }
        }
        RegionPartition { labels, regions }
    }
}

/// Merges adjacent regions until exactly `k` remain.
///
/// Undersized regions (fewer than `min_size` cells) are dissolved first,
/// smallest first, each into its cheapest neighbor. Then the globally
/// cheapest adjacent pair is merged repeatedly. Ties go to the lowest ids.
pub fn grow_to_k(
    partition: &RegionPartition,
    adjacency: &AdjacencyIndex,
    cells: CellData<'_>,
    k: usize,
    config: &RefineConfig,
) -> Result<(RegionPartition, MergeTrace)> {
    let initial = partition.region_count();
    if k == 0 || k > initial {
        return Err(Error::contract(format!(
            "k = {k} must be between 1 and the current region count {initial}"
        )));
    }
    let components = adjacency.component_count();
    if k < components {
        return Err(Error::Infeasible(format!(
            "k = {k} is below the {components} disconnected parts of the grid"
        )));
    }
    let mut g = Grower::new(partition, adjacency, cells, config.lambda_geo);
    let mut events = Vec::with_capacity(initial - k);
    while g.count() > k {
        let Some(small) = g.smallest_undersized(config.min_size) else { break };
        let target = g.cheapest_neighbor(small);
        events.push(g.merge(small, target, true));
        debug_assert!(is_connected(&g.regions[&small.min(target)].members, adjacency));
    }
    while g.count() > k {
        let Some(&(_, a, b)) = g.queue.first() else {
            return Err(Error::Infeasible(format!("no adjacent regions left at count {}", g.count())));
        };
        events.push(g.merge(a, b, false));
        debug_assert!(is_connected(&g.regions[&a].members, adjacency));
    }
    let out = g.into_partition();
    let trace = MergeTrace {
        initial_count: initial,
        final_count: out.region_count(),
        events,
    };
    Ok((out, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region_id: usize,
    pub size: usize,
    /// Mean of the raw (not standardized) features, in `feature_names` order.
    pub feature_means: Vec<f64>,
    pub feature_names: Vec<String>,
    pub centroid: GeoPoint,
    pub bbox: BoundingBox,
}

/// Per-region size, raw feature means, centroid and bounding box.
/// `raw` must be the unstandardized grid the partition was computed on.
pub fn region_summaries(partition: &RegionPartition, raw: &GridRaster) -> Result<Vec<RegionSummary>> {
    if partition.labels.len() != raw.n_active() {
        return Err(Error::contract("partition and grid cell counts differ"));
    }
    let centroids = raw.centroids();
    let cells = CellData::new(raw.features(), &centroids)?;
    Ok(partition
        .regions
        .iter()
        .enumerate()
        .map(|(id, r)| {
            let fresh = Region::from_members(r.members.clone(), cells);
            RegionSummary {
                region_id: id,
                size: r.size,
                feature_means: fresh.mean,
                feature_names: raw.feature_names().to_vec(),
                centroid: fresh.centroid,
                bbox: BoundingBox::around(r.members.iter().map(|&m| centroids[m])).expect("nonempty region"),
            }
        })
        .collect())
}
