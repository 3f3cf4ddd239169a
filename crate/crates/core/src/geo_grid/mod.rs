//! Grid raster data model, great-circle distance, adjacency and I/O.
//!
//! Cells are addressed two ways: by `(row, col)` on the full rectangle, and
//! by *cell id*, the index of an active cell in row-major order. Everything
//! downstream (features, labels, partitions) is indexed by cell id.

mod geojson;
mod ingest;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::geojson::{
    export_regions_geojson, parse_regions_geojson, CellProperties, Feature, FeatureCollection,
    Polygon,
};
pub use self::ingest::{load_grid_csv, parse_grid_csv, GridSchema};

/// IUGG mean Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(Error::Geometry(format!("invalid coordinate ({lat}, {lon})")))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..180.0).contains(&self.lon)
    }
}

/// Great-circle distance in km.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let s = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    // rounding can push s a hair above 1 for antipodes
    2.0 * EARTH_RADIUS_KM * s.clamp(0.0, 1.0).sqrt().asin()
}

/// Axis-aligned lon/lat box, serialized as `[min_lon, min_lat, max_lon, max_lat]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from(v: [f64; 4]) -> Self {
        BoundingBox {
            min_lon: v[0],
            min_lat: v[1],
            max_lon: v[2],
            max_lat: v[3],
        }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.min_lon, b.min_lat, b.max_lon, b.max_lat]
    }
}

impl BoundingBox {
    pub fn around(points: impl IntoIterator<Item = GeoPoint>) -> Option<Self> {
        points.into_iter().fold(None, |acc, p| {
            Some(match acc {
                None => BoundingBox {
                    min_lon: p.lon,
                    min_lat: p.lat,
                    max_lon: p.lon,
                    max_lat: p.lat,
                },
                Some(b) => BoundingBox {
                    min_lon: b.min_lon.min(p.lon),
                    min_lat: b.min_lat.min(p.lat),
                    max_lon: b.max_lon.max(p.lon),
                    max_lat: b.max_lat.max(p.lat),
                },
            })
        })
    }
}

/// Masked rectangular grid with one feature vector per active cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridData", into = "GridData")]
pub struct GridRaster {
    rows: usize,
    cols: usize,
    origin: GeoPoint,
    cell_size_deg: f64,
    mask: Vec<bool>,
    feature_names: Vec<String>,
    features: Vec<Vec<f64>>,
    missing_counts: Vec<usize>,
    // flat (row-major) index of each active cell, and the inverse map
    active: Vec<usize>,
    cell_of_flat: Vec<Option<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GridData {
    rows: usize,
    cols: usize,
    origin: GeoPoint,
    cell_size_deg: f64,
    mask: Vec<bool>,
    feature_names: Vec<String>,
    features: Vec<Vec<f64>>,
    #[serde(default)]
    missing_counts: Vec<usize>,
}

impl TryFrom<GridData> for GridRaster {
    type Error = Error;

    fn try_from(d: GridData) -> Result<Self> {
        let mut grid = GridRaster::new(
            d.rows,
            d.cols,
            d.origin,
            d.cell_size_deg,
            d.mask,
            d.feature_names,
            d.features,
        )?;
        if !d.missing_counts.is_empty() {
            grid = grid.with_missing_counts(d.missing_counts)?;
        }
        Ok(grid)
    }
}

impl From<GridRaster> for GridData {
    fn from(g: GridRaster) -> Self {
        GridData {
            rows: g.rows,
            cols: g.cols,
            origin: g.origin,
            cell_size_deg: g.cell_size_deg,
            mask: g.mask,
            feature_names: g.feature_names,
            features: g.features,
            missing_counts: g.missing_counts,
        }
    }
}

impl GridRaster {
    /// Builds a grid, checking every structural invariant.
    ///
    /// `features` holds one vector per active cell in row-major order.
    pub fn new(
        rows: usize,
        cols: usize,
        origin: GeoPoint,
        cell_size_deg: f64,
        mask: Vec<bool>,
        feature_names: Vec<String>,
        features: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Geometry("grid must have positive rows and cols".into()));
        }
        if !(cell_size_deg.is_finite() && cell_size_deg > 0.0) {
            return Err(Error::Geometry(format!(
                "cell size must be positive, got {cell_size_deg}"
            )));
        }
        if mask.len() != rows * cols {
            return Err(Error::contract(format!(
                "mask has {} entries, expected {}",
                mask.len(),
                rows * cols
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{name}`")));
            }
        }
        let active: Vec<usize> = (0..rows * cols).filter(|&i| mask[i]).collect();
        if active.is_empty() {
            return Err(Error::contract("grid has no active cells"));
        }
        if features.len() != active.len() {
            return Err(Error::contract(format!(
                "{} feature vectors for {} active cells",
                features.len(),
                active.len()
            )));
        }
        let f = feature_names.len();
        for (id, v) in features.iter().enumerate() {
            if v.len() != f {
                return Err(Error::contract(format!(
                    "cell {id} has {} values, expected {f}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::contract(format!("cell {id} has a non-finite value")));
            }
        }
        let mut cell_of_flat = vec![None; rows * cols];
        for (id, &flat) in active.iter().enumerate() {
            cell_of_flat[flat] = Some(id);
        }
        let grid = GridRaster {
            rows,
            cols,
            origin,
            cell_size_deg,
            mask,
            feature_names,
            features,
            missing_counts: vec![0; f],
            active,
            cell_of_flat,
        };
        for &flat in &grid.active {
            let p = grid.centroid_at(flat / cols, flat % cols);
            if !p.is_valid() {
                return Err(Error::Geometry(format!(
                    "centroid of cell ({}, {}) out of range: ({}, {})",
                    flat / cols,
                    flat % cols,
                    p.lat,
                    p.lon
                )));
            }
        }
        Ok(grid)
    }

    /// Attaches per-feature counts of values that were imputed at ingestion.
    pub fn with_missing_counts(mut self, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != self.feature_names.len() {
            return Err(Error::contract("missing counts length differs from feature count"));
        }
        self.missing_counts = counts;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn cell_size_deg(&self) -> f64 {
        self.cell_size_deg
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    pub fn missing_counts(&self) -> &[usize] {
        &self.missing_counts
    }

    /// Feature vectors, one per active cell.
    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn feature_column(&self, f: usize) -> Vec<f64> {
        self.features.iter().map(|v| v[f]).collect()
    }

    pub fn cell_position(&self, id: usize) -> (usize, usize) {
        let flat = self.active[id];
        (flat / self.cols, flat % self.cols)
    }

    pub fn cell_id(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.rows || col >= self.cols {
            return None;
        }
        self.cell_of_flat[row * self.cols + col]
    }

    pub fn centroid_at(&self, row: usize, col: usize) -> GeoPoint {
        GeoPoint {
            lat: self.origin.lat + row as f64 * self.cell_size_deg,
            lon: self.origin.lon + col as f64 * self.cell_size_deg,
        }
    }

    pub fn centroid(&self, id: usize) -> GeoPoint {
        let (r, c) = self.cell_position(id);
        self.centroid_at(r, c)
    }

    pub fn centroids(&self) -> Vec<GeoPoint> {
        (0..self.n_active()).map(|id| self.centroid(id)).collect()
    }

    /// Largest corner-to-corner cell diagonal over the grid's rows.
    ///
    /// Diagonals shrink away from the equator, so the row nearest it wins.
    pub fn max_cell_diagonal_km(&self) -> f64 {
        let half = self.cell_size_deg / 2.0;
        (0..self.rows)
            .map(|r| {
                let c = self.centroid_at(r, 0);
                let lo = GeoPoint {
                    lat: (c.lat - half).max(-90.0),
                    lon: c.lon - half,
                };
                let hi = GeoPoint {
                    lat: (c.lat + half).min(90.0),
                    lon: c.lon + half,
                };
                haversine_km(lo, hi)
            })
            .fold(0.0, f64::max)
    }

    pub fn bounding_box(&self) -> BoundingBox {
        BoundingBox::around(self.centroids()).expect("grid has active cells")
    }

    /// Same grid restricted to the named features, in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<GridRaster> {
        let idx = names
            .iter()
            .map(|n| {
                self.feature_index(n)
                    .ok_or_else(|| Error::Schema(format!("unknown feature `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = self.clone();
        out.feature_names = names.to_vec();
        out.features = self
            .features
            .iter()
            .map(|v| idx.iter().map(|&i| v[i]).collect())
            .collect();
        out.missing_counts = idx.iter().map(|&i| self.missing_counts[i]).collect();
        Ok(out)
    }

    /// Same geometry with new per-cell values.
    pub fn with_features(&self, feature_names: Vec<String>, features: Vec<Vec<f64>>) -> Result<GridRaster> {
        let missing = if feature_names.len() == self.feature_names.len() {
            self.missing_counts.clone()
        } else {
            vec![0; feature_names.len()]
        };
        GridRaster::new(
            self.rows,
            self.cols,
            self.origin,
            self.cell_size_deg,
            self.mask.clone(),
            feature_names,
            features,
        )?
        .with_missing_counts(missing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyScheme {
    #[default]
    Rook,
    Queen,
}

/// Neighbor lists over active cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyIndex {
    pub scheme: AdjacencyScheme,
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyIndex {
    /// Builds an index from explicit neighbor lists. Lists are sorted and
    /// symmetry is checked.
    pub fn from_lists(scheme: AdjacencyScheme, mut neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbors.len();
        for (i, list) in neighbors.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            if list.iter().any(|&j| j >= n || j == i) {
                return Err(Error::contract(format!("bad neighbor list for cell {i}")));
            }
        }
        for i in 0..n {
            for &j in &neighbors[i] {
                if neighbors[j].binary_search(&i).is_err() {
                    return Err(Error::contract(format!("adjacency not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(AdjacencyIndex { scheme, neighbors })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, id: usize) -> &[usize] {
        &self.neighbors[id]
    }

    /// Connected-component label of every cell, numbered by first cell id.
    pub fn component_labels(&self) -> (Vec<usize>, usize) {
        self.components_where(|_, _| true)
    }

    /// Components of the subgraph keeping only edges accepted by `keep`.
    pub fn components_where(&self, keep: impl Fn(usize, usize) -> bool) -> (Vec<usize>, usize) {
        let n = self.len();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = count;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                for &j in &self.neighbors[i] {
                    if comp[j] == usize::MAX && keep(i, j) {
                        comp[j] = count;
                        queue.push_back(j);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    pub fn component_count(&self) -> usize {
        self.component_labels().1
    }
}

pub fn build_adjacency(grid: &GridRaster, scheme: AdjacencyScheme) -> AdjacencyIndex {
    let offsets: &[(isize, isize)] = match scheme {
        AdjacencyScheme::Rook => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
        AdjacencyScheme::Queen => &[
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ],
    };
    let neighbors = (0..grid.n_active())
        .map(|id| {
            let (r, c) = grid.cell_position(id);
            let mut list: Vec<usize> = offsets
                .iter()
                .filter_map(|&(dr, dc)| {
                    let rr = r.checked_add_signed(dr)?;
                    let cc = c.checked_add_signed(dc)?;
                    grid.cell_id(rr, cc)
                })
                .collect();
            list.sort_unstable();
            list
        })
        .collect();
    AdjacencyIndex { scheme, neighbors }
}

/// Per-feature z-score parameters (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub constant: Vec<bool>,
}

impl StandardizationParams {
    /// Maps a standardized vector back to raw units. Constant features map
    /// back to their (single) value.
    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&v, (&m, &s))| if s == 0.0 { m } else { v * s + m })
            .collect()
    }
}

/// Z-scores every feature over the active cells.
pub fn standardize(grid: &GridRaster) -> (GridRaster, StandardizationParams) {
    let n = grid.n_active() as f64;
    let nf = grid.n_features();
    let mut means = vec![0.0; nf];
    let mut stds = vec![0.0; nf];
    let mut constant = vec![false; nf];
    for f in 0..nf {
        let col = grid.feature_column(f);
        let first = col[0];
        if col.iter().all(|&x| x == first) {
            means[f] = first;
            constant[f] = true;
            continue;
        }
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        means[f] = mean;
        stds[f] = var.sqrt();
    }
    let values = grid
        .features()
        .iter()
        .map(|v| {
            (0..nf)
                .map(|f| if constant[f] { 0.0 } else { (v[f] - means[f]) / stds[f] })
                .collect()
        })
        .collect();
    let out = grid
        .with_features(grid.feature_names().to_vec(), values)
        .expect("standardized values keep the grid's shape");
    let params = StandardizationParams {
        feature_names: grid.feature_names().to_vec(),
        means,
        stds,
        constant,
    };
    (out, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn full_grid(rows: usize, cols: usize) -> GridRaster {
        GridRaster::new(
            rows,
            cols,
            GeoPoint { lat: 30.0, lon: -81.7 },
            0.01,
            vec![true; rows * cols],
            vec!["a".into()],
            (0..rows * cols).map(|i| vec![i as f64]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn haversine_closed_forms() {
        let o = GeoPoint { lat: 0.0, lon: 0.0 };
        assert_eq!(haversine_km(o, o), 0.0);
        let one = haversine_km(o, GeoPoint { lat: 0.0, lon: 1.0 });
        let expect = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        assert!((one - expect).abs() / expect < 1e-12);
        assert!((one - 111.1951).abs() < 1e-4);
        let anti = haversine_km(o, GeoPoint { lat: 0.0, lon: -180.0 });
        let half_circumference = EARTH_RADIUS_KM * std::f64::consts::PI;
        assert!((anti - half_circumference).abs() / half_circumference < 1e-12);
    }

    #[test]
    fn geopoint_ranges() {
        assert!(GeoPoint::new(90.0, -180.0).is_ok());
        assert!(GeoPoint::new(0.0, 180.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(GeoPoint::new(-90.5, 0.0).is_err());
    }

    #[test]
    fn rook_and_queen_counts() {
        let g2 = full_grid(2, 2);
        let rook = build_adjacency(&g2, AdjacencyScheme::Rook);
        assert!((0..4).all(|i| rook.neighbors(i).len() == 2));

        let g3 = full_grid(3, 3);
        assert_eq!(build_adjacency(&g3, AdjacencyScheme::Rook).neighbors(4).len(), 4);
        assert_eq!(build_adjacency(&g3, AdjacencyScheme::Queen).neighbors(4).len(), 8);
    }

    #[test]
    fn masked_cells_are_skipped() {
        let mut mask = vec![true; 9];
        mask[4] = false;
        let g = GridRaster::new(
            3,
            3,
            GeoPoint { lat: 0.0, lon: 0.0 },
            1.0,
            mask,
            vec![],
            vec![vec![]; 8],
        )
        .unwrap();
        assert_eq!(g.n_active(), 8);
        assert_eq!(g.cell_id(1, 1), None);
        assert_eq!(g.cell_id(1, 2), Some(4));
        let adj = build_adjacency(&g, AdjacencyScheme::Rook);
        // (0,1) loses its center neighbour
        assert_eq!(adj.neighbors(1), &[0, 2]);
        assert_eq!(adj.component_count(), 1);
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        let o = GeoPoint { lat: 0.0, lon: 0.0 };
        assert!(GridRaster::new(1, 1, o, 1.0, vec![false], vec![], vec![]).is_err());
        assert!(GridRaster::new(1, 1, o, -1.0, vec![true], vec![], vec![vec![]]).is_err());
        assert!(GridRaster::new(1, 1, o, 1.0, vec![true], vec!["x".into()], vec![vec![f64::NAN]]).is_err());
        // centroid of (0,1) would sit at lon 180
        let edge = GeoPoint { lat: 0.0, lon: 179.0 };
        assert!(GridRaster::new(1, 2, edge, 1.0, vec![true; 2], vec![], vec![vec![]; 2]).is_err());
    }

    #[test]
    fn standardize_examples() {
        let o = GeoPoint { lat: 0.0, lon: 0.0 };
        let g = GridRaster::new(
            1,
            3,
            o,
            0.1,
            vec![true; 3],
            vec!["pair".into(), "flat".into()],
            vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![3.0, 5.0]],
        )
        .unwrap();
        let two = GridRaster::new(1, 2, o, 0.1, vec![true; 2], vec!["a".into()], vec![vec![1.0], vec![3.0]]).unwrap();
        let (z, p) = standardize(&two);
        assert_eq!(z.feature_column(0), vec![-1.0, 1.0]);
        assert_eq!(p.stds, vec![1.0]);

        let (z, p) = standardize(&g);
        assert_eq!(z.feature_column(1), vec![0.0; 3]);
        assert_eq!(p.constant, vec![false, true]);
        assert_eq!(p.inverse(&z.features()[0]), vec![1.0, 5.0]);

        let (zz, _) = standardize(&z);
        for (a, b) in z.features().iter().zip(zz.features()) {
            assert!((a[0] - b[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_serde_round_trip() {
        let g = full_grid(2, 3);
        let s = serde_json::to_string(&g).unwrap();
        let back: GridRaster = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
    }
}
