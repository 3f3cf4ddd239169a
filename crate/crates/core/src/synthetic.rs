//! Synthetic grids: planted blocks with known ground truth, and a small
//! city-like demo dataset whose columns match the bundled catalog.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::advisor::FeatureCatalog;
use crate::geo_grid::{haversine_km, GeoPoint, GridRaster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBlocks {
    pub rows: usize,
    pub cols: usize,
    /// Blocks per side; the grid is cut into `blocks_per_side^2` rectangles.
    pub blocks_per_side: usize,
    pub features: usize,
    /// Minimum distance between block means, in units of `noise_std`.
    pub separation: f64,
    pub noise_std: f64,
    pub origin: GeoPoint,
    pub cell_size_deg: f64,
}

impl Default for PlantedBlocks {
    fn default() -> Self {
        Self {
            rows: 32,
            cols: 32,
            blocks_per_side: 2,
            features: 3,
            separation: 5.0,
            noise_std: 1.0,
            origin: GeoPoint { lat: 30.2, lon: -81.8 },
            cell_size_deg: 0.01,
        }
    }
}

impl PlantedBlocks {
    pub fn block_count(&self) -> usize {
        self.blocks_per_side * self.blocks_per_side
    }

    /// Mean of block `b`, feature `f`. Block means are cyclic shifts of
    /// `0, 1, .., B-1` scaled by `separation * noise_std`, so any two blocks
    /// differ by at least that much in every feature.
    pub fn block_mean(&self, b: usize, f: usize) -> f64 {
        self.separation * self.noise_std * ((b + f) % self.block_count()) as f64
    }

    /// Ground-truth block of each cell (row-major).
    pub fn truth(&self) -> Vec<usize> {
        let bs = self.blocks_per_side;
        (0..self.rows * self.cols)
            .map(|i| {
                let (r, c) = (i / self.cols, i % self.cols);
                (r * bs / self.rows) * bs + c * bs / self.cols
            })
            .collect()
    }

    /// Grid with features `f0, f1, ..` and its ground-truth labels.
    pub fn generate(&self, seed: u64) -> Result<(GridRaster, Vec<usize>)> {
        if self.blocks_per_side == 0 || self.rows < self.blocks_per_side || self.cols < self.blocks_per_side {
            return Err(Error::contract("each block needs at least one cell"));
        }
        let noise = Normal::new(0.0, self.noise_std)
            .map_err(|e| Error::contract(format!("bad noise level: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = self.truth();
        let features = truth
            .iter()
            .map(|&b| {
                (0..self.features)
                    .map(|f| self.block_mean(b, f) + noise.sample(&mut rng))
                    .collect()
            })
            .collect();
        let names = (0..self.features).map(|f| format!("f{f}")).collect();
        let grid = GridRaster::new(
            self.rows,
            self.cols,
            self.origin,
            self.cell_size_deg,
            vec![true; self.rows * self.cols],
            names,
            features,
        )?;
        Ok((grid, truth))
    }
}

/// Coastal city around a river, with every catalog column populated from
/// a few smooth drivers (distance to downtown, river and coast) plus noise.
/// Cells east of the coastline are masked out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoCity {
    pub rows: usize,
    pub cols: usize,
    pub origin: GeoPoint,
    pub cell_size_deg: f64,
    pub downtown: GeoPoint,
    /// Longitude of the coastline at the southern edge; it drifts east
    /// going north.
    pub coast_lon: f64,
}

impl Default for DemoCity {
    fn default() -> Self {
        Self {
            rows: 24,
            cols: 30,
            origin: GeoPoint { lat: 30.12, lon: -82.02 },
            cell_size_deg: 0.02,
            downtown: GeoPoint { lat: 30.3322, lon: -81.6557 },
            coast_lon: -81.47,
        }
    }
}

impl DemoCity {
    fn coast_at(&self, lat: f64) -> f64 {
        self.coast_lon + 0.1 * (lat - self.origin.lat)
    }

    /// River: runs north from the southern edge, then bends east through
    /// downtown to the coast.
    fn river_km(&self, p: GeoPoint) -> f64 {
        let bend = self.downtown.lat;
        let nearest = if p.lat < bend {
            GeoPoint { lat: p.lat, lon: self.downtown.lon - 0.02 * (bend - p.lat) / 0.1 }
        } else {
            let lon = p.lon.clamp(self.downtown.lon, self.coast_at(bend));
            GeoPoint { lat: bend + 0.05 * (lon - self.downtown.lon), lon }
        };
        haversine_km(p, nearest)
    }

    pub fn generate(&self, seed: u64) -> Result<GridRaster> {
        let columns: Vec<String> = FeatureCatalog::demo().entries().iter().map(|e| e.column().to_string()).collect();
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mask = Vec::with_capacity(self.rows * self.cols);
        let mut features = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let p = GeoPoint {
                    lat: self.origin.lat + r as f64 * self.cell_size_deg,
                    lon: self.origin.lon + c as f64 * self.cell_size_deg,
                };
                let coast = self.coast_at(p.lat);
                let active = p.lon < coast;
                mask.push(active);
                if !active {
                    continue;
                }
                let core = haversine_km(p, self.downtown);
                let river = self.river_km(p);
                let shore = haversine_km(p, GeoPoint { lat: p.lat, lon: coast });
                let water = river.min(shore);
                let urban = (-core / 8.0).exp();
                let mut noise = || unit.sample(&mut rng);
                let row: Vec<f64> = columns
                    .iter()
                    .map(|name| match name.as_str() {
                        "impervious_surface" => (0.15 + 0.7 * urban + 0.03 * noise()).clamp(0.0, 1.0),
                        "elevation" => 1.0 + 0.9 * water + 0.5 * noise().abs(),
                        "distance_to_water" => water,
                        "annual_precipitation" => 1320.0 + 2.0 * (p.lon - self.origin.lon) * 100.0 + 15.0 * noise(),
                        "storm_drain_density" => (40.0 * urban + 2.0 * noise()).max(0.0),
                        "slope" => (0.4 + 0.08 * water + 0.1 * noise()).max(0.0),
                        "no_vehicle_share" => (0.03 + 0.15 * urban + 0.01 * noise()).clamp(0.0, 1.0),
                        "population_density" => (300.0 + 3500.0 * urban + 150.0 * noise()).max(0.0),
                        "elderly_share" => (0.12 + 0.08 * (-shore / 4.0).exp() + 0.01 * noise()).clamp(0.0, 1.0),
                        "median_household_income" => 42_000.0 + 1_500.0 * core.min(20.0) + 3_000.0 * noise(),
                        "building_age" => 1950.0 + 2.5 * core + 4.0 * noise(),
                        "tree_canopy" => (0.5 - 0.35 * urban + 0.05 * noise()).clamp(0.0, 1.0),
                        _ => noise(),
                    })
                    .collect();
                features.push(row);
            }
        }
        GridRaster::new(self.rows, self.cols, self.origin, self.cell_size_deg, mask, columns, features)
    }
}
