//! Per-cell GeoJSON export of a region labelling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::GridRaster;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "FeatureCollection")]
pub struct FeatureCollection {
    pub features: Vec<Feature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "Feature")]
pub struct Feature {
    pub geometry: Polygon,
    pub properties: CellProperties,
}

/// Polygon as rings of `[lon, lat]` positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "Polygon")]
pub struct Polygon {
    pub coordinates: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellProperties {
    pub row: usize,
    pub col: usize,
    pub region_id: usize,
}

impl FeatureCollection {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("feature collection serializes")
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

/// One square polygon per active cell (row-major), tagged with its region.
///
/// `labels` is indexed by cell id and must use dense ids `0..k`.
pub fn export_regions_geojson(grid: &GridRaster, labels: &[usize]) -> Result<FeatureCollection> {
    if labels.len() != grid.n_active() {
        return Err(Error::contract(format!(
            "{} labels for {} active cells",
            labels.len(),
            grid.n_active()
        )));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut used = vec![false; k];
    for &l in labels {
        used[l] = true;
    }
    if used.iter().any(|u| !u) {
        return Err(Error::contract("region ids are not dense"));
    }
    let half = grid.cell_size_deg() / 2.0;
    let features = labels
        .iter()
        .enumerate()
        .map(|(id, &region_id)| {
            let (row, col) = grid.cell_position(id);
            let c = grid.centroid(id);
            let (w, e) = (c.lon - half, c.lon + half);
            let (s, n) = (c.lat - half, c.lat + half);
            Feature {
                // counter-clockwise exterior ring
                geometry: Polygon {
                    coordinates: vec![vec![[w, s], [e, s], [e, n], [w, n], [w, s]]],
                },
                properties: CellProperties { row, col, region_id },
            }
        })
        .collect();
    Ok(FeatureCollection { features })
}

/// Rebuilds the per-cell label vector from an exported document.
pub fn parse_regions_geojson(grid: &GridRaster, doc: &FeatureCollection) -> Result<Vec<usize>> {
    let mut labels = vec![None; grid.n_active()];
    for f in &doc.features {
        let p = f.properties;
        let id = grid
            .cell_id(p.row, p.col)
            .ok_or_else(|| Error::contract(format!("cell ({}, {}) is not active", p.row, p.col)))?;
        if labels[id].replace(p.region_id).is_some() {
            return Err(Error::contract(format!("cell ({}, {}) listed twice", p.row, p.col)));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(id, l)| l.ok_or_else(|| Error::contract(format!("cell {id} missing from document"))))
        .collect()
}
