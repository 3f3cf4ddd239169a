use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

use super::{GeoPoint, GridRaster};

const GEOMETRY_TOLERANCE_DEG: f64 = 1e-9;
const FIXED_COLUMNS: [&str; 4] = ["row", "col", "lat", "lon"];

/// Options for CSV ingestion.
#[derive(Debug, Clone, Default)]
pub struct GridSchema {
    /// Keep only these feature columns (in this order). `None` keeps all.
    pub features: Option<Vec<String>>,
    /// Cell size in degrees. Required when it cannot be inferred, i.e. when
    /// every listed cell shares one row and one column.
    pub cell_size_deg: Option<f64>,
}

pub fn load_grid_csv(path: impl AsRef<Path>, schema: &GridSchema) -> Result<GridRaster> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_grid_csv(file, schema)
}

struct CellRecord {
    row: usize,
    col: usize,
    lat: f64,
    lon: f64,
    values: Vec<Option<f64>>,
}

/// Reads `row,col,lat,lon,<feature>...` records. Empty feature fields are
/// missing and get imputed with the feature's mean over present values.
pub fn parse_grid_csv(reader: impl Read, schema: &GridSchema) -> Result<GridRaster> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    if header.len() < 4 || header.iter().take(4).ne(FIXED_COLUMNS) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must start with {}", FIXED_COLUMNS.join(",")),
        });
    }
    let all_features: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
    let selected: Vec<usize> = match &schema.features {
        None => (0..all_features.len()).collect(),
        Some(names) => names
            .iter()
            .map(|n| {
                all_features
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::Schema(format!("feature column `{n}` not in header")))
            })
            .collect::<Result<_>>()?,
    };

    let mut records = Vec::new();
    let mut seen = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse { line, message };
        if rec.len() != header.len() {
            return Err(bad(format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let row: usize = rec[0].parse().map_err(|_| bad(format!("bad row index `{}`", &rec[0])))?;
        let col: usize = rec[1].parse().map_err(|_| bad(format!("bad col index `{}`", &rec[1])))?;
        let coord = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("bad {what} `{s}`")))
        };
        let lat = coord(&rec[2], "lat")?;
        let lon = coord(&rec[3], "lon")?;
        let values = selected
            .iter()
            .map(|&f| {
                let s = &rec[4 + f];
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(Some)
                        .ok_or_else(|| bad(format!("bad value `{s}` for `{}`", all_features[f])))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(prev) = seen.insert((row, col), line) {
            return Err(bad(format!("cell ({row}, {col}) already listed on line {prev}")));
        }
        records.push(CellRecord { row, col, lat, lon, values });
    }
    if records.is_empty() {
        return Err(Error::Schema("no cells listed".into()));
    }
    records.sort_by_key(|r| (r.row, r.col));

    let rows = records.iter().map(|r| r.row).max().unwrap() + 1;
    let cols = records.iter().map(|r| r.col).max().unwrap() + 1;
    let cell_size = match schema.cell_size_deg {
        Some(s) => s,
        None => infer_cell_size(&records)?,
    };
    if !(cell_size.is_finite() && cell_size > 0.0) {
        return Err(Error::Geometry(format!("cell size must be positive, got {cell_size}")));
    }
    let first = &records[0];
    let origin = GeoPoint {
        lat: first.lat - first.row as f64 * cell_size,
        lon: first.lon - first.col as f64 * cell_size,
    };
    for r in &records {
        let lat = origin.lat + r.row as f64 * cell_size;
        let lon = origin.lon + r.col as f64 * cell_size;
        if (lat - r.lat).abs() > GEOMETRY_TOLERANCE_DEG || (lon - r.lon).abs() > GEOMETRY_TOLERANCE_DEG {
            return Err(Error::Geometry(format!(
                "cell ({}, {}) at ({}, {}) is off the grid; expected ({lat}, {lon})",
                r.row, r.col, r.lat, r.lon
            )));
        }
    }

    let names: Vec<String> = selected.iter().map(|&f| all_features[f].clone()).collect();
    let mut missing = vec![0usize; names.len()];
    let mut fill = vec![0.0; names.len()];
    for (k, name) in names.iter().enumerate() {
        let present: Vec<f64> = records.iter().filter_map(|r| r.values[k]).collect();
        if present.is_empty() {
            return Err(Error::Schema(format!("feature `{name}` has no values")));
        }
        missing[k] = records.len() - present.len();
        fill[k] = present.iter().sum::<f64>() / present.len() as f64;
    }

    let mut mask = vec![false; rows * cols];
    for r in &records {
        mask[r.row * cols + r.col] = true;
    }
    let features = records
        .iter()
        .map(|r| r.values.iter().zip(&fill).map(|(v, &m)| v.unwrap_or(m)).collect())
        .collect();
    GridRaster::new(rows, cols, origin, cell_size, mask, names, features)?.with_missing_counts(missing)
}

fn infer_cell_size(records: &[CellRecord]) -> Result<f64> {
    let by_row = |a: &CellRecord, b: &CellRecord| (b.lat - a.lat) / (b.row as f64 - a.row as f64);
    let by_col = |a: &CellRecord, b: &CellRecord| (b.lon - a.lon) / (b.col as f64 - a.col as f64);
    let lo_r = records.iter().min_by_key(|r| r.row).unwrap();
    let hi_r = records.iter().max_by_key(|r| r.row).unwrap();
    let lo_c = records.iter().min_by_key(|r| r.col).unwrap();
    let hi_c = records.iter().max_by_key(|r| r.col).unwrap();
    let row_span = hi_r.row - lo_r.row;
    let col_span = hi_c.col - lo_c.col;
    if row_span == 0 && col_span == 0 {
        return Err(Error::Geometry(
            "cannot infer cell size from a single cell; set it explicitly".into(),
        ));
    }
    Ok(if row_span >= col_span {
        by_row(lo_r, hi_r)
    } else {
        by_col(lo_c, hi_c)
    })
}
