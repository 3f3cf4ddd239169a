//! Empirical semivariograms and the geographic threshold derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_grid::{haversine_km, GeoPoint, GridRaster};

pub const DEFAULT_BINS: usize = 15;
/// Fraction of the sill at which the range is read off.
pub const SILL_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Semivariogram {
    /// `B + 1` ascending edges in km, from 0 to `h_max`.
    pub lag_bin_edges: Vec<f64>,
    pub gamma: Vec<f64>,
    pub pair_counts: Vec<u64>,
}

impl Semivariogram {
    pub fn bins(&self) -> usize {
        self.gamma.len()
    }

    pub fn h_max(&self) -> f64 {
        *self.lag_bin_edges.last().unwrap()
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        0.5 * (self.lag_bin_edges[i] + self.lag_bin_edges[i + 1])
    }

    pub fn is_empty_bin(&self, i: usize) -> bool {
        self.pair_counts[i] == 0
    }

    /// Bin holding lag `d`: left-closed, right-open, last bin right-closed.
    pub fn bin_of(&self, d: f64) -> Option<usize> {
        bin_of(&self.lag_bin_edges, d)
    }
}

fn lag_edges(h_max: f64, bins: usize) -> Vec<f64> {
    let mut edges: Vec<f64> = (0..bins).map(|i| h_max * i as f64 / bins as f64).collect();
    edges.push(h_max);
    edges
}

fn bin_of(edges: &[f64], d: f64) -> Option<usize> {
    let bins = edges.len() - 1;
    let h_max = edges[bins];
    if !(0.0..=h_max).contains(&d) {
        return None;
    }
    let width = h_max / bins as f64;
    let mut b = if width > 0.0 { ((d / width) as usize).min(bins - 1) } else { 0 };
    // the division can land one bin off near an edge; settle against the
    // stored edges so membership is exactly `edges[b] <= d < edges[b+1]`
    while b > 0 && d < edges[b] {
        b -= 1;
    }
    while b + 1 < bins && d >= edges[b + 1] {
        b += 1;
    }
    Some(b)
}

fn max_pairwise_km(centroids: &[GeoPoint]) -> f64 {
    let mut max = 0.0f64;
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            max = max.max(haversine_km(centroids[i], centroids[j]));
        }
    }
    max
}

/// Semivariograms of several value columns sharing the same locations.
/// `columns[f][i]` is the value of column `f` at `centroids[i]`.
fn semivariograms(columns: &[Vec<f64>], centroids: &[GeoPoint], bins: usize) -> Result<Vec<Semivariogram>> {
    let n = centroids.len();
    if n < 2 {
        return Err(Error::contract("semivariogram needs at least 2 cells"));
    }
    if bins == 0 {
        return Err(Error::contract("semivariogram needs at least 1 bin"));
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::contract("value and centroid counts differ"));
    }
    let h_max = 0.5 * max_pairwise_km(centroids);
    let edges = lag_edges(h_max, bins);
    let nf = columns.len();
    let mut sums = vec![vec![0.0f64; bins]; nf];
    let mut counts = vec![0u64; bins];
    for i in 0..n {
        for j in i + 1..n {
            let d = haversine_km(centroids[i], centroids[j]);
            let Some(b) = bin_of(&edges, d) else { continue };
            counts[b] += 1;
            for (f, col) in columns.iter().enumerate() {
                let diff = col[i] - col[j];
                sums[f][b] += diff * diff;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|s| Semivariogram {
            lag_bin_edges: edges.clone(),
            gamma: s
                .iter()
                .zip(&counts)
                .map(|(&sum, &c)| if c == 0 { 0.0 } else { sum / (2.0 * c as f64) })
                .collect(),
            pair_counts: counts.clone(),
        })
        .collect())
}

/// Uniform-bin empirical semivariogram over `[0, h_max]`, where `h_max` is
/// half the largest pairwise great-circle distance.
pub fn empirical_semivariogram(values: &[f64], centroids: &[GeoPoint], bins: usize) -> Result<Semivariogram> {
    Ok(semivariograms(&[values.to_vec()], centroids, bins)?.remove(0))
}

/// Center of the first nonempty bin whose semivariance reaches 95% of the
/// sill; `h_max` when no bin does.
pub fn estimate_range(sv: &Semivariogram, sill: f64) -> Result<f64> {
    if sill.is_nan() || sill <= 0.0 {
        return Err(Error::contract(format!("sill must be positive, got {sill}")));
    }
    if sv.pair_counts.iter().all(|&c| c == 0) {
        return Err(Error::Estimation("every lag bin is empty".into()));
    }
    Ok((0..sv.bins())
        .find(|&i| !sv.is_empty_bin(i) && sv.gamma[i] >= SILL_FRACTION * sill)
        .map_or_else(|| sv.h_max(), |i| sv.bin_center(i)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    /// Features that contributed a range (constant features are skipped).
    pub features: Vec<String>,
    pub per_feature_range_km: Vec<f64>,
    pub threshold_km: f64,
    pub clamp_lower_km: f64,
    pub clamp_upper_km: f64,
    pub clamp_applied: bool,
}

/// Lower-middle element for even lengths.
pub(crate) fn lower_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// Clamps into `[lower, upper]`. If the interval is inverted (grids too
/// small for the floor), the floor wins.
pub(crate) fn clamp_threshold(value: f64, lower: f64, upper: f64) -> (f64, bool) {
    if value < lower {
        (lower, true)
    } else if value > upper && upper >= lower {
        (upper, true)
    } else {
        (value, false)
    }
}

/// Median of per-feature variogram ranges, clamped to
/// `[2 * cell diagonal, h_max]`. Expects a standardized grid.
pub fn geographic_threshold(grid: &GridRaster, bins: usize) -> Result<ThresholdEstimate> {
    if grid.n_active() < 2 {
        return Err(Error::contract("threshold estimation needs at least 2 active cells"));
    }
    let n = grid.n_active() as f64;
    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut sills = Vec::new();
    for (f, name) in grid.feature_names().iter().enumerate() {
        let col = grid.feature_column(f);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        if var > 0.0 {
            names.push(name.clone());
            columns.push(col);
            sills.push(var);
        }
    }
    if columns.is_empty() {
        return Err(Error::Estimation("all features are constant".into()));
    }
    let svs = semivariograms(&columns, &grid.centroids(), bins)?;
    let ranges = svs
        .iter()
        .zip(&sills)
        .map(|(sv, &sill)| estimate_range(sv, sill))
        .collect::<Result<Vec<_>>>()?;
    let lower = 2.0 * grid.max_cell_diagonal_km();
    let upper = svs[0].h_max();
    let (threshold_km, clamp_applied) = clamp_threshold(lower_median(&ranges), lower, upper);
    Ok(ThresholdEstimate {
        features: names,
        per_feature_range_km: ranges,
        threshold_km,
        clamp_lower_km: lower,
        clamp_upper_km: upper,
        clamp_applied,
    })
}
