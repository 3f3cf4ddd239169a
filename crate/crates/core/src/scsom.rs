//! Spatially constrained self-organizing map.
//!
//! Neurons are anchored at representative cells chosen by farthest-point
//! sampling with minimum spacing `threshold_km`, so every cell lies within
//! the threshold of at least one anchor. A cell's best matching unit is the
//! latent-nearest neuron among those anchored within the threshold of it.
//! Anchors never move; only the latent weights are trained (batch updates
//! with a Gaussian kernel over anchor-to-anchor distance).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_grid::{haversine_km, GeoPoint};

/// Relative change in quantization error below which training stops.
pub const EARLY_STOP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SomConfig {
    pub epochs: usize,
    /// Final kernel width as a fraction of the threshold.
    pub sigma_final_fraction: f64,
}

impl Default for SomConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            sigma_final_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neuron {
    /// Representative cell the neuron was seeded from.
    pub cell: usize,
    pub anchor: GeoPoint,
    pub weight: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomModel {
    pub neurons: Vec<Neuron>,
    pub threshold_km: f64,
    /// Kernel widths (km) used by each completed training epoch.
    pub sigma_schedule: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub bmu: Vec<usize>,
    pub quantization_error: f64,
    /// Set where no neuron was anchored within the threshold of the cell.
    pub fallback: Vec<bool>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_inputs(latent: &[Vec<f64>], centroids: &[GeoPoint]) -> Result<()> {
    if latent.len() != centroids.len() {
        return Err(Error::contract(format!(
            "{} latent rows for {} centroids",
            latent.len(),
            centroids.len()
        )));
    }
    if latent.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::contract("latent input contains non-finite values"));
    }
    Ok(())
}

/// Farthest-point sampling of anchor cells.
///
/// Starts from the cell nearest the mean centroid, then keeps adding the
/// cell farthest from the chosen set while that distance is at least
/// `threshold_km`. Ties go to the lowest cell id.
pub fn init_representatives(latent: &[Vec<f64>], centroids: &[GeoPoint], threshold_km: f64) -> Result<SomModel> {
    if centroids.is_empty() {
        return Err(Error::contract("at least one cell is required"));
    }
    if !(threshold_km.is_finite() && threshold_km > 0.0) {
        return Err(Error::contract(format!("threshold must be positive, got {threshold_km}")));
    }
    check_inputs(latent, centroids)?;
    let n = centroids.len() as f64;
    let center = GeoPoint {
        lat: centroids.iter().map(|p| p.lat).sum::<f64>() / n,
        lon: centroids.iter().map(|p| p.lon).sum::<f64>() / n,
    };
    let first = argmin(centroids.iter().map(|&p| haversine_km(p, center)));
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = centroids.iter().map(|&p| haversine_km(p, centroids[first])).collect();
    loop {
        let far = argmax(nearest.iter().copied());
        if nearest[far] < threshold_km {
            break;
        }
        chosen.push(far);
        for (d, &p) in nearest.iter_mut().zip(centroids) {
            *d = d.min(haversine_km(p, centroids[far]));
        }
    }
    let neurons = chosen
        .into_iter()
        .map(|cell| Neuron {
            cell,
            anchor: centroids[cell],
            weight: latent[cell].clone(),
        })
        .collect();
    Ok(SomModel {
        neurons,
        threshold_km,
        sigma_schedule: Vec::new(),
    })
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Best matching unit among neurons anchored within the threshold.
///
/// Latent similarity is squared Euclidean distance; ties go to the lowest
/// neuron index. When no anchor is in range the geographically nearest
/// neuron is returned with the fallback flag set.
pub fn find_bmu(model: &SomModel, cell_latent: &[f64], cell_centroid: GeoPoint) -> (usize, bool) {
    let mut best: Option<(usize, f64)> = None;
    for (j, n) in model.neurons.iter().enumerate() {
        if haversine_km(n.anchor, cell_centroid) <= model.threshold_km {
            let d = squared_distance(&n.weight, cell_latent);
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((j, d));
            }
        }
    }
    match best {
        Some((j, _)) => (j, false),
        None => (
            argmin(model.neurons.iter().map(|n| haversine_km(n.anchor, cell_centroid))),
            true,
        ),
    }
}

/// Per-cell candidate lists; anchors are fixed so these never change.
struct Candidates {
    lists: Vec<Vec<usize>>,
    fallback: Vec<Option<usize>>,
}

impl Candidates {
    fn new(model: &SomModel, centroids: &[GeoPoint]) -> Self {
        let mut lists = Vec::with_capacity(centroids.len());
        let mut fallback = Vec::with_capacity(centroids.len());
        for &c in centroids {
            let dists: Vec<f64> = model.neurons.iter().map(|n| haversine_km(n.anchor, c)).collect();
            let list: Vec<usize> = (0..dists.len()).filter(|&j| dists[j] <= model.threshold_km).collect();
            fallback.push(list.is_empty().then(|| argmin(dists.iter().copied())));
            lists.push(list);
        }
        Self { lists, fallback }
    }

    fn bmu(&self, model: &SomModel, cell: usize, x: &[f64]) -> (usize, f64) {
        if let Some(j) = self.fallback[cell] {
            return (j, squared_distance(&model.neurons[j].weight, x));
        }
        let mut best = (usize::MAX, f64::INFINITY);
        for &j in &self.lists[cell] {
            let d = squared_distance(&model.neurons[j].weight, x);
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }

    fn assign(&self, model: &SomModel, latent: &[Vec<f64>]) -> (Vec<usize>, f64) {
        let mut total = 0.0;
        let bmu = latent
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let (j, d) = self.bmu(model, i, x);
                total += d.sqrt();
                j
            })
            .collect();
        let qe = if latent.is_empty() { 0.0 } else { total / latent.len() as f64 };
        (bmu, qe)
    }
}

/// Geometric decay from `start` to `end` over `epochs` steps.
pub fn sigma_schedule(start: f64, end: f64, epochs: usize) -> Vec<f64> {
    if epochs <= 1 {
        return vec![start; epochs];
    }
    let ratio = end / start;
    (0..epochs)
        .map(|t| start * ratio.powf(t as f64 / (epochs - 1) as f64))
        .collect()
}

/// Batch training. Returns the trained model and the quantization error
/// measured at each epoch's assignment step.
pub fn fit(model: &SomModel, latent: &[Vec<f64>], centroids: &[GeoPoint], config: &SomConfig) -> Result<(SomModel, Vec<f64>)> {
    check_inputs(latent, centroids)?;
    if config.epochs == 0 {
        return Err(Error::contract("SOM training needs at least one epoch"));
    }
    if !(config.sigma_final_fraction > 0.0 && config.sigma_final_fraction.is_finite()) {
        return Err(Error::contract("sigma_final_fraction must be positive"));
    }
    let m = model.neurons.len();
    let dim = model.neurons.first().map_or(0, |n| n.weight.len());
    if latent.iter().any(|x| x.len() != dim) {
        return Err(Error::contract("latent width differs from neuron weight width"));
    }
    let anchor_d2: Vec<Vec<f64>> = model
        .neurons
        .iter()
        .map(|a| model.neurons.iter().map(|b| haversine_km(a.anchor, b.anchor).powi(2)).collect())
        .collect();
    let candidates = Candidates::new(model, centroids);
    let schedule = sigma_schedule(model.threshold_km, model.threshold_km * config.sigma_final_fraction, config.epochs);

    let mut model = model.clone();
    model.sigma_schedule.clear();
    let mut errors = Vec::new();
    for &sigma in &schedule {
        let (bmu, qe) = candidates.assign(&model, latent);
        let mut sums = vec![vec![0.0; dim]; m];
        let mut counts = vec![0.0f64; m];
        for (x, &b) in latent.iter().zip(&bmu) {
            counts[b] += 1.0;
            for (s, v) in sums[b].iter_mut().zip(x) {
                *s += v;
            }
        }
        let two_s2 = 2.0 * sigma * sigma;
        for (j, dj) in anchor_d2.iter().enumerate() {
            let mut num = vec![0.0; dim];
            let mut den = 0.0;
            for b in (0..m).filter(|&b| counts[b] > 0.0) {
                let h = (-dj[b] / two_s2).exp();
                if h == 0.0 {
                    continue;
                }
                den += h * counts[b];
                for (acc, s) in num.iter_mut().zip(&sums[b]) {
                    *acc += h * s;
                }
            }
            // neurons with no kernel mass keep their weight
            if den > 0.0 {
                model.neurons[j].weight = num.into_iter().map(|v| v / den).collect();
            }
        }
        model.sigma_schedule.push(sigma);
        let prev = errors.last().copied();
        errors.push(qe);
        if let Some(prev) = prev {
            if (qe - prev).abs() <= EARLY_STOP_TOLERANCE * prev.max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }
    Ok((model, errors))
}

pub fn assign_labels(model: &SomModel, latent: &[Vec<f64>], centroids: &[GeoPoint]) -> Result<LabelAssignment> {
    check_inputs(latent, centroids)?;
    let candidates = Candidates::new(model, centroids);
    let (bmu, quantization_error) = candidates.assign(model, latent);
    let fallback = candidates.fallback.iter().map(Option::is_some).collect();
    Ok(LabelAssignment {
        bmu,
        quantization_error,
        fallback,
    })
}
