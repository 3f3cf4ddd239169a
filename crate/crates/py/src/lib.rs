//! Python bindings: grids, the pipeline, and partition metrics.

use std::collections::BTreeMap;
use std::path::PathBuf;

use georegion::advisor::{suggest_features as rank, FeatureCatalog};
use georegion::geo_grid::GridSchema;
use georegion::metrics;
use georegion::synthetic::{DemoCity, PlantedBlocks};
use georegion::{Error, GeoPoint, GridRaster, PipelineConfig, RunArtifacts, Stage};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyKeyError, PyValueError};
use pyo3::prelude::*;

create_exception!(georegion_py, InfeasibleError, PyException);
create_exception!(georegion_py, GeoregionError, PyException);

fn to_py(err: Error) -> PyErr {
    let msg = err.root().to_string();
    match err.root() {
        Error::Validation(_) | Error::Parse { .. } | Error::Schema(_) | Error::Geometry(_) | Error::Contract(_) => {
            PyValueError::new_err(msg)
        }
        Error::NotFound(_) => PyKeyError::new_err(msg),
        Error::Infeasible(_) => InfeasibleError::new_err(msg),
        _ => GeoregionError::new_err(msg),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn point(lat: f64, lon: f64) -> PyResult<GeoPoint> {
    GeoPoint::new(lat, lon).map_err(to_py)
}

/// Great-circle distance in kilometres.
#[pyfunction]
fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> PyResult<f64> {
    Ok(georegion::haversine_km(point(lat1, lon1)?, point(lat2, lon2)?))
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    metrics::adjusted_rand_index(&a, &b).map_err(to_py)
}

/// Grid columns ranked for a hazard as `(feature, score)` pairs. Uses the
/// built-in catalog unless a catalog JSON path is given.
#[pyfunction]
#[pyo3(signature = (hazard, columns, catalog=None))]
fn suggest_features(hazard: &str, columns: Vec<String>, catalog: Option<PathBuf>) -> PyResult<Vec<(String, f64)>> {
    let catalog = match catalog {
        Some(p) => FeatureCatalog::load(p).map_err(to_py)?,
        None => FeatureCatalog::demo(),
    };
    Ok(rank(&catalog, hazard, &columns)
        .map_err(to_py)?
        .into_iter()
        .map(|s| (s.feature, s.score))
        .collect())
}

/// A masked raster of cells with named features.
#[pyclass(frozen, module = "georegion_py")]
struct Grid(GridRaster);

#[pymethods]
impl Grid {
    #[staticmethod]
    fn from_csv(path: PathBuf) -> PyResult<Self> {
        georegion::geo_grid::load_grid_csv(&path, &GridSchema::default())
            .map(Grid)
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(Grid).map_err(json_err)
    }

    /// Synthetic coastal city carrying the built-in catalog's columns.
    #[staticmethod]
    #[pyo3(signature = (seed=0))]
    fn demo_city(seed: u64) -> PyResult<Self> {
        DemoCity::default().generate(seed).map(Grid).map_err(to_py)
    }

    /// Four planted blocks; returns the grid and the true block labels.
    #[staticmethod]
    #[pyo3(signature = (seed=0))]
    fn planted_blocks(seed: u64) -> PyResult<(Self, Vec<usize>)> {
        let (grid, truth) = PlantedBlocks::default().generate(seed).map_err(to_py)?;
        Ok((Grid(grid), truth))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(json_err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.rows(), self.0.cols())
    }

    #[getter]
    fn n_active(&self) -> usize {
        self.0.n_active()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.0.feature_names().to_vec()
    }

    /// Row-major `n_active × n_features` values.
    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        self.0.features().to_vec()
    }

    /// `(row, col)` of every active cell.
    #[getter]
    fn positions(&self) -> Vec<(usize, usize)> {
        (0..self.0.n_active()).map(|id| self.0.cell_position(id)).collect()
    }

    #[getter]
    fn centroids(&self) -> Vec<(f64, f64)> {
        self.0.centroids().into_iter().map(|p| (p.lat, p.lon)).collect()
    }

    /// Runs the whole pipeline. `config` is an optional JSON object
    /// overriding defaults (`autoencoder`, `som`, `refine`, ...);
    /// `dump_stages` persists every stage artifact into a directory.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (features, k, seed=0, threshold_km=None, config=None, dump_stages=None))]
    fn run(
        &self,
        py: Python<'_>,
        features: Vec<String>,
        k: usize,
        seed: u64,
        threshold_km: Option<f64>,
        config: Option<&str>,
        dump_stages: Option<PathBuf>,
    ) -> PyResult<Run> {
        let mut value = serde_json::to_value(PipelineConfig::new(features, k, seed)).map_err(json_err)?;
        if let Some(text) = config {
            let extra: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
            let (Some(base), Some(extra)) = (value.as_object_mut(), extra.as_object()) else {
                return Err(PyValueError::new_err("config must be a JSON object"));
            };
            base.extend(extra.clone());
        }
        let mut cfg: PipelineConfig = serde_json::from_value(value).map_err(json_err)?;
        if threshold_km.is_some() {
            cfg.threshold_km = threshold_km;
        }
        let grid = &self.0;
        let result = py.detach(|| match &dump_stages {
            Some(dir) => georegion::run_pipeline_to(grid, &cfg, dir),
            None => georegion::run_pipeline(grid, &cfg),
        });
        result.map(Run).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(rows={}, cols={}, active={}, features={:?})",
            self.0.rows(),
            self.0.cols(),
            self.0.n_active(),
            self.0.feature_names()
        )
    }
}

/// Artifacts of one completed run.
#[pyclass(frozen, module = "georegion_py")]
struct Run(RunArtifacts);

#[pymethods]
impl Run {
    /// Region label per active cell, `0..region_count`.
    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.0.labels().to_vec()
    }

    #[getter]
    fn region_count(&self) -> usize {
        self.0.region_count()
    }

    #[getter]
    fn threshold_km(&self) -> f64 {
        self.0.threshold.threshold_km
    }

    /// SOM neuron per active cell.
    #[getter]
    fn som_labels(&self) -> Vec<usize> {
        self.0.som.assignment.bmu.clone()
    }

    #[getter]
    fn hashes(&self) -> BTreeMap<String, String> {
        self.0.hashes.clone()
    }

    #[getter]
    fn geojson(&self) -> String {
        String::from_utf8_lossy(&self.0.geojson).into_owned()
    }

    fn metrics_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0.metrics).map_err(json_err)
    }

    /// JSON payload of one stage (`standardized`, `threshold`, `embedding`,
    /// `som`, `regions`, `metrics`).
    fn stage_json(&self, stage: &str) -> PyResult<String> {
        let a = &self.0;
        let out = match stage.parse::<Stage>().map_err(to_py)? {
            Stage::Standardized => serde_json::to_string(&a.standardized),
            Stage::Threshold => serde_json::to_string(&a.threshold),
            Stage::Embedding => serde_json::to_string(&a.embedding),
            Stage::Som => serde_json::to_string(&a.som),
            Stage::Regions => serde_json::to_string(&a.regions),
            Stage::Metrics => serde_json::to_string(&a.metrics),
        };
        out.map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!("Run(regions={}, threshold_km={:.3})", self.0.region_count(), self.0.threshold.threshold_km)
    }
}

#[pymodule]
fn georegion_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(haversine_km, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(suggest_features, m)?)?;
    m.add_class::<Grid>()?;
    m.add_class::<Run>()?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("GeoregionError", m.py().get_type::<GeoregionError>())?;
    Ok(())
}
