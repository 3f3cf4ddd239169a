//! Embedding, clustering and refining as one deterministic run, with every
//! stage written to a run directory as a hash-stamped JSON artifact before
//! the next stage starts.
//!
//! Stage files wrap their payload as
//! `{"stage": <name>, "sha256": <hex>, "data": <payload>}` where the hash
//! covers the exact payload bytes, so any edit to a stored file is caught
//! on reload.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::embedding::{encode, train_autoencoder, AutoencoderConfig, AutoencoderModel, TrainingLog};
use crate::error::{Error, FieldError, Result};
use crate::geo_grid::{
    build_adjacency, export_regions_geojson, standardize, AdjacencyIndex, AdjacencyScheme, GridRaster,
    StandardizationParams,
};
use crate::metrics::PartitionMetrics;
use crate::refine::{grow_to_k, initial_regions, region_summaries, CellData, MergeTrace, RefineConfig, RegionPartition, RegionSummary};
use crate::scsom::{assign_labels, fit, init_representatives, LabelAssignment, SomConfig, SomModel};
use crate::variogram::{geographic_threshold, ThresholdEstimate, DEFAULT_BINS};

pub const CONFIG_FILE: &str = "config.json";
pub const GEOJSON_FILE: &str = "regions.geojson";

/// Which per-cell vectors region means and merge costs are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionFeatures {
    /// Each cell carries the weight of its best matching unit.
    #[default]
    BmuWeight,
    Latent,
    Standardized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub features: Vec<String>,
    pub k: usize,
    pub seed: u64,
    /// Skips variogram estimation when set.
    #[serde(default)]
    pub threshold_km: Option<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub autoencoder: AutoencoderConfig,
    #[serde(default)]
    pub som: SomConfig,
    #[serde(default)]
    pub refine: RefineConfig,
    #[serde(default)]
    pub region_features: RegionFeatures,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

impl PipelineConfig {
    pub fn new(features: Vec<String>, k: usize, seed: u64) -> Self {
        Self {
            features,
            k,
            seed,
            threshold_km: None,
            bins: DEFAULT_BINS,
            autoencoder: AutoencoderConfig::default(),
            som: SomConfig::default(),
            refine: RefineConfig::default(),
            region_features: RegionFeatures::default(),
        }
    }

    /// Field-level checks against a grid. Returns every problem found.
    pub fn validate(&self, grid: &GridRaster) -> Result<()> {
        let mut errs = Vec::new();
        if self.features.is_empty() {
            errs.push(FieldError::new("features", "select at least one feature"));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, f) in self.features.iter().enumerate() {
            if grid.feature_index(f).is_none() {
                errs.push(FieldError::new(format!("features[{i}]"), format!("unknown feature `{f}`")));
            }
            if !seen.insert(f) {
                errs.push(FieldError::new(format!("features[{i}]"), format!("duplicate feature `{f}`")));
            }
        }
        if self.k == 0 {
            errs.push(FieldError::new("k", "must be at least 1"));
        }
        if let Some(t) = self.threshold_km {
            if !(t.is_finite() && t > 0.0) {
                errs.push(FieldError::new("threshold_km", "must be positive"));
            }
        }
        if self.bins == 0 {
            errs.push(FieldError::new("bins", "must be at least 1"));
        }
        let ae = &self.autoencoder;
        if ae.epochs == 0 {
            errs.push(FieldError::new("autoencoder.epochs", "must be at least 1"));
        }
        if !(ae.step.is_finite() && ae.step > 0.0) {
            errs.push(FieldError::new("autoencoder.step", "must be positive"));
        }
        if ae.hidden_dim == Some(0) {
            errs.push(FieldError::new("autoencoder.hidden_dim", "must be positive"));
        }
        if let Some(l) = ae.latent_dim {
            if l <= self.features.len() {
                errs.push(FieldError::new(
                    "autoencoder.latent_dim",
                    "must exceed the number of selected features",
                ));
            }
        }
        if self.som.epochs == 0 {
            errs.push(FieldError::new("som.epochs", "must be at least 1"));
        }
        let frac = self.som.sigma_final_fraction;
        if !(frac.is_finite() && frac > 0.0) {
            errs.push(FieldError::new("som.sigma_final_fraction", "must be positive"));
        }
        if self.refine.min_size == 0 {
            errs.push(FieldError::new("refine.min_size", "must be at least 1"));
        }
        if !(self.refine.lambda_geo.is_finite() && self.refine.lambda_geo >= 0.0) {
            errs.push(FieldError::new("refine.lambda_geo", "must be nonnegative"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Region-count checks that need only the grid: at most one region per
    /// cell and at least one per disconnected part.
    pub fn check_feasible(&self, grid: &GridRaster) -> Result<()> {
        let n = grid.n_active();
        if self.k > n {
            return Err(Error::Infeasible(format!("k = {} exceeds the {n} active cells", self.k)));
        }
        let parts = build_adjacency(grid, AdjacencyScheme::Rook).component_count();
        if self.k < parts {
            return Err(Error::Infeasible(format!(
                "k = {} is below the {parts} disconnected parts of the grid",
                self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Standardized,
    Threshold,
    Embedding,
    Som,
    Regions,
    Metrics,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Standardized,
        Stage::Threshold,
        Stage::Embedding,
        Stage::Som,
        Stage::Regions,
        Stage::Metrics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Standardized => "standardized",
            Stage::Threshold => "threshold",
            Stage::Embedding => "embedding",
            Stage::Som => "som",
            Stage::Regions => "regions",
            Stage::Metrics => "metrics",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.json", self.as_str())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::NotFound(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedStage {
    pub params: StandardizationParams,
    pub grid: GridRaster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStage {
    pub threshold_km: f64,
    /// Absent when the threshold was supplied in the config.
    pub estimate: Option<ThresholdEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStage {
    pub model: AutoencoderModel,
    pub log: TrainingLog,
    pub latent: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomStage {
    pub model: SomModel,
    pub epoch_errors: Vec<f64>,
    pub assignment: LabelAssignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionsStage {
    pub partition: RegionPartition,
    pub trace: MergeTrace,
    pub summaries: Vec<RegionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", content = "data", rename_all = "snake_case")]
pub enum StageArtifact {
    Standardized(StandardizedStage),
    Threshold(ThresholdStage),
    Embedding(EmbeddingStage),
    Som(SomStage),
    Regions(RegionsStage),
    Metrics(PartitionMetrics),
}

/// Everything a completed run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub config: PipelineConfig,
    pub standardized: StandardizedStage,
    pub threshold: ThresholdStage,
    pub embedding: EmbeddingStage,
    pub som: SomStage,
    pub regions: RegionsStage,
    pub metrics: PartitionMetrics,
    pub geojson: Vec<u8>,
    /// SHA-256 (hex) of each stage payload, plus `regions.geojson`.
    pub hashes: BTreeMap<String, String>,
}

impl RunArtifacts {
    pub fn labels(&self) -> &[usize] {
        &self.regions.partition.labels
    }

    pub fn region_count(&self) -> usize {
        self.regions.partition.region_count()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Deserialize)]
struct Envelope<'a> {
    stage: String,
    sha256: String,
    #[serde(borrow)]
    data: &'a RawValue,
}

/// Serializes a stage payload; returns the file bytes and payload hash.
fn encode_stage<T: Serialize>(stage: Stage, data: &T) -> Result<(Vec<u8>, String)> {
    let payload = serde_json::to_string(data)?;
    let hash = sha256_hex(payload.as_bytes());
    let file = format!(r#"{{"stage":"{}","sha256":"{}","data":{}}}"#, stage.as_str(), hash, payload);
    Ok((file.into_bytes(), hash))
}

/// Stage sink: computes hashes and, when a directory is given, writes files.
struct Recorder<'a> {
    dir: Option<&'a Path>,
    hashes: BTreeMap<String, String>,
}

impl Recorder<'_> {
    fn record<T: Serialize>(&mut self, stage: Stage, data: &T) -> Result<()> {
        let (bytes, hash) = encode_stage(stage, data)?;
        if let Some(dir) = self.dir {
            std::fs::write(dir.join(stage.file_name()), bytes)?;
        }
        self.hashes.insert(stage.as_str().to_string(), hash);
        Ok(())
    }
}

/// Runs the whole pipeline in memory.
pub fn run_pipeline(grid: &GridRaster, config: &PipelineConfig) -> Result<RunArtifacts> {
    execute(grid, config, None)
}

/// Runs the pipeline, persisting each stage under `dir` (created if needed).
pub fn run_pipeline_to(grid: &GridRaster, config: &PipelineConfig, dir: &Path) -> Result<RunArtifacts> {
    std::fs::create_dir_all(dir)?;
    execute(grid, config, Some(dir))
}

fn execute(grid: &GridRaster, config: &PipelineConfig, dir: Option<&Path>) -> Result<RunArtifacts> {
    config.validate(grid)?;
    config.check_feasible(grid)?;
    if let Some(dir) = dir {
        std::fs::write(dir.join(CONFIG_FILE), serde_json::to_vec_pretty(config)?)?;
    }
    let mut rec = Recorder { dir, hashes: BTreeMap::new() };

    let raw = grid.select_features(&config.features)?;
    let (std_grid, params) = standardize(&raw);
    let standardized = StandardizedStage { params, grid: std_grid };
    rec.record(Stage::Standardized, &standardized)?;
    let std_grid = &standardized.grid;
    let centroids = std_grid.centroids();

    let threshold = match config.threshold_km {
        Some(t) => ThresholdStage { threshold_km: t, estimate: None },
        None => {
            let est = geographic_threshold(std_grid, config.bins).map_err(|e| e.in_stage("threshold"))?;
            ThresholdStage { threshold_km: est.threshold_km, estimate: Some(est) }
        }
    };
    rec.record(Stage::Threshold, &threshold)?;

    let embedding = (|| {
        let (model, log) = train_autoencoder(std_grid.features(), &config.autoencoder, config.seed)?;
        let latent = encode(&model, std_grid.features())?;
        Ok::<_, Error>(EmbeddingStage { model, log, latent })
    })()
    .map_err(|e| e.in_stage("embedding"))?;
    rec.record(Stage::Embedding, &embedding)?;
    let latent = &embedding.latent;

    let som = (|| {
        let init = init_representatives(latent, &centroids, threshold.threshold_km)?;
        let (model, epoch_errors) = fit(&init, latent, &centroids, &config.som)?;
        let assignment = assign_labels(&model, latent, &centroids)?;
        Ok::<_, Error>(SomStage { model, epoch_errors, assignment })
    })()
    .map_err(|e| e.in_stage("som"))?;
    rec.record(Stage::Som, &som)?;

    let adjacency = build_adjacency(std_grid, AdjacencyScheme::Rook);
    let regions = refine_stage(config, &raw, std_grid, &adjacency, latent, &som, &centroids)
        .map_err(|e| e.in_stage("regions"))?;
    rec.record(Stage::Regions, &regions)?;

    let labels = &regions.partition.labels;
    let metrics = PartitionMetrics::compute(labels, std_grid.features(), std_grid, &adjacency)
        .map_err(|e| e.in_stage("metrics"))?;
    rec.record(Stage::Metrics, &metrics)?;

    let geojson = export_regions_geojson(std_grid, labels)?.to_bytes();
    if let Some(dir) = dir {
        std::fs::write(dir.join(GEOJSON_FILE), &geojson)?;
    }
    rec.hashes.insert(GEOJSON_FILE.to_string(), sha256_hex(&geojson));

    Ok(RunArtifacts {
        config: config.clone(),
        standardized,
        threshold,
        embedding,
        som,
        regions,
        metrics,
        geojson,
        hashes: rec.hashes,
    })
}

fn refine_stage(
    config: &PipelineConfig,
    raw: &GridRaster,
    std_grid: &GridRaster,
    adjacency: &AdjacencyIndex,
    latent: &[Vec<f64>],
    som: &SomStage,
    centroids: &[crate::geo_grid::GeoPoint],
) -> Result<RegionsStage> {
    let bmu_vectors: Vec<Vec<f64>>;
    let vectors: &[Vec<f64>] = match config.region_features {
        RegionFeatures::BmuWeight => {
            bmu_vectors = som.assignment.bmu.iter().map(|&b| som.model.neurons[b].weight.clone()).collect();
            &bmu_vectors
        }
        RegionFeatures::Latent => latent,
        RegionFeatures::Standardized => std_grid.features(),
    };
    let cells = CellData::new(vectors, centroids)?;
    let initial = initial_regions(&som.assignment.bmu, adjacency, cells)?;
    if config.k > initial.region_count() {
        return Err(Error::Infeasible(format!(
            "k = {} exceeds the {} initial regions produced by the map",
            config.k,
            initial.region_count()
        )));
    }
    let (partition, trace) = grow_to_k(&initial, adjacency, cells, config.k, &config.refine)?;
    let summaries = region_summaries(&partition, raw)?;
    Ok(RegionsStage { partition, trace, summaries })
}

fn stage_path(dir: &Path, stage: Stage) -> PathBuf {
    dir.join(stage.file_name())
}

/// Reads a stage file and returns its verified payload bytes.
pub fn read_stage_payload(dir: &Path, stage: Stage) -> Result<(String, String)> {
    let path = stage_path(dir, stage);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::NotFound(format!("stage `{stage}` in {}", dir.display())));
        }
        Err(e) if e.kind() == std::io::ErrorKind::InvalidData => {
            return Err(Error::Corruption { path, message: e.to_string() });
        }
        Err(e) => return Err(e.into()),
    };
    let corrupt = |message: String| Error::Corruption { path: path.clone(), message };
    let env: Envelope = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    if env.stage != stage.as_str() {
        return Err(corrupt(format!("file holds stage `{}`", env.stage)));
    }
    let actual = sha256_hex(env.data.get().as_bytes());
    if actual != env.sha256 {
        return Err(corrupt(format!("hash mismatch: recorded {}, computed {actual}", env.sha256)));
    }
    Ok((env.data.get().to_string(), actual))
}

fn load_typed<T: DeserializeOwned>(dir: &Path, stage: Stage) -> Result<(T, String)> {
    let (payload, hash) = read_stage_payload(dir, stage)?;
    let value = serde_json::from_str(&payload).map_err(|e| Error::Corruption {
        path: stage_path(dir, stage),
        message: e.to_string(),
    })?;
    Ok((value, hash))
}

/// Loads and verifies one stage artifact by name.
pub fn load_stage(dir: &Path, name: &str) -> Result<StageArtifact> {
    let stage: Stage = name.parse()?;
    Ok(match stage {
        Stage::Standardized => StageArtifact::Standardized(load_typed(dir, stage)?.0),
        Stage::Threshold => StageArtifact::Threshold(load_typed(dir, stage)?.0),
        Stage::Embedding => StageArtifact::Embedding(load_typed(dir, stage)?.0),
        Stage::Som => StageArtifact::Som(load_typed(dir, stage)?.0),
        Stage::Regions => StageArtifact::Regions(load_typed(dir, stage)?.0),
        Stage::Metrics => StageArtifact::Metrics(load_typed(dir, stage)?.0),
    })
}

/// Stages with a file present in `dir`, in pipeline order.
pub fn completed_stages(dir: &Path) -> Vec<Stage> {
    Stage::ALL.into_iter().filter(|s| stage_path(dir, *s).exists()).collect()
}

/// Reloads a complete run directory, verifying every stage hash.
pub fn load_run(dir: &Path) -> Result<RunArtifacts> {
    let config_path = dir.join(CONFIG_FILE);
    let config: PipelineConfig = match std::fs::read(&config_path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| Error::Corruption {
            path: config_path.clone(),
            message: e.to_string(),
        })?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::NotFound(format!("run config in {}", dir.display())));
        }
        Err(e) => return Err(e.into()),
    };
    let mut hashes = BTreeMap::new();
    let mut take = |stage: Stage, hash: String| {
        hashes.insert(stage.as_str().to_string(), hash);
    };
    let (standardized, h) = load_typed(dir, Stage::Standardized)?;
    take(Stage::Standardized, h);
    let (threshold, h) = load_typed(dir, Stage::Threshold)?;
    take(Stage::Threshold, h);
    let (embedding, h) = load_typed(dir, Stage::Embedding)?;
    take(Stage::Embedding, h);
    let (som, h) = load_typed(dir, Stage::Som)?;
    take(Stage::Som, h);
    let (regions, h) = load_typed(dir, Stage::Regions)?;
    take(Stage::Regions, h);
    let (metrics, h) = load_typed(dir, Stage::Metrics)?;
    take(Stage::Metrics, h);
    let geojson = std::fs::read(dir.join(GEOJSON_FILE))?;
    hashes.insert(GEOJSON_FILE.to_string(), sha256_hex(&geojson));
    Ok(RunArtifacts {
        config,
        standardized,
        threshold,
        embedding,
        som,
        regions,
        metrics,
        geojson,
        hashes,
    })
}
