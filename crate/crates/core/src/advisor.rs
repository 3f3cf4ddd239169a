//! Feature suggestion, dataset summaries and local geocoding.
//!
//! Suggestions come from a static catalog of hazard relevance weights.
//! [`SuggestionProvider`] is the seam for other sources (for instance a
//! language-model adapter); the engine only ever sees ranked feature names.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_grid::{BoundingBox, GeoPoint, GridRaster};

const DEMO_CATALOG: &str = include_str!("../data/demo_catalog.json");
const DEMO_GAZETTEER: &str = include_str!("../data/demo_gazetteer.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    /// Hazard name to relevance weight in `(0, 1]`.
    pub hazards: BTreeMap<String, f64>,
    /// Grid column holding this feature; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_column: Option<String>,
}

impl CatalogEntry {
    pub fn column(&self) -> &str {
        self.source_column.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CatalogFile", into = "CatalogFile")]
pub struct FeatureCatalog {
    entries: Vec<CatalogEntry>,
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    features: Vec<CatalogEntry>,
}

impl TryFrom<CatalogFile> for FeatureCatalog {
    type Error = Error;

    fn try_from(f: CatalogFile) -> Result<Self> {
        FeatureCatalog::new(f.features)
    }
}

impl From<FeatureCatalog> for CatalogFile {
    fn from(c: FeatureCatalog) -> Self {
        CatalogFile { features: c.entries }
    }
}

impl FeatureCatalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self> {
        let mut names = std::collections::HashSet::new();
        let mut columns = std::collections::HashSet::new();
        for e in &entries {
            if !names.insert(e.name.as_str()) {
                return Err(Error::Schema(format!("duplicate catalog feature `{}`", e.name)));
            }
            if !columns.insert(e.column()) {
                return Err(Error::Schema(format!("duplicate source column `{}`", e.column())));
            }
            if e.hazards.is_empty() {
                return Err(Error::Schema(format!("feature `{}` has no hazard tags", e.name)));
            }
            if let Some((h, w)) = e.hazards.iter().find(|(_, &w)| !(w > 0.0 && w <= 1.0)) {
                return Err(Error::Schema(format!(
                    "feature `{}` weight {w} for `{h}` is outside (0, 1]",
                    e.name
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Twelve-feature catalog spanning socioeconomic, environmental and
    /// infrastructure indicators.
    pub fn demo() -> Self {
        Self::from_json(DEMO_CATALOG).expect("bundled catalog is valid")
    }

    fn by_column(&self) -> HashMap<&str, &CatalogEntry> {
        self.entries.iter().map(|e| (e.column(), e)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    /// Grid column name.
    pub feature: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

/// Anything that can rank candidate features for a hazard.
pub trait SuggestionProvider: Send + Sync {
    fn suggest(&self, hazard: &str, available: &[String]) -> Result<Vec<Suggestion>>;
}

impl SuggestionProvider for FeatureCatalog {
    fn suggest(&self, hazard: &str, available: &[String]) -> Result<Vec<Suggestion>> {
        suggest_features(self, hazard, available)
    }
}

fn normalize_hazard(h: &str) -> String {
    h.trim().to_lowercase()
}

/// Ranks `available` columns by the catalog weight for `hazard`
/// (descending), then by name. Untagged or uncatalogued columns score 0.
pub fn suggest_features(catalog: &FeatureCatalog, hazard: &str, available: &[String]) -> Result<Vec<Suggestion>> {
    let hazard = normalize_hazard(hazard);
    if hazard.is_empty() {
        return Err(Error::contract("hazard must be nonempty"));
    }
    if available.is_empty() {
        return Err(Error::contract("no features available"));
    }
    let lookup = catalog.by_column();
    let mut out: Vec<Suggestion> = available
        .iter()
        .map(|col| {
            let entry = lookup.get(col.as_str());
            let score = entry
                .and_then(|e| e.hazards.iter().find(|(h, _)| normalize_hazard(h) == hazard))
                .map_or(0.0, |(_, &w)| w);
            Suggestion {
                feature: col.clone(),
                score,
                description: entry.map(|e| e.description.clone()),
                category: entry.and_then(|e| e.category.clone()),
            }
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.feature.cmp(&b.feature)));
    out.dedup_by(|a, b| a.feature == b.feature);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub features: Vec<FeatureStats>,
    pub active_cells: usize,
    pub rows: usize,
    pub cols: usize,
    pub bbox: BoundingBox,
}

pub fn summarize_dataset(grid: &GridRaster) -> DatasetSummary {
    let n = grid.n_active() as f64;
    let features = grid
        .feature_names()
        .iter()
        .enumerate()
        .map(|(f, name)| {
            let col = grid.feature_column(f);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let first = col[0];
            let constant = col.iter().all(|&x| x == first);
            FeatureStats {
                name: name.clone(),
                min: col.iter().copied().fold(f64::INFINITY, f64::min),
                max: col.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean: if constant { first } else { mean },
                std: if constant { 0.0 } else { var.sqrt() },
                missing: grid.missing_counts()[f],
            }
        })
        .collect();
    DatasetSummary {
        features,
        active_cells: grid.n_active(),
        rows: grid.rows(),
        cols: grid.cols(),
        bbox: grid.bounding_box(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub name: String,
    pub point: GeoPoint,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GazetteerFile", into = "GazetteerFile")]
pub struct Gazetteer {
    places: Vec<Place>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct GazetteerFile {
    places: Vec<Place>,
}

impl TryFrom<GazetteerFile> for Gazetteer {
    type Error = Error;

    fn try_from(f: GazetteerFile) -> Result<Self> {
        Gazetteer::new(f.places)
    }
}

impl From<Gazetteer> for GazetteerFile {
    fn from(g: Gazetteer) -> Self {
        GazetteerFile { places: g.places }
    }
}

/// Lowercased, trimmed, inner whitespace collapsed to single spaces.
pub fn normalize_place(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl Gazetteer {
    pub fn new(places: Vec<Place>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, p) in places.iter().enumerate() {
            if !p.point.is_valid() {
                return Err(Error::Schema(format!("place `{}` has an invalid point", p.name)));
            }
            if index.insert(normalize_place(&p.name), i).is_some() {
                return Err(Error::Schema(format!("duplicate place name `{}`", p.name)));
            }
        }
        Ok(Self { places, index })
    }

    pub fn places(&self) -> &[Place] {
        &self.places
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn demo() -> Self {
        Self::from_json(DEMO_GAZETTEER).expect("bundled gazetteer is valid")
    }
}

/// Exact lookup after normalization. A miss lists places whose normalized
/// name starts with the query, or that the query starts with.
pub fn geocode<'a>(gazetteer: &'a Gazetteer, query: &str) -> Result<&'a Place> {
    let key = normalize_place(query);
    if key.is_empty() {
        return Err(Error::contract("empty place query"));
    }
    if let Some(&i) = gazetteer.index.get(&key) {
        return Ok(&gazetteer.places[i]);
    }
    let mut near: Vec<&str> = gazetteer
        .places
        .iter()
        .filter(|p| {
            let n = normalize_place(&p.name);
            n.starts_with(&key) || key.starts_with(&n)
        })
        .map(|p| p.name.as_str())
        .collect();
    near.sort_unstable();
    let hint = if near.is_empty() {
        String::new()
    } else {
        format!("; did you mean: {}", near.join(", "))
    };
    Err(Error::NotFound(format!("place `{}`{hint}", query.trim())))
}
