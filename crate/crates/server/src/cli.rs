//! `georegion` command line: one-shot runs, the HTTP service, and
//! synthetic grid generation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use georegion::advisor::{suggest_features, FeatureCatalog, Gazetteer};
use georegion::geo_grid::{load_grid_csv, GridSchema};
use georegion::synthetic::{DemoCity, PlantedBlocks};
use georegion::{run_pipeline, run_pipeline_to, Error, FieldError, GridRaster, PipelineConfig};
use serde_json::json;

use crate::api::{error_body, router};
use crate::session::{ServiceError, SessionStore};

#[derive(Debug, Parser)]
#[command(name = "georegion", version, about = "Contiguous planning regions from gridded features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline once and write the regions as GeoJSON.
    Run(RunArgs),
    /// Serve the session API over HTTP.
    Serve(ServeArgs),
    /// Write a synthetic grid CSV.
    Synth(SynthArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub hazard: String,
    /// Comma-separated column names, or `auto` for every column the
    /// catalog ties to the hazard.
    #[arg(long)]
    pub features: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub threshold_km: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also persist every stage artifact into this directory.
    #[arg(long)]
    pub dump_stages: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub gazetteer: PathBuf,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    /// Coastal city with the demo catalog's columns.
    Demo,
    /// 32×32 grid of four planted blocks (features f0..f2).
    Planted,
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "demo")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the bundled feature catalog here.
    #[arg(long)]
    pub catalog_out: Option<PathBuf>,
    /// Also write the bundled gazetteer here.
    #[arg(long)]
    pub gazetteer_out: Option<PathBuf>,
}

/// Process exit code for a failure.
pub fn exit_code(err: &ServiceError) -> i32 {
    match err {
        ServiceError::StaleGrid(_) => 5,
        ServiceError::Core(e) => match e.root() {
            Error::Validation(_) | Error::Parse { .. } | Error::Schema(_) | Error::Geometry(_) => 3,
            Error::NotFound(_) => 4,
            Error::Infeasible(_) => 5,
            _ => 1,
        },
    }
}

pub fn load_grid(path: &Path) -> Result<GridRaster, Error> {
    load_grid_csv(path, &GridSchema::default())
}

/// Resolves `--features`: an explicit list, or every grid column the
/// catalog scores above zero for the hazard.
pub fn resolve_features(list: &str, catalog: &FeatureCatalog, hazard: &str, grid: &GridRaster) -> Result<Vec<String>, Error> {
    if list.trim() != "auto" {
        return Ok(list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect());
    }
    let picked: Vec<String> = suggest_features(catalog, hazard, grid.feature_names())?
        .into_iter()
        .filter(|s| s.score > 0.0)
        .map(|s| s.feature)
        .collect();
    if picked.is_empty() {
        return Err(Error::Validation(vec![FieldError::new(
            "features",
            format!("the catalog tags no grid column for hazard `{hazard}`"),
        )]));
    }
    Ok(picked)
}

fn run(args: RunArgs) -> Result<(), ServiceError> {
    let grid = load_grid(&args.grid)?;
    let catalog = FeatureCatalog::load(&args.catalog)?;
    let features = resolve_features(&args.features, &catalog, &args.hazard, &grid)?;
    let mut config = PipelineConfig::new(features, args.k, args.seed);
    config.threshold_km = args.threshold_km;
    let run = match &args.dump_stages {
        Some(dir) => run_pipeline_to(&grid, &config, dir)?,
        None => run_pipeline(&grid, &config)?,
    };
    std::fs::write(&args.out, &run.geojson)?;
    let summary = json!({
        "out": args.out,
        "features": config.features,
        "regions": run.region_count(),
        "threshold_km": run.threshold.threshold_km,
        "within_region_sse": run.metrics.within_region_sse,
        "mean_compactness": run.metrics.mean_compactness,
        "hashes": run.hashes,
    });
    println!("{summary}");
    Ok(())
}

async fn serve(args: ServeArgs) -> Result<(), ServiceError> {
    let grid = load_grid(&args.grid)?;
    let catalog = FeatureCatalog::load(&args.catalog)?;
    let gazetteer = Gazetteer::load(&args.gazetteer)?;
    let store = Arc::new(SessionStore::open(&args.data_dir, grid, Arc::new(catalog), gazetteer)?);
    let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store)).await?;
    Ok(())
}

fn synth(args: SynthArgs) -> Result<(), ServiceError> {
    let grid = match args.kind {
        SynthKind::Demo => DemoCity::default().generate(args.seed)?,
        SynthKind::Planted => PlantedBlocks::default().generate(args.seed)?.0,
    };
    write_grid_csv(&grid, &args.out)?;
    if let Some(path) = &args.catalog_out {
        std::fs::write(path, serde_json::to_vec_pretty(&FeatureCatalog::demo())?)?;
    }
    if let Some(path) = &args.gazetteer_out {
        std::fs::write(path, serde_json::to_vec_pretty(&Gazetteer::demo())?)?;
    }
    println!("{}", json!({"out": args.out, "cells": grid.n_active(), "features": grid.feature_names()}));
    Ok(())
}

/// Writes `row,col,lat,lon,<features..>` for every active cell.
pub fn write_grid_csv(grid: &GridRaster, path: &Path) -> Result<(), Error> {
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["row".to_string(), "col".into(), "lat".into(), "lon".into()];
    header.extend(grid.feature_names().iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for id in 0..grid.n_active() {
        let (r, c) = grid.cell_position(id);
        let p = grid.centroid(id);
        let mut rec = vec![r.to_string(), c.to_string(), p.lat.to_string(), p.lon.to_string()];
        rec.extend(grid.features()[id].iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs a parsed command; errors come back for the caller to report.
pub fn dispatch(cli: Cli) -> Result<(), ServiceError> {
    match cli.command {
        Command::Run(a) => run(a),
        Command::Synth(a) => synth(a),
        Command::Serve(a) => tokio::runtime::Runtime::new()?.block_on(serve(a)),
    }
}

/// Entry point: exit status 0, or nonzero with one JSON error line on
/// stderr.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_body(&e));
            exit_code(&e)
        }
    }
}
