//! Command-line front end: each subcommand reads a JSON config, runs one
//! pipeline stage, and writes its outputs plus a manifest into the output
//! directory. Stages talk to each other only through files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Utc};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coverage::{
    build_grid, count_revisits, latitude_profile, latitude_profile_csv, region_revisits,
    revisit_map_csv, revisit_map_geojson, RegionTarget,
};
use crate::enrichment::{
    attach_covariates, build_regional_dataset, heatmap, heatmap_csv, load_boundaries,
    ratio_table, RegionalDataset,
};
use crate::propagator::{ground_track, GroundTrack};
use crate::stac::{
    harvest, HarvestJob, HarvestOptions, HarvestSummary, ReqwestTransport, SceneRecord,
    SceneStore,
};
use crate::stats::{
    gini_by_rank, lorenz_csv, minmax_normalize, ols_fit, regression_csv, rf_fit, rf_importance,
    with_fixed_effects, DesignMatrix,
};
use crate::tle::{load_tle_file, ConstellationSpec, TleRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING_UPSTREAM: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// bad config / bad flags → exit 2
    Config(String),
    /// a required upstream artifact has not been produced yet → exit 3
    MissingUpstream(String),
    /// anything else → exit 1
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::MissingUpstream(m) => write!(f, "missing upstream artifact: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::MissingUpstream(_) => EXIT_MISSING_UPSTREAM,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Everything a pipeline run needs, loaded from one JSON file. Secrets
/// never appear literally: `stac_token_env` names an environment variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolkitConfig {
    #[serde(default)]
    pub tle_files: Vec<PathBuf>,
    #[serde(default)]
    pub constellations: Vec<ConstellationSpec>,
    #[serde(default = "default_edge")]
    pub grid_edge_km: f64,
    #[serde(default = "default_buffer")]
    pub buffer_km: f64,
    #[serde(default = "default_step")]
    pub step_seconds: f64,
    #[serde(default = "default_gap")]
    pub gap_threshold_s: f64,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    #[serde(default)]
    pub stac_jobs: Vec<HarvestJob>,
    #[serde(default)]
    pub stac_token_env: Option<String>,
    #[serde(default)]
    pub boundaries: Option<PathBuf>,
    #[serde(default)]
    pub covariates: Option<PathBuf>,
    #[serde(default)]
    pub cloud_endpoint: Option<String>,
    pub store_dir: PathBuf,
    pub out_dir: PathBuf,
    /// archive year range for enrichment; derived from the scenes when absent
    #[serde(default)]
    pub years: Option<(i32, i32)>,
    #[serde(default)]
    pub seed: u64,
}

fn default_edge() -> f64 {
    500.0
}
fn default_buffer() -> f64 {
    250.0
}
fn default_step() -> f64 {
    60.0
}
fn default_gap() -> f64 {
    300.0
}

impl ToolkitConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: ToolkitConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.window_start >= self.window_end {
            return Err(CliError::Config("window is empty".into()));
        }
        if !(50.0..=5000.0).contains(&self.grid_edge_km) {
            return Err(CliError::Config("grid_edge_km outside [50, 5000]".into()));
        }
        if self.buffer_km <= 0.0 || self.step_seconds <= 0.0 || self.gap_threshold_s <= 0.0 {
            return Err(CliError::Config(
                "buffer_km, step_seconds, gap_threshold_s must be positive".into(),
            ));
        }
        for path in &self.tle_files {
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "tle file not found: {}",
                    path.display()
                )));
            }
        }
        for spec in &self.constellations {
            spec.validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        for job in &self.stac_jobs {
            job.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    fn window_days(&self) -> f64 {
        (self.window_end - self.window_start).num_seconds() as f64 / 86_400.0
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "coveragescope",
    version,
    about = "Satellite coverage-bias toolkit: revisit simulation, archive harvesting, regional statistics"
)]
pub struct Cli {
    /// path to the JSON config
    #[arg(long, global = true, default_value = "coveragescope.json")]
    pub config: PathBuf,
    /// output directory (overrides config out_dir)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// worker cap for internally parallel stages
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// RNG seed (overrides config seed)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate theoretical revisits over the configured window
    Revisit,
    /// Pull scene metadata from the configured STAC endpoints into the store
    Harvest,
    /// Join the scene store to regions and covariates
    Enrich,
    /// Fit a regression model on the regional dataset
    Regress {
        /// model 1..4 (covariates added cumulatively)
        #[arg(long, default_value_t = 4)]
        model: u8,
        #[arg(long, default_value = "all")]
        variant: RegressVariant,
    },
    /// Lorenz curve and Gini of image counts over the SHDI ranking
    Gini,
    /// Revisit-to-archive ratio table per constellation and resolution bin
    Ratio,
    /// Scene-density cube over a bounding box
    Heatmap {
        /// lon_min,lat_min,lon_max,lat_max
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        bbox: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        cell_size_deg: f64,
        /// "month" or "year"
        #[arg(long, default_value = "month")]
        bucket: String,
    },
    /// Run the full analysis battery over existing upstream outputs
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RegressVariant {
    All,
    PlanetOnly,
    FixedEffects,
    IncomeIndex,
    VhrOnly,
}

impl RegressVariant {
    fn label(&self) -> &'static str {
        match self {
            RegressVariant::All => "all",
            RegressVariant::PlanetOnly => "planet_only",
            RegressVariant::FixedEffects => "fixed_effects",
            RegressVariant::IncomeIndex => "income_index",
            RegressVariant::VhrOnly => "vhr_only",
        }
    }
}

/// Per-command provenance record: enough to reproduce the outputs.
#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    toolkit_version: &'static str,
    created_at: DateTime<Utc>,
    parameters: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

struct OutputWriter {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutputWriter {
    fn new(dir: &Path, command: &str, parameters: serde_json::Value) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(runtime)?;
        Ok(OutputWriter {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                toolkit_version: env!("CARGO_PKG_VERSION"),
                created_at: Utc::now(),
                parameters,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        })
    }

    fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        self.manifest
            .inputs
            .insert(path.display().to_string(), hash_file(path)?);
        Ok(())
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        self.manifest
            .outputs
            .insert(name.to_string(), sha256_hex(contents));
        Ok(path)
    }

    fn finish(self) -> Result<(), CliError> {
        let name = format!("{}_manifest.json", self.manifest.command);
        let text = serde_json::to_string_pretty(&self.manifest).map_err(runtime)?;
        std::fs::write(self.dir.join(name), text).map_err(runtime)?;
        Ok(())
    }
}

/// Entry point used by main(); returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("coveragescope: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = ToolkitConfig::load(&cli.config)?;
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Revisit => cmd_revisit(&cfg),
        Command::Harvest => cmd_harvest(&cfg),
        Command::Enrich => cmd_enrich(&cfg),
        Command::Regress { model, variant } => cmd_regress(&cfg, *model, *variant),
        Command::Gini => cmd_gini(&cfg),
        Command::Ratio => cmd_ratio(&cfg),
        Command::Heatmap {
            bbox,
            cell_size_deg,
            bucket,
        } => {
            let bbox: [f64; 4] = bbox
                .as_slice()
                .try_into()
                .map_err(|_| CliError::Config("bbox needs exactly four numbers".into()))?;
            cmd_heatmap(&cfg, bbox, *cell_size_deg, bucket)
        }
        Command::Report => cmd_report(&cfg),
    }
}

fn load_all_tles(cfg: &ToolkitConfig) -> Result<Vec<TleRecord>, CliError> {
    if cfg.tle_files.is_empty() {
        return Err(CliError::Config("no tle_files configured".into()));
    }
    let mut records = Vec::new();
    for path in &cfg.tle_files {
        let (recs, report) = load_tle_file(path).map_err(runtime)?;
        for fail in &report.failures {
            eprintln!(
                "coveragescope: skipping entry at line {} of {}: {}",
                fail.line_no,
                path.display(),
                fail.error
            );
        }
        records.extend(recs);
    }
    if records.is_empty() {
        return Err(CliError::Config("no usable TLE records".into()));
    }
    Ok(records)
}

fn build_tracks(cfg: &ToolkitConfig, records: &[TleRecord]) -> Result<Vec<GroundTrack>, CliError> {
    records
        .iter()
        .map(|r| {
            ground_track(r, cfg.window_start, cfg.window_end, cfg.step_seconds).map_err(runtime)
        })
        .collect()
}

pub fn cmd_revisit(cfg: &ToolkitConfig) -> Result<(), CliError> {
    let records = load_all_tles(cfg)?;
    let params = serde_json::json!({
        "grid_edge_km": cfg.grid_edge_km,
        "buffer_km": cfg.buffer_km,
        "step_seconds": cfg.step_seconds,
        "gap_threshold_s": cfg.gap_threshold_s,
        "window_start": cfg.window_start,
        "window_end": cfg.window_end,
        "satellites": records.iter().map(|r| r.norad_id).collect::<Vec<_>>(),
    });
    let mut out = OutputWriter::new(&cfg.out_dir, "revisit", params)?;
    for path in &cfg.tle_files {
        out.record_input(path)?;
    }
    let grid = build_grid(cfg.grid_edge_km).map_err(runtime)?;
    let tracks = build_tracks(cfg, &records)?;
    let (map, events) =
        count_revisits(&tracks, &grid, cfg.buffer_km, cfg.gap_threshold_s).map_err(runtime)?;
    out.write("revisit_map.csv", revisit_map_csv(&map, &grid).as_bytes())?;
    let geojson = serde_json::to_string_pretty(&revisit_map_geojson(&map, &grid)).map_err(runtime)?;
    out.write("revisit_map.geojson", geojson.as_bytes())?;
    let profile = latitude_profile(&map, &grid);
    out.write("latitude_profile.csv", latitude_profile_csv(&profile).as_bytes())?;
    let mut ndjson = String::new();
    for ev in &events {
        ndjson.push_str(&serde_json::to_string(ev).map_err(runtime)?);
        ndjson.push('\n');
    }
    out.write("pass_events.ndjson", ndjson.as_bytes())?;
    out.finish()
}

pub fn cmd_harvest(cfg: &ToolkitConfig) -> Result<(), CliError> {
    if cfg.stac_jobs.is_empty() {
        return Err(CliError::Config("no stac_jobs configured".into()));
    }
    let token = match &cfg.stac_token_env {
        Some(var) => std::env::var(var).ok(),
        None => None,
    };
    let transport = ReqwestTransport::new(token);
    let mut store = SceneStore::open(&cfg.store_dir).map_err(runtime)?;
    let opts = HarvestOptions::default();
    let mut summaries: BTreeMap<String, HarvestSummary> = BTreeMap::new();
    for job in &cfg.stac_jobs {
        let summary = harvest(&transport, job, &mut store, &opts).map_err(runtime)?;
        summaries.insert(format!("{}:{}", job.provider, job.fingerprint()), summary);
    }
    let params = serde_json::json!({
        "store_dir": cfg.store_dir,
        "jobs": cfg.stac_jobs.iter().map(|j| j.fingerprint()).collect::<Vec<_>>(),
    });
    let mut out = OutputWriter::new(&cfg.out_dir, "harvest", params)?;
    let text = serde_json::to_string_pretty(&summaries).map_err(runtime)?;
    out.write("harvest_summary.json", text.as_bytes())?;
    out.finish()
}

fn open_store(cfg: &ToolkitConfig) -> Result<SceneStore, CliError> {
    if !cfg.store_dir.exists() {
        return Err(CliError::MissingUpstream(format!(
            "scene store {} does not exist; run `coveragescope harvest` first",
            cfg.store_dir.display()
        )));
    }
    SceneStore::open(&cfg.store_dir).map_err(runtime)
}

fn load_regions(cfg: &ToolkitConfig) -> Result<Vec<crate::enrichment::Region>, CliError> {
    let path = cfg
        .boundaries
        .as_ref()
        .ok_or_else(|| CliError::Config("boundaries path not configured".into()))?;
    if !path.exists() {
        return Err(CliError::MissingUpstream(format!(
            "boundary file {} does not exist",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path).map_err(runtime)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut regions = load_boundaries(&value).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(cov) = &cfg.covariates {
        if !cov.exists() {
            return Err(CliError::MissingUpstream(format!(
                "covariate file {} does not exist",
                cov.display()
            )));
        }
        let csv_text = std::fs::read_to_string(cov).map_err(runtime)?;
        attach_covariates(&mut regions, &csv_text)
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(regions)
}

fn archive_years(cfg: &ToolkitConfig, scenes: &[SceneRecord]) -> (i32, i32) {
    if let Some(years) = cfg.years {
        return years;
    }
    let mut min = i32::MAX;
    let mut max = i32::MIN;
    for s in scenes {
        min = min.min(s.acquired_at.year());
        max = max.max(s.acquired_at.year());
    }
    if min > max {
        (cfg.window_start.year(), cfg.window_end.year())
    } else {
        (min, max)
    }
}

const REGIONAL_HEADER: &str = "region_id,country_code,total_images,vhr_images,planet_images,images_00_05,images_05_10,images_10_30,images_30p,shdi,income_index,households,area_km2,abs_lat,abs_lon,cloud_cover_mean,missing_covariate";

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Flatten the regional dataset into the tabular layout the analysis
/// commands read back. Column meanings: `vhr_images` is everything under
/// 1 m GSD; `planet_images` counts scenes whose provider is "planet".
pub fn regional_csv(dataset: &RegionalDataset) -> String {
    let mut out = String::from(REGIONAL_HEADER);
    out.push('\n');
    for row in &dataset.rows {
        let bin = |label: &str| *row.per_bin.get(label).unwrap_or(&0);
        let vhr = bin("0.0-0.5") + bin("0.5-1.0");
        let planet: u64 = row
            .counts
            .iter()
            .filter(|((provider, _, _), _)| provider == "planet")
            .map(|(_, n)| *n)
            .sum();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.region_id,
            row.country_code,
            row.total_images,
            vhr,
            planet,
            bin("0.0-0.5"),
            bin("0.5-1.0"),
            bin("1.0-3.0"),
            bin("3.0+"),
            opt_cell(row.shdi),
            opt_cell(row.income_index),
            opt_cell(row.households),
            row.area_km2,
            row.abs_lat,
            row.abs_lon,
            opt_cell(row.cloud_cover_mean),
            row.missing_covariate,
        ));
    }
    out
}

pub fn cmd_enrich(cfg: &ToolkitConfig) -> Result<(), CliError> {
    let store = open_store(cfg)?;
    let scenes = store.iter_records().map_err(runtime)?;
    let mut regions = load_regions(cfg)?;
    if let Some(endpoint) = &cfg.cloud_endpoint {
        let transport = ReqwestTransport::new(None);
        let year = archive_years(cfg, &scenes).1;
        for region in regions.iter_mut() {
            if region.cloud_cover_mean.is_none() {
                match crate::enrichment::fetch_cloud_cover(
                    &transport,
                    endpoint,
                    &region.centroid,
                    year,
                ) {
                    Ok((mean, _complete)) => region.cloud_cover_mean = Some(mean),
                    Err(e) => eprintln!(
                        "coveragescope: cloud cover unavailable for {}: {e}",
                        region.region_id
                    ),
                }
            }
        }
    }
    let years = archive_years(cfg, &scenes);
    let dataset = build_regional_dataset(&scenes, &regions, years).map_err(runtime)?;
    let params = serde_json::json!({
        "store_dir": cfg.store_dir,
        "years": years,
        "n_regions": regions.len(),
    });
    let mut out = OutputWriter::new(&cfg.out_dir, "enrich", params)?;
    if let Some(b) = &cfg.boundaries {
        out.record_input(b)?;
    }
    if let Some(c) = &cfg.covariates {
        out.record_input(c)?;
    }
    out.write("regional_dataset.csv", regional_csv(&dataset).as_bytes())?;
    let summary = serde_json::json!({
        "n_regions": dataset.rows.len(),
        "unassigned_total": dataset.unassigned_total,
        "unassigned_per_bin": dataset.unassigned_per_bin,
        "years": dataset.years,
        "total_images": dataset.rows.iter().map(|r| r.total_images).sum::<u64>(),
    });
    out.write(
        "enrich_summary.json",
        serde_json::to_string_pretty(&summary).map_err(runtime)?.as_bytes(),
    )?;
    out.finish()
}

/// One row of the regional dataset as read back from CSV. Extra columns
/// are tolerated; optional covariates read as empty cells.
#[derive(Debug, Clone, Deserialize)]
pub struct RegionalCsvRow {
    pub region_id: String,
    pub country_code: String,
    pub total_images: f64,
    pub vhr_images: f64,
    #[serde(default)]
    pub planet_images: f64,
    pub shdi: Option<f64>,
    pub income_index: Option<f64>,
    pub households: Option<f64>,
    pub area_km2: f64,
    pub abs_lat: f64,
    pub abs_lon: f64,
    pub cloud_cover_mean: Option<f64>,
    #[serde(default)]
    pub missing_covariate: bool,
}

pub fn load_regional_csv(path: &Path) -> Result<Vec<RegionalCsvRow>, CliError> {
    if !path.exists() {
        return Err(CliError::MissingUpstream(format!(
            "{} does not exist; run `coveragescope enrich` first",
            path.display()
        )));
    }
    let mut reader = csv::Reader::from_path(path).map_err(runtime)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let row: RegionalCsvRow = record.map_err(|e| CliError::Config(e.to_string()))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Covariate column names for models 1–4; each model extends the last.
fn model_columns(model: u8, variant: RegressVariant) -> Result<Vec<&'static str>, CliError> {
    let dev = if variant == RegressVariant::IncomeIndex {
        "income_index"
    } else {
        "shdi"
    };
    let mut cols = vec![dev];
    if model >= 2 {
        cols.push("abs_lat");
        cols.push("abs_lon");
    }
    if model >= 3 {
        cols.push("area_km2");
        cols.push("households");
    }
    if model >= 4 {
        cols.push("cloud_cover_mean");
    }
    if !(1..=4).contains(&model) {
        return Err(CliError::Config("model must be 1..4".into()));
    }
    Ok(cols)
}

fn row_value(row: &RegionalCsvRow, col: &str) -> Option<f64> {
    match col {
        "shdi" => row.shdi,
        "income_index" => row.income_index,
        "abs_lat" => Some(row.abs_lat),
        "abs_lon" => Some(row.abs_lon),
        "area_km2" => Some(row.area_km2),
        "households" => row.households,
        "cloud_cover_mean" => row.cloud_cover_mean,
        _ => None,
    }
}

/// Build the design matrix for one model/variant pair: the dependent
/// count is min-max normalised, covariates enter raw, rows with a missing
/// needed covariate are dropped.
pub fn regression_design(
    rows: &[RegionalCsvRow],
    model: u8,
    variant: RegressVariant,
) -> Result<(DesignMatrix, Vec<String>), CliError> {
    let cols = model_columns(model, variant)?;
    let mut ys = Vec::new();
    let mut data: Vec<Vec<f64>> = vec![Vec::new(); cols.len()];
    let mut groups = Vec::new();
    for row in rows {
        if row.missing_covariate {
            continue;
        }
        let values: Option<Vec<f64>> = cols.iter().map(|c| row_value(row, c)).collect();
        let Some(values) = values else { continue };
        let y = match variant {
            RegressVariant::PlanetOnly => row.planet_images,
            RegressVariant::VhrOnly => row.vhr_images,
            _ => row.total_images,
        };
        ys.push(y);
        for (slot, v) in data.iter_mut().zip(values) {
            slot.push(v);
        }
        groups.push(row.country_code.clone());
    }
    if ys.len() < cols.len() + 2 {
        return Err(CliError::Runtime(format!(
            "too few usable rows ({}) for model {model}",
            ys.len()
        )));
    }
    let y = minmax_normalize(&ys).map_err(runtime)?;
    let names = cols.iter().map(|c| c.to_string()).collect();
    let design = DesignMatrix::new(y, data, names, true).map_err(runtime)?;
    Ok((design, groups))
}

pub fn cmd_regress(cfg: &ToolkitConfig, model: u8, variant: RegressVariant) -> Result<(), CliError> {
    let dataset_path = cfg.out_dir.join("regional_dataset.csv");
    let rows = load_regional_csv(&dataset_path)?;
    let (design, groups) = regression_design(&rows, model, variant)?;
    let fit = if variant == RegressVariant::FixedEffects {
        let (augmented, singletons) = with_fixed_effects(&design, &groups).map_err(runtime)?;
        if !singletons.is_empty() {
            eprintln!(
                "coveragescope: {} singleton country groups absorb their own rows",
                singletons.len()
            );
        }
        ols_fit(&augmented).map_err(runtime)?
    } else {
        ols_fit(&design).map_err(runtime)?
    };
    let params = serde_json::json!({ "model": model, "variant": variant.label(), "n": fit.n });
    let mut out = OutputWriter::new(&cfg.out_dir, "regress", params)?;
    out.record_input(&dataset_path)?;
    let name = format!("regression_m{}_{}.csv", model, variant.label());
    out.write(&name, regression_csv(&fit).as_bytes())?;
    out.finish()
}

pub fn cmd_gini(cfg: &ToolkitConfig) -> Result<(), CliError> {
    let dataset_path = cfg.out_dir.join("regional_dataset.csv");
    let rows = load_regional_csv(&dataset_path)?;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut ranks = Vec::new();
    for row in &rows {
        if let Some(shdi) = row.shdi {
            ids.push(row.region_id.clone());
            values.push(row.total_images);
            ranks.push(shdi);
        }
    }
    let result = gini_by_rank(&ids, &values, &ranks).map_err(runtime)?;
    let params = serde_json::json!({ "rank_key": "shdi", "n": ids.len() });
    let mut out = OutputWriter::new(&cfg.out_dir, "gini", params)?;
    out.record_input(&dataset_path)?;
    out.write("lorenz_shdi.csv", lorenz_csv(&result).as_bytes())?;
    out.finish()
}

/// Ratio of archived images to theoretic revisits, per constellation and
/// resolution bin, averaged over regions and days. Two readouts per row:
/// a ratio of the two averages and a mean of per-region ratios.
pub fn cmd_ratio(cfg: &ToolkitConfig) -> Result<(), CliError> {
    if cfg.constellations.is_empty() {
        return Err(CliError::Config("no constellations configured".into()));
    }
    let records = load_all_tles(cfg)?;
    let regions = load_regions(cfg)?;
    let store = open_store(cfg)?;
    let scenes = store.iter_records().map_err(runtime)?;
    let targets: Vec<RegionTarget> = regions
        .iter()
        .map(|r| RegionTarget {
            region_id: r.region_id.clone(),
            centroid: r.centroid.clone(),
        })
        .collect();
    let index = crate::enrichment::RegionIndex::build(&regions);
    let sim_days = cfg.window_days();
    let years = archive_years(cfg, &scenes);
    let archive_days =
        (365.25 * (years.1 - years.0 + 1) as f64).max(1.0);
    let n_targets = targets.len().max(1) as f64;

    let mut revisit_means: BTreeMap<String, f64> = BTreeMap::new();
    let mut region_rev: BTreeMap<(String, String), u64> = BTreeMap::new();
    for spec in &cfg.constellations {
        let members: Vec<&TleRecord> = records
            .iter()
            .filter(|r| spec.satellite_ids.contains(&r.norad_id))
            .collect();
        if members.is_empty() {
            return Err(CliError::Config(format!(
                "constellation {} has no TLEs in the configured files",
                spec.name
            )));
        }
        let tracks: Vec<GroundTrack> = members
            .iter()
            .map(|r| {
                ground_track(r, cfg.window_start, cfg.window_end, cfg.step_seconds)
                    .map_err(runtime)
            })
            .collect::<Result<_, _>>()?;
        let (counts, _passes) =
            region_revisits(&tracks, &targets, spec.swath_buffer_km, cfg.gap_threshold_s)
                .map_err(runtime)?;
        let total: u64 = counts.values().sum();
        revisit_means.insert(spec.name.clone(), total as f64 / sim_days / n_targets);
        for (region, n) in counts {
            region_rev.insert((spec.name.clone(), region), n);
        }
    }

    let mut historic_means: BTreeMap<(String, &'static str), f64> = BTreeMap::new();
    let mut region_hist: BTreeMap<(String, &'static str, String), u64> = BTreeMap::new();
    for scene in &scenes {
        let Some(spec) = cfg
            .constellations
            .iter()
            .find(|s| s.name == scene.constellation)
        else {
            continue;
        };
        let bin = crate::enrichment::gsd_bin(scene.gsd_m).map_err(runtime)?;
        *historic_means
            .entry((spec.name.clone(), bin.label()))
            .or_insert(0.0) += 1.0;
        if let Some(region) = crate::enrichment::assign_scene(scene, &index).region_id() {
            *region_hist
                .entry((spec.name.clone(), bin.label(), region.to_string()))
                .or_insert(0) += 1;
        }
    }
    for v in historic_means.values_mut() {
        *v /= archive_days * n_targets;
    }

    let table = ratio_table(&revisit_means, &historic_means).map_err(runtime)?;
    let mut csv_text =
        String::from("group,bin,avg_daily_revisits,avg_daily_historic,ratio_of_averages,mean_of_region_ratios\n");
    for row in &table {
        // second readout: average the per-region daily ratios over regions
        // that get at least one simulated pass
        let mut ratios = Vec::new();
        for target in &targets {
            let rev = *region_rev
                .get(&(row.group.clone(), target.region_id.clone()))
                .unwrap_or(&0) as f64
                / sim_days;
            if rev <= 0.0 {
                continue;
            }
            let hist = *region_hist
                .get(&(row.group.clone(), row.bin, target.region_id.clone()))
                .unwrap_or(&0) as f64
                / archive_days;
            ratios.push(hist / rev);
        }
        let mean_of_ratios = if ratios.is_empty() {
            String::new()
        } else {
            format!("{}", ratios.iter().sum::<f64>() / ratios.len() as f64)
        };
        csv_text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.group,
            row.bin,
            row.avg_daily_revisits,
            row.avg_daily_historic,
            row.ratio_of_averages.map(|r| format!("{r}")).unwrap_or_default(),
            mean_of_ratios,
        ));
    }
    let params = serde_json::json!({
        "sim_days": sim_days,
        "archive_days": archive_days,
        "n_regions": targets.len(),
    });
    let mut out = OutputWriter::new(&cfg.out_dir, "ratio", params)?;
    out.write("ratio_table.csv", csv_text.as_bytes())?;
    out.finish()
}

pub fn cmd_heatmap(
    cfg: &ToolkitConfig,
    bbox: [f64; 4],
    cell_size_deg: f64,
    bucket: &str,
) -> Result<(), CliError> {
    if bbox[0] >= bbox[2] || bbox[1] >= bbox[3] {
        return Err(CliError::Config("bbox not well-ordered".into()));
    }
    if cell_size_deg <= 0.0 {
        return Err(CliError::Config("cell_size_deg must be positive".into()));
    }
    if bucket != "month" && bucket != "year" {
        return Err(CliError::Config("bucket must be month or year".into()));
    }
    let store = open_store(cfg)?;
    let scenes = store.iter_records().map_err(runtime)?;
    let cube = heatmap(
        &scenes,
        bbox,
        cell_size_deg,
        bucket,
        (cfg.window_start, cfg.window_end),
    );
    let params = serde_json::json!({
        "bbox": bbox,
        "cell_size_deg": cell_size_deg,
        "bucket": bucket,
    });
    let mut out = OutputWriter::new(&cfg.out_dir, "heatmap", params)?;
    out.write("heatmap.csv", heatmap_csv(&cube).as_bytes())?;
    out.finish()
}

/// Run the whole analysis battery (models 1–4 over all variants that
/// apply, Gini, and a random-forest robustness check) against the
/// enriched dataset already on disk.
pub fn cmd_report(cfg: &ToolkitConfig) -> Result<(), CliError> {
    let dataset_path = cfg.out_dir.join("regional_dataset.csv");
    let rows = load_regional_csv(&dataset_path)?;
    for model in 1..=4u8 {
        cmd_regress(cfg, model, RegressVariant::All)?;
    }
    for variant in [
        RegressVariant::PlanetOnly,
        RegressVariant::FixedEffects,
        RegressVariant::IncomeIndex,
        RegressVariant::VhrOnly,
    ] {
        cmd_regress(cfg, 4, variant)?;
    }
    cmd_gini(cfg)?;

    let (design, _groups) = regression_design(&rows, 4, RegressVariant::All)?;
    let forest = rf_fit(&design, 200, 8, 5, cfg.seed).map_err(runtime)?;
    let importance = rf_importance(&forest, &design.column_names);
    let mut rf_csv = String::from("feature,importance\n");
    for (name, value) in importance.features.iter().zip(&importance.importances) {
        rf_csv.push_str(&format!("{name},{value}\n"));
    }
    let params = serde_json::json!({ "seed": cfg.seed, "n_trees": 200 });
    let mut out = OutputWriter::new(&cfg.out_dir, "report", params)?;
    out.record_input(&dataset_path)?;
    out.write("rf_importance.csv", rf_csv.as_bytes())?;
    let summary = serde_json::json!({
        "regressions": [
            "regression_m1_all.csv", "regression_m2_all.csv",
            "regression_m3_all.csv", "regression_m4_all.csv",
            "regression_m4_planet_only.csv", "regression_m4_fixed_effects.csv",
            "regression_m4_income_index.csv", "regression_m4_vhr_only.csv",
        ],
        "gini": "lorenz_shdi.csv",
        "rf_importance": "rf_importance.csv",
        "n_rows": rows.len(),
    });
    out.write(
        "report.json",
        serde_json::to_string_pretty(&summary).map_err(runtime)?.as_bytes(),
    )?;
    out.finish()
}
