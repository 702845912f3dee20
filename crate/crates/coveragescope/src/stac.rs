//! STAC catalog harvesting: paged search, deduplicated append-only
//! persistence, and resumable jobs.
//!
//! Records land in partitioned NDJSON (one file per provider+year) next
//! to a manifest that tracks the pagination cursor per job fingerprint,
//! so an interrupted harvest resumes without loss or duplication.

use crate::propagator::GeodeticPoint;
use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error("http error {status} for {url}")]
    Http { status: u16, url: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    ExhaustedRetries { attempts: u32, last: String },
    #[error("store error: {0}")]
    Store(#[from] std::io::Error),
    #[error("invalid cursor: {0}")]
    CursorInvalid(String),
    #[error("response is not a STAC item collection: {0}")]
    BadResponse(String),
    #[error("invalid job: {0}")]
    BadJob(String),
}

/// Per-item schema failure inside an otherwise good page.
#[derive(Debug, Clone, Serialize)]
pub struct SchemaError {
    pub item_id: Option<String>,
    pub reason: String,
}

/// One archived scene's metadata. Field order here is the store's
/// bit-exact NDJSON key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub provider: String,
    pub scene_id: String,
    pub constellation: String,
    pub acquired_at: DateTime<Utc>,
    pub gsd_m: f64,
    pub centroid_lon: f64,
    pub centroid_lat: f64,
    /// polygon rings, lon/lat
    pub footprint: Vec<Vec<[f64; 2]>>,
    pub raw_properties: serde_json::Map<String, serde_json::Value>,
}

impl SceneRecord {
    pub fn centroid(&self) -> GeodeticPoint {
        GeodeticPoint::new(self.centroid_lat, self.centroid_lon, 0.0)
    }

    pub fn dedup_key(&self) -> (String, String) {
        (self.provider.clone(), self.scene_id.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarvestJob {
    pub endpoint: String,
    pub provider: String,
    pub constellation: String,
    pub collections: Vec<String>,
    /// (lon_min, lat_min, lon_max, lat_max)
    pub bbox: [f64; 4],
    pub time_start: DateTime<Utc>,
    pub time_end: DateTime<Utc>,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
    /// nominal GSD fallback when items carry neither properties.gsd nor eo:gsd
    #[serde(default)]
    pub fallback_gsd_m: Option<f64>,
}

fn default_page_size() -> usize {
    200
}

impl HarvestJob {
    pub fn validate(&self) -> Result<(), HarvestError> {
        let [lon_min, lat_min, lon_max, lat_max] = self.bbox;
        if lon_min >= lon_max || lat_min >= lat_max {
            return Err(HarvestError::BadJob("bbox not well-ordered".into()));
        }
        if self.time_start >= self.time_end {
            return Err(HarvestError::BadJob("time range empty".into()));
        }
        Ok(())
    }

    /// Stable identity of this job for cursor bookkeeping.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.endpoint.as_bytes());
        hasher.update(self.collections.join(",").as_bytes());
        hasher.update(format!("{:?}", self.bbox).as_bytes());
        hasher.update(self.time_start.to_rfc3339().as_bytes());
        hasher.update(self.time_end.to_rfc3339().as_bytes());
        hasher.update(self.page_size.to_le_bytes());
        hex_lower(&hasher.finalize()[..16])
    }

    fn search_url(&self, cursor: Option<&str>) -> String {
        let datetime = format!(
            "{}/{}",
            self.time_start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            self.time_end.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        );
        let mut url = format!(
            "{}/search?collections={}&bbox={},{},{},{}&datetime={}&limit={}",
            self.endpoint.trim_end_matches('/'),
            self.collections.join(","),
            self.bbox[0],
            self.bbox[1],
            self.bbox[2],
            self.bbox[3],
            datetime,
            self.page_size
        );
        if let Some(c) = cursor {
            url.push_str("&cursor=");
            url.push_str(c);
        }
        url
    }
}

fn hex_lower(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Minimal HTTP surface the harvester needs; lets tests point at a
/// local fixture server and the CLI at the real world.
pub trait HttpTransport: Send + Sync {
    fn get(&self, url: &str) -> Result<HttpResponse, HarvestError>;
    fn post_json(&self, url: &str, body: &serde_json::Value) -> Result<HttpResponse, HarvestError>;
}

pub struct HttpResponse {
    pub status: u16,
    pub retry_after_s: Option<u64>,
    pub body: Vec<u8>,
}

/// reqwest-backed transport with optional bearer token pass-through.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
    bearer_token: Option<String>,
}

impl ReqwestTransport {
    pub fn new(bearer_token: Option<String>) -> Self {
        ReqwestTransport {
            client: reqwest::blocking::Client::new(),
            bearer_token,
        }
    }

    fn finish(resp: reqwest::blocking::Response) -> Result<HttpResponse, HarvestError> {
        let status = resp.status().as_u16();
        let retry_after_s = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok());
        let body = resp
            .bytes()
            .map_err(|e| HarvestError::Transport(e.to_string()))?
            .to_vec();
        Ok(HttpResponse {
            status,
            retry_after_s,
            body,
        })
    }
}

impl HttpTransport for ReqwestTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, HarvestError> {
        let mut req = self.client.get(url);
        if let Some(tok) = &self.bearer_token {
            req = req.bearer_auth(tok);
        }
        Self::finish(req.send().map_err(|e| HarvestError::Transport(e.to_string()))?)
    }

    fn post_json(&self, url: &str, body: &serde_json::Value) -> Result<HttpResponse, HarvestError> {
        let mut req = self.client.post(url).json(body);
        if let Some(tok) = &self.bearer_token {
            req = req.bearer_auth(tok);
        }
        Self::finish(req.send().map_err(|e| HarvestError::Transport(e.to_string()))?)
    }
}

/// Outcome of one search page.
pub struct PageResult {
    pub records: Vec<SceneRecord>,
    pub next_cursor: Option<String>,
    pub item_errors: Vec<SchemaError>,
}

fn extract_gsd(props: &serde_json::Map<String, serde_json::Value>, fallback: Option<f64>) -> Option<(f64, bool)> {
    for key in ["gsd", "eo:gsd"] {
        if let Some(v) = props.get(key).and_then(|v| v.as_f64()) {
            if v > 0.0 {
                return Some((v, false));
            }
        }
    }
    fallback.map(|v| (v, true))
}

fn parse_item(
    item: &serde_json::Value,
    job: &HarvestJob,
) -> Result<SceneRecord, String> {
    let id = item
        .get("id")
        .and_then(|v| v.as_str())
        .ok_or("missing id")?
        .to_string();
    let props = item
        .get("properties")
        .and_then(|v| v.as_object())
        .ok_or("missing properties")?;
    let datetime = props
        .get("datetime")
        .and_then(|v| v.as_str())
        .ok_or("missing properties.datetime")?;
    let acquired_at = DateTime::parse_from_rfc3339(datetime)
        .map_err(|e| format!("bad datetime: {e}"))?
        .with_timezone(&Utc);
    let (gsd_m, used_fallback) =
        extract_gsd(props, job.fallback_gsd_m).ok_or("missing properties.gsd and eo:gsd")?;
    let geometry = item.get("geometry").ok_or("missing geometry")?;
    let footprint = parse_polygon(geometry).map_err(|e| format!("bad geometry: {e}"))?;
    let centroid = footprint_centroid(&footprint).map_err(|e| format!("degenerate geometry: {e:?}"))?;
    let mut raw_properties = props.clone();
    if used_fallback {
        raw_properties.insert("coveragescope:gsd_fallback".to_string(), serde_json::json!(true));
    }
    Ok(SceneRecord {
        provider: job.provider.clone(),
        scene_id: id,
        constellation: job.constellation.clone(),
        acquired_at,
        gsd_m,
        centroid_lon: centroid.lon,
        centroid_lat: centroid.lat,
        footprint,
        raw_properties,
    })
}

fn parse_polygon(geometry: &serde_json::Value) -> Result<Vec<Vec<[f64; 2]>>, String> {
    let gtype = geometry.get("type").and_then(|v| v.as_str()).unwrap_or("");
    let coords = geometry.get("coordinates").ok_or("missing coordinates")?;
    let ring_from = |ring: &serde_json::Value| -> Result<Vec<[f64; 2]>, String> {
        ring.as_array()
            .ok_or("ring not an array")?
            .iter()
            .map(|p| {
                let p = p.as_array().ok_or("point not an array")?;
                Ok([
                    p.first().and_then(|v| v.as_f64()).ok_or("bad lon")?,
                    p.get(1).and_then(|v| v.as_f64()).ok_or("bad lat")?,
                ])
            })
            .collect()
    };
    match gtype {
        "Polygon" => coords
            .as_array()
            .ok_or("coordinates not an array")?
            .iter()
            .map(ring_from)
            .collect(),
        "MultiPolygon" => {
            // keep every exterior/interior ring of every part
            let mut rings = Vec::new();
            for poly in coords.as_array().ok_or("coordinates not an array")? {
                for ring in poly.as_array().ok_or("polygon not an array")? {
                    rings.push(ring_from(ring)?);
                }
            }
            Ok(rings)
        }
        other => Err(format!("unsupported geometry type {other:?}")),
    }
}

#[derive(Debug, PartialEq)]
pub enum GeometryError {
    TooFewPoints,
    DegenerateGeometry,
}

/// Area-weighted planar centroid in a local equirectangular projection
/// about the footprint's bounding-box center. Rings crossing the
/// antimeridian are longitude-unwrapped first. Zero-area rings fall
/// back to the vertex mean.
pub fn footprint_centroid(rings: &[Vec<[f64; 2]>]) -> Result<GeodeticPoint, GeometryError> {
    let exterior = rings.first().ok_or(GeometryError::TooFewPoints)?;
    if exterior.len() < 4 {
        return Err(GeometryError::TooFewPoints);
    }
    // unwrap longitudes to a continuous run starting from the first vertex
    let mut lons = Vec::with_capacity(exterior.len());
    let mut prev = exterior[0][0];
    lons.push(prev);
    for p in &exterior[1..] {
        let mut lon = p[0];
        while lon - prev > 180.0 {
            lon -= 360.0;
        }
        while lon - prev < -180.0 {
            lon += 360.0;
        }
        lons.push(lon);
        prev = lon;
    }
    let lats: Vec<f64> = exterior.iter().map(|p| p[1]).collect();
    let lon0 = (lons.iter().fold(f64::INFINITY, |a, &b| a.min(b))
        + lons.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
        / 2.0;
    let lat0 = (lats.iter().fold(f64::INFINITY, |a, &b| a.min(b))
        + lats.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
        / 2.0;
    let k = lat0.to_radians().cos();
    // local planar coordinates
    let xs: Vec<f64> = lons.iter().map(|&l| (l - lon0) * k).collect();
    let ys: Vec<f64> = lats.iter().map(|&l| l - lat0).collect();
    // shoelace centroid
    let n = xs.len();
    let mut area2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n - 1 {
        let cross = xs[i] * ys[i + 1] - xs[i + 1] * ys[i];
        area2 += cross;
        cx += (xs[i] + xs[i + 1]) * cross;
        cy += (ys[i] + ys[i + 1]) * cross;
    }
    if area2.abs() < 1e-12 {
        // degenerate: vertex mean over the distinct vertices
        let m = n - 1;
        let mean_x: f64 = xs[..m].iter().sum::<f64>() / m as f64;
        let mean_y: f64 = ys[..m].iter().sum::<f64>() / m as f64;
        return Ok(GeodeticPoint::new(mean_y + lat0, mean_x / k + lon0, 0.0));
    }
    cx /= 3.0 * area2;
    cy /= 3.0 * area2;
    Ok(GeodeticPoint::new(cy + lat0, cx / k + lon0, 0.0))
}

/// Fetch and parse one page of a STAC search.
pub fn search_page(
    transport: &dyn HttpTransport,
    job: &HarvestJob,
    cursor: Option<&str>,
) -> Result<PageResult, HarvestError> {
    let url = job.search_url(cursor);
    let resp = transport.get(&url)?;
    if resp.status != 200 {
        return Err(HarvestError::Http {
            status: resp.status,
            url,
        });
    }
    let body: serde_json::Value = serde_json::from_slice(&resp.body)
        .map_err(|e| HarvestError::BadResponse(e.to_string()))?;
    let features = body
        .get("features")
        .and_then(|v| v.as_array())
        .ok_or_else(|| HarvestError::BadResponse("missing features".into()))?;
    let mut records = Vec::new();
    let mut item_errors = Vec::new();
    for item in features {
        match parse_item(item, job) {
            Ok(rec) => records.push(rec),
            Err(reason) => item_errors.push(SchemaError {
                item_id: item.get("id").and_then(|v| v.as_str()).map(String::from),
                reason,
            }),
        }
    }
    // rel=next link: token in "cursor" query param or body token
    let next_cursor = body
        .get("links")
        .and_then(|v| v.as_array())
        .and_then(|links| {
            links.iter().find(|l| l.get("rel").and_then(|r| r.as_str()) == Some("next"))
        })
        .and_then(|link| {
            if let Some(token) = link
                .get("body")
                .and_then(|b| b.get("cursor"))
                .and_then(|c| c.as_str())
            {
                return Some(token.to_string());
            }
            let href = link.get("href")?.as_str()?;
            href.split('?')
                .nth(1)?
                .split('&')
                .find_map(|kv| kv.strip_prefix("cursor=").map(String::from))
        });
    Ok(PageResult {
        records,
        next_cursor,
        item_errors,
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct JobManifest {
    pub last_cursor: Option<String>,
    pub done: bool,
    pub record_count: u64,
    pub last_updated: Option<DateTime<Utc>>,
    /// exact query for reproducibility
    pub query: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StoreManifest {
    pub jobs: BTreeMap<String, JobManifest>,
}

/// Partitioned NDJSON scene store with a single-writer append contract.
pub struct SceneStore {
    root: PathBuf,
    manifest: StoreManifest,
    seen: HashSet<(String, String)>,
}

impl SceneStore {
    pub fn open(root: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(root)?;
        let manifest_path = root.join("manifest.json");
        let manifest = if manifest_path.exists() {
            serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)
                .unwrap_or_default()
        } else {
            StoreManifest::default()
        };
        let mut store = SceneStore {
            root: root.to_path_buf(),
            manifest,
            seen: HashSet::new(),
        };
        for rec in store.iter_records()? {
            store.seen.insert(rec.dedup_key());
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn partition_path(&self, provider: &str, year: i32) -> PathBuf {
        let safe: String = provider
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        self.root.join(format!("{safe}_{year}.ndjson"))
    }

    pub fn contains(&self, provider: &str, scene_id: &str) -> bool {
        self.seen
            .contains(&(provider.to_string(), scene_id.to_string()))
    }

    /// Append records not already present; returns how many were new.
    /// Lines are complete before the manifest is rewritten.
    pub fn append(&mut self, records: &[SceneRecord]) -> std::io::Result<u64> {
        let mut by_partition: BTreeMap<PathBuf, Vec<&SceneRecord>> = BTreeMap::new();
        let mut added = 0u64;
        for rec in records {
            if self.seen.contains(&rec.dedup_key()) {
                continue;
            }
            self.seen.insert(rec.dedup_key());
            added += 1;
            by_partition
                .entry(self.partition_path(&rec.provider, rec.acquired_at.year()))
                .or_default()
                .push(rec);
        }
        for (path, recs) in by_partition {
            let mut file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)?;
            let mut buf = Vec::new();
            for rec in recs {
                serde_json::to_writer(&mut buf, rec)?;
                buf.push(b'\n');
            }
            file.write_all(&buf)?;
            file.sync_data()?;
        }
        Ok(added)
    }

    pub fn job_manifest(&self, fingerprint: &str) -> Option<&JobManifest> {
        self.manifest.jobs.get(fingerprint)
    }

    pub fn update_job(&mut self, fingerprint: &str, entry: JobManifest) -> std::io::Result<()> {
        self.manifest.jobs.insert(fingerprint.to_string(), entry);
        self.write_manifest()
    }

    fn write_manifest(&self) -> std::io::Result<()> {
        let tmp = self.root.join("manifest.json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(&self.manifest)?)?;
        std::fs::rename(tmp, self.root.join("manifest.json"))
    }

    pub fn partition_files(&self) -> std::io::Result<Vec<PathBuf>> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&self.root)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|e| e == "ndjson").unwrap_or(false))
            .collect();
        files.sort();
        Ok(files)
    }

    pub fn iter_records(&self) -> std::io::Result<Vec<SceneRecord>> {
        let mut records = Vec::new();
        for path in self.partition_files()? {
            for line in std::fs::read_to_string(&path)?.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                if let Ok(rec) = serde_json::from_str::<SceneRecord>(line) {
                    records.push(rec);
                }
            }
        }
        Ok(records)
    }

    pub fn record_count(&self) -> usize {
        self.seen.len()
    }

    /// All stored lines in canonical (sorted) order, for store comparison.
    pub fn canonical_lines(&self) -> std::io::Result<Vec<String>> {
        let mut lines = Vec::new();
        for path in self.partition_files()? {
            for line in std::fs::read_to_string(&path)?.lines() {
                if !line.trim().is_empty() {
                    lines.push(line.to_string());
                }
            }
        }
        lines.sort();
        Ok(lines)
    }
}

#[derive(Debug, Clone)]
pub struct HarvestOptions {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    /// minimum spacing between requests, ms (rate ceiling)
    pub min_request_interval_ms: u64,
    /// stop after this many pages (interrupt simulation / chunked runs)
    pub page_limit: Option<usize>,
}

impl Default for HarvestOptions {
    fn default() -> Self {
        HarvestOptions {
            max_attempts: 5,
            backoff_base_ms: 1000,
            min_request_interval_ms: 200, // 5 req/s
            page_limit: None,
        }
    }
}

#[derive(Debug, Default, Serialize)]
pub struct HarvestSummary {
    pub pages_fetched: usize,
    pub records_seen: usize,
    pub records_added: u64,
    pub item_errors: usize,
    pub done: bool,
}

/// Loop search pages until exhausted (or the page limit), appending
/// deduplicated records and persisting the cursor after every page.
pub fn harvest(
    transport: &dyn HttpTransport,
    job: &HarvestJob,
    store: &mut SceneStore,
    opts: &HarvestOptions,
) -> Result<HarvestSummary, HarvestError> {
    job.validate()?;
    let fingerprint = job.fingerprint();
    let mut summary = HarvestSummary::default();
    let mut state = store.job_manifest(&fingerprint).cloned().unwrap_or_default();
    if state.done {
        summary.done = true;
        return Ok(summary);
    }
    let mut cursor = state.last_cursor.clone();
    let mut last_request = std::time::Instant::now() - std::time::Duration::from_secs(3600);
    loop {
        if let Some(limit) = opts.page_limit {
            if summary.pages_fetched >= limit {
                return Ok(summary);
            }
        }
        // rate ceiling
        let since = last_request.elapsed().as_millis() as u64;
        if since < opts.min_request_interval_ms {
            std::thread::sleep(std::time::Duration::from_millis(
                opts.min_request_interval_ms - since,
            ));
        }
        let page = fetch_with_retry(transport, job, cursor.as_deref(), opts)?;
        last_request = std::time::Instant::now();
        summary.pages_fetched += 1;
        summary.records_seen += page.records.len();
        summary.item_errors += page.item_errors.len();
        summary.records_added += store.append(&page.records)?;
        state.record_count = store.record_count() as u64;
        state.last_cursor = page.next_cursor.clone();
        state.done = page.next_cursor.is_none();
        state.last_updated = Some(Utc::now());
        state.query = Some(job.search_url(None));
        store.update_job(&fingerprint, state.clone())?;
        match page.next_cursor {
            Some(next) => cursor = Some(next),
            None => {
                summary.done = true;
                return Ok(summary);
            }
        }
    }
}

fn fetch_with_retry(
    transport: &dyn HttpTransport,
    job: &HarvestJob,
    cursor: Option<&str>,
    opts: &HarvestOptions,
) -> Result<PageResult, HarvestError> {
    let mut last_err = String::new();
    for attempt in 0..opts.max_attempts {
        match search_page(transport, job, cursor) {
            Ok(page) => return Ok(page),
            Err(HarvestError::Http { status, url }) if status == 429 || status >= 500 => {
                last_err = format!("http {status} for {url}");
                let backoff = opts.backoff_base_ms * 2u64.pow(attempt);
                std::thread::sleep(std::time::Duration::from_millis(backoff));
            }
            Err(HarvestError::Transport(msg)) => {
                last_err = msg;
                let backoff = opts.backoff_base_ms * 2u64.pow(attempt);
                std::thread::sleep(std::time::Duration::from_millis(backoff));
            }
            Err(other) => return Err(other),
        }
    }
    Err(HarvestError::ExhaustedRetries {
        attempts: opts.max_attempts,
        last: last_err,
    })
}

/// One row of a provider's pre-aggregated count table (the statistics-only
/// ingestion mode for providers that expose no per-scene search).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCount {
    pub provider: String,
    pub period: String,
    pub bucket: String,
    pub count: u64,
}

/// Parse a count table CSV with header provider,period,bucket,count.
pub fn parse_count_table(csv_text: &str) -> Result<Vec<AggregateCount>, csv::Error> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    reader.deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_centroid() {
        let ring = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]];
        let c = footprint_centroid(&[ring]).unwrap();
        assert!((c.lon - 0.5).abs() < 1e-9);
        assert!((c.lat - 0.5).abs() < 1e-9);
    }

    #[test]
    fn antimeridian_square_centroid() {
        let ring = vec![
            [179.0, -1.0],
            [-179.0, -1.0],
            [-179.0, 1.0],
            [179.0, 1.0],
            [179.0, -1.0],
        ];
        let c = footprint_centroid(&[ring]).unwrap();
        assert!((c.lon.abs() - 180.0).abs() < 1e-6, "lon = {}", c.lon);
        assert!(c.lat.abs() < 1e-9);
    }

    #[test]
    fn l_shape_matches_shoelace_oracle() {
        // L-shape: 2x2 square minus top-right 1x1
        let ring = vec![
            [0.0, 0.0],
            [2.0, 0.0],
            [2.0, 1.0],
            [1.0, 1.0],
            [1.0, 2.0],
            [0.0, 2.0],
            [0.0, 0.0],
        ];
        let c = footprint_centroid(&[ring.clone()]).unwrap();
        // brute-force shoelace in plain lon/lat (lat0 = 1, k = cos(1 deg) ~ 1)
        let mut a2 = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..ring.len() - 1 {
            let cross = ring[i][0] * ring[i + 1][1] - ring[i + 1][0] * ring[i][1];
            a2 += cross;
            cx += (ring[i][0] + ring[i + 1][0]) * cross;
            cy += (ring[i][1] + ring[i + 1][1]) * cross;
        }
        cx /= 3.0 * a2;
        cy /= 3.0 * a2;
        assert!((c.lon - cx).abs() < 1e-3, "{} vs {}", c.lon, cx);
        assert!((c.lat - cy).abs() < 1e-9);
    }

    #[test]
    fn degenerate_ring_falls_back_to_vertex_mean() {
        let ring = vec![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        let c = footprint_centroid(&[ring]).unwrap();
        assert!((c.lon - 1.0).abs() < 1e-9);
        assert!((c.lat - 2.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_points_rejected() {
        let ring = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]];
        assert_eq!(
            footprint_centroid(&[ring]).unwrap_err(),
            GeometryError::TooFewPoints
        );
    }

    #[test]
    fn store_roundtrip_and_dedup() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SceneStore::open(dir.path()).unwrap();
        let rec = SceneRecord {
            provider: "maxar".into(),
            scene_id: "s-1".into(),
            constellation: "WorldView".into(),
            acquired_at: "2021-06-01T12:00:00Z".parse().unwrap(),
            gsd_m: 0.4,
            centroid_lon: 10.0,
            centroid_lat: 20.0,
            footprint: vec![vec![[9.0, 19.0], [11.0, 19.0], [11.0, 21.0], [9.0, 21.0], [9.0, 19.0]]],
            raw_properties: serde_json::Map::new(),
        };
        assert_eq!(store.append(&[rec.clone()]).unwrap(), 1);
        assert_eq!(store.append(&[rec.clone()]).unwrap(), 0);
        drop(store);
        let store2 = SceneStore::open(dir.path()).unwrap();
        assert_eq!(store2.record_count(), 1);
        let loaded = store2.iter_records().unwrap();
        assert_eq!(loaded[0], rec);
    }

    #[test]
    fn store_key_order_is_fixed() {
        let rec = SceneRecord {
            provider: "p".into(),
            scene_id: "s".into(),
            constellation: "c".into(),
            acquired_at: "2020-01-01T00:00:00Z".parse().unwrap(),
            gsd_m: 1.0,
            centroid_lon: 0.0,
            centroid_lat: 0.0,
            footprint: vec![],
            raw_properties: serde_json::Map::new(),
        };
        let line = serde_json::to_string(&rec).unwrap();
        let key_positions: Vec<usize> = [
            "\"provider\"",
            "\"scene_id\"",
            "\"constellation\"",
            "\"acquired_at\"",
            "\"gsd_m\"",
            "\"centroid_lon\"",
            "\"centroid_lat\"",
            "\"footprint\"",
            "\"raw_properties\"",
        ]
        .iter()
        .map(|k| line.find(k).unwrap())
        .collect();
        let mut sorted = key_positions.clone();
        sorted.sort_unstable();
        assert_eq!(key_positions, sorted);
    }

    #[test]
    fn count_table_parses() {
        let csv = "provider,period,bucket,count\nplanet,2021,3.0+,12345\n";
        let rows = parse_count_table(csv).unwrap();
        assert_eq!(
            rows,
            vec![AggregateCount {
                provider: "planet".into(),
                period: "2021".into(),
                bucket: "3.0+".into(),
                count: 12345
            }]
        );
    }

    #[test]
    fn gsd_fallback_chain() {
        let mk = |props: serde_json::Value| -> serde_json::Map<String, serde_json::Value> {
            props.as_object().unwrap().clone()
        };
        assert_eq!(
            extract_gsd(&mk(serde_json::json!({"gsd": 0.5})), Some(3.9)),
            Some((0.5, false))
        );
        assert_eq!(
            extract_gsd(&mk(serde_json::json!({"eo:gsd": 0.7})), Some(3.9)),
            Some((0.7, false))
        );
        assert_eq!(
            extract_gsd(&mk(serde_json::json!({})), Some(3.9)),
            Some((3.9, true))
        );
        assert_eq!(extract_gsd(&mk(serde_json::json!({})), None), None);
    }
}
