//! Scene-to-region assignment, resolution binning, covariate joins,
//! aggregate tables, and case-study heatmaps.
//!
//! Region boundaries come from a GeoJSON file and covariates from a CSV
//! keyed by region id; neither dataset is bundled. Containment uses
//! even-odd ray casting against a bounding-box grid index, so point
//! assignment scales to millions of scenes against ~2k multipolygons.

use crate::propagator::GeodeticPoint;
use crate::stac::{HttpTransport, SceneRecord};
use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnrichmentError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad boundary file: {0}")]
    BadBoundary(String),
    #[error("bad covariate file: {0}")]
    BadCovariates(String),
    #[error("non-positive gsd: {0}")]
    NonPositiveGsd(f64),
    #[error("empty cloud-cover series")]
    EmptySeries,
    #[error("cloud archive http error {status}")]
    CloudHttp { status: u16 },
    #[error("grouping mismatch: {0}")]
    GroupMismatch(String),
}

/// Admin-1 region with socio-economic covariates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Region {
    pub region_id: String,
    pub country_code: String,
    pub name: String,
    /// polygons, each a list of rings (first exterior, rest holes), lon/lat
    pub polygons: Vec<Vec<Vec<[f64; 2]>>>,
    pub centroid: GeodeticPoint,
    pub area_km2: f64,
    pub shdi: Option<f64>,
    pub income_index: Option<f64>,
    pub households: Option<f64>,
    pub cloud_cover_mean: Option<f64>,
}

/// Right-open resolution bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GsdBin {
    /// [0, 0.5) m
    Under05,
    /// [0.5, 1.0) m
    HalfTo1,
    /// [1.0, 3.0) m
    OneTo3,
    /// [3.0, ∞) m
    Over3,
}

impl GsdBin {
    pub const ALL: [GsdBin; 4] = [GsdBin::Under05, GsdBin::HalfTo1, GsdBin::OneTo3, GsdBin::Over3];

    pub fn label(&self) -> &'static str {
        match self {
            GsdBin::Under05 => "0.0-0.5",
            GsdBin::HalfTo1 => "0.5-1.0",
            GsdBin::OneTo3 => "1.0-3.0",
            GsdBin::Over3 => "3.0+",
        }
    }
}

/// Right-open binning of a positive GSD.
pub fn gsd_bin(gsd_m: f64) -> Result<GsdBin, EnrichmentError> {
    if !(gsd_m > 0.0) {
        return Err(EnrichmentError::NonPositiveGsd(gsd_m));
    }
    Ok(if gsd_m < 0.5 {
        GsdBin::Under05
    } else if gsd_m < 1.0 {
        GsdBin::HalfTo1
    } else if gsd_m < 3.0 {
        GsdBin::OneTo3
    } else {
        GsdBin::Over3
    })
}

/// Even-odd ray-casting containment over one ring set (exterior + holes).
fn point_in_rings(lon: f64, lat: f64, rings: &[Vec<[f64; 2]>]) -> bool {
    let mut inside = false;
    for ring in rings {
        let n = ring.len();
        if n < 3 {
            continue;
        }
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = (ring[i][0], ring[i][1]);
            let (xj, yj) = (ring[j][0], ring[j][1]);
            if ((yi > lat) != (yj > lat))
                && (lon < (xj - xi) * (lat - yi) / (yj - yi) + xi)
            {
                inside = !inside;
            }
            j = i;
        }
    }
    inside
}

/// Brute-force containment test over every polygon of a region.
pub fn region_contains(region: &Region, lon: f64, lat: f64) -> bool {
    region.polygons.iter().any(|rings| point_in_rings(lon, lat, rings))
}

#[derive(Debug, Clone, Copy)]
struct BBox {
    lon_min: f64,
    lat_min: f64,
    lon_max: f64,
    lat_max: f64,
}

impl BBox {
    fn of_polygons(polygons: &[Vec<Vec<[f64; 2]>>]) -> BBox {
        let mut b = BBox {
            lon_min: f64::INFINITY,
            lat_min: f64::INFINITY,
            lon_max: f64::NEG_INFINITY,
            lat_max: f64::NEG_INFINITY,
        };
        for rings in polygons {
            for ring in rings {
                for p in ring {
                    b.lon_min = b.lon_min.min(p[0]);
                    b.lat_min = b.lat_min.min(p[1]);
                    b.lon_max = b.lon_max.max(p[0]);
                    b.lat_max = b.lat_max.max(p[1]);
                }
            }
        }
        b
    }

    fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.lon_min && lon <= self.lon_max && lat >= self.lat_min && lat <= self.lat_max
    }
}

/// Bounding-box grid index over regions: candidate filtering by cell,
/// containment confirmed by ray casting.
pub struct RegionIndex<'a> {
    regions: &'a [Region],
    boxes: Vec<BBox>,
    cell_deg: f64,
    cells: BTreeMap<(i32, i32), Vec<usize>>,
}

/// Assignment outcome for one point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Assignment {
    Region(String),
    /// centroid matched more than one region; resolved to the lowest
    /// region_id, others retained for audit
    Ambiguous { chosen: String, others: Vec<String> },
    Unassigned,
}

impl Assignment {
    pub fn region_id(&self) -> Option<&str> {
        match self {
            Assignment::Region(id) => Some(id),
            Assignment::Ambiguous { chosen, .. } => Some(chosen),
            Assignment::Unassigned => None,
        }
    }
}

impl<'a> RegionIndex<'a> {
    pub fn build(regions: &'a [Region]) -> Self {
        let cell_deg = 5.0;
        let boxes: Vec<BBox> = regions.iter().map(|r| BBox::of_polygons(&r.polygons)).collect();
        let mut cells: BTreeMap<(i32, i32), Vec<usize>> = BTreeMap::new();
        for (idx, b) in boxes.iter().enumerate() {
            if !b.lon_min.is_finite() {
                continue;
            }
            let x0 = (b.lon_min / cell_deg).floor() as i32;
            let x1 = (b.lon_max / cell_deg).floor() as i32;
            let y0 = (b.lat_min / cell_deg).floor() as i32;
            let y1 = (b.lat_max / cell_deg).floor() as i32;
            for x in x0..=x1 {
                for y in y0..=y1 {
                    cells.entry((x, y)).or_default().push(idx);
                }
            }
        }
        RegionIndex {
            regions,
            boxes,
            cell_deg,
            cells,
        }
    }

    pub fn assign(&self, lon: f64, lat: f64) -> Assignment {
        let key = (
            (lon / self.cell_deg).floor() as i32,
            (lat / self.cell_deg).floor() as i32,
        );
        let mut hits: Vec<&str> = Vec::new();
        if let Some(candidates) = self.cells.get(&key) {
            for &idx in candidates {
                if self.boxes[idx].contains(lon, lat)
                    && region_contains(&self.regions[idx], lon, lat)
                {
                    hits.push(&self.regions[idx].region_id);
                }
            }
        }
        match hits.len() {
            0 => Assignment::Unassigned,
            1 => Assignment::Region(hits[0].to_string()),
            _ => {
                hits.sort_unstable();
                Assignment::Ambiguous {
                    chosen: hits[0].to_string(),
                    others: hits[1..].iter().map(|s| s.to_string()).collect(),
                }
            }
        }
    }
}

/// Assign one scene's centroid to a region.
pub fn assign_scene(scene: &SceneRecord, index: &RegionIndex) -> Assignment {
    index.assign(scene.centroid_lon, scene.centroid_lat)
}

/// Mean hourly cloud cover → fraction in [0,1]. Missing hours are
/// excluded; completeness below 95% of the expected year is flagged.
pub fn cloud_cover_from_series(values: &[Option<f64>]) -> Result<(f64, bool), EnrichmentError> {
    let present: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    if present.is_empty() {
        return Err(EnrichmentError::EmptySeries);
    }
    let mean_pct = present.iter().sum::<f64>() / present.len() as f64;
    let low_coverage = (present.len() as f64) < 0.95 * values.len().max(8760) as f64;
    Ok((mean_pct / 100.0, low_coverage))
}

/// Fetch a year of hourly cloud cover for a point from an archive
/// endpoint speaking the hourly.time / hourly.cloud_cover JSON shape.
pub fn fetch_cloud_cover(
    transport: &dyn HttpTransport,
    endpoint: &str,
    centroid: &GeodeticPoint,
    year: i32,
) -> Result<(f64, bool), EnrichmentError> {
    let url = format!(
        "{}?latitude={}&longitude={}&start_date={}-01-01&end_date={}-12-31&hourly=cloud_cover",
        endpoint.trim_end_matches('/'),
        centroid.lat,
        centroid.lon,
        year,
        year
    );
    let resp = transport
        .get(&url)
        .map_err(|e| EnrichmentError::BadBoundary(e.to_string()))?;
    if resp.status != 200 {
        return Err(EnrichmentError::CloudHttp { status: resp.status });
    }
    let body: serde_json::Value = serde_json::from_slice(&resp.body)
        .map_err(|e| EnrichmentError::BadBoundary(e.to_string()))?;
    let series = body
        .get("hourly")
        .and_then(|h| h.get("cloud_cover"))
        .and_then(|c| c.as_array())
        .ok_or(EnrichmentError::EmptySeries)?;
    let values: Vec<Option<f64>> = series.iter().map(|v| v.as_f64()).collect();
    cloud_cover_from_series(&values)
}

/// One region's row in the regression table.
#[derive(Debug, Clone, Serialize)]
pub struct RegionalRow {
    pub region_id: String,
    pub country_code: String,
    pub total_images: u64,
    /// counts keyed by (provider, year, bin label)
    pub counts: BTreeMap<(String, i32, &'static str), u64>,
    pub per_bin: BTreeMap<&'static str, u64>,
    pub shdi: Option<f64>,
    pub income_index: Option<f64>,
    pub households: Option<f64>,
    pub area_km2: f64,
    pub abs_lat: f64,
    pub abs_lon: f64,
    pub cloud_cover_mean: Option<f64>,
    /// lacking a covariate: retained but excluded from regression by default
    pub missing_covariate: bool,
}

#[derive(Debug, Serialize)]
pub struct RegionalDataset {
    pub rows: Vec<RegionalRow>,
    pub unassigned_total: u64,
    pub unassigned_per_bin: BTreeMap<&'static str, u64>,
    pub years: (i32, i32),
}

impl RegionalDataset {
    pub fn n_regions(&self) -> usize {
        self.rows.len()
    }
}

/// Group scenes by region, provider, year, and resolution bin, then
/// attach covariates. Rows come out ordered by region_id.
pub fn build_regional_dataset(
    scenes: &[SceneRecord],
    regions: &[Region],
    years: (i32, i32),
) -> Result<RegionalDataset, EnrichmentError> {
    let index = RegionIndex::build(regions);
    let mut per_region: BTreeMap<&str, BTreeMap<(String, i32, &'static str), u64>> =
        regions.iter().map(|r| (r.region_id.as_str(), BTreeMap::new())).collect();
    let mut unassigned_total = 0u64;
    let mut unassigned_per_bin: BTreeMap<&'static str, u64> = BTreeMap::new();
    for scene in scenes {
        let year = scene.acquired_at.year();
        if year < years.0 || year > years.1 {
            continue;
        }
        let bin = gsd_bin(scene.gsd_m)?;
        match assign_scene(scene, &index).region_id() {
            Some(id) => {
                *per_region
                    .get_mut(id)
                    .expect("index only yields known regions")
                    .entry((scene.provider.clone(), year, bin.label()))
                    .or_insert(0) += 1;
            }
            None => {
                unassigned_total += 1;
                *unassigned_per_bin.entry(bin.label()).or_insert(0) += 1;
            }
        }
    }
    let mut rows = Vec::with_capacity(regions.len());
    let mut sorted: Vec<&Region> = regions.iter().collect();
    sorted.sort_by(|a, b| a.region_id.cmp(&b.region_id));
    for region in sorted {
        let counts = per_region.remove(region.region_id.as_str()).unwrap_or_default();
        let total: u64 = counts.values().sum();
        let mut per_bin: BTreeMap<&'static str, u64> = BTreeMap::new();
        for ((_, _, bin), n) in &counts {
            *per_bin.entry(bin).or_insert(0) += n;
        }
        let missing_covariate =
            region.shdi.is_none() || region.income_index.is_none() || region.households.is_none();
        rows.push(RegionalRow {
            region_id: region.region_id.clone(),
            country_code: region.country_code.clone(),
            total_images: total,
            counts,
            per_bin,
            shdi: region.shdi,
            income_index: region.income_index,
            households: region.households,
            area_km2: region.area_km2,
            abs_lat: region.centroid.lat.abs(),
            abs_lon: region.centroid.lon.abs(),
            cloud_cover_mean: region.cloud_cover_mean,
            missing_covariate,
        });
    }
    Ok(RegionalDataset {
        rows,
        unassigned_total,
        unassigned_per_bin,
        years,
    })
}

/// Cell/time-bucket scene counts over a bbox.
#[derive(Debug, Clone, Serialize)]
pub struct HeatmapCube {
    pub bbox: [f64; 4],
    pub cell_size_deg: f64,
    /// "month" or "year"
    pub bucket: String,
    /// (cell_x, cell_y, bucket_key) → count
    pub counts: BTreeMap<(i64, i64, String), u64>,
}

fn bucket_key(t: &DateTime<Utc>, bucket: &str) -> String {
    match bucket {
        "year" => format!("{}", t.year()),
        _ => format!("{}-{:02}", t.year(), t.month()),
    }
}

/// Bucket scene centroids by cell and time bucket.
pub fn heatmap(
    scenes: &[SceneRecord],
    bbox: [f64; 4],
    cell_size_deg: f64,
    bucket: &str,
    window: (DateTime<Utc>, DateTime<Utc>),
) -> HeatmapCube {
    let mut counts: BTreeMap<(i64, i64, String), u64> = BTreeMap::new();
    for scene in scenes {
        if scene.acquired_at < window.0 || scene.acquired_at >= window.1 {
            continue;
        }
        let (lon, lat) = (scene.centroid_lon, scene.centroid_lat);
        if lon < bbox[0] || lon >= bbox[2] || lat < bbox[1] || lat >= bbox[3] {
            continue;
        }
        let cx = ((lon - bbox[0]) / cell_size_deg).floor() as i64;
        let cy = ((lat - bbox[1]) / cell_size_deg).floor() as i64;
        *counts
            .entry((cx, cy, bucket_key(&scene.acquired_at, bucket)))
            .or_insert(0) += 1;
    }
    HeatmapCube {
        bbox,
        cell_size_deg,
        bucket: bucket.to_string(),
        counts,
    }
}

/// CSV export of a heatmap cube: cell_lon, cell_lat, bucket, count.
pub fn heatmap_csv(cube: &HeatmapCube) -> String {
    let mut out = String::from("cell_lon,cell_lat,bucket,count\n");
    for ((cx, cy, bucket), count) in &cube.counts {
        let lon = cube.bbox[0] + (*cx as f64 + 0.5) * cube.cell_size_deg;
        let lat = cube.bbox[1] + (*cy as f64 + 0.5) * cube.cell_size_deg;
        out.push_str(&format!("{lon},{lat},{bucket},{count}\n"));
    }
    out
}

/// One row of a revisit-vs-archive ratio table.
#[derive(Debug, Clone, Serialize)]
pub struct RatioRow {
    pub group: String,
    pub bin: &'static str,
    pub avg_daily_revisits: f64,
    pub avg_daily_historic: f64,
    /// historic mean over revisit mean; None when revisits are zero
    pub ratio_of_averages: Option<f64>,
}

/// Join per-group daily revisit and historic-image averages into ratio
/// rows. Groups present in only one input are an error.
pub fn ratio_table(
    revisits: &BTreeMap<String, f64>,
    historic: &BTreeMap<(String, &'static str), f64>,
) -> Result<Vec<RatioRow>, EnrichmentError> {
    let mut rows = Vec::new();
    for ((group, bin), hist) in historic {
        let rev = revisits.get(group).ok_or_else(|| {
            EnrichmentError::GroupMismatch(format!("group {group} missing from revisits"))
        })?;
        rows.push(RatioRow {
            group: group.clone(),
            bin,
            avg_daily_revisits: *rev,
            avg_daily_historic: *hist,
            ratio_of_averages: if *rev > 0.0 { Some(hist / rev) } else { None },
        });
    }
    Ok(rows)
}

/// Parse a boundary GeoJSON FeatureCollection into regions (no
/// covariates yet). Features need a region_id property; country_code
/// and name are optional.
pub fn load_boundaries(geojson: &serde_json::Value) -> Result<Vec<Region>, EnrichmentError> {
    let features = geojson
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| EnrichmentError::BadBoundary("not a FeatureCollection".into()))?;
    let mut regions = Vec::new();
    for feature in features {
        let props = feature
            .get("properties")
            .and_then(|p| p.as_object())
            .ok_or_else(|| EnrichmentError::BadBoundary("feature without properties".into()))?;
        let region_id = props
            .get("region_id")
            .or_else(|| props.get("GDLcode"))
            .or_else(|| props.get("gdlcode"))
            .and_then(|v| v.as_str())
            .ok_or_else(|| EnrichmentError::BadBoundary("feature without region_id".into()))?
            .to_string();
        let geometry = feature
            .get("geometry")
            .ok_or_else(|| EnrichmentError::BadBoundary(format!("{region_id}: no geometry")))?;
        let polygons = parse_multipolygon(geometry)
            .map_err(|e| EnrichmentError::BadBoundary(format!("{region_id}: {e}")))?;
        let bbox = BBox::of_polygons(&polygons);
        regions.push(Region {
            region_id,
            country_code: props
                .get("country_code")
                .and_then(|v| v.as_str())
                .unwrap_or("")
                .to_string(),
            name: props
                .get("name")
                .and_then(|v| v.as_str())
                .unwrap_or("")
                .to_string(),
            centroid: GeodeticPoint::new(
                0.5 * (bbox.lat_min + bbox.lat_max),
                0.5 * (bbox.lon_min + bbox.lon_max),
                0.0,
            ),
            polygons,
            area_km2: props.get("area_km2").and_then(|v| v.as_f64()).unwrap_or(0.0),
            shdi: None,
            income_index: None,
            households: None,
            cloud_cover_mean: None,
        });
    }
    Ok(regions)
}

fn parse_multipolygon(geometry: &serde_json::Value) -> Result<Vec<Vec<Vec<[f64; 2]>>>, String> {
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
    let poly_from = |poly: &serde_json::Value| -> Result<Vec<Vec<[f64; 2]>>, String> {
        poly.as_array().ok_or("polygon not an array")?.iter().map(ring_from).collect()
    };
    match gtype {
        "Polygon" => Ok(vec![poly_from(coords)?]),
        "MultiPolygon" => coords
            .as_array()
            .ok_or("coordinates not an array")?
            .iter()
            .map(poly_from)
            .collect(),
        other => Err(format!("unsupported geometry type {other:?}")),
    }
}

/// Covariate CSV row: region_id, country_code, shdi, income_index,
/// households, area_km2, and optionally a pre-computed cloud_cover_mean.
#[derive(Debug, Deserialize)]
struct CovariateRow {
    region_id: String,
    country_code: String,
    shdi: Option<f64>,
    income_index: Option<f64>,
    households: Option<f64>,
    area_km2: Option<f64>,
    #[serde(default)]
    cloud_cover_mean: Option<f64>,
}

/// Merge a covariate CSV into loaded regions, matching by region_id.
pub fn attach_covariates(regions: &mut [Region], csv_text: &str) -> Result<usize, EnrichmentError> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let mut by_id: BTreeMap<String, CovariateRow> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: CovariateRow = row.map_err(|e| EnrichmentError::BadCovariates(e.to_string()))?;
        by_id.insert(row.region_id.clone(), row);
    }
    let mut matched = 0;
    for region in regions.iter_mut() {
        if let Some(row) = by_id.get(&region.region_id) {
            matched += 1;
            if !row.country_code.is_empty() {
                region.country_code = row.country_code.clone();
            }
            region.shdi = row.shdi;
            region.income_index = row.income_index;
            region.households = row.households;
            if let Some(a) = row.area_km2 {
                region.area_km2 = a;
            }
            if row.cloud_cover_mean.is_some() {
                region.cloud_cover_mean = row.cloud_cover_mean;
            }
        }
    }
    Ok(matched)
}

#[cfg(test)]
pub fn rectangle_region(id: &str, country: &str, lon0: f64, lat0: f64, lon1: f64, lat1: f64) -> Region {
    Region {
        region_id: id.to_string(),
        country_code: country.to_string(),
        name: id.to_string(),
        polygons: vec![vec![vec![
            [lon0, lat0],
            [lon1, lat0],
            [lon1, lat1],
            [lon0, lat1],
            [lon0, lat0],
        ]]],
        centroid: GeodeticPoint::new(0.5 * (lat0 + lat1), 0.5 * (lon0 + lon1), 0.0),
        area_km2: 1000.0,
        shdi: Some(0.7),
        income_index: Some(0.6),
        households: Some(1000.0),
        cloud_cover_mean: Some(0.4),
    }
}
