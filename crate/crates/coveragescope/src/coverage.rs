//! Earth discretization, swath membership, pass segmentation, and
//! revisit counting over ground tracks.
//!
//! The grid divides latitude into equal bands sized to the target edge
//! length and each band into cells scaled by the cosine of its
//! mid-latitude, giving quasi-equal-area tiles. Swath membership is a
//! great-circle distance test against the tile centroid.

use crate::propagator::{GeodeticPoint, GroundTrack};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Mean earth radius, km (IUGG).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Half meridian length derived from the mean radius, km.
pub const HALF_MERIDIAN_KM: f64 = EARTH_RADIUS_KM * std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("grid edge length {0} km outside [50, 5000]")]
    EdgeOutOfRange(f64),
    #[error("tracks do not share a common window")]
    WindowMismatch,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    pub edge_km: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridTile {
    pub id: usize,
    pub lat_band: usize,
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub centroid: GeodeticPoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EarthGrid {
    pub spec: GridSpec,
    pub tiles: Vec<GridTile>,
    /// number of latitude bands
    pub n_bands: usize,
}

impl EarthGrid {
    pub fn band_center(&self, band: usize) -> f64 {
        let band_height = 180.0 / self.n_bands as f64;
        -90.0 + (band as f64 + 0.5) * band_height
    }
}

/// Quasi-equal-area latitude-band grid with the given target edge length.
pub fn build_grid(edge_km: f64) -> Result<EarthGrid, CoverageError> {
    if !(50.0..=5000.0).contains(&edge_km) {
        return Err(CoverageError::EdgeOutOfRange(edge_km));
    }
    let n_bands = (HALF_MERIDIAN_KM / edge_km).round().max(1.0) as usize;
    let band_height_deg = 180.0 / n_bands as f64;
    let mut tiles = Vec::new();
    for band in 0..n_bands {
        let lat_min = -90.0 + band as f64 * band_height_deg;
        let lat_max = lat_min + band_height_deg;
        let mid_lat = 0.5 * (lat_min + lat_max);
        let circumference = 2.0 * std::f64::consts::PI
            * EARTH_RADIUS_KM
            * mid_lat.to_radians().cos().abs();
        let n_cells = ((circumference / edge_km).round() as usize).max(1);
        let cell_width = 360.0 / n_cells as f64;
        for cell in 0..n_cells {
            let lon_min = -180.0 + cell as f64 * cell_width;
            let lon_max = lon_min + cell_width;
            tiles.push(GridTile {
                id: tiles.len(),
                lat_band: band,
                lat_min,
                lat_max,
                lon_min,
                lon_max,
                centroid: GeodeticPoint::new(mid_lat, 0.5 * (lon_min + lon_max), 0.0),
            });
        }
    }
    Ok(EarthGrid {
        spec: GridSpec { edge_km },
        tiles,
        n_bands,
    })
}

/// Great-circle distance on the mean-radius sphere, km.
pub fn haversine_km(a: &GeodeticPoint, b: &GeodeticPoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// True iff `point` lies within `buffer_km` of `centroid` along a great circle.
pub fn in_swath(point: &GeodeticPoint, centroid: &GeodeticPoint, buffer_km: f64) -> bool {
    haversine_km(point, centroid) <= buffer_km
}

/// One contiguous in-swath interval of a satellite over a test point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassEvent {
    pub norad_id: u32,
    pub target_id: usize,
    pub t_enter: DateTime<Utc>,
    pub t_exit: DateTime<Utc>,
}

/// Revisit counts per tile over a window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RevisitMap {
    pub edge_km: f64,
    pub counts: BTreeMap<usize, u64>,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    pub satellites: Vec<u32>,
}

impl RevisitMap {
    pub fn count(&self, tile_id: usize) -> u64 {
        self.counts.get(&tile_id).copied().unwrap_or(0)
    }
}

fn check_shared_window(tracks: &[GroundTrack]) -> Result<(), CoverageError> {
    if let Some(first) = tracks.first() {
        for t in tracks.iter().skip(1) {
            if t.start != first.start || t.samples.len() != first.samples.len() || t.step != first.step {
                return Err(CoverageError::WindowMismatch);
            }
        }
    }
    Ok(())
}

/// Segment the in-swath samples of one track over one test point into passes.
/// Consecutive in-swath samples whose spacing is within `gap_threshold_s`
/// belong to the same pass.
fn segment_passes(
    track: &GroundTrack,
    target: &GeodeticPoint,
    target_id: usize,
    buffer_km: f64,
    gap_threshold_s: f64,
    out: &mut Vec<PassEvent>,
) -> u64 {
    let mut n_passes = 0;
    let mut current: Option<(usize, usize)> = None; // (first, last) in-swath index
    let max_gap_samples = (gap_threshold_s / track.step).floor() as usize;
    // d >= R * |dlat|, so |dlat| beyond buffer/111.19 deg cannot be in swath
    let lat_margin_deg = buffer_km / 111.19;
    for (i, p) in track.samples.iter().enumerate() {
        if (p.lat - target.lat).abs() <= lat_margin_deg && in_swath(p, target, buffer_km) {
            match current {
                Some((first, last)) if i - last <= max_gap_samples => {
                    current = Some((first, i));
                }
                Some((first, last)) => {
                    out.push(PassEvent {
                        norad_id: track.norad_id,
                        target_id,
                        t_enter: track.sample_time(first),
                        t_exit: track.sample_time(last),
                    });
                    n_passes += 1;
                    current = Some((i, i));
                }
                None => current = Some((i, i)),
            }
        }
    }
    if let Some((first, last)) = current {
        out.push(PassEvent {
            norad_id: track.norad_id,
            target_id,
            t_enter: track.sample_time(first),
            t_exit: track.sample_time(last),
        });
        n_passes += 1;
    }
    n_passes
}

/// Count passes per tile across all tracks.
pub fn count_revisits(
    tracks: &[GroundTrack],
    grid: &EarthGrid,
    buffer_km: f64,
    gap_threshold_s: f64,
) -> Result<(RevisitMap, Vec<PassEvent>), CoverageError> {
    check_shared_window(tracks)?;
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    let mut events = Vec::new();
    for track in tracks {
        for tile in &grid.tiles {
            let n = segment_passes(track, &tile.centroid, tile.id, buffer_km, gap_threshold_s, &mut events);
            if n > 0 {
                *counts.entry(tile.id).or_insert(0) += n;
            }
        }
    }
    let (window_start, window_end) = match tracks.first() {
        Some(t) => (t.start, t.end()),
        None => (DateTime::<Utc>::MIN_UTC, DateTime::<Utc>::MIN_UTC),
    };
    Ok((
        RevisitMap {
            edge_km: grid.spec.edge_km,
            counts,
            window_start,
            window_end,
            satellites: tracks.iter().map(|t| t.norad_id).collect(),
        },
        events,
    ))
}

/// Per-latitude-band mean tile count, ordered south → north.
pub fn latitude_profile(map: &RevisitMap, grid: &EarthGrid) -> Vec<(f64, f64)> {
    let mut sums: Vec<(f64, usize)> = vec![(0.0, 0); grid.n_bands];
    for tile in &grid.tiles {
        let (sum, n) = &mut sums[tile.lat_band];
        *sum += map.count(tile.id) as f64;
        *n += 1;
    }
    sums.iter()
        .enumerate()
        .map(|(band, (sum, n))| (grid.band_center(band), sum / (*n).max(1) as f64))
        .collect()
}

/// A named test point for region-level counting (centroid semantics,
/// consistent with tile counting).
#[derive(Debug, Clone)]
pub struct RegionTarget {
    pub region_id: String,
    pub centroid: GeodeticPoint,
}

/// One pass of a satellite over a region centroid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionPass {
    pub region_id: String,
    pub norad_id: u32,
    pub t_enter: DateTime<Utc>,
    pub t_exit: DateTime<Utc>,
}

/// Count passes per region centroid across all tracks.
pub fn region_revisits(
    tracks: &[GroundTrack],
    regions: &[RegionTarget],
    buffer_km: f64,
    gap_threshold_s: f64,
) -> Result<(BTreeMap<String, u64>, Vec<RegionPass>), CoverageError> {
    check_shared_window(tracks)?;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for r in regions {
        counts.insert(r.region_id.clone(), 0);
    }
    let mut passes = Vec::new();
    let mut scratch = Vec::new();
    for track in tracks {
        for (idx, region) in regions.iter().enumerate() {
            scratch.clear();
            let n = segment_passes(track, &region.centroid, idx, buffer_km, gap_threshold_s, &mut scratch);
            *counts.get_mut(&region.region_id).unwrap() += n;
            for ev in &scratch {
                passes.push(RegionPass {
                    region_id: region.region_id.clone(),
                    norad_id: ev.norad_id,
                    t_enter: ev.t_enter,
                    t_exit: ev.t_exit,
                });
            }
        }
    }
    Ok((counts, passes))
}

/// Brute-force oracle: label every sample, then segment. Same contract as
/// `count_revisits` but with no candidate filtering; kept for equivalence
/// testing.
pub fn count_revisits_brute_force(
    tracks: &[GroundTrack],
    grid: &EarthGrid,
    buffer_km: f64,
    gap_threshold_s: f64,
) -> BTreeMap<usize, u64> {
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    let max_gap = gap_threshold_s;
    for track in tracks {
        for tile in &grid.tiles {
            let labels: Vec<bool> = track
                .samples
                .iter()
                .map(|p| haversine_km(p, &tile.centroid) <= buffer_km)
                .collect();
            let mut passes = 0u64;
            let mut last_in: Option<usize> = None;
            for (i, &inside) in labels.iter().enumerate() {
                if inside {
                    match last_in {
                        Some(j) if (i - j) as f64 * track.step <= max_gap => {}
                        _ => passes += 1,
                    }
                    last_in = Some(i);
                }
            }
            if passes > 0 {
                *counts.entry(tile.id).or_insert(0) += passes;
            }
        }
    }
    counts
}

/// CSV export of a revisit map: tile_id, lat_center, lon_center, count.
pub fn revisit_map_csv(map: &RevisitMap, grid: &EarthGrid) -> String {
    let mut out = String::from("tile_id,lat_center,lon_center,count\n");
    for tile in &grid.tiles {
        out.push_str(&format!(
            "{},{},{},{}\n",
            tile.id, tile.centroid.lat, tile.centroid.lon, map.count(tile.id)
        ));
    }
    out
}

/// CSV export of a latitude profile: lat_band_center, mean_count.
pub fn latitude_profile_csv(profile: &[(f64, f64)]) -> String {
    let mut out = String::from("lat_band_center,mean_count\n");
    for (lat, mean) in profile {
        out.push_str(&format!("{lat},{mean}\n"));
    }
    out
}

/// GeoJSON FeatureCollection of tile polygons with a `count` property.
pub fn revisit_map_geojson(map: &RevisitMap, grid: &EarthGrid) -> serde_json::Value {
    let features: Vec<serde_json::Value> = grid
        .tiles
        .iter()
        .map(|tile| {
            serde_json::json!({
                "type": "Feature",
                "properties": {"tile_id": tile.id, "count": map.count(tile.id)},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[
                        [tile.lon_min, tile.lat_min],
                        [tile.lon_max, tile.lat_min],
                        [tile.lon_max, tile.lat_max],
                        [tile.lon_min, tile.lat_max],
                        [tile.lon_min, tile.lat_min]
                    ]]
                }
            })
        })
        .collect();
    serde_json::json!({"type": "FeatureCollection", "features": features})
}
