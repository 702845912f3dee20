//! Deterministic synthetic fixtures: TLE sets, scene collections,
//! mock STAC pages, and a Table-4-shaped regional dataset. Used by the
//! test suite and by the bundled demo pipeline.

use crate::propagator::synthetic_record;
use crate::stac::SceneRecord;
use crate::tle::TleRecord;
use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small sun-synchronous constellation plus one mid-inclination
/// satellite, epochs 2024-01-29 (the demo window start).
pub fn demo_constellation() -> Vec<TleRecord> {
    let epoch = Utc.with_ymd_and_hms(2024, 1, 29, 0, 0, 0).unwrap();
    vec![
        // SkySat-like sun-synchronous LEO, ~480 km
        synthetic_record(91001, epoch, 97.4, 52.0, 0.0003, 90.0, 0.0, 15.25),
        synthetic_record(91002, epoch, 97.4, 142.0, 0.0003, 90.0, 120.0, 15.25),
        // mid-inclination
        synthetic_record(91003, epoch, 53.0, 10.0, 0.0008, 30.0, 200.0, 15.1),
    ]
}

/// TLE text for the demo constellation (three-line entries).
pub fn demo_tle_text() -> String {
    let mut out = String::new();
    for rec in demo_constellation() {
        let (l1, l2) = rec.to_tle_lines();
        out.push_str(&rec.name);
        out.push('\n');
        out.push_str(&l1);
        out.push('\n');
        out.push_str(&l2);
        out.push('\n');
    }
    out
}

/// Synthetic scenes spread over a lon/lat box and time range.
pub fn synthetic_scenes(seed: u64, n: usize, provider: &str) -> Vec<SceneRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let lon = rng.gen_range(-20.0..50.0);
            let lat = rng.gen_range(-30.0..45.0);
            let gsd = [0.3, 0.5, 0.7, 1.5, 3.9][rng.gen_range(0..5)];
            let year = rng.gen_range(2017..=2023);
            let month = rng.gen_range(1..=12);
            let day = rng.gen_range(1..=28);
            let half = 0.05;
            SceneRecord {
                provider: provider.to_string(),
                scene_id: format!("{provider}-{i:06}"),
                constellation: "synthetic".to_string(),
                acquired_at: Utc.with_ymd_and_hms(year, month, day, 12, 0, 0).unwrap(),
                gsd_m: gsd,
                centroid_lon: lon,
                centroid_lat: lat,
                footprint: vec![vec![
                    [lon - half, lat - half],
                    [lon + half, lat - half],
                    [lon + half, lat + half],
                    [lon - half, lat + half],
                    [lon - half, lat - half],
                ]],
                raw_properties: serde_json::Map::new(),
            }
        })
        .collect()
}

/// STAC item JSON for one synthetic scene.
fn stac_item(scene: &SceneRecord) -> serde_json::Value {
    serde_json::json!({
        "type": "Feature",
        "id": scene.scene_id,
        "geometry": {
            "type": "Polygon",
            "coordinates": [scene.footprint[0].iter().map(|p| vec![p[0], p[1]]).collect::<Vec<_>>()]
        },
        "properties": {
            "datetime": scene.acquired_at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            "gsd": scene.gsd_m
        }
    })
}

/// Canned search pages: `pages[i]` is a full item-collection response,
/// chained by cursor tokens "p1", "p2", …
pub fn mock_stac_pages(seed: u64, n_pages: usize, page_size: usize, provider: &str) -> Vec<serde_json::Value> {
    let scenes = synthetic_scenes(seed, n_pages * page_size, provider);
    (0..n_pages)
        .map(|p| {
            let items: Vec<serde_json::Value> = scenes[p * page_size..(p + 1) * page_size]
                .iter()
                .map(stac_item)
                .collect();
            let mut links = Vec::new();
            if p + 1 < n_pages {
                links.push(serde_json::json!({
                    "rel": "next",
                    "href": format!("/search?cursor=p{}", p + 1)
                }));
            }
            serde_json::json!({
                "type": "FeatureCollection",
                "features": items,
                "links": links
            })
        })
        .collect()
}

/// Region grid: `nx` × `ny` rectangular admin-1 regions with covariates
/// correlated the way the regression expects (development ↑ → images ↑).
pub fn synthetic_regions_geojson(nx: usize, ny: usize) -> serde_json::Value {
    let features: Vec<serde_json::Value> = (0..nx * ny)
        .map(|i| {
            let gx = i % nx;
            let gy = i / nx;
            let lon0 = -20.0 + gx as f64 * (70.0 / nx as f64);
            let lat0 = -30.0 + gy as f64 * (75.0 / ny as f64);
            let lon1 = lon0 + 70.0 / nx as f64;
            let lat1 = lat0 + 75.0 / ny as f64;
            serde_json::json!({
                "type": "Feature",
                "properties": {
                    "region_id": format!("SYNr{i:04}"),
                    "country_code": format!("C{:02}", i % 20),
                    "name": format!("Region {i}")
                },
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[
                        [lon0, lat0], [lon1, lat0], [lon1, lat1], [lon0, lat1], [lon0, lat0]
                    ]]
                }
            })
        })
        .collect();
    serde_json::json!({"type": "FeatureCollection", "features": features})
}

/// Covariate CSV matching `synthetic_regions_geojson`.
pub fn synthetic_covariates_csv(nx: usize, ny: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from(
        "region_id,country_code,shdi,income_index,households,area_km2,cloud_cover_mean\n",
    );
    for i in 0..nx * ny {
        let shdi: f64 = rng.gen_range(0.3..0.95);
        let income = (shdi + rng.gen_range(-0.1..0.1)).clamp(0.05, 0.99);
        let households = rng.gen_range(5_000.0..500_000.0_f64).round();
        let area = rng.gen_range(1_000.0..80_000.0_f64).round();
        let cloud = rng.gen_range(20.0..80.0_f64);
        out.push_str(&format!(
            "SYNr{i:04},C{:02},{shdi:.4},{income:.4},{households},{area},{cloud:.2}\n",
            i % 20
        ));
    }
    out
}

/// A Table-4-shaped synthetic regional dataset: 1726 rows with the same
/// covariate columns and an image count driven by area, households, and
/// development plus noise.
pub struct SyntheticRegional {
    pub region_ids: Vec<String>,
    pub country_codes: Vec<String>,
    pub total_images: Vec<f64>,
    pub vhr_images: Vec<f64>,
    pub planet_images: Vec<f64>,
    pub shdi: Vec<f64>,
    pub income_index: Vec<f64>,
    pub households: Vec<f64>,
    pub area_km2: Vec<f64>,
    pub abs_lat: Vec<f64>,
    pub abs_lon: Vec<f64>,
    pub cloud_cover_mean: Vec<f64>,
}

pub fn synthetic_regional_dataset(seed: u64) -> SyntheticRegional {
    let n = 1726;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = SyntheticRegional {
        region_ids: Vec::with_capacity(n),
        country_codes: Vec::with_capacity(n),
        total_images: Vec::with_capacity(n),
        vhr_images: Vec::with_capacity(n),
        planet_images: Vec::with_capacity(n),
        shdi: Vec::with_capacity(n),
        income_index: Vec::with_capacity(n),
        households: Vec::with_capacity(n),
        area_km2: Vec::with_capacity(n),
        abs_lat: Vec::with_capacity(n),
        abs_lon: Vec::with_capacity(n),
        cloud_cover_mean: Vec::with_capacity(n),
    };
    for i in 0..n {
        let shdi: f64 = rng.gen_range(0.25..0.98);
        let income = (shdi + rng.gen_range(-0.15..0.15)).clamp(0.05, 0.99);
        let households = rng.gen_range(2_000.0..800_000.0_f64);
        let area = rng.gen_range(500.0..120_000.0_f64);
        let abs_lat = rng.gen_range(0.0..70.0);
        let abs_lon = rng.gen_range(0.0..180.0);
        let cloud = rng.gen_range(0.1..0.9);
        let noise: f64 = rng.gen_range(-0.5..0.5);
        let count = (0.00004 * area + 0.000004 * households + 900.0 * shdi * shdi
            - 2.0 * cloud
            + 200.0 * noise)
            .max(0.0);
        data.region_ids.push(format!("SYNr{i:04}"));
        data.country_codes.push(format!("C{:03}", i % 180));
        data.total_images.push(count.round());
        data.vhr_images.push((count * rng.gen_range(0.2..0.6)).round());
        data.planet_images.push((count * rng.gen_range(0.1..0.4)).round());
        data.shdi.push(shdi);
        data.income_index.push(income);
        data.households.push(households.round());
        data.area_km2.push(area.round());
        data.abs_lat.push(abs_lat);
        data.abs_lon.push(abs_lon);
        data.cloud_cover_mean.push(cloud);
    }
    data
}

/// The regional-dataset CSV layout the `enrich` command writes.
pub fn synthetic_regional_csv(seed: u64) -> String {
    let d = synthetic_regional_dataset(seed);
    let mut out = String::from(
        "region_id,country_code,total_images,vhr_images,planet_images,images_00_05,images_05_10,images_10_30,images_30p,shdi,income_index,households,area_km2,abs_lat,abs_lon,cloud_cover_mean,missing_covariate\n",
    );
    for i in 0..d.region_ids.len() {
        let vhr = d.vhr_images[i];
        let rest = d.total_images[i] - vhr;
        let b1 = (vhr / 2.0).floor();
        let b2 = vhr - b1;
        let b3 = (rest / 2.0).floor();
        let b4 = rest - b3;
        out.push_str(&format!(
            "{},{},{},{},{},{b1},{b2},{b3},{b4},{:.6},{:.6},{},{},{:.6},{:.6},{:.6},false\n",
            d.region_ids[i],
            d.country_codes[i],
            d.total_images[i],
            d.vhr_images[i],
            d.planet_images[i],
            d.shdi[i],
            d.income_index[i],
            d.households[i],
            d.area_km2[i],
            d.abs_lat[i],
            d.abs_lon[i],
            d.cloud_cover_mean[i]
        ));
    }
    out
}
