//! Near-earth SGP4 propagation of TLE mean elements to earth-fixed
//! geodetic sub-satellite points.
//!
//! The propagation model uses WGS72 gravitational constants, as the TLE
//! standard requires; geodetic output uses the WGS84 ellipsoid. Earth
//! rotation is GMST only (IAU-1982 polynomial) — polar motion and
//! UT1−UTC are below the buffer scale used downstream.

use crate::tle::TleRecord;
use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const TWO_PI: f64 = std::f64::consts::TAU;
const DEG2RAD: f64 = std::f64::consts::PI / 180.0;
const RAD2DEG: f64 = 180.0 / std::f64::consts::PI;

// WGS72 constants (propagation model)
const MU: f64 = 398600.8; // km^3/s^2
const EARTH_RADIUS_KM: f64 = 6378.135;
const J2: f64 = 0.001082616;
const J3: f64 = -0.00000253881;
const J4: f64 = -0.00000165597;
const J3OJ2: f64 = J3 / J2;

// WGS84 ellipsoid (geodetic output)
const WGS84_A: f64 = 6378.137;
const WGS84_F: f64 = 1.0 / 298.257223563;

/// Propagation accuracy guard: mean elements degrade beyond this window.
pub const MAX_WINDOW_DAYS: f64 = 90.0;

#[derive(Debug, Error)]
pub enum PropagationError {
    #[error("orbit decayed at t = {t} (radius below earth surface)")]
    DecayedOrbit { t: DateTime<Utc> },
    #[error("t = {t} is {days:.1} days from epoch, outside the ±{max:.0}-day window")]
    PropagationWindowExceeded { t: DateTime<Utc>, days: f64, max: f64 },
    #[error("mean elements degenerate at t = {t} (eccentricity out of range)")]
    DegenerateElements { t: DateTime<Utc> },
    #[error("kepler iteration failed to converge at t = {t}")]
    KeplerDivergence { t: DateTime<Utc> },
    #[error("invalid ground track window: start must precede end")]
    InvalidWindow,
    #[error("invalid step: must be > 0 seconds")]
    InvalidStep,
}

/// Inertial (TEME) position/velocity at an instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EciState {
    pub t: DateTime<Utc>,
    /// km
    pub position: [f64; 3],
    /// km/s
    pub velocity: [f64; 3],
}

/// Geodetic sub-satellite point, WGS84.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPoint {
    /// degrees, [-90, 90]
    pub lat: f64,
    /// degrees, [-180, 180)
    pub lon: f64,
    /// km above the ellipsoid
    pub alt: f64,
}

impl GeodeticPoint {
    pub fn new(lat: f64, lon: f64, alt: f64) -> Self {
        GeodeticPoint {
            lat,
            lon: normalize_lon(lon),
            alt,
        }
    }
}

/// Normalize longitude to [-180, 180).
pub fn normalize_lon(lon: f64) -> f64 {
    let l = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if l == 180.0 {
        -180.0
    } else {
        l
    }
}

/// Time-ordered sub-satellite points for one satellite at a uniform step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTrack {
    pub norad_id: u32,
    pub start: DateTime<Utc>,
    /// seconds between samples
    pub step: f64,
    pub samples: Vec<GeodeticPoint>,
}

impl GroundTrack {
    pub fn sample_time(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::milliseconds((index as f64 * self.step * 1000.0).round() as i64)
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.sample_time(self.samples.len())
    }
}

/// Initialized near-earth SGP4 propagation constants for one record.
#[derive(Debug, Clone)]
pub struct Sgp4Model {
    pub epoch: DateTime<Utc>,
    // mean elements at epoch (radians, radians/min)
    ecco: f64,
    inclo: f64,
    nodeo: f64,
    argpo: f64,
    mo: f64,
    no_unkozai: f64,
    bstar: f64,
    // derived constants
    simple: bool,
    aycof: f64,
    con41: f64,
    cc1: f64,
    cc4: f64,
    cc5: f64,
    d2: f64,
    d3: f64,
    d4: f64,
    delmo: f64,
    eta: f64,
    argpdot: f64,
    omgcof: f64,
    sinmao: f64,
    t2cof: f64,
    t3cof: f64,
    t4cof: f64,
    t5cof: f64,
    x1mth2: f64,
    x7thm1: f64,
    mdot: f64,
    nodedot: f64,
    xlcof: f64,
    xmcof: f64,
    nodecf: f64,
}

fn xke() -> f64 {
    60.0 / (EARTH_RADIUS_KM.powi(3) / MU).sqrt()
}

impl Sgp4Model {
    pub fn new(record: &TleRecord) -> Self {
        let xke = xke();
        let x2o3 = 2.0 / 3.0;

        let no_kozai = record.mean_motion * TWO_PI / 1440.0;
        let ecco = record.eccentricity;
        let inclo = record.inclination * DEG2RAD;
        let nodeo = record.raan * DEG2RAD;
        let argpo = record.arg_perigee * DEG2RAD;
        let mo = record.mean_anomaly * DEG2RAD;
        let bstar = record.bstar;

        let eccsq = ecco * ecco;
        let omeosq = 1.0 - eccsq;
        let rteosq = omeosq.sqrt();
        let cosio = inclo.cos();
        let cosio2 = cosio * cosio;

        // recover the un-Kozai'd mean motion
        let ak = (xke / no_kozai).powf(x2o3);
        let d1 = 0.75 * J2 * (3.0 * cosio2 - 1.0) / (rteosq * omeosq);
        let mut del = d1 / (ak * ak);
        let adel = ak * (1.0 - del * del - del * (1.0 / 3.0 + 134.0 * del * del * del / 81.0));
        del = d1 / (adel * adel);
        let no_unkozai = no_kozai / (1.0 + del);

        let ao = (xke / no_unkozai).powf(x2o3);
        let sinio = inclo.sin();
        let po = ao * omeosq;
        let con42 = 1.0 - 5.0 * cosio2;
        let con41 = -con42 - 2.0 * cosio2;
        let posq = po * po;
        let rp = ao * (1.0 - ecco);

        let mut sfour = 78.0 / EARTH_RADIUS_KM + 1.0;
        let mut qzms24 = ((120.0 - 78.0) / EARTH_RADIUS_KM).powi(4);
        let perige = (rp - 1.0) * EARTH_RADIUS_KM;
        if perige < 156.0 {
            sfour = perige - 78.0;
            if perige < 98.0 {
                sfour = 20.0;
            }
            qzms24 = ((120.0 - sfour) / EARTH_RADIUS_KM).powi(4);
            sfour = sfour / EARTH_RADIUS_KM + 1.0;
        }
        let pinvsq = 1.0 / posq;

        let tsi = 1.0 / (ao - sfour);
        let eta = ao * ecco * tsi;
        let etasq = eta * eta;
        let eeta = ecco * eta;
        let psisq = (1.0 - etasq).abs();
        let coef = qzms24 * tsi.powi(4);
        let coef1 = coef / psisq.powf(3.5);
        let cc2 = coef1
            * no_unkozai
            * (ao * (1.0 + 1.5 * etasq + eeta * (4.0 + etasq))
                + 0.375 * J2 * tsi / psisq * con41 * (8.0 + 3.0 * etasq * (8.0 + etasq)));
        let cc1 = bstar * cc2;
        let mut cc3 = 0.0;
        if ecco > 1.0e-4 {
            cc3 = -2.0 * coef * tsi * J3OJ2 * no_unkozai * sinio / ecco;
        }
        let x1mth2 = 1.0 - cosio2;
        let cc4 = 2.0
            * no_unkozai
            * coef1
            * ao
            * omeosq
            * (eta * (2.0 + 0.5 * etasq) + ecco * (0.5 + 2.0 * etasq)
                - J2 * tsi / (ao * psisq)
                    * (-3.0 * con41 * (1.0 - 2.0 * eeta + etasq * (1.5 - 0.5 * eeta))
                        + 0.75 * x1mth2 * (2.0 * etasq - eeta * (1.0 + etasq)) * (2.0 * argpo).cos()));
        let cc5 = 2.0 * coef1 * ao * omeosq * (1.0 + 2.75 * (etasq + eeta) + eeta * etasq);

        let cosio4 = cosio2 * cosio2;
        let temp1 = 1.5 * J2 * pinvsq * no_unkozai;
        let temp2 = 0.5 * temp1 * J2 * pinvsq;
        let temp3 = -0.46875 * J4 * pinvsq * pinvsq * no_unkozai;
        let mdot = no_unkozai
            + 0.5 * temp1 * rteosq * con41
            + 0.0625 * temp2 * rteosq * (13.0 - 78.0 * cosio2 + 137.0 * cosio4);
        let argpdot = -0.5 * temp1 * con42
            + 0.0625 * temp2 * (7.0 - 114.0 * cosio2 + 395.0 * cosio4)
            + temp3 * (3.0 - 36.0 * cosio2 + 49.0 * cosio4);
        let xhdot1 = -temp1 * cosio;
        let nodedot = xhdot1
            + (0.5 * temp2 * (4.0 - 19.0 * cosio2) + 2.0 * temp3 * (3.0 - 7.0 * cosio2)) * cosio;
        let omgcof = bstar * cc3 * argpo.cos();
        let mut xmcof = 0.0;
        if ecco > 1.0e-4 {
            xmcof = -x2o3 * coef * bstar / eeta;
        }
        let nodecf = 3.5 * omeosq * xhdot1 * cc1;
        let t2cof = 1.5 * cc1;
        // avoid division by zero for inclination near 180 deg
        let xlcof = if (cosio + 1.0).abs() > 1.5e-12 {
            -0.25 * J3OJ2 * sinio * (3.0 + 5.0 * cosio) / (1.0 + cosio)
        } else {
            -0.25 * J3OJ2 * sinio * (3.0 + 5.0 * cosio) / 1.5e-12
        };
        let aycof = -0.5 * J3OJ2 * sinio;
        let delmo = (1.0 + eta * mo.cos()).powi(3);
        let sinmao = mo.sin();
        let x7thm1 = 7.0 * cosio2 - 1.0;

        let simple = rp < 220.0 / EARTH_RADIUS_KM + 1.0;
        let (mut d2, mut d3, mut d4) = (0.0, 0.0, 0.0);
        let (mut t3cof, mut t4cof, mut t5cof) = (0.0, 0.0, 0.0);
        if !simple {
            let cc1sq = cc1 * cc1;
            d2 = 4.0 * ao * tsi * cc1sq;
            let temp = d2 * tsi * cc1 / 3.0;
            d3 = (17.0 * ao + sfour) * temp;
            d4 = 0.5 * temp * ao * tsi * (221.0 * ao + 31.0 * sfour) * cc1;
            t3cof = d2 + 2.0 * cc1sq;
            t4cof = 0.25 * (3.0 * d3 + cc1 * (12.0 * d2 + 10.0 * cc1sq));
            t5cof = 0.2
                * (3.0 * d4
                    + 12.0 * cc1 * d3
                    + 6.0 * d2 * d2
                    + 15.0 * cc1sq * (2.0 * d2 + cc1sq));
        }

        Sgp4Model {
            epoch: record.epoch,
            ecco,
            inclo,
            nodeo,
            argpo,
            mo,
            no_unkozai,
            bstar,
            simple,
            aycof,
            con41,
            cc1,
            cc4,
            cc5,
            d2,
            d3,
            d4,
            delmo,
            eta,
            argpdot,
            omgcof,
            sinmao,
            t2cof,
            t3cof,
            t4cof,
            t5cof,
            x1mth2,
            x7thm1,
            mdot,
            nodedot,
            xlcof,
            xmcof,
            nodecf,
        }
    }

    /// Propagate to `tsince` minutes after epoch; TEME km and km/s.
    pub fn propagate_minutes(&self, tsince: f64, t: DateTime<Utc>) -> Result<EciState, PropagationError> {
        let xke = xke();
        let vkmpersec = EARTH_RADIUS_KM * xke / 60.0;
        let x2o3 = 2.0 / 3.0;

        // secular gravity and atmospheric drag
        let xmdf = self.mo + self.mdot * tsince;
        let argpdf = self.argpo + self.argpdot * tsince;
        let nodedf = self.nodeo + self.nodedot * tsince;
        let mut argpm = argpdf;
        let mut mm = xmdf;
        let t2 = tsince * tsince;
        let mut nodem = nodedf + self.nodecf * t2;
        let mut tempa = 1.0 - self.cc1 * tsince;
        let mut tempe = self.bstar * self.cc4 * tsince;
        let mut templ = self.t2cof * t2;

        if !self.simple {
            let delomg = self.omgcof * tsince;
            let delmtemp = 1.0 + self.eta * xmdf.cos();
            let delm = self.xmcof * (delmtemp.powi(3) - self.delmo);
            let temp = delomg + delm;
            mm = xmdf + temp;
            argpm = argpdf - temp;
            let t3 = t2 * tsince;
            let t4 = t3 * tsince;
            tempa -= self.d2 * t2 + self.d3 * t3 + self.d4 * t4;
            tempe += self.bstar * self.cc5 * (mm.sin() - self.sinmao);
            templ += self.t3cof * t3 + t4 * (self.t4cof + tsince * self.t5cof);
        }

        let nm = self.no_unkozai;
        let mut em = self.ecco;
        let inclm = self.inclo;
        let am = (xke / nm).powf(x2o3) * tempa * tempa;
        let nm = xke / am.powf(1.5);
        em -= tempe;
        if !(-0.001..1.0).contains(&em) {
            return Err(PropagationError::DegenerateElements { t });
        }
        if em < 1.0e-6 {
            em = 1.0e-6;
        }
        mm += self.no_unkozai * templ;
        let mut xlm = mm + argpm + nodem;
        nodem = nodem.rem_euclid(TWO_PI);
        argpm = argpm.rem_euclid(TWO_PI);
        xlm = xlm.rem_euclid(TWO_PI);
        let mm = (xlm - argpm - nodem).rem_euclid(TWO_PI);

        let emsq = em * em;

        // long period periodics
        let sinim = inclm.sin();
        let cosim = inclm.cos();
        let axnl = em * argpm.cos();
        let temp = 1.0 / (am * (1.0 - emsq));
        let aynl = em * argpm.sin() + temp * self.aycof;
        let xl = mm + argpm + nodem + temp * self.xlcof * axnl;

        // Kepler's equation in (E + omega)
        let u = (xl - nodem).rem_euclid(TWO_PI);
        let mut eo1 = u;
        let mut tem5: f64 = 9999.9;
        let mut ktr = 1;
        let (mut sineo1, mut coseo1) = (0.0, 0.0);
        while tem5.abs() >= 1.0e-12 && ktr <= 10 {
            sineo1 = eo1.sin();
            coseo1 = eo1.cos();
            tem5 = 1.0 - coseo1 * axnl - sineo1 * aynl;
            tem5 = (u - aynl * coseo1 + axnl * sineo1 - eo1) / tem5;
            if tem5.abs() >= 0.95 {
                tem5 = 0.95 * tem5.signum();
            }
            eo1 += tem5;
            ktr += 1;
        }

        // short period periodics
        let ecose = axnl * coseo1 + aynl * sineo1;
        let esine = axnl * sineo1 - aynl * coseo1;
        let el2 = axnl * axnl + aynl * aynl;
        let pl = am * (1.0 - el2);
        if pl < 0.0 {
            return Err(PropagationError::DegenerateElements { t });
        }
        let rl = am * (1.0 - ecose);
        let rdotl = am.sqrt() * esine / rl;
        let rvdotl = pl.sqrt() / rl;
        let betal = (1.0 - el2).sqrt();
        let temp = esine / (1.0 + betal);
        let sinu = am / rl * (sineo1 - aynl - axnl * temp);
        let cosu = am / rl * (coseo1 - axnl + aynl * temp);
        let su = sinu.atan2(cosu);
        let sin2u = (cosu + cosu) * sinu;
        let cos2u = 1.0 - 2.0 * sinu * sinu;
        let temp = 1.0 / pl;
        let temp1 = 0.5 * J2 * temp;
        let temp2 = temp1 * temp;

        let mrt = rl * (1.0 - 1.5 * temp2 * betal * self.con41)
            + 0.5 * temp1 * self.x1mth2 * cos2u;
        let su = su - 0.25 * temp2 * self.x7thm1 * sin2u;
        let xnode = nodem + 1.5 * temp2 * cosim * sin2u;
        let xinc = inclm + 1.5 * temp2 * cosim * sinim * cos2u;
        let mvt = rdotl - nm * temp1 * self.x1mth2 * sin2u / xke;
        let rvdot = rvdotl + nm * temp1 * (self.x1mth2 * cos2u + 1.5 * self.con41) / xke;

        // orientation vectors
        let sinsu = su.sin();
        let cossu = su.cos();
        let snod = xnode.sin();
        let cnod = xnode.cos();
        let sini = xinc.sin();
        let cosi = xinc.cos();
        let xmx = -snod * cosi;
        let xmy = cnod * cosi;
        let ux = xmx * sinsu + cnod * cossu;
        let uy = xmy * sinsu + snod * cossu;
        let uz = sini * sinsu;
        let vx = xmx * cossu - cnod * sinsu;
        let vy = xmy * cossu - snod * sinsu;
        let vz = sini * cossu;

        if mrt < 1.0 {
            return Err(PropagationError::DecayedOrbit { t });
        }

        Ok(EciState {
            t,
            position: [
                mrt * ux * EARTH_RADIUS_KM,
                mrt * uy * EARTH_RADIUS_KM,
                mrt * uz * EARTH_RADIUS_KM,
            ],
            velocity: [
                (mvt * ux + rvdot * vx) * vkmpersec,
                (mvt * uy + rvdot * vy) * vkmpersec,
                (mvt * uz + rvdot * vz) * vkmpersec,
            ],
        })
    }
}

/// Propagate a near-earth record to instant `t`.
pub fn propagate(record: &TleRecord, t: DateTime<Utc>) -> Result<EciState, PropagationError> {
    let minutes = record.minutes_since_epoch(t);
    let days = minutes.abs() / 1440.0;
    if days > MAX_WINDOW_DAYS {
        return Err(PropagationError::PropagationWindowExceeded {
            t,
            days,
            max: MAX_WINDOW_DAYS,
        });
    }
    Sgp4Model::new(record).propagate_minutes(minutes, t)
}

/// Julian date (UT) of a UTC instant.
pub fn julian_date(t: DateTime<Utc>) -> f64 {
    t.timestamp_millis() as f64 / 86_400_000.0 + 2_440_587.5
}

/// Greenwich mean sidereal time, IAU-1982 polynomial, radians in [0, 2π).
pub fn gmst(t: DateTime<Utc>) -> f64 {
    let tut1 = (julian_date(t) - 2_451_545.0) / 36_525.0;
    let secs = 67310.54841
        + (876600.0 * 3600.0 + 8640184.812866) * tut1
        + 0.093104 * tut1 * tut1
        - 6.2e-6 * tut1 * tut1 * tut1;
    (secs * TWO_PI / 86400.0).rem_euclid(TWO_PI)
}

/// Convert an inertial state to a WGS84 geodetic point: rotate by the
/// earth rotation angle at `state.t`, then ellipsoid conversion.
pub fn eci_to_geodetic(state: &EciState) -> GeodeticPoint {
    let theta = gmst(state.t);
    let (sin_t, cos_t) = theta.sin_cos();
    let [x, y, z] = state.position;
    let xe = cos_t * x + sin_t * y;
    let ye = -sin_t * x + cos_t * y;
    ecef_to_geodetic([xe, ye, z])
}

/// ECEF km → WGS84 geodetic (iterative latitude solve).
pub fn ecef_to_geodetic(ecef: [f64; 3]) -> GeodeticPoint {
    let [x, y, z] = ecef;
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let p = (x * x + y * y).sqrt();
    let lon = y.atan2(x);
    if p < 1e-9 {
        // pole
        let lat = if z >= 0.0 { 90.0 } else { -90.0 };
        let b = WGS84_A * (1.0 - WGS84_F);
        return GeodeticPoint::new(lat, lon * RAD2DEG, z.abs() - b);
    }
    let mut lat = (z / (p * (1.0 - e2))).atan();
    let mut alt = 0.0;
    for _ in 0..10 {
        let sin_lat = lat.sin();
        let n = WGS84_A / (1.0 - e2 * sin_lat * sin_lat).sqrt();
        alt = p / lat.cos() - n;
        let new_lat = (z / (p * (1.0 - e2 * n / (n + alt)))).atan();
        if (new_lat - lat).abs() < 1e-12 {
            lat = new_lat;
            break;
        }
        lat = new_lat;
    }
    GeodeticPoint::new(lat * RAD2DEG, lon * RAD2DEG, alt)
}

/// WGS84 geodetic → ECEF km (forward conversion, used as the round-trip oracle).
pub fn geodetic_to_ecef(point: &GeodeticPoint) -> [f64; 3] {
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let lat = point.lat * DEG2RAD;
    let lon = point.lon * DEG2RAD;
    let sin_lat = lat.sin();
    let n = WGS84_A / (1.0 - e2 * sin_lat * sin_lat).sqrt();
    [
        (n + point.alt) * lat.cos() * lon.cos(),
        (n + point.alt) * lat.cos() * lon.sin(),
        (n * (1.0 - e2) + point.alt) * sin_lat,
    ]
}

/// Sample the sub-satellite track over `[start, end)` at `step` seconds.
pub fn ground_track(
    record: &TleRecord,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    step_seconds: f64,
) -> Result<GroundTrack, PropagationError> {
    if start >= end {
        return Err(PropagationError::InvalidWindow);
    }
    if step_seconds <= 0.0 {
        return Err(PropagationError::InvalidStep);
    }
    let model = Sgp4Model::new(record);
    let window_ms = (end - start).num_milliseconds();
    let step_ms = (step_seconds * 1000.0).round() as i64;
    let n = ((window_ms + step_ms - 1) / step_ms) as usize;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = start + Duration::milliseconds(i as i64 * step_ms);
        let minutes = record.minutes_since_epoch(t);
        let days = minutes.abs() / 1440.0;
        if days > MAX_WINDOW_DAYS {
            return Err(PropagationError::PropagationWindowExceeded {
                t,
                days,
                max: MAX_WINDOW_DAYS,
            });
        }
        let state = model.propagate_minutes(minutes, t)?;
        samples.push(eci_to_geodetic(&state));
    }
    Ok(GroundTrack {
        norad_id: record.norad_id,
        start,
        step: step_seconds,
        samples,
    })
}

/// Build a synthetic near-earth TLE record, checksums regenerated.
/// Used by tests and bundled fixtures.
pub fn synthetic_record(
    norad_id: u32,
    epoch: DateTime<Utc>,
    inclination: f64,
    raan: f64,
    eccentricity: f64,
    arg_perigee: f64,
    mean_anomaly: f64,
    mean_motion: f64,
) -> TleRecord {
    TleRecord {
        name: format!("SYN-{norad_id}"),
        norad_id,
        classification: 'U',
        intl_designator: "24001A".to_string(),
        epoch,
        mean_motion,
        mean_motion_dot: 0.0,
        mean_motion_ddot: 0.0,
        bstar: 0.0001,
        inclination,
        raan,
        eccentricity,
        arg_perigee,
        mean_anomaly,
        element_set_no: 999,
        rev_at_epoch: 1,
    }
}
