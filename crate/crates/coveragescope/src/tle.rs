//! Two-Line Element set parsing, validation, and serialization.
//!
//! Accepts standard 69-character TLE lines (with optional leading name line)
//! as exported from space-track.org. Deep-space records (orbital period
//! ≥ 225 minutes) are rejected because the propagator implements the
//! near-earth model only; every constellation under study is LEO.

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Orbital period threshold separating near-earth from deep-space records, minutes.
pub const DEEP_SPACE_PERIOD_MIN: f64 = 225.0;

#[derive(Debug, Error)]
pub enum TleError {
    #[error("line {line_no}: checksum mismatch (expected {expected}, found {found})")]
    ChecksumMismatch {
        line_no: u8,
        expected: u8,
        found: u8,
    },
    #[error("line {line_no}, field {field}: malformed value {value:?}")]
    MalformedField {
        line_no: u8,
        field: &'static str,
        value: String,
    },
    #[error("line {line_no}: expected 69 characters, found {len}")]
    LineLength { line_no: u8, len: usize },
    #[error("NORAD id differs between lines: {line1} vs {line2}")]
    CrossLineIdMismatch { line1: u32, line2: u32 },
    #[error("missing line starting with {0:?}")]
    MissingLine(&'static str),
    #[error("deep-space record unsupported: period {period_min:.1} min >= 225 min")]
    DeepSpaceUnsupported { period_min: f64 },
    #[error("field {field} out of range: {value}")]
    FieldRange { field: &'static str, value: f64 },
    #[error("invalid epoch: year {year}, day {day}")]
    InvalidEpoch { year: i32, day: f64 },
}

/// One parsed two-line element set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TleRecord {
    pub name: String,
    pub norad_id: u32,
    pub classification: char,
    pub intl_designator: String,
    pub epoch: DateTime<Utc>,
    /// Revolutions per day.
    pub mean_motion: f64,
    /// First derivative field as printed (rev/day²).
    pub mean_motion_dot: f64,
    /// Second derivative field as printed (rev/day³).
    pub mean_motion_ddot: f64,
    /// Drag term, inverse earth radii.
    pub bstar: f64,
    pub inclination: f64,
    pub raan: f64,
    pub eccentricity: f64,
    pub arg_perigee: f64,
    pub mean_anomaly: f64,
    pub element_set_no: u32,
    pub rev_at_epoch: u32,
}

impl TleRecord {
    pub fn period_minutes(&self) -> f64 {
        1440.0 / self.mean_motion
    }

    /// Minutes elapsed from the record epoch to `t` (negative if before).
    pub fn minutes_since_epoch(&self, t: DateTime<Utc>) -> f64 {
        (t - self.epoch).num_milliseconds() as f64 / 60_000.0
    }

    /// Regenerate the two 69-character lines, checksums included.
    pub fn to_tle_lines(&self) -> (String, String) {
        let epoch_field = format_epoch(self.epoch);
        let line1 = format!(
            "1 {:05}{} {:<8} {} {} {} {} 0 {:4}",
            self.norad_id,
            self.classification,
            self.intl_designator,
            epoch_field,
            format_ndot(self.mean_motion_dot),
            format_exp(self.mean_motion_ddot),
            format_exp(self.bstar),
            self.element_set_no
        );
        let line2 = format!(
            "2 {:05} {:8.4} {:8.4} {:07} {:8.4} {:8.4} {:11.8}{:5}",
            self.norad_id,
            self.inclination,
            self.raan,
            (self.eccentricity * 1e7).round() as u64,
            self.arg_perigee,
            self.mean_anomaly,
            self.mean_motion,
            self.rev_at_epoch
        );
        (append_checksum(&line1), append_checksum(&line2))
    }
}

/// Mod-10 TLE checksum over the first 68 columns: digits count as value,
/// minus signs count as 1, everything else as 0.
pub fn checksum(line: &str) -> u8 {
    let mut sum: u32 = 0;
    for c in line.chars().take(68) {
        if let Some(d) = c.to_digit(10) {
            sum += d;
        } else if c == '-' {
            sum += 1;
        }
    }
    (sum % 10) as u8
}

fn append_checksum(line68: &str) -> String {
    debug_assert_eq!(line68.len(), 68);
    format!("{}{}", line68, checksum(line68))
}

fn field<'a>(line: &'a str, line_no: u8, range: std::ops::Range<usize>) -> &'a str {
    let s = &line[range];
    let _ = line_no;
    s
}

fn parse_f64(line: &str, line_no: u8, range: std::ops::Range<usize>, name: &'static str) -> Result<f64, TleError> {
    let s = field(line, line_no, range).trim();
    if s.is_empty() {
        return Ok(0.0);
    }
    s.parse::<f64>().map_err(|_| TleError::MalformedField {
        line_no,
        field: name,
        value: s.to_string(),
    })
}

fn parse_u32(line: &str, line_no: u8, range: std::ops::Range<usize>, name: &'static str) -> Result<u32, TleError> {
    let s = field(line, line_no, range).trim();
    if s.is_empty() {
        return Ok(0);
    }
    s.parse::<u32>().map_err(|_| TleError::MalformedField {
        line_no,
        field: name,
        value: s.to_string(),
    })
}

/// Implied-decimal field with exponent, e.g. " 28098-4" = 0.28098e-4.
fn parse_implied_exp(line: &str, line_no: u8, range: std::ops::Range<usize>, name: &'static str) -> Result<f64, TleError> {
    let s = field(line, line_no, range).trim();
    if s.is_empty() {
        return Ok(0.0);
    }
    let err = || TleError::MalformedField {
        line_no,
        field: name,
        value: s.to_string(),
    };
    let (sign, rest) = match s.strip_prefix('-') {
        Some(r) => (-1.0, r),
        None => (1.0, s.strip_prefix('+').unwrap_or(s)),
    };
    // split at exponent sign; the exponent part is the last signed digit run
    let exp_pos = rest.rfind(['+', '-']).ok_or_else(err)?;
    if exp_pos == 0 {
        return Err(err());
    }
    let (mantissa_digits, exp) = rest.split_at(exp_pos);
    let mantissa: f64 = format!("0.{}", mantissa_digits.trim()).parse().map_err(|_| err())?;
    let exp: i32 = exp.parse().map_err(|_| err())?;
    Ok(sign * mantissa * 10f64.powi(exp))
}

/// First-derivative field, e.g. " .00000023" or "-.00000123".
fn parse_ndot(line: &str, line_no: u8, range: std::ops::Range<usize>) -> Result<f64, TleError> {
    let s = field(line, line_no, range).trim();
    if s.is_empty() {
        return Ok(0.0);
    }
    let normalized = if let Some(r) = s.strip_prefix('-') {
        format!("-0{}", r)
    } else if let Some(r) = s.strip_prefix('+') {
        format!("0{}", r)
    } else {
        format!("0{}", s)
    };
    normalized.parse::<f64>().map_err(|_| TleError::MalformedField {
        line_no,
        field: "mean_motion_dot",
        value: s.to_string(),
    })
}

fn format_ndot(v: f64) -> String {
    let s = format!("{:.8}", v.abs());
    // "0.00000023" -> ".00000023"
    let frac = &s[1..];
    if v < 0.0 {
        format!("-{}", frac)
    } else {
        format!(" {}", frac)
    }
}

fn format_exp(v: f64) -> String {
    if v == 0.0 {
        return " 00000+0".to_string();
    }
    let sign = if v < 0.0 { '-' } else { ' ' };
    let mut exp = v.abs().log10().floor() as i32 + 1;
    let mut mantissa = v.abs() / 10f64.powi(exp);
    // 5 significant digits, mantissa in [0.1, 1)
    let mut digits = (mantissa * 1e5).round() as i64;
    if digits >= 100000 {
        digits /= 10;
        exp += 1;
        mantissa = digits as f64 / 1e5;
    }
    let _ = mantissa;
    let exp_sign = if exp < 0 { '-' } else { '+' };
    format!("{}{:05}{}{}", sign, digits, exp_sign, exp.abs())
}

fn format_epoch(t: DateTime<Utc>) -> String {
    use chrono::Datelike;
    let year = t.year();
    let yy = year % 100;
    let jan1 = Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).unwrap();
    let day = (t - jan1).num_milliseconds() as f64 / 86_400_000.0 + 1.0;
    format!("{:02}{:012.8}", yy, day)
}

/// 2-digit year pivot: 57–99 → 1957–1999, 00–56 → 2000–2056.
fn resolve_epoch(yy: u32, day_of_year: f64) -> Result<DateTime<Utc>, TleError> {
    let year = if yy >= 57 { 1900 + yy as i32 } else { 2000 + yy as i32 };
    if !(1.0..367.0).contains(&day_of_year) {
        return Err(TleError::InvalidEpoch {
            year,
            day: day_of_year,
        });
    }
    let date = NaiveDate::from_ymd_opt(year, 1, 1).ok_or(TleError::InvalidEpoch {
        year,
        day: day_of_year,
    })?;
    let millis = ((day_of_year - 1.0) * 86_400_000.0).round() as i64;
    let dt = date.and_hms_opt(0, 0, 0).unwrap() + Duration::milliseconds(millis);
    Ok(Utc.from_utc_datetime(&dt))
}

fn check_line(line: &str, line_no: u8, prefix: &'static str) -> Result<(), TleError> {
    let stripped = line.trim_end_matches(['\r', '\n']);
    if !stripped.is_ascii() {
        return Err(TleError::MalformedField {
            line_no,
            field: "line",
            value: stripped.to_string(),
        });
    }
    if stripped.len() != 69 {
        return Err(TleError::LineLength {
            line_no,
            len: stripped.len(),
        });
    }
    if !stripped.starts_with(prefix) {
        return Err(TleError::MissingLine(prefix));
    }
    let expected = checksum(stripped);
    let found = stripped
        .chars()
        .nth(68)
        .and_then(|c| c.to_digit(10))
        .ok_or(TleError::MalformedField {
            line_no,
            field: "checksum",
            value: stripped[68..].to_string(),
        })? as u8;
    if expected != found {
        return Err(TleError::ChecksumMismatch {
            line_no,
            expected,
            found,
        });
    }
    Ok(())
}

/// Parse one TLE entry from two or three lines of text.
pub fn parse_tle(text: &str) -> Result<TleRecord, TleError> {
    let lines: Vec<&str> = text
        .lines()
        .map(|l| l.trim_end())
        .filter(|l| !l.is_empty())
        .collect();
    let mut name = String::new();
    let mut it = lines.iter();
    let mut line1 = *it.next().ok_or(TleError::MissingLine("1 "))?;
    if !line1.starts_with("1 ") {
        name = line1.trim().to_string();
        line1 = *it.next().ok_or(TleError::MissingLine("1 "))?;
    }
    let line2 = *it.next().ok_or(TleError::MissingLine("2 "))?;
    parse_tle_lines(&name, line1, line2)
}

pub fn parse_tle_lines(name: &str, line1: &str, line2: &str) -> Result<TleRecord, TleError> {
    check_line(line1, 1, "1 ")?;
    check_line(line2, 2, "2 ")?;

    let id1 = parse_u32(line1, 1, 2..7, "norad_id")?;
    let id2 = parse_u32(line2, 2, 2..7, "norad_id")?;
    if id1 != id2 {
        return Err(TleError::CrossLineIdMismatch { line1: id1, line2: id2 });
    }

    let classification = line1.chars().nth(7).unwrap_or('U');
    let intl_designator = line1[9..17].trim().to_string();
    let epoch_year = parse_u32(line1, 1, 18..20, "epoch_year")?;
    let epoch_day = parse_f64(line1, 1, 20..32, "epoch_day")?;
    let epoch = resolve_epoch(epoch_year, epoch_day)?;

    let mean_motion_dot = parse_ndot(line1, 1, 33..43)?;
    let mean_motion_ddot = parse_implied_exp(line1, 1, 44..52, "mean_motion_ddot")?;
    let bstar = parse_implied_exp(line1, 1, 53..61, "bstar")?;
    let element_set_no = parse_u32(line1, 1, 64..68, "element_set_no")?;

    let inclination = parse_f64(line2, 2, 8..16, "inclination")?;
    let raan = parse_f64(line2, 2, 17..25, "raan")?;
    let ecc_field = line2[26..33].trim();
    let eccentricity = format!("0.{}", ecc_field)
        .parse::<f64>()
        .map_err(|_| TleError::MalformedField {
            line_no: 2,
            field: "eccentricity",
            value: ecc_field.to_string(),
        })?;
    let arg_perigee = parse_f64(line2, 2, 34..42, "arg_perigee")?;
    let mean_anomaly = parse_f64(line2, 2, 43..51, "mean_anomaly")?;
    let mean_motion = parse_f64(line2, 2, 52..63, "mean_motion")?;
    let rev_at_epoch = parse_u32(line2, 2, 63..68, "rev_at_epoch")?;

    if !(0.0..1.0).contains(&eccentricity) {
        return Err(TleError::FieldRange {
            field: "eccentricity",
            value: eccentricity,
        });
    }
    if !(0.0..=180.0).contains(&inclination) {
        return Err(TleError::FieldRange {
            field: "inclination",
            value: inclination,
        });
    }
    if mean_motion <= 0.0 {
        return Err(TleError::FieldRange {
            field: "mean_motion",
            value: mean_motion,
        });
    }
    let period_min = 1440.0 / mean_motion;
    if period_min >= DEEP_SPACE_PERIOD_MIN {
        return Err(TleError::DeepSpaceUnsupported { period_min });
    }

    Ok(TleRecord {
        name: name.to_string(),
        norad_id: id1,
        classification,
        intl_designator,
        epoch,
        mean_motion,
        mean_motion_dot,
        mean_motion_ddot,
        bstar,
        inclination,
        raan: raan.rem_euclid(360.0),
        eccentricity,
        arg_perigee: arg_perigee.rem_euclid(360.0),
        mean_anomaly: mean_anomaly.rem_euclid(360.0),
        element_set_no,
        rev_at_epoch,
    })
}

/// One failed entry inside a TLE file, with the 1-based line number of its first line.
#[derive(Debug)]
pub struct ParseFailure {
    pub line_no: usize,
    pub name: Option<String>,
    pub error: TleError,
}

/// Per-file parse outcome: valid records plus reported failures.
#[derive(Debug, Default)]
pub struct ParseReport {
    pub failures: Vec<ParseFailure>,
}

pub fn load_tle_file(path: &Path) -> std::io::Result<(Vec<TleRecord>, ParseReport)> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_tle_text(&text))
}

/// Parse a concatenation of TLE entries, optional name lines interleaved.
pub fn parse_tle_text(text: &str) -> (Vec<TleRecord>, ParseReport) {
    let mut records = Vec::new();
    let mut report = ParseReport::default();
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.is_empty())
        .collect();

    let mut i = 0;
    let mut pending_name: Option<(usize, String)> = None;
    while i < lines.len() {
        let (line_no, line) = lines[i];
        if line.starts_with("1 ") {
            let name = pending_name.take().map(|(_, n)| n).unwrap_or_default();
            let entry_start = line_no;
            if i + 1 < lines.len() && lines[i + 1].1.starts_with("2 ") {
                match parse_tle_lines(&name, line, lines[i + 1].1) {
                    Ok(rec) => records.push(rec),
                    Err(error) => report.failures.push(ParseFailure {
                        line_no: entry_start,
                        name: (!name.is_empty()).then(|| name.clone()),
                        error,
                    }),
                }
                i += 2;
            } else {
                report.failures.push(ParseFailure {
                    line_no: entry_start,
                    name: (!name.is_empty()).then(|| name.clone()),
                    error: TleError::MissingLine("2 "),
                });
                i += 1;
            }
        } else if line.starts_with("2 ") {
            report.failures.push(ParseFailure {
                line_no,
                name: None,
                error: TleError::MissingLine("1 "),
            });
            i += 1;
        } else {
            pending_name = Some((line_no, line.trim().to_string()));
            i += 1;
        }
    }
    (records, report)
}

/// A named group of satellites sharing swath and resolution parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstellationSpec {
    pub name: String,
    pub satellite_ids: Vec<u32>,
    #[serde(default = "default_swath_buffer")]
    pub swath_buffer_km: f64,
    pub gsd_m: f64,
}

fn default_swath_buffer() -> f64 {
    250.0
}

impl ConstellationSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.satellite_ids.is_empty() {
            return Err(format!("constellation {}: empty satellite list", self.name));
        }
        if self.swath_buffer_km <= 0.0 {
            return Err(format!("constellation {}: swath_buffer_km must be > 0", self.name));
        }
        if self.gsd_m <= 0.0 {
            return Err(format!("constellation {}: gsd_m must be > 0", self.name));
        }
        Ok(())
    }
}
