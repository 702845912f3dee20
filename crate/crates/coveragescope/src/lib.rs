//! Satellite imagery coverage analysis toolkit.
//!
//! Simulates theoretical revisit opportunities of imaging constellations
//! from TLE orbital elements, harvests scene metadata from STAC catalogs,
//! and runs the statistical pipeline relating image availability to
//! socio-economic covariates (regional aggregation, OLS regression,
//! Gini/Lorenz concentration, revisit-to-archive ratios, heatmaps).

pub mod cli;
pub mod coverage;
pub mod fixtures;
pub mod propagator;
pub mod enrichment;
pub mod stac;
pub mod stats;
pub mod tle;
