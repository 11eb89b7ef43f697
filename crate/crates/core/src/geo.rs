//! Distances on the sphere and the scaled space-time distance used by the
//! covariance model.
//!
//! Spatial separation is the straight-line (chordal) distance between points
//! embedded on a sphere of radius [`EARTH_RADIUS_KM`]. Because the embedding
//! is Euclidean, the scaled distance
//!
//! ```text
//! d = sqrt(chordal² / θ₃² + Δt² / θ₄²)
//! ```
//!
//! is an ordinary Euclidean distance in ℝ⁴, and any Matérn function of it is a
//! valid covariance.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// A location in degrees and a time in seconds since 2020-01-01 00:00 UTC.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub lon: f64,
    pub lat: f64,
    pub time: f64,
}

impl SpaceTimePoint {
    pub fn new(lon: f64, lat: f64, time: f64) -> Self {
        SpaceTimePoint { lon, lat, time }
    }

    /// Cartesian position in km.
    pub fn cartesian(&self) -> [f64; 3] {
        let (sin_lat, cos_lat) = self.lat.to_radians().sin_cos();
        let (sin_lon, cos_lon) = self.lon.to_radians().sin_cos();
        [
            EARTH_RADIUS_KM * cos_lat * cos_lon,
            EARTH_RADIUS_KM * cos_lat * sin_lon,
            EARTH_RADIUS_KM * sin_lat,
        ]
    }

    /// Coordinates in which Euclidean distance equals [`scaled_distance`].
    pub fn scaled_coords(&self, spatial_range: f64, temporal_range: f64) -> [f64; 4] {
        let [x, y, z] = self.cartesian();
        [
            x / spatial_range,
            y / spatial_range,
            z / spatial_range,
            self.time / temporal_range,
        ]
    }
}

pub(crate) fn squared_norm3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

pub(crate) fn squared_norm4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    let d3 = a[3] - b[3];
    d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3
}

/// Straight-line distance through the sphere, in km.
pub fn chordal_distance(p: &SpaceTimePoint, q: &SpaceTimePoint) -> f64 {
    squared_norm3(&p.cartesian(), &q.cartesian()).sqrt()
}

/// Great-circle distance in km (haversine form).
pub fn great_circle_distance(p: &SpaceTimePoint, q: &SpaceTimePoint) -> f64 {
    let (lat1, lat2) = (p.lat.to_radians(), q.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (q.lon - p.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Dimensionless space-time distance with spatial range `spatial_range` (km)
/// and temporal range `temporal_range` (s).
pub fn scaled_distance(
    p: &SpaceTimePoint,
    q: &SpaceTimePoint,
    spatial_range: f64,
    temporal_range: f64,
) -> Result<f64> {
    check_ranges(spatial_range, temporal_range)?;
    let space = chordal_distance(p, q) / spatial_range;
    let time = (p.time - q.time) / temporal_range;
    Ok((space * space + time * time).sqrt())
}

pub(crate) fn check_ranges(spatial_range: f64, temporal_range: f64) -> Result<()> {
    if !(spatial_range > 0.0 && spatial_range.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "spatial range must be positive, got {spatial_range}"
        )));
    }
    if !(temporal_range > 0.0 && temporal_range.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "temporal range must be positive, got {temporal_range}"
        )));
    }
    Ok(())
}

/// Chordal distance corresponding to a latitude difference alone; a lower
/// bound on the chordal distance between two points with that latitude gap.
pub(crate) fn chordal_from_lat_gap(dlat_deg: f64) -> f64 {
    2.0 * EARTH_RADIUS_KM * (dlat_deg.abs().to_radians() / 2.0).min(std::f64::consts::FRAC_PI_2).sin()
}
