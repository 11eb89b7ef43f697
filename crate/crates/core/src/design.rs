//! Regression structure of the mean: a linear time trend, a cubic in
//! latitude, and sensor contrasts against the reference instrument.
//!
//! Columns are `[1, t̃, l̃, l̃², l̃³, 1{starboard}, 1{port}]` with `t̃` and `l̃`
//! the standardized time and latitude. The reference sensor is the dropped
//! level, so the last two coefficients are the starboard and port biases
//! relative to the reference.

use serde::{Deserialize, Serialize};

use crate::data::{ObservationSet, Sensor};
use crate::linalg::dependent_columns;
use crate::{Error, Result};

pub const N_COEF: usize = 7;

pub const COLUMN_NAMES: [&str; N_COEF] = ["intercept", "time", "lat", "lat2", "lat3", "starboard", "port"];

/// Mean coefficients. `starboard` and `port` are the contrasts against the
/// reference sensor (m/s); the trend coefficients are per standardized unit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanParams {
    pub intercept: f64,
    pub time: f64,
    pub lat: f64,
    pub lat2: f64,
    pub lat3: f64,
    pub starboard: f64,
    pub port: f64,
}

impl MeanParams {
    pub fn to_array(&self) -> [f64; N_COEF] {
        [self.intercept, self.time, self.lat, self.lat2, self.lat3, self.starboard, self.port]
    }

    pub fn from_slice(b: &[f64]) -> Self {
        assert_eq!(b.len(), N_COEF);
        MeanParams {
            intercept: b[0],
            time: b[1],
            lat: b[2],
            lat2: b[3],
            lat3: b[4],
            starboard: b[5],
            port: b[6],
        }
    }
}

/// Centering and scaling applied to time and latitude before the polynomial
/// expansion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub time_center: f64,
    pub time_scale: f64,
    pub lat_center: f64,
    pub lat_scale: f64,
}

impl Standardization {
    pub fn identity() -> Self {
        Standardization { time_center: 0.0, time_scale: 1.0, lat_center: 0.0, lat_scale: 1.0 }
    }

    pub fn time(&self, t: f64) -> f64 {
        (t - self.time_center) / self.time_scale
    }

    pub fn lat(&self, lat: f64) -> f64 {
        (lat - self.lat_center) / self.lat_scale
    }
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Sample means and standard deviations (n − 1 denominator) of time and
/// latitude. A constant covariate gets scale 1.
pub fn standardize(set: &ObservationSet) -> Result<Standardization> {
    if set.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (tc, ts) = mean_sd(set.iter().map(|o| o.time));
    let (lc, ls) = mean_sd(set.iter().map(|o| o.lat));
    let guard = |center: f64, sd: f64| if sd > 1e-12 * center.abs().max(1.0) { sd } else { 1.0 };
    Ok(Standardization {
        time_center: tc,
        time_scale: guard(tc, ts),
        lat_center: lc,
        lat_scale: guard(lc, ls),
    })
}

/// Both the reference and at least one other sensor must be present.
pub fn check_identifiable(set: &ObservationSet) -> Result<()> {
    let reference = set.iter().any(|o| o.sensor.is_reference());
    let other = set.iter().any(|o| !o.sensor.is_reference());
    match (reference, other) {
        (true, true) => Ok(()),
        (false, _) => Err(Error::NotIdentifiable { missing: "reference-sensor" }),
        (true, false) => Err(Error::NotIdentifiable { missing: "starboard or port" }),
    }
}

/// Dense `n × 7` design, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn from_rows(rows: &[[f64; N_COEF]]) -> Self {
        DesignMatrix { rows: rows.len(), data: rows.iter().flatten().copied().collect() }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * N_COEF..(i + 1) * N_COEF]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * N_COEF + j]
    }

    pub fn predict(&self, beta: &MeanParams) -> Vec<f64> {
        let b = beta.to_array();
        (0..self.rows).map(|i| self.row(i).iter().zip(&b).map(|(x, b)| x * b).sum()).collect()
    }

    /// `XᵀX`, row-major 7 × 7.
    pub fn gram(&self) -> Vec<f64> {
        let mut g = vec![0.0; N_COEF * N_COEF];
        for i in 0..self.rows {
            let r = self.row(i);
            for a in 0..N_COEF {
                for b in 0..=a {
                    g[a * N_COEF + b] += r[a] * r[b];
                }
            }
        }
        for a in 0..N_COEF {
            for b in 0..a {
                g[b * N_COEF + a] = g[a * N_COEF + b];
            }
        }
        g
    }

    /// Fails with the names of columns that are linear combinations of
    /// earlier columns.
    pub fn check_full_rank(&self) -> Result<()> {
        check_gram_rank(&self.gram())
    }
}

pub(crate) fn check_gram_rank(gram: &[f64]) -> Result<()> {
    let dependent = dependent_columns(gram, N_COEF, 1e-10);
    if dependent.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient { columns: dependent.into_iter().map(|j| COLUMN_NAMES[j].to_string()).collect() })
    }
}

pub fn design_row(time: f64, lat: f64, sensor: Sensor, std: &Standardization) -> [f64; N_COEF] {
    let t = std.time(time);
    let l = std.lat(lat);
    [
        1.0,
        t,
        l,
        l * l,
        l * l * l,
        if sensor == Sensor::Starboard { 1.0 } else { 0.0 },
        if sensor == Sensor::Port { 1.0 } else { 0.0 },
    ]
}

/// Design matrix for `set`, rows in set order.
pub fn build_design(set: &ObservationSet, std: &Standardization) -> Result<DesignMatrix> {
    check_identifiable(set)?;
    let rows: Vec<[f64; N_COEF]> = set.iter().map(|o| design_row(o.time, o.lat, o.sensor, std)).collect();
    Ok(DesignMatrix::from_rows(&rows))
}
