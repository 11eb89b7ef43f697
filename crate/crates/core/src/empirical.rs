//! Closest-pair collocation between a CYGNSS antenna and the reference
//! sensor, and the summaries computed from the matched pairs.
//!
//! Time is cut into non-overlapping half-open windows anchored at
//! `origin_s`. In each window the single closest (CYGNSS, reference) pair is
//! kept if its chordal separation is at most `max_km`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Observation, ObservationSet, Sensor};
use crate::geo::{chordal_distance, chordal_from_lat_gap};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub window_s: f64,
    pub max_km: f64,
    pub origin_s: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { window_s: 7200.0, max_km: 25.0, origin_s: 0.0 }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(Error::InvalidArgument(format!("window length must be positive, got {}", self.window_s)));
        }
        if !(self.max_km >= 0.0) || !self.origin_s.is_finite() {
            return Err(Error::InvalidArgument("max separation must be >= 0 and origin finite".into()));
        }
        Ok(())
    }

    pub fn window_of(&self, t: f64) -> i64 {
        ((t - self.origin_s) / self.window_s).floor() as i64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchedPair {
    pub window_id: i64,
    pub sep_km: f64,
    pub cyg: Observation,
    pub reference: Observation,
}

impl MatchedPair {
    /// CYGNSS minus reference wind.
    pub fn difference(&self) -> f64 {
        self.cyg.wind - self.reference.wind
    }

    pub fn average(&self) -> f64 {
        0.5 * (self.cyg.wind + self.reference.wind)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchedPairs {
    /// In window order.
    pub pairs: Vec<MatchedPair>,
    pub config: MatchConfig,
}

impl MatchedPairs {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Ordering used to pick one pair: separation, then CYGNSS time, then
/// reference time, then the remaining fields so the choice never depends on
/// input order.
fn pair_key_cmp(a: (f64, &Observation, &Observation), b: (f64, &Observation, &Observation)) -> Ordering {
    let fields = |o: &Observation| [o.time, o.lon, o.lat, o.wind];
    a.0.total_cmp(&b.0)
        .then(a.1.time.total_cmp(&b.1.time))
        .then(a.2.time.total_cmp(&b.2.time))
        .then_with(|| {
            let (x, y) = (fields(a.1), fields(b.1));
            x.iter().zip(&y).fold(Ordering::Equal, |acc, (p, q)| acc.then(p.total_cmp(q)))
        })
        .then_with(|| {
            let (x, y) = (fields(a.2), fields(b.2));
            x.iter().zip(&y).fold(Ordering::Equal, |acc, (p, q)| acc.then(p.total_cmp(q)))
        })
        .then_with(|| a.1.sensor.code().cmp(&b.1.sensor.code()))
        .then_with(|| a.1.platform.cmp(&b.1.platform))
        .then_with(|| a.2.platform.cmp(&b.2.platform))
}

fn closest_in_window<'a>(
    cyg: &[&'a Observation],
    refs_by_lat: &[&'a Observation],
    max_km: f64,
) -> Option<(f64, &'a Observation, &'a Observation)> {
    let mut best: Option<(f64, &Observation, &Observation)> = None;
    for &c in cyg {
        let pc = c.point();
        let start = refs_by_lat.partition_point(|r| r.lat < c.lat);
        let consider = |r: &'a Observation, best: &mut Option<(f64, &'a Observation, &'a Observation)>| -> bool {
            let bound = best.map_or(max_km, |b| b.0.min(max_km));
            // Latitude gap alone already exceeds the bound: stop scanning
            // in this direction. The slack absorbs rounding between the two
            // distance formulas.
            if chordal_from_lat_gap(r.lat - c.lat) > bound + 1e-9 * (1.0 + bound) {
                return false;
            }
            let d = chordal_distance(&pc, &r.point());
            if d <= max_km && best.is_none_or(|b| pair_key_cmp((d, c, r), b) == Ordering::Less) {
                *best = Some((d, c, r));
            }
            true
        };
        for &r in &refs_by_lat[start..] {
            if !consider(r, &mut best) {
                break;
            }
        }
        for &r in refs_by_lat[..start].iter().rev() {
            if !consider(r, &mut best) {
                break;
            }
        }
    }
    best
}

/// Closest pair per window between `cyg` (one platform, one antenna) and
/// `reference`. Windows whose closest pair is farther than `max_km` emit
/// nothing. The result does not depend on the order of either input.
pub fn match_pairs(cyg: &ObservationSet, reference: &ObservationSet, config: &MatchConfig) -> Result<MatchedPairs> {
    config.validate()?;
    let mut windows: BTreeMap<i64, (Vec<&Observation>, Vec<&Observation>)> = BTreeMap::new();
    for o in cyg.iter() {
        windows.entry(config.window_of(o.time)).or_default().0.push(o);
    }
    for o in reference.iter() {
        if let Some(w) = windows.get_mut(&config.window_of(o.time)) {
            w.1.push(o);
        }
    }
    let windows: Vec<(i64, Vec<&Observation>, Vec<&Observation>)> = windows
        .into_iter()
        .filter(|(_, (c, r))| !c.is_empty() && !r.is_empty())
        .map(|(id, (c, mut r))| {
            r.sort_by(|a, b| a.lat.total_cmp(&b.lat));
            (id, c, r)
        })
        .collect();
    let pairs = windows
        .par_iter()
        .filter_map(|(id, c, r)| {
            closest_in_window(c, r, config.max_km).map(|(sep_km, c, r)| MatchedPair {
                window_id: *id,
                sep_km,
                cyg: c.clone(),
                reference: r.clone(),
            })
        })
        .collect();
    Ok(MatchedPairs { pairs, config: *config })
}

/// Matches every (platform, antenna) group of `cyg` against `reference`,
/// in platform name order, starboard before port.
pub fn match_by_antenna(
    cyg: &ObservationSet,
    reference: &ObservationSet,
    config: &MatchConfig,
) -> Result<Vec<(String, Sensor, MatchedPairs)>> {
    let mut out = Vec::new();
    for platform in cyg.platforms() {
        for sensor in [Sensor::Starboard, Sensor::Port] {
            let group = cyg.filter(|o| o.sensor == sensor && o.platform == platform);
            if group.is_empty() {
                continue;
            }
            out.push((platform.clone(), sensor, match_pairs(&group, reference, config)?));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBias {
    /// Mean of CYGNSS minus reference, m/s.
    pub bias: f64,
    /// Sample standard deviation over `√count`; needs two pairs.
    pub se: Option<f64>,
    pub count: usize,
}

pub fn empirical_bias(pairs: &MatchedPairs) -> Result<EmpiricalBias> {
    let n = pairs.len();
    if n == 0 {
        return Err(Error::NoCollocations);
    }
    let diffs: Vec<f64> = pairs.pairs.iter().map(MatchedPair::difference).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let se = (n >= 2).then(|| {
        let ss: f64 = diffs.iter().map(|d| (d - mean) * (d - mean)).sum();
        (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    });
    if !mean.is_finite() {
        return Err(Error::InvalidArgument("non-finite winds in matched pairs".into()));
    }
    Ok(EmpiricalBias { bias: mean, se, count: n })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffBin {
    pub bin_center: f64,
    pub mean_diff: f64,
    pub count: usize,
}

/// Mean CYGNSS-minus-reference difference in bins of the pair average.
/// Bins are `[k·w − w/2, k·w + w/2)`; only non-empty bins are returned, in
/// increasing order.
pub fn difference_vs_average(pairs: &MatchedPairs, bin_width: f64) -> Result<Vec<DiffBin>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidArgument(format!("bin width must be positive, got {bin_width}")));
    }
    let mut bins: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for p in &pairs.pairs {
        let k = (p.average() / bin_width + 0.5).floor() as i64;
        let e = bins.entry(k).or_default();
        e.0 += p.difference();
        e.1 += 1;
    }
    Ok(bins
        .into_iter()
        .map(|(k, (sum, count))| DiffBin { bin_center: k as f64 * bin_width, mean_diff: sum / count as f64, count })
        .collect())
}

/// Least-squares line of difference on average over the raw pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceTrend {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
    pub count: usize,
}

/// Fits `difference = a + b·average`. Needs three pairs with distinct
/// averages.
pub fn difference_trend(pairs: &MatchedPairs) -> Option<DifferenceTrend> {
    let n = pairs.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let xbar = pairs.pairs.iter().map(MatchedPair::average).sum::<f64>() / nf;
    let ybar = pairs.pairs.iter().map(MatchedPair::difference).sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for p in &pairs.pairs {
        let dx = p.average() - xbar;
        sxx += dx * dx;
        sxy += dx * (p.difference() - ybar);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = pairs
        .pairs
        .iter()
        .map(|p| {
            let r = p.difference() - intercept - slope * p.average();
            r * r
        })
        .sum();
    Some(DifferenceTrend { intercept, slope, slope_se: (rss / (nf - 2.0) / sxx).sqrt(), count: n })
}

pub fn write_pairs(pairs: &MatchedPairs, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_id", "sep_km", "t_cyg", "t_ref", "wind_cyg", "wind_ref"])?;
    for p in &pairs.pairs {
        w.write_record([
            p.window_id.to_string(),
            p.sep_km.to_string(),
            p.cyg.time.to_string(),
            p.reference.time.to_string(),
            p.cyg.wind.to_string(),
            p.reference.wind.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<pairs output>", e))?;
    Ok(())
}

pub fn write_bins(bins: &[DiffBin], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_center", "mean_diff", "count"])?;
    for b in bins {
        w.write_record([b.bin_center.to_string(), b.mean_diff.to_string(), b.count.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<bins output>", e))?;
    Ok(())
}
