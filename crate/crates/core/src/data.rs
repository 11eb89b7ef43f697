//! Observations, the CSV interchange format, subsampling and weekly splits.
//!
//! The interchange format is UTF-8 CSV with the header
//! `time_s,lon_deg,lat_deg,wind_ms,sensor,platform`. Times are seconds since
//! 2020-01-01 00:00 UTC. Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geo::SpaceTimePoint;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 6] = ["time_s", "lon_deg", "lat_deg", "wind_ms", "sensor", "platform"];

pub const DAY_S: f64 = 86_400.0;
pub const WEEK_S: f64 = 7.0 * DAY_S;

/// Which instrument produced a measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensor {
    /// The common reference instrument (the altimeter).
    Reference,
    Starboard,
    Port,
}

impl Sensor {
    pub fn code(self) -> u8 {
        match self {
            Sensor::Reference => 1,
            Sensor::Starboard => 2,
            Sensor::Port => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Sensor> {
        match code {
            1 => Some(Sensor::Reference),
            2 => Some(Sensor::Starboard),
            3 => Some(Sensor::Port),
            _ => None,
        }
    }

    pub fn is_reference(self) -> bool {
        self == Sensor::Reference
    }

    pub fn name(self) -> &'static str {
        match self {
            Sensor::Reference => "reference",
            Sensor::Starboard => "starboard",
            Sensor::Port => "port",
        }
    }
}

/// Map a longitude in degrees onto [-180, 180).
pub fn normalize_lon(lon: f64) -> f64 {
    if (-180.0..180.0).contains(&lon) {
        return lon;
    }
    let wrapped = (lon + 180.0).rem_euclid(360.0);
    if wrapped >= 360.0 {
        -180.0
    } else {
        wrapped - 180.0
    }
}

/// One wind-speed measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    pub lon: f64,
    pub lat: f64,
    pub wind: f64,
    pub sensor: Sensor,
    pub platform: String,
}

impl Observation {
    /// Validates the fields and wraps the longitude.
    pub fn new(
        time: f64,
        lon: f64,
        lat: f64,
        wind: f64,
        sensor: Sensor,
        platform: impl Into<String>,
    ) -> Result<Self> {
        let platform = platform.into();
        if !time.is_finite() {
            return Err(Error::InvalidObservation(format!("time {time} is not finite")));
        }
        if !lon.is_finite() {
            return Err(Error::InvalidObservation(format!("longitude {lon} is not finite")));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidObservation(format!("latitude {lat} outside [-90, 90]")));
        }
        if !(wind.is_finite() && wind >= 0.0) {
            return Err(Error::InvalidObservation(format!("wind speed {wind} must be finite and >= 0")));
        }
        if platform.is_empty() || platform.contains([',', '\n', '\r', '"']) {
            return Err(Error::InvalidObservation(format!("bad platform label {platform:?}")));
        }
        Ok(Observation { time, lon: normalize_lon(lon), lat, wind, sensor, platform })
    }

    pub fn point(&self) -> SpaceTimePoint {
        SpaceTimePoint::new(self.lon, self.lat, self.time)
    }
}

/// Free-form key/value metadata carried alongside a data set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance(BTreeMap<String, String>);

impl Provenance {
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.0.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// An ordered collection of observations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservationSet {
    observations: Vec<Observation>,
    pub provenance: Provenance,
}

impl ObservationSet {
    pub fn new(observations: Vec<Observation>) -> Self {
        ObservationSet { observations, provenance: Provenance::default() }
    }

    pub fn with_provenance(observations: Vec<Observation>, provenance: Provenance) -> Self {
        ObservationSet { observations, provenance }
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn into_observations(self) -> Vec<Observation> {
        self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }

    pub fn count_sensor(&self, sensor: Sensor) -> usize {
        self.observations.iter().filter(|o| o.sensor == sensor).count()
    }

    /// Subset of observations satisfying `keep`, in order.
    pub fn filter(&self, mut keep: impl FnMut(&Observation) -> bool) -> ObservationSet {
        ObservationSet {
            observations: self.observations.iter().filter(|o| keep(o)).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Concatenates sets in order; provenance is taken from the first.
    pub fn concat<'a>(sets: impl IntoIterator<Item = &'a ObservationSet>) -> ObservationSet {
        let mut out = ObservationSet::default();
        for (k, s) in sets.into_iter().enumerate() {
            if k == 0 {
                out.provenance = s.provenance.clone();
            }
            out.observations.extend_from_slice(&s.observations);
        }
        out
    }

    /// Distinct platform labels in order of first appearance.
    pub fn platforms(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for o in &self.observations {
            if !seen.iter().any(|p| p == &o.platform) {
                seen.push(o.platform.clone());
            }
        }
        seen
    }
}

impl FromIterator<Observation> for ObservationSet {
    fn from_iter<I: IntoIterator<Item = Observation>>(iter: I) -> Self {
        ObservationSet::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a ObservationSet {
    type Item = &'a Observation;
    type IntoIter = std::slice::Iter<'a, Observation>;

    fn into_iter(self) -> Self::IntoIter {
        self.observations.iter()
    }
}

/// Parses the CSV interchange format.
pub fn parse_observations(input: impl Read) -> Result<ObservationSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(input);

    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::EmptyInput),
        Some(r) => r?,
    };
    let header_line = header.position().map_or(1, |p| p.line());
    let fields: Vec<&str> = header.iter().map(str::trim).collect();
    if fields != CSV_HEADER {
        return Err(Error::Parse {
            line: header_line,
            message: format!("expected header `{}`, found `{}`", CSV_HEADER.join(","), fields.join(",")),
        });
    }

    let mut observations = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse { line, message };
        if record.len() != CSV_HEADER.len() {
            return Err(bad(format!("expected {} fields, found {}", CSV_HEADER.len(), record.len())));
        }
        let num = |k: usize| -> Result<f64> {
            let field = record[k].trim();
            field
                .parse::<f64>()
                .map_err(|_| bad(format!("{} is not a number: {field:?}", CSV_HEADER[k])))
        };
        let (time, lon, lat, wind) = (num(0)?, num(1)?, num(2)?, num(3)?);
        let code = record[4].trim();
        let sensor = code
            .parse::<u8>()
            .ok()
            .and_then(Sensor::from_code)
            .ok_or_else(|| bad(format!("unknown sensor code {code:?} (expected 1, 2 or 3)")))?;
        let obs = Observation::new(time, lon, lat, wind, sensor, record[5].trim())
            .map_err(|e| bad(e.to_string()))?;
        observations.push(obs);
    }
    if observations.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(ObservationSet::new(observations))
}

pub fn read_observations(path: &Path) -> Result<ObservationSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut set = parse_observations(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse { line, message: format!("{}: {message}", path.display()) },
        other => other,
    })?;
    set.provenance.set("source", path.display());
    Ok(set)
}

/// Writes observations in the interchange format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_observations(set: &ObservationSet, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for o in set {
        w.write_record([
            o.time.to_string(),
            o.lon.to_string(),
            o.lat.to_string(),
            o.wind.to_string(),
            o.sensor.code().to_string(),
            o.platform.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn save_observations(set: &ObservationSet, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_observations(set, std::io::BufWriter::new(file))
}

/// Uniform sample without replacement of `n_per_source` observations from
/// the reference group and from the non-reference group. Groups no larger
/// than `n_per_source` are kept whole. Output keeps input order.
pub fn subsample(set: &ObservationSet, n_per_source: usize, seed: u64) -> Result<ObservationSet> {
    if n_per_source == 0 {
        return Err(Error::InvalidArgument("n_per_source must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (reference, other): (Vec<usize>, Vec<usize>) =
        (0..set.len()).partition(|&i| set.observations[i].sensor.is_reference());

    let mut provenance = set.provenance.clone();
    let mut keep = Vec::with_capacity(n_per_source.min(reference.len()) + n_per_source.min(other.len()));
    for (name, group) in [("reference", &reference), ("other", &other)] {
        if group.len() <= n_per_source {
            keep.extend_from_slice(group);
            provenance.set(format!("subsample.{name}"), format!("kept all {} (short group)", group.len()));
        } else {
            let picked = rand::seq::index::sample(&mut rng, group.len(), n_per_source);
            keep.extend(picked.iter().map(|k| group[k]));
            provenance.set(format!("subsample.{name}"), format!("kept {n_per_source} of {}", group.len()));
        }
    }
    keep.sort_unstable();
    provenance.set("subsample.seed", seed);
    Ok(ObservationSet {
        observations: keep.into_iter().map(|i| set.observations[i].clone()).collect(),
        provenance,
    })
}

/// Assigns observations to half-open windows `[start, start + 7 days)`.
///
/// Each observation goes to the latest window that starts at or before it,
/// if it falls inside that window. Every returned set records in its
/// provenance the number of observations that fell outside all windows.
pub fn split_weeks(set: &ObservationSet, week_starts: &[f64]) -> Result<Vec<ObservationSet>> {
    if week_starts.is_empty() {
        return Err(Error::InvalidArgument("no week windows given".into()));
    }
    if week_starts.iter().any(|s| !s.is_finite()) || week_starts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("week starts must be finite and strictly increasing".into()));
    }
    let mut buckets: Vec<Vec<Observation>> = vec![Vec::new(); week_starts.len()];
    let mut dropped = 0usize;
    for o in &set.observations {
        let k = week_starts.partition_point(|&s| s <= o.time);
        if k > 0 && o.time < week_starts[k - 1] + WEEK_S {
            buckets[k - 1].push(o.clone());
        } else {
            dropped += 1;
        }
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .map(|(k, observations)| {
            let mut provenance = set.provenance.clone();
            provenance.set("week.index", k);
            provenance.set("week.start_s", week_starts[k]);
            provenance.set("week.dropped_outside_windows", dropped);
            ObservationSet { observations, provenance }
        })
        .collect())
}

/// Seconds since 2020-01-01 00:00 UTC at midnight of the given civil date.
pub fn utc_midnight_seconds(year: i64, month: u32, day: u32) -> f64 {
    // Days from civil (proleptic Gregorian), relative to 1970-01-01.
    let y = if month <= 2 { year - 1 } else { year };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = month as i64;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + day as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    let days = era * 146_097 + doe - 719_468;
    const DAYS_1970_TO_2020: i64 = 18_262;
    (days - DAYS_1970_TO_2020) as f64 * DAY_S
}

/// The 49 weekly windows of the September 2019 to September 2020 campaign:
/// 52 consecutive weeks from 2019-09-28, without the three weeks starting
/// 2020-02-01, 2020-02-08 and 2020-06-13 that lack reference data.
pub fn study_week_starts() -> Vec<f64> {
    let first = utc_midnight_seconds(2019, 9, 28);
    let gaps = [
        utc_midnight_seconds(2020, 2, 1),
        utc_midnight_seconds(2020, 2, 8),
        utc_midnight_seconds(2020, 6, 13),
    ];
    (0..52)
        .map(|k| first + k as f64 * WEEK_S)
        .filter(|s| !gaps.contains(s))
        .collect()
}
