//! Synthetic satellite tracks, exact draws from the model, and the dense
//! Gaussian log-likelihood used as ground truth for the Vecchia engine.

use std::path::Path;

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Par, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceParams, Kernel};
use crate::data::{Observation, ObservationSet, Provenance, Sensor, DAY_S, WEEK_S};
use crate::design::{design_row, DesignMatrix, MeanParams, Standardization, N_COEF};
use crate::geo::{squared_norm3, EARTH_RADIUS_KM};
use crate::vecchia::GlsResult;
use crate::{Error, Result};

/// Largest number of records [`simulate_winds`] will draw jointly.
pub const MAX_SIMULATED: usize = 20_000;
/// Largest data set [`dense_loglik`] accepts.
pub const MAX_DENSE_LOGLIK: usize = 2_000;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackRole {
    /// One record per sample, sensor 1.
    Reference,
    /// A starboard and a port record per sample.
    Cygnss,
}

/// An idealized ground track: latitude oscillates sinusoidally inside
/// `±lat_amplitude_deg` with period `period_s`, longitude advances at a
/// constant rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub platform: String,
    pub role: TrackRole,
    pub start_s: f64,
    pub duration_s: f64,
    pub cadence_s: f64,
    pub lat_amplitude_deg: f64,
    pub period_s: f64,
    /// Phase of the latitude oscillation, radians.
    #[serde(default)]
    pub phase_rad: f64,
    pub lon0_deg: f64,
    pub lon_rate_deg_per_s: f64,
    /// Distance between the starboard and port footprints, km, split evenly
    /// either side of the track along the local east-west direction.
    #[serde(default)]
    pub cross_track_km: f64,
    /// Per-platform starboard contrast overriding [`SimConfig::mean`].
    #[serde(default)]
    pub starboard_bias: Option<f64>,
    #[serde(default)]
    pub port_bias: Option<f64>,
}

impl TrackSpec {
    pub fn samples(&self) -> usize {
        if self.cadence_s > 0.0 && self.duration_s > 0.0 {
            (self.duration_s / self.cadence_s).ceil() as usize
        } else {
            0
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.cadence_s > 0.0
            && self.duration_s > 0.0
            && self.period_s > 0.0
            && (0.0..=90.0).contains(&self.lat_amplitude_deg)
            && self.cross_track_km >= 0.0
            && [self.start_s, self.phase_rad, self.lon0_deg, self.lon_rate_deg_per_s].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid track specification for platform {:?}", self.platform)))
        }
    }
}

/// Simulation setup. The mean coefficients are read through
/// `mean_standardization`, so for example `mean.time` is the change per
/// `time_scale` seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub tracks: Vec<TrackSpec>,
    pub covariance: CovarianceParams,
    pub mean: MeanParams,
    #[serde(default = "default_mean_standardization")]
    pub mean_standardization: Standardization,
    pub seed: u64,
}

pub fn default_mean_standardization() -> Standardization {
    Standardization { time_center: 0.0, time_scale: WEEK_S, lat_center: 0.0, lat_scale: 30.0 }
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
    }
}

/// Sample positions of all tracks, winds set to zero, in track order with
/// starboard before port at each CYGNSS-role sample.
pub fn simulate_tracks(config: &SimConfig) -> Result<ObservationSet> {
    let mut out = Vec::new();
    for track in &config.tracks {
        track.validate()?;
        let omega = std::f64::consts::TAU / track.period_s;
        for k in 0..track.samples() {
            let dt = k as f64 * track.cadence_s;
            let t = track.start_s + dt;
            let lat = track.lat_amplitude_deg * (omega * dt + track.phase_rad).sin();
            let lon = track.lon0_deg + track.lon_rate_deg_per_s * dt;
            match track.role {
                TrackRole::Reference => {
                    out.push(Observation::new(t, lon, lat, 0.0, Sensor::Reference, &track.platform)?);
                }
                TrackRole::Cygnss => {
                    let half = 0.5 * track.cross_track_km / (EARTH_RADIUS_KM * lat.to_radians().cos().max(1e-6));
                    let dlon = half.to_degrees();
                    out.push(Observation::new(t, lon + dlon, lat, 0.0, Sensor::Starboard, &track.platform)?);
                    out.push(Observation::new(t, lon - dlon, lat, 0.0, Sensor::Port, &track.platform)?);
                }
            }
        }
    }
    let mut provenance = Provenance::default();
    provenance.set("source", "simulate_tracks");
    Ok(ObservationSet::with_provenance(out, provenance))
}

/// Groups records sharing exact coordinates and time. Returns the distinct
/// points and, per record, the index of its point.
fn distinct_points(set: &ObservationSet) -> (Vec<([f64; 3], f64)>, Vec<usize>) {
    let keys: Vec<(u64, u64, u64)> =
        set.iter().map(|o| (o.lon.to_bits(), o.lat.to_bits(), o.time.to_bits())).collect();
    let mut point_of = vec![0; set.len()];
    let mut points = Vec::new();
    let mut first_of = std::collections::HashMap::new();
    for i in 0..set.len() {
        let id = *first_of.entry(keys[i]).or_insert_with(|| {
            let o = &set.observations()[i];
            points.push((o.point().cartesian(), o.time));
            points.len() - 1
        });
        point_of[i] = id;
    }
    (points, point_of)
}

fn anomaly_covariance(points: &[([f64; 3], f64)], kernel: &Kernel) -> Mat<f64> {
    let n = points.len();
    let diag = kernel.params.variance;
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            diag
        } else {
            let (a, ta) = &points[i];
            let (b, tb) = &points[j];
            kernel.from_squared(squared_norm3(a, b), (ta - tb) * (ta - tb))
        }
    })
}

/// Overwrites `a` with its lower Cholesky factor, zeroing the strict upper
/// triangle. Sequential, so the factor does not depend on the thread count.
fn cholesky_in_place(a: &mut Mat<f64>) -> bool {
    use faer::dyn_stack::{MemBuffer, MemStack};
    use faer::linalg::cholesky::llt::factor;
    let n = a.nrows();
    let mut buf = MemBuffer::new(factor::cholesky_in_place_scratch::<f64>(n, Par::Seq, Default::default()));
    let ok = factor::cholesky_in_place(a.as_mut(), Default::default(), Par::Seq, MemStack::new(&mut buf), Default::default())
        .is_ok();
    for j in 1..n {
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    ok
}

/// Mean function plus sensor offsets for one record.
fn mean_value(o: &Observation, config: &SimConfig, offsets: (f64, f64)) -> f64 {
    let row = design_row(o.time, o.lat, o.sensor, &config.mean_standardization);
    let mut b = config.mean.to_array();
    b[5] = offsets.0;
    b[6] = offsets.1;
    row.iter().zip(&b).map(|(x, b)| x * b).sum()
}

/// Draws winds for `geometry` from the model: trend, sensor offsets, an
/// exact Gaussian process anomaly shared by records at the same point and
/// time, and independent noise.
///
/// Platforms named in `config.tracks` with their own biases use those;
/// every other record uses `config.mean`. The anomaly factorization is
/// retried with a tiny diagonal jitter (relative 1e-12, 1e-10, 1e-8) when
/// distinct points are numerically coincident; the jitter used is recorded
/// in the provenance.
pub fn simulate_winds(geometry: &ObservationSet, config: &SimConfig, seed: u64) -> Result<ObservationSet> {
    if geometry.len() > MAX_SIMULATED {
        return Err(Error::TooLarge(format!(
            "dense simulation is limited to {MAX_SIMULATED} records, got {}",
            geometry.len()
        )));
    }
    let params = &config.covariance;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (points, point_of) = distinct_points(geometry);
    let np = points.len();

    let mut provenance = geometry.provenance.clone();
    let mut z = vec![0.0; np];
    if params.variance > 0.0 && np > 0 {
        let kernel = Kernel::new(params)?;
        let mut factor = None;
        for jitter in [0.0, 1e-12, 1e-10, 1e-8] {
            let mut cov = anomaly_covariance(&points, &kernel);
            for i in 0..np {
                cov[(i, i)] = params.variance * (1.0 + jitter);
            }
            if cholesky_in_place(&mut cov) {
                provenance.set("simulate.jitter", jitter);
                factor = Some(cov);
                break;
            }
        }
        let l = factor.ok_or_else(|| Error::DenseFactorization("anomaly covariance is not positive definite".into()))?;
        let w = Mat::from_fn(np, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let lw = &l * &w;
        z.iter_mut().enumerate().for_each(|(i, v)| *v = lw[(i, 0)]);
    }

    let sigma = params.nugget.sqrt();
    let out: Vec<Observation> = geometry
        .iter()
        .zip(&point_of)
        .map(|(o, &p)| {
            let track = config.tracks.iter().find(|t| t.platform == o.platform);
            let offsets = (
                track.and_then(|t| t.starboard_bias).unwrap_or(config.mean.starboard),
                track.and_then(|t| t.port_bias).unwrap_or(config.mean.port),
            );
            let e: f64 = rng.sample(StandardNormal);
            Observation { wind: mean_value(o, config, offsets) + z[p] + sigma * e, ..o.clone() }
        })
        .collect();
    if let Some(o) = out.iter().find(|o| !(o.wind >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "simulated wind {} m/s at t = {} s is negative; raise the intercept",
            o.wind, o.time
        )));
    }
    provenance.set("simulate.seed", seed);
    Ok(ObservationSet::with_provenance(out, provenance))
}

/// [`simulate_tracks`] followed by [`simulate_winds`] with the config seed.
pub fn simulate(config: &SimConfig) -> Result<ObservationSet> {
    simulate_winds(&simulate_tracks(config)?, config, config.seed)
}

/// Full covariance matrix of the records of `set`: `θ₁·M` between records
/// plus `σ²` on the diagonal.
pub fn covariance_matrix(set: &ObservationSet, params: &CovarianceParams) -> Result<Mat<f64>> {
    let kernel = Kernel::new(params)?;
    let pts: Vec<([f64; 3], f64)> = set.iter().map(|o| (o.point().cartesian(), o.time)).collect();
    let diag = kernel.diagonal();
    Ok(Mat::from_fn(set.len(), set.len(), |i, j| {
        if i == j {
            diag
        } else {
            let (a, ta) = &pts[i];
            let (b, tb) = &pts[j];
            kernel.from_squared(squared_norm3(a, b), (ta - tb) * (ta - tb))
        }
    }))
}

fn dense_factor(set: &ObservationSet, params: &CovarianceParams) -> Result<faer::linalg::solvers::Llt<f64>> {
    covariance_matrix(set, params)?
        .llt(Side::Lower)
        .map_err(|e| Error::DenseFactorization(format!("{e:?}")))
}

fn design_mat(design: &DesignMatrix) -> Mat<f64> {
    Mat::from_fn(design.nrows(), N_COEF, |i, j| design.get(i, j))
}

/// Exact Gaussian log-likelihood of the winds in `set` with mean `Xβ`.
pub fn dense_loglik(
    params: &CovarianceParams,
    beta: &MeanParams,
    set: &ObservationSet,
    design: &DesignMatrix,
) -> Result<f64> {
    let n = set.len();
    if n > MAX_DENSE_LOGLIK {
        return Err(Error::TooLarge(format!("dense log-likelihood is limited to {MAX_DENSE_LOGLIK} records, got {n}")));
    }
    if design.nrows() != n {
        return Err(Error::InvalidArgument("design and data set differ in length".into()));
    }
    let llt = dense_factor(set, params)?;
    Ok(dense_loglik_with(&llt, set, design, beta))
}

/// Exact generalized least squares: `β̂ = (XᵀΣ⁻¹X)⁻¹XᵀΣ⁻¹y`, its covariance,
/// and the exact log-likelihood at `β̂`.
pub fn dense_gls(params: &CovarianceParams, set: &ObservationSet, design: &DesignMatrix) -> Result<GlsResult> {
    let n = set.len();
    if design.nrows() != n {
        return Err(Error::InvalidArgument("design and data set differ in length".into()));
    }
    let llt = dense_factor(set, params)?;
    let x = design_mat(design);
    let y = Mat::from_fn(n, 1, |i, _| set.observations()[i].wind);
    let si_x = llt.solve(&x);
    let si_y = llt.solve(&y);
    let xt_si_x = x.transpose() * &si_x;
    let xt_si_y = x.transpose() * &si_y;
    let g = xt_si_x.llt(Side::Lower).map_err(|_| Error::RankDeficient { columns: vec!["(all)".into()] })?;
    let beta = g.solve(&xt_si_y);
    let cov = g.inverse();
    let beta = MeanParams::from_slice(&(0..N_COEF).map(|i| beta[(i, 0)]).collect::<Vec<_>>());
    let cov: Vec<f64> = (0..N_COEF * N_COEF).map(|k| cov[(k / N_COEF, k % N_COEF)]).collect();
    let loglik = dense_loglik_with(&llt, set, design, &beta);
    Ok(GlsResult { beta, cov, loglik })
}

fn dense_loglik_with(
    llt: &faer::linalg::solvers::Llt<f64>,
    set: &ObservationSet,
    design: &DesignMatrix,
    beta: &MeanParams,
) -> f64 {
    let n = set.len();
    let l = llt.L();
    let mean = design.predict(beta);
    let mut r = Mat::from_fn(n, 1, |i, _| set.observations()[i].wind - mean[i]);
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, r.as_mut(), Par::Seq);
    let quad: f64 = (0..n).map(|i| r[(i, 0)] * r[(i, 0)]).sum();
    let logdet: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    -0.5 * (n as f64 * LN_2PI + logdet + quad)
}

/// Seed for replicate `k` of a study seeded with `base`: consecutive
/// replicates get unrelated streams.
pub fn replicate_seed(base: u64, k: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A reference track and CYGNSS-role tracks spanning `days` days starting at
/// `start_s`, in the shape used by the examples and tests.
pub fn example_tracks(start_s: f64, days: f64, platforms: &[&str], reference_cadence_s: f64, cygnss_cadence_s: f64) -> Vec<TrackSpec> {
    let mut tracks = vec![TrackSpec {
        platform: "jas3".into(),
        role: TrackRole::Reference,
        start_s,
        duration_s: days * DAY_S,
        cadence_s: reference_cadence_s,
        lat_amplitude_deg: 66.0,
        period_s: 6745.0,
        phase_rad: 0.0,
        lon0_deg: 0.0,
        lon_rate_deg_per_s: 360.0 / 6745.0 - 360.0 / DAY_S,
        cross_track_km: 0.0,
        starboard_bias: None,
        port_bias: None,
    }];
    for (k, name) in platforms.iter().enumerate() {
        tracks.push(TrackSpec {
            platform: name.to_string(),
            role: TrackRole::Cygnss,
            start_s,
            duration_s: days * DAY_S,
            cadence_s: cygnss_cadence_s,
            lat_amplitude_deg: 35.0,
            period_s: 5700.0,
            phase_rad: 0.7 * k as f64,
            lon0_deg: 45.0 * k as f64,
            lon_rate_deg_per_s: 360.0 / 5700.0 - 360.0 / DAY_S,
            cross_track_km: 0.0,
            starboard_bias: None,
            port_bias: None,
        });
    }
    tracks
}
