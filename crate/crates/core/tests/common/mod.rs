#![allow(dead_code)]

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use windbias::simulate::{default_mean_standardization, example_tracks, SimConfig};
use windbias::empirical::MatchConfig;
use windbias::{CovarianceParams, MeanParams, Observation, ObservationSet, Sensor};

pub const R_KM: f64 = 6371.0;

/// Chord between two positions from the haversine formula.
pub fn haversine_chord(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * R_KM * h.sqrt()
}

/// Half-integer Matérn correlations in closed form.
pub fn matern_closed(d: f64, nu: f64) -> f64 {
    let e = (-d).exp();
    if nu == 0.5 {
        e
    } else if nu == 1.5 {
        (1.0 + d) * e
    } else if nu == 2.5 {
        (1.0 + d + d * d / 3.0) * e
    } else {
        panic!("no closed form for nu = {nu}")
    }
}

pub fn scaled_dist(a: &Observation, b: &Observation, p: &CovarianceParams) -> f64 {
    let c = haversine_chord(a.lon, a.lat, b.lon, b.lat) / p.spatial_range;
    let t = (a.time - b.time) / p.temporal_range;
    (c * c + t * t).sqrt()
}

/// Exact Gaussian log-likelihood built entirely in test code, for
/// half-integer smoothness.
pub fn oracle_loglik(set: &ObservationSet, p: &CovarianceParams, mean: &[f64]) -> f64 {
    let obs = set.observations();
    let n = obs.len();
    let cov = Mat::from_fn(n, n, |i, j| {
        if i == j {
            p.variance + p.nugget
        } else {
            p.variance * matern_closed(scaled_dist(&obs[i], &obs[j], p), p.smoothness)
        }
    });
    let llt = cov.llt(Side::Lower).expect("oracle covariance is positive definite");
    let r = Mat::from_fn(n, 1, |i, _| obs[i].wind - mean[i]);
    let s = llt.solve(&r);
    let quad: f64 = (0..n).map(|i| r[(i, 0)] * s[(i, 0)]).sum();
    let l = llt.L();
    let logdet: f64 = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

/// Scattered observations with all three sensors, a few hundred km across
/// and a day long. Winds are arbitrary; these sets test likelihood algebra,
/// not estimation.
pub fn random_set(rng: &mut ChaCha8Rng, n: usize) -> ObservationSet {
    let obs = (0..n)
        .map(|i| {
            let sensor = [Sensor::Reference, Sensor::Starboard, Sensor::Port][i % 3];
            let platform = if sensor.is_reference() { "jas3" } else { "cyg01" };
            Observation::new(
                rng.random_range(0.0..86_400.0),
                rng.random_range(-150.0..-140.0),
                rng.random_range(-20.0..-5.0),
                rng.random_range(2.0..15.0),
                sensor,
                platform,
            )
            .unwrap()
        })
        .collect();
    ObservationSet::new(obs)
}

pub fn random_params(rng: &mut ChaCha8Rng) -> CovarianceParams {
    CovarianceParams {
        variance: rng.random_range(0.2..3.0),
        smoothness: rng.random_range(0.2..2.5),
        spatial_range: rng.random_range(50.0..800.0),
        temporal_range: rng.random_range(3_600.0..86_400.0),
        nugget: rng.random_range(0.05..1.0),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn truth_theta() -> CovarianceParams {
    CovarianceParams { variance: 1.5, smoothness: 0.5, spatial_range: 500.0, temporal_range: 43_200.0, nugget: 0.53 * 0.53 }
}

pub fn truth_mean() -> MeanParams {
    MeanParams { intercept: 9.0, time: 0.2, lat: -0.5, lat2: 0.3, lat3: 0.1, starboard: -0.83, port: -0.94 }
}

/// One reference track and one CYGNSS-role platform over `days` days with
/// `n_ref` reference samples and `n_cyg` CYGNSS samples (twice as many
/// records).
pub fn sim_config(days: f64, n_ref: usize, n_cyg: usize, seed: u64) -> SimConfig {
    SimConfig {
        tracks: example_tracks(0.0, days, &["cyg01"], days * 86_400.0 / n_ref as f64, days * 86_400.0 / n_cyg as f64),
        covariance: truth_theta(),
        mean: truth_mean(),
        mean_standardization: default_mean_standardization(),
        seed,
    }
}

/// Shorthand for a valid observation.
pub fn obs(time: f64, lon: f64, lat: f64, wind: f64, sensor: Sensor, platform: &str) -> Observation {
    Observation::new(time, lon, lat, wind, sensor, platform).unwrap()
}

/// Matcher oracle: all-pairs scan per window: (window, cyg, ref, separation).
pub fn brute_force(cyg: &[Observation], reference: &[Observation], cfg: &MatchConfig) -> Vec<(i64, Observation, Observation, f64)> {
    let window = |t: f64| ((t - cfg.origin_s) / cfg.window_s).floor() as i64;
    let mut ids: Vec<i64> = cyg.iter().map(|o| window(o.time)).collect();
    ids.sort();
    ids.dedup();
    let mut out = Vec::new();
    for w in ids {
        let mut best: Option<(f64, &Observation, &Observation)> = None;
        for c in cyg.iter().filter(|o| window(o.time) == w) {
            for r in reference.iter().filter(|o| window(o.time) == w) {
                let d = haversine_chord(c.lon, c.lat, r.lon, r.lat);
                let better = match best {
                    None => true,
                    Some((bd, bc, br)) => (d, c.time, r.time) < (bd, bc.time, br.time),
                };
                if better {
                    best = Some((d, c, r));
                }
            }
        }
        if let Some((d, c, r)) = best {
            if d <= cfg.max_km {
                out.push((w, c.clone(), r.clone(), d));
            }
        }
    }
    out
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Observation>, Vec<Observation>) {
    let lon0 = rng.random_range(-179.0..179.0);
    let lat0 = rng.random_range(-60.0..60.0);
    let make = |count: usize, sensor: Sensor, platform: &str, rng: &mut ChaCha8Rng| -> Vec<Observation> {
        (0..count)
            .map(|_| {
                obs(
                    rng.random_range(0.0..4.0 * 7200.0),
                    lon0 + rng.random_range(-0.4..0.4),
                    lat0 + rng.random_range(-0.4..0.4),
                    rng.random_range(0.0..20.0),
                    sensor,
                    platform,
                )
            })
            .collect()
    };
    let nc = rng.random_range(1..15);
    let nr = rng.random_range(1..15);
    let c = make(nc, Sensor::Starboard, "cyg01", rng);
    let r = make(nr, Sensor::Reference, "jas3", rng);
    (c, r)
}
