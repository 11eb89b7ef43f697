mod common;

use common::*;
use windbias::data::WEEK_S;
use windbias::simulate::{default_mean_standardization, simulate, simulate_winds, SimConfig};
use windbias::{CovarianceParams, MeanParams, ObservationSet, Sensor};

fn mean_of(o: &windbias::Observation, m: &MeanParams) -> f64 {
    let t = o.time / WEEK_S;
    let l = o.lat / 30.0;
    let offset = match o.sensor {
        Sensor::Reference => 0.0,
        Sensor::Starboard => m.starboard,
        Sensor::Port => m.port,
    };
    m.intercept + m.time * t + m.lat * l + m.lat2 * l * l + m.lat3 * l * l * l + offset
}

#[test]
fn pure_noise_residual_variance() {
    let mut config = sim_config(1.0, 5000, 2500, 77);
    config.covariance.variance = 0.0;
    let set = simulate(&config).unwrap();
    assert_eq!(set.len(), 10_000);
    let r: Vec<f64> = set.iter().map(|o| o.wind - mean_of(o, &config.mean)).collect();
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let s2 = config.covariance.nugget;
    assert!((var - s2).abs() <= 0.05 * s2, "sample variance {var}, nugget {s2}");
    assert!(mean.abs() < 4.0 * (s2 / n).sqrt());
}

#[test]
fn anomaly_correlation_at_unit_scaled_distance() {
    let theta = CovarianceParams { variance: 1.0, smoothness: 0.5, spatial_range: 300.0, temporal_range: 10_800.0, nugget: 1e-12 };
    let dlat = (2.0 * (300.0 / (2.0 * R_KM)).asin()).to_degrees();
    // A and B are one temporal range apart, A and C one spatial range apart
    let geometry = ObservationSet::new(vec![
        obs(0.0, 20.0, 10.0, 0.0, Sensor::Reference, "jas3"),
        obs(10_800.0, 20.0, 10.0, 0.0, Sensor::Reference, "jas3"),
        obs(0.0, 20.0, 10.0 + dlat, 0.0, Sensor::Reference, "jas3"),
    ]);
    let g = geometry.observations();
    assert!((scaled_dist(&g[0], &g[2], &theta) - 1.0).abs() < 1e-9);
    let mean = MeanParams { intercept: 10.0, time: 0.0, lat: 0.0, lat2: 0.0, lat3: 0.0, starboard: 0.0, port: 0.0 };
    let config = SimConfig {
        tracks: vec![],
        covariance: theta,
        mean,
        mean_standardization: default_mean_standardization(),
        seed: 0,
    };
    let reps = 500;
    let draws: Vec<[f64; 3]> = (0..reps)
        .map(|k| {
            let s = simulate_winds(&geometry, &config, 1000 + k).unwrap();
            let w: Vec<f64> = s.iter().map(|o| o.wind - 10.0).collect();
            [w[0], w[1], w[2]]
        })
        .collect();
    let corr = |a: usize, b: usize| {
        let n = reps as f64;
        let ma = draws.iter().map(|d| d[a]).sum::<f64>() / n;
        let mb = draws.iter().map(|d| d[b]).sum::<f64>() / n;
        let sab: f64 = draws.iter().map(|d| (d[a] - ma) * (d[b] - mb)).sum();
        let saa: f64 = draws.iter().map(|d| (d[a] - ma).powi(2)).sum();
        let sbb: f64 = draws.iter().map(|d| (d[b] - mb).powi(2)).sum();
        sab / (saa * sbb).sqrt()
    };
    let rho = (-1.0f64).exp();
    let mc_se = (1.0 - rho * rho) / (reps as f64).sqrt();
    for (a, b) in [(0, 1), (0, 2)] {
        let c = corr(a, b);
        assert!((c - rho).abs() <= 3.0 * mc_se, "corr({a},{b}) = {c}, expected {rho} ± {}", 3.0 * mc_se);
    }
    let rho_bc = (-(2.0f64).sqrt()).exp();
    let c = corr(1, 2);
    assert!((c - rho_bc).abs() <= 3.0 * (1.0 - rho_bc * rho_bc) / (reps as f64).sqrt(), "corr(1,2) = {c}");
}

#[test]
fn same_config_same_data() {
    let config = sim_config(0.2, 200, 100, 5);
    let a = simulate(&config).unwrap();
    assert_eq!(a, simulate(&config).unwrap());
    let b = simulate(&SimConfig { seed: 6, ..config }).unwrap();
    assert_ne!(a.observations()[0].wind, b.observations()[0].wind);
}

#[test]
fn antenna_difference_mean_and_spread() {
    // starboard and port share the anomaly up to the 20 km cross-track gap
    let config = sim_config(1.0, 100, 3000, 8);
    let set = simulate(&config).unwrap();
    let sb: Vec<_> = set.iter().filter(|o| o.sensor == Sensor::Starboard).collect();
    let pt: Vec<_> = set.iter().filter(|o| o.sensor == Sensor::Port).collect();
    assert_eq!(sb.len(), pt.len());
    let diffs: Vec<f64> = sb.iter().zip(&pt).map(|(s, p)| p.wind - s.wind).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let th = config.covariance;
    let d = scaled_dist(sb[0], pt[0], &th);
    let expected_var = 2.0 * th.nugget + 2.0 * th.variance * (1.0 - (-d).exp());
    let expected_mean = config.mean.port - config.mean.starboard;
    assert!((mean - expected_mean).abs() < 4.0 * (expected_var / n).sqrt(), "mean {mean}");
    // variance of a sample variance of n normals: 2σ⁴/(n−1)
    assert!((var - expected_var).abs() < 4.0 * expected_var * (2.0 / (n - 1.0)).sqrt(), "var {var} vs {expected_var}");
}
