mod common;

use common::*;
use windbias::simulate::simulate;
use windbias::{fit_model, FitConfig, FitResult, Observation, ObservationSet};

fn small_config() -> FitConfig {
    FitConfig { m: 15, ..FitConfig::default() }
}

fn small_set(seed: u64) -> ObservationSet {
    simulate(&sim_config(0.25, 400, 200, seed)).unwrap()
}

fn map(set: &ObservationSet, f: impl Fn(&Observation) -> Observation) -> ObservationSet {
    ObservationSet::new(set.iter().map(f).collect())
}

fn numbers(fit: &FitResult) -> String {
    serde_json::to_string(&(&fit.theta, &fit.beta, &fit.bias_summary, &fit.se_theta, fit.loglik)).unwrap()
}

#[test]
fn same_data_same_bits() {
    let set = small_set(1);
    let a = fit_model(&set, &small_config()).unwrap();
    let b = fit_model(&set, &small_config()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!(a.converged, "{:?}", a.flags);
    assert!(a.gradient_norm <= small_config().gtol);
}

#[test]
fn labels_do_not_matter() {
    let set = small_set(2);
    let renamed = map(&set, |o| Observation {
        platform: if o.sensor.is_reference() { "alt".into() } else { "zz9".into() },
        ..o.clone()
    });
    let a = fit_model(&set, &small_config()).unwrap();
    let b = fit_model(&renamed, &small_config()).unwrap();
    assert_eq!(numbers(&a), numbers(&b));
}

#[test]
fn wind_units_scale_the_estimates() {
    let set = small_set(3);
    let doubled = map(&set, |o| Observation { wind: 2.0 * o.wind, ..o.clone() });
    let a = fit_model(&set, &small_config()).unwrap();
    let b = fit_model(&doubled, &small_config()).unwrap();
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-4 * y.abs().max(1e-2);
    assert!(close(b.bias_summary.starboard.value, 2.0 * a.bias_summary.starboard.value));
    assert!(close(b.bias_summary.port.value, 2.0 * a.bias_summary.port.value));
    assert!(close(b.bias_summary.difference_sd.value, 2.0 * a.bias_summary.difference_sd.value));
    assert!(close(b.theta.variance, 4.0 * a.theta.variance));
    assert!(close(b.theta.spatial_range, a.theta.spatial_range));
    assert!(close(b.theta.temporal_range, a.theta.temporal_range));
}

#[test]
fn time_shift_and_record_order_leave_biases_unchanged() {
    let set = small_set(4);
    let a = fit_model(&set, &small_config()).unwrap();
    let shifted = map(&set, |o| Observation { time: o.time + 3.0 * 86_400.0, ..o.clone() });
    let reversed = ObservationSet::new(set.iter().rev().cloned().collect());
    for other in [shifted, reversed] {
        let b = fit_model(&other, &small_config()).unwrap();
        for (x, y) in [
            (a.bias_summary.starboard, b.bias_summary.starboard),
            (a.bias_summary.port, b.bias_summary.port),
            (a.bias_summary.difference_sd, b.bias_summary.difference_sd),
        ] {
            // equal up to where the optimizer stops, a small fraction of the se
            let se = x.se.unwrap();
            assert!((x.value - y.value).abs() < 0.05 * se, "{} vs {}", x.value, y.value);
        }
    }
}

#[test]
fn pure_noise_is_flagged() {
    let mut config = sim_config(0.25, 300, 150, 5);
    config.covariance.variance = 0.0;
    let set = simulate(&config).unwrap();
    let fit = fit_model(&set, &small_config()).unwrap();
    assert!(fit.theta.variance < 1e-3 * fit.theta.nugget, "{:?}", fit.theta);
    assert!(fit.flags.iter().any(|f| f == "variance_at_lower_boundary"), "{:?}", fit.flags);
    // θ₁ on its boundary leaves the Hessian singular in that direction
    assert!(fit.flags.iter().any(|f| f == "hessian_not_positive_definite"), "{:?}", fit.flags);
    let sd = fit.bias_summary.difference_sd.value;
    let truth = config.covariance.difference_sd();
    assert!((sd - truth).abs() < 0.1 * truth, "{sd} vs {truth}");
}

#[test]
fn iteration_cap_returns_best_point_unconverged() {
    let set = small_set(6);
    let fit = fit_model(&set, &FitConfig { max_iter: 2, ..small_config() }).unwrap();
    assert!(!fit.converged);
    assert!(fit.iterations <= 2);
    assert!(fit.flags.iter().any(|f| f.starts_with("not_converged")), "{:?}", fit.flags);
    assert!(fit.bias_summary.starboard.se.is_some());
}

#[test]
fn doubling_by_replication_shrinks_se() {
    let one = small_set(7);
    let other = simulate(&sim_config(0.25, 400, 200, 8)).unwrap();
    // a second, independent stretch a month later
    let later = map(&other, |o| Observation { time: o.time + 30.0 * 86_400.0, ..o.clone() });
    let both = ObservationSet::concat([&one, &later]);
    let a = fit_model(&one, &small_config()).unwrap();
    let b = fit_model(&both, &small_config()).unwrap();
    let ratio = b.bias_summary.starboard.se.unwrap() / a.bias_summary.starboard.se.unwrap();
    let target = std::f64::consts::FRAC_1_SQRT_2;
    assert!((ratio - target).abs() <= 0.15 * target, "se ratio {ratio}");
}
