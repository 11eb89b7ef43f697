//! Maximum likelihood over the covariance parameters with the mean profiled
//! out, standard errors, and the derived bias summaries.
//!
//! The optimizer works on `z = (ln θ₁, logit ν̃, ln θ₃, ln θ₄, ln σ²)` where
//! `ν̃` is the smoothness mapped linearly onto `(0, 1)` from its box, and
//! minimizes the profiled Vecchia log-likelihood divided by `−n`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceParams, SMOOTHNESS_BOUNDS};
use crate::data::{ObservationSet, Sensor};
use crate::design::{build_design, standardize, DesignMatrix, MeanParams, Standardization, N_COEF};
use crate::geo::squared_norm3;
use crate::linalg::spd_inverse;
use crate::optim::{central_hessian, minimize, BfgsOptions, Termination};
use crate::vecchia::{build_plan, GlsResult, VecchiaLikelihood, DEFAULT_NEIGHBORS};
use crate::{Error, Result};

/// Fewest observations a fit accepts.
pub const MIN_OBSERVATIONS: usize = 50;

/// How the optimizer is started.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum StartRule {
    /// Moment rule on OLS residuals, see [`starting_values`].
    Moments,
    Given { params: CovarianceParams },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Vecchia neighbor count.
    pub m: usize,
    pub max_iter: usize,
    /// Relative change in the objective below which the optimizer stops.
    pub ftol: f64,
    /// Gradient norm (of `−loglik / n` in transformed coordinates) at or
    /// below which the fit counts as converged.
    pub gtol: f64,
    pub smoothness_bounds: (f64, f64),
    /// Hold the smoothness at this value instead of estimating it.
    pub fix_smoothness: Option<f64>,
    pub start: StartRule,
    /// Recorded in the result; fitting itself draws no random numbers.
    pub seed: u64,
    /// Finite-difference step for the gradient.
    pub gradient_step: f64,
    /// Finite-difference step for the Hessian used for standard errors.
    pub hessian_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            m: DEFAULT_NEIGHBORS,
            max_iter: 200,
            ftol: 1e-8,
            gtol: 1e-4,
            smoothness_bounds: SMOOTHNESS_BOUNDS,
            fix_smoothness: None,
            start: StartRule::Moments,
            seed: 0,
            gradient_step: 1e-5,
            hessian_step: 1e-3,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        for (name, v) in [
            ("ftol", self.ftol),
            ("gtol", self.gtol),
            ("gradient_step", self.gradient_step),
            ("hessian_step", self.hessian_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let (lo, hi) = self.smoothness_bounds;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return bad(format!("smoothness bounds must satisfy 0 < lo < hi, got ({lo}, {hi})"));
        }
        if let Some(nu) = self.fix_smoothness {
            if !(nu > 0.0 && nu.is_finite()) {
                return bad(format!("fixed smoothness must be positive, got {nu}"));
            }
        }
        Ok(())
    }
}

/// Standard errors of the covariance parameters. `None` where unavailable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThetaErrors {
    pub variance: Option<f64>,
    pub smoothness: Option<f64>,
    pub spatial_range: Option<f64>,
    pub temporal_range: Option<f64>,
    pub nugget: Option<f64>,
}

/// An estimate and its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: Option<f64>,
}

impl Estimate {
    /// Whether the 95% Wald interval contains `truth`. False when the
    /// standard error is unavailable.
    pub fn covers(&self, truth: f64) -> bool {
        self.se.is_some_and(|se| (self.value - truth).abs() <= 1.959_963_984_540_054 * se)
    }
}

/// Sensor biases relative to the reference and the cross-sensor noise level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    /// Starboard minus reference.
    pub starboard: Estimate,
    /// Port minus reference.
    pub port: Estimate,
    /// Port minus starboard.
    pub port_minus_starboard: Estimate,
    /// `√2·σ`.
    pub difference_sd: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitProvenance {
    pub n: usize,
    pub n_reference: usize,
    pub n_starboard: usize,
    pub n_port: usize,
    pub m: usize,
    pub ordering: String,
    /// `(spatial_range, temporal_range)` of the metric used for the plan.
    pub plan_scaling: (f64, f64),
    pub plan: String,
    pub start: CovarianceParams,
    pub seed: u64,
    pub termination: Termination,
    /// Provenance carried by the input data set.
    pub data: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: CovarianceParams,
    pub beta: MeanParams,
    pub se_beta: MeanParams,
    pub se_theta: ThetaErrors,
    /// Row-major 7 × 7 covariance of `beta`.
    pub cov_beta: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub flags: Vec<String>,
    pub standardization: Standardization,
    pub bias_summary: BiasSummary,
    pub provenance: FitProvenance,
}

/// OLS residuals of `y` on `X`.
fn ols_residuals(set: &ObservationSet, design: &DesignMatrix) -> Result<Vec<f64>> {
    design.check_full_rank()?;
    let gram = design.gram();
    let inv = spd_inverse(&gram, N_COEF).ok_or_else(|| Error::RankDeficient { columns: vec!["(all)".into()] })?;
    let mut xty = [0.0; N_COEF];
    for (i, o) in set.iter().enumerate() {
        for (a, x) in design.row(i).iter().enumerate() {
            xty[a] += x * o.wind;
        }
    }
    let beta: Vec<f64> = (0..N_COEF).map(|a| (0..N_COEF).map(|b| inv[a * N_COEF + b] * xty[b]).sum()).collect();
    let fitted = design.predict(&MeanParams::from_slice(&beta));
    Ok(set.iter().zip(fitted).map(|(o, f)| o.wind - f).collect())
}

/// Largest chordal distance (km) between any two records.
pub fn max_chordal_distance(set: &ObservationSet) -> f64 {
    let mut pts: Vec<[f64; 3]> = set.iter().map(|o| o.point().cartesian()).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])).then(a[2].total_cmp(&b[2])));
    pts.dedup();
    let mut best = 0.0f64;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            best = best.max(squared_norm3(p, q));
        }
    }
    best.sqrt()
}

/// Moment-based starting values from the OLS residuals `r`:
/// `θ₁ = 0.9·var(r)`, `σ² = 0.1·var(r)`, `θ₃` a tenth of the largest chordal
/// distance in the set (at least 1 km), `θ₄ = 1 day`, `ν = 0.5`.
pub fn starting_values(set: &ObservationSet, design: &DesignMatrix) -> Result<CovarianceParams> {
    let r = ols_residuals(set, design)?;
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let scale2 = set.iter().map(|o| o.wind * o.wind).sum::<f64>() / n;
    if !(var > 1e-24 * scale2.max(1e-300)) {
        return Err(Error::DegenerateResponse);
    }
    Ok(CovarianceParams {
        variance: 0.9 * var,
        smoothness: 0.5,
        spatial_range: (0.1 * max_chordal_distance(set)).max(1.0),
        temporal_range: 86_400.0,
        nugget: 0.1 * var,
    })
}

/// Map between covariance parameters and unconstrained coordinates.
#[derive(Clone, Copy, Debug)]
struct Transform {
    bounds: (f64, f64),
    fixed_smoothness: Option<f64>,
}

impl Transform {
    fn to_z(&self, p: &CovarianceParams) -> Vec<f64> {
        let (lo, hi) = self.bounds;
        let mut z = vec![p.variance.ln()];
        if self.fixed_smoothness.is_none() {
            let u = ((p.smoothness - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
            z.push((u / (1.0 - u)).ln());
        }
        z.extend([p.spatial_range.ln(), p.temporal_range.ln(), p.nugget.ln()]);
        z
    }

    fn from_z(&self, z: &[f64]) -> CovarianceParams {
        let (lo, hi) = self.bounds;
        let (smoothness, rest) = match self.fixed_smoothness {
            Some(nu) => (nu, &z[1..]),
            None => (lo + (hi - lo) / (1.0 + (-z[1]).exp()), &z[2..]),
        };
        CovarianceParams {
            variance: z[0].exp(),
            smoothness,
            spatial_range: rest[0].exp(),
            temporal_range: rest[1].exp(),
            nugget: rest[2].exp(),
        }
    }

    /// `dθ/dz` for each free coordinate, in `to_z` order.
    fn jacobian(&self, p: &CovarianceParams) -> Vec<f64> {
        let (lo, hi) = self.bounds;
        let mut d = vec![p.variance];
        if self.fixed_smoothness.is_none() {
            let u = (p.smoothness - lo) / (hi - lo);
            d.push((hi - lo) * u * (1.0 - u));
        }
        d.extend([p.spatial_range, p.temporal_range, p.nugget]);
        d
    }
}

/// Standard errors: `se(β̂)` from the GLS covariance, `se(θ̂)` from the
/// inverse of a central-difference Hessian of the negative profiled
/// log-likelihood in transformed coordinates, mapped back by the delta
/// method. Also returns the standard error of `ln σ²`, or `None` if the
/// Hessian is not positive definite.
fn standard_errors<F>(
    objective: &mut F,
    z: &[f64],
    f_at_z: f64,
    n: usize,
    step: f64,
    transform: &Transform,
    theta: &CovarianceParams,
) -> (ThetaErrors, Option<f64>)
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let dim = z.len();
    let cov = central_hessian(objective, z, f_at_z, step).and_then(|h| {
        let flat: Vec<f64> = h.concat().iter().map(|v| v * n as f64).collect();
        spd_inverse(&flat, dim)
    });
    let Some(cov) = cov else {
        return (ThetaErrors::default(), None);
    };
    let jac = transform.jacobian(theta);
    let se: Vec<Option<f64>> = (0..dim)
        .map(|i| {
            let v = cov[i * dim + i];
            (v > 0.0).then(|| jac[i].abs() * v.sqrt())
        })
        .collect();
    let log_nugget_se = {
        let v = cov[(dim - 1) * dim + dim - 1];
        (v > 0.0).then(|| v.sqrt())
    };
    let errors = if transform.fixed_smoothness.is_some() {
        ThetaErrors { variance: se[0], smoothness: None, spatial_range: se[1], temporal_range: se[2], nugget: se[3] }
    } else {
        ThetaErrors { variance: se[0], smoothness: se[1], spatial_range: se[2], temporal_range: se[3], nugget: se[4] }
    };
    (errors, log_nugget_se)
}

/// Contrasts and noise level from the GLS estimate and covariance.
pub fn bias_summary(gls: &GlsResult, theta: &CovarianceParams, log_nugget_se: Option<f64>) -> BiasSummary {
    const S: usize = 5;
    const P: usize = 6;
    let c = |a: usize, b: usize| gls.cov[a * N_COEF + b];
    let sd = |v: f64| (v >= 0.0).then(|| v.sqrt());
    let diff_sd = theta.difference_sd();
    BiasSummary {
        starboard: Estimate { value: gls.beta.starboard, se: sd(c(S, S)) },
        port: Estimate { value: gls.beta.port, se: sd(c(P, P)) },
        port_minus_starboard: Estimate {
            value: gls.beta.port - gls.beta.starboard,
            se: sd(c(S, S) + c(P, P) - 2.0 * c(S, P)),
        },
        // √2σ = √2·exp(½ ln σ²)
        difference_sd: Estimate { value: diff_sd, se: log_nugget_se.map(|s| 0.5 * diff_sd * s) },
    }
}

/// Fits the model to `set`.
///
/// The neighbor plan is built once at the starting values and held fixed.
/// Failing to converge is reported through `converged` and `flags`, not as
/// an error.
pub fn fit_model(set: &ObservationSet, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let n = set.len();
    if n < MIN_OBSERVATIONS {
        return Err(Error::TooFewObservations { got: n, required: MIN_OBSERVATIONS });
    }
    let std = standardize(set)?;
    let design = build_design(set, &std)?;
    design.check_full_rank()?;

    let transform = Transform { bounds: config.smoothness_bounds, fixed_smoothness: config.fix_smoothness };
    let mut start = match config.start {
        StartRule::Moments => starting_values(set, &design)?,
        StartRule::Given { params } => params,
    };
    if let Some(nu) = config.fix_smoothness {
        start.smoothness = nu;
    }
    let (lo, hi) = config.smoothness_bounds;
    if config.fix_smoothness.is_none() && !(start.smoothness > lo && start.smoothness < hi) {
        return Err(Error::InvalidArgument(format!(
            "starting smoothness {} is not inside the bounds ({lo}, {hi})",
            start.smoothness
        )));
    }
    start.validate()?;
    if start.variance <= 0.0 {
        return Err(Error::InvalidArgument("starting variance must be positive".into()));
    }

    let scaling = (start.spatial_range, start.temporal_range);
    let plan = build_plan(set, config.m, scaling)?;
    let lik = VecchiaLikelihood::new(set, &design, &plan)?;
    lik.profiled(&start).map_err(|e| Error::BadStart(Box::new(e)))?;

    let nf = n as f64;
    let mut objective = |z: &[f64]| -> Option<f64> {
        if z.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let p = transform.from_z(z);
        let ll = lik.profiled(&p).ok()?.loglik;
        ll.is_finite().then(|| -ll / nf)
    };

    let opts = BfgsOptions {
        max_iter: config.max_iter,
        f_rel_tol: config.ftol,
        g_tol: config.gtol,
        fd_step: config.gradient_step,
        ..BfgsOptions::default()
    };
    let z0 = transform.to_z(&start);
    let mut outcome = minimize(&mut objective, &z0, &opts).ok_or_else(|| {
        Error::BadStart(Box::new(Error::InvalidArgument("objective not finite at the starting values".into())))
    })?;
    // The relative-change rule can stop a little short of the gradient
    // tolerance; restart once from the best point with a fresh curvature
    // estimate before giving up.
    if !outcome.converged && outcome.termination != Termination::MaxIterations {
        let remaining = config.max_iter.saturating_sub(outcome.iterations);
        let restart_opts = BfgsOptions { max_iter: remaining, f_rel_tol: 0.0, ..opts };
        if remaining > 0 {
            if let Some(second) = minimize(&mut objective, &outcome.x, &restart_opts) {
                if second.f <= outcome.f {
                    let mut history = std::mem::take(&mut outcome.history);
                    history.extend_from_slice(&second.history[1..]);
                    let iterations = outcome.iterations + second.iterations;
                    outcome = second;
                    outcome.history = history;
                    outcome.iterations = iterations;
                }
            }
        }
    }

    let theta = transform.from_z(&outcome.x);
    let gls = lik.profiled(&theta)?;
    let (se_theta, log_nugget_se) =
        standard_errors(&mut objective, &outcome.x, outcome.f, n, config.hessian_step, &transform, &theta);
    let se_beta = MeanParams::from_slice(&gls.se());

    let mut flags = Vec::new();
    if !outcome.converged {
        flags.push(format!("not_converged:{}", termination_name(outcome.termination)));
    }
    if theta.variance < 1e-3 * theta.nugget {
        flags.push("variance_at_lower_boundary".to_string());
    }
    if config.fix_smoothness.is_none() {
        let rel = (theta.smoothness - lo) / (hi - lo);
        if !(0.01..=0.99).contains(&rel) {
            flags.push("smoothness_at_bound".to_string());
        }
    }
    if log_nugget_se.is_none() {
        flags.push("hessian_not_positive_definite".to_string());
    }

    let provenance = FitProvenance {
        n,
        n_reference: set.count_sensor(Sensor::Reference),
        n_starboard: set.count_sensor(Sensor::Starboard),
        n_port: set.count_sensor(Sensor::Port),
        m: config.m,
        ordering: "maxmin".to_string(),
        plan_scaling: scaling,
        plan: "built once at the starting values and held fixed".to_string(),
        start,
        seed: config.seed,
        termination: outcome.termination,
        data: set.provenance.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    };
    Ok(FitResult {
        theta,
        beta: gls.beta,
        se_beta,
        se_theta,
        bias_summary: bias_summary(&gls, &theta, log_nugget_se),
        cov_beta: gls.cov,
        loglik: gls.loglik,
        converged: outcome.converged,
        iterations: outcome.iterations,
        gradient_norm: outcome.grad_norm,
        flags,
        standardization: std,
        provenance,
    })
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::GradientTolerance => "gradient_tolerance",
        Termination::ObjectiveTolerance => "objective_tolerance",
        Termination::LineSearchFailed => "line_search_failed",
        Termination::MaxIterations => "max_iterations",
        Termination::GradientUnavailable => "gradient_unavailable",
    }
}
