//! The space-time Matérn covariance of the wind anomaly plus the independent
//! measurement-noise nugget.

use serde::{Deserialize, Serialize};

use crate::bessel::{rgamma, BesselK};
use crate::data::ObservationSet;
use crate::geo::{check_ranges, scaled_distance};
use crate::{Error, Result};

/// Box for the smoothness parameter.
pub const SMOOTHNESS_BOUNDS: (f64, f64) = (0.1, 4.0);

/// Covariance parameters: `variance` (θ₁, m²/s²), `smoothness` (θ₂),
/// `spatial_range` (θ₃, km), `temporal_range` (θ₄, s) and `nugget` (σ², m²/s²).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceParams {
    pub variance: f64,
    pub smoothness: f64,
    pub spatial_range: f64,
    pub temporal_range: f64,
    pub nugget: f64,
}

impl CovarianceParams {
    /// All parameters finite and positive, smoothness inside
    /// [`SMOOTHNESS_BOUNDS`]. A variance of exactly zero is accepted as the
    /// pure-noise limit.
    pub fn validate(&self) -> Result<()> {
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(Error::InvalidParams(format!("variance must be >= 0, got {}", self.variance)));
        }
        let (lo, hi) = SMOOTHNESS_BOUNDS;
        if !(lo..=hi).contains(&self.smoothness) {
            return Err(Error::InvalidParams(format!(
                "smoothness must lie in [{lo}, {hi}], got {}",
                self.smoothness
            )));
        }
        check_ranges(self.spatial_range, self.temporal_range)?;
        if !(self.nugget > 0.0 && self.nugget.is_finite()) {
            return Err(Error::InvalidParams(format!("nugget must be > 0, got {}", self.nugget)));
        }
        Ok(())
    }

    /// `√2·σ`, the standard deviation of a same-place, same-time difference
    /// between two sensors.
    pub fn difference_sd(&self) -> f64 {
        (2.0 * self.nugget).sqrt()
    }
}

/// Unit-variance Matérn correlation of fixed smoothness `ν`:
/// `M(d) = 2^{1-ν} / Γ(ν) · d^ν · K_ν(d)`, with `M(0) = 1`.
#[derive(Clone, Debug)]
pub struct Matern {
    bessel: BesselK,
    nu: f64,
    norm: f64,
    small_d_coef: f64,
}

impl Matern {
    pub fn new(nu: f64) -> Self {
        assert!(nu > 0.0 && nu.is_finite(), "Matérn smoothness must be positive");
        let norm = 2f64.powf(1.0 - nu) * rgamma(nu);
        // M(d) ≈ 1 - Γ(1-ν)/Γ(1+ν) (d/2)^{2ν} as d → 0, for ν < 1.
        let small_d_coef = if nu < 1.0 { rgamma(1.0 + nu) / rgamma(1.0 - nu) } else { 0.0 };
        Matern { bessel: BesselK::new(nu), nu, norm, small_d_coef }
    }

    pub fn smoothness(&self) -> f64 {
        self.nu
    }

    pub fn eval(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return 1.0;
        }
        if d < 1e-20 {
            // d^ν K_ν(d) overflows for large ν long before the correction matters.
            return 1.0 - self.small_d_coef * (0.5 * d).powf(2.0 * self.nu);
        }
        if d > 700.0 {
            return 0.0;
        }
        (self.norm * d.powf(self.nu) * self.bessel.eval(d)).min(1.0)
    }
}

/// Matérn correlation at scaled distance `d` with smoothness `nu`.
pub fn matern(d: f64, nu: f64) -> f64 {
    Matern::new(nu).eval(d)
}

/// Covariance function ready for repeated evaluation.
#[derive(Clone, Debug)]
pub struct Kernel {
    pub params: CovarianceParams,
    matern: Matern,
    inv_space2: f64,
    inv_time2: f64,
}

impl Kernel {
    pub fn new(params: &CovarianceParams) -> Result<Self> {
        params.validate()?;
        Ok(Kernel {
            params: *params,
            matern: Matern::new(params.smoothness),
            inv_space2: 1.0 / (params.spatial_range * params.spatial_range),
            inv_time2: 1.0 / (params.temporal_range * params.temporal_range),
        })
    }

    /// Anomaly covariance `θ₁·M(d)` from a squared chordal distance (km²)
    /// and a squared time difference (s²). Excludes the nugget.
    #[inline]
    pub fn from_squared(&self, space2: f64, time2: f64) -> f64 {
        let d = (space2 * self.inv_space2 + time2 * self.inv_time2).sqrt();
        self.params.variance * self.matern.eval(d)
    }

    /// Variance of one record: `θ₁ + σ²`.
    #[inline]
    pub fn diagonal(&self) -> f64 {
        self.params.variance + self.params.nugget
    }
}

/// Covariance between records `i` and `j` of `set`. The nugget is added only
/// when `i == j`: two distinct records at the same place and time share the
/// anomaly but not the noise.
pub fn cross_covariance(set: &ObservationSet, i: usize, j: usize, params: &CovarianceParams) -> Result<f64> {
    params.validate()?;
    let obs = set.observations();
    let (a, b) = match (obs.get(i), obs.get(j)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidArgument(format!("record index out of range: ({i}, {j})"))),
    };
    let d = scaled_distance(&a.point(), &b.point(), params.spatial_range, params.temporal_range)?;
    let nugget = if i == j { params.nugget } else { 0.0 };
    Ok(params.variance * matern(d, params.smoothness) + nugget)
}
