//! Estimation of biases and noise among wind-speed sensors from scattered
//! satellite track data.
//!
//! Observations from a reference instrument and from the starboard and port
//! antennas of one other platform are modelled as
//!
//! ```text
//! wind = trend(time, latitude) + sensor offset + anomaly(location, time) + noise
//! ```
//!
//! where the anomaly is a mean-zero Gaussian process with a space-time Matérn
//! covariance and the noise is independent with variance `σ²`. Only the
//! contrasts between sensor offsets are identifiable; they are the biases this
//! crate reports, together with `√2·σ`, the standard deviation of a
//! same-place, same-time difference between two sensors.
//!
//! The likelihood is evaluated with a Vecchia approximation
//! ([`vecchia`]) over a maxmin ordering, the mean coefficients are profiled
//! out by generalized least squares, and the covariance parameters are
//! estimated by quasi-Newton ascent ([`fit`]). A dense exact simulator and
//! likelihood ([`simulate`]) serve as ground truth, and [`empirical`]
//! implements the classical closest-pair collocation analysis.
//!
//! The `book/` directory next to this crate walks through each piece; its code
//! listings are compiled and run as doctests.

pub mod bessel;
pub mod campaign;
pub mod cli;
pub mod covariance;
pub mod data;
pub mod design;
pub mod empirical;
mod error;
pub mod fit;
pub mod geo;
mod linalg;
pub mod optim;
pub mod report;
pub mod simulate;
pub mod vecchia;

pub use covariance::CovarianceParams;
pub use data::{Observation, ObservationSet, Sensor};
pub use design::MeanParams;
pub use error::{Error, Result};
pub use fit::{fit_model, FitConfig, FitResult};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/kernel.md")]
    mod kernel {}
    #[doc = include_str!("../../../book/src/vecchia.md")]
    mod vecchia {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/empirical.md")]
    mod empirical {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
