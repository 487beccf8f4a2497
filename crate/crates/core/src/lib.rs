//! Railway GNSS local-error toolkit.
//!
//! Turns recorded train journeys (RINEX observation/navigation files, a
//! ground-truth trajectory and an environment label timeline) into
//! per-satellite local pseudorange error series, trains environment
//! classifiers on per-epoch signal features, fits robust Gaussian error
//! models per environment and synthesizes error streams that can be injected
//! into a GNSS signal simulator.
//!
//! The pipeline stages map onto modules:
//!
//! * [`ingest`]: RINEX 3.x and CSV readers, time alignment.
//! * [`geodesy`]: broadcast-ephemeris satellite state, ranging, coordinates.
//! * [`atmosphere`]: Klobuchar and Saastamoinen delay models.
//! * [`residuals`]: pseudorange decomposition and receiver clock estimation.
//! * [`context`]: environment taxonomy and per-epoch features.
//! * [`classify`]: logistic regression and gradient boosting classifiers.
//! * [`errormodel`]: Minimum Covariance Determinant fits and error sampling.
//! * [`cli`]: configuration, the synthetic scenario generator and the
//!   subcommand drivers used by the `railgnss` binary.

pub mod atmosphere;
pub mod classify;
pub mod cli;
pub mod context;
mod error;
pub mod errormodel;
pub mod geodesy;
pub mod ingest;
pub mod residuals;
mod time;

pub use error::{Error, Result};
pub use time::{GnssTime, SECONDS_PER_WEEK};

pub mod prelude {
    pub use crate::context::EnvironmentClass;
    pub use crate::geodesy::{AzEl, EcefPosition};
    pub use crate::ingest::{Band, Constellation, ObservationEpoch, SatelliteId};
    pub use crate::{Error, GnssTime, Result};
}
