//! Simulator for household PV-battery adoption under flat retail and feed-in
//! tariffs.
//!
//! The model runs per-household annual investment decisions (argmax-NPV over a
//! grid of candidate PV/battery additions, gated on discounted payback),
//! dispatches each configuration at half-hourly resolution with a
//! self-consumption battery policy, and aggregates the resulting residual
//! demand across the fleet into grid-operation stages and operational metrics
//! (load duration curves, peak/minimum timing histograms, ramp rates).
//!
//! Modules follow the processing pipeline:
//!
//! * [`profiles`] — ingest, validate and serve half-hourly demand/insolation data
//! * [`dispatch`] — PV generation, battery state-of-charge walk, residual demand
//! * [`finance`] — tariff trajectories, bills, NPV and discounted payback
//! * [`investor`] — the yearly investment decision loop over a candidate grid
//! * [`fleet`] — aggregation, stage classification and the metrics suite
//! * [`scenario`] — feed-in-tariff scenario sweeps, config files and outputs

pub mod cli;
pub mod dispatch;
pub mod finance;
pub mod fleet;
pub mod investor;
pub mod profiles;
pub mod scenario;

use std::path::PathBuf;

/// Crate-wide error type. Variants map onto the CLI exit-code classes:
/// invalid data/config exit 2, everything else exits 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed input data or configuration.
    pub fn is_invalid_input(&self) -> bool {
        matches!(self, Error::InvalidData(_) | Error::InvalidConfig(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
