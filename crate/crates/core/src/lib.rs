pub mod backtest;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod ingest;
pub mod layers;
pub mod models;
pub mod regimes;
pub mod spd;
pub mod synth;

pub use error::{Error, Result};
