//! Configuration-driven experiments producing result tables.
//!
//! Modes:
//! - `nonselective-dimension`: closed-form mean path lengths over a resolution
//!   schedule for each listed `D`, then a dimension fit.
//! - `selective-dimension`: simulated ensembles per resolution, sampled path
//!   lengths, dimension fit.
//! - `feedback-relaxation`: ensemble means against the closed-form reference.
//! - `oracle-validation`: closed-form maps against the grid oracle.

pub mod config;
pub mod run;
pub mod table;

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

pub use config::{ExperimentConfig, Format, Mode};
pub use table::{emit_results, format_number, Cell, ExperimentOutput, ResultTable};

use crate::error::{Error, Result};

/// Worker count (`None` = available parallelism) and an interrupt flag.
#[derive(Debug, Clone, Default)]
pub struct RunControl {
    pub workers: Option<usize>,
    pub cancel: Arc<AtomicBool>,
}

impl RunControl {
    pub fn with_workers(workers: usize) -> Self {
        RunControl {
            workers: Some(workers),
            ..Default::default()
        }
    }
}

/// Validates `config` and runs it. Results do not depend on the worker count.
pub fn run_experiment(config: &ExperimentConfig, control: &RunControl) -> Result<ExperimentOutput> {
    config.validate()?;
    match control.workers {
        Some(0) => Err(Error::Config("workers must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            pool.install(|| run::dispatch(config, control))
        }
        None => run::dispatch(config, control),
    }
}
