//! Configuration, experiment orchestration, output emission and fits.

pub mod config;
pub mod experiments;
pub mod fit;
pub mod run;

pub use config::{Mode, RunConfig};
pub use fit::{fit_linear, fit_power_law, fit_resolution, fit_threshold_scaling, tc_frequency, FitModel, FitResult};
pub use run::{run, verify_manifest, Manifest};
