//! Simulation experiments with a discrete gamma bulk and a DGP tail.

pub mod covariates;
pub mod dgdgp;
pub mod scan;
pub mod scenario;

pub use covariates::{CovariateSource, CovariateSpec};
pub use dgdgp::{dgdgp_cdf, dgdgp_pmf, dgdgp_quantile, dgdgp_threshold, DgDgp};
pub use scan::{threshold_scan, ScanConfig, ScanReport};
pub use scenario::{run_scenario, sample_scenario, ScenarioConfig, ScenarioReport, SIM_LEVELS};
