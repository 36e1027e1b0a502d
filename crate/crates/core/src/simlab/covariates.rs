//! Weather covariates for the simulation scenarios.
//!
//! `z1` is daily maximum wind speed divided by 50 m/s and `z2` the 90th percentile of
//! hourly precipitation in cm. The synthetic source draws lognormal wind and gamma
//! precipitation linked by a Gaussian copula; the empirical source resamples
//! `(z1, z2)` rows jointly from a CSV file.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateSpec {
    Synthetic {
        /// Copula correlation between wind and precipitation.
        rho: f64,
        /// Median wind speed (m/s) and log-scale spread.
        wind_median: f64,
        wind_log_sd: f64,
        /// Gamma shape and scale of `z2`.
        precip_shape: f64,
        precip_scale: f64,
    },
    Empirical {
        path: PathBuf,
    },
}

impl Default for CovariateSpec {
    fn default() -> Self {
        CovariateSpec::Synthetic {
            rho: 0.5,
            wind_median: 10.0,
            wind_log_sd: 0.35,
            precip_shape: 1.2,
            precip_scale: 0.18,
        }
    }
}

/// A ready-to-sample covariate source.
#[derive(Debug, Clone)]
pub enum CovariateSource {
    Synthetic { rho: f64, wind_median: f64, wind_log_sd: f64, precip: Gamma },
    Empirical { z1: Vec<f64>, z2: Vec<f64> },
}

#[derive(Debug, Deserialize)]
struct Row {
    z1: f64,
    z2: f64,
}

/// Read an empirical `z1,z2` sample.
pub fn load_covariates(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Validation(format!("cannot read covariate file {}: {e}", path.display())))?;
    let mut z1 = Vec::new();
    let mut z2 = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Validation(format!("{} row {}: {e}", path.display(), i + 2)))?;
        if !row.z1.is_finite() || !row.z2.is_finite() {
            return Err(Error::Validation(format!("{} row {}: non-finite covariate", path.display(), i + 2)));
        }
        z1.push(row.z1);
        z2.push(row.z2);
    }
    if z1.is_empty() {
        return Err(Error::Empty("covariate file"));
    }
    Ok((z1, z2))
}

impl CovariateSource {
    pub fn from_spec(spec: &CovariateSpec) -> Result<Self> {
        match spec {
            CovariateSpec::Synthetic { rho, wind_median, wind_log_sd, precip_shape, precip_scale } => {
                if !(rho.abs() < 1.0) || *wind_median <= 0.0 || *wind_log_sd < 0.0 {
                    return Err(Error::InvalidParameter("synthetic covariate parameters out of range".into()));
                }
                let precip = Gamma::new(*precip_shape, 1.0 / precip_scale)
                    .map_err(|e| Error::InvalidParameter(format!("precipitation gamma: {e}")))?;
                Ok(Self::Synthetic { rho: *rho, wind_median: *wind_median, wind_log_sd: *wind_log_sd, precip })
            }
            CovariateSpec::Empirical { path } => {
                let (z1, z2) = load_covariates(path)?;
                Ok(Self::Empirical { z1, z2 })
            }
        }
    }

    /// `n` joint draws of `(z1, z2)`.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut z1 = Vec::with_capacity(n);
        let mut z2 = Vec::with_capacity(n);
        match self {
            Self::Synthetic { rho, wind_median, wind_log_sd, precip } => {
                let std = Normal::standard();
                for _ in 0..n {
                    let a: f64 = StandardNormal.sample(rng);
                    let e: f64 = StandardNormal.sample(rng);
                    let b = rho * a + (1.0 - rho * rho).sqrt() * e;
                    let wind = (wind_median.ln() + wind_log_sd * a).exp();
                    let u = std.cdf(b).clamp(1e-12, 1.0 - 1e-12);
                    z1.push(wind / 50.0);
                    z2.push(precip.inverse_cdf(u));
                }
            }
            Self::Empirical { z1: a, z2: b } => {
                for _ in 0..n {
                    let i = rng.random_range(0..a.len());
                    z1.push(a[i]);
                    z2.push(b[i]);
                }
            }
        }
        (z1, z2)
    }
}
