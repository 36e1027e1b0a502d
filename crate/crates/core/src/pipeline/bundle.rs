//! Fitted per-district models and their JSON persistence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::banding::BandSpec;
use crate::error::{Error, Result};
use crate::pipeline::config::PipelineConfig;
use crate::pipeline::data::TrainingData;
use crate::pipeline::folds::{regulatory_year, year_label};
use crate::pipeline::select::SelectionLedger;
use crate::quantile_model::{fit_quantile_set, QuantileGrid};
use crate::splice::{FlexModel, PredictiveDistribution};
use crate::stats::quantile;
use crate::tail_model::{extract_exceedances, fit_tail};
use crate::terms::{Covariates, Formula};

pub const SCHEMA_VERSION: u32 = 1;

/// Bulk levels used for fitting; the transition level is appended.
pub const BULK_LEVELS: [f64; 3] = [0.05, 0.25, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub levels: Vec<f64>,
    pub lambda: f64,
    pub sigma_hat: f64,
    pub alpha_t: f64,
    pub tail_covariates: Vec<String>,
    pub wind_covariate: String,
    /// Training-data 80th percentile of the wind covariate.
    pub wind_q80: Option<f64>,
    pub n_train: usize,
    pub n_exceedances: usize,
    /// Regulatory years present in the training data.
    pub train_years: Vec<String>,
    pub selection: Option<SelectionLedger>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema_version: u32,
    pub district: String,
    pub model: FlexModel,
    pub bands: BandSpec,
    pub metadata: BundleMetadata,
}

pub fn quantile_grid(alpha_t: f64) -> Result<QuantileGrid> {
    let mut levels = BULK_LEVELS.to_vec();
    levels.push(alpha_t);
    QuantileGrid::new(levels)
}

/// Fit the bulk grid `{0.05, 0.25, 0.5, alpha_t}` and the DGP tail above `alpha_t`.
pub fn fit_bundle(
    train: &TrainingData,
    bands: &BandSpec,
    cfg: &PipelineConfig,
    alpha_t: f64,
    tail_formula: &Formula,
) -> Result<ModelBundle> {
    let bulk = fit_quantile_set(&train.data, &cfg.bulk_formula()?, &quantile_grid(alpha_t)?, &cfg.quantile_config())?;
    let exc = extract_exceedances(&train.data, &bulk, alpha_t)?;
    let tail_cfg = cfg.tail_config();
    let tail = fit_tail(&exc, tail_formula, alpha_t, &tail_cfg)?;

    let wind_q80 = train.data.columns.get(&cfg.wind_covariate).map(|w| quantile(w, 0.8));
    let mut years: Vec<i32> = train.dates.iter().map(|&d| regulatory_year(d)).collect();
    years.sort_unstable();
    years.dedup();
    let metadata = BundleMetadata {
        levels: bulk.levels().to_vec(),
        lambda: bulk.lambda,
        sigma_hat: bulk.sigma_hat,
        alpha_t,
        tail_covariates: tail.tail_covariates().iter().map(|s| s.to_string()).collect(),
        wind_covariate: cfg.wind_covariate.clone(),
        wind_q80,
        n_train: train.data.len(),
        n_exceedances: tail.n_exceedances,
        train_years: years.into_iter().map(year_label).collect(),
        selection: None,
    };
    Ok(ModelBundle {
        schema_version: SCHEMA_VERSION,
        district: train.district.clone(),
        model: FlexModel { bulk, tail: Some(tail) },
        bands: bands.clone(),
        metadata,
    })
}

impl ModelBundle {
    pub fn predict(&self, x: &Covariates) -> Result<PredictiveDistribution> {
        self.model.predict(x)
    }

    /// The same bulk without its tail, used as the reference forecast.
    pub fn predict_bulk_only(&self, x: &Covariates) -> Result<PredictiveDistribution> {
        PredictiveDistribution::bulk_only(&self.model.bulk.predict_quantiles(x)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("schema_version")
            .ok_or_else(|| Error::VersionMismatch { expected: SCHEMA_VERSION, found: "none".into() })?;
        if found.as_u64() != Some(SCHEMA_VERSION as u64) {
            return Err(Error::VersionMismatch { expected: SCHEMA_VERSION, found: found.to_string() });
        }
        let bundle: Self = serde_json::from_value(value)?;
        if !bundle.metadata.levels.contains(&bundle.metadata.alpha_t) {
            return Err(Error::Validation("bundle levels do not include its transition level".into()));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
