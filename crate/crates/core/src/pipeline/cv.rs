//! Leave-one-regulatory-year-out hindcasts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banding::BandSpec;
use crate::error::Result;
use crate::pipeline::bundle::fit_bundle;
use crate::pipeline::config::PipelineConfig;
use crate::pipeline::data::{TrainingData, WeatherRow};
use crate::pipeline::folds::{regulatory_year, year_label, FoldPlan};
use crate::pipeline::forecast::{forecast_all, ForecastRecord, Mode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub district: String,
    pub fold: String,
    pub train_years: Vec<String>,
    pub n_train: usize,
    pub n_forecasts: usize,
    /// The held-out year was in the training data, or a forecast fell outside its fold.
    pub leaked: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub records: Vec<ForecastRecord>,
    pub audits: Vec<FoldAudit>,
}

impl CvOutcome {
    pub fn leak_free(&self) -> bool {
        self.audits.iter().all(|a| !a.leaked)
    }

    pub fn extend(&mut self, other: CvOutcome) {
        self.records.extend(other.records);
        self.audits.extend(other.audits);
    }
}

/// For each fold, fit on the other years and forecast the fold's NWP rows.
pub fn cross_validate(
    train: &TrainingData,
    plan: &FoldPlan,
    weather: &[WeatherRow],
    bands: &BandSpec,
    cfg: &PipelineConfig,
    mode: Mode,
    leads: &[i64],
) -> Result<CvOutcome> {
    let tail_formula = cfg.tail_formula()?;
    let per_fold = (0..plan.len())
        .into_par_iter()
        .map(|k| -> Result<(Vec<ForecastRecord>, FoldAudit)> {
            let fold = &plan.folds[k];
            let (tr, _) = plan.split(&train.dates, k);
            let bundle = fit_bundle(&train.subset(&tr), bands, cfg, cfg.alpha_t, &tail_formula)?;
            let rows: Vec<WeatherRow> =
                weather.iter().filter(|w| w.district == train.district && fold.contains(w.date)).cloned().collect();
            let mut records = forecast_all(std::slice::from_ref(&bundle), &rows, mode, leads, cfg.strict_members)?;
            for r in &mut records {
                r.fold = Some(fold.label.clone());
            }
            let leaked = bundle.metadata.train_years.contains(&fold.label)
                || records.iter().any(|r| year_label(regulatory_year(r.date)) != fold.label);
            let audit = FoldAudit {
                district: train.district.clone(),
                fold: fold.label.clone(),
                train_years: bundle.metadata.train_years.clone(),
                n_train: tr.len(),
                n_forecasts: records.len(),
                leaked,
            };
            Ok((records, audit))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = CvOutcome::default();
    for (records, audit) in per_fold {
        out.records.extend(records);
        out.audits.push(audit);
    }
    Ok(out)
}
