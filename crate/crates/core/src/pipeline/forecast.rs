//! Ensemble forecasts from a fitted bundle.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banding::{assign_band, band_probs, Band, BandProbabilities};
use crate::ensemble::{combine, default_prob_grid, ForecastDistribution, MemberForecast, WeightSchedule};
use crate::error::{Error, Result};
use crate::pipeline::bundle::ModelBundle;
use crate::pipeline::data::{Source, WeatherRow, N_MEMBERS};
use crate::splice::{check_probability, search_first, CountDistribution};

/// Levels reported with every forecast and scored by pinball loss.
pub const EVAL_LEVELS: [f64; 7] = [0.05, 0.25, 0.5, 0.75, 0.95, 0.99, 0.999];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "eps+hres")]
    EpsHres,
    #[serde(rename = "eps")]
    Eps,
    #[serde(rename = "hres")]
    Hres,
}

impl Mode {
    pub fn sources(self) -> Vec<Source> {
        let eps = (1..=N_MEMBERS).map(Source::Member);
        match self {
            Mode::EpsHres => std::iter::once(Source::Hres).chain(eps).collect(),
            Mode::Eps => eps.collect(),
            Mode::Hres => vec![Source::Hres],
        }
    }

    /// EPS-only forecasts weight every member equally at every lead.
    pub fn schedule(self) -> WeightSchedule {
        match self {
            Mode::Eps => WeightSchedule { hres_weight_at_0: 1.0, ..Default::default() },
            _ => WeightSchedule::default(),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::EpsHres => "eps+hres",
            Mode::Eps => "eps",
            Mode::Hres => "hres",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eps+hres" => Ok(Mode::EpsHres),
            "eps" => Ok(Mode::Eps),
            "hres" => Ok(Mode::Hres),
            _ => Err(Error::Validation(format!("unknown mode `{s}` (expected eps+hres, eps or hres)"))),
        }
    }
}

pub struct Forecast {
    pub dist: ForecastDistribution,
    /// Bulk-only counterpart built from the same members.
    pub reference: ForecastDistribution,
    pub probs: BandProbabilities,
    pub band: Band,
    pub n_members: usize,
}

/// Combine the member forecasts of one district, date and lead time. `rows` may contain
/// sources outside `mode`; they are ignored.
pub fn forecast(bundle: &ModelBundle, rows: &[&WeatherRow], lead_h: i64, mode: Mode, strict: bool) -> Result<Forecast> {
    let wanted = mode.sources();
    let mut chosen: Vec<&WeatherRow> =
        rows.iter().copied().filter(|r| r.lead_h == lead_h && wanted.contains(&r.source)).collect();
    chosen.sort_by_key(|r| r.source);
    if strict && chosen.len() < wanted.len() {
        let missing: Vec<String> =
            wanted.iter().filter(|s| !chosen.iter().any(|r| r.source == **s)).map(|s| s.to_string()).collect();
        return Err(Error::Validation(format!(
            "missing members for {mode} at lead {lead_h} h: {}",
            missing.join(", ")
        )));
    }
    if chosen.is_empty() {
        return Err(Error::Empty("member forecasts"));
    }
    let grid = default_prob_grid();
    let schedule = mode.schedule();
    let mut flex = Vec::with_capacity(chosen.len());
    let mut bulk = Vec::with_capacity(chosen.len());
    for r in &chosen {
        let member_id = r.source.member_id().expect("forecast sources carry member ids");
        flex.push(MemberForecast { member_id, lead_hours: lead_h, dist: bundle.predict(&r.covariates)? });
        bulk.push(MemberForecast { member_id, lead_hours: lead_h, dist: bundle.predict_bulk_only(&r.covariates)? });
    }
    let dist = combine(&flex, &schedule, &grid)?;
    let reference = combine(&bulk, &schedule, &grid)?;
    let probs = band_probs(&dist, &bundle.bands);
    Ok(Forecast { dist, reference, probs, band: assign_band(&probs), n_members: chosen.len() })
}

/// A forecast reduced to what scoring needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub district: String,
    pub date: NaiveDate,
    pub lead_h: i64,
    pub mode: Mode,
    pub n_members: usize,
    /// Quantiles at [`EVAL_LEVELS`].
    pub quantiles: Vec<u64>,
    /// Quantiles on the 199-level grid, used as an equally weighted sample.
    pub grid: Vec<u64>,
    pub reference_grid: Vec<u64>,
    pub probs: BandProbabilities,
    pub reference_probs: BandProbabilities,
    pub band: Band,
    /// Mean wind covariate over the members.
    pub wind: Option<f64>,
    /// Wind at or above the training 80th percentile.
    pub high_wind: Option<bool>,
    /// Held-out fold label for cross-validated hindcasts.
    #[serde(default)]
    pub fold: Option<String>,
}

fn grid_quantiles<D: CountDistribution>(d: &D, levels: &[f64]) -> Result<Vec<u64>> {
    levels.iter().map(|&p| d.quantile(p)).collect()
}

pub fn forecast_record(
    bundle: &ModelBundle,
    rows: &[&WeatherRow],
    date: NaiveDate,
    lead_h: i64,
    mode: Mode,
    strict: bool,
) -> Result<ForecastRecord> {
    let f = forecast(bundle, rows, lead_h, mode, strict)?;
    let grid = default_prob_grid();
    let wanted = mode.sources();
    // summed in source order so the mean does not depend on row order
    let mut members: Vec<&&WeatherRow> =
        rows.iter().filter(|r| r.lead_h == lead_h && wanted.contains(&r.source)).collect();
    members.sort_by_key(|r| r.source);
    let winds: Vec<f64> =
        members.iter().filter_map(|r| r.covariates.get(&bundle.metadata.wind_covariate).copied()).collect();
    let wind = (!winds.is_empty()).then(|| winds.iter().sum::<f64>() / winds.len() as f64);
    let high_wind = wind.zip(bundle.metadata.wind_q80).map(|(w, q)| w >= q);
    Ok(ForecastRecord {
        district: bundle.district.clone(),
        date,
        lead_h,
        mode,
        n_members: f.n_members,
        quantiles: grid_quantiles(&f.dist, &EVAL_LEVELS)?,
        grid: grid_quantiles(&f.dist, &grid)?,
        reference_grid: grid_quantiles(&f.reference, &grid)?,
        probs: f.probs,
        reference_probs: band_probs(&f.reference, &bundle.bands),
        band: f.band,
        wind,
        high_wind,
        fold: None,
    })
}

/// Forecast every (district, date, lead) group of NWP rows that has a bundle. An empty
/// `leads` list keeps every lead present.
pub fn forecast_all(
    bundles: &[ModelBundle],
    weather: &[WeatherRow],
    mode: Mode,
    leads: &[i64],
    strict: bool,
) -> Result<Vec<ForecastRecord>> {
    let mut groups: BTreeMap<(&str, NaiveDate, i64), Vec<&WeatherRow>> = BTreeMap::new();
    for r in weather {
        if r.source == Source::Reanalysis || !(leads.is_empty() || leads.contains(&r.lead_h)) {
            continue;
        }
        groups.entry((r.district.as_str(), r.date, r.lead_h)).or_default().push(r);
    }
    let by_district: BTreeMap<&str, &ModelBundle> = bundles.iter().map(|b| (b.district.as_str(), b)).collect();
    let jobs: Vec<_> = groups.into_iter().filter(|((d, _, _), _)| by_district.contains_key(d)).collect();
    jobs.into_par_iter()
        .map(|((d, date, lead), rows)| {
            forecast_record(by_district[d], &rows, date, lead, mode, strict).map_err(|e| match e {
                Error::Validation(m) => Error::Validation(format!("{d} {date}: {m}")),
                e => e,
            })
        })
        .collect()
}

impl CountDistribution for ForecastRecord {
    /// Step cdf read off the stored grid.
    fn cdf(&self, y: i64) -> f64 {
        let grid = default_prob_grid();
        let n = self.grid.partition_point(|&q| q as i64 <= y);
        if n == 0 {
            0.0
        } else {
            grid[n - 1]
        }
    }

    /// Exact at the stored levels; elsewhere the next grid level up.
    fn quantile(&self, p: f64) -> Result<u64> {
        check_probability(p)?;
        if let Some(j) = EVAL_LEVELS.iter().position(|&a| a == p) {
            return Ok(self.quantiles[j]);
        }
        let grid = default_prob_grid();
        let j = search_first(0, grid.len() as i64, |i| i as usize == grid.len() || grid[i as usize] >= p) as usize;
        self.grid.get(j).copied().ok_or(Error::UnboundedQuantile)
    }
}
