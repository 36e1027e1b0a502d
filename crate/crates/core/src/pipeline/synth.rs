//! Self-consistent synthetic fault and weather files for demos and end-to-end tests.
//!
//! Counts follow a discrete gamma bulk with a DGP tail whose parameters depend on the same
//! reanalysis covariates written to the weather file. NWP members perturb those covariates
//! with noise growing linearly to lead 96 h, so at lead 0 every member matches reanalysis.

use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::banding::BandSpec;
use crate::distributions::{DiscreteGammaParams, GpParams};
use crate::error::{Error, Result};
use crate::pipeline::data::{ObservationRow, Source, WeatherRow, N_MEMBERS};
use crate::pipeline::folds::regulatory_year;
use crate::simlab::scenario::rep_seed;
use crate::simlab::{CovariateSource, CovariateSpec, DgDgp};
use crate::stats::quantile;
use crate::terms::Covariates;

pub const WIND: &str = "ws10_max";
pub const PRECIP: &str = "tp_q90";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub districts: Vec<String>,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// NWP rows are written for this many final regulatory years.
    pub nwp_years: u32,
    pub leads: Vec<i64>,
    pub seed: u64,
    pub xi: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            districts: vec!["north".into(), "south".into()],
            start: NaiveDate::from_ymd_opt(2010, 4, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2024, 3, 31).expect("valid date"),
            nwp_years: 1,
            leads: vec![0, 24, 72, 96],
            seed: 1,
            xi: 0.1,
        }
    }
}

pub struct SynthData {
    pub faults: Vec<ObservationRow>,
    pub weather: Vec<WeatherRow>,
    pub bands: Vec<BandSpec>,
}

/// The count distribution behind the synthetic data at given covariates.
pub fn synth_truth(ws: f64, tp: f64, xi: f64) -> Result<DgDgp> {
    let z1 = ws / 50.0;
    let z2 = tp / 10.0;
    let bulk = DiscreteGammaParams::new(1.5, (2.9 + 3.0 * z1 + 0.5 * z2).exp())?;
    let tail = GpParams::new((1.9 + 2.0 * z1).exp(), xi)?;
    DgDgp::new(bulk, tail, 0.1)
}

fn covariates(ws: f64, tp: f64) -> Covariates {
    Covariates::from([(WIND.to_string(), ws), (PRECIP.to_string(), tp)])
}

pub fn synth_data(cfg: &SynthConfig) -> Result<SynthData> {
    if cfg.end < cfg.start || cfg.districts.is_empty() {
        return Err(Error::Validation("synthetic data needs districts and a nonempty date range".into()));
    }
    let source = CovariateSource::from_spec(&CovariateSpec::default())?;
    let days = (cfg.end - cfg.start).num_days() as usize + 1;
    let dates: Vec<NaiveDate> = (0..days).map(|i| cfg.start + Duration::days(i as i64)).collect();
    let nwp_from = regulatory_year(cfg.end) - cfg.nwp_years as i32 + 1;

    let mut out = SynthData { faults: vec![], weather: vec![], bands: vec![] };
    for (d, district) in cfg.districts.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(rep_seed(cfg.seed, d));
        let (z1, z2) = source.draw(days, &mut rng);
        let mut counts = Vec::with_capacity(days);
        for (i, &date) in dates.iter().enumerate() {
            let (ws, tp) = (50.0 * z1[i], 10.0 * z2[i]);
            let y = synth_truth(ws, tp, cfg.xi)?.draw(&mut rng);
            counts.push(y as f64);
            out.faults.push(ObservationRow { district: district.clone(), date, count: y });
            out.weather.push(WeatherRow {
                district: district.clone(),
                date,
                source: Source::Reanalysis,
                lead_h: 0,
                covariates: covariates(ws, tp),
            });
            if regulatory_year(date) < nwp_from {
                continue;
            }
            for &lead in &cfg.leads {
                let spread = 0.25 * (lead.clamp(0, 96) as f64 / 96.0);
                let sources = std::iter::once(Source::Hres).chain((1..=N_MEMBERS).map(Source::Member));
                for s in sources {
                    let scale = if s == Source::Hres { 0.5 * spread } else { spread };
                    let e1: f64 = StandardNormal.sample(&mut rng);
                    let e2: f64 = StandardNormal.sample(&mut rng);
                    out.weather.push(WeatherRow {
                        district: district.clone(),
                        date,
                        source: s,
                        lead_h: lead,
                        covariates: covariates(ws * (scale * e1).exp(), tp * (scale * e2).exp()),
                    });
                }
            }
        }
        let tau_ag = (quantile(&counts, 0.8).round() as u64).max(1);
        let tau_ra = (quantile(&counts, 0.97).round() as u64).max(tau_ag + 1);
        let mut spec = BandSpec::new(tau_ag, tau_ra)?;
        spec.district = district.clone();
        out.bands.push(spec);
    }
    Ok(out)
}

pub fn write_faults(rows: &[ObservationRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["district", "date", "count"])?;
    for r in rows {
        w.write_record([r.district.clone(), r.date.to_string(), r.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Weather CSV with one column per covariate name seen; absent values are written as `NA`.
pub fn write_weather(rows: &[WeatherRow], path: &Path) -> Result<()> {
    let mut names: Vec<&String> = rows.iter().flat_map(|r| r.covariates.keys()).collect();
    names.sort();
    names.dedup();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["district".to_string(), "date".into(), "source".into(), "lead_h".into()];
    header.extend(names.iter().map(|n| n.to_string()));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.district.clone(), r.date.to_string(), r.source.to_string(), r.lead_h.to_string()];
        rec.extend(names.iter().map(|n| r.covariates.get(*n).map_or("NA".to_string(), |v| v.to_string())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
