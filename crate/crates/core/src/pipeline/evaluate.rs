//! Score reports for stored forecasts.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::banding::{Band, BandSpec};
use crate::error::{Error, Result};
use crate::pipeline::data::ObservationRow;
use crate::pipeline::forecast::{ForecastRecord, EVAL_LEVELS};
use crate::scoring::{
    auc_macro, auc_micro, brier, brier_skill, pinball, reliability, scaled_pinball_against, twcrps_sample,
    ReliabilityTable, ScaledRow, ScoreRow,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityGroup {
    pub district: String,
    pub source: String,
    pub lead_hours: i64,
    pub all: ReliabilityTable,
    /// Rows whose wind is in the training top quintile.
    pub high_wind: ReliabilityTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n_forecasts: usize,
    pub scores: Vec<ScoreRow>,
    pub scaled_pinball: Vec<ScaledRow>,
    pub reliability: Vec<ReliabilityGroup>,
    /// Cases where the flex and bulk-only twCRPS are both zero, so skill is undefined.
    pub twcrps_degenerate: usize,
}

impl ScoreReport {
    pub fn get(&self, district: &str, source: &str, lead: i64, metric: &str) -> Option<f64> {
        self.scores
            .iter()
            .find(|r| r.district == district && r.source == source && r.lead_hours == lead && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("scores.json"), serde_json::to_string_pretty(self)?)?;
        let mut w = csv::Writer::from_path(dir.join("scores.csv"))?;
        w.write_record(["district", "source", "lead_h", "metric", "value", "scaled", "flag"])?;
        for s in &self.scaled_pinball {
            let r = &s.row;
            w.write_record([
                r.district.clone(),
                r.source.clone(),
                r.lead_hours.to_string(),
                r.metric.clone(),
                r.value.to_string(),
                s.scaled.map(|v| v.to_string()).unwrap_or_default(),
                s.flag.clone().unwrap_or_default(),
            ])?;
        }
        for r in self.scores.iter().filter(|r| !r.metric.starts_with("pinball_")) {
            w.write_record([
                r.district.clone(),
                r.source.clone(),
                r.lead_hours.to_string(),
                r.metric.clone(),
                r.value.to_string(),
                String::new(),
                String::new(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Score `records` against `observations`, grouped by district, mode and lead. Pinball
/// losses are also scaled by the `baseline` source at lead 0.
pub fn evaluate(
    records: &[ForecastRecord],
    observations: &[ObservationRow],
    bands: &[BandSpec],
    baseline: &str,
) -> Result<ScoreReport> {
    let obs: BTreeMap<(&str, NaiveDate), u64> =
        observations.iter().map(|o| ((o.district.as_str(), o.date), o.count)).collect();
    let band_of: BTreeMap<&str, &BandSpec> = bands.iter().map(|b| (b.district.as_str(), b)).collect();

    // (district, source, lead) -> forecasts with their observed counts
    type Groups<'a> = BTreeMap<(String, String, i64), Vec<(&'a ForecastRecord, u64)>>;
    let mut groups: Groups = BTreeMap::new();
    for r in records {
        let y = obs.get(&(r.district.as_str(), r.date)).ok_or_else(|| {
            Error::Validation(format!("misaligned keys: no observation for ({}, {})", r.district, r.date))
        })?;
        if !band_of.contains_key(r.district.as_str()) {
            return Err(Error::Validation(format!("no band thresholds for district {}", r.district)));
        }
        groups.entry((r.district.clone(), r.mode.to_string(), r.lead_h)).or_default().push((r, *y));
    }

    let mut scores = Vec::new();
    let mut rel = Vec::new();
    let mut degenerate = 0;
    for ((district, source, lead), rows) in &groups {
        let spec = band_of[district.as_str()];
        let mut push = |metric: String, value: f64| {
            scores.push(ScoreRow {
                district: district.clone(),
                source: source.clone(),
                lead_hours: *lead,
                metric,
                value,
            })
        };
        for (j, &a) in EVAL_LEVELS.iter().enumerate() {
            push(format!("pinball_{a}"), mean(rows.iter().map(|(r, y)| pinball(*y as f64, r.quantiles[j] as f64, a))));
        }
        let observed: Vec<Band> = rows.iter().map(|(_, y)| Band::of_count(*y, spec)).collect();
        for band in Band::ALL {
            let bs = mean(rows.iter().zip(&observed).map(|((r, _), &o)| brier(r.probs.get(band), o == band)));
            let bs_ref =
                mean(rows.iter().zip(&observed).map(|((r, _), &o)| brier(r.reference_probs.get(band), o == band)));
            push(format!("brier_{band}"), bs);
            push(format!("brier_ref_{band}"), bs_ref);
            if let Some(s) = brier_skill(bs, bs_ref) {
                push(format!("bss_{band}"), s);
            }
        }
        let probs: Vec<_> = rows.iter().map(|(r, _)| r.probs).collect();
        if let Some(a) = auc_macro(&probs, &observed) {
            push("auc_macro".into(), a);
        }
        if let Some(a) = auc_micro(&probs, &observed) {
            push("auc_micro".into(), a);
        }
        let threshold = spec.tau_ag as f64;
        let mut tw = 0.0;
        let mut tw_ref = 0.0;
        for (r, y) in rows {
            let s = twcrps_sample(&r.grid, *y, threshold);
            let s_ref = twcrps_sample(&r.reference_grid, *y, threshold);
            if s == 0.0 && s_ref == 0.0 {
                degenerate += 1;
            }
            tw += s;
            tw_ref += s_ref;
        }
        let n = rows.len() as f64;
        push("twcrps".into(), tw / n);
        push("twcrps_ref".into(), tw_ref / n);
        if tw_ref > 0.0 {
            push("twcrps_skill".into(), 1.0 - tw / tw_ref);
        }

        let recs: Vec<ForecastRecord> = rows.iter().map(|(r, _)| (*r).clone()).collect();
        let ys: Vec<u64> = rows.iter().map(|(_, y)| *y).collect();
        let everything = vec![true; recs.len()];
        let high: Vec<bool> = recs.iter().map(|r| r.high_wind == Some(true)).collect();
        rel.push(ReliabilityGroup {
            district: district.clone(),
            source: source.clone(),
            lead_hours: *lead,
            all: reliability(&recs, &ys, &EVAL_LEVELS, &everything, "all"),
            high_wind: reliability(&recs, &ys, &EVAL_LEVELS, &high, "wind in training top quintile"),
        });
    }

    let pinball_rows: Vec<ScoreRow> = scores.iter().filter(|r| r.metric.starts_with("pinball_")).cloned().collect();
    Ok(ScoreReport {
        n_forecasts: records.len(),
        scaled_pinball: scaled_pinball_against(&pinball_rows, baseline),
        scores,
        reliability: rel,
        twcrps_degenerate: degenerate,
    })
}
