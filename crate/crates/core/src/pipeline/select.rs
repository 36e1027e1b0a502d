//! Choice of transition level and tail covariates by out-of-fold band skill.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banding::{band_probs, Band, BandProbabilities, BandSpec};
use crate::error::{Error, Result};
use crate::pipeline::bundle::quantile_grid;
use crate::pipeline::config::{parse_formula, PipelineConfig};
use crate::pipeline::data::TrainingData;
use crate::pipeline::folds::FoldPlan;
use crate::quantile_model::fit_quantile_set;
use crate::scoring::{auc, brier, brier_skill};
use crate::splice::FlexModel;
use crate::tail_model::{extract_exceedances, fit_tail};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub alpha_t: f64,
    pub tail_terms: Vec<String>,
    /// Pooled out-of-fold Brier score per band (G, A, R).
    pub brier: Option<[f64; 3]>,
    /// Skill against the training-fold band frequencies.
    pub brier_skill: Option<[Option<f64>; 3]>,
    pub auc: Option<[Option<f64>; 3]>,
    /// Mean Brier skill over bands where it is defined.
    pub bs_improvement: Option<f64>,
    /// Mean `auc - 0.5` over bands where it is defined.
    pub auc_improvement: Option<f64>,
    pub disqualified: Option<String>,
}

impl CandidateScore {
    pub fn new(alpha_t: f64, tail_terms: Vec<String>) -> Self {
        Self {
            alpha_t,
            tail_terms,
            brier: None,
            brier_skill: None,
            auc: None,
            bs_improvement: None,
            auc_improvement: None,
            disqualified: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionLedger {
    pub folds: Vec<String>,
    pub candidates: Vec<CandidateScore>,
    pub bs_pick: usize,
    pub auc_pick: usize,
    pub chosen: usize,
}

impl SelectionLedger {
    pub fn winner(&self) -> &CandidateScore {
        &self.candidates[self.chosen]
    }
}

fn argmax(scores: &[CandidateScore], key: impl Fn(&CandidateScore) -> Option<f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in scores.iter().enumerate() {
        if c.disqualified.is_some() {
            continue;
        }
        if let Some(v) = key(c) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// `(bs_pick, auc_pick, chosen)`: Brier skill decides, AUC only confirms. Ties go to the
/// earlier candidate.
pub fn choose(scores: &[CandidateScore]) -> Result<(usize, usize, usize)> {
    let bs = argmax(scores, |c| c.bs_improvement)
        .or_else(|| scores.iter().position(|c| c.disqualified.is_none()))
        .ok_or_else(|| Error::Validation("every selection candidate was disqualified".into()))?;
    let au = argmax(scores, |c| c.auc_improvement).unwrap_or(bs);
    Ok((bs, au, bs))
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Out-of-fold band probabilities of every candidate for one fold, or the fitting error.
type FoldOutcome = Vec<std::result::Result<Vec<(usize, BandProbabilities)>, String>>;

fn fold_outcome(
    train: &TrainingData,
    plan: &FoldPlan,
    k: usize,
    bands: &BandSpec,
    cfg: &PipelineConfig,
    candidates: &[(f64, Vec<String>)],
) -> Result<(FoldOutcome, Vec<(usize, BandProbabilities)>)> {
    let (tr, ev) = plan.split(&train.dates, k);
    let fit_data = train.data.subset(&tr);
    let bulk_formula = cfg.bulk_formula()?;
    let tail_cfg = cfg.tail_config();

    // training-fold band frequencies as the reference forecast
    let mut freq = [0.0; 3];
    for &y in &fit_data.y {
        freq[Band::of_count(y as u64, bands) as usize] += 1.0 / fit_data.len() as f64;
    }
    let clim = BandProbabilities { green: freq[0], amber: freq[1], red: freq[2] };
    let reference = ev.iter().map(|&i| (i, clim)).collect();

    let mut outcome: FoldOutcome = Vec::with_capacity(candidates.len());
    let mut bulk_cache: Vec<(f64, std::result::Result<crate::quantile_model::QuantileModelSet, String>)> = vec![];
    for (alpha_t, tail_terms) in candidates {
        let bulk = match bulk_cache.iter().find(|(a, _)| a == alpha_t) {
            Some((_, b)) => b.clone(),
            None => {
                let b = quantile_grid(*alpha_t)
                    .and_then(|g| fit_quantile_set(&fit_data, &bulk_formula, &g, &cfg.quantile_config()))
                    .map_err(|e| e.to_string());
                bulk_cache.push((*alpha_t, b.clone()));
                b
            }
        };
        let run = || -> std::result::Result<Vec<(usize, BandProbabilities)>, String> {
            let bulk = bulk?;
            let formula = parse_formula(tail_terms).map_err(|e| e.to_string())?;
            let exc = extract_exceedances(&fit_data, &bulk, *alpha_t).map_err(|e| e.to_string())?;
            let tail = fit_tail(&exc, &formula, *alpha_t, &tail_cfg).map_err(|e| e.to_string())?;
            let model = FlexModel { bulk, tail: Some(tail) };
            ev.iter()
                .map(|&i| {
                    let d = model.predict(&train.data.row(i)).map_err(|e| e.to_string())?;
                    Ok((i, band_probs(&d, bands)))
                })
                .collect()
        };
        outcome.push(run().map_err(|e| format!("fold {}: {e}", plan.folds[k].label)));
    }
    Ok((outcome, reference))
}

/// Score every `(alpha_t, tail covariates)` pair by leave-one-year-out band forecasts.
pub fn select_model(
    train: &TrainingData,
    plan: &FoldPlan,
    bands: &BandSpec,
    cfg: &PipelineConfig,
) -> Result<SelectionLedger> {
    if plan.len() < 2 {
        return Err(Error::Validation("selection needs at least two regulatory years".into()));
    }
    let candidates: Vec<(f64, Vec<String>)> =
        cfg.alpha_candidates.iter().flat_map(|&a| cfg.tail_candidates.iter().map(move |t| (a, t.clone()))).collect();

    let per_fold = (0..plan.len())
        .into_par_iter()
        .map(|k| fold_outcome(train, plan, k, bands, cfg, &candidates))
        .collect::<Result<Vec<_>>>()?;

    let observed: Vec<Band> = train.data.y.iter().map(|&y| Band::of_count(y as u64, bands)).collect();
    let pooled = |pairs: &[(usize, BandProbabilities)]| -> ([f64; 3], [Option<f64>; 3]) {
        let mut bs = [0.0; 3];
        let mut au = [None; 3];
        for (b, band) in Band::ALL.iter().enumerate() {
            let p: Vec<f64> = pairs.iter().map(|(_, pr)| pr.get(*band)).collect();
            let o: Vec<bool> = pairs.iter().map(|(i, _)| observed[*i] == *band).collect();
            bs[b] = p.iter().zip(&o).map(|(&p, &o)| brier(p, o)).sum::<f64>() / p.len() as f64;
            au[b] = auc(&p, &o);
        }
        (bs, au)
    };
    let reference: Vec<(usize, BandProbabilities)> = per_fold.iter().flat_map(|(_, r)| r.clone()).collect();
    let (ref_bs, _) = pooled(&reference);

    let mut scores = Vec::with_capacity(candidates.len());
    for (c, (alpha_t, terms)) in candidates.iter().enumerate() {
        let mut score = CandidateScore::new(*alpha_t, terms.clone());
        let mut pairs = Vec::new();
        for (outcome, _) in &per_fold {
            match &outcome[c] {
                Ok(p) => pairs.extend(p.iter().copied()),
                Err(e) => {
                    score.disqualified = Some(e.clone());
                    break;
                }
            }
        }
        if score.disqualified.is_none() {
            let (bs, au) = pooled(&pairs);
            let skill: [Option<f64>; 3] = std::array::from_fn(|b| brier_skill(bs[b], ref_bs[b]));
            score.bs_improvement = mean_defined(&skill);
            score.auc_improvement = mean_defined(&au.map(|a| a.map(|v| v - 0.5)));
            score.brier = Some(bs);
            score.brier_skill = Some(skill);
            score.auc = Some(au);
        } else {
            log::warn!("candidate alpha_t={alpha_t} tail={terms:?} disqualified");
        }
        scores.push(score);
    }
    let (bs_pick, auc_pick, chosen) = choose(&scores)?;
    Ok(SelectionLedger {
        folds: plan.folds.iter().map(|f| f.label.clone()).collect(),
        candidates: scores,
        bs_pick,
        auc_pick,
        chosen,
    })
}
