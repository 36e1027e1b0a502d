//! Pipeline configuration file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::LbfgsConfig;
use crate::quantile_model::{Bandwidth, QuantileFitConfig, Smoothing, DEFAULT_LAMBDA};
use crate::spline::SplineSpec;
use crate::tail_model::TailFitConfig;
use crate::terms::{Formula, Term};

/// Parse compact term strings: `ws10_max` is linear, `s(ws10_max)` or `s(ws10_max, 6)` smooth.
pub fn parse_formula(terms: &[String]) -> Result<Formula> {
    let parsed = terms
        .iter()
        .map(|t| {
            let t = t.trim();
            if let Some(inner) = t.strip_prefix("s(").and_then(|r| r.strip_suffix(')')) {
                let mut parts = inner.split(',').map(str::trim);
                let name = parts.next().filter(|n| !n.is_empty());
                let name = name.ok_or_else(|| Error::Validation(format!("empty smooth term `{t}`")))?;
                let mut spec = SplineSpec::new(name);
                if let Some(k) = parts.next() {
                    let k = k.parse().map_err(|_| Error::Validation(format!("bad basis dimension in `{t}`")))?;
                    spec = spec.with_basis_dim(k);
                }
                if parts.next().is_some() {
                    return Err(Error::Validation(format!("too many arguments in `{t}`")));
                }
                spec.validate()?;
                Ok(Term::Smooth(spec))
            } else if !t.is_empty() && t.chars().all(|c| c.is_alphanumeric() || c == '_') {
                Ok(Term::linear(t))
            } else {
                Err(Error::Validation(format!("cannot parse term `{t}`")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Formula::new(parsed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub bulk_terms: Vec<String>,
    pub tail_terms: Vec<String>,
    pub alpha_t: f64,
    /// Candidates for `select`.
    pub alpha_candidates: Vec<f64>,
    pub tail_candidates: Vec<Vec<String>>,
    /// Covariate whose training 80th percentile defines the high-wind reliability subset.
    pub wind_covariate: String,
    /// Pinball bandwidth; `None` chooses it by cross-validation.
    pub bandwidth: Option<f64>,
    /// Bulk smoothing weight; `None` chooses it by cross-validation.
    pub bulk_smoothing: Option<f64>,
    pub tail_smoothing: f64,
    /// Refuse forecasts with missing ensemble members.
    pub strict_members: bool,
    /// Iteration cap for every optimizer run.
    pub max_iterations: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bulk_terms: vec!["s(ws10_max)".into(), "tp_q90".into()],
            tail_terms: vec!["ws10_max".into()],
            alpha_t: 0.9,
            alpha_candidates: vec![0.75, 0.8, 0.9, 0.95],
            tail_candidates: vec![vec![], vec!["ws10_max".into()]],
            wind_covariate: "ws10_max".into(),
            bandwidth: Some(DEFAULT_LAMBDA),
            bulk_smoothing: Some(1.0),
            tail_smoothing: 1.0,
            strict_members: true,
            max_iterations: LbfgsConfig::default().max_iter,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let level_ok = |a: f64| a > 0.5 && a < 1.0;
        if !level_ok(self.alpha_t) || !self.alpha_candidates.iter().all(|&a| level_ok(a)) {
            return Err(Error::Validation("transition levels must lie in (0.5, 1)".into()));
        }
        if self.alpha_candidates.is_empty() || self.tail_candidates.is_empty() {
            return Err(Error::Validation("selection needs at least one candidate of each kind".into()));
        }
        if self.bandwidth.is_some_and(|l| !(l > 0.0)) {
            return Err(Error::Validation("bandwidth must be positive".into()));
        }
        if self.bulk_smoothing.is_some_and(|w| !(w >= 0.0)) || !(self.tail_smoothing >= 0.0) {
            return Err(Error::Validation("smoothing weights must be nonnegative".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Validation("max_iterations must be positive".into()));
        }
        self.bulk_formula()?;
        self.tail_formula()?;
        for t in &self.tail_candidates {
            parse_formula(t)?;
        }
        Ok(())
    }

    pub fn bulk_formula(&self) -> Result<Formula> {
        parse_formula(&self.bulk_terms)
    }

    pub fn tail_formula(&self) -> Result<Formula> {
        parse_formula(&self.tail_terms)
    }

    pub fn quantile_config(&self) -> QuantileFitConfig {
        QuantileFitConfig {
            bandwidth: self.bandwidth.map_or(Bandwidth::CrossValidated, Bandwidth::Fixed),
            smoothing: self.bulk_smoothing.map_or(Smoothing::CrossValidated, Smoothing::Fixed),
            optimizer: self.optimizer(),
        }
    }

    pub fn tail_config(&self) -> TailFitConfig {
        TailFitConfig { smoothing: self.tail_smoothing, init: None, optimizer: self.optimizer() }
    }

    fn optimizer(&self) -> LbfgsConfig {
        LbfgsConfig { max_iter: self.max_iterations, ..Default::default() }
    }

    /// Every covariate named by the bulk, tail and candidate formulas plus the wind covariate.
    pub fn covariates(&self) -> Result<Vec<String>> {
        let mut names: Vec<String> = vec![self.wind_covariate.clone()];
        let mut formulas = vec![self.bulk_formula()?, self.tail_formula()?];
        for t in &self.tail_candidates {
            formulas.push(parse_formula(t)?);
        }
        for f in &formulas {
            names.extend(f.covariates().into_iter().map(str::to_string));
        }
        names.sort();
        names.dedup();
        Ok(names)
    }
}
