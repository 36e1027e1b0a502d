//! Sensitivity of the tail fit to the transition level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::covariates::CovariateSource;
use super::scenario::{sample_replication, true_quantiles, ScenarioConfig};
use crate::error::{Error, Result};
use crate::quantile_model::{fit_quantile_set, QuantileGrid};
use crate::scoring::rmse_quantiles;
use crate::splice::{splice_cdf, CountDistribution};
use crate::stats;
use crate::tail_model::{extract_exceedances, fit_tail};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub base: ScenarioConfig,
    /// Candidate transition levels.
    pub grid: Vec<f64>,
    pub eval_levels: Vec<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self::around(ScenarioConfig { xi: 0.3, ..Default::default() })
    }
}

impl ScanConfig {
    /// Grid `(1 - phi) +/- {0.00, ..., 0.05}` in steps of 0.01.
    pub fn around(base: ScenarioConfig) -> Self {
        let centre = base.alpha_t();
        let grid = (-5..=5).map(|i| ((centre + i as f64 * 0.01) * 1e6).round() / 1e6).collect();
        Self { base, grid, eval_levels: vec![0.95, 0.99, 0.999, 0.9999] }
    }

    pub fn validate(&self) -> Result<()> {
        QuantileGrid::new(self.grid.clone())?;
        QuantileGrid::new(self.eval_levels.clone())?;
        let mut base = self.base.clone();
        base.levels = self.grid.clone();
        if !self.grid.iter().any(|&a| (a - base.alpha_t()).abs() < 1e-9) {
            return Err(Error::Validation("scan grid must contain 1 - phi".into()));
        }
        base.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub alpha_t: f64,
    /// Mean over replications of RMSE / mean true quantile, per evaluation level.
    pub scaled_rmse: Vec<f64>,
    pub scaled_rmse_sd: Vec<f64>,
    pub xi_mean: f64,
    pub xi_sd: f64,
    pub log_sigma_mean: f64,
    pub log_sigma_sd: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

/// One replication across the whole grid; `None` marks a failed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRep {
    pub rep: usize,
    pub xi_hat: Vec<Option<f64>>,
    pub log_sigma_hat: Vec<Option<f64>>,
    pub scaled_rmse: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub config: ScanConfig,
    pub cells: Vec<ScanCell>,
    pub reps: Vec<ScanRep>,
    /// Failures as `(replication, transition level, error)`.
    pub failures: Vec<(usize, f64, String)>,
}

fn scan_replication(config: &ScanConfig, source: &CovariateSource, rep: usize) -> (ScanRep, Vec<(usize, f64, String)>) {
    let n = config.grid.len();
    let mut out = ScanRep { rep, xi_hat: vec![None; n], log_sigma_hat: vec![None; n], scaled_rmse: vec![None; n] };
    let mut failures = Vec::new();
    let base = &config.base;
    let prepared = (|| {
        let r = sample_replication(base, source, rep)?;
        let grid = QuantileGrid::new(config.grid.clone())?;
        let bulk = fit_quantile_set(&r.train, &base.bulk_formula(), &grid, &base.quantile_config())?;
        let truth = true_quantiles(base, &r.eval, &config.eval_levels)?;
        Ok::<_, Error>((r, bulk, truth))
    })();
    let (r, bulk, truth) = match prepared {
        Ok(v) => v,
        Err(e) => {
            for &a in &config.grid {
                failures.push((rep, a, e.to_string()));
            }
            return (out, failures);
        }
    };
    let preds = match bulk.predict_dataset(&r.eval) {
        Ok(p) => p,
        Err(e) => {
            failures.push((rep, f64::NAN, e.to_string()));
            return (out, failures);
        }
    };
    let truth_mean: Vec<f64> =
        (0..config.eval_levels.len()).map(|j| stats::mean(&truth.iter().map(|t| t[j]).collect::<Vec<_>>())).collect();
    for (g, &alpha_t) in config.grid.iter().enumerate() {
        let cell = (|| {
            let exc = extract_exceedances(&r.train, &bulk, alpha_t)?;
            let tail = fit_tail(&exc, &base.tail_formula(), alpha_t, &base.tail_config())?;
            let mut est = Vec::with_capacity(r.eval.len());
            for (i, q) in preds.iter().enumerate() {
                let d = splice_cdf(q, alpha_t, &tail, &r.eval.row(i))?;
                est.push(
                    config.eval_levels.iter().map(|&a| d.quantile(a).map(|k| k as f64)).collect::<Result<Vec<_>>>()?,
                );
            }
            let rmse = rmse_quantiles(&est, &truth);
            let scaled: Vec<f64> = rmse.iter().zip(&truth_mean).map(|(e, m)| e / m).collect();
            Ok::<_, Error>((tail.xi, tail.scale_coeffs[0], scaled))
        })();
        match cell {
            Ok((xi, ls, scaled)) => {
                out.xi_hat[g] = Some(xi);
                out.log_sigma_hat[g] = Some(ls);
                out.scaled_rmse[g] = Some(scaled);
            }
            Err(e) => failures.push((rep, alpha_t, e.to_string())),
        }
    }
    (out, failures)
}

pub fn threshold_scan(config: &ScanConfig) -> Result<ScanReport> {
    config.validate()?;
    let source = CovariateSource::from_spec(&config.base.covariates)?;
    let results: Vec<_> =
        (0..config.base.n_reps).into_par_iter().map(|r| scan_replication(config, &source, r)).collect();
    let mut reps = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in results {
        reps.push(r);
        failures.extend(f);
    }
    let m = config.eval_levels.len();
    let cells = config
        .grid
        .iter()
        .enumerate()
        .map(|(g, &alpha_t)| {
            let xi: Vec<f64> = reps.iter().filter_map(|r| r.xi_hat[g]).collect();
            let ls: Vec<f64> = reps.iter().filter_map(|r| r.log_sigma_hat[g]).collect();
            let rm: Vec<&Vec<f64>> = reps.iter().filter_map(|r| r.scaled_rmse[g].as_ref()).collect();
            let col = |j: usize| rm.iter().map(|v| v[j]).collect::<Vec<f64>>();
            let summarise =
                |v: &[f64]| if v.is_empty() { (f64::NAN, f64::NAN) } else { (stats::mean(v), stats::sd(v)) };
            let (xi_mean, xi_sd) = summarise(&xi);
            let (log_sigma_mean, log_sigma_sd) = summarise(&ls);
            ScanCell {
                alpha_t,
                scaled_rmse: (0..m).map(|j| summarise(&col(j)).0).collect(),
                scaled_rmse_sd: (0..m).map(|j| summarise(&col(j)).1).collect(),
                xi_mean,
                xi_sd,
                log_sigma_mean,
                log_sigma_sd,
                n_ok: xi.len(),
                n_failed: reps.len() - xi.len(),
            }
        })
        .collect();
    Ok(ScanReport { config: config.clone(), cells, reps, failures })
}

impl ScanReport {
    pub fn cell(&self, alpha_t: f64) -> Option<&ScanCell> {
        self.cells.iter().find(|c| (c.alpha_t - alpha_t).abs() < 1e-9)
    }

    /// Trend of shape-estimate dispersion over the upper half of the grid: Spearman
    /// correlation between the transition level and `|xi_hat - median at that level|`,
    /// pooled over replications, with its one-sided p-value.
    pub fn xi_spread_trend(&self) -> (f64, f64) {
        let centre = self.config.base.alpha_t();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (g, &a) in self.config.grid.iter().enumerate() {
            if a < centre - 1e-9 {
                continue;
            }
            let xi: Vec<f64> = self.reps.iter().filter_map(|r| r.xi_hat[g]).collect();
            if xi.is_empty() {
                continue;
            }
            let med = stats::median(&xi);
            for v in xi {
                x.push(a);
                y.push((v - med).abs());
            }
        }
        stats::spearman_trend(&x, &y)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "alpha_t,eval_level,scaled_rmse,scaled_rmse_sd,xi_mean,xi_sd,log_sigma_mean,log_sigma_sd,n_ok,n_failed\n",
        );
        for c in &self.cells {
            for (j, lvl) in self.config.eval_levels.iter().enumerate() {
                s.push_str(&format!(
                    "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                    c.alpha_t,
                    lvl,
                    c.scaled_rmse[j],
                    c.scaled_rmse_sd[j],
                    c.xi_mean,
                    c.xi_sd,
                    c.log_sigma_mean,
                    c.log_sigma_sd,
                    c.n_ok,
                    c.n_failed
                ));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid() {
        let c = ScanConfig::default();
        assert_eq!(c.grid.len(), 11);
        assert_eq!(c.grid[0], 0.85);
        assert_eq!(c.grid[5], 0.9);
        assert_eq!(c.grid[10], 0.95);
        assert!(c.validate().is_ok());
    }
}
