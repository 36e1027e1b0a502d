//! The three simulation scenarios: data generation, model fits and RMSE against
//! the exact mixture quantiles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::covariates::{CovariateSource, CovariateSpec};
use super::dgdgp::DgDgp;
use crate::distributions::{DiscreteGammaParams, GpParams};
use crate::error::{Error, Result};
use crate::quantile_model::{fit_quantile_set, QuantileFitConfig, QuantileGrid, QuantileModelSet, Smoothing};
use crate::scoring::rmse_quantiles;
use crate::splice::{splice_cdf, CountDistribution};
use crate::stats;
use crate::tail_model::{extract_exceedances, fit_tail, TailFitConfig, TailModel};
use crate::terms::{Covariates, Dataset, Formula, Term};

pub const SIM_LEVELS: [f64; 9] = [0.05, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 0.999, 0.9999];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub scenario: u8,
    pub xi: f64,
    pub kappa: f64,
    /// Bulk scale `lambda(z1) = exp(b0 + b1 z1)`.
    pub beta_bulk: (f64, f64),
    /// Constant tail scale for scenarios 1 and 3.
    pub sigma: f64,
    /// Scenario 2 tail scale `log sigma(z2) = b0 + b1 z2`.
    pub beta_tail: (f64, f64),
    pub phi: f64,
    pub covariates: CovariateSpec,
    pub n_per_rep: usize,
    /// Fresh covariate points per replication at which quantile errors are measured.
    pub n_eval: usize,
    pub n_reps: usize,
    pub seed: u64,
    pub levels: Vec<f64>,
    pub bulk_smoothing: f64,
    pub tail_smoothing: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: 1,
            xi: 0.0,
            kappa: 1.5,
            beta_bulk: (1.0, 2.0),
            sigma: 2.5,
            beta_tail: (-0.05, 0.85),
            phi: 0.1,
            covariates: CovariateSpec::default(),
            n_per_rep: 5000,
            n_eval: 1000,
            n_reps: 1000,
            seed: 1,
            levels: SIM_LEVELS.to_vec(),
            bulk_smoothing: 1.0,
            tail_smoothing: 1.0,
        }
    }
}

/// Replication count of the desk-scale preset.
pub const DESK_REPS: usize = 100;

impl ScenarioConfig {
    /// Scenario `scenario` with shape `xi` at desk scale.
    pub fn desk(scenario: u8, xi: f64) -> Self {
        Self { scenario, xi, n_reps: DESK_REPS, ..Default::default() }
    }
}

/// Seed of replication `rep`, decorrelated from neighbouring seeds.
pub fn rep_seed(seed: u64, rep: usize) -> u64 {
    let mut z = seed ^ (rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.scenario) {
            return Err(Error::Validation(format!("scenario must be 1, 2 or 3, got {}", self.scenario)));
        }
        if !(self.phi > 0.0 && self.phi < 0.5) {
            return Err(Error::Validation(format!("phi must lie in (0, 0.5), got {}", self.phi)));
        }
        if self.n_per_rep < 100 {
            return Err(Error::Validation(format!("n_per_rep must be at least 100, got {}", self.n_per_rep)));
        }
        if self.n_eval == 0 || self.n_reps == 0 {
            return Err(Error::Validation("n_eval and n_reps must be positive".into()));
        }
        QuantileGrid::new(self.levels.clone())?;
        if !self.levels.iter().any(|&a| (a - self.alpha_t()).abs() < 1e-12) {
            return Err(Error::Validation(format!("levels must include the transition level {}", self.alpha_t())));
        }
        GpParams::new(self.sigma, self.xi)?;
        DiscreteGammaParams::new(self.kappa, 1.0)?;
        Ok(())
    }

    pub fn alpha_t(&self) -> f64 {
        1.0 - self.phi
    }

    /// True mixture at covariates `(z1, z2)`.
    pub fn truth(&self, z1: f64, z2: f64) -> Result<DgDgp> {
        let lambda = (self.beta_bulk.0 + self.beta_bulk.1 * z1).exp();
        let sigma = if self.scenario == 2 { (self.beta_tail.0 + self.beta_tail.1 * z2).exp() } else { self.sigma };
        DgDgp::new(DiscreteGammaParams::new(self.kappa, lambda)?, GpParams::new(sigma, self.xi)?, self.phi)
    }

    pub fn bulk_formula(&self) -> Formula {
        match self.scenario {
            1 => Formula::new(vec![Term::smooth("z1")]),
            _ => Formula::new(vec![Term::smooth("z1"), Term::smooth("z2")]),
        }
    }

    pub fn tail_formula(&self) -> Formula {
        match self.scenario {
            1 => Formula::intercept_only(),
            2 => Formula::new(vec![Term::linear("z2")]),
            _ => Formula::new(vec![Term::smooth("z2")]),
        }
    }

    pub fn quantile_config(&self) -> QuantileFitConfig {
        QuantileFitConfig { smoothing: Smoothing::Fixed(self.bulk_smoothing), ..Default::default() }
    }

    pub fn tail_config(&self) -> TailFitConfig {
        TailFitConfig { smoothing: self.tail_smoothing, ..Default::default() }
    }
}

fn covariate_rows(z1: &[f64], z2: &[f64]) -> Dataset {
    Dataset {
        y: vec![0.0; z1.len()],
        columns: [("z1".to_string(), z1.to_vec()), ("z2".to_string(), z2.to_vec())].into_iter().collect(),
    }
}

/// One replication: training rows plus evaluation covariates.
#[derive(Debug, Clone)]
pub struct Replication {
    pub train: Dataset,
    pub eval: Dataset,
}

pub fn sample_replication(config: &ScenarioConfig, source: &CovariateSource, rep: usize) -> Result<Replication> {
    let mut rng = ChaCha8Rng::seed_from_u64(rep_seed(config.seed, rep));
    let (z1, z2) = source.draw(config.n_per_rep, &mut rng);
    let mut train = covariate_rows(&z1, &z2);
    for i in 0..z1.len() {
        train.y[i] = config.truth(z1[i], z2[i])?.draw(&mut rng) as f64;
    }
    let (e1, e2) = source.draw(config.n_eval, &mut rng);
    Ok(Replication { train, eval: covariate_rows(&e1, &e2) })
}

/// Training datasets for every replication.
pub fn sample_scenario(config: &ScenarioConfig) -> Result<Vec<Dataset>> {
    config.validate()?;
    let source = CovariateSource::from_spec(&config.covariates)?;
    (0..config.n_reps).map(|r| sample_replication(config, &source, r).map(|x| x.train)).collect()
}

/// Quantile estimates of both methods at evaluation rows.
pub struct Estimates {
    pub flex: Vec<Vec<f64>>,
    pub bulk_only: Vec<Vec<f64>>,
}

pub fn estimate_quantiles(
    bulk: &QuantileModelSet,
    tail: &TailModel,
    eval: &Dataset,
    levels: &[f64],
) -> Result<Estimates> {
    let preds = bulk.predict_dataset(eval)?;
    let mut flex = Vec::with_capacity(eval.len());
    let mut bulk_only = Vec::with_capacity(eval.len());
    for (i, q) in preds.iter().enumerate() {
        let x: Covariates = eval.row(i);
        let dist = splice_cdf(q, tail.alpha_t, tail, &x)?;
        let mut f = Vec::with_capacity(levels.len());
        let mut b = Vec::with_capacity(levels.len());
        for &a in levels {
            let qr = QuantileModelSet::value_at(q, a)
                .ok_or_else(|| Error::InvalidParameter(format!("level {a} is not on the bulk grid")))?;
            b.push(qr);
            f.push(if a <= tail.alpha_t + 1e-12 { qr } else { dist.quantile(a)? as f64 });
        }
        flex.push(f);
        bulk_only.push(b);
    }
    Ok(Estimates { flex, bulk_only })
}

pub fn true_quantiles(config: &ScenarioConfig, eval: &Dataset, levels: &[f64]) -> Result<Vec<Vec<f64>>> {
    let z1 = eval.column("z1")?;
    let z2 = eval.column("z2")?;
    (0..eval.len())
        .map(|i| {
            let d = config.truth(z1[i], z2[i])?;
            levels.iter().map(|&a| d.quantile(a).map(|k| k as f64)).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub rmse_flex: Vec<f64>,
    pub rmse_bulk_only: Vec<f64>,
    pub xi_hat: f64,
    /// Tail log-scale intercept.
    pub log_sigma_hat: f64,
    pub n_exceedances: usize,
}

pub fn run_replication(config: &ScenarioConfig, source: &CovariateSource, rep: usize) -> Result<RepOutcome> {
    let r = sample_replication(config, source, rep)?;
    let grid = QuantileGrid::new(config.levels.clone())?;
    let bulk = fit_quantile_set(&r.train, &config.bulk_formula(), &grid, &config.quantile_config())?;
    let exc = extract_exceedances(&r.train, &bulk, config.alpha_t())?;
    let tail = fit_tail(&exc, &config.tail_formula(), config.alpha_t(), &config.tail_config())?;
    let est = estimate_quantiles(&bulk, &tail, &r.eval, &config.levels)?;
    let truth = true_quantiles(config, &r.eval, &config.levels)?;
    Ok(RepOutcome {
        rep,
        rmse_flex: rmse_quantiles(&est.flex, &truth),
        rmse_bulk_only: rmse_quantiles(&est.bulk_only, &truth),
        xi_hat: tail.xi,
        log_sigma_hat: tail.scale_coeffs[0],
        n_exceedances: tail.n_exceedances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: f64,
    pub method: String,
    pub mean_rmse: f64,
    pub sd_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    pub outcomes: Vec<RepOutcome>,
    /// `(replication, error)` for fits that failed.
    pub failures: Vec<(usize, String)>,
    pub summary: Vec<LevelSummary>,
}

impl ScenarioReport {
    /// Replications where flex beats bulk-only at `level`.
    pub fn flex_wins(&self, level: f64) -> usize {
        let j = self.level_index(level);
        self.outcomes.iter().filter(|o| o.rmse_flex[j] < o.rmse_bulk_only[j]).count()
    }

    pub fn level_index(&self, level: f64) -> usize {
        self.config.levels.iter().position(|&a| (a - level).abs() < 1e-12).expect("level on grid")
    }

    pub fn mean_rmse(&self, level: f64, flex: bool) -> f64 {
        let j = self.level_index(level);
        let v: Vec<f64> =
            self.outcomes.iter().map(|o| if flex { o.rmse_flex[j] } else { o.rmse_bulk_only[j] }).collect();
        stats::mean(&v)
    }

    /// CSV keyed by scenario, xi, level and method.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scenario,xi,level,method,mean_rmse,sd_rmse,n_reps,n_failed\n");
        for row in &self.summary {
            s.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{},{}\n",
                self.config.scenario,
                self.config.xi,
                row.level,
                row.method,
                row.mean_rmse,
                row.sd_rmse,
                self.outcomes.len(),
                self.failures.len()
            ));
        }
        s
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport> {
    config.validate()?;
    let source = CovariateSource::from_spec(&config.covariates)?;
    let results: Vec<(usize, Result<RepOutcome>)> =
        (0..config.n_reps).into_par_iter().map(|r| (r, run_replication(config, &source, r))).collect();
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                log::warn!("replication {r} failed: {e}");
                failures.push((r, e.to_string()));
            }
        }
    }
    let mut summary = Vec::new();
    for (j, &level) in config.levels.iter().enumerate() {
        for (method, flex) in [("flex", true), ("bulk_only", false)] {
            let v: Vec<f64> =
                outcomes.iter().map(|o| if flex { o.rmse_flex[j] } else { o.rmse_bulk_only[j] }).collect();
            let (mean_rmse, sd_rmse) =
                if v.is_empty() { (f64::NAN, f64::NAN) } else { (stats::mean(&v), stats::sd(&v)) };
            summary.push(LevelSummary { level, method: method.to_string(), mean_rmse, sd_rmse });
        }
    }
    Ok(ScenarioReport { config: config.clone(), outcomes, failures, summary })
}
