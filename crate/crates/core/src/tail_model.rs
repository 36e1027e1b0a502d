//! Discrete generalized Pareto tail fitted to exceedances above a bulk quantile.
//!
//! The scale is log-linked to an additive predictor over tail covariates; the shape
//! is constant and kept in (-0.5, 1) through a scaled logistic transform.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::gp_log_survival_grad;
use crate::error::{Error, Result};
use crate::optim::{minimize, numerical_gradient, LbfgsConfig};
use crate::quantile_model::QuantileModelSet;
use crate::terms::{dot, Covariates, Dataset, Design, Formula, PenaltyBlock};

pub const XI_MIN: f64 = -0.5;
pub const XI_MAX: f64 = 1.0;
pub const SCALE_MIN: f64 = 1e-4;
pub const SCALE_MAX: f64 = 1e6;
pub const MIN_EXCEEDANCES_COVARIATE: usize = 30;
pub const MIN_EXCEEDANCES_CONSTANT: usize = 10;
const XI_INIT: f64 = 0.1;

pub fn xi_from_psi(psi: f64) -> f64 {
    XI_MIN + (XI_MAX - XI_MIN) / (1.0 + (-psi).exp())
}

pub fn psi_from_xi(xi: f64) -> f64 {
    let l = (xi - XI_MIN) / (XI_MAX - XI_MIN);
    (l / (1.0 - l)).ln()
}

fn dxi_dpsi(psi: f64) -> f64 {
    let l = 1.0 / (1.0 + (-psi).exp());
    (XI_MAX - XI_MIN) * l * (1.0 - l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub xi: f64,
    pub scale_coeffs: Vec<f64>,
    pub formula: Formula,
    pub design: Design,
    pub alpha_t: f64,
    pub n_exceedances: usize,
    pub smoothing_weights: Vec<f64>,
    /// Exceedances were all zero; the scale sits at its lower bound.
    pub boundary: bool,
    /// Too few exceedances for the requested covariates; fitted with a constant scale.
    pub fell_back: bool,
    pub loglik: f64,
    pub iterations: usize,
}

impl TailModel {
    pub fn tail_covariates(&self) -> Vec<&str> {
        self.design.covariates()
    }
}

#[derive(Debug, Clone)]
pub struct TailFitConfig {
    /// Penalty weight for each smooth tail term.
    pub smoothing: f64,
    /// Starting point `(scale coefficients, xi)`; defaults to a moment-style start.
    pub init: Option<(Vec<f64>, f64)>,
    pub optimizer: LbfgsConfig,
}

impl Default for TailFitConfig {
    fn default() -> Self {
        Self { smoothing: 1.0, init: None, optimizer: LbfgsConfig::default() }
    }
}

/// Rows with `y >= ceil(q_alpha(x))`, returned with `y` replaced by the exceedance
/// `k = y - ceil(q_alpha(x))`. An empty result is returned as such.
pub fn extract_exceedances(data: &Dataset, bulk: &QuantileModelSet, alpha_t: f64) -> Result<Dataset> {
    let j = bulk
        .grid
        .index_of(alpha_t)
        .ok_or_else(|| Error::InvalidParameter(format!("transition level {alpha_t} is not on the bulk grid")))?;
    let preds = bulk.predict_dataset(data)?;
    let q: Vec<f64> = preds.iter().map(|p| p[j].1).collect();
    Ok(exceedances_above(data, &q))
}

/// Exceedances over per-row thresholds `q` (rounded up).
pub fn exceedances_above(data: &Dataset, q: &[f64]) -> Dataset {
    let mut idx = Vec::new();
    let mut ks = Vec::new();
    for (i, (&y, &qi)) in data.y.iter().zip(q).enumerate() {
        let c = qi.ceil();
        if y >= c {
            idx.push(i);
            ks.push(y - c);
        }
    }
    let mut out = data.subset(&idx);
    out.y = ks;
    out
}

/// Penalised mean negative log-likelihood over `theta = (scale coefficients, psi)`.
pub struct TailObjective<'a> {
    pub x: &'a DMatrix<f64>,
    pub k: &'a [f64],
    pub penalties: &'a [(PenaltyBlock, f64)],
}

impl TailObjective<'_> {
    pub fn n_params(&self) -> usize {
        self.x.ncols() + 1
    }

    /// Value and gradient; `+inf` where some observation has zero probability.
    pub fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.x.ncols();
        let n = self.k.len() as f64;
        let psi = theta[p];
        let xi = xi_from_psi(psi);
        let beta = DVector::from_column_slice(&theta[..p]);
        let eta = self.x * &beta;
        let mut nll = 0.0;
        let mut d_eta = DVector::zeros(eta.len());
        let mut d_xi = 0.0;
        for (i, &k) in self.k.iter().enumerate() {
            let sigma = eta[i].exp();
            if !sigma.is_finite() || sigma <= 0.0 {
                return f64::INFINITY;
            }
            let (a, da_s, da_x) = gp_log_survival_grad(k, sigma, xi);
            let (b, db_s, db_x) = gp_log_survival_grad(k + 1.0, sigma, xi);
            if a == f64::NEG_INFINITY {
                return f64::INFINITY;
            }
            let d = b - a;
            let (lp, r) = if b == f64::NEG_INFINITY {
                (a, 0.0)
            } else {
                let m = -d.exp_m1();
                if m <= 0.0 {
                    return f64::INFINITY;
                }
                (a + m.ln(), 1.0 / (-d).exp_m1())
            };
            nll -= lp;
            d_eta[i] = -(da_s - r * (db_s - da_s));
            d_xi -= da_x - r * (db_x - da_x);
        }
        let g = self.x.tr_mul(&d_eta) / n;
        grad[..p].copy_from_slice(g.as_slice());
        grad[p] = d_xi * dxi_dpsi(psi) / n;
        let mut value = nll / n;
        for (block, w) in self.penalties {
            let m = block.matrix.nrows();
            let seg = DVector::from_column_slice(&theta[block.offset..block.offset + m]);
            let sb = &block.matrix * &seg;
            value += w * seg.dot(&sb) / n;
            for j in 0..m {
                grad[block.offset + j] += 2.0 * w * sb[j] / n;
            }
        }
        if value.is_finite() {
            value
        } else {
            f64::INFINITY
        }
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; theta.len()];
        self.value_grad(theta, &mut g)
    }
}

/// Maximum-likelihood fit of the DGP tail to exceedances (`exc.y` holds `k`).
pub fn fit_tail(exc: &Dataset, formula: &Formula, alpha_t: f64, cfg: &TailFitConfig) -> Result<TailModel> {
    let n = exc.len();
    if n < MIN_EXCEEDANCES_CONSTANT {
        return Err(Error::TooFewExceedances { found: n, required: MIN_EXCEEDANCES_CONSTANT });
    }
    if exc.y.iter().any(|&k| !(k >= 0.0) || k.fract() != 0.0) {
        return Err(Error::Validation("exceedances must be nonnegative integers".into()));
    }
    let mut formula = formula.clone();
    let mut fell_back = false;
    if !formula.terms.is_empty() && n < MIN_EXCEEDANCES_COVARIATE {
        log::warn!("{n} exceedances is below {MIN_EXCEEDANCES_COVARIATE}; falling back to a constant tail scale");
        formula = Formula::intercept_only();
        fell_back = true;
    }
    let ordered = exc.subset(&exc.canonical_order());
    let design = Design::fit(&formula, &ordered)?;
    let x = design.matrix(&ordered)?;
    let p = x.ncols();
    let penalties: Vec<(PenaltyBlock, f64)> = design.penalties().into_iter().map(|b| (b, cfg.smoothing)).collect();
    let smoothing_weights = vec![cfg.smoothing; penalties.len()];

    if ordered.y.iter().all(|&k| k == 0.0) {
        let mut coeffs = vec![0.0; p];
        coeffs[0] = SCALE_MIN.ln();
        let obj = TailObjective { x: &x, k: &ordered.y, penalties: &penalties };
        let mut theta = coeffs.clone();
        theta.push(psi_from_xi(XI_INIT));
        let loglik = -obj.value(&theta) * n as f64;
        return Ok(TailModel {
            xi: XI_INIT,
            scale_coeffs: coeffs,
            formula,
            design,
            alpha_t,
            n_exceedances: n,
            smoothing_weights,
            boundary: true,
            fell_back,
            loglik,
            iterations: 0,
        });
    }

    let mut theta0 = match &cfg.init {
        Some((b, xi)) if b.len() == p => {
            let mut t = b.clone();
            t.push(psi_from_xi(xi.clamp(XI_MIN + 1e-6, XI_MAX - 1e-6)));
            t
        }
        Some((b, _)) => {
            return Err(Error::Inconsistent(format!("initial coefficients have length {}, expected {p}", b.len())))
        }
        None => {
            let mut t = vec![0.0; p + 1];
            t[0] = (crate::stats::mean(&ordered.y) + 0.5).ln();
            t[p] = psi_from_xi(XI_INIT);
            t
        }
    };

    let obj = TailObjective { x: &x, k: &ordered.y, penalties: &penalties };
    if !obj.value(&theta0).is_finite() {
        // a negative starting shape may put some exceedance beyond the endpoint
        theta0[p] = psi_from_xi(XI_INIT);
    }
    let f0 = obj.value(&theta0);
    let mut m = minimize(|t, g| obj.value_grad(t, g), &theta0, &cfg.optimizer);
    if !m.converged {
        log::debug!(
            "analytic-gradient tail fit stalled at |g| = {:.2e}; retrying with numerical gradient",
            m.grad_norm
        );
        let retry = minimize(
            |t, g| {
                let v = obj.value(t);
                if v.is_finite() {
                    g.copy_from_slice(&numerical_gradient(|s| obj.value(s), t, 1e-7));
                }
                v
            },
            &m.x,
            &cfg.optimizer,
        );
        let mut ga = vec![0.0; p + 1];
        obj.value_grad(&retry.x, &mut ga);
        let gn = ga.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn <= cfg.optimizer.grad_tol {
            m = crate::optim::Minimum { grad_norm: gn, converged: true, ..retry };
        } else {
            return Err(Error::NonConvergence { iterations: m.iterations + retry.iterations, grad_norm: gn });
        }
    }
    debug_assert!(m.value <= f0);
    let xi = xi_from_psi(m.x[p]);
    let loglik = -obj.value(&m.x) * n as f64;
    let scale_coeffs = m.x[..p].to_vec();
    Ok(TailModel {
        xi,
        scale_coeffs,
        formula,
        design,
        alpha_t,
        n_exceedances: n,
        smoothing_weights,
        boundary: false,
        fell_back,
        loglik,
        iterations: m.iterations,
    })
}

/// Tail scale `exp(eta(x))`, clamped to `[1e-4, 1e6]`.
pub fn tail_scale(model: &TailModel, x: &Covariates) -> Result<f64> {
    let row = model.design.row(x)?;
    Ok(dot(&row, &model.scale_coeffs).exp().clamp(SCALE_MIN, SCALE_MAX))
}
