//! Additive quantile regression on a grid of probability levels.
//!
//! Each level minimises the smoothed pinball loss plus roughness penalties on the
//! smooth terms. Counts are fitted as they are, without jittering. Predictions are
//! floored at zero and rearranged so that quantiles never cross.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{minimize, newton_minimize, LbfgsConfig};
use crate::stats;
use crate::terms::{Covariates, Dataset, Design, Formula, PenaltyBlock};

pub const MIN_ROWS: usize = 50;
pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const LAMBDA_CANDIDATES: [f64; 4] = [0.01, 0.05, 0.1, 0.3];
pub const SMOOTHING_GRID: [f64; 6] = [1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];
/// Lower bound on the loss scale; count data cannot resolve finer than this.
pub const SIGMA_FLOOR: f64 = 0.5;
const CV_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuantileGrid {
    levels: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Empty("quantile grid"));
        }
        if levels.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::InvalidParameter(format!("levels must lie in (0, 1): {levels:?}")));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(format!("levels must be strictly increasing: {levels:?}")));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn contains(&self, level: f64) -> bool {
        self.index_of(level).is_some()
    }

    pub fn index_of(&self, level: f64) -> Option<usize> {
        self.levels.iter().position(|&a| (a - level).abs() < 1e-12)
    }
}

/// Smoothed pinball loss `(a - 1) u / s + l * log(1 + exp(u / (l s)))`.
pub fn smoothed_pinball(u: f64, alpha: f64, lambda: f64, sigma: f64) -> f64 {
    let t = u / (lambda * sigma);
    (alpha - 1.0) * u / sigma + lambda * softplus(t)
}

/// Derivative of [`smoothed_pinball`] with respect to the residual.
pub fn smoothed_pinball_deriv(u: f64, alpha: f64, lambda: f64, sigma: f64) -> f64 {
    let t = u / (lambda * sigma);
    (alpha - 1.0 + logistic(t)) / sigma
}

/// Plain pinball loss of residual `u = y - q`.
pub fn pinball_loss(u: f64, alpha: f64) -> f64 {
    if u >= 0.0 {
        alpha * u
    } else {
        (alpha - 1.0) * u
    }
}

#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// One weight shared by every smooth term.
    Fixed(f64),
    /// One weight per smooth term, in formula order.
    PerTerm(Vec<f64>),
    /// Shared weight chosen from [`SMOOTHING_GRID`] by 5-fold pinball cross-validation.
    CrossValidated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Chosen from [`LAMBDA_CANDIDATES`] by 5-fold raw pinball cross-validation.
    CrossValidated,
}

#[derive(Debug, Clone)]
pub struct QuantileFitConfig {
    pub bandwidth: Bandwidth,
    pub smoothing: Smoothing,
    pub optimizer: LbfgsConfig,
}

impl Default for QuantileFitConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Fixed(DEFAULT_LAMBDA),
            smoothing: Smoothing::Fixed(1.0),
            optimizer: LbfgsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFit {
    pub level: f64,
    /// Intercept, then linear coefficients, then centred smooth coefficients.
    pub coefficients: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileModelSet {
    pub formula: Formula,
    pub design: Design,
    pub grid: QuantileGrid,
    pub fits: Vec<LevelFit>,
    /// Weight per smooth term.
    pub smoothing_weights: Vec<f64>,
    pub lambda: f64,
    pub sigma_hat: f64,
}

/// Design matrix, response, weighted penalties and level of one fitted level.
pub type LevelObjective = (DMatrix<f64>, DVector<f64>, Vec<(PenaltyBlock, f64)>, f64);

/// Penalised smoothed-pinball objective for one level, averaged over rows.
pub struct PinballObjective<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a DVector<f64>,
    pub alpha: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub penalties: &'a [(PenaltyBlock, f64)],
}

impl PinballObjective<'_> {
    pub fn value_grad(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.y.len() as f64;
        let b = DVector::from_column_slice(beta);
        let resid = self.y - self.x * &b;
        let mut value = 0.0;
        let mut psi = DVector::zeros(resid.len());
        for (i, &u) in resid.iter().enumerate() {
            value += smoothed_pinball(u, self.alpha, self.lambda, self.sigma);
            psi[i] = smoothed_pinball_deriv(u, self.alpha, self.lambda, self.sigma);
        }
        value /= n;
        let g = self.x.tr_mul(&psi) / (-n);
        grad.copy_from_slice(g.as_slice());
        let (pv, _) = add_penalty(beta, self.penalties, n, Some(grad));
        value + pv
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        let mut g = vec![0.0; beta.len()];
        self.value_grad(beta, &mut g)
    }

    /// Hessian `(1/n) X' diag(rho'') X + (2/n) sum w S`.
    pub fn hessian(&self, beta: &[f64], h: &mut DMatrix<f64>) {
        let n = self.y.len() as f64;
        let b = DVector::from_column_slice(beta);
        let resid = self.y - self.x * &b;
        let scale = self.lambda * self.sigma;
        let mut xw = self.x.clone();
        for (i, &u) in resid.iter().enumerate() {
            let s = logistic(u / scale);
            let w = (s * (1.0 - s) / (scale * self.sigma) / n).sqrt();
            xw.row_mut(i).scale_mut(w);
        }
        h.copy_from(&xw.tr_mul(&xw));
        for (block, w) in self.penalties {
            let k = block.matrix.nrows();
            let mut view = h.view_mut((block.offset, block.offset), (k, k));
            view += &block.matrix * (2.0 * w / n);
        }
    }
}

/// Adds `(1/n) sum w b' S b` and, optionally, its gradient.
fn add_penalty(beta: &[f64], penalties: &[(PenaltyBlock, f64)], n: f64, grad: Option<&mut [f64]>) -> (f64, ()) {
    let mut value = 0.0;
    let mut grad = grad;
    for (block, w) in penalties {
        let k = block.matrix.nrows();
        let seg = DVector::from_column_slice(&beta[block.offset..block.offset + k]);
        let sb = &block.matrix * &seg;
        value += w * seg.dot(&sb) / n;
        if let Some(g) = grad.as_deref_mut() {
            for j in 0..k {
                g[block.offset + j] += 2.0 * w * sb[j] / n;
            }
        }
    }
    (value, ())
}

struct Prepared {
    design: Design,
    x: DMatrix<f64>,
    y: DVector<f64>,
    penalties: Vec<PenaltyBlock>,
}

fn prepare(data: &Dataset, formula: &Formula) -> Result<Prepared> {
    if data.len() < MIN_ROWS {
        return Err(Error::Validation(format!(
            "quantile regression needs at least {MIN_ROWS} rows, got {}",
            data.len()
        )));
    }
    if data.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response"));
    }
    let design = Design::fit(formula, data)?;
    let x = design.matrix(data)?;
    let y = DVector::from_column_slice(&data.y);
    let penalties = design.penalties();
    Ok(Prepared { design, x, y, penalties })
}

fn weighted(penalties: &[PenaltyBlock], weights: &[f64]) -> Vec<(PenaltyBlock, f64)> {
    penalties.iter().cloned().zip(weights.iter().copied()).collect()
}

/// Penalised least squares; also checks the design for rank deficiency.
fn mean_fit(x: &DMatrix<f64>, y: &DVector<f64>, pens: &[(PenaltyBlock, f64)]) -> Result<DVector<f64>> {
    let p = x.ncols();
    let mut a = x.tr_mul(x);
    for (block, w) in pens {
        let k = block.matrix.nrows();
        let mut view = a.view_mut((block.offset, block.offset), (k, k));
        view += &block.matrix * *w;
    }
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= 1e-11 * max {
        return Err(Error::DegradedRank(format!("design is rank deficient (eigenvalue ratio {:.2e})", min / max)));
    }
    let rhs = x.tr_mul(y);
    let chol = a.cholesky().ok_or_else(|| Error::DegradedRank("normal equations not positive definite".into()))?;
    let beta = chol.solve(&rhs);
    debug_assert_eq!(beta.len(), p);
    Ok(beta)
}

fn sigma_from_residuals(resid: &[f64]) -> f64 {
    let abs: Vec<f64> = resid.iter().map(|r| r.abs()).collect();
    (1.4826 * stats::median(&abs)).max(SIGMA_FLOOR)
}

#[allow(clippy::too_many_arguments)]
fn fit_level(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: f64,
    lambda: f64,
    sigma: f64,
    pens: &[(PenaltyBlock, f64)],
    init: &DVector<f64>,
    opt: &LbfgsConfig,
) -> Result<LevelFit> {
    let obj = PinballObjective { x, y, alpha, lambda, sigma, penalties: pens };
    let mut start = init.as_slice().to_vec();
    let resid: Vec<f64> = (y - x * init).iter().copied().collect();
    start[0] += stats::quantile(&resid, alpha);
    let m = newton_minimize(
        |b, g, h| {
            let v = obj.value_grad(b, g);
            if let Some(h) = h {
                obj.hessian(b, h);
            }
            v
        },
        &start,
        opt,
    );
    let m = if m.converged { m } else { minimize(|b, g| obj.value_grad(b, g), &m.x, opt) };
    if !m.converged {
        return Err(Error::NonConvergence { iterations: m.iterations, grad_norm: m.grad_norm });
    }
    Ok(LevelFit { level: alpha, coefficients: m.x, grad_norm: m.grad_norm, iterations: m.iterations })
}

fn fold_ids(n: usize) -> Vec<usize> {
    (0..n).map(|i| i % CV_FOLDS).collect()
}

fn rows_of(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    m.select_rows(idx)
}

/// Out-of-fold raw pinball loss summed over levels.
fn cv_score(prep: &Prepared, levels: &[f64], lambda: f64, weights: &[f64], opt: &LbfgsConfig) -> Result<f64> {
    let folds = fold_ids(prep.y.len());
    let pens = weighted(&prep.penalties, weights);
    let mut total = 0.0;
    for f in 0..CV_FOLDS {
        let train: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == f).collect();
        let xt = rows_of(&prep.x, &train);
        let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| prep.y[i]));
        let xv = rows_of(&prep.x, &test);
        let beta0 = mean_fit(&xt, &yt, &pens)?;
        let resid: Vec<f64> = (&yt - &xt * &beta0).iter().copied().collect();
        let sigma = sigma_from_residuals(&resid);
        for &a in levels {
            let fit = fit_level(&xt, &yt, a, lambda, sigma, &pens, &beta0, opt)?;
            let pred = &xv * DVector::from_column_slice(&fit.coefficients);
            for (j, &i) in test.iter().enumerate() {
                total += pinball_loss(prep.y[i] - pred[j].max(0.0), a);
            }
        }
    }
    Ok(total)
}

/// Fit every level of `grid`.
pub fn fit_quantile_set(
    data: &Dataset,
    formula: &Formula,
    grid: &QuantileGrid,
    cfg: &QuantileFitConfig,
) -> Result<QuantileModelSet> {
    let ordered = data.subset(&data.canonical_order());
    let prep = prepare(&ordered, formula)?;
    let n_smooth = prep.penalties.len();

    let smoothing_weights = match &cfg.smoothing {
        Smoothing::Fixed(w) => vec![*w; n_smooth],
        Smoothing::PerTerm(ws) => {
            if ws.len() != n_smooth {
                return Err(Error::Inconsistent(format!("{} smoothing weights for {n_smooth} smooth terms", ws.len())));
            }
            ws.clone()
        }
        Smoothing::CrossValidated if n_smooth == 0 => vec![],
        Smoothing::CrossValidated => {
            let lambda = match cfg.bandwidth {
                Bandwidth::Fixed(l) => l,
                Bandwidth::CrossValidated => DEFAULT_LAMBDA,
            };
            let mut best = (f64::INFINITY, SMOOTHING_GRID[0]);
            for &w in &SMOOTHING_GRID {
                let score = cv_score(&prep, grid.levels(), lambda, &vec![w; n_smooth], &cfg.optimizer)?;
                if score < best.0 {
                    best = (score, w);
                }
            }
            vec![best.1; n_smooth]
        }
    };
    if smoothing_weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter(format!("smoothing weights {smoothing_weights:?}")));
    }

    let lambda = match cfg.bandwidth {
        Bandwidth::Fixed(l) => {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {l}")));
            }
            l
        }
        Bandwidth::CrossValidated => {
            let mut best = (f64::INFINITY, DEFAULT_LAMBDA);
            for &l in &LAMBDA_CANDIDATES {
                let score = cv_score(&prep, grid.levels(), l, &smoothing_weights, &cfg.optimizer)?;
                if score < best.0 {
                    best = (score, l);
                }
            }
            best.1
        }
    };

    let pens = weighted(&prep.penalties, &smoothing_weights);
    let beta0 = mean_fit(&prep.x, &prep.y, &pens)?;
    let resid: Vec<f64> = (&prep.y - &prep.x * &beta0).iter().copied().collect();
    let sigma_hat = sigma_from_residuals(&resid);

    let fits = grid
        .levels()
        .iter()
        .map(|&a| fit_level(&prep.x, &prep.y, a, lambda, sigma_hat, &pens, &beta0, &cfg.optimizer))
        .collect::<Result<Vec<_>>>()?;

    Ok(QuantileModelSet {
        formula: formula.clone(),
        design: prep.design,
        grid: grid.clone(),
        fits,
        smoothing_weights,
        lambda,
        sigma_hat,
    })
}

/// Predicted quantiles as `(level, value)` pairs, ascending in both.
pub type LevelValues = Vec<(f64, f64)>;

/// Floor at zero and rearrange ascending across levels.
pub fn rearrange(levels: &[f64], raw: &[f64]) -> LevelValues {
    let mut v: Vec<f64> = raw.iter().map(|q| q.max(0.0)).collect();
    v.sort_by(f64::total_cmp);
    levels.iter().copied().zip(v).collect()
}

impl QuantileModelSet {
    pub fn levels(&self) -> &[f64] {
        self.grid.levels()
    }

    /// Linear predictors per level before flooring and rearrangement.
    pub fn predict_raw(&self, x: &Covariates) -> Result<Vec<f64>> {
        let row = self.design.row(x)?;
        Ok(self.fits.iter().map(|f| crate::terms::dot(&row, &f.coefficients)).collect())
    }

    pub fn predict_quantiles(&self, x: &Covariates) -> Result<LevelValues> {
        Ok(rearrange(self.levels(), &self.predict_raw(x)?))
    }

    /// Batch prediction for every row of `data`.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<LevelValues>> {
        let x = self.design.matrix(data)?;
        let coef = DMatrix::from_fn(self.design.n_coef(), self.fits.len(), |r, c| self.fits[c].coefficients[r]);
        let eta = x * coef;
        Ok((0..data.len())
            .map(|i| {
                let raw: Vec<f64> = eta.row(i).iter().copied().collect();
                rearrange(self.levels(), &raw)
            })
            .collect())
    }

    /// Value predicted at a specific grid level.
    pub fn value_at(q: &LevelValues, level: f64) -> Option<f64> {
        q.iter().find(|(a, _)| (a - level).abs() < 1e-12).map(|&(_, v)| v)
    }

    /// Objective used for level `i`, evaluated on `data` (for diagnostics and tests).
    pub fn objective_for(&self, data: &Dataset, i: usize) -> Result<LevelObjective> {
        let ordered = data.subset(&data.canonical_order());
        let x = self.design.matrix(&ordered)?;
        let y = DVector::from_column_slice(&ordered.y);
        let pens = weighted(&self.design.penalties(), &self.smoothing_weights);
        Ok((x, y, pens, self.fits[i].level))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::Term;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn smoothed_pinball_examples() {
        for a in [0.1, 0.5, 0.9] {
            assert!((smoothed_pinball(0.0, a, 0.3, 1.0) - 0.3 * 2f64.ln()).abs() < 1e-15);
        }
        assert!((smoothed_pinball(1.0, 0.9, 1e-8, 1.0) - 0.9).abs() < 1e-6);
        assert!((smoothed_pinball(-1.0, 0.9, 1e-8, 1.0) - 0.1).abs() < 1e-6);
        // far residuals do not overflow
        assert!(smoothed_pinball(1e6, 0.5, 1e-3, 1.0).is_finite());
        assert!(smoothed_pinball(-1e6, 0.5, 1e-3, 1.0).is_finite());
    }

    #[test]
    fn smoothing_gap_is_bounded() {
        for &(lambda, sigma) in &[(0.1, 1.0), (0.05, 3.0), (0.3, 0.7)] {
            for i in -400..=400 {
                let u = i as f64 * 0.05;
                for a in [0.05, 0.5, 0.95] {
                    let gap = sigma * smoothed_pinball(u, a, lambda, sigma) - pinball_loss(u, a);
                    assert!(gap >= -1e-12 && gap <= lambda * sigma * 2f64.ln() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn pinball_half_absolute_error_at_median() {
        for u in [-3.0, -0.5, 0.0, 2.25] {
            assert_eq!(pinball_loss(u, 0.5), 0.5 * f64::abs(u));
        }
    }

    #[test]
    fn rearrangement_sorts_crossings() {
        let q = rearrange(&[0.5, 0.75], &[5.2, 4.8]);
        assert_eq!(q, vec![(0.5, 4.8), (0.75, 5.2)]);
        let q = rearrange(&[0.1, 0.5], &[-2.0, 1.0]);
        assert_eq!(q, vec![(0.1, 0.0), (0.5, 1.0)]);
    }

    #[test]
    fn grid_validation() {
        assert!(QuantileGrid::new(vec![]).is_err());
        assert!(QuantileGrid::new(vec![0.5, 0.5]).is_err());
        assert!(QuantileGrid::new(vec![0.0, 0.5]).is_err());
        assert!(QuantileGrid::new(vec![0.05, 0.25, 0.5, 0.9]).is_ok());
    }

    fn linear_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.5).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..4.0)).collect();
        let y = x.iter().map(|&xi| (2.0 + 3.0 * xi + noise.sample(&mut rng)).max(0.0).round()).collect();
        Dataset { y, columns: [("x".to_string(), x)].into_iter().collect() }
    }

    #[test]
    fn recovers_median_slope() {
        let data = linear_data(5000, 11);
        let grid = QuantileGrid::new(vec![0.5]).unwrap();
        let m = fit_quantile_set(&data, &Formula::new(vec![Term::linear("x")]), &grid, &QuantileFitConfig::default())
            .unwrap();
        let slope = m.fits[0].coefficients[1];
        assert!((slope - 3.0).abs() < 0.2, "slope {slope}");
        assert!(m.fits[0].grad_norm <= 1e-6);
    }

    #[test]
    fn all_zero_response() {
        let mut data = linear_data(200, 1);
        data.y.iter_mut().for_each(|v| *v = 0.0);
        let grid = QuantileGrid::new(vec![0.05, 0.5, 0.9]).unwrap();
        let m = fit_quantile_set(&data, &Formula::new(vec![Term::smooth("x")]), &grid, &QuantileFitConfig::default())
            .unwrap();
        for x in [0.1, 2.0, 3.9] {
            let q = m.predict_quantiles(&[("x".to_string(), x)].into_iter().collect()).unwrap();
            assert!(q.iter().all(|&(_, v)| v.abs() < 0.51), "{q:?}");
        }
    }

    #[test]
    fn intercept_only_prediction() {
        let data = linear_data(300, 5);
        let grid = QuantileGrid::new(vec![0.25, 0.5, 0.75]).unwrap();
        let m = fit_quantile_set(&data, &Formula::intercept_only(), &grid, &QuantileFitConfig::default()).unwrap();
        let q = m.predict_quantiles(&Covariates::new()).unwrap();
        for (f, (lvl, v)) in m.fits.iter().zip(&q) {
            assert_eq!(f.level, *lvl);
            assert_eq!(*v, f.coefficients[0].max(0.0));
        }
    }

    #[test]
    fn deterministic_and_order_invariant() {
        let data = linear_data(400, 2);
        let grid = QuantileGrid::new(vec![0.25, 0.75]).unwrap();
        let f = Formula::new(vec![Term::smooth("x")]);
        let a = fit_quantile_set(&data, &f, &grid, &QuantileFitConfig::default()).unwrap();
        let b = fit_quantile_set(&data, &f, &grid, &QuantileFitConfig::default()).unwrap();
        assert_eq!(a, b);
        let rev: Vec<usize> = (0..data.len()).rev().collect();
        let c = fit_quantile_set(&data.subset(&rev), &f, &grid, &QuantileFitConfig::default()).unwrap();
        let probe: Covariates = [("x".to_string(), 1.3)].into_iter().collect();
        assert_eq!(a.predict_quantiles(&probe).unwrap(), c.predict_quantiles(&probe).unwrap());
    }

    #[test]
    fn rejects_small_and_rank_deficient() {
        let data = linear_data(30, 2);
        let grid = QuantileGrid::new(vec![0.5]).unwrap();
        assert!(fit_quantile_set(&data, &Formula::intercept_only(), &grid, &QuantileFitConfig::default()).is_err());
        let mut data = linear_data(100, 2);
        data.columns.insert("c".into(), vec![1.0; 100]);
        let r = fit_quantile_set(&data, &Formula::new(vec![Term::linear("c")]), &grid, &QuantileFitConfig::default());
        assert!(matches!(r, Err(Error::DegradedRank(_))), "{r:?}");
    }

    #[test]
    fn missing_covariate_at_prediction() {
        let data = linear_data(100, 3);
        let grid = QuantileGrid::new(vec![0.5]).unwrap();
        let m = fit_quantile_set(&data, &Formula::new(vec![Term::linear("x")]), &grid, &QuantileFitConfig::default())
            .unwrap();
        assert!(matches!(m.predict_quantiles(&Covariates::new()), Err(Error::MissingCovariate(n)) if n == "x"));
    }

    #[test]
    fn cross_validated_smoothing_picks_grid_value() {
        let data = linear_data(300, 8);
        let grid = QuantileGrid::new(vec![0.5]).unwrap();
        let cfg = QuantileFitConfig { smoothing: Smoothing::CrossValidated, ..Default::default() };
        let m = fit_quantile_set(&data, &Formula::new(vec![Term::smooth("x")]), &grid, &cfg).unwrap();
        assert!(SMOOTHING_GRID.contains(&m.smoothing_weights[0]));
    }
}
