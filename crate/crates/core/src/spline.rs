//! B-spline bases with difference penalties for smooth covariate effects.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub covariate: String,
    /// Number of basis functions.
    pub basis_dim: usize,
    pub degree: usize,
    pub penalty_order: usize,
}

impl SplineSpec {
    /// Cubic basis of dimension 10 with a second-order penalty.
    pub fn new(covariate: impl Into<String>) -> Self {
        Self { covariate: covariate.into(), basis_dim: 10, degree: 3, penalty_order: 2 }
    }

    pub fn with_basis_dim(mut self, k: usize) -> Self {
        self.basis_dim = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.basis_dim < 4 {
            return Err(Error::InvalidParameter(format!("basis dimension must be at least 4, got {}", self.basis_dim)));
        }
        if self.degree < 1 || self.degree >= self.basis_dim {
            return Err(Error::InvalidParameter(format!("invalid spline degree {}", self.degree)));
        }
        if !(1..=2).contains(&self.penalty_order) {
            return Err(Error::InvalidParameter(format!("penalty order must be 1 or 2, got {}", self.penalty_order)));
        }
        Ok(())
    }
}

/// A fitted basis: spec plus breakpoints. Evaluation clamps to the boundary knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    pub spec: SplineSpec,
    /// Strictly increasing breakpoints, boundary knots included.
    pub knots: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BasisExpansion {
    pub basis: SplineBasis,
    /// rows x K
    pub design: DMatrix<f64>,
    /// K x K, symmetric positive semidefinite
    pub penalty: DMatrix<f64>,
}

/// Build a basis over `values` with breakpoints at their empirical quantiles.
pub fn build_basis(values: &[f64], spec: &SplineSpec) -> Result<BasisExpansion> {
    let basis = SplineBasis::from_values(values, spec)?;
    let design = basis.design_matrix(values);
    let penalty = basis.penalty();
    Ok(BasisExpansion { basis, design, penalty })
}

/// Evaluate an expansion at a single point.
pub fn evaluate_basis(expansion: &BasisExpansion, x: f64) -> Vec<f64> {
    expansion.basis.evaluate(x)
}

impl SplineBasis {
    pub fn from_values(values: &[f64], spec: &SplineSpec) -> Result<Self> {
        spec.validate()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spline covariate values"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < spec.basis_dim {
            return Err(Error::DegradedRank(format!(
                "covariate `{}` has {} distinct values, basis needs {}",
                spec.covariate,
                distinct.len(),
                spec.basis_dim
            )));
        }
        let n_breaks = spec.basis_dim - spec.degree + 1;
        let place = |src: &[f64]| -> Vec<f64> {
            (0..n_breaks).map(|i| quantile_sorted(src, i as f64 / (n_breaks - 1) as f64)).collect()
        };
        let strictly_increasing = |k: &[f64]| k.windows(2).all(|w| w[1] > w[0]);
        let mut knots = place(&sorted);
        if !strictly_increasing(&knots) {
            knots = place(&distinct);
        }
        if !strictly_increasing(&knots) {
            return Err(Error::DegradedRank(format!(
                "could not place {n_breaks} distinct knots for `{}`",
                spec.covariate
            )));
        }
        Ok(Self { spec: spec.clone(), knots })
    }

    pub fn dim(&self) -> usize {
        self.spec.basis_dim
    }

    fn augmented_knots(&self) -> Vec<f64> {
        let d = self.spec.degree;
        let lo = self.knots[0];
        let hi = *self.knots.last().unwrap();
        let mut t = Vec::with_capacity(self.dim() + d + 1);
        t.extend(std::iter::repeat_n(lo, d));
        t.extend_from_slice(&self.knots);
        t.extend(std::iter::repeat_n(hi, d));
        t
    }

    /// Basis values at `x`; inputs outside the boundary knots are clamped.
    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.evaluate_into(x, &self.augmented_knots(), &mut out);
        out
    }

    fn evaluate_into(&self, x: f64, t: &[f64], out: &mut [f64]) {
        let d = self.spec.degree;
        let k = self.dim();
        let lo = self.knots[0];
        let hi = *self.knots.last().unwrap();
        let x = if x.is_nan() { lo } else { x.clamp(lo, hi) };
        // span index s with t[s] <= x < t[s+1], s in [d, k-1]
        let mut s = d;
        while s < k - 1 && x >= t[s + 1] {
            s += 1;
        }
        let mut n = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        n[0] = 1.0;
        for j in 1..=d {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom > 0.0 { n[r] / denom } else { 0.0 };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, v) in n.iter().enumerate() {
            out[s - d + j] = *v;
        }
    }

    pub fn design_matrix(&self, values: &[f64]) -> DMatrix<f64> {
        let t = self.augmented_knots();
        let k = self.dim();
        let mut m = DMatrix::zeros(values.len(), k);
        let mut row = vec![0.0; k];
        for (i, &x) in values.iter().enumerate() {
            self.evaluate_into(x, &t, &mut row);
            for j in 0..k {
                m[(i, j)] = row[j];
            }
        }
        m
    }

    /// Greville abscissae: the coefficient locations at which a B-spline reproduces linear functions.
    pub fn greville(&self) -> Vec<f64> {
        let t = self.augmented_knots();
        let d = self.spec.degree;
        (0..self.dim()).map(|j| t[j + 1..=j + d].iter().sum::<f64>() / d as f64).collect()
    }

    /// Difference penalty `D^T D` where `D` takes divided differences over the Greville
    /// abscissae, rescaled by the mean spacing so that equally spaced knots give plain differences.
    pub fn penalty(&self) -> DMatrix<f64> {
        let d = self.difference_operator();
        d.transpose() * d
    }

    fn difference_operator(&self) -> DMatrix<f64> {
        let g = self.greville();
        let k = g.len();
        let h = (g[k - 1] - g[0]) / (k - 1) as f64;
        // first divided differences
        let mut d1 = DMatrix::zeros(k - 1, k);
        for j in 0..k - 1 {
            let w = h / (g[j + 1] - g[j]);
            d1[(j, j)] = -w;
            d1[(j, j + 1)] = w;
        }
        if self.spec.penalty_order == 1 {
            return d1;
        }
        let mut d2 = DMatrix::zeros(k - 2, k - 1);
        for j in 0..k - 2 {
            let w = 2.0 * h / (g[j + 2] - g[j]);
            d2[(j, j)] = -w;
            d2[(j, j + 1)] = w;
        }
        d2 * d1
    }
}
