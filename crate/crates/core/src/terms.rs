//! Additive predictors: an intercept, linear covariates and centred spline smooths.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::{SplineBasis, SplineSpec};

/// Named covariate values for one prediction point.
pub type Covariates = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Term {
    Linear { covariate: String },
    Smooth(SplineSpec),
}

impl Term {
    pub fn linear(name: impl Into<String>) -> Self {
        Term::Linear { covariate: name.into() }
    }

    pub fn smooth(name: impl Into<String>) -> Self {
        Term::Smooth(SplineSpec::new(name))
    }

    pub fn covariate(&self) -> &str {
        match self {
            Term::Linear { covariate } => covariate,
            Term::Smooth(s) => &s.covariate,
        }
    }
}

/// Term list; the intercept is implicit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Formula {
    pub terms: Vec<Term>,
}

impl Formula {
    pub fn intercept_only() -> Self {
        Self::default()
    }

    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms }
    }

    pub fn covariates(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.terms.iter().map(Term::covariate).collect();
        names.dedup();
        names
    }

    pub fn has_smooth(&self) -> bool {
        self.terms.iter().any(|t| matches!(t, Term::Smooth(_)))
    }
}

/// Column-oriented training data: a response plus named covariate columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns.get(name).map(Vec::as_slice).ok_or_else(|| Error::MissingCovariate(name.to_string()))
    }

    pub fn row(&self, i: usize) -> Covariates {
        self.columns.iter().map(|(k, v)| (k.clone(), v[i])).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            columns: self.columns.iter().map(|(k, v)| (k.clone(), idx.iter().map(|&i| v[i]).collect())).collect(),
        }
    }

    /// Row order sorted by (response, covariates); makes fits independent of input order.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.y[a].total_cmp(&self.y[b]).then_with(|| {
                for col in self.columns.values() {
                    let c = col[a].total_cmp(&col[b]);
                    if c.is_ne() {
                        return c;
                    }
                }
                std::cmp::Ordering::Equal
            })
        });
        idx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Block {
    Linear {
        covariate: String,
    },
    Smooth {
        basis: SplineBasis,
        /// K x (K-1) column-major null-space basis of the centring constraint.
        constraint: Vec<f64>,
    },
}

/// A formula bound to training data: knots, centring constraints and coefficient layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    blocks: Vec<Block>,
}

/// Penalty matrix for one smooth, positioned at `offset` within the coefficient vector.
#[derive(Debug, Clone)]
pub struct PenaltyBlock {
    pub term: usize,
    pub offset: usize,
    pub matrix: DMatrix<f64>,
}

/// Householder null-space basis of `c^T`: K x (K-1), orthonormal columns.
fn centring_basis(c: &[f64]) -> Vec<f64> {
    let k = c.len();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut u: Vec<f64> = c.iter().map(|v| v / norm).collect();
    u[0] -= 1.0;
    let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut z = vec![0.0; k * (k - 1)];
    for col in 1..k {
        for row in 0..k {
            let e = if row == col { 1.0 } else { 0.0 };
            let h = if un > 0.0 { e - 2.0 * u[row] * u[col] / (un * un) } else { e };
            z[(col - 1) * k + row] = h;
        }
    }
    z
}

impl Design {
    pub fn fit(formula: &Formula, data: &Dataset) -> Result<Self> {
        let mut blocks = Vec::with_capacity(formula.terms.len());
        for term in &formula.terms {
            let values = data.column(term.covariate())?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("non-finite values in covariate `{}`", term.covariate())));
            }
            match term {
                Term::Linear { covariate } => blocks.push(Block::Linear { covariate: covariate.clone() }),
                Term::Smooth(spec) => {
                    let basis = SplineBasis::from_values(values, spec)?;
                    let b = basis.design_matrix(values);
                    let n = values.len() as f64;
                    let means: Vec<f64> = (0..b.ncols()).map(|j| b.column(j).sum() / n).collect();
                    let constraint = centring_basis(&means);
                    blocks.push(Block::Smooth { basis, constraint });
                }
            }
        }
        Ok(Self { blocks })
    }

    pub fn n_coef(&self) -> usize {
        1 + self
            .blocks
            .iter()
            .map(|b| match b {
                Block::Linear { .. } => 1,
                Block::Smooth { basis, .. } => basis.dim() - 1,
            })
            .sum::<usize>()
    }

    pub fn covariates(&self) -> Vec<&str> {
        self.blocks
            .iter()
            .map(|b| match b {
                Block::Linear { covariate } => covariate.as_str(),
                Block::Smooth { basis, .. } => basis.spec.covariate.as_str(),
            })
            .collect()
    }

    pub fn penalties(&self) -> Vec<PenaltyBlock> {
        let mut offset = 1;
        let mut out = Vec::new();
        for (term, b) in self.blocks.iter().enumerate() {
            match b {
                Block::Linear { .. } => offset += 1,
                Block::Smooth { basis, constraint } => {
                    let k = basis.dim();
                    let z = DMatrix::from_column_slice(k, k - 1, constraint);
                    let matrix = z.transpose() * basis.penalty() * &z;
                    out.push(PenaltyBlock { term, offset, matrix });
                    offset += k - 1;
                }
            }
        }
        out
    }

    /// Design matrix (rows x n_coef) for a dataset.
    pub fn matrix(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        let n = data.len();
        let mut m = DMatrix::zeros(n, self.n_coef());
        m.column_mut(0).fill(1.0);
        let mut offset = 1;
        for b in &self.blocks {
            match b {
                Block::Linear { covariate } => {
                    let v = data.column(covariate)?;
                    for i in 0..n {
                        m[(i, offset)] = v[i];
                    }
                    offset += 1;
                }
                Block::Smooth { basis, constraint } => {
                    let v = data.column(&basis.spec.covariate)?;
                    let k = basis.dim();
                    let z = DMatrix::from_column_slice(k, k - 1, constraint);
                    let bz = basis.design_matrix(v) * z;
                    m.view_mut((0, offset), (n, k - 1)).copy_from(&bz);
                    offset += k - 1;
                }
            }
        }
        Ok(m)
    }

    pub fn row(&self, x: &Covariates) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(self.n_coef());
        row.push(1.0);
        for b in &self.blocks {
            match b {
                Block::Linear { covariate } => {
                    row.push(*x.get(covariate).ok_or_else(|| Error::MissingCovariate(covariate.clone()))?)
                }
                Block::Smooth { basis, constraint } => {
                    let name = &basis.spec.covariate;
                    let v = *x.get(name).ok_or_else(|| Error::MissingCovariate(name.clone()))?;
                    let bx = basis.evaluate(v);
                    let k = bx.len();
                    for col in 0..k - 1 {
                        row.push((0..k).map(|r| bx[r] * constraint[col * k + r]).sum());
                    }
                }
            }
        }
        Ok(row)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
