//! Predictive count distributions: an interpolated bulk cdf joined to a rescaled
//! DGP tail at the transition quantile.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::distributions::{dgp_cdf, dgp_pmf, gp_quantile, gp_survival, GpParams};
use crate::error::{Error, Result};
use crate::quantile_model::{LevelValues, QuantileModelSet};
use crate::tail_model::{tail_scale, TailModel};
use crate::terms::Covariates;

/// Queries shared by every forecast distribution over nonnegative integers.
pub trait CountDistribution {
    /// `P(Y <= y)`; zero for negative `y`.
    fn cdf(&self, y: i64) -> f64;

    /// `min { k : cdf(k) >= p }`.
    fn quantile(&self, p: f64) -> Result<u64>;

    fn pmf(&self, y: i64) -> f64 {
        (self.cdf(y) - self.cdf(y - 1)).max(0.0)
    }

    /// Inversion sampling from a seeded generator.
    fn sample(&self, n: usize, seed: u64) -> Result<Vec<u64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unif = Uniform::new(0.0f64, 1.0).expect("valid range");
        (0..n).map(|_| self.quantile(unif.sample(&mut rng))).collect()
    }
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if p.is_nan() {
        return Err(Error::NonFinite("probability"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Smallest `y` in `[lo, hi]` with `pred(y)`; `pred(hi)` must hold.
pub(crate) fn search_first(mut lo: i64, mut hi: i64, pred: impl Fn(i64) -> bool) -> i64 {
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Piecewise-linear cdf through `(q_i, alpha_i)` with a left anchor at `(-1, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkCdf {
    /// `(value, level)`, strictly increasing in value, starting at the anchor.
    knots: Vec<(f64, f64)>,
}

impl BulkCdf {
    /// Build from `(level, value)` pairs with nondecreasing values.
    pub fn new(quantiles: &[(f64, f64)]) -> Result<Self> {
        if quantiles.is_empty() {
            return Err(Error::Empty("quantile grid"));
        }
        let mut knots: Vec<(f64, f64)> = vec![(-1.0, 0.0)];
        for &(level, value) in quantiles {
            if !level.is_finite() || !value.is_finite() {
                return Err(Error::NonFinite("bulk quantile"));
            }
            let last = knots.last_mut().expect("anchor present");
            if value < last.0 {
                return Err(Error::InvalidParameter(format!(
                    "quantiles must be nondecreasing, got {value} after {}",
                    last.0
                )));
            }
            if value == last.0 {
                last.1 = last.1.max(level);
            } else {
                knots.push((value, level));
            }
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Largest fitted quantile value.
    pub fn top(&self) -> (f64, f64) {
        *self.knots.last().expect("anchor present")
    }

    pub fn eval(&self, y: f64) -> f64 {
        let k = &self.knots;
        if y <= k[0].0 {
            return 0.0;
        }
        let i = k.partition_point(|&(v, _)| v <= y);
        if i >= k.len() {
            return k[k.len() - 1].1;
        }
        let (x0, a0) = k[i - 1];
        let (x1, a1) = k[i];
        a0 + (a1 - a0) * (y - x0) / (x1 - x0)
    }
}

/// The point where the tail takes over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpliceTail {
    pub floor: i64,
    pub ceil: i64,
    pub alpha_tilde: f64,
    pub gp: GpParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub bulk: BulkCdf,
    pub tail: Option<SpliceTail>,
    /// The bulk saturated before the transition; the tail carries no weight.
    pub degenerate: bool,
}

impl PredictiveDistribution {
    /// Bulk-only distribution; mass above the top level sits at `ceil(q_top)`.
    pub fn bulk_only(quantiles: &[(f64, f64)]) -> Result<Self> {
        Ok(Self { bulk: BulkCdf::new(quantiles)?, tail: None, degenerate: false })
    }

    pub fn spliced(quantiles: &[(f64, f64)], alpha_t: f64, gp: GpParams) -> Result<Self> {
        let bulk = BulkCdf::new(quantiles)?;
        let q = quantiles
            .iter()
            .find(|(a, _)| (a - alpha_t).abs() < 1e-12)
            .map(|&(_, v)| v)
            .ok_or_else(|| Error::InvalidParameter(format!("transition level {alpha_t} is not on the grid")))?;
        let floor = q.floor() as i64;
        let ceil = q.ceil() as i64;
        let alpha_tilde = bulk.eval(floor as f64);
        if alpha_tilde >= 1.0 {
            log::warn!("bulk cdf reaches 1 before the transition quantile; tail dropped");
            return Ok(Self { bulk, tail: None, degenerate: true });
        }
        Ok(Self { bulk, tail: Some(SpliceTail { floor, ceil, alpha_tilde, gp }), degenerate: false })
    }

    /// Exact bulk cdf `F(y)` evaluated at an integer.
    pub fn bulk_cdf(&self, y: i64) -> f64 {
        self.bulk.eval(y as f64)
    }

    /// `P(Y > y)`, accurate far into the tail.
    pub fn sf(&self, y: i64) -> f64 {
        match &self.tail {
            Some(t) if y >= t.ceil => {
                (1.0 - t.alpha_tilde) * gp_survival((y - t.ceil) as f64 + 1.0, t.gp.sigma, t.gp.xi)
            }
            _ => 1.0 - self.cdf(y),
        }
    }

    fn bulk_only_cdf(&self, y: i64) -> f64 {
        let (top, _) = self.bulk.top();
        if y >= top.ceil() as i64 {
            1.0
        } else {
            self.bulk.eval(y as f64)
        }
    }
}

impl CountDistribution for PredictiveDistribution {
    fn cdf(&self, y: i64) -> f64 {
        if y < 0 {
            return 0.0;
        }
        match &self.tail {
            None => self.bulk_only_cdf(y),
            Some(t) if y < t.ceil => self.bulk.eval(y as f64),
            Some(t) => t.alpha_tilde + (1.0 - t.alpha_tilde) * dgp_cdf((y - t.ceil) as u64, &t.gp),
        }
    }

    fn pmf(&self, y: i64) -> f64 {
        match &self.tail {
            Some(t) if y > t.ceil => (1.0 - t.alpha_tilde) * dgp_pmf((y - t.ceil) as u64, &t.gp),
            _ => (self.cdf(y) - self.cdf(y - 1)).max(0.0),
        }
    }

    fn quantile(&self, p: f64) -> Result<u64> {
        check_probability(p)?;
        let t = match &self.tail {
            None => {
                let top = self.bulk.top().0.ceil() as i64;
                return Ok(search_first(0, top.max(0), |y| self.cdf(y) >= p) as u64);
            }
            Some(t) => t,
        };
        if p <= t.alpha_tilde {
            return Ok(search_first(0, t.ceil.max(0), |y| self.cdf(y) >= p) as u64);
        }
        if p >= 1.0 {
            match t.gp.upper_endpoint() {
                None => return Err(Error::UnboundedQuantile),
                Some(e) => {
                    let k = (e.ceil() as i64 - 1).max(0);
                    let hi = t.ceil + k;
                    return Ok(search_first(t.ceil, hi, |y| self.cdf(y) >= 1.0) as u64);
                }
            }
        }
        let r = (p - t.alpha_tilde) / (1.0 - t.alpha_tilde);
        let g = gp_quantile(r, t.gp.sigma, t.gp.xi);
        if !g.is_finite() || g > 1e15 {
            return Err(Error::UnboundedQuantile);
        }
        let mut k = t.ceil + ((g.ceil() as i64) - 1).max(0);
        while self.cdf(k) < p {
            k += 1;
        }
        while k > 0 && self.cdf(k - 1) >= p {
            k -= 1;
        }
        Ok(k as u64)
    }
}

/// Splice bulk quantiles predicted at `x` with the fitted tail.
pub fn splice_cdf(
    bulk_quantiles: &LevelValues,
    alpha_t: f64,
    tail: &TailModel,
    x: &Covariates,
) -> Result<PredictiveDistribution> {
    let sigma = tail_scale(tail, x)?;
    PredictiveDistribution::spliced(bulk_quantiles, alpha_t, GpParams::new(sigma, tail.xi)?)
}

/// A bulk quantile model with an optional DGP tail; `None` gives the bulk-only model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlexModel {
    pub bulk: QuantileModelSet,
    pub tail: Option<TailModel>,
}

impl FlexModel {
    pub fn alpha_t(&self) -> Option<f64> {
        self.tail.as_ref().map(|t| t.alpha_t)
    }

    pub fn predict(&self, x: &Covariates) -> Result<PredictiveDistribution> {
        let q = self.bulk.predict_quantiles(x)?;
        match &self.tail {
            None => PredictiveDistribution::bulk_only(&q),
            Some(t) => splice_cdf(&q, t.alpha_t, t, x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn knots() -> Vec<(f64, f64)> {
        vec![(0.05, 1.0), (0.25, 3.0), (0.5, 5.0), (0.9, 10.0)]
    }

    #[test]
    fn bulk_interpolation() {
        let b = BulkCdf::new(&knots()).unwrap();
        assert_eq!(b.eval(5.0), 0.5);
        assert!((b.eval(4.0) - 0.375).abs() < 1e-15);
        assert_eq!(b.eval(-1.0), 0.0);
        assert!((b.eval(0.0) - 0.025).abs() < 1e-15);
        assert_eq!(b.eval(50.0), 0.9);
    }

    #[test]
    fn tied_quantiles_take_higher_level() {
        let b = BulkCdf::new(&[(0.05, 0.0), (0.25, 2.0), (0.5, 2.0), (0.75, 4.0)]).unwrap();
        assert_eq!(b.eval(2.0), 0.5);
        assert!(BulkCdf::new(&[(0.1, 3.0), (0.2, 2.0)]).is_err());
        assert!(BulkCdf::new(&[]).is_err());
    }

    #[test]
    fn integer_transition_tail_owns_the_point() {
        let q = vec![(0.5, 3.0), (0.9, 7.0)];
        let gp = GpParams::new(1.0, 0.0).unwrap();
        let d = PredictiveDistribution::spliced(&q, 0.9, gp).unwrap();
        let t = d.tail.unwrap();
        assert_eq!((t.floor, t.ceil), (7, 7));
        assert_eq!(t.alpha_tilde, 0.9);
        let expected = 0.9 + 0.1 * (1.0 - (-1.0f64).exp());
        assert!((d.cdf(7) - expected).abs() < 1e-15);
        assert!(d.cdf(7) >= d.bulk_cdf(7));
    }

    #[test]
    fn fractional_transition() {
        let q = vec![(0.5, 3.0), (0.9, 7.4)];
        let gp = GpParams::new(2.0, 0.3).unwrap();
        let d = PredictiveDistribution::spliced(&q, 0.9, gp).unwrap();
        let t = d.tail.unwrap();
        assert_eq!((t.floor, t.ceil), (7, 8));
        for y in 0..=7 {
            assert_eq!(d.cdf(y), d.bulk_cdf(y));
        }
        assert!((1.0 - d.cdf(10_000_000)) < 1e-6);
        let light = PredictiveDistribution::spliced(&q, 0.9, GpParams::new(2.0, 0.0).unwrap()).unwrap();
        assert!((1.0 - light.cdf(200)) < 1e-9);
    }

    #[test]
    fn quantile_round_trip() {
        let q = vec![(0.05, 0.0), (0.5, 3.0), (0.75, 5.0), (0.9, 7.4)];
        for gp in
            [GpParams::new(2.0, 0.3).unwrap(), GpParams::new(3.0, -0.4).unwrap(), GpParams::new(1e-4, 0.1).unwrap()]
        {
            let d = PredictiveDistribution::spliced(&q, 0.9, gp).unwrap();
            assert_eq!(d.quantile(0.0).unwrap(), 0);
            for i in 1..2000 {
                let p = i as f64 / 2000.0;
                let k = d.quantile(p).unwrap() as i64;
                assert!(d.cdf(k) >= p);
                assert!(d.cdf(k - 1) < p);
            }
        }
    }

    #[test]
    fn unit_probability() {
        let q = vec![(0.5, 3.0), (0.9, 7.4)];
        let heavy = PredictiveDistribution::spliced(&q, 0.9, GpParams::new(2.0, 0.3).unwrap()).unwrap();
        assert!(matches!(heavy.quantile(1.0), Err(Error::UnboundedQuantile)));
        let bounded = PredictiveDistribution::spliced(&q, 0.9, GpParams::new(2.0, -0.5).unwrap()).unwrap();
        let k = bounded.quantile(1.0).unwrap() as i64;
        assert_eq!(bounded.cdf(k), 1.0);
        assert!(bounded.cdf(k - 1) < 1.0);
        assert!(heavy.quantile(1.5).is_err());
        assert!(heavy.quantile(f64::NAN).is_err());
    }

    #[test]
    fn bulk_only_truncates_at_top() {
        let d = PredictiveDistribution::bulk_only(&knots()).unwrap();
        assert_eq!(d.cdf(9), d.bulk_cdf(9));
        assert_eq!(d.cdf(10), 1.0);
        assert_eq!(d.quantile(0.95).unwrap(), 10);
        assert_eq!(d.quantile(1.0).unwrap(), 10);
    }

    #[test]
    fn all_zero_bulk_keeps_tail() {
        let q = vec![(0.5, 0.0), (0.9, 0.0)];
        let d = PredictiveDistribution::spliced(&q, 0.9, GpParams::new(1.0, 0.1).unwrap()).unwrap();
        assert!(!d.degenerate);
        assert_eq!(d.tail.unwrap().alpha_tilde, 0.9);
        assert!(d.cdf(0) > 0.9);
    }

    #[test]
    fn pmf_sums_match_cdf() {
        let q = vec![(0.05, 0.0), (0.5, 3.0), (0.9, 7.4)];
        let d = PredictiveDistribution::spliced(&q, 0.9, GpParams::new(2.0, 0.3).unwrap()).unwrap();
        for (a, b) in [(0, 5), (3, 12), (8, 40), (20, 300)] {
            let summed: f64 = (a + 1..=b).map(|y| d.pmf(y)).sum();
            assert!((summed - (d.cdf(b) - d.cdf(a))).abs() < 1e-10);
        }
    }

    #[test]
    fn sampling_matches_cdf() {
        let q = vec![(0.05, 0.0), (0.5, 3.0), (0.75, 5.0), (0.9, 7.4)];
        let d = PredictiveDistribution::spliced(&q, 0.9, GpParams::new(2.0, 0.3).unwrap()).unwrap();
        let s = d.sample(100_000, 3).unwrap();
        let mut counts = std::collections::BTreeMap::new();
        for v in &s {
            *counts.entry(*v as i64).or_insert(0usize) += 1;
        }
        let mut acc = 0usize;
        let mut sup: f64 = 0.0;
        for y in 0..200 {
            acc += counts.get(&y).copied().unwrap_or(0);
            sup = sup.max((acc as f64 / s.len() as f64 - d.cdf(y)).abs());
        }
        assert!(sup < 0.01, "sup distance {sup}");
    }
}
