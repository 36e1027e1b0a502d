//! Discrete gamma bulk with a discrete generalized Pareto tail above a threshold.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::distributions::{
    dgamma_cdf, dgamma_pmf, dgamma_quantile, dgp_cdf, dgp_draw, dgp_pmf, gp_quantile, DiscreteGammaParams, GpParams,
};
use crate::error::{Error, Result};
use crate::splice::{check_probability, CountDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgDgp {
    pub bulk: DiscreteGammaParams,
    pub tail: GpParams,
    pub phi: f64,
    /// `min { k : F_dg(k) >= 1 - phi }`.
    pub u: u64,
    /// Tail mass `P_dg(Y >= u) = 1 - F_dg(u - 1)`.
    pub tail_weight: f64,
}

/// Exceedance threshold `u = min { k : F_dg(k) >= 1 - phi }`.
pub fn dgdgp_threshold(bulk: &DiscreteGammaParams, phi: f64) -> Result<u64> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::InvalidParameter(format!("phi must lie in (0, 1), got {phi}")));
    }
    dgamma_quantile(1.0 - phi, bulk)
}

impl DgDgp {
    pub fn new(bulk: DiscreteGammaParams, tail: GpParams, phi: f64) -> Result<Self> {
        let u = dgdgp_threshold(&bulk, phi)?;
        let tail_weight = if u == 0 { 1.0 } else { 1.0 - dgamma_cdf(u - 1, &bulk) };
        Ok(Self { bulk, tail, phi, u, tail_weight })
    }

    fn bulk_cdf_below_u(&self) -> f64 {
        1.0 - self.tail_weight
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if rng.random::<f64>() < self.tail_weight {
            return self.u + dgp_draw(rng.random::<f64>(), self.tail.sigma, self.tail.xi);
        }
        // bulk conditioned on Y < u, by rejection (acceptance 1 - tail weight)
        let g = Gamma::new(self.bulk.kappa, self.bulk.lambda).expect("validated parameters");
        loop {
            let k = g.sample(rng).floor() as u64;
            if k < self.u {
                return k;
            }
        }
    }
}

impl CountDistribution for DgDgp {
    fn cdf(&self, y: i64) -> f64 {
        if y < 0 {
            return 0.0;
        }
        let k = y as u64;
        if k < self.u {
            dgamma_cdf(k, &self.bulk)
        } else {
            self.bulk_cdf_below_u() + self.tail_weight * dgp_cdf(k - self.u, &self.tail)
        }
    }

    fn pmf(&self, y: i64) -> f64 {
        if y < 0 {
            return 0.0;
        }
        let k = y as u64;
        if k < self.u {
            dgamma_pmf(k, &self.bulk)
        } else {
            self.tail_weight * dgp_pmf(k - self.u, &self.tail)
        }
    }

    fn quantile(&self, p: f64) -> Result<u64> {
        check_probability(p)?;
        let below = self.bulk_cdf_below_u();
        if p <= below {
            return dgamma_quantile(p, &self.bulk);
        }
        if p >= 1.0 {
            return match self.tail.upper_endpoint() {
                None => Err(Error::UnboundedQuantile),
                Some(e) => {
                    let mut k = self.u + (e.ceil() as u64).saturating_sub(1);
                    while k > self.u && self.cdf(k as i64 - 1) >= 1.0 {
                        k -= 1;
                    }
                    Ok(k)
                }
            };
        }
        let r = ((p - below) / self.tail_weight).min(1.0);
        let g = gp_quantile(r, self.tail.sigma, self.tail.xi);
        if !g.is_finite() || g > 1e15 {
            return Err(Error::UnboundedQuantile);
        }
        let mut k = self.u + (g.ceil() as u64).saturating_sub(1);
        while self.cdf(k as i64) < p {
            k += 1;
        }
        while k > self.u && self.cdf(k as i64 - 1) >= p {
            k -= 1;
        }
        Ok(k)
    }
}

pub fn dgdgp_pmf(k: u64, d: &DgDgp) -> f64 {
    d.pmf(k as i64)
}

pub fn dgdgp_cdf(k: u64, d: &DgDgp) -> f64 {
    d.cdf(k as i64)
}

pub fn dgdgp_quantile(p: f64, d: &DgDgp) -> Result<u64> {
    d.quantile(p)
}
