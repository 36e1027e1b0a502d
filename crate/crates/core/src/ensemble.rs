//! Lead-time weighted quantile averaging of member forecasts.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splice::{check_probability, CountDistribution, PredictiveDistribution};

/// Member id of the high-resolution (control) run.
pub const HRES_ID: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    pub hres_weight_at_0: f64,
    pub taper_end_hours: u32,
    pub member_weight: f64,
}

impl Default for WeightSchedule {
    fn default() -> Self {
        Self { hres_weight_at_0: 50.0, taper_end_hours: 72, member_weight: 1.0 }
    }
}

/// `(hres weight, member weight)` at a lead time.
pub fn member_weights(lead_hours: i64, s: &WeightSchedule) -> Result<(f64, f64)> {
    if lead_hours < 0 {
        return Err(Error::InvalidParameter(format!("lead time must be nonnegative, got {lead_hours}")));
    }
    let frac = (lead_hours.min(s.taper_end_hours as i64)) as f64 / s.taper_end_hours as f64;
    let hres = s.hres_weight_at_0 - (s.hres_weight_at_0 - s.member_weight) * frac;
    Ok((hres, s.member_weight))
}

/// Levels 0.005, 0.010, ..., 0.995.
pub fn default_prob_grid() -> Vec<f64> {
    (1..=199).map(|i| i as f64 / 200.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberForecast {
    pub member_id: u32,
    pub lead_hours: i64,
    pub dist: PredictiveDistribution,
}

/// Weighted mean of member quantiles, before rounding.
pub fn vincentize(member_quantiles: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    member_quantiles.iter().zip(weights).map(|(q, w)| q * w).sum::<f64>() / total
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedDistribution {
    members: Vec<PredictiveDistribution>,
    weights: Vec<f64>,
    grid: Vec<f64>,
    quantiles: Vec<u64>,
}

impl CombinedDistribution {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Rounded combined quantiles on the grid.
    pub fn grid_quantiles(&self) -> &[u64] {
        &self.quantiles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted mean of member quantiles at `p`; `None` where a member is unbounded.
    pub fn raw_quantile(&self, p: f64) -> Option<f64> {
        let mut q = Vec::with_capacity(self.members.len());
        for m in &self.members {
            q.push(m.quantile(p).ok()? as f64);
        }
        Some(vincentize(&q, &self.weights))
    }

    /// Halves round up; the offset keeps float noise in the weighted mean from
    /// flipping exact ties.
    fn rounded(&self, p: f64) -> Option<u64> {
        self.raw_quantile(p).map(|v| (v + 1e-9).round() as u64)
    }

    /// `sup { p in [lo, hi] : Q(p) <= y }` by bisection, given `Q(lo) <= y`.
    fn sup_level(&self, y: u64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            match self.rounded(mid) {
                Some(q) if q <= y => lo = mid,
                _ => hi = mid,
            }
        }
        lo
    }
}

impl CountDistribution for CombinedDistribution {
    /// Largest grid level whose combined quantile is at most `y`, refined by
    /// bisection below the first and above the last grid level.
    fn cdf(&self, y: i64) -> f64 {
        if y < 0 {
            return 0.0;
        }
        let y = y as u64;
        let n = self.grid.len();
        let i = self.quantiles.partition_point(|&q| q <= y);
        if i == 0 {
            return self.sup_level(y, 0.0, self.grid[0]);
        }
        if i == n {
            return match self.rounded(1.0) {
                Some(q) if q <= y => 1.0,
                _ => self.sup_level(y, self.grid[n - 1], 1.0),
            };
        }
        self.grid[i - 1]
    }

    fn quantile(&self, p: f64) -> Result<u64> {
        check_probability(p)?;
        if p == 0.0 {
            return Ok(0);
        }
        let n = self.grid.len();
        if p < self.grid[0] || p > self.grid[n - 1] {
            return self.rounded(p).ok_or(Error::UnboundedQuantile);
        }
        let i = self.grid.partition_point(|&g| g < p - 1e-15);
        Ok(self.quantiles[i.min(n - 1)])
    }
}

/// The result of combining members: one member passes through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub enum ForecastDistribution {
    Single(PredictiveDistribution),
    Combined(CombinedDistribution),
}

impl CountDistribution for ForecastDistribution {
    fn cdf(&self, y: i64) -> f64 {
        match self {
            Self::Single(d) => d.cdf(y),
            Self::Combined(d) => d.cdf(y),
        }
    }

    fn quantile(&self, p: f64) -> Result<u64> {
        match self {
            Self::Single(d) => d.quantile(p),
            Self::Combined(d) => d.quantile(p),
        }
    }

    fn pmf(&self, y: i64) -> f64 {
        match self {
            Self::Single(d) => d.pmf(y),
            Self::Combined(d) => d.pmf(y),
        }
    }
}

pub fn combine(
    members: &[MemberForecast],
    schedule: &WeightSchedule,
    prob_grid: &[f64],
) -> Result<ForecastDistribution> {
    let first = members.first().ok_or(Error::Empty("member list"))?;
    if members.iter().any(|m| m.lead_hours != first.lead_hours) {
        return Err(Error::Inconsistent("members have different lead times".into()));
    }
    let ids: BTreeSet<u32> = members.iter().map(|m| m.member_id).collect();
    if ids.len() != members.len() {
        return Err(Error::Inconsistent("duplicate member ids".into()));
    }
    if prob_grid.is_empty() {
        return Err(Error::Empty("probability grid"));
    }
    if prob_grid.iter().any(|&p| !(p > 0.0 && p < 1.0)) || prob_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("probability grid must be strictly increasing within (0, 1)".into()));
    }
    if members.iter().all(|m| m.dist == first.dist) {
        return Ok(ForecastDistribution::Single(first.dist.clone()));
    }
    let (hres, member) = member_weights(first.lead_hours, schedule)?;
    let weights: Vec<f64> = members.iter().map(|m| if m.member_id == HRES_ID { hres } else { member }).collect();
    let mut combined = CombinedDistribution {
        members: members.iter().map(|m| m.dist.clone()).collect(),
        weights,
        grid: prob_grid.to_vec(),
        quantiles: Vec::with_capacity(prob_grid.len()),
    };
    let mut running = 0;
    for &p in prob_grid {
        let q = combined.rounded(p).ok_or(Error::UnboundedQuantile)?;
        running = q.max(running);
        combined.quantiles.push(running);
    }
    Ok(ForecastDistribution::Combined(combined))
}
