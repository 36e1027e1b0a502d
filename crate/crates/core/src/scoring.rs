//! Verification scores for count forecasts.

use serde::{Deserialize, Serialize};

use crate::banding::{Band, BandProbabilities};
use crate::quantile_model::pinball_loss;
use crate::splice::CountDistribution;
use crate::stats::midranks;

/// Pinball loss of quantile `q` for outcome `y`.
pub fn pinball(y: f64, q: f64, alpha: f64) -> f64 {
    pinball_loss(y - q, alpha)
}

pub fn brier(p_event: f64, occurred: bool) -> f64 {
    let o = if occurred { 1.0 } else { 0.0 };
    (p_event - o).powi(2)
}

/// `1 - bs / bs_ref`; `None` when the reference score is zero.
pub fn brier_skill(bs: f64, bs_ref: f64) -> Option<f64> {
    (bs_ref != 0.0).then(|| 1.0 - bs / bs_ref)
}

/// Mann-Whitney AUC with midranks for ties; `None` unless both classes occur.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Unweighted mean of one-vs-rest AUCs over bands that occur; `None` if none are defined.
pub fn auc_macro(probs: &[BandProbabilities], observed: &[Band]) -> Option<f64> {
    let per: Vec<f64> = Band::ALL
        .iter()
        .filter_map(|&b| {
            let s: Vec<f64> = probs.iter().map(|p| p.get(b)).collect();
            let l: Vec<bool> = observed.iter().map(|&o| o == b).collect();
            auc(&s, &l)
        })
        .collect();
    (!per.is_empty()).then(|| per.iter().sum::<f64>() / per.len() as f64)
}

/// AUC over the pooled (probability, indicator) pairs of all bands.
pub fn auc_micro(probs: &[BandProbabilities], observed: &[Band]) -> Option<f64> {
    let mut s = Vec::with_capacity(3 * probs.len());
    let mut l = Vec::with_capacity(3 * probs.len());
    for (p, &o) in probs.iter().zip(observed) {
        for b in Band::ALL {
            s.push(p.get(b));
            l.push(o == b);
        }
    }
    auc(&s, &l)
}

/// Threshold-weighted CRPS from samples with chaining `v(z) = max(z, a)`:
/// `mean |v(X_i) - v(y)| - 0.5 * mean over all n^2 ordered pairs |v(X_i) - v(X_j)|`.
pub fn twcrps_sample(samples: &[u64], y: u64, a: f64) -> f64 {
    assert!(samples.len() >= 2, "twCRPS needs at least two samples");
    let n = samples.len() as f64;
    let vy = (y as f64).max(a);
    let mut v: Vec<f64> = samples.iter().map(|&s| (s as f64).max(a)).collect();
    let term1 = v.iter().map(|x| (x - vy).abs()).sum::<f64>() / n;
    v.sort_by(f64::total_cmp);
    // sum over i < j of v_(j) - v_(i) equals sum_j (2j - n + 1) v_(j), zero-based j
    let half_pairs: f64 = v.iter().enumerate().map(|(j, x)| (2.0 * j as f64 - n + 1.0) * x).sum();
    let term2 = 2.0 * half_pairs / (n * n);
    (term1 - 0.5 * term2).max(0.0)
}

/// Per-level root mean squared error; rows are evaluation points, columns levels.
pub fn rmse_quantiles(estimated: &[Vec<f64>], truth: &[Vec<f64>]) -> Vec<f64> {
    assert_eq!(estimated.len(), truth.len());
    let Some(first) = estimated.first() else { return vec![] };
    let m = first.len();
    let n = estimated.len() as f64;
    (0..m)
        .map(|j| {
            let ss: f64 = estimated.iter().zip(truth).map(|(e, t)| (e[j] - t[j]).powi(2)).sum();
            (ss / n).sqrt()
        })
        .collect()
}

pub const MIN_RELIABILITY_ROWS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub level: f64,
    /// `None` when fewer than [`MIN_RELIABILITY_ROWS`] rows were selected.
    pub coverage: Option<f64>,
    pub n: usize,
    pub condition: String,
    pub insufficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityTable {
    pub rows: Vec<ReliabilityRow>,
}

/// Coverage `P(y <= quantile(alpha))` over rows with `selected[i]`.
pub fn reliability<D: CountDistribution>(
    dists: &[D],
    observations: &[u64],
    levels: &[f64],
    selected: &[bool],
    condition: &str,
) -> ReliabilityTable {
    let idx: Vec<usize> = (0..dists.len()).filter(|&i| selected[i]).collect();
    let rows = levels
        .iter()
        .map(|&level| {
            let mut hits = 0usize;
            let mut n = 0usize;
            for &i in &idx {
                if let Ok(q) = dists[i].quantile(level) {
                    n += 1;
                    if observations[i] <= q {
                        hits += 1;
                    }
                }
            }
            let insufficient = n < MIN_RELIABILITY_ROWS;
            ReliabilityRow {
                level,
                coverage: (!insufficient).then(|| hits as f64 / n as f64),
                n,
                condition: condition.to_string(),
                insufficient,
            }
        })
        .collect();
    ReliabilityTable { rows }
}

/// One score value keyed by district, forecast source, lead time and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub district: String,
    pub source: String,
    pub lead_hours: i64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledRow {
    #[serde(flatten)]
    pub row: ScoreRow,
    pub scaled: Option<f64>,
    /// Why `scaled` is missing: `missing_baseline` or `zero_baseline`.
    pub flag: Option<String>,
}

pub const BASELINE_SOURCE: &str = "eps+hres";

/// Divide each value by its district's baseline (source `eps+hres`, lead 0, same metric).
pub fn scaled_pinball(rows: &[ScoreRow]) -> Vec<ScaledRow> {
    scaled_pinball_against(rows, BASELINE_SOURCE)
}

/// [`scaled_pinball`] with another baseline source.
pub fn scaled_pinball_against(rows: &[ScoreRow], baseline: &str) -> Vec<ScaledRow> {
    rows.iter()
        .map(|r| {
            let base = rows.iter().find(|b| {
                b.district == r.district && b.metric == r.metric && b.source == baseline && b.lead_hours == 0
            });
            let (scaled, flag) = match base {
                None => (None, Some("missing_baseline".to_string())),
                Some(b) if b.value == 0.0 => (None, Some("zero_baseline".to_string())),
                Some(b) => (Some(r.value / b.value), None),
            };
            ScaledRow { row: r.clone(), scaled, flag }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splice::PredictiveDistribution;

    /// Direct enumeration over all n^2 ordered pairs.
    fn twcrps_oracle(samples: &[u64], y: u64, a: f64) -> f64 {
        let v = |z: u64| (z as f64).max(a);
        let n = samples.len() as f64;
        let t1: f64 = samples.iter().map(|&s| (v(s) - v(y)).abs()).sum::<f64>() / n;
        let mut t2 = 0.0;
        for &s in samples {
            for &t in samples {
                t2 += (v(s) - v(t)).abs();
            }
        }
        t1 - 0.5 * t2 / (n * n)
    }

    #[test]
    fn pinball_examples() {
        assert_eq!(pinball(10.0, 10.0, 0.9), 0.0);
        assert!((pinball(11.0, 10.0, 0.9) - 0.9).abs() < 1e-15);
        assert!((pinball(9.0, 10.0, 0.9) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(1.0, true), 0.0);
        assert_eq!(brier(0.5, true), 0.25);
        assert_eq!(brier(0.5, false), 0.25);
        assert!((brier_skill(0.1, 0.2).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(brier_skill(0.1, 0.0), None);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
        assert_eq!(auc(&[0.3; 6], &[false, true, false, true, true, false]), Some(0.5));
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]), Some(0.75));
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), None);
    }

    #[test]
    fn twcrps_examples() {
        assert!((twcrps_sample(&[0, 2], 1, 0.0) - 0.5).abs() < 1e-15);
        assert_eq!(twcrps_sample(&[4, 4, 4], 4, 0.0), 0.0);
        assert_eq!(twcrps_sample(&[1, 5, 9], 3, 20.0), 0.0);
    }

    #[test]
    fn twcrps_matches_pair_enumeration() {
        let s: Vec<u64> = (0..57).map(|i| (i * 37 % 23) as u64).collect();
        for (y, a) in [(0, 0.0), (5, 3.0), (30, 10.5), (11, 22.0)] {
            assert!((twcrps_sample(&s, y, a) - twcrps_oracle(&s, y, a)).abs() < 1e-12);
        }
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse_quantiles(&[vec![1.0], vec![2.0]], &[vec![1.0], vec![2.0]]), vec![0.0]);
        let r = rmse_quantiles(&[vec![3.0], vec![4.0]], &[vec![0.0], vec![0.0]]);
        assert!((r[0] - 3.5355).abs() < 1e-4);
    }

    #[test]
    fn reliability_point_masses_and_flags() {
        let obs = vec![3u64; 25];
        let d: Vec<PredictiveDistribution> =
            (0..25).map(|_| PredictiveDistribution::bulk_only(&[(0.001, 2.999999), (0.999, 3.0)]).unwrap()).collect();
        let t = reliability(&d, &obs, &[0.25, 0.5, 0.75], &[true; 25], "all");
        assert!(t.rows.iter().all(|r| r.coverage == Some(1.0)));
        let t = reliability(&d, &obs, &[0.5], &[false; 25], "none");
        assert!(t.rows[0].insufficient && t.rows[0].coverage.is_none());
    }

    #[test]
    fn scaled_pinball_rows() {
        let row = |d: &str, s: &str, l: i64, v: f64| ScoreRow {
            district: d.into(),
            source: s.into(),
            lead_hours: l,
            metric: "pinball_0.9".into(),
            value: v,
        };
        let rows = vec![row("d1", "eps+hres", 0, 2.0), row("d1", "eps", 24, 4.0), row("d2", "eps", 0, 1.0)];
        let s = scaled_pinball(&rows);
        assert_eq!(s[0].scaled, Some(1.0));
        assert_eq!(s[1].scaled, Some(2.0));
        assert_eq!(s[2].scaled, None);
        assert_eq!(s[2].flag.as_deref(), Some("missing_baseline"));
    }
}
