//! Exact kernels for the generalized Pareto (GP), discrete generalized
//! Pareto (DGP) and discrete gamma distributions.
//!
//! The DGP is obtained by differencing the GP cdf at consecutive integers:
//! `pmf(k) = F_GP(k + 1) - F_GP(k)` and `cdf(k) = F_GP(k + 1)`. The discrete
//! gamma is built the same way from the continuous gamma cdf.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Uniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{Error, Result};

/// Below this magnitude the shape is treated as exactly zero (exponential branch).
pub const XI_ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub sigma: f64,
    pub xi: f64,
}

impl GpParams {
    pub fn new(sigma: f64, xi: f64) -> Result<Self> {
        if !sigma.is_finite() || !xi.is_finite() {
            return Err(Error::NonFinite("GP parameters"));
        }
        if sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!("GP scale must be positive, got {sigma}")));
        }
        Ok(Self { sigma, xi })
    }

    /// Upper end of the continuous support, `-sigma/xi` when `xi < 0`.
    pub fn upper_endpoint(&self) -> Option<f64> {
        (self.xi < 0.0 && self.xi.abs() >= XI_ZERO_TOL).then(|| -self.sigma / self.xi)
    }
}

/// GP survival function `1 - F_GP(y)` for `y >= 0`.
pub(crate) fn gp_survival(y: f64, sigma: f64, xi: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    let z = y / sigma;
    if xi.abs() < XI_ZERO_TOL {
        return (-z).exp();
    }
    let t = xi * z;
    if t <= -1.0 {
        return 0.0;
    }
    (-(t.ln_1p()) / xi).exp()
}

/// GP cumulative distribution function of an exceedance `y >= 0`.
pub fn gp_cdf(y: f64, p: &GpParams) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::NonFinite("GP cdf argument"));
    }
    if y < 0.0 {
        return Err(Error::InvalidParameter(format!("exceedance must be nonnegative, got {y}")));
    }
    Ok((1.0 - gp_survival(y, p.sigma, p.xi)).clamp(0.0, 1.0))
}

/// GP quantile function for `r` in `[0, 1)`.
pub(crate) fn gp_quantile(r: f64, sigma: f64, xi: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let log_surv = (-r).ln_1p();
    if xi.abs() < XI_ZERO_TOL {
        -sigma * log_surv
    } else {
        sigma * (-xi * log_surv).exp_m1() / xi
    }
}

#[inline]
fn gp_cdf_unchecked(y: f64, sigma: f64, xi: f64) -> f64 {
    1.0 - gp_survival(y, sigma, xi)
}

/// DGP probability mass `F_GP(k + 1) - F_GP(k)`.
pub fn dgp_pmf(k: u64, p: &GpParams) -> f64 {
    let k = k as f64;
    (gp_cdf_unchecked(k + 1.0, p.sigma, p.xi) - gp_cdf_unchecked(k, p.sigma, p.xi)).max(0.0)
}

/// DGP cumulative distribution `P(K <= k) = F_GP(k + 1)`.
pub fn dgp_cdf(k: u64, p: &GpParams) -> f64 {
    gp_cdf_unchecked(k as f64 + 1.0, p.sigma, p.xi)
}

/// Log mass computed from survival differences, which keeps precision far in the tail.
pub(crate) fn dgp_log_pmf(k: u64, sigma: f64, xi: f64) -> f64 {
    let k = k as f64;
    let s0 = gp_survival(k, sigma, xi);
    let s1 = gp_survival(k + 1.0, sigma, xi);
    let mass = s0 - s1;
    if mass > 0.0 {
        mass.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Sum of DGP log masses, each observation with its own scale.
pub fn dgp_loglik(ks: &[u64], sigmas: &[f64], xi: f64) -> Result<f64> {
    if ks.is_empty() {
        return Err(Error::Empty("observations"));
    }
    if ks.len() != sigmas.len() {
        return Err(Error::Inconsistent(format!("{} observations but {} scales", ks.len(), sigmas.len())));
    }
    if !xi.is_finite() {
        return Err(Error::NonFinite("DGP shape"));
    }
    let mut total = 0.0;
    for (index, (&k, &sigma)) in ks.iter().zip(sigmas).enumerate() {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("scale {sigma} at observation {index}")));
        }
        let lp = dgp_log_pmf(k, sigma, xi);
        if lp == f64::NEG_INFINITY {
            return Err(Error::InfeasibleLikelihood { index, k });
        }
        total += lp;
    }
    Ok(total)
}

/// Inverse-cdf sampling: floor of a continuous GP draw.
pub fn dgp_sample(n: usize, p: &GpParams, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unif = Uniform::new(0.0f64, 1.0).expect("valid range");
    (0..n).map(|_| dgp_draw(unif.sample(&mut rng), p.sigma, p.xi)).collect()
}

pub(crate) fn dgp_draw(u: f64, sigma: f64, xi: f64) -> u64 {
    let y = gp_quantile(u, sigma, xi).floor();
    if y.is_finite() && y >= 0.0 {
        y.min(u64::MAX as f64 / 2.0) as u64
    } else {
        0
    }
}

/// Derivatives of `log S(y)` for the GP survival `S`, with respect to `log sigma` and `xi`.
///
/// Returns `(log S, d log S / d log sigma, d log S / d xi)`. For `y` at or beyond the
/// upper endpoint the survival is zero and the derivatives are returned as zero.
pub(crate) fn gp_log_survival_grad(y: f64, sigma: f64, xi: f64) -> (f64, f64, f64) {
    if y <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let z = y / sigma;
    let t = xi * z;
    if t <= -1.0 {
        return (f64::NEG_INFINITY, 0.0, 0.0);
    }
    // d/d log sigma of -(1/xi) log(1 + xi z) = z / (1 + t)
    let d_logsigma = z / (1.0 + t);
    if t.abs() < 1e-4 {
        // log S = -z * sum_{n>=0} (-t)^n / (n + 1)
        // d log S / d xi = z^2 * sum_{n>=2} (-1)^n (n-1)/n t^(n-2)
        let log_s = -z * (1.0 - t / 2.0 + t * t / 3.0 - t * t * t / 4.0);
        let d_xi = z * z * (0.5 - 2.0 * t / 3.0 + 0.75 * t * t - 0.8 * t * t * t);
        return (log_s, d_logsigma, d_xi);
    }
    let l = t.ln_1p();
    let log_s = -l / xi;
    let d_xi = (l - t / (1.0 + t)) / (xi * xi);
    (log_s, d_logsigma, d_xi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteGammaParams {
    pub kappa: f64,
    pub lambda: f64,
}

impl DiscreteGammaParams {
    pub fn new(kappa: f64, lambda: f64) -> Result<Self> {
        if !kappa.is_finite() || !lambda.is_finite() {
            return Err(Error::NonFinite("discrete gamma parameters"));
        }
        if kappa <= 0.0 || lambda <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "discrete gamma needs kappa > 0 and lambda > 0, got ({kappa}, {lambda})"
            )));
        }
        Ok(Self { kappa, lambda })
    }
}

fn gamma_cdf(x: f64, p: &DiscreteGammaParams) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(p.kappa, x / p.lambda)
    }
}

fn gamma_sf(x: f64, p: &DiscreteGammaParams) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(p.kappa, x / p.lambda)
    }
}

/// Discrete gamma mass `F_G(k + 1) - F_G(k)`.
pub fn dgamma_pmf(k: u64, p: &DiscreteGammaParams) -> f64 {
    let k = k as f64;
    let lo = gamma_cdf(k, p);
    let hi = gamma_cdf(k + 1.0, p);
    if hi < 0.5 {
        (hi - lo).max(0.0)
    } else {
        (gamma_sf(k, p) - gamma_sf(k + 1.0, p)).max(0.0)
    }
}

/// Discrete gamma cdf `P(K <= k) = F_G(k + 1)`.
pub fn dgamma_cdf(k: u64, p: &DiscreteGammaParams) -> f64 {
    gamma_cdf(k as f64 + 1.0, p)
}

/// Smallest integer `k` with `dgamma_cdf(k) >= level`.
pub fn dgamma_quantile(level: f64, p: &DiscreteGammaParams) -> Result<u64> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidParameter(format!("quantile level {level} not in [0, 1)")));
    }
    if level <= 0.0 {
        return Ok(0);
    }
    // Start from the continuous gamma quantile: K <= k iff G < k + 1.
    let gamma = statrs::distribution::Gamma::new(p.kappa, 1.0 / p.lambda)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let x = gamma.inverse_cdf(level);
    if !x.is_finite() || x > (1u64 << 52) as f64 {
        return Err(Error::InvalidParameter("discrete gamma quantile overflow".into()));
    }
    let mut k = (x.ceil() as u64).saturating_sub(1);
    while dgamma_cdf(k, p) < level {
        k += 1;
    }
    while k > 0 && dgamma_cdf(k - 1, p) >= level {
        k -= 1;
    }
    Ok(k)
}

/// Floor of continuous gamma draws.
pub fn dgamma_sample(n: usize, p: &DiscreteGammaParams, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(p.kappa, p.lambda).expect("validated parameters");
    (0..n).map(|_| gamma.sample(&mut rng).floor() as u64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gp(sigma: f64, xi: f64) -> GpParams {
        GpParams::new(sigma, xi).unwrap()
    }

    #[test]
    fn gp_cdf_examples() {
        assert_eq!(gp_cdf(0.0, &gp(3.0, 0.2)).unwrap(), 0.0);
        assert_abs_diff_eq!(gp_cdf(1.0, &gp(1.0, 0.0)).unwrap(), 0.632_120_558_828_557_7, epsilon = 1e-15);
        let expected = 1.0 - 1.3f64.powf(-1.0 / 0.3);
        assert_abs_diff_eq!(gp_cdf(2.5, &gp(2.5, 0.3)).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn gp_cdf_bounded_support_and_errors() {
        assert_eq!(gp_cdf(5.0, &gp(1.0, -0.5)).unwrap(), 1.0);
        assert!(gp_cdf(f64::NAN, &gp(1.0, 0.1)).is_err());
        assert!(gp_cdf(f64::INFINITY, &gp(1.0, 0.1)).is_err());
        assert!(GpParams::new(f64::NAN, 0.1).is_err());
        assert!(GpParams::new(-1.0, 0.1).is_err());
    }

    #[test]
    fn gp_branch_continuity() {
        for &y in &[0.1, 1.0, 3.7, 25.0] {
            let zero = gp_cdf(y, &gp(2.0, 0.0)).unwrap();
            for xi in [1e-12, -1e-12, 1e-9, -1e-9] {
                assert_abs_diff_eq!(gp_cdf(y, &gp(2.0, xi)).unwrap(), zero, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn dgp_examples() {
        let e = 1.0 - (-1.0f64).exp();
        assert_abs_diff_eq!(dgp_pmf(0, &gp(1.0, 0.0)), e, epsilon = 1e-15);
        assert_abs_diff_eq!(dgp_cdf(0, &gp(1.0, 0.0)), e, epsilon = 1e-15);
        assert_eq!(dgp_pmf(3, &gp(1.0, -0.5)), 0.0);
        assert!((dgp_cdf(10_000_000, &gp(1.0, 0.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dgp_normalization_exponential() {
        let p = gp(2.5, 0.0);
        let s: f64 = (0..1_000_000u64).map(|k| dgp_pmf(k, &p)).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dgp_telescoping() {
        for &(s, x) in &[(0.7, 0.25), (2.5, 0.0), (1.3, -0.3), (4.0, 0.9)] {
            let p = gp(s, x);
            for k in 1..=50u64 {
                assert_eq!(dgp_cdf(k, &p) - dgp_cdf(k - 1, &p), dgp_pmf(k, &p));
            }
        }
    }

    #[test]
    fn loglik_examples() {
        let single = dgp_loglik(&[0], &[1.0], 0.0).unwrap();
        assert_abs_diff_eq!(single, (1.0 - (-1.0f64).exp()).ln(), epsilon = 1e-14);
        let double = dgp_loglik(&[0, 0], &[1.0, 1.0], 0.0).unwrap();
        assert_abs_diff_eq!(double, 2.0 * single, epsilon = 1e-14);
        match dgp_loglik(&[5], &[1.0], -0.5) {
            Err(Error::InfeasibleLikelihood { index: 0, k: 5 }) => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
        assert!(dgp_loglik(&[1, 2], &[1.0], 0.1).is_err());
    }

    #[test]
    fn loglik_matches_log_pmf_sum() {
        let ks = [0u64, 3, 7, 1, 12];
        let sig = [1.0, 2.0, 0.5, 3.0, 2.2];
        let ll = dgp_loglik(&ks, &sig, 0.2).unwrap();
        let direct: f64 = ks.iter().zip(sig).map(|(&k, s)| dgp_pmf(k, &gp(s, 0.2)).ln()).sum();
        assert_abs_diff_eq!(ll, direct, epsilon = 1e-10);
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let p = gp(2.5, 0.3);
        assert_eq!(dgp_sample(1000, &p, 9), dgp_sample(1000, &p, 9));
        let bounded = dgp_sample(20_000, &gp(1.0, -0.5), 3);
        assert!(bounded.iter().all(|&k| k <= 2));
    }

    #[test]
    fn sampling_matches_cdf() {
        let p = gp(2.5, 0.3);
        let draws = dgp_sample(100_000, &p, 42);
        let n = draws.len() as f64;
        let mut counts = vec![0usize; 200];
        for &d in &draws {
            if (d as usize) < counts.len() {
                counts[d as usize] += 1;
            }
        }
        let mut acc = 0usize;
        let mut sup: f64 = 0.0;
        for (k, c) in counts.iter().enumerate() {
            acc += c;
            sup = sup.max((acc as f64 / n - dgp_cdf(k as u64, &p)).abs());
        }
        assert!(sup < 0.01, "sup distance {sup}");
    }

    #[test]
    fn log_survival_gradient_matches_finite_differences() {
        for &(y, s, x) in &[(3.0, 2.0, 0.3), (1.0, 0.8, -0.2), (5.0, 2.5, 1e-6), (2.0, 1.5, 0.0)] {
            let (_, dl, dx) = gp_log_survival_grad(y, s, x);
            let f = |ls: f64, xi: f64| gp_log_survival_grad(y, ls.exp(), xi).0;
            let h = 1e-6;
            let fd_l = (f(s.ln() + h, x) - f(s.ln() - h, x)) / (2.0 * h);
            let fd_x = (f(s.ln(), x + h) - f(s.ln(), x - h)) / (2.0 * h);
            assert_abs_diff_eq!(dl, fd_l, epsilon = 1e-6);
            assert_abs_diff_eq!(dx, fd_x, epsilon = 1e-5);
        }
    }

    #[test]
    fn dgamma_examples() {
        let p = DiscreteGammaParams::new(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(dgamma_pmf(0, &p), 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
        assert_eq!(dgamma_quantile(0.0, &p).unwrap(), 0);
        assert!(dgamma_quantile(1.0, &p).is_err());
    }

    #[test]
    fn dgamma_normalization_and_inversion() {
        let p = DiscreteGammaParams::new(1.5, 4.2).unwrap();
        let mut k = 0u64;
        let mut sum = 0.0;
        while dgamma_cdf(k, &p) <= 1.0 - 1e-10 {
            sum += dgamma_pmf(k, &p);
            k += 1;
        }
        sum += dgamma_pmf(k, &p);
        assert!((sum - 1.0).abs() < 1e-9, "sum {sum}");
        for k in 0..60u64 {
            let c = dgamma_cdf(k, &p);
            if c < 1.0 && c > dgamma_cdf(k.saturating_sub(1), &p) {
                assert_eq!(dgamma_quantile(c, &p).unwrap(), k);
            }
        }
    }

    #[test]
    fn dgamma_sample_is_floor_of_gamma() {
        let p = DiscreteGammaParams::new(1.5, 3.0).unwrap();
        let draws = dgamma_sample(50_000, &p, 1);
        assert_eq!(draws, dgamma_sample(50_000, &p, 1));
        let n = draws.len() as f64;
        for k in 0..10u64 {
            let emp = draws.iter().filter(|&&d| d <= k).count() as f64 / n;
            assert!((emp - dgamma_cdf(k, &p)).abs() < 0.01);
        }
    }
}
