//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Objectives are closures `f(x, grad) -> value` that fill `grad` and may return
//! `+inf` (or NaN) outside their domain; the line search treats those points as
//! rejected trial steps.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory: 10, grad_tol: 1e-6, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn minimize<F>(mut f: F, x0: &[f64], cfg: &LbfgsConfig) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut iterations = 0;
    let mut restarted = false;

    if !fx.is_finite() {
        return Minimum { x, value: fx, grad_norm: f64::INFINITY, iterations, converged: false };
    }

    while iterations < cfg.max_iter {
        let gnorm = norm(&g);
        if gnorm <= cfg.grad_tol {
            return Minimum { x, value: fx, grad_norm: gnorm, iterations, converged: true };
        }
        iterations += 1;

        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for i in 0..n {
                d[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for i in 0..n {
                d[i] += s[i] * (a - b);
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) || !slope.is_finite() {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let init = if history.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };

        match line_search(&mut f, &x, fx, &d, slope, init) {
            Some((step, f_new, g_new)) => {
                let s: Vec<f64> = d.iter().map(|v| v * step).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                for i in 0..n {
                    x[i] += s[i];
                }
                fx = f_new;
                g = g_new;
                if sy > 1e-16 * norm(&s) * norm(&y) && sy > 0.0 {
                    if history.len() == cfg.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                restarted = false;
            }
            None => {
                if restarted || history.is_empty() {
                    let gnorm = norm(&g);
                    return Minimum { x, value: fx, grad_norm: gnorm, iterations, converged: gnorm <= cfg.grad_tol };
                }
                history.clear();
                restarted = true;
            }
        }
    }
    let gnorm = norm(&g);
    Minimum { x, value: fx, grad_norm: gnorm, iterations, converged: gnorm <= cfg.grad_tol }
}

fn line_search<F>(f: &mut F, x: &[f64], f0: f64, d: &[f64], slope0: f64, init: f64) -> Option<(f64, f64, Vec<f64>)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let n = x.len();
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut eval = |a: f64, xt: &mut Vec<f64>, gt: &mut Vec<f64>| -> (f64, f64) {
        for i in 0..n {
            xt[i] = x[i] + a * d[i];
        }
        let v = f(xt, gt);
        if v.is_finite() {
            (v, dot(gt, d))
        } else {
            (f64::INFINITY, f64::NAN)
        }
    };

    // Near the optimum, decreases fall below rounding; accept a curvature-satisfying
    // step whose value is within a few ulps of f0 (approximate Wolfe conditions).
    let f_tol = f0 + 1e-12 * f0.abs().max(1e-300);
    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut s_prev = slope0;
    let mut a = init;
    let mut lo_hi: Option<(f64, f64, f64, f64, f64)> = None; // (lo, f_lo, s_lo, hi, f_hi)
    for i in 0..60 {
        let (fa, sa) = eval(a, &mut xt, &mut gt);
        if fa <= f_tol && sa.abs() <= -C2 * slope0 {
            return Some((a, fa, gt));
        }
        if fa > f0 + C1 * a * slope0 || (i > 0 && fa >= f_prev) {
            lo_hi = Some((a_prev, f_prev, s_prev, a, fa));
            break;
        }
        if sa.abs() <= -C2 * slope0 {
            return Some((a, fa, gt));
        }
        if sa >= 0.0 {
            lo_hi = Some((a, fa, sa, a_prev, f_prev));
            break;
        }
        a_prev = a;
        f_prev = fa;
        s_prev = sa;
        a *= 2.0;
        if a > 1e12 {
            break;
        }
    }
    let (mut lo, mut f_lo, mut s_lo, mut hi, mut f_hi) = lo_hi?;
    for _ in 0..60 {
        let width = hi - lo;
        // safeguarded quadratic interpolation from (lo, f_lo, s_lo) and (hi, f_hi)
        let mut a = lo + 0.5 * width;
        if f_hi.is_finite() {
            let denom = 2.0 * (f_hi - f_lo - s_lo * width);
            if denom.abs() > 0.0 {
                let cand = lo - s_lo * width * width / denom;
                let (a_min, a_max) = if lo < hi { (lo, hi) } else { (hi, lo) };
                let margin = 0.1 * width.abs();
                if cand > a_min + margin && cand < a_max - margin {
                    a = cand;
                }
            }
        }
        let (fa, sa) = eval(a, &mut xt, &mut gt);
        if fa <= f_tol && sa.abs() <= -C2 * slope0 {
            return Some((a, fa, gt));
        }
        if fa > f0 + C1 * a * slope0 || fa >= f_lo {
            hi = a;
            f_hi = fa;
        } else {
            if sa.abs() <= -C2 * slope0 {
                return Some((a, fa, gt));
            }
            if sa * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
            }
            lo = a;
            f_lo = fa;
            s_lo = sa;
        }
        if (hi - lo).abs() < 1e-16 * lo.abs().max(1e-16) {
            break;
        }
    }
    // fall back to the best sufficient-decrease point found
    if lo > 0.0 && f_lo < f0 {
        let (fa, _) = eval(lo, &mut xt, &mut gt);
        return Some((lo, fa, gt));
    }
    None
}

/// Damped Newton iterations for smooth convex objectives with a cheap Hessian.
///
/// `f(x, grad, hess)` returns the value, fills the gradient and, when `hess` is
/// given, the Hessian. Directions come from a Cholesky solve, with a growing
/// ridge when the Hessian is not numerically positive definite; steps backtrack
/// until the Armijo condition holds.
pub fn newton_minimize<F>(mut f: F, x0: &[f64], cfg: &LbfgsConfig) -> Minimum
where
    F: FnMut(&[f64], &mut [f64], Option<&mut DMatrix<f64>>) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut h = DMatrix::zeros(n, n);
    let mut fx = f(&x, &mut g, Some(&mut h));
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut iterations = 0;
    if !fx.is_finite() {
        return Minimum { x, value: fx, grad_norm: f64::INFINITY, iterations, converged: false };
    }
    while iterations < cfg.max_iter {
        let gnorm = norm(&g);
        if gnorm <= cfg.grad_tol {
            return Minimum { x, value: fx, grad_norm: gnorm, iterations, converged: true };
        }
        iterations += 1;
        let mut d = newton_direction(&h, &g);
        // keep steps commensurate with the current iterate
        let cap = 10.0 * (1.0 + norm(&x));
        let dn = norm(&d);
        if dn > cap {
            d.iter_mut().for_each(|v| *v *= cap / dn);
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                xt[i] = x[i] + step * d[i];
            }
            let ft = f(&xt, &mut gt, None);
            let armijo = ft <= fx + 1e-4 * step * slope;
            // below rounding level, accept any step that shrinks the gradient
            let flat = ft <= fx + 1e-12 * fx.abs() && norm(&gt) < gnorm;
            if ft.is_finite() && (armijo || flat) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Minimum { x, value: fx, grad_norm: gnorm, iterations, converged: false };
        }
        x.copy_from_slice(&xt);
        fx = f(&x, &mut g, Some(&mut h));
    }
    let gnorm = norm(&g);
    Minimum { x, value: fx, grad_norm: gnorm, iterations, converged: gnorm <= cfg.grad_tol }
}

fn newton_direction(h: &DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let rhs = DVector::from_iterator(n, g.iter().map(|v| -v));
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..40 {
        let mut m = h.clone();
        for i in 0..n {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(&rhs);
            if d.iter().all(|v| v.is_finite()) {
                return d.as_slice().to_vec();
            }
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
    }
    rhs.as_slice().to_vec()
}

/// Central finite-difference gradient.
pub fn numerical_gradient<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let step = h * x[i].abs().max(1.0);
            xp[i] = x[i] + step;
            let fp = f(&xp);
            xp[i] = x[i] - step;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let m = minimize(f, &[-1.2, 1.0], &LbfgsConfig::default());
        assert!(m.converged, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn respects_infinite_barrier() {
        // minimum of (x - 3)^2 restricted to x < 2 is approached from inside
        let f = |x: &[f64], g: &mut [f64]| {
            if x[0] >= 2.5 {
                return f64::INFINITY;
            }
            g[0] = 2.0 * (x[0] - 1.0);
            (x[0] - 1.0).powi(2)
        };
        let m = minimize(f, &[-5.0], &LbfgsConfig::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn newton_on_smooth_convex() {
        // log-sum-exp plus a quadratic
        let f = |x: &[f64], g: &mut [f64], h: Option<&mut DMatrix<f64>>| {
            let e0 = x[0].exp();
            let e1 = (-x[1]).exp();
            g[0] = e0 + 0.1 * x[0] - 1.0;
            g[1] = -e1 + 0.1 * x[1];
            if let Some(h) = h {
                h[(0, 0)] = e0 + 0.1;
                h[(1, 1)] = e1 + 0.1;
                h[(0, 1)] = 0.0;
                h[(1, 0)] = 0.0;
            }
            e0 + e1 + 0.05 * (x[0] * x[0] + x[1] * x[1]) - x[0]
        };
        let m = newton_minimize(f, &[5.0, -5.0], &LbfgsConfig::default());
        assert!(m.converged, "{m:?}");
        assert!(m.iterations < 50);
    }

    #[test]
    fn numerical_gradient_quadratic() {
        let g = numerical_gradient(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, -1.0], 1e-6);
        assert!((g[0] - 4.0).abs() < 1e-6 && (g[1] - 3.0).abs() < 1e-6);
    }
}
