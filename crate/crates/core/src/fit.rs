//! Least-squares helpers: straight lines, log-log slopes and limits of the
//! form `y = L + b·x^α` as `x → 0`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some(LineFit { slope, intercept, r_squared })
}

/// Fit `log|y| = slope·log x + intercept`. Points with `y == 0` or
/// non-finite values are skipped.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && b.is_finite() && **b != 0.0)
        .map(|(a, b)| (a.ln(), b.abs().ln()))
        .unzip();
    linear_fit(&lx, &ly)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitFit {
    pub limit: f64,
    pub coefficient: f64,
    pub exponent: Option<f64>,
    pub rms_residual: f64,
    /// `y_i − (L + b·x_i^α)` for every input point, in input order.
    pub residuals: Vec<f64>,
    pub points_used: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitFitOptions {
    pub max_points: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub rel_tol: f64,
}

impl Default for LimitFitOptions {
    fn default() -> Self {
        LimitFitOptions { max_points: 8, alpha_min: 0.02, alpha_max: 8.0, rel_tol: 1e-3 }
    }
}

fn solve_for_alpha(x: &[f64], y: &[f64], alpha: f64) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let u: Vec<f64> = x.iter().map(|v| v.powf(alpha)).collect();
    let mu = u.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut suu = 0.0;
    let mut suy = 0.0;
    for (a, b) in u.iter().zip(y) {
        suu += (a - mu) * (a - mu);
        suy += (a - mu) * (b - my);
    }
    let b = if suu > 0.0 { suy / suu } else { 0.0 };
    let l = my - b * mu;
    let rss = u.iter().zip(y).map(|(a, v)| (v - l - b * a).powi(2)).sum::<f64>();
    (l, b, rss)
}

/// Extrapolate `y(x)` to `x = 0` assuming `y = L + b·x^α` with `α > 0`.
///
/// Only the `max_points` points with smallest `x` enter the fit. `α` is found
/// by a log-spaced scan followed by golden-section refinement; `(L, b)` by
/// linear least squares at each trial `α`.
pub fn extrapolate_limit(x: &[f64], y: &[f64], opts: &LimitFitOptions) -> Option<LimitFit> {
    if x.len() != y.len() || x.len() < 3 || x.iter().any(|v| !(*v > 0.0)) || y.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|a, b| x[*a].total_cmp(&x[*b]));
    order.truncate(opts.max_points.max(3));
    let xs: Vec<f64> = order.iter().map(|i| x[*i]).collect();
    let ys: Vec<f64> = order.iter().map(|i| y[*i]).collect();

    let ymax = ys.iter().cloned().fold(f64::MIN, f64::max);
    let ymin = ys.iter().cloned().fold(f64::MAX, f64::min);
    let spread = ymax - ymin;
    let mag = ymax.abs().max(ymin.abs());
    if spread <= 1e-12 * mag.max(1e-300) {
        let limit = ys.iter().sum::<f64>() / ys.len() as f64;
        return Some(LimitFit {
            limit,
            coefficient: 0.0,
            exponent: None,
            rms_residual: 0.0,
            residuals: y.iter().map(|v| v - limit).collect(),
            points_used: xs.len(),
            converged: true,
        });
    }

    let steps = 400;
    let (la, lb) = (opts.alpha_min.ln(), opts.alpha_max.ln());
    let alphas: Vec<f64> = (0..=steps).map(|i| (la + (lb - la) * i as f64 / steps as f64).exp()).collect();
    let mut best = 0;
    let mut best_rss = f64::INFINITY;
    for (i, a) in alphas.iter().enumerate() {
        let (_, _, rss) = solve_for_alpha(&xs, &ys, *a);
        if rss < best_rss {
            best_rss = rss;
            best = i;
        }
    }
    let mut lo = alphas[best.saturating_sub(1)].ln();
    let mut hi = alphas[(best + 1).min(steps)].ln();
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let rss_at = |t: f64| solve_for_alpha(&xs, &ys, t.exp()).2;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (rss_at(c), rss_at(d));
    for _ in 0..80 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = rss_at(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = rss_at(d);
        }
    }
    let mut alpha = (0.5 * (lo + hi)).exp();
    let (mut l, mut b, mut rss) = solve_for_alpha(&xs, &ys, alpha);
    if best_rss < rss {
        alpha = alphas[best];
        let r = solve_for_alpha(&xs, &ys, alpha);
        l = r.0;
        b = r.1;
        rss = r.2;
    }
    let rms = (rss / xs.len() as f64).sqrt();
    let scale = l.abs().max(spread);
    let converged = rms <= opts.rel_tol * scale && alpha > 1.5 * opts.alpha_min;
    Some(LimitFit {
        limit: l,
        coefficient: b,
        exponent: Some(alpha),
        rms_residual: rms,
        residuals: x.iter().zip(y).map(|(a, v)| v - l - b * a.powf(alpha)).collect(),
        points_used: xs.len(),
        converged,
    })
}

/// Geometric sequence `start, start·ratio, …` with `count` terms.
pub fn geometric_grid(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start * ratio.powi(i as i32)).collect()
}

/// `count` log-spaced values from `hi` down to `lo`, both included.
pub fn log_spaced_desc(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (a, b) = (hi.ln(), lo.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_law_limit() {
        let x = geometric_grid(0.1, 0.5, 10);
        let y: Vec<f64> = x.iter().map(|s| 2.0 - 3.0 * s.powf(0.7)).collect();
        let f = extrapolate_limit(&x, &y, &LimitFitOptions::default()).unwrap();
        assert!(f.converged);
        assert!((f.limit - 2.0).abs() < 1e-8);
        assert!((f.exponent.unwrap() - 0.7).abs() < 1e-5);
    }

    #[test]
    fn constant_data() {
        let x = geometric_grid(0.1, 0.5, 6);
        let y = vec![1.25; 6];
        let f = extrapolate_limit(&x, &y, &LimitFitOptions::default()).unwrap();
        assert!(f.converged);
        assert_eq!(f.limit, 1.25);
        assert!(f.exponent.is_none());
    }

    #[test]
    fn loglog_slope() {
        let x = log_spaced_desc(1e-1, 1e-4, 20);
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r.powf(2.5)).collect();
        let f = loglog_fit(&x, &y).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-12);
        assert!((f.intercept.exp() - 3.0).abs() < 1e-10);
    }
}
