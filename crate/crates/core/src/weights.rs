//! Sub- and superweights of the pole `G_m`, their expansion near V, grid
//! certification of the cone conditions, maximal radial profiles and the
//! real-codimension minimal weight.

use nalgebra::Vector2;
use ode_solvers::dopri5::Dopri5;
use ode_solvers::{OutputType, System};
use serde::{Deserialize, Serialize};

use crate::error::{arg, LabError, Result};
use crate::exec;
use crate::fit::{log_spaced_desc, loglog_fit};
use crate::garding::{binomial, sigma_profile};
use crate::profiles::{eval_weight, radial_eigprofile, radial_pair, DerivTriple, FlatModel, WeightFamily, WeightKind};

/// `δ` must exceed `max(1, 2(k/m − 1))`.
pub fn admissible_delta_bound(k: usize, m: usize) -> f64 {
    let q = k as f64 / m as f64;
    f64::max(1.0, 2.0 * (q - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConstants {
    pub d_km: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

pub fn expansion_constants(k: usize, m: usize, delta: f64) -> Result<ExpansionConstants> {
    if m == 0 || k == 0 || m > k {
        return arg(format!("need 1 <= m <= k, got k = {}, m = {}", k, m));
    }
    if !delta.is_finite() || !(delta > 0.0) {
        return arg("delta must be positive");
    }
    let q = k as f64 / m as f64;
    let d_km = if k == m { 1.0 } else { 1.0 / (2.0 * q - 2.0) };
    Ok(ExpansionConstants {
        d_km,
        b1: 2.0 * ((1.0 - q) * (1.0 + delta) + delta * delta / 4.0),
        b2: 2.0 + delta,
        b3: 2.0 * (q + delta * (q - 0.5) - delta * delta / 4.0),
    })
}

/// Coefficient of `r^δ` in `σ_m / C(k−1, m−1)` of the scaled subweight profile.
pub fn sigma_m_leading(k: usize, m: usize, delta: f64) -> f64 {
    let q = k as f64 / m as f64;
    delta * (delta / 2.0 - (q - 1.0))
}

/// The profile of `G_m(h(r_ε))` scaled by `D·h^{2k/m}` (and the factor 2 that
/// turns coordinate eigenvalues into unit-frame ones), written as deviations
/// from the unperturbed profile `(1 − k/m, 1)`:
/// radial slot `(1 − k/m) + α`, tangential slot `1 + β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledProfile {
    pub k: usize,
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl ScaledProfile {
    fn q(&self) -> f64 {
        self.k as f64 / self.m as f64
    }

    pub fn radial(&self) -> f64 {
        (1.0 - self.q()) + self.alpha
    }

    pub fn tangent(&self) -> f64 {
        1.0 + self.beta
    }

    /// `σ_j / C(k−1, j−1)`, arranged so that the cancellation at `j = m`
    /// happens symbolically.
    pub fn sigma_normalized(&self, j: usize) -> f64 {
        let c = self.k as f64 / j as f64;
        let b = 1.0 + self.beta;
        b.powi(j as i32 - 1) * ((c - self.q()) + self.alpha + (c - 1.0) * self.beta)
    }

    pub fn sigma(&self, j: usize) -> f64 {
        binomial(self.k - 1, j - 1) * self.sigma_normalized(j)
    }
}

/// Closed form of the scaled profile, free of the `1 − (1 − x)` cancellations
/// that ruin the direct route for large `δ` and small `r`.
pub fn scaled_profile_exact(k: usize, m: usize, delta: f64, sign: f64, epsilon: f64, r: f64) -> Result<ScaledProfile> {
    if m == 0 || m > k {
        return arg(format!("need 1 <= m <= k, got k = {}, m = {}", k, m));
    }
    let s2 = r * r + epsilon;
    if !(s2 > 0.0) {
        return Err(LabError::Singularity("r = 0 with epsilon = 0".into()));
    }
    let s = s2.sqrt();
    let q = k as f64 / m as f64;
    let e = epsilon / s2;
    let x = if sign == 0.0 { 0.0 } else { sign * s.powf(delta) };
    let beta = (2.0 + delta) * x + (1.0 + delta) * x * x;
    let alpha = q * e
        + 0.5 * (1.0 + e) * beta
        + 0.5
            * (1.0 - e)
            * (delta * (1.0 + delta) * x * (1.0 + x) + (1.0 - 2.0 * q) * (1.0 + delta) * x * (2.0 + (1.0 + delta) * x));
    Ok(ScaledProfile { k, m, alpha, beta })
}

/// Scaled `(radial, tangential)` slots computed from the coordinate Hessian
/// of the weight, i.e. without the closed form.
pub fn scaled_profile_from_hessian(w: &WeightFamily, r: f64) -> Result<(f64, f64)> {
    if !matches!(w.kind, WeightKind::GPure | WeightKind::GSub | WeightKind::GSuper) {
        return arg("scaled profile is defined for the G_m families");
    }
    if !(r > 0.0) {
        return arg("radius must be positive");
    }
    let unit = WeightFamily { gamma: 1.0, ..*w };
    let d = eval_weight(&unit, r)?;
    let (rad, tan) = radial_pair(&d, r);
    let c = expansion_constants(w.k, w.m, w.delta.max(1e-300))?;
    let s = (r * r + w.epsilon).sqrt();
    let h = crate::profiles::perturbation(w.sign, w.delta, s).0;
    let factor = 2.0 * c.d_km * h.powf(2.0 * w.q());
    Ok((factor * rad, factor * tan))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightSide {
    Sub,
    Super,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Certified grid, decreasing.
    pub radii: Vec<f64>,
    /// `σ_j / C(k−1, j−1)` for `j = 1..=m` at each radius.
    pub sigmas: Vec<Vec<f64>>,
    /// `min_j σ_j / ‖profile‖^j` at each radius.
    pub margins: Vec<f64>,
    pub fitted_exponent: f64,
    pub fitted_coefficient: f64,
    pub expected_coefficient: f64,
    pub fit_r_squared: f64,
    pub fit_window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedWeight {
    pub side: WeightSide,
    pub family: WeightFamily,
    pub certified_radius: f64,
    pub certificate: Certificate,
}

pub const CERT_POINTS_PER_DECADE: usize = 64;
pub const CERT_DECADES: usize = 3;

fn side_conditions_hold(side: WeightSide, sig: &[f64]) -> bool {
    let m = sig.len();
    match side {
        WeightSide::Sub => sig.iter().all(|s| *s >= 0.0),
        WeightSide::Super => sig[m - 1] <= 0.0 && sig[..m - 1].iter().all(|s| *s > 0.0),
    }
}

/// Build a sub- or superweight and certify the largest grid radius
/// `≤ tube_radius / 2` below which its cone conditions hold on the grid.
pub fn make_weight(side: WeightSide, k: usize, m: usize, delta: f64, epsilon: f64, model: &FlatModel) -> Result<CertifiedWeight> {
    model.validate()?;
    if m == 0 || m > k {
        return arg(format!("need 1 <= m <= k, got k = {}, m = {}", k, m));
    }
    let family = match side {
        WeightSide::Sub => WeightFamily::g_sub(k, m, delta, epsilon),
        WeightSide::Super => {
            if epsilon != 0.0 {
                return Err(LabError::Constraint("superweights are unregularized (epsilon = 0)".into()));
            }
            WeightFamily::g_super(k, m, delta)
        }
    };
    family.validate()?;
    let sign = family.sign;
    let r0 = model.tube_radius / 2.0;
    let count = CERT_POINTS_PER_DECADE * CERT_DECADES + 1;
    let grid = log_spaced_desc(r0, r0 * 10f64.powi(-(CERT_DECADES as i32)), count);

    let rows: Vec<Result<(Vec<f64>, f64)>> = exec::map_slice(&grid, |r| {
        let p = scaled_profile_exact(k, m, delta, sign, epsilon, *r)?;
        let sig: Vec<f64> = (1..=m).map(|j| p.sigma_normalized(j)).collect();
        let norm = p.radial().abs().max(p.tangent().abs());
        let margin = (1..=m).map(|j| p.sigma(j) / norm.powi(j as i32)).fold(f64::INFINITY, f64::min);
        Ok((sig, margin))
    });
    let rows: Vec<(Vec<f64>, f64)> = rows.into_iter().collect::<Result<_>>()?;

    let mut start = rows.len();
    while start > 0 && side_conditions_hold(side, &rows[start - 1].0) {
        start -= 1;
    }
    if start == rows.len() {
        return Err(LabError::Construction(format!(
            "{:?} conditions fail down to r = {:.3e} for (k, m, delta) = ({}, {}, {})",
            side,
            grid[grid.len() - 1],
            k,
            m,
            delta
        )));
    }
    let radii = grid[start..].to_vec();
    let sigmas: Vec<Vec<f64>> = rows[start..].iter().map(|r| r.0.clone()).collect();
    let margins: Vec<f64> = rows[start..].iter().map(|r| r.1).collect();

    let lo = radii[radii.len() - 1];
    let hi = radii[0];
    let mid = (lo * hi).sqrt();
    let window = (mid / 10f64.sqrt(), mid * 10f64.sqrt());
    let (fx, fy): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(&sigmas)
        .filter(|(r, _)| **r >= window.0 * (1.0 - 1e-12) && **r <= window.1 * (1.0 + 1e-12))
        .map(|(r, s)| (*r, s[m - 1]))
        .unzip();
    let fit = loglog_fit(&fx, &fy).ok_or_else(|| LabError::Diagnostic("sigma_m fit window is empty".into()))?;
    let sig_sign = if fy.iter().all(|v| *v < 0.0) { -1.0 } else { 1.0 };
    Ok(CertifiedWeight {
        side,
        family,
        certified_radius: radii[0],
        certificate: Certificate {
            radii,
            sigmas,
            margins,
            fitted_exponent: fit.slope,
            fitted_coefficient: sig_sign * fit.intercept.exp(),
            expected_coefficient: sign * sigma_m_leading(k, m, delta),
            fit_r_squared: fit.r_squared,
            fit_window: window,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub k: usize,
    pub m: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub sign: f64,
    pub radii: Vec<f64>,
    pub r_eps: Vec<f64>,
    pub radial_residuals: Vec<f64>,
    pub tangent_residuals: Vec<f64>,
    /// Slope of `log max(|res_rad|, |res_tan|)` against `log r_ε`.
    pub fitted_exponent: f64,
    pub fit_r_squared: f64,
    pub exceeds_delta: bool,
}

/// Default expansion grid: the range where `r^δ` runs from `1e−1` to `1e−5`,
/// clipped to the tube.
pub fn default_expansion_grid(delta: f64, tube_radius: f64) -> Vec<f64> {
    let hi = 10f64.powf(-1.0 / delta).min(tube_radius);
    let lo = 10f64.powf(-5.0 / delta).min(hi / 10.0);
    log_spaced_desc(hi, lo, 40)
}

/// Compare the scaled coordinate profile of `G_m(h(r_ε))` against its
/// expansion with the `B_1, B_2, B_3` terms and the `ε/r_ε²` block, and fit
/// the residual exponent.
pub fn verify_expansion(k: usize, m: usize, delta: f64, epsilon: f64, sign: f64, r_grid: &[f64]) -> Result<ExpansionReport> {
    let c = expansion_constants(k, m, delta)?;
    if sign.abs() != 1.0 {
        return arg("expansion sign must be +1 or -1");
    }
    if r_grid.len() < 3 || r_grid.iter().any(|r| !(*r > 0.0)) {
        return arg("need at least three positive radii");
    }
    let q = k as f64 / m as f64;
    let w = WeightFamily { kind: WeightKind::GPure, sign, delta, epsilon, ..WeightFamily::g_pure(k, m) };
    let rows: Vec<Result<(f64, f64, f64)>> = exec::map_slice(r_grid, |r| {
        let (rad, tan) = scaled_hessian_unchecked(&w, *r, c.d_km)?;
        let s2 = r * r + epsilon;
        let s = s2.sqrt();
        let e = epsilon / s2;
        let rd = s.powf(delta);
        let rhs_rad = (1.0 - q) * (r * r / s2) + e + sign * (c.b1 + e * c.b3) * rd;
        let rhs_tan = 1.0 + sign * c.b2 * rd;
        Ok((s, rad - rhs_rad, tan - rhs_tan))
    });
    let rows: Vec<(f64, f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    let r_eps: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let res_rad: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let res_tan: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let worst: Vec<f64> = res_rad.iter().zip(&res_tan).map(|(a, b)| a.abs().max(b.abs())).collect();
    let fit = loglog_fit(&r_eps, &worst).ok_or_else(|| LabError::Diagnostic("residuals vanish identically".into()))?;
    Ok(ExpansionReport {
        k,
        m,
        delta,
        epsilon,
        sign,
        radii: r_grid.to_vec(),
        r_eps,
        radial_residuals: res_rad,
        tangent_residuals: res_tan,
        fitted_exponent: fit.slope,
        fit_r_squared: fit.r_squared,
        exceeds_delta: fit.slope > delta,
    })
}

fn scaled_hessian_unchecked(w: &WeightFamily, r: f64, d_km: f64) -> Result<(f64, f64)> {
    let s = (r * r + w.epsilon).sqrt();
    let (h, h1, h2) = crate::profiles::perturbation(w.sign, w.delta, s);
    let (s1, s2) = (r / s, w.epsilon / (s * s * s));
    let (_, g1, g2) = crate::profiles::pole(w.k, w.m, h);
    let u1 = h1 * s1;
    let u2 = h2 * s1 * s1 + h1 * s2;
    let d = DerivTriple::new(0.0, g1 * u1, g2 * u1 * u1 + g1 * u2);
    let (rad, tan) = radial_pair(&d, r);
    let factor = 2.0 * d_km * h.powf(2.0 * w.q());
    Ok((factor * rad, factor * tan))
}

/// The radial solutions `a·G_m + b` of `σ_m = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaximalProfile {
    pub k: usize,
    pub m: usize,
    pub a: f64,
    pub b: f64,
}

pub fn maximal_radial_profile(k: usize, m: usize, a: f64, b: f64) -> Result<MaximalProfile> {
    if m == 0 || m > k {
        return arg(format!("need 1 <= m <= k, got k = {}, m = {}", k, m));
    }
    if !(a >= 0.0) || !b.is_finite() || !a.is_finite() {
        return arg("need a >= 0 (a negative multiple of the pole is not m-subharmonic)");
    }
    Ok(MaximalProfile { k, m, a, b })
}

impl MaximalProfile {
    pub fn family(&self) -> WeightFamily {
        WeightFamily::g_pure(self.k, self.m).with_gamma(self.a)
    }

    pub fn eval(&self, r: f64) -> Result<DerivTriple> {
        Ok(eval_weight(&self.family(), r)? + DerivTriple::constant(self.b))
    }

    /// `σ_m` of the exact profile (with `n = k`).
    pub fn ode_residual(&self, r: f64) -> Result<f64> {
        let model = FlatModel::new(self.k, self.k, self.m, f64::MAX)?;
        let p = radial_eigprofile(&self.eval(r)?, r, &model)?;
        sigma_profile(&p, self.m)
    }
}

struct MaximalOde {
    s_v: f64,
    c: f64,
}

impl System<f64, Vector2<f64>> for MaximalOde {
    // t = ln(s_V / r); y = (f, f_r); f_rr = (1 − 2k/m) f_r / r
    fn system(&self, t: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        let r = self.s_v * (-t).exp();
        dy[0] = -r * y[1];
        dy[1] = -self.c * y[1];
    }
}

/// Integrate the radial maximality equation `r f'' = (1 − 2k/m) f'` inward
/// from boundary data at `s_v`, returning `f` at each requested radius.
pub fn integrate_maximal_ode(k: usize, m: usize, s_v: f64, f_at: f64, df_at: f64, radii: &[f64]) -> Result<Vec<f64>> {
    if m == 0 || m > k {
        return arg(format!("need 1 <= m <= k, got k = {}, m = {}", k, m));
    }
    if !(s_v > 0.0) || radii.iter().any(|r| !(*r > 0.0 && *r <= s_v)) {
        return arg("radii must lie in (0, s_v]");
    }
    let c = 1.0 - 2.0 * k as f64 / m as f64;
    let out: Vec<Result<f64>> = exec::map_slice(radii, |r| {
        let t_end = (s_v / r).ln();
        if t_end == 0.0 {
            return Ok(f_at);
        }
        let sys = MaximalOde { s_v, c };
        let y0 = Vector2::new(f_at, df_at);
        let mut solver = Dopri5::new(sys, 0.0, t_end, t_end, y0, 1e-13, 1e-14);
        solver.set_output(OutputType::Sparse);
        solver.integrate().map_err(|e| LabError::Internal(format!("ode integration failed: {}", e)))?;
        solver
            .y_out()
            .last()
            .map(|y| y[0])
            .ok_or_else(|| LabError::Internal("ode produced no output".into()))
    });
    out.into_iter().collect()
}

pub fn minimal_real_weight(kappa: usize) -> Result<WeightFamily> {
    let w = WeightFamily::minimal_real(kappa);
    w.validate()?;
    Ok(w)
}

/// Radial real Laplacian `f'' + (κ − 1) f'/r`.
pub fn real_radial_laplacian(d: &DerivTriple, r: f64, kappa: usize) -> f64 {
    d.d2 + (kappa as f64 - 1.0) * d.d1 / r
}

pub fn laplacian_residual(w: &WeightFamily, r: f64) -> Result<f64> {
    if w.kind != WeightKind::MinimalReal {
        return arg("laplacian residual is defined for the minimal-real family");
    }
    if !(r > 0.0) {
        return arg("radius must be positive");
    }
    Ok(real_radial_laplacian(&eval_weight(w, r)?, r, w.kappa))
}
