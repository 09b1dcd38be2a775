//! The flat model `C^k × T^{n−k}`, the radial weight families and their
//! exact eigenvalue profiles.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul};

use crate::error::{arg, LabError, Result};
use crate::garding::EigenProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatModel {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub tube_radius: f64,
    /// One period per tangent complex coordinate; both real directions of
    /// `z''_j` share the period.
    pub torus_periods: Vec<f64>,
}

impl FlatModel {
    pub fn new(n: usize, k: usize, m: usize, tube_radius: f64) -> Result<Self> {
        let periods = vec![2.0 * PI; n.saturating_sub(k)];
        Self::with_periods(n, k, m, tube_radius, periods)
    }

    pub fn with_periods(n: usize, k: usize, m: usize, tube_radius: f64, torus_periods: Vec<f64>) -> Result<Self> {
        let model = FlatModel { n, k, m, tube_radius, torus_periods };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return arg(format!("need 1 <= k <= n, got k = {}, n = {}", self.k, self.n));
        }
        if self.m == 0 || self.m > self.n {
            return arg(format!("need 1 <= m <= n, got m = {}", self.m));
        }
        if !(self.tube_radius > 0.0) || !self.tube_radius.is_finite() {
            return arg("tube_radius must be positive");
        }
        if self.torus_periods.len() != self.n - self.k {
            return arg(format!("expected {} torus periods, got {}", self.n - self.k, self.torus_periods.len()));
        }
        if self.torus_periods.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return arg("torus periods must be positive");
        }
        Ok(())
    }

    pub fn tangent_dim(&self) -> usize {
        self.n - self.k
    }

    /// Order of the envelope weight: `m` for `m ≤ k`, and `k` otherwise
    /// (there `ψ_V = log r`).
    pub fn weight_order(&self) -> usize {
        self.m.min(self.k)
    }

    /// `k / m'` with `m'` the weight order.
    pub fn q(&self) -> f64 {
        self.k as f64 / self.weight_order() as f64
    }

    /// Real torus volume `Π P_j²`.
    pub fn torus_volume(&self) -> f64 {
        self.torus_periods.iter().map(|p| p * p).product()
    }

    /// Area of the unit sphere `S^{2k−1}`.
    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.k)
    }

    /// The envelope weight `ψ_V`.
    pub fn psi_v(&self) -> WeightFamily {
        WeightFamily::g_pure(self.k, self.weight_order())
    }

    /// Value of `ψ_V` at normal radius `r`.
    pub fn psi_v_at(&self, r: f64) -> Result<f64> {
        Ok(eval_weight(&self.psi_v(), r)?.value)
    }

    /// Exhaustion surrogate `|z'|² + |z''|² − tube_radius²`.
    pub fn exhaustion(&self, normal_sq: f64, tangent_sq: f64) -> f64 {
        normal_sq + tangent_sq - self.tube_radius * self.tube_radius
    }
}

pub fn sphere_area(k: usize) -> f64 {
    let mut fact = 1.0;
    for i in 2..k {
        fact *= i as f64;
    }
    2.0 * PI.powi(k as i32) / fact
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    GSub,
    GSuper,
    GPure,
    FNu,
    MinimalReal,
}

/// `γ · Φ(h(r_ε))` with `r_ε = √(r² + ε)`, `h(s) = s + A·s^{1+δ}` and `Φ`
/// either the pole `G_m` or the comparison power `F_ν`. The minimal-real
/// kind is `−γ r^{2−κ}` in real codimension `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFamily {
    pub kind: WeightKind,
    pub k: usize,
    pub m: usize,
    pub delta: f64,
    pub nu: f64,
    pub kappa: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub sign: f64,
}

impl WeightFamily {
    fn base(kind: WeightKind, k: usize, m: usize) -> Self {
        WeightFamily { kind, k, m, delta: 0.0, nu: 0.0, kappa: 0, epsilon: 0.0, gamma: 1.0, sign: 0.0 }
    }

    pub fn g_pure(k: usize, m: usize) -> Self {
        Self::base(WeightKind::GPure, k, m)
    }

    pub fn g_sub(k: usize, m: usize, delta: f64, epsilon: f64) -> Self {
        WeightFamily { delta, epsilon, sign: 1.0, ..Self::base(WeightKind::GSub, k, m) }
    }

    pub fn g_super(k: usize, m: usize, delta: f64) -> Self {
        WeightFamily { delta, sign: -1.0, ..Self::base(WeightKind::GSuper, k, m) }
    }

    /// Unperturbed `F_ν(r)`.
    pub fn f_nu(k: usize, m: usize, nu: f64) -> Self {
        WeightFamily { nu, ..Self::base(WeightKind::FNu, k, m) }
    }

    /// `F_ν(h(r_ε))` with the lower perturbation `A = +1`.
    pub fn f_nu_perturbed(k: usize, m: usize, nu: f64, delta: f64, epsilon: f64) -> Self {
        WeightFamily { nu, delta, epsilon, sign: 1.0, ..Self::base(WeightKind::FNu, k, m) }
    }

    pub fn minimal_real(kappa: usize) -> Self {
        WeightFamily { kappa, ..Self::base(WeightKind::MinimalReal, 0, 0) }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn q(&self) -> f64 {
        self.k as f64 / self.m as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() {
            return arg("gamma must be finite");
        }
        if self.kind == WeightKind::MinimalReal {
            if self.kappa < 3 {
                return arg(format!("real codimension {} < 3", self.kappa));
            }
            return Ok(());
        }
        if self.k == 0 || self.m == 0 {
            return arg("k and m must be positive");
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return arg("epsilon must be nonnegative");
        }
        match self.kind {
            WeightKind::GPure | WeightKind::GSub | WeightKind::GSuper => {
                if self.m > self.k {
                    return arg(format!("G_m needs m <= k, got k = {}, m = {}", self.k, self.m));
                }
            }
            _ => {}
        }
        let expected_sign = match self.kind {
            WeightKind::GSub => Some(1.0),
            WeightKind::GSuper => Some(-1.0),
            WeightKind::GPure => Some(0.0),
            _ => None,
        };
        if let Some(s) = expected_sign {
            if self.sign != s {
                return Err(LabError::Argument(format!("{:?} requires A = {}", self.kind, s)));
            }
        }
        if self.sign != 0.0 && self.sign.abs() != 1.0 {
            return arg("perturbation sign must be -1, 0 or 1");
        }
        if self.sign != 0.0 && !(self.delta > 0.0) {
            return arg("perturbation exponent delta must be positive");
        }
        if self.kind == WeightKind::GSub || self.kind == WeightKind::GSuper {
            let bound = crate::weights::admissible_delta_bound(self.k, self.m);
            if !(self.delta > bound) {
                return Err(LabError::Constraint(format!("delta = {} must exceed {}", self.delta, bound)));
            }
        }
        if self.kind == WeightKind::GSuper && self.epsilon != 0.0 {
            return Err(LabError::Constraint("superweights are unregularized (epsilon = 0)".into()));
        }
        if self.kind == WeightKind::FNu && !(self.nu > 0.0 && self.nu.is_finite()) {
            return arg("nu must be positive");
        }
        Ok(())
    }
}

/// Value and first two radial derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivTriple {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl DerivTriple {
    pub fn new(value: f64, d1: f64, d2: f64) -> Self {
        DerivTriple { value, d1, d2 }
    }

    pub fn constant(c: f64) -> Self {
        DerivTriple { value: c, d1: 0.0, d2: 0.0 }
    }

    pub fn product(self, o: DerivTriple) -> DerivTriple {
        DerivTriple {
            value: self.value * o.value,
            d1: self.d1 * o.value + self.value * o.d1,
            d2: self.d2 * o.value + 2.0 * self.d1 * o.d1 + self.value * o.d2,
        }
    }
}

impl Add for DerivTriple {
    type Output = DerivTriple;
    fn add(self, o: DerivTriple) -> DerivTriple {
        DerivTriple { value: self.value + o.value, d1: self.d1 + o.d1, d2: self.d2 + o.d2 }
    }
}

impl Mul<f64> for DerivTriple {
    type Output = DerivTriple;
    fn mul(self, c: f64) -> DerivTriple {
        DerivTriple { value: self.value * c, d1: self.d1 * c, d2: self.d2 * c }
    }
}

/// `G_m(t)` for the pair `(k, m)`: `log t` if `k = m`, else `−t^{2−2k/m}`.
pub(crate) fn pole(k: usize, m: usize, t: f64) -> (f64, f64, f64) {
    if k == m {
        (t.ln(), 1.0 / t, -1.0 / (t * t))
    } else {
        let p = 2.0 - 2.0 * k as f64 / m as f64;
        (-t.powf(p), -p * t.powf(p - 1.0), -p * (p - 1.0) * t.powf(p - 2.0))
    }
}

/// `F_ν(t)`: `t^{2−2ν}` for `ν < 1`, `log t` at `ν = 1`, `−t^{2−2ν}` above.
pub(crate) fn comparison_power(nu: f64, t: f64) -> (f64, f64, f64) {
    if (nu - 1.0).abs() < 1e-15 {
        return (t.ln(), 1.0 / t, -1.0 / (t * t));
    }
    let p = 2.0 - 2.0 * nu;
    let s = if nu < 1.0 { 1.0 } else { -1.0 };
    (s * t.powf(p), s * p * t.powf(p - 1.0), s * p * (p - 1.0) * t.powf(p - 2.0))
}

/// `h(s) = s + A·s^{1+δ}` and its derivatives.
pub(crate) fn perturbation(sign: f64, delta: f64, s: f64) -> (f64, f64, f64) {
    if sign == 0.0 {
        return (s, 1.0, 0.0);
    }
    let sd = s.powf(delta);
    (s + sign * s * sd, 1.0 + sign * (1.0 + delta) * sd, sign * delta * (1.0 + delta) * sd / s)
}

pub fn eval_weight(w: &WeightFamily, r: f64) -> Result<DerivTriple> {
    w.validate()?;
    if !(r >= 0.0) || !r.is_finite() {
        return arg(format!("radius {} must be nonnegative and finite", r));
    }
    if w.kind == WeightKind::MinimalReal {
        if r == 0.0 {
            return Err(LabError::Singularity("minimal weight at r = 0".into()));
        }
        let p = 2.0 - w.kappa as f64;
        let g = w.gamma;
        return Ok(DerivTriple::new(-g * r.powf(p), -g * p * r.powf(p - 1.0), -g * p * (p - 1.0) * r.powf(p - 2.0)));
    }
    if r == 0.0 && w.epsilon == 0.0 {
        return Err(LabError::Singularity("unregularized weight at r = 0".into()));
    }
    let s = (r * r + w.epsilon).sqrt();
    let (s1, s2) = (r / s, w.epsilon / (s * s * s));
    let (h, h1, h2) = perturbation(w.sign, w.delta, s);
    if !(h > 0.0) {
        return arg(format!("perturbed radius is nonpositive at r = {}", r));
    }
    let (g0, g1, g2) = match w.kind {
        WeightKind::FNu => comparison_power(w.nu, h),
        _ => pole(w.k, w.m, h),
    };
    let u1 = h1 * s1;
    let u2 = h2 * s1 * s1 + h1 * s2;
    Ok(DerivTriple::new(w.gamma * g0, w.gamma * g1 * u1, w.gamma * (g2 * u1 * u1 + g1 * u2)))
}

/// `(λ_rad, λ_tan)` of the coordinate complex Hessian of `f(|z'|)`.
pub(crate) fn radial_pair(d: &DerivTriple, r: f64) -> (f64, f64) {
    ((d.d2 + d.d1 / r) / 4.0, d.d1 / (2.0 * r))
}

pub fn radial_eigprofile(d: &DerivTriple, r: f64, model: &FlatModel) -> Result<EigenProfile> {
    if !(r > 0.0) || !r.is_finite() {
        return arg(format!("radius {} must be positive", r));
    }
    let (rad, tan) = radial_pair(d, r);
    EigenProfile::new(rad, tan, model.k, model.n)
}

/// `λ_rad / λ_tan` for a radial weight.
pub fn profile_ratio_check(w: &WeightFamily, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return arg(format!("radius {} must be positive", r));
    }
    let d = eval_weight(w, r)?;
    let (rad, tan) = radial_pair(&d, r);
    if tan == 0.0 {
        return Err(LabError::DegenerateProfile(format!("lambda_tan = 0 at r = {}", r)));
    }
    Ok(rad / tan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_and_power_poles() {
        let d = eval_weight(&WeightFamily::g_pure(2, 2), (-1f64).exp()).unwrap();
        let e = 1f64.exp();
        assert!((d.value + 1.0).abs() < 1e-15);
        assert!((d.d1 - e).abs() < 1e-13);
        assert!((d.d2 + e * e).abs() < 1e-13);
        let d = eval_weight(&WeightFamily::g_pure(2, 1), 0.5).unwrap();
        assert!((d.value + 4.0).abs() < 1e-14);
        assert!((d.d1 - 16.0).abs() < 1e-13);
        assert!((d.d2 + 96.0).abs() < 1e-12);
    }

    #[test]
    fn subweight_has_pole_singularity() {
        let w = WeightFamily::g_sub(2, 1, 3.0, 0.0);
        let g = WeightFamily::g_pure(2, 1);
        let r = 1e-4;
        let ratio = eval_weight(&w, r).unwrap().value / eval_weight(&g, r).unwrap().value;
        assert!((ratio - 1.0).abs() < 1e-10);
    }

    #[test]
    fn profile_examples() {
        let model = FlatModel::new(3, 3, 2, 1.0).unwrap();
        let d = DerivTriple::new(-1.0, 1.0, -2.0);
        let p = radial_eigprofile(&d, 1.0, &model).unwrap();
        assert_eq!((p.lambda_rad, p.lambda_tan), (-0.25, 0.5));
        let model = FlatModel::new(2, 2, 2, 1.0).unwrap();
        let r = 0.3;
        let p = radial_eigprofile(&eval_weight(&WeightFamily::g_pure(2, 2), r).unwrap(), r, &model).unwrap();
        assert!(p.lambda_rad.abs() < 1e-12);
        assert!((p.lambda_tan - 0.5 / (r * r)).abs() < 1e-12);
        assert!(radial_eigprofile(&d, 0.0, &model).is_err());
    }

    #[test]
    fn ratios() {
        assert!((profile_ratio_check(&WeightFamily::g_pure(3, 2), 0.2).unwrap() + 0.5).abs() < 1e-14);
        assert!(profile_ratio_check(&WeightFamily::g_pure(2, 2), 0.2).unwrap().abs() < 1e-14);
        assert!((profile_ratio_check(&WeightFamily::g_pure(2, 1), 0.2).unwrap() + 1.0).abs() < 1e-13);
    }

    #[test]
    fn singular_and_invalid() {
        assert!(matches!(eval_weight(&WeightFamily::g_pure(2, 2), 0.0), Err(LabError::Singularity(_))));
        assert!(eval_weight(&WeightFamily::g_sub(2, 1, 3.0, 1e-4), 0.0).is_ok());
        assert!(matches!(eval_weight(&WeightFamily::g_sub(2, 1, 1.5, 0.0), 0.1), Err(LabError::Constraint(_))));
        assert!(eval_weight(&WeightFamily::minimal_real(2), 0.1).is_err());
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(1) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((sphere_area(3) - PI.powi(3)).abs() < 1e-12);
    }
}
