//! Scalar fields on the flat model, finite-difference complex Hessians,
//! pointwise Γ^m scans and the localized weights `ψ_θ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{arg, LabError, Result};
use crate::exec;
use crate::fit::log_spaced_desc;
use crate::garding::{gamma_m_test_with_floor, ConeStatus, HermitianMatrix, C64};
use crate::profiles::{eval_weight, DerivTriple, FlatModel, WeightFamily, WeightKind};
use crate::weights::admissible_delta_bound;

/// A point `(z', z'')` of the flat model. Tangent coordinates are lifts of
/// torus coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub z_normal: Vec<C64>,
    pub z_tangent: Vec<C64>,
}

impl Point {
    pub fn new(z_normal: Vec<C64>, z_tangent: Vec<C64>) -> Self {
        Point { z_normal, z_tangent }
    }

    /// `z' = (r, 0, …, 0)` over the torus point with real coordinates `u`.
    pub fn on_axis(r: f64, k: usize, u: &[f64]) -> Self {
        let mut z = vec![C64::new(0.0, 0.0); k];
        z[0] = C64::new(r, 0.0);
        Point { z_normal: z, z_tangent: complex_from_real(u) }
    }

    /// `z' = r·dir` with `dir` a unit vector in `C^k`.
    pub fn from_direction(r: f64, dir: &[C64], u: &[f64]) -> Self {
        Point { z_normal: dir.iter().map(|d| d * r).collect(), z_tangent: complex_from_real(u) }
    }

    pub fn dim(&self) -> usize {
        self.z_normal.len() + self.z_tangent.len()
    }

    pub fn normal_radius(&self) -> f64 {
        self.z_normal.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Real torus coordinates `(Re z''_1, Im z''_1, …)`.
    pub fn torus_coords(&self) -> Vec<f64> {
        real_from_complex(&self.z_tangent)
    }

    /// All real coordinates, normal block first.
    pub fn to_real(&self) -> Vec<f64> {
        let mut v = real_from_complex(&self.z_normal);
        v.extend(real_from_complex(&self.z_tangent));
        v
    }

    pub fn from_real(k: usize, coords: &[f64]) -> Self {
        let all = complex_from_real(coords);
        Point { z_normal: all[..k].to_vec(), z_tangent: all[k..].to_vec() }
    }
}

fn real_from_complex(z: &[C64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn complex_from_real(u: &[f64]) -> Vec<C64> {
    u.chunks(2).map(|c| C64::new(c[0], *c.get(1).unwrap_or(&0.0))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaTerm {
    /// Integer frequencies, one per real torus direction.
    pub frequency: Vec<i32>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Coefficient list of a trigonometric polynomial on the torus:
/// `offset + Σ amplitude·cos(2π Σ_i f_i u_i / P_i + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    pub offset: f64,
    #[serde(default)]
    pub terms: Vec<ThetaTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaField {
    pub spec: ThetaSpec,
    pub periods: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub argmin: Vec<f64>,
    #[serde(skip)]
    omegas: Vec<Vec<f64>>,
}

/// Axis-aligned box of real torus coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPatch {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl TorusPatch {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
            return arg("patch needs lo < hi in every direction");
        }
        Ok(TorusPatch { lo, hi })
    }

    pub fn around(center: &[f64], half_width: f64) -> Result<Self> {
        Self::new(center.iter().map(|c| c - half_width).collect(), center.iter().map(|c| c + half_width).collect())
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

impl ThetaField {
    pub fn new(spec: ThetaSpec, periods: Vec<f64>) -> Result<Self> {
        let dims = 2 * periods.len();
        if periods.iter().any(|p| !(*p > 0.0)) {
            return arg("periods must be positive");
        }
        if !spec.offset.is_finite() {
            return arg("theta offset must be finite");
        }
        let mut omegas = Vec::with_capacity(spec.terms.len());
        for (i, t) in spec.terms.iter().enumerate() {
            if t.frequency.len() != dims {
                return arg(format!("theta term {}: expected {} frequencies, got {}", i, dims, t.frequency.len()));
            }
            if !t.amplitude.is_finite() || !t.phase.is_finite() {
                return arg(format!("theta term {}: non-finite coefficient", i));
            }
            omegas.push(t.frequency.iter().enumerate().map(|(d, f)| 2.0 * PI * *f as f64 / periods[d / 2]).collect());
        }
        let mut field = ThetaField { spec, periods, min: 0.0, max: 0.0, argmin: vec![0.0; dims], omegas };
        let (min, argmin) = field.extremum(1.0);
        let (max, _) = field.extremum(-1.0);
        field.min = min;
        field.max = max;
        field.argmin = argmin;
        if field.min < -1e-12 * field.max.abs().max(1.0) {
            return Err(LabError::Constraint(format!("theta takes negative values (min {:.6e})", field.min)));
        }
        Ok(field)
    }

    pub fn constant(c: f64, periods: Vec<f64>) -> Result<Self> {
        Self::new(ThetaSpec { offset: c, terms: vec![] }, periods)
    }

    /// `c0 + Σ_i a_i cos(x_i-frequency·u + φ)` along the first real direction.
    pub fn cosine(offset: f64, amplitude: f64, frequency: i32, periods: Vec<f64>) -> Result<Self> {
        let mut f = vec![0; 2 * periods.len()];
        if f.is_empty() {
            return arg("cosine theta needs at least one torus direction");
        }
        f[0] = frequency;
        Self::new(ThetaSpec { offset, terms: vec![ThetaTerm { frequency: f, amplitude, phase: 0.0 }] }, periods)
    }

    pub fn from_json(text: &str, periods: Vec<f64>) -> Result<Self> {
        let spec: ThetaSpec = serde_json::from_str(text).map_err(|e| LabError::Argument(format!("theta json: {}", e)))?;
        Self::new(spec, periods)
    }

    /// Same field shifted so that its minimum is 0.
    pub fn normalized_to_min_zero(&self) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.offset -= self.min;
        let mut f = Self::new(spec, self.periods.clone())?;
        if f.min.abs() < 1e-12 {
            f.min = 0.0;
        }
        Ok(f)
    }

    pub fn dims(&self) -> usize {
        2 * self.periods.len()
    }

    pub fn is_constant(&self) -> bool {
        self.spec.terms.iter().all(|t| t.amplitude == 0.0 || t.frequency.iter().all(|f| *f == 0))
    }

    fn phase_of(&self, i: usize, u: &[f64]) -> f64 {
        self.omegas[i].iter().zip(u).map(|(w, x)| w * x).sum::<f64>() + self.spec.terms[i].phase
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        let mut v = self.spec.offset;
        for (i, t) in self.spec.terms.iter().enumerate() {
            v += t.amplitude * self.phase_of(i, u).cos();
        }
        v
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; u.len()];
        for (i, t) in self.spec.terms.iter().enumerate() {
            let s = -t.amplitude * self.phase_of(i, u).sin();
            for (gd, w) in g.iter_mut().zip(&self.omegas[i]) {
                *gd += s * w;
            }
        }
        g
    }

    /// Real Laplacian in the torus coordinates.
    pub fn laplacian(&self, u: &[f64]) -> f64 {
        let mut l = 0.0;
        for (i, t) in self.spec.terms.iter().enumerate() {
            let w2: f64 = self.omegas[i].iter().map(|w| w * w).sum();
            l -= t.amplitude * w2 * self.phase_of(i, u).cos();
        }
        l
    }

    pub fn mean(&self) -> f64 {
        self.spec.offset
            + self
                .spec
                .terms
                .iter()
                .filter(|t| t.frequency.iter().all(|f| *f == 0))
                .map(|t| t.amplitude * t.phase.cos())
                .sum::<f64>()
    }

    /// Exact average over a box of torus coordinates.
    pub fn patch_mean(&self, patch: &TorusPatch) -> Result<f64> {
        if patch.lo.len() != self.dims() {
            return arg("patch dimension does not match theta");
        }
        let mut total = self.spec.offset;
        for (i, t) in self.spec.terms.iter().enumerate() {
            let mut acc = C64::new(0.0, t.phase).exp();
            for (d, w) in self.omegas[i].iter().enumerate() {
                let (a, b) = (patch.lo[d], patch.hi[d]);
                let f = if *w == 0.0 {
                    C64::new(b - a, 0.0)
                } else {
                    (C64::new(0.0, w * b).exp() - C64::new(0.0, w * a).exp()) / C64::new(0.0, *w)
                };
                acc *= f / (b - a);
            }
            total += t.amplitude * acc.re;
        }
        Ok(total)
    }

    /// Minimize `sign·θ`: dense sampling followed by gradient descent from
    /// the best samples.
    fn extremum(&self, sign: f64) -> (f64, Vec<f64>) {
        let d = self.dims();
        if d == 0 || self.is_constant() {
            let v = self.value(&vec![0.0; d]);
            return (v, vec![0.0; d]);
        }
        let fmax = self.spec.terms.iter().flat_map(|t| t.frequency.iter()).map(|f| f.unsigned_abs() as usize).max().unwrap_or(1);
        let mut per = (8 * fmax).max(16);
        while (per as f64).powi(d as i32) > (1u64 << 18) as f64 && per > 4 {
            per /= 2;
        }
        let total = per.pow(d as u32);
        let coords = |mut idx: usize| -> Vec<f64> {
            let mut u = vec![0.0; d];
            for (j, x) in u.iter_mut().enumerate() {
                *x = (idx % per) as f64 * self.periods[j / 2] / per as f64;
                idx /= per;
            }
            u
        };
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(5);
        for idx in 0..total {
            let v = sign * self.value(&coords(idx));
            if best.len() < 4 || v < best[best.len() - 1].0 {
                best.push((v, idx));
                best.sort_by(|a, b| a.0.total_cmp(&b.0));
                best.truncate(4);
            }
        }
        let mut out = (f64::INFINITY, vec![0.0; d]);
        for (v0, idx) in best {
            let mut u = coords(idx);
            let mut v = v0;
            let mut step = self.periods.iter().cloned().fold(f64::MAX, f64::min) / per as f64;
            for _ in 0..200 {
                let g: Vec<f64> = self.gradient(&u).iter().map(|x| sign * x).collect();
                let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                if gn < 1e-15 {
                    break;
                }
                let mut moved = false;
                while step > 1e-16 {
                    let cand: Vec<f64> = u.iter().zip(&g).map(|(x, gx)| x - step * gx / gn).collect();
                    let cv = sign * self.value(&cand);
                    if cv < v {
                        u = cand;
                        v = cv;
                        moved = true;
                        step *= 1.5;
                        break;
                    }
                    step *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            if v < out.0 {
                out = (v, u);
            }
        }
        (sign * out.0, out.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TorusFactor {
    One,
    Theta(ThetaField),
    /// `|z''|²` of the lifted coordinates.
    TangentSquare,
}

impl TorusFactor {
    fn value(&self, u: &[f64]) -> f64 {
        match self {
            TorusFactor::One => 1.0,
            TorusFactor::Theta(t) => t.value(u),
            TorusFactor::TangentSquare => u.iter().map(|x| x * x).sum(),
        }
    }

    fn laplacian(&self, u: &[f64]) -> f64 {
        match self {
            TorusFactor::One => 0.0,
            TorusFactor::Theta(t) => t.laplacian(u),
            TorusFactor::TangentSquare => 2.0 * u.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RadialFactor {
    One,
    Weight(WeightFamily),
    LogRadius,
    RadiusSquared,
    /// Weight multiplied by a smoothstep equal to 1 below `inner` and 0 above `outer`.
    CutoffWeight { weight: WeightFamily, inner: f64, outer: f64 },
}

pub fn smoothstep_cutoff(r: f64, inner: f64, outer: f64) -> DerivTriple {
    if r <= inner {
        return DerivTriple::constant(1.0);
    }
    if r >= outer {
        return DerivTriple::constant(0.0);
    }
    let w = outer - inner;
    let t = (r - inner) / w;
    DerivTriple::new(1.0 - t * t * (3.0 - 2.0 * t), -6.0 * t * (1.0 - t) / w, -(6.0 - 12.0 * t) / (w * w))
}

impl RadialFactor {
    fn eval(&self, r: f64) -> Result<DerivTriple> {
        match self {
            RadialFactor::One => Ok(DerivTriple::constant(1.0)),
            RadialFactor::Weight(w) => eval_weight(w, r),
            RadialFactor::LogRadius => {
                if r == 0.0 {
                    return Err(LabError::Singularity("log|z'| at r = 0".into()));
                }
                Ok(DerivTriple::new(r.ln(), 1.0 / r, -1.0 / (r * r)))
            }
            RadialFactor::RadiusSquared => Ok(DerivTriple::new(r * r, 2.0 * r, 2.0)),
            RadialFactor::CutoffWeight { weight, inner, outer } => {
                let chi = smoothstep_cutoff(r, *inner, *outer);
                if chi.value == 0.0 && chi.d1 == 0.0 && chi.d2 == 0.0 {
                    return Ok(DerivTriple::constant(0.0));
                }
                Ok(chi.product(eval_weight(weight, r)?))
            }
        }
    }

    fn singular(&self) -> bool {
        match self {
            RadialFactor::One | RadialFactor::RadiusSquared => false,
            RadialFactor::LogRadius => true,
            RadialFactor::Weight(w) | RadialFactor::CutoffWeight { weight: w, .. } => {
                w.kind == WeightKind::MinimalReal || w.epsilon == 0.0
            }
        }
    }
}

/// `coeff · T(z'') · R(|z'|)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparableTerm {
    pub coeff: f64,
    pub torus: TorusFactor,
    pub radial: RadialFactor,
}

/// Exact local quantities of a separable field at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalData {
    pub value: f64,
    /// `∂_r F`.
    pub dr: f64,
    /// Trace of the complex Hessian over the normal block.
    pub normal_trace: f64,
    /// Trace over the tangent block.
    pub tangent_trace: f64,
    /// Radial and tangential eigenvalues of the normal block (adapted frame).
    pub lambda_rad: f64,
    pub lambda_tan: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizeCertificate {
    pub c: f64,
    pub attempts: Vec<LocalizeAttempt>,
    pub scan_points: usize,
    pub min_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizeAttempt {
    pub c: f64,
    pub n_outside: usize,
    pub n_errors: usize,
    pub min_margin: f64,
}

/// `ψ_θ = θ(z'')·χ(r)·G_m(h(r)) + C·F_ν(h(r))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizedField {
    pub theta: ThetaField,
    pub weight: WeightFamily,
    pub correction: WeightFamily,
    pub c: f64,
    pub cutoff_inner: f64,
    pub cutoff_outer: f64,
    pub certificate: Option<LocalizeCertificate>,
}

impl LocalizedField {
    pub fn new(theta: ThetaField, nu: f64, k: usize, m: usize, delta: f64, c: f64, model: &FlatModel) -> Result<Self> {
        let weight = WeightFamily::g_sub(k, m, delta, 0.0);
        weight.validate()?;
        let correction = WeightFamily::f_nu_perturbed(k, m, nu, delta, 0.0);
        correction.validate()?;
        if theta.periods != model.torus_periods {
            return arg("theta periods differ from the model");
        }
        Ok(LocalizedField {
            theta,
            weight,
            correction,
            c,
            cutoff_inner: model.tube_radius / 2.0,
            cutoff_outer: model.tube_radius,
            certificate: None,
        })
    }

    fn terms(&self) -> Vec<SeparableTerm> {
        vec![
            SeparableTerm {
                coeff: 1.0,
                torus: TorusFactor::Theta(self.theta.clone()),
                radial: RadialFactor::CutoffWeight { weight: self.weight, inner: self.cutoff_inner, outer: self.cutoff_outer },
            },
            SeparableTerm { coeff: self.c, torus: TorusFactor::One, radial: RadialFactor::Weight(self.correction) },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ScalarField {
    Radial(WeightFamily),
    Localized(LocalizedField),
    /// `θ(z'')·log|z'|`.
    ScaledLog(ThetaField),
    /// `a|z'|² + b|z''|²`.
    Quadratic { normal: f64, tangent: f64 },
    Constant(f64),
    /// `Σ c_i F_i`.
    Sum(Vec<(f64, ScalarField)>),
    /// `max(F, floor)`. Not separable.
    Max { field: Box<ScalarField>, floor: f64 },
}

impl ScalarField {
    pub fn radial(w: WeightFamily) -> Self {
        ScalarField::Radial(w)
    }

    pub fn scaled(self, a: f64) -> Self {
        ScalarField::Sum(vec![(a, self)])
    }

    pub fn plus(self, other: ScalarField) -> Self {
        ScalarField::Sum(vec![(1.0, self), (1.0, other)])
    }

    pub fn label(&self) -> String {
        match self {
            ScalarField::Radial(w) => format!("radial({:?}, k={}, m={}, gamma={})", w.kind, w.k, w.m, w.gamma),
            ScalarField::Localized(l) => format!("localized(nu={}, C={})", l.correction.nu, l.c),
            ScalarField::ScaledLog(_) => "theta*log|z'|".into(),
            ScalarField::Quadratic { normal, tangent } => format!("{}|z'|^2 + {}|z''|^2", normal, tangent),
            ScalarField::Constant(c) => format!("constant({})", c),
            ScalarField::Sum(parts) => {
                parts.iter().map(|(c, f)| format!("{}*{}", c, f.label())).collect::<Vec<_>>().join(" + ")
            }
            ScalarField::Max { field, floor } => format!("max({}, {})", field.label(), floor),
        }
    }

    pub fn localized(&self) -> Option<&LocalizedField> {
        match self {
            ScalarField::Localized(l) => Some(l),
            _ => None,
        }
    }

    /// Flattened separable representation, or `None` for non-separable arms.
    pub fn separable_terms(&self) -> Option<Vec<SeparableTerm>> {
        let one = |coeff, torus, radial| SeparableTerm { coeff, torus, radial };
        match self {
            ScalarField::Radial(w) => Some(vec![one(1.0, TorusFactor::One, RadialFactor::Weight(*w))]),
            ScalarField::Localized(l) => Some(l.terms()),
            ScalarField::ScaledLog(t) => Some(vec![one(1.0, TorusFactor::Theta(t.clone()), RadialFactor::LogRadius)]),
            ScalarField::Quadratic { normal, tangent } => Some(vec![
                one(*normal, TorusFactor::One, RadialFactor::RadiusSquared),
                one(*tangent, TorusFactor::TangentSquare, RadialFactor::One),
            ]),
            ScalarField::Constant(c) => Some(vec![one(*c, TorusFactor::One, RadialFactor::One)]),
            ScalarField::Sum(parts) => {
                let mut out = Vec::new();
                for (c, f) in parts {
                    for mut t in f.separable_terms()? {
                        t.coeff *= c;
                        out.push(t);
                    }
                }
                Some(out)
            }
            ScalarField::Max { .. } => None,
        }
    }

    /// True when every separable term is independent of `z''`.
    pub fn is_radial(&self) -> bool {
        match self.separable_terms() {
            Some(terms) => terms.iter().all(|t| match &t.torus {
                TorusFactor::One => true,
                TorusFactor::Theta(th) => th.is_constant(),
                TorusFactor::TangentSquare => false,
            }),
            None => false,
        }
    }

    pub fn is_singular_on_v(&self) -> bool {
        match self {
            ScalarField::Max { field, .. } => field.is_singular_on_v(),
            _ => self.separable_terms().map(|ts| ts.iter().any(|t| t.radial.singular())).unwrap_or(true),
        }
    }

    pub fn eval(&self, p: &Point) -> Result<f64> {
        match self {
            ScalarField::Max { field, floor } => Ok(field.eval(p)?.max(*floor)),
            ScalarField::Sum(parts) => {
                let mut v = 0.0;
                for (c, f) in parts {
                    v += c * f.eval(p)?;
                }
                Ok(v)
            }
            _ => {
                let r = p.normal_radius();
                let u = p.torus_coords();
                let mut v = 0.0;
                for t in self.separable_terms().unwrap_or_default() {
                    check_torus(&t.torus, &u)?;
                    let tv = t.torus.value(&u);
                    if tv == 0.0 && t.radial.singular() {
                        continue;
                    }
                    v += t.coeff * tv * t.radial.eval(r)?.value;
                }
                Ok(v)
            }
        }
    }

    /// Exact value, radial derivative and Hessian traces for separable fields.
    pub fn local_data(&self, r: f64, u: &[f64], k: usize) -> Result<LocalData> {
        let terms = self
            .separable_terms()
            .ok_or_else(|| LabError::Argument(format!("{} is not separable", self.label())))?;
        if !(r > 0.0) {
            return arg("local data needs r > 0");
        }
        let kf = k as f64;
        let mut d = LocalData { value: 0.0, dr: 0.0, normal_trace: 0.0, tangent_trace: 0.0, lambda_rad: 0.0, lambda_tan: 0.0 };
        for t in terms {
            check_torus(&t.torus, u)?;
            let tv = t.torus.value(u);
            let tl = t.torus.laplacian(u);
            let rd = t.radial.eval(r)?;
            let c = t.coeff;
            d.value += c * tv * rd.value;
            d.dr += c * tv * rd.d1;
            let rad = (rd.d2 + rd.d1 / r) / 4.0;
            let tan = rd.d1 / (2.0 * r);
            d.lambda_rad += c * tv * rad;
            d.lambda_tan += c * tv * tan;
            d.normal_trace += c * tv * (rad + (kf - 1.0) * tan);
            d.tangent_trace += c * rd.value * tl / 4.0;
        }
        Ok(d)
    }
}

fn check_torus(t: &TorusFactor, u: &[f64]) -> Result<()> {
    if let TorusFactor::Theta(th) = t {
        if th.dims() != u.len() {
            return arg(format!("theta has {} torus dimensions, point has {}", th.dims(), u.len()));
        }
    }
    Ok(())
}

/// Evaluate a field at normal radius `r` along `z' = (r, 0, …)`.
pub fn eval_field(f: &ScalarField, p: &Point) -> Result<f64> {
    f.eval(p)
}

/// Central-difference coordinate complex Hessian.
pub fn fd_hessian(f: &ScalarField, p: &Point, step: f64) -> Result<HermitianMatrix> {
    if !(step > 0.0) || !step.is_finite() {
        return arg("step must be positive");
    }
    let r = p.normal_radius();
    if f.is_singular_on_v() && r <= 2.0 * step {
        return Err(LabError::Geometry(format!("stencil of size {} reaches V from r = {}", step, r)));
    }
    let k = p.z_normal.len();
    let x0 = p.to_real();
    let dim = x0.len();
    let eval_at = |x: &[f64]| f.eval(&Point::from_real(k, x));
    let f0 = eval_at(&x0)?;
    let h = step;
    let mut real = vec![0.0; dim * dim];
    let mut x = x0.clone();
    for i in 0..dim {
        x[i] = x0[i] + h;
        let fp = eval_at(&x)?;
        x[i] = x0[i] - h;
        let fm = eval_at(&x)?;
        x[i] = x0[i];
        real[i * dim + i] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in i + 1..dim {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                x[i] = x0[i] + si * h;
                x[j] = x0[j] + sj * h;
                let v = eval_at(&x);
                x[i] = x0[i];
                x[j] = x0[j];
                v
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?) / (4.0 * h * h);
            real[i * dim + j] = v;
            real[j * dim + i] = v;
        }
    }
    let n = dim / 2;
    HermitianMatrix::from_fn(n, |a, b| {
        let rr = |i: usize, j: usize| real[i * dim + j];
        let (xa, ya, xb, yb) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
        C64::new(0.25 * (rr(xa, xb) + rr(ya, yb)), 0.25 * (rr(xa, yb) - rr(ya, xb)))
    })
}

/// `(4·H(step/2) − H(step)) / 3`: fourth-order accurate.
pub fn fd_hessian_richardson(f: &ScalarField, p: &Point, step: f64) -> Result<HermitianMatrix> {
    let coarse = fd_hessian(f, p, step)?;
    let fine = fd_hessian(f, p, step / 2.0)?;
    fine.scaled(4.0 / 3.0).add(&coarse.scaled(-1.0 / 3.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub max_step: f64,
    pub relative: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy { max_step: 1e-3, relative: 0.1 }
    }
}

impl StepPolicy {
    pub fn step_at(&self, r: f64) -> f64 {
        if r > 0.0 {
            self.max_step.min(self.relative * r)
        } else {
            self.max_step
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub step: StepPolicy,
    pub richardson: bool,
    pub tolerance: f64,
    /// Hessians with `‖H‖ ≤ zero_floor·(|F| + 1)/r²` count as zero.
    pub zero_floor: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        ScanSettings { step: StepPolicy { max_step: 1e-3, relative: 1e-3 }, richardson: true, tolerance: 1e-6, zero_floor: 1e-7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGridSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub n_radii: usize,
    pub n_torus: usize,
    pub n_sphere: usize,
    pub seed: u64,
}

impl ScanGridSpec {
    pub fn for_model(model: &FlatModel, seed: u64) -> Self {
        ScanGridSpec { r_min: 1e-4, r_max: model.tube_radius / 4.0, n_radii: 20, n_torus: 16, n_sphere: 16, seed }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Rank-1 (Korobov) lattice of `count` points in the torus.
pub fn torus_lattice(periods: &[f64], count: usize) -> Vec<Vec<f64>> {
    let d = 2 * periods.len();
    if d == 0 || count == 0 {
        return vec![vec![]; count.max(1)];
    }
    let mut a = ((count as f64) * 0.618_033_988_7).round().max(1.0) as usize;
    while count > 1 && gcd(a, count) != 1 {
        a += 1;
    }
    (0..count)
        .map(|i| {
            let mut g = 1usize;
            (0..d)
                .map(|j| {
                    let v = ((i * g) % count) as f64 / count as f64 * periods[j / 2];
                    g = (g * a) % count.max(1);
                    v
                })
                .collect()
        })
        .collect()
}

/// Uniform torus grid with `per_dim` points per real direction.
pub fn torus_grid(periods: &[f64], per_dim: usize) -> Vec<Vec<f64>> {
    let d = 2 * periods.len();
    let total = per_dim.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut u = vec![0.0; d];
            for (j, x) in u.iter_mut().enumerate() {
                *x = (idx % per_dim) as f64 * periods[j / 2] / per_dim as f64;
                idx /= per_dim;
            }
            u
        })
        .collect()
}

/// Seeded unit vectors in `C^k` (normalized complex Gaussians).
pub fn sphere_directions(k: usize, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            if i == 0 {
                let mut e = vec![C64::new(0.0, 0.0); k];
                e[0] = C64::new(1.0, 0.0);
                return e;
            }
            loop {
                let v: Vec<C64> = (0..k)
                    .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                    .collect();
                let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if n > 1e-8 {
                    return v.iter().map(|z| z / n).collect();
                }
            }
        })
        .collect()
}

/// Log-spaced radii × torus lattice × normal sphere directions.
pub fn scan_grid(model: &FlatModel, spec: &ScanGridSpec) -> Result<Vec<Point>> {
    if !(spec.r_min > 0.0 && spec.r_max >= spec.r_min) || spec.n_radii == 0 || spec.n_sphere == 0 {
        return arg("invalid scan grid");
    }
    let radii = log_spaced_desc(spec.r_max, spec.r_min, spec.n_radii);
    let torus = torus_lattice(&model.torus_periods, spec.n_torus.max(1));
    let dirs = sphere_directions(model.k, spec.n_sphere, spec.seed);
    let mut pts = Vec::with_capacity(radii.len() * torus.len() * dirs.len());
    for r in &radii {
        for u in &torus {
            for d in &dirs {
                pts.push(Point::from_direction(*r, d, u));
            }
        }
    }
    Ok(pts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointVerdict {
    pub index: usize,
    pub r: f64,
    pub status: Option<ConeStatus>,
    pub margin: f64,
    pub worst_index: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub index: usize,
    pub point: Point,
    pub margin: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub m: usize,
    pub n_points: usize,
    pub n_inside: usize,
    pub n_boundary: usize,
    pub n_outside: usize,
    pub n_errors: usize,
    pub min_margin: f64,
    pub min_margin_index: Option<usize>,
    pub first_violation: Option<Violation>,
    pub points: Vec<PointVerdict>,
}

impl ScanReport {
    pub fn passes(&self) -> bool {
        self.n_outside == 0 && self.n_errors == 0
    }
}

fn scan_point(f: &ScalarField, model: &FlatModel, p: &Point, s: &ScanSettings) -> Result<(ConeStatus, f64, usize)> {
    if p.z_normal.len() != model.k || p.z_tangent.len() != model.n - model.k {
        return arg("point dimensions do not match the model");
    }
    let r = p.normal_radius();
    let h = s.step.step_at(r);
    if r + 2.0 * h > model.tube_radius {
        return Err(LabError::Geometry(format!("stencil at r = {} leaves the tube", r)));
    }
    let hess = if s.richardson { fd_hessian_richardson(f, p, h)? } else { fd_hessian(f, p, h)? };
    let scale = if r > 0.0 { (f.eval(p)?.abs() + 1.0) / (r * r) } else { 1.0 };
    let v = gamma_m_test_with_floor(&hess, model.m, s.tolerance, s.zero_floor * scale)?;
    Ok((v.status, v.margin, v.worst_index))
}

/// Apply the Γ^m test to the finite-difference Hessian at every grid point.
pub fn gamma_m_scan(f: &ScalarField, model: &FlatModel, grid: &[Point], settings: &ScanSettings) -> ScanReport {
    let results = exec::map_slice(grid, |p| scan_point(f, model, p, settings));
    let mut rep = ScanReport {
        m: model.m,
        n_points: grid.len(),
        n_inside: 0,
        n_boundary: 0,
        n_outside: 0,
        n_errors: 0,
        min_margin: f64::INFINITY,
        min_margin_index: None,
        first_violation: None,
        points: Vec::with_capacity(grid.len()),
    };
    for (i, (p, res)) in grid.iter().zip(results).enumerate() {
        let r = p.normal_radius();
        match res {
            Ok((status, margin, worst)) => {
                match status {
                    ConeStatus::StrictlyInside => rep.n_inside += 1,
                    ConeStatus::Boundary => rep.n_boundary += 1,
                    ConeStatus::Outside => {
                        rep.n_outside += 1;
                        if rep.first_violation.is_none() {
                            rep.first_violation = Some(Violation { index: i, point: p.clone(), margin, worst_index: worst });
                        }
                    }
                }
                if margin < rep.min_margin {
                    rep.min_margin = margin;
                    rep.min_margin_index = Some(i);
                }
                rep.points.push(PointVerdict { index: i, r, status: Some(status), margin, worst_index: worst, error: None });
            }
            Err(e) => {
                rep.n_errors += 1;
                rep.points.push(PointVerdict { index: i, r, status: None, margin: f64::NAN, worst_index: 0, error: Some(e.to_string()) });
            }
        }
    }
    rep
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizeSearch {
    /// Perturbation exponent; defaults to one above the admissible bound.
    pub delta: Option<f64>,
    pub c_start: f64,
    pub c_cap: f64,
    pub grid: ScanGridSpec,
    pub settings: ScanSettings,
}

impl LocalizeSearch {
    pub fn for_model(model: &FlatModel, seed: u64) -> Self {
        LocalizeSearch {
            delta: None,
            c_start: 1.0,
            c_cap: (1u64 << 20) as f64,
            grid: ScanGridSpec::for_model(model, seed),
            settings: ScanSettings::default(),
        }
    }
}

/// Admissible `ν` range `[lo, hi)` for the correction term.
pub fn nu_range(k: usize, m: usize) -> (f64, f64) {
    let q = k as f64 / m as f64;
    if m == 1 {
        (k as f64 - 1.0, k as f64)
    } else {
        (q - 0.5, q)
    }
}

/// Build `ψ_θ` and find the first `C = c_start·2^j` for which the grid scan
/// certifies Γ^m.
pub fn make_localized(theta: ThetaField, nu: f64, k: usize, m: usize, model: &FlatModel, search: &LocalizeSearch) -> Result<ScalarField> {
    model.validate()?;
    if model.k != k || model.m != m {
        return arg(format!("model has (k, m) = ({}, {}), requested ({}, {})", model.k, model.m, k, m));
    }
    if m > k {
        return arg("localized weights need m <= k");
    }
    let (lo, hi) = nu_range(k, m);
    if !(nu >= lo && nu < hi) {
        return Err(LabError::Constraint(format!("nu = {} outside [{}, {})", nu, lo, hi)));
    }
    if !(search.c_start > 0.0) || !(search.c_cap >= search.c_start) {
        return arg("invalid C search bounds");
    }
    let delta = search.delta.unwrap_or(admissible_delta_bound(k, m) + 1.0);
    let grid = scan_grid(model, &search.grid)?;
    let mut attempts = Vec::new();
    let mut c = search.c_start;
    while c <= search.c_cap {
        let field = LocalizedField::new(theta.clone(), nu, k, m, delta, c, model)?;
        let sf = ScalarField::Localized(field.clone());
        let rep = gamma_m_scan(&sf, model, &grid, &search.settings);
        attempts.push(LocalizeAttempt { c, n_outside: rep.n_outside, n_errors: rep.n_errors, min_margin: rep.min_margin });
        if rep.passes() {
            let cert = LocalizeCertificate { c, attempts, scan_points: grid.len(), min_margin: rep.min_margin };
            return Ok(ScalarField::Localized(LocalizedField { certificate: Some(cert), ..field }));
        }
        c *= 2.0;
    }
    Err(LabError::Construction(format!("no C <= {} certifies the localized weight", search.c_cap)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pi() -> Vec<f64> {
        vec![2.0 * PI]
    }

    #[test]
    fn theta_basics() {
        let t = ThetaField::cosine(1.0, 1.0, 1, two_pi()).unwrap();
        assert_eq!(t.min, 0.0);
        assert!((t.max - 2.0).abs() < 1e-12);
        assert!((t.mean() - 1.0).abs() < 1e-15);
        let half = TorusPatch::new(vec![-PI / 2.0, 0.0], vec![PI / 2.0, 2.0 * PI]).unwrap();
        assert!((t.patch_mean(&half).unwrap() - (1.0 + 2.0 / PI)).abs() < 1e-14);
        assert!(ThetaField::cosine(0.5, 1.0, 1, two_pi()).is_err());
        let j = ThetaField::from_json(r#"{"offset": 1.0, "terms": [{"frequency": [1, 0], "amplitude": 0.5}]}"#, two_pi()).unwrap();
        assert!((j.value(&[PI, 0.3]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn theta_derivatives_match_differences() {
        let t = ThetaField::from_json(
            r#"{"offset": 3.0, "terms": [{"frequency": [1, 2], "amplitude": 0.7, "phase": 0.3}, {"frequency": [0, 1], "amplitude": -0.4}]}"#,
            two_pi(),
        )
        .unwrap();
        let u = [0.4, 1.1];
        let h = 1e-4;
        let g = t.gradient(&u);
        let mut lap = 0.0;
        for d in 0..2 {
            let mut up = u;
            let mut dn = u;
            up[d] += h;
            dn[d] -= h;
            assert!(((t.value(&up) - t.value(&dn)) / (2.0 * h) - g[d]).abs() < 1e-7);
            lap += (t.value(&up) - 2.0 * t.value(&u) + t.value(&dn)) / (h * h);
        }
        assert!((lap - t.laplacian(&u)).abs() < 1e-5);
    }

    #[test]
    fn field_examples() {
        let p = Point::on_axis((-1f64).exp(), 2, &[0.1, 0.2]);
        let f = ScalarField::radial(WeightFamily::g_pure(2, 2));
        assert!((f.eval(&p).unwrap() + 1.0).abs() < 1e-15);
        let g = ScalarField::ScaledLog(ThetaField::constant(2.5, two_pi()).unwrap());
        let p = Point::on_axis(0.3, 1, &[0.1, 0.2]);
        assert!((g.eval(&p).unwrap() - 2.5 * 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn hessian_of_quadratic() {
        let f = ScalarField::Quadratic { normal: 1.0, tangent: 1.0 };
        let p = Point::new(vec![C64::new(0.2, 0.1)], vec![C64::new(0.4, -0.3)]);
        let h = fd_hessian(&f, &p, 1e-3).unwrap();
        let id = HermitianMatrix::identity(2).unwrap();
        assert!(h.max_abs_diff(&id) < 1e-8);
    }

    #[test]
    fn hessian_of_log_is_zero() {
        let f = ScalarField::ScaledLog(ThetaField::constant(1.0, vec![]).unwrap());
        let p = Point::new(vec![C64::new(0.3, 0.0)], vec![]);
        let h = fd_hessian(&f, &p, 1e-3).unwrap();
        assert!(h.operator_norm() < 1e-4);
        assert!(fd_hessian(&f, &p, 0.2).is_err());
    }

    #[test]
    fn lattice_is_inside_torus() {
        let pts = torus_lattice(&[2.0, 3.0], 16);
        assert_eq!(pts.len(), 16);
        for u in &pts {
            assert_eq!(u.len(), 4);
            assert!(u[0] >= 0.0 && u[0] < 2.0 && u[2] < 3.0);
        }
    }

    #[test]
    fn nu_at_upper_bound_is_rejected() {
        let model = FlatModel::new(3, 2, 2, 0.5).unwrap();
        let t = ThetaField::constant(1.0, model.torus_periods.clone()).unwrap();
        let s = LocalizeSearch::for_model(&model, 1);
        assert!(matches!(make_localized(t, 1.0, 2, 2, &model, &s), Err(LabError::Constraint(_))));
    }
}
