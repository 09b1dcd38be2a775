//! Tube integrals of the mixed Hessian measure around V, generalized Lelong
//! numbers as scaled limits, sublevel-set series and polar densities.

use gauss_quad::legendre::GaussLegendre;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::num::NonZeroUsize;
use std::path::Path;

use crate::error::{arg, LabError, Result};
use crate::exec;
use crate::fields::{torus_grid, LocalData, ScalarField, TorusPatch};
use crate::fit::{extrapolate_limit, LimitFit, LimitFitOptions};
use crate::garding::{binomial, mixed_sigma_diag};
use crate::profiles::{eval_weight, radial_pair, FlatModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TubeMethod {
    /// One-dimensional quadrature in `r`; radial fields only.
    RadialQuadrature,
    /// Boundary flux through `{r = s}`.
    Flux,
    /// Stratified Monte Carlo in `log r` and the torus.
    MonteCarlo { samples_per_stratum: usize, seed: u64 },
    /// Product Gauss–Legendre (in `log r`) × trapezoid (torus) rule.
    Cubature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeOptions {
    /// Trapezoid points per real torus direction.
    pub torus_per_dim: usize,
    /// Depth `T` of the substitution `r = s·e^{−t}`, `t ∈ [0, T]`.
    pub log_depth: f64,
    pub gl_order: usize,
    pub mc_strata: usize,
    pub mc_depth: f64,
    /// Relative standard error above which a warning is attached.
    pub mc_warn_rel: f64,
}

impl Default for TubeOptions {
    fn default() -> Self {
        TubeOptions { torus_per_dim: 32, log_depth: 50.0, gl_order: 16, mc_strata: 8, mc_depth: 30.0, mc_warn_rel: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TubeIntegral {
    pub value: f64,
    pub std_error: Option<f64>,
    pub warning: Option<String>,
}

fn torus_dims_check(model: &FlatModel, u: &[f64]) -> Result<()> {
    if u.len() != 2 * model.tangent_dim() {
        return Err(LabError::Internal("torus node dimension mismatch".into()));
    }
    Ok(())
}

/// Mixed density against `∂∂̄|z'|²`: `C(k−1,m−1)·tr_{z'} + C(k,m−1)·tr_{z''}`.
fn tube_density(d: &LocalData, model: &FlatModel) -> f64 {
    let (k, m) = (model.k, model.m);
    binomial(k - 1, m - 1) * d.normal_trace + binomial(k, m - 1) * d.tangent_trace
}

struct TorusRule {
    nodes: Vec<Vec<f64>>,
    weight: f64,
}

impl TorusRule {
    fn uniform(model: &FlatModel, per_dim: usize) -> Self {
        let nodes = torus_grid(&model.torus_periods, per_dim);
        let weight = model.torus_volume() / nodes.len() as f64;
        TorusRule { nodes, weight }
    }
}

fn log_radial_nodes(s: f64, opts: &TubeOptions) -> Vec<(f64, f64)> {
    let gl = GaussLegendre::new(NonZeroUsize::new(opts.gl_order.max(2)).unwrap());
    let pairs = gl.as_node_weight_pairs();
    let panels = opts.log_depth.ceil().max(1.0) as usize;
    let width = opts.log_depth / panels as f64;
    let mut out = Vec::with_capacity(panels * pairs.len());
    for p in 0..panels {
        let (a, b) = (p as f64 * width, (p + 1) as f64 * width);
        for (x, w) in pairs {
            let t = 0.5 * ((b - a) * x + (a + b));
            out.push((s * (-t).exp(), 0.5 * (b - a) * w));
        }
    }
    out
}

fn torus_flux_integral(f: &ScalarField, model: &FlatModel, s: f64, rule: &TorusRule) -> Result<f64> {
    let mut acc = 0.0;
    for u in &rule.nodes {
        torus_dims_check(model, u)?;
        acc += f.local_data(s, u, model.k)?.dr;
    }
    Ok(acc * rule.weight)
}

/// `|S^{2k−1}|·C(k−1,m−1)/4 · s^{2k−1} · β^{m−1} · ∫_T ∂_r F(s, ·)`.
fn flux_value(model: &FlatModel, s: f64, beta: f64, torus_integral: f64) -> f64 {
    let (k, m) = (model.k, model.m);
    model.sphere_area() * binomial(k - 1, m - 1) / 4.0 * s.powi(2 * k as i32 - 1) * beta.powi(m as i32 - 1) * torus_integral
}

pub fn tube_integral(f: &ScalarField, model: &FlatModel, s: f64, method: TubeMethod) -> Result<TubeIntegral> {
    tube_integral_with(f, model, s, method, &TubeOptions::default())
}

pub fn tube_integral_with(f: &ScalarField, model: &FlatModel, s: f64, method: TubeMethod, opts: &TubeOptions) -> Result<TubeIntegral> {
    model.validate()?;
    if !(s > 0.0 && s <= model.tube_radius) {
        return arg(format!("tube radius s = {} outside (0, {}]", s, model.tube_radius));
    }
    if f.separable_terms().is_none() {
        return arg(format!("tube integrals need a separable field, got {}", f.label()));
    }
    let k = model.k;
    let area = model.sphere_area();
    match method {
        TubeMethod::Flux => {
            let rule = TorusRule::uniform(model, opts.torus_per_dim);
            let t = torus_flux_integral(f, model, s, &rule)?;
            Ok(TubeIntegral { value: flux_value(model, s, 1.0, t), std_error: None, warning: None })
        }
        TubeMethod::RadialQuadrature => {
            if !f.is_radial() {
                return arg("radial quadrature needs a field independent of z''");
            }
            let u = vec![0.0; 2 * model.tangent_dim()];
            let nodes = log_radial_nodes(s, opts);
            let vals: Vec<Result<f64>> = exec::map_slice(&nodes, |(r, w)| {
                let d = f.local_data(*r, &u, k)?;
                Ok(w * tube_density(&d, model) * r.powi(2 * k as i32))
            });
            let mut total = 0.0;
            for v in vals {
                total += v?;
            }
            Ok(TubeIntegral { value: total * area * model.torus_volume(), std_error: None, warning: None })
        }
        TubeMethod::Cubature => {
            let rule = TorusRule::uniform(model, opts.torus_per_dim);
            let nodes = log_radial_nodes(s, opts);
            let vals: Vec<Result<f64>> = exec::map_slice(&nodes, |(r, w)| {
                let mut acc = 0.0;
                for u in &rule.nodes {
                    acc += tube_density(&f.local_data(*r, u, k)?, model);
                }
                Ok(w * acc * rule.weight * r.powi(2 * k as i32))
            });
            let mut total = 0.0;
            for v in vals {
                total += v?;
            }
            Ok(TubeIntegral { value: total * area, std_error: None, warning: None })
        }
        TubeMethod::MonteCarlo { samples_per_stratum, seed } => {
            if samples_per_stratum < 2 {
                return arg("monte carlo needs at least two samples per stratum");
            }
            let strata = opts.mc_strata.max(1);
            let width = opts.mc_depth / strata as f64;
            let vol = model.torus_volume();
            let per: Vec<Result<(f64, f64)>> = exec::map_range(strata, |j| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(j as u64 + 1);
                let mut sum = 0.0;
                let mut sum2 = 0.0;
                let mut u = vec![0.0; 2 * model.tangent_dim()];
                for _ in 0..samples_per_stratum {
                    let t = width * (j as f64 + rng.gen::<f64>());
                    for (d, x) in u.iter_mut().enumerate() {
                        *x = rng.gen::<f64>() * model.torus_periods[d / 2];
                    }
                    let r = s * (-t).exp();
                    let g = tube_density(&f.local_data(r, &u, k)?, model) * r.powi(2 * k as i32) * vol;
                    sum += g;
                    sum2 += g * g;
                }
                let nf = samples_per_stratum as f64;
                let mean = sum / nf;
                let var = (sum2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
                Ok((width * mean, width * width * var / nf))
            });
            let mut value = 0.0;
            let mut var = 0.0;
            for p in per {
                let (v, s2) = p?;
                value += v;
                var += s2;
            }
            let value = value * area;
            let se = var.sqrt() * area;
            let warning = if se > opts.mc_warn_rel * value.abs() {
                Some(format!("monte carlo relative standard error {:.3e}", se / value.abs().max(1e-300)))
            } else {
                None
            };
            Ok(TubeIntegral { value, std_error: Some(se), warning })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub tube_radius: f64,
    pub torus_periods: Vec<f64>,
    pub c_km: f64,
    pub v_volume: f64,
    /// Sublevel-series mass of `ψ_V` (the polar mass `μ_ψ(V)` before normalization).
    pub polar_mass: f64,
}

impl Calibration {
    pub fn matches(&self, model: &FlatModel) -> bool {
        self.n == model.n
            && self.k == model.k
            && self.m == model.m
            && self.tube_radius == model.tube_radius
            && self.torus_periods == model.torus_periods
    }

    pub fn cache_key(model: &FlatModel) -> String {
        let p: Vec<String> = model.torus_periods.iter().map(|v| format!("{:e}", v)).collect();
        format!("n{}-k{}-m{}-t{:e}-p[{}]", model.n, model.k, model.m, model.tube_radius, p.join(","))
    }
}

fn default_calibration_grid(model: &FlatModel) -> Vec<f64> {
    crate::fit::geometric_grid(model.tube_radius / 4.0, 0.5, 8)
}

fn scaling_exponent(model: &FlatModel) -> f64 {
    2.0 * model.k as f64 - 2.0 * model.q()
}

/// Fix `C_{k,m}` so that the scaled tube limit of `ψ_V` is 1.
pub fn calibrate(model: &FlatModel) -> Result<Calibration> {
    model.validate()?;
    let psi = ScalarField::radial(model.psi_v());
    let method = if model.m == 1 { TubeMethod::Flux } else { TubeMethod::RadialQuadrature };
    let grid = default_calibration_grid(model);
    let e = scaling_exponent(model);
    let raw: Vec<Result<f64>> = exec::map_slice(&grid, |s| Ok(tube_integral(&psi, model, *s, method)?.value / s.powf(e)));
    let raw: Vec<f64> = raw.into_iter().collect::<Result<_>>()?;
    let fit = extrapolate_limit(&grid, &raw, &LimitFitOptions::default())
        .ok_or_else(|| LabError::Internal("calibration fit failed".into()))?;
    if !(fit.limit > 0.0) || !fit.converged {
        return Err(LabError::Internal(format!("degenerate calibration limit {}", fit.limit)));
    }
    let s0 = grid[grid.len() - 1];
    let polar_mass = sublevel_raw(&psi, model, s0, &TorusRule::uniform(model, TubeOptions::default().torus_per_dim))?;
    if !(polar_mass > 0.0) {
        return Err(LabError::Internal(format!("degenerate polar mass {}", polar_mass)));
    }
    Ok(Calibration {
        n: model.n,
        k: model.k,
        m: model.m,
        tube_radius: model.tube_radius,
        torus_periods: model.torus_periods.clone(),
        c_km: 1.0 / fit.limit,
        v_volume: model.torus_volume(),
        polar_mass,
    })
}

/// Calibrations keyed by model, persisted as JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCache {
    pub entries: BTreeMap<String, Calibration>,
}

impl CalibrationCache {
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| LabError::Argument(format!("calibration cache: {}", e))),
            Err(_) => Ok(Self::default()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| LabError::Internal(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| LabError::Internal(e.to_string()))
    }

    pub fn get_or_compute(&mut self, model: &FlatModel) -> Result<Calibration> {
        let key = Calibration::cache_key(model);
        if let Some(c) = self.entries.get(&key) {
            return Ok(c.clone());
        }
        let c = calibrate(model)?;
        self.entries.insert(key, c.clone());
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesForm {
    /// Tube integrals over `{r < s}` against `∂∂̄|z'|²`, scaled by `C_{k,m}/s^{2k−2k/m}`.
    Tube,
    /// Integrals over sublevel sets `{ψ_V < ψ_V(ρ)}` against `∂∂̄ψ_V`, divided by the polar mass.
    Sublevel,
    /// Sublevel integrals reweighted back to tube form.
    SublevelReweighted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TubeSeries {
    pub form: SeriesForm,
    pub method: TubeMethod,
    pub s_values: Vec<f64>,
    /// `ψ_V(s)` for sublevel forms.
    pub levels: Option<Vec<f64>>,
    pub raw_integrals: Vec<f64>,
    pub scaled_values: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub fit: Option<LimitFit>,
    pub extrapolated_limit: Option<f64>,
    /// Raw sequence is nonincreasing as `s` decreases (relative tolerance 1e−9).
    pub monotone: bool,
    /// Largest relative mismatch between successive raw differences and the
    /// annulus integral of the density (sublevel form only).
    pub stokes_discrepancy: Option<f64>,
    pub warnings: Vec<String>,
}

impl TubeSeries {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| LabError::Internal(e.to_string());
        wr.write_record(["s", "raw", "scaled", "fit_residual"]).map_err(io)?;
        for i in 0..self.s_values.len() {
            let res = self.fit.as_ref().map(|f| f.residuals[i]).unwrap_or(f64::NAN);
            wr.write_record(&[
                self.s_values[i].to_string(),
                self.raw_integrals[i].to_string(),
                self.scaled_values[i].to_string(),
                res.to_string(),
            ])
            .map_err(io)?;
        }
        wr.flush().map_err(|e| LabError::Internal(e.to_string()))
    }
}

pub const SERIES_MIN_POINTS: usize = 6;
pub const NU_NEGATIVE_TOLERANCE: f64 = 1e-3;
const MONOTONE_REL_TOL: f64 = 1e-9;

fn check_series_grid(s_grid: &[f64], model: &FlatModel) -> Result<()> {
    if s_grid.len() < SERIES_MIN_POINTS {
        return arg(format!("need at least {} radii", SERIES_MIN_POINTS));
    }
    for w in s_grid.windows(2) {
        if !(w[1] > 0.0) || w[1] / w[0] > 0.5 + 1e-12 {
            return arg("radii must decrease geometrically with ratio <= 1/2");
        }
    }
    if s_grid[0] > model.tube_radius {
        return arg("radii must lie inside the tube");
    }
    Ok(())
}

fn check_calibration(calib: &Calibration, model: &FlatModel) -> Result<()> {
    if !calib.matches(model) {
        return arg("calibration was computed for a different model");
    }
    Ok(())
}

fn monotone(raw: &[f64]) -> bool {
    raw.windows(2).all(|w| w[1] <= w[0] + MONOTONE_REL_TOL * w[0].abs().max(w[1].abs()))
}

fn finish_series(
    form: SeriesForm,
    method: TubeMethod,
    s_grid: &[f64],
    levels: Option<Vec<f64>>,
    raw: Vec<f64>,
    scaled: Vec<f64>,
    std_errors: Option<Vec<f64>>,
    mut warnings: Vec<String>,
) -> TubeSeries {
    let fit = extrapolate_limit(s_grid, &scaled, &LimitFitOptions::default());
    let extrapolated_limit = match &fit {
        Some(f) if f.converged => Some(f.limit),
        Some(f) => {
            warnings.push(format!("limit fit did not converge (rms {:.3e})", f.rms_residual));
            None
        }
        None => {
            warnings.push("limit fit failed".into());
            None
        }
    };
    let mono = monotone(&raw);
    TubeSeries {
        form,
        method,
        s_values: s_grid.to_vec(),
        levels,
        raw_integrals: raw,
        scaled_values: scaled,
        std_errors,
        fit,
        extrapolated_limit,
        monotone: mono,
        stokes_discrepancy: None,
        warnings,
    }
}

pub fn lelong_series(f: &ScalarField, model: &FlatModel, s_grid: &[f64], method: TubeMethod, calib: &Calibration) -> Result<TubeSeries> {
    check_series_grid(s_grid, model)?;
    check_calibration(calib, model)?;
    let e = scaling_exponent(model);
    let vals: Vec<Result<TubeIntegral>> = s_grid.iter().map(|s| tube_integral(f, model, *s, method)).collect();
    let vals: Vec<TubeIntegral> = vals.into_iter().collect::<Result<_>>()?;
    let raw: Vec<f64> = vals.iter().map(|v| v.value).collect();
    let scaled: Vec<f64> = raw.iter().zip(s_grid).map(|(r, s)| r * calib.c_km / s.powf(e)).collect();
    let ses: Option<Vec<f64>> = if vals.iter().all(|v| v.std_error.is_some()) {
        Some(vals.iter().zip(s_grid).map(|(v, s)| v.std_error.unwrap() * calib.c_km / s.powf(e)).collect())
    } else {
        None
    };
    let warnings = vals.iter().filter_map(|v| v.warning.clone()).collect();
    Ok(finish_series(SeriesForm::Tube, method, s_grid, None, raw, scaled, ses, warnings))
}

/// The extrapolated limit, or a diagnostic failure when the fit did not converge.
pub fn lelong_number(ts: &TubeSeries) -> Result<f64> {
    let l = ts
        .extrapolated_limit
        .ok_or_else(|| LabError::Diagnostic(format!("no converged limit: {}", ts.warnings.join("; "))))?;
    if l < -NU_NEGATIVE_TOLERANCE {
        return Err(LabError::Diagnostic(format!("negative limit {}", l)));
    }
    Ok(l)
}

/// `β_ψ(ρ) = ψ_V'(ρ)/(2ρ)`, the tangential eigenvalue of `ψ_V`.
fn psi_tangent(model: &FlatModel, rho: f64) -> Result<(f64, f64)> {
    let d = eval_weight(&model.psi_v(), rho)?;
    Ok(radial_pair(&d, rho))
}

fn sublevel_raw(f: &ScalarField, model: &FlatModel, rho: f64, rule: &TorusRule) -> Result<f64> {
    let (_, beta) = psi_tangent(model, rho)?;
    let t = torus_flux_integral(f, model, rho, rule)?;
    Ok(flux_value(model, rho, beta, t))
}

/// Density of `∂∂̄F ∧ (∂∂̄ψ_V)^{m−1} ∧ ω^{n−m}` in the adapted frame.
fn sublevel_density(f: &ScalarField, model: &FlatModel, r: f64, u: &[f64]) -> Result<f64> {
    let (k, n) = (model.k, model.n);
    let d = f.local_data(r, u, k)?;
    let (b_rad, b_tan) = psi_tangent(model, r)?;
    let mut a = vec![d.lambda_rad];
    let mut b = vec![b_rad];
    a.extend(std::iter::repeat(d.lambda_tan).take(k - 1));
    b.extend(std::iter::repeat(b_tan).take(k - 1));
    if n > k {
        a.extend(std::iter::repeat(d.tangent_trace / (n - k) as f64).take(n - k));
        b.extend(std::iter::repeat(0.0).take(n - k));
    }
    mixed_sigma_diag(&a, &b, model.m)
}

fn annulus_integral(f: &ScalarField, model: &FlatModel, lo: f64, hi: f64, rule: &TorusRule) -> Result<f64> {
    let gl = GaussLegendre::new(NonZeroUsize::new(24).unwrap());
    let k = model.k;
    let (la, lb) = (lo.ln(), hi.ln());
    let mut total = 0.0;
    for (x, w) in gl.as_node_weight_pairs() {
        let t = 0.5 * ((lb - la) * x + (la + lb));
        let r = t.exp();
        let mut acc = 0.0;
        for u in &rule.nodes {
            acc += sublevel_density(f, model, r, u)?;
        }
        total += 0.5 * (lb - la) * w * acc * rule.weight * r.powi(2 * k as i32);
    }
    Ok(total * model.sphere_area())
}

/// Integrals over `{ψ_V < ψ_V(ρ)}` for the radii `s_grid`, normalized by the
/// polar mass of `ψ_V`. Successive differences are cross-checked against
/// annulus integrals of the adapted-frame mixed density.
pub fn defn26_series(f: &ScalarField, model: &FlatModel, s_grid: &[f64], calib: &Calibration) -> Result<TubeSeries> {
    check_series_grid(s_grid, model)?;
    check_calibration(calib, model)?;
    if f.separable_terms().is_none() {
        return arg("sublevel series need a separable field");
    }
    let rule = TorusRule::uniform(model, TubeOptions::default().torus_per_dim);
    let raw: Vec<Result<f64>> = exec::map_slice(s_grid, |rho| sublevel_raw(f, model, *rho, &rule));
    let raw: Vec<f64> = raw.into_iter().collect::<Result<_>>()?;
    let levels: Vec<f64> = s_grid.iter().map(|r| model.psi_v_at(*r)).collect::<Result<_>>()?;
    let scaled: Vec<f64> = raw.iter().map(|v| v / calib.polar_mass).collect();
    let pairs: Vec<(f64, f64)> = s_grid.windows(2).map(|w| (w[1], w[0])).collect();
    let ann: Vec<Result<f64>> = exec::map_slice(&pairs, |(lo, hi)| annulus_integral(f, model, *lo, *hi, &rule));
    let mut disc: f64 = 0.0;
    for (i, a) in ann.into_iter().enumerate() {
        let a = a?;
        let diff = raw[i] - raw[i + 1];
        let scale = raw[i].abs().max(raw[i + 1].abs()).max(1e-300);
        disc = disc.max((a - diff).abs() / scale);
    }
    let mut ts = finish_series(SeriesForm::Sublevel, TubeMethod::Flux, s_grid, Some(levels), raw, scaled, None, vec![]);
    ts.stokes_discrepancy = Some(disc);
    if !ts.monotone {
        ts.warnings.push("sublevel series is not monotone".into());
    }
    Ok(ts)
}

/// Multiply sublevel integrals by `H_m'(ψ_V(ρ))^{m−1}` and apply the tube
/// scaling, turning a sublevel series into a tube-form series.
pub fn reweight_to_tube_form(ts: &TubeSeries, model: &FlatModel, calib: &Calibration) -> Result<TubeSeries> {
    if ts.form != SeriesForm::Sublevel {
        return arg("reweighting expects a sublevel series");
    }
    let map = ReweightMap::new(model.k, model.weight_order())?;
    let e = scaling_exponent(model);
    let levels = ts.levels.clone().unwrap_or_default();
    let raw: Vec<f64> = ts
        .raw_integrals
        .iter()
        .zip(&levels)
        .map(|(v, t)| v * map.derivative(*t).powi(model.m as i32 - 1))
        .collect();
    let scaled: Vec<f64> = raw.iter().zip(&ts.s_values).map(|(v, s)| v * calib.c_km / s.powf(e)).collect();
    Ok(finish_series(SeriesForm::SublevelReweighted, ts.method, &ts.s_values, ts.levels.clone(), raw, scaled, None, vec![]))
}

/// `H_m(t) = (−t)^{−m/(k−m)}` for `m < k`; `e^{2t}` for `k = m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReweightMap {
    pub k: usize,
    pub m: usize,
}

impl ReweightMap {
    pub fn new(k: usize, m: usize) -> Result<Self> {
        if m == 0 || m > k {
            return arg("reweighting needs 1 <= m <= k");
        }
        Ok(ReweightMap { k, m })
    }

    fn exponent(&self) -> f64 {
        -(self.m as f64) / (self.k - self.m) as f64
    }

    pub fn value(&self, t: f64) -> f64 {
        if self.k == self.m {
            (2.0 * t).exp()
        } else {
            (-t).powf(self.exponent())
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if self.k == self.m {
            2.0 * (2.0 * t).exp()
        } else {
            let p = self.exponent();
            -p * (-t).powf(p - 1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarDensity {
    pub patch: TorusPatch,
    pub series: TubeSeries,
    pub estimate: Option<f64>,
    pub patch_mean_theta: Option<f64>,
}

/// Scaled tube limit restricted to `{z'' ∈ patch}`, normalized by the patch
/// share of the torus volume.
pub fn polar_density(f: &ScalarField, model: &FlatModel, patch: &TorusPatch, s_grid: &[f64], calib: &Calibration) -> Result<PolarDensity> {
    check_series_grid(s_grid, model)?;
    check_calibration(calib, model)?;
    let d = 2 * model.tangent_dim();
    if patch.lo.len() != d {
        return arg("patch dimension does not match the torus");
    }
    let gl = GaussLegendre::new(NonZeroUsize::new(16).unwrap());
    let pairs = gl.as_node_weight_pairs();
    let count = pairs.len().pow(d as u32);
    let mut nodes = Vec::with_capacity(count);
    for mut idx in 0..count {
        let mut u = vec![0.0; d];
        let mut w = 1.0;
        for (j, x) in u.iter_mut().enumerate() {
            let (node, weight) = pairs[idx % pairs.len()];
            idx /= pairs.len();
            let (a, b) = (patch.lo[j], patch.hi[j]);
            *x = 0.5 * ((b - a) * node + (a + b));
            w *= 0.5 * (b - a) * weight;
        }
        nodes.push((u, w));
    }
    let e = scaling_exponent(model);
    let share = model.torus_volume() / patch.volume();
    let raw: Vec<Result<f64>> = exec::map_slice(s_grid, |s| {
        let mut acc = 0.0;
        for (u, w) in &nodes {
            acc += w * f.local_data(*s, u, model.k)?.dr;
        }
        Ok(flux_value(model, *s, 1.0, acc))
    });
    let raw: Vec<f64> = raw.into_iter().collect::<Result<_>>()?;
    let scaled: Vec<f64> = raw.iter().zip(s_grid).map(|(v, s)| v * share * calib.c_km / s.powf(e)).collect();
    let series = finish_series(SeriesForm::Tube, TubeMethod::Flux, s_grid, None, raw, scaled, None, vec![]);
    let patch_mean_theta = match f {
        ScalarField::Localized(l) => Some(l.theta.patch_mean(patch)?),
        ScalarField::ScaledLog(t) => Some(t.patch_mean(patch)?),
        _ => None,
    };
    Ok(PolarDensity { patch: patch.clone(), estimate: series.extrapolated_limit, series, patch_mean_theta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn reweight_map_inverts_tangent_eigenvalue() {
        for (k, m) in [(3, 2), (2, 2), (4, 3), (5, 2)] {
            let model = FlatModel::new(k + 1, k, m, 0.5).unwrap();
            let map = ReweightMap::new(k, m).unwrap();
            for rho in [0.2, 0.05, 0.001] {
                let (_, beta) = psi_tangent(&model, rho).unwrap();
                let t = model.psi_v_at(rho).unwrap();
                assert!((map.derivative(t) * beta - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn newtonian_flux_constant() {
        let model = FlatModel::new(3, 2, 1, 0.5).unwrap();
        let f = ScalarField::radial(model.psi_v());
        for s in [0.2, 0.01] {
            let v = tube_integral(&f, &model, s, TubeMethod::Flux).unwrap().value;
            assert!((v - PI * PI * model.torus_volume()).abs() < 1e-9 * v);
        }
        let q = tube_integral(&f, &model, 0.2, TubeMethod::RadialQuadrature).unwrap().value;
        assert!(q.abs() < 1e-9);
    }

    #[test]
    fn grid_validation() {
        let model = FlatModel::new(3, 2, 1, 0.5).unwrap();
        let calib = calibrate(&model).unwrap();
        let f = ScalarField::radial(model.psi_v());
        assert!(lelong_series(&f, &model, &[0.1, 0.05, 0.025], TubeMethod::Flux, &calib).is_err());
        let slow: Vec<f64> = (0..8).map(|i| 0.1 * 0.9f64.powi(i)).collect();
        assert!(lelong_series(&f, &model, &slow, TubeMethod::Flux, &calib).is_err());
    }
}
