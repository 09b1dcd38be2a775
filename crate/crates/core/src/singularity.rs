//! Relative types from sublevel maxima, pointwise `L_ψ` probes, the
//! min-relation, the `σ ≤ ν` comparison and the constancy scan for
//! codimension below the order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, LabError, Result};
use crate::exec;
use crate::fields::{gamma_m_scan, scan_grid, sphere_directions, torus_grid, torus_lattice, Point, ScalarField, ScanGridSpec, ScanSettings, Violation};
use crate::fit::{extrapolate_limit, log_spaced_desc, LimitFit, LimitFitOptions};
use crate::measures::{lelong_number, lelong_series, Calibration, TubeMethod};
use crate::profiles::FlatModel;
use crate::garding::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellSampler {
    pub n_torus: usize,
    pub n_sphere: usize,
    /// Interior spot checks as a fraction of the shell sample count.
    pub interior_fraction: f64,
    pub seed: u64,
    pub refine: bool,
}

impl Default for ShellSampler {
    fn default() -> Self {
        ShellSampler { n_torus: 32, n_sphere: 32, interior_fraction: 0.01, seed: 0x5eed, refine: true }
    }
}

/// Normal radius of the level set `{ψ_V = s}`.
pub fn level_radius(model: &FlatModel, s: f64) -> Result<f64> {
    let q = model.q();
    let r = if model.k == model.weight_order() && q == 1.0 {
        s.exp()
    } else {
        if !(s < 0.0) {
            return Err(LabError::Geometry(format!("level {} is not attained by the pole", s)));
        }
        (-s).powf(1.0 / (2.0 - 2.0 * q))
    };
    if !(r > 0.0) || r > model.tube_radius {
        return Err(LabError::Geometry(format!("level {} gives radius {:e} outside (0, {}]", s, r, model.tube_radius)));
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SublevelMax {
    pub s: f64,
    pub radius: f64,
    pub value: f64,
    pub shell_value: f64,
    pub interior_max: f64,
    pub argmax_torus: Vec<f64>,
    pub shell_attained: bool,
}

fn max_over_dirs(f: &ScalarField, r: f64, dirs: &[Vec<C64>], u: &[f64]) -> Result<(f64, usize)> {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, d) in dirs.iter().enumerate() {
        let v = f.eval(&Point::from_direction(r, d, u))?;
        if v > best.0 {
            best = (v, i);
        }
    }
    Ok(best)
}

/// Maximum of `F` over `W_s = {ψ_V < s}`, sampled on the level shell with
/// interior spot checks.
pub fn sublevel_max(f: &ScalarField, model: &FlatModel, s: f64, sampler: &ShellSampler) -> Result<SublevelMax> {
    let r = level_radius(model, s)?;
    let torus = torus_lattice(&model.torus_periods, sampler.n_torus.max(1));
    let dirs = sphere_directions(model.k, sampler.n_sphere.max(1), sampler.seed);
    let vals: Vec<Result<(f64, usize)>> = exec::map_slice(&torus, |u| max_over_dirs(f, r, &dirs, u));
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    for (i, v) in vals.into_iter().enumerate() {
        let (val, d) = v?;
        if val > best.0 {
            best = (val, i, d);
        }
    }
    let (mut shell, mut u) = (best.0, torus[best.1].clone());
    let dir = &dirs[best.2];
    if sampler.refine && !u.is_empty() {
        let pmin = model.torus_periods.iter().cloned().fold(f64::MAX, f64::min);
        let mut step = pmin / (sampler.n_torus as f64).powf(1.0 / u.len() as f64);
        let mut iters = 0;
        while step > 1e-12 * pmin && iters < 2000 {
            iters += 1;
            let mut improved = false;
            for j in 0..u.len() {
                for sgn in [1.0, -1.0] {
                    let mut c = u.clone();
                    c[j] += sgn * step;
                    let v = f.eval(&Point::from_direction(r, dir, &c))?;
                    if v > shell {
                        shell = v;
                        u = c;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
    }
    let n_int = ((sampler.interior_fraction * (sampler.n_torus * sampler.n_sphere) as f64).ceil() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed ^ 0x1f1f_1f1f);
    let mut interior = f64::NEG_INFINITY;
    let dirs_int = sphere_directions(model.k, n_int, sampler.seed.wrapping_add(17));
    for d in dirs_int.iter() {
        let ri = r * (-5.0 * rng.gen::<f64>()).exp() * 0.999;
        let ui: Vec<f64> = (0..2 * model.tangent_dim()).map(|j| rng.gen::<f64>() * model.torus_periods[j / 2]).collect();
        interior = interior.max(f.eval(&Point::from_direction(ri, d, &ui))?);
    }
    let tol = 1e-9 * shell.abs().max(1.0);
    Ok(SublevelMax {
        s,
        radius: r,
        value: shell.max(interior),
        shell_value: shell,
        interior_max: interior,
        argmax_torus: u,
        shell_attained: interior <= shell + tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeSeries {
    pub s_values: Vec<f64>,
    pub m_values: Vec<f64>,
    /// `(M_{s_0} − M_{s_i})/(s_0 − s_i)` for `i ≥ 1`.
    pub secants: Vec<f64>,
    pub second_differences: Vec<f64>,
    pub sigma_hat: f64,
    pub fit: Option<LimitFit>,
    pub convexity_ok: bool,
    pub secants_monotone: bool,
    pub shell_attained: bool,
    pub warnings: Vec<String>,
}

pub const CONVEXITY_TOLERANCE: f64 = 1e-6;

/// Levels `ψ_V(r)` for radii from `tube_radius/4` down to where `|ψ_V|`
/// reaches `~345` (log pole) or `1e15` (power pole).
pub fn default_level_grid(model: &FlatModel, count: usize) -> Vec<f64> {
    default_probe_radii(model, count).iter().map(|r| model.psi_v_at(*r).unwrap_or(f64::NAN)).collect()
}

pub fn default_probe_radii(model: &FlatModel, count: usize) -> Vec<f64> {
    let q = model.q();
    let lo = if q == 1.0 { 1e-150 } else { 1e15f64.powf(-1.0 / (2.0 * q - 2.0)) };
    log_spaced_desc(model.tube_radius / 4.0, lo, count)
}

pub fn relative_type(f: &ScalarField, model: &FlatModel, s_grid: &[f64], sampler: &ShellSampler) -> Result<SlopeSeries> {
    if s_grid.len() < 6 {
        return arg("need at least six levels");
    }
    if s_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return arg("levels must decrease");
    }
    let mut maxima = Vec::with_capacity(s_grid.len());
    let mut shell_ok = true;
    for s in s_grid {
        let sm = sublevel_max(f, model, *s, sampler)?;
        shell_ok &= sm.shell_attained;
        maxima.push(sm.value);
    }
    let (s0, m0) = (s_grid[0], maxima[0]);
    let secants: Vec<f64> = (1..s_grid.len()).map(|i| (m0 - maxima[i]) / (s0 - s_grid[i])).collect();
    let slope = |i: usize| (maxima[i] - maxima[i + 1]) / (s_grid[i] - s_grid[i + 1]);
    let second: Vec<f64> = (0..s_grid.len() - 2).map(|i| (slope(i) - slope(i + 1)) / (s_grid[i] - s_grid[i + 2])).collect();
    let convexity_ok = second.iter().all(|d| *d >= -CONVEXITY_TOLERANCE);
    let secants_monotone = secants.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
    let xs: Vec<f64> = s_grid[1..].iter().map(|s| 1.0 / (s0 - s)).collect();
    let fit = extrapolate_limit(&xs, &secants, &LimitFitOptions::default());
    let mut warnings = Vec::new();
    let sigma_hat = match &fit {
        Some(ft) if ft.converged => ft.limit,
        _ => {
            warnings.push("secant extrapolation did not converge; using the last secant".into());
            secants[secants.len() - 1]
        }
    };
    if !convexity_ok {
        warnings.push("sublevel maxima are not convex in s".into());
    }
    if !shell_ok {
        warnings.push("interior samples exceeded the shell maximum".into());
    }
    Ok(SlopeSeries {
        s_values: s_grid.to_vec(),
        m_values: maxima,
        secants,
        second_differences: second,
        sigma_hat,
        fit,
        convexity_ok,
        secants_monotone,
        shell_attained: shell_ok,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LProbe {
    pub base_point: Vec<f64>,
    pub approach_radii: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Minimum of the last four ratios.
    pub liminf_estimate: f64,
    /// Limit fitted against `1/|ψ_V|`, when the fit converges.
    pub extrapolated: Option<f64>,
}

pub const PROBE_DIRECTIONS: usize = 8;

/// `F/ψ_V` along `z' = r·u → 0` over the torus point `z0`.
pub fn l_pointwise(f: &ScalarField, model: &FlatModel, z0: &[f64], radii: &[f64]) -> Result<LProbe> {
    if radii.len() < 8 {
        return arg("need at least eight approach radii");
    }
    if radii.windows(2).any(|w| !(w[1] < w[0])) || radii[0] > model.tube_radius {
        return arg("approach radii must decrease inside the tube");
    }
    if z0.len() != 2 * model.tangent_dim() {
        return arg("base point has the wrong torus dimension");
    }
    let dirs = sphere_directions(model.k, PROBE_DIRECTIONS, 0x9e37);
    let mut ratios = Vec::with_capacity(radii.len());
    for r in radii {
        let psi = model.psi_v_at(*r)?;
        if psi >= 0.0 {
            return arg(format!("psi_V({}) = {} is not negative", r, psi));
        }
        let mut best = f64::INFINITY;
        for d in &dirs {
            best = best.min(f.eval(&Point::from_direction(*r, d, z0))? / psi);
        }
        ratios.push(best);
    }
    let tail = &ratios[ratios.len() - 4..];
    let liminf_estimate = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let xs: Vec<f64> = radii.iter().map(|r| 1.0 / model.psi_v_at(*r).unwrap().abs()).collect();
    let extrapolated = extrapolate_limit(&xs, &ratios, &LimitFitOptions::default()).filter(|f| f.converged).map(|f| f.limit);
    Ok(LProbe { base_point: z0.to_vec(), approach_radii: radii.to_vec(), ratios, liminf_estimate, extrapolated })
}

pub fn default_v_grid(model: &FlatModel, per_dim: usize) -> Vec<Vec<f64>> {
    torus_grid(&model.torus_periods, per_dim)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinRelationReport {
    pub l_values: Vec<f64>,
    pub v_grid: Vec<Vec<f64>>,
    pub min_l: f64,
    pub argmin: Vec<f64>,
    pub sigma_hat: f64,
    pub agrees: bool,
    pub all_above: bool,
}

/// Compare `min_V L̂` with the relative type; also check `L̂ ≥ σ̂ − 0.01`
/// everywhere on the grid.
pub fn min_relation_check(
    f: &ScalarField,
    model: &FlatModel,
    v_grid: &[Vec<f64>],
    radii: &[f64],
    levels: &[f64],
    sampler: &ShellSampler,
) -> Result<MinRelationReport> {
    if v_grid.is_empty() {
        return arg("empty V grid");
    }
    let probes: Vec<Result<LProbe>> = exec::map_slice(v_grid, |z| l_pointwise(f, model, z, radii));
    let l_values: Vec<f64> = probes.into_iter().map(|p| p.map(|p| p.liminf_estimate)).collect::<Result<_>>()?;
    let (mut min_l, mut idx) = (f64::INFINITY, 0);
    for (i, v) in l_values.iter().enumerate() {
        if *v < min_l {
            min_l = *v;
            idx = i;
        }
    }
    let sigma_hat = relative_type(f, model, levels, sampler)?.sigma_hat;
    let agrees = (min_l - sigma_hat).abs() <= f64::max(0.05 * sigma_hat.abs(), 0.02);
    let all_above = l_values.iter().all(|v| *v >= sigma_hat - 0.01);
    Ok(MinRelationReport { l_values, v_grid: v_grid.to_vec(), min_l, argmin: v_grid[idx].clone(), sigma_hat, agrees, all_above })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub sigma_hat: f64,
    pub nu_hat: f64,
    pub holds: bool,
}

pub const COMPARE_TOLERANCE: f64 = 0.02;

/// `σ̂ ≤ ν̂ + tolerance` with the calibrated polar mass equal to 1.
pub fn compare_bounds(
    f: &ScalarField,
    model: &FlatModel,
    calib: &Calibration,
    levels: &[f64],
    tube_radii: &[f64],
    sampler: &ShellSampler,
) -> Result<CompareReport> {
    let sigma_hat = relative_type(f, model, levels, sampler)?.sigma_hat;
    let method = if f.is_radial() && model.m > 1 { TubeMethod::RadialQuadrature } else { TubeMethod::Flux };
    let nu_hat = lelong_number(&lelong_series(f, model, tube_radii, method, calib)?)?;
    Ok(CompareReport { sigma_hat, nu_hat, holds: sigma_hat <= nu_hat + COMPARE_TOLERANCE })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SiuVerdict {
    /// The field passed the cone scan and `L̂` is constant along V.
    ConstantAlongV,
    /// The cone scan found a Γ^m violation.
    NotMSubharmonic,
    /// The field passed the scan but `L̂` varies along V.
    TheoremViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiuReport {
    pub verdict: SiuVerdict,
    pub scan_points: usize,
    pub scan_outside: usize,
    pub violation: Option<Violation>,
    pub l_table: Vec<(Vec<f64>, f64)>,
    pub spread: f64,
    pub mean_l: f64,
    pub sigma_hat: Option<f64>,
    pub matches_sigma: Option<bool>,
}

impl SiuReport {
    pub fn write_l_table_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| LabError::Internal(e.to_string());
        let d = self.l_table.first().map(|r| r.0.len()).unwrap_or(0);
        let mut header: Vec<String> = (0..d).map(|i| format!("u{}", i)).collect();
        header.push("l_hat".into());
        wr.write_record(&header).map_err(io)?;
        for (u, l) in &self.l_table {
            let mut row: Vec<String> = u.iter().map(|x| x.to_string()).collect();
            row.push(l.to_string());
            wr.write_record(&row).map_err(io)?;
        }
        wr.flush().map_err(|e| LabError::Internal(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiuOptions {
    pub grid: ScanGridSpec,
    pub settings: ScanSettings,
    pub spread_tolerance: f64,
    pub sampler: ShellSampler,
    pub level_count: usize,
}

impl SiuOptions {
    pub fn for_model(model: &FlatModel, seed: u64) -> Self {
        SiuOptions {
            grid: ScanGridSpec::for_model(model, seed),
            settings: ScanSettings::default(),
            spread_tolerance: 0.03,
            sampler: ShellSampler { seed, ..ShellSampler::default() },
            level_count: 16,
        }
    }
}

/// For `k < m`: scan the field for Γ^m; if it passes, `L̂` must be constant
/// along V and equal to the relative type.
pub fn siu_scan(f: &ScalarField, model: &FlatModel, v_grid: &[Vec<f64>], radii: &[f64], opts: &SiuOptions) -> Result<SiuReport> {
    if !(model.k < model.m) {
        return arg(format!("constancy scan needs k < m, got k = {}, m = {}", model.k, model.m));
    }
    let grid = scan_grid(model, &opts.grid)?;
    let scan = gamma_m_scan(f, model, &grid, &opts.settings);
    if scan.n_outside > 0 {
        return Ok(SiuReport {
            verdict: SiuVerdict::NotMSubharmonic,
            scan_points: scan.n_points,
            scan_outside: scan.n_outside,
            violation: scan.first_violation,
            l_table: vec![],
            spread: f64::NAN,
            mean_l: f64::NAN,
            sigma_hat: None,
            matches_sigma: None,
        });
    }
    if scan.n_errors > 0 {
        return Err(LabError::Geometry(format!("{} scan points could not be evaluated", scan.n_errors)));
    }
    let probes: Vec<Result<LProbe>> = exec::map_slice(v_grid, |z| l_pointwise(f, model, z, radii));
    let ls: Vec<f64> = probes.into_iter().map(|p| p.map(|p| p.liminf_estimate)).collect::<Result<_>>()?;
    let max = ls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ls.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = ls.iter().sum::<f64>() / ls.len() as f64;
    let spread = max - min;
    let levels = default_level_grid(model, opts.level_count);
    let sigma_hat = relative_type(f, model, &levels, &opts.sampler)?.sigma_hat;
    let scale = mean.abs().max(1.0);
    let verdict = if spread <= opts.spread_tolerance * scale { SiuVerdict::ConstantAlongV } else { SiuVerdict::TheoremViolation };
    Ok(SiuReport {
        verdict,
        scan_points: scan.n_points,
        scan_outside: 0,
        violation: None,
        l_table: v_grid.iter().cloned().zip(ls).collect(),
        spread,
        mean_l: mean,
        sigma_hat: Some(sigma_hat),
        matches_sigma: Some((mean - sigma_hat).abs() <= opts.spread_tolerance * scale),
    })
}
