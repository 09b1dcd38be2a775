//! One function per experiment. Each appends check records and artifacts;
//! library errors become failed records rather than aborting the run.

use std::collections::BTreeSet;

use mshlab::fields::{
    fd_hessian, make_localized, nu_range, sphere_directions, torus_lattice, LocalizeSearch, LocalizedField, Point, ScalarField, ThetaField,
    ThetaSpec,
};
use mshlab::fit::log_spaced_desc;
use mshlab::garding::{elementary_symmetric, sigma_all, sigma_profile, HermitianMatrix, C64};
use mshlab::measures::{calibrate, defn26_series, lelong_number, lelong_series, Calibration, TubeMethod, TubeSeries};
use mshlab::profiles::{eval_weight, radial_eigprofile, DerivTriple, FlatModel, WeightFamily};
use mshlab::singularity::{
    compare_bounds, default_level_grid, default_probe_radii, default_v_grid, l_pointwise, min_relation_check, relative_type, siu_scan,
    ShellSampler, SiuOptions, SiuVerdict,
};
use mshlab::weights::{
    admissible_delta_bound, default_expansion_grid, laplacian_residual, make_weight, minimal_real_weight, real_radial_laplacian, sigma_m_leading,
    verify_expansion, WeightSide,
};
use mshlab::LabError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{self, Experiment, ModelConfig, SeriesMethod};
use crate::report::{Basis, Recorder};

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

pub struct Context<'a> {
    pub geometry: &'a ModelConfig,
    pub seed: u64,
    pub rec: Recorder,
    pub artifacts: Vec<Artifact>,
    prefix: String,
}

impl<'a> Context<'a> {
    pub fn new(geometry: &'a ModelConfig, seed: u64) -> Self {
        Context { geometry, seed, rec: Recorder::default(), artifacts: Vec::new(), prefix: String::new() }
    }

    fn name(&self, s: String) -> String {
        format!("{}{}", self.prefix, s)
    }

    fn push(&mut self, name: String, claim: &str, basis: Basis, measured: impl Serialize, expected: impl Serialize, passed: bool) {
        let n = self.name(name);
        self.rec.push(n, claim, basis, measured, expected, passed);
    }

    fn fail(&mut self, name: String, claim: &str, basis: Basis, err: impl std::fmt::Display) {
        let n = self.name(name);
        self.rec.error(n, claim, basis, err);
    }

    fn json_artifact(&mut self, name: String, value: &impl Serialize) {
        let contents = serde_json::to_vec_pretty(value).expect("artifact serializes");
        self.artifacts.push(Artifact { name: format!("{}{}", self.prefix, name), contents });
    }

    fn csv_artifact(&mut self, name: String, header: &[&str], rows: Vec<Vec<f64>>) {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory csv");
        for r in rows {
            w.write_record(r.iter().map(|x| x.to_string())).expect("in-memory csv");
        }
        let contents = w.into_inner().expect("in-memory csv");
        self.artifacts.push(Artifact { name: format!("{}{}", self.prefix, name), contents });
    }

    fn series_artifact(&mut self, name: String, ts: &TubeSeries) {
        let mut buf = Vec::new();
        if ts.write_csv(&mut buf).is_ok() {
            self.artifacts.push(Artifact { name: format!("{}{}", self.prefix, name), contents: buf });
        }
    }

    fn model(&self, k: usize, m: usize) -> mshlab::Result<FlatModel> {
        self.geometry.model(k, m)
    }

    fn sampler(&self) -> ShellSampler {
        ShellSampler { seed: self.seed, ..ShellSampler::default() }
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
}

fn theta_field(spec: &ThetaSpec, model: &FlatModel) -> mshlab::Result<ThetaField> {
    ThetaField::new(spec.clone(), model.torus_periods.clone())?.normalized_to_min_zero()
}

pub fn run(exp: &Experiment, ctx: &mut Context) {
    match exp {
        Experiment::VerifyWeights(e) => verify_weights(e, ctx),
        Experiment::Expansion(e) => expansion(e, ctx),
        Experiment::Lelong(e) => lelong(e, ctx),
        Experiment::Reltype(e) => reltype(e, ctx),
        Experiment::Localize(e) => localize(e, ctx),
        Experiment::Siu(e) => siu(e, ctx),
        Experiment::Compare(e) => compare(e, ctx),
        Experiment::Minimal(e) => minimal(e, ctx),
        Experiment::FullSuite => full_suite(ctx),
    }
}

fn full_suite(ctx: &mut Context) {
    let parts: Vec<Experiment> = ["verify-weights", "expansion", "lelong", "reltype", "localize", "siu", "compare", "minimal"]
        .iter()
        .filter_map(|k| Experiment::default_for(k))
        .collect();
    for exp in parts {
        ctx.prefix = format!("{}/", exp.kind());
        run(&exp, ctx);
    }
    ctx.prefix = "infrastructure/".into();
    infrastructure(ctx);
    ctx.prefix.clear();
}

/// Largest `|σ_m| / λ_tan^m` of the pure pole over log-spaced radii.
pub fn pole_maximality(k: usize, m: usize, tube: f64, count: usize) -> mshlab::Result<f64> {
    let model = FlatModel::new(k, k, m, tube)?;
    let w = WeightFamily::g_pure(k, m);
    let mut worst: f64 = 0.0;
    for r in log_spaced_desc(tube, 1e-6, count) {
        let p = radial_eigprofile(&eval_weight(&w, r)?, r, &model)?;
        worst = worst.max(sigma_profile(&p, m)?.abs() / p.lambda_tan.abs().powi(m as i32));
    }
    Ok(worst)
}

pub fn verify_weights(e: &config::VerifyWeights, ctx: &mut Context) {
    ctx.rec.start();
    let tube = ctx.geometry.tube_radius;
    let pairs: BTreeSet<(usize, usize)> = e.tuples.iter().map(|t| (t.k, t.m)).collect();
    for (k, m) in pairs {
        let name = format!("pole-maximality k={} m={}", k, m);
        let claim = "sigma_m of the pole profile vanishes off V";
        match pole_maximality(k, m, tube, e.maximality_radii) {
            Ok(w) => ctx.push(name, claim, Basis::ClosedForm, w, json!({ "max": e.maximality_tolerance }), w < e.maximality_tolerance),
            Err(err) => ctx.fail(name, claim, Basis::ClosedForm, err),
        }
    }
    for t in &e.tuples {
        let (k, m, delta) = (t.k, t.m, t.delta);
        let model = match ctx.model(k, m) {
            Ok(md) => md,
            Err(err) => {
                ctx.fail(format!("weights k={} m={} delta={}", k, m, delta), "model is valid", Basis::ClosedForm, err);
                continue;
            }
        };
        let leading = sigma_m_leading(k, m, delta);
        let claim = "perturbed pole is m-subharmonic near V with sigma_m ~ c r^delta";
        let name = format!("subweight k={} m={} delta={}", k, m, delta);
        match make_weight(WeightSide::Sub, k, m, delta, 0.0, &model) {
            Ok(cw) => {
                let c = &cw.certificate;
                let cone = c.sigmas.iter().flatten().all(|s| *s >= 0.0);
                ctx.push(format!("{} cone", name), claim, Basis::PublishedClaim, json!({ "certified_radius": cw.certified_radius, "grid_points": c.radii.len() }), "sigma_j >= 0", cone);
                ctx.push(format!("{} exponent", name), claim, Basis::ClosedForm, c.fitted_exponent, delta, rel_close(c.fitted_exponent, delta, e.exponent_tolerance));
                let ok = c.fitted_coefficient > 0.0 && rel_close(c.fitted_coefficient, leading, e.coefficient_tolerance);
                ctx.push(format!("{} coefficient", name), claim, Basis::ClosedForm, c.fitted_coefficient, leading, ok);
                ctx.json_artifact(format!("certificate_sub_k{}_m{}_d{}.json", k, m, delta), &cw);
            }
            Err(err) => ctx.fail(format!("{} cone", name), claim, Basis::PublishedClaim, err),
        }
        let claim = "oppositely perturbed pole has sigma_m < 0 and sigma_j > 0 for j < m";
        let name = format!("superweight k={} m={} delta={}", k, m, delta);
        match make_weight(WeightSide::Super, k, m, delta, 0.0, &model) {
            Ok(cw) => {
                let c = &cw.certificate;
                let neg = c.sigmas.iter().all(|s| s[m - 1] < 0.0);
                let lower = c.sigmas.iter().all(|s| s[..m - 1].iter().all(|v| *v > 0.0));
                ctx.push(
                    format!("{} signs", name),
                    claim,
                    Basis::PublishedClaim,
                    json!({ "certified_radius": cw.certified_radius, "sigma_m_negative": neg, "lower_positive": lower }),
                    "sigma_m < 0, sigma_j > 0",
                    neg && lower,
                );
                ctx.json_artifact(format!("certificate_super_k{}_m{}_d{}.json", k, m, delta), &cw);
            }
            Err(err) => ctx.fail(format!("{} signs", name), claim, Basis::PublishedClaim, err),
        }
    }
}

pub fn expansion(e: &config::Expansion, ctx: &mut Context) {
    ctx.rec.start();
    let claim = "residual after the r^delta terms is of higher order";
    for t in &e.tuples {
        for &eps in &e.epsilons {
            for &sign in &e.signs {
                let name = format!("expansion k={} m={} delta={} eps={} A={}", t.k, t.m, t.delta, eps, sign);
                let grid = default_expansion_grid(t.delta, ctx.geometry.tube_radius);
                match verify_expansion(t.k, t.m, t.delta, eps, sign, &grid) {
                    Ok(rep) => {
                        ctx.push(name, claim, Basis::ClosedForm, json!({ "exponent": rep.fitted_exponent, "r_squared": rep.fit_r_squared }), json!({ "exponent_above": t.delta }), rep.exceeds_delta);
                        let rows = (0..rep.radii.len()).map(|i| vec![rep.radii[i], rep.r_eps[i], rep.radial_residuals[i], rep.tangent_residuals[i]]).collect();
                        ctx.csv_artifact(
                            format!("expansion_k{}_m{}_d{}_eps{}_a{}.csv", t.k, t.m, t.delta, eps, sign),
                            &["r", "r_eps", "radial_residual", "tangent_residual"],
                            rows,
                        );
                    }
                    Err(err) => ctx.fail(name, claim, Basis::ClosedForm, err),
                }
            }
        }
    }
}

fn series_method(m: usize, method: SeriesMethod, samples: usize, seed: u64) -> TubeMethod {
    if m == 1 {
        // the measure of a pole with m = 1 sits on V; only the flux sees it
        return TubeMethod::Flux;
    }
    match method {
        SeriesMethod::Flux => TubeMethod::Flux,
        SeriesMethod::Quadrature => TubeMethod::RadialQuadrature,
        SeriesMethod::MonteCarlo => TubeMethod::MonteCarlo { samples_per_stratum: samples, seed },
    }
}

fn mid_nu(k: usize, m: usize) -> f64 {
    let (lo, hi) = nu_range(k, m);
    0.5 * (lo + hi)
}

fn unit_theta(model: &FlatModel) -> mshlab::Result<ThetaField> {
    ThetaField::cosine(1.0, 1.0, 1, model.torus_periods.clone())
}

pub fn lelong(e: &config::Lelong, ctx: &mut Context) {
    ctx.rec.start();
    let grid = e.grid.values();
    for p in &e.pairs {
        let setup = ctx.model(p.k, p.m).and_then(|md| Ok((calibrate(&md)?, md)));
        let (calib, model) = match setup {
            Ok(v) => v,
            Err(err) => {
                ctx.fail(format!("calibration k={} m={}", p.k, p.m), "calibration exists", Basis::Oracle, err);
                continue;
            }
        };
        for &g in &e.gammas {
            let f = ScalarField::radial(model.psi_v().with_gamma(g));
            let method = series_method(p.m, e.method, e.mc_samples, ctx.seed);
            let name = format!("nu(gamma psi_V) k={} m={} gamma={}", p.k, p.m, g);
            let claim = "the generalized Lelong number is linear in the weight";
            match lelong_series(&f, &model, &grid, method, &calib) {
                Ok(ts) => {
                    match lelong_number(&ts) {
                        Ok(v) => ctx.push(name, claim, Basis::ClosedForm, v, g, rel_close(v, g, e.tolerance)),
                        Err(err) => ctx.fail(name, claim, Basis::ClosedForm, err),
                    }
                    ctx.series_artifact(format!("lelong_k{}_m{}_g{}.csv", p.k, p.m, g), &ts);
                }
                Err(err) => ctx.fail(name, claim, Basis::ClosedForm, err),
            }
        }
        if model.tangent_dim() == 0 {
            continue;
        }
        let delta = admissible_delta_bound(p.k, p.m) + 1.0;
        let field = unit_theta(&model)
            .and_then(|t| LocalizedField::new(t, mid_nu(p.k, p.m), p.k, p.m, delta, 1.0, &model))
            .map(|l| ScalarField::Localized(l).plus(ScalarField::radial(model.psi_v())));
        let name = format!("sublevel vs tube k={} m={}", p.k, p.m);
        let claim = "sublevel masses decrease and share the tube limit";
        let result = field.and_then(|f| {
            let tube = lelong_series(&f, &model, &grid, TubeMethod::Flux, &calib)?;
            let sub = defn26_series(&f, &model, &grid, &calib)?;
            Ok((tube, sub))
        });
        match result {
            Ok((tube, sub)) => {
                let a = tube.extrapolated_limit;
                let b = sub.extrapolated_limit;
                let agree = matches!((a, b), (Some(x), Some(y)) if rel_close(y, x, e.tolerance));
                ctx.push(format!("{} monotone", name), claim, Basis::PublishedClaim, sub.monotone, true, sub.monotone);
                ctx.push(format!("{} limits", name), claim, Basis::Oracle, json!({ "tube": a, "sublevel": b }), json!({ "relative_tolerance": e.tolerance }), agree);
                let disc = sub.stokes_discrepancy.unwrap_or(f64::INFINITY);
                ctx.push(format!("{} stokes", name), "sublevel differences equal annulus integrals of the mixed density", Basis::Oracle, disc, json!({ "max": 1e-6 }), disc < 1e-6);
                ctx.series_artifact(format!("sublevel_k{}_m{}.csv", p.k, p.m), &sub);
            }
            Err(err) => ctx.fail(format!("{} limits", name), claim, Basis::Oracle, err),
        }
    }
}

pub fn reltype(e: &config::Reltype, ctx: &mut Context) {
    ctx.rec.start();
    for p in &e.pairs {
        let model = match ctx.model(p.k, p.m) {
            Ok(md) => md,
            Err(err) => {
                ctx.fail(format!("reltype k={} m={}", p.k, p.m), "model is valid", Basis::ClosedForm, err);
                continue;
            }
        };
        let levels = default_level_grid(&model, e.levels);
        for &g in &e.gammas {
            let f = ScalarField::radial(model.psi_v().with_gamma(g));
            let name = format!("sigma(gamma psi_V) k={} m={} gamma={}", p.k, p.m, g);
            match relative_type(&f, &model, &levels, &ctx.sampler()) {
                Ok(sl) => {
                    ctx.push(format!("{} convexity", name), "sublevel maxima are convex in the level", Basis::PublishedClaim, json!({ "min_second_difference": sl.second_differences.iter().cloned().fold(f64::INFINITY, f64::min) }), json!({ "min": -mshlab::singularity::CONVEXITY_TOLERANCE }), sl.convexity_ok);
                    ctx.push(format!("{} slope", name), "the relative type of a pole multiple is its coefficient", Basis::ClosedForm, sl.sigma_hat, g, rel_close(sl.sigma_hat, g, e.tolerance));
                    let rows = (0..sl.s_values.len()).map(|i| vec![sl.s_values[i], sl.m_values[i], if i == 0 { f64::NAN } else { sl.secants[i - 1] }]).collect();
                    ctx.csv_artifact(format!("reltype_k{}_m{}_g{}.csv", p.k, p.m, g), &["s", "max", "secant"], rows);
                }
                Err(err) => ctx.fail(format!("{} slope", name), "relative type exists", Basis::ClosedForm, err),
            }
        }
    }
}

fn build_localized(model: &FlatModel, theta: &ThetaField, nu: f64, seed: u64) -> mshlab::Result<ScalarField> {
    make_localized(theta.clone(), nu, model.k, model.m, model, &LocalizeSearch::for_model(model, seed))
}

pub fn localize(e: &config::Localize, ctx: &mut Context) {
    ctx.rec.start();
    for case in &e.cases {
        let tag = format!("k={} m={} nu={}", case.k, case.m, case.nu);
        let setup = ctx.model(case.k, case.m).and_then(|md| {
            let th = theta_field(&e.theta, &md)?;
            let f = build_localized(&md, &th, case.nu, ctx.seed)?;
            Ok((md, th, f))
        });
        let (model, theta, f) = match setup {
            Ok(v) => v,
            Err(err) => {
                ctx.fail(format!("localized {} construction", tag), "some C certifies the localized weight", Basis::PublishedClaim, err);
                continue;
            }
        };
        let cert = f.localized().and_then(|l| l.certificate.clone());
        ctx.push(format!("localized {} construction", tag), "some C certifies the localized weight", Basis::PublishedClaim, &cert, "certified", cert.is_some());
        if let Some(l) = f.localized() {
            ctx.json_artifact(format!("localized_k{}_m{}.json", case.k, case.m), l);
        }

        let sigma = relative_type(&f, &model, &default_level_grid(&model, 16), &ctx.sampler());
        match &sigma {
            Ok(sl) => ctx.push(format!("localized {} type", tag), "the localized weight has zero relative type", Basis::ClosedForm, sl.sigma_hat, json!({ "max": e.type_tolerance }), sl.sigma_hat <= e.type_tolerance),
            Err(err) => ctx.fail(format!("localized {} type", tag), "relative type exists", Basis::ClosedForm, err),
        }

        let mean = theta.mean();
        let nu = calibrate(&model).and_then(|calib| {
            let ts = lelong_series(&f, &model, &e.grid.values(), TubeMethod::Flux, &calib)?;
            Ok((lelong_number(&ts)?, ts))
        });
        match &nu {
            Ok((v, ts)) => {
                ctx.push(format!("localized {} lelong", tag), "the Lelong number is the torus average of theta", Basis::ClosedForm, v, mean, rel_close(*v, mean, e.tolerance));
                let ts = ts.clone();
                ctx.series_artifact(format!("localized_k{}_m{}_lelong.csv", case.k, case.m), &ts);
            }
            Err(err) => ctx.fail(format!("localized {} lelong", tag), "Lelong number exists", Basis::ClosedForm, err),
        }
        if let (Ok(sl), Ok((v, _))) = (&sigma, &nu) {
            ctx.push(format!("localized {} sigma<=nu", tag), "the relative type is bounded by the Lelong number", Basis::PublishedClaim, json!({ "sigma": sl.sigma_hat, "nu": v }), json!({ "slack": 0.02 }), sl.sigma_hat <= v + 0.02);
        }

        let radii = default_probe_radii(&model, 24);
        let probes = torus_lattice(&model.torus_periods, e.probes);
        let mut rows = Vec::new();
        let mut worst: f64 = 0.0;
        let mut failed = None;
        for z in &probes {
            match l_pointwise(&f, &model, z, &radii) {
                Ok(p) => {
                    let t = theta.value(z);
                    worst = worst.max((p.liminf_estimate - t).abs() / t.max(1e-2));
                    let mut row = z.clone();
                    row.extend([p.liminf_estimate, t]);
                    rows.push(row);
                }
                Err(err) => failed = Some(err),
            }
        }
        let name = format!("localized {} pointwise", tag);
        let claim = "the pointwise ratio along V recovers theta";
        match failed {
            None => ctx.push(name, claim, Basis::ClosedForm, json!({ "max_relative_error": worst, "probes": probes.len() }), json!({ "max": e.tolerance }), worst <= e.tolerance),
            Some(err) => ctx.fail(name, claim, Basis::ClosedForm, err),
        }
        let mut header: Vec<String> = (0..2 * model.tangent_dim()).map(|i| format!("u{}", i)).collect();
        header.extend(["l_hat".into(), "theta".into()]);
        let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        ctx.csv_artifact(format!("localized_k{}_m{}_probes.csv", case.k, case.m), &header, rows);

        let name = format!("localized {} min-relation", tag);
        let claim = "the relative type is the minimum of the pointwise ratio along V";
        match min_relation_check(&f, &model, &default_v_grid(&model, 16), &radii, &default_level_grid(&model, 16), &ctx.sampler()) {
            Ok(rep) => ctx.push(name, claim, Basis::PublishedClaim, json!({ "min_l": rep.min_l, "sigma": rep.sigma_hat, "all_above": rep.all_above }), json!({ "relative_tolerance": 0.05, "absolute_floor": 0.02 }), rep.agrees && rep.all_above),
            Err(err) => ctx.fail(name, claim, Basis::PublishedClaim, err),
        }
    }
}

pub fn siu(e: &config::Siu, ctx: &mut Context) {
    ctx.rec.start();
    let model = match ctx.model(e.k, e.m) {
        Ok(md) => md,
        Err(err) => {
            ctx.fail("siu model".into(), "model is valid", Basis::ClosedForm, err);
            return;
        }
    };
    let mut opts = SiuOptions::for_model(&model, ctx.seed);
    opts.spread_tolerance = e.spread_tolerance;
    let vg = default_v_grid(&model, e.v_grid_per_dim);
    let radii = default_probe_radii(&model, 24);
    let claim = "an m-subharmonic function has constant pointwise ratio along V when k < m";
    for &g in &e.gammas {
        let name = format!("siu gamma={}", g);
        let f = ScalarField::radial(model.psi_v().with_gamma(g));
        match siu_scan(&f, &model, &vg, &radii, &opts) {
            Ok(rep) => {
                let ok = rep.verdict == SiuVerdict::ConstantAlongV && rep.matches_sigma == Some(true);
                ctx.push(name, claim, Basis::PublishedClaim, json!({ "verdict": rep.verdict, "spread": rep.spread, "mean": rep.mean_l, "sigma": rep.sigma_hat }), json!({ "verdict": SiuVerdict::ConstantAlongV, "max_spread": e.spread_tolerance }), ok);
                let mut buf = Vec::new();
                if rep.write_l_table_csv(&mut buf).is_ok() {
                    ctx.artifacts.push(Artifact { name: format!("{}siu_g{}_lhat.csv", ctx.prefix, g), contents: buf });
                }
            }
            Err(err) => ctx.fail(name, claim, Basis::PublishedClaim, err),
        }
    }
    let name = "siu falsifier".to_string();
    let claim = "theta log|z'| with nonconstant theta is not m-subharmonic";
    let res = ThetaField::new(e.falsifier.clone(), model.torus_periods.clone()).and_then(|th| {
        if th.is_constant() {
            return Err(LabError::Argument("falsifier theta is constant".into()));
        }
        siu_scan(&ScalarField::ScaledLog(th), &model, &vg, &radii, &opts)
    });
    match res {
        Ok(rep) => {
            let located = rep.verdict == SiuVerdict::NotMSubharmonic && rep.violation.is_some();
            let loc = rep.violation.as_ref().map(|v| json!({ "r": v.point.normal_radius(), "torus": v.point.torus_coords(), "margin": v.margin, "index": v.worst_index }));
            ctx.push(name, claim, Basis::PublishedClaim, json!({ "verdict": rep.verdict, "violation": loc }), json!({ "verdict": SiuVerdict::NotMSubharmonic }), located);
            ctx.json_artifact("siu_falsifier.json".into(), &json!({ "verdict": rep.verdict, "violation": rep.violation, "scan_points": rep.scan_points, "outside": rep.scan_outside }));
        }
        Err(err) => ctx.fail(name, claim, Basis::PublishedClaim, err),
    }
}

pub fn compare(e: &config::Compare, ctx: &mut Context) {
    ctx.rec.start();
    let claim = "the relative type is bounded by the Lelong number";
    for case in &e.cases {
        let setup = ctx.model(case.k, case.m).and_then(|md| {
            let th = theta_field(&e.theta, &md)?;
            let f = build_localized(&md, &th, case.nu, ctx.seed)?;
            Ok((calibrate(&md)?, md, f))
        });
        let (calib, model, loc): (Calibration, FlatModel, ScalarField) = match setup {
            Ok(v) => v,
            Err(err) => {
                ctx.fail(format!("compare k={} m={}", case.k, case.m), claim, Basis::PublishedClaim, err);
                continue;
            }
        };
        let levels = default_level_grid(&model, 16);
        let mut fields: Vec<(String, ScalarField)> = e.gammas.iter().map(|g| (format!("gamma={}", g), ScalarField::radial(model.psi_v().with_gamma(*g)))).collect();
        fields.push(("localized".into(), loc.clone()));
        if let Some(g) = e.gammas.first() {
            fields.push((format!("localized+gamma={}", g), loc.plus(ScalarField::radial(model.psi_v().with_gamma(*g)))));
        }
        for (label, f) in fields {
            let name = format!("compare k={} m={} {}", case.k, case.m, label);
            match compare_bounds(&f, &model, &calib, &levels, &e.grid.values(), &ctx.sampler()) {
                Ok(rep) => ctx.push(name, claim, Basis::PublishedClaim, json!({ "sigma": rep.sigma_hat, "nu": rep.nu_hat }), json!({ "slack": e.tolerance }), rep.sigma_hat <= rep.nu_hat + e.tolerance),
                Err(err) => ctx.fail(name, claim, Basis::PublishedClaim, err),
            }
        }
    }
}

pub fn minimal(e: &config::Minimal, ctx: &mut Context) {
    ctx.rec.start();
    let radii = log_spaced_desc(e.r_max, e.r_min, e.radii);
    for &kappa in &e.kappas {
        let name = format!("minimal kappa={}", kappa);
        let claim = "-r^(2-kappa) is harmonic in real codimension kappa";
        let res = minimal_real_weight(kappa).and_then(|w| radii.iter().map(|r| laplacian_residual(&w, *r)).collect::<mshlab::Result<Vec<f64>>>());
        match res {
            Ok(v) => {
                let worst = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                ctx.push(name, claim, Basis::ClosedForm, worst, json!({ "max": e.tolerance }), worst < e.tolerance);
            }
            Err(err) => ctx.fail(name, claim, Basis::ClosedForm, err),
        }
    }
    let name = "minimal control".to_string();
    let claim = "the perturbation -1/r + r has Laplacian 2/r in codimension 3";
    let res = minimal_real_weight(3).and_then(|w| {
        radii
            .iter()
            .map(|r| {
                let d = eval_weight(&w, *r)? + DerivTriple::new(*r, 1.0, 0.0);
                Ok(real_radial_laplacian(&d, *r, 3) - 2.0 / r)
            })
            .collect::<mshlab::Result<Vec<f64>>>()
    });
    match res {
        Ok(v) => {
            let worst = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            ctx.push(name, claim, Basis::ClosedForm, worst, json!({ "max": e.tolerance }), worst < e.tolerance);
        }
        Err(err) => ctx.fail(name, claim, Basis::ClosedForm, err),
    }
}

/// `∂_a∂̄_b f(|z'|)` for a radial weight, written out directly.
pub fn radial_hessian_closed_form(w: &WeightFamily, p: &Point) -> mshlab::Result<HermitianMatrix> {
    let r = p.normal_radius();
    let d = eval_weight(w, r)?;
    let k = p.z_normal.len();
    let c = d.d2 / (4.0 * r * r) - d.d1 / (4.0 * r * r * r);
    HermitianMatrix::from_fn(p.dim(), |a, b| {
        if a >= k || b >= k {
            return C64::new(0.0, 0.0);
        }
        let diag = if a == b { d.d1 / (2.0 * r) } else { 0.0 };
        C64::new(diag, 0.0) + p.z_normal[a].conj() * p.z_normal[b] * c
    })
}

/// Error ratios of the central-difference Hessian under step halving.
pub fn fd_convergence_ratios(k: usize, m: usize, r: f64, steps: &[f64], seed: u64) -> mshlab::Result<Vec<f64>> {
    let w = WeightFamily::g_pure(k, m);
    let dir = sphere_directions(k, 2, seed)[1].clone();
    let p = Point::from_direction(r, &dir, &[0.7, 1.9]);
    let exact = radial_hessian_closed_form(&w, &p)?;
    let f = ScalarField::radial(w);
    let errs: Vec<f64> = steps.iter().map(|h| Ok(fd_hessian(&f, &p, *h)?.max_abs_diff(&exact))).collect::<mshlab::Result<_>>()?;
    Ok(errs.windows(2).map(|e| e[0] / e[1]).collect())
}

/// Largest scaled gap between principal-minor sums and symmetric functions
/// of the eigenvalues over random Hermitian matrices.
pub fn minors_vs_eigen(samples: usize, seed: u64) -> mshlab::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..samples {
        let dim = 1 + i % 7;
        let entries: Vec<C64> = (0..dim * dim).map(|_| C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
        let h = HermitianMatrix::new(dim, entries)?;
        let eig = h.eigenvalues();
        let sig = sigma_all(&h, dim)?;
        let norm = h.operator_norm().max(1.0);
        for j in 1..=dim {
            let scale = norm.powi(j as i32) * mshlab::garding::binomial(dim, j);
            worst = worst.max((sig[j - 1] - elementary_symmetric(&eig, j)).abs() / scale);
        }
    }
    Ok(worst)
}

pub fn infrastructure(ctx: &mut Context) {
    ctx.rec.start();
    let claim = "central differences converge at second order";
    for (k, m) in [(2usize, 1usize), (3, 2), (2, 2)] {
        let name = format!("fd-convergence k={} m={}", k, m);
        match fd_convergence_ratios(k, m, 0.3, &[4e-3, 2e-3, 1e-3], ctx.seed) {
            Ok(r) => {
                let ok = r.iter().all(|x| (3.5..=4.5).contains(x));
                ctx.push(name, claim, Basis::ClosedForm, &r, json!({ "range": [3.5, 4.5] }), ok);
            }
            Err(err) => ctx.fail(name, claim, Basis::ClosedForm, err),
        }
    }
    let name = "minors-vs-eigenvalues".to_string();
    let claim = "principal-minor sums equal symmetric functions of the eigenvalues";
    match minors_vs_eigen(200, ctx.seed) {
        Ok(w) => ctx.push(name, claim, Basis::Oracle, w, json!({ "max": 1e-10 }), w < 1e-10),
        Err(err) => ctx.fail(name, claim, Basis::Oracle, err),
    }
}
