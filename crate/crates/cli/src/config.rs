//! Run configuration. Everything that affects results lives here and is
//! hashed into the output directory name.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use mshlab::fields::ThetaSpec;
use mshlab::profiles::FlatModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_SEED: u64 = 20240917;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Shared geometry; `(k, m)` come from the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Complex dimension of the torus factor.
    #[serde(default = "one")]
    pub tangent_dims: usize,
    #[serde(default = "half")]
    pub tube_radius: f64,
    #[serde(default = "two_pi")]
    pub torus_period: f64,
}

fn one() -> usize {
    1
}
fn half() -> f64 {
    0.5
}
fn two_pi() -> f64 {
    2.0 * PI
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { tangent_dims: 1, tube_radius: 0.5, torus_period: 2.0 * PI }
    }
}

impl ModelConfig {
    pub fn model(&self, k: usize, m: usize) -> mshlab::Result<FlatModel> {
        let n = k + self.tangent_dims;
        FlatModel::with_periods(n, k, m, self.tube_radius, vec![self.torus_period; self.tangent_dims])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightTuple {
    pub k: usize,
    pub m: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pair {
    pub k: usize,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizeCase {
    pub k: usize,
    pub m: usize,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricGrid {
    pub start: f64,
    pub ratio: f64,
    pub count: usize,
}

impl GeometricGrid {
    pub fn values(&self) -> Vec<f64> {
        mshlab::fit::geometric_grid(self.start, self.ratio, self.count)
    }
}

fn default_tuples() -> Vec<WeightTuple> {
    [(2, 1, 3.0), (3, 1, 5.0), (2, 2, 2.0), (3, 2, 2.0), (4, 3, 2.0)].iter().map(|&(k, m, delta)| WeightTuple { k, m, delta }).collect()
}

fn pairs(v: &[(usize, usize)]) -> Vec<Pair> {
    v.iter().map(|&(k, m)| Pair { k, m }).collect()
}

fn default_gammas() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

fn default_series_grid() -> GeometricGrid {
    GeometricGrid { start: 0.125, ratio: 0.5, count: 12 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyWeights {
    pub tuples: Vec<WeightTuple>,
    pub maximality_radii: usize,
    pub maximality_tolerance: f64,
    pub exponent_tolerance: f64,
    pub coefficient_tolerance: f64,
}

impl Default for VerifyWeights {
    fn default() -> Self {
        VerifyWeights { tuples: default_tuples(), maximality_radii: 50, maximality_tolerance: 1e-10, exponent_tolerance: 0.02, coefficient_tolerance: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expansion {
    pub tuples: Vec<WeightTuple>,
    pub epsilons: Vec<f64>,
    pub signs: Vec<f64>,
}

impl Default for Expansion {
    fn default() -> Self {
        Expansion { tuples: default_tuples(), epsilons: vec![0.0, 1e-4], signs: vec![1.0, -1.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesMethod {
    Flux,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lelong {
    pub pairs: Vec<Pair>,
    pub gammas: Vec<f64>,
    pub grid: GeometricGrid,
    pub method: SeriesMethod,
    pub mc_samples: usize,
    pub tolerance: f64,
}

impl Default for Lelong {
    fn default() -> Self {
        Lelong {
            pairs: pairs(&[(2, 1), (2, 2), (3, 2), (4, 3)]),
            gammas: default_gammas(),
            grid: default_series_grid(),
            method: SeriesMethod::Flux,
            mc_samples: 4096,
            tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Reltype {
    pub pairs: Vec<Pair>,
    pub gammas: Vec<f64>,
    pub levels: usize,
    pub tolerance: f64,
}

impl Default for Reltype {
    fn default() -> Self {
        Reltype { pairs: pairs(&[(2, 1), (2, 2), (3, 2), (1, 2)]), gammas: default_gammas(), levels: 16, tolerance: 0.02 }
    }
}

fn default_theta() -> ThetaSpec {
    serde_json::from_str(r#"{"offset": 1.0, "terms": [{"frequency": [1, 0], "amplitude": 1.0}]}"#).unwrap()
}

fn half_cos_theta() -> ThetaSpec {
    serde_json::from_str(r#"{"offset": 1.0, "terms": [{"frequency": [1, 0], "amplitude": 0.5}]}"#).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Localize {
    pub cases: Vec<LocalizeCase>,
    /// Shifted to minimum zero before use.
    pub theta: ThetaSpec,
    pub probes: usize,
    pub grid: GeometricGrid,
    pub tolerance: f64,
    pub type_tolerance: f64,
}

impl Default for Localize {
    fn default() -> Self {
        Localize {
            cases: vec![LocalizeCase { k: 2, m: 1, nu: 1.5 }, LocalizeCase { k: 2, m: 2, nu: 0.75 }],
            theta: default_theta(),
            probes: 8,
            grid: default_series_grid(),
            tolerance: 0.05,
            type_tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Siu {
    pub k: usize,
    pub m: usize,
    pub gammas: Vec<f64>,
    pub falsifier: ThetaSpec,
    pub v_grid_per_dim: usize,
    pub spread_tolerance: f64,
}

impl Default for Siu {
    fn default() -> Self {
        Siu { k: 1, m: 2, gammas: default_gammas(), falsifier: half_cos_theta(), v_grid_per_dim: 16, spread_tolerance: 0.03 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Compare {
    pub gammas: Vec<f64>,
    pub cases: Vec<LocalizeCase>,
    pub theta: ThetaSpec,
    pub grid: GeometricGrid,
    pub tolerance: f64,
}

impl Default for Compare {
    fn default() -> Self {
        Compare {
            gammas: default_gammas(),
            cases: vec![LocalizeCase { k: 2, m: 1, nu: 1.5 }, LocalizeCase { k: 2, m: 2, nu: 0.75 }],
            theta: default_theta(),
            grid: default_series_grid(),
            tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Minimal {
    pub kappas: Vec<usize>,
    pub radii: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub tolerance: f64,
}

impl Default for Minimal {
    fn default() -> Self {
        Minimal { kappas: vec![3, 4], radii: 20, r_min: 0.05, r_max: 0.5, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    VerifyWeights(VerifyWeights),
    Expansion(Expansion),
    Lelong(Lelong),
    Reltype(Reltype),
    Localize(Localize),
    Siu(Siu),
    Compare(Compare),
    Minimal(Minimal),
    FullSuite,
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::VerifyWeights(_) => "verify-weights",
            Experiment::Expansion(_) => "expansion",
            Experiment::Lelong(_) => "lelong",
            Experiment::Reltype(_) => "reltype",
            Experiment::Localize(_) => "localize",
            Experiment::Siu(_) => "siu",
            Experiment::Compare(_) => "compare",
            Experiment::Minimal(_) => "minimal",
            Experiment::FullSuite => "full-suite",
        }
    }

    pub fn default_for(kind: &str) -> Option<Experiment> {
        Some(match kind {
            "verify-weights" => Experiment::VerifyWeights(Default::default()),
            "expansion" => Experiment::Expansion(Default::default()),
            "lelong" => Experiment::Lelong(Default::default()),
            "reltype" => Experiment::Reltype(Default::default()),
            "localize" => Experiment::Localize(Default::default()),
            "siu" => Experiment::Siu(Default::default()),
            "compare" => Experiment::Compare(Default::default()),
            "minimal" => Experiment::Minimal(Default::default()),
            "full-suite" => Experiment::FullSuite,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    #[default]
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        self != Format::Csv
    }
    pub fn csv(self) -> bool {
        self != Format::Json
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: Format,
}

fn default_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir(), format: Format::Both }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelConfig,
    pub experiment: Experiment,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be positive and finite, got {}", v)))
    }
}

fn nonempty<T>(field: &str, v: &[T]) -> Result<(), ConfigError> {
    if v.is_empty() {
        Err(ConfigError::new(field, "must not be empty"))
    } else {
        Ok(())
    }
}

fn check_pair(field: &str, k: usize, m: usize, allow_low_codim: bool) -> Result<(), ConfigError> {
    if k == 0 || m == 0 || (!allow_low_codim && m > k) {
        return Err(ConfigError::new(field, format!("need 1 <= m <= k, got k = {}, m = {}", k, m)));
    }
    Ok(())
}

fn check_grid(field: &str, g: &GeometricGrid, tube: f64) -> Result<(), ConfigError> {
    positive(&format!("{}.start", field), g.start)?;
    if g.start > tube {
        return Err(ConfigError::new(format!("{}.start", field), "exceeds the tube radius"));
    }
    if !(g.ratio > 0.0 && g.ratio <= 0.5) {
        return Err(ConfigError::new(format!("{}.ratio", field), "must lie in (0, 0.5]"));
    }
    if g.count < 6 {
        return Err(ConfigError::new(format!("{}.count", field), "need at least 6 radii"));
    }
    Ok(())
}

fn check_theta(field: &str, t: &ThetaSpec, dims: usize) -> Result<(), ConfigError> {
    for (i, term) in t.terms.iter().enumerate() {
        if term.frequency.len() != 2 * dims {
            return Err(ConfigError::new(format!("{}.terms[{}].frequency", field, i), format!("expected {} entries", 2 * dims)));
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        RunConfig { model: ModelConfig::default(), experiment, seed: DEFAULT_SEED, threads: None, output: OutputConfig::default() }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            let line = e.line();
            ConfigError::new("config", format!("{} (line {})", e, line))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("config", format!("{}: {}", path.display(), e)))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mc = &self.model;
        positive("model.tube_radius", mc.tube_radius)?;
        positive("model.torus_period", mc.torus_period)?;
        if mc.tube_radius > 1.0 {
            return Err(ConfigError::new("model.tube_radius", "must not exceed 1 (the pole must be negative on the tube)"));
        }
        if self.threads == Some(0) {
            return Err(ConfigError::new("threads", "must be at least 1"));
        }
        let tube = mc.tube_radius;
        match &self.experiment {
            Experiment::VerifyWeights(e) => {
                nonempty("experiment.tuples", &e.tuples)?;
                for (i, t) in e.tuples.iter().enumerate() {
                    check_pair(&format!("experiment.tuples[{}]", i), t.k, t.m, false)?;
                    positive(&format!("experiment.tuples[{}].delta", i), t.delta)?;
                }
                if e.maximality_radii < 2 {
                    return Err(ConfigError::new("experiment.maximality_radii", "need at least 2"));
                }
                positive("experiment.maximality_tolerance", e.maximality_tolerance)?;
                positive("experiment.exponent_tolerance", e.exponent_tolerance)?;
                positive("experiment.coefficient_tolerance", e.coefficient_tolerance)?;
            }
            Experiment::Expansion(e) => {
                nonempty("experiment.tuples", &e.tuples)?;
                nonempty("experiment.epsilons", &e.epsilons)?;
                nonempty("experiment.signs", &e.signs)?;
                for (i, t) in e.tuples.iter().enumerate() {
                    check_pair(&format!("experiment.tuples[{}]", i), t.k, t.m, false)?;
                    positive(&format!("experiment.tuples[{}].delta", i), t.delta)?;
                }
                for (i, eps) in e.epsilons.iter().enumerate() {
                    if !(*eps >= 0.0) {
                        return Err(ConfigError::new(format!("experiment.epsilons[{}]", i), "must be non-negative"));
                    }
                }
                for (i, s) in e.signs.iter().enumerate() {
                    if s.abs() != 1.0 {
                        return Err(ConfigError::new(format!("experiment.signs[{}]", i), "must be +1 or -1"));
                    }
                }
            }
            Experiment::Lelong(e) => {
                nonempty("experiment.pairs", &e.pairs)?;
                nonempty("experiment.gammas", &e.gammas)?;
                for (i, p) in e.pairs.iter().enumerate() {
                    check_pair(&format!("experiment.pairs[{}]", i), p.k, p.m, false)?;
                }
                for (i, g) in e.gammas.iter().enumerate() {
                    positive(&format!("experiment.gammas[{}]", i), *g)?;
                }
                check_grid("experiment.grid", &e.grid, tube)?;
                if e.method == SeriesMethod::MonteCarlo && e.mc_samples < 2 {
                    return Err(ConfigError::new("experiment.mc_samples", "need at least 2"));
                }
                positive("experiment.tolerance", e.tolerance)?;
            }
            Experiment::Reltype(e) => {
                nonempty("experiment.pairs", &e.pairs)?;
                nonempty("experiment.gammas", &e.gammas)?;
                for (i, p) in e.pairs.iter().enumerate() {
                    check_pair(&format!("experiment.pairs[{}]", i), p.k, p.m, true)?;
                }
                for (i, g) in e.gammas.iter().enumerate() {
                    positive(&format!("experiment.gammas[{}]", i), *g)?;
                }
                if e.levels < 6 {
                    return Err(ConfigError::new("experiment.levels", "need at least 6"));
                }
                positive("experiment.tolerance", e.tolerance)?;
            }
            Experiment::Localize(e) => {
                nonempty("experiment.cases", &e.cases)?;
                for (i, c) in e.cases.iter().enumerate() {
                    check_pair(&format!("experiment.cases[{}]", i), c.k, c.m, false)?;
                }
                if mc.tangent_dims == 0 {
                    return Err(ConfigError::new("model.tangent_dims", "localized weights need a torus factor"));
                }
                check_theta("experiment.theta", &e.theta, mc.tangent_dims)?;
                if e.probes == 0 {
                    return Err(ConfigError::new("experiment.probes", "need at least one probe"));
                }
                check_grid("experiment.grid", &e.grid, tube)?;
                positive("experiment.tolerance", e.tolerance)?;
                positive("experiment.type_tolerance", e.type_tolerance)?;
            }
            Experiment::Siu(e) => {
                if !(e.k >= 1 && e.k < e.m) {
                    return Err(ConfigError::new("experiment.k", format!("need 1 <= k < m, got k = {}, m = {}", e.k, e.m)));
                }
                if mc.tangent_dims == 0 {
                    return Err(ConfigError::new("model.tangent_dims", "the scan needs a torus factor"));
                }
                nonempty("experiment.gammas", &e.gammas)?;
                for (i, g) in e.gammas.iter().enumerate() {
                    positive(&format!("experiment.gammas[{}]", i), *g)?;
                }
                check_theta("experiment.falsifier", &e.falsifier, mc.tangent_dims)?;
                if e.v_grid_per_dim == 0 {
                    return Err(ConfigError::new("experiment.v_grid_per_dim", "must be at least 1"));
                }
                positive("experiment.spread_tolerance", e.spread_tolerance)?;
            }
            Experiment::Compare(e) => {
                for (i, g) in e.gammas.iter().enumerate() {
                    positive(&format!("experiment.gammas[{}]", i), *g)?;
                }
                for (i, c) in e.cases.iter().enumerate() {
                    check_pair(&format!("experiment.cases[{}]", i), c.k, c.m, false)?;
                }
                if e.cases.is_empty() {
                    return Err(ConfigError::new("experiment.cases", "must not be empty"));
                }
                check_theta("experiment.theta", &e.theta, mc.tangent_dims)?;
                check_grid("experiment.grid", &e.grid, tube)?;
                positive("experiment.tolerance", e.tolerance)?;
            }
            Experiment::Minimal(e) => {
                nonempty("experiment.kappas", &e.kappas)?;
                for (i, k) in e.kappas.iter().enumerate() {
                    if *k < 3 {
                        return Err(ConfigError::new(format!("experiment.kappas[{}]", i), "real codimension must be at least 3"));
                    }
                }
                if e.radii < 2 {
                    return Err(ConfigError::new("experiment.radii", "need at least 2"));
                }
                positive("experiment.r_min", e.r_min)?;
                if !(e.r_max > e.r_min) {
                    return Err(ConfigError::new("experiment.r_max", "must exceed r_min"));
                }
                positive("experiment.tolerance", e.tolerance)?;
            }
            Experiment::FullSuite => {
                if mc.tangent_dims == 0 {
                    return Err(ConfigError::new("model.tangent_dims", "the full suite needs a torus factor"));
                }
            }
        }
        Ok(())
    }

    /// Hash of everything that determines the results: model, experiment
    /// and seed. Threads and output settings are excluded.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            model: &'a ModelConfig,
            experiment: &'a Experiment,
            seed: u64,
        }
        let text = serde_json::to_string(&Key { model: &self.model, experiment: &self.experiment, seed: self.seed }).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output.dir.join(&self.hash()[..16])
    }
}
