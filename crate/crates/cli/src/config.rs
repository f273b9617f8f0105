//! Experiment configuration: parsing, defaults and validation.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use dtc_core::analytic::EnergyBranch;
use dtc_core::geometry::MetricEngine;
use dtc_core::metrology::Engine;
use dtc_core::scaling::FiniteModel;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    GroundEnergy,
    MetricScan,
    QfiTime,
    InvertedVariance,
    RatioBeta,
    #[serde(rename = "ratio_N")]
    RatioN,
    IdentityChecks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub numerics: NumericsBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// N qubits sharing a total weight K equally.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub n_qubits: usize,
    /// Defaults to N.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_sum: Option<f64>,
}

impl EnsembleSpec {
    pub fn k(&self) -> f64 {
        self.k_sum.unwrap_or(self.n_qubits as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Amplitude {
    pub re: f64,
    pub im: f64,
}

impl From<Amplitude> for Complex64 {
    fn from(a: Amplitude) -> Self {
        Complex64::new(a.re, a.im)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum BranchSpec {
    /// Qubit offset only, as plotted for the kink.
    #[default]
    Approximate,
    Full,
}

impl From<BranchSpec> for EnergyBranch {
    fn from(b: BranchSpec) -> Self {
        match b {
            BranchSpec::Approximate => EnergyBranch::Approximate,
            BranchSpec::Full => EnergyBranch::Full,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum FiniteModelSpec {
    Full,
    HolsteinPrimakoff,
    Corrected,
}

impl From<FiniteModelSpec> for FiniteModel {
    fn from(m: FiniteModelSpec) -> Self {
        match m {
            FiniteModelSpec::Full => FiniteModel::Full,
            FiniteModelSpec::HolsteinPrimakoff => FiniteModel::HolsteinPrimakoff,
            FiniteModelSpec::Corrected => FiniteModel::Corrected,
        }
    }
}

fn unit() -> f64 {
    1.0
}

fn single_qubit() -> Vec<EnsembleSpec> {
    vec![EnsembleSpec {
        n_qubits: 1,
        k_sum: None,
    }]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// Field frequency ω, the energy unit.
    #[serde(default = "unit")]
    pub field_freq: f64,
    /// Qubit frequency scale Ω. Not used by the ratio experiments, which
    /// set it through β.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubit_freq: Option<f64>,
    /// Two-photon drive amplitude G.
    pub squeezing: f64,
    #[serde(default = "single_qubit")]
    pub ensembles: Vec<EnsembleSpec>,
    /// Fixed control parameters, for experiments not swept in g.
    #[serde(default)]
    pub g: Vec<f64>,
    /// Initial coherent amplitudes.
    #[serde(default)]
    pub xi: Vec<Amplitude>,
    /// Frequency ratios for `ratio_N`.
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub branch: BranchSpec,
    /// Finite-β models for `ratio_beta`.
    #[serde(default)]
    pub finite_models: Vec<FiniteModelSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    G,
    /// Absolute time in units of 1/ω.
    Time,
    /// Time in units of the first revival.
    Revivals,
    Beta,
    NQubits,
    Cutoff,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub axis: Axis,
    /// Explicit values; overrides min/max/points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default)]
    pub scale: Scale,
}

impl SweepBlock {
    pub fn resolve(&self) -> Result<Vec<f64>, ConfigError> {
        if let Some(v) = &self.values {
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return invalid("sweep values must be a non-empty list of finite numbers");
            }
            return Ok(v.clone());
        }
        let (Some(min), Some(max), Some(points)) = (self.min, self.max, self.points) else {
            return invalid("a sweep needs either `values` or all of `min`, `max`, `points`");
        };
        if points == 0 || !(min <= max) || !min.is_finite() || !max.is_finite() {
            return invalid(format!("bad sweep range [{min}, {max}] with {points} points"));
        }
        if points == 1 {
            return Ok(vec![min]);
        }
        let step = |i: usize| i as f64 / (points - 1) as f64;
        match self.scale {
            Scale::Linear => Ok((0..points).map(|i| min + (max - min) * step(i)).collect()),
            Scale::Log => {
                if min <= 0.0 {
                    return invalid("a log sweep needs a positive range");
                }
                let (a, b) = (min.ln(), max.ln());
                Ok((0..points).map(|i| (a + (b - a) * step(i)).exp()).collect())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum EngineSpec {
    /// Closed-form values only.
    ClosedForm,
    SumOverStates,
    OverlapFd,
    Gaussian,
    Fock,
}

impl EngineSpec {
    pub fn metric(self) -> Option<MetricEngine> {
        match self {
            Self::SumOverStates => Some(MetricEngine::SumOverStates),
            Self::OverlapFd => Some(MetricEngine::OverlapFd),
            _ => None,
        }
    }

    /// Dynamics engine; `Fock` needs a cutoff.
    pub fn dynamics(self, cutoff: usize) -> Option<Engine> {
        match self {
            Self::Gaussian => Some(Engine::Gaussian),
            Self::Fock => Some(Engine::Fock { cutoff }),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative slack in the Cramér-Rao check.
    pub cramer_rao_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { cramer_rao_rel: 1e-6 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct NumericsBlock {
    /// Fock cutoff; chosen per experiment when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<EngineSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    /// Homodyne shots per setting; enables the sampled estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv]
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Axis the experiment sweeps, if it requires one.
    fn expected_axes(&self) -> &'static [Axis] {
        match self.experiment {
            Experiment::GroundEnergy | Experiment::MetricScan | Experiment::InvertedVariance => &[Axis::G],
            Experiment::QfiTime => &[Axis::Time, Axis::Revivals],
            Experiment::RatioBeta => &[Axis::Beta],
            Experiment::RatioN => &[Axis::NQubits],
            Experiment::IdentityChecks => &[Axis::Cutoff],
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        if !(m.field_freq > 0.0) {
            return invalid("field_freq must be positive");
        }
        if !(m.squeezing >= 0.0) || 2.0 * m.squeezing >= m.field_freq {
            return invalid("squeezing must satisfy 0 <= G < field_freq / 2");
        }
        if m.ensembles.is_empty() || m.ensembles.iter().any(|e| e.n_qubits == 0 || !(e.k() > 0.0)) {
            return invalid("every ensemble needs at least one qubit and a positive weight sum");
        }
        if m.g.iter().any(|g| !(*g >= 0.0)) {
            return invalid("g values must be non-negative");
        }
        if m.betas.iter().any(|b| !(*b > 0.0)) {
            return invalid("betas must be positive");
        }
        let needs_omega = !matches!(
            self.experiment,
            Experiment::RatioBeta | Experiment::RatioN | Experiment::IdentityChecks
        );
        match m.qubit_freq {
            None if needs_omega => return invalid("model.qubit_freq is required"),
            Some(w) if !(w > 0.0) => return invalid("qubit_freq must be positive"),
            _ => {}
        }
        match (&self.sweep, self.experiment) {
            (None, Experiment::IdentityChecks) => {}
            (None, _) => return invalid("this experiment needs a sweep block"),
            (Some(s), _) => {
                if !self.expected_axes().contains(&s.axis) {
                    return invalid(format!(
                        "axis {:?} does not apply to {:?}; expected one of {:?}",
                        s.axis,
                        self.experiment,
                        self.expected_axes()
                    ));
                }
                let values = s.resolve()?;
                let integral = matches!(s.axis, Axis::NQubits | Axis::Cutoff);
                if integral && values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
                    return invalid("qubit counts and cutoffs must be positive integers");
                }
                if s.axis == Axis::Beta && values.iter().any(|v| *v <= 0.0) {
                    return invalid("beta values must be positive");
                }
            }
        }
        if self.experiment == Experiment::RatioN && m.betas.is_empty() {
            return invalid("ratio_N needs model.betas");
        }
        if let Some(engine) = self.numerics.engine {
            let ok = match self.experiment {
                Experiment::MetricScan => engine.metric().is_some() || engine == EngineSpec::ClosedForm,
                Experiment::QfiTime | Experiment::InvertedVariance => engine.dynamics(1).is_some(),
                _ => false,
            };
            if !ok {
                return invalid(format!("engine {engine:?} does not apply to {:?}", self.experiment));
            }
        }
        if self.numerics.threads == Some(0) {
            return invalid("threads must be at least 1");
        }
        if self.numerics.shots.is_some_and(|s| s < 2) {
            return invalid("homodyne estimation needs at least two shots");
        }
        if self.output.formats.is_empty() {
            return invalid("at least one output format is required");
        }
        Ok(())
    }

    pub fn sweep_values(&self) -> Vec<f64> {
        self.sweep
            .as_ref()
            .map(|s| s.resolve().expect("validated"))
            .unwrap_or_default()
    }

    pub fn xis(&self, default: Complex64) -> Vec<Complex64> {
        if self.model.xi.is_empty() {
            vec![default]
        } else {
            self.model.xi.iter().map(|&a| a.into()).collect()
        }
    }

    pub fn g_values(&self, default: f64) -> Vec<f64> {
        if self.model.g.is_empty() {
            vec![default]
        } else {
            self.model.g.clone()
        }
    }
}

pub fn schema() -> schemars::schema::RootSchema {
    schemars::schema_for!(ExperimentConfig)
}
