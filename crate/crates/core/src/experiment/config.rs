//! Experiment configuration. Parsing rejects unknown keys; `validate` checks
//! the cross-field requirements of each scenario before anything is built.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{FilterFunction, TabulatedFilter};
use crate::fock::FockBasis;
use crate::lindblad::SigmaE;
use crate::models::{AubryAndreParams, BoseHubbardParams, Boundary, LatticeSpec, MeanFieldParams};
use crate::thermal::TruncationModel;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub basis: Option<BasisConfig>,
    pub filter: FilterConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub dim: usize,
    pub side: usize,
    #[serde(default = "open")]
    pub boundary: Boundary,
}

fn open() -> Boundary {
    Boundary::Open
}

impl LatticeConfig {
    pub fn build(&self) -> Result<LatticeSpec> {
        LatticeSpec::new(self.dim, self.side, self.boundary)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// `H = sum_i N_i`.
    Number {
        #[serde(default = "one")]
        n_modes: usize,
    },
    MeanField {
        mu: f64,
        u: f64,
        #[serde(default)]
        psi_re: f64,
        #[serde(default)]
        psi_im: f64,
    },
    BoseHubbard {
        lattice: LatticeConfig,
        params: BoseHubbardParams,
    },
    Superfluid {
        lattice: LatticeConfig,
        params: BoseHubbardParams,
        m_prime: usize,
    },
    Mott {
        lattice: LatticeConfig,
        params: BoseHubbardParams,
        m: usize,
    },
    AubryAndre {
        t: f64,
        p: usize,
        side: usize,
    },
}

fn one() -> usize {
    1
}

impl ModelConfig {
    pub fn n_modes(&self) -> usize {
        match self {
            ModelConfig::Number { n_modes } => *n_modes,
            ModelConfig::MeanField { .. } => 1,
            ModelConfig::BoseHubbard { lattice, .. }
            | ModelConfig::Superfluid { lattice, .. }
            | ModelConfig::Mott { lattice, .. } => lattice.side.pow(lattice.dim as u32),
            ModelConfig::AubryAndre { side, .. } => side * side,
        }
    }

    pub fn mean_field(&self) -> Option<MeanFieldParams> {
        match *self {
            ModelConfig::MeanField { mu, u, psi_re, psi_im } => Some(MeanFieldParams { mu, u, psi_re, psi_im }),
            _ => None,
        }
    }

    pub fn lattice_params(&self) -> Option<(LatticeConfig, BoseHubbardParams)> {
        match self {
            ModelConfig::BoseHubbard { lattice, params }
            | ModelConfig::Superfluid { lattice, params, .. }
            | ModelConfig::Mott { lattice, params, .. } => Some((*lattice, *params)),
            _ => None,
        }
    }

    pub fn aubry_andre(&self) -> Option<AubryAndreParams> {
        match *self {
            ModelConfig::AubryAndre { t, p, side } => Some(AubryAndreParams { t, p, side }),
            _ => None,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            ModelConfig::Number { .. } => "number",
            ModelConfig::MeanField { .. } => "mean_field",
            ModelConfig::BoseHubbard { .. } => "bose_hubbard",
            ModelConfig::Superfluid { .. } => "superfluid",
            ModelConfig::Mott { .. } => "mott",
            ModelConfig::AubryAndre { .. } => "aubry_andre",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub per_mode_cutoff: usize,
    #[serde(default)]
    pub total_cutoff: Option<usize>,
    #[serde(default)]
    pub dimension_cap: Option<usize>,
}

impl BasisConfig {
    pub fn build(&self, n_modes: usize) -> Result<Arc<FockBasis>> {
        match self.dimension_cap {
            Some(cap) => FockBasis::with_cap(n_modes, self.per_mode_cutoff, self.total_cutoff, cap),
            None => FockBasis::new(n_modes, self.per_mode_cutoff, self.total_cutoff),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterConfig {
    Metropolis {
        beta: f64,
    },
    GaussianKms {
        beta: f64,
        #[serde(default)]
        width: Option<f64>,
    },
    /// CSV with columns `nu, re, im` (header line optional).
    Tabulated {
        beta: f64,
        path: PathBuf,
    },
}

impl FilterConfig {
    pub fn beta(&self) -> f64 {
        match *self {
            FilterConfig::Metropolis { beta }
            | FilterConfig::GaussianKms { beta, .. }
            | FilterConfig::Tabulated { beta, .. } => beta,
        }
    }

    /// Relative paths are resolved against `base`.
    pub fn build(&self, base: Option<&Path>) -> Result<FilterFunction> {
        match self {
            FilterConfig::Metropolis { beta } => FilterFunction::metropolis(*beta),
            FilterConfig::GaussianKms { beta, width } => FilterFunction::gaussian_kms(*beta, *width),
            FilterConfig::Tabulated { beta, path } => {
                let full = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                let table = TabulatedFilter::from_csv(std::fs::File::open(&full)?)?;
                FilterFunction::tabulated(*beta, table, full.display().to_string())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpSet {
    /// `a_i, a_i^dagger` for every site.
    #[default]
    Ladder,
    /// Normal-mode `b_k, b_k^dagger` (Aubry-Andre only).
    NormalModes,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    #[serde(default = "infinite")]
    pub sigma_e: SigmaE,
    #[serde(default)]
    pub jumps: JumpSet,
}

fn infinite() -> SigmaE {
    SigmaE::Infinite
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            sigma_e: SigmaE::Infinite,
            jumps: JumpSet::Ladder,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub formats: Option<Vec<Format>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterAuditParams {
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default)]
    pub points: Option<usize>,
    /// Frequencies at which to tabulate birth/death rates.
    #[serde(default)]
    pub omegas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiSweep {
    pub psi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSweep {
    pub truncation: TruncationModel,
    pub levels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSweep {
    pub sigma_e: Vec<SigmaE>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderParams {
    #[serde(default = "two")]
    pub excluded: usize,
    #[serde(default = "ten")]
    pub k_max: usize,
}

fn two() -> usize {
    2
}

fn ten() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteRankCase {
    /// Basis indices spanning the range of `P`.
    pub support: Vec<usize>,
    /// Entries `(row, col, re, im)` of `R`; the Hermitian part is used.
    pub entries: Vec<(usize, usize, f64, f64)>,
    /// Conjugation exponents; defaults to `+beta/4` and `-beta/4`.
    #[serde(default)]
    pub s: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteRankParams {
    pub cases: Vec<FiniteRankCase>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldAuditParams {
    #[serde(default)]
    pub levels: Option<Vec<usize>>,
    #[serde(default)]
    pub r: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceDistanceParams {
    pub truncation: TruncationModel,
    pub levels: Vec<usize>,
    /// Require the fitted log-slope to be at most `-factor * beta (eta - 2D|J|)`.
    #[serde(default)]
    pub slope_factor: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    #[default]
    Vacuum,
    Fock {
        index: usize,
    },
    MaximallyMixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingParams {
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub initial: InitialState,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    Exact,
    Superfluid { m_prime: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub shots: u64,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeEnergyParams {
    pub grid: usize,
    pub observable_cutoff: usize,
    pub source: SourceConfig,
    #[serde(default)]
    pub sampling: Option<SamplingConfig>,
    #[serde(default)]
    pub target: Option<TargetConfig>,
    /// Independent sampled runs with seeds `seed, seed + 1, ...`.
    #[serde(default = "one")]
    pub repeats: usize,
    /// Hard bound on `|estimate - exact|` for the deterministic estimator.
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Extra grid sizes for the error-vs-L series.
    #[serde(default)]
    pub convergence_grids: Vec<usize>,
    /// Minimum fraction of sampled runs inside the Hoeffding envelope.
    #[serde(default)]
    pub coverage: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "kebab-case")]
pub enum Scenario {
    FilterAudit(FilterAuditParams),
    GapVsPsi(PsiSweep),
    GapVsTruncation(TruncationSweep),
    #[serde(rename = "gap-vs-sigmaE")]
    GapVsSigmaE(SigmaSweep),
    LadderBlockCompare(LadderParams),
    FiniteRankAudit(FiniteRankParams),
    MeanfieldEigenAudit(MeanFieldAuditParams),
    GibbsTraceDistance(TraceDistanceParams),
    MixingTime(MixingParams),
    FreeEnergy(FreeEnergyParams),
    AubryAndreSpectrum,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::FilterAudit(_) => "filter-audit",
            Scenario::GapVsPsi(_) => "gap-vs-psi",
            Scenario::GapVsTruncation(_) => "gap-vs-truncation",
            Scenario::GapVsSigmaE(_) => "gap-vs-sigmaE",
            Scenario::LadderBlockCompare(_) => "ladder-block-compare",
            Scenario::FiniteRankAudit(_) => "finite-rank-audit",
            Scenario::MeanfieldEigenAudit(_) => "meanfield-eigen-audit",
            Scenario::GibbsTraceDistance(_) => "gibbs-trace-distance",
            Scenario::MixingTime(_) => "mixing-time",
            Scenario::FreeEnergy(_) => "free-energy",
            Scenario::AubryAndreSpectrum => "aubry-andre-spectrum",
        }
    }

    pub const ALL: [&'static str; 11] = [
        "filter-audit",
        "gap-vs-psi",
        "gap-vs-truncation",
        "gap-vs-sigmaE",
        "ladder-block-compare",
        "finite-rank-audit",
        "meanfield-eigen-audit",
        "gibbs-trace-distance",
        "mixing-time",
        "free-energy",
        "aubry-andre-spectrum",
    ];
}

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| cfg(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn model(&self) -> Result<&ModelConfig> {
        self.model
            .as_ref()
            .ok_or_else(|| cfg(format!("scenario {} needs a model block", self.scenario.name())))
    }

    fn basis(&self) -> Result<&BasisConfig> {
        self.basis
            .as_ref()
            .ok_or_else(|| cfg(format!("scenario {} needs a basis block", self.scenario.name())))
    }

    fn require_family(&self, allowed: &[&str]) -> Result<&ModelConfig> {
        let m = self.model()?;
        if !allowed.contains(&m.family()) {
            return Err(cfg(format!(
                "scenario {} accepts model families {:?}, got {}",
                self.scenario.name(),
                allowed,
                m.family()
            )));
        }
        Ok(m)
    }

    /// Structural checks that do not build any operator.
    pub fn validate(&self) -> Result<()> {
        let beta = self.filter.beta();
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(cfg(format!("filter beta must be positive and finite, got {beta}")));
        }
        if let FilterConfig::GaussianKms { width: Some(w), .. } = self.filter {
            if !(w > 0.0 && w.is_finite()) {
                return Err(cfg(format!("filter width must be positive, got {w}")));
            }
        }
        if let Some(m) = &self.model {
            if m.n_modes() == 0 {
                return Err(cfg("model has no modes"));
            }
            if let Some((l, p)) = m.lattice_params() {
                if l.dim == 0 || l.side == 0 {
                    return Err(cfg("lattice dim and side must be positive"));
                }
                if !(p.u > 0.0) {
                    return Err(cfg(format!("U must be positive, got {}", p.u)));
                }
            }
            if let Some(mf) = m.mean_field() {
                if !(mf.u > 0.0) {
                    return Err(cfg(format!("U must be positive, got {}", mf.u)));
                }
            }
            if let Some(aa) = m.aubry_andre() {
                aa.validate().map_err(|e| cfg(e.to_string()))?;
            }
        }
        if self.generator.jumps == JumpSet::NormalModes {
            self.require_family(&["aubry_andre"])?;
        }
        let positive_list = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                return Err(cfg(format!("{name} must not be empty")));
            }
            Ok(())
        };
        match &self.scenario {
            Scenario::FilterAudit(p) => {
                if let Some(h) = p.half_width {
                    if !(h > 0.0) {
                        return Err(cfg("half_width must be positive"));
                    }
                }
                if let Some(n) = p.points {
                    if n < 2 {
                        return Err(cfg("the audit grid needs at least two points"));
                    }
                }
            }
            Scenario::GapVsPsi(p) => {
                self.require_family(&["mean_field"])?;
                self.basis()?;
                positive_list("psi", &p.psi)?;
            }
            Scenario::GapVsTruncation(p) => {
                self.require_family(&["bose_hubbard"])?;
                self.basis()?;
                if p.levels.is_empty() {
                    return Err(cfg("levels must not be empty"));
                }
            }
            Scenario::GapVsSigmaE(p) => {
                self.model()?;
                self.basis()?;
                if p.sigma_e.is_empty() {
                    return Err(cfg("sigma_e must not be empty"));
                }
            }
            Scenario::LadderBlockCompare(_) => {
                let m = self.require_family(&["number"])?;
                if m.n_modes() != 1 {
                    return Err(cfg("ladder-block-compare is single-mode"));
                }
                self.basis()?;
            }
            Scenario::FiniteRankAudit(p) => {
                self.model()?;
                self.basis()?;
                if p.cases.is_empty() {
                    return Err(cfg("cases must not be empty"));
                }
            }
            Scenario::MeanfieldEigenAudit(_) => {
                self.require_family(&["mean_field"])?;
                self.basis()?;
            }
            Scenario::GibbsTraceDistance(p) => {
                self.require_family(&["bose_hubbard"])?;
                self.basis()?;
                if p.levels.is_empty() {
                    return Err(cfg("levels must not be empty"));
                }
            }
            Scenario::MixingTime(p) => {
                self.model()?;
                self.basis()?;
                positive_list("epsilon", &p.epsilon)?;
                if p.epsilon.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
                    return Err(cfg("epsilon values must lie in (0, 1)"));
                }
            }
            Scenario::FreeEnergy(p) => {
                self.require_family(&["bose_hubbard"])?;
                self.basis()?;
                if p.grid == 0 || p.convergence_grids.contains(&0) {
                    return Err(cfg("grid sizes must be positive"));
                }
                if let Some(s) = p.sampling {
                    if s.seed.is_none() {
                        return Err(cfg("sampling is enabled but no seed is given"));
                    }
                    if s.shots == 0 {
                        return Err(cfg("shots must be positive"));
                    }
                }
                if p.repeats == 0 {
                    return Err(cfg("repeats must be positive"));
                }
                if let Some(t) = p.target {
                    if !(t.epsilon > 0.0 && t.delta > 0.0 && t.delta < 1.0) {
                        return Err(cfg("target needs epsilon > 0 and delta in (0, 1)"));
                    }
                }
                if let Some(c) = p.coverage {
                    if !(0.0..=1.0).contains(&c) {
                        return Err(cfg("coverage must lie in [0, 1]"));
                    }
                    if p.sampling.is_none() || p.target.is_none() {
                        return Err(cfg("coverage needs sampling and target"));
                    }
                }
            }
            Scenario::AubryAndreSpectrum => {
                self.require_family(&["aubry_andre"])?;
                self.basis()?;
            }
        }
        Ok(())
    }
}

/// JSON Schema of the configuration file.
pub const SCHEMA: &str = include_str!("schema.json");
