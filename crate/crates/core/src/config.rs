//! Experiment configuration files.
//!
//! Configurations are TOML documents with a handful of top-level keys and one
//! table per model level. Every key has a default except `scenario`, and the
//! kinetic `epsilon`, which is required by the `kinetic` scenario:
//!
//! ```toml
//! scenario = "macro-weak"    # background-only | macro-strong | macro-weak | kinetic | particle | epsilon-sweep
//! preset = "paper-5.2"       # paper-5.1 | paper-5.2
//! output = "weak"            # relative to $TCS_OUTPUT_ROOT
//! reduction = "deterministic"
//!
//! [grid]
//! m = 256
//! t_end = 20.0
//! cfl = 0.4
//! output_dt = 0.1
//! snapshots = [5.0, 20.0]
//!
//! [macro]
//! weno = "z"
//! theta0 = 5.0               # or "background" for θ(0) = θ^∞(0)
//! ```
//!
//! See [`ExperimentConfig`] for the remaining tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TcsError};
use crate::fluid::{FluidState, CFL_MAX};
use crate::geometry::{AggregationPotential, GridFn1D, InfluenceFn};
use crate::kinetic::{
    compatibility_margin, singular_concentration_margin, KernelKind, Relaxation, ScalingRegime,
};
use crate::macro_limit::{WenoVariant, TRANSPORT_CFL};
use crate::presets;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    BackgroundOnly,
    MacroStrong,
    MacroWeak,
    Kinetic,
    Particle,
    EpsilonSweep,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::BackgroundOnly => "background-only",
            Scenario::MacroStrong => "macro-strong",
            Scenario::MacroWeak => "macro-weak",
            Scenario::Kinetic => "kinetic",
            Scenario::Particle => "particle",
            Scenario::EpsilonSweep => "epsilon-sweep",
        }
    }
}

/// Named initial data, defined in code so the formulas cannot drift.
///
/// Both presets use `ρ̄⁰ ≡ 1`, `ū⁰ = 0.5 + sin 2πx`, `ē⁰ = 2 + cos 2πx` for the
/// background and the normalized bump `exp(−50|x − 1/2|²)` for the limit
/// density. `paper-5.2` additionally fixes `θ(0) = 5` for the weak regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Preset {
    #[default]
    #[serde(rename = "paper-5.1")]
    Paper51,
    #[serde(rename = "paper-5.2")]
    Paper52,
}

impl Preset {
    pub fn background(self, m: usize) -> FluidState {
        FluidState::from_primitive(
            m,
            presets::background_rho0,
            presets::background_u0,
            presets::background_e0,
        )
    }

    pub fn limit_density(self, m: usize) -> GridFn1D {
        presets::limit_rho0_grid(m)
    }

    pub fn theta0(self) -> Option<f64> {
        match self {
            Preset::Paper51 => None,
            Preset::Paper52 => Some(5.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    #[default]
    LogBump,
    None,
    CuckerDong,
}

/// `deterministic` pins every run to one worker thread; `fast` lets force
/// sums and sweep members use the global pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionMode {
    #[default]
    Deterministic,
    Fast,
}

/// Initial internal variable of the weak limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaInit {
    Value(f64),
    Keyword(ThetaKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaKeyword {
    /// `θ(0) = θ^∞(0)`
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub m: usize,
    pub t_end: f64,
    pub cfl: f64,
    pub output_dt: f64,
    pub snapshots: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            m: 256,
            t_end: 20.0,
            cfl: TRANSPORT_CFL,
            output_dt: 0.1,
            snapshots: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundSection {
    /// Defaults to `grid.m`.
    pub m: Option<usize>,
    pub cfl: f64,
    /// Exponent of the background kernels `φ̄ = ζ̄`.
    pub lambda: f64,
}

impl Default for BackgroundSection {
    fn default() -> Self {
        BackgroundSection {
            m: None,
            cfl: CFL_MAX,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroSection {
    pub weno: WenoVariant,
    pub theta0: Option<ThetaInit>,
    pub max_dt: f64,
    pub potential: PotentialKind,
    pub lambda1: f64,
    /// Exponent of the Cucker–Dong potential when `potential = "cucker-dong"`.
    pub lambda3: Option<f64>,
}

impl Default for MacroSection {
    fn default() -> Self {
        MacroSection {
            weno: WenoVariant::Z,
            theta0: None,
            max_dt: 0.01,
            potential: PotentialKind::LogBump,
            lambda1: 1.0,
            lambda3: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KineticSection {
    pub relaxation: Relaxation,
    pub kernels: KernelKind,
    pub epsilon: Option<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: Option<f64>,
    pub n: usize,
    pub dt: f64,
    pub sigma_v: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub seed: u64,
    /// Couple the cloud to the background fluid.
    pub background: bool,
    /// Grid used for moment snapshots.
    pub moment_m: usize,
    /// Deposit bandwidth; defaults to `2/moment_m`.
    pub bandwidth: Option<f64>,
}

impl Default for KineticSection {
    fn default() -> Self {
        KineticSection {
            relaxation: Relaxation::Strong,
            kernels: KernelKind::Regular,
            epsilon: None,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: None,
            n: 2048,
            dt: 0.01,
            sigma_v: 0.01,
            theta_min: 1.6,
            theta_max: 1.9,
            seed: 1,
            background: true,
            moment_m: 128,
            bandwidth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticleSection {
    pub n1: usize,
    /// Agents of the second species, sampled from the background preset.
    pub n2: usize,
    pub dt: f64,
    pub kappa: f64,
    pub nu: f64,
    pub kappa_c: f64,
    pub nu_c: f64,
    pub lambda: f64,
    pub sigma_v: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub seed: u64,
    /// Record every `stride` steps.
    pub stride: usize,
}

impl Default for ParticleSection {
    fn default() -> Self {
        ParticleSection {
            n1: 32,
            n2: 0,
            dt: 1e-3,
            kappa: 1.0,
            nu: 1.0,
            kappa_c: 0.0,
            nu_c: 0.0,
            lambda: 1.0,
            sigma_v: 0.5,
            theta_min: 1.0,
            theta_max: 2.0,
            seed: 1,
            stride: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
    pub snapshots: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            epsilons: vec![0.2, 0.1, 0.05],
            snapshots: vec![0.5, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub preset: Preset,
    #[serde(default = "default_output")]
    pub output: String,
    #[serde(default)]
    pub reduction: ReductionMode,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub background: BackgroundSection,
    #[serde(default, rename = "macro")]
    pub macro_: MacroSection,
    #[serde(default)]
    pub kinetic: KineticSection,
    #[serde(default)]
    pub particle: ParticleSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_output() -> String {
    "out".into()
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(TcsError::Config(format!("{name} must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    /// A config with every table at its default.
    pub fn with_scenario(scenario: Scenario) -> Self {
        ExperimentConfig {
            scenario,
            preset: Preset::default(),
            output: default_output(),
            reduction: ReductionMode::default(),
            grid: GridSection::default(),
            background: BackgroundSection::default(),
            macro_: MacroSection::default(),
            kinetic: KineticSection::default(),
            particle: ParticleSection::default(),
            sweep: SweepSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| TcsError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| TcsError::Parse(e.to_string()))
    }

    pub fn background_m(&self) -> usize {
        self.background.m.unwrap_or(self.grid.m)
    }

    pub fn background_kernel(&self) -> Result<InfluenceFn> {
        InfluenceFn::regular(self.background.lambda)
    }

    /// Limit-level alignment kernel.
    pub fn macro_phi(&self) -> Result<InfluenceFn> {
        InfluenceFn::regular(self.macro_.lambda1)
    }

    pub fn macro_potential(&self) -> Result<AggregationPotential> {
        match self.macro_.potential {
            PotentialKind::LogBump => Ok(AggregationPotential::PeriodicLogBump),
            PotentialKind::None => Ok(AggregationPotential::Zero),
            PotentialKind::CuckerDong => {
                let l3 = self
                    .macro_
                    .lambda3
                    .ok_or_else(|| TcsError::MissingKey("macro.lambda3".into()))?;
                AggregationPotential::cucker_dong(l3)
            }
        }
    }

    /// Kinetic scaling at a given `ε`.
    pub fn regime_at(&self, eps: f64) -> Result<ScalingRegime> {
        let k = &self.kinetic;
        ScalingRegime::new(k.relaxation, k.kernels, eps, k.lambda1, k.lambda2, k.lambda3)
    }

    /// Kinetic scaling with the configured `ε`.
    pub fn regime(&self) -> Result<ScalingRegime> {
        let eps = self
            .kinetic
            .epsilon
            .ok_or_else(|| TcsError::MissingKey("kinetic.epsilon".into()))?;
        self.regime_at(eps)
    }

    /// Epsilons visited by this config: the sweep list or the single kinetic value.
    pub fn epsilons(&self) -> Vec<f64> {
        match self.scenario {
            Scenario::EpsilonSweep => self.sweep.epsilons.clone(),
            _ => self.kinetic.epsilon.into_iter().collect(),
        }
    }

    /// `(min ē⁰, max ē⁰)` on the background grid.
    pub fn background_theta_range(&self) -> (f64, f64) {
        let e = self.preset.background(self.background_m()).internal();
        (e.min(), e.max())
    }

    /// Checks the config and returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = vec![];
        let g = &self.grid;
        if g.m < 8 {
            return Err(TcsError::Config(format!("grid.m must be at least 8, got {}", g.m)));
        }
        if self.background_m() < 8 {
            return Err(TcsError::Config("background.m must be at least 8".into()));
        }
        positive("grid.t_end", g.t_end)?;
        positive("grid.output_dt", g.output_dt)?;
        if !(g.cfl > 0.0 && g.cfl <= TRANSPORT_CFL) {
            return Err(TcsError::Config(format!(
                "grid.cfl must lie in (0, {TRANSPORT_CFL}], got {}",
                g.cfl
            )));
        }
        if !(self.background.cfl > 0.0 && self.background.cfl <= CFL_MAX) {
            return Err(TcsError::Config(format!(
                "background.cfl must lie in (0, {CFL_MAX}], got {}",
                self.background.cfl
            )));
        }
        if let Some(&s) = g.snapshots.iter().find(|&&s| !(s >= 0.0 && s <= g.t_end)) {
            return Err(TcsError::Config(format!("snapshot time {s} outside [0, grid.t_end]")));
        }
        self.background_kernel()?;
        positive("macro.max_dt", self.macro_.max_dt)?;
        self.macro_phi()?;
        self.macro_potential()?;
        match self.scenario {
            Scenario::MacroWeak => {
                if self.macro_.theta0.is_none() && self.preset.theta0().is_none() {
                    return Err(TcsError::MissingKey("macro.theta0".into()));
                }
                if let Some(ThetaInit::Value(t)) = self.macro_.theta0 {
                    positive("macro.theta0", t)?;
                }
            }
            Scenario::Kinetic => {
                self.validate_kinetic(self.regime()?, &mut warnings)?;
            }
            Scenario::EpsilonSweep => {
                let eps = &self.sweep.epsilons;
                if eps.is_empty() {
                    return Err(TcsError::MissingKey("sweep.epsilons".into()));
                }
                if eps.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(TcsError::Config("sweep.epsilons must be strictly decreasing".into()));
                }
                for &e in eps {
                    self.validate_kinetic(self.regime_at(e)?, &mut warnings)?;
                }
                if let Some(&s) = self.sweep.snapshots.iter().find(|&&s| !(s >= 0.0 && s <= g.t_end)) {
                    return Err(TcsError::Config(format!("sweep snapshot {s} outside [0, grid.t_end]")));
                }
            }
            Scenario::Particle => {
                let p = &self.particle;
                if p.n1 == 0 {
                    return Err(TcsError::Config("particle.n1 must be at least 1".into()));
                }
                positive("particle.dt", p.dt)?;
                positive("particle.lambda", p.lambda)?;
                positive("particle.theta_min", p.theta_min)?;
                if p.theta_max < p.theta_min {
                    return Err(TcsError::Config("particle.theta_max below particle.theta_min".into()));
                }
            }
            Scenario::BackgroundOnly | Scenario::MacroStrong => {}
        }
        Ok(warnings)
    }

    fn validate_kinetic(&self, regime: ScalingRegime, warnings: &mut Vec<String>) -> Result<()> {
        let k = &self.kinetic;
        if k.n == 0 {
            return Err(TcsError::Config("kinetic.n must be at least 1".into()));
        }
        positive("kinetic.dt", k.dt)?;
        positive("kinetic.theta_min", k.theta_min)?;
        if k.sigma_v < 0.0 {
            return Err(TcsError::Config("kinetic.sigma_v must be nonnegative".into()));
        }
        if k.theta_max < k.theta_min {
            return Err(TcsError::Config("kinetic.theta_max below kinetic.theta_min".into()));
        }
        if let Some(b) = k.bandwidth {
            positive("kinetic.bandwidth", b)?;
        }
        let th0 = (k.theta_min, k.theta_max);
        let bg = if k.background {
            self.background_theta_range()
        } else {
            th0
        };
        let margin = compatibility_margin(th0, bg);
        if margin <= 0.0 {
            warnings.push(format!(
                "compatibility condition theta_M0 - theta_m0 < min(theta_m0, theta_m_bg)^2 / max(theta_M0, theta_M_bg) fails by {:.3e}",
                -margin
            ));
        }
        if regime.kernels == KernelKind::Singular {
            let s = singular_concentration_margin(th0, bg, regime.eps);
            if s <= 0.0 {
                return Err(TcsError::Config(format!(
                    "singular kernels need strong initial concentration D_theta(0)/epsilon < theta_m^2/theta_M; fails by {:.3e} at epsilon = {}",
                    -s, regime.eps
                )));
            }
        }
        Ok(())
    }
}

/// Reads, parses and validates a config file; returns it with its warnings.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| TcsError::io(path, e))?;
    let cfg = ExperimentConfig::parse(&text)?;
    let warnings = cfg.validate()?;
    Ok((cfg, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_background_sample() {
        let cfg = ExperimentConfig::parse("scenario = \"background-only\"\npreset = \"paper-5.1\"\n[grid]\nm = 256\n").unwrap();
        assert!(cfg.validate().unwrap().is_empty());
        let e = cfg.preset.background(cfg.background_m()).internal();
        assert_eq!(e.values[0], 3.0);
        assert_eq!(cfg.preset.theta0(), None);
        assert_eq!(Preset::Paper52.theta0(), Some(5.0));
    }

    #[test]
    fn kinetic_needs_epsilon() {
        let cfg = ExperimentConfig::parse("scenario = \"kinetic\"\n").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn singular_lambda_above_one_is_rejected() {
        let cfg = ExperimentConfig::parse(
            "scenario = \"kinetic\"\n[kinetic]\nkernels = \"singular\"\nepsilon = 0.1\nlambda1 = 1.5\n",
        )
        .unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("lambda1"), "{err}");
    }

    #[test]
    fn singular_concentration_is_a_hard_check() {
        // D_θ(0)/ε = 3 is far above θ_m²/θ_M = 1/3
        let cfg = ExperimentConfig::parse(
            "scenario = \"kinetic\"\n[kinetic]\nkernels = \"singular\"\nepsilon = 0.1\ntheta_min = 1.6\ntheta_max = 1.9\n",
        )
        .unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("concentration"), "{err}");
        let ok = ExperimentConfig::parse(
            "scenario = \"kinetic\"\n[kinetic]\nkernels = \"singular\"\nepsilon = 0.1\ntheta_min = 1.7\ntheta_max = 1.71\n",
        )
        .unwrap();
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn incompatible_spread_is_only_a_warning() {
        let cfg = ExperimentConfig::parse(
            "scenario = \"kinetic\"\n[kinetic]\nepsilon = 0.1\ntheta_min = 1.0\ntheta_max = 3.0\n",
        )
        .unwrap();
        let w = cfg.validate().unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("compatibility"));
    }

    #[test]
    fn parse_errors_name_the_location() {
        let err = ExperimentConfig::parse("scenario = \"kinetic\"\n[grid]\nm = \"many\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") || msg.contains("m"), "{msg}");
        let err = ExperimentConfig::parse("scenario = \"kinetic\"\n[grid]\nmm = 3\n").unwrap_err();
        assert!(err.to_string().contains("mm"));
    }

    #[test]
    fn weak_theta_sources() {
        let cfg = ExperimentConfig::parse("scenario = \"macro-weak\"\n").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("theta0"));
        let cfg = ExperimentConfig::parse("scenario = \"macro-weak\"\n[macro]\ntheta0 = \"background\"\n").unwrap();
        assert_eq!(cfg.macro_.theta0, Some(ThetaInit::Keyword(ThetaKeyword::Background)));
        cfg.validate().unwrap();
        let cfg = ExperimentConfig::parse("scenario = \"macro-weak\"\npreset = \"paper-5.2\"\n").unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trip_through_toml() {
        let mut cfg = ExperimentConfig::with_scenario(Scenario::EpsilonSweep);
        cfg.macro_.theta0 = Some(ThetaInit::Value(5.0));
        let back = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn sweep_list_must_decrease() {
        let cfg = ExperimentConfig::parse("scenario = \"epsilon-sweep\"\n[sweep]\nepsilons = [0.05, 0.1]\n").unwrap();
        assert!(cfg.validate().is_err());
    }
}
