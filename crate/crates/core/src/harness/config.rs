//! Experiment configuration (TOML) and its resolved form.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::forward::{EnsemblePreset, ForwardContext, ForwardError, ForwardModel, InputEnsemble};
use crate::noise::NoiseModel;
use crate::spectral::{
    optimal_dimension, sample_kernel, DimensionChoice, EigenSystem, KernelFunction, KernelProfile, SobolevClass,
    SpectralDecay,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionRule {
    Oracle,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    #[serde(flatten)]
    pub preset: EnsemblePreset,
    pub modes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub m_values: Vec<usize>,
    pub repetitions: usize,
    pub dimension: DimensionRule,
    pub margin: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            m_values: (7..=13).map(|p| 1usize << p).collect(),
            repetitions: 20,
            dimension: DimensionRule::Oracle,
            margin: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub quad_nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: 2048, quad_nodes: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// `(n, M)` pairs.
    pub points: Vec<(usize, usize)>,
    pub trials: usize,
    pub kappa_trials: usize,
    /// Overrides the fourth-moment constant used in the bounds.
    pub kappa: Option<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { points: Vec::new(), trials: 500, kappa_trials: 100_000, kappa: None }
    }
}

fn default_seed() -> u64 {
    20_240_601
}

fn default_truncation() -> usize {
    512
}

fn default_noise() -> NoiseModel {
    NoiseModel::GaussianWhite { sigma: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub model: ForwardModel,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    pub ensemble: EnsembleConfig,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
    #[serde(default)]
    pub decay: Option<SpectralDecay>,
    pub class: SobolevClass,
    #[serde(default)]
    pub kernel: KernelProfile,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.experiment_id.is_empty() {
            return bad("experiment_id is empty".into());
        }
        if self.sweep.m_values.is_empty() || self.sweep.m_values[0] == 0 {
            return bad("M grid must be non-empty and positive".into());
        }
        if self.sweep.m_values.windows(2).any(|w| w[1] <= w[0]) {
            return bad("M grid must be strictly increasing".into());
        }
        if self.sweep.repetitions == 0 {
            return bad("repetitions must be >= 1".into());
        }
        if !(self.sweep.margin >= 0.0) {
            return bad("margin must be >= 0".into());
        }
        if self.truncation == 0 {
            return bad("truncation must be >= 1".into());
        }
        if let DimensionRule::Fixed(n) = self.sweep.dimension {
            if n == 0 || n > self.truncation {
                return bad(format!("fixed dimension {n} outside 1..={}", self.truncation));
            }
        } else if !(self.class.beta > 0.0) {
            return bad("oracle dimension needs beta > 0".into());
        }
        SobolevClass::new(self.class.beta, self.class.radius).map_err(|e| HarnessError::Config(e.to_string()))?;
        self.noise.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(d) = &self.decay {
            d.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        } else if self.model != ForwardModel::Integral || InputEnsemble::preset_decay(self.ensemble.preset).is_none() {
            return bad("no decay envelope given and none derivable from the ensemble preset".into());
        }
        if self.diagnostics.trials == 0 {
            return bad("diagnostics.trials must be >= 1".into());
        }
        Ok(())
    }
}

/// Configuration resolved into model objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub ctx: ForwardContext,
    pub eig: EigenSystem,
    pub decay: SpectralDecay,
    pub class: SobolevClass,
}

impl Experiment {
    pub fn build(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let ens = InputEnsemble::from_preset(config.ensemble.preset, config.ensemble.modes)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let ctx = ForwardContext::new(config.model, ens, config.grid.n).map_err(config_error)?;
        let eig = ctx.eigendecompose(config.truncation, config.grid.quad_nodes).map_err(config_error)?;
        let decay = match config.decay {
            Some(d) => d,
            None => InputEnsemble::preset_decay(config.ensemble.preset)
                .ok_or_else(|| HarnessError::Config("no decay envelope".into()))?,
        };
        let class = SobolevClass::new(config.class.beta, config.class.radius)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(Self { config: config.clone(), ctx, eig, decay, class })
    }

    pub fn noise(&self) -> NoiseModel {
        self.config.noise
    }

    pub fn true_kernel(&self) -> KernelFunction {
        sample_kernel(&self.class, &self.eig, self.config.kernel)
    }

    pub fn dimension(&self, m: usize) -> Result<DimensionChoice, HarnessError> {
        match self.config.sweep.dimension {
            DimensionRule::Fixed(n) => Ok(DimensionChoice { n, raw: n as f64, below_regime: false }),
            DimensionRule::Oracle => Ok(optimal_dimension(
                &self.decay,
                self.class.beta,
                self.class.radius,
                self.noise().second_moment().sqrt(),
                m,
                self.eig.len(),
            )?),
        }
    }
}

fn config_error(e: ForwardError) -> HarnessError {
    match e {
        ForwardError::Spectral(s) => HarnessError::Numeric(s.to_string()),
        other => HarnessError::Config(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
experiment_id = "poly"
model = "integral"
seed = 7
truncation = 16

[ensemble]
preset = "poly"
rate = 1.0
modes = 8

[noise]
kind = "gaussian"
sigma = 1.0

[class]
beta = 1.0
radius = 10.0

[kernel]
profile = "near_boundary"
delta = 0.05

[sweep]
m_values = [128, 256, 512, 1024]
repetitions = 3
dimension = { fixed = 4 }

[grid]
n = 64
quad_nodes = 64

[diagnostics]
points = [[1, 200], [2, 1000]]
trials = 100
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.sweep.dimension, DimensionRule::Fixed(4));
        assert_eq!(cfg.ensemble.preset, EnsemblePreset::Poly { rate: 1.0 });
        assert_eq!(cfg.diagnostics.points, vec![(1, 200), (2, 1000)]);
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn defaults_and_oracle_rule() {
        let text = SAMPLE.replace("dimension = { fixed = 4 }", "dimension = \"oracle\"");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.sweep.dimension, DimensionRule::Oracle);
        let exp = Experiment::build(&cfg).unwrap();
        assert_eq!(exp.decay, SpectralDecay::polynomial(1.0, 0.25, 1.0).unwrap());
        let a = exp.dimension(128).unwrap().n;
        let b = exp.dimension(8192).unwrap().n;
        assert!(a <= b);
    }

    #[test]
    fn rejects_bad_configs() {
        for (from, to) in [
            ("m_values = [128, 256, 512, 1024]", "m_values = [256, 128]"),
            ("repetitions = 3", "repetitions = 0"),
            ("preset = \"poly\"", "preset = \"missing\""),
            ("model = \"integral\"", "model = \"aggregation\""),
            ("dimension = { fixed = 4 }", "dimension = { fixed = 40 }"),
            ("n = 64", "n = 32"),
            ("seed = 7", "seed = 7\nbogus = 1"),
        ] {
            let text = SAMPLE.replace(from, to);
            let res = ExperimentConfig::from_toml(&text).and_then(|c| Experiment::build(&c).map(|_| ()));
            assert!(matches!(res, Err(HarnessError::Config(_))), "{to}: {res:?}");
        }
    }
}
