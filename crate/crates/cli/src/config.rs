//! TOML run configuration. Every section is optional; missing keys take the
//! library defaults and unknown keys are rejected.

use std::path::Path;

use collab_retarget::diffopt::OptimConfig;
use collab_retarget::discriminator::{NoiseSpec, TrainConfig, EPOCHS, HIDDEN, LEARNING_RATE};
use collab_retarget::geometry::{DEFAULT_PADDING_FRACTION, DEFAULT_RESOLUTION};
use collab_retarget::humanoid::HumanoidConfig;
use collab_retarget::morph::DEFAULT_INTERMEDIATES;
use collab_retarget::retarget::{human_optim, object_optim, LossWeights};
use collab_retarget::selection::{BeamConfig, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub sdf: SdfSection,
    pub morph: MorphSection,
    pub weights: LossWeights,
    pub optim: OptimSection,
    pub beam: BeamSection,
    pub noise: NoiseSpec,
    pub discriminator: DiscriminatorSection,
    pub humanoid: HumanoidSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdfSection {
    pub resolution: usize,
    /// Padding around the mesh bounds as a fraction of their diagonal.
    pub padding: f64,
}

impl Default for SdfSection {
    fn default() -> Self {
        SdfSection { resolution: DEFAULT_RESOLUTION, padding: DEFAULT_PADDING_FRACTION }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MorphSection {
    pub intermediates: usize,
    pub resolution: usize,
}

impl Default for MorphSection {
    fn default() -> Self {
        MorphSection { intermediates: DEFAULT_INTERMEDIATES, resolution: DEFAULT_RESOLUTION }
    }
}

/// Partial optimizer settings laid over a stage's defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimOverride {
    pub learning_rate: Option<f64>,
    pub iterations: Option<usize>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub final_lr_scale: Option<f64>,
}

impl OptimOverride {
    pub fn apply(&self, base: OptimConfig) -> OptimConfig {
        OptimConfig {
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            iterations: self.iterations.unwrap_or(base.iterations),
            beta1: self.beta1.unwrap_or(base.beta1),
            beta2: self.beta2.unwrap_or(base.beta2),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            final_lr_scale: self.final_lr_scale.unwrap_or(base.final_lr_scale),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimSection {
    pub object: OptimOverride,
    pub human: OptimOverride,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamSection {
    pub width: usize,
    pub iterations: usize,
    pub initial_sample: usize,
}

impl Default for BeamSection {
    fn default() -> Self {
        let b = BeamConfig::default();
        BeamSection { width: b.width, iterations: b.iterations, initial_sample: b.initial_sample }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    /// Noised copies generated per source sequence by `disc gen-pairs`.
    pub negatives_per_sequence: usize,
}

impl Default for DiscriminatorSection {
    fn default() -> Self {
        DiscriminatorSection {
            learning_rate: LEARNING_RATE,
            epochs: EPOCHS,
            batch_size: TrainConfig::default().batch_size,
            hidden: HIDDEN.to_vec(),
            negatives_per_sequence: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HumanoidSection {
    pub optim: OptimOverride,
    pub smooth_weight: f64,
}

impl Default for HumanoidSection {
    fn default() -> Self {
        HumanoidSection { optim: OptimOverride::default(), smooth_weight: HumanoidConfig::default().smooth_weight }
    }
}

fn config_error(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config { path: path.into(), message: message.into() }
}

impl RunConfig {
    /// Parses TOML text; errors name the offending key path.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| config_error("", e.to_string()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(if path == "." { "" } else { &path }, e.inner().message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |path: &str, v: usize| if v == 0 { Err(config_error(path, "must be positive")) } else { Ok(()) };
        let positive_f = |path: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_error(path, "must be a positive finite number"))
            }
        };
        if self.sdf.resolution < 8 {
            return Err(config_error("sdf.resolution", "must be at least 8"));
        }
        if !(self.sdf.padding >= 0.0 && self.sdf.padding.is_finite()) {
            return Err(config_error("sdf.padding", "must be a non-negative finite number"));
        }
        if self.morph.resolution < 8 {
            return Err(config_error("morph.resolution", "must be at least 8"));
        }
        positive("beam.width", self.beam.width)?;
        positive("beam.iterations", self.beam.iterations)?;
        positive("beam.initial_sample", self.beam.initial_sample)?;
        for (name, o) in [("optim.object", &self.optim.object), ("optim.human", &self.optim.human), ("humanoid.optim", &self.humanoid.optim)] {
            if let Some(lr) = o.learning_rate {
                positive_f(&format!("{name}.learning_rate"), lr)?;
            }
            if let Some(n) = o.iterations {
                positive(&format!("{name}.iterations"), n)?;
            }
            if let Some(s) = o.final_lr_scale {
                positive_f(&format!("{name}.final_lr_scale"), s)?;
            }
        }
        self.noise.validate().map_err(|e| config_error("noise", e.to_string()))?;
        positive_f("discriminator.learning_rate", self.discriminator.learning_rate)?;
        positive("discriminator.epochs", self.discriminator.epochs)?;
        positive("discriminator.batch_size", self.discriminator.batch_size)?;
        positive("discriminator.negatives_per_sequence", self.discriminator.negatives_per_sequence)?;
        if self.discriminator.hidden.contains(&0) {
            return Err(config_error("discriminator.hidden", "layer widths must be positive"));
        }
        if !(self.humanoid.smooth_weight >= 0.0 && self.humanoid.smooth_weight.is_finite()) {
            return Err(config_error("humanoid.smooth_weight", "must be a non-negative finite number"));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            morph_intermediates: self.morph.intermediates,
            morph_resolution: self.morph.resolution,
            weights: self.weights,
            object_optim: self.optim.object.apply(object_optim()),
            human_optim: self.optim.human.apply(human_optim()),
            beam: BeamConfig {
                width: self.beam.width,
                iterations: self.beam.iterations,
                initial_sample: self.beam.initial_sample,
                seed: self.seed,
            },
        }
    }

    pub fn train(&self) -> TrainConfig {
        let d = &self.discriminator;
        TrainConfig {
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            hidden: d.hidden.clone(),
            seed: self.seed,
        }
    }

    pub fn humanoid(&self) -> HumanoidConfig {
        let base = HumanoidConfig::default();
        HumanoidConfig { optim: self.humanoid.optim.apply(base.optim), smooth_weight: self.humanoid.smooth_weight }
    }
}
