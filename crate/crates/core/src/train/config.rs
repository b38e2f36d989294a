//! Training configuration and the ablation-mode switch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{NceConfig, RobustConfig, RobustVariant};
use crate::models::{DiscriminatorConfig, GeneratorConfig, HeadConfig};

/// Which constraint rides alongside the backbone objective.
///
/// `None`, `E3`, and `E4` all use the perturbation round-trip loss (E3 drops
/// the projection heads, E4 anchors on the translated image); E1, E2, and E5
/// are standalone alternatives with their own coefficient; E6 regularizes the
/// discriminator instead of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    None,
    E1,
    E2,
    E3,
    #[serde(alias = "eq4")]
    E4,
    E5,
    E6,
}

impl AblationMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "e1" => Ok(Self::E1),
            "e2" => Ok(Self::E2),
            "e3" => Ok(Self::E3),
            "e4" | "eq4" => Ok(Self::E4),
            "e5" => Ok(Self::E5),
            "e6" => Ok(Self::E6),
            other => Err(Error::Config(format!(
                "unknown ablation mode {other}; expected none, e1..e6, or eq4"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::E1 => "e1",
            Self::E2 => "e2",
            Self::E3 => "e3",
            Self::E4 => "e4",
            Self::E5 => "e5",
            Self::E6 => "e6",
        }
    }

    /// Name of the constraint's slot in loss reports.
    pub fn report_slot(&self) -> &'static str {
        match self {
            Self::None | Self::E3 | Self::E4 => "robust",
            Self::E1 => "e1",
            Self::E2 => "e2",
            Self::E5 => "e5",
            Self::E6 => "e6",
        }
    }

    /// True for modes whose term keeps the robustness coefficient rather
    /// than the ablation coefficient.
    pub fn uses_robust_coefficient(&self) -> bool {
        matches!(self, Self::None | Self::E3 | Self::E4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub total_epochs: usize,
    pub lr_initial: f64,
    /// Fraction of epochs before linear lr decay begins.
    pub decay_start_fraction: f64,
    /// Coefficient on the robustness term (and its E3/E4 variants).
    pub robust_coefficient: f64,
    /// Upper bound of the perturbation magnitude range.
    pub perturbation_bound: f64,
    /// Fraction of epochs before the constraint term activates.
    pub robust_gate_fraction: f64,
    /// Ramp the constraint in linearly after the gate instead of a hard on.
    pub robust_ramp: bool,
    pub robust_patches_per_scale: usize,
    /// Let the constraint's gradients also train the projection heads.
    pub robust_train_heads: bool,
    pub lambda_nce_source: f64,
    pub lambda_nce_identity: f64,
    pub nce_temperature: f64,
    pub nce_patches_per_scale: usize,
    pub batch_size: usize,
    pub crop_size: usize,
    pub seed: u64,
    pub ablation_mode: AblationMode,
    /// Coefficient for the standalone E1/E2/E5/E6 terms.
    pub ablation_coefficient: f64,
    /// E1: compare absolute rather than signed standardized distances.
    pub e1_absolute: bool,
    pub e2_patch_count: usize,
    pub e2_patch_size: usize,
    pub e2_bins: usize,
    /// E6: evaluate gradient norms at the batch samples instead of the
    /// batch-mean images.
    pub e6_at_samples: bool,
    pub pool_capacity: usize,
    /// Save a checkpoint every this many epochs (0 = final only).
    pub checkpoint_every: usize,
    /// Emit a sample translation grid every this many epochs (0 = never).
    pub sample_grid_every: usize,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub head: HeadConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_epochs: 400,
            lr_initial: 2e-4,
            decay_start_fraction: 0.5,
            robust_coefficient: 1e-4,
            perturbation_bound: 0.1,
            robust_gate_fraction: 0.25,
            robust_ramp: false,
            robust_patches_per_scale: 256,
            robust_train_heads: false,
            lambda_nce_source: 1.0,
            lambda_nce_identity: 1.0,
            nce_temperature: 0.07,
            nce_patches_per_scale: 256,
            batch_size: 1,
            crop_size: 256,
            seed: 0,
            ablation_mode: AblationMode::None,
            ablation_coefficient: 1e-4,
            e1_absolute: false,
            e2_patch_count: 256,
            e2_patch_size: 16,
            e2_bins: 16,
            e6_at_samples: false,
            pool_capacity: 50,
            checkpoint_every: 0,
            sample_grid_every: 0,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            head: HeadConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_initial.is_finite() && self.lr_initial > 0.0) {
            return Err(Error::Config(format!(
                "lr_initial must be positive, got {}",
                self.lr_initial
            )));
        }
        if !(self.decay_start_fraction > 0.0 && self.decay_start_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "decay_start_fraction must lie in (0, 1], got {}",
                self.decay_start_fraction
            )));
        }
        if !(self.robust_coefficient >= 0.0 && self.robust_coefficient.is_finite()) {
            return Err(Error::Config(format!(
                "robust_coefficient must be nonnegative, got {}",
                self.robust_coefficient
            )));
        }
        if !(self.perturbation_bound > 0.0 && self.perturbation_bound.is_finite()) {
            return Err(Error::Config(format!(
                "perturbation_bound must be positive, got {}",
                self.perturbation_bound
            )));
        }
        // Gate 0 (always on) is allowed; 1 would never activate the term.
        if !(self.robust_gate_fraction >= 0.0 && self.robust_gate_fraction < 1.0) {
            return Err(Error::Config(format!(
                "robust_gate_fraction must lie in [0, 1), got {}",
                self.robust_gate_fraction
            )));
        }
        if !(self.ablation_coefficient >= 0.0 && self.ablation_coefficient.is_finite()) {
            return Err(Error::Config(format!(
                "ablation_coefficient must be nonnegative, got {}",
                self.ablation_coefficient
            )));
        }
        if self.lambda_nce_source < 0.0 || self.lambda_nce_identity < 0.0 {
            return Err(Error::Config("NCE weights must be nonnegative".into()));
        }
        if self.nce_temperature <= 0.0 {
            return Err(Error::Config(format!(
                "nce_temperature must be positive, got {}",
                self.nce_temperature
            )));
        }
        if self.nce_patches_per_scale == 0 || self.robust_patches_per_scale == 0 {
            return Err(Error::Config("patch counts must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.crop_size == 0 {
            return Err(Error::Config("crop_size must be positive".into()));
        }
        if self.e2_patch_count == 0 || self.e2_patch_count % 2 != 0 {
            return Err(Error::Config(format!(
                "e2_patch_count must be positive and even, got {}",
                self.e2_patch_count
            )));
        }
        if self.e2_patch_size == 0 || self.e2_patch_size > self.crop_size {
            return Err(Error::Config(format!(
                "e2_patch_size {} must fit the crop size {}",
                self.e2_patch_size, self.crop_size
            )));
        }
        if self.e2_bins < 2 {
            return Err(Error::Config("e2_bins must be at least 2".into()));
        }
        Ok(())
    }

    pub fn nce(&self) -> NceConfig {
        NceConfig {
            temperature: self.nce_temperature,
            patches_per_scale: self.nce_patches_per_scale,
        }
    }

    pub fn robust(&self, variant: RobustVariant) -> RobustConfig {
        RobustConfig {
            t_bound: self.perturbation_bound,
            patches_per_scale: self.robust_patches_per_scale,
            variant,
            train_heads: self.robust_train_heads,
        }
    }
}
