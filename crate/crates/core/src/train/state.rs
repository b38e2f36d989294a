//! Mutable training state: models, optimizers, pool, and RNG streams.

use serde::{Deserialize, Serialize};

use crate::data::ImagePool;
use crate::error::Result;
use crate::losses::HalfStats;
use crate::models::{GeneratorSlices, HeadSet, PatchDiscriminator};
use crate::nn::{ParamList, Trainable};
use crate::rng::SeedStream;
use crate::train::adam::{Adam, AdamHyper};
use crate::train::config::TrainConfig;

/// Population statistics of the half-image self-distance per domain,
/// computed once over the training sets (used only in E1 mode).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct E1Stats {
    pub source: HalfStats,
    pub target: HalfStats,
}

pub struct TrainState {
    pub config: TrainConfig,
    pub generator: GeneratorSlices,
    pub heads: HeadSet,
    pub discriminator: PatchDiscriminator,
    pub opt_g: Adam,
    pub opt_d: Adam,
    pub pool: ImagePool,
    pub epoch: usize,
    pub iteration: u64,
    /// Perturbations and patch coordinate draws.
    pub rng_model: SeedStream,
    /// Shuffles, crops, and flips.
    pub rng_data: SeedStream,
    pub e1_stats: Option<E1Stats>,
}

impl std::fmt::Debug for TrainState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainState")
            .field("epoch", &self.epoch)
            .field("iteration", &self.iteration)
            .field("g_elements", &self.g_params().element_count())
            .field("d_elements", &self.d_params().element_count())
            .field("pool_len", &self.pool.len())
            .finish_non_exhaustive()
    }
}

impl TrainState {
    /// Fresh state: parameters initialized from derived seed streams, zeroed
    /// optimizer moments, empty pool.
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let master = SeedStream::new(config.seed);
        let mut rng_init = master.child("init");
        let generator = GeneratorSlices::new(&mut rng_init, &config.generator)?;
        let scale_channels: Vec<usize> = (1..=generator.num_scales())
            .map(|k| generator.scale_channel_count(k))
            .collect::<Result<_>>()?;
        let heads = HeadSet::new(&mut rng_init, &scale_channels, &config.head)?;
        let discriminator = PatchDiscriminator::new(&mut rng_init, &config.discriminator)?;

        let g_params = Self::generator_side_params(&generator, &heads);
        let d_params = Self::discriminator_side_params(&discriminator);
        let opt_g = Adam::new(&g_params, AdamHyper::default())?;
        let opt_d = Adam::new(&d_params, AdamHyper::default())?;
        let pool = ImagePool::new(config.pool_capacity, master.child("pool"));

        Ok(Self {
            config: config.clone(),
            generator,
            heads,
            discriminator,
            opt_g,
            opt_d,
            pool,
            epoch: 0,
            iteration: 0,
            rng_model: master.child("model"),
            rng_data: master.child("data"),
            e1_stats: None,
        })
    }

    fn generator_side_params(generator: &GeneratorSlices, heads: &HeadSet) -> ParamList {
        let mut p = ParamList::new();
        p.extend_prefixed("generator", generator.params());
        p.extend_prefixed("heads", heads.params());
        p
    }

    fn discriminator_side_params(discriminator: &PatchDiscriminator) -> ParamList {
        let mut p = ParamList::new();
        p.extend_prefixed("discriminator", discriminator.params());
        p
    }

    /// Generator plus head parameters, as updated by the G step.
    pub fn g_params(&self) -> ParamList {
        Self::generator_side_params(&self.generator, &self.heads)
    }

    pub fn d_params(&self) -> ParamList {
        Self::discriminator_side_params(&self.discriminator)
    }

    /// Scales used by both the contrastive and the robustness losses.
    pub fn all_scales(&self) -> Vec<usize> {
        (1..=self.generator.num_scales()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GeneratorConfig;

    fn toy_config() -> TrainConfig {
        TrainConfig {
            crop_size: 16,
            generator: GeneratorConfig {
                base_width: 4,
                residual_blocks: 2,
                ..GeneratorConfig::default()
            },
            discriminator: crate::models::DiscriminatorConfig {
                base_width: 4,
                n_layers: 2,
                ..crate::models::DiscriminatorConfig::default()
            },
            head: crate::models::HeadConfig {
                embed_dim: 8,
                hidden_dim: 8,
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn fresh_state_is_consistent() {
        let state = TrainState::new(&toy_config()).unwrap();
        assert_eq!(state.heads.len(), state.generator.num_scales());
        assert_eq!(state.opt_g.len(), state.g_params().len());
        assert_eq!(state.opt_d.len(), state.d_params().len());
        assert_eq!(state.epoch, 0);
        assert!(state.pool.is_empty());
        assert_eq!(state.all_scales(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = TrainState::new(&toy_config()).unwrap();
        let b = TrainState::new(&toy_config()).unwrap();
        assert_eq!(a.g_params().fingerprint(), b.g_params().fingerprint());
        assert_eq!(a.d_params().fingerprint(), b.d_params().fingerprint());
        let mut other = toy_config();
        other.seed = 99;
        let c = TrainState::new(&other).unwrap();
        assert_ne!(a.g_params().fingerprint(), c.g_params().fingerprint());
    }
}
