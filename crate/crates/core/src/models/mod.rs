//! Networks: sliced resnet generator, per-scale feature heads, patch discriminator.

pub mod discriminator;
pub mod generator;
pub mod heads;
pub mod sampling;

pub use discriminator::{DiscriminatorConfig, PatchDiscriminator, ScoreModel};
pub use generator::{GeneratorConfig, GeneratorSlices, Stage};
pub use heads::{FeatureHead, HeadConfig, HeadSet, IdentityProjector, PatchProjector};
pub use sampling::{gather_coords, sample_patch_indices, PatchEmbeddingSet};
