//! Per-scale feature heads: two-layer MLPs over gathered patch vectors,
//! followed by L2 normalization onto the unit sphere.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::sampling::gather_coords;
use crate::error::{Error, Result};
use crate::nn::{l2_normalize, Linear, ParamList, Trainable};
use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            embed_dim: 256,
            hidden_dim: 256,
        }
    }
}

/// Maps gathered feature vectors at sampled coordinates into an embedding
/// space. `detach_params` feeds the weights in as constants, so the head
/// shapes the loss without receiving gradients itself.
pub trait PatchProjector {
    fn project(&self, fmap: &Tensor, indices: &[usize], detach_params: bool) -> Result<Tensor>;
}

pub struct FeatureHead {
    pub(crate) fc1: Linear,
    pub(crate) fc2: Linear,
    pub in_channels: usize,
}

impl FeatureHead {
    pub fn new(rng: &mut SeedStream, in_channels: usize, config: &HeadConfig) -> Result<Self> {
        if config.embed_dim == 0 || config.hidden_dim == 0 {
            return Err(Error::Argument("head dimensions must be positive".into()));
        }
        Ok(Self {
            fc1: Linear::new(rng, in_channels, config.hidden_dim)?,
            fc2: Linear::new(rng, config.hidden_dim, config.embed_dim)?,
            in_channels,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.fc2.out_features
    }

    /// (N,C,H,W) + coordinates -> unit-norm embeddings (N,P,D).
    pub fn embed_at(
        &self,
        fmap: &Tensor,
        indices: &[usize],
        detach_params: bool,
    ) -> Result<Tensor> {
        let vecs = gather_coords(fmap, indices)?;
        let (n, p, c) = vecs.dims3()?;
        if c != self.in_channels {
            return Err(Error::Shape {
                context: "feature head input channels".into(),
                expected: format!("{}", self.in_channels),
                got: format!("{c}"),
            });
        }
        let flat = vecs.reshape((n * p, c))?;
        let h = self.fc1.forward(&flat, detach_params)?.relu()?;
        let out = self.fc2.forward(&h, detach_params)?;
        let normed = l2_normalize(&out)?;
        Ok(normed.reshape((n, p, self.embed_dim()))?)
    }
}

impl PatchProjector for FeatureHead {
    fn project(&self, fmap: &Tensor, indices: &[usize], detach_params: bool) -> Result<Tensor> {
        self.embed_at(fmap, indices, detach_params)
    }
}

impl Trainable for FeatureHead {
    fn params(&self) -> ParamList {
        let mut p = ParamList::new();
        p.extend_prefixed("fc1", self.fc1.params());
        p.extend_prefixed("fc2", self.fc2.params());
        p
    }
}

/// Returns the raw gathered vectors unchanged. Stands in for a head when the
/// comparison should happen directly in a scale's feature space.
pub struct IdentityProjector;

impl PatchProjector for IdentityProjector {
    fn project(&self, fmap: &Tensor, indices: &[usize], _detach_params: bool) -> Result<Tensor> {
        gather_coords(fmap, indices)
    }
}

/// One head per tapped generator scale.
pub struct HeadSet {
    heads: Vec<FeatureHead>,
    pub config: HeadConfig,
}

impl HeadSet {
    pub fn new(rng: &mut SeedStream, scale_channels: &[usize], config: &HeadConfig) -> Result<Self> {
        let mut heads = Vec::with_capacity(scale_channels.len());
        for &c in scale_channels {
            heads.push(FeatureHead::new(rng, c, config)?);
        }
        Ok(Self {
            heads,
            config: config.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Head for scale k (1-based).
    pub fn head(&self, k: usize) -> Result<&FeatureHead> {
        self.heads
            .get(k - 1)
            .ok_or_else(|| Error::Index(format!("no head for scale {k}")))
    }
}

impl Trainable for HeadSet {
    fn params(&self) -> ParamList {
        let mut p = ParamList::new();
        for (i, head) in self.heads.iter().enumerate() {
            p.extend_prefixed(&format!("head{}", i + 1), head.params());
        }
        p
    }
}
