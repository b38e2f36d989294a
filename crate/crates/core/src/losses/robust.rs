//! Multi-scale semantic robustness loss.
//!
//! For a scale k, the input is encoded to its scale-k feature map, nudged by
//! a random perturbation, pushed through the remaining slices to produce an
//! alternative translation, and re-encoded back to scale k. The loss compares
//! projected features of the clean and the round-tripped map at sampled
//! coordinates, normalizing each coordinate's distance by the magnitude of
//! the perturbation that caused it.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::perturb::sample_perturbation;
use crate::error::{Error, Result};
use crate::models::{sample_patch_indices, GeneratorSlices, HeadSet, PatchProjector};
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustVariant {
    /// Anchor features come from the clean scale-k map of the input.
    PerturbFirst,
    /// Anchor features come from re-encoding the unperturbed translation.
    TranslateFirst,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustConfig {
    /// Upper edge of the perturbation magnitude range.
    pub t_bound: f64,
    /// Coordinates compared per scale (capped at the grid size).
    pub patches_per_scale: usize,
    pub variant: RobustVariant,
    /// When false the projector weights enter as constants, so the heads are
    /// shaped only by the contrastive loss.
    pub train_heads: bool,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            t_bound: 0.1,
            patches_per_scale: 256,
            variant: RobustVariant::PerturbFirst,
            train_heads: false,
        }
    }
}

/// Robustness loss at a single scale k (1-based). `translated` supplies a
/// precomputed translation for the translate-first variant; when absent it is
/// computed on the fly.
pub fn robustness_scale_loss(
    g: &GeneratorSlices,
    projector: &dyn PatchProjector,
    x: &Tensor,
    k: usize,
    config: &RobustConfig,
    rng: &mut SeedStream,
    translated: Option<&Tensor>,
) -> Result<Tensor> {
    let k_total = g.num_scales();
    if k == 0 || k > k_total {
        return Err(Error::Index(format!(
            "scale {k} out of range 1..={k_total}"
        )));
    }
    if config.patches_per_scale == 0 {
        return Err(Error::Argument("patches_per_scale must be positive".into()));
    }

    let clean = g.encode_to_scale(k, x)?;
    let dims = clean.dims4()?;
    let tau = sample_perturbation(rng, dims, config.t_bound)?;
    let perturbed = (&clean + &tau.tensor)?;
    let alt_translation = g.slice_forward(k, k_total + 1, &perturbed)?;
    let round_trip = g.encode_to_scale(k, &alt_translation)?;

    let anchor = match config.variant {
        RobustVariant::PerturbFirst => clean,
        RobustVariant::TranslateFirst => {
            let gx = match translated {
                Some(t) => t.clone(),
                None => g.forward(x)?,
            };
            g.encode_to_scale(k, &gx)?
        }
    };

    let (_, _, h, w) = dims;
    let count = config.patches_per_scale.min(h * w);
    let indices = sample_patch_indices(rng, h, w, count)?;
    let detach = !config.train_heads;
    let e_anchor = projector.project(&anchor, &indices, detach)?;
    let e_round = projector.project(&round_trip, &indices, detach)?;

    let last = e_anchor.rank() - 1;
    let dist = ((e_anchor - e_round)?.sqr()?.sum_keepdim(last)? + 1e-24)?
        .sqrt()?
        .squeeze(last)?; // (N, P)
    let norms = tau.norms_at(&indices)?; // (N, P)
    Ok(dist.div(&norms)?.mean_all()?)
}

/// Mean of the per-scale losses over the requested scales. Each scale draws
/// its own perturbation and its own coordinates.
pub fn robustness_loss(
    g: &GeneratorSlices,
    heads: &HeadSet,
    x: &Tensor,
    scales: &[usize],
    config: &RobustConfig,
    rng: &mut SeedStream,
    translated: Option<&Tensor>,
) -> Result<Tensor> {
    if scales.is_empty() {
        return Err(Error::Argument("at least one scale required".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for &k in scales {
        if !seen.insert(k) {
            return Err(Error::Argument(format!("duplicate scale {k}")));
        }
    }
    let mut total: Option<Tensor> = None;
    for &k in scales {
        let head = heads.head(k)?;
        let term = robustness_scale_loss(g, head, x, k, config, rng, translated)?;
        total = Some(match total {
            None => term,
            Some(t) => (t + term)?,
        });
    }
    Ok((total.expect("scales checked non-empty") / scales.len() as f64)?)
}
