//! Patch-wise contrastive loss.
//!
//! Each query embedding is pulled toward its positive (the embedding of the
//! same coordinate on the other image) and pushed from negatives (embeddings
//! of different coordinates). A negative sharing the query's coordinate is
//! excluded, so passing the query set itself as negatives yields the usual
//! internal-negatives setup with P-1 negatives per query.

use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::models::PatchEmbeddingSet;
use crate::nn::scalar;

#[derive(Debug, Clone)]
pub struct NceConfig {
    pub temperature: f64,
    /// Coordinates sampled per scale when building embedding sets.
    pub patches_per_scale: usize,
}

impl Default for NceConfig {
    fn default() -> Self {
        Self {
            temperature: 0.07,
            patches_per_scale: 256,
        }
    }
}

const MASKED_LOGIT: f64 = -1e30;
const UNIT_NORM_TOL: f64 = 1e-3;

fn check_unit_norm(set: &PatchEmbeddingSet, role: &str) -> Result<()> {
    let norms = set
        .embeddings
        .sqr()?
        .sum_keepdim(2)?
        .sqrt()?
        .flatten_all()?
        .to_vec1::<f64>()?;
    for n in norms {
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Invariant(format!(
                "{role} embedding norm {n} deviates from 1 by more than {UNIT_NORM_TOL}"
            )));
        }
    }
    Ok(())
}

/// Cross-entropy of picking the positive among positive plus negatives,
/// averaged over queries and batch. Logits are scaled by 1/temperature and
/// reduced with a max-shifted log-sum-exp so tiny temperatures stay finite.
pub fn patch_nce_loss(
    queries: &PatchEmbeddingSet,
    positives: &PatchEmbeddingSet,
    negatives: &PatchEmbeddingSet,
    config: &NceConfig,
) -> Result<Tensor> {
    if config.temperature <= 0.0 {
        return Err(Error::Argument(format!(
            "temperature must be positive, got {}",
            config.temperature
        )));
    }
    if queries.indices != positives.indices {
        return Err(Error::Argument(
            "queries and positives must cover the same coordinates in the same order".into(),
        ));
    }
    let (nq, p, d) = queries.embeddings.dims3()?;
    let (np_, pp, dp) = positives.embeddings.dims3()?;
    let (nn_, m, dn) = negatives.embeddings.dims3()?;
    if np_ != nq || nn_ != nq || pp != p || dp != d || dn != d {
        return Err(Error::Shape {
            context: "patch nce embedding sets".into(),
            expected: format!("batch {nq}, dim {d}, {p} aligned positives"),
            got: format!("positives ({np_},{pp},{dp}), negatives ({nn_},{m},{dn})"),
        });
    }
    check_unit_norm(queries, "query")?;
    check_unit_norm(positives, "positive")?;
    check_unit_norm(negatives, "negative")?;

    // Mask negatives that sit on a query's own coordinate.
    let mut mask = vec![1.0f64; p * m];
    for (qi, &qidx) in queries.indices.iter().enumerate() {
        let mut remaining = m;
        for (ni, &nidx) in negatives.indices.iter().enumerate() {
            if nidx == qidx {
                mask[qi * m + ni] = 0.0;
                remaining -= 1;
            }
        }
        if remaining == 0 {
            return Err(Error::Argument(format!(
                "query at coordinate {qidx} has no usable negatives"
            )));
        }
    }
    let mask = Tensor::from_vec(mask, (p, m), queries.embeddings.device())?;
    let anti_mask = ((&mask * -1.0)? + 1.0)?;
    let inv_t = 1.0 / config.temperature;

    let mut total = None;
    for b in 0..nq {
        let q = queries.embeddings.get(b)?; // (P, D)
        let pos = positives.embeddings.get(b)?;
        let neg = negatives.embeddings.get(b)?; // (M, D)
        let pos_logit = (q.mul(&pos)?.sum_keepdim(1)? * inv_t)?; // (P, 1)
        let neg_logits = (q.matmul(&neg.t()?)? * inv_t)?; // (P, M)
        let neg_logits = (neg_logits.mul(&mask)? + (&anti_mask * MASKED_LOGIT)?)?;
        let all = Tensor::cat(&[&pos_logit, &neg_logits], 1)?; // (P, 1+M)
        let shift = all.max_keepdim(1)?.detach();
        let lse = all
            .broadcast_sub(&shift)?
            .exp()?
            .sum_keepdim(1)?
            .log()?
            .add(&shift)?;
        let row_losses = (lse - pos_logit)?;
        let batch_loss = row_losses.mean_all()?;
        total = Some(match total {
            None => batch_loss,
            Some(t) => (t + batch_loss)?,
        });
    }
    let total = total.expect("batch dimension is positive");
    let loss = (total / nq as f64)?;
    let value = scalar(&loss)?;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            term: "patch_nce_loss".into(),
            value,
        });
    }
    Ok(loss)
}
