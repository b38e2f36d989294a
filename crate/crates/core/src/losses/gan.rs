//! Least-squares adversarial losses over patch score grids.

use candle_core::Tensor;

use crate::error::Result;
use crate::models::PatchDiscriminator;

/// Discriminator target: real scores pulled to 1, fake scores to 0.
/// Works on raw score grids of any shape.
pub fn lsgan_d_from_scores(real_scores: &Tensor, fake_scores: &Tensor) -> Result<Tensor> {
    let real_term = (real_scores - 1.0)?.sqr()?.mean_all()?;
    let fake_term = fake_scores.sqr()?.mean_all()?;
    Ok((real_term + fake_term)?)
}

/// Generator target: fake scores pulled to 1.
pub fn lsgan_g_from_scores(fake_scores: &Tensor) -> Result<Tensor> {
    Ok((fake_scores - 1.0)?.sqr()?.mean_all()?)
}

/// Discriminator update loss. The fake image is detached here so generator
/// parameters never receive gradients from this term.
pub fn gan_loss_d(d: &PatchDiscriminator, real: &Tensor, fake: &Tensor) -> Result<Tensor> {
    let real_scores = d.forward(real)?;
    let fake_scores = d.forward(&fake.detach())?;
    lsgan_d_from_scores(&real_scores, &fake_scores)
}

/// Generator update loss; gradients flow through `fake` into the generator.
pub fn gan_loss_g(d: &PatchDiscriminator, fake: &Tensor) -> Result<Tensor> {
    let fake_scores = d.forward(fake)?;
    lsgan_g_from_scores(&fake_scores)
}
