//! One optimization step: discriminator update, then generator update.

use std::collections::BTreeMap;

use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::losses::{
    batch_mean_image, cut_patches, feature_consistency_loss_e5, gan_loss_d, gan_loss_g,
    lipschitz_penalty_e6, patch_nce_loss, robustness_loss, robustness_scale_loss,
    sample_patch_pairs, self_distance_loss_e1, smoothness_loss_e2, NceConfig, RobustVariant,
};
use crate::models::{
    sample_patch_indices, GeneratorSlices, HeadSet, IdentityProjector, PatchEmbeddingSet,
    PatchProjector,
};
use crate::nn::scalar;
use crate::rng::SeedStream;
use crate::train::config::{AblationMode, TrainConfig};
use crate::train::schedule::{lr_at, robust_factor};
use crate::train::state::TrainState;

/// Per-step scalars. `terms` always carries every enabled loss term,
/// including the constraint slot at 0 while the gate is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub epoch: usize,
    pub iteration: u64,
    pub lr: f64,
    pub robust_active: bool,
    pub terms: BTreeMap<String, f64>,
}

fn finite(term: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            term: term.to_string(),
            value,
        })
    }
}

/// Contrastive loss averaged over scales: queries from the input's features,
/// positives from the translation re-encoded at the same coordinates,
/// negatives internal to the query set.
fn nce_across_scales(
    generator: &GeneratorSlices,
    heads: &HeadSet,
    nce: &NceConfig,
    input_scales: &[Tensor],
    translated: &Tensor,
    rng: &mut SeedStream,
) -> Result<Tensor> {
    let translated_scales = generator.encode_scales(translated)?;
    let mut total: Option<Tensor> = None;
    for k in 1..=input_scales.len() {
        let fmap_q = &input_scales[k - 1];
        let (_, _, h, w) = fmap_q.dims4()?;
        let count = nce.patches_per_scale.min(h * w);
        let indices = sample_patch_indices(rng, h, w, count)?;
        let head = heads.head(k)?;
        let q = PatchEmbeddingSet::new(k, indices.clone(), head.project(fmap_q, &indices, false)?)?;
        let p = PatchEmbeddingSet::new(
            k,
            indices.clone(),
            head.project(&translated_scales[k - 1], &indices, false)?,
        )?;
        let term = patch_nce_loss(&q, &p, &q, nce)?;
        total = Some(match total {
            None => term,
            Some(t) => (t + term)?,
        });
    }
    Ok((total.expect("generator has at least one scale") / input_scales.len() as f64)?)
}

/// E2 term for one batch: histogram distances among source patches compared
/// with distances among translated patches at the same corners.
fn e2_term(
    config: &TrainConfig,
    x: &Tensor,
    gx: &Tensor,
    rng: &mut SeedStream,
) -> Result<Tensor> {
    let (n, _, h, w) = x.dims4()?;
    let mut total: Option<Tensor> = None;
    for i in 0..n {
        let xi = x.narrow(0, i, 1)?;
        let gi = gx.narrow(0, i, 1)?;
        let corners = sample_patch_pairs(rng, h, w, config.e2_patch_size, config.e2_patch_count)?;
        let (c1, c2) = corners.split_at(corners.len() / 2);
        let x1 = cut_patches(&xi, c1, config.e2_patch_size)?;
        let x2 = cut_patches(&xi, c2, config.e2_patch_size)?;
        let g1 = cut_patches(&gi, c1, config.e2_patch_size)?;
        let g2 = cut_patches(&gi, c2, config.e2_patch_size)?;
        let term = smoothness_loss_e2(&x1, &x2, &g1, &g2, config.e2_bins)?;
        total = Some(match total {
            None => term,
            Some(t) => (t + term)?,
        });
    }
    Ok((total.expect("batch is non-empty") / n as f64)?)
}

/// Updates the discriminator on real targets vs pool-queried translations.
/// In E6 mode the gradient-norm penalty joins this update, scaled by the
/// gate factor. Returns the discriminator-side report terms.
pub fn discriminator_update(
    state: &mut TrainState,
    batch_y: &Tensor,
    fake_detached: &Tensor,
    lr: f64,
    factor: f64,
) -> Result<BTreeMap<String, f64>> {
    let config = &state.config;
    let mut terms = BTreeMap::new();

    let fake_for_d = state.pool.query(fake_detached)?;
    let d_adv_t = gan_loss_d(&state.discriminator, batch_y, &fake_for_d)?;
    terms.insert("d_adv".to_string(), finite("d_adv", scalar(&d_adv_t)?)?);

    let mut d_total_t = d_adv_t;
    if config.ablation_mode == AblationMode::E6 {
        let effective = config.ablation_coefficient * factor;
        let mut e6_value = 0.0;
        if effective > 0.0 {
            let (real_pt, fake_pt) = if config.e6_at_samples {
                (batch_y.clone(), fake_detached.clone())
            } else {
                (batch_mean_image(batch_y)?, batch_mean_image(fake_detached)?)
            };
            let pen = lipschitz_penalty_e6(&state.discriminator, &real_pt, &fake_pt)?;
            e6_value = finite("e6", scalar(&pen)?)?;
            d_total_t = (d_total_t + (pen * effective)?)?;
        }
        terms.insert("e6".to_string(), e6_value);
    }
    terms.insert("d_total".to_string(), finite("d_total", scalar(&d_total_t)?)?);

    let grads = d_total_t.backward()?;
    let params = state.d_params();
    state.opt_d.step(&params, &grads, lr)?;
    Ok(terms)
}

/// Updates the generator and heads on the adversarial, contrastive, and
/// constraint terms. Consumes the forward products of the current batch so
/// the translation is computed exactly once per step.
pub fn generator_update(
    state: &mut TrainState,
    batch_x: &Tensor,
    batch_y: &Tensor,
    scales_x: &[Tensor],
    fake_y: &Tensor,
    lr: f64,
    factor: f64,
) -> Result<BTreeMap<String, f64>> {
    let config = state.config.clone();
    let mode = config.ablation_mode;
    let mut terms = BTreeMap::new();

    let g_adv_t = gan_loss_g(&state.discriminator, fake_y)?;
    terms.insert("g_adv".to_string(), finite("g_adv", scalar(&g_adv_t)?)?);
    let mut g_total_t = g_adv_t;

    let nce = config.nce();
    let nce_src_t = nce_across_scales(
        &state.generator,
        &state.heads,
        &nce,
        scales_x,
        fake_y,
        &mut state.rng_model,
    )?;
    terms.insert("nce_source".to_string(), finite("nce_source", scalar(&nce_src_t)?)?);
    g_total_t = (g_total_t + (nce_src_t * config.lambda_nce_source)?)?;

    let (scales_y, idt_y) = state.generator.forward_with_scales(batch_y)?;
    let nce_idt_t = nce_across_scales(
        &state.generator,
        &state.heads,
        &nce,
        &scales_y,
        &idt_y,
        &mut state.rng_model,
    )?;
    terms.insert(
        "nce_identity".to_string(),
        finite("nce_identity", scalar(&nce_idt_t)?)?,
    );
    g_total_t = (g_total_t + (nce_idt_t * config.lambda_nce_identity)?)?;

    if mode != AblationMode::E6 {
        let slot = mode.report_slot();
        let base = if mode.uses_robust_coefficient() {
            config.robust_coefficient
        } else {
            config.ablation_coefficient
        };
        let effective = base * factor;
        let mut value = 0.0;
        // The term is computed only when it contributes, so gated-off and
        // zero-coefficient runs consume no extra randomness.
        if effective > 0.0 {
            let scales = state.all_scales();
            let term_t = match mode {
                AblationMode::None => robustness_loss(
                    &state.generator,
                    &state.heads,
                    batch_x,
                    &scales,
                    &config.robust(RobustVariant::PerturbFirst),
                    &mut state.rng_model,
                    Some(fake_y),
                )?,
                AblationMode::E4 => robustness_loss(
                    &state.generator,
                    &state.heads,
                    batch_x,
                    &scales,
                    &config.robust(RobustVariant::TranslateFirst),
                    &mut state.rng_model,
                    Some(fake_y),
                )?,
                AblationMode::E3 => {
                    let rcfg = config.robust(RobustVariant::PerturbFirst);
                    let mut total: Option<Tensor> = None;
                    for &k in &scales {
                        let term = robustness_scale_loss(
                            &state.generator,
                            &IdentityProjector,
                            batch_x,
                            k,
                            &rcfg,
                            &mut state.rng_model,
                            Some(fake_y),
                        )?;
                        total = Some(match total {
                            None => term,
                            Some(t) => (t + term)?,
                        });
                    }
                    (total.expect("scales non-empty") / scales.len() as f64)?
                }
                AblationMode::E1 => {
                    let stats = state.e1_stats.ok_or_else(|| {
                        Error::Config(
                            "ablation e1 requires dataset self-distance statistics".into(),
                        )
                    })?;
                    self_distance_loss_e1(
                        batch_x,
                        fake_y,
                        stats.source,
                        stats.target,
                        config.e1_absolute,
                    )?
                }
                AblationMode::E2 => e2_term(&config, batch_x, fake_y, &mut state.rng_model)?,
                AblationMode::E5 => feature_consistency_loss_e5(
                    &state.generator,
                    &state.heads,
                    batch_x,
                    fake_y,
                    &scales,
                    config.robust_patches_per_scale,
                    config.robust_train_heads,
                    &mut state.rng_model,
                )?,
                AblationMode::E6 => unreachable!("E6 joins the discriminator update"),
            };
            value = finite(slot, scalar(&term_t)?)?;
            g_total_t = (g_total_t + (term_t * effective)?)?;
        }
        terms.insert(slot.to_string(), value);
    }

    terms.insert("g_total".to_string(), finite("g_total", scalar(&g_total_t)?)?);
    let grads = g_total_t.backward()?;
    let params = state.g_params();
    state.opt_g.step(&params, &grads, lr)?;
    Ok(terms)
}

/// Full step: translate, update D on pooled fakes, update G and heads.
pub fn train_step(
    state: &mut TrainState,
    batch_x: &Tensor,
    batch_y: &Tensor,
) -> Result<LossReport> {
    let epoch = state.epoch;
    let lr = lr_at(&state.config, epoch);
    let factor = robust_factor(&state.config, epoch);

    let (scales_x, fake_y) = state.generator.forward_with_scales(batch_x)?;
    let fake_detached = fake_y.detach();

    let mut terms = discriminator_update(state, batch_y, &fake_detached, lr, factor)?;
    let g_terms = generator_update(state, batch_x, batch_y, &scales_x, &fake_y, lr, factor)?;
    terms.extend(g_terms);

    state.iteration += 1;
    Ok(LossReport {
        epoch,
        iteration: state.iteration,
        lr,
        robust_active: factor > 0.0,
        terms,
    })
}
