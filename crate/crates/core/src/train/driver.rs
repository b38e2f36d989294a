//! Epoch driver: pairs the two domains, runs steps, and writes run artifacts
//! (config snapshot, loss log, checkpoints, sample grids) into a run
//! directory.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use candle_core::Tensor;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::data::{tensor_to_image, DomainData, LoadedDataset};
use crate::error::{Error, Result};
use crate::eval::ideal_translation;
use crate::losses::{half_l1_distance, HalfStats};
use crate::rng::SeedStream;
use crate::train::checkpoint::save_checkpoint;
use crate::train::config::{AblationMode, TrainConfig};
use crate::train::state::{E1Stats, TrainState};
use crate::train::step::train_step;

pub const SOURCE_DOMAIN: &str = "domainA";
pub const TARGET_DOMAIN: &str = "domainB";
pub const CONFIG_SNAPSHOT: &str = "config.json";
pub const LOSS_LOG: &str = "losses.csv";

/// What a completed (or resumed-and-completed) run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub iterations_run: u64,
    pub final_checkpoint: PathBuf,
    pub loss_log: PathBuf,
    /// Term values of the last step, if any step ran.
    pub last_terms: Option<std::collections::BTreeMap<String, f64>>,
}

/// Population statistics of the half-image self-distance for both training
/// sets (E1 needs them before the first step).
pub fn e1_stats_for(source: &DomainData, target: &DomainData) -> Result<E1Stats> {
    let stats = |images: &[Tensor], name: &str| -> Result<HalfStats> {
        if images.is_empty() {
            return Err(Error::Config(format!("{name} has no images for E1 statistics")));
        }
        let mut values = Vec::with_capacity(images.len());
        for img in images {
            values.extend(half_l1_distance(img)?.to_vec1::<f64>()?);
        }
        let n = values.len() as f64;
        let mu = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
        Ok(HalfStats {
            mu,
            sigma: var.sqrt(),
        })
    };
    Ok(E1Stats {
        source: stats(&source.images, SOURCE_DOMAIN)?,
        target: stats(&target.images, TARGET_DOMAIN)?,
    })
}

/// Random crop plus horizontal flip. Consumes, in order: top, left, flip coin.
fn augment(img: &Tensor, crop: usize, rng: &mut SeedStream) -> Result<Tensor> {
    let (_, _, h, w) = img.dims4()?;
    if h < crop || w < crop {
        return Err(Error::Argument(format!(
            "image {h}x{w} is smaller than the crop size {crop}"
        )));
    }
    let top = rng.below(h - crop + 1);
    let left = rng.below(w - crop + 1);
    let mut out = img.narrow(2, top, crop)?.narrow(3, left, crop)?.contiguous()?;
    if rng.coin() {
        let rev: Vec<u32> = (0..crop as u32).rev().collect();
        let idx = Tensor::from_vec(rev, crop, img.device())?;
        out = out.index_select(&idx, 3)?;
    }
    Ok(out)
}

fn assemble_batch(
    domain: &DomainData,
    order: &[usize],
    start: usize,
    batch: usize,
    crop: usize,
    rng: &mut SeedStream,
) -> Result<Tensor> {
    let mut samples = Vec::with_capacity(batch);
    for &idx in &order[start..start + batch] {
        samples.push(augment(&domain.images[idx], crop, rng)?);
    }
    let refs: Vec<&Tensor> = samples.iter().collect();
    Ok(Tensor::cat(&refs, 0)?)
}

/// Side-by-side source | translation | ideal grid for the first source image.
fn sample_grid(state: &TrainState, source: &DomainData, target: &DomainData) -> Result<RgbImage> {
    let x = &source.images[0];
    let fake = state.generator.forward(x)?;
    let left = tensor_to_image(x)?;
    let mid = tensor_to_image(&fake)?;
    let right = ideal_translation(&source.masks[0], &target.spec)?;
    let (w, h) = (left.width(), left.height());
    let mut grid = RgbImage::new(w * 3, h);
    for (col, img) in [(0, &left), (1, &mid), (2, &right)] {
        for y in 0..h {
            for xx in 0..w {
                grid.put_pixel(col * w + xx, y, *img.get_pixel(xx, y));
            }
        }
    }
    Ok(grid)
}

fn csv_row(report_terms: &std::collections::BTreeMap<String, f64>) -> String {
    report_terms
        .values()
        .map(|v| format!("{v:.12e}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Runs (or resumes) training on `dataset` until `config.total_epochs`.
///
/// The dataset must contain `domainA` (source) and `domainB` (target). Steps
/// per epoch is `min(len A, len B) / batch_size`. A resumed state continues
/// under the provided config; its architecture must match the checkpoint.
pub fn run_training(
    dataset: &LoadedDataset,
    config: &TrainConfig,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainSummary> {
    config.validate()?;
    let source = dataset.domain(SOURCE_DOMAIN)?;
    let target = dataset.domain(TARGET_DOMAIN)?;
    let iters_per_epoch = source.images.len().min(target.images.len()) / config.batch_size;
    if iters_per_epoch == 0 && config.total_epochs > 0 {
        return Err(Error::Config(format!(
            "not enough images for one batch of {}",
            config.batch_size
        )));
    }

    let mut state = match resume {
        Some(dir) => {
            let mut s = crate::train::checkpoint::load_checkpoint(dir, Some(config))?;
            s.config = config.clone();
            s
        }
        None => TrainState::new(config)?,
    };
    if config.ablation_mode == AblationMode::E1 && state.e1_stats.is_none() {
        state.e1_stats = Some(e1_stats_for(source, target)?);
    }

    fs::create_dir_all(out_dir)?;
    fs::write(
        out_dir.join(CONFIG_SNAPSHOT),
        serde_json::to_string_pretty(config)?,
    )?;
    let ckpt_root = out_dir.join("checkpoints");
    let samples_dir = out_dir.join("samples");

    let log_path = out_dir.join(LOSS_LOG);
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)?;
    let mut header_written = fs::metadata(&log_path)?.len() > 0;

    let start_epoch = state.epoch;
    let mut last_terms = None;
    for epoch in start_epoch..config.total_epochs {
        let mut order_a: Vec<usize> = (0..source.images.len()).collect();
        let mut order_b: Vec<usize> = (0..target.images.len()).collect();
        state.rng_data.shuffle(&mut order_a);
        state.rng_data.shuffle(&mut order_b);

        for it in 0..iters_per_epoch {
            let start = it * config.batch_size;
            let x = assemble_batch(
                source,
                &order_a,
                start,
                config.batch_size,
                config.crop_size,
                &mut state.rng_data,
            )?;
            let y = assemble_batch(
                target,
                &order_b,
                start,
                config.batch_size,
                config.crop_size,
                &mut state.rng_data,
            )?;
            let report = train_step(&mut state, &x, &y)?;
            if !header_written {
                let cols: Vec<&str> = report.terms.keys().map(|s| s.as_str()).collect();
                writeln!(log, "epoch,iteration,lr,robust_active,{}", cols.join(","))?;
                header_written = true;
            }
            writeln!(
                log,
                "{},{},{:.12e},{},{}",
                report.epoch,
                report.iteration,
                report.lr,
                u8::from(report.robust_active),
                csv_row(&report.terms)
            )?;
            last_terms = Some(report.terms);
        }

        state.epoch = epoch + 1;
        if config.checkpoint_every > 0 && state.epoch % config.checkpoint_every == 0 {
            save_checkpoint(&state, &ckpt_root.join(format!("epoch_{:04}", state.epoch)))?;
        }
        if config.sample_grid_every > 0 && state.epoch % config.sample_grid_every == 0 {
            fs::create_dir_all(&samples_dir)?;
            let grid = sample_grid(&state, source, target)?;
            grid.save(samples_dir.join(format!("epoch_{:04}.png", state.epoch)))?;
        }
    }

    let final_dir = ckpt_root.join("final");
    save_checkpoint(&state, &final_dir)?;
    Ok(TrainSummary {
        epochs_run: state.epoch.saturating_sub(start_epoch),
        iterations_run: state.iteration,
        final_checkpoint: final_dir,
        loss_log: log_path,
        last_terms,
    })
}
