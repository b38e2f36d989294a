//! Checkpoints: the complete training state written to a directory.
//!
//! `params.safetensors` holds every weight, both optimizers' moments, and
//! the image pool contents; `state.json` holds the config, counters, and rng
//! positions. A load validates every key against the freshly built
//! architecture before mutating anything, so a bad file never leaves a
//! half-restored state behind.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::data::ImagePool;
use crate::error::{Error, Result};
use crate::nn::{DEVICE, DTYPE};
use crate::rng::{RngState, SeedStream};
use crate::train::config::TrainConfig;
use crate::train::state::{E1Stats, TrainState};

pub const PARAMS_FILE: &str = "params.safetensors";
pub const STATE_FILE: &str = "state.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    config: TrainConfig,
    epoch: usize,
    iteration: u64,
    opt_g_t: u64,
    opt_d_t: u64,
    rng_model: RngState,
    rng_data: RngState,
    rng_pool: RngState,
    pool_len: usize,
    e1_stats: Option<E1Stats>,
}

fn pool_key(i: usize) -> String {
    format!("pool.{i:04}")
}

/// Writes the full state into `dir` (created if missing).
pub fn save_checkpoint(state: &TrainState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut tensors: HashMap<String, Tensor> = HashMap::new();
    for (name, var) in state.g_params().0.iter().chain(state.d_params().0.iter()) {
        tensors.insert(name.clone(), var.as_tensor().clone());
    }
    for (prefix, opt) in [("opt_g", &state.opt_g), ("opt_d", &state.opt_d)] {
        for (name, m, v) in opt.moments() {
            tensors.insert(format!("{prefix}.m.{name}"), m.clone());
            tensors.insert(format!("{prefix}.v.{name}"), v.clone());
        }
    }
    for (i, img) in state.pool.contents().iter().enumerate() {
        tensors.insert(pool_key(i), img.clone());
    }
    candle_core::safetensors::save(&tensors, dir.join(PARAMS_FILE))?;

    let meta = CheckpointMeta {
        config: state.config.clone(),
        epoch: state.epoch,
        iteration: state.iteration,
        opt_g_t: state.opt_g.t,
        opt_d_t: state.opt_d.t,
        rng_model: state.rng_model.state(),
        rng_data: state.rng_data.state(),
        rng_pool: state.pool.rng().state(),
        pool_len: state.pool.len(),
        e1_stats: state.e1_stats,
    };
    fs::write(dir.join(STATE_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

fn fetch<'a>(
    tensors: &'a HashMap<String, Tensor>,
    key: &str,
    dims: &[usize],
) -> Result<&'a Tensor> {
    let t = tensors
        .get(key)
        .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{key}`")))?;
    if t.dims() != dims {
        return Err(Error::Checkpoint(format!(
            "tensor `{key}` has shape {:?}, expected {:?}",
            t.dims(),
            dims
        )));
    }
    if t.dtype() != DTYPE {
        return Err(Error::Checkpoint(format!(
            "tensor `{key}` has dtype {:?}, expected {:?}",
            t.dtype(),
            DTYPE
        )));
    }
    Ok(t)
}

/// Rebuilds a `TrainState` from `dir`. With `expected` set, the stored
/// architecture sub-configs must match it exactly.
pub fn load_checkpoint(dir: &Path, expected: Option<&TrainConfig>) -> Result<TrainState> {
    let meta_raw = fs::read_to_string(dir.join(STATE_FILE))
        .map_err(|e| Error::Checkpoint(format!("cannot read {STATE_FILE}: {e}")))?;
    let meta: CheckpointMeta = serde_json::from_str(&meta_raw)
        .map_err(|e| Error::Checkpoint(format!("cannot parse {STATE_FILE}: {e}")))?;
    if let Some(exp) = expected {
        if exp.generator != meta.config.generator
            || exp.discriminator != meta.config.discriminator
            || exp.head != meta.config.head
        {
            return Err(Error::Checkpoint(
                "checkpoint architecture does not match the requested configuration".into(),
            ));
        }
    }
    meta.config.validate()?;
    let mut state = TrainState::new(&meta.config)?;
    let tensors = candle_core::safetensors::load(dir.join(PARAMS_FILE), &DEVICE)
        .map_err(|e| Error::Checkpoint(format!("cannot read {PARAMS_FILE}: {e}")))?;

    // Phase 1: validate every expected key before touching the state.
    let g_params = state.g_params();
    let d_params = state.d_params();
    for (name, var) in g_params.0.iter().chain(d_params.0.iter()) {
        fetch(&tensors, name, var.dims())?;
    }
    for (prefix, opt) in [("opt_g", &state.opt_g), ("opt_d", &state.opt_d)] {
        for (name, m, v) in opt.moments() {
            fetch(&tensors, &format!("{prefix}.m.{name}"), m.dims())?;
            fetch(&tensors, &format!("{prefix}.v.{name}"), v.dims())?;
        }
    }
    let mut pool_images = Vec::with_capacity(meta.pool_len);
    if meta.pool_len > meta.config.pool_capacity {
        return Err(Error::Checkpoint(format!(
            "pool holds {} images but capacity is {}",
            meta.pool_len, meta.config.pool_capacity
        )));
    }
    for i in 0..meta.pool_len {
        let key = pool_key(i);
        let t = tensors
            .get(&key)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{key}`")))?;
        t.dims4()
            .map_err(|_| Error::Checkpoint(format!("pool tensor `{key}` is not an image batch")))?;
        pool_images.push(t.clone());
    }

    // Phase 2: apply.
    for (name, var) in g_params.0.iter().chain(d_params.0.iter()) {
        var.set(tensors.get(name).expect("validated above"))?;
    }
    for (prefix, opt, t) in [
        ("opt_g", &mut state.opt_g, meta.opt_g_t),
        ("opt_d", &mut state.opt_d, meta.opt_d_t),
    ] {
        opt.restore_moments(t, |name| {
            let m = tensors
                .get(&format!("{prefix}.m.{name}"))
                .expect("validated above");
            let v = tensors
                .get(&format!("{prefix}.v.{name}"))
                .expect("validated above");
            Ok((m.clone(), v.clone()))
        })?;
    }
    state.pool = ImagePool::restore(
        meta.config.pool_capacity,
        pool_images,
        SeedStream::restore(&meta.rng_pool),
    );
    state.rng_model = SeedStream::restore(&meta.rng_model);
    state.rng_data = SeedStream::restore(&meta.rng_data);
    state.epoch = meta.epoch;
    state.iteration = meta.iteration;
    state.e1_stats = meta.e1_stats;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::randn_tensor;
    use crate::train::step::train_step;
    use crate::models::{DiscriminatorConfig, GeneratorConfig, HeadConfig};

    fn toy_config() -> TrainConfig {
        TrainConfig {
            total_epochs: 4,
            robust_gate_fraction: 0.0,
            crop_size: 16,
            nce_patches_per_scale: 8,
            robust_patches_per_scale: 4,
            pool_capacity: 3,
            generator: GeneratorConfig {
                base_width: 4,
                residual_blocks: 1,
                ..GeneratorConfig::default()
            },
            discriminator: DiscriminatorConfig {
                base_width: 4,
                n_layers: 2,
                ..DiscriminatorConfig::default()
            },
            head: HeadConfig {
                embed_dim: 8,
                hidden_dim: 8,
            },
            ..TrainConfig::default()
        }
    }

    fn batches(seed: u64) -> (Tensor, Tensor) {
        let mut rng = SeedStream::new(seed);
        let x = randn_tensor(&mut rng, 0.5, &[1, 3, 16, 16]).unwrap();
        let y = randn_tensor(&mut rng, 0.5, &[1, 3, 16, 16]).unwrap();
        (x.clamp(-1.0, 1.0).unwrap(), y.clamp(-1.0, 1.0).unwrap())
    }

    #[test]
    fn roundtrip_restores_bitwise_identical_state() {
        let config = toy_config();
        let mut state = TrainState::new(&config).unwrap();
        let (x, y) = batches(11);
        for _ in 0..4 {
            train_step(&mut state, &x, &y).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&state, dir.path()).unwrap();
        let restored = load_checkpoint(dir.path(), Some(&config)).unwrap();

        assert_eq!(restored.epoch, state.epoch);
        assert_eq!(restored.iteration, state.iteration);
        assert_eq!(restored.g_params().fingerprint(), state.g_params().fingerprint());
        assert_eq!(restored.d_params().fingerprint(), state.d_params().fingerprint());
        assert_eq!(restored.opt_g.t, state.opt_g.t);
        assert_eq!(restored.pool.len(), state.pool.len());
        assert_eq!(restored.rng_model.state(), state.rng_model.state());
        assert_eq!(restored.rng_data.state(), state.rng_data.state());
        assert_eq!(restored.pool.rng().state(), state.pool.rng().state());
    }

    #[test]
    fn resumed_run_matches_uninterrupted_run() {
        let config = toy_config();
        let (x, y) = batches(12);

        let mut full = TrainState::new(&config).unwrap();
        for _ in 0..6 {
            train_step(&mut full, &x, &y).unwrap();
        }

        let mut first = TrainState::new(&config).unwrap();
        for _ in 0..3 {
            train_step(&mut first, &x, &y).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&first, dir.path()).unwrap();
        let mut resumed = load_checkpoint(dir.path(), Some(&config)).unwrap();
        for _ in 0..3 {
            train_step(&mut resumed, &x, &y).unwrap();
        }

        assert_eq!(
            resumed.g_params().fingerprint(),
            full.g_params().fingerprint(),
            "resumed generator diverged from the uninterrupted run"
        );
        assert_eq!(
            resumed.d_params().fingerprint(),
            full.d_params().fingerprint(),
            "resumed discriminator diverged from the uninterrupted run"
        );
    }

    #[test]
    fn architecture_mismatch_is_rejected() {
        let config = toy_config();
        let state = TrainState::new(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&state, dir.path()).unwrap();

        let mut other = toy_config();
        other.generator.base_width = 8;
        let err = load_checkpoint(dir.path(), Some(&other)).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }

    #[test]
    fn corrupt_params_never_mutate_state() {
        let config = toy_config();
        let state = TrainState::new(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&state, dir.path()).unwrap();

        // Drop one tensor from the archive.
        let mut tensors =
            candle_core::safetensors::load(dir.path().join(PARAMS_FILE), &DEVICE).unwrap();
        let some_key = state.g_params().0[0].0.clone();
        tensors.remove(&some_key);
        candle_core::safetensors::save(&tensors, dir.path().join(PARAMS_FILE)).unwrap();

        let err = load_checkpoint(dir.path(), Some(&config)).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }

    #[test]
    fn missing_directory_reports_checkpoint_error() {
        let err = load_checkpoint(Path::new("/nonexistent/ckpt"), None).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }
}
