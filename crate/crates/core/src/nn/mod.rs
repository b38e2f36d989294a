//! Minimal neural-net building blocks on top of the tensor backend.
//!
//! Everything runs on CPU in f64. Layers own their parameters as `Var`s and
//! expose them through [`ParamList`] for optimizers and checkpointing.

pub mod layers;
pub mod param;

pub use layers::{l2_normalize, Activation, Conv2d, InstanceNorm2d, Linear, NormKind};
pub use param::{ParamList, Trainable};

use candle_core::{DType, Device, Tensor};

use crate::error::Result;
use crate::rng::SeedStream;

pub const DEVICE: Device = Device::Cpu;
pub const DTYPE: DType = DType::F64;

/// Builds an f64 tensor from host data.
pub fn tensor_from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
    Ok(Tensor::from_vec(data, shape, &DEVICE)?)
}

/// Gaussian tensor with the given std, drawn from an explicit stream.
pub fn randn_tensor(rng: &mut SeedStream, std: f64, shape: &[usize]) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = rng.normal_vec(n).into_iter().map(|v| v * std).collect();
    tensor_from_vec(data, shape)
}

pub fn zeros(shape: &[usize]) -> Result<Tensor> {
    Ok(Tensor::zeros(shape, DTYPE, &DEVICE)?)
}

pub fn ones(shape: &[usize]) -> Result<Tensor> {
    Ok(Tensor::ones(shape, DTYPE, &DEVICE)?)
}

/// Scalar extraction for loss values.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
