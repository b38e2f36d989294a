//! Patch discriminator scoring overlapping receptive fields.
//!
//! Besides the plain forward pass there is an explicit input-gradient path:
//! the gradient of each sample's mean score with respect to the input image,
//! built out of ordinary forward ops (vector-Jacobian products layer by
//! layer). That keeps the gradient itself differentiable, which the backend's
//! automatic second-order differentiation does not deliver reliably.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Conv2d, InstanceNorm2d, NormKind, ParamList, Trainable, DTYPE};
use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    pub base_width: usize,
    /// Number of stride-2 convolutions.
    pub n_layers: usize,
    pub norm: NormKind,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            base_width: 16,
            n_layers: 3,
            norm: NormKind::Instance,
        }
    }
}

struct DBlock {
    conv: Conv2d,
    norm: Option<InstanceNorm2d>,
    act: Activation,
}

pub struct PatchDiscriminator {
    blocks: Vec<DBlock>,
}

/// Record of one differentiable op during a traced forward pass, holding the
/// graph-connected tensors its vector-Jacobian product needs.
enum TraceOp {
    Conv {
        weight: Tensor,
        stride: usize,
        padding: usize,
        in_hw: (usize, usize),
    },
    InstanceNorm {
        input: Tensor,
        gamma: Tensor,
        eps: f64,
    },
    LeakyRelu {
        pre: Tensor,
        slope: f64,
    },
}

impl PatchDiscriminator {
    pub fn new(rng: &mut SeedStream, config: &DiscriminatorConfig) -> Result<Self> {
        if config.n_layers == 0 || config.base_width == 0 {
            return Err(Error::Argument(
                "discriminator needs positive depth and width".into(),
            ));
        }
        let norm = |c: usize| -> Result<Option<InstanceNorm2d>> {
            Ok(match config.norm {
                NormKind::Instance => Some(InstanceNorm2d::new(c)?),
                NormKind::None => None,
            })
        };
        let slope = 0.2;
        let w = config.base_width;
        let mut blocks = Vec::new();
        blocks.push(DBlock {
            conv: Conv2d::new(rng, config.in_channels, w, 4, 2, 1)?,
            norm: None,
            act: Activation::LeakyRelu(slope),
        });
        let mut mult = 1;
        for _ in 1..config.n_layers {
            let next = (mult * 2).min(8);
            blocks.push(DBlock {
                conv: Conv2d::new(rng, w * mult, w * next, 4, 2, 1)?,
                norm: norm(w * next)?,
                act: Activation::LeakyRelu(slope),
            });
            mult = next;
        }
        let next = (mult * 2).min(8);
        blocks.push(DBlock {
            conv: Conv2d::new(rng, w * mult, w * next, 4, 1, 1)?,
            norm: norm(w * next)?,
            act: Activation::LeakyRelu(slope),
        });
        blocks.push(DBlock {
            conv: Conv2d::new(rng, w * next, 1, 4, 1, 1)?,
            norm: None,
            act: Activation::None,
        });
        Ok(Self { blocks })
    }

    /// Score grid (N, 1, h', w').
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for block in &self.blocks {
            h = block.conv.forward(&h)?;
            if let Some(norm) = &block.norm {
                h = norm.forward(&h)?;
            }
            h = block.act.apply(&h)?;
        }
        Ok(h)
    }

    /// Edge length of one score's receptive field in input pixels.
    pub fn receptive_field(&self) -> usize {
        let mut rf = 1;
        for block in self.blocks.iter().rev() {
            rf = rf * block.conv.stride + (block.conv.kernel - block.conv.stride);
        }
        rf
    }

    fn forward_traced(&self, x: &Tensor) -> Result<(Tensor, Vec<TraceOp>)> {
        let mut h = x.clone();
        let mut trace = Vec::new();
        for block in &self.blocks {
            let (_, _, ih, iw) = h.dims4()?;
            h = block.conv.forward(&h)?;
            trace.push(TraceOp::Conv {
                weight: block.conv.weight.as_tensor().clone(),
                stride: block.conv.stride,
                padding: block.conv.padding,
                in_hw: (ih, iw),
            });
            if let Some(norm) = &block.norm {
                let input = h.clone();
                h = norm.forward(&h)?;
                trace.push(TraceOp::InstanceNorm {
                    input,
                    gamma: norm.gamma.as_tensor().clone(),
                    eps: norm.eps,
                });
            }
            if let Activation::LeakyRelu(slope) = block.act {
                let pre = h.clone();
                h = block.act.apply(&h)?;
                trace.push(TraceOp::LeakyRelu { pre, slope });
            }
        }
        Ok((h, trace))
    }
}

fn conv_vjp(
    grad_out: &Tensor,
    weight: &Tensor,
    stride: usize,
    padding: usize,
    in_hw: (usize, usize),
) -> Result<Tensor> {
    let (_, _, gh, gw) = grad_out.dims4()?;
    let (_, _, kh, kw) = weight.dims4()?;
    let opad_h = in_hw.0 as i64 - ((gh as i64 - 1) * stride as i64 - 2 * padding as i64 + kh as i64);
    let opad_w = in_hw.1 as i64 - ((gw as i64 - 1) * stride as i64 - 2 * padding as i64 + kw as i64);
    if opad_h != opad_w || opad_h < 0 || opad_h >= stride as i64 {
        return Err(Error::Invariant(format!(
            "conv transpose output padding {opad_h}/{opad_w} incompatible with stride {stride}"
        )));
    }
    Ok(grad_out.conv_transpose2d(weight, padding, opad_h as usize, stride, 1)?)
}

fn instance_norm_vjp(grad_out: &Tensor, input: &Tensor, gamma: &Tensor, eps: f64) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4()?;
    let flat = input.reshape((n, c, h * w))?;
    let mean = flat.mean_keepdim(2)?;
    let centered = flat.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(2)?;
    let inv_std = (var + eps)?.sqrt()?.recip()?;
    let xhat = centered.broadcast_mul(&inv_std)?;
    let g = grad_out
        .reshape((n, c, h * w))?
        .broadcast_mul(&gamma.reshape((1, c, 1))?)?;
    let g_mean = g.mean_keepdim(2)?;
    let gx_mean = g.mul(&xhat)?.mean_keepdim(2)?;
    let dx = g
        .broadcast_sub(&g_mean)?
        .sub(&xhat.broadcast_mul(&gx_mean)?)?
        .broadcast_mul(&inv_std)?;
    Ok(dx.reshape((n, c, h, w))?)
}

fn leaky_relu_vjp(grad_out: &Tensor, pre: &Tensor, slope: f64) -> Result<Tensor> {
    // The mask is piecewise constant, so it enters as a detached constant.
    let pos = pre.gt(0.0)?.to_dtype(DTYPE)?.detach();
    let ones = Tensor::ones_like(&pos)?;
    let mask = ((&pos * (1.0 - slope))? + (&ones * slope)?)?;
    Ok(grad_out.mul(&mask)?)
}

/// Anything that can report the gradient of its per-sample mean score with
/// respect to the input, as a graph-connected tensor shaped like the input.
pub trait ScoreModel {
    fn mean_score_input_grad(&self, x: &Tensor) -> Result<Tensor>;
}

impl ScoreModel for PatchDiscriminator {
    fn mean_score_input_grad(&self, x: &Tensor) -> Result<Tensor> {
        let (score, trace) = self.forward_traced(x)?;
        let (n, c, h, w) = score.dims4()?;
        // Per-sample mean: seed each sample's grid uniformly, batch untouched.
        let seed = (Tensor::ones((n, c, h, w), DType::F64, score.device())?
            / (c * h * w) as f64)?;
        let mut grad = seed;
        for op in trace.iter().rev() {
            grad = match op {
                TraceOp::Conv {
                    weight,
                    stride,
                    padding,
                    in_hw,
                } => conv_vjp(&grad, weight, *stride, *padding, *in_hw)?,
                TraceOp::InstanceNorm { input, gamma, eps } => {
                    instance_norm_vjp(&grad, input, gamma, *eps)?
                }
                TraceOp::LeakyRelu { pre, slope } => leaky_relu_vjp(&grad, pre, *slope)?,
            };
        }
        Ok(grad)
    }
}

impl Trainable for PatchDiscriminator {
    fn params(&self) -> ParamList {
        let mut p = ParamList::new();
        for (i, block) in self.blocks.iter().enumerate() {
            p.extend_prefixed(&format!("block{i}.conv"), block.conv.params());
            if let Some(norm) = &block.norm {
                p.extend_prefixed(&format!("block{i}.norm"), norm.params());
            }
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Var;
    use crate::nn::{scalar, tensor_from_vec};

    #[test]
    fn score_grid_shape_and_receptive_field() {
        let mut rng = SeedStream::new(1);
        let d = PatchDiscriminator::new(
            &mut rng,
            &DiscriminatorConfig {
                base_width: 4,
                n_layers: 3,
                ..DiscriminatorConfig::default()
            },
        )
        .unwrap();
        assert_eq!(d.receptive_field(), 70);
        let x = tensor_from_vec(vec![0.1; 3 * 64 * 64], &[1, 3, 64, 64]).unwrap();
        let s = d.forward(&x).unwrap();
        let (_, c, h, w) = s.dims4().unwrap();
        assert_eq!(c, 1);
        assert_eq!((h, w), (6, 6));
    }

    #[test]
    fn manual_input_grad_matches_autodiff() {
        let mut rng = SeedStream::new(2);
        let d = PatchDiscriminator::new(
            &mut rng,
            &DiscriminatorConfig {
                base_width: 3,
                n_layers: 2,
                ..DiscriminatorConfig::default()
            },
        )
        .unwrap();
        let x = Var::from_tensor(
            &tensor_from_vec(rng.normal_vec(3 * 16 * 16), &[1, 3, 16, 16]).unwrap(),
        )
        .unwrap();
        let manual = d.mean_score_input_grad(x.as_tensor()).unwrap();
        let score = d.forward(x.as_tensor()).unwrap().mean_all().unwrap();
        let grads = score.backward().unwrap();
        let auto = grads.get(x.as_tensor()).unwrap();
        let diff = (&manual - auto).unwrap().abs().unwrap().max_all().unwrap();
        let magnitude = auto.abs().unwrap().max_all().unwrap();
        let rel = scalar(&diff).unwrap() / scalar(&magnitude).unwrap().max(1e-12);
        assert!(rel < 1e-9, "relative mismatch {rel}");
    }

    #[test]
    fn manual_input_grad_matches_autodiff_without_norm() {
        let mut rng = SeedStream::new(3);
        let d = PatchDiscriminator::new(
            &mut rng,
            &DiscriminatorConfig {
                base_width: 2,
                n_layers: 2,
                norm: NormKind::None,
                ..DiscriminatorConfig::default()
            },
        )
        .unwrap();
        let x = Var::from_tensor(
            &tensor_from_vec(rng.normal_vec(3 * 16 * 16), &[1, 3, 16, 16]).unwrap(),
        )
        .unwrap();
        let manual = d.mean_score_input_grad(x.as_tensor()).unwrap();
        let score = d.forward(x.as_tensor()).unwrap().mean_all().unwrap();
        let grads = score.backward().unwrap();
        let auto = grads.get(x.as_tensor()).unwrap();
        let diff = (&manual - auto).unwrap().abs().unwrap().max_all().unwrap();
        assert!(scalar(&diff).unwrap() < 1e-12);
    }

    #[test]
    fn per_sample_grad_independent_of_batch_size() {
        let mut rng = SeedStream::new(4);
        let d = PatchDiscriminator::new(
            &mut rng,
            &DiscriminatorConfig {
                base_width: 2,
                n_layers: 2,
                ..DiscriminatorConfig::default()
            },
        )
        .unwrap();
        let a = tensor_from_vec(rng.normal_vec(3 * 16 * 16), &[1, 3, 16, 16]).unwrap();
        let b = tensor_from_vec(rng.normal_vec(3 * 16 * 16), &[1, 3, 16, 16]).unwrap();
        let stacked = Tensor::cat(&[&a, &b], 0).unwrap();
        let g_stack = d.mean_score_input_grad(&stacked).unwrap();
        let g_a = d.mean_score_input_grad(&a).unwrap();
        let first = g_stack.narrow(0, 0, 1).unwrap();
        let diff = (&first - &g_a).unwrap().abs().unwrap().max_all().unwrap();
        assert!(scalar(&diff).unwrap() < 1e-12);
    }

    #[test]
    fn zero_weights_score_the_output_bias_everywhere() {
        let mut rng = SeedStream::new(5);
        let d = PatchDiscriminator::new(
            &mut rng,
            &DiscriminatorConfig {
                base_width: 4,
                n_layers: 2,
                ..DiscriminatorConfig::default()
            },
        )
        .unwrap();
        let params = d.params();
        for (_, var) in &params.0 {
            var.set(&var.as_tensor().zeros_like().unwrap()).unwrap();
        }
        // Construction order puts the final conv's bias last.
        let (last_name, last_var) = params.0.last().unwrap();
        assert!(last_name.ends_with("bias"), "unexpected tail param {last_name}");
        let bias = 0.37;
        last_var
            .set(&(last_var.as_tensor().zeros_like().unwrap() + bias).unwrap())
            .unwrap();

        let x = tensor_from_vec(rng.normal_vec(3 * 16 * 16), &[1, 3, 16, 16]).unwrap();
        let scores = d.forward(&x).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for s in scores {
            assert!((s - bias).abs() < 1e-12);
        }
    }
}
