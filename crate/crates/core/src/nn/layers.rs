//! Convolution, normalization, and linear layers with explicit seeding.

use candle_core::{Tensor, Var};
use serde::{Deserialize, Serialize};

use super::{randn_tensor, zeros, ParamList, Trainable};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Weight init convention: conv and linear weights ~ N(0, 0.02), biases zero,
/// norm scales one. Matches the usual image-translation setup.
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Instance,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    None,
}

impl Activation {
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Relu => Ok(x.relu()?),
            Activation::LeakyRelu(slope) => {
                let scaled = (x * *slope)?;
                Ok(x.maximum(&scaled)?)
            }
            Activation::Tanh => Ok(x.tanh()?),
            Activation::None => Ok(x.clone()),
        }
    }
}

pub struct Conv2d {
    pub weight: Var,
    pub bias: Var,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(
        rng: &mut SeedStream,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let weight = Var::from_tensor(&randn_tensor(
            rng,
            INIT_STD,
            &[out_channels, in_channels, kernel, kernel],
        )?)?;
        let bias = Var::from_tensor(&zeros(&[out_channels])?)?;
        Ok(Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, _, _) = x.dims4()?;
        if c != self.in_channels {
            return Err(Error::Shape {
                context: "conv2d input channels".into(),
                expected: format!("{}", self.in_channels),
                got: format!("{c}"),
            });
        }
        let y = x.conv2d(self.weight.as_tensor(), self.padding, self.stride, 1, 1)?;
        let b = self.bias.as_tensor().reshape((1, self.out_channels, 1, 1))?;
        Ok(y.broadcast_add(&b)?)
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let f = |s: usize| (s + 2 * self.padding - self.kernel) / self.stride + 1;
        (f(h), f(w))
    }
}

impl Trainable for Conv2d {
    fn params(&self) -> ParamList {
        let mut p = ParamList::new();
        p.push("weight", self.weight.clone());
        p.push("bias", self.bias.clone());
        p
    }
}

pub struct InstanceNorm2d {
    pub gamma: Var,
    pub beta: Var,
    pub channels: usize,
    pub eps: f64,
}

impl InstanceNorm2d {
    pub fn new(channels: usize) -> Result<Self> {
        let gamma = Var::from_tensor(&super::ones(&[channels])?)?;
        let beta = Var::from_tensor(&zeros(&[channels])?)?;
        Ok(Self {
            gamma,
            beta,
            channels,
            eps: 1e-5,
        })
    }

    /// Normalizes each (sample, channel) plane by its own spatial statistics.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.channels {
            return Err(Error::Shape {
                context: "instance norm channels".into(),
                expected: format!("{}", self.channels),
                got: format!("{c}"),
            });
        }
        let flat = x.reshape((n, c, h * w))?;
        let mean = flat.mean_keepdim(2)?;
        let centered = flat.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(2)?;
        let inv_std = (var + self.eps)?.sqrt()?.recip()?;
        let normed = centered.broadcast_mul(&inv_std)?.reshape((n, c, h, w))?;
        let g = self.gamma.as_tensor().reshape((1, c, 1, 1))?;
        let b = self.beta.as_tensor().reshape((1, c, 1, 1))?;
        Ok(normed.broadcast_mul(&g)?.broadcast_add(&b)?)
    }
}

impl Trainable for InstanceNorm2d {
    fn params(&self) -> ParamList {
        let mut p = ParamList::new();
        p.push("gamma", self.gamma.clone());
        p.push("beta", self.beta.clone());
        p
    }
}

pub struct Linear {
    pub weight: Var,
    pub bias: Var,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(rng: &mut SeedStream, in_features: usize, out_features: usize) -> Result<Self> {
        let weight = Var::from_tensor(&randn_tensor(rng, INIT_STD, &[out_features, in_features])?)?;
        // Random bias keeps the layer away from the all-zero output, which
        // would break the unit-norm contract of downstream embeddings.
        let bias = Var::from_tensor(&randn_tensor(rng, INIT_STD, &[out_features])?)?;
        Ok(Self {
            weight,
            bias,
            in_features,
            out_features,
        })
    }

    /// `x` is (rows, in_features). With `detach_params` the weights enter the
    /// graph as constants so no gradient reaches this layer.
    pub fn forward(&self, x: &Tensor, detach_params: bool) -> Result<Tensor> {
        let (_, f) = x.dims2()?;
        if f != self.in_features {
            return Err(Error::Shape {
                context: "linear input features".into(),
                expected: format!("{}", self.in_features),
                got: format!("{f}"),
            });
        }
        let (w, b) = if detach_params {
            (self.weight.as_tensor().detach(), self.bias.as_tensor().detach())
        } else {
            (self.weight.as_tensor().clone(), self.bias.as_tensor().clone())
        };
        Ok(x.matmul(&w.t()?)?.broadcast_add(&b)?)
    }
}

impl Trainable for Linear {
    fn params(&self) -> ParamList {
        let mut p = ParamList::new();
        p.push("weight", self.weight.clone());
        p.push("bias", self.bias.clone());
        p
    }
}

/// Rows of `x` (last dim) scaled to unit Euclidean norm. The tiny floor keeps
/// the zero vector finite without disturbing anything of realistic magnitude.
pub fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let sq = x.sqr()?.sum_keepdim(x.rank() - 1)?;
    let norm = (sq + 1e-24)?.sqrt()?;
    Ok(x.broadcast_div(&norm)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{scalar, tensor_from_vec};

    #[test]
    fn conv_identity_kernel_passes_through() {
        let mut rng = SeedStream::new(7);
        let conv = Conv2d::new(&mut rng, 1, 1, 1, 1, 0).unwrap();
        conv.weight
            .set(&tensor_from_vec(vec![1.0], &[1, 1, 1, 1]).unwrap())
            .unwrap();
        let x = tensor_from_vec(vec![1.0, -2.0, 3.0, 0.5], &[1, 1, 2, 2]).unwrap();
        let y = conv.forward(&x).unwrap();
        let diff = (&y - &x).unwrap().abs().unwrap().sum_all().unwrap();
        assert!(scalar(&diff).unwrap() < 1e-12);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let mut rng = SeedStream::new(7);
        let conv = Conv2d::new(&mut rng, 3, 4, 3, 1, 1).unwrap();
        let x = tensor_from_vec(vec![0.0; 2 * 4 * 4], &[1, 2, 4, 4]).unwrap();
        assert!(conv.forward(&x).is_err());
    }

    #[test]
    fn instance_norm_zero_mean_unit_var() {
        let mut rng = SeedStream::new(11);
        let norm = InstanceNorm2d::new(2).unwrap();
        let x = tensor_from_vec(rng.normal_vec(2 * 2 * 4 * 4), &[2, 2, 4, 4]).unwrap();
        let y = norm.forward(&x).unwrap();
        let flat = y.reshape((2, 2, 16)).unwrap();
        let mean = flat.mean_keepdim(2).unwrap().abs().unwrap().max_all().unwrap();
        assert!(scalar(&mean).unwrap() < 1e-10);
        let var = flat
            .broadcast_sub(&flat.mean_keepdim(2).unwrap())
            .unwrap()
            .sqr()
            .unwrap()
            .mean_keepdim(2)
            .unwrap();
        let v = var.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for value in v {
            assert!((value - 1.0).abs() < 1e-3, "variance {value}");
        }
    }

    #[test]
    fn leaky_relu_matches_definition() {
        let x = tensor_from_vec(vec![-2.0, -0.5, 0.0, 1.5], &[1, 4]).unwrap();
        let y = Activation::LeakyRelu(0.2).apply(&x).unwrap();
        let got = y.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert_eq!(got, vec![-0.4, -0.1, 0.0, 1.5]);
    }

    #[test]
    fn l2_normalize_produces_unit_rows() {
        let x = tensor_from_vec(vec![3.0, 4.0, 0.0, 5.0, -12.0, 0.0], &[2, 3]).unwrap();
        let y = l2_normalize(&x).unwrap();
        let norms = y.sqr().unwrap().sum_keepdim(1).unwrap().sqrt().unwrap();
        let got = norms.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for n in got {
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_detach_blocks_parameter_gradients() {
        let mut rng = SeedStream::new(3);
        let lin = Linear::new(&mut rng, 4, 2, ).unwrap();
        let x = Var::from_tensor(&tensor_from_vec(vec![0.1, 0.2, 0.3, 0.4], &[1, 4]).unwrap()).unwrap();
        let y = lin.forward(x.as_tensor(), true).unwrap();
        let loss = y.sqr().unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        assert!(grads.get(lin.weight.as_tensor()).is_none());
        assert!(grads.get(x.as_tensor()).is_some());
    }
}
