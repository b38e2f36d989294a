//! Resnet-style generator decomposed into sequential slices.
//!
//! The network is a flat list of stages. A cut vector marks, for each tapped
//! scale, how many stages precede the tap; slice `s` covers the stage range
//! between two consecutive cuts. Scale 1 always sits before any stage, so the
//! first slice is the identity map and scale 1 features are the raw input.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Conv2d, InstanceNorm2d, NormKind, ParamList, Trainable};
use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Channel width after the first convolution; later stages scale it.
    pub base_width: usize,
    pub residual_blocks: usize,
    pub norm: NormKind,
    /// Optional override of the tap positions (stage counts before each tap).
    /// Must start at 0 and be non-decreasing.
    pub scale_cuts: Option<Vec<usize>>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            out_channels: 3,
            base_width: 16,
            residual_blocks: 2,
            norm: NormKind::Instance,
            scale_cuts: None,
        }
    }
}

pub struct ConvBlock {
    pub upsample: bool,
    pub conv: Conv2d,
    pub norm: Option<InstanceNorm2d>,
    pub act: Activation,
}

impl ConvBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        if self.upsample {
            let (_, _, hh, ww) = h.dims4()?;
            h = h.upsample_nearest2d(hh * 2, ww * 2)?;
        }
        h = self.conv.forward(&h)?;
        if let Some(norm) = &self.norm {
            h = norm.forward(&h)?;
        }
        self.act.apply(&h)
    }
}

pub struct ResBlock {
    pub conv1: Conv2d,
    pub norm1: Option<InstanceNorm2d>,
    pub conv2: Conv2d,
    pub norm2: Option<InstanceNorm2d>,
}

impl ResBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.conv1.forward(x)?;
        if let Some(norm) = &self.norm1 {
            h = norm.forward(&h)?;
        }
        h = Activation::Relu.apply(&h)?;
        h = self.conv2.forward(&h)?;
        if let Some(norm) = &self.norm2 {
            h = norm.forward(&h)?;
        }
        Ok((x + h)?)
    }
}

pub enum Stage {
    Conv(ConvBlock),
    Res(ResBlock),
}

impl Stage {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Stage::Conv(b) => b.forward(x),
            Stage::Res(b) => b.forward(x),
        }
    }

    fn params(&self) -> ParamList {
        let mut p = ParamList::new();
        match self {
            Stage::Conv(b) => {
                p.extend_prefixed("conv", b.conv.params());
                if let Some(norm) = &b.norm {
                    p.extend_prefixed("norm", norm.params());
                }
            }
            Stage::Res(b) => {
                p.extend_prefixed("conv1", b.conv1.params());
                if let Some(norm) = &b.norm1 {
                    p.extend_prefixed("norm1", norm.params());
                }
                p.extend_prefixed("conv2", b.conv2.params());
                if let Some(norm) = &b.norm2 {
                    p.extend_prefixed("norm2", norm.params());
                }
            }
        }
        p
    }
}

pub struct GeneratorSlices {
    stages: Vec<Stage>,
    /// Length `num_scales + 2`: leading 0, one tap position per scale, and
    /// the total stage count.
    cuts: Vec<usize>,
    /// Expected channel count of each scale's feature map (index 0 = scale 1).
    scale_channels: Vec<usize>,
    /// Input height and width must be divisible by this.
    spatial_multiple: usize,
    pub in_channels: usize,
}

impl GeneratorSlices {
    pub fn new(rng: &mut SeedStream, config: &GeneratorConfig) -> Result<Self> {
        if config.residual_blocks == 0 {
            return Err(Error::Argument(
                "generator needs at least one residual block".into(),
            ));
        }
        if config.base_width == 0 {
            return Err(Error::Argument("generator base width must be positive".into()));
        }
        let w = config.base_width;
        let norm = |c: usize| -> Result<Option<InstanceNorm2d>> {
            Ok(match config.norm {
                NormKind::Instance => Some(InstanceNorm2d::new(c)?),
                NormKind::None => None,
            })
        };

        let mut stages = Vec::new();
        stages.push(Stage::Conv(ConvBlock {
            upsample: false,
            conv: Conv2d::new(rng, config.in_channels, w, 7, 1, 3)?,
            norm: norm(w)?,
            act: Activation::Relu,
        }));
        stages.push(Stage::Conv(ConvBlock {
            upsample: false,
            conv: Conv2d::new(rng, w, 2 * w, 3, 2, 1)?,
            norm: norm(2 * w)?,
            act: Activation::Relu,
        }));
        stages.push(Stage::Conv(ConvBlock {
            upsample: false,
            conv: Conv2d::new(rng, 2 * w, 4 * w, 3, 2, 1)?,
            norm: norm(4 * w)?,
            act: Activation::Relu,
        }));
        for _ in 0..config.residual_blocks {
            stages.push(Stage::Res(ResBlock {
                conv1: Conv2d::new(rng, 4 * w, 4 * w, 3, 1, 1)?,
                norm1: norm(4 * w)?,
                conv2: Conv2d::new(rng, 4 * w, 4 * w, 3, 1, 1)?,
                norm2: norm(4 * w)?,
            }));
        }
        stages.push(Stage::Conv(ConvBlock {
            upsample: true,
            conv: Conv2d::new(rng, 4 * w, 2 * w, 3, 1, 1)?,
            norm: norm(2 * w)?,
            act: Activation::Relu,
        }));
        stages.push(Stage::Conv(ConvBlock {
            upsample: true,
            conv: Conv2d::new(rng, 2 * w, w, 3, 1, 1)?,
            norm: norm(w)?,
            act: Activation::Relu,
        }));
        stages.push(Stage::Conv(ConvBlock {
            upsample: false,
            conv: Conv2d::new(rng, w, config.out_channels, 7, 1, 3)?,
            norm: None,
            act: Activation::Tanh,
        }));

        // Default taps: input, first conv, both downsampling convs, and the
        // middle residual block.
        let mid = config.residual_blocks.div_ceil(2);
        let taps = match &config.scale_cuts {
            Some(c) => c.clone(),
            None => vec![0, 1, 2, 3, 3 + mid],
        };
        let channel_at = |stage_count: usize| -> usize {
            match stage_count {
                0 => config.in_channels,
                1 => w,
                2 => 2 * w,
                n if n <= 3 + config.residual_blocks => 4 * w,
                n if n == 4 + config.residual_blocks => 2 * w,
                n if n == 5 + config.residual_blocks => w,
                _ => config.out_channels,
            }
        };
        let scale_channels = taps.iter().map(|&t| channel_at(t)).collect();
        Self::from_parts(stages, taps, config.in_channels, scale_channels, 4)
    }

    /// Assembles a generator from explicit stages and tap positions. Used by
    /// tests to build degenerate networks (including the empty identity one).
    pub fn from_parts(
        stages: Vec<Stage>,
        taps: Vec<usize>,
        in_channels: usize,
        scale_channels: Vec<usize>,
        spatial_multiple: usize,
    ) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Argument("at least one tapped scale required".into()));
        }
        if taps[0] != 0 {
            return Err(Error::Argument(
                "first slice must be the identity: tap positions start at 0".into(),
            ));
        }
        if taps.windows(2).any(|p| p[0] > p[1]) {
            return Err(Error::Argument("tap positions must be non-decreasing".into()));
        }
        if *taps.last().unwrap() > stages.len() {
            return Err(Error::Argument(format!(
                "tap position {} exceeds stage count {}",
                taps.last().unwrap(),
                stages.len()
            )));
        }
        if scale_channels.len() != taps.len() {
            return Err(Error::Argument(
                "scale channel list must match tap count".into(),
            ));
        }
        let mut cuts = Vec::with_capacity(taps.len() + 2);
        cuts.push(0);
        cuts.extend_from_slice(&taps);
        cuts.push(stages.len());
        Ok(Self {
            stages,
            cuts,
            scale_channels,
            spatial_multiple: spatial_multiple.max(1),
            in_channels,
        })
    }

    /// Identity generator with `k` tapped scales, all of them the input.
    pub fn identity(k: usize, channels: usize) -> Result<Self> {
        Self::from_parts(Vec::new(), vec![0; k], channels, vec![channels; k], 1)
    }

    /// Number of tapped scales K. Slices number K+1.
    pub fn num_scales(&self) -> usize {
        self.cuts.len() - 2
    }

    pub fn num_slices(&self) -> usize {
        self.num_scales() + 1
    }

    /// Channels of the scale-k feature map (1-based k).
    pub fn scale_channel_count(&self, k: usize) -> Result<usize> {
        if k == 0 || k > self.num_scales() {
            return Err(Error::Index(format!(
                "scale {k} out of range 1..={}",
                self.num_scales()
            )));
        }
        Ok(self.scale_channels[k - 1])
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.in_channels {
            return Err(Error::Shape {
                context: "generator input channels".into(),
                expected: format!("{}", self.in_channels),
                got: format!("{c}"),
            });
        }
        let m = self.spatial_multiple;
        if h % m != 0 || w % m != 0 {
            return Err(Error::Shape {
                context: "generator input spatial size".into(),
                expected: format!("multiple of {m}"),
                got: format!("{h}x{w}"),
            });
        }
        Ok(())
    }

    fn slice_of_stage(&self, stage: usize) -> usize {
        // Attribute a stage to the first slice whose range contains it.
        for s in 1..self.cuts.len() {
            if stage < self.cuts[s] {
                return s;
            }
        }
        self.cuts.len() - 1
    }

    fn apply_stages(&self, from: usize, to: usize, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for idx in from..to {
            h = self.stages[idx].forward(&h).map_err(|e| match e {
                Error::Shape { context, expected, got } => Error::Shape {
                    context: format!("slice {} ({context})", self.slice_of_stage(idx)),
                    expected,
                    got,
                },
                other => other,
            })?;
        }
        Ok(h)
    }

    /// Applies slices i+1 through j, the composite between scales i and j.
    /// Requires 1 <= i < j <= K+1.
    pub fn slice_forward(&self, i: usize, j: usize, x: &Tensor) -> Result<Tensor> {
        let n = self.num_slices();
        if i == 0 || i >= j || j > n {
            return Err(Error::Argument(format!(
                "slice_forward needs 1 <= i < j <= {n}, got i={i} j={j}"
            )));
        }
        self.apply_stages(self.cuts[i], self.cuts[j], x)
    }

    /// Feature map of scale k (1-based): everything before the k-th tap.
    pub fn encode_to_scale(&self, k: usize, x: &Tensor) -> Result<Tensor> {
        if k == 0 || k > self.num_scales() {
            return Err(Error::Index(format!(
                "scale {k} out of range 1..={}",
                self.num_scales()
            )));
        }
        if k == 1 {
            // Scale 1 is the raw input; still validate it.
            self.check_input(x)?;
            return Ok(x.clone());
        }
        self.check_input(x)?;
        self.apply_stages(0, self.cuts[k], x)
    }

    /// Full translation.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        self.apply_stages(0, self.cuts[self.cuts.len() - 1], x)
    }

    /// One pass producing every tapped scale plus the final output. Reuses
    /// intermediate activations instead of re-running prefixes per scale.
    pub fn forward_with_scales(&self, x: &Tensor) -> Result<(Vec<Tensor>, Tensor)> {
        self.check_input(x)?;
        let k = self.num_scales();
        let mut scales = Vec::with_capacity(k);
        let mut h = x.clone();
        let mut pos = 0;
        for scale in 1..=k {
            let target = self.cuts[scale];
            h = self.apply_stages(pos, target, &h)?;
            pos = target;
            scales.push(h.clone());
        }
        let out = self.apply_stages(pos, self.cuts[self.cuts.len() - 1], &h)?;
        Ok((scales, out))
    }

    /// All tapped scale feature maps in one pass.
    pub fn encode_scales(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let k = self.num_scales();
        let mut scales = Vec::with_capacity(k);
        let mut h = x.clone();
        let mut pos = 0;
        for scale in 1..=k {
            let target = self.cuts[scale];
            h = self.apply_stages(pos, target, &h)?;
            pos = target;
            scales.push(h.clone());
        }
        Ok(scales)
    }
}

impl Trainable for GeneratorSlices {
    fn params(&self) -> ParamList {
        let mut p = ParamList::new();
        for (idx, stage) in self.stages.iter().enumerate() {
            p.extend_prefixed(&format!("stage{idx}"), stage.params());
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{scalar, tensor_from_vec};

    fn toy_gen() -> GeneratorSlices {
        let mut rng = SeedStream::new(42);
        GeneratorSlices::new(
            &mut rng,
            &GeneratorConfig {
                base_width: 4,
                residual_blocks: 2,
                ..GeneratorConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn output_shape_matches_input() {
        let g = toy_gen();
        let x = tensor_from_vec(vec![0.1; 3 * 16 * 16], &[1, 3, 16, 16]).unwrap();
        let y = g.forward(&x).unwrap();
        assert_eq!(y.dims4().unwrap(), (1, 3, 16, 16));
    }

    #[test]
    fn scale_shapes_follow_downsampling() {
        let g = toy_gen();
        let x = tensor_from_vec(vec![0.1; 3 * 16 * 16], &[1, 3, 16, 16]).unwrap();
        let scales = g.encode_scales(&x).unwrap();
        assert_eq!(scales.len(), 5);
        assert_eq!(scales[0].dims4().unwrap(), (1, 3, 16, 16));
        assert_eq!(scales[1].dims4().unwrap(), (1, 4, 16, 16));
        assert_eq!(scales[2].dims4().unwrap(), (1, 8, 8, 8));
        assert_eq!(scales[3].dims4().unwrap(), (1, 16, 4, 4));
        assert_eq!(scales[4].dims4().unwrap(), (1, 16, 4, 4));
    }

    #[test]
    fn slice_composition_equals_full_forward() {
        let g = toy_gen();
        let x = tensor_from_vec(vec![0.2; 3 * 16 * 16], &[1, 3, 16, 16]).unwrap();
        let k = g.num_scales();
        for mid in 1..=k {
            let z = g.encode_to_scale(mid, &x).unwrap();
            let y = g.slice_forward(mid, k + 1, &z).unwrap();
            let full = g.forward(&x).unwrap();
            let diff = (&y - &full).unwrap().abs().unwrap().max_all().unwrap();
            assert!(scalar(&diff).unwrap() < 1e-10, "mid={mid}");
        }
    }

    #[test]
    fn first_slice_is_identity() {
        let g = toy_gen();
        let x = tensor_from_vec(vec![0.3; 3 * 16 * 16], &[1, 3, 16, 16]).unwrap();
        let z1 = g.encode_to_scale(1, &x).unwrap();
        let diff = (&z1 - &x).unwrap().abs().unwrap().max_all().unwrap();
        assert!(scalar(&diff).unwrap() < 1e-12);
        // slice_forward(1, 2) therefore equals the first stage alone.
        let z2 = g.slice_forward(1, 2, &x).unwrap();
        let direct = g.encode_to_scale(2, &x).unwrap();
        let diff = (&z2 - &direct).unwrap().abs().unwrap().max_all().unwrap();
        assert!(scalar(&diff).unwrap() < 1e-12);
    }

    #[test]
    fn invalid_slice_range_rejected() {
        let g = toy_gen();
        let x = tensor_from_vec(vec![0.0; 3 * 16 * 16], &[1, 3, 16, 16]).unwrap();
        assert!(g.slice_forward(3, 3, &x).is_err());
        assert!(g.slice_forward(4, 2, &x).is_err());
        assert!(g.slice_forward(0, 2, &x).is_err());
        assert!(g.slice_forward(1, 99, &x).is_err());
    }

    #[test]
    fn misshapen_input_names_offending_slice() {
        let g = toy_gen();
        // Scale 3 features have 8 channels; feeding them into slice 2 fails.
        let bad = tensor_from_vec(vec![0.0; 8 * 8 * 8], &[1, 8, 8, 8]).unwrap();
        let err = g.slice_forward(1, 3, &bad).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("slice 2"), "message was: {msg}");
    }

    #[test]
    fn odd_input_size_rejected() {
        let g = toy_gen();
        let x = tensor_from_vec(vec![0.0; 3 * 15 * 15], &[1, 3, 15, 15]).unwrap();
        assert!(g.forward(&x).is_err());
    }

    #[test]
    fn identity_generator_passes_through() {
        let g = GeneratorSlices::identity(5, 1).unwrap();
        let x = tensor_from_vec(vec![1.0, -0.5, 0.25, 0.0], &[1, 1, 2, 2]).unwrap();
        let y = g.forward(&x).unwrap();
        let diff = (&y - &x).unwrap().abs().unwrap().max_all().unwrap();
        assert!(scalar(&diff).unwrap() < 1e-12);
        for k in 1..=5 {
            let z = g.encode_to_scale(k, &x).unwrap();
            let diff = (&z - &x).unwrap().abs().unwrap().max_all().unwrap();
            assert!(scalar(&diff).unwrap() < 1e-12);
        }
    }

    #[test]
    fn forward_with_scales_matches_separate_calls() {
        let g = toy_gen();
        let x = tensor_from_vec(vec![0.15; 3 * 16 * 16], &[1, 3, 16, 16]).unwrap();
        let (scales, out) = g.forward_with_scales(&x).unwrap();
        let full = g.forward(&x).unwrap();
        let diff = (&out - &full).unwrap().abs().unwrap().max_all().unwrap();
        assert!(scalar(&diff).unwrap() < 1e-10);
        for (k, s) in scales.iter().enumerate() {
            let direct = g.encode_to_scale(k + 1, &x).unwrap();
            let diff = (s - &direct).unwrap().abs().unwrap().max_all().unwrap();
            assert!(scalar(&diff).unwrap() < 1e-10, "scale {}", k + 1);
        }
    }
}
