//! Random feature-space perturbations.
//!
//! Each spatial coordinate gets an independent direction drawn uniformly on
//! the channel-space unit sphere (a normalized Gaussian) and a magnitude
//! drawn uniformly from [MIN_MAGNITUDE, t_bound]. Magnitudes are kept around
//! because the robustness loss normalizes by them coordinate by coordinate.

use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::nn::{tensor_from_vec, DEVICE};
use crate::rng::SeedStream;

/// Lower edge of the magnitude range; keeps the normalizer away from zero.
pub const MIN_MAGNITUDE: f64 = 1e-7;

pub struct Perturbation {
    /// The additive perturbation, shaped like the feature map (N,C,H,W).
    pub tensor: Tensor,
    /// Exact sampled magnitude per coordinate, (N,1,H,W).
    pub magnitudes: Tensor,
    pub t_bound: f64,
}

impl Perturbation {
    /// Magnitudes at flattened spatial coordinates -> (N, P).
    pub fn norms_at(&self, indices: &[usize]) -> Result<Tensor> {
        let (n, _, h, w) = self.magnitudes.dims4()?;
        let total = h * w;
        for &i in indices {
            if i >= total {
                return Err(Error::Index(format!(
                    "coordinate {i} out of range for {h}x{w} grid"
                )));
            }
        }
        let idx = Tensor::from_vec(
            indices.iter().map(|&i| i as u32).collect::<Vec<u32>>(),
            indices.len(),
            &DEVICE,
        )?;
        let flat = self.magnitudes.reshape((n, total))?;
        Ok(flat.index_select(&idx, 1)?)
    }
}

/// Draws a fresh perturbation for a feature map of the given shape. The draw
/// order per coordinate (channel Gaussians, then the magnitude) is part of
/// the determinism contract.
pub fn sample_perturbation(
    rng: &mut SeedStream,
    shape: (usize, usize, usize, usize),
    t_bound: f64,
) -> Result<Perturbation> {
    let (n, c, h, w) = shape;
    if n == 0 || c == 0 || h == 0 || w == 0 {
        return Err(Error::Argument(format!(
            "perturbation shape must be non-empty, got {shape:?}"
        )));
    }
    if !(t_bound.is_finite() && t_bound >= MIN_MAGNITUDE) {
        return Err(Error::Argument(format!(
            "perturbation bound must be at least {MIN_MAGNITUDE}, got {t_bound}"
        )));
    }
    let mut data = vec![0.0f64; n * c * h * w];
    let mut mags = vec![0.0f64; n * h * w];
    for ni in 0..n {
        for hi in 0..h {
            for wi in 0..w {
                let dir = rng.normal_vec(c);
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                let m = rng.uniform_in(MIN_MAGNITUDE, t_bound);
                for (ci, dv) in dir.iter().enumerate() {
                    data[((ni * c + ci) * h + hi) * w + wi] = dv / norm * m;
                }
                mags[(ni * h + hi) * w + wi] = m;
            }
        }
    }
    Ok(Perturbation {
        tensor: tensor_from_vec(data, &[n, c, h, w])?,
        magnitudes: tensor_from_vec(mags, &[n, 1, h, w])?,
        t_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::scalar;

    #[test]
    fn norms_equal_sampled_magnitudes() {
        let mut rng = SeedStream::new(77);
        let p = sample_perturbation(&mut rng, (2, 3, 4, 4), 0.1).unwrap();
        let norms = p
            .tensor
            .sqr()
            .unwrap()
            .sum_keepdim(1)
            .unwrap()
            .sqrt()
            .unwrap();
        let diff = (&norms - &p.magnitudes)
            .unwrap()
            .abs()
            .unwrap()
            .max_all()
            .unwrap();
        assert!(scalar(&diff).unwrap() < 1e-12);
        let mags = p.magnitudes.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for m in mags {
            assert!((MIN_MAGNITUDE..=0.1).contains(&m), "magnitude {m}");
        }
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let a = sample_perturbation(&mut SeedStream::new(5), (1, 4, 3, 3), 0.05).unwrap();
        let b = sample_perturbation(&mut SeedStream::new(5), (1, 4, 3, 3), 0.05).unwrap();
        let va = a.tensor.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let vb = b.tensor.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn single_channel_magnitudes_are_absolute_values() {
        let mut rng = SeedStream::new(3);
        let p = sample_perturbation(&mut rng, (1, 1, 5, 5), 0.1).unwrap();
        let t = p.tensor.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let m = p.magnitudes.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for (tv, mv) in t.iter().zip(m.iter()) {
            assert!((tv.abs() - mv).abs() < 1e-15);
        }
    }

    #[test]
    fn magnitude_mean_tracks_uniform_law() {
        let mut rng = SeedStream::new(11);
        let p = sample_perturbation(&mut rng, (1, 2, 64, 64), 0.1).unwrap();
        let m = p.magnitudes.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let mean: f64 = m.iter().sum::<f64>() / m.len() as f64;
        let expected = (MIN_MAGNITUDE + 0.1) / 2.0;
        assert!((mean - expected).abs() < 3e-3, "mean {mean}");
    }

    #[test]
    fn norms_at_picks_requested_coordinates() {
        let mut rng = SeedStream::new(4);
        let p = sample_perturbation(&mut rng, (1, 3, 2, 2), 0.1).unwrap();
        let all = p.magnitudes.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let picked = p.norms_at(&[3, 1]).unwrap();
        let v = picked.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert_eq!(v, vec![all[3], all[1]]);
        assert!(p.norms_at(&[4]).is_err());
    }

    #[test]
    fn invalid_bound_rejected() {
        let mut rng = SeedStream::new(1);
        assert!(sample_perturbation(&mut rng, (1, 1, 1, 1), 1e-8).is_err());
        assert!(sample_perturbation(&mut rng, (1, 1, 1, 1), f64::NAN).is_err());
    }
}
