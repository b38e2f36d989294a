//! Spatial coordinate sampling and feature gathering.

use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::nn::DEVICE;
use crate::rng::SeedStream;

/// Draws `count` distinct flattened coordinates from an `h` x `w` grid.
/// Asking for every position yields a permutation of the whole grid.
pub fn sample_patch_indices(
    rng: &mut SeedStream,
    h: usize,
    w: usize,
    count: usize,
) -> Result<Vec<usize>> {
    let total = h * w;
    if count == 0 {
        return Err(Error::Argument("patch count must be positive".into()));
    }
    if count > total {
        return Err(Error::Argument(format!(
            "cannot sample {count} distinct coordinates from a {h}x{w} grid"
        )));
    }
    Ok(rng.sample_distinct(total, count))
}

/// Gathers per-coordinate channel vectors: fmap (N,C,H,W) + flat indices
/// over H*W -> (N, P, C). Gradients flow back into the feature map.
pub fn gather_coords(fmap: &Tensor, indices: &[usize]) -> Result<Tensor> {
    let (n, c, h, w) = fmap.dims4()?;
    let total = h * w;
    if indices.is_empty() {
        return Err(Error::Argument("empty coordinate list".into()));
    }
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
    let flat = fmap.reshape((n, c, total))?;
    let picked = flat.index_select(&idx, 2)?; // (N, C, P)
    Ok(picked.transpose(1, 2)?.contiguous()?)
}

/// Embeddings of sampled coordinates at one scale. `embeddings` is (N, P, D)
/// and row p corresponds to `indices[p]` for every batch entry.
pub struct PatchEmbeddingSet {
    pub scale: usize,
    pub indices: Vec<usize>,
    pub embeddings: Tensor,
}

impl PatchEmbeddingSet {
    pub fn new(scale: usize, indices: Vec<usize>, embeddings: Tensor) -> Result<Self> {
        let (_, p, _) = embeddings.dims3()?;
        if p != indices.len() {
            return Err(Error::Shape {
                context: "patch embedding count".into(),
                expected: format!("{}", indices.len()),
                got: format!("{p}"),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for &i in &indices {
            if !seen.insert(i) {
                return Err(Error::Invariant(format!(
                    "duplicate coordinate {i} in patch embedding set"
                )));
            }
        }
        Ok(Self {
            scale,
            indices,
            embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor_from_vec;

    #[test]
    fn full_sample_is_permutation() {
        let mut rng = SeedStream::new(5);
        let mut idx = sample_patch_indices(&mut rng, 3, 4, 12).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn oversampling_rejected() {
        let mut rng = SeedStream::new(5);
        assert!(sample_patch_indices(&mut rng, 2, 2, 5).is_err());
    }

    #[test]
    fn gather_pulls_expected_vectors() {
        // 1x2x2x2 map: channel 0 = [[0,1],[2,3]], channel 1 = [[10,11],[12,13]].
        let fmap = tensor_from_vec(
            vec![0.0, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 13.0],
            &[1, 2, 2, 2],
        )
        .unwrap();
        let got = gather_coords(&fmap, &[3, 0]).unwrap();
        assert_eq!(got.dims3().unwrap(), (1, 2, 2));
        let v = got.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert_eq!(v, vec![3.0, 13.0, 0.0, 10.0]);
    }

    #[test]
    fn gather_rejects_out_of_range() {
        let fmap = tensor_from_vec(vec![0.0; 4], &[1, 1, 2, 2]).unwrap();
        assert!(gather_coords(&fmap, &[4]).is_err());
    }

    #[test]
    fn duplicate_indices_rejected() {
        let emb = tensor_from_vec(vec![0.0; 4], &[1, 2, 2]).unwrap();
        assert!(PatchEmbeddingSet::new(1, vec![3, 3], emb).is_err());
    }

    #[test]
    fn single_draws_cover_the_grid_uniformly() {
        // 10^4 draws of one coordinate from an 8x8 grid: each cell expects
        // 156.25 hits with binomial sigma ~12.4; demand every cell within 3
        // sigma of the expectation.
        let mut rng = SeedStream::new(88);
        let n = 10_000usize;
        let cells = 64usize;
        let mut counts = vec![0u32; cells];
        for _ in 0..n {
            let idx = sample_patch_indices(&mut rng, 8, 8, 1).unwrap()[0];
            counts[idx] += 1;
        }
        let p = 1.0 / cells as f64;
        let expect = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for (cell, &c) in counts.iter().enumerate() {
            assert!(
                (f64::from(c) - expect).abs() <= 3.0 * sigma,
                "cell {cell}: {c} hits vs expectation {expect:.1} (sigma {sigma:.1})"
            );
        }
    }
}
