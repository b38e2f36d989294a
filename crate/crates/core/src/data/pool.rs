//! History pool of generated images for discriminator updates.

use candle_core::Tensor;

use crate::error::Result;
use crate::rng::SeedStream;

/// Fixed-capacity buffer of past fakes. Per queried image: while below
/// capacity, store a detached copy and hand the fresh image back; once full,
/// a fair coin either returns the fresh image untouched or swaps it against a
/// uniformly chosen stored one (coin first, slot second; the draw order is
/// part of the determinism contract).
pub struct ImagePool {
    capacity: usize,
    images: Vec<Tensor>,
    rng: SeedStream,
}

impl ImagePool {
    pub fn new(capacity: usize, rng: SeedStream) -> Self {
        Self {
            capacity,
            images: Vec::with_capacity(capacity),
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Queries the pool with a batch of fresh fakes, one decision per sample.
    /// Returned tensors are detached; nothing in the pool stays connected to
    /// the caller's graph.
    pub fn query(&mut self, fresh: &Tensor) -> Result<Tensor> {
        let n = fresh.dims4()?.0;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let img = fresh.narrow(0, i, 1)?.detach();
            if self.capacity == 0 {
                out.push(img);
            } else if self.images.len() < self.capacity {
                self.images.push(img.clone());
                out.push(img);
            } else if self.rng.coin() {
                out.push(img);
            } else {
                let slot = self.rng.below(self.capacity);
                let stored = self.images[slot].clone();
                self.images[slot] = img;
                out.push(stored);
            }
        }
        let refs: Vec<&Tensor> = out.iter().collect();
        Ok(Tensor::cat(&refs, 0)?)
    }

    /// Checkpoint access to the stored images.
    pub fn contents(&self) -> &[Tensor] {
        &self.images
    }

    pub fn restore(capacity: usize, images: Vec<Tensor>, rng: SeedStream) -> Self {
        Self {
            capacity,
            images,
            rng,
        }
    }

    pub fn rng(&self) -> &SeedStream {
        &self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{scalar, tensor_from_vec};

    fn img(v: f64) -> Tensor {
        tensor_from_vec(vec![v; 4], &[1, 1, 2, 2]).unwrap()
    }

    fn value(t: &Tensor) -> f64 {
        scalar(&t.mean_all().unwrap()).unwrap()
    }

    #[test]
    fn zero_capacity_always_returns_fresh() {
        let mut pool = ImagePool::new(0, SeedStream::new(1));
        for i in 0..20 {
            let out = pool.query(&img(i as f64)).unwrap();
            assert_eq!(value(&out), i as f64);
        }
        assert!(pool.is_empty());
    }

    #[test]
    fn under_capacity_returns_inputs() {
        let mut pool = ImagePool::new(50, SeedStream::new(2));
        for i in 0..50 {
            let out = pool.query(&img(i as f64)).unwrap();
            assert_eq!(value(&out), i as f64);
        }
        assert_eq!(pool.len(), 50);
    }

    #[test]
    fn capacity_never_exceeded() {
        let mut pool = ImagePool::new(5, SeedStream::new(3));
        for i in 0..100 {
            pool.query(&img(i as f64)).unwrap();
            assert!(pool.len() <= 5);
        }
        assert_eq!(pool.len(), 5);
    }

    #[test]
    fn full_pool_swap_frequency_near_half() {
        let mut pool = ImagePool::new(10, SeedStream::new(4));
        for i in 0..10 {
            pool.query(&img(-(i as f64) - 1.0)).unwrap();
        }
        let n = 10_000;
        let mut fresh_returns = 0;
        for i in 0..n {
            let out = pool.query(&img(i as f64)).unwrap();
            if value(&out) == i as f64 {
                fresh_returns += 1;
            }
        }
        // Binomial(n, 0.5): 3 sigma is about 150.
        let dev = (fresh_returns as f64 - n as f64 / 2.0).abs();
        assert!(dev < 150.0, "fresh returns {fresh_returns}");
    }

    #[test]
    fn returned_images_are_detached() {
        let mut pool = ImagePool::new(2, SeedStream::new(5));
        let v = candle_core::Var::from_tensor(&img(1.0)).unwrap();
        let out = pool.query(v.as_tensor()).unwrap();
        let loss = out.sqr().unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        assert!(grads.get(v.as_tensor()).is_none());
    }

    #[test]
    fn deterministic_given_seed_and_inputs() {
        let run = |seed: u64| -> Vec<f64> {
            let mut pool = ImagePool::new(3, SeedStream::new(seed));
            (0..30)
                .map(|i| value(&pool.query(&img(i as f64)).unwrap()))
                .collect()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }
}
