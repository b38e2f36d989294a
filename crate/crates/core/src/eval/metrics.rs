//! Pixel-space similarity metrics on 8-bit images.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccAveraging {
    /// One fraction over all pixels of all pairs (default).
    PooledPixels,
    /// Per-image fractions averaged with equal image weight.
    PerImage,
}

fn check_pair(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::Shape {
            context: "metric image pair".into(),
            expected: format!("{:?}", a.dimensions()),
            got: format!("{:?}", b.dimensions()),
        });
    }
    Ok(())
}

fn max_channel_diff(a: &image::Rgb<u8>, b: &image::Rgb<u8>) -> u8 {
    (0..3)
        .map(|c| (a.0[c] as i16 - b.0[c] as i16).unsigned_abs() as u8)
        .max()
        .unwrap()
}

/// Fraction of pixels whose max-channel absolute difference is strictly
/// below `delta`.
pub fn acc_delta(
    pairs: &[(&RgbImage, &RgbImage)],
    delta: f64,
    averaging: AccAveraging,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("acc_delta over zero images".into()));
    }
    if delta <= 0.0 || !delta.is_finite() {
        return Err(Error::Argument(format!("delta must be positive, got {delta}")));
    }
    let mut pooled_hits = 0u64;
    let mut pooled_total = 0u64;
    let mut per_image = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        check_pair(a, b)?;
        let mut hits = 0u64;
        let mut total = 0u64;
        for (pa, pb) in a.pixels().zip(b.pixels()) {
            total += 1;
            if (max_channel_diff(pa, pb) as f64) < delta {
                hits += 1;
            }
        }
        if total == 0 {
            return Err(Error::UndefinedMetric("acc_delta over an empty image".into()));
        }
        pooled_hits += hits;
        pooled_total += total;
        per_image.push(hits as f64 / total as f64);
    }
    Ok(match averaging {
        AccAveraging::PooledPixels => pooled_hits as f64 / pooled_total as f64,
        AccAveraging::PerImage => per_image.iter().sum::<f64>() / per_image.len() as f64,
    })
}

/// Mean over pixels of the Euclidean norm of the RGB difference, 8-bit scale.
pub fn dist_l2(pairs: &[(&RgbImage, &RgbImage)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("dist_l2 over zero images".into()));
    }
    let mut sum = 0.0;
    let mut total = 0u64;
    for (a, b) in pairs {
        check_pair(a, b)?;
        for (pa, pb) in a.pixels().zip(b.pixels()) {
            let sq: f64 = (0..3)
                .map(|c| {
                    let d = pa.0[c] as f64 - pb.0[c] as f64;
                    d * d
                })
                .sum();
            sum += sq.sqrt();
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric("dist_l2 over empty images".into()));
    }
    Ok(sum / total as f64)
}
