//! Class and intensity histograms used by the subsampler.

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gray intensities bucket in groups of five; the last bucket absorbs the
/// leftover 250..=255 range so the vector stays at 51 entries.
pub const GRAY_BUCKETS: usize = 51;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramVector {
    pub values: Vec<f64>,
    pub source_id: String,
    pub normalized: bool,
}

impl HistogramVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Fraction of labeled pixels per class. Pixels equal to `ignore` are
/// skipped; any other value >= n_classes is an error.
pub fn class_histogram(
    mask: &GrayImage,
    n_classes: usize,
    ignore: Option<u8>,
    source_id: &str,
) -> Result<HistogramVector> {
    if n_classes == 0 {
        return Err(Error::Argument("class count must be positive".into()));
    }
    let mut counts = vec![0u64; n_classes];
    let mut labeled = 0u64;
    for p in mask.pixels() {
        let v = p.0[0];
        if Some(v) == ignore {
            continue;
        }
        let c = v as usize;
        if c >= n_classes {
            return Err(Error::Argument(format!(
                "mask value {v} outside the {n_classes}-class range in {source_id}"
            )));
        }
        counts[c] += 1;
        labeled += 1;
    }
    if labeled == 0 {
        return Err(Error::UndefinedMetric(format!(
            "mask {source_id} has no labeled pixels"
        )));
    }
    Ok(HistogramVector {
        values: counts.iter().map(|&c| c as f64 / labeled as f64).collect(),
        source_id: source_id.to_string(),
        normalized: true,
    })
}

fn luminance(r: u8, g: u8, b: u8) -> u8 {
    // Integer BT.601 weighting; deterministic across platforms.
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000).min(255) as u8
}

/// Intensity histogram over 51 five-wide buckets (the last one six wide).
pub fn gray_histogram(image: &RgbImage, normalized: bool, source_id: &str) -> HistogramVector {
    let mut counts = vec![0u64; GRAY_BUCKETS];
    for p in image.pixels() {
        let l = luminance(p.0[0], p.0[1], p.0[2]);
        let bucket = ((l / 5) as usize).min(GRAY_BUCKETS - 1);
        counts[bucket] += 1;
    }
    let total = image.width() as f64 * image.height() as f64;
    let values = if normalized {
        counts.iter().map(|&c| c as f64 / total).collect()
    } else {
        counts.iter().map(|&c| c as f64).collect()
    };
    HistogramVector {
        values,
        source_id: source_id.to_string(),
        normalized,
    }
}
