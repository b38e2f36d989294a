//! Confusion-matrix accumulation and the segmentation metrics derived from it.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::data::synth::BACKGROUND_LABEL;
use crate::error::{Error, Result};

/// Square count matrix; rows are ground truth, columns are prediction.
/// Pixels carrying the ignore label are counted separately, never in `counts`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    counts: Vec<u64>,
    pub ignored: u64,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::Argument("confusion matrix needs at least one class".into()));
        }
        Ok(Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
            ignored: 0,
        })
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<()> {
        if truth >= self.n_classes || pred >= self.n_classes {
            return Err(Error::Index(format!(
                "confusion entry ({truth}, {pred}) outside {0}x{0}",
                self.n_classes
            )));
        }
        self.counts[truth * self.n_classes + pred] += 1;
        Ok(())
    }

    pub fn record_ignored(&mut self) {
        self.ignored += 1;
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n_classes + pred]
    }

    /// Labeled (non-ignored) pixel count.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|i| self.get(i, i)).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes != self.n_classes {
            return Err(Error::Argument(format!(
                "cannot merge {}-class matrix into {}-class",
                other.n_classes, self.n_classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.ignored += other.ignored;
        Ok(())
    }

    /// Accumulates truth/prediction masks; the ignore label in the truth mask
    /// skips the pixel.
    pub fn accumulate_masks(&mut self, truth: &GrayImage, pred: &GrayImage) -> Result<()> {
        if truth.dimensions() != pred.dimensions() {
            return Err(Error::Shape {
                context: "confusion masks".into(),
                expected: format!("{:?}", truth.dimensions()),
                got: format!("{:?}", pred.dimensions()),
            });
        }
        for (t, p) in truth.pixels().zip(pred.pixels()) {
            if t.0[0] == BACKGROUND_LABEL {
                self.record_ignored();
            } else {
                self.record(t.0[0] as usize, p.0[0] as usize)?;
            }
        }
        Ok(())
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        let mut cm = Self::new(n)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Argument("confusion rows must be square".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                cm.counts[i * n + j] = v;
            }
        }
        Ok(cm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationMetrics {
    pub pixel_accuracy: f64,
    pub class_accuracy: f64,
    pub mean_iou: f64,
}

/// pxAcc = trace/total; clsAcc = mean per-class recall over classes present
/// in the truth; mIoU = mean TP/(TP+FP+FN) over classes present in truth or
/// prediction.
pub fn segmentation_metrics(cm: &ConfusionMatrix) -> Result<SegmentationMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric(
            "segmentation metrics over an empty confusion matrix".into(),
        ));
    }
    let n = cm.n_classes;
    let pixel_accuracy = cm.trace() as f64 / total as f64;

    let mut recalls = Vec::new();
    let mut ious = Vec::new();
    for c in 0..n {
        let tp = cm.get(c, c);
        let gt: u64 = (0..n).map(|j| cm.get(c, j)).sum();
        let pred: u64 = (0..n).map(|i| cm.get(i, c)).sum();
        if gt > 0 {
            recalls.push(tp as f64 / gt as f64);
        }
        let union = gt + pred - tp;
        if union > 0 {
            ious.push(tp as f64 / union as f64);
        }
    }
    if recalls.is_empty() {
        return Err(Error::UndefinedMetric("no class has ground-truth pixels".into()));
    }
    Ok(SegmentationMetrics {
        pixel_accuracy,
        class_accuracy: recalls.iter().sum::<f64>() / recalls.len() as f64,
        mean_iou: ious.iter().sum::<f64>() / ious.len() as f64,
    })
}
