//! Metric aggregation into a serializable report.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::data::synth::{SyntheticDomainSpec, BACKGROUND_LABEL};
use crate::error::{Error, Result};
use crate::eval::confusion::{segmentation_metrics, ConfusionMatrix};
use crate::eval::flip::{classify_translated, flip_rate};
use crate::eval::metrics::{acc_delta, dist_l2, AccAveraging};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub deltas: Vec<f64>,
    pub acc_averaging: AccAveraging,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            deltas: vec![30.0, 50.0],
            acc_averaging: AccAveraging::PooledPixels,
        }
    }
}

/// Full evaluation output; maps keep serialization order stable so identical
/// inputs produce byte-identical JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metrics: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, u64>,
    pub config: serde_json::Value,
    pub versions: BTreeMap<String, String>,
}

pub fn core_versions() -> BTreeMap<String, String> {
    let mut v = BTreeMap::new();
    v.insert("core".into(), env!("CARGO_PKG_VERSION").into());
    v
}

/// Renders the pixel-perfect translation implied by a mask under the target
/// domain's style: every class in its palette color, background included.
pub fn ideal_translation(mask: &GrayImage, target_spec: &SyntheticDomainSpec) -> Result<RgbImage> {
    let palette = target_spec.effective_palette()?;
    let background = target_spec.effective_background()?;
    let mut out = RgbImage::new(mask.width(), mask.height());
    for (x, y, m) in mask.enumerate_pixels() {
        let label = m.0[0];
        let color = if label == BACKGROUND_LABEL {
            background
        } else if (label as usize) < palette.len() {
            palette[label as usize]
        } else {
            return Err(Error::Argument(format!(
                "mask label {label} outside target palette of {}",
                palette.len()
            )));
        };
        out.put_pixel(x, y, image::Rgb(color));
    }
    Ok(out)
}

/// Computes every metric for a batch of translations against ground truth.
pub fn evaluate_translations(
    translated: &[RgbImage],
    truth_masks: &[GrayImage],
    target_spec: &SyntheticDomainSpec,
    eval: &EvalConfig,
    config_snapshot: serde_json::Value,
) -> Result<MetricsReport> {
    if translated.len() != truth_masks.len() {
        return Err(Error::Argument(format!(
            "{} translated images vs {} masks",
            translated.len(),
            truth_masks.len()
        )));
    }
    if translated.is_empty() {
        return Err(Error::UndefinedMetric("evaluation over zero images".into()));
    }

    let ideals: Vec<RgbImage> = truth_masks
        .iter()
        .map(|m| ideal_translation(m, target_spec))
        .collect::<Result<_>>()?;

    let mut cm = ConfusionMatrix::new(target_spec.n_classes())?;
    for (img, mask) in translated.iter().zip(truth_masks) {
        let predicted = classify_translated(img, mask, target_spec)?;
        cm.accumulate_masks(mask, &predicted)?;
    }
    let seg = segmentation_metrics(&cm)?;

    let pairs: Vec<(&RgbImage, &RgbImage)> =
        translated.iter().zip(ideals.iter()).map(|(t, i)| (t, i)).collect();
    let dist = dist_l2(&pairs)?;

    let t_refs: Vec<&RgbImage> = translated.iter().collect();
    let m_refs: Vec<&GrayImage> = truth_masks.iter().collect();
    let flips = flip_rate(&t_refs, &m_refs, target_spec)?;

    let mut metrics = BTreeMap::new();
    metrics.insert("px_acc".into(), seg.pixel_accuracy);
    metrics.insert("cls_acc".into(), seg.class_accuracy);
    metrics.insert("mean_iou".into(), seg.mean_iou);
    metrics.insert("dist_l2".into(), dist);
    metrics.insert("flip_rate".into(), flips);
    for &delta in &eval.deltas {
        metrics.insert(
            format!("acc@{delta}"),
            acc_delta(&pairs, delta, eval.acc_averaging)?,
        );
    }

    let total_pixels: u64 = truth_masks
        .iter()
        .map(|m| (m.width() * m.height()) as u64)
        .sum();
    let mut counts = BTreeMap::new();
    counts.insert("images".into(), translated.len() as u64);
    counts.insert("total_pixels".into(), total_pixels);
    counts.insert("foreground_pixels".into(), cm.total());
    counts.insert("background_pixels".into(), cm.ignored);

    Ok(MetricsReport {
        metrics,
        counts,
        config: config_snapshot,
        versions: core_versions(),
    })
}

pub fn emit_report(report: &MetricsReport, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Argument(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}
