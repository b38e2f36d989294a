//! Metrics and reporting: segmentation scores from confusion matrices,
//! pixel-space distances, the synthetic semantic-flip oracle, and JSON
//! report emission.

pub mod confusion;
pub mod flip;
pub mod metrics;
pub mod report;

pub use confusion::{segmentation_metrics, ConfusionMatrix, SegmentationMetrics};
pub use flip::{classify_translated, flip_rate, nearest_class};
pub use metrics::{acc_delta, dist_l2, AccAveraging};
pub use report::{
    core_versions, emit_report, evaluate_translations, ideal_translation, read_report, EvalConfig,
    MetricsReport,
};
