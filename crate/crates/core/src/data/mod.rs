//! Dataset machinery: synthetic two-domain generation with controllable
//! semantics statistics, histogram extraction, the K-means subsampler, image
//! file IO, and the training-time image pool.

pub mod histogram;
pub mod io;
pub mod kmeans;
pub mod pool;
pub mod split;
pub mod synth;

pub use histogram::{class_histogram, gray_histogram, HistogramVector, GRAY_BUCKETS};
pub use io::{
    image_to_tensor, load_dataset, load_mask, load_rgb, mask_to_classes, save_mask, save_rgb,
    tensor_to_image, DatasetManifest, DomainData, DomainRecord, LoadedDataset,
};
pub use kmeans::{kmeans_two, KMeansResult};
pub use pool::ImagePool;
pub use split::{apply_mixing, build_split, SplitPlan};
pub use synth::{
    render_image, synthesize_domain, ShapeFamily, StyleTransform, SyntheticDomainSpec,
    BACKGROUND_LABEL,
};
