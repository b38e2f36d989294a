//! Training objectives: adversarial, patch-contrastive, perturbation
//! robustness, and the alternative constraints used for comparison runs.

pub mod ablation;
pub mod gan;
pub mod nce;
pub mod perturb;
pub mod robust;

pub use ablation::{
    batch_mean_image, cut_patches, feature_consistency_loss_e5, half_l1_distance, HalfStats,
    histogram_l1_distance, lipschitz_penalty_e6, sample_patch_pairs, self_distance_loss_e1,
    self_distance_stats, smoothness_loss_e2, soft_gray_histogram,
};
pub use gan::{gan_loss_d, gan_loss_g, lsgan_d_from_scores, lsgan_g_from_scores};
pub use nce::{patch_nce_loss, NceConfig};
pub use perturb::{sample_perturbation, Perturbation, MIN_MAGNITUDE};
pub use robust::{robustness_loss, robustness_scale_loss, RobustConfig, RobustVariant};
