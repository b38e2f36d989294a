//! Alternative semantic constraints used for comparison runs.
//!
//! Four of the six live here: normalized self-distance (E1), histogram
//! smoothness over patch pairs (E2), cross-domain feature consistency (E5),
//! and a Lipschitz penalty on the discriminator (E6). The remaining two reuse
//! the robustness loss directly: feature-space comparison without heads (E3)
//! and the translate-first anchor variant (E4).

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{sample_patch_indices, GeneratorSlices, HeadSet, PatchProjector, ScoreModel};
use crate::rng::SeedStream;

/// Precomputed dataset statistics of the half-image L1 self-distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfStats {
    pub mu: f64,
    pub sigma: f64,
}

/// Sum of absolute differences between the left and right half of each
/// image -> (N,). Odd widths drop the middle column.
pub fn half_l1_distance(x: &Tensor) -> Result<Tensor> {
    let (_, _, _, w) = x.dims4()?;
    let half = w / 2;
    if half == 0 {
        return Err(Error::Argument(
            "image too narrow to split into halves".into(),
        ));
    }
    let left = x.narrow(3, 0, half)?;
    let right = x.narrow(3, w - half, half)?;
    let d = (left - right)?.abs()?;
    Ok(d.sum((1, 2, 3))?)
}

/// Population mean and standard deviation of the self-distance over a sample
/// of images (each (N,C,H,W); batches are concatenated).
pub fn self_distance_stats(images: &[&Tensor]) -> Result<HalfStats> {
    let mut values = Vec::new();
    for img in images {
        values.extend(half_l1_distance(img)?.to_vec1::<f64>()?);
    }
    if values.len() < 2 {
        return Err(Error::Argument(
            "need at least two images to estimate self-distance statistics".into(),
        ));
    }
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    Ok(HalfStats {
        mu,
        sigma: var.sqrt(),
    })
}

/// Difference of standardized self-distances between source and translation,
/// averaged over the batch. With `absolute` each sample contributes its
/// magnitude instead of its signed value.
pub fn self_distance_loss_e1(
    x: &Tensor,
    gx: &Tensor,
    stats_x: HalfStats,
    stats_y: HalfStats,
    absolute: bool,
) -> Result<Tensor> {
    for (name, s) in [("source", stats_x), ("target", stats_y)] {
        if !(s.sigma.is_finite() && s.sigma > 0.0) {
            return Err(Error::Argument(format!(
                "{name} self-distance sigma must be positive, got {}",
                s.sigma
            )));
        }
    }
    let dx = ((half_l1_distance(x)? - stats_x.mu)? / stats_x.sigma)?;
    let dy = ((half_l1_distance(gx)? - stats_y.mu)? / stats_y.sigma)?;
    let per_sample = (dx - dy)?;
    let per_sample = if absolute { per_sample.abs()? } else { per_sample };
    Ok(per_sample.mean_all()?)
}

/// Soft grayscale histogram of each patch -> (N, bins). Pixels are averaged
/// over channels, mapped from [-1,1] to [0,1], and spread linearly over the
/// two nearest bin centers; mass outside the outermost centers is clamped in.
pub fn soft_gray_histogram(patch: &Tensor, bins: usize) -> Result<Tensor> {
    if bins < 2 {
        return Err(Error::Argument("need at least two histogram bins".into()));
    }
    let (n, _, h, w) = patch.dims4()?;
    let gray = patch.mean(1)?.reshape((n, h * w))?; // (N, P) in [-1, 1]
    let unit = ((gray + 1.0)? * 0.5)?.clamp(0.0, 1.0)?;
    let t = ((unit * bins as f64)? - 0.5)?.clamp(0.0, (bins - 1) as f64)?; // (N, P)
    let centers = Tensor::from_vec(
        (0..bins).map(|b| b as f64).collect::<Vec<f64>>(),
        (1, 1, bins),
        patch.device(),
    )?;
    let spread = t
        .unsqueeze(2)?
        .broadcast_sub(&centers)?
        .abs()?
        .affine(-1.0, 1.0)?
        .relu()?; // (N, P, bins), each pixel row sums to 1
    Ok((spread.sum(1)? / (h * w) as f64)?)
}

/// L1 distance between soft histograms of two aligned patch batches -> (N,).
pub fn histogram_l1_distance(a: &Tensor, b: &Tensor, bins: usize) -> Result<Tensor> {
    let ha = soft_gray_histogram(a, bins)?;
    let hb = soft_gray_histogram(b, bins)?;
    Ok((ha - hb)?.abs()?.sum(1)?)
}

/// Smoothness constraint: pairwise histogram distances among source patches
/// should survive translation. All four tensors are (P, C, ph, pw) with row p
/// of `gx1`/`gx2` cut from the translation at the same corners as `x1`/`x2`.
pub fn smoothness_loss_e2(
    x1: &Tensor,
    x2: &Tensor,
    gx1: &Tensor,
    gx2: &Tensor,
    bins: usize,
) -> Result<Tensor> {
    let p = x1.dims4()?.0;
    if x2.dims4()?.0 != p || gx1.dims4()?.0 != p || gx2.dims4()?.0 != p {
        return Err(Error::Shape {
            context: "smoothness patch pair batches".into(),
            expected: format!("{p} pairs"),
            got: "mismatched batch sizes".into(),
        });
    }
    let d_src = histogram_l1_distance(x1, x2, bins)?;
    let d_out = histogram_l1_distance(gx1, gx2, bins)?;
    Ok((d_src - d_out)?.abs()?.mean_all()?)
}

/// Uniformly sampled top-left corners (with replacement) for square patches.
pub fn sample_patch_pairs(
    rng: &mut SeedStream,
    h: usize,
    w: usize,
    patch: usize,
    n_patches: usize,
) -> Result<Vec<(usize, usize)>> {
    if patch == 0 || patch > h || patch > w {
        return Err(Error::Argument(format!(
            "patch size {patch} does not fit a {h}x{w} image"
        )));
    }
    if n_patches == 0 || n_patches % 2 != 0 {
        return Err(Error::Argument(format!(
            "patch count must be positive and even to form pairs, got {n_patches}"
        )));
    }
    let mut corners = Vec::with_capacity(n_patches);
    for _ in 0..n_patches {
        let top = rng.below(h - patch + 1);
        let left = rng.below(w - patch + 1);
        corners.push((top, left));
    }
    Ok(corners)
}

/// Cuts square patches at the given corners -> (P, C, patch, patch).
pub fn cut_patches(img: &Tensor, corners: &[(usize, usize)], patch: usize) -> Result<Tensor> {
    let (n, _, h, w) = img.dims4()?;
    if n != 1 {
        return Err(Error::Argument(
            "patch cutting expects a single-image batch".into(),
        ));
    }
    let mut slices = Vec::with_capacity(corners.len());
    for &(top, left) in corners {
        if top + patch > h || left + patch > w {
            return Err(Error::Index(format!(
                "patch at ({top},{left}) exceeds {h}x{w} image"
            )));
        }
        slices.push(img.narrow(2, top, patch)?.narrow(3, left, patch)?);
    }
    let refs: Vec<&Tensor> = slices.iter().collect();
    Ok(Tensor::cat(&refs, 0)?)
}

/// Cross-domain feature consistency: distance between projected features of
/// the source and its translation at shared coordinates, averaged per scale
/// and over scales.
pub fn feature_consistency_loss_e5(
    g: &GeneratorSlices,
    heads: &HeadSet,
    x: &Tensor,
    gx: &Tensor,
    scales: &[usize],
    patches_per_scale: usize,
    train_heads: bool,
    rng: &mut SeedStream,
) -> Result<Tensor> {
    if scales.is_empty() {
        return Err(Error::Argument("at least one scale required".into()));
    }
    if patches_per_scale == 0 {
        return Err(Error::Argument("patches_per_scale must be positive".into()));
    }
    let zs_x = g.encode_scales(x)?;
    let zs_gx = g.encode_scales(gx)?;
    let detach = !train_heads;
    let mut total: Option<Tensor> = None;
    for &k in scales {
        if k == 0 || k > zs_x.len() {
            return Err(Error::Index(format!(
                "scale {k} out of range 1..={}",
                zs_x.len()
            )));
        }
        let head = heads.head(k)?;
        let (_, _, h, w) = zs_x[k - 1].dims4()?;
        let count = patches_per_scale.min(h * w);
        let indices = sample_patch_indices(rng, h, w, count)?;
        let ex = head.project(&zs_x[k - 1], &indices, detach)?;
        let ey = head.project(&zs_gx[k - 1], &indices, detach)?;
        let last = ex.rank() - 1;
        let dist = ((ex - ey)?.sqr()?.sum_keepdim(last)? + 1e-24)?
            .sqrt()?
            .mean_all()?;
        total = Some(match total {
            None => dist,
            Some(t) => (t + dist)?,
        });
    }
    Ok((total.expect("scales checked non-empty") / scales.len() as f64)?)
}

/// Collapses a batch to its mean image, (N,C,H,W) -> (1,C,H,W).
pub fn batch_mean_image(x: &Tensor) -> Result<Tensor> {
    Ok(x.mean_keepdim(0)?)
}

/// Gradient-norm penalty: per-sample Euclidean norm of the input gradient of
/// the mean score, averaged over each batch, summed over the two evaluation
/// points (real side and translated side).
pub fn lipschitz_penalty_e6(
    model: &dyn ScoreModel,
    real_point: &Tensor,
    fake_point: &Tensor,
) -> Result<Tensor> {
    let term = |point: &Tensor| -> Result<Tensor> {
        let grad = model.mean_score_input_grad(point)?;
        let (n, c, h, w) = grad.dims4()?;
        let per_sample = (grad.reshape((n, c * h * w))?.sqr()?.sum(1)? + 1e-24)?.sqrt()?;
        Ok(per_sample.mean_all()?)
    };
    Ok((term(real_point)? + term(fake_point)?)?)
}
