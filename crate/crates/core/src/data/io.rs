//! Dataset persistence: PNG images and masks, JSON manifests, and the
//! image <-> tensor conversions used everywhere else.
//!
//! On-disk layout under a dataset root:
//!   manifest.json
//!   <domain>/images/00000.png ...
//!   <domain>/masks/00000.png ...

use std::fs;
use std::path::{Path, PathBuf};

use candle_core::Tensor;
use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::data::synth::{realized_fractions, SyntheticDomainSpec, BACKGROUND_LABEL};
use crate::error::{Error, Result};
use crate::nn::{DEVICE, DTYPE};

pub fn save_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    img.save(path)?;
    Ok(())
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

pub fn save_mask(path: &Path, mask: &GrayImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    mask.save(path)?;
    Ok(())
}

pub fn load_mask(path: &Path) -> Result<GrayImage> {
    Ok(image::open(path)?.to_luma8())
}

/// 8-bit image to a (1, 3, H, W) tensor in [-1, 1]: v / 127.5 - 1.
pub fn image_to_tensor(img: &RgbImage) -> Result<Tensor> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0f64; 3 * h * w];
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            data[c * h * w + (y as usize) * w + x as usize] = p.0[c] as f64 / 127.5 - 1.0;
        }
    }
    Ok(Tensor::from_vec(data, (1, 3, h, w), &DEVICE)?.to_dtype(DTYPE)?)
}

/// Tensor in [-1, 1] back to 8-bit: round((clamp(v) + 1) * 127.5).
/// Accepts (3, H, W) or a batch of one.
pub fn tensor_to_image(t: &Tensor) -> Result<RgbImage> {
    let t = match t.dims() {
        [1, 3, _, _] => t.squeeze(0)?,
        [3, _, _] => t.clone(),
        other => {
            return Err(Error::Shape {
                context: "tensor_to_image".into(),
                expected: "(3, H, W) or (1, 3, H, W)".into(),
                got: format!("{other:?}"),
            })
        }
    };
    let (_, h, w) = t.dims3()?;
    let data = t.flatten_all()?.to_vec1::<f64>()?;
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let mut px = [0u8; 3];
            for c in 0..3 {
                let v = data[c * h * w + y * w + x].clamp(-1.0, 1.0);
                px[c] = ((v + 1.0) * 127.5).round() as u8;
            }
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    Ok(img)
}

/// Row-major class ids from a mask, validating every label.
pub fn mask_to_classes(mask: &GrayImage, n_classes: usize) -> Result<Vec<u8>> {
    mask.pixels()
        .map(|p| {
            let v = p.0[0];
            if v != BACKGROUND_LABEL && v as usize >= n_classes {
                return Err(Error::Argument(format!(
                    "mask label {v} out of range for {n_classes} classes"
                )));
            }
            Ok(v)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainRecord {
    pub name: String,
    pub spec: SyntheticDomainSpec,
    /// Image paths relative to the dataset root; masks mirror the layout.
    pub files: Vec<String>,
    pub realized_fractions: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub image_size: usize,
    pub n_classes: usize,
    pub domains: Vec<DomainRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes one domain's images and masks, returning its manifest record.
pub fn save_domain(
    root: &Path,
    name: &str,
    spec: &SyntheticDomainSpec,
    rendered: &[(RgbImage, GrayImage)],
) -> Result<DomainRecord> {
    let mut files = Vec::with_capacity(rendered.len());
    for (i, (img, mask)) in rendered.iter().enumerate() {
        let rel = format!("{name}/images/{i:05}.png");
        save_rgb(&root.join(&rel), img)?;
        save_mask(&root.join(format!("{name}/masks/{i:05}.png")), mask)?;
        files.push(rel);
    }
    let masks: Vec<&GrayImage> = rendered.iter().map(|(_, m)| m).collect();
    Ok(DomainRecord {
        name: name.to_string(),
        spec: spec.clone(),
        files,
        realized_fractions: realized_fractions(&masks, spec.n_classes()),
    })
}

pub fn write_manifest(root: &Path, manifest: &DatasetManifest) -> Result<()> {
    fs::create_dir_all(root)?;
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(root.join(MANIFEST_FILE), json)?;
    Ok(())
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Argument(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// One domain fully loaded into memory: tensors for training, masks for
/// evaluation.
pub struct DomainData {
    pub name: String,
    pub spec: SyntheticDomainSpec,
    pub images: Vec<Tensor>,
    pub masks: Vec<GrayImage>,
}

pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub domains: Vec<DomainData>,
}

impl LoadedDataset {
    pub fn domain(&self, name: &str) -> Result<&DomainData> {
        self.domains
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::Argument(format!("dataset has no domain named {name}")))
    }
}

fn mask_path_for(image_rel: &str) -> PathBuf {
    PathBuf::from(image_rel.replace("/images/", "/masks/"))
}

/// Loads every image and mask referenced by the manifest, validating sizes.
pub fn load_dataset(root: &Path) -> Result<LoadedDataset> {
    let manifest = read_manifest(root)?;
    let mut domains = Vec::with_capacity(manifest.domains.len());
    for record in &manifest.domains {
        let mut images = Vec::with_capacity(record.files.len());
        let mut masks = Vec::with_capacity(record.files.len());
        for rel in &record.files {
            let img = load_rgb(&root.join(rel))?;
            let mask = load_mask(&root.join(mask_path_for(rel)))?;
            let (w, h) = (img.width() as usize, img.height() as usize);
            if w != manifest.image_size || h != manifest.image_size {
                return Err(Error::Invariant(format!(
                    "{rel}: {w}x{h} does not match manifest size {}",
                    manifest.image_size
                )));
            }
            if mask.width() != img.width() || mask.height() != img.height() {
                return Err(Error::Invariant(format!("{rel}: mask size differs from image")));
            }
            images.push(image_to_tensor(&img)?);
            masks.push(mask);
        }
        domains.push(DomainData {
            name: record.name.clone(),
            spec: record.spec.clone(),
            images,
            masks,
        });
    }
    Ok(LoadedDataset { manifest, domains })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{default_palette, ShapeFamily, StyleTransform, DEFAULT_BACKGROUND};
    use crate::rng::SeedStream;

    fn toy_spec() -> SyntheticDomainSpec {
        SyntheticDomainSpec {
            class_palette: default_palette(2).unwrap(),
            class_histogram: vec![0.2, 0.1],
            shape_family: vec![ShapeFamily::Square; 2],
            style_transform: StyleTransform::identity(),
            image_size: 32,
            background_color: DEFAULT_BACKGROUND,
        }
    }

    #[test]
    fn image_tensor_roundtrip_is_exact() {
        let mut img = RgbImage::new(5, 4);
        let mut rng = SeedStream::new(11);
        for p in img.pixels_mut() {
            *p = image::Rgb([rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8]);
        }
        let t = image_to_tensor(&img).unwrap();
        assert_eq!(t.dims(), &[1, 3, 4, 5]);
        let back = tensor_to_image(&t).unwrap();
        assert_eq!(img.as_raw(), back.as_raw());
    }

    #[test]
    fn tensor_range_endpoints() {
        let mut img = RgbImage::new(1, 1);
        img.put_pixel(0, 0, image::Rgb([0, 255, 128]));
        let t = image_to_tensor(&img).unwrap();
        let v = t.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert_eq!(v[0], -1.0);
        assert_eq!(v[1], 1.0);
        assert!((v[2] - (128.0 / 127.5 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn tensor_to_image_clamps_out_of_range() {
        let t = Tensor::from_vec(vec![1.5f64, -2.0, 0.0], (3, 1, 1), &DEVICE).unwrap();
        let img = tensor_to_image(&t).unwrap();
        assert_eq!(img.get_pixel(0, 0).0, [255, 0, 128]);
    }

    #[test]
    fn mask_labels_validated() {
        let mut mask = GrayImage::new(2, 1);
        mask.put_pixel(0, 0, image::Luma([1]));
        mask.put_pixel(1, 0, image::Luma([BACKGROUND_LABEL]));
        assert_eq!(mask_to_classes(&mask, 2).unwrap(), vec![1, BACKGROUND_LABEL]);
        mask.put_pixel(0, 0, image::Luma([7]));
        assert!(mask_to_classes(&mask, 2).is_err());
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = toy_spec();
        let mut rng = SeedStream::new(3);
        let rendered = crate::data::synth::synthesize_domain(&spec, 4, &mut rng).unwrap();
        let rec_a = save_domain(dir.path(), "domainA", &spec, &rendered).unwrap();
        let rec_b = save_domain(dir.path(), "domainB", &spec, &rendered[..2]).unwrap();
        let manifest = DatasetManifest {
            seed: 3,
            image_size: 32,
            n_classes: 2,
            domains: vec![rec_a, rec_b],
        };
        write_manifest(dir.path(), &manifest).unwrap();

        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.domains.len(), 2);
        let a = loaded.domain("domainA").unwrap();
        assert_eq!(a.images.len(), 4);
        assert_eq!(a.images[0].dims(), &[1, 3, 32, 32]);
        assert_eq!(a.masks.len(), 4);
        assert_eq!(loaded.domain("domainB").unwrap().images.len(), 2);
        assert!(loaded.domain("missing").is_err());

        // Loaded pixels match what was rendered.
        let back = tensor_to_image(&a.images[1]).unwrap();
        assert_eq!(back.as_raw(), rendered[1].0.as_raw());
    }

    #[test]
    fn manifest_records_realized_fractions() {
        let dir = tempfile::tempdir().unwrap();
        let spec = toy_spec();
        let mut rng = SeedStream::new(9);
        let rendered = crate::data::synth::synthesize_domain(&spec, 10, &mut rng).unwrap();
        let rec = save_domain(dir.path(), "domainA", &spec, &rendered).unwrap();
        assert_eq!(rec.realized_fractions.len(), 2);
        assert!((rec.realized_fractions[0] - 0.2).abs() <= 0.02);
        assert!((rec.realized_fractions[1] - 0.1).abs() <= 0.02);
        assert_eq!(rec.files.len(), 10);
        assert!(rec.files[0].ends_with("domainA/images/00000.png"));
    }
}
