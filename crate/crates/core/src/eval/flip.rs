//! Semantic flip detection on synthetic data.
//!
//! Because every class renders in a known palette color, nearest-palette
//! classification of a translated image is an exact segmenter, and the flip
//! rate measures how often translation moved a pixel to another class.

use image::{GrayImage, RgbImage};

use crate::data::synth::{max_channel_distance, SyntheticDomainSpec, BACKGROUND_LABEL};
use crate::error::{Error, Result};

/// Nearest palette entry under max-channel distance; ties break to the
/// lowest class index.
pub fn nearest_class(pixel: [u8; 3], palette: &[[u8; 3]]) -> Result<usize> {
    if palette.is_empty() {
        return Err(Error::Argument("empty palette".into()));
    }
    let mut best = 0usize;
    let mut best_d = u32::MAX;
    for (i, &color) in palette.iter().enumerate() {
        let d = max_channel_distance(pixel, color);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(best)
}

/// Per-pixel nearest-palette classification of foreground pixels; background
/// pixels (by the truth mask) keep the background label.
pub fn classify_translated(
    translated: &RgbImage,
    truth_mask: &GrayImage,
    target_spec: &SyntheticDomainSpec,
) -> Result<GrayImage> {
    if translated.dimensions() != truth_mask.dimensions() {
        return Err(Error::Shape {
            context: "classify_translated".into(),
            expected: format!("{:?}", truth_mask.dimensions()),
            got: format!("{:?}", translated.dimensions()),
        });
    }
    let palette = target_spec.effective_palette()?;
    let mut out = GrayImage::new(translated.width(), translated.height());
    for (x, y, p) in translated.enumerate_pixels() {
        let label = if truth_mask.get_pixel(x, y).0[0] == BACKGROUND_LABEL {
            BACKGROUND_LABEL
        } else {
            nearest_class(p.0, &palette)? as u8
        };
        out.put_pixel(x, y, image::Luma([label]));
    }
    Ok(out)
}

/// Fraction of foreground pixels whose nearest target palette color names a
/// different class than the ground-truth mask.
pub fn flip_rate(
    translated: &[&RgbImage],
    truth_masks: &[&GrayImage],
    target_spec: &SyntheticDomainSpec,
) -> Result<f64> {
    if translated.len() != truth_masks.len() {
        return Err(Error::Argument(format!(
            "{} translated images vs {} masks",
            translated.len(),
            truth_masks.len()
        )));
    }
    target_spec.validate()?;
    let palette = target_spec.effective_palette()?;
    let mut flips = 0u64;
    let mut foreground = 0u64;
    for (img, mask) in translated.iter().zip(truth_masks) {
        if img.dimensions() != mask.dimensions() {
            return Err(Error::Shape {
                context: "flip_rate".into(),
                expected: format!("{:?}", mask.dimensions()),
                got: format!("{:?}", img.dimensions()),
            });
        }
        for (p, m) in img.pixels().zip(mask.pixels()) {
            let label = m.0[0];
            if label == BACKGROUND_LABEL {
                continue;
            }
            if label as usize >= palette.len() {
                return Err(Error::Argument(format!(
                    "mask label {label} outside target palette of {}",
                    palette.len()
                )));
            }
            foreground += 1;
            if nearest_class(p.0, &palette)? != label as usize {
                flips += 1;
            }
        }
    }
    if foreground == 0 {
        return Err(Error::UndefinedMetric("flip_rate with no foreground pixels".into()));
    }
    Ok(flips as f64 / foreground as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{
        default_palette, render_image, ShapeFamily, StyleTransform, DEFAULT_BACKGROUND,
    };
    use crate::rng::SeedStream;

    fn spec(n: usize, family: ShapeFamily) -> SyntheticDomainSpec {
        SyntheticDomainSpec {
            class_palette: default_palette(n).unwrap(),
            class_histogram: vec![0.1; n],
            shape_family: vec![family; n],
            style_transform: StyleTransform::identity(),
            image_size: 32,
            background_color: DEFAULT_BACKGROUND,
        }
    }

    #[test]
    fn correct_palette_rendering_never_flips() {
        let s = spec(3, ShapeFamily::Square);
        let (img, mask) = render_image(&s, &mut SeedStream::new(4)).unwrap();
        let rate = flip_rate(&[&img], &[&mask], &s).unwrap();
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn palette_swap_flips_everything() {
        let s = spec(2, ShapeFamily::Square);
        let (img, mask) = render_image(&s, &mut SeedStream::new(8)).unwrap();
        let palette = s.effective_palette().unwrap();
        let mut swapped = img.clone();
        for p in swapped.pixels_mut() {
            if p.0 == palette[0] {
                *p = image::Rgb(palette[1]);
            } else if p.0 == palette[1] {
                *p = image::Rgb(palette[0]);
            }
        }
        assert_eq!(flip_rate(&[&swapped], &[&mask], &s).unwrap(), 1.0);
    }

    #[test]
    fn random_noise_matches_brute_force_oracle() {
        let s = spec(3, ShapeFamily::Disc);
        let (_, mask) = render_image(&s, &mut SeedStream::new(12)).unwrap();
        let mut rng = SeedStream::new(13);
        let mut noise = RgbImage::new(32, 32);
        for p in noise.pixels_mut() {
            *p = image::Rgb([rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8]);
        }

        let palette = s.effective_palette().unwrap();
        let mut flips = 0u64;
        let mut fg = 0u64;
        for (p, m) in noise.pixels().zip(mask.pixels()) {
            let label = m.0[0];
            if label == BACKGROUND_LABEL {
                continue;
            }
            fg += 1;
            let mut best = 0usize;
            let mut best_d = u32::MAX;
            for (i, c) in palette.iter().enumerate() {
                let d = (0..3)
                    .map(|k| (p.0[k] as i32 - c[k] as i32).unsigned_abs())
                    .max()
                    .unwrap();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            if best != label as usize {
                flips += 1;
            }
        }
        let expected = flips as f64 / fg as f64;
        assert_eq!(flip_rate(&[&noise], &[&mask], &s).unwrap(), expected);
    }

    #[test]
    fn ties_resolve_to_lowest_class() {
        let palette = [[10, 0, 0], [30, 0, 0]];
        // Pixel equidistant (max-channel 10) from both entries.
        assert_eq!(nearest_class([20, 0, 0], &palette).unwrap(), 0);
    }

    #[test]
    fn background_only_mask_is_undefined() {
        let s = spec(2, ShapeFamily::Square);
        let img = RgbImage::new(8, 8);
        let mask = GrayImage::from_pixel(8, 8, image::Luma([BACKGROUND_LABEL]));
        assert!(matches!(
            flip_rate(&[&img], &[&mask], &s),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn classification_mask_matches_flip_accounting() {
        let s = spec(2, ShapeFamily::Square);
        let (img, mask) = render_image(&s, &mut SeedStream::new(21)).unwrap();
        let classified = classify_translated(&img, &mask, &s).unwrap();
        // Rendering is exact, so classification reproduces the mask.
        assert_eq!(classified.as_raw(), mask.as_raw());
    }
}
