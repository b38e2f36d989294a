//! Synthetic two-domain image generation with controllable class statistics.
//!
//! Class identity is carried by palette color under a known invertible style
//! transform, so semantic flips are measurable by nearest-palette lookup
//! without a learned segmenter. Masks store class ids; background pixels get
//! a reserved label.

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Mask value for background (unlabeled) pixels.
pub const BACKGROUND_LABEL: u8 = 255;

/// Required max-channel separation between any two effective palette colors.
pub const MIN_PALETTE_SEPARATION: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    Disc,
    Square,
    Triangle,
    Stripe,
}

/// Per-channel affine color map; invertible as long as no scale is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleTransform {
    pub scale: [f64; 3],
    pub shift: [f64; 3],
}

impl StyleTransform {
    pub fn identity() -> Self {
        Self {
            scale: [1.0, 1.0, 1.0],
            shift: [0.0, 0.0, 0.0],
        }
    }

    /// Exact transformed channels, unrounded and unclamped.
    pub fn apply_exact(&self, rgb: [u8; 3]) -> [f64; 3] {
        [
            self.scale[0] * rgb[0] as f64 + self.shift[0],
            self.scale[1] * rgb[1] as f64 + self.shift[1],
            self.scale[2] * rgb[2] as f64 + self.shift[2],
        ]
    }

    /// Transformed 8-bit color; errors if any channel leaves [0, 255], since
    /// clamping would break invertibility for that color.
    pub fn apply(&self, rgb: [u8; 3]) -> Result<[u8; 3]> {
        let exact = self.apply_exact(rgb);
        let mut out = [0u8; 3];
        for (i, v) in exact.iter().enumerate() {
            if !(0.0..=255.0).contains(v) {
                return Err(Error::Invariant(format!(
                    "style transform pushes color {rgb:?} channel {i} to {v}, outside 8-bit range"
                )));
            }
            out[i] = v.round() as u8;
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.scale.iter().enumerate() {
            if *s == 0.0 || !s.is_finite() {
                return Err(Error::Invariant(format!(
                    "style transform scale[{i}] = {s} is not invertible"
                )));
            }
        }
        if self.shift.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant("style transform shift not finite".into()));
        }
        Ok(())
    }
}

pub fn max_channel_distance(a: [u8; 3], b: [u8; 3]) -> u32 {
    (0..3)
        .map(|i| (a[i] as i32 - b[i] as i32).unsigned_abs())
        .max()
        .unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDomainSpec {
    /// Canonical per-class color before the style transform.
    pub class_palette: Vec<[u8; 3]>,
    /// Target fraction of all pixels per class; the remainder is background.
    pub class_histogram: Vec<f64>,
    pub shape_family: Vec<ShapeFamily>,
    pub style_transform: StyleTransform,
    pub image_size: usize,
    pub background_color: [u8; 3],
}

impl SyntheticDomainSpec {
    pub fn n_classes(&self) -> usize {
        self.class_palette.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.class_palette.len();
        if n == 0 {
            return Err(Error::Invariant("spec needs at least one class".into()));
        }
        if self.class_histogram.len() != n || self.shape_family.len() != n {
            return Err(Error::Invariant(format!(
                "palette, histogram, and shape lists must align: {n}, {}, {}",
                self.class_histogram.len(),
                self.shape_family.len()
            )));
        }
        if self.image_size < 8 {
            return Err(Error::Invariant(format!(
                "image size {} too small",
                self.image_size
            )));
        }
        let sum: f64 = self.class_histogram.iter().sum();
        if self.class_histogram.iter().any(|&f| !(0.0..=1.0).contains(&f)) || sum > 1.0 + 1e-9 {
            return Err(Error::Invariant(format!(
                "class fractions must be nonnegative and sum to at most 1, got sum {sum}"
            )));
        }
        let stripes = self
            .shape_family
            .iter()
            .filter(|f| **f == ShapeFamily::Stripe)
            .count();
        if stripes != 0 && stripes != n {
            return Err(Error::Invariant(
                "stripe layout applies to whole images: all classes or none".into(),
            ));
        }
        self.style_transform.validate()?;
        let palette = self.effective_palette()?;
        self.style_transform.apply(self.background_color)?;
        for i in 0..palette.len() {
            for j in (i + 1)..palette.len() {
                let d = max_channel_distance(palette[i], palette[j]);
                if d < MIN_PALETTE_SEPARATION {
                    return Err(Error::Invariant(format!(
                        "classes {i} and {j} separated by only {d} after style transform \
                         (need {MIN_PALETTE_SEPARATION})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Palette colors as they appear in rendered images.
    pub fn effective_palette(&self) -> Result<Vec<[u8; 3]>> {
        self.class_palette
            .iter()
            .map(|&c| self.style_transform.apply(c))
            .collect()
    }

    pub fn effective_background(&self) -> Result<[u8; 3]> {
        self.style_transform.apply(self.background_color)
    }
}

/// Well-separated canonical colors for up to six classes.
pub const DEFAULT_PALETTE: [[u8; 3]; 6] = [
    [220, 40, 40],
    [40, 200, 60],
    [50, 80, 220],
    [230, 220, 50],
    [200, 60, 200],
    [60, 210, 210],
];

pub const DEFAULT_BACKGROUND: [u8; 3] = [20, 20, 20];

pub fn default_palette(n_classes: usize) -> Result<Vec<[u8; 3]>> {
    if n_classes == 0 || n_classes > DEFAULT_PALETTE.len() {
        return Err(Error::Argument(format!(
            "default palette supports 1..={} classes, got {n_classes}",
            DEFAULT_PALETTE.len()
        )));
    }
    Ok(DEFAULT_PALETTE[..n_classes].to_vec())
}

/// Default per-domain styles: domain A renders canonically, domain B through
/// a fixed channel-affine recoloring.
pub fn default_domain_styles() -> (StyleTransform, StyleTransform) {
    (
        StyleTransform::identity(),
        StyleTransform {
            scale: [0.8, 0.8, 0.8],
            shift: [40.0, 30.0, -10.0],
        },
    )
}

/// Pixel offsets of one shape instance within its bounding box, calibrated so
/// the painted pixel count comes as close as possible to `target`.
#[derive(Debug, Clone)]
struct ShapeStamp {
    offsets: Vec<(usize, usize)>,
    box_h: usize,
    box_w: usize,
}

fn disc_offsets(r: f64) -> Vec<(usize, usize)> {
    let d = (2.0 * r).ceil() as usize + 1;
    let c = (d - 1) as f64 / 2.0;
    let mut out = Vec::new();
    for y in 0..d {
        for x in 0..d {
            let dy = y as f64 - c;
            let dx = x as f64 - c;
            if dy * dy + dx * dx <= r * r {
                out.push((y, x));
            }
        }
    }
    out
}

fn calibrate_disc(target: usize) -> ShapeStamp {
    let r0 = (target as f64 / std::f64::consts::PI).sqrt();
    let mut best: Option<(usize, Vec<(usize, usize)>)> = None;
    let mut r = (r0 - 1.5).max(0.5);
    while r <= r0 + 1.5 {
        let offs = disc_offsets(r);
        let err = offs.len().abs_diff(target);
        if best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, offs));
        }
        r += 0.05;
    }
    let offsets = best.unwrap().1;
    stamp_from(offsets)
}

fn calibrate_square(target: usize) -> ShapeStamp {
    let s0 = (target as f64).sqrt().round().max(1.0) as usize;
    let mut best = (usize::MAX, 1usize);
    for s in s0.saturating_sub(1).max(1)..=s0 + 1 {
        let err = (s * s).abs_diff(target);
        if err < best.0 {
            best = (err, s);
        }
    }
    let s = best.1;
    let mut offsets = Vec::with_capacity(s * s);
    for y in 0..s {
        for x in 0..s {
            offsets.push((y, x));
        }
    }
    stamp_from(offsets)
}

fn calibrate_triangle(target: usize, orientation: usize) -> ShapeStamp {
    // Right isoceles triangle with legs L covers L(L+1)/2 pixels exactly.
    let l0 = (((8.0 * target as f64 + 1.0).sqrt() - 1.0) / 2.0).round().max(1.0) as usize;
    let mut best = (usize::MAX, 1usize);
    for l in l0.saturating_sub(1).max(1)..=l0 + 1 {
        let err = (l * (l + 1) / 2).abs_diff(target);
        if err < best.0 {
            best = (err, l);
        }
    }
    let l = best.1;
    let mut offsets = Vec::new();
    for y in 0..l {
        for x in 0..=y {
            let (oy, ox) = match orientation {
                0 => (y, x),
                1 => (y, l - 1 - x),
                2 => (l - 1 - y, x),
                _ => (l - 1 - y, l - 1 - x),
            };
            offsets.push((oy, ox));
        }
    }
    stamp_from(offsets)
}

fn stamp_from(offsets: Vec<(usize, usize)>) -> ShapeStamp {
    let box_h = offsets.iter().map(|o| o.0).max().map_or(0, |v| v + 1);
    let box_w = offsets.iter().map(|o| o.1).max().map_or(0, |v| v + 1);
    ShapeStamp {
        offsets,
        box_h,
        box_w,
    }
}

const PLACEMENT_ATTEMPTS: usize = 200;

/// Renders one image and its class mask. RNG draw order per image: for
/// stripe layouts one shuffle; otherwise per class up to PLACEMENT_ATTEMPTS
/// of (orientation for triangles, top, left), plus one index draw when the
/// exhaustive fallback engages.
pub fn render_image(spec: &SyntheticDomainSpec, rng: &mut SeedStream) -> Result<(RgbImage, GrayImage)> {
    spec.validate()?;
    let s = spec.image_size;
    let palette = spec.effective_palette()?;
    let background = spec.effective_background()?;
    let mut img = RgbImage::from_pixel(s as u32, s as u32, image::Rgb(background));
    let mut mask = GrayImage::from_pixel(s as u32, s as u32, image::Luma([BACKGROUND_LABEL]));

    let total = s * s;
    let targets: Vec<usize> = spec
        .class_histogram
        .iter()
        .map(|f| (f * total as f64).round() as usize)
        .collect();

    if spec.shape_family.iter().all(|f| *f == ShapeFamily::Stripe) {
        render_stripes(spec, &targets, &palette, rng, &mut img, &mut mask)?;
        return Ok((img, mask));
    }

    let mut occupied = vec![false; total];
    // Large shapes first: feasibility is monotone in free space.
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| targets[b].cmp(&targets[a]).then(a.cmp(&b)));
    for class in order {
        let target = targets[class];
        if target == 0 {
            continue;
        }
        // Triangles come in four orientations so dense layouts can interlock.
        let stamps: Vec<ShapeStamp> = match spec.shape_family[class] {
            ShapeFamily::Disc => vec![calibrate_disc(target)],
            ShapeFamily::Square => vec![calibrate_square(target)],
            ShapeFamily::Triangle => (0..4).map(|o| calibrate_triangle(target, o)).collect(),
            ShapeFamily::Stripe => unreachable!("mixed stripes rejected by validate"),
        };
        if stamps.iter().any(|st| st.box_h > s || st.box_w > s) {
            return Err(Error::Generation(format!(
                "class {class} shape of {target} pixels does not fit a {s}x{s} image"
            )));
        }
        let fits = |st: &ShapeStamp, top: usize, left: usize, occ: &[bool]| {
            st.offsets
                .iter()
                .all(|&(dy, dx)| !occ[(top + dy) * s + (left + dx)])
        };
        let mut spot = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let st = if stamps.len() > 1 { rng.below(stamps.len()) } else { 0 };
            let top = rng.below(s - stamps[st].box_h + 1);
            let left = rng.below(s - stamps[st].box_w + 1);
            if fits(&stamps[st], top, left, &occupied) {
                spot = Some((st, top, left));
                break;
            }
        }
        if spot.is_none() {
            // Dense layouts defeat rejection sampling; fall back to a uniform
            // pick over every still-free placement across all orientations.
            let mut free = Vec::new();
            for (st, stamp) in stamps.iter().enumerate() {
                for top in 0..=(s - stamp.box_h) {
                    for left in 0..=(s - stamp.box_w) {
                        if fits(stamp, top, left, &occupied) {
                            free.push((st, top, left));
                        }
                    }
                }
            }
            if !free.is_empty() {
                spot = Some(free[rng.below(free.len())]);
            }
        }
        let Some((st, top, left)) = spot else {
            return Err(Error::Generation(format!(
                "no free position for class {class} ({target} pixels); \
                 requested fractions too dense for {s}x{s}"
            )));
        };
        for &(dy, dx) in &stamps[st].offsets {
            let (y, x) = (top + dy, left + dx);
            occupied[y * s + x] = true;
            img.put_pixel(x as u32, y as u32, image::Rgb(palette[class]));
            mask.put_pixel(x as u32, y as u32, image::Luma([class as u8]));
        }
    }
    Ok((img, mask))
}

fn render_stripes(
    spec: &SyntheticDomainSpec,
    targets: &[usize],
    palette: &[[u8; 3]],
    rng: &mut SeedStream,
    img: &mut RgbImage,
    mask: &mut GrayImage,
) -> Result<()> {
    let s = spec.image_size;
    // Band heights by largest remainder against exact row targets.
    let exact: Vec<f64> = spec.class_histogram.iter().map(|f| f * s as f64).collect();
    let mut heights: Vec<usize> = exact.iter().map(|r| r.floor() as usize).collect();
    let band_rows: usize = exact.iter().sum::<f64>().round().min(s as f64) as usize;
    let mut rem: Vec<(usize, f64)> = exact
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r - r.floor()))
        .collect();
    rem.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut assigned: usize = heights.iter().sum();
    for &(i, _) in &rem {
        if assigned >= band_rows {
            break;
        }
        heights[i] += 1;
        assigned += 1;
    }

    // Segments: one band per class plus one background block, in random order.
    let mut segments: Vec<Option<usize>> = (0..targets.len())
        .filter(|&c| heights[c] > 0)
        .map(Some)
        .collect();
    if assigned < s {
        segments.push(None);
    }
    rng.shuffle(&mut segments);

    let mut row = 0usize;
    for segment in segments {
        let (h, color, label) = match segment {
            Some(c) => (heights[c], palette[c], c as u8),
            None => (s - assigned, spec.effective_background()?, BACKGROUND_LABEL),
        };
        for y in row..row + h {
            for x in 0..s {
                img.put_pixel(x as u32, y as u32, image::Rgb(color));
                mask.put_pixel(x as u32, y as u32, image::Luma([label]));
            }
        }
        row += h;
    }
    Ok(())
}

/// Renders `count` images under one spec.
pub fn synthesize_domain(
    spec: &SyntheticDomainSpec,
    count: usize,
    rng: &mut SeedStream,
) -> Result<Vec<(RgbImage, GrayImage)>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(render_image(spec, rng)?);
    }
    Ok(out)
}

/// Realized per-class pixel fraction (over all pixels) across a mask set.
pub fn realized_fractions(masks: &[&GrayImage], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0u64; n_classes];
    let mut total = 0u64;
    for m in masks {
        for p in m.pixels() {
            total += 1;
            let v = p.0[0] as usize;
            if v < n_classes {
                counts[v] += 1;
            }
        }
    }
    counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect()
}
