//! Minimal static PNG charts: polyline series and value bars.
//!
//! No text rendering; each chart writes a JSON sidecar next to the image
//! mapping series or bar names to their colors in draw order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

/// One named polyline.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const MARGIN: u32 = 12;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([0, 0, 0]);
const ZERO_LINE: Rgb<u8> = Rgb([200, 200, 200]);

/// Draw-order color cycle, chosen for mutual contrast on white.
const PALETTE: [[u8; 3]; 8] = [
    [214, 39, 40],
    [31, 119, 180],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [23, 190, 207],
];

pub fn palette_color(i: usize) -> Rgb<u8> {
    Rgb(PALETTE[i % PALETTE.len()])
}

fn color_hex(c: Rgb<u8>) -> String {
    format!("#{:02x}{:02x}{:02x}", c.0[0], c.0[1], c.0[2])
}

/// `chart.png` -> `chart.legend.json`.
fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".legend.json");
    path.with_file_name(name)
}

fn write_sidecar(path: &Path, entries: &BTreeMap<String, String>) -> Result<()> {
    let text = serde_json::to_string_pretty(entries)?;
    std::fs::write(sidecar_path(path), text)?;
    Ok(())
}

/// Inclusive data range, padded so a flat series still has extent.
fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

struct Frame {
    width: u32,
    height: u32,
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn to_px(&self, x: f64, y: f64) -> (i64, i64) {
        let plot_w = (self.width - 2 * MARGIN) as f64;
        let plot_h = (self.height - 2 * MARGIN) as f64;
        let fx = (x - self.x_lo) / (self.x_hi - self.x_lo);
        let fy = (y - self.y_lo) / (self.y_hi - self.y_lo);
        (
            MARGIN as i64 + (fx * plot_w).round() as i64,
            (self.height - MARGIN) as i64 - (fy * plot_h).round() as i64,
        )
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Integer line rasterization, all octants.
fn draw_line(img: &mut RgbImage, mut x0: i64, mut y0: i64, x1: i64, y1: i64, color: Rgb<u8>) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn blank(width: u32, height: u32) -> Result<RgbImage> {
    if width < 4 * MARGIN || height < 4 * MARGIN {
        return Err(Error::Argument(format!(
            "chart size {width}x{height} below minimum {m}x{m}",
            m = 4 * MARGIN
        )));
    }
    Ok(RgbImage::from_pixel(width, height, BACKGROUND))
}

fn draw_axes(img: &mut RgbImage, frame: &Frame) {
    let left = MARGIN as i64;
    let bottom = (frame.height - MARGIN) as i64;
    let right = (frame.width - MARGIN) as i64;
    let top = MARGIN as i64;
    draw_line(img, left, bottom, right, bottom, AXIS);
    draw_line(img, left, bottom, left, top, AXIS);
    if frame.y_lo < 0.0 && frame.y_hi > 0.0 {
        let (_, zy) = frame.to_px(frame.x_lo, 0.0);
        draw_line(img, left, zy, right, zy, ZERO_LINE);
    }
}

/// Polyline chart over the finite points of every series. Writes the PNG and
/// a `.legend.json` sidecar mapping series names to hex colors.
pub fn line_chart(series: &[Series], width: u32, height: u32, path: &Path) -> Result<()> {
    let cleaned: Vec<(String, Vec<(f64, f64)>)> = series
        .iter()
        .map(|s| {
            (
                s.name.clone(),
                s.points
                    .iter()
                    .copied()
                    .filter(|(x, y)| x.is_finite() && y.is_finite())
                    .collect(),
            )
        })
        .collect();
    if cleaned.iter().all(|(_, pts)| pts.is_empty()) {
        return Err(Error::Argument("no finite points to plot".into()));
    }

    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for (_, pts) in &cleaned {
        for &(x, y) in pts {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
    }
    let (x_lo, x_hi) = padded_range(x_lo, x_hi);
    let (y_lo, y_hi) = padded_range(y_lo, y_hi);
    let frame = Frame {
        width,
        height,
        x_lo,
        x_hi,
        y_lo,
        y_hi,
    };

    let mut img = blank(width, height)?;
    draw_axes(&mut img, &frame);
    let mut legend = BTreeMap::new();
    for (i, (name, pts)) in cleaned.iter().enumerate() {
        let color = palette_color(i);
        legend.insert(name.clone(), color_hex(color));
        for pair in pts.windows(2) {
            let (x0, y0) = frame.to_px(pair[0].0, pair[0].1);
            let (x1, y1) = frame.to_px(pair[1].0, pair[1].1);
            draw_line(&mut img, x0, y0, x1, y1, color);
        }
        if pts.len() == 1 {
            let (x, y) = frame.to_px(pts[0].0, pts[0].1);
            put(&mut img, x, y, color);
        }
    }
    img.save(path)?;
    write_sidecar(path, &legend)
}

/// Vertical bars from the zero line, one palette color per bar. Writes the
/// PNG and a `.legend.json` sidecar mapping bar names to hex colors.
pub fn bar_chart(bars: &[(String, f64)], width: u32, height: u32, path: &Path) -> Result<()> {
    if bars.is_empty() {
        return Err(Error::Argument("no bars to plot".into()));
    }
    if let Some((name, v)) = bars.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            term: format!("bar {name}"),
            value: *v,
        });
    }

    let mut y_lo: f64 = 0.0;
    let mut y_hi: f64 = 0.0;
    for &(_, v) in bars {
        y_lo = y_lo.min(v);
        y_hi = y_hi.max(v);
    }
    let (y_lo, y_hi) = padded_range(y_lo, y_hi);
    let frame = Frame {
        width,
        height,
        x_lo: 0.0,
        x_hi: bars.len() as f64,
        y_lo,
        y_hi,
    };

    let mut img = blank(width, height)?;
    draw_axes(&mut img, &frame);
    let mut legend = BTreeMap::new();
    // Each bar occupies the middle three fifths of its unit-wide slot.
    for (i, (name, v)) in bars.iter().enumerate() {
        let color = palette_color(i);
        legend.insert(name.clone(), color_hex(color));
        let (px_left, _) = frame.to_px(i as f64 + 0.2, 0.0);
        let (px_right, _) = frame.to_px(i as f64 + 0.8, 0.0);
        let (_, py_base) = frame.to_px(0.0, 0.0_f64.max(y_lo).min(y_hi));
        let (_, py_val) = frame.to_px(0.0, *v);
        let (top, bottom) = if py_val <= py_base {
            (py_val, py_base)
        } else {
            (py_base, py_val)
        };
        for x in px_left..=px_right {
            for y in top..=bottom {
                put(&mut img, x, y, color);
            }
        }
    }
    img.save(path)?;
    write_sidecar(path, &legend)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn count_color(img: &RgbImage, color: Rgb<u8>) -> usize {
        img.pixels().filter(|p| **p == color).count()
    }

    #[test]
    fn line_chart_draws_each_series_in_its_palette_color() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("loss.png");
        let series = vec![
            Series {
                name: "g_total".into(),
                points: (0..50).map(|i| (i as f64, (i as f64 * 0.3).sin())).collect(),
            },
            Series {
                name: "d_total".into(),
                points: (0..50).map(|i| (i as f64, 1.0 + i as f64 * 0.01)).collect(),
            },
        ];
        line_chart(&series, 320, 200, &path).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        assert_eq!((img.width(), img.height()), (320, 200));
        assert!(count_color(&img, palette_color(0)) > 50);
        assert!(count_color(&img, palette_color(1)) > 50);
        assert!(count_color(&img, AXIS) > 100);

        let legend: BTreeMap<String, String> =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("loss.legend.json")).unwrap())
                .unwrap();
        assert_eq!(legend["g_total"], "#d62728");
        assert_eq!(legend["d_total"], "#1f77b4");
    }

    #[test]
    fn charts_are_byte_deterministic() {
        let dir = tempdir().unwrap();
        let series = vec![Series {
            name: "a".into(),
            points: vec![(0.0, 1.0), (1.0, 3.0), (2.0, 2.0)],
        }];
        let p1 = dir.path().join("one.png");
        let p2 = dir.path().join("two.png");
        line_chart(&series, 160, 120, &p1).unwrap();
        line_chart(&series, 160, 120, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn flat_and_single_point_series_still_render() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("flat.png");
        let series = vec![
            Series {
                name: "flat".into(),
                points: vec![(0.0, 2.0), (1.0, 2.0)],
            },
            Series {
                name: "dot".into(),
                points: vec![(0.5, 2.0)],
            },
        ];
        line_chart(&series, 160, 120, &path).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        assert!(count_color(&img, palette_color(0)) > 10);
        assert!(count_color(&img, palette_color(1)) >= 1);
    }

    #[test]
    fn non_finite_points_are_dropped_not_fatal() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("nan.png");
        let series = vec![Series {
            name: "noisy".into(),
            points: vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 2.0)],
        }];
        line_chart(&series, 160, 120, &path).unwrap();
        assert!(path.exists());

        let empty = vec![Series {
            name: "void".into(),
            points: vec![(0.0, f64::INFINITY)],
        }];
        assert!(line_chart(&empty, 160, 120, &dir.path().join("void.png")).is_err());
    }

    #[test]
    fn bar_chart_heights_scale_with_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bars.png");
        let bars = vec![("one".to_string(), 1.0), ("three".to_string(), 3.0)];
        bar_chart(&bars, 200, 160, &path).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        let c0 = count_color(&img, palette_color(0));
        let c1 = count_color(&img, palette_color(1));
        assert!(c0 > 0 && c1 > 0);
        // Equal widths, so pixel area tracks bar height within rounding.
        let ratio = c1 as f64 / c0 as f64;
        assert!((2.0..4.5).contains(&ratio), "area ratio {ratio}");
    }

    #[test]
    fn negative_bars_extend_below_the_zero_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("neg.png");
        let bars = vec![("down".to_string(), -2.0), ("up".to_string(), 1.0)];
        bar_chart(&bars, 200, 160, &path).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        assert!(count_color(&img, palette_color(0)) > 0);
        assert!(count_color(&img, palette_color(1)) > 0);
    }

    #[test]
    fn bar_chart_rejects_bad_input() {
        let dir = tempdir().unwrap();
        assert!(bar_chart(&[], 200, 160, &dir.path().join("e.png")).is_err());
        let nan = vec![("x".to_string(), f64::NAN)];
        assert!(bar_chart(&nan, 200, 160, &dir.path().join("n.png")).is_err());
    }
}
